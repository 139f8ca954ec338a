//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.
//!
//! `cargo test -p leanet --test acceptance`

use std::collections::BTreeSet;
use std::panic::catch_unwind;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use leanet::attention::{attention_map, mix, AttentionConfig, AttentionRun, InjectionPoint, LeaAttention};
use leanet::autograd::Graph;
use leanet::dataio::make_toy_dataset;
use leanet::extract::{SlideDocument, SCHEMA_V1};
use leanet::locenc::{blend, make_axis_encoding};
use leanet::mask::MultiLabelMask;
use leanet::params::{Gradients, ParamStore};
use leanet::segnet::{ForwardOptions, NetworkConfig, SegNet};
use leanet::tensor::Tensor;
use leanet::train::ablation::{run_ablation, AblationGrid, BetaMode};
use leanet::train::{compute_metrics, loss_and_grads, poly_lr, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("attention_math", Duration::from_secs(10), attention_math),
        ("gradient_checks", Duration::from_secs(120), gradient_checks),
        ("location_encoding", Duration::from_secs(10), location_encoding),
        ("metrics_oracle", Duration::from_secs(60), metrics_oracle),
        ("poly_lr", Duration::from_secs(1), poly_lr_endpoints),
        ("service_contract", Duration::from_secs(120), service_contract),
        ("ablation_harness", Duration::from_secs(600), ablation_harness),
        ("overfit_and_pipeline", Duration::from_secs(1200), overfit_and_pipeline),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({elapsed:.1?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({elapsed:.1?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn random_mask(k: usize, h: usize, w: usize, rng: &mut impl Rng) -> MultiLabelMask {
    MultiLabelMask::from_vec(k, h, w, (0..k * h * w).map(|_| rng.gen_range(0..2u8)).collect()).unwrap()
}

fn check_rows(s: &Tensor, n: usize, tol: f64) -> Result<f64, String> {
    ensure!(s.shape() == [n, n], "attention map shape {:?}, expected [{n}, {n}]", s.shape());
    let mut worst: f64 = 0.0;
    for row in s.data().chunks(n) {
        ensure!(row.iter().all(|v| v.is_finite() && *v >= 0.0), "row has a negative or non-finite entry");
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    ensure!(worst <= tol, "row sum off by {worst:e}");
    Ok(worst)
}

fn attention_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_row: f64 = 0.0;
    for case in 0..1000 {
        let (c, h, w) = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
        let scale = [0.1, 1.0, 10.0, 50.0][case % 4];
        let b = random_tensor(&[c, h, w], scale, &mut rng);
        let k = random_tensor(&[c, h, w], scale, &mut rng);
        let l = random_tensor(&[c, h, w], 1.0, &mut rng);
        let point = InjectionPoint::ALL[case % 5];
        let s = attention_map(&b, &k, &l, point).map_err(|e| format!("case {case}: {e}"))?;
        worst_row = worst_row.max(check_rows(&s, h * w, 1e-5).map_err(|e| format!("case {case}: {e}"))?);
    }

    // whole module: rows of S, and E = A while alpha is zero
    let mut worst_identity: f64 = 0.0;
    for case in 0..100 {
        let mut store = ParamStore::new();
        let mut cfg = AttentionConfig::new(6, 4);
        cfg.injection_point = InjectionPoint::ALL[case % 5];
        cfg.coordconv = case % 7 == 0;
        cfg.beta_init = rng.gen_range(0.0..1.0);
        let att = LeaAttention::new(cfg, &mut store, "att", &mut rng).map_err(|e| e.to_string())?;
        let (h, w) = (rng.gen_range(1..=9), rng.gen_range(1..=9));
        let x = random_tensor(&[6, h, w], 2.0, &mut rng);
        let run = AttentionRun {
            training: case % 2 == 0,
            jitter_seed: case as u64,
            ..AttentionRun::default()
        };
        let state = att.forward(&store, &x, &run).map_err(|e| e.to_string())?;
        ensure!(state.alpha == 0.0, "alpha initialised to {}", state.alpha);
        worst_row = worst_row.max(check_rows(&state.s, h * w, 1e-5)?);
        worst_identity = worst_identity.max(state.e.max_abs_diff(&state.a));
        let mixed = mix(&state.a, &state.d, &state.s, 0.0).map_err(|e| e.to_string())?;
        worst_identity = worst_identity.max(mixed.max_abs_diff(&state.a));
    }
    ensure!(worst_identity <= 1e-6, "E differs from A by {worst_identity:e} at alpha = 0");
    Ok(format!(
        "1100 maps, max |row sum - 1| = {worst_row:.1e}; alpha=0 max |E - A| = {worst_identity:.1e}"
    ))
}

struct GradReport {
    checked: usize,
    worst: f64,
    worst_at: String,
}

/// Central differences against analytic gradients for the chosen scalars of
/// every trainable parameter. Entries whose analytic and numeric values are
/// both below `floor` count as agreeing.
fn finite_difference(
    store: &ParamStore,
    analytic: &Gradients,
    per_tensor: Option<usize>,
    rng: &mut impl Rng,
    loss: impl Fn(&ParamStore) -> f64,
) -> Result<GradReport, String> {
    let h = 1e-5;
    let floor = 1e-9;
    let mut report = GradReport {
        checked: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for (id, param) in store.iter() {
        if !param.trainable {
            continue;
        }
        // a parameter outside the loss's graph has a zero gradient
        let zero = Tensor::zeros(param.value.shape());
        let grad = analytic.get(id).unwrap_or(&zero);
        let n = param.value.len();
        let indices: Vec<usize> = match per_tensor {
            Some(m) if n > m => {
                // the two largest analytic entries plus random ones
                let mut by_size: Vec<usize> = (0..n).collect();
                by_size.sort_by(|&a, &b| grad.data()[b].abs().total_cmp(&grad.data()[a].abs()));
                let mut picked: BTreeSet<usize> = by_size[..2].iter().copied().collect();
                while picked.len() < m {
                    picked.insert(rng.gen_range(0..n));
                }
                picked.into_iter().collect()
            }
            _ => (0..n).collect(),
        };
        for i in indices {
            let mut plus = store.clone();
            plus.get_mut(id).value.data_mut()[i] += h;
            let mut minus = store.clone();
            minus.get_mut(id).value.data_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = grad.data()[i];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale < floor { 0.0 } else { (a - numeric).abs() / scale };
            report.checked += 1;
            if rel > report.worst {
                report.worst = rel;
                report.worst_at = format!("{}[{i}] analytic {a:e} numeric {numeric:e}", param.name);
            }
        }
    }
    Ok(report)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lines = Vec::new();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();

    let mut variants: Vec<(InjectionPoint, bool)> = InjectionPoint::ALL.iter().map(|&p| (p, false)).collect();
    variants.push((InjectionPoint::None, true));
    for (point, coordconv) in variants {
        let mut store = ParamStore::new();
        let mut cfg = AttentionConfig::new(5, 3);
        cfg.injection_point = point;
        cfg.coordconv = coordconv;
        cfg.alpha_init = 0.6;
        cfg.beta_init = 0.3;
        let att = LeaAttention::new(cfg, &mut store, "att", &mut rng).map_err(|e| e.to_string())?;
        let x = random_tensor(&[5, 16, 16], 1.0, &mut rng);
        let target = random_mask(3, 16, 16, &mut rng).to_tensor();
        let run = AttentionRun {
            training: true,
            jitter_seed: 3,
            ..AttentionRun::default()
        };
        let eval = |st: &ParamStore, grads: bool| {
            let mut g = Graph::new(st);
            let xv = g.constant(x.clone());
            let vars = att.forward_graph(&mut g, xv, &run).unwrap();
            let loss = g.bce_with_logits(vars.e, target.clone());
            let value = g.value(loss).item();
            (value, grads.then(|| g.backward(loss).param_grads()))
        };
        let analytic = eval(&store, true).1.unwrap();
        let r = finite_difference(&store, &analytic, None, &mut rng, |st| eval(st, false).0)?;
        checked += r.checked;
        if r.worst > worst {
            worst = r.worst;
            worst_at = format!("attention {}: {}", point.label(), r.worst_at);
        }
        lines.push(format!("attention {}{} {}", point.label(), if coordconv { "+coordconv" } else { "" }, r.checked));
    }

    let mut net = SegNet::new(NetworkConfig::toy(3)).map_err(|e| e.to_string())?;
    let (alpha, beta) = (net.attention().alpha, net.attention().beta);
    net.params_mut().get_mut(alpha).value = Tensor::scalar(0.5);
    net.params_mut().get_mut(beta).value = Tensor::scalar(0.3);
    let image = random_tensor(&[3, 16, 16], 1.0, &mut rng).map(|v| 0.5 + 0.5 * v);
    let target = random_mask(3, 16, 16, &mut rng);
    let opts = ForwardOptions::train(5);
    let (_, analytic) = loss_and_grads(&net, &image, &target, 0.4, &opts).map_err(|e| e.to_string())?;
    let probe = net.clone();
    let r = finite_difference(net.params(), &analytic, Some(24), &mut rng, |st| {
        let mut n = probe.clone();
        *n.params_mut() = st.clone();
        loss_and_grads(&n, &image, &target, 0.4, &opts).unwrap().0
    })?;
    checked += r.checked;
    if r.worst > worst {
        worst = r.worst;
        worst_at = format!("segnet: {}", r.worst_at);
    }
    lines.push(format!("segnet {} of {} scalars", r.checked, net.params().num_scalars()));

    ensure!(worst <= 1e-3, "relative error {worst:e} at {worst_at}");
    Ok(format!("{checked} scalars, worst relative error {worst:.1e} [{}]", lines.join(", ")))
}

/// Position of the first sign change from positive to non-positive, linearly
/// interpolated between samples.
fn first_zero_crossing(row: &[f64]) -> Option<f64> {
    row.windows(2)
        .enumerate()
        .skip(1)
        .find(|(_, w)| w[0] > 0.0 && w[1] <= 0.0)
        .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
}

fn location_encoding() -> Outcome {
    let mut worst_pair: f64 = 0.0;
    for &f in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        for channels in [2, 8, 16, 32] {
            let enc = make_axis_encoding(90, channels, 100.0, f).map_err(|e| e.to_string())?;
            let d = enc.data();
            for pair in 0..channels / 2 {
                for p in 0..90 {
                    let (s, c) = (d[2 * pair * 90 + p], d[(2 * pair + 1) * 90 + p]);
                    worst_pair = worst_pair.max((s * s + c * c - 1.0).abs());
                }
            }
        }
    }
    ensure!(worst_pair <= 1e-6, "sin^2 + cos^2 off by {worst_pair:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_affine: f64 = 0.0;
    for _ in 0..200 {
        let c = 2 * rng.gen_range(1..=8);
        let (h, w) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
        let f = rng.gen_range(0.1..4.0);
        let pe_h = make_axis_encoding(w, c, 100.0, f).unwrap();
        let pe_v = make_axis_encoding(h, c, 100.0, f).unwrap();
        let beta = rng.gen_range(-0.5..1.5);
        let mixed = blend(&pe_h, &pe_v, beta).unwrap().values;
        let one = blend(&pe_h, &pe_v, 1.0).unwrap().values;
        let zero = blend(&pe_h, &pe_v, 0.0).unwrap().values;
        let expected = one.zip_map(&zero, |a, b| beta * a + (1.0 - beta) * b).unwrap();
        worst_affine = worst_affine.max(mixed.max_abs_diff(&expected));
    }
    ensure!(worst_affine <= 1e-6, "blend is not affine in beta: {worst_affine:e}");

    let mut ratios = Vec::new();
    for &f in &[0.01, 0.05, 0.3] {
        let slow = make_axis_encoding(2000, 8, 100.0, f).unwrap();
        let fast = make_axis_encoding(2000, 8, 100.0, 2.0 * f).unwrap();
        let zs = first_zero_crossing(&slow.data()[..2000]).ok_or("no zero crossing")?;
        let zf = first_zero_crossing(&fast.data()[..2000]).ok_or("no zero crossing")?;
        ratios.push(zs / zf);
    }
    let off = ratios.iter().map(|r| (r - 2.0).abs()).fold(0.0, f64::max);
    ensure!(off <= 0.05, "doubling frequency changed the first zero crossing by {ratios:?}");
    Ok(format!(
        "pair identity {worst_pair:.1e}, beta affinity {worst_affine:.1e}, period ratios {:?}",
        ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
    ))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let density = [0.05, 0.3, 0.5, 0.9][case % 4];
        let mut draw = || {
            MultiLabelMask::from_vec(3, 8, 8, (0..192).map(|_| u8::from(rng.gen_bool(density))).collect()).unwrap()
        };
        let (pred, gt) = (draw(), draw());
        let report = compute_metrics(&pred, &gt).map_err(|e| e.to_string())?;

        let mut ious = Vec::new();
        let mut per_class = Vec::new();
        let mut correct = 0u64;
        for k in 0..3 {
            let (mut inter, mut union) = (0u64, 0u64);
            for y in 0..8 {
                for x in 0..8 {
                    let (p, g) = (pred.get(k, y, x), gt.get(k, y, x));
                    inter += u64::from(p && g);
                    union += u64::from(p || g);
                    correct += u64::from(p == g);
                }
            }
            let iou = (union > 0).then(|| inter as f64 / union as f64);
            per_class.push(iou);
            ious.extend(iou);
        }
        let miou = if ious.is_empty() { 1.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 };
        let pa = correct as f64 / 192.0;
        ensure!(report.per_class_iou == per_class, "case {case}: per-class IoU {:?} vs {per_class:?}", report.per_class_iou);
        ensure!(report.mean_iou == miou, "case {case}: mIoU {} vs {miou}", report.mean_iou);
        ensure!(report.pixel_accuracy == pa, "case {case}: PA {} vs {pa}", report.pixel_accuracy);
    }
    Ok("1000 random 8x8 K=3 pairs match brute force exactly".into())
}

fn poly_lr_endpoints() -> Outcome {
    for max in [1, 500, 30_000] {
        let cfg = TrainConfig {
            max_iteration: max,
            ..TrainConfig::default()
        };
        let (first, last) = (poly_lr(0, &cfg), poly_lr(max, &cfg));
        ensure!(first == 0.02, "lr(0) = {first} for max {max}");
        ensure!(last == 0.0, "lr(max) = {last} for max {max}");
    }
    Ok("lr(0) = 0.02 and lr(max) = 0 for max in {1, 500, 30000}".into())
}

fn service_contract() -> Outcome {
    use axum::body::Body;
    use axum::http::{Request, StatusCode};
    use http_body_util::BodyExt;
    use jsonschema::JSONSchema;
    use leanet::dataio::LabelSet;
    use leanet::extract::AdapterRegistry;
    use leanet::service::{router, ServiceConfig, SERVICE_SCHEMA_V1};
    use leanet::train::{train, TrainHooks};
    use tower::ServiceExt;

    const K: usize = 4;
    let canvas = (32, 40);
    let slides = make_toy_dataset(3, K, 5, canvas).map_err(|e| e.to_string())?;
    let png = {
        let mut buf = std::io::Cursor::new(Vec::new());
        slides[0].sample.image.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        buf.into_inner()
    };
    let samples: Vec<_> = slides.into_iter().map(|s| s.sample).collect();
    let out = train(&samples, &[], NetworkConfig::toy(K), &TrainConfig::toy_overfit(canvas, 5), TrainHooks::default())
        .map_err(|e| e.to_string())?;
    let app = router(out.net, LabelSet::toy(K).unwrap(), AdapterRegistry::stubs(None), ServiceConfig::default())
        .map_err(|e| e.to_string())?;

    let document = JSONSchema::compile(&serde_json::from_str(SCHEMA_V1).unwrap()).unwrap();
    let full: Value = serde_json::from_str(SERVICE_SCHEMA_V1).unwrap();
    let service = |def: &str| {
        JSONSchema::compile(&serde_json::json!({
            "definitions": full["definitions"],
            "allOf": [{ "$ref": format!("#/definitions/{def}") }],
        }))
        .unwrap()
    };
    let (health, narration, error) = (service("health"), service("narration"), service("error"));

    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let call = |method: &str, uri: String, body: Vec<u8>| {
            let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
            let app = app.clone();
            async move {
                let resp = app.oneshot(req).await.unwrap();
                let status = resp.status();
                let id = resp.headers().get("x-slide-id").map(|v| v.to_str().unwrap().to_string());
                let bytes = resp.into_body().collect().await.unwrap().to_bytes();
                let json: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
                (status, id, json)
            }
        };
        let valid = |schema: &JSONSchema, v: &Value| schema.is_valid(v);
        let mut seen = 0;

        let (status, id, doc) = call("POST", "/capture".into(), png.clone()).await;
        ensure!(status == StatusCode::OK && valid(&document, &doc), "capture: {status} {doc}");
        let id = id.ok_or("capture without x-slide-id")?;
        let (status, _, body) = call("POST", "/capture".into(), b"garbage".to_vec()).await;
        ensure!(status == StatusCode::BAD_REQUEST && valid(&error, &body), "bad capture: {status} {body}");
        seen += 2;

        let (status, _, body) = call("GET", format!("/slides/{id}"), vec![]).await;
        ensure!(status == StatusCode::OK && body == doc, "fetch: {status}");
        let (status, _, body) = call("GET", "/slides/0000000000000000".into(), vec![]).await;
        ensure!(status == StatusCode::NOT_FOUND && valid(&error, &body), "missing slide: {status} {body}");
        seen += 2;

        let (status, _, body) = call("GET", format!("/slides/{id}/audio?mode=read_all"), vec![]).await;
        ensure!(status == StatusCode::OK && valid(&narration, &body), "audio: {status} {body}");
        let (status, _, body) = call("GET", format!("/slides/{id}/audio?mode=nonsense"), vec![]).await;
        ensure!(status == StatusCode::BAD_REQUEST && valid(&error, &body), "bad mode: {status} {body}");
        let (status, _, body) = call("GET", format!("/slides/{id}/audio?mode=interactive&region=99999"), vec![]).await;
        ensure!(status == StatusCode::NOT_FOUND && valid(&error, &body), "missing region: {status} {body}");
        seen += 3;

        let (status, _, body) = call("GET", "/healthz".into(), vec![]).await;
        ensure!(status == StatusCode::OK && valid(&health, &body), "healthz: {status} {body}");
        seen += 1;
        Ok(format!("{seen} requests over 4 endpoints, statuses and bodies as documented"))
    })
}

fn ablation_harness() -> Outcome {
    let canvas = (32, 32);
    let samples: Vec<_> = make_toy_dataset(2, 5, 7, canvas)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| s.sample)
        .collect();
    let grid = AblationGrid::standard();
    let table = run_ablation(&grid, &samples, &[], &NetworkConfig::toy(5), &TrainConfig::toy_overfit(canvas, 150))
        .map_err(|e| e.to_string())?;

    let rows = &table.rows;
    ensure!(rows.len() == grid.cells.len(), "{} rows for {} cells", rows.len(), grid.cells.len());
    let failed: Vec<&str> = rows.iter().filter(|r| r.status != "ok").map(|r| r.label.as_str()).collect();
    ensure!(failed.is_empty(), "failed cells: {failed:?}");
    let a = |r: &&leanet::train::ablation::AblationRow| r.cell.table == "a" && !r.cell.coordconv;
    let points: BTreeSet<&str> = rows
        .iter()
        .filter(a)
        .filter(|r| r.cell.frequency == 1.0)
        .map(|r| r.cell.injection_point.label())
        .collect();
    ensure!(points.len() == 5, "injection rows {points:?}");
    let freqs: BTreeSet<String> = rows
        .iter()
        .filter(a)
        .filter(|r| r.cell.injection_point == InjectionPoint::B)
        .map(|r| r.cell.frequency.to_string())
        .collect();
    ensure!(freqs.len() == 3, "frequency rows {freqs:?}");
    let betas: BTreeSet<String> = rows.iter().filter(|r| r.cell.table == "b").map(|r| r.cell.beta.label()).collect();
    ensure!(betas.len() == 4 && betas.contains(&BetaMode::Learned.label()), "beta rows {betas:?}");
    ensure!(rows.iter().filter(|r| r.cell.coordconv).count() == 1, "expected one CoordConv row");

    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let json = table.to_json().map_err(|e| e.to_string())?;
    let parsed: Value = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    ensure!(parsed["rows"].as_array().map(Vec::len) == Some(rows.len()), "json table rows");
    let csv = table.to_csv();
    ensure!(csv.lines().count() == rows.len() + 1, "csv has {} lines", csv.lines().count());
    std::fs::write(dir.join("ablation.json"), &json).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("ablation.csv"), &csv).map_err(|e| e.to_string())?;

    let direction = match &table.direction_check {
        Some(d) => format!("B over A: {} (A {:.3}, B {:.3}, recorded only)", d.b_over_a, d.a_miou, d.b_miou),
        None => "direction check unavailable".into(),
    };
    Ok(format!("{} rows, table at {}; {direction}", rows.len(), dir.display()))
}

struct PipelineRun {
    summary: Value,
    checkpoint: Vec<u8>,
    mask: Vec<u8>,
    document: String,
    transcript: String,
    fixture: Value,
    elapsed: Duration,
}

fn leanet(args: &[&str]) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_leanet"));
    for (k, _) in std::env::vars() {
        if k.starts_with("LEANET_") {
            cmd.env_remove(k);
        }
    }
    let out = cmd.args(args).output().map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "leanet {} failed: {}",
        args.first().unwrap_or(&""),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(out.stdout)
}

fn pipeline_run(root: &Path) -> Result<PipelineRun, String> {
    let start = Instant::now();
    let p = |rel: &str| root.join(rel).to_str().unwrap().to_string();
    let (data, run) = (p("data"), p("run"));
    leanet(&["toyset", "--n", "8", "--val", "0", "--classes", "5", "--seed", "0", "--height", "48", "--width", "64", "--out", &data])?;
    leanet(&["train", "--data", &data, "--preset", "toy", "--iters", "500", "--seed", "0", "--out", &run])?;
    let image = p("data/images/train/toy-0-0001.png");
    let ckpt = p("run/model.ckpt");
    leanet(&["segment", "--image", &image, "--ckpt", &ckpt, "--out", &p("seg")])?;
    let fixture_path = p("data/fixtures/train/toy-0-0001.json");
    leanet(&["extract", "--image", &image, "--ckpt", &ckpt, "--fixture", &fixture_path, "--out", &p("doc.json")])?;
    let transcript = leanet(&["narrate", "--doc", &p("doc.json"), "--mode", "read_all"])?;
    let read = |rel: &str| std::fs::read(root.join(rel)).map_err(|e| format!("{rel}: {e}"));
    Ok(PipelineRun {
        summary: serde_json::from_slice(&read("run/summary.json")?).map_err(|e| e.to_string())?,
        checkpoint: read("run/model.ckpt")?,
        mask: read("seg/mask.lmask")?,
        document: String::from_utf8(read("doc.json")?).map_err(|e| e.to_string())?,
        transcript: String::from_utf8(transcript).map_err(|e| e.to_string())?,
        fixture: serde_json::from_slice(&read("data/fixtures/train/toy-0-0001.json")?).map_err(|e| e.to_string())?,
        elapsed: start.elapsed(),
    })
}

fn overfit_and_pipeline() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_run(&tmp.path().join("first"))?;
    let second = pipeline_run(&tmp.path().join("second"))?;

    // overfit
    let s = &first.summary;
    let miou = s["train"]["mean_iou"].as_f64().ok_or("summary lacks train mIoU")?;
    let (initial, last) = (s["initial_loss"].as_f64().unwrap(), s["final_loss"].as_f64().unwrap());
    ensure!(miou > 0.9, "train mIoU {miou:.4} after 500 iterations");
    ensure!(last < 0.1 * initial, "final loss {last:.4} is not below 10% of initial {initial:.4}");
    ensure!(first.checkpoint == second.checkpoint, "training is not deterministic for a fixed seed");
    let limit = Duration::from_secs(600);
    ensure!(first.elapsed < limit && second.elapsed < limit, "run took {:?} / {:?}", first.elapsed, second.elapsed);

    // pipeline
    let schema = jsonschema::JSONSchema::compile(&serde_json::from_str(SCHEMA_V1).unwrap()).unwrap();
    let value: Value = serde_json::from_str(&first.document).map_err(|e| e.to_string())?;
    ensure!(schema.is_valid(&value), "document violates the schema");
    let doc = SlideDocument::from_json(&first.document).map_err(|e| e.to_string())?;
    let expected_classes: BTreeSet<&str> = first.fixture["regions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["class"].as_str().unwrap())
        .collect();
    let found: BTreeSet<&str> = doc.regions.iter().map(|r| r.class.as_str()).collect();
    ensure!(found == expected_classes, "regions cover {found:?}, fixture has {expected_classes:?}");
    let expected = include_str!("fixtures/pipeline_expected.txt");
    ensure!(first.transcript == expected, "transcript differs from fixture:\n{}", first.transcript);
    ensure!(
        first.mask == second.mask && first.document == second.document && first.transcript == second.transcript,
        "pipeline outputs differ between runs"
    );
    Ok(format!(
        "train mIoU {miou:.4}, loss {initial:.4} -> {last:.4}; {} regions in expected order; \
         identical outputs across runs ({:.0?} + {:.0?})",
        doc.regions.len(),
        first.elapsed,
        second.elapsed
    ))
}
