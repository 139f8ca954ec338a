//! Location-encoding ablation harness.
//!
//! Grid (a) varies where the location grid is injected (none, A, B, C, D)
//! and its frequency, plus an A + CoordConv baseline; grid (b) varies how β
//! is set with injection at B. Cells with identical settings are trained
//! once and share their result.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};

use super::{evaluate, train, MetricOptions, MetricReport, TrainConfig, TrainHooks};
use crate::attention::InjectionPoint;
use crate::dataio::SlideSample;
use crate::error::{Error, Result};
use crate::segnet::NetworkConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum BetaMode {
    Learned,
    Fixed(f64),
}

impl BetaMode {
    pub fn label(&self) -> String {
        match self {
            BetaMode::Learned => "learned".into(),
            BetaMode::Fixed(b) => format!("{b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    /// Sub-table the row belongs to ("a" or "b").
    pub table: String,
    pub injection_point: InjectionPoint,
    pub frequency: f64,
    pub beta: BetaMode,
    /// Two appended coordinate channels instead of the location grid.
    pub coordconv: bool,
}

impl AblationCell {
    pub fn new(table: &str, injection_point: InjectionPoint, frequency: f64, beta: BetaMode) -> Self {
        Self {
            table: table.into(),
            injection_point,
            frequency,
            beta,
            coordconv: false,
        }
    }

    pub fn coordconv_baseline(table: &str) -> Self {
        Self {
            coordconv: true,
            ..Self::new(table, InjectionPoint::A, 1.0, BetaMode::Learned)
        }
    }

    pub fn label(&self) -> String {
        if self.coordconv {
            return "A + CoordConv".into();
        }
        format!(
            "{} f={} beta={}",
            self.injection_point.label(),
            self.frequency,
            self.beta.label()
        )
    }

    fn key(&self) -> String {
        format!("{}|{}|{}|{}", self.injection_point.label(), self.frequency, self.beta.label(), self.coordconv)
    }

    pub fn apply(&self, base: &NetworkConfig) -> NetworkConfig {
        let mut cfg = base.clone();
        let att = &mut cfg.attention;
        att.injection_point = self.injection_point;
        att.frequency = self.frequency;
        att.coordconv = self.coordconv;
        match self.beta {
            BetaMode::Learned => att.beta_learnable = true,
            BetaMode::Fixed(b) => {
                att.beta_learnable = false;
                att.beta_init = b;
            }
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    /// The full two-part grid.
    pub fn standard() -> Self {
        use InjectionPoint::*;
        let learned = BetaMode::Learned;
        let mut cells: Vec<AblationCell> = [None, A, B, C, D]
            .into_iter()
            .map(|p| AblationCell::new("a", p, 1.0, learned))
            .collect();
        cells.push(AblationCell::new("a", B, 2.0, learned));
        cells.push(AblationCell::new("a", B, 0.5, learned));
        cells.push(AblationCell::coordconv_baseline("a"));
        for beta in [BetaMode::Fixed(0.0), BetaMode::Fixed(1.0), BetaMode::Fixed(0.5), learned] {
            cells.push(AblationCell::new("b", B, 1.0, beta));
        }
        Self { cells }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub cell: AblationCell,
    /// "ok" or "failed".
    pub status: String,
    pub error: Option<String>,
    pub final_loss: Option<f64>,
    pub final_beta: Option<f64>,
    pub report: Option<MetricReport>,
}

/// Whether injecting at B beat injecting at A in this run. Recorded only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub a_miou: f64,
    pub b_miou: f64,
    pub b_over_a: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub direction_check: Option<DirectionCheck>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,label,injection_point,frequency,beta,coordconv,status,mIoU,PA,final_loss,final_beta\n");
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.cell.table,
                r.label,
                r.cell.injection_point.label(),
                r.cell.frequency,
                r.cell.beta.label(),
                r.cell.coordconv,
                r.status,
                num(r.report.as_ref().map(|m| m.mean_iou)),
                num(r.report.as_ref().map(|m| m.pixel_accuracy)),
                num(r.final_loss),
                num(r.final_beta),
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn run_cell(
    cell: &AblationCell,
    train_set: &[SlideSample],
    val_set: &[SlideSample],
    base: &NetworkConfig,
    config: &TrainConfig,
) -> Result<(f64, f64, MetricReport)> {
    let net_cfg = cell.apply(base);
    let out = train(train_set, val_set, net_cfg, config, TrainHooks::default())?;
    let eval_set = if val_set.is_empty() { train_set } else { val_set };
    let report = evaluate(&out.net, eval_set, config.threshold, MetricOptions::default())?;
    let loss = out.history.last().map_or(f64::NAN, |r| r.loss);
    let beta = out.net.attention().beta(out.net.params());
    Ok((loss, beta, report))
}

/// Train one network per distinct cell and tabulate validation metrics
/// (training-set metrics when `val_set` is empty). A failing cell, including
/// one that panics, is marked failed without stopping the others.
pub fn run_ablation(
    grid: &AblationGrid,
    train_set: &[SlideSample],
    val_set: &[SlideSample],
    base: &NetworkConfig,
    config: &TrainConfig,
) -> Result<AblationTable> {
    if grid.cells.is_empty() {
        return Err(Error::config("ablation grid is empty"));
    }
    let mut done: BTreeMap<String, std::result::Result<(f64, f64, MetricReport), String>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(grid.cells.len());
    for cell in &grid.cells {
        let key = cell.key();
        let result = done
            .entry(key)
            .or_insert_with(|| {
                log::info!("ablation cell {}", cell.label());
                match catch_unwind(AssertUnwindSafe(|| run_cell(cell, train_set, val_set, base, config))) {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "cell panicked".into())),
                }
            })
            .clone();
        rows.push(match result {
            Ok((loss, beta, report)) => AblationRow {
                label: cell.label(),
                cell: cell.clone(),
                status: "ok".into(),
                error: None,
                final_loss: Some(loss),
                final_beta: Some(beta),
                report: Some(report),
            },
            Err(msg) => {
                log::warn!("ablation cell {} failed: {msg}", cell.label());
                AblationRow {
                    label: cell.label(),
                    cell: cell.clone(),
                    status: "failed".into(),
                    error: Some(msg),
                    final_loss: None,
                    final_beta: None,
                    report: None,
                }
            }
        });
    }
    let find = |p: InjectionPoint| {
        rows.iter()
            .find(|r| {
                r.cell.table == "a"
                    && !r.cell.coordconv
                    && r.cell.injection_point == p
                    && r.cell.frequency == 1.0
                    && r.cell.beta == BetaMode::Learned
            })
            .and_then(|r| r.report.as_ref().map(|m| m.mean_iou))
    };
    let direction_check = match (find(InjectionPoint::A), find(InjectionPoint::B)) {
        (Some(a), Some(b)) => Some(DirectionCheck {
            a_miou: a,
            b_miou: b,
            b_over_a: b > a,
        }),
        _ => None,
    };
    Ok(AblationTable { rows, direction_check })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_shape() {
        let g = AblationGrid::standard();
        assert_eq!(g.cells.len(), 12);
        assert_eq!(g.cells.iter().filter(|c| c.table == "a").count(), 8);
        assert_eq!(g.cells.iter().filter(|c| c.coordconv).count(), 1);
        let distinct: std::collections::BTreeSet<String> = g.cells.iter().map(|c| c.key()).collect();
        // the learned-beta row of (b) repeats the B row of (a)
        assert_eq!(distinct.len(), 11);
    }

    #[test]
    fn cell_application() {
        let base = NetworkConfig::toy(3);
        let c = AblationCell::new("b", InjectionPoint::B, 1.0, BetaMode::Fixed(0.5)).apply(&base);
        assert!(!c.attention.beta_learnable);
        assert_eq!(c.attention.beta_init, 0.5);
        let cc = AblationCell::coordconv_baseline("a").apply(&base);
        assert!(cc.attention.coordconv);
        assert_eq!(cc.attention.injection_point, InjectionPoint::A);
    }

    #[test]
    fn failures_are_isolated() {
        let grid = AblationGrid {
            cells: vec![AblationCell::new("a", InjectionPoint::B, 1.0, BetaMode::Learned)],
        };
        let cfg = TrainConfig::toy_overfit((32, 32), 1);
        let t = run_ablation(&grid, &[], &[], &NetworkConfig::toy(2), &cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].status, "failed");
        assert!(t.to_csv().lines().count() == 2);
        assert!(run_ablation(&AblationGrid { cells: vec![] }, &[], &[], &NetworkConfig::toy(2), &cfg).is_err());
    }
}
