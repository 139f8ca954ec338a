use super::config::TrainConfig;

/// `lr0 · (1 − iteration / max_iteration)^power`. Iterations past the end
/// are clamped to a rate of zero.
pub fn poly_lr(iteration: usize, config: &TrainConfig) -> f64 {
    let max = config.max_iteration;
    if iteration > max {
        log::warn!("iteration {iteration} is beyond max_iteration {max}; learning rate clamped to 0");
        return 0.0;
    }
    if max == 0 {
        return config.lr0;
    }
    let remaining = 1.0 - iteration as f64 / max as f64;
    config.lr0 * remaining.powf(config.poly_power)
}
