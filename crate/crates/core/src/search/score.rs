use crate::config::AttackConfig;
use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-12;

/// Standardizes with the population standard deviation. Constant or
/// single-element inputs map to zeros.
pub fn z_score(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std.is_nan() || std < MIN_STD {
        return vec![0.0; n];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Hybrid score `Z(logits) + conf · Z(cosines)`.
pub fn score_candidates(logits: &[f64], cosines: &[f64], conf: f64) -> Result<Vec<f64>> {
    if logits.len() != cosines.len() {
        return Err(Error::DimensionMismatch { expected: logits.len(), got: cosines.len() });
    }
    let zl = z_score(logits);
    let zc = z_score(cosines);
    Ok(zl.iter().zip(&zc).map(|(l, c)| l + conf * c).collect())
}

/// Victim queries allowed at step `t` (1-based): `3·K_A` at the first step,
/// then `K_A·γ^(t-1)` rounded per config and floored at 1, never more than
/// `available`.
pub fn query_count(t: usize, cfg: &AttackConfig, available: usize) -> usize {
    assert!(t >= 1, "iterations are 1-based");
    let budget = if t == 1 {
        3 * cfg.k_a
    } else {
        let raw = cfg.k_a as f64 * cfg.gamma.powi((t - 1) as i32);
        (cfg.rounding.apply(raw) as usize).max(1)
    };
    budget.min(available)
}
