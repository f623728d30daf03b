use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard heart-rate error summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub pearson_r: f64,
}

/// MAE, RMSE and Pearson R of `pred` against `gt`.
///
/// Pearson R is defined as 0 when either side has zero variance.
pub fn metrics(pred: &[f64], gt: &[f64]) -> Result<MetricsReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty metric input".into()));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
    let rmse = (pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p - g).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let mp = pred.iter().sum::<f64>() / n;
    let mg = gt.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        sxy += (p - mp) * (g - mg);
        sxx += (p - mp).powi(2);
        syy += (g - mg).powi(2);
    }
    let pearson_r = if sxx > 0.0 && syy > 0.0 {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    // rmse >= mae holds mathematically; guard the last ulp
    Ok(MetricsReport {
        mae,
        rmse: rmse.max(mae),
        pearson_r,
    })
}
