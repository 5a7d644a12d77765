use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value of the t-test for r = 0.
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PearsonError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 paired values, got {0}")]
    TooFew(usize),
    #[error("{0} series has zero variance")]
    ZeroVariance(&'static str),
    #[error("series contains a non-finite value")]
    NonFinite,
}

/// Sample Pearson correlation with a two-sided p-value from
/// `t = r * sqrt((n - 2) / (1 - r^2))` on `n - 2` degrees of freedom. The
/// t tail comes from the regularized incomplete beta function.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, PearsonError> {
    if x.len() != y.len() {
        return Err(PearsonError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(PearsonError::TooFew(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(PearsonError::NonFinite);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(PearsonError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(PearsonError::ZeroVariance("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(Correlation {
        r,
        p_value: two_sided_p(r, n),
        n,
    })
}

fn two_sided_p(r: f64, n: usize) -> f64 {
    let dof = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (dof / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof >= 1");
    (2.0 * dist.sf(t)).clamp(0.0, 1.0)
}
