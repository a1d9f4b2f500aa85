use serde::{Deserialize, Serialize};

use super::special::{normal_cdf, student_t_two_tailed};
use super::{Result, StatsError};

/// Asymptotic KS critical value at α = 0.05 is this over √n.
pub const KS_CRITICAL_COEFF: f64 = 1.358;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population (non-excess) kurtosis m₄ / m₂²; a normal sample gives about 3.
pub fn kurtosis(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(StatsError::TooFewValues { needed: 4, got: values.len() });
    }
    let m = mean(values);
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in values {
        let d2 = (v - m) * (v - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    let n = values.len() as f64;
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub critical: f64,
    pub reject: bool,
}

/// One-sample Kolmogorov–Smirnov test against a normal with the sample mean
/// and sample standard deviation, at α = 0.05.
pub fn ks_normality(values: &[f64]) -> Result<KsResult> {
    let n = values.len();
    if n < 8 {
        return Err(StatsError::TooFewValues { needed: 8, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x, m, sd);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let critical = KS_CRITICAL_COEFF / nf.sqrt();
    Ok(KsResult {
        d,
        critical,
        reject: d > critical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Zero pooled variance with different means: `t` is ±∞ and `p` is 0.
    pub saturated: bool,
}

/// Student's two-sample t-test with pooled variance, two-tailed.
pub fn t_test_ind(a: &[f64], b: &[f64]) -> Result<TTest> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewValues { needed: 2, got: s.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let ss = |s: &[f64], m: f64| s.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    let df = na + nb - 2.0;
    let pooled = (ss(a, ma) + ss(b, mb)) / df;
    let diff = ma - mb;
    // tolerance for pooled variance that is zero up to rounding
    let eps = f64::EPSILON * (ma.abs().max(mb.abs()).max(1.0)).powi(2);
    if pooled <= eps {
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p: 1.0, saturated: false }
        } else {
            TTest {
                t: f64::INFINITY.copysign(diff),
                df,
                p: 0.0,
                saturated: true,
            }
        });
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        df,
        p: student_t_two_tailed(t, df),
        saturated: false,
    })
}
