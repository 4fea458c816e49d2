//! Binomial summaries: Wilson score intervals, pooled two-proportion z-tests,
//! success tables, and the sweep protocols that produce them.

mod experiment;
mod report;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub use experiment::{
    failure_histogram, run_experiment, table_from_traces, Condition, ExperimentConfig, ExperimentMode,
    ExperimentOutput, Split, TraceRecord,
};
pub use report::{content_hash, emit_report, read_traces, render_csv, render_failure_svg, render_svg, ReportFiles};

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.15e-9), polished with one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn check_counts(k: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidTrials);
    }
    if k > n {
        return Err(Error::InvalidCount { k, n });
    }
    Ok(())
}

/// Wilson score interval for `k` successes in `n` trials, clamped to [0, 1].
pub fn wilson_interval(k: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    check_counts(k, n)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = normal_quantile(0.5 + confidence / 2.0);
    let (kf, nf) = (k as f64, n as f64);
    let p = kf / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    // the boundaries are exact: at k = 0 or k = n one endpoint coincides with p̂
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    /// Two-sided.
    pub p: f64,
    /// Pooled proportion was 0 or 1; `z` is 0 by convention.
    pub degenerate_pool: bool,
}

/// Pooled two-proportion z-test of `k1/n1` against `k2/n2`.
pub fn two_proportion_z_test(k1: u64, n1: u64, k2: u64, n2: u64) -> Result<ZTest> {
    check_counts(k1, n1)?;
    check_counts(k2, n2)?;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(ZTest {
            z: 0.0,
            p: 1.0,
            degenerate_pool: true,
        });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    Ok(ZTest {
        z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0),
        degenerate_pool: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub label: String,
    pub k: u64,
    pub n: u64,
    pub phat: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SuccessRow {
    pub fn new(label: impl Into<String>, k: u64, n: u64) -> Result<Self> {
        let (lo, hi) = wilson_interval(k, n, 0.95)?;
        Ok(Self {
            label: label.into(),
            k,
            n,
            phat: k as f64 / n as f64,
            lo,
            hi,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub rows: Vec<SuccessRow>,
}

impl SuccessTable {
    pub fn row(&self, label: &str) -> Option<&SuccessRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_known_values() {
        let q = normal_quantile(0.975);
        assert!((q - 1.959963984540054).abs() < 1e-9, "{q}");
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(0.001) + 3.090232306167813).abs() < 1e-10);
    }

    #[test]
    fn all_successes_reach_one() {
        for n in [1, 7, 36, 1000] {
            assert_eq!(wilson_interval(n, n, 0.95).unwrap().1, 1.0);
            assert_eq!(wilson_interval(0, n, 0.95).unwrap().0, 0.0);
        }
    }

    #[test]
    fn bad_counts_are_rejected() {
        assert!(matches!(wilson_interval(0, 0, 0.95), Err(Error::InvalidTrials)));
        assert!(matches!(wilson_interval(3, 2, 0.95), Err(Error::InvalidCount { .. })));
        assert!(two_proportion_z_test(1, 0, 1, 1).is_err());
    }

    #[test]
    fn degenerate_pool_is_flagged() {
        let t = two_proportion_z_test(0, 10, 0, 12).unwrap();
        assert!(t.degenerate_pool && t.z == 0.0 && t.p == 1.0);
        let t = two_proportion_z_test(5, 5, 9, 9).unwrap();
        assert!(t.degenerate_pool);
    }

    #[test]
    fn equal_proportions_give_zero() {
        let t = two_proportion_z_test(12, 40, 3, 10).unwrap();
        assert!(t.z.abs() < 1e-12 && (t.p - 1.0).abs() < 1e-12);
    }
}
