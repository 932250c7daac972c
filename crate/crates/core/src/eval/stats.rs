use statrs::function::beta::beta_reg;

use super::EvalError;

/// Scale taking the median absolute deviation to a normal-consistent
/// standard deviation.
pub const RSTD_SCALE: f64 = 1.4826;

/// Descriptive statistics of one metric. `std` is the population
/// standard deviation; `median` is the lower middle value for even `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub rstd: f64,
    pub n: usize,
}

fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

pub fn summarize(values: &[f64]) -> Result<MetricSummary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = lower_median(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(MetricSummary {
        mean,
        std,
        median,
        rstd: RSTD_SCALE * lower_median(&dev),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub dof: usize,
    /// Two-sided.
    pub p: f64,
}

/// Two-sided tail probability of Student's t with `dof` degrees of
/// freedom, `I_{dof/(dof+t^2)}(dof/2, 1/2)`.
pub fn t_two_sided_p(t: f64, dof: usize) -> f64 {
    let v = dof as f64;
    beta_reg(v / 2.0, 0.5, v / (v + t * t))
}

/// Paired two-sided t-test on `a - b` with the sample (n - 1) std.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|v| *v == d[0]) {
        return Err(EvalError::ZeroVariance);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let dof = n - 1;
    Ok(TTest {
        t,
        dof,
        p: t_two_sided_p(t, dof),
    })
}
