use crate::error::{Error, Result};

/// Standardizes with the sample (n - 1) standard deviation.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::ZeroVariance);
    }
    let m = super::mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let sd = (ss / (x.len() - 1) as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

fn sorted(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptySeries);
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("series contains NaN".into()));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Wasserstein-1 distance between two empirical distributions.
///
/// Integrates `|F_x^-1(t) - F_y^-1(t)|` over `t` in `[0, 1]` by walking the
/// merged quantile breakpoints `i/n` and `j/m`. Breakpoints are tracked as
/// integers over the common denominator `n * m`, so step widths are exact.
pub fn wasserstein_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    let xs = sorted(x)?;
    let ys = sorted(y)?;
    let (n, m) = (xs.len() as u128, ys.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    let mut total = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let next_x = (i as u128 + 1) * m;
        let next_y = (j as u128 + 1) * n;
        let next = next_x.min(next_y);
        total += (xs[i] - ys[j]).abs() * (next - pos) as f64;
        pos = next;
        if next_x == next {
            i += 1;
        }
        if next_y == next {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

/// Wasserstein-1 distance between the z-scored series.
pub fn wasserstein_z(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySeries);
    }
    wasserstein_1d(&zscore(x)?, &zscore(y)?)
}
