//! Goodness-of-fit helpers: Kolmogorov-Smirnov and chi-square.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// One-sample KS distance between the empirical distribution of `samples`
/// and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("KS test needs at least one sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::argument("KS test needs non-empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov coefficient `c(α) = sqrt(−ln(α/2)/2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Large-sample one-sample KS rejection threshold.
pub fn ks_critical_value(alpha: f64, n: usize) -> f64 {
    ks_coefficient(alpha) / (n as f64).sqrt()
}

/// Large-sample two-sample KS rejection threshold.
pub fn ks_two_sample_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Pearson chi-square statistic of observed counts against cell
/// probabilities. Returns `(statistic, degrees of freedom)`.
pub fn chi_square_statistic(observed: &[u64], probabilities: &[f64]) -> Result<(f64, usize)> {
    if observed.len() != probabilities.len() || observed.len() < 2 {
        return Err(Error::argument("chi-square needs matching cell lists with at least 2 cells"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::argument("chi-square needs at least one observation"));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probabilities) {
        if !(p > 0.0) {
            return Err(Error::argument("cell probabilities must be positive"));
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
    }
    Ok((stat, observed.len() - 1))
}

/// Upper-tail chi-square critical value.
pub fn chi_square_critical(alpha: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).expect("df > 0").inverse_cdf(1.0 - alpha)
}

/// Poisson dispersion statistic `Σ (x − μ)² / μ` over independent counts with
/// known means; approximately chi-square with `len` degrees of freedom.
pub fn poisson_dispersion(counts: &[u64], means: &[f64]) -> Result<f64> {
    if counts.len() != means.len() || counts.is_empty() {
        return Err(Error::argument("dispersion test needs matching non-empty lists"));
    }
    let mut stat = 0.0;
    for (&c, &mu) in counts.iter().zip(means) {
        if !(mu > 0.0) {
            return Err(Error::argument("Poisson means must be positive"));
        }
        stat += (c as f64 - mu).powi(2) / mu;
    }
    Ok(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_at_one_in_a_thousand() {
        assert!((ks_coefficient(0.001) - 1.9495).abs() < 1e-4);
        assert!((ks_coefficient(0.05) - 1.3581).abs() < 1e-4);
    }

    #[test]
    fn ks_exact_grid() {
        let xs = [0.1, 0.3, 0.5, 0.7, 0.9];
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_basic() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert!((ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chi_square_values() {
        let (s, df) = chi_square_statistic(&[10, 10], &[0.5, 0.5]).unwrap();
        assert_eq!((s, df), (0.0, 1));
        assert!((chi_square_critical(0.05, 1) - 3.8415).abs() < 1e-3);
        assert!((chi_square_critical(0.001, 10) - 29.588).abs() < 1e-2);
    }
}
