//! Pairwise meeting intensities and competing exponential clocks.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interest::{cosine_similarity, InterestProfile, NodeId, Population};

/// How pairwise meeting rates depend on the two nodes' interests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateModel {
    /// Every pair meets at the same rate.
    SocialOblivious { lambda: f64 },
    /// Pair rate `k·cos(α) + δ`, with `k` chosen so that the mean rate to a
    /// uniformly placed relay equals `lambda`.
    InterestBased { lambda: f64, delta: f64, k: f64 },
}

impl RateModel {
    pub fn social_oblivious(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        Ok(RateModel::SocialOblivious { lambda })
    }

    pub fn interest_based(lambda: f64, delta: f64) -> Result<Self> {
        let k = normalization_k(lambda, delta)?;
        Ok(RateModel::InterestBased { lambda, delta, k })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            RateModel::SocialOblivious { lambda } | RateModel::InterestBased { lambda, .. } => lambda,
        }
    }

    /// Rate between two members of a population (dimensions already checked).
    pub fn rate_between(&self, pop: &Population, a: NodeId, b: NodeId) -> f64 {
        match *self {
            RateModel::SocialOblivious { lambda } => lambda,
            RateModel::InterestBased { delta, k, .. } => k * pop.similarity(a, b) + delta,
        }
    }
}

/// `k = (π/2)(λ − δ)`, the scale that makes the expected rate to a relay
/// with uniform angle equal to `λ`.
pub fn normalization_k(lambda: f64, delta: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::config(format!("delta must be non-negative, got {delta}")));
    }
    if delta >= lambda {
        return Err(Error::config(format!(
            "delta ({delta}) must be below lambda ({lambda})"
        )));
    }
    Ok(FRAC_PI_2 * (lambda - delta))
}

pub fn pair_rate(model: &RateModel, a: &InterestProfile, b: &InterestProfile) -> Result<f64> {
    let cos = cosine_similarity(a, b)?;
    Ok(match *model {
        RateModel::SocialOblivious { lambda } => lambda,
        RateModel::InterestBased { delta, k, .. } => k * cos + delta,
    })
}

/// Where `δ` comes from: a fixed value or `c·n^(−β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSpec {
    Fixed(f64),
    PowerLaw { c: f64, beta: f64 },
}

impl Default for DeltaSpec {
    fn default() -> Self {
        DeltaSpec::PowerLaw { c: 1.0, beta: 1.0 }
    }
}

impl DeltaSpec {
    pub fn resolve(&self, n: usize) -> Result<f64> {
        match *self {
            DeltaSpec::Fixed(d) => Ok(d),
            DeltaSpec::PowerLaw { c, beta } => {
                if n == 0 {
                    return Err(Error::config("delta power law needs n >= 1"));
                }
                Ok(c * (n as f64).powf(-beta))
            }
        }
    }
}

/// Symmetric table of pairwise rates; the diagonal is zero and unused.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    size: usize,
    rates: Vec<f64>,
}

impl RateMatrix {
    pub fn from_profiles(model: &RateModel, profiles: &[InterestProfile]) -> Result<Self> {
        let size = profiles.len();
        let mut rates = vec![0.0; size * size];
        for i in 0..size {
            for j in (i + 1)..size {
                let r = pair_rate(model, &profiles[i], &profiles[j])?;
                rates[i * size + j] = r;
                rates[j * size + i] = r;
            }
        }
        Ok(Self { size, rates })
    }

    /// Builds directly from a full square table, checking symmetry and sign.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        let mut rates = Vec::with_capacity(size * size);
        for row in &rows {
            if row.len() != size {
                return Err(Error::Dimension {
                    expected: size,
                    found: row.len(),
                });
            }
            rates.extend_from_slice(row);
        }
        for i in 0..size {
            rates[i * size + i] = 0.0;
            for j in 0..size {
                let r = rates[i * size + j];
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::argument(format!("rate[{i}][{j}] = {r} is not a valid rate")));
                }
                if r != rates[j * size + i] {
                    return Err(Error::argument(format!("rate table not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { size, rates })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.size + j]
    }

    /// Upper-triangle entries `(i, j, rate)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |i| ((i + 1)..self.size).map(move |j| (i, j, self.get(i, j))))
    }
}

/// Node order: source, destination, relays.
pub fn build_rate_matrix(model: &RateModel, pop: &Population) -> Result<RateMatrix> {
    let profiles: Vec<InterestProfile> = pop.nodes().map(|id| pop.profile(id).clone()).collect();
    RateMatrix::from_profiles(model, &profiles)
}

/// First firing among independent exponential clocks.
///
/// The minimum is exponential with the summed rate; the winner is picked
/// with probability proportional to its rate, independently of the time.
pub fn sample_min_meeting<R: Rng + ?Sized>(rng: &mut R, rates: &[f64]) -> Result<(f64, usize)> {
    if rates.is_empty() {
        return Err(Error::argument("no competing clocks"));
    }
    let mut total = 0.0;
    for (i, &r) in rates.iter().enumerate() {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::argument(format!("clock {i} has rate {r}; rates must be positive")));
        }
        total += r;
    }
    let time = sample_exponential(rng, total);
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &r) in rates.iter().enumerate() {
        acc += r;
        if target < acc {
            return Ok((time, i));
        }
    }
    Ok((time, rates.len() - 1))
}

/// Inverse-CDF exponential draw; never returns zero.
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 - U lies in (0, 1].
    let u: f64 = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interest::Scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalization_constant() {
        assert!((normalization_k(1.0, 0.0).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((normalization_k(1.0, 0.01).unwrap() - 1.55509).abs() < 1e-5);
        assert!(matches!(normalization_k(1.0, 1.0), Err(Error::Config(_))));
        assert!(normalization_k(1.0, -0.1).is_err());
    }

    #[test]
    fn pair_rate_examples() {
        let e1 = InterestProfile::basis(3, 0).unwrap();
        let e2 = InterestProfile::basis(3, 1).unwrap();
        let obl = RateModel::social_oblivious(2.0).unwrap();
        assert_eq!(pair_rate(&obl, &e1, &e2).unwrap(), 2.0);
        let ib = RateModel::interest_based(1.0, 0.01).unwrap();
        assert!((pair_rate(&ib, &e1, &e1).unwrap() - 1.56509).abs() < 1e-5);
        assert!((pair_rate(&ib, &e1, &e2).unwrap() - 0.01).abs() < 1e-15);
        let bad = InterestProfile::basis(2, 0).unwrap();
        assert!(matches!(pair_rate(&ib, &e1, &bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn matrix_from_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pop = Population::sample(&mut rng, Scenario::WorstCase, 4, 1).unwrap();
        let obl = RateModel::social_oblivious(1.5).unwrap();
        let m = build_rate_matrix(&obl, &pop).unwrap();
        assert_eq!(m.size(), 3);
        for (_, _, r) in m.pairs() {
            assert_eq!(r, 1.5);
        }

        let pop = Population::sample(&mut rng, Scenario::WorstCase, 4, 30).unwrap();
        let ib = RateModel::interest_based(1.0, 0.02).unwrap();
        let m = build_rate_matrix(&ib, &pop).unwrap();
        assert!((m.get(0, 1) - 0.02).abs() < 1e-15);
        let k = normalization_k(1.0, 0.02).unwrap();
        for i in 0..m.size() {
            for j in 0..m.size() {
                assert_eq!(m.get(i, j), m.get(j, i));
                if i != j {
                    assert!(m.get(i, j) >= 0.02 - 1e-15 && m.get(i, j) <= k + 0.02 + 1e-12);
                    let direct = ib.rate_between(&pop, NodeId(i), NodeId(j));
                    assert!((direct - m.get(i, j)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn from_rows_validates() {
        assert!(RateMatrix::from_rows(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(RateMatrix::from_rows(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        let m = RateMatrix::from_rows(vec![vec![9.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn min_meeting_argument_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_min_meeting(&mut rng, &[]).is_err());
        assert!(sample_min_meeting(&mut rng, &[1.0, 0.0]).is_err());
        assert!(sample_min_meeting(&mut rng, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn single_clock() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = 0.0;
        let draws = 200_000;
        for _ in 0..draws {
            let (t, i) = sample_min_meeting(&mut rng, &[5.0]).unwrap();
            assert_eq!(i, 0);
            assert!(t > 0.0);
            sum += t;
        }
        assert!((sum / draws as f64 - 0.2).abs() < 0.002);
    }

    #[test]
    fn delta_family() {
        assert_eq!(DeltaSpec::Fixed(0.1).resolve(10).unwrap(), 0.1);
        assert!((DeltaSpec::default().resolve(250).unwrap() - 0.004).abs() < 1e-15);
        assert!(DeltaSpec::default().resolve(0).is_err());
    }
}
