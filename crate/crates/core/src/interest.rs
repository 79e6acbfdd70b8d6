//! Interest profiles: points on the positive orthant of the unit m-sphere.
//!
//! Relay profiles are drawn in two steps. First an angle `α` to an anchor
//! profile is drawn uniformly from `[0, π/2]`; then a profile is chosen
//! uniformly among the positive-orthant unit vectors that make exactly that
//! angle with the anchor.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Attempts allowed when rejecting slice samples that leave the positive orthant.
pub const MAX_SAMPLING_ATTEMPTS: usize = 1_000_000;

/// Negative coordinates above this are treated as rounding noise and clamped.
const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct InterestProfile {
    coords: Vec<f64>,
}

impl InterestProfile {
    /// Wraps coordinates that already satisfy the profile invariants.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::config(format!(
                "interest space needs m >= 2, got {}",
                coords.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !(**c >= 0.0)) {
            return Err(Error::argument(format!(
                "profile coordinate {c} is not a non-negative number"
            )));
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::argument(format!(
                "profile norm {norm} is not 1 within {NORM_TOLERANCE}"
            )));
        }
        Ok(Self { coords })
    }

    /// Scales non-negative weights onto the unit sphere.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::data(format!("negative or non-finite interest weight {w}")));
        }
        let norm = weights.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::data("all-zero interest vector cannot be normalized"));
        }
        Self::new(weights.into_iter().map(|w| w / norm).collect())
    }

    /// The canonical basis vector along `axis` (zero based).
    pub fn basis(m: usize, axis: usize) -> Result<Self> {
        if axis >= m {
            return Err(Error::argument(format!("axis {axis} out of range for m = {m}")));
        }
        let mut coords = vec![0.0; m];
        coords[axis] = 1.0;
        Self::new(coords)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Clamps rounding noise and rescales to unit norm.
    fn from_raw(mut coords: Vec<f64>) -> Self {
        for c in coords.iter_mut() {
            if *c < 0.0 {
                *c = 0.0;
            }
        }
        let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in coords.iter_mut() {
            *c /= norm;
        }
        Self { coords }
    }
}

impl fmt::Display for InterestProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c:.5}")?;
        }
        write!(f, ")")
    }
}

/// Cosine of the angle between two profiles, clamped to `[0, 1]`.
pub fn cosine_similarity(a: &InterestProfile, b: &InterestProfile) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(dot(&a.coords, &b.coords).clamp(0.0, 1.0))
}

/// Angle in radians between two profiles.
pub fn angle_between(a: &InterestProfile, b: &InterestProfile) -> Result<f64> {
    cosine_similarity(a, b).map(f64::acos)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws a profile whose angle to `anchor` is uniform on `[0, π/2]`.
pub fn sample_profile<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    anchor: &InterestProfile,
) -> Result<InterestProfile> {
    if m < 2 {
        return Err(Error::config(format!("interest space needs m >= 2, got {m}")));
    }
    if anchor.dim() != m {
        return Err(Error::Dimension {
            expected: m,
            found: anchor.dim(),
        });
    }
    let alpha = rng.random_range(0.0..=FRAC_PI_2);
    sample_profile_at_angle(rng, anchor, alpha)
}

/// Draws uniformly among positive-orthant unit vectors at angle `alpha` to `anchor`.
///
/// The slice around `e1` is `cos α · e1 + sin α · u` with `u` a unit vector in
/// the span of the remaining axes. A Householder reflection carries `e1` onto
/// the anchor; candidates that leave the positive orthant are rejected.
pub fn sample_profile_at_angle<R: Rng + ?Sized>(
    rng: &mut R,
    anchor: &InterestProfile,
    alpha: f64,
) -> Result<InterestProfile> {
    if !(0.0..=FRAC_PI_2).contains(&alpha) {
        return Err(Error::argument(format!("angle {alpha} outside [0, pi/2]")));
    }
    let m = anchor.dim();
    let (sin, cos) = alpha.sin_cos();
    let mut v = vec![0.0; m];

    let Some(reflector) = Reflector::onto(anchor) else {
        // Anchor is e1: the reflection is the identity and the orthant test
        // reduces to u >= 0. Folding signs gives exactly the accepted
        // distribution without the 2^(m-1) expected rejections.
        fill_direction(rng, &mut v[1..]);
        v[0] = cos;
        for c in v[1..].iter_mut() {
            *c = sin * c.abs();
        }
        return Ok(InterestProfile::from_raw(v));
    };

    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        fill_direction(rng, &mut v[1..]);
        v[0] = cos;
        for c in v[1..].iter_mut() {
            *c *= sin;
        }
        reflector.apply(&mut v);
        if v.iter().all(|c| *c >= -ROUNDING_SLACK) {
            return Ok(InterestProfile::from_raw(v));
        }
    }
    Err(Error::Sampling(format!(
        "no positive-orthant profile at angle {alpha:.6} to anchor {anchor} after {MAX_SAMPLING_ATTEMPTS} attempts"
    )))
}

/// Fills `out` with a uniformly random unit vector.
fn fill_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for c in out.iter_mut() {
            *c = rng.sample(StandardNormal);
            norm2 += *c * *c;
        }
        if norm2 > 1e-300 {
            let norm = norm2.sqrt();
            for c in out.iter_mut() {
                *c /= norm;
            }
            return;
        }
    }
}

/// Householder reflection `H = I - 2ww'/w'w` with `w = e1 - anchor`, so `H e1 = anchor`.
struct Reflector {
    w: Vec<f64>,
    scale: f64,
}

impl Reflector {
    fn onto(anchor: &InterestProfile) -> Option<Self> {
        let mut w: Vec<f64> = anchor.coords.iter().map(|c| -c).collect();
        w[0] += 1.0;
        let ww = dot(&w, &w);
        if ww < 1e-24 {
            return None;
        }
        Some(Self { w, scale: 2.0 / ww })
    }

    fn apply(&self, v: &mut [f64]) {
        let proj = self.scale * dot(&self.w, v);
        for (x, w) in v.iter_mut().zip(&self.w) {
            *x -= proj * w;
        }
    }
}

/// Geometry of the source/destination pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Orthogonal endpoints `S = e1`, `D = e2`.
    WorstCase,
    /// `S = e1` and `D` at a uniformly random angle to `S`.
    UniformAngle,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::WorstCase => "worst_case",
            Scenario::UniformAngle => "uniform_angle",
        })
    }
}

pub fn make_endpoints<R: Rng + ?Sized>(
    scenario: Scenario,
    rng: &mut R,
    m: usize,
) -> Result<(InterestProfile, InterestProfile)> {
    if m < 2 {
        return Err(Error::config(format!("interest space needs m >= 2, got {m}")));
    }
    let source = InterestProfile::basis(m, 0)?;
    let destination = match scenario {
        Scenario::WorstCase => InterestProfile::basis(m, 1)?,
        Scenario::UniformAngle => sample_profile(rng, m, &source)?,
    };
    Ok((source, destination))
}

/// Node index inside a [`Population`]: `0` is the source, `1` the destination,
/// relays follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const SOURCE: NodeId = NodeId(0);
    pub const DESTINATION: NodeId = NodeId(1);

    pub fn relay(i: usize) -> NodeId {
        NodeId(i + 2)
    }

    pub fn relay_index(self) -> Option<usize> {
        self.0.checked_sub(2)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::SOURCE => f.write_str("S"),
            NodeId::DESTINATION => f.write_str("D"),
            NodeId(i) => write!(f, "R{}", i - 1),
        }
    }
}

/// Source, destination and relays, all in the same interest space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    source: InterestProfile,
    destination: InterestProfile,
    relays: Vec<InterestProfile>,
}

impl Population {
    pub fn new(
        source: InterestProfile,
        destination: InterestProfile,
        relays: Vec<InterestProfile>,
    ) -> Result<Self> {
        let m = source.dim();
        for p in std::iter::once(&destination).chain(&relays) {
            if p.dim() != m {
                return Err(Error::Dimension {
                    expected: m,
                    found: p.dim(),
                });
            }
        }
        Ok(Self {
            source,
            destination,
            relays,
        })
    }

    /// Endpoints per `scenario`; relays drawn with uniform angle to the source.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        scenario: Scenario,
        m: usize,
        n: usize,
    ) -> Result<Self> {
        let (source, destination) = make_endpoints(scenario, rng, m)?;
        let relays = (0..n)
            .map(|_| sample_profile(rng, m, &source))
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, destination, relays)
    }

    pub fn n(&self) -> usize {
        self.relays.len()
    }

    pub fn m(&self) -> usize {
        self.source.dim()
    }

    pub fn node_count(&self) -> usize {
        self.relays.len() + 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    pub fn profile(&self, id: NodeId) -> &InterestProfile {
        match id {
            NodeId::SOURCE => &self.source,
            NodeId::DESTINATION => &self.destination,
            NodeId(i) => &self.relays[i - 2],
        }
    }

    pub fn source(&self) -> &InterestProfile {
        &self.source
    }

    pub fn destination(&self) -> &InterestProfile {
        &self.destination
    }

    pub fn relays(&self) -> &[InterestProfile] {
        &self.relays
    }

    /// Cosine similarity between two members; dimensions agree by construction.
    pub fn similarity(&self, a: NodeId, b: NodeId) -> f64 {
        dot(&self.profile(a).coords, &self.profile(b).coords).clamp(0.0, 1.0)
    }

    pub fn similarity_to_destination(&self, id: NodeId) -> f64 {
        self.similarity(id, NodeId::DESTINATION)
    }
}
