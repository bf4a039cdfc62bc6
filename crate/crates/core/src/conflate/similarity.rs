use serde::{Deserialize, Serialize};

use super::geometry::{self as g};
use super::ConflateError;

/// Weights of the four similarity components. They must be non-negative and
/// sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityWeights {
    pub angle: f64,
    pub endpoint: f64,
    pub length: f64,
    pub area: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights { angle: 0.25, endpoint: 0.25, length: 0.25, area: 0.25 }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<(), ConflateError> {
        let w = [self.angle, self.endpoint, self.length, self.area];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ConflateError::Argument("similarity weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConflateError::Argument(format!("similarity weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Component values in [0, 1], 1 meaning identical.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub angle: f64,
    pub endpoint: f64,
    pub length: f64,
    pub area: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub score: f64,
    pub components: Components,
    /// Mean start/start and end/end distance after orientation alignment, meters.
    pub endpoint_distance: f64,
    /// Enclosed area over the squared longer length.
    pub area_ratio: f64,
    /// Whether the candidate was reversed to align with the reference.
    pub reversed: bool,
}

fn check(line: &[[f64; 2]], which: &str) -> Result<f64, ConflateError> {
    if line.len() < 2 || line.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ConflateError::Argument(format!("{which} polyline needs two finite points")));
    }
    let len = g::length(line);
    if !(len > 0.0) {
        return Err(ConflateError::Argument(format!("{which} polyline has zero length")));
    }
    Ok(len)
}

/// Area enclosed between two polylines running the same way, summed over the
/// quadrilateral strips between equally spaced samples on both.
pub fn enclosed_area(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let n = (a.len() + b.len()).max(16);
    let (ra, rb) = (g::resample(a, n), g::resample(b, n));
    (0..n - 1)
        .map(|i| {
            let q = [ra[i], ra[i + 1], rb[i + 1], rb[i]];
            let s: f64 = (0..4).map(|k| q[k][0] * q[(k + 1) % 4][1] - q[(k + 1) % 4][0] * q[k][1]).sum();
            0.5 * s.abs()
        })
        .sum()
}

/// Similarity of a candidate polyline to a reference. The candidate is first
/// oriented so that its endpoints pair with the nearer reference endpoints.
pub fn similarity_score(
    reference: &[[f64; 2]],
    candidate: &[[f64; 2]],
    weights: &SimilarityWeights,
) -> Result<Similarity, ConflateError> {
    let l1 = check(reference, "reference")?;
    let l2 = check(candidate, "candidate")?;
    let (r0, rn) = (reference[0], reference[reference.len() - 1]);
    let (c0, cn) = (candidate[0], candidate[candidate.len() - 1]);
    let same = g::dist(r0, c0) + g::dist(rn, cn);
    let flipped = g::dist(r0, cn) + g::dist(rn, c0);
    let reversed = flipped < same;
    let cand = if reversed { g::reversed(candidate) } else { candidate.to_vec() };
    let lmax = l1.max(l2);

    let (u, v) = (g::chord(reference), g::chord(&cand));
    let angle = if (u[0] == 0.0 && u[1] == 0.0) || (v[0] == 0.0 && v[1] == 0.0) {
        // closed loops have no chord bearing
        if u == v { 1.0 } else { 0.0 }
    } else {
        let cross = (u[0] * v[1] - u[1] * v[0]).abs();
        let dot = (u[0] * v[0] + u[1] * v[1]).abs();
        1.0 - cross.atan2(dot) / std::f64::consts::FRAC_PI_2
    };

    let endpoint_distance = 0.5 * same.min(flipped);
    let endpoint = 1.0 - (endpoint_distance / lmax).min(1.0);
    let length = l1.min(l2) / lmax;
    let area_ratio = enclosed_area(reference, &cand) / (lmax * lmax);
    let area = 1.0 - area_ratio.min(1.0);

    let components = Components { angle, endpoint, length, area };
    let score = weights.angle * angle + weights.endpoint * endpoint + weights.length * length + weights.area * area;
    Ok(Similarity { score, components, endpoint_distance, area_ratio, reversed })
}
