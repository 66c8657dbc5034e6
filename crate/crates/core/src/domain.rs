//! Datasets of agent locations on the interval `V = [-m/2, m/2]`.

use serde::{Deserialize, Serialize};

use crate::jsonio;
use crate::{Error, Result};

/// Slack for domain-membership checks on parsed input. Values within this
/// distance of a boundary are clamped onto it; anything further out is
/// rejected. Absorbs decimal-parse round-off without admitting bad data.
pub const BOUNDARY_SLACK: f64 = 1e-12;

/// The interval `V = [-m/2, m/2]` of diameter `m > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    m: f64,
}

impl Domain {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::NonPositiveDiameter { m });
        }
        Ok(Domain { m })
    }

    pub fn diameter(&self) -> f64 {
        self.m
    }

    pub fn lo(&self) -> f64 {
        -self.m / 2.0
    }

    pub fn hi(&self) -> f64 {
        self.m / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    /// Clamp `x` onto `V` if it lies within [`BOUNDARY_SLACK`] of it.
    fn admit(&self, x: f64) -> Option<f64> {
        if !x.is_finite() || x < self.lo() - BOUNDARY_SLACK || x > self.hi() + BOUNDARY_SLACK {
            return None;
        }
        Some(x.clamp(self.lo(), self.hi()))
    }

    /// Error value for a point that must lie in `V`.
    pub(crate) fn location_error(&self, value: f64) -> Error {
        Error::LocationOutOfDomain {
            value,
            lo: self.lo(),
            hi: self.hi(),
        }
    }
}

/// A sorted multiset of `n` agent locations in `V`, `n` odd.
///
/// Oddness makes the optimal facility location (the median agent) unique,
/// which the rest of the crate relies on; even sizes are rejected everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    domain: Domain,
    locations: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    m: f64,
    locations: Vec<f64>,
}

impl Dataset {
    /// Sort, validate, and clamp raw locations into a dataset.
    pub fn new(raw: Vec<f64>, m: f64) -> Result<Self> {
        let domain = Domain::new(m)?;
        if raw.is_empty() || raw.len().is_multiple_of(2) {
            return Err(Error::EvenCount { n: raw.len() });
        }
        let mut locations = Vec::with_capacity(raw.len());
        for &x in &raw {
            match domain.admit(x) {
                Some(v) => locations.push(v),
                None => {
                    return Err(Error::OutOfDomain {
                        value: x,
                        lo: domain.lo(),
                        hi: domain.hi(),
                    })
                }
            }
        }
        locations.sort_by(f64::total_cmp);
        Ok(Dataset { domain, locations })
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// 1-based rank `ceil(n/2)` of the median agent.
    pub fn median_rank(&self) -> usize {
        self.n().div_ceil(2)
    }

    /// The median agent location, the unique optimal facility placement.
    pub fn median(&self) -> f64 {
        self.locations[self.median_rank() - 1]
    }

    /// Serialize as `{"m": ..., "locations": [...]}` with locations sorted
    /// and every float printed with 17 significant digits.
    pub fn to_json(&self) -> String {
        jsonio::to_json(&DatasetFile {
            m: self.domain.diameter(),
            locations: self.locations.clone(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))?;
        Dataset::new(file.locations, file.m)
    }
}

/// Number of elements of `a` not in `b`, as multisets of stored values.
///
/// Matching uses exact equality of stored 64-bit floats: the distance is
/// combinatorial, and the generators in this crate produce positions through
/// shared expressions precisely so that matching points are bit-identical.
pub fn change_one_distance(a: &Dataset, b: &Dataset) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::SizeMismatch { a: a.n(), b: b.n() });
    }
    if a.domain().diameter() != b.domain().diameter() {
        return Err(Error::DomainMismatch {
            a: a.domain().diameter(),
            b: b.domain().diameter(),
        });
    }
    let (xs, ys) = (a.locations(), b.locations());
    let mut matched = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        if xs[i] == ys[j] {
            matched += 1;
            i += 1;
            j += 1;
        } else if xs[i] < ys[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(a.n() - matched)
}

/// A pair of equal-size datasets together with their verified change-one
/// distance.
#[derive(Debug, Clone)]
pub struct NeighborPair {
    pub a: Dataset,
    pub b: Dataset,
    pub distance: usize,
}

impl NeighborPair {
    pub fn new(a: Dataset, b: Dataset) -> Result<Self> {
        let distance = change_one_distance(&a, &b)?;
        Ok(NeighborPair { a, b, distance })
    }
}
