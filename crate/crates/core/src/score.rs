//! The percentile loss `q`, its widened variant `p_alpha`, and their
//! piecewise-constant representations.
//!
//! `q(D, a)` counts the agents strictly separating a candidate output `a`
//! from the median agent; it is zero exactly at the median and rises to
//! `ceil(n/2)` outside the occupied range. `p_alpha(D, l)` is the minimum of
//! `q` over the window `[l - alpha*m, l + alpha*m]`, which credits a band of
//! width `2*alpha*m` around the median even when agents are stacked on a
//! single point. Because `q` is unimodal with its minimum at the median,
//! the window minimum is `q` evaluated at the projection of the median onto
//! the window, and the whole function `p_alpha(D, .)` is piecewise constant
//! with breakpoints at shifted agent positions.

use crate::domain::Dataset;
use crate::{Error, Result};

/// Widening radius as a fraction of the diameter, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WideningParam(f64);

impl WideningParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParams(format!(
                "alpha={alpha} must lie in [0, 1]"
            )));
        }
        Ok(WideningParam(alpha))
    }

    /// The tuned value `1/(n*epsilon)`, clamped into `[0, 1]`.
    pub fn auto(n: usize, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "epsilon={epsilon} must be positive"
            )));
        }
        WideningParam::new((1.0 / (n as f64 * epsilon)).min(1.0))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// A step function over `V` with nonnegative integer values.
///
/// `breakpoints` are strictly increasing and span `V`; piece `i` spans
/// `[breakpoints[i], breakpoints[i+1])`. Pointwise evaluation resolves an
/// interior breakpoint to the smaller adjacent value, which is where the
/// rank-based losses actually sit on their jump points; the half-open
/// convention only matters for sampling and integration, where boundaries
/// carry no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantFn {
    breakpoints: Vec<f64>,
    values: Vec<u32>,
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<u32>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidParams(
                "need k+1 breakpoints for k pieces, k >= 1".to_string(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParams(
                "breakpoints must be finite and strictly increasing".to_string(),
            ));
        }
        Ok(PiecewiseConstantFn {
            breakpoints,
            values,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn piece_count(&self) -> usize {
        self.values.len()
    }

    /// Index of the piece containing `x` under the `[lo, hi)` convention,
    /// last piece closed. `None` outside the span.
    pub fn piece_index(&self, x: f64) -> Option<usize> {
        let first = *self.breakpoints.first().unwrap();
        let last = *self.breakpoints.last().unwrap();
        if x < first || x > last {
            return None;
        }
        if x == last {
            return Some(self.values.len() - 1);
        }
        let idx = self.breakpoints.partition_point(|&b| b <= x) - 1;
        Some(idx.min(self.values.len() - 1))
    }

    /// Pointwise value at `x`; interior breakpoints take the smaller
    /// adjacent value.
    pub fn value_at(&self, x: f64) -> Option<u32> {
        let idx = self.piece_index(x)?;
        if idx > 0 && x == self.breakpoints[idx] {
            return Some(self.values[idx - 1].min(self.values[idx]));
        }
        Some(self.values[idx])
    }
}

/// Rank distance from `a` to the median agent.
pub fn q_value(d: &Dataset, a: f64) -> Result<u32> {
    if !a.is_finite() || !d.domain().contains(a) {
        return Err(d.domain().location_error(a));
    }
    Ok(q_unchecked(d, a))
}

fn q_unchecked(d: &Dataset, a: f64) -> u32 {
    let xs = d.locations();
    let mid = d.median_rank();
    let t = d.median();
    if a < xs[0] || a > xs[xs.len() - 1] {
        return mid as u32;
    }
    if a <= t {
        // Deepest eligible index below: the count of agents at or left of a.
        let count = xs.partition_point(|&x| x <= a);
        mid.saturating_sub(count) as u32
    } else {
        // First index at or right of a, 1-based.
        let first = xs.partition_point(|&x| x < a) + 1;
        first.saturating_sub(mid) as u32
    }
}

/// Minimum of `q` over the window of radius `alpha*m` around `l`.
///
/// `q` is unimodal with minimum 0 at the median, so the window minimum is
/// `q` at the projection of the median onto the window. Points of the
/// window outside the occupied range fall under the `ceil(n/2)` branch of
/// `q` and never win the minimum.
pub fn p_alpha_value(d: &Dataset, l: f64, alpha: WideningParam) -> Result<u32> {
    if !l.is_finite() || !d.domain().contains(l) {
        return Err(d.domain().location_error(l));
    }
    let w = alpha.value() * d.domain().diameter();
    let proj = d.median().clamp(l - w, l + w);
    Ok(q_unchecked(d, proj))
}

/// The full piecewise representation of `p_alpha(D, .)` over `V`.
///
/// Built in one left-to-right pass over the sorted agents, so `O(n)` after
/// the dataset's own sort. Evaluating the result agrees with
/// [`p_alpha_value`] everywhere for `alpha > 0`; for `alpha == 0` the
/// zero-width minimum at the median is not representable as a piece (a
/// measure-zero difference that cannot affect integration or sampling).
pub fn p_alpha_pieces(d: &Dataset, alpha: WideningParam) -> PiecewiseConstantFn {
    let xs = d.locations();
    let n = xs.len();
    let mid = d.median_rank();
    let t = d.median();
    let (lo, hi) = (d.domain().lo(), d.domain().hi());
    let w = alpha.value() * d.domain().diameter();

    // Candidate segments in left-to-right order. Left of the widened
    // minimum the value is q(x + w); right of it, q(x - w).
    let mut segments: Vec<(f64, f64, u32)> = Vec::with_capacity(n + 2);
    segments.push((lo, xs[0] - w, mid as u32));
    for i in 1..mid {
        segments.push((xs[i - 1] - w, xs[i] - w, (mid - i) as u32));
    }
    segments.push((t - w, t + w, 0));
    for i in mid..n {
        segments.push((xs[i - 1] + w, xs[i] + w, (i + 1 - mid) as u32));
    }
    segments.push((xs[n - 1] + w, hi, mid as u32));

    let mut breakpoints = vec![lo];
    let mut values: Vec<u32> = Vec::new();
    for (a, b, v) in segments {
        let a = a.max(lo);
        let b = b.min(hi);
        if b <= a {
            continue;
        }
        if values.last() == Some(&v) {
            *breakpoints.last_mut().unwrap() = b;
        } else {
            breakpoints.push(b);
            values.push(v);
        }
    }

    PiecewiseConstantFn::new(breakpoints, values)
        .expect("segment sweep yields strictly increasing breakpoints")
}
