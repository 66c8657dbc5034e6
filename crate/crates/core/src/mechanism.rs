//! The exponential mechanism over the widened percentile loss.
//!
//! The output density is proportional to `exp(-(epsilon/2) * p_alpha(D, l))`.
//! Since `p_alpha(D, .)` is piecewise constant, the density is too, so event
//! probabilities are finite sums, tails invert in closed form, and sampling
//! is a categorical draw over pieces followed by a uniform draw inside the
//! chosen piece.

use crate::domain::Dataset;
use crate::rng::TrialRng;
use crate::score::{p_alpha_pieces, WideningParam};
use crate::{Error, Result};

/// Privacy budget and widening radius of one mechanism instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismSpec {
    epsilon: f64,
    alpha: WideningParam,
}

impl MechanismSpec {
    pub fn new(epsilon: f64, alpha: WideningParam) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "epsilon={epsilon} must be positive"
            )));
        }
        Ok(MechanismSpec { epsilon, alpha })
    }

    /// Spec with the tuned widening `alpha = 1/(n*epsilon)`.
    pub fn tuned(epsilon: f64, n: usize) -> Result<Self> {
        MechanismSpec::new(epsilon, WideningParam::auto(n, epsilon)?)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> WideningParam {
        self.alpha
    }
}

/// One constant-density band of the output distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub p_value: u32,
    /// `ln(hi - lo) - (epsilon/2) * p_value`, before normalization.
    pub log_weight: f64,
}

impl DensityPiece {
    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// The normalized output distribution of the mechanism on one dataset.
#[derive(Debug, Clone)]
pub struct OutputDensity {
    pieces: Vec<DensityPiece>,
    log_total_mass: f64,
    epsilon: f64,
    /// Cumulative normalized piece masses, for inverse-CDF sampling.
    cumulative: Vec<f64>,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl OutputDensity {
    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn log_total_mass(&self) -> f64 {
        self.log_total_mass
    }

    /// Normalized probability mass of piece `i`.
    pub fn mass(&self, i: usize) -> f64 {
        (self.pieces[i].log_weight - self.log_total_mass).exp()
    }

    /// Log of the normalized density height at `x` (piece convention
    /// `[lo, hi)`, last piece closed).
    pub fn log_density_at(&self, x: f64) -> Option<f64> {
        let first = self.pieces.first()?.lo;
        let last = self.pieces.last()?.hi;
        if x < first || x > last {
            return None;
        }
        let idx = self
            .pieces
            .partition_point(|p| p.hi <= x)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[idx];
        Some(-0.5 * self.epsilon * (p.p_value as f64) - self.log_total_mass)
    }

    fn build(d: &Dataset, spec: &MechanismSpec) -> Result<OutputDensity> {
        let f = p_alpha_pieces(d, spec.alpha());
        let eps = spec.epsilon();
        let mut pieces = Vec::with_capacity(f.piece_count());
        for i in 0..f.piece_count() {
            let lo = f.breakpoints()[i];
            let hi = f.breakpoints()[i + 1];
            let p_value = f.values()[i];
            let log_weight = (hi - lo).ln() - 0.5 * eps * p_value as f64;
            pieces.push(DensityPiece {
                lo,
                hi,
                p_value,
                log_weight,
            });
        }
        if pieces.is_empty() {
            return Err(Error::DegenerateSupport);
        }
        let log_total_mass = log_sum_exp(pieces.iter().map(|p| p.log_weight));
        if !log_total_mass.is_finite() {
            return Err(Error::DegenerateSupport);
        }
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            acc += (p.log_weight - log_total_mass).exp();
            cumulative.push(acc);
        }
        Ok(OutputDensity {
            pieces,
            log_total_mass,
            cumulative,
            epsilon: eps,
        })
    }
}

/// Build the normalized output density of the mechanism on `d`.
///
/// Weights are kept in log space and normalized against the total, so large
/// `n * epsilon` (up to ~1e6) cannot underflow the minimum-loss band.
pub fn build_output_density(d: &Dataset, spec: &MechanismSpec) -> Result<OutputDensity> {
    OutputDensity::build(d, spec)
}

/// Draw one output location. Deterministic in `(rng_seed, trial_index)`.
pub fn sample_location(density: &OutputDensity, rng_seed: u64, trial_index: u64) -> f64 {
    let mut rng = TrialRng::new(rng_seed, trial_index);
    let u = rng.next_f64();
    let k = density
        .cumulative
        .partition_point(|&c| c <= u)
        .min(density.pieces.len() - 1);
    let piece = &density.pieces[k];
    rng.next_range(piece.lo, piece.hi)
}

/// The metric whose tail probability is being queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMetric {
    /// The widened percentile loss of the output.
    P,
    /// Distance of the output from the optimal placement.
    Fair,
    /// Welfare gap of the output.
    Swdiff,
}

/// Exact `Pr[metric(D, M(D)) > threshold]`.
pub fn exact_tail(
    d: &Dataset,
    spec: &MechanismSpec,
    metric: TailMetric,
    threshold: f64,
) -> Result<f64> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidParams(format!(
            "threshold={threshold} must be nonnegative"
        )));
    }
    let density = build_output_density(d, spec)?;
    let tail = match metric {
        TailMetric::P => tail_p(&density, threshold),
        TailMetric::Fair => tail_fair(&density, d.median(), threshold),
        TailMetric::Swdiff => tail_swdiff(&density, d, threshold),
    };
    // Summing every piece mass can overshoot 1 by a few ulps.
    Ok(tail.clamp(0.0, 1.0))
}

fn tail_p(density: &OutputDensity, threshold: f64) -> f64 {
    density
        .pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.p_value as f64) > threshold)
        .map(|(i, _)| density.mass(i))
        .sum()
}

/// Mass of `{l : |l - center| > radius}`.
fn tail_fair(density: &OutputDensity, center: f64, radius: f64) -> f64 {
    let (a, b) = (center - radius, center + radius);
    let mut total = 0.0;
    for (i, p) in density.pieces.iter().enumerate() {
        let overlap = (p.hi.min(b) - p.lo.max(a)).max(0.0);
        let outside = (p.len() - overlap).max(0.0);
        if outside > 0.0 {
            total += density.mass(i) * outside / p.len();
        }
    }
    total
}

/// Position on the right of the median where the welfare gap first reaches
/// `threshold`, or `None` if it never does within `V`. The gap grows
/// piecewise linearly away from the median, its slope increasing by 2 at
/// every crossed agent.
fn swdiff_crossing(d: &Dataset, threshold: f64, rightward: bool) -> Option<f64> {
    let xs = d.locations();
    let mid = d.median_rank();
    let t = d.median();
    let end = if rightward {
        d.domain().hi()
    } else {
        d.domain().lo()
    };
    // Agent offsets beyond the median on this side, in walk order.
    let offsets: Vec<f64> = if rightward {
        (mid + 1..=xs.len()).map(|i| xs[i - 1] - t).collect()
    } else {
        (1..mid).rev().map(|i| t - xs[i - 1]).collect()
    };
    let span = (end - t).abs();

    let mut pos = 0.0; // distance walked from the median
    let mut value = 0.0; // welfare gap at pos
    let mut slope = 1.0;
    for off in offsets {
        let off = off.min(span);
        if off > pos {
            let next = value + slope * (off - pos);
            if next >= threshold {
                let at = pos + (threshold - value) / slope;
                return Some(if rightward { t + at } else { t - at });
            }
            value = next;
            pos = off;
        }
        slope += 2.0;
    }
    let next = value + slope * (span - pos);
    if next >= threshold {
        let at = pos + (threshold - value) / slope;
        Some(if rightward { t + at } else { t - at })
    } else {
        None
    }
}

fn tail_swdiff(density: &OutputDensity, d: &Dataset, threshold: f64) -> f64 {
    let mut total = 0.0;
    if let Some(right) = swdiff_crossing(d, threshold, true) {
        for (i, p) in density.pieces.iter().enumerate() {
            let beyond = (p.hi - p.lo.max(right)).max(0.0);
            if beyond > 0.0 {
                total += density.mass(i) * beyond / p.len();
            }
        }
    }
    if let Some(left) = swdiff_crossing(d, threshold, false) {
        for (i, p) in density.pieces.iter().enumerate() {
            let beyond = (p.hi.min(left) - p.lo).max(0.0);
            if beyond > 0.0 {
                total += density.mass(i) * beyond / p.len();
            }
        }
    }
    total
}

/// Smallest `t` with `Pr[FAIR > t] <= beta`, by monotone inversion of the
/// piecewise-linear tail.
pub fn fair_quantile(d: &Dataset, spec: &MechanismSpec, beta: f64) -> Result<f64> {
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::BetaOutOfRange { beta, hi: 1.0 });
    }
    let density = build_output_density(d, spec)?;
    let t = d.median();

    let mut radii: Vec<f64> = density
        .pieces
        .iter()
        .flat_map(|p| [(p.lo - t).abs(), (p.hi - t).abs()])
        .collect();
    radii.push(0.0);
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let mut prev_r = radii[0];
    let mut prev_g = tail_fair(&density, t, prev_r);
    if prev_g <= beta {
        return Ok(prev_r);
    }
    for &r in &radii[1..] {
        let g = tail_fair(&density, t, r);
        if g <= beta {
            // Linear between kinks: solve G(r*) = beta.
            let frac = (prev_g - beta) / (prev_g - g);
            return Ok(prev_r + frac * (r - prev_r));
        }
        prev_r = r;
        prev_g = g;
    }
    Ok(*radii.last().unwrap())
}
