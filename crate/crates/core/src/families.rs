//! Dataset families, certificates, and adversarial generators.
//!
//! Two families of well-behaved datasets are supported. A dataset is
//! *collapsing towards the median* when inter-agent gaps shrink
//! monotonically approaching the median from either side; membership is
//! decidable and checked by [`is_ctm`]. The wider family is certified, not
//! decided: a dataset belongs to the single-peaked family at radius
//! `lambda` when some absolutely continuous density, single-peaked at its
//! own median, lies within Kolmogorov-Smirnov distance `lambda` of it. A
//! [`SinglePeakedDensity`] is such a certificate; [`verify_spm_certificate`]
//! checks one.
//!
//! The generators build the stress datasets used to probe the mechanism:
//! worst-case members of each family for a given loss level, and the
//! near-neighbor pairs with far-apart medians that drive lower bounds.
//! All generated positions flow through shared grid expressions so that
//! points meant to coincide across a pair are bit-identical and change-one
//! distances come out exact.

use serde::{Deserialize, Serialize};

use crate::domain::{change_one_distance, Dataset};
use crate::jsonio;
use crate::rng::TrialRng;
use crate::{Error, Result};

/// Comparison slack for the gap-monotonicity test.
pub const CTM_SLACK: f64 = 1e-12;

/// Slack for Kolmogorov-Smirnov threshold comparisons.
pub const KS_SLACK: f64 = 1e-9;

const CERT_TOL: f64 = 1e-9;

/// An absolutely continuous piecewise-constant density on `V`, together
/// with its peak, certifying closeness to the single-peaked family.
///
/// Valid certificates integrate to one, have the peak at the distribution
/// median, and are non-decreasing up to the peak's piece and non-increasing
/// after it. Deserialized values are unchecked until [`validate`] runs.
///
/// [`validate`]: SinglePeakedDensity::validate
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePeakedDensity {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
    peak: f64,
}

impl SinglePeakedDensity {
    /// Construct and validate.
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>, peak: f64) -> Result<Self> {
        let p = SinglePeakedDensity {
            breakpoints,
            densities,
            peak,
        };
        p.validate()?;
        Ok(p)
    }

    /// Construct without validation (deserialization path).
    pub fn from_parts_unchecked(
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
        peak: f64,
    ) -> Self {
        SinglePeakedDensity {
            breakpoints,
            densities,
            peak,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn support(&self) -> (f64, f64) {
        (
            *self.breakpoints.first().unwrap(),
            *self.breakpoints.last().unwrap(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidCertificate(msg));
        if self.breakpoints.len() < 2 || self.densities.len() + 1 != self.breakpoints.len() {
            return fail("need k+1 breakpoints for k density pieces".into());
        }
        if self
            .breakpoints
            .iter()
            .any(|b| !b.is_finite())
        {
            return fail("breakpoints must be finite".into());
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return fail("breakpoints must be strictly increasing".into());
        }
        if self.densities.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return fail("densities must be finite and nonnegative".into());
        }
        let total = self.integral();
        if (total - 1.0).abs() > CERT_TOL {
            return fail(format!("density integrates to {total}, not 1"));
        }
        let (lo, hi) = self.support();
        if !self.peak.is_finite() || self.peak < lo || self.peak > hi {
            return fail(format!("peak {} outside support", self.peak));
        }
        let median_gap = (self.cdf(self.peak) - 0.5).abs();
        if median_gap > CERT_TOL {
            return fail(format!(
                "peak is not at the median: F(peak) = {}",
                self.cdf(self.peak)
            ));
        }
        // Unimodal around the peak. A peak sitting exactly on a piece
        // boundary may jump down across it: the chain constraints then
        // bind each side separately.
        let right_idx = self.piece_index(self.peak);
        let left_idx = if right_idx > 0 && self.peak == self.breakpoints[right_idx] {
            right_idx - 1
        } else {
            right_idx
        };
        let scale = self
            .densities
            .iter()
            .copied()
            .fold(1.0f64, f64::max);
        let tol = CERT_TOL * scale;
        for i in 0..left_idx {
            if self.densities[i] > self.densities[i + 1] + tol {
                return fail(format!("density decreases before the peak at piece {i}"));
            }
        }
        for i in right_idx..self.densities.len() - 1 {
            if self.densities[i] + tol < self.densities[i + 1] {
                return fail(format!("density increases after the peak at piece {i}"));
            }
        }
        Ok(())
    }

    fn piece_index(&self, x: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(self.densities.len() - 1)
    }

    pub fn integral(&self) -> f64 {
        self.densities
            .iter()
            .enumerate()
            .map(|(i, d)| d * (self.breakpoints[i + 1] - self.breakpoints[i]))
            .sum()
    }

    /// CDF at `x`: 0 left of the support, 1 right of it.
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let mut acc = 0.0;
        for (i, d) in self.densities.iter().enumerate() {
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            if x >= b {
                acc += d * (b - a);
            } else {
                acc += d * (x - a);
                break;
            }
        }
        acc.min(1.0)
    }

    /// Leftmost `x` with `F(x) >= u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (i, d) in self.densities.iter().enumerate() {
            let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
            let mass = d * (b - a);
            if acc + mass >= u {
                if *d == 0.0 {
                    return a;
                }
                return (a + (u - acc) / d).min(b);
            }
            acc += mass;
        }
        self.support().1
    }

    pub fn to_json(&self) -> String {
        jsonio::to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Json(e.to_string()))
    }
}

/// True when consecutive gaps are non-increasing approaching the median
/// from the left and from the right (slack [`CTM_SLACK`]).
pub fn is_ctm(d: &Dataset) -> bool {
    let xs = d.locations();
    let mid = d.median_rank();
    // Left side: gaps x_{i+1}-x_i for i = 1..mid-1 must be non-increasing.
    for i in 1..mid.saturating_sub(1) {
        let outer = xs[i] - xs[i - 1];
        let inner = xs[i + 1] - xs[i];
        if outer + CTM_SLACK < inner {
            return false;
        }
    }
    // Right side: gaps must be non-decreasing moving away from the median.
    for i in mid..xs.len() - 1 {
        let inner = xs[i] - xs[i - 1];
        let outer = xs[i + 1] - xs[i];
        if outer + CTM_SLACK < inner {
            return false;
        }
    }
    true
}

/// Exact Kolmogorov-Smirnov distance between the empirical CDF of `d` and
/// the CDF of `p`.
pub fn ks_distance(d: &Dataset, p: &SinglePeakedDensity) -> Result<f64> {
    let (lo, hi) = p.support();
    let dom = d.domain();
    if lo < dom.lo() - CERT_TOL || hi > dom.hi() + CERT_TOL {
        return Err(Error::DomainMismatch {
            a: dom.diameter(),
            b: hi - lo,
        });
    }
    Ok(ks_sorted(d.locations(), p))
}

/// The supremum is attained approaching an event point (a data value or a
/// density breakpoint) from either side; evaluate both one-sided limits of
/// the empirical CDF at every event.
pub(crate) fn ks_sorted(xs: &[f64], p: &SinglePeakedDensity) -> f64 {
    let n = xs.len() as f64;
    let mut events: Vec<f64> = xs.iter().copied().chain(p.breakpoints().iter().copied()).collect();
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut sup: f64 = 0.0;
    for &e in &events {
        let f = p.cdf(e);
        let at = xs.partition_point(|&x| x <= e) as f64 / n;
        let before = xs.partition_point(|&x| x < e) as f64 / n;
        sup = sup.max((at - f).abs()).max((before - f).abs());
    }
    sup
}

/// Check that `p` is a valid certificate and lies within `lambda` of `d`.
///
/// A `true` result certifies family membership at radius `lambda`. An
/// invalid certificate is an error, distinct from a distance failure.
pub fn verify_spm_certificate(
    d: &Dataset,
    p: &SinglePeakedDensity,
    lambda: f64,
) -> Result<bool> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParams(format!(
            "lambda={lambda} must be nonnegative"
        )));
    }
    p.validate()?;
    Ok(ks_distance(d, p)? <= lambda + KS_SLACK)
}

/// Certificate for a collapsing dataset with strictly positive gaps:
/// density `1/((n-1) * gap_i)` on each inter-agent interval, peaked at the
/// median. Its distance to the dataset is at most `1/(n-1)`.
pub fn ctm_certificate(d: &Dataset) -> Result<SinglePeakedDensity> {
    let xs = d.locations();
    let n = xs.len();
    if n < 3 {
        return Err(Error::InvalidParams(
            "certificate needs at least 3 agents".to_string(),
        ));
    }
    if !is_ctm(d) {
        return Err(Error::NotCtm);
    }
    for i in 0..n - 1 {
        if xs[i + 1] == xs[i] {
            return Err(Error::ZeroGap { index: i + 1 });
        }
    }
    let densities: Vec<f64> = (0..n - 1)
        .map(|i| 1.0 / ((n - 1) as f64 * (xs[i + 1] - xs[i])))
        .collect();
    SinglePeakedDensity::new(xs.to_vec(), densities, d.median())
}

/// Uniform density over `V`, peaked at the center. The certificate used by
/// the near-neighbor pair generator.
pub fn uniform_certificate(m: f64) -> Result<SinglePeakedDensity> {
    if !m.is_finite() || m <= 0.0 {
        return Err(Error::NonPositiveDiameter { m });
    }
    SinglePeakedDensity::new(vec![-m / 2.0, m / 2.0], vec![1.0 / m], 0.0)
}

fn invalid(msg: String) -> Error {
    Error::InvalidParams(msg)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::EvenCount { n });
    }
    Ok(())
}

/// Worst-case collapsing dataset for loss level `k`: `ceil(n/2) + k` agents
/// at `m/2` and the rest uniformly spaced down to `-m/2`.
pub fn ctm_worst(n: usize, k: usize, m: f64) -> Result<Dataset> {
    check_n(n)?;
    let h = n / 2;
    if k > h {
        return Err(invalid(format!("k={k} must satisfy 0 <= k <= floor(n/2)={h}")));
    }
    let spread = h - k;
    let mut pts = Vec::with_capacity(n);
    if spread > 0 {
        let step = m / spread as f64;
        for i in (1..=spread).rev() {
            pts.push(m / 2.0 - i as f64 * step);
        }
    }
    pts.resize(n, m / 2.0);
    Dataset::new(pts, m)
}

/// Worst-case single-peaked-family dataset for loss level `k` at radius
/// `lambda`: a stack at `m/2`, `s = ceil(lambda*n) - 1` agents at `-m/2`,
/// and the remainder spaced by `m / (floor(n/2) - k + lambda*n)`.
pub fn spm_worst(n: usize, k: usize, m: f64, lambda: f64) -> Result<Dataset> {
    check_n(n)?;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(invalid(format!("lambda={lambda} must be positive")));
    }
    let h = n / 2;
    let s = (lambda * n as f64).ceil() as usize;
    let s = s.saturating_sub(1);
    if s == 0 {
        return Err(invalid(format!(
            "lambda={lambda} too small: s = ceil(lambda*n) - 1 must be >= 1"
        )));
    }
    if k > h || s > h - k {
        return Err(invalid(format!(
            "need k + s <= floor(n/2): k={k}, s={s}, floor(n/2)={h}"
        )));
    }
    let spread = h - k - s;
    let step = m / (h as f64 - k as f64 + lambda * n as f64);
    let mut pts = vec![-m / 2.0; s];
    for i in 1..=spread {
        pts.push(-m / 2.0 + i as f64 * step);
    }
    pts.resize(n, m / 2.0);
    Dataset::new(pts, m)
}

/// The half-stacked pair with medians at opposite ends of `V`, at
/// change-one distance 1.
pub fn impossibility_pair(n: usize, m: f64) -> Result<(Dataset, Dataset)> {
    check_n(n)?;
    let mid = n.div_ceil(2);
    let mut a = vec![-m / 2.0; mid];
    a.resize(n, m / 2.0);
    let mut b = vec![-m / 2.0; n - mid];
    b.resize(n, m / 2.0);
    Ok((Dataset::new(a, m)?, Dataset::new(b, m)?))
}

/// Evenly spaced dataset spanning `V`: `x_j = -m/2 + j * m/(n-1)`.
pub fn evenly_spaced(n: usize, m: f64) -> Result<Dataset> {
    check_n(n)?;
    if n == 1 {
        return Dataset::new(vec![0.0], m);
    }
    let step = m / (n - 1) as f64;
    Dataset::new(
        (0..n).map(|j| -m / 2.0 + j as f64 * step).collect(),
        m,
    )
}

/// Collapsing near-neighbor pair with medians `gamma` apart.
///
/// `D0` spaces `n` agents evenly over `V`. `D` moves the `h = gamma*(n-1)/m`
/// rightmost agents of `D0` onto the grid point at `T(D0) - gamma`, which
/// shifts the median left by exactly `gamma` while changing only those `h`
/// agents, so the change-one distance is exactly `h`. `gamma` must be a
/// multiple of `m/(n-1)` below `m/3`.
pub fn fair_lb_pair(n: usize, m: f64, gamma: f64) -> Result<(Dataset, Dataset)> {
    check_n(n)?;
    if n < 5 {
        return Err(invalid(format!("n={n} must be at least 5")));
    }
    if !gamma.is_finite() || gamma < 0.0 || gamma >= m / 3.0 {
        return Err(invalid(format!("gamma={gamma} must lie in [0, m/3)")));
    }
    let steps = gamma * (n - 1) as f64 / m;
    let h = steps.round();
    if (steps - h).abs() > 1e-9 {
        return Err(invalid(format!(
            "gamma={gamma} must be an integer multiple of m/(n-1)"
        )));
    }
    let h = h as usize;
    let c = (n - 1) / 2;
    if h > c {
        return Err(invalid(format!("gamma={gamma} moves the median out of range")));
    }
    let step = m / (n - 1) as f64;
    let grid = |j: usize| -m / 2.0 + j as f64 * step;

    let d0: Vec<f64> = (0..n).map(grid).collect();
    let mut dg: Vec<f64> = (0..n - h).map(grid).collect();
    dg.extend(std::iter::repeat_n(grid(c - h), h));
    Ok((Dataset::new(d0, m)?, Dataset::new(dg, m)?))
}

/// Single-peaked-family neighbor pair with medians `s*m/n` apart, where
/// `s = floor(lambda*n) - 1`.
///
/// Both datasets start from the grid `-m/2 + j*m/n`, `j = 1..n`, and move
/// `s` agents adjacent to the median onto `-m/2`; the two choices of which
/// `s` agents to move differ in a single agent but displace the median by
/// `s` grid steps. Both stay within `lambda` of the uniform density.
pub fn spm_lb_pair(n: usize, m: f64, lambda: f64) -> Result<(Dataset, Dataset)> {
    check_n(n)?;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(invalid(format!("lambda={lambda} must be positive")));
    }
    let s_f = (lambda * n as f64).floor() as isize - 1;
    if s_f < 1 {
        return Err(invalid(format!(
            "lambda={lambda} too small: s = floor(lambda*n) - 1 must be >= 1"
        )));
    }
    let s = s_f as usize;
    let mid = n.div_ceil(2);
    if s >= mid {
        return Err(invalid(format!(
            "s={s} must be below the median rank {mid}"
        )));
    }
    let step = m / n as f64;
    let grid = |j: usize| -m / 2.0 + j as f64 * step;

    // Move agents mid-s+1..=mid for the first dataset, mid-s..=mid-1 for
    // the second; all other positions are shared bit-for-bit.
    let build = |move_lo: usize, move_hi: usize| -> Result<Dataset> {
        let mut pts = vec![-m / 2.0; s];
        for j in 1..=n {
            if j < move_lo || j > move_hi {
                pts.push(grid(j));
            }
        }
        Dataset::new(pts, m)
    };
    Ok((build(mid - s + 1, mid)?, build(mid - s, mid - 1)?))
}

/// Upper bound `min(1, 2*exp(-2*n*lambda^2))` on the probability that the
/// empirical CDF of `n` draws strays more than `lambda` from the truth.
pub fn dkw_bound(n: usize, lambda: f64) -> f64 {
    debug_assert!(n >= 1 && lambda >= 0.0);
    (2.0 * (-2.0 * n as f64 * lambda * lambda).exp()).min(1.0)
}

/// `n` i.i.d. inverse-CDF draws from `p`, sorted into a dataset on the
/// smallest symmetric domain containing the support. Deterministic in
/// `(rng_seed, trial_index)`.
pub fn sample_from_density(
    p: &SinglePeakedDensity,
    n: usize,
    rng_seed: u64,
    trial_index: u64,
) -> Result<Dataset> {
    check_n(n)?;
    let (lo, hi) = p.support();
    let m = 2.0 * lo.abs().max(hi.abs());
    let mut rng = TrialRng::new(rng_seed, trial_index);
    let draws: Vec<f64> = (0..n).map(|_| p.quantile(rng.next_f64())).collect();
    Dataset::new(draws, m)
}

/// Random collapsing dataset: draw per-side gaps, sort them so the larger
/// gaps sit farther from the median, and center the result near a random
/// median position. Gap sizes are capped so the dataset always fits in `V`.
pub fn random_ctm(n: usize, m: f64, rng: &mut TrialRng) -> Result<Dataset> {
    check_n(n)?;
    let half = n / 2;
    let median = rng.next_range(-m / 4.0, m / 4.0);
    let max_gap = if half > 0 { m / (4.0 * half as f64) } else { 0.0 };

    let mut side = |sign: f64| -> Vec<f64> {
        let mut gaps: Vec<f64> = (0..half).map(|_| rng.next_range(0.0, max_gap)).collect();
        gaps.sort_by(f64::total_cmp);
        let mut pts = Vec::with_capacity(half);
        let mut pos = median;
        for g in gaps {
            pos += sign * g;
            pts.push(pos);
        }
        pts
    };
    let mut pts = side(-1.0);
    pts.push(median);
    pts.extend(side(1.0));
    Dataset::new(pts, m)
}

/// Random member of the certificate class: a unimodal piecewise density
/// whose median falls inside its tallest piece, so the peak can be placed
/// at the median. Rejection-samples shapes until one qualifies.
pub fn random_single_peaked(m: f64, rng: &mut TrialRng) -> Result<SinglePeakedDensity> {
    for _ in 0..500 {
        let pieces = 2 + rng.next_index(7);
        let mut bps: Vec<f64> = (0..=pieces)
            .map(|_| rng.next_range(-m / 2.0, m / 2.0))
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        if bps.len() < pieces + 1 || bps.windows(2).any(|w| w[1] - w[0] < 1e-6 * m) {
            continue;
        }
        let pieces = bps.len() - 1;

        // Tallest height at a chosen piece, the rest placed outward in
        // decreasing order so the shape is unimodal.
        let peak_piece = rng.next_index(pieces);
        let mut heights: Vec<f64> = (0..pieces).map(|_| rng.next_range(0.05, 1.0)).collect();
        heights.sort_by(f64::total_cmp);
        let mut order = Vec::with_capacity(pieces);
        order.push(peak_piece);
        let (mut l, mut r) = (peak_piece as isize - 1, peak_piece + 1);
        let mut left_turn = true;
        while order.len() < pieces {
            if (left_turn && l >= 0) || r >= pieces {
                order.push(l as usize);
                l -= 1;
            } else {
                order.push(r);
                r += 1;
            }
            left_turn = !left_turn;
        }
        let mut assigned = vec![0.0; pieces];
        for (idx, h) in order.into_iter().zip(heights.into_iter().rev()) {
            assigned[idx] = h;
        }

        let total: f64 = assigned
            .iter()
            .enumerate()
            .map(|(i, h)| h * (bps[i + 1] - bps[i]))
            .sum();
        let densities: Vec<f64> = assigned.iter().map(|h| h / total).collect();
        let raw = SinglePeakedDensity::from_parts_unchecked(bps, densities, 0.0);
        let median = raw.quantile(0.5);
        let candidate = SinglePeakedDensity::from_parts_unchecked(
            raw.breakpoints.clone(),
            raw.densities.clone(),
            median,
        );
        if candidate.validate().is_ok() {
            return Ok(candidate);
        }
    }
    Err(Error::InvalidParams(
        "failed to draw a single-peaked density".to_string(),
    ))
}

/// Uniformly random dataset on `V`.
pub fn random_dataset(n: usize, m: f64, rng: &mut TrialRng) -> Result<Dataset> {
    check_n(n)?;
    Dataset::new(
        (0..n).map(|_| rng.next_range(-m / 2.0, m / 2.0)).collect(),
        m,
    )
}

/// Replace one uniformly chosen agent with a fresh location, giving a
/// dataset at change-one distance exactly 1.
pub fn random_neighbor(d: &Dataset, rng: &mut TrialRng) -> Dataset {
    let m = d.domain().diameter();
    let mut pts = d.locations().to_vec();
    let idx = rng.next_index(pts.len());
    loop {
        let v = rng.next_range(-m / 2.0, m / 2.0);
        if v != pts[idx] {
            pts[idx] = v;
            break;
        }
    }
    Dataset::new(pts, m).expect("perturbed dataset stays valid")
}

/// Sanity helper for generated pairs.
pub fn verified_distance(a: &Dataset, b: &Dataset) -> usize {
    change_one_distance(a, b).expect("generated pairs share size and domain")
}
