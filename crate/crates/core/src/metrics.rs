//! Welfare and fairness metrics against the optimal facility placement.
//!
//! `fair` is the largest individual utility loss an agent suffers when the
//! facility moves from the optimal placement to `l`; it collapses to the
//! distance `|T(D) - l|`. `swdiff` is the total welfare gap; it collapses to
//! `|T(D) - l| + 2 * sum over crossed agents of d(x_j, l)`. Each metric is
//! evaluated either through its closed form or through the definitional
//! oracle, and the two routes are required to agree.

use crate::domain::Dataset;
use crate::Result;

/// Evaluation route: `Closed` uses the algebraic form, `Oracle` the
/// definition itself. Keeping both routes live lets tests pin one against
/// the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Closed,
    Oracle,
}

/// Per-agent utility losses of switching the facility from `T(D)` to `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// 1-based indices of agents lying strictly on `l`'s side of the median and
/// located between the median and `l` (endpoints included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossedSet {
    indices: Vec<usize>,
}

impl CrossedSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The welfare-optimal facility placement: the median agent location.
pub fn optimal_location(d: &Dataset) -> f64 {
    d.median()
}

fn check_location(d: &Dataset, l: f64) -> Result<()> {
    if !l.is_finite() || !d.domain().contains(l) {
        return Err(d.domain().location_error(l));
    }
    Ok(())
}

/// Social welfare of placing the facility at `l`: `-sum_i |x_i - l|`.
pub fn social_welfare(d: &Dataset, l: f64) -> Result<f64> {
    check_location(d, l)?;
    Ok(-d.locations().iter().map(|&x| (x - l).abs()).sum::<f64>())
}

/// Entry `i` is `d(x_i, l) - d(x_i, T(D))`.
pub fn loss_vector(d: &Dataset, l: f64) -> Result<LossVector> {
    check_location(d, l)?;
    let t = d.median();
    Ok(LossVector(
        d.locations()
            .iter()
            .map(|&x| (x - l).abs() - (x - t).abs())
            .collect(),
    ))
}

/// Maximum individual utility loss of moving the facility to `l`.
///
/// Closed form: `|T(D) - l|`. Oracle: the maximum entry of [`loss_vector`].
pub fn fair(d: &Dataset, l: f64, mode: EvalMode) -> Result<f64> {
    check_location(d, l)?;
    match mode {
        EvalMode::Closed => Ok((d.median() - l).abs()),
        EvalMode::Oracle => Ok(loss_vector(d, l)?.max()),
    }
}

pub fn crossed_set(d: &Dataset, l: f64) -> Result<CrossedSet> {
    check_location(d, l)?;
    let t = d.median();
    let mid = d.median_rank();
    let xs = d.locations();
    let indices = if l < t {
        (1..mid).filter(|&i| xs[i - 1] >= l && xs[i - 1] <= t).collect()
    } else if l > t {
        (mid + 1..=xs.len())
            .filter(|&i| xs[i - 1] >= t && xs[i - 1] <= l)
            .collect()
    } else {
        Vec::new()
    };
    Ok(CrossedSet { indices })
}

/// Welfare gap of placing the facility at `l` instead of `T(D)`.
///
/// Closed form: `|T(D) - l| + 2 * sum_{j in crossed} |x_j - l|`. Oracle:
/// `social_welfare(D, T(D)) - social_welfare(D, l)`.
pub fn swdiff(d: &Dataset, l: f64, mode: EvalMode) -> Result<f64> {
    check_location(d, l)?;
    match mode {
        EvalMode::Closed => {
            let xs = d.locations();
            let crossed = crossed_set(d, l)?;
            let extra: f64 = crossed.indices().iter().map(|&j| (xs[j - 1] - l).abs()).sum();
            Ok((d.median() - l).abs() + 2.0 * extra)
        }
        EvalMode::Oracle => {
            Ok(social_welfare(d, d.median())? - social_welfare(d, l)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d5() -> Dataset {
        Dataset::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0], 2.0).unwrap()
    }

    #[test]
    fn optimal_location_examples() {
        assert_eq!(
            optimal_location(&Dataset::new(vec![-1.0, 0.0, 1.0], 2.0).unwrap()),
            0.0
        );
        assert_eq!(
            optimal_location(&Dataset::new(vec![-1.0, -1.0, 1.0], 2.0).unwrap()),
            -1.0
        );
        assert_eq!(
            optimal_location(&Dataset::new(vec![0.0, 0.0, 0.0, 0.0, 1.0], 2.0).unwrap()),
            0.0
        );
    }

    #[test]
    fn social_welfare_examples() {
        let d = d5();
        assert_eq!(social_welfare(&d, 0.0).unwrap(), -3.0);
        assert!((social_welfare(&d, 0.6).unwrap() - (-3.8)).abs() < 1e-12);
        let stacked = Dataset::new(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(social_welfare(&stacked, 0.0).unwrap(), 0.0);
        assert!(social_welfare(&d, 1.5).is_err());
    }

    #[test]
    fn loss_vector_examples() {
        let d = d5();
        let at_median = loss_vector(&d, 0.0).unwrap();
        assert!(at_median.values().iter().all(|&v| v == 0.0));

        let lv = loss_vector(&d, 0.6).unwrap();
        let want = [0.6, 0.6, 0.6, -0.4, -0.6];
        for (got, want) in lv.values().iter().zip(want) {
            assert!((got - want).abs() < 1e-12);
        }

        let stacked = Dataset::new(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        let lv = loss_vector(&stacked, 1.0).unwrap();
        assert_eq!(lv.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn fair_examples() {
        let d = d5();
        assert_eq!(fair(&d, 0.0, EvalMode::Closed).unwrap(), 0.0);
        assert!((fair(&d, 0.6, EvalMode::Oracle).unwrap() - 0.6).abs() < 1e-12);
        assert!((fair(&d, 0.6, EvalMode::Closed).unwrap() - 0.6).abs() < 1e-12);

        // Half the stack on each end: moving to the center costs m/2.
        let split = Dataset::new(vec![-1.0, -1.0, 1.0], 2.0).unwrap();
        assert_eq!(fair(&split, 0.0, EvalMode::Closed).unwrap(), 1.0);
        assert_eq!(fair(&split, 0.0, EvalMode::Oracle).unwrap(), 1.0);
    }

    #[test]
    fn crossed_set_examples() {
        let d = d5();
        assert!(crossed_set(&d, 0.0).unwrap().is_empty());
        assert_eq!(crossed_set(&d, 0.6).unwrap().indices(), &[4]);
        assert_eq!(crossed_set(&d, -0.75).unwrap().indices(), &[2]);
    }

    #[test]
    fn swdiff_examples() {
        let d = d5();
        assert_eq!(swdiff(&d, 0.0, EvalMode::Closed).unwrap(), 0.0);
        assert!((swdiff(&d, 0.6, EvalMode::Closed).unwrap() - 0.8).abs() < 1e-12);
        assert!((swdiff(&d, 0.6, EvalMode::Oracle).unwrap() - 0.8).abs() < 1e-12);

        let stacked = Dataset::new(vec![0.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(swdiff(&stacked, 1.0, EvalMode::Closed).unwrap(), 3.0);
    }

    #[test]
    fn ties_at_l_contribute_zero() {
        // x_4 sits exactly at l: crossed but at distance zero.
        let d = d5();
        let c = crossed_set(&d, 0.5).unwrap();
        assert_eq!(c.indices(), &[4]);
        let closed = swdiff(&d, 0.5, EvalMode::Closed).unwrap();
        let oracle = swdiff(&d, 0.5, EvalMode::Oracle).unwrap();
        assert!((closed - oracle).abs() < 1e-12);
    }
}
