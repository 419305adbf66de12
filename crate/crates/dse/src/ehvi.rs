//! Exact expected hypervolume improvement for two objectives with
//! independent Gaussian predictions.
//!
//! The non-dominated part of the reference box is cut into vertical strips
//! at the sorted front points. Within strip `i` (first objective in
//! `[a_i, a_{i+1})`, second objective below `b_i`), the improvement of an
//! outcome `y` factorizes into `(a_{i+1} - max(a_i, y1))⁺ · (b_i - y2)⁺`,
//! and each factor has a closed-form expectation via
//! `ψ(t) = E[(t - Y)⁺] = (t - μ)Φ(z) + σφ(z)`, `z = (t - μ)/σ`.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::pareto::{non_dominated, Objectives};
use crate::DseError;

/// `E[(t - Y)⁺]` for `Y ~ N(mu, sigma²)`; exact at `sigma = 0`.
fn psi(t: f64, mu: f64, sigma: f64) -> f64 {
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    if sigma <= 0.0 {
        return (t - mu).max(0.0);
    }
    let z = (t - mu) / sigma;
    let n = Normal::standard();
    ((t - mu) * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

/// Expected hypervolume improvement of a candidate with per-objective
/// predictive `mean` and `std` over `front`, bounded by `reference`.
pub fn ehvi(mean: &[f64], std: &[f64], front: &[Objectives], reference: Objectives) -> Result<f64, DseError> {
    if mean.len() != 2 || std.len() != 2 {
        return Err(DseError::Unsupported(format!(
            "analytic EHVI needs exactly 2 objectives, got {}",
            mean.len()
        )));
    }
    if std.iter().any(|s| !(*s >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
        return Err(DseError::Numerical(format!(
            "invalid prediction: mean {mean:?}, std {std:?}"
        )));
    }
    let inside: Vec<Objectives> = front
        .iter()
        .copied()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    let pts = non_dominated(&inside);

    // Strip edges along the first objective and ceilings along the second.
    let mut edges = Vec::with_capacity(pts.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend(pts.iter().map(|p| p[0]));
    edges.push(reference[0]);
    let mut ceilings = Vec::with_capacity(pts.len() + 1);
    ceilings.push(reference[1]);
    ceilings.extend(pts.iter().map(|p| p[1]));

    let mut total = 0.0;
    for (i, &b) in ceilings.iter().enumerate() {
        let width = psi(edges[i + 1], mean[0], std[0]) - psi(edges[i], mean[0], std[0]);
        let height = psi(b, mean[1], std[1]);
        total += width.max(0.0) * height;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pareto::hypervolume;
    use approx::assert_relative_eq;

    const R: Objectives = [0.0, 10.0];

    fn front() -> Vec<Objectives> {
        vec![[-5.0, 8.0], [-3.0, 4.0], [-1.0, 2.0]]
    }

    #[test]
    fn deterministic_dominated_candidate_scores_zero() {
        let v = ehvi(&[-2.0, 5.0], &[0.0, 0.0], &front(), R).unwrap();
        assert_eq!(v, 0.0);
        let v = ehvi(&[-3.0, 4.0], &[0.0, 0.0], &front(), R).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn deterministic_improvement_is_the_hypervolume_gain() {
        let y = [-6.0, 1.0];
        let mut with = front();
        with.push(y);
        let gain = hypervolume(&with, R) - hypervolume(&front(), R);
        let v = ehvi(&y, &[0.0, 0.0], &front(), R).unwrap();
        assert_relative_eq!(v, gain, max_relative = 1e-12);

        let y = [-2.0, 3.0];
        let mut with = front();
        with.push(y);
        let gain = hypervolume(&with, R) - hypervolume(&front(), R);
        assert_relative_eq!(ehvi(&y, &[0.0, 0.0], &front(), R).unwrap(), gain, max_relative = 1e-12);
    }

    #[test]
    fn empty_front_is_the_expected_box() {
        let v = ehvi(&[-2.0, 3.0], &[0.0, 0.0], &[], R).unwrap();
        assert_relative_eq!(v, 2.0 * 7.0);
    }

    #[test]
    fn uncertainty_never_hurts_a_dominated_mean() {
        let v = ehvi(&[-2.0, 5.0], &[1.0, 1.0], &front(), R).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn three_objectives_are_rejected() {
        let err = ehvi(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &front(), R).unwrap_err();
        assert!(matches!(err, DseError::Unsupported(_)));
    }
}
