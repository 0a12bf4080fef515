//! Logistic regression by iteratively reweighted least squares (IRLS).
//!
//! Newton steps on the log-likelihood with a working-weight floor, a score
//! convergence test, and a separation guard: runs whose coefficients blow up
//! (a symptom of quasi-separation) stop early and are flagged unconverged
//! rather than erroring, since clipped probabilities remain usable.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Default score tolerance for [`fit_logistic`].
pub const LOGISTIC_TOL: f64 = 1e-8;
/// Default iteration cap for [`fit_logistic`].
pub const LOGISTIC_MAX_ITER: usize = 100;
/// Coefficient magnitude beyond which the fit is declared separated.
const SEPARATION_BOUND: f64 = 30.0;

/// A fitted logistic model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModelFit {
    /// One coefficient per design column.
    pub coefficients: Vec<f64>,
    /// `true` when the score max-norm fell below tolerance.
    pub converged: bool,
    /// Newton steps taken.
    pub iterations: usize,
}

impl LogisticModelFit {
    /// Predicted success probability for one design row.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.coefficients.len());
        let eta: f64 = self.coefficients.iter().zip(row).map(|(c, v)| c * v).sum();
        expit(eta)
    }
}

/// Numerically stable inverse logit.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Maximum-likelihood logistic fit of binary `labels` on `rows`.
///
/// Converges when the score vector's max-norm drops below `tol`; gives up
/// after `max_iter` Newton steps or when any coefficient exceeds the
/// separation bound, returning the last iterate with `converged = false`.
pub fn fit_logistic<R: AsRef<[f64]>>(
    rows: &[R],
    labels: &[u8],
    tol: f64,
    max_iter: usize,
) -> Result<LogisticModelFit> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("logistic fit received no rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::Config(format!(
            "logistic fit received {} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let k = rows[0].as_ref().len();
    if k == 0 || rows.iter().any(|r| r.as_ref().len() != k) {
        return Err(Error::Config("logistic fit received empty or ragged design rows".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "all {} labels are {}",
            labels.len(),
            if ones == 0 { 0 } else { 1 }
        )));
    }

    let n = rows.len();
    let x = DMatrix::from_fn(n, k, |i, j| rows[i].as_ref()[j]);
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(l)));
    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        let eta = &x * &beta;
        let p = eta.map(expit);
        let resid = &y - &p;
        let score = x.transpose() * &resid;
        if score.amax() < tol {
            converged = true;
            break;
        }
        // Weighted Hessian X' W X with W = diag(p(1-p)) floored away from 0.
        let w = p.map(|pi| (pi * (1.0 - pi)).max(1e-10));
        let mut xw = x.clone();
        for (i, wi) in w.iter().enumerate() {
            xw.row_mut(i).scale_mut(*wi);
        }
        let hessian = x.transpose() * xw;
        let step = match Cholesky::new(hessian.clone()) {
            Some(chol) => chol.solve(&score),
            None => {
                let svd = hessian.svd(true, true);
                let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
                svd.solve(&score, max_sv * (k as f64) * f64::EPSILON)
                    .map_err(|e| Error::Numerical(format!("IRLS step failed: {e}")))?
            }
        };
        beta += step;
        iterations += 1;
        if beta.amax() > SEPARATION_BOUND {
            converged = false;
            break;
        }
    }

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("logistic fit produced non-finite coefficients".into()));
    }
    Ok(LogisticModelFit { coefficients, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn simulate(n: usize, truth: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = rng.gen_range(-2.0..2.0);
            let x2: f64 = rng.gen_range(-2.0..2.0);
            let row = vec![1.0, x1, x2];
            let p = expit(row.iter().zip(truth).map(|(v, c)| v * c).sum());
            labels.push(u8::from(rng.gen_bool(p)));
            rows.push(row);
        }
        (rows, labels)
    }

    /// Coarse-to-fine grid search over the 3-parameter log-likelihood,
    /// independent of the IRLS solver, used as a numerical oracle.
    fn grid_search_mle(rows: &[Vec<f64>], labels: &[u8]) -> Vec<f64> {
        let loglik = |b: &[f64]| -> f64 {
            rows.iter()
                .zip(labels)
                .map(|(r, &l)| {
                    let eta: f64 = r.iter().zip(b).map(|(v, c)| v * c).sum();
                    let p = expit(eta).clamp(1e-12, 1.0 - 1e-12);
                    if l == 1 { p.ln() } else { (1.0 - p).ln() }
                })
                .sum()
        };
        let mut center = vec![0.0, 0.0, 0.0];
        let mut width = 4.0;
        for _ in 0..24 {
            let mut best = (f64::NEG_INFINITY, center.clone());
            let steps = 8;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let cand = vec![
                            center[0] - width + 2.0 * width * i as f64 / steps as f64,
                            center[1] - width + 2.0 * width * j as f64 / steps as f64,
                            center[2] - width + 2.0 * width * k as f64 / steps as f64,
                        ];
                        let ll = loglik(&cand);
                        if ll > best.0 {
                            best = (ll, cand);
                        }
                    }
                }
            }
            center = best.1;
            width *= 0.55;
        }
        center
    }

    #[test]
    fn irls_maximum_matches_independent_grid_search() {
        let (rows, labels) = simulate(400, &[0.3, -0.8, 1.1], 42);
        let fit = fit_logistic(&rows, &labels, LOGISTIC_TOL, LOGISTIC_MAX_ITER).unwrap();
        assert!(fit.converged, "IRLS failed to converge in {} iterations", fit.iterations);
        let oracle = grid_search_mle(&rows, &labels);
        for (c, o) in fit.coefficients.iter().zip(&oracle) {
            assert!((c - o).abs() < 2e-4, "IRLS {c} vs grid oracle {o}");
        }
    }

    #[test]
    fn score_vanishes_at_the_returned_coefficients() {
        let (rows, labels) = simulate(300, &[-0.2, 0.5, 0.9], 7);
        let fit = fit_logistic(&rows, &labels, LOGISTIC_TOL, LOGISTIC_MAX_ITER).unwrap();
        assert!(fit.converged);
        for j in 0..3 {
            let score: f64 = rows
                .iter()
                .zip(&labels)
                .map(|(r, &l)| r[j] * (f64::from(l) - fit.predict_proba(r)))
                .sum();
            assert!(score.abs() < LOGISTIC_TOL, "score[{j}] = {score}");
        }
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let rows = vec![vec![1.0, 0.5], vec![1.0, -0.5]];
        let err = fit_logistic(&rows, &[1, 1], LOGISTIC_TOL, LOGISTIC_MAX_ITER).unwrap_err();
        assert!(matches!(err, Error::DegenerateLabels(_)));
    }

    #[test]
    fn separated_data_is_flagged_not_fatal() {
        // Perfectly separable: label = 1 exactly when x > 0.
        let rows: Vec<Vec<f64>> = (-10..10).map(|i| vec![1.0, i as f64 + 0.5]).collect();
        let labels: Vec<u8> = (-10..10).map(|i| u8::from(i >= 0)).collect();
        let fit = fit_logistic(&rows, &labels, LOGISTIC_TOL, LOGISTIC_MAX_ITER).unwrap();
        assert!(!fit.converged, "separated fit should not report convergence");
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn probabilities_are_monotone_in_the_linear_index() {
        let (rows, labels) = simulate(500, &[0.0, 1.5, 0.0], 11);
        let fit = fit_logistic(&rows, &labels, LOGISTIC_TOL, LOGISTIC_MAX_ITER).unwrap();
        let lo = fit.predict_proba(&[1.0, -1.0, 0.0]);
        let hi = fit.predict_proba(&[1.0, 1.0, 0.0]);
        assert!(lo < hi);
        assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}
