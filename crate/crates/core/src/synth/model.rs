//! Diagonal-Gaussian observation models and Bayes posteriors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_posteriors, Matrix, PosteriorSequence, StreamId, POSTERIOR_FLOOR};

/// Smallest variance any model dimension may have.
pub const MIN_VARIANCE: f64 = 1e-6;

/// One diagonal Gaussian per state over a `dim`-dimensional feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    means: Matrix,
    variances: Matrix,
}

impl DiagGaussian {
    pub fn new(means: Matrix, variances: Matrix) -> Result<Self> {
        if means.shape() != variances.shape() || means.rows() == 0 || means.cols() == 0 {
            return Err(Error::Shape(format!(
                "means {:?} and variances {:?} must share a non-empty shape",
                means.shape(),
                variances.shape()
            )));
        }
        if !means.all_finite() || variances.as_slice().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "model parameters must be finite with positive variances".into(),
            ));
        }
        Ok(Self { means, variances })
    }

    /// Fits one Gaussian per state from per-state sample rows, flooring the
    /// variance at `MIN_VARIANCE`.
    pub fn fit(samples: &[Matrix]) -> Result<Self> {
        let dim = samples.first().map(Matrix::cols).unwrap_or(0);
        let mut means = Matrix::zeros(samples.len(), dim);
        let mut vars = Matrix::zeros(samples.len(), dim);
        for (s, m) in samples.iter().enumerate() {
            if m.cols() != dim || m.rows() < 2 {
                return Err(Error::Shape(format!(
                    "state {s} has {:?} calibration samples",
                    m.shape()
                )));
            }
            let n = m.rows() as f64;
            for d in 0..dim {
                let mean = m.iter_rows().map(|r| r[d]).sum::<f64>() / n;
                let var = m.iter_rows().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
                means.set(s, d, mean);
                vars.set(s, d, var.max(MIN_VARIANCE));
            }
        }
        Self::new(means, vars)
    }

    /// The same model with every variance multiplied by `c > 0`.
    pub fn with_variance_scale(&self, c: f64) -> Self {
        Self {
            means: self.means.clone(),
            variances: self.variances.map(|v| v * c),
        }
    }

    /// Joint model over concatenated features, assuming independence.
    pub fn concat(parts: &[&DiagGaussian]) -> Result<Self> {
        let means: Vec<&Matrix> = parts.iter().map(|p| &p.means).collect();
        let vars: Vec<&Matrix> = parts.iter().map(|p| &p.variances).collect();
        Self::new(Matrix::hstack(&means)?, Matrix::hstack(&vars)?)
    }

    pub fn num_states(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    /// Per-frame, per-state log-likelihoods (`T x S`).
    pub fn log_likelihoods(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "features have {} dimensions, model expects {}",
                features.cols(),
                self.dim()
            )));
        }
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let norm: Vec<f64> = self
            .variances
            .iter_rows()
            .map(|v| -0.5 * v.iter().map(|x| x.ln() + ln2pi).sum::<f64>())
            .collect();
        Ok(Matrix::from_fn(features.rows(), self.num_states(), |t, s| {
            let x = features.row(t);
            let (m, v) = (self.means.row(s), self.variances.row(s));
            norm[s]
                - 0.5
                    * x.iter()
                        .zip(m)
                        .zip(v)
                        .map(|((x, m), v)| (x - m).powi(2) / v)
                        .sum::<f64>()
        }))
    }
}

/// Bayes posteriors under a uniform state prior from per-state
/// log-likelihoods, floored by `normalize_posteriors`.
pub fn posteriors_from_log_likelihoods(loglik: &Matrix) -> Result<Matrix> {
    if !loglik.all_finite() {
        return Err(Error::InvalidInput("log-likelihoods must be finite".into()));
    }
    let raw = Matrix::from_fn(loglik.rows(), loglik.cols(), |t, s| {
        let row = loglik.row(t);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (row[s] - m).exp()
    });
    normalize_posteriors(&raw, POSTERIOR_FLOOR)
}

/// Mean cross-entropy of the Bayes posteriors implied by per-state
/// log-likelihoods against labelled states.
pub fn mean_cross_entropy(data: &[(Matrix, Vec<usize>)]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (ll, states) in data {
        for (t, &s) in states.iter().enumerate() {
            let row = ll.row(t);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            total += z.ln() - (row[s] - m);
            n += 1;
        }
    }
    total / n.max(1) as f64
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

/// Variance inflation factor in `[0.25, 1e4]` that minimises the posterior
/// cross-entropy of `model` on labelled feature sequences.
pub fn fit_variance_scale(model: &DiagGaussian, data: &[(Matrix, Vec<usize>)]) -> Result<f64> {
    let mut err = None;
    let ln_c = golden_section(
        |ln_c| {
            let scaled = model.with_variance_scale(ln_c.exp());
            let lls: Result<Vec<(Matrix, Vec<usize>)>> = data
                .iter()
                .map(|(x, s)| Ok((scaled.log_likelihoods(x)?, s.clone())))
                .collect();
            match lls {
                Ok(l) => mean_cross_entropy(&l),
                Err(e) => {
                    err = Some(e);
                    f64::INFINITY
                }
            }
        },
        0.25f64.ln(),
        1e4f64.ln(),
        1e-4,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(ln_c.exp()),
    }
}

pub fn stream_posteriors(stream: StreamId, loglik: &Matrix, frame_shift: f64) -> Result<PosteriorSequence> {
    PosteriorSequence::new(stream, posteriors_from_log_likelihoods(loglik)?, frame_shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_set_likelihoods_pass_through() {
        let ll = Matrix::from_rows(&[[0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()]]).unwrap();
        let p = posteriors_from_log_likelihoods(&ll).unwrap();
        for (a, b) in p.row(0).iter().zip([0.6, 0.3, 0.1]) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn observation_at_mean_wins_and_identical_models_are_uniform() {
        let means = Matrix::from_rows(&[[0.0, 1.0], [2.0, -1.0], [5.0, 5.0]]).unwrap();
        let model = DiagGaussian::new(means.clone(), Matrix::filled(3, 2, 0.5)).unwrap();
        let ll = model.log_likelihoods(&means).unwrap();
        let p = posteriors_from_log_likelihoods(&ll).unwrap();
        for s in 0..3 {
            let best = (0..3).max_by(|&a, &b| p.get(s, a).total_cmp(&p.get(s, b))).unwrap();
            assert_eq!(best, s);
        }
        let same = DiagGaussian::new(Matrix::filled(4, 2, 1.0), Matrix::filled(4, 2, 2.0)).unwrap();
        let p = posteriors_from_log_likelihoods(&same.log_likelihoods(&means).unwrap()).unwrap();
        assert!(p.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-12));
        assert!(model.log_likelihoods(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn concatenated_model_adds_log_likelihoods() {
        let a = DiagGaussian::new(Matrix::from_rows(&[[0.0], [1.0]]).unwrap(), Matrix::filled(2, 1, 0.3)).unwrap();
        let b = DiagGaussian::new(
            Matrix::from_rows(&[[2.0, 0.5], [1.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[[1.0, 0.2], [0.4, 0.7]]).unwrap(),
        )
        .unwrap();
        let joint = DiagGaussian::concat(&[&a, &b]).unwrap();
        let x = Matrix::from_rows(&[[0.2, 1.5, 0.1]]).unwrap();
        let lj = joint.log_likelihoods(&x).unwrap();
        let la = a.log_likelihoods(&x.column_block(0, 1).unwrap()).unwrap();
        let lb = b.log_likelihoods(&x.column_block(1, 2).unwrap()).unwrap();
        for s in 0..2 {
            assert!((lj.get(0, s) - la.get(0, s) - lb.get(0, s)).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_scale_recovers_true_spread() {
        // Data drawn with four times the modelled variance.
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let means = Matrix::from_rows(&[[0.0], [1.0], [2.5]]).unwrap();
        let model = DiagGaussian::new(means.clone(), Matrix::filled(3, 1, 0.25)).unwrap();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let states: Vec<usize> = (0..6000).map(|i| i % 3).collect();
        let x = Matrix::from_fn(6000, 1, |t, _| means.get(states[t], 0) + noise.sample(&mut rng));
        let c = fit_variance_scale(&model, &[(x, states)]).unwrap();
        assert!((c - 4.0).abs() < 0.4, "{c}");
    }

    #[test]
    fn fit_recovers_moments() {
        let samples = vec![
            Matrix::from_rows(&[[1.0], [3.0]]).unwrap(),
            Matrix::from_rows(&[[2.0], [2.0]]).unwrap(),
        ];
        let m = DiagGaussian::fit(&samples).unwrap();
        assert_eq!(m.means().as_slice(), &[2.0, 2.0]);
        assert_eq!(m.variances().as_slice(), &[1.0, MIN_VARIANCE]);
    }
}
