//! Per-frame oracle stream weights that minimise the fused cross-entropy
//! against a known alignment.

use serde::{Deserialize, Serialize};

use super::combine::dynamic_fuse;
use crate::error::{Error, Result};
use crate::types::{AlignmentTarget, Matrix, StreamId, StreamWeights};

/// Two readings of the per-frame objective.
///
/// * `Linear`: `-sum_i lambda_i log p_i(s*)`, which is linear in the weights
///   so the optimum is a vertex of the simplex.
/// * `Renormalized`: the weighted log-linear combination is renormalised over
///   states before the cross-entropy is taken,
///   `-sum_i lambda_i a_i + logsumexp_s sum_i lambda_i log p_i(s)`,
///   which is convex and generally has interior optima.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Linear,
    Renormalized,
}

/// Stopping rule of the exponentiated-gradient solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20_000,
        }
    }
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One frame of the renormalised problem: `rows[i]` is stream `i`'s log
/// posterior row and `target` the reference state.
#[derive(Clone, Debug)]
pub struct FrameProblem<'a> {
    pub rows: Vec<&'a [f64]>,
    pub target: usize,
}

impl FrameProblem<'_> {
    fn fused(&self, lambda: &[f64]) -> Vec<f64> {
        let s = self.rows[0].len();
        (0..s)
            .map(|k| lambda.iter().zip(&self.rows).map(|(w, r)| w * r[k]).sum())
            .collect()
    }

    pub fn objective(&self, mode: OracleMode, lambda: &[f64]) -> f64 {
        let fused = self.fused(lambda);
        match mode {
            OracleMode::Linear => -fused[self.target],
            OracleMode::Renormalized => -fused[self.target] + logsumexp(&fused),
        }
    }

    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let fused = self.fused(lambda);
        let z = logsumexp(&fused);
        let q: Vec<f64> = fused.iter().map(|f| (f - z).exp()).collect();
        self.rows
            .iter()
            .map(|r| -r[self.target] + q.iter().zip(r.iter()).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Covariance of the stream log-posteriors under the fused distribution,
    /// which is the Hessian of the renormalised objective.
    fn hessian(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        let fused = self.fused(lambda);
        let z = logsumexp(&fused);
        let q: Vec<f64> = fused.iter().map(|f| (f - z).exp()).collect();
        let mean: Vec<f64> = self
            .rows
            .iter()
            .map(|r| q.iter().zip(r.iter()).map(|(a, b)| a * b).sum())
            .collect();
        let m = self.rows.len();
        let mut h = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let c: f64 = q
                    .iter()
                    .enumerate()
                    .map(|(k, qk)| qk * (self.rows[i][k] - mean[i]) * (self.rows[j][k] - mean[j]))
                    .sum();
                h[i][j] = c;
                h[j][i] = c;
            }
        }
        h
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Solves a symmetric positive semi-definite system of size 1 or 2.
fn solve_small(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    match g.len() {
        1 => (h[0][0] > 1e-300).then(|| vec![g[0] / h[0][0]]),
        2 => {
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if det.abs() <= 1e-300 {
                return None;
            }
            Some(vec![
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ])
        }
        _ => None,
    }
}

/// Damped Newton iteration restricted to the face of the simplex spanned by
/// `support`. Returns `None` when the iterate would leave the face.
fn newton_on_face(problem: &FrameProblem<'_>, support: &[usize], start: &[f64]) -> Option<Vec<f64>> {
    let m = start.len();
    let mut lambda = vec![0.0; m];
    let total: f64 = support.iter().map(|&i| start[i]).sum();
    for &i in support {
        lambda[i] = start[i] / total;
    }
    if support.len() < 2 {
        return Some(lambda);
    }
    let (k, free) = (support[0], &support[1..]);
    let mut f = problem.objective(OracleMode::Renormalized, &lambda);
    for _ in 0..60 {
        let g = problem.gradient(&lambda);
        let h = problem.hessian(&lambda);
        let rg: Vec<f64> = free.iter().map(|&j| g[j] - g[k]).collect();
        if rg.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-14 {
            break;
        }
        let rh: Vec<Vec<f64>> = free
            .iter()
            .map(|&a| free.iter().map(|&b| h[a][b] - h[a][k] - h[k][b] + h[k][k]).collect())
            .collect();
        let dir = solve_small(&rh, &rg)?;
        let mut step = 1.0;
        loop {
            let mut cand = lambda.clone();
            for (&j, d) in free.iter().zip(&dir) {
                cand[j] -= step * d;
                cand[k] += step * d;
            }
            if support.iter().any(|&i| cand[i] < 0.0) {
                return None;
            }
            let fc = problem.objective(OracleMode::Renormalized, &cand);
            if fc <= f {
                let done = f - fc < 1e-16;
                lambda = cand;
                f = fc;
                if done {
                    return Some(lambda);
                }
                break;
            }
            step *= 0.5;
            if step < 1e-10 {
                return Some(lambda);
            }
        }
    }
    Some(lambda)
}

fn gradient_mapping_norm(lambda: &[f64], grad: &[f64]) -> f64 {
    let step: Vec<f64> = lambda.iter().zip(grad).map(|(l, g)| l - g).collect();
    project_to_simplex(&step)
        .iter()
        .zip(lambda)
        .map(|(p, l)| (l - p).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn linear_weights(problem: &FrameProblem<'_>) -> Vec<f64> {
    let a: Vec<f64> = problem.rows.iter().map(|r| r[problem.target]).collect();
    let best = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = a.iter().filter(|&&x| x == best).count() as f64;
    a.iter().map(|&x| if x == best { 1.0 / ties } else { 0.0 }).collect()
}

/// Exponentiated-gradient descent from the uniform point with a backtracking
/// step size, stopped when the projected-gradient mapping falls below
/// `opts.tolerance`. Every ten steps a Newton polish on the face spanned by
/// the current support is tried and kept if it meets the stopping rule. A
/// vertex is returned instead if it scores clearly lower.
fn renormalized_weights(problem: &FrameProblem<'_>, opts: SolverOptions) -> Vec<f64> {
    let m = problem.rows.len();
    let mut lambda = vec![1.0 / m as f64; m];
    let mut f = problem.objective(OracleMode::Renormalized, &lambda);
    let mut eta = 1.0;
    for iter in 0..opts.max_iterations {
        let g = problem.gradient(&lambda);
        if gradient_mapping_norm(&lambda, &g) < opts.tolerance {
            break;
        }
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let accepted = loop {
            let mut cand: Vec<f64> = lambda
                .iter()
                .zip(&g)
                .map(|(l, gi)| l * (-eta * (gi - gmin)).exp())
                .collect();
            let z: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|c| *c /= z);
            let fc = problem.objective(OracleMode::Renormalized, &cand);
            if fc <= f {
                lambda = cand;
                f = fc;
                eta = (eta * 1.5).min(1e6);
                break true;
            }
            eta *= 0.5;
            if eta < 1e-14 {
                break false;
            }
        };
        if !accepted {
            break;
        }
        if iter % 10 == 9 {
            let top = lambda.iter().copied().fold(0.0, f64::max);
            let support: Vec<usize> = (0..m).filter(|&i| lambda[i] > 1e-6 * top).collect();
            if let Some(cand) = newton_on_face(problem, &support, &lambda) {
                let fc = problem.objective(OracleMode::Renormalized, &cand);
                if fc <= f && gradient_mapping_norm(&cand, &problem.gradient(&cand)) < opts.tolerance {
                    lambda = cand;
                    f = fc;
                    break;
                }
            }
        }
    }
    for i in 0..m {
        let mut vertex = vec![0.0; m];
        vertex[i] = 1.0;
        let fv = problem.objective(OracleMode::Renormalized, &vertex);
        if fv < f - 1e-12 {
            f = fv;
            lambda = vertex;
        }
    }
    lambda
}

pub fn frame_oracle(problem: &FrameProblem<'_>, mode: OracleMode, opts: SolverOptions) -> Vec<f64> {
    match mode {
        OracleMode::Linear => linear_weights(problem),
        OracleMode::Renormalized => renormalized_weights(problem, opts),
    }
}

fn check(logs: &[Matrix], target: &AlignmentTarget) -> Result<()> {
    if logs.len() != StreamId::COUNT || logs.iter().any(|l| l.shape() != logs[0].shape()) {
        return Err(Error::Shape(
            "oracle weighting needs three equally shaped streams".into(),
        ));
    }
    if target.len() != logs[0].rows() {
        return Err(Error::Shape(format!(
            "alignment has {} frames, posteriors {}",
            target.len(),
            logs[0].rows()
        )));
    }
    if target.states().iter().any(|&s| s >= logs[0].cols()) {
        return Err(Error::InvalidInput(
            "alignment state outside the posterior range".into(),
        ));
    }
    Ok(())
}

/// Frame-wise oracle weights on the simplex.
pub fn oracle_weights(logs: &[Matrix], target: &AlignmentTarget, mode: OracleMode) -> Result<StreamWeights> {
    oracle_weights_with(logs, target, mode, SolverOptions::default())
}

pub fn oracle_weights_with(
    logs: &[Matrix],
    target: &AlignmentTarget,
    mode: OracleMode,
    opts: SolverOptions,
) -> Result<StreamWeights> {
    check(logs, target)?;
    let t_len = target.len();
    let mut w = Matrix::zeros(t_len, StreamId::COUNT);
    for (t, &s) in target.states().iter().enumerate() {
        let problem = FrameProblem {
            rows: logs.iter().map(|l| l.row(t)).collect(),
            target: s,
        };
        w.row_mut(t).copy_from_slice(&frame_oracle(&problem, mode, opts));
    }
    StreamWeights::on_simplex(w)
}

/// Mean per-frame cross-entropy of the weighted combination under `mode`.
pub fn fused_cross_entropy(
    logs: &[Matrix],
    weights: &StreamWeights,
    target: &AlignmentTarget,
    mode: OracleMode,
) -> Result<f64> {
    check(logs, target)?;
    let fused = dynamic_fuse(logs, weights)?;
    let f = fused.frames();
    let total: f64 = target
        .states()
        .iter()
        .enumerate()
        .map(|(t, &s)| match mode {
            OracleMode::Linear => -f.get(t, s),
            OracleMode::Renormalized => -f.get(t, s) + logsumexp(f.row(t)),
        })
        .sum();
    Ok(total / target.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_rows(rows: &[[f64; 3]]) -> Matrix {
        Matrix::from_fn(rows.len(), 3, |t, s| rows[t][s].ln())
    }

    #[test]
    fn dominant_stream_gets_full_weight() {
        let a = ln_rows(&[[0.9, 0.05, 0.05], [0.05, 0.9, 0.05]]);
        let b = ln_rows(&[[0.4, 0.3, 0.3], [0.3, 0.4, 0.3]]);
        let c = ln_rows(&[[0.2, 0.4, 0.4], [0.5, 0.2, 0.3]]);
        let target = AlignmentTarget::new(vec![0, 1], 3).unwrap();
        let w = oracle_weights(&[a, b, c], &target, OracleMode::Linear).unwrap();
        assert_eq!(w.frame(0), &[1.0, 0.0, 0.0]);
        assert_eq!(w.frame(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_ties_share_weight() {
        let a = ln_rows(&[[0.5, 0.25, 0.25]]);
        let target = AlignmentTarget::new(vec![0], 3).unwrap();
        let w = oracle_weights(
            &[a.clone(), a.clone(), ln_rows(&[[0.1, 0.8, 0.1]])],
            &target,
            OracleMode::Linear,
        )
        .unwrap();
        assert_eq!(w.frame(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn identical_streams_stay_uniform() {
        let a = ln_rows(&[[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]]);
        let target = AlignmentTarget::new(vec![1, 2], 3).unwrap();
        let w = oracle_weights(&[a.clone(), a.clone(), a], &target, OracleMode::Renormalized).unwrap();
        for t in 0..2 {
            for v in w.frame(t) {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_stream_frame_matches_grid_search() {
        // The third stream is made useless so the problem is effectively one-dimensional.
        let a = [0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let b = [0.2f64.ln(), 0.1f64.ln(), 0.7f64.ln()];
        let c = [1e-8f64.ln(), 0.5f64.ln(), 0.5f64.ln()];
        let problem = FrameProblem {
            rows: vec![&a, &b, &c],
            target: 0,
        };
        let w = frame_oracle(&problem, OracleMode::Renormalized, SolverOptions::default());
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            let f = problem.objective(OracleMode::Renormalized, &[x, 1.0 - x, 0.0]);
            if f < best.0 {
                best = (f, x);
            }
        }
        assert!((w[0] - best.1).abs() < 1e-3, "{w:?} vs {}", best.1);
        assert!(w[2] < 1e-6);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        let p = project_to_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn missing_or_mismatched_alignment() {
        let a = ln_rows(&[[0.6, 0.3, 0.1]]);
        let target = AlignmentTarget::new(vec![0, 1], 3).unwrap();
        assert!(oracle_weights(&[a.clone(), a.clone(), a], &target, OracleMode::Linear).is_err());
    }
}
