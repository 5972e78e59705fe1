//! Central finite-difference verification of the hand-written backward passes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::layer::Mode;
use crate::matrix::{dot, Matrix};
use crate::network::Network;

/// Denominator floor for the relative error, so that entries whose true
/// gradient is zero are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_entry: String,
    pub entries_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn scalar_loss(net: &Network, input: &Matrix, projection: &Matrix, mode: Mode, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, _) = net.forward_with_tape(input, mode, &mut rng)?;
    Ok(dot(y.as_slice(), projection.as_slice()))
}

/// Compares analytic gradients of `L = sum(projection * net(input))` with
/// central differences of step `h`, over every parameter and every input
/// entry. Dropout masks are reproduced from `seed` on every evaluation.
pub fn check_gradients(
    net: &Network,
    input: &Matrix,
    projection: &Matrix,
    mode: Mode,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport> {
    let mut analytic = net.clone();
    analytic.zero_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, tape) = analytic.forward_with_tape(input, mode, &mut rng)?;
    let input_grad = analytic.backward(&tape, projection)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_entry: String::new(),
        entries_checked: 0,
    };
    let mut record = |a: f64, n: f64, label: &dyn Fn() -> String| {
        let e = relative_error(a, n);
        report.entries_checked += 1;
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_entry = format!("{} (analytic {a:e}, numeric {n:e})", label());
        }
    };

    let grads: Vec<Vec<f64>> = analytic.params().iter().map(|p| p.grad.clone()).collect();
    let mut probe = net.clone();
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.params()[pi].value[k];
            probe.params_mut()[pi].value[k] = orig + h;
            let plus = scalar_loss(&probe, input, projection, mode, seed)?;
            probe.params_mut()[pi].value[k] = orig - h;
            let minus = scalar_loss(&probe, input, projection, mode, seed)?;
            probe.params_mut()[pi].value[k] = orig;
            record(g[k], (plus - minus) / (2.0 * h), &|| format!("param {pi}[{k}]"));
        }
    }

    let mut x = input.clone();
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + h;
        let plus = scalar_loss(net, &x, projection, mode, seed)?;
        x.as_mut_slice()[k] = orig - h;
        let minus = scalar_loss(net, &x, projection, mode, seed)?;
        x.as_mut_slice()[k] = orig;
        record(input_grad.as_slice()[k], (plus - minus) / (2.0 * h), &|| {
            format!("input[{k}]")
        });
    }
    Ok(report)
}
