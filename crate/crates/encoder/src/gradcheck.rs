//! Analytic gradients against central finite differences.

use egomem_core::pose::EgoPoseSequence;
use egomem_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EncoderConfig;
use crate::model::{build_graph, Mode, Params};
use crate::tape::{Mat, Tape, Var};
use crate::weights::EncoderWeights;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Tensor index, row and column of the worst entry.
    pub worst: Option<(usize, usize, usize)>,
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn sum_squares(m: &Mat<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Checks `d/dθ sum(graph(θ)^2)` for any graph built from `params` leaves.
///
/// `samples` entries per tensor are drawn with a generator seeded by `seed`;
/// tensors with no more entries than `samples` are checked exhaustively.
pub fn gradcheck_graph<F>(
    params: &[Mat<f64>],
    graph: F,
    samples: usize,
    seed: u64,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[Mat<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = graph(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = run(params)?;
    let seed_grad = tape.value(out) * 2.0;
    let grads = tape.backward(out, seed_grad);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = params.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (i, var) in vars.iter().enumerate() {
        let (rows, cols) = params[i].shape();
        let entries: Vec<(usize, usize)> = if rows * cols <= samples {
            (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .collect()
        } else {
            (0..samples)
                .map(|_| (rng.random_range(0..rows), rng.random_range(0..cols)))
                .collect()
        };
        for (r, c) in entries {
            let analytic = grads[var.index()].as_ref().map_or(0.0, |g| g[(r, c)]);
            let base = values[i][(r, c)];
            values[i][(r, c)] = base + FD_STEP;
            let (t, _, o) = run(&values)?;
            let plus = sum_squares(t.value(o));
            values[i][(r, c)] = base - FD_STEP;
            let (t, _, o) = run(&values)?;
            let minus = sum_squares(t.value(o));
            values[i][(r, c)] = base;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::NonFiniteActivation {
                    layer: format!("gradient of tensor {i}"),
                });
            }
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((i, r, c));
            }
        }
    }
    Ok(report)
}

/// Gradient check of the full encoder in eval mode with loss `sum(tokens^2)`.
pub fn gradcheck(
    cfg: &EncoderConfig,
    weights: &EncoderWeights<f64>,
    ego: &EgoPoseSequence,
    samples: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    weights.check(cfg)?;
    let params: Vec<Mat<f64>> = weights.iter().map(|(_, m)| m.clone()).collect();
    gradcheck_graph(
        &params,
        |t, vars| {
            let p = Params::new(weights, vars)?;
            build_graph(t, &p, cfg, ego, Mode::Eval)
        },
        samples,
        seed,
    )
}
