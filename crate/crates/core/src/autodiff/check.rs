//! Central finite-difference gradient checking (64-bit).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::param::{ParamId, ParamStore};
use crate::autodiff::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Which coordinates of each parameter to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coordinates {
    All,
    /// At most `per_param` coordinates per parameter, drawn without replacement.
    Sample { per_param: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a relu/max-pool kink.
    pub skipped_kinks: usize,
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: (f64, f64),
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares backpropagated gradients of the scalar returned by `f` with
/// central differences `(f(θ+h) - f(θ-h)) / 2h`.
///
/// `f` must build a fresh tape from the parameters it is given and return the
/// scalar node. With `skip_kinks`, coordinates whose ±h evaluations take a
/// different relu/max-pool branch than the base point are not scored.
pub fn gradient_check<F>(
    params: &mut ParamStore<f64>,
    step: f64,
    coords: Coordinates,
    skip_kinks: bool,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<(Tape<f64>, NodeId)>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step {step} must be > 0")));
    }
    params.zero_grads();
    let (tape, out) = f(params)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Graph("gradient check needs a scalar function".into()));
    }
    let base_sig = tape.branch_signature();
    tape.backward(out, params)?;

    let mut rng = match coords {
        Coordinates::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Coordinates::All => None,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0, worst: None, worst_values: (0.0, 0.0) };

    for pid in ids {
        let len = params.value(pid).len();
        let picks: Vec<usize> = match (coords, rng.as_mut()) {
            (Coordinates::Sample { per_param, .. }, Some(r)) if per_param < len => {
                let mut v = index::sample(r, len, per_param).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        for i in picks {
            let analytic = params.grad(pid).data()[i];
            let orig = params.value(pid).data()[i];
            let mut eval = |v: f64, params: &mut ParamStore<f64>| -> Result<(f64, u64)> {
                params.get_mut(pid).value.data_mut()[i] = v;
                let (t, o) = f(params)?;
                Ok((t.value(o).data()[0], t.branch_signature()))
            };
            let (fp, sp) = eval(orig + step, params)?;
            let (fm, sm) = eval(orig - step, params)?;
            params.get_mut(pid).value.data_mut()[i] = orig;
            if skip_kinks && (sp != base_sig || sm != base_sig) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.get(pid).name.clone(), i));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::new(vec![3], vec![0.3, -1.2, 2.0]).unwrap()).unwrap();
        let coeffs = Tensor::new(vec![3], vec![1.5, -0.25, 4.0]).unwrap();
        let report = gradient_check(&mut store, 1e-5, Coordinates::All, false, |p| {
            let mut t = Tape::new();
            let n = t.param(p, w);
            let s = t.weighted_sum(n, coeffs.clone())?;
            Ok((t, s))
        })
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn rejects_bad_step_and_vector_output() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::zeros(vec![2]).unwrap()).unwrap();
        let f = |p: &ParamStore<f64>| {
            let mut t = Tape::new();
            let n = t.param(p, w);
            Ok((t, n))
        };
        assert!(gradient_check(&mut store, 0.0, Coordinates::All, false, f).is_err());
        assert!(gradient_check(&mut store, 1e-5, Coordinates::All, false, f).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-15);
    }
}
