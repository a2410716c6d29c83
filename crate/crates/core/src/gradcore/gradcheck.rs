//! Central finite-difference gradient checking in 64-bit arithmetic.

use std::collections::HashMap;

use crate::error::Result;
use crate::gradcore::{ParamSet, Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Denominator floor for the relative error. Below this magnitude a
/// gradient entry is compared in absolute terms.
pub const DEFAULT_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of `loss` against central differences with
/// step `h` for every entry of every tensor in `params`.
///
/// `loss` must register each tensor of `params` on the tape under its own
/// name (see [`Tape::param`]) and return a scalar.
pub fn check_gradients<P, F>(
    params: &mut P,
    h: f64,
    floor: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    P: ParamSet<f64>,
    F: FnMut(&mut Tape<f64>, &P) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, params)?;
    tape.backward(l)?;
    let analytic: HashMap<String, Vec<f64>> = tape
        .param_grads()
        .into_iter()
        .map(|(n, g)| (n, g.into_data()))
        .collect();

    let mut eval = |p: &P| -> Result<f64> {
        let mut tape = Tape::new();
        let l = loss(&mut tape, p)?;
        Ok(tape.value(l).data()[0])
    };

    let layout: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.numel()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for (ti, (name, numel)) in layout.iter().enumerate() {
        for e in 0..*numel {
            let orig = params.named_tensors()[ti].1.data()[e];
            params.named_tensors_mut()[ti].1.data_mut()[e] = orig + h;
            let up = eval(params)?;
            params.named_tensors_mut()[ti].1.data_mut()[e] = orig - h;
            let down = eval(params)?;
            params.named_tensors_mut()[ti].1.data_mut()[e] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(name).map_or(0.0, |g| g[e]);
            let err = relative_error(a, numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), e));
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{NamedTensors, Tensor};

    #[test]
    fn softmax_layer_norm_chain_checks() {
        let mut p = NamedTensors::new(vec![
            (
                "x".into(),
                Tensor::from_fn(3, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6),
            ),
            (
                "w".into(),
                Tensor::from_fn(4, 4, |i, j| ((i + 2 * j) % 3) as f64 * 0.2 - 0.2),
            ),
        ]);
        let weights = Tensor::from_fn(3, 4, |i, j| (i as f64 - j as f64) * 0.37 + 0.1);
        let r = check_gradients(&mut p, DEFAULT_STEP, DEFAULT_FLOOR, |tape, p| {
            let v = p.bind(tape);
            let xw = tape.matmul(v[0], v[1])?;
            let sm = tape.row_softmax(xw)?;
            let ln = tape.layer_norm(sm, 1e-5)?;
            let g = tape.gelu(ln);
            let c = tape.constant(weights.clone());
            let m = tape.mul(g, c)?;
            Ok(tape.sum(m))
        })
        .unwrap();
        assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
        assert_eq!(r.checked, 28);
    }
}
