use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients with finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over the coordinates that were compared.
    pub max_rel_err: f64,
    /// `(input, flat index)` of the coordinate with `max_rel_err`.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates skipped because the one-sided slopes disagree (a kink of
    /// relu/max/clamp within `eps`).
    pub kinks: Vec<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Denominator floor for the relative error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| tape.param(format!("x{i}"), t.clone()))
        .collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.scalar(out))
}

/// Checks the gradient of the scalar function `f` at `inputs` by central
/// differences with step `eps`.
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| tape.param(format!("x{i}"), t.clone()))
        .collect();
    let out = f(&mut tape, &vars)?;
    let f0 = tape.scalar(out);
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        kinks: Vec::new(),
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let x0 = inputs[i].data()[j];
            probe[i].data_mut()[j] = x0 + eps;
            let fp = eval(&f, &probe)?;
            probe[i].data_mut()[j] = x0 - eps;
            let fm = eval(&f, &probe)?;
            probe[i].data_mut()[j] = x0;

            let fwd = (fp - f0) / eps;
            let bwd = (f0 - fm) / eps;
            let scale = fwd.abs().max(bwd.abs()).max(1.0);
            if (fwd - bwd).abs() > 1e-3 * scale + 100.0 * eps * scale {
                report.kinks.push((i, j));
                continue;
            }
            let num = (fp - fm) / (2.0 * eps);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(REL_ERR_FLOOR);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
