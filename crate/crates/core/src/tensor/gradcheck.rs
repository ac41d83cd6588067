use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the reverse-mode gradient of a scalar function with central
/// differences `(f(x+h) - f(x-h)) / 2h`, coordinate by coordinate.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::invalid(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let eval = |point: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.leaf(point.clone())?;
        let out = f(&mut tape, xv)?;
        scalar(&tape, out)
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone())?;
    let out = f(&mut tape, xv)?;
    scalar(&tape, out)?;
    let analytic = tape.backward(out)?.get_or_zeros(&tape, xv);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.as_mut_slice()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.as_slice()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.shape() != (1, 1) {
        return Err(Error::shape("grad_check", format!("function must be scalar, got {:?}", t.shape())));
    }
    Ok(t.get(0, 0))
}
