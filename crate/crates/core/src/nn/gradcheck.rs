//! Central finite-difference gradient checking.

use super::tape::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Finite-difference step on 64-bit floats.
pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub index: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_rel_err: f64,
    pub rel_tol: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.rel_tol
    }
}

fn evaluate<F>(f: &F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.shape(out) != (1, 1) {
        return Err(Error::Shape("gradcheck function must return a 1x1 node".into()));
    }
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("gradcheck function returned {v}")));
    }
    Ok(v)
}

/// Compares the tape gradient of the scalar `f` with central differences
/// `(f(x+h) - f(x-h)) / 2h` for every entry of every parameter block.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn gradcheck<F>(f: F, params: &[Matrix], rel_tol: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite("gradcheck base value".into()));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| grads.get_or_zeros(*v, p.dim()))
        .collect();
    if analytic.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("analytic gradient".into()));
    }

    let mut work: Vec<Matrix> = params.to_vec();
    let mut blocks = Vec::with_capacity(params.len());
    for b in 0..params.len() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let (rows, cols) = params[b].dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = work[b][[r, c]];
                work[b][[r, c]] = orig + FD_STEP;
                let plus = evaluate(&f, &work)?;
                work[b][[r, c]] = orig - FD_STEP;
                let minus = evaluate(&f, &work)?;
                work[b][[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let a = analytic[b][[r, c]];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
                max_rel = max_rel.max(rel);
                max_abs = max_abs.max(abs);
            }
        }
        blocks.push(BlockReport {
            index: b,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    let max_rel_err = blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        blocks,
        max_rel_err,
        rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn square_at_three() {
        let report = gradcheck(
            |t, v| {
                let sq = t.square(v[0]);
                Ok(t.sum(sq))
            },
            &[array![[3.0]]],
            1e-4,
        )
        .unwrap();
        assert!(report.passed());
        assert!(report.blocks[0].max_abs_err < 1e-6);
    }

    #[test]
    fn non_finite_function_is_an_error() {
        let r = gradcheck(
            |t, v| {
                let l = t.ln(v[0]);
                Ok(t.sum(l))
            },
            &[array![[-1.0]]],
            1e-4,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
