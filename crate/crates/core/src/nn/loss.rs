//! Losses and the Gumbel-softmax relaxation.

use rand::Rng;

use super::tape::{Matrix, Segments, Tape, Var};
use crate::error::{Error, Result};

/// `Σ_i (1 - ŷ_i / y_i)²`.
pub fn msre_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Shape(format!(
            "msre: prediction has {} entries, target {}",
            y_hat.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "msre target {bad} is not strictly positive"
        )));
    }
    Ok(y_hat.iter().zip(y).map(|(p, t)| (1.0 - p / t).powi(2)).sum())
}

/// Cross-entropy of one logit vector against a class label.
pub fn ce_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Sum of per-head cross-entropies.
pub fn ce_loss_multi_head(heads: &[&[f64]], labels: &[usize]) -> Result<f64> {
    if heads.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} heads but {} labels",
            heads.len(),
            labels.len()
        )));
    }
    heads.iter().zip(labels).map(|(h, &l)| ce_loss(h, l)).sum()
}

/// Batched multi-head cross-entropy on a tape: log-softmax within each
/// segment, mean over rows, summed over heads.
pub fn cross_entropy_heads(
    tape: &mut Tape,
    logits: Var,
    segs: &Segments,
    labels: &[Vec<usize>],
) -> Result<Var> {
    if labels.len() != segs.len() {
        return Err(Error::Shape(format!(
            "{} heads but {} label columns",
            segs.len(),
            labels.len()
        )));
    }
    let logp = tape.log_softmax(logits, segs.clone())?;
    let mut total: Option<Var> = None;
    for (&(a, b), head_labels) in segs.iter().zip(labels) {
        let part = tape.slice_cols(logp, a, b)?;
        let nll = tape.nll(part, head_labels.clone())?;
        total = Some(match total {
            Some(t) => tape.add(t, nll)?,
            None => nll,
        });
    }
    total.ok_or_else(|| Error::Empty("no heads".into()))
}

/// I.i.d. standard Gumbel noise `-ln(-ln U)`.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize)) -> Matrix {
    Matrix::from_shape_fn(shape, |_| {
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        -(-u.ln()).ln()
    })
}

/// `softmax((logits + g) / τ)` within each segment. With `hard`, the forward
/// value snaps to the per-segment one-hot argmax while gradients flow
/// through the soft sample. `noise = None` means `g = 0`.
pub fn gumbel_softmax(
    tape: &mut Tape,
    logits: Var,
    tau: f64,
    noise: Option<&Matrix>,
    segs: &Segments,
    hard: bool,
) -> Result<Var> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gumbel temperature must be positive, got {tau}"
        )));
    }
    let perturbed = match noise {
        Some(g) => tape.add_const(logits, g)?,
        None => logits,
    };
    let scaled = tape.scale(perturbed, 1.0 / tau);
    let soft = tape.softmax(scaled, segs.clone())?;
    if hard {
        tape.straight_through(soft, segs)
    } else {
        Ok(soft)
    }
}

/// Temperature linearly annealed from `start` to `end` over `total` steps.
pub fn annealed_tau(start: f64, end: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return end;
    }
    let frac = (step as f64 / (total - 1) as f64).min(1.0);
    start + (end - start) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::full_segment;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn msre_examples() {
        assert_eq!(msre_loss(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((msre_loss(&[5.0], &[10.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!((msre_loss(&[18.0, 110.0], &[8.0, 100.0]).unwrap() - 1.5725).abs() < 1e-12);
        assert!(msre_loss(&[1.0], &[0.0]).is_err());
        assert!(msre_loss(&[1.0], &[-2.0]).is_err());
    }

    #[test]
    fn ce_examples() {
        assert!((ce_loss(&[0.0, 0.0, 0.0], 1).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(ce_loss(&[50.0, 0.0, 0.0], 0).unwrap() < 1e-20);
        assert!(ce_loss(&[1.0, 2.0], 2).is_err());
        let heads: [&[f64]; 4] = [&[40.0, 0.0, 0.0], &[0.0, 40.0], &[0.0, 0.0, 40.0], &[40.0, 0.0]];
        assert!(ce_loss_multi_head(&heads, &[0, 1, 2, 0]).unwrap() < 1e-15);
    }

    #[test]
    fn zero_noise_gumbel_is_softmax() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.3, -1.0, 2.0]]);
        let p = gumbel_softmax(&mut t, x, 1.0, None, &full_segment(3), false).unwrap();
        let expect = crate::nn::tape::softmax(&[0.3, -1.0, 2.0]);
        for (a, b) in t.value(p).iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hard_gumbel_is_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let x = t.constant(array![[0.3, -1.0, 2.0, 0.0]]);
        let g = sample_gumbel(&mut rng, (1, 4));
        let p = gumbel_softmax(&mut t, x, 0.7, Some(&g), &full_segment(4), true).unwrap();
        let v = t.value(p);
        assert_eq!(v.sum(), 1.0);
        assert_eq!(v.iter().filter(|&&e| e == 1.0).count(), 1);
    }

    #[test]
    fn lower_temperature_sharpens() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let logits = Matrix::from_shape_fn((1, 5), |_| rng.random_range(-2.0..2.0));
            let g = sample_gumbel(&mut rng, (1, 5));
            let mut t = Tape::new();
            let x = t.constant(logits);
            let cold = gumbel_softmax(&mut t, x, 0.1, Some(&g), &full_segment(5), false).unwrap();
            let hot = gumbel_softmax(&mut t, x, 10.0, Some(&g), &full_segment(5), false).unwrap();
            let max = |v: &Matrix| v.iter().cloned().fold(0.0, f64::max);
            assert!(max(t.value(cold)) >= max(t.value(hot)));
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let mut t = Tape::new();
        let x = t.constant(array![[0.0, 1.0]]);
        assert!(gumbel_softmax(&mut t, x, 0.0, None, &full_segment(2), false).is_err());
        assert!(gumbel_softmax(&mut t, x, -1.0, None, &full_segment(2), false).is_err());
    }

    #[test]
    fn annealing_endpoints() {
        assert_eq!(annealed_tau(5.0, 0.5, 0, 10), 5.0);
        assert_eq!(annealed_tau(5.0, 0.5, 9, 10), 0.5);
        assert_eq!(annealed_tau(5.0, 0.5, 0, 1), 0.5);
    }
}
