use candle_core::{DType, Tensor, D};

use crate::error::{bail_shape, bail_validation, Result};
use crate::motion::NUM_EMOTIONS;

use super::EmotionEmbedding;

/// Probability floor applied before the logarithm in [`loss_cross_entropy`].
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// `||a - b||^2` between two embeddings.
pub fn consistency_distance(a: &EmotionEmbedding, b: &EmotionEmbedding) -> Result<f64> {
    if a.len() != b.len() {
        bail_shape!("embedding lengths {} and {} differ", a.len(), b.len());
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum())
}

/// Mean over rows of `||a_i - b_i||^2` for `(P, D_e)` tensors.
pub fn loss_consistency(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        bail_shape!("consistency inputs {:?} and {:?} differ", a.dims(), b.dims());
    }
    Ok((a - b)?.sqr()?.sum(D::Minus1)?.mean_all()?)
}

fn one_hot(labels: &[usize], classes: usize, like: &Tensor) -> Result<Tensor> {
    let mut data = vec![0.0f64; labels.len() * classes];
    for (i, &c) in labels.iter().enumerate() {
        if c >= classes {
            bail_validation!("label {c} out of range 0..{classes}");
        }
        data[i * classes + c] = 1.0;
    }
    Ok(Tensor::from_vec(data, (labels.len(), classes), like.device())?.to_dtype(like.dtype())?)
}

/// Cross-entropy of `(B, 7)` probability rows against integer labels. The
/// second value counts rows whose true-class probability hit the floor.
pub fn loss_cross_entropy(probabilities: &Tensor, labels: &[usize]) -> Result<(Tensor, usize)> {
    let (b, c) = probabilities.dims2()?;
    if b != labels.len() || c != NUM_EMOTIONS {
        bail_shape!("probabilities {b}x{c} do not match {} labels over {NUM_EMOTIONS} classes", labels.len());
    }
    let y = one_hot(labels, c, probabilities)?;
    let picked = (probabilities * &y)?.sum(D::Minus1)?;
    let clamped = picked
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?
        .iter()
        .filter(|p| **p < PROBABILITY_FLOOR)
        .count();
    if clamped > 0 {
        log::warn!("{clamped} true-class probabilities clamped to {PROBABILITY_FLOOR}");
    }
    let floor = Tensor::full(PROBABILITY_FLOOR, b, probabilities.device())?.to_dtype(probabilities.dtype())?;
    let loss = picked.maximum(&floor)?.log()?.mean_all()?.neg()?;
    Ok((loss, clamped))
}

/// Cross-entropy computed stably from `(B, 7)` logits.
pub fn cross_entropy_from_logits(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, c) = logits.dims2()?;
    if b != labels.len() {
        bail_shape!("{b} logit rows for {} labels", labels.len());
    }
    let y = one_hot(labels, c, logits)?;
    let log_p = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok((log_p * y)?.sum(D::Minus1)?.mean_all()?.neg()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;
    use candle_core::{Device, Var};

    fn scalar(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn consistency_examples() {
        let a = EmotionEmbedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        let b = EmotionEmbedding::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(consistency_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(consistency_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(consistency_distance(&b, &a).unwrap(), 2.0);
        let c = EmotionEmbedding::new(vec![0.0; 2]).unwrap();
        assert!(consistency_distance(&a, &c).is_err());
    }

    #[test]
    fn consistency_gradient_is_twice_difference() {
        let dev = Device::Cpu;
        let ei = Var::from_tensor(&Tensor::new(&[[0.3f64, -1.2, 0.7]], &dev).unwrap()).unwrap();
        let ej = Tensor::new(&[[0.1f64, 0.4, -0.5]], &dev).unwrap();
        let loss = loss_consistency(ei.as_tensor(), &ej).unwrap();
        let g = loss.backward().unwrap();
        let grad = g.get(ei.as_tensor()).unwrap().to_vec2::<f64>().unwrap();
        let expect = [0.4, -3.2, 2.4];
        for (a, b) in grad[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let vars = vec![("e_i".to_string(), ei.clone())];
        let report = check_gradients(&vars, || loss_consistency(ei.as_tensor(), &ej), 1e-5, 8, 0).unwrap();
        assert!(report.worst_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn cross_entropy_examples() {
        let dev = Device::Cpu;
        let mut onehot = vec![0.0f64; 7];
        onehot[2] = 1.0;
        let p = Tensor::from_vec(onehot, (1, 7), &dev).unwrap();
        let (l, clamped) = loss_cross_entropy(&p, &[2]).unwrap();
        assert!(scalar(&l) <= 1e-11 && clamped == 0);

        let u = Tensor::full(1.0f64 / 7.0, (1, 7), &dev).unwrap();
        let (l, _) = loss_cross_entropy(&u, &[4]).unwrap();
        assert!((scalar(&l) - 7f64.ln()).abs() < 1e-12);

        let mut rows = vec![0.5 / 6.0; 7];
        rows[0] = 0.5;
        let mut second = vec![0.75 / 6.0; 7];
        second[3] = 0.25;
        rows.extend(second);
        let p = Tensor::from_vec(rows, (2, 7), &dev).unwrap();
        let (l, _) = loss_cross_entropy(&p, &[0, 3]).unwrap();
        assert!((scalar(&l) - 1.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_clamps_and_validates() {
        let dev = Device::Cpu;
        let mut row = vec![0.0f64; 7];
        row[1] = 1.0;
        let p = Tensor::from_vec(row, (1, 7), &dev).unwrap();
        let (l, clamped) = loss_cross_entropy(&p, &[0]).unwrap();
        assert_eq!(clamped, 1);
        assert!((scalar(&l) + PROBABILITY_FLOOR.ln()).abs() < 1e-9);
        assert!(loss_cross_entropy(&p, &[7]).is_err());
    }

    #[test]
    fn logits_and_probability_forms_agree() {
        let dev = Device::Cpu;
        let logits = Tensor::new(&[[0.2f64, -1.0, 0.5, 2.0, 0.0, 0.1, -0.3]], &dev).unwrap();
        let p = candle_nn::ops::softmax(&logits, D::Minus1).unwrap();
        let a = scalar(&loss_cross_entropy(&p, &[3]).unwrap().0);
        let b = scalar(&cross_entropy_from_logits(&logits, &[3]).unwrap());
        assert!((a - b).abs() < 1e-12);
    }
}
