use crate::error::{bail_shape, bail_validation, Result};
use crate::motion::MotionSequence;
use crate::prior::EmotionEncoder;

/// Anything that assigns an emotion class to each motion.
pub trait EmotionClassifier {
    fn predict(&self, motions: &[&MotionSequence]) -> Result<Vec<usize>>;
}

impl EmotionClassifier for EmotionEncoder {
    fn predict(&self, motions: &[&MotionSequence]) -> Result<Vec<usize>> {
        self.predict_batch(motions)
    }
}

/// Fraction of predictions equal to their target.
pub fn accuracy_from_predictions(predicted: &[usize], targets: &[usize]) -> Result<f64> {
    if predicted.len() != targets.len() {
        bail_shape!("{} predictions for {} targets", predicted.len(), targets.len());
    }
    if targets.is_empty() {
        bail_validation!("accuracy needs at least one sample");
    }
    let hits = predicted.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / targets.len() as f64)
}

/// `T / N` with `T` the generated motions classified as their target class.
pub fn accuracy<C: EmotionClassifier + ?Sized>(
    generated: &[&MotionSequence],
    targets: &[usize],
    classifier: &C,
) -> Result<f64> {
    if generated.len() != targets.len() {
        bail_shape!("{} motions for {} targets", generated.len(), targets.len());
    }
    accuracy_from_predictions(&classifier.predict(generated)?, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{EmotionLabel, NUM_EMOTIONS};
    use crate::synth::generate_pair;
    use proptest::prelude::*;

    struct Constant(usize);

    impl EmotionClassifier for Constant {
        fn predict(&self, motions: &[&MotionSequence]) -> Result<Vec<usize>> {
            Ok(vec![self.0; motions.len()])
        }
    }

    #[test]
    fn forty_three_of_fifty() {
        let targets = vec![1usize; 50];
        let mut predicted = vec![1usize; 50];
        for p in predicted.iter_mut().take(7) {
            *p = 2;
        }
        assert_eq!(accuracy_from_predictions(&predicted, &targets).unwrap(), 0.86);
        assert_eq!(accuracy_from_predictions(&targets, &targets).unwrap(), 1.0);
        assert!(accuracy_from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn constant_classifier_on_balanced_targets() {
        let m = generate_pair(EmotionLabel::Fear, 16, 16.0, 0).unwrap().reactor;
        let motions: Vec<&MotionSequence> = (0..70).map(|_| &m).collect();
        let targets: Vec<usize> = (0..70).map(|i| i % NUM_EMOTIONS).collect();
        let acc = accuracy(&motions, &targets, &Constant(3)).unwrap();
        assert!((acc - 1.0 / 7.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn invariant_to_row_order(pairs in proptest::collection::vec((0usize..7, 0usize..7), 1..60), rot in 0usize..60) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let k = rot % p.len();
            let mut p2 = p.clone();
            let mut t2 = t.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            p2.reverse();
            t2.reverse();
            prop_assert_eq!(accuracy_from_predictions(&p, &t).unwrap(), accuracy_from_predictions(&p2, &t2).unwrap());
        }
    }
}
