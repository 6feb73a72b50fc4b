use candle_core::{Device, Tensor, D};
use ndarray::Array3;

use crate::error::{bail_shape, bail_validation, Result};
use crate::motion::{decode_positions, EmotionLabel, FeatureLayout, MotionSequence, SkeletonSpec};
use crate::nn::Ctx;
use crate::prior::{EmotionEmbedding, EmotionEncoder, EmotionPrior};

/// Added under square roots so distances stay differentiable at zero.
const DISTANCE_EPS: f64 = 1e-12;

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        bail_shape!("{what}: {:?} vs {:?}", a.dims(), b.dims());
    }
    Ok(())
}

/// Mean squared error over every entry.
pub fn loss_reconstruction(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(pred, target, "reconstruction")?;
    Ok((pred - target)?.sqr()?.mean_all()?)
}

/// Exact per-frame distances between every actor joint `a` and reactor
/// joint `b`, `(L, N, N)`.
pub fn interaction_distance_map(actor: &MotionSequence, reactor: &MotionSequence) -> Result<Array3<f64>> {
    if actor.skeleton() != reactor.skeleton() {
        bail_validation!("actor and reactor skeletons differ");
    }
    if actor.len() != reactor.len() {
        bail_shape!("actor has {} frames, reactor {}", actor.len(), reactor.len());
    }
    let pa = decode_positions(actor);
    let pr = decode_positions(reactor);
    let (l, n, _) = pa.dim();
    Ok(Array3::from_shape_fn((l, n, n), |(i, a, b)| {
        (0..3)
            .map(|c| (pa[[i, a, c]] - pr[[i, b, c]]).powi(2))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Skeleton-derived index tensors used by the geometric losses.
#[derive(Debug, Clone)]
pub struct Geometry {
    joints: usize,
    children: Tensor,
    parents: Tensor,
    rest_lengths: Vec<f64>,
    feet: Tensor,
    fps: f64,
}

impl Geometry {
    pub fn new(skeleton: &SkeletonSpec, fps: f64) -> Result<Self> {
        let n = skeleton.joint_count();
        let dev = Device::Cpu;
        let children: Vec<u32> = (1..n as u32).collect();
        let parents: Vec<u32> = (1..n).map(|i| skeleton.parent(i).unwrap_or(0) as u32).collect();
        let feet: Vec<u32> = skeleton.foot_joints().iter().map(|f| *f as u32).collect();
        Ok(Self {
            joints: n,
            children: Tensor::new(children.as_slice(), &dev)?,
            parents: Tensor::new(parents.as_slice(), &dev)?,
            rest_lengths: skeleton.rest_bone_lengths(),
            feet: Tensor::new(feet.as_slice(), &dev)?,
            fps,
        })
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    /// `(B, L, N, 3)` joint positions from the `j` channel.
    pub fn positions(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        if d != FeatureLayout::new(self.joints).dim() {
            bail_shape!("feature width {d} does not match {} joints", self.joints);
        }
        Ok(x.narrow(2, 0, 3 * self.joints)?.contiguous()?.reshape((b, l, self.joints, 3))?)
    }

    fn contacts(&self, x: &Tensor) -> Result<Tensor> {
        let d = x.dim(2)?;
        Ok(x.narrow(2, d - 4, 4)?.contiguous()?)
    }
}

fn norm_last(x: &Tensor) -> Result<Tensor> {
    Ok((x.sqr()?.sum(D::Minus1)? + DISTANCE_EPS)?.sqrt()?)
}

/// `(B, L, N, N)` actor-to-reactor joint distances on feature tensors.
pub fn distance_map(geometry: &Geometry, actor: &Tensor, reactor: &Tensor) -> Result<Tensor> {
    check_same(actor, reactor, "distance map")?;
    let pa = geometry.positions(actor)?.unsqueeze(3)?;
    let pr = geometry.positions(reactor)?.unsqueeze(2)?;
    norm_last(&pa.broadcast_sub(&pr)?)
}

/// MSE between the actor-to-predicted and actor-to-true distance maps.
pub fn loss_react(geometry: &Geometry, actor: &Tensor, target: &Tensor, pred: &Tensor) -> Result<Tensor> {
    check_same(target, pred, "react")?;
    let dp = distance_map(geometry, actor, pred)?;
    let dt = distance_map(geometry, actor, target)?;
    Ok((dp - dt)?.sqr()?.mean_all()?)
}

/// Bone-length, acceleration and foot-sliding penalties.
#[derive(Debug, Clone)]
pub struct GeometricLosses {
    pub bone: Tensor,
    pub smooth: Tensor,
    pub foot: Tensor,
}

pub fn loss_geometric(geometry: &Geometry, pred: &Tensor, target: &Tensor) -> Result<GeometricLosses> {
    check_same(pred, target, "geometric")?;
    let p = geometry.positions(pred)?;
    let l = p.dim(1)?;

    let child = p.index_select(&geometry.children, 2)?;
    let parent = p.index_select(&geometry.parents, 2)?;
    let lengths = norm_last(&(child - parent)?)?;
    let rest = Tensor::from_vec(geometry.rest_lengths.clone(), (1, 1, geometry.joints - 1), p.device())?
        .to_dtype(p.dtype())?;
    let bone = lengths.broadcast_sub(&rest)?.sqr()?.mean_all()?;

    let smooth = if l >= 3 {
        let acc = ((p.narrow(1, 2, l - 2)? - (p.narrow(1, 1, l - 2)? * 2.0)?)? + p.narrow(1, 0, l - 2)?)?;
        acc.sqr()?.mean_all()?
    } else {
        Tensor::zeros((), p.dtype(), p.device())?
    };

    let feet = p.index_select(&geometry.feet, 2)?;
    let vel = ((feet.narrow(1, 1, l - 1)? - feet.narrow(1, 0, l - 1)?)? * geometry.fps)?;
    let speed_sq = vel.sqr()?.sum(D::Minus1)?;
    let flags = geometry.contacts(target)?.narrow(1, 0, l - 1)?;
    let foot = (speed_sq * flags)?.mean_all()?;
    Ok(GeometricLosses { bone, smooth, foot })
}

/// Mean over coordinates of `(e - mu_c)^2 / (2 sigma_c^2)` for one embedding.
pub fn emotion_alignment(embedding: &EmotionEmbedding, prior: &EmotionPrior, emotion: EmotionLabel) -> Result<f64> {
    if embedding.len() != prior.dim() {
        bail_shape!("embedding has {} entries, prior {}", embedding.len(), prior.dim());
    }
    let terms = embedding
        .as_slice()
        .iter()
        .zip(prior.mean(emotion))
        .zip(prior.variance(emotion))
        .map(|((e, m), v)| (e - m).powi(2) / (2.0 * v));
    Ok(terms.sum::<f64>() / embedding.len() as f64)
}

fn gather_rows(rows: &[Vec<f64>], classes: &[usize], like: &Tensor) -> Result<Tensor> {
    let dim = rows[0].len();
    let data: Vec<f64> = classes.iter().flat_map(|&c| rows[c].iter().copied()).collect();
    Ok(Tensor::from_vec(data, (classes.len(), dim), like.device())?.to_dtype(like.dtype())?)
}

/// Alignment of predicted reactors (raw features) with the prior class of
/// each batch item, through the frozen encoder.
pub fn loss_emotion(
    encoder: &EmotionEncoder,
    prior: &EmotionPrior,
    pred: &Tensor,
    classes: &[usize],
) -> Result<Tensor> {
    if !encoder.params().is_frozen() {
        bail_validation!("emotion loss requires a frozen encoder");
    }
    if encoder.latent_dim() != prior.dim() {
        bail_shape!("encoder width {} differs from prior width {}", encoder.latent_dim(), prior.dim());
    }
    if classes.len() != pred.dim(0)? || classes.iter().any(|c| *c >= prior.means.len()) {
        bail_validation!("emotion loss needs one valid class per batch item");
    }
    let e = encoder.forward(&pred.to_dtype(encoder.dtype())?, &mut Ctx::eval())?;
    let mu = gather_rows(&prior.means, classes, &e)?;
    let two_var = (gather_rows(&prior.variances, classes, &e)? * 2.0)?;
    Ok((e - mu)?.sqr()?.div(&two_var)?.mean_all()?.to_dtype(pred.dtype())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{encode_sequence, forward_kinematics, ContactThresholds, NUM_EMOTIONS};
    use crate::nn::gradcheck::check_gradients;
    use candle_core::{DType, Var};
    use nalgebra::{Matrix3, Vector3};
    use ndarray::Array3 as A3;
    use std::sync::Arc;

    fn scalar(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    fn single_joint_track(points: &[[f64; 3]]) -> MotionSequence {
        let skel = Arc::new(SkeletonSpec::chain(1, 1.0).unwrap());
        let mut pos = A3::zeros((points.len(), 1, 3));
        for (i, p) in points.iter().enumerate() {
            for c in 0..3 {
                pos[[i, 0, c]] = p[c];
            }
        }
        let rots = vec![Vec::new(); points.len()];
        encode_sequence(pos.view(), &rots, skel, 10.0, ContactThresholds::default()).unwrap()
    }

    fn batch(m: &MotionSequence) -> Tensor {
        crate::nn::stack_rows(&[m.frames()], DType::F64, &Device::Cpu).unwrap()
    }

    #[test]
    fn reconstruction_examples() {
        let dev = Device::Cpu;
        let a = Tensor::new(&[[1.0f64, 2.0], [3.0, 4.0]], &dev).unwrap();
        assert_eq!(scalar(&loss_reconstruction(&a, &a).unwrap()), 0.0);
        let b = (&a + 1.0).unwrap();
        assert_eq!(scalar(&loss_reconstruction(&b, &a).unwrap()), 1.0);
        assert!(loss_reconstruction(&a, &a.narrow(0, 0, 1).unwrap()).is_err());
    }

    #[test]
    fn distance_map_examples() {
        let a = single_joint_track(&[[0.0; 3]; 4]);
        let r = single_joint_track(&[[3.0, 4.0, 0.0]; 4]);
        let m = interaction_distance_map(&a, &r).unwrap();
        assert!(m.iter().all(|d| *d == 5.0));
        assert!(interaction_distance_map(&a, &a).unwrap().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn distance_map_translation_invariant() {
        let pair = crate::synth::generate_pair(EmotionLabel::Fear, 16, 16.0, 3).unwrap();
        let base = interaction_distance_map(&pair.actor, &pair.reactor).unwrap();
        let shift = |m: &MotionSequence| {
            let mut f = m.frames().to_owned();
            let n = m.skeleton().joint_count();
            for mut row in f.rows_mut() {
                for j in 0..n {
                    row[3 * j] += 1.5;
                    row[3 * j + 2] -= 0.7;
                }
            }
            MotionSequence::new(f, m.fps(), m.skeleton().clone()).unwrap()
        };
        let moved = interaction_distance_map(&shift(&pair.actor), &shift(&pair.reactor)).unwrap();
        let diff = (&base - &moved).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-6);
    }

    #[test]
    fn react_loss_hand_case() {
        let a = single_joint_track(&[[0.0; 3]; 3]);
        let truth = single_joint_track(&[[2.0, 0.0, 0.0]; 3]);
        let pred = single_joint_track(&[[3.0, 0.0, 0.0]; 3]);
        let g = Geometry::new(a.skeleton(), 10.0).unwrap();
        let l = loss_react(&g, &batch(&a), &batch(&truth), &batch(&pred)).unwrap();
        assert!((scalar(&l) - 1.0).abs() < 1e-9);
        let zero = loss_react(&g, &batch(&a), &batch(&truth), &batch(&truth)).unwrap();
        assert_eq!(scalar(&zero), 0.0);
    }

    fn rest_sequence(len: usize, velocity: Vector3<f64>) -> MotionSequence {
        let skel = Arc::new(SkeletonSpec::humanoid());
        let n = skel.joint_count();
        let rots = vec![Matrix3::identity(); n - 1];
        let mut pos = A3::zeros((len, n, 3));
        for i in 0..len {
            let root = Vector3::new(0.0, 0.92, 0.0) + velocity * (i as f64 / 10.0);
            for (j, p) in forward_kinematics(root, &rots, &skel).unwrap().iter().enumerate() {
                for c in 0..3 {
                    pos[[i, j, c]] = p[c];
                }
            }
        }
        encode_sequence(pos.view(), &vec![rots; len], skel, 10.0, ContactThresholds::default()).unwrap()
    }

    #[test]
    fn geometric_zero_cases() {
        let m = rest_sequence(6, Vector3::new(0.3, 0.0, -0.1));
        let g = Geometry::new(m.skeleton(), 10.0).unwrap();
        let x = batch(&m);
        let losses = loss_geometric(&g, &x, &x).unwrap();
        assert!(scalar(&losses.bone) < 1e-12);
        assert!(scalar(&losses.smooth) < 1e-20);
    }

    #[test]
    fn foot_loss_unit_speed() {
        let m = rest_sequence(5, Vector3::new(1.0, 0.0, 0.0));
        let g = Geometry::new(m.skeleton(), 10.0).unwrap();
        let pred = batch(&m);
        let mut flags = m.frames().to_owned();
        let d = flags.ncols();
        flags.slice_mut(ndarray::s![.., d - 4..]).fill(1.0);
        let target = crate::nn::stack_rows(&[flags.view()], DType::F64, &Device::Cpu).unwrap();
        let foot = loss_geometric(&g, &pred, &target).unwrap().foot;
        assert!((scalar(&foot) - 1.0).abs() < 1e-9);
    }

    fn prior(dim: usize) -> EmotionPrior {
        let means: Vec<Vec<f64>> = (0..NUM_EMOTIONS).map(|c| vec![c as f64; dim]).collect();
        EmotionPrior::new(means, vec![vec![0.25; dim]; NUM_EMOTIONS]).unwrap()
    }

    #[test]
    fn emotion_alignment_examples() {
        let p = prior(1);
        let mu = EmotionEmbedding::new(vec![3.0]).unwrap();
        assert_eq!(emotion_alignment(&mu, &p, EmotionLabel::Happiness).unwrap(), 0.0);
        let off = EmotionEmbedding::new(vec![3.5]).unwrap();
        assert!((emotion_alignment(&off, &p, EmotionLabel::Happiness).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn geometric_and_react_gradients_match_finite_differences() {
        let pair = crate::synth::generate_pair(EmotionLabel::Anger, 16, 10.0, 1).unwrap();
        let g = Geometry::new(pair.actor.skeleton(), 10.0).unwrap();
        let actor = batch(&pair.actor);
        let target = batch(&pair.reactor);
        let count = target.elem_count();
        let wobble: Vec<f64> = (0..count).map(|i| 0.05 * (i as f64 * 0.731).sin()).collect();
        let wobble = Tensor::from_vec(wobble, target.shape(), &Device::Cpu).unwrap();
        let noisy = (&target + wobble).unwrap();
        let pred = Var::from_tensor(&noisy).unwrap();
        let vars = vec![("pred".to_string(), pred.clone())];
        let terms: [(&str, Box<dyn Fn() -> Result<Tensor>>); 4] = [
            ("react", Box::new(|| loss_react(&g, &actor, &target, pred.as_tensor()))),
            ("bone", Box::new(|| Ok(loss_geometric(&g, pred.as_tensor(), &target)?.bone))),
            ("smooth", Box::new(|| Ok(loss_geometric(&g, pred.as_tensor(), &target)?.smooth))),
            ("foot", Box::new(|| Ok(loss_geometric(&g, pred.as_tensor(), &target)?.foot))),
        ];
        for (name, f) in terms {
            let report = check_gradients(&vars, f, 1e-5, 60, 7).unwrap();
            assert!(report.worst_relative_error < 1e-4, "{name}: {report:?}");
        }
    }
}
