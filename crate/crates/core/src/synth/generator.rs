use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StyleParams;
use crate::error::{bail_validation, Result};
use crate::motion::{
    axis_angle, encode_sequence, forward_kinematics, ContactThresholds, EmotionLabel,
    InteractionPair, SkeletonSpec,
};

/// Lower bound on the horizontal actor-reactor root distance (m).
pub const MIN_ROOT_DISTANCE: f64 = 0.5;

const PELVIS_HEIGHT: f64 = 0.92;
const ARM_LENGTH: f64 = 0.52;
const ARM_HANG: f64 = 1.35;
const MIN_LENGTH: usize = 16;

fn rx(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::x(), a)
}

fn ry(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::y(), a)
}

fn rz(a: f64) -> Matrix3<f64> {
    axis_angle(Vector3::z(), a)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

#[derive(Debug, Clone, Copy)]
enum Arms {
    Right,
    Left,
    Both,
}

/// Per-character script resolved from a style plus per-sequence randomness.
#[derive(Debug, Clone)]
struct Script {
    start: Vector3<f64>,
    yaw: f64,
    style: StyleParams,
    /// Signed speed along the facing direction: `cruise` between `move_start`
    /// and `move_end`, with 0.3 s ramps.
    cruise: f64,
    move_start: f64,
    move_end: f64,
    gesture_onset: f64,
    arms: Arms,
    phase: f64,
    sway_phase: f64,
}

impl Script {
    fn speed(&self, t: f64) -> f64 {
        let up = smoothstep((t - self.move_start) / 0.3);
        let down = 1.0 - smoothstep((t - self.move_end) / 0.3);
        self.cruise * up * down
    }

    fn forward(&self) -> Vector3<f64> {
        Vector3::new(self.yaw.sin(), 0.0, self.yaw.cos())
    }
}

fn jitter(style: StyleParams, rng: &mut ChaCha8Rng) -> StyleParams {
    let mut scale = || 1.0 + rng.random_range(-0.15..=0.15);
    let mut out = StyleParams {
        gesture_amplitude: style.gesture_amplitude * scale(),
        gesture_frequency: style.gesture_frequency * scale(),
        approach_speed: style.approach_speed,
        posture_pitch: style.posture_pitch * scale(),
        tempo: style.tempo * scale(),
    };
    out.approach_speed += rng.random_range(-0.08..=0.08);
    out
}

fn pick_arms(rng: &mut ChaCha8Rng) -> Arms {
    match rng.random_range(0..3) {
        0 => Arms::Right,
        1 => Arms::Left,
        _ => Arms::Both,
    }
}

/// Deterministic generator of emotion-styled interaction pairs on the
/// built-in humanoid.
#[derive(Debug, Clone)]
pub struct PairGenerator {
    skeleton: Arc<SkeletonSpec>,
    thresholds: ContactThresholds,
}

impl Default for PairGenerator {
    fn default() -> Self {
        Self::new(Arc::new(SkeletonSpec::humanoid()))
    }
}

impl PairGenerator {
    /// `skeleton` must have the joint layout of [`SkeletonSpec::humanoid`].
    pub fn new(skeleton: Arc<SkeletonSpec>) -> Self {
        Self {
            skeleton,
            thresholds: ContactThresholds::default(),
        }
    }

    pub fn skeleton(&self) -> &Arc<SkeletonSpec> {
        &self.skeleton
    }

    pub fn generate(
        &self,
        emotion: EmotionLabel,
        len: usize,
        fps: f64,
        seed: u64,
    ) -> Result<InteractionPair> {
        if len < MIN_LENGTH {
            bail_validation!("interaction length must be at least {MIN_LENGTH} frames, got {len}");
        }
        if !(fps > 0.0 && fps.is_finite()) {
            bail_validation!("fps must be positive, got {fps}");
        }
        if self.skeleton.joint_count() != 22 {
            bail_validation!("pair generator requires the 22-joint humanoid");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = StyleParams::for_emotion(emotion);
        let duration = len as f64 / fps;

        let actor_style = jitter(base, &mut rng);
        let approach_end = duration * rng.random_range(0.3..=0.5);
        let actor = Script {
            start: Vector3::new(0.0, PELVIS_HEIGHT, rng.random_range(-0.1..=0.1)),
            yaw: PI / 2.0,
            style: actor_style,
            cruise: 0.35 * actor_style.tempo,
            move_start: 0.0,
            move_end: approach_end,
            gesture_onset: approach_end * 0.7,
            arms: pick_arms(&mut rng),
            phase: rng.random_range(0.0..TAU),
            sway_phase: rng.random_range(0.0..TAU),
        };

        let reactor_style = jitter(base, &mut rng);
        let onset = duration * rng.random_range(0.15..=0.25);
        let reactor = Script {
            start: Vector3::new(
                rng.random_range(2.0..=2.4),
                PELVIS_HEIGHT,
                rng.random_range(-0.15..=0.15),
            ),
            yaw: -PI / 2.0,
            style: reactor_style,
            cruise: reactor_style.approach_speed * reactor_style.tempo,
            move_start: onset,
            move_end: f64::INFINITY,
            gesture_onset: onset,
            arms: pick_arms(&mut rng),
            phase: rng.random_range(0.0..TAU),
            sway_phase: rng.random_range(0.0..TAU),
        };

        let actor_roots = self.root_track(&actor, len, fps);
        let mut reactor_roots = self.root_track(&reactor, len, fps);
        for (a, r) in actor_roots.iter().zip(reactor_roots.iter_mut()) {
            let mut d = *r - a;
            d.y = 0.0;
            let dist = d.norm();
            if dist < MIN_ROOT_DISTANCE {
                let dir = if dist > 1e-9 { d / dist } else { Vector3::x() };
                let fixed = a + dir * MIN_ROOT_DISTANCE;
                r.x = fixed.x;
                r.z = fixed.z;
            }
        }

        let actor_motion = self.animate(&actor, &actor_roots, fps)?;
        let reactor_motion = self.animate(&reactor, &reactor_roots, fps)?;
        InteractionPair::new(actor_motion, reactor_motion, Some(emotion))
    }

    fn root_track(&self, script: &Script, len: usize, fps: f64) -> Vec<Vector3<f64>> {
        let fwd = script.forward();
        let mut travelled = 0.0;
        let crouch = 0.05 * script.style.posture_pitch.max(0.0);
        (0..len)
            .map(|i| {
                let t = i as f64 / fps;
                if i > 0 {
                    travelled += script.speed((i - 1) as f64 / fps) / fps;
                }
                let walk = (script.speed(t).abs() / 0.6).min(1.0);
                let step = TAU * 1.8 * script.style.tempo * t;
                let bob = 0.015 * walk * (1.0 - (2.0 * step).cos());
                let mut p = script.start + fwd * travelled;
                p.y = PELVIS_HEIGHT - crouch + bob;
                p
            })
            .collect()
    }

    fn local_rotations(&self, s: &Script, t: f64) -> Vec<Matrix3<f64>> {
        let style = &s.style;
        let walk = (s.speed(t).abs() / 0.6).min(1.0);
        let step = TAU * 1.8 * style.tempo * t;
        let hip_l = 0.45 * walk * step.sin();
        let hip_r = -hip_l;
        let knee_l = 0.7 * walk * (step + PI / 2.0).sin().max(0.0);
        let knee_r = 0.7 * walk * (step - PI / 2.0).sin().max(0.0);

        let envelope = smoothstep((t - s.gesture_onset) / 0.3);
        let osc = (TAU * style.gesture_frequency * t + s.phase).sin();
        let swing = style.gesture_amplitude / ARM_LENGTH;
        let raise = envelope * swing * (0.5 + 0.5 * osc);
        let idle = 0.05 * (TAU * 0.5 * style.tempo * t + s.sway_phase).sin();
        let (raise_l, raise_r) = match s.arms {
            Arms::Right => (idle, raise),
            Arms::Left => (raise, idle),
            Arms::Both => (raise, raise),
        };
        let bend = |r: f64| 0.3 + 0.8 * r;

        let posture = (0.6 + 0.4 * envelope) * style.posture_pitch;
        let roll = 0.04 * (TAU * 0.5 * style.tempo * t + s.sway_phase).sin();
        let nod = 0.15 * envelope * swing * osc;
        let head = 0.5 * posture;

        let id = Matrix3::identity();
        vec![
            ry(s.yaw) * rx(posture / 3.0) * rz(roll), // spine1
            rx(posture / 3.0),                        // spine2
            rx(posture / 3.0),                        // spine3
            rx(0.5 * head),                           // neck
            rx(0.5 * head + nod),                     // head
            id,                                       // left_collar
            rx(-raise_l) * rz(-ARM_HANG),             // left_shoulder
            ry(-bend(raise_l)),                       // left_elbow
            id,                                       // left_wrist
            id,                                       // right_collar
            rx(-raise_r) * rz(ARM_HANG),              // right_shoulder
            ry(bend(raise_r)),                        // right_elbow
            id,                                       // right_wrist
            ry(s.yaw) * rx(hip_l),                    // left_hip
            rx(knee_l),                               // left_knee
            id,                                       // left_ankle
            id,                                       // left_toe
            ry(s.yaw) * rx(hip_r),                    // right_hip
            rx(knee_r),                               // right_knee
            id,                                       // right_ankle
            id,                                       // right_toe
        ]
    }

    fn animate(
        &self,
        script: &Script,
        roots: &[Vector3<f64>],
        fps: f64,
    ) -> Result<crate::motion::MotionSequence> {
        let n = self.skeleton.joint_count();
        let len = roots.len();
        let mut positions = Array3::zeros((len, n, 3));
        let mut rotations = Vec::with_capacity(len);
        for (i, root) in roots.iter().enumerate() {
            let rots = self.local_rotations(script, i as f64 / fps);
            let pos = forward_kinematics(*root, &rots, &self.skeleton)?;
            for (j, p) in pos.iter().enumerate() {
                for c in 0..3 {
                    positions[[i, j, c]] = p[c];
                }
            }
            rotations.push(rots);
        }
        encode_sequence(
            positions.view(),
            &rotations,
            self.skeleton.clone(),
            fps,
            self.thresholds,
        )
    }
}

/// One pair on the built-in humanoid; pure in `(emotion, len, fps, seed)`.
pub fn generate_pair(
    emotion: EmotionLabel,
    len: usize,
    fps: f64,
    seed: u64,
) -> Result<InteractionPair> {
    PairGenerator::default().generate(emotion, len, fps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::decode_positions;

    #[test]
    fn deterministic_in_seed() {
        let a = generate_pair(EmotionLabel::Anger, 32, 16.0, 9).unwrap();
        let b = generate_pair(EmotionLabel::Anger, 32, 16.0, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_pair(EmotionLabel::Anger, 32, 16.0, 10).unwrap();
        assert_ne!(a.reactor.frames(), c.reactor.frames());
    }

    #[test]
    fn happiness_moves_faster_than_sadness() {
        for seed in 0..5 {
            let h = generate_pair(EmotionLabel::Happiness, 32, 16.0, seed).unwrap();
            let s = generate_pair(EmotionLabel::Sadness, 32, 16.0, seed).unwrap();
            assert!(h.reactor.mean_joint_speed() > s.reactor.mean_joint_speed());
        }
    }

    #[test]
    fn roots_stay_apart() {
        for (k, e) in EmotionLabel::ALL.into_iter().enumerate() {
            for seed in 0..4 {
                let p = generate_pair(e, 64, 16.0, seed * 7 + k as u64).unwrap();
                let a = decode_positions(&p.actor);
                let r = decode_positions(&p.reactor);
                for i in 0..64 {
                    let dx = a[[i, 0, 0]] - r[[i, 0, 0]];
                    let dz = a[[i, 0, 2]] - r[[i, 0, 2]];
                    assert!((dx * dx + dz * dz).sqrt() >= 0.2);
                }
            }
        }
    }

    #[test]
    fn rejects_short_sequences() {
        assert!(generate_pair(EmotionLabel::Neutral, 15, 16.0, 0).is_err());
    }

    #[test]
    fn contact_flags_are_binary() {
        let p = generate_pair(EmotionLabel::Anger, 32, 16.0, 1).unwrap();
        let f = p.reactor.layout().contacts();
        for i in 0..p.reactor.len() {
            for c in f.clone() {
                let v = p.reactor.frame(i)[c];
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }
}
