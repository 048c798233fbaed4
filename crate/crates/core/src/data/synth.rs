//! Parameterized synthetic actions on the 25-joint skeleton.
//!
//! Each archetype swings a fixed set of joints about a pivot with a
//! sinusoidal angle; everything else holds a canonical T-pose. Classes are
//! therefore separable by which body parts move.

use std::f64::consts::PI;

use super::{Frame, SkeletonSequence};
use crate::error::{Error, Result};
use crate::rng::ModelRng;

/// Canonical T-pose, 0-based NTU joint order, meters.
const T_POSE: [[f64; 3]; 25] = [
    [0.0, 0.0, 3.0],     // spine base
    [0.0, 0.3, 3.0],     // spine mid
    [0.0, 0.55, 3.0],    // neck
    [0.0, 0.7, 3.0],     // head
    [-0.2, 0.5, 3.0],    // left shoulder
    [-0.45, 0.5, 3.0],   // left elbow
    [-0.7, 0.5, 3.0],    // left wrist
    [-0.78, 0.5, 3.0],   // left hand
    [0.2, 0.5, 3.0],     // right shoulder
    [0.45, 0.5, 3.0],    // right elbow
    [0.7, 0.5, 3.0],     // right wrist
    [0.78, 0.5, 3.0],    // right hand
    [-0.1, -0.05, 3.0],  // left hip
    [-0.1, -0.45, 3.0],  // left knee
    [-0.1, -0.85, 3.0],  // left ankle
    [-0.1, -0.9, 2.9],   // left foot
    [0.1, -0.05, 3.0],   // right hip
    [0.1, -0.45, 3.0],   // right knee
    [0.1, -0.85, 3.0],   // right ankle
    [0.1, -0.9, 2.9],    // right foot
    [0.0, 0.5, 3.0],     // spine shoulder
    [-0.86, 0.5, 3.0],   // left hand tip
    [-0.8, 0.53, 3.0],   // left thumb
    [0.86, 0.5, 3.0],    // right hand tip
    [0.8, 0.53, 3.0],    // right thumb
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Archetype {
    LeftArmRaise,
    RightLegKick,
    BodySway,
    HeadNod,
    RightArmRaise,
    LeftLegKick,
    ArmsWave,
    Squat,
}

/// Rotation plane: the two coordinate axes the swing acts on.
#[derive(Clone, Copy)]
enum Plane {
    /// x–y, lateral swing.
    Frontal,
    /// y–z, forward swing.
    Sagittal,
}

struct Swing {
    pivot: usize,
    joints: &'static [usize],
    plane: Plane,
    /// Peak angle in radians; sign sets the direction.
    amplitude: f64,
}

impl Archetype {
    pub const ALL: [Archetype; 8] = [
        Archetype::LeftArmRaise,
        Archetype::RightLegKick,
        Archetype::BodySway,
        Archetype::HeadNod,
        Archetype::RightArmRaise,
        Archetype::LeftLegKick,
        Archetype::ArmsWave,
        Archetype::Squat,
    ];

    pub fn from_class(class: usize) -> Result<Self> {
        Self::ALL
            .get(class)
            .copied()
            .ok_or_else(|| Error::Data(format!("unknown synthetic class {class} (have {})", Self::ALL.len())))
    }

    pub fn name(self) -> &'static str {
        match self {
            Archetype::LeftArmRaise => "arm-raise",
            Archetype::RightLegKick => "leg-kick",
            Archetype::BodySway => "body-sway",
            Archetype::HeadNod => "head-nod",
            Archetype::RightArmRaise => "right-arm-raise",
            Archetype::LeftLegKick => "left-leg-kick",
            Archetype::ArmsWave => "arms-wave",
            Archetype::Squat => "squat",
        }
    }

    fn swings(self) -> Vec<Swing> {
        const L_ARM: &[usize] = &[5, 6, 7, 21, 22];
        const R_ARM: &[usize] = &[9, 10, 11, 23, 24];
        const L_LEG: &[usize] = &[13, 14, 15];
        const R_LEG: &[usize] = &[17, 18, 19];
        const UPPER: &[usize] = &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 20, 21, 22, 23, 24];
        match self {
            Archetype::LeftArmRaise => vec![Swing { pivot: 4, joints: L_ARM, plane: Plane::Frontal, amplitude: -1.2 }],
            Archetype::RightArmRaise => vec![Swing { pivot: 8, joints: R_ARM, plane: Plane::Frontal, amplitude: 1.2 }],
            Archetype::RightLegKick => vec![Swing { pivot: 16, joints: R_LEG, plane: Plane::Sagittal, amplitude: 0.9 }],
            Archetype::LeftLegKick => vec![Swing { pivot: 12, joints: L_LEG, plane: Plane::Sagittal, amplitude: 0.9 }],
            Archetype::BodySway => vec![Swing { pivot: 0, joints: UPPER, plane: Plane::Frontal, amplitude: 0.3 }],
            Archetype::HeadNod => vec![Swing { pivot: 20, joints: &[2, 3], plane: Plane::Sagittal, amplitude: 0.7 }],
            Archetype::ArmsWave => vec![
                Swing { pivot: 4, joints: L_ARM, plane: Plane::Frontal, amplitude: -0.8 },
                Swing { pivot: 8, joints: R_ARM, plane: Plane::Frontal, amplitude: 0.8 },
            ],
            Archetype::Squat => vec![
                Swing { pivot: 12, joints: &[13, 14, 15], plane: Plane::Sagittal, amplitude: 0.6 },
                Swing { pivot: 16, joints: &[17, 18, 19], plane: Plane::Sagittal, amplitude: 0.6 },
            ],
        }
    }

    /// Joints whose position changes over time (noise aside).
    pub fn animated_joints(self) -> Vec<usize> {
        let mut js: Vec<usize> = self.swings().iter().flat_map(|s| s.joints.iter().copied()).collect();
        js.sort_unstable();
        js.dedup();
        js
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Nominal frame count; each sample varies by up to ±20%.
    pub frames: usize,
    /// Standard deviation of additive coordinate noise, meters.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames: 60,
            noise: 0.01,
        }
    }
}

fn rotate(p: [f64; 3], pivot: [f64; 3], plane: Plane, angle: f64) -> [f64; 3] {
    let (i, j) = match plane {
        Plane::Frontal => (0, 1),
        Plane::Sagittal => (2, 1),
    };
    let (s, c) = angle.sin_cos();
    let (u, v) = (p[i] - pivot[i], p[j] - pivot[j]);
    let mut out = p;
    out[i] = pivot[i] + c * u - s * v;
    out[j] = pivot[j] + s * u + c * v;
    out
}

/// One sample of archetype `class`. Deterministic in `(class, seed, config)`.
pub fn generate_synthetic(class: usize, seed: u64, config: &SynthConfig) -> Result<SkeletonSequence> {
    let archetype = Archetype::from_class(class)?;
    if config.frames < 2 {
        return Err(Error::Config("synthetic frame count must be at least 2".into()));
    }
    if !(config.noise >= 0.0 && config.noise.is_finite()) {
        return Err(Error::Config(format!("noise scale {} must be finite and >= 0", config.noise)));
    }
    let mut rng = ModelRng::derived(seed, class as u64);
    let jitter = (config.frames / 5) as f64;
    let frames = ((config.frames as f64 + rng.uniform(-jitter, jitter)).round() as usize).max(2);
    let cycles = rng.uniform(1.5, 2.5);
    let phase = rng.uniform(0.0, 2.0 * PI);
    let gain = rng.uniform(0.8, 1.2);
    let offset = [rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1), rng.uniform(-0.3, 0.3)];
    let swings = archetype.swings();

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let arg = 2.0 * PI * cycles * t as f64 / frames as f64 + phase;
        let mut joints = T_POSE.to_vec();
        for s in &swings {
            let angle = gain * s.amplitude * arg.sin();
            let pivot = T_POSE[s.pivot];
            for &j in s.joints {
                joints[j] = rotate(T_POSE[j], pivot, s.plane, angle);
            }
        }
        for p in &mut joints {
            for c in 0..3 {
                p[c] += offset[c];
                if config.noise > 0.0 {
                    p[c] += config.noise * rng.normal();
                }
            }
        }
        out.push(Frame { joints });
    }
    let mut seq = SkeletonSequence::new(out)?;
    seq.label = class;
    Ok(seq)
}

/// `per_class` samples of each of the first `classes` archetypes, with
/// subjects cycling over 1..=10 and cameras over 1..=3.
pub fn synthetic_dataset(classes: usize, per_class: usize, seed: u64, config: &SynthConfig) -> Result<Vec<SkeletonSequence>> {
    if classes == 0 || classes > Archetype::ALL.len() {
        return Err(Error::Config(format!(
            "synthetic class count must be in 1..={}",
            Archetype::ALL.len()
        )));
    }
    let mut out = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for i in 0..per_class {
            let sample_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(((class as u64) << 32) | i as u64);
            let mut seq = generate_synthetic(class, sample_seed, config)?;
            seq.subject = 1 + (i % 10) as u32;
            seq.camera = 1 + (i % 3) as u32;
            seq.sample_id = format!(
                "S{:03}C{:03}A{:03}_{:04}",
                seq.subject,
                seq.camera,
                class + 1,
                i
            );
            out.push(seq);
        }
    }
    Ok(out)
}
