//! Skeleton sequences: parsing, resampling, body-part decomposition,
//! synthetic generation and evaluation splits.

mod manifest;
mod ntu;
mod parts;
mod resample;
mod split;
mod synth;

pub use manifest::{read_index, read_manifest, write_manifest, ManifestEntry, MANIFEST_FILE};
pub use ntu::{parse_skeleton_file, write_skeleton_file, NTU_JOINTS};
pub use parts::{decompose_parts, PartDecomposition};
pub use resample::resample_sequence;
pub use split::{split_dataset, SplitProtocol, NTU_TRAIN_SUBJECTS};
pub use split::SampleMeta;
pub use synth::{generate_synthetic, synthetic_dataset, Archetype, SynthConfig};

use crate::error::{Error, Result};

/// Index of the middle-of-spine joint in the 25-joint layout.
pub const SPINE_MID: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub joints: Vec<[f64; 3]>,
}

impl Frame {
    pub fn zeros(joints: usize) -> Self {
        Self {
            joints: vec![[0.0; 3]; joints],
        }
    }
}

/// One action sample as recorded: frames of 3-D joint positions plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<Frame>,
    pub label: usize,
    pub subject: u32,
    pub camera: u32,
    pub sample_id: String,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let seq = Self {
            frames,
            label: 0,
            subject: 0,
            camera: 0,
            sample_id: String::new(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Data("sequence has no frames".into()))?;
        let j = first.joints.len();
        for (i, f) in self.frames.iter().enumerate() {
            if f.joints.len() != j {
                return Err(Error::Data(format!(
                    "frame {} has {} joints, expected {j}",
                    i + 1,
                    f.joints.len()
                )));
            }
            if f.joints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("frame {} has non-finite coordinates", i + 1)));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, |f| f.joints.len())
    }

    /// Translates every frame so that `joint` of the first frame sits at the origin.
    pub fn centered_on(&self, joint: usize) -> Result<Self> {
        let origin = *self
            .frames
            .first()
            .and_then(|f| f.joints.get(joint))
            .ok_or_else(|| Error::Data(format!("no joint {joint} to center on")))?;
        let mut out = self.clone();
        for f in &mut out.frames {
            for p in &mut f.joints {
                for (c, o) in p.iter_mut().zip(origin) {
                    *c -= o;
                }
            }
        }
        Ok(out)
    }
}

/// A sequence prepared for the model: exactly `frames` frames, each split into
/// per-part coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedLengthSequence {
    /// `parts[n][k]` is the coordinate vector of part `k` at frame `n`.
    pub parts: Vec<Vec<Vec<f64>>>,
    pub label: usize,
    pub subject: u32,
    pub camera: u32,
    pub sample_id: String,
}

impl FixedLengthSequence {
    /// Centers on the first frame's middle-of-spine joint (when present),
    /// resamples to `frames` and decomposes into parts.
    pub fn prepare(seq: &SkeletonSequence, frames: usize, pd: &PartDecomposition) -> Result<Self> {
        let centered = if seq.joint_count() > SPINE_MID {
            seq.centered_on(SPINE_MID)?
        } else {
            seq.clone()
        };
        let resampled = resample_sequence(&centered, frames)?;
        let parts = resampled
            .frames
            .iter()
            .map(|f| decompose_parts(f, pd))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            parts,
            label: seq.label,
            subject: seq.subject,
            camera: seq.camera,
            sample_id: seq.sample_id.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}
