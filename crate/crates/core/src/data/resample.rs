use super::{Frame, SkeletonSequence};
use crate::error::{Error, Result};

/// Linear interpolation onto `n` frames: output frame `i` samples the input at
/// continuous index `i·(F−1)/(n−1)`. A single-frame input is replicated.
pub fn resample_sequence(seq: &SkeletonSequence, n: usize) -> Result<SkeletonSequence> {
    let f = seq.frames.len();
    if f == 0 {
        return Err(Error::Data("cannot resample an empty sequence".into()));
    }
    if n == 0 {
        return Err(Error::Data("target length must be positive".into()));
    }
    let joints = seq.joint_count();
    let frames = (0..n)
        .map(|i| {
            if f == 1 || n == 1 {
                return seq.frames[0].clone();
            }
            let pos = (i * (f - 1)) as f64 / (n - 1) as f64;
            let lo = (pos.floor() as usize).min(f - 1);
            let hi = (lo + 1).min(f - 1);
            let t = pos - lo as f64;
            let (a, b) = (&seq.frames[lo], &seq.frames[hi]);
            Frame {
                joints: (0..joints)
                    .map(|j| {
                        let mut p = [0.0; 3];
                        for c in 0..3 {
                            p[c] = (1.0 - t) * a.joints[j][c] + t * b.joints[j][c];
                        }
                        p
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(SkeletonSequence {
        frames,
        ..seq.clone()
    })
}
