use std::fmt;

use super::{FixedLengthSequence, SkeletonSequence};
use crate::error::{Error, Result};
use crate::rng::ModelRng;

/// Training subjects of the standard NTU cross-subject protocol.
pub const NTU_TRAIN_SUBJECTS: [u32; 20] = [
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38,
];

pub trait SampleMeta {
    fn subject(&self) -> u32;
    fn camera(&self) -> u32;
}

impl SampleMeta for SkeletonSequence {
    fn subject(&self) -> u32 {
        self.subject
    }
    fn camera(&self) -> u32 {
        self.camera
    }
}

impl SampleMeta for FixedLengthSequence {
    fn subject(&self) -> u32 {
        self.subject
    }
    fn camera(&self) -> u32 {
        self.camera
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SplitProtocol {
    CrossSubject { train_subjects: Vec<u32> },
    CrossView { train_cameras: Vec<u32> },
    Random { fraction: f64, seed: u64 },
}

impl SplitProtocol {
    pub fn cross_subject() -> Self {
        Self::CrossSubject {
            train_subjects: NTU_TRAIN_SUBJECTS.to_vec(),
        }
    }

    /// Cameras 2 and 3 train, camera 1 tests.
    pub fn cross_view() -> Self {
        Self::CrossView {
            train_cameras: vec![2, 3],
        }
    }

    /// `cross-subject`, `cross-view` or `random:FRAC`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        match text.trim() {
            "cross-subject" => Ok(Self::cross_subject()),
            "cross-view" => Ok(Self::cross_view()),
            other => {
                let frac = other
                    .strip_prefix("random:")
                    .and_then(|f| f.parse::<f64>().ok())
                    .filter(|f| *f > 0.0 && *f < 1.0)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "split {other:?}: expected cross-subject, cross-view or random:FRAC with 0 < FRAC < 1"
                        ))
                    })?;
                Ok(Self::Random { fraction: frac, seed })
            }
        }
    }
}

impl fmt::Display for SplitProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CrossSubject { train_subjects } => write!(f, "cross-subject(train subjects {train_subjects:?})"),
            Self::CrossView { train_cameras } => write!(f, "cross-view(train cameras {train_cameras:?})"),
            Self::Random { fraction, seed } => write!(f, "random({fraction}, seed {seed})"),
        }
    }
}

/// Partitions `samples` into (train, test). Both sides keep input order.
pub fn split_dataset<T: SampleMeta + Clone>(samples: &[T], protocol: &SplitProtocol) -> Result<(Vec<T>, Vec<T>)> {
    let in_train: Vec<bool> = match protocol {
        SplitProtocol::CrossSubject { train_subjects } => {
            samples.iter().map(|s| train_subjects.contains(&s.subject())).collect()
        }
        SplitProtocol::CrossView { train_cameras } => {
            samples.iter().map(|s| train_cameras.contains(&s.camera())).collect()
        }
        SplitProtocol::Random { fraction, seed } => {
            let mut order: Vec<usize> = (0..samples.len()).collect();
            ModelRng::seed_from(*seed).shuffle(&mut order);
            let k = (fraction * samples.len() as f64).round() as usize;
            let mut flags = vec![false; samples.len()];
            for &i in &order[..k.min(samples.len())] {
                flags[i] = true;
            }
            flags
        }
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, t) in samples.iter().zip(in_train) {
        if t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    let empty = match (train.is_empty(), test.is_empty()) {
        (true, _) => Some("empty training side"),
        (_, true) => Some("empty test side"),
        _ => None,
    };
    if let Some(msg) = empty {
        return Err(Error::Split {
            protocol: protocol.to_string(),
            msg: msg.into(),
        });
    }
    Ok((train, test))
}
