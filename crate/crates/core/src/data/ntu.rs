//! NTU-style skeleton text files.
//!
//! ```text
//! <frame count>
//! per frame:  <body count>
//!   per body: <body id> <9 tracking fields>
//!             <joint count>
//!             <x y z depthX depthY colorX colorY orientW orientX orientY orientZ state>  × joints
//! ```

use std::fmt::Write as _;

use super::{Frame, SkeletonSequence};
use crate::error::{Error, Result};

pub const NTU_JOINTS: usize = 25;

const BODY_FIELDS: usize = 10;
const JOINT_FIELDS: usize = 12;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            self.last = i + 1;
            if !toks.is_empty() {
                return Ok((i + 1, toks));
            }
        }
        Err(Error::Parse {
            line: self.last + 1,
            msg: format!("truncated record: expected {what}"),
        })
    }

    fn count(&mut self, what: &str) -> Result<(usize, usize)> {
        let (line, toks) = self.next(what)?;
        match toks.as_slice() {
            [n] => n.parse::<usize>().map(|n| (line, n)).map_err(|_| Error::Parse {
                line,
                msg: format!("malformed {what} {n:?}"),
            }),
            _ => Err(Error::Parse {
                line,
                msg: format!("malformed {what}: expected a single integer"),
            }),
        }
    }
}

/// Parses one sample, keeping the first listed body of every frame and
/// dropping frames without bodies.
pub fn parse_skeleton_file(text: &str, joints: usize) -> Result<SkeletonSequence> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (_, frame_count) = lines.count("frame count")?;
    let mut frames = Vec::with_capacity(frame_count);
    for frame_no in 1..=frame_count {
        let (_, bodies) = lines.count("body count")?;
        let mut kept: Option<Frame> = None;
        for _ in 0..bodies {
            let (line, toks) = lines.next("body info")?;
            if toks.len() != BODY_FIELDS {
                return Err(Error::Parse {
                    line,
                    msg: format!("body info has {} fields, expected {BODY_FIELDS}", toks.len()),
                });
            }
            let (line, declared) = lines.count("joint count")?;
            if declared != joints {
                return Err(Error::Parse {
                    line,
                    msg: format!("frame {frame_no} declares {declared} joints, expected {joints}"),
                });
            }
            let mut frame = Frame::zeros(joints);
            for j in 0..joints {
                let (line, toks) = lines.next("joint record")?;
                if toks.len() != JOINT_FIELDS {
                    return Err(Error::Parse {
                        line,
                        msg: format!("joint record has {} fields, expected {JOINT_FIELDS}", toks.len()),
                    });
                }
                let mut vals = [0.0f64; JOINT_FIELDS];
                for (v, t) in vals.iter_mut().zip(&toks) {
                    *v = t.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad number {t:?}"),
                    })?;
                }
                if vals[..3].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line,
                        msg: "non-finite coordinate".into(),
                    });
                }
                frame.joints[j] = [vals[0], vals[1], vals[2]];
            }
            kept.get_or_insert(frame);
        }
        if let Some(f) = kept {
            frames.push(f);
        }
    }
    if frames.is_empty() {
        return Err(Error::Parse {
            line: lines.last,
            msg: "no frame contains a body".into(),
        });
    }
    SkeletonSequence::new(frames)
}

/// Writes `seq` as a single-body NTU-style file; ignored fields are zero.
pub fn write_skeleton_file(seq: &SkeletonSequence) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", seq.frames.len());
    for f in &seq.frames {
        out.push_str("1\n");
        out.push_str("1 0 0 0 0 0 0 0 0 2\n");
        let _ = writeln!(out, "{}", f.joints.len());
        for [x, y, z] in &f.joints {
            let _ = writeln!(out, "{x:?} {y:?} {z:?} 0 0 0 0 0 0 0 0 2");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint_lines(n: usize, v: f64) -> String {
        (0..n).map(|_| format!("{v} {v} {v} 1 2 3 4 0.1 0.2 0.3 0.4 2\n")).collect()
    }

    #[test]
    fn zero_fixture() {
        let mut text = String::from("2\n");
        for _ in 0..2 {
            text.push_str("1\n72057594037931101 0 1 1 1 1 0 0.02 0.05 2\n25\n");
            text.push_str(&joint_lines(25, 0.0));
        }
        let seq = parse_skeleton_file(&text, NTU_JOINTS).unwrap();
        assert_eq!(seq.frames.len(), 2);
        assert!(seq.frames.iter().all(|f| f.joints == vec![[0.0; 3]; 25]));
    }

    #[test]
    fn first_body_is_kept() {
        let mut text = String::from("1\n2\n");
        text.push_str("1 0 1 1 1 1 0 0 0 2\n25\n");
        text.push_str(&joint_lines(25, 1.5));
        text.push_str("2 0 1 1 1 1 0 0 0 2\n25\n");
        text.push_str(&joint_lines(25, -7.0));
        let seq = parse_skeleton_file(&text, NTU_JOINTS).unwrap();
        assert_eq!(seq.frames.len(), 1);
        assert_eq!(seq.frames[0].joints[24], [1.5; 3]);
    }

    #[test]
    fn joint_count_mismatch_names_frame() {
        let mut text = String::from("2\n1\n1 0 1 1 1 1 0 0 0 2\n25\n");
        text.push_str(&joint_lines(25, 0.0));
        text.push_str("1\n1 0 1 1 1 1 0 0 0 2\n24\n");
        text.push_str(&joint_lines(24, 0.0));
        let err = parse_skeleton_file(&text, NTU_JOINTS).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("frame 2") && msg.contains("line 32"), "{msg}");
    }

    #[test]
    fn empty_frames_dropped_and_truncation_reported() {
        let mut text = String::from("3\n0\n1\n1 0 1 1 1 1 0 0 0 2\n2\n");
        text.push_str(&joint_lines(2, 0.25));
        text.push_str("0\n");
        let seq = parse_skeleton_file(&text, 2).unwrap();
        assert_eq!(seq.frames.len(), 1);

        let truncated = "2\n1\n1 0 1 1 1 1 0 0 0 2\n2\n0 0 0 0 0 0 0 0 0 0 0 2\n";
        let err = parse_skeleton_file(truncated, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");

        let bad_count = "two\n";
        assert!(matches!(parse_skeleton_file(bad_count, 2), Err(Error::Parse { line: 1, .. })));
        assert!(parse_skeleton_file("1\n0\n", 2).is_err());
    }
}
