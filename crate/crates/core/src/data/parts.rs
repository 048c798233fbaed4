use super::Frame;
use crate::error::{Error, Result};

/// Assignment of joints to K body parts, each part one node of the spatial graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartDecomposition {
    names: Vec<String>,
    parts: Vec<Vec<usize>>,
    joints: usize,
}

impl PartDecomposition {
    /// Validates that `parts` are non-empty, pairwise disjoint and cover `0..J`.
    pub fn new(names: Vec<String>, parts: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != parts.len() || parts.is_empty() {
            return Err(Error::Config("part names and joint lists must match and be non-empty".into()));
        }
        let joints = parts.iter().map(Vec::len).sum::<usize>();
        let mut seen = vec![false; joints];
        for (name, p) in names.iter().zip(&parts) {
            if p.is_empty() {
                return Err(Error::Config(format!("part {name} has no joints")));
            }
            for &j in p {
                match seen.get_mut(j) {
                    Some(s) if !*s => *s = true,
                    Some(_) => return Err(Error::Config(format!("joint {j} assigned twice"))),
                    None => {
                        return Err(Error::Config(format!(
                            "joint {j} outside 0..{joints}: parts must cover every joint exactly once"
                        )))
                    }
                }
            }
        }
        Ok(Self { names, parts, joints })
    }

    /// Eight-part layout of the 25-joint Kinect v2 skeleton.
    pub fn ntu8() -> Self {
        // 1-based joint ids
        let table: [(&str, &[usize]); 8] = [
            ("left-arm", &[5, 6, 7]),
            ("right-arm", &[9, 10, 11]),
            ("left-hand", &[8, 22, 23]),
            ("right-hand", &[12, 24, 25]),
            ("left-leg", &[13, 14, 15, 16]),
            ("right-leg", &[17, 18, 19, 20]),
            ("trunk", &[1, 2, 21]),
            ("head", &[3, 4]),
        ];
        Self::from_one_based(&table)
    }

    /// Five-part layout of the 20-joint Kinect v1 skeleton.
    pub fn sysu5() -> Self {
        let table: [(&str, &[usize]); 5] = [
            ("left-arm", &[5, 6, 7, 8]),
            ("right-arm", &[9, 10, 11, 12]),
            ("left-leg", &[13, 14, 15, 16]),
            ("right-leg", &[17, 18, 19, 20]),
            ("trunk", &[1, 2, 3, 4]),
        ];
        Self::from_one_based(&table)
    }

    fn from_one_based(table: &[(&str, &[usize])]) -> Self {
        Self::new(
            table.iter().map(|(n, _)| n.to_string()).collect(),
            table.iter().map(|(_, js)| js.iter().map(|j| j - 1).collect()).collect(),
        )
        .expect("built-in decomposition is a disjoint cover")
    }

    /// `ntu8`, `sysu5`, or explicit 0-based lists such as `0,1;2,3,4;5`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.trim() {
            "ntu8" => Ok(Self::ntu8()),
            "sysu5" => Ok(Self::sysu5()),
            other => {
                let parts = other
                    .split(';')
                    .map(|p| {
                        p.split(',')
                            .map(|j| {
                                j.trim()
                                    .parse::<usize>()
                                    .map_err(|_| Error::Config(format!("bad joint index {j:?} in parts")))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let names = (1..=parts.len()).map(|i| format!("part{i}")).collect();
                Self::new(names, parts)
            }
        }
    }

    /// Inverse of [`PartDecomposition::parse`].
    pub fn spec(&self) -> String {
        if *self == Self::ntu8() {
            return "ntu8".into();
        }
        if *self == Self::sysu5() {
            return "sysu5".into();
        }
        self.parts
            .iter()
            .map(|p| p.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    /// Coordinate width of each part: three per joint.
    pub fn widths(&self) -> Vec<usize> {
        self.parts.iter().map(|p| 3 * p.len()).collect()
    }

    pub fn max_width(&self) -> usize {
        self.widths().into_iter().max().unwrap_or(0)
    }

    /// Same decomposition with parts `a` and `b` exchanged.
    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut out = self.clone();
        out.parts.swap(a, b);
        out.names.swap(a, b);
        out
    }
}

/// Vector `k` holds `(x, y, z)` of each joint of part `k`, in listed order.
pub fn decompose_parts(frame: &Frame, pd: &PartDecomposition) -> Result<Vec<Vec<f64>>> {
    if frame.joints.len() != pd.joint_count() {
        return Err(Error::Data(format!(
            "frame has {} joints, decomposition covers {}",
            frame.joints.len(),
            pd.joint_count()
        )));
    }
    pd.parts
        .iter()
        .map(|p| {
            let mut v = Vec::with_capacity(3 * p.len());
            for &j in p {
                let xyz = frame
                    .joints
                    .get(j)
                    .ok_or_else(|| Error::Data(format!("joint index {j} out of range")))?;
                v.extend_from_slice(xyz);
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ntu8_widths_and_cover() {
        let pd = PartDecomposition::ntu8();
        // oracle: joint counts per part in the table, times three
        let counts = [3, 3, 3, 3, 4, 4, 3, 2];
        let widths: Vec<usize> = counts.iter().map(|c| 3 * c).collect();
        assert_eq!(pd.widths(), widths);
        assert_eq!(pd.widths(), vec![9, 9, 9, 9, 12, 12, 9, 6]);
        assert_eq!(pd.joint_count(), 25);
        let mut all: Vec<usize> = pd.parts().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn sysu5_covers_twenty_joints() {
        let pd = PartDecomposition::sysu5();
        assert_eq!(pd.len(), 5);
        assert_eq!(pd.joint_count(), 20);
    }

    #[test]
    fn rejects_overlap_and_gaps() {
        assert!(PartDecomposition::parse("0,1;1,2").is_err());
        assert!(PartDecomposition::parse("0,1;3").is_err());
        assert!(PartDecomposition::parse("0,x").is_err());
        let pd = PartDecomposition::parse("0;1,2;3,4,5").unwrap();
        assert_eq!(pd.widths(), vec![3, 6, 9]);
        assert_eq!(PartDecomposition::parse(&pd.spec()).unwrap(), pd);
        assert_eq!(PartDecomposition::parse("ntu8").unwrap().spec(), "ntu8");
    }

    #[test]
    fn zero_frame_and_permutation() {
        let pd = PartDecomposition::ntu8();
        let zero = decompose_parts(&Frame::zeros(25), &pd).unwrap();
        assert!(zero.iter().all(|v| v.iter().all(|&c| c == 0.0)));

        let frame = Frame {
            joints: (0..25).map(|j| [j as f64, -(j as f64), 0.5 * j as f64]).collect(),
        };
        let a = decompose_parts(&frame, &pd).unwrap();
        let b = decompose_parts(&frame, &pd.swapped(0, 6)).unwrap();
        assert_eq!(a[0], b[6]);
        assert_eq!(a[6], b[0]);
        assert_eq!(a[1..6], b[1..6]);
        assert_eq!(&a[0][..3], &[4.0, -4.0, 2.0]);

        assert!(decompose_parts(&Frame::zeros(24), &pd).is_err());
    }
}
