//! Clip-weighted cross-entropy: clip `m` of `M` contributes `(m/M)·CE`.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::temporal::{Stream, TemporalOutput};
use crate::tensor::{Scalar, Tensor};

/// Floor applied to log-probabilities, `ln(1e-12)`.
pub const LOG_FLOOR: f64 = -27.631021115928547;

/// Loss of one sample (or a batch mean) split by stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub position: f64,
    pub velocity: f64,
    pub sum: f64,
    /// `position + velocity + sum`.
    pub total: f64,
    /// Unweighted cross-entropy of every clip, per stream.
    pub clip_terms: Vec<(Stream, Vec<f64>)>,
    /// Number of true-class log-probabilities raised to the floor.
    pub clamped: usize,
}

impl LossReport {
    pub fn stream(&self, s: Stream) -> f64 {
        match s {
            Stream::Position => self.position,
            Stream::Velocity => self.velocity,
            Stream::Sum => self.sum,
        }
    }
}

/// Loss of one sample from per-clip log-probabilities. `streams[i].1[m]` is
/// `log ŷ_{m+1}` for that stream; absent streams contribute zero.
pub fn incremental_loss(streams: &[(Stream, Vec<Vec<f64>>)], label: usize) -> Result<LossReport> {
    let mut report = LossReport::default();
    for (stream, clips) in streams {
        if clips.is_empty() {
            return Err(Error::Config(format!("stream {stream} has no clips")));
        }
        let m_total = clips.len() as f64;
        let mut terms = Vec::with_capacity(clips.len());
        let mut loss = 0.0;
        for (m, lp) in clips.iter().enumerate() {
            let v = *lp.get(label).ok_or_else(|| {
                Error::Config(format!("label {label} outside {} classes", lp.len()))
            })?;
            if v < LOG_FLOOR || v.is_nan() {
                report.clamped += 1;
            }
            let ce = -v.max(LOG_FLOOR);
            loss += (m + 1) as f64 / m_total * ce;
            terms.push(ce);
        }
        match stream {
            Stream::Position => report.position = loss,
            Stream::Velocity => report.velocity = loss,
            Stream::Sum => report.sum = loss,
        }
        report.clip_terms.push((*stream, terms));
    }
    report.total = report.position + report.velocity + report.sum;
    Ok(report)
}

/// Loss nodes of a batch: each stream's mean loss and their sum.
#[derive(Clone, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub streams: Vec<(Stream, NodeId)>,
    /// Weighted batch-mean term of every clip of every stream; they sum to `total`.
    pub terms: Vec<NodeId>,
    pub clamped: usize,
}

impl LossNodes {
    /// Batch-mean values read from the graph.
    pub fn report<F: Scalar>(&self, g: &Graph<F>) -> LossReport {
        let mut r = LossReport {
            clamped: self.clamped,
            ..Default::default()
        };
        for &(s, id) in &self.streams {
            let v = g.value(id).data()[0].to_f64_lossless();
            match s {
                Stream::Position => r.position = v,
                Stream::Velocity => r.velocity = v,
                Stream::Sum => r.sum = v,
            }
        }
        r.total = g.value(self.total).data()[0].to_f64_lossless();
        r
    }
}

/// Records the batch-mean loss. Each clip's floored log-probabilities are
/// contracted with a constant target holding `-(m/M)/B` at every sample's label.
pub fn incremental_loss_graph<F: Scalar>(
    g: &mut Graph<F>,
    out: &TemporalOutput,
    labels: &[usize],
    classes: usize,
) -> Result<LossNodes> {
    let b = labels.len();
    if b == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {y} outside 0..{classes}")));
    }
    let floor = F::from_f64_lossy(LOG_FLOOR);
    let mut clamped = 0;
    let mut streams = Vec::new();
    let mut terms = Vec::new();
    for so in &out.streams {
        let m_total = so.log_probs.len();
        let mut acc: Option<NodeId> = None;
        for (m, &lp) in so.log_probs.iter().enumerate() {
            let v = g.value(lp);
            clamped += labels
                .iter()
                .enumerate()
                .filter(|&(r, &y)| v.row(r)[y].to_f64_lossless() < LOG_FLOOR)
                .count();
            let w = -((m + 1) as f64 / m_total as f64) / b as f64;
            let mut target = vec![0.0; b * classes];
            for (r, &y) in labels.iter().enumerate() {
                target[r * classes + y] = w;
            }
            let target = g.constant(Tensor::from_f64(&[b, classes], &target)?)?;
            let floored = g.clamp_min(lp, floor)?;
            let weighted = g.mul(floored, target)?;
            let term = g.sum_all(weighted)?;
            terms.push(term);
            acc = Some(match acc {
                Some(a) => g.add(a, term)?,
                None => term,
            });
        }
        streams.push((so.stream, acc.expect("at least one clip")));
    }
    let mut total = streams[0].1;
    for &(_, s) in &streams[1..] {
        total = g.add(total, s)?;
    }
    Ok(LossNodes {
        total,
        streams,
        terms,
        clamped,
    })
}
