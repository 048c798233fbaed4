//! Temporal stack learning network.
//!
//! Two streams (position features and their frame differences) each run a
//! stack of skip-clip LSTM layers. A skip-clip layer processes the sequence
//! clip by clip with a shared cell; the hidden state entering clip `m` is the
//! running sum `H_{m-1}` of all previous clip-final hiddens, and the cell
//! state restarts at zero. Every clip's top-layer sum is scored by a
//! per-stream classifier head.

use std::fmt;

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::cell::{lstm_cell, LstmWeights};
use crate::error::{Error, Result};
use crate::rng::ModelRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Position,
    Velocity,
    /// Sum of the position and velocity clip representations.
    Sum,
}

impl Stream {
    pub fn key(self) -> &'static str {
        match self {
            Stream::Position => "position",
            Stream::Velocity => "velocity",
            Stream::Sum => "sum",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TslnConfig {
    /// Width of the per-frame input feature.
    pub input: usize,
    /// Frames per sequence.
    pub frames: usize,
    /// Frames per clip.
    pub clip_len: usize,
    pub layers: usize,
    /// LSTM cell width of every skip-clip layer.
    pub hidden: usize,
    /// Width between the two classifier layers.
    pub head_hidden: usize,
    pub classes: usize,
    pub dropout: f64,
    /// When false, the used frames form one clip and the layers are plain LSTMs.
    pub skip_clip: bool,
    pub position: bool,
    pub velocity: bool,
}

impl TslnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input width", self.input),
            ("frame count", self.frames),
            ("clip length", self.clip_len),
            ("layer count", self.layers),
            ("hidden width", self.hidden),
            ("head width", self.head_hidden),
            ("class count", self.classes),
        ];
        for (what, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{what} must be positive")));
            }
        }
        if self.clip_len > self.frames {
            return Err(Error::Config(format!(
                "clip length {} exceeds frame count {}",
                self.clip_len, self.frames
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.position && !self.velocity {
            return Err(Error::Config("at least one temporal stream must be enabled".into()));
        }
        Ok(())
    }

    /// Number of full clips of the configured length.
    pub fn clips(&self) -> usize {
        self.frames / self.clip_len
    }

    /// `(clip count, clip length)` actually run: a single clip of all used
    /// frames when skip-clip recurrence is off.
    pub fn clip_layout(&self) -> (usize, usize) {
        if self.skip_clip {
            (self.clips(), self.clip_len)
        } else {
            (1, self.clips() * self.clip_len)
        }
    }

    pub fn input_streams(&self) -> Vec<Stream> {
        let mut s = Vec::new();
        if self.position {
            s.push(Stream::Position);
        }
        if self.velocity {
            s.push(Stream::Velocity);
        }
        s
    }

    /// Streams that carry a classifier head.
    pub fn head_streams(&self) -> Vec<Stream> {
        let mut s = self.input_streams();
        if s.len() == 2 {
            s.push(Stream::Sum);
        }
        s
    }

    /// Stream whose last-clip probabilities decide the predicted class.
    pub fn decision_stream(&self) -> Stream {
        match (self.position, self.velocity) {
            (true, true) => Stream::Sum,
            (true, false) => Stream::Position,
            _ => Stream::Velocity,
        }
    }

    pub fn register<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut ModelRng) -> Result<()> {
        self.validate()?;
        for stream in self.input_streams() {
            for l in 0..self.layers {
                let input = if l == 0 { self.input } else { 2 * self.hidden };
                LstmWeights::register(store, &layer_prefix(stream, l), input, self.hidden, rng)?;
            }
        }
        for stream in self.head_streams() {
            let p = format!("head.{stream}");
            store.insert_uniform(format!("{p}.fc1.weight"), &[self.hidden, self.head_hidden], self.hidden, rng)?;
            store.insert_uniform(format!("{p}.fc1.bias"), &[self.head_hidden], self.hidden, rng)?;
            store.insert_uniform(format!("{p}.fc2.weight"), &[self.head_hidden, self.classes], self.head_hidden, rng)?;
            store.insert_uniform(format!("{p}.fc2.bias"), &[self.classes], self.head_hidden, rng)?;
        }
        Ok(())
    }
}

fn layer_prefix(stream: Stream, layer: usize) -> String {
    format!("tsln.{stream}.layer{}", layer + 1)
}

/// Frames grouped into consecutive equal-length clips.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSet<T> {
    pub clips: Vec<Vec<T>>,
}

impl<T: Clone> ClipSet<T> {
    pub fn clip_count(&self) -> usize {
        self.clips.len()
    }

    pub fn frames(&self) -> impl Iterator<Item = &T> {
        self.clips.iter().flatten()
    }

    /// Same clip structure over new per-frame values.
    pub fn map<U>(&self, mut f: impl FnMut(usize, &T) -> Result<U>) -> Result<ClipSet<U>> {
        let mut t = 0;
        let clips = self
            .clips
            .iter()
            .map(|c| {
                c.iter()
                    .map(|x| {
                        let out = f(t, x);
                        t += 1;
                        out
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClipSet { clips })
    }
}

/// `floor(N/d)` clips of `d` frames; clip `m` (0-based) holds frames
/// `m·d .. (m+1)·d`, and the trailing `N mod d` frames are dropped.
pub fn split_clips<T: Clone>(features: &[T], clip_len: usize) -> Result<ClipSet<T>> {
    if clip_len == 0 || features.len() < clip_len {
        return Err(Error::Config(format!(
            "cannot split {} frames into clips of {clip_len}",
            features.len()
        )));
    }
    let m = features.len() / clip_len;
    Ok(ClipSet {
        clips: features[..m * clip_len].chunks(clip_len).map(<[T]>::to_vec).collect(),
    })
}

/// `v_1 = 0`, `v_n = q_n − q_{n−1}`.
pub fn compute_velocity<F: Scalar>(g: &mut Graph<F>, frames: &[NodeId]) -> Result<Vec<NodeId>> {
    let Some(&first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut out = vec![g.constant(Tensor::zeros(g.shape(first)))?];
    for w in frames.windows(2) {
        out.push(g.sub(w[1], w[0])?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct LayerOutput {
    /// Hidden state after every frame.
    pub hiddens: ClipSet<NodeId>,
    /// Hidden after the last frame of each clip, `h'_m`.
    pub clip_final: Vec<NodeId>,
    /// Running sums `H_m = H_{m−1} + h'_m`.
    pub accum: Vec<NodeId>,
}

/// One skip-clip layer. Clip `m` starts from hidden `H_{m−1}` (zero before the
/// first clip) and cell state zero.
pub fn skip_clip_layer_forward<F: Scalar>(
    g: &mut Graph<F>,
    inputs: &ClipSet<NodeId>,
    cell: &LstmWeights,
) -> Result<LayerOutput> {
    let first = *inputs
        .frames()
        .next()
        .ok_or_else(|| Error::Config("skip-clip layer needs at least one frame".into()))?;
    let rows = g.value(first).rows();
    let zero = g.constant(Tensor::zeros(&[rows, cell.hidden]))?;
    let mut accum: Vec<NodeId> = Vec::with_capacity(inputs.clip_count());
    let mut clip_final = Vec::with_capacity(inputs.clip_count());
    let mut hiddens = Vec::with_capacity(inputs.clip_count());
    for clip in &inputs.clips {
        let carried = accum.last().copied().unwrap_or(zero);
        let (mut h, mut c) = (carried, zero);
        let mut per_frame = Vec::with_capacity(clip.len());
        for &x in clip {
            (h, c) = lstm_cell(g, cell, x, h, c)?;
            per_frame.push(h);
        }
        let total = g.add(carried, h)?;
        clip_final.push(h);
        accum.push(total);
        hiddens.push(per_frame);
    }
    Ok(LayerOutput {
        hiddens: ClipSet { clips: hiddens },
        clip_final,
        accum,
    })
}

#[derive(Clone, Debug)]
pub struct StackOutput {
    pub layers: Vec<LayerOutput>,
}

impl StackOutput {
    pub fn top(&self) -> &LayerOutput {
        self.layers.last().expect("at least one layer")
    }
}

/// Layer 1 reads the stream features; layer `l ≥ 2` reads
/// `[h^{l−1}_{t−1}; h^{l−1}_t]` with `h^{l−1}_0 = 0`, across clip boundaries
/// included. Dropout acts on each layer's hiddens before the next layer.
pub fn stack_forward<F: Scalar>(
    g: &mut Graph<F>,
    features: &ClipSet<NodeId>,
    layers: &[LstmWeights],
    dropout: f64,
) -> Result<StackOutput> {
    let mut outputs: Vec<LayerOutput> = Vec::with_capacity(layers.len());
    let mut input = features.clone();
    for (l, cell) in layers.iter().enumerate() {
        let out = skip_clip_layer_forward(g, &input, cell)?;
        if l + 1 < layers.len() {
            let dropped = out.hiddens.map(|_, &h| g.dropout(h, dropout))?;
            let flat: Vec<NodeId> = dropped.frames().copied().collect();
            let zero = g.constant(Tensor::zeros(g.shape(flat[0])))?;
            input = dropped.map(|t, &h| {
                let prev = if t == 0 { zero } else { flat[t - 1] };
                g.concat(&[prev, h])
            })?;
        }
        outputs.push(out);
    }
    Ok(StackOutput { layers: outputs })
}

#[derive(Clone, Copy, Debug)]
pub struct HeadWeights {
    pub fc1_weight: NodeId,
    pub fc1_bias: NodeId,
    pub fc2_weight: NodeId,
    pub fc2_bias: NodeId,
}

impl HeadWeights {
    pub fn bind<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, stream: Stream) -> Result<Self> {
        let p = format!("head.{stream}");
        Ok(Self {
            fc1_weight: g.param(store, &format!("{p}.fc1.weight"))?,
            fc1_bias: g.param(store, &format!("{p}.fc1.bias"))?,
            fc2_weight: g.param(store, &format!("{p}.fc2.weight"))?,
            fc2_bias: g.param(store, &format!("{p}.fc2.bias"))?,
        })
    }
}

/// Scores `O = W₂·tanh(W₁·H + b₁) + b₂` and log-probabilities `log softmax(O)`.
pub fn classify_clip<F: Scalar>(
    g: &mut Graph<F>,
    accum: NodeId,
    head: &HeadWeights,
    dropout: f64,
) -> Result<(NodeId, NodeId)> {
    let x = g.dropout(accum, dropout)?;
    let z = g.linear(x, head.fc1_weight, head.fc1_bias)?;
    let z = g.tanh(z)?;
    let scores = g.linear(z, head.fc2_weight, head.fc2_bias)?;
    let log_probs = g.log_softmax(scores)?;
    Ok((scores, log_probs))
}

#[derive(Clone, Debug)]
pub struct TslnWeights {
    pub stacks: Vec<(Stream, Vec<LstmWeights>)>,
    pub heads: Vec<(Stream, HeadWeights)>,
}

impl TslnWeights {
    pub fn bind<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, config: &TslnConfig) -> Result<Self> {
        let stacks = config
            .input_streams()
            .into_iter()
            .map(|s| {
                let layers = (0..config.layers)
                    .map(|l| LstmWeights::bind(g, store, &layer_prefix(s, l)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((s, layers))
            })
            .collect::<Result<Vec<_>>>()?;
        let heads = config
            .head_streams()
            .into_iter()
            .map(|s| Ok((s, HeadWeights::bind(g, store, s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stacks, heads })
    }
}

/// Per-stream clip outputs on the graph.
#[derive(Clone, Debug)]
pub struct StreamOutput {
    pub stream: Stream,
    /// `H_m` per clip, `[rows, hidden]`.
    pub accum: Vec<NodeId>,
    /// Scores `O_m` per clip, `[rows, classes]`.
    pub scores: Vec<NodeId>,
    /// `log ŷ_m` per clip, `[rows, classes]`.
    pub log_probs: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct TemporalOutput {
    pub stacks: Vec<(Stream, StackOutput)>,
    pub streams: Vec<StreamOutput>,
}

impl TemporalOutput {
    pub fn stream(&self, s: Stream) -> Option<&StreamOutput> {
        self.streams.iter().find(|o| o.stream == s)
    }
}

/// Runs both streams over per-frame features `[rows, input]` and scores every clip.
pub fn two_stream_forward<F: Scalar>(
    g: &mut Graph<F>,
    frames: &[NodeId],
    weights: &TslnWeights,
    config: &TslnConfig,
) -> Result<TemporalOutput> {
    if frames.len() != config.frames {
        return Err(Error::Config(format!(
            "expected {} frames, got {}",
            config.frames,
            frames.len()
        )));
    }
    let (_, clip_len) = config.clip_layout();
    let mut stacks = Vec::new();
    for (stream, layers) in &weights.stacks {
        let feats = match stream {
            Stream::Velocity => compute_velocity(g, frames)?,
            _ => frames.to_vec(),
        };
        let clips = split_clips(&feats, clip_len)?;
        stacks.push((*stream, stack_forward(g, &clips, layers, config.dropout)?));
    }

    let mut accums: Vec<(Stream, Vec<NodeId>)> = stacks
        .iter()
        .map(|(s, out)| (*s, out.top().accum.clone()))
        .collect();
    if accums.len() == 2 {
        let sum = accums[0]
            .1
            .iter()
            .zip(&accums[1].1)
            .map(|(&p, &v)| g.add(p, v))
            .collect::<Result<Vec<_>>>()?;
        accums.push((Stream::Sum, sum));
    }

    let mut streams = Vec::new();
    for (stream, accum) in accums {
        let head = weights
            .heads
            .iter()
            .find(|(s, _)| *s == stream)
            .map(|(_, h)| *h)
            .ok_or_else(|| Error::Config(format!("no classifier head for stream {stream}")))?;
        let (mut scores, mut log_probs) = (Vec::new(), Vec::new());
        for &h in &accum {
            let (o, lp) = classify_clip(g, h, &head, config.dropout)?;
            scores.push(o);
            log_probs.push(lp);
        }
        streams.push(StreamOutput {
            stream,
            accum,
            scores,
            log_probs,
        });
    }
    Ok(TemporalOutput { stacks, streams })
}
