//! The full model: spatial reasoning per frame, then the two-stream temporal stack.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{check_gradient_terms, GradCheckReport, Graph, NodeId, ParamStore, FD_STEP};
use crate::data::{FixedLengthSequence, PartDecomposition};
use crate::error::{Error, Result};
use crate::rng::ModelRng;
use crate::spatial::{pad_parts, srn_forward, SrnConfig, SrnTrace, SrnWeights};
use crate::temporal::{two_stream_forward, Stream, TemporalOutput, TslnConfig, TslnWeights};
use crate::tensor::{Scalar, Tensor};
use crate::training::loss::{incremental_loss_graph, LossNodes};

/// Architecture ablations. `Full` is the complete model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Variant {
    #[default]
    Full,
    /// Part encoder and plain stacked LSTMs: no graph network, no skip-clip recurrence.
    FcLstm,
    /// Graph network with plain stacked LSTMs.
    SrnLstm,
    /// Part encoder with the full temporal stack.
    FcTsln,
    /// Full model with the position stream only.
    Position,
    /// Full model with the velocity stream only.
    Velocity,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::FcLstm,
        Variant::SrnLstm,
        Variant::FcTsln,
        Variant::Position,
        Variant::Velocity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::FcLstm => "fc-lstm",
            Variant::SrnLstm => "srn-lstm",
            Variant::FcTsln => "fc-tsln",
            Variant::Position => "position",
            Variant::Velocity => "velocity",
        }
    }

    pub fn uses_graph_network(self) -> bool {
        !matches!(self, Variant::FcLstm | Variant::FcTsln)
    }

    pub fn uses_skip_clip(self) -> bool {
        !matches!(self, Variant::FcLstm | Variant::SrnLstm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub parts: PartDecomposition,
    pub part_feature: usize,
    pub rgnn_hidden: usize,
    pub rgnn_steps: usize,
    pub spatial_output: usize,
    pub frames: usize,
    pub clip_len: usize,
    pub layers: usize,
    pub lstm_hidden: usize,
    pub head_hidden: usize,
    pub classes: usize,
    pub dropout: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            parts: PartDecomposition::ntu8(),
            part_feature: 256,
            rgnn_hidden: 256,
            rgnn_steps: 5,
            spatial_output: 256,
            frames: 100,
            clip_len: 10,
            layers: 3,
            lstm_hidden: 512,
            head_hidden: 128,
            classes: 60,
            dropout: 0.5,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Three parts over six joints, every width 8, `T = 2`, three clips of two frames, four classes.
    pub fn micro() -> Self {
        Self {
            parts: PartDecomposition::parse("0;1,2;3,4,5").expect("valid"),
            part_feature: 8,
            rgnn_hidden: 8,
            rgnn_steps: 2,
            spatial_output: 8,
            frames: 6,
            clip_len: 2,
            layers: 3,
            lstm_hidden: 8,
            head_hidden: 8,
            classes: 4,
            dropout: 0.0,
            variant: Variant::Full,
        }
    }

    pub fn srn(&self) -> SrnConfig {
        SrnConfig {
            part_widths: self.parts.widths(),
            part_feature: self.part_feature,
            rgnn_hidden: self.rgnn_hidden,
            steps: if self.variant.uses_graph_network() { self.rgnn_steps } else { 0 },
            output: self.spatial_output,
        }
    }

    pub fn tsln(&self) -> TslnConfig {
        TslnConfig {
            input: self.spatial_output,
            frames: self.frames,
            clip_len: self.clip_len,
            layers: self.layers,
            hidden: self.lstm_hidden,
            head_hidden: self.head_hidden,
            classes: self.classes,
            dropout: self.dropout,
            skip_clip: self.variant.uses_skip_clip(),
            position: self.variant != Variant::Velocity,
            velocity: self.variant != Variant::Position,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rgnn_steps == 0 {
            return Err(Error::Config("graph network steps must be at least 1".into()));
        }
        self.srn().validate()?;
        self.tsln().validate()
    }
}

/// Samples packed for one forward pass: part `k` is `[batch·frames, max_width]`,
/// row `b·frames + n` holding frame `n` of sample `b`.
#[derive(Clone, Debug)]
pub struct Batch<F> {
    pub parts: Vec<Tensor<F>>,
    pub labels: Vec<usize>,
    pub frames: usize,
}

impl<F: Scalar> Batch<F> {
    pub fn new(samples: &[&FixedLengthSequence], config: &ModelConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let widths = config.parts.widths();
        let mut rows = Vec::with_capacity(samples.len() * config.frames);
        for s in samples {
            if s.len() != config.frames {
                return Err(Error::Data(format!(
                    "sample {} has {} frames, model expects {}",
                    s.sample_id,
                    s.len(),
                    config.frames
                )));
            }
            if s.label >= config.classes {
                return Err(Error::Data(format!(
                    "sample {} has label {} outside 0..{}",
                    s.sample_id, s.label, config.classes
                )));
            }
            for frame in &s.parts {
                let ok = frame.len() == widths.len() && frame.iter().zip(&widths).all(|(v, &w)| v.len() == w);
                if !ok {
                    return Err(Error::Data(format!(
                        "sample {}: part widths do not match the decomposition",
                        s.sample_id
                    )));
                }
                rows.push(frame.clone());
            }
        }
        Ok(Self {
            parts: pad_parts(&rows, config.parts.max_width())?,
            labels: samples.iter().map(|s| s.label).collect(),
            frames: config.frames,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub spatial: SrnTrace,
    /// Spatial feature of each frame, `[batch, spatial_output]`.
    pub frames: Vec<NodeId>,
    pub temporal: TemporalOutput,
}

/// Numeric per-clip outputs for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipDynamics {
    pub streams: Vec<StreamDynamics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamDynamics {
    pub stream: Stream,
    /// Top-layer clip-final hiddens `h'_m` (empty for the sum stream).
    pub clip_final: Vec<Vec<f64>>,
    /// `H_m` per clip.
    pub accum: Vec<Vec<f64>>,
    /// Scores `O_m` per clip.
    pub scores: Vec<Vec<f64>>,
    /// Probabilities `ŷ_m` per clip.
    pub probs: Vec<Vec<f64>>,
}

impl ClipDynamics {
    pub fn stream(&self, s: Stream) -> Option<&StreamDynamics> {
        self.streams.iter().find(|d| d.stream == s)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Model parameters plus the generator used for initialization, dropout and shuffling.
#[derive(Clone, Debug, PartialEq)]
pub struct SrTsl<F> {
    config: ModelConfig,
    pub params: ParamStore<F>,
    pub rng: ModelRng,
}

impl<F: Scalar> SrTsl<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ModelRng::seed_from(seed);
        let mut params = ParamStore::new();
        config.srn().register(&mut params, &mut rng)?;
        config.tsln().register(&mut params, &mut rng)?;
        Ok(Self { config, params, rng })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore<F>, rng: ModelRng) -> Result<Self> {
        config.validate()?;
        let expected = Self::new(config.clone(), 0)?;
        for (name, p) in expected.params.iter() {
            match params.get(name) {
                Some(t) if t.shape() == p.value.shape() => {}
                Some(t) => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name} has shape {:?}, config expects {:?}",
                        t.shape(),
                        p.value.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("parameter {name} missing"))),
            }
        }
        if params.len() != expected.params.len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self { config, params, rng })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Records the forward pass of `batch` on `g`. Dropout is active only on training graphs.
    pub fn forward(&self, g: &mut Graph<F>, batch: &Batch<F>) -> Result<ModelOutput> {
        let srn_cfg = self.config.srn();
        let tsln_cfg = self.config.tsln();
        let srn_w = SrnWeights::bind(g, &self.params, &srn_cfg)?;
        let tsln_w = TslnWeights::bind(g, &self.params, &tsln_cfg)?;

        let parts = batch
            .parts
            .iter()
            .map(|t| g.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let spatial = srn_forward(g, &parts, &srn_w, &srn_cfg)?;

        let (b, n, dq) = (batch.len(), batch.frames, srn_cfg.output);
        let per_sample = g.reshape(spatial.output, &[b, n * dq])?;
        let frames = (0..n)
            .map(|i| g.slice(per_sample, i * dq, (i + 1) * dq))
            .collect::<Result<Vec<_>>>()?;
        let temporal = two_stream_forward(g, &frames, &tsln_w, &tsln_cfg)?;
        Ok(ModelOutput {
            spatial,
            frames,
            temporal,
        })
    }

    /// Forward plus the clip-weighted loss, averaged over the batch.
    pub fn loss(&self, g: &mut Graph<F>, batch: &Batch<F>) -> Result<(ModelOutput, LossNodes)> {
        let out = self.forward(g, batch)?;
        let loss = incremental_loss_graph(g, &out.temporal, &batch.labels, self.config.classes)?;
        Ok((out, loss))
    }

    /// Class decided by the last clip of the decision stream, per sample.
    pub fn predictions(&self, g: &Graph<F>, out: &ModelOutput) -> Vec<usize> {
        let stream = self.config.tsln().decision_stream();
        let so = out.temporal.stream(stream).expect("decision stream has a head");
        let last = g.value(*so.log_probs.last().expect("at least one clip"));
        (0..last.rows())
            .map(|r| argmax(&last.row(r).iter().map(|v| v.to_f64_lossless()).collect::<Vec<_>>()))
            .collect()
    }

    pub fn predict_batch(&self, samples: &[&FixedLengthSequence]) -> Result<Vec<usize>> {
        let batch = Batch::new(samples, &self.config)?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &batch)?;
        Ok(self.predictions(&g, &out))
    }

    /// Predicted class of one sample, dropout off.
    pub fn predict(&self, sample: &FixedLengthSequence) -> Result<usize> {
        Ok(self.predict_batch(&[sample])?[0])
    }

    /// Per-clip representations, scores and probabilities of one sample, dropout off.
    pub fn clip_dynamics(&self, sample: &FixedLengthSequence) -> Result<ClipDynamics> {
        let batch = Batch::new(&[sample], &self.config)?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &batch)?;
        let vals = |ids: &[NodeId]| -> Vec<Vec<f64>> { ids.iter().map(|&n| g.value(n).to_f64_vec()).collect() };
        let streams = out
            .temporal
            .streams
            .iter()
            .map(|so| {
                let clip_final = out
                    .temporal
                    .stacks
                    .iter()
                    .find(|(s, _)| *s == so.stream)
                    .map(|(_, st)| vals(&st.top().clip_final))
                    .unwrap_or_default();
                StreamDynamics {
                    stream: so.stream,
                    clip_final,
                    accum: vals(&so.accum),
                    scores: vals(&so.scores),
                    probs: vals(&so.log_probs)
                        .into_iter()
                        .map(|lp| lp.into_iter().map(f64::exp).collect())
                        .collect(),
                }
            })
            .collect();
        Ok(ClipDynamics { streams })
    }
}

/// Random prepared samples matching `config`'s part widths, coordinates in [-1, 1].
pub fn random_samples(config: &ModelConfig, count: usize, rng: &mut ModelRng) -> Vec<FixedLengthSequence> {
    let widths = config.parts.widths();
    (0..count)
        .map(|i| FixedLengthSequence {
            parts: (0..config.frames)
                .map(|_| widths.iter().map(|&w| (0..w).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect())
                .collect(),
            label: (rng.unit() * config.classes as f64) as usize % config.classes,
            subject: 1,
            camera: 1,
            sample_id: format!("random-{i}"),
        })
        .collect()
}

/// Finite-difference check of every trainable parameter of a freshly
/// initialized 64-bit model with dropout disabled, on two random samples.
pub fn gradient_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let config = ModelConfig {
        dropout: 0.0,
        ..config.clone()
    };
    let mut model = SrTsl::<f64>::new(config.clone(), seed)?;
    let mut data_rng = ModelRng::derived(seed, 1);
    let samples = random_samples(&config, 2, &mut data_rng);
    let refs: Vec<&FixedLengthSequence> = samples.iter().collect();
    let batch = Batch::<f64>::new(&refs, &config)?;
    let template = model.clone();
    check_gradient_terms(&mut model.params, FD_STEP, |params| {
        let m = SrTsl {
            config: template.config.clone(),
            params: params.clone(),
            rng: template.rng.clone(),
        };
        let mut g = Graph::new();
        let (_, loss) = m.loss(&mut g, &batch)?;
        Ok((g, loss.total, loss.terms))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("cnn".parse::<Variant>().is_err());
    }

    #[test]
    fn variants_select_components() {
        let mut cfg = ModelConfig::micro();
        cfg.variant = Variant::FcLstm;
        assert_eq!(cfg.srn().steps, 0);
        assert!(!cfg.tsln().skip_clip);
        cfg.variant = Variant::Velocity;
        assert!(!cfg.tsln().position && cfg.tsln().velocity);
        let m = SrTsl::<f32>::new(cfg, 1).unwrap();
        assert!(m.params.get("tsln.position.layer1.weight").is_none());
        assert!(m.params.get("head.sum.fc1.weight").is_none());
    }

    #[test]
    fn default_config_matches_reported_settings() {
        let c = ModelConfig::default();
        assert_eq!((c.rgnn_hidden, c.lstm_hidden, c.frames, c.layers), (256, 512, 100, 3));
        assert_eq!(c.parts.len(), 8);
        assert_eq!(c.dropout, 0.5);
        assert!(c.validate().is_ok());
        assert_eq!(c.tsln().clips(), 10);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn rejects_bad_batch() {
        let cfg = ModelConfig::micro();
        let mut rng = ModelRng::seed_from(0);
        let mut s = random_samples(&cfg, 1, &mut rng);
        s[0].label = 9;
        assert!(Batch::<f32>::new(&[&s[0]], &cfg).is_err());
        assert!(Batch::<f32>::new(&[], &cfg).is_err());
    }
}
