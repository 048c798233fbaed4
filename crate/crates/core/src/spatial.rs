//! Spatial reasoning network: a shared part encoder followed by a residual
//! graph network over the body-part nodes, read out into one feature per frame.
//!
//! Every function here works on a batch of frames at once: each node tensor
//! is `[rows, width]` with one row per frame.

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::cell::{lstm_cell, LstmWeights};
use crate::error::{Error, Result};
use crate::rng::ModelRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SrnConfig {
    /// Coordinate width of each part (three per joint).
    pub part_widths: Vec<usize>,
    /// Width of the encoded part feature and of the relation feature.
    pub part_feature: usize,
    /// Node hidden-state width. Must equal `part_feature` for the residual update.
    pub rgnn_hidden: usize,
    /// Propagation steps; zero disables the graph network (part features are read out directly).
    pub steps: usize,
    /// Width of the per-frame spatial feature.
    pub output: usize,
}

impl SrnConfig {
    pub fn parts(&self) -> usize {
        self.part_widths.len()
    }

    pub fn max_part_width(&self) -> usize {
        self.part_widths.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.part_widths.is_empty() || self.part_widths.contains(&0) {
            return Err(Error::Config("every body part needs a positive width".into()));
        }
        if self.part_feature == 0 || self.rgnn_hidden == 0 || self.output == 0 {
            return Err(Error::Config("spatial widths must be positive".into()));
        }
        if self.steps > 0 && self.part_feature != self.rgnn_hidden {
            return Err(Error::Config(format!(
                "relation width {} must equal graph hidden width {} for the residual update",
                self.part_feature, self.rgnn_hidden
            )));
        }
        Ok(())
    }

    /// Registers `srn.*` parameters. The graph-network weights exist only when `steps > 0`.
    pub fn register<F: Scalar>(&self, store: &mut ParamStore<F>, rng: &mut ModelRng) -> Result<()> {
        self.validate()?;
        let (pw, e, ds) = (self.max_part_width(), self.part_feature, self.rgnn_hidden);
        store.insert_uniform("srn.encoder.weight", &[pw, e], pw, rng)?;
        store.insert_uniform("srn.encoder.bias", &[e], pw, rng)?;
        if self.steps > 0 {
            store.insert_uniform("srn.rgnn.message.weight", &[ds, ds], ds, rng)?;
            store.insert_uniform("srn.rgnn.message.bias", &[ds], ds, rng)?;
            LstmWeights::register(store, "srn.rgnn.cell", e + ds, ds, rng)?;
        }
        let r = self.parts() * e;
        store.insert_uniform("srn.readout.weight", &[r, self.output], r, rng)?;
        store.insert_uniform("srn.readout.bias", &[self.output], r, rng)?;
        Ok(())
    }
}

/// Graph handles for the spatial parameters.
#[derive(Clone, Copy, Debug)]
pub struct SrnWeights {
    pub encoder_weight: NodeId,
    pub encoder_bias: NodeId,
    pub message: Option<(NodeId, NodeId)>,
    pub cell: Option<LstmWeights>,
    pub readout_weight: NodeId,
    pub readout_bias: NodeId,
}

impl SrnWeights {
    pub fn bind<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, config: &SrnConfig) -> Result<Self> {
        let (message, cell) = if config.steps > 0 {
            (
                Some((
                    g.param(store, "srn.rgnn.message.weight")?,
                    g.param(store, "srn.rgnn.message.bias")?,
                )),
                Some(LstmWeights::bind(g, store, "srn.rgnn.cell")?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            encoder_weight: g.param(store, "srn.encoder.weight")?,
            encoder_bias: g.param(store, "srn.encoder.bias")?,
            message,
            cell,
            readout_weight: g.param(store, "srn.readout.weight")?,
            readout_bias: g.param(store, "srn.readout.bias")?,
        })
    }
}

/// Zero-pads each part's `[rows, width_k]` coordinates to `[rows, max_width]`.
pub fn pad_parts<F: Scalar>(parts: &[Vec<Vec<f64>>], max_width: usize) -> Result<Vec<Tensor<F>>> {
    // parts[row][k] -> per-part tensors
    let rows = parts.len();
    let k = parts.first().map_or(0, Vec::len);
    (0..k)
        .map(|p| {
            let mut data = vec![F::zero(); rows * max_width];
            for (r, frame) in parts.iter().enumerate() {
                let v = &frame[p];
                if v.len() > max_width {
                    return Err(Error::Shape {
                        op: "pad-parts",
                        lhs: vec![v.len()],
                        rhs: vec![max_width],
                    });
                }
                for (c, &x) in v.iter().enumerate() {
                    data[r * max_width + c] = F::from_f64_lossy(x);
                }
            }
            Tensor::matrix(rows, max_width, data)
        })
        .collect()
}

/// `e_k = pad(part_k) · W_enc + b_enc`, one encoder shared by every part.
pub fn encode_parts<F: Scalar>(g: &mut Graph<F>, parts: &[NodeId], w: &SrnWeights) -> Result<Vec<NodeId>> {
    parts
        .iter()
        .map(|&p| g.linear(p, w.encoder_weight, w.encoder_bias))
        .collect()
}

/// Messages over the complete graph without self-loops:
/// `m_k = Σ_{i≠k} (s_i · W_m + b_m)`.
pub fn rgnn_message<F: Scalar>(
    g: &mut Graph<F>,
    states: &[NodeId],
    message_weight: NodeId,
    message_bias: NodeId,
) -> Result<Vec<NodeId>> {
    let sent = states
        .iter()
        .map(|&s| g.linear(s, message_weight, message_bias))
        .collect::<Result<Vec<_>>>()?;
    let k = sent.len();
    (0..k)
        .map(|target| {
            let mut acc: Option<NodeId> = None;
            for (i, &u) in sent.iter().enumerate() {
                if i == target {
                    continue;
                }
                acc = Some(match acc {
                    None => u,
                    Some(a) => g.add(a, u)?,
                });
            }
            match acc {
                Some(a) => Ok(a),
                // a single node has no neighbours
                None => g.scale(sent[target], F::zero()),
            }
        })
        .collect()
}

/// Node update: `(s_k, c_k) = LSTM([r_k; m_k], s_k, c_k)`, then `r_k += s_k`.
pub fn rgnn_step<F: Scalar>(
    g: &mut Graph<F>,
    cell: &LstmWeights,
    relation: NodeId,
    message: NodeId,
    state: NodeId,
    cell_state: NodeId,
) -> Result<(NodeId, NodeId, NodeId)> {
    let input = g.concat(&[relation, message])?;
    let (s, c) = lstm_cell(g, cell, input, state, cell_state)?;
    let r = g.add(relation, s)?;
    Ok((s, c, r))
}

/// Intermediate values of one spatial forward pass.
#[derive(Clone, Debug)]
pub struct SrnTrace {
    /// Encoded part features `e_k`.
    pub part_features: Vec<NodeId>,
    /// `states[t][k]` is `s_k` after step `t + 1`.
    pub states: Vec<Vec<NodeId>>,
    /// `messages[t][k]` is `m_k` at step `t + 1`.
    pub messages: Vec<Vec<NodeId>>,
    /// `relations[t][k]` is `r_k` after step `t` (`relations[0]` are the part features).
    pub relations: Vec<Vec<NodeId>>,
    /// Spatial feature per row, `[rows, output]`.
    pub output: NodeId,
}

/// Encodes parts, runs the configured number of graph steps and reads out
/// `q = concat(r_1..r_K) · W_r + b_r`.
pub fn srn_forward<F: Scalar>(
    g: &mut Graph<F>,
    parts: &[NodeId],
    w: &SrnWeights,
    config: &SrnConfig,
) -> Result<SrnTrace> {
    if parts.len() != config.parts() {
        return Err(Error::Config(format!(
            "expected {} part inputs, got {}",
            config.parts(),
            parts.len()
        )));
    }
    let e = encode_parts(g, parts, w)?;
    let rows = g.value(e[0]).rows();
    let mut relations = vec![e.clone()];
    let mut states_log = Vec::new();
    let mut messages_log = Vec::new();

    if config.steps > 0 {
        let (mw, mb) = w.message.ok_or_else(|| Error::Config("graph network weights missing".into()))?;
        let cell = w.cell.ok_or_else(|| Error::Config("graph network cell missing".into()))?;
        let zero = g.constant(Tensor::zeros(&[rows, config.rgnn_hidden]))?;
        let mut s = vec![zero; e.len()];
        let mut c = vec![zero; e.len()];
        let mut r = e.clone();
        for _ in 0..config.steps {
            let m = rgnn_message(g, &s, mw, mb)?;
            let mut next = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..e.len() {
                let (sk, ck, rk) = rgnn_step(g, &cell, r[k], m[k], s[k], c[k])?;
                next.0.push(sk);
                next.1.push(ck);
                next.2.push(rk);
            }
            (s, c, r) = next;
            states_log.push(s.clone());
            messages_log.push(m);
            relations.push(r.clone());
        }
    }

    let last = relations.last().expect("at least the part features");
    let joined = g.concat(last)?;
    let output = g.linear(joined, w.readout_weight, w.readout_bias)?;
    Ok(SrnTrace {
        part_features: e,
        states: states_log,
        messages: messages_log,
        relations,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro(steps: usize) -> SrnConfig {
        SrnConfig {
            part_widths: vec![3, 6, 9],
            part_feature: 4,
            rgnn_hidden: 4,
            steps,
            output: 5,
        }
    }

    fn random_parts(rows: usize, widths: &[usize], rng: &mut ModelRng) -> Vec<Vec<Vec<f64>>> {
        (0..rows)
            .map(|_| widths.iter().map(|&w| (0..w).map(|_| rng.uniform(-1., 1.)).collect()).collect())
            .collect()
    }

    fn setup(cfg: &SrnConfig, seed: u64) -> ParamStore<f64> {
        let mut store = ParamStore::new();
        cfg.register(&mut store, &mut ModelRng::seed_from(seed)).unwrap();
        store
    }

    fn part_nodes(g: &mut Graph<f64>, cfg: &SrnConfig, parts: &[Vec<Vec<f64>>]) -> Vec<NodeId> {
        pad_parts::<f64>(parts, cfg.max_part_width())
            .unwrap()
            .into_iter()
            .map(|t| g.constant(t).unwrap())
            .collect()
    }

    #[test]
    fn zero_encoder_gives_zero_features() {
        let cfg = micro(1);
        let mut store = setup(&cfg, 1);
        store.get_mut("srn.encoder.weight").unwrap().data_mut().fill(0.0);
        store.get_mut("srn.encoder.bias").unwrap().data_mut().fill(0.0);
        let mut g = Graph::new();
        let w = SrnWeights::bind(&mut g, &store, &cfg).unwrap();
        let parts = random_parts(2, &cfg.part_widths, &mut ModelRng::seed_from(2));
        let p = part_nodes(&mut g, &cfg, &parts);
        let e = encode_parts(&mut g, &p, &w).unwrap();
        assert!(e.iter().all(|&n| g.value(n).data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shared_encoder_maps_equal_inputs_equally() {
        let cfg = micro(1);
        let store = setup(&cfg, 3);
        let mut g = Graph::new();
        let w = SrnWeights::bind(&mut g, &store, &cfg).unwrap();
        // part 0 (3 wide) padded equals part 1 (6 wide) with trailing zeros
        let parts = vec![vec![vec![0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3, 0.0, 0.0, 0.0], vec![1.0; 9]]];
        let p = part_nodes(&mut g, &cfg, &parts);
        let e = encode_parts(&mut g, &p, &w).unwrap();
        assert_eq!(g.value(e[0]), g.value(e[1]));
    }

    #[test]
    fn encoder_matches_dense_matvec() {
        let cfg = micro(1);
        let store = setup(&cfg, 4);
        let mut g = Graph::new();
        let w = SrnWeights::bind(&mut g, &store, &cfg).unwrap();
        let parts = random_parts(1, &cfg.part_widths, &mut ModelRng::seed_from(5));
        let p = part_nodes(&mut g, &cfg, &parts);
        let e = encode_parts(&mut g, &p, &w).unwrap();
        let wt = store.expect("srn.encoder.weight").data();
        let b = store.expect("srn.encoder.bias").data();
        for k in 0..3 {
            let mut x = parts[0][k].clone();
            x.resize(9, 0.0);
            for j in 0..4 {
                let want: f64 = b[j] + (0..9).map(|i| x[i] * wt[i * 4 + j]).sum::<f64>();
                assert!((g.value(e[k]).data()[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn messages_zero_and_identity_cases() {
        let mut g = Graph::<f64>::new();
        let u = g.constant(Tensor::from_f64(&[1, 2], &[1., 2.]).unwrap()).unwrap();
        let v = g.constant(Tensor::from_f64(&[1, 2], &[10., 20.]).unwrap()).unwrap();
        let w = g.constant(Tensor::from_f64(&[1, 2], &[100., 200.]).unwrap()).unwrap();
        let eye = g.constant(Tensor::from_f64(&[2, 2], &[1., 0., 0., 1.]).unwrap()).unwrap();
        let zb = g.constant(Tensor::zeros(&[2])).unwrap();
        let m = rgnn_message(&mut g, &[u, v, w], eye, zb).unwrap();
        assert_eq!(g.value(m[0]).data(), &[110., 220.]);
        assert_eq!(g.value(m[1]).data(), &[101., 202.]);
        assert_eq!(g.value(m[2]).data(), &[11., 22.]);

        let zero = g.constant(Tensor::zeros(&[1, 2])).unwrap();
        let rand_w = g.constant(Tensor::from_f64(&[2, 2], &[0.3, -1., 2., 0.5]).unwrap()).unwrap();
        let m = rgnn_message(&mut g, &[zero, zero, zero], rand_w, zb).unwrap();
        assert!(m.iter().all(|&n| g.value(n).data() == [0.0, 0.0]));
    }

    #[test]
    fn messages_match_pairwise_loop() {
        let mut rng = ModelRng::seed_from(6);
        let (k, d) = (5, 3);
        let states: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.uniform(-1., 1.)).collect()).collect();
        let wm: Vec<f64> = (0..d * d).map(|_| rng.uniform(-1., 1.)).collect();
        let bm: Vec<f64> = (0..d).map(|_| rng.uniform(-1., 1.)).collect();

        let mut g = Graph::<f64>::new();
        let s: Vec<NodeId> = states
            .iter()
            .map(|v| g.constant(Tensor::from_f64(&[1, d], v).unwrap()).unwrap())
            .collect();
        let w = g.constant(Tensor::from_f64(&[d, d], &wm).unwrap()).unwrap();
        let b = g.constant(Tensor::from_f64(&[d], &bm).unwrap()).unwrap();
        let m = rgnn_message(&mut g, &s, w, b).unwrap();
        for target in 0..k {
            for j in 0..d {
                let mut want = 0.0;
                for i in 0..k {
                    if i != target {
                        want += bm[j] + (0..d).map(|p| states[i][p] * wm[p * d + j]).sum::<f64>();
                    }
                }
                assert!((g.value(m[target]).data()[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_step_is_exact() {
        for steps in [1, 3] {
            let cfg = micro(steps);
            let store = setup(&cfg, 7);
            let mut g = Graph::new();
            let w = SrnWeights::bind(&mut g, &store, &cfg).unwrap();
            let parts = random_parts(3, &cfg.part_widths, &mut ModelRng::seed_from(8));
            let p = part_nodes(&mut g, &cfg, &parts);
            let tr = srn_forward(&mut g, &p, &w, &cfg).unwrap();
            assert_eq!(tr.relations.len(), steps + 1);
            for t in 1..=steps {
                for k in 0..3 {
                    let prev = g.value(tr.relations[t - 1][k]).data();
                    let s = g.value(tr.states[t - 1][k]).data();
                    let cur = g.value(tr.relations[t][k]).data();
                    for i in 0..cur.len() {
                        assert_eq!(cur[i], prev[i] + s[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_message_weights_decouple_nodes() {
        let cfg = micro(3);
        let mut store = setup(&cfg, 9);
        store.get_mut("srn.rgnn.message.weight").unwrap().data_mut().fill(0.0);
        store.get_mut("srn.rgnn.message.bias").unwrap().data_mut().fill(0.0);
        let mut rng = ModelRng::seed_from(10);
        let base = random_parts(1, &cfg.part_widths, &mut rng);
        let mut bumped = base.clone();
        bumped[0][2][4] += 0.5;

        let states = |parts: &[Vec<Vec<f64>>]| {
            let mut g = Graph::new();
            let w = SrnWeights::bind(&mut g, &store, &cfg).unwrap();
            let p = part_nodes(&mut g, &cfg, parts);
            let tr = srn_forward(&mut g, &p, &w, &cfg).unwrap();
            tr.states
                .iter()
                .map(|step| step.iter().map(|&n| g.value(n).clone()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let (a, b) = (states(&base), states(&bumped));
        for t in 0..3 {
            assert_eq!(a[t][0], b[t][0]);
            assert_eq!(a[t][1], b[t][1]);
            assert_ne!(a[t][2], b[t][2]);
        }
    }

    #[test]
    fn rejects_mismatched_residual_widths() {
        let mut cfg = micro(2);
        cfg.rgnn_hidden = 6;
        assert!(cfg.validate().is_err());
        cfg.steps = 0;
        assert!(cfg.validate().is_ok());
    }
}
