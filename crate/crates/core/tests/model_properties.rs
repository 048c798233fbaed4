mod common;

use srtsl::autodiff::{Graph, NodeId, ParamStore};
use srtsl::cell::LstmWeights;
use srtsl::model::{argmax, random_samples, ModelConfig, SrTsl, Variant};
use srtsl::rng::ModelRng;
use srtsl::temporal::{skip_clip_layer_forward, split_clips, Stream};
use srtsl::training::{LrSchedule, TrainConfig, Trainer};
use srtsl::Tensor;

fn layer_inputs(g: &mut Graph<f64>, xs: &[Vec<f64>]) -> Vec<NodeId> {
    xs.iter()
        .map(|x| g.constant(Tensor::from_f64(&[1, x.len()], x).unwrap()).unwrap())
        .collect()
}

fn one_layer(store: &ParamStore<f64>, xs: &[Vec<f64>], d: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let cell = LstmWeights::bind(&mut g, store, "cell").unwrap();
    let inputs = layer_inputs(&mut g, xs);
    let out = skip_clip_layer_forward(&mut g, &split_clips(&inputs, d).unwrap(), &cell).unwrap();
    let vals = |ids: &[NodeId]| ids.iter().map(|&n| g.value(n).to_f64_vec()).collect::<Vec<_>>();
    (vals(&out.clip_final), vals(&out.accum))
}

fn cell_store(input: usize, hidden: usize, seed: u64) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    LstmWeights::register(&mut store, "cell", input, hidden, &mut ModelRng::seed_from(seed)).unwrap();
    store
}

#[test]
fn saturated_cell_accumulates_multiples() {
    // Zero weights; input and output gates pinned open, forget gate shut.
    // Every frame then emits u = tanh(tanh(b_g)) whatever the carried hidden.
    let (input, hidden, d, clips) = (3, 4, 3, 6);
    let mut store = cell_store(input, hidden, 1);
    store.get_mut("cell.weight").unwrap().data_mut().fill(0.0);
    let candidate = [0.3, -0.7, 1.2, 0.05];
    let bias = store.get_mut("cell.bias").unwrap().data_mut();
    for u in 0..hidden {
        bias[u] = 1000.0;
        bias[hidden + u] = -1000.0;
        bias[2 * hidden + u] = candidate[u];
        bias[3 * hidden + u] = 1000.0;
    }
    let mut rng = ModelRng::seed_from(2);
    let xs: Vec<Vec<f64>> = (0..d * clips).map(|_| (0..input).map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();
    let (finals, accum) = one_layer(&store, &xs, d);
    let u: Vec<f64> = candidate.iter().map(|b| b.tanh().tanh()).collect();
    let mut running = vec![0.0; hidden];
    for m in 0..clips {
        assert_eq!(finals[m], u, "clip {m}");
        running.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        assert_eq!(accum[m], running, "clip {m}");
        let scaled: Vec<f64> = u.iter().map(|v| (m + 1) as f64 * v).collect();
        assert!(common::max_abs_diff(&accum[m], &scaled) <= 1e-14);
    }
}

#[test]
fn zero_weight_cell_closed_form() {
    // Gates 0.5 and candidate 0: the cell state stays 0, so every hidden is 0.
    let mut store = cell_store(2, 3, 3);
    store.get_mut("cell.weight").unwrap().data_mut().fill(0.0);
    store.get_mut("cell.bias").unwrap().data_mut().fill(0.0);
    let xs = vec![vec![1.0, -4.0]; 8];
    let (finals, accum) = one_layer(&store, &xs, 2);
    assert_eq!(accum.len(), 4);
    assert!(finals.iter().chain(&accum).flatten().all(|&v| v == 0.0));
}

#[test]
fn trailing_frames_do_not_affect_outputs() {
    let store = cell_store(2, 3, 4);
    let mut rng = ModelRng::seed_from(5);
    let mut xs: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]).collect();
    let before = one_layer(&store, &xs, 4);
    xs[8] = vec![50.0, -50.0];
    assert_eq!(one_layer(&store, &xs, 4), before);
    assert_eq!(before.1.len(), 2);
}

fn small(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        frames: 7,
        clip_len: 2,
        ..ModelConfig::micro()
    }
}

#[test]
fn batched_matches_per_sample_in_f32() {
    for variant in Variant::ALL {
        let cfg = small(variant);
        let model = SrTsl::<f32>::new(cfg.clone(), 9).unwrap();
        let samples = random_samples(&cfg, 5, &mut ModelRng::seed_from(10));
        let refs: Vec<_> = samples.iter().collect();
        let batch = srtsl::model::Batch::<f32>::new(&refs, &cfg).unwrap();
        let mut g = Graph::new();
        let out = model.forward(&mut g, &batch).unwrap();
        for (r, s) in samples.iter().enumerate() {
            let single = model.clip_dynamics(s).unwrap();
            for so in &out.temporal.streams {
                let dyn_ = single.stream(so.stream).unwrap();
                for (m, &lp) in so.log_probs.iter().enumerate() {
                    let batched: Vec<f64> = g.value(lp).row(r).iter().map(|&v| (v as f64).exp()).collect();
                    let diff = common::max_abs_diff(&batched, &dyn_.probs[m]);
                    assert!(diff <= 1e-6, "{variant} {} clip {m}: {diff:e}", so.stream);
                }
            }
        }
    }
}

#[test]
fn clip_dynamics_identities() {
    let cfg = small(Variant::Full);
    let model = SrTsl::<f64>::new(cfg.clone(), 11).unwrap();
    let sample = &random_samples(&cfg, 1, &mut ModelRng::seed_from(12))[0];
    let dynamics = model.clip_dynamics(sample).unwrap();
    let (p, v, s) = (
        dynamics.stream(Stream::Position).unwrap(),
        dynamics.stream(Stream::Velocity).unwrap(),
        dynamics.stream(Stream::Sum).unwrap(),
    );
    assert_eq!(s.accum.len(), 3);
    for m in 0..3 {
        let sum: Vec<f64> = p.accum[m].iter().zip(&v.accum[m]).map(|(a, b)| a + b).collect();
        assert_eq!(s.accum[m], sum);
        for d in [p, v, s] {
            assert!((d.probs[m].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    // The decision reads only the last clip of the sum stream.
    assert_eq!(model.predict(sample).unwrap(), argmax(s.probs.last().unwrap()));
}

#[test]
fn constant_sequence_velocity_stream_is_input_independent() {
    let cfg = small(Variant::Full);
    let model = SrTsl::<f64>::new(cfg.clone(), 13).unwrap();
    let mut samples = random_samples(&cfg, 2, &mut ModelRng::seed_from(14));
    for s in &mut samples {
        let first = s.parts[0].clone();
        s.parts.iter_mut().for_each(|f| *f = first.clone());
    }
    let a = model.clip_dynamics(&samples[0]).unwrap();
    let b = model.clip_dynamics(&samples[1]).unwrap();
    assert_eq!(a.stream(Stream::Velocity), b.stream(Stream::Velocity));
    assert_ne!(a.stream(Stream::Position), b.stream(Stream::Position));
}

#[test]
fn zero_heads_predict_class_zero() {
    let cfg = small(Variant::Full);
    let mut model = SrTsl::<f64>::new(cfg.clone(), 15).unwrap();
    let heads: Vec<String> = model.params.names().filter(|n| n.starts_with("head.")).map(String::from).collect();
    for n in heads {
        model.params.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    for s in random_samples(&cfg, 4, &mut ModelRng::seed_from(16)) {
        assert_eq!(model.predict(&s).unwrap(), 0);
        let d = model.clip_dynamics(&s).unwrap();
        assert!(d.streams.iter().flat_map(|st| st.probs.iter().flatten()).all(|&p| p == 0.25));
    }
}

#[test]
fn small_training_set_is_memorized() {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::micro()
    };
    let mut samples = random_samples(&cfg, 8, &mut ModelRng::seed_from(17));
    for (i, s) in samples.iter_mut().enumerate() {
        s.label = i % cfg.classes;
    }
    let tc = TrainConfig {
        epochs: 80,
        batch_size: 8,
        schedule: LrSchedule {
            base: 2e-2,
            decay: 0.1,
            every: 1000,
        },
    };
    let mut t = Trainer::new(SrTsl::<f32>::new(cfg, 18).unwrap(), tc).unwrap();
    t.run(&samples, &samples, |_, _| Ok(())).unwrap();
    let last = t.metrics.last().unwrap();
    assert_eq!(last.test_acc, 1.0, "{}", t.metrics_log());
    assert!(last.train_loss < t.metrics[0].train_loss / 4.0, "{}", t.metrics_log());
}
