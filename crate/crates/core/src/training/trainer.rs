//! Mini-batch training loop and evaluation.

use std::fmt;

use rayon::prelude::*;

use crate::autodiff::{GradTable, Graph};
use crate::data::FixedLengthSequence;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SrTsl, Batch};
use crate::tensor::Scalar;
use crate::training::optim::{Adam, LrSchedule};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 90,
            batch_size: 64,
            schedule: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.schedule.base > 0.0 && self.schedule.base.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.schedule.base)));
        }
        if !(self.schedule.decay > 0.0 && self.schedule.decay <= 1.0) {
            return Err(Error::Config(format!("lr decay {} outside (0, 1]", self.schedule.decay)));
        }
        if self.schedule.every == 0 {
            return Err(Error::Config("lr decay interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub position: f64,
    pub velocity: f64,
    pub sum: f64,
}

impl EpochMetrics {
    pub const HEADER: &'static str = "epoch\tlr\ttrain_loss\ttrain_acc\ttest_acc\tL_p\tL_v\tL_s";

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split('\t').collect();
        if f.len() != 8 {
            return Err(Error::Data(format!("metrics line has {} fields, expected 8", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::Data(format!("metrics field {} is not a number: {:?}", i + 1, f[i])))
        };
        Ok(Self {
            epoch: f[0]
                .parse()
                .map_err(|_| Error::Data(format!("bad epoch {:?}", f[0])))?,
            lr: num(1)?,
            train_loss: num(2)?,
            train_acc: num(3)?,
            test_acc: num(4)?,
            position: num(5)?,
            velocity: num(6)?,
            sum: num(7)?,
        })
    }
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.train_acc,
            self.test_acc,
            self.position,
            self.velocity,
            self.sum
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy and confusion counts of `model` on `samples`, dropout off.
pub fn evaluate<F: Scalar>(model: &SrTsl<F>, samples: &[FixedLengthSequence], batch_size: usize) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let refs: Vec<&FixedLengthSequence> = samples.iter().collect();
    let predicted: Vec<Vec<usize>> = refs
        .par_chunks(batch_size.max(1))
        .map(|chunk| model.predict_batch(chunk))
        .collect::<Result<_>>()?;
    let classes = model.config().classes;
    let mut confusion = vec![vec![0; classes]; classes];
    let mut correct = 0;
    for (s, p) in samples.iter().zip(predicted.into_iter().flatten()) {
        confusion[s.label][p] += 1;
        correct += usize::from(s.label == p);
    }
    Ok(Evaluation {
        correct,
        total: samples.len(),
        accuracy: correct as f64 / samples.len() as f64,
        confusion,
    })
}

/// Model, optimizer and loop position. Everything needed to resume is here.
#[derive(Clone, Debug)]
pub struct Trainer<F> {
    pub model: SrTsl<F>,
    pub optimizer: Adam<F>,
    pub config: TrainConfig,
    /// Index of the next epoch to run.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(model: SrTsl<F>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Adam::new(&model.params);
        Ok(Self {
            model,
            optimizer,
            config,
            epoch: 0,
            metrics: Vec::new(),
        })
    }

    /// One pass over `train` in a freshly shuffled order, then test accuracy.
    pub fn run_epoch(&mut self, train: &[FixedLengthSequence], test: &[FixedLengthSequence]) -> Result<EpochMetrics> {
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let epoch = self.epoch;
        let lr = self.config.schedule.at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.model.rng.shuffle(&mut order);

        let mut grads = GradTable::zeros_like(&self.model.params);
        let (mut loss_sum, mut stream_sums, mut correct) = (0.0, [0.0; 3], 0usize);
        for (bi, idx) in order.chunks(self.config.batch_size).enumerate() {
            let samples: Vec<&FixedLengthSequence> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::<F>::new(&samples, self.model.config())?;
            let mut g = Graph::training(self.model.rng.clone());
            let diverged = |e: Error| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch, batch: bi },
                other => other,
            };
            let (out, loss) = self.model.loss(&mut g, &batch).map_err(diverged)?;
            self.model.rng = g.take_rng().expect("training graph owns a generator");
            let report = loss.report(&g);
            if !report.total.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            grads.zero();
            g.backward(loss.total, &mut grads).map_err(diverged)?;
            self.optimizer.step(&mut self.model.params, &grads, lr)?;

            let n = batch.len() as f64;
            loss_sum += report.total * n;
            stream_sums[0] += report.position * n;
            stream_sums[1] += report.velocity * n;
            stream_sums[2] += report.sum * n;
            correct += self
                .model
                .predictions(&g, &out)
                .iter()
                .zip(&batch.labels)
                .filter(|(p, y)| p == y)
                .count();
        }
        let total = train.len() as f64;
        let test_acc = if test.is_empty() {
            f64::NAN
        } else {
            evaluate(&self.model, test, self.config.batch_size)?.accuracy
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / total,
            train_acc: correct as f64 / total,
            test_acc,
            position: stream_sums[0] / total,
            velocity: stream_sums[1] / total,
            sum: stream_sums[2] / total,
        };
        self.epoch += 1;
        self.metrics.push(m.clone());
        Ok(m)
    }

    /// Runs epochs until `config.epochs` have completed, calling `on_epoch` after each.
    pub fn run(
        &mut self,
        train: &[FixedLengthSequence],
        test: &[FixedLengthSequence],
        mut on_epoch: impl FnMut(&Self, &EpochMetrics) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < self.config.epochs {
            let m = self.run_epoch(train, test)?;
            on_epoch(self, &m)?;
        }
        Ok(())
    }

    pub fn metrics_log(&self) -> String {
        let mut s = String::from(EpochMetrics::HEADER);
        s.push('\n');
        for m in &self.metrics {
            s.push_str(&m.to_string());
            s.push('\n');
        }
        s
    }
}

/// Builds a model from `seed` and trains it for `config.epochs` epochs.
pub fn train<F: Scalar>(
    train: &[FixedLengthSequence],
    test: &[FixedLengthSequence],
    model: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<Trainer<F>> {
    let mut t = Trainer::new(SrTsl::new(model.clone(), seed)?, *config)?;
    t.run(train, test, |_, _| Ok(()))?;
    Ok(t)
}
