use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{decode_budget, greedy_decode, rollout_loss, Regime, RolloutStreams};
use crate::autodiff::Tape;
use crate::datagen::{Corpora, SequencePair};
use crate::error::{Error, Result};
use crate::evaluation::{score_ids, Metric};
use crate::relaxation::Temperature;
use crate::rng::{self, Stream};
use crate::scalar::{lit, Scalar};
use crate::schedules::{schedule_point, MixingSchedule, TemperatureSchedule};
use crate::seq2seq::{save_checkpoint, AttentionMode, ModelConfig, Seq2Seq};

pub const METRICS_HEADER: &str = "epoch,loss,dev_metric,test_metric,eps,alpha,seconds";

/// Model sizes; vocabulary sizes come from the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub embed: usize,
    pub hidden: usize,
    pub attention: AttentionMode,
    pub bidirectional: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            embed: 16,
            hidden: 32,
            attention: AttentionMode::LearnedAdditive,
            bidirectional: true,
        }
    }
}

impl ModelShape {
    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            src_vocab,
            tgt_vocab,
            embed: self.embed,
            hidden: self.hidden,
            attention: self.attention,
            bidirectional: self.bidirectional,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub name: String,
    pub regime: Regime,
    pub mixing: MixingSchedule<T>,
    pub temperature: TemperatureSchedule<T>,
    pub model: ModelShape,
    pub lr: T,
    pub clip: T,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub metric: Metric,
    /// Measure wall-clock seconds per epoch. Off by default so that the
    /// metrics file is a pure function of the configuration.
    pub timing: bool,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(name: impl Into<String>, regime: Regime) -> Self {
        TrainConfig {
            name: name.into(),
            regime,
            mixing: MixingSchedule::InverseSigmoid { k: lit(10.0) },
            temperature: TemperatureSchedule::Fixed { alpha0: T::one() },
            model: ModelShape::default(),
            lr: lit(0.1),
            clip: lit(5.0),
            epochs: 10,
            seeds: vec![1],
            metric: Metric::TokenAccuracy,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.clip > T::zero()) {
            return Err(Error::invalid(format!("clip norm must be positive, got {}", self.clip)));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        Ok(())
    }
}

/// One epoch of one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub eps: f64,
    pub alpha: f64,
    pub seed: u64,
    pub seconds: f64,
}

impl RunRecord {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.loss, self.dev_metric, self.test_metric, self.eps, self.alpha, self.seconds
        )
    }
}

#[derive(Debug)]
pub struct SeedRun<T> {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub final_model: Seq2Seq<T>,
    /// Parameters at the epoch with the best dev metric (the initial model
    /// when no epoch ran).
    pub best_model: Seq2Seq<T>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub divergence: Option<Error>,
}

impl<T> SeedRun<T> {
    pub fn best_record(&self) -> Option<&RunRecord> {
        self.best_epoch.and_then(|e| self.records.iter().find(|r| r.epoch == e))
    }
}

#[derive(Debug)]
pub struct TrainOutcome<T> {
    pub runs: Vec<SeedRun<T>>,
    /// Index into `runs` of the seed with the best dev metric.
    pub best_run: Option<usize>,
}

impl<T> TrainOutcome<T> {
    pub fn best(&self) -> Option<&SeedRun<T>> {
        self.best_run.map(|i| &self.runs[i])
    }

    /// Test metric at the best seed's best epoch.
    pub fn best_test_metric(&self) -> Option<f64> {
        self.best().and_then(|r| r.best_record()).map(|r| r.test_metric)
    }

    pub fn first_divergence(&self) -> Option<&Error> {
        self.runs.iter().find_map(|r| r.divergence.as_ref())
    }
}

/// Trains one run per configured seed and picks the best by dev metric.
pub fn train<T: Scalar>(config: &TrainConfig<T>, data: &Corpora) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| train_seed(config, data, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut best_run = None;
    let mut best_dev = f64::NEG_INFINITY;
    for (i, run) in runs.iter().enumerate() {
        if let Some(rec) = run.best_record() {
            if rec.dev_metric > best_dev {
                best_dev = rec.dev_metric;
                best_run = Some(i);
            }
        }
    }
    Ok(TrainOutcome { runs, best_run })
}

fn divergence_of(err: Error, epoch: usize, step: usize, seed: u64) -> Error {
    match err {
        Error::NonFinite { .. } | Error::Divergence { .. } => Error::Divergence { epoch, step, seed },
        other => other,
    }
}

/// Trains a single seed.
pub fn train_seed<T: Scalar>(config: &TrainConfig<T>, data: &Corpora, seed: u64) -> Result<SeedRun<T>> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let vocab = data.vocab.len();
    let model_config = config.model.model_config(vocab, vocab);
    let mut model = Seq2Seq::new(model_config, &mut rng::stream(seed, Stream::Init))?;
    let mut shuffle = rng::stream(seed, Stream::Shuffle);
    let mut streams = RolloutStreams::new(seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut run = SeedRun {
        seed,
        records: Vec::with_capacity(config.epochs),
        final_model: model.clone(),
        best_model: model.clone(),
        best_epoch: None,
        divergence: None,
    };
    let mut best_dev = f64::NEG_INFINITY;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let point = schedule_point(&config.mixing, &config.temperature, epoch);
        let alpha = Temperature::new(point.alpha)?;
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        let mut diverged = None;
        for (step, &idx) in order.iter().enumerate() {
            match sgd_step(&mut model, &data.train[idx], config, point.eps, alpha, &mut streams) {
                Ok(loss) => total += loss,
                Err(e) => {
                    diverged = Some(divergence_of(e, epoch, step, seed));
                    break;
                }
            }
        }
        if let Some(err) = diverged {
            if !matches!(err, Error::Divergence { .. }) {
                return Err(err);
            }
            run.divergence = Some(err);
            break;
        }
        let dev_metric = evaluate_model(&model, &data.dev, config.metric, data)?;
        let test_metric = evaluate_model(&model, &data.test, config.metric, data)?;
        let seconds = if config.timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        run.records.push(RunRecord {
            epoch,
            loss: total / data.train.len() as f64,
            dev_metric,
            test_metric,
            eps: point.eps.to_f64_lossless(),
            alpha: point.alpha.to_f64_lossless(),
            seed,
            seconds,
        });
        if dev_metric > best_dev {
            best_dev = dev_metric;
            run.best_epoch = Some(epoch);
            run.best_model = model.clone();
        }
    }
    run.final_model = model;
    Ok(run)
}

/// One SGD update on a single pair; returns the pair's loss.
fn sgd_step<T: Scalar>(
    model: &mut Seq2Seq<T>,
    pair: &SequencePair,
    config: &TrainConfig<T>,
    eps: T,
    alpha: Temperature<T>,
    streams: &mut RolloutStreams,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let rollout = rollout_loss(&mut tape, &bound, pair, config.regime, eps, alpha, streams)?;
    let loss = tape.scalar(rollout.loss);
    let grads = tape.backward(rollout.loss)?;
    let vars = bound.vars().to_vec();

    let mut norm_sq = T::zero();
    for &v in &vars {
        for &g in grads.get(v) {
            norm_sq += g * g;
        }
    }
    let norm = norm_sq.sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite { op: "gradient" });
    }
    let scale = if norm > config.clip {
        config.lr * config.clip / norm
    } else {
        config.lr
    };
    for (param, &v) in model.params_mut().iter_mut().zip(&vars) {
        for (w, &g) in param.data.iter_mut().zip(grads.get(v)) {
            *w -= scale * g;
        }
    }
    Ok(loss.to_f64_lossless())
}

/// Decodes every source greedily and scores against the gold targets.
pub(crate) fn evaluate_model<T: Scalar>(
    model: &Seq2Seq<T>,
    pairs: &[SequencePair],
    metric: Metric,
    data: &Corpora,
) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut pred = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for pair in pairs {
        pred.push(greedy_decode(model, pair.source(), decode_budget(pair.source().len()))?);
        gold.push(pair.target_tokens().to_vec());
    }
    Ok(score_ids(metric, &pred, &gold, &data.vocab)?.value)
}

pub fn write_metrics_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a metrics file back into `(header, rows)` of raw fields.
pub fn read_metrics_csv(path: &Path) -> Result<(String, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().to_string();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Writes `<root>/<name>/seed<k>/{metrics.csv,final.ckpt,best.ckpt}` and
/// returns the per-seed directories.
pub fn write_run_outputs<T: Scalar>(root: &Path, name: &str, outcome: &TrainOutcome<T>) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::with_capacity(outcome.runs.len());
    for run in &outcome.runs {
        let dir = root.join(name).join(format!("seed{}", run.seed));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_metrics_csv(&dir.join("metrics.csv"), &run.records)?;
        save_checkpoint(&run.final_model, &dir.join("final.ckpt"))?;
        save_checkpoint(&run.best_model, &dir.join("best.ckpt"))?;
        dirs.push(dir);
    }
    Ok(dirs)
}
