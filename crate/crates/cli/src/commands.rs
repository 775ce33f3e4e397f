use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use softdecode::config::Config;
use softdecode::datagen::{generate, read_task_dir, write_task_dir, Corpora, SequencePair};
use softdecode::evaluation::score_ids;
use softdecode::probe::{self, ParamSelector, Probe};
use softdecode::relaxation::Temperature;
use softdecode::rng::{self, Stream};
use softdecode::seq2seq::{load_checkpoint, Seq2Seq};
use softdecode::training::{self, decode_budget, greedy_decode, Regime};
use softdecode::Error;

pub const NOT_DIFFERENTIABLE: &str = "objective not differentiable through fed decisions";

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    fn other(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

/// Library errors that stem from bad settings map to exit code 2.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Invalid(_) | Error::Parse { .. } => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        };
        Failure { code, error: e.into() }
    }
}

pub struct Context {
    pub config: Config,
}

impl Context {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, Failure> {
        let mut config = match path {
            Some(p) => Config::load(p).map_err(Failure::config)?,
            None => Config::new(),
        };
        for o in overrides {
            config.apply_override(o).map_err(Failure::config)?;
        }
        Ok(Context { config })
    }

    fn run_dir(&self) -> PathBuf {
        PathBuf::from(self.config.get("out_dir")).join(self.config.get("name"))
    }

    fn snapshot(&self, dir: &Path) -> Result<(), Failure> {
        fs::create_dir_all(dir)
            .and_then(|_| fs::write(dir.join("config.resolved"), self.config.resolved()))
            .with_context(|| format!("writing {}", dir.join("config.resolved").display()))
            .map_err(Failure::other)
    }

    /// Corpora from `data` if set, otherwise generated from the task keys.
    fn corpora(&self) -> Result<Corpora, Failure> {
        match self.config.path("data") {
            Some(dir) => {
                if !dir.is_dir() {
                    return Err(Failure::config(anyhow!("data directory {} not found", dir.display())));
                }
                Ok(read_task_dir(&dir)?)
            }
            None => Ok(generate(&self.config.task_spec()?)?),
        }
    }

    /// The checkpoint named by `checkpoint`, or a fresh seeded model.
    fn model(&self, data: &Corpora) -> Result<Seq2Seq<f64>, Failure> {
        if let Some(path) = self.config.path("checkpoint") {
            if !path.is_file() {
                return Err(Failure::config(anyhow!("checkpoint {} not found", path.display())));
            }
            return Ok(load_checkpoint(&path)?);
        }
        let vocab = data.vocab.len();
        let config = self.config.model_shape()?.model_config(vocab, vocab);
        let seed: u64 = self.config.parse_value("seed")?;
        Ok(Seq2Seq::new(config, &mut rng::stream(seed, Stream::Init))?)
    }

    fn probe_pairs(&self, data: &Corpora) -> Result<Vec<SequencePair>, Failure> {
        let n: usize = self.config.parse_value("probe.pairs")?;
        if n == 0 || n > data.train.len() {
            return Err(Failure::config(anyhow!(
                "probe.pairs must lie in 1..={}, got {n}",
                data.train.len()
            )));
        }
        Ok(data.train[..n].to_vec())
    }
}

pub fn gen_data(ctx: &Context) -> Result<(), Failure> {
    let spec = ctx.config.task_spec()?;
    let dir = ctx
        .config
        .path("data")
        .unwrap_or_else(|| PathBuf::from(spec.kind.to_string()));
    let corpora = generate(&spec)?;
    write_task_dir(&dir, &corpora)?;
    ctx.snapshot(&dir)?;
    println!(
        "wrote {} (train {}, dev {}, test {}, vocab {})",
        dir.display(),
        corpora.train.len(),
        corpora.dev.len(),
        corpora.test.len(),
        corpora.vocab.len()
    );
    Ok(())
}

pub fn train(ctx: &Context) -> Result<(), Failure> {
    let config = ctx.config.train_config()?;
    let data = ctx.corpora()?;
    let outcome = training::train(&config, &data)?;
    let root = PathBuf::from(ctx.config.get("out_dir"));
    training::write_run_outputs(&root, &config.name, &outcome)?;
    ctx.snapshot(&ctx.run_dir())?;
    for run in &outcome.runs {
        match run.best_record() {
            Some(r) => println!(
                "seed {}: best epoch {} dev {} test {}",
                run.seed, r.epoch, r.dev_metric, r.test_metric
            ),
            None => println!("seed {}: no completed epochs", run.seed),
        }
    }
    if let Some(best) = outcome.best() {
        println!(
            "best restart: seed {} test {}",
            best.seed,
            outcome.best_test_metric().unwrap_or(f64::NAN)
        );
    }
    if let Some(err) = outcome.first_divergence() {
        return Err(Failure {
            code: 3,
            error: anyhow!("{err}"),
        });
    }
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Result<(), Failure> {
    if ctx.config.path("checkpoint").is_none() {
        return Err(Failure::config(anyhow!("evaluate needs `checkpoint`")));
    }
    let data = ctx.corpora()?;
    let model = ctx.model(&data)?;
    let pairs = match ctx.config.get("split") {
        "train" => &data.train,
        "dev" => &data.dev,
        "test" => &data.test,
        other => return Err(Failure::config(anyhow!("unknown split `{other}`"))),
    };
    let metric = ctx.config.parse_value("metric")?;
    let mut pred = Vec::with_capacity(pairs.len());
    let mut gold = Vec::with_capacity(pairs.len());
    for p in pairs {
        pred.push(greedy_decode(&model, p.source(), decode_budget(p.source().len()))?);
        gold.push(p.target_tokens().to_vec());
    }
    let report = score_ids(metric, &pred, &gold, &data.vocab)?;
    ctx.snapshot(&ctx.run_dir())?;
    println!("{report}");
    Ok(())
}

fn check_tiny(data: &Corpora, model: &Seq2Seq<f64>) -> Result<(), Failure> {
    let longest = data.train.iter().map(|p| p.target_tokens().len()).max().unwrap_or(0);
    let c = model.config();
    if c.tgt_vocab > 8 || c.hidden > 8 || longest > 4 {
        return Err(Failure::config(anyhow!(
            "gradcheck expects a tiny model (vocab <= 8, hidden <= 8, length <= 4); got vocab {}, hidden {}, length {}",
            c.tgt_vocab,
            c.hidden,
            longest
        )));
    }
    Ok(())
}

pub fn gradcheck(ctx: &Context) -> Result<(), Failure> {
    let regime: Regime = ctx.config.parse_value("regime")?;
    let data = ctx.corpora()?;
    let mut model = ctx.model(&data)?;
    check_tiny(&data, &model)?;
    let pairs = ctx.probe_pairs(&data)?;
    let eps: f64 = if regime == Regime::Ce {
        1.0
    } else {
        ctx.config.parse_value("probe.eps")?
    };
    let alpha = Temperature::new(ctx.config.parse_value("probe.alpha")?)?;
    let step: f64 = ctx.config.parse_value("probe.step")?;
    let tol: f64 = ctx.config.parse_value("probe.tol")?;
    let seed: u64 = ctx.config.parse_value("seed")?;

    let flip = ctx.config.get("probe.flip");
    if !flip.is_empty() {
        let coord = flip.parse::<ParamSelector>()?.resolve(&model)?;
        let probe = Probe::new(&model, &pairs, eps, seed)?;
        let lo = ctx.config.parse_value("probe.flip_lo")?;
        let hi = ctx.config.parse_value("probe.flip_hi")?;
        let bracket = probe
            .find_flip(coord, lo, hi, 201, 1e-9)?
            .ok_or_else(|| Failure::other(anyhow!("no argmax flip along {flip} in [{lo}, {hi}]")))?;
        println!("flip bracketed at {flip} in [{}, {}]", bracket.lo, bracket.hi);
        let mut flat = model.flat();
        flat[coord] = bracket.mid();
        model.set_flat(&flat)?;
    }

    let probe = Probe::new(&model, &pairs, eps, seed)?;
    let report = probe::gradcheck(&probe, regime, alpha, step)?;
    ctx.snapshot(&ctx.run_dir())?;
    println!(
        "regime={regime} parameters={} max_rel_err={:e}",
        report.parameters, report.max_relative_error
    );
    if !report.discontinuities.is_empty() {
        return Err(Failure {
            code: 4,
            error: anyhow!(
                "{NOT_DIFFERENTIABLE} ({} coordinates straddle an argmax flip)",
                report.discontinuities.len()
            ),
        });
    }
    if report.max_relative_error > tol {
        return Err(Failure::other(anyhow!(
            "max relative error {:e} exceeds {tol:e}",
            report.max_relative_error
        )));
    }
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<(), Failure> {
    let selector = ctx.config.get("sweep.param");
    if selector.is_empty() {
        return Err(Failure::config(anyhow!(
            "sweep needs `sweep.param`, e.g. --sweep.param=out.b[3]"
        )));
    }
    let data = ctx.corpora()?;
    let model = ctx.model(&data)?;
    let coord = selector
        .parse::<ParamSelector>()
        .and_then(|s| s.resolve(&model))
        .map_err(|e| Failure::config(anyhow!("unknown parameter selector `{selector}`: {e}")))?;
    let pairs = ctx.probe_pairs(&data)?;
    let alphas = ctx
        .config
        .get("sweep.alphas")
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::config(anyhow!("bad `sweep.alphas`: {e}")))?;
    let thetas = probe::grid(
        ctx.config.parse_value("sweep.from")?,
        ctx.config.parse_value("sweep.to")?,
        ctx.config.parse_value("sweep.points")?,
    )?;
    let probe = Probe::new(
        &model,
        &pairs,
        ctx.config.parse_value("probe.eps")?,
        ctx.config.parse_value("seed")?,
    )?;
    let sweep = probe.sweep(coord, &thetas, &alphas)?;
    let out = PathBuf::from(ctx.config.get("sweep.out"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(Failure::other)?;
    }
    fs::write(&out, sweep.to_csv())
        .with_context(|| format!("writing {}", out.display()))
        .map_err(Failure::other)?;
    ctx.snapshot(&ctx.run_dir())?;
    for (label, jump) in sweep.jumps() {
        println!("max_jump {label}={jump:e}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
