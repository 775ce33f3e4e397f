//! Flat `key = value` configuration files.
//!
//! ```text
//! # chain task, relaxed greedy
//! regime = relaxed-greedy
//! mixing.k = 100
//! temp.kind = exponential
//! ```
//!
//! Keys are dotted names; `#` starts a comment. Overrides of the form
//! `--key=value` replace file values, and [`Config::resolved`] renders the
//! merged result in a stable order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::evaluation::Metric;
use crate::schedules::{MixingSchedule, TemperatureSchedule};
use crate::seq2seq::AttentionMode;
use crate::training::{ModelShape, Regime, TrainConfig};

/// Every key the tools understand, with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("restarts", "1"),
    ("regime", "CE"),
    ("mixing.kind", "inverse_sigmoid"),
    ("mixing.k", "10"),
    ("mixing.eps", "1"),
    ("temp.kind", "fixed"),
    ("temp.alpha0", "1"),
    ("temp.rate", "1.5"),
    ("lr", "0.1"),
    ("clip", "5"),
    ("epochs", "10"),
    ("metric", "token_accuracy"),
    ("timing", "false"),
    ("model.embed", "16"),
    ("model.hidden", "32"),
    ("model.attention", "learned"),
    ("model.bidirectional", "true"),
    ("task.kind", "copy"),
    ("task.vocab", "20"),
    ("task.min_len", "4"),
    ("task.max_len", "8"),
    ("task.train", "500"),
    ("task.dev", "100"),
    ("task.test", "100"),
    ("data", ""),
    ("out_dir", "runs"),
    ("name", "run"),
    ("checkpoint", ""),
    ("split", "test"),
    ("probe.eps", "0"),
    ("probe.alpha", "1"),
    ("probe.pairs", "1"),
    ("probe.step", "1e-5"),
    ("probe.tol", "1e-4"),
    ("probe.flip", ""),
    ("probe.flip_lo", "-2"),
    ("probe.flip_hi", "2"),
    ("sweep.param", ""),
    ("sweep.from", "-1"),
    ("sweep.to", "1"),
    ("sweep.points", "101"),
    ("sweep.alphas", "1,5"),
    ("sweep.out", "sweep.csv"),
];

/// Parsed key/value pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn check_key(key: &str) -> Result<()> {
    if DEFAULTS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unknown config key `{key}`")))
    }
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    /// Parses file text; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut config = Config::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            let key = key.trim();
            check_key(key).map_err(|e| parse_err(e.to_string()))?;
            config.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `--key=value` (or `key=value`) override.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let body = arg.strip_prefix("--").unwrap_or(arg);
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override `{arg}` is not of the form --key=value")))?;
        self.set(key.trim(), value)
    }

    /// The explicit value, or the default.
    pub fn get(&self, key: &str) -> &str {
        if let Some(v) = self.values.get(key) {
            return v;
        }
        DEFAULTS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("`{key}` is not a config key"))
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn parse_value<V>(&self, key: &str) -> Result<V>
    where
        V: FromStr,
        V::Err: fmt::Display,
    {
        let raw = self.get(key);
        raw.parse()
            .map_err(|e| Error::invalid(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    /// Optional path value; empty means unset.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for (key, _) in DEFAULTS {
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seed: u64 = self.parse_value("seed")?;
        let restarts: u64 = self.parse_value("restarts")?;
        if restarts == 0 {
            return Err(Error::invalid("`restarts` must be at least 1"));
        }
        Ok((seed..seed + restarts).collect())
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let spec = TaskSpec {
            kind: self.parse_value::<TaskKind>("task.kind")?,
            vocab_size: self.parse_value("task.vocab")?,
            min_len: self.parse_value("task.min_len")?,
            max_len: self.parse_value("task.max_len")?,
            train: self.parse_value("task.train")?,
            dev: self.parse_value("task.dev")?,
            test: self.parse_value("task.test")?,
            seed: self.parse_value("seed")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mixing(&self) -> Result<MixingSchedule<f64>> {
        match self.get("mixing.kind") {
            "inverse_sigmoid" => MixingSchedule::inverse_sigmoid(self.parse_value("mixing.k")?),
            "constant" => MixingSchedule::constant(self.parse_value("mixing.eps")?),
            "always" => Ok(MixingSchedule::AlwaysSample),
            other => Err(Error::invalid(format!("unknown mixing schedule `{other}`"))),
        }
    }

    pub fn temperature(&self) -> Result<TemperatureSchedule<f64>> {
        let alpha0 = self.parse_value("temp.alpha0")?;
        match self.get("temp.kind") {
            "fixed" => TemperatureSchedule::fixed(alpha0),
            "exponential" => TemperatureSchedule::exponential(alpha0, self.parse_value("temp.rate")?),
            other => Err(Error::invalid(format!("unknown temperature schedule `{other}`"))),
        }
    }

    pub fn model_shape(&self) -> Result<ModelShape> {
        Ok(ModelShape {
            embed: self.parse_value("model.embed")?,
            hidden: self.parse_value("model.hidden")?,
            attention: self.parse_value::<AttentionMode>("model.attention")?,
            bidirectional: self.parse_value("model.bidirectional")?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig<f64>> {
        let config = TrainConfig {
            name: self.get("name").to_string(),
            regime: self.parse_value::<Regime>("regime")?,
            mixing: self.mixing()?,
            temperature: self.temperature()?,
            model: self.model_shape()?,
            lr: self.parse_value("lr")?,
            clip: self.parse_value("clip")?,
            epochs: self.parse_value("epochs")?,
            seeds: self.seeds()?,
            metric: self.parse_value::<Metric>("metric")?,
            timing: self.parse_value("timing")?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("test.conf")
    }

    #[test]
    fn parses_comments_and_dotted_keys() {
        let c = Config::parse(
            "# header\nregime = relaxed-greedy # inline\n\n  mixing.k=100\n",
            origin(),
        )
        .unwrap();
        assert_eq!(c.get("regime"), "relaxed-greedy");
        assert_eq!(c.get("mixing.k"), "100");
        assert_eq!(c.get("lr"), "0.1");
        assert!(c.is_set("mixing.k") && !c.is_set("lr"));
        let t = c.train_config().unwrap();
        assert_eq!(t.regime, Regime::RelaxedGreedy);
        assert_eq!(t.mixing, MixingSchedule::InverseSigmoid { k: 100.0 });
    }

    #[test]
    fn errors_name_the_line() {
        let err = Config::parse("seed = 1\nnonsense\n", origin()).unwrap_err();
        assert!(err.to_string().starts_with("test.conf:2:"), "{err}");
        let err = Config::parse("seed = 1\nbogus.key = 3\n", origin()).unwrap_err();
        assert!(err.to_string().contains("test.conf:2:") && err.to_string().contains("bogus.key"));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = Config::parse("epochs = 5\n", origin()).unwrap();
        c.apply_override("--epochs=0").unwrap();
        c.apply_override("--regime=CE").unwrap();
        assert_eq!(c.train_config().unwrap().epochs, 0);
        assert!(c.apply_override("--unknown=1").is_err());
        assert!(c.apply_override("--epochs").is_err());
        assert!(c.resolved().contains("epochs = 0\n"));
    }

    #[test]
    fn resolved_round_trips() {
        let mut c = Config::new();
        c.set("mixing.kind", "always").unwrap();
        c.set("restarts", "3").unwrap();
        let back = Config::parse(&c.resolved(), origin()).unwrap();
        assert_eq!(back.resolved(), c.resolved());
        assert_eq!(back.seeds().unwrap(), vec![1, 2, 3]);
        assert_eq!(back.mixing().unwrap(), MixingSchedule::AlwaysSample);
    }

    #[test]
    fn bad_values_are_reported() {
        let mut c = Config::new();
        c.set("lr", "fast").unwrap();
        assert!(c.train_config().unwrap_err().to_string().contains("`lr`"));
        let mut c = Config::new();
        c.set("temp.kind", "cubic").unwrap();
        assert!(c.temperature().is_err());
        let mut c = Config::new();
        c.set("restarts", "0").unwrap();
        assert!(c.seeds().is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = Config::load(Path::new("/nonexistent/train.conf")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/train.conf"));
    }
}
