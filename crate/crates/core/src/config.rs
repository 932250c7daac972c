//! Flat `key=value` run configuration covering the model, training,
//! contact labeling and stability settings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{ContactRule, ContactSpec};
use crate::eval::EvalOptions;
use crate::model::ModelConfig;
use crate::stability::DEFAULT_BOS_THRESHOLD;
use crate::training::{KldDirection, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Subject left out of training; `None` trains on everyone.
    pub held_out: Option<String>,
    /// Label used to group results in evaluation reports.
    pub method: String,
    pub contact_rule: ContactRule,
    pub contact_threshold: f64,
    pub bos_threshold: f64,
    pub manifest: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            held_out: None,
            method: "footformer".into(),
            contact_rule: ContactRule::MaxExceedsKpa,
            contact_threshold: 10.0,
            bos_threshold: DEFAULT_BOS_THRESHOLD,
            manifest: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

impl RunConfig {
    pub fn contact_spec(&self) -> ContactSpec {
        ContactSpec {
            rule: self.contact_rule,
            threshold: self.contact_threshold,
            regions: self.model.contact_regions,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            contact: self.contact_spec(),
            bos_threshold: self.bos_threshold,
            ..EvalOptions::default()
        }
    }

    /// Every key in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let o = &t.optimizer;
        let mut pairs = self.model.to_pairs();
        let rest: Vec<(&str, String)> = vec![
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.lr", o.lr.to_string()),
            ("train.beta1", o.beta1.to_string()),
            ("train.beta2", o.beta2.to_string()),
            ("train.eps", o.eps.to_string()),
            ("train.weight_decay", o.weight_decay.to_string()),
            ("train.lambda_p", t.weights.pressure.to_string()),
            ("train.lambda_c", t.weights.contact.to_string()),
            ("train.lambda_com", t.weights.com.to_string()),
            ("train.kld_eps", t.kld_eps.to_string()),
            ("train.kld_direction", t.kld_direction.as_str().to_string()),
            ("train.held_out", self.held_out.clone().unwrap_or_default()),
            ("train.method", self.method.clone()),
            ("data.contact_rule", self.contact_rule.to_string()),
            ("data.contact_threshold", self.contact_threshold.to_string()),
            (
                "data.manifest",
                self.manifest
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("stability.bos_threshold", self.bos_threshold.to_string()),
        ];
        pairs.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        pairs
    }

    /// `key=value` lines for every setting.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        let t = &mut self.train;
        match key {
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.seed" => t.seed = parse(key, value)?,
            "train.lr" => t.optimizer.lr = parse(key, value)?,
            "train.beta1" => t.optimizer.beta1 = parse(key, value)?,
            "train.beta2" => t.optimizer.beta2 = parse(key, value)?,
            "train.eps" => t.optimizer.eps = parse(key, value)?,
            "train.weight_decay" => t.optimizer.weight_decay = parse(key, value)?,
            "train.lambda_p" => t.weights.pressure = parse(key, value)?,
            "train.lambda_c" => t.weights.contact = parse(key, value)?,
            "train.lambda_com" => t.weights.com = parse(key, value)?,
            "train.kld_eps" => t.kld_eps = parse(key, value)?,
            "train.kld_direction" => {
                t.kld_direction = KldDirection::parse(value)
                    .ok_or_else(|| format!("invalid value {value:?} for {key}, expected target or pred"))?
            }
            "train.held_out" => self.held_out = (!value.is_empty()).then(|| value.to_string()),
            "train.method" => {
                if value.is_empty() || value.contains([',', '/', '\n']) {
                    return Err(format!("invalid method name {value:?}"));
                }
                self.method = value.to_string()
            }
            "data.contact_rule" => self.contact_rule = value.parse()?,
            "data.contact_threshold" => self.contact_threshold = parse(key, value)?,
            "data.manifest" => self.manifest = (!value.is_empty()).then(|| PathBuf::from(value)),
            "stability.bos_threshold" => self.bos_threshold = parse(key, value)?,
            _ => return Err(format!("unknown configuration key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate()?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.contact_spec().validate()?;
        if !(self.bos_threshold >= 0.0) {
            return Err(format!(
                "stability.bos_threshold must be nonnegative, got {}",
                self.bos_threshold
            ));
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value, got {line:?}", i + 1))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }
}
