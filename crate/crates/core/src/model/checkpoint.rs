use std::io::{self, BufRead, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::footformer::FootFormer;
use super::params::ParamStore;
use super::ModelError;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &str = "FFCKPT1";

const PARAM_PREFIX: &str = "param.";

/// On-disk layout:
///
/// ```text
/// FFCKPT1
/// key=value            (one line per config entry)
/// tensors <count>
/// name <tensor name>   (repeated <count> times, each followed by
/// FTPK1 ...            a serialized tensor)
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        for (k, v) in &self.config {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "tensors {}", self.tensors.len())?;
        for (name, t) in &self.tensors {
            writeln!(w, "name {name}")?;
            t.write_to(w)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        out
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self, ModelError> {
        let mut line = String::new();
        let mut next_line = |r: &mut R| -> Result<String, ModelError> {
            line.clear();
            let n = r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
            if n == 0 || !line.ends_with('\n') {
                return Err(bad("unexpected end of checkpoint"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(r)? != CHECKPOINT_MAGIC {
            return Err(bad("missing FFCKPT1 header"));
        }
        let mut ckpt = Checkpoint::default();
        let count = loop {
            let l = next_line(r)?;
            if let Some(n) = l.strip_prefix("tensors ") {
                break n.parse::<usize>().map_err(|_| bad(format!("bad tensor count {n:?}")))?;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {l:?}")))?;
            ckpt.config.push((k.to_string(), v.to_string()));
        };
        for _ in 0..count {
            let l = next_line(r)?;
            let name = l
                .strip_prefix("name ")
                .ok_or_else(|| bad(format!("expected tensor name, got {l:?}")))?;
            let t = Tensor::read_from(r)?;
            ckpt.tensors.push((name.to_string(), t));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| bad(e.to_string()))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(ckpt)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        Self::read_from(&mut io::Cursor::new(bytes))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

impl FootFormer {
    /// Checkpoint holding `extra_config`, the model's `model.*` keys,
    /// `extra_tensors` and every parameter under `param.<name>`.
    pub fn to_checkpoint(&self, extra_config: &[(String, String)], extra_tensors: &[(String, Tensor)]) -> Checkpoint {
        let mut config: Vec<(String, String)> = extra_config
            .iter()
            .filter(|(k, _)| !k.starts_with("model."))
            .cloned()
            .collect();
        config.extend(self.config().to_pairs());
        let mut tensors = extra_tensors.to_vec();
        for (name, t) in self.params().iter() {
            let mut t = t.clone();
            t.requires_grad = false;
            t.grad = None;
            tensors.push((format!("{PARAM_PREFIX}{name}"), t));
        }
        Checkpoint { config, tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let config = ModelConfig::from_pairs(ckpt.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(ModelError::InvalidConfig)?;
        let mut params = ParamStore::new();
        for (name, t) in &ckpt.tensors {
            if let Some(p) = name.strip_prefix(PARAM_PREFIX) {
                params.insert(p, t.clone());
            }
        }
        FootFormer::from_parts(config, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            joints: 3,
            window: 3,
            embed_dim: 4,
            layers: 1,
            heads: 2,
            mlp_hidden: 4,
            decoder_hidden: 4,
            decoder_heads: 2,
            pressure_rows: 2,
            pressure_cols: 2,
            contact_regions: 2,
            ..Default::default()
        }
    }

    #[test]
    fn byte_exact_round_trip() {
        let model = FootFormer::new(tiny(), 5).unwrap();
        let extra = vec![("train.seed".to_string(), "5".to_string())];
        let norm = vec![("norm.x".to_string(), Tensor::row(&[0.1, 1.0 / 3.0]))];
        let ckpt = model.to_checkpoint(&extra, &norm);
        let bytes = ckpt.to_bytes();
        assert!(bytes.starts_with(b"FFCKPT1\ntrain.seed=5\nmodel.joints=3\n"));
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let restored = FootFormer::from_checkpoint(&back).unwrap();
        assert_eq!(restored.config(), model.config());
        for ((a, ta), (b, tb)) in restored.params().iter().zip(model.params().iter()) {
            assert_eq!(a, b);
            assert_eq!(ta.data(), tb.data());
        }
        assert_eq!(back.tensor("norm.x").unwrap().data()[1], 1.0 / 3.0);
        assert_eq!(back.config_value("train.seed"), Some("5"));
    }

    #[test]
    fn rejects_corruption() {
        let model = FootFormer::new(tiny(), 5).unwrap();
        let bytes = model.to_checkpoint(&[], &[]).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(Checkpoint::from_bytes(b"FFCKPT2\ntensors 0\n").is_err());
    }
}
