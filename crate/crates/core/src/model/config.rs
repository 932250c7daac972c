use std::fmt;
use std::str::FromStr;

/// Per-frame pose embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Graph convolution with a learnable fully connected adjacency.
    Gcn,
    /// One linear map over the flattened joints.
    Mlp,
    /// Kernel-3 convolution along the joint axis.
    Conv1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalKind {
    /// Transformer encoder with the banded causal mask.
    Stt,
    /// Same blocks, unmasked.
    PlainTransformer,
    Gru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingKind {
    Attention,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown {} {other:?}, expected one of: {}",
                        stringify!($ty),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(EncoderKind { Gcn => "gcn", Mlp => "mlp", Conv1d => "conv1d" });
keyword_enum!(TemporalKind { Stt => "stt", PlainTransformer => "plain_transformer", Gru => "gru" });
keyword_enum!(PoolingKind { Attention => "attention", Mean => "mean" });
keyword_enum!(Activation { Gelu => "gelu", Relu => "relu" });

/// Architecture hyperparameters. Defaults follow the published model:
/// BODY25 joints, a 9-frame window, 8 encoder layers with 16 heads, an
/// MLP width of 1024, 128-wide decoders and two 60x21 insole grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub joints: usize,
    pub features: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub decoder_heads: usize,
    pub dropout: f64,
    pub pressure_rows: usize,
    pub pressure_cols: usize,
    pub contact_regions: usize,
    pub encoder: EncoderKind,
    pub temporal: TemporalKind,
    pub pooling: PoolingKind,
    pub gating: bool,
    /// Look-back of the causal attention band, in frames.
    pub mask_window: usize,
    pub activation: Activation,
    pub layer_norm_eps: f64,
    pub pos_init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            joints: 25,
            features: 2,
            window: 9,
            embed_dim: 512,
            layers: 8,
            heads: 16,
            mlp_hidden: 1024,
            decoder_hidden: 128,
            decoder_heads: 8,
            dropout: 0.1,
            pressure_rows: 60,
            pressure_cols: 21,
            contact_regions: 8,
            encoder: EncoderKind::Gcn,
            temporal: TemporalKind::Stt,
            pooling: PoolingKind::Attention,
            gating: true,
            mask_window: 4,
            activation: Activation::Gelu,
            layer_norm_eps: 1e-5,
            pos_init_std: 0.02,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("invalid value {value:?} for {key}, expected true or false")),
    }
}

impl ModelConfig {
    /// Flattened size of both pressure grids.
    pub fn pressure_len(&self) -> usize {
        2 * self.pressure_rows * self.pressure_cols
    }

    pub fn center_index(&self) -> usize {
        (self.window - 1) / 2
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("joints", self.joints),
            ("features", self.features),
            ("window", self.window),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("mlp_hidden", self.mlp_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("decoder_heads", self.decoder_heads),
            ("pressure_rows", self.pressure_rows),
            ("pressure_cols", self.pressure_cols),
            ("contact_regions", self.contact_regions),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("model.{name} must be positive"));
            }
        }
        if self.embed_dim % self.heads != 0 {
            return Err(format!(
                "model.embed_dim {} is not divisible by model.heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.decoder_hidden % self.decoder_heads != 0 {
            return Err(format!(
                "model.decoder_hidden {} is not divisible by model.decoder_heads {}",
                self.decoder_hidden, self.decoder_heads
            ));
        }
        if self.window % 2 == 0 {
            return Err(format!("model.window must be odd, got {}", self.window));
        }
        if self.contact_regions % 2 != 0 {
            return Err(format!(
                "model.contact_regions must be even, got {}",
                self.contact_regions
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("model.dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.layer_norm_eps >= 0.0) || !(self.pos_init_std >= 0.0) {
            return Err("model.layer_norm_eps and model.pos_init_std must be nonnegative".into());
        }
        Ok(())
    }

    /// `model.*` keys in a fixed order, values formatted to round-trip.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let pairs: Vec<(&str, String)> = vec![
            ("joints", self.joints.to_string()),
            ("features", self.features.to_string()),
            ("window", self.window.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("decoder_hidden", self.decoder_hidden.to_string()),
            ("decoder_heads", self.decoder_heads.to_string()),
            ("dropout", self.dropout.to_string()),
            ("pressure_rows", self.pressure_rows.to_string()),
            ("pressure_cols", self.pressure_cols.to_string()),
            ("contact_regions", self.contact_regions.to_string()),
            ("encoder", self.encoder.to_string()),
            ("temporal", self.temporal.to_string()),
            ("pooling", self.pooling.to_string()),
            ("gating", self.gating.to_string()),
            ("mask_window", self.mask_window.to_string()),
            ("activation", self.activation.to_string()),
            ("layer_norm_eps", self.layer_norm_eps.to_string()),
            ("pos_init_std", self.pos_init_std.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (format!("model.{k}"), v)).collect()
    }

    /// Sets one `model.*` key. Returns `Ok(false)` when the key does not
    /// belong to the model section.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
        let Some(name) = key.strip_prefix("model.") else {
            return Ok(false);
        };
        match name {
            "joints" => self.joints = parse(key, value)?,
            "features" => self.features = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse(key, value)?,
            "decoder_heads" => self.decoder_heads = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "pressure_rows" => self.pressure_rows = parse(key, value)?,
            "pressure_cols" => self.pressure_cols = parse(key, value)?,
            "contact_regions" => self.contact_regions = parse(key, value)?,
            "encoder" => self.encoder = value.parse()?,
            "temporal" => self.temporal = value.parse()?,
            "pooling" => self.pooling = value.parse()?,
            "gating" => self.gating = parse_bool(key, value)?,
            "mask_window" => self.mask_window = parse(key, value)?,
            "activation" => self.activation = value.parse()?,
            "layer_norm_eps" => self.layer_norm_eps = parse(key, value)?,
            "pos_init_std" => self.pos_init_std = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        let mut cfg = ModelConfig::default();
        for (k, v) in pairs {
            if k.starts_with("model.") && !cfg.set(k, v)? {
                return Err(format!("unknown key {k}"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
