//! Run configuration: flat `key = value` files with command-line overrides.

use std::path::{Path, PathBuf};

use crate::attention::ContextMode;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::{ModelConfig, Variant};
use crate::optim::ClipMode;

/// Environment variable consulted when neither the command line nor the
/// config file sets a seed.
pub const SEED_ENV: &str = "STATTN_SEED";

const KEYS: &[&str] = &[
    "data", "out", "seed", "epochs", "lr", "clip", "clip_mode", "batch", "validation",
    "max_iterations", "variant", "target", "hidden", "layers", "encoder_steps",
    "decoder_steps", "dropout", "spatial_width", "temporal_width", "context", "forget_bias",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Processed dataset directory.
    pub data: Option<PathBuf>,
    /// Where checkpoints and the manifest go.
    pub out: PathBuf,
    /// Station count and feature width are taken from the dataset.
    pub model: ModelConfig,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub batch: usize,
    pub validation_fraction: f64,
    /// Stop after this many optimizer iterations in total.
    pub max_iterations: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: PathBuf::from("run"),
            model: ModelConfig::default(),
            seed: None,
            epochs: 100,
            lr: 0.001,
            clip: 2.5,
            clip_mode: ClipMode::GlobalNorm,
            batch: 64,
            validation_fraction: 0.2,
            max_iterations: None,
        }
    }
}

fn clip_mode_name(m: ClipMode) -> &'static str {
    match m {
        ClipMode::GlobalNorm => "global",
        ClipMode::PerValue => "value",
    }
}

fn context_name(m: ContextMode) -> &'static str {
    match m {
        ContextMode::Concatenated => "concatenated",
        ContextMode::HiddenOnly => "hidden",
    }
}

impl RunConfig {
    /// Apply every key of `kv` on top of the defaults. Unknown keys are
    /// rejected so typos do not pass silently.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.entries.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let mut c = RunConfig::default();
        if let Some(v) = kv.get("data") {
            c.data = Some(PathBuf::from(v));
        }
        if let Some(v) = kv.get("out") {
            c.out = PathBuf::from(v);
        }
        c.seed = kv.parse_value("seed")?;
        macro_rules! set {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(v) = kv.parse_value($key)? { $field = v; })*
            };
        }
        set! {
            "epochs" => c.epochs,
            "lr" => c.lr,
            "clip" => c.clip,
            "batch" => c.batch,
            "validation" => c.validation_fraction,
            "hidden" => c.model.hidden,
            "layers" => c.model.layers,
            "encoder_steps" => c.model.encoder_steps,
            "decoder_steps" => c.model.decoder_steps,
            "dropout" => c.model.dropout,
            "spatial_width" => c.model.spatial_width,
            "temporal_width" => c.model.temporal_width,
            "forget_bias" => c.model.forget_bias,
            "target" => c.model.target,
        }
        c.max_iterations = kv.parse_value("max_iterations")?;
        if let Some(v) = kv.parse_value::<Variant>("variant")? {
            c.model.set_variant(v);
        }
        if let Some(v) = kv.get("clip_mode") {
            c.clip_mode = match v {
                "global" => ClipMode::GlobalNorm,
                "value" => ClipMode::PerValue,
                _ => return Err(Error::Config(format!("clip_mode must be global or value, got {v:?}"))),
            };
        }
        if let Some(v) = kv.get("context") {
            c.model.context = match v {
                "concatenated" => ContextMode::Concatenated,
                "hidden" => ContextMode::HiddenOnly,
                _ => return Err(Error::Config(format!("context must be concatenated or hidden, got {v:?}"))),
            };
        }
        Ok(c)
    }

    /// Read a config file. Relative `data` and `out` paths are taken
    /// relative to the file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let mut c = Self::from_kv(&KeyValues::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &c.data {
            c.data = Some(base.join(d));
        }
        c.out = base.join(&c.out);
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        if let Some(d) = &self.data {
            kv.set("data", d.display().to_string());
        }
        kv.set("out", self.out.display().to_string());
        if let Some(s) = self.seed {
            kv.set("seed", s.to_string());
        }
        let m = &self.model;
        for (k, v) in [
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("clip", self.clip.to_string()),
            ("clip_mode", clip_mode_name(self.clip_mode).to_string()),
            ("batch", self.batch.to_string()),
            ("validation", self.validation_fraction.to_string()),
            ("variant", m.variant().name().to_string()),
            ("target", m.target.to_string()),
            ("hidden", m.hidden.to_string()),
            ("layers", m.layers.to_string()),
            ("encoder_steps", m.encoder_steps.to_string()),
            ("decoder_steps", m.decoder_steps.to_string()),
            ("dropout", m.dropout.to_string()),
            ("spatial_width", m.spatial_width.to_string()),
            ("temporal_width", m.temporal_width.to_string()),
            ("context", context_name(m.context).to_string()),
            ("forget_bias", m.forget_bias.to_string()),
        ] {
            kv.set(k, v);
        }
        if let Some(n) = self.max_iterations {
            kv.set("max_iterations", n.to_string());
        }
        kv
    }

    /// Check everything that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation must be in [0, 1), got {}", self.validation_fraction));
        }
        // station count is a placeholder until the dataset is known
        let mut probe = self.model.clone();
        probe.stations = probe.stations.max(1);
        probe.validate()
    }

    /// The seed, falling back to [`SEED_ENV`] and then to 0.
    pub fn resolved_seed(&self) -> Result<u64> {
        resolve_seed(self.seed, std::env::var(SEED_ENV).ok().as_deref())
    }
}

pub fn resolve_seed(configured: Option<u64>, env: Option<&str>) -> Result<u64> {
    match (configured, env) {
        (Some(s), _) => Ok(s),
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        (None, None) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrafficKind;

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.epochs, c.lr, c.clip, c.batch), (100, 0.001, 2.5, 64));
        assert_eq!(c.model.hidden, 1024);
    }

    #[test]
    fn kv_round_trip() {
        let kv = KeyValues::parse("variant = gru-base\ntarget = dropoff\nhidden = 8\nseed = 4\nclip_mode = value\n").unwrap();
        let c = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(c.model.variant(), Variant::GruBase);
        assert_eq!(c.model.target, TrafficKind::Dropoff);
        assert_eq!(c.clip_mode, ClipMode::PerValue);
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(RunConfig::from_kv(&KeyValues::parse("hiden = 3").unwrap()).is_err());
        assert!(RunConfig::from_kv(&KeyValues::parse("hidden = x").unwrap()).is_err());
        let c = RunConfig::from_kv(&KeyValues::parse("batch = 0").unwrap()).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("9")).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some("9")).unwrap(), 9);
        assert_eq!(resolve_seed(None, None).unwrap(), 0);
        assert!(resolve_seed(None, Some("x")).is_err());
    }
}
