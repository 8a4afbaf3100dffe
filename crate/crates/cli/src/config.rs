//! The run configuration file and channel-keyed data splits.

use crate::errors::ConfigError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use twoseal_core::features::{SyntheticConfig, DEFAULT_SPAN_LEN, DEFAULT_SPAN_STRIDE};
use twoseal_core::localize::{LocalizerConfig, RoutingMode, SvmConfig};
use twoseal_core::scorers::{ScorerKind, TrainConfig, DEFAULT_SCA_TEMPERATURE};

/// How long actions are told apart from short ones in the `2seal` path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterKind {
    /// The trained RBF-SVM duration classifier.
    #[default]
    Svm,
    /// Gold durations; an upper bound for routing quality.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub span_embeddings: Option<PathBuf>,
    /// Clip list; segmented from the manifest when absent.
    pub clips: Option<PathBuf>,
    /// Load instead of training when set.
    pub duration_checkpoint: Option<PathBuf>,
    pub scorer_checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanConfig {
    pub span_len: f64,
    pub stride: f64,
}

impl Default for SpanConfig {
    fn default() -> Self {
        Self {
            span_len: DEFAULT_SPAN_LEN,
            stride: DEFAULT_SPAN_STRIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub max_clip_len: f64,
    pub padding: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            max_clip_len: twoseal_core::dataprep::DEFAULT_MAX_CLIP_LEN,
            padding: twoseal_core::dataprep::DEFAULT_CLIP_PAD,
        }
    }
}

/// Channel ids per split. When all three lists are empty, channels are
/// assigned by `fractions` in a seed-dependent but fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub fractions: [f64; 3],
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            fractions: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl SplitSpec {
    /// Maps every channel in `channels` to a split. Explicit lists must be
    /// pairwise disjoint and cover all channels.
    pub fn assign(&self, channels: &BTreeSet<String>, seed: u64) -> Result<BTreeMap<String, Split>, ConfigError> {
        let explicit = !(self.train.is_empty() && self.val.is_empty() && self.test.is_empty());
        let mut out = BTreeMap::new();
        if explicit {
            for (split, list) in [(Split::Train, &self.train), (Split::Val, &self.val), (Split::Test, &self.test)] {
                for ch in list {
                    if let Some(prev) = out.insert(ch.clone(), split) {
                        return Err(ConfigError(format!("channel {ch:?} is in both {prev:?} and {split:?} splits")));
                    }
                }
            }
            if let Some(missing) = channels.iter().find(|c| !out.contains_key(*c)) {
                return Err(ConfigError(format!("channel {missing:?} is not assigned to any split")));
            }
            return Ok(out);
        }
        let f = self.fractions;
        if f.iter().any(|x| !(*x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ConfigError("split fractions must be non-negative and sum to 1".into()));
        }
        let mut order: Vec<(Vec<u8>, &String)> = channels
            .iter()
            .map(|c| {
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(c.as_bytes());
                (h.finalize().to_vec(), c)
            })
            .collect();
        order.sort();
        let n = order.len();
        let n_train = (f[0] * n as f64).round() as usize;
        let n_val = ((f[1] * n as f64).round() as usize).min(n - n_train.min(n));
        for (i, (_, c)) in order.into_iter().enumerate() {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            out.insert(c.clone(), split);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The single seed of a run; it overrides the training and synthetic seeds.
    pub seed: u64,
    pub scorer: ScorerKind,
    pub path: RoutingMode,
    pub router: RouterKind,
    pub sca_temperature: f64,
    pub paths: PathsConfig,
    /// Generate a planted-signal dataset instead of reading files.
    pub synthetic: Option<SyntheticConfig>,
    pub spans: SpanConfig,
    pub segment: SegmentConfig,
    pub localizer: LocalizerConfig,
    pub train: TrainConfig,
    pub svm: SvmConfig,
    pub split: SplitSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scorer: ScorerKind::Mpu,
            path: RoutingMode::TwoSeal,
            router: RouterKind::Svm,
            sca_temperature: DEFAULT_SCA_TEMPERATURE,
            paths: PathsConfig::default(),
            synthetic: None,
            spans: SpanConfig::default(),
            segment: SegmentConfig::default(),
            localizer: LocalizerConfig::default(),
            train: TrainConfig::default(),
            svm: SvmConfig::default(),
            split: SplitSpec::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML config; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        };
        let p = &mut cfg.paths;
        for slot in [
            &mut p.manifest,
            &mut p.text_embeddings,
            &mut p.span_embeddings,
            &mut p.clips,
            &mut p.duration_checkpoint,
            &mut p.scorer_checkpoint,
            &mut p.out_dir,
        ] {
            fix(slot);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Pushes the run seed into the sub-configs and checks every section.
    pub fn finalize(&mut self) -> Result<(), ConfigError> {
        self.train.seed = self.seed;
        if let Some(s) = &mut self.synthetic {
            s.seed = self.seed;
            s.span_len = self.spans.span_len;
            s.span_stride = self.spans.stride;
            s.duration_threshold = self.localizer.duration_threshold;
            s.positive_coverage = self.train.positive_coverage;
            s.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        self.localizer.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        if !(self.spans.span_len > 0.0 && self.spans.stride > 0.0) {
            return Err(ConfigError("span_len and stride must be positive".into()));
        }
        if !(self.svm.c > 0.0 && self.svm.tolerance > 0.0) {
            return Err(ConfigError("svm c and tolerance must be positive".into()));
        }
        if !(self.sca_temperature > 0.0) {
            return Err(ConfigError("sca_temperature must be positive".into()));
        }
        if self.synthetic.is_none() {
            for (name, p) in [
                ("manifest", &self.paths.manifest),
                ("text_embeddings", &self.paths.text_embeddings),
                ("span_embeddings", &self.paths.span_embeddings),
            ] {
                match p {
                    None => return Err(ConfigError(format!("paths.{name} is required without [synthetic]"))),
                    Some(p) if !p.exists() => {
                        return Err(ConfigError(format!("paths.{name}: {} does not exist", p.display())))
                    }
                    _ => {}
                }
            }
        }
        for (name, p) in [
            ("clips", &self.paths.clips),
            ("duration_checkpoint", &self.paths.duration_checkpoint),
            ("scorer_checkpoint", &self.paths.scorer_checkpoint),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError(format!("paths.{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the resolved config's JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Written into every report so a run can be traced to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reproducibility {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Reproducibility {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}
