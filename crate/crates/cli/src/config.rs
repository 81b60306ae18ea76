//! The merged run configuration and its layering: built-in defaults, then an
//! optional JSON config file, then `CAMO_SEED`, then command-line flags.

use std::path::{Path, PathBuf};

use camo_core::corpus::CorpusConfig;
use camo_core::discriminators::DetectorTrainConfig;
use camo_core::metrics::PgdConfig;
use camo_core::params::ParamRanges;
use camo_core::postprocess::PostProcess;
use camo_core::trainer::{mix_seed, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "CAMO_SEED";

/// Keys that are derived from other keys and therefore get no flag.
const DERIVED_KEYS: &[&str] = &["detector.size"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest the data-consuming commands read.
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub run_id: String,
    /// Working image size (square).
    pub size: usize,
    /// Master seed. When set it replaces every component seed below.
    pub seed: Option<u64>,
    pub generator_seed: u64,
    pub visual_seed: u64,
    /// Detector used by `train`, `camouflage`-side baselines and `gradcam`.
    /// Defaults to the run's own `train-detector` output.
    pub detector_checkpoint: Option<PathBuf>,
    /// Defaults to the run's own `train` output.
    pub generator_checkpoint: Option<PathBuf>,
    /// Detectors for `evaluate`. Empty means the run's detector plus every
    /// imported one.
    pub eval_detectors: Vec<PathBuf>,
    /// Post-processing tags: `none`, `jpeg<q>`, `gf_k<k>_s<sigma>`,
    /// `gn_m<mu>_s<sigma>`.
    pub postprocess: Vec<String>,
    pub train: TrainConfig,
    pub detector: DetectorTrainConfig,
    pub ranges: ParamRanges,
    pub pgd: PgdConfig,
    pub corpus: CorpusConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            out_dir: "out".into(),
            run_id: "run".into(),
            size: 128,
            seed: None,
            generator_seed: 5,
            visual_seed: 9,
            detector_checkpoint: None,
            generator_checkpoint: None,
            eval_detectors: Vec::new(),
            postprocess: PostProcess::standard_suite().iter().map(PostProcess::tag).collect(),
            train: TrainConfig::default(),
            detector: DetectorTrainConfig::default(),
            ranges: ParamRanges::default(),
            pgd: PgdConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

/// Flag name for a dotted config key: underscores become hyphens.
pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Dotted paths of every settable leaf, in a stable order.
pub fn config_keys() -> Vec<String> {
    let mut out = Vec::new();
    collect_leaves(&serde_json::to_value(RunConfig::default()).expect("config serializes"), "", &mut out);
    out.retain(|k| !DERIVED_KEYS.contains(&k.as_str()));
    out
}

fn collect_leaves(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_leaves(child, &key, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn lookup<'a>(v: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(v, |cur, part| cur.get(part))
}

fn set(v: &mut Value, key: &str, new: Value) -> CliResult<()> {
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("unknown config key '{key}'")))?;
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("unknown config key '{key}'")))?;
    obj.insert(parts[parts.len() - 1].to_string(), new);
    Ok(())
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Interprets a raw flag value against the type of the default at `key`.
fn parse_flag_value(default: &Value, raw: &str) -> Value {
    match default {
        Value::String(_) => Value::String(raw.to_string()),
        Value::Array(_) => serde_json::from_str(raw).unwrap_or_else(|_| {
            Value::Array(
                raw.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
                    .collect(),
            )
        }),
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    }
}

impl RunConfig {
    /// Layers defaults, `file`, the `CAMO_SEED` value and `flags`
    /// (`(dotted key, raw value)`), then validates the result.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, flags: &[(String, String)]) -> CliResult<Self> {
        let defaults = serde_json::to_value(Self::default()).expect("config serializes");
        let mut merged = defaults.clone();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut merged, overlay);
        }
        if let Some(raw) = env_seed {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}='{raw}' is not an unsigned integer")))?;
            set(&mut merged, "seed", seed.into())?;
        }
        for (key, raw) in flags {
            let default = lookup(&defaults, key).ok_or_else(|| CliError::Config(format!("unknown config key '{key}'")))?;
            set(&mut merged, key, parse_flag_value(default, raw))?;
        }
        let mut cfg: Self = serde_json::from_value(merged).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.finish()?;
        Ok(cfg)
    }

    fn finish(&mut self) -> CliResult<()> {
        if self.size < 16 {
            return Err(CliError::Config(format!("size {} is below 16 px", self.size)));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id == ".." {
            return Err(CliError::Config(format!("run_id '{}' is not a plain directory name", self.run_id)));
        }
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.detector.seed = mix_seed(s, 1, 0);
            self.generator_seed = mix_seed(s, 2, 0);
            self.visual_seed = mix_seed(s, 3, 0);
            self.corpus.seed = mix_seed(s, 4, 0);
        }
        self.detector.size = self.size;
        self.train.validate()?;
        self.ranges.validate()?;
        self.postprocesses()?;
        Ok(())
    }

    pub fn postprocesses(&self) -> CliResult<Vec<PostProcess>> {
        self.postprocess.iter().map(|t| parse_postprocess(t)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Inverse of [`PostProcess::tag`].
pub fn parse_postprocess(tag: &str) -> CliResult<PostProcess> {
    let bad = || CliError::Config(format!("unrecognised post-process '{tag}'"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    if tag == "none" {
        return Ok(PostProcess::None);
    }
    if let Some(q) = tag.strip_prefix("jpeg") {
        let quality: u8 = q.parse().map_err(|_| bad())?;
        if !(1..=100).contains(&quality) {
            return Err(bad());
        }
        return Ok(PostProcess::Jpeg { quality });
    }
    if let Some(rest) = tag.strip_prefix("gf_k") {
        let (k, s) = rest.split_once("_s").ok_or_else(bad)?;
        return Ok(PostProcess::GaussianFilter {
            kernel: k.parse().map_err(|_| bad())?,
            sigma: num(s)?,
        });
    }
    if let Some(rest) = tag.strip_prefix("gn_m") {
        let (m, s) = rest.split_once("_s").ok_or_else(bad)?;
        return Ok(PostProcess::GaussianNoise { mu: num(m)?, sigma: num(s)? });
    }
    Err(bad())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn postprocess_tags_round_trip() {
        for p in PostProcess::standard_suite() {
            assert_eq!(parse_postprocess(&p.tag()).unwrap(), p);
        }
        assert!(parse_postprocess("jpeg0").is_err());
        assert!(parse_postprocess("blur").is_err());
    }

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 1, "train": {"lr": 0.5, "batch_size": 4}}"#).unwrap();
        let flags = vec![("train.lr".to_string(), "0.25".to_string())];
        let cfg = RunConfig::resolve(Some(&file), Some("9"), &flags).unwrap();
        assert_eq!(cfg.train.lr, 0.25);
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.train.seed, 9);

        let flags = vec![("seed".to_string(), "3".to_string())];
        assert_eq!(RunConfig::resolve(None, Some("9"), &flags).unwrap().seed, Some(3));
    }

    #[test]
    fn every_leaf_is_addressable() {
        let keys = config_keys();
        assert!(keys.contains(&"train.max_steps".to_string()));
        assert!(keys.contains(&"ranges.k_gf".to_string()));
        assert!(!keys.contains(&"detector.size".to_string()));
        let defaults = serde_json::to_value(RunConfig::default()).unwrap();
        for k in &keys {
            assert!(lookup(&defaults, k).is_some(), "{k}");
        }
    }

    #[test]
    fn flag_values_follow_default_types() {
        let flags = vec![
            ("run_id".to_string(), "123".to_string()),
            ("ranges.k_gf".to_string(), "1,3".to_string()),
            ("manifest".to_string(), "data/m.json".to_string()),
            ("postprocess".to_string(), "none,jpeg75".to_string()),
        ];
        let cfg = RunConfig::resolve(None, None, &flags).unwrap();
        assert_eq!(cfg.run_id, "123");
        assert_eq!(cfg.ranges.k_gf, vec![1, 3]);
        assert_eq!(cfg.manifest, Some(PathBuf::from("data/m.json")));
        assert_eq!(cfg.postprocess.len(), 2);
    }

    #[test]
    fn config_errors() {
        let bad = |k: &str, v: &str| RunConfig::resolve(None, None, &[(k.to_string(), v.to_string())]);
        assert!(matches!(bad("train.lr", "-1"), Err(CliError::Config(_))));
        assert!(matches!(bad("train.nope", "1"), Err(CliError::Config(_))));
        assert!(matches!(bad("size", "8"), Err(CliError::Config(_))));
        assert!(matches!(bad("postprocess", "blur"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::resolve(None, Some("x"), &[]), Err(CliError::Config(_))));
    }
}
