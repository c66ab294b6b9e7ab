//! Plain-text run configuration: `key = value` lines with `[a, b]` list
//! syntax and `#` comments. Every pipeline and schedule invariant is
//! re-validated on load, so invalid combinations fail at parse time with a
//! specific message, never during compute.
//!
//! Keys: `frames`, `joints`, `blocks`, `dim`, `heads` (default 8),
//! `ffn_ratio` (default 2), `knn_k` (default 2), `mode`, `recovery`,
//! `strategy`, `r`, `b`, and optional `seed`, `input`, `output`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{Mode, PipelineConfig, Recovery};
use crate::prune::{PruneSchedule, Strategy};

/// Environment variable consulted for the seed when the config does not set
/// one.
pub const SEED_ENV_VAR: &str = "VPT_SEED";

/// A parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut frames = None;
        let mut joints = None;
        let mut blocks = None;
        let mut dim = None;
        let mut heads = 8usize;
        let mut ffn_ratio = 2usize;
        let mut knn_k = 2usize;
        let mut mode = None;
        let mut recovery = None;
        let mut strategy = None;
        let mut r_list = None;
        let mut b_list = None;
        let mut seed = None;
        let mut input = None;
        let mut output = None;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = format!("line {}", i + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: loc.clone(),
                detail: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let count = |v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::Parse {
                    location: loc.clone(),
                    detail: format!("'{key}' needs a nonnegative integer, got '{v}'"),
                })
            };
            match key {
                "frames" => frames = Some(count(value)?),
                "joints" => joints = Some(count(value)?),
                "blocks" => blocks = Some(count(value)?),
                "dim" => dim = Some(count(value)?),
                "heads" => heads = count(value)?,
                "ffn_ratio" => ffn_ratio = count(value)?,
                "knn_k" => knn_k = count(value)?,
                "mode" => mode = Some(Mode::parse(value)?),
                "recovery" => recovery = Some(Recovery::parse(value)?),
                "strategy" => strategy = Some(Strategy::parse(value)?),
                "r" => r_list = Some(parse_list(value, &loc)?),
                "b" => b_list = Some(parse_list(value, &loc)?),
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| Error::Parse {
                        location: loc.clone(),
                        detail: format!("'seed' needs an unsigned integer, got '{value}'"),
                    })?)
                }
                "input" => input = Some(PathBuf::from(value)),
                "output" => output = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Config(format!("unknown config key '{other}' ({loc})")))
                }
            }
        }

        let require = |name: &str, v: Option<usize>| -> Result<usize> {
            v.ok_or_else(|| Error::Config(format!("missing required key '{name}'")))
        };
        let model = ModelConfig {
            frames: require("frames", frames)?,
            joints: require("joints", joints)?,
            blocks: require("blocks", blocks)?,
            dim: require("dim", dim)?,
            heads,
            ffn_ratio,
            knn_k,
        };
        let schedule = PruneSchedule {
            tokens_per_stage: r_list.ok_or_else(|| Error::Config("missing required key 'r'".into()))?,
            block_indices: b_list.ok_or_else(|| Error::Config("missing required key 'b'".into()))?,
            strategy: strategy.ok_or_else(|| Error::Config("missing required key 'strategy'".into()))?,
        };
        let pipeline = PipelineConfig {
            mode: mode.ok_or_else(|| Error::Config("missing required key 'mode'".into()))?,
            recovery: recovery
                .ok_or_else(|| Error::Config("missing required key 'recovery'".into()))?,
            schedule,
            model,
        };
        pipeline.validate()?;
        Ok(RunConfig {
            pipeline,
            seed,
            input,
            output,
        })
    }

    /// Seed precedence: the config's own `seed`, then [`SEED_ENV_VAR`], then 0.
    pub fn effective_seed(&self) -> u64 {
        if let Some(s) = self.seed {
            return s;
        }
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            if let Ok(s) = v.parse() {
                return s;
            }
        }
        0
    }

    /// Serializes back to the text format.
    pub fn to_text(&self) -> String {
        let m = &self.pipeline.model;
        let s = &self.pipeline.schedule;
        let fmt_list = |xs: &[usize]| {
            let body: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("[{}]", body.join(", "))
        };
        let mut out = format!(
            "frames = {}\njoints = {}\nblocks = {}\ndim = {}\nheads = {}\nffn_ratio = {}\nknn_k = {}\n\
             mode = {}\nrecovery = {}\nstrategy = {}\nr = {}\nb = {}\n",
            m.frames,
            m.joints,
            m.blocks,
            m.dim,
            m.heads,
            m.ffn_ratio,
            m.knn_k,
            self.pipeline.mode.name(),
            self.pipeline.recovery.name(),
            s.strategy.name(),
            fmt_list(&s.tokens_per_stage),
            fmt_list(&s.block_indices),
        );
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed = {seed}\n"));
        }
        if let Some(p) = &self.input {
            out.push_str(&format!("input = {}\n", p.display()));
        }
        if let Some(p) = &self.output {
            out.push_str(&format!("output = {}\n", p.display()));
        }
        out
    }
}

fn parse_list(value: &str, loc: &str) -> Result<Vec<usize>> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| Error::Parse {
            location: loc.to_string(),
            detail: format!("expected a list like [121, 81], got '{value}'"),
        })?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                location: loc.to_string(),
                detail: format!("bad list entry '{t}'"),
            })
        })
        .collect()
}

/// Names of the shipped preset configurations.
pub fn preset_names() -> &'static [&'static str] {
    &["mhformer", "mixste", "motionbert", "motionagformer"]
}

/// Returns a shipped preset by name.
pub fn preset(name: &str) -> Result<RunConfig> {
    let text = match name {
        "mhformer" => include_str!("../../presets/mhformer.cfg"),
        "mixste" => include_str!("../../presets/mixste.cfg"),
        "motionbert" => include_str!("../../presets/motionbert.cfg"),
        "motionagformer" => include_str!("../../presets/motionagformer.cfg"),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (available: {})",
                preset_names().join(", ")
            )))
        }
    };
    RunConfig::parse_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# comment
frames = 27
joints = 17
blocks = 4
dim = 16
heads = 4
mode = seq2seq
recovery = tri
strategy = sampler
r = [13, 9]
b = [0, 2]
seed = 7
";
        let cfg = RunConfig::parse_str(text).unwrap();
        assert_eq!(cfg.pipeline.model.frames, 27);
        assert_eq!(cfg.pipeline.model.ffn_ratio, 2); // default
        assert_eq!(cfg.pipeline.schedule.tokens_per_stage, vec![13, 9]);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.effective_seed(), 7);

        let again = RunConfig::parse_str(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "frames = 9\nnonsense = 1\n";
        match RunConfig::parse_str(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("nonsense")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_combinations_named() {
        let base = "\
frames = 27
joints = 2
blocks = 4
dim = 8
heads = 2
strategy = sampler
r = [13, 9]
b = [0, 2]
";
        let tri_cluster = base.replace("strategy = sampler", "strategy = cluster")
            + "mode = seq2seq\nrecovery = tri\n";
        match RunConfig::parse_str(&tri_cluster) {
            Err(Error::Config(msg)) => assert!(msg.contains("sampler"), "{msg}"),
            other => panic!("{other:?}"),
        }

        let s2s_none = base.to_string() + "mode = seq2seq\nrecovery = none\n";
        match RunConfig::parse_str(&s2s_none) {
            Err(Error::Config(msg)) => assert!(msg.contains("recovery"), "{msg}"),
            other => panic!("{other:?}"),
        }

        let s2f_tra = base.to_string() + "mode = seq2frame\nrecovery = tra\n";
        assert!(RunConfig::parse_str(&s2f_tra).is_err());

        let bad_r = base.replace("r = [13, 9]", "r = [27, 9]")
            + "mode = seq2seq\nrecovery = tri\n";
        match RunConfig::parse_str(&bad_r) {
            Err(Error::Schedule(msg)) => assert!(msg.contains("27")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_validate() {
        for name in preset_names() {
            let cfg = preset(name).unwrap_or_else(|e| panic!("preset {name}: {e}"));
            cfg.pipeline.validate().unwrap();
        }
        assert!(preset("bogus").is_err());
    }

    #[test]
    fn preset_fields_match_published_settings() {
        let mixste = preset("mixste").unwrap();
        assert_eq!(mixste.pipeline.model.frames, 243);
        assert_eq!(mixste.pipeline.model.blocks, 8);
        assert_eq!(mixste.pipeline.model.dim, 512);
        assert_eq!(mixste.pipeline.schedule.tokens_per_stage, vec![121, 81]);
        assert_eq!(mixste.pipeline.schedule.block_indices, vec![0, 3]);
        assert_eq!(mixste.pipeline.mode, Mode::Seq2Seq);

        let mh = preset("mhformer").unwrap();
        assert_eq!(mh.pipeline.model.frames, 351);
        assert_eq!(mh.pipeline.model.blocks, 3);
        assert_eq!(mh.pipeline.schedule.tokens_per_stage, vec![175, 117]);
        assert_eq!(mh.pipeline.schedule.block_indices, vec![0, 1]);
        assert_eq!(mh.pipeline.mode, Mode::Seq2Frame);

        let mb = preset("motionbert").unwrap();
        assert_eq!(mb.pipeline.model.dim, 256);
        assert_eq!(mb.pipeline.model.blocks, 5);
        assert_eq!(mb.pipeline.schedule.block_indices, vec![0, 1]);

        let mag = preset("motionagformer").unwrap();
        assert_eq!(mag.pipeline.model.dim, 128);
        assert_eq!(mag.pipeline.model.blocks, 16);
        assert_eq!(mag.pipeline.schedule.block_indices, vec![0, 7]);
    }
}
