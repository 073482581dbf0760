//! Flat key=value experiment files.
//!
//! One `key=value` pair per line; blank lines and `#` comments are ignored.
//! Unknown keys are rejected so stale configs fail loudly. Defaults follow
//! the standard experimental setting: `eta=0.1`, `rfa_steps=8`, `ipm_z=0.1`,
//! `k` at a tenth of the dimension, `workers=20`, `byzantine=8`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::aggregate::{AggregatorSpec, BaseAggregator};
use crate::attack::AttackSpec;
use crate::compress::CompressorSpec;
use crate::data::PartitionScheme;
use crate::engine::{AlgoVariant, DataSource, RunConfig};
use crate::error::{Result, SimError};

/// Everything a run needs beyond the engine config: data, partitioning,
/// output, seeds.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub run: RunConfig,
    pub data: DataSpec,
    pub partition: PartitionScheme,
    pub out_dir: PathBuf,
    pub prefix: String,
    pub seeds: Vec<u64>,
    pub emit_wire_variance: bool,
}

/// Data source as declared in the file; LIBSVM files are loaded lazily so a
/// config can be validated without touching the path.
#[derive(Debug, Clone)]
pub enum DataSpec {
    Synth { m: usize, d: usize, separation: f64 },
    Libsvm { path: PathBuf, d: usize, gzip: bool },
}

impl DataSpec {
    pub fn dim(&self) -> usize {
        match self {
            DataSpec::Synth { d, .. } | DataSpec::Libsvm { d, .. } => *d,
        }
    }

    /// Materialize the source the engine consumes.
    pub fn load(&self) -> Result<DataSource> {
        match self {
            DataSpec::Synth { m, d, separation } => Ok(DataSource::Synthetic {
                m: *m,
                d: *d,
                separation: *separation,
            }),
            DataSpec::Libsvm { path, d, gzip } => Ok(DataSource::InMemory(
                crate::data::read_libsvm_file(path, *d, *gzip)?,
            )),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data",
    "synth_m",
    "synth_d",
    "synth_sep",
    "libsvm_path",
    "libsvm_d",
    "gzip",
    "partition",
    "algorithm",
    "gamma",
    "eta",
    "rounds",
    "workers",
    "byzantine",
    "compressor",
    "k",
    "randk_rescale",
    "aggregator",
    "nnm",
    "cwtm_b",
    "rfa_steps",
    "rfa_smoothing",
    "attack",
    "ipm_z",
    "alie_z",
    "init_batch",
    "lambda",
    "seeds",
    "out_dir",
    "prefix",
    "emit_wire_variance",
];

struct Keys {
    map: BTreeMap<String, String>,
}

impl Keys {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| SimError::config(format!("missing required key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| SimError::config(format!("bad value {s:?} for key {key:?}"))),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let s = self.require(key)?;
        s.parse()
            .map_err(|_| SimError::config(format!("bad value {s:?} for key {key:?}")))
    }
}

fn split_lines(text: &str) -> Result<Keys> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| SimError::Parse {
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(SimError::config(format!("unknown key {key:?}")));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(SimError::config(format!("duplicate key {key:?}")));
        }
    }
    Ok(Keys { map })
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| SimError::config(format!("bad seed {t:?}")))
        })
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(SimError::config("empty seed list"));
    }
    Ok(seeds)
}

/// Parse an experiment file into a validated [`Experiment`].
pub fn parse_config(text: &str) -> Result<Experiment> {
    let keys = split_lines(text)?;

    let data = match keys.require("data")? {
        "synth" => DataSpec::Synth {
            m: keys.parse_required("synth_m")?,
            d: keys.parse_required("synth_d")?,
            separation: keys.parse("synth_sep", 1.0)?,
        },
        "libsvm" => DataSpec::Libsvm {
            path: PathBuf::from(keys.require("libsvm_path")?),
            d: keys.parse_required("libsvm_d")?,
            gzip: keys.parse("gzip", false)?,
        },
        other => {
            return Err(SimError::config(format!(
                "data must be synth or libsvm, got {other:?}"
            )))
        }
    };
    let dim = data.dim();
    if dim == 0 {
        return Err(SimError::config("dimension must be >= 1".into()));
    }

    let partition = match keys.get("partition").unwrap_or("iid") {
        "iid" => PartitionScheme::IidUniform,
        "label_sorted" => PartitionScheme::LabelSorted,
        other => {
            return Err(SimError::config(format!(
                "partition must be iid or label_sorted, got {other:?}"
            )))
        }
    };

    let variant = match keys.get("algorithm").unwrap_or("dm21") {
        "dm21" => AlgoVariant::Dm21,
        "vr-dm21" => AlgoVariant::VrDm21,
        "ef21-sgdm" => AlgoVariant::Ef21Sgdm,
        other => {
            return Err(SimError::config(format!(
                "algorithm must be dm21, vr-dm21, or ef21-sgdm, got {other:?}"
            )))
        }
    };

    let workers: usize = keys.parse("workers", 20)?;
    let byzantine: usize = keys.parse("byzantine", 8)?;

    // Paper-style default: a tenth of the coordinates, rounded up.
    let default_k = dim.div_ceil(10);
    let k: usize = match keys.get("k") {
        None | Some("auto") => default_k,
        Some(s) => s
            .parse()
            .map_err(|_| SimError::config(format!("bad value {s:?} for key \"k\"")))?,
    };
    if k == 0 || k > dim {
        return Err(SimError::config(format!("k = {k} outside 1..={dim}")));
    }
    let rescale: bool = keys.parse("randk_rescale", false)?;
    let compressor = match keys.get("compressor").unwrap_or("topk") {
        "topk" => CompressorSpec::TopK { k },
        "randk" => CompressorSpec::RandK { k, rescale },
        "identity" => CompressorSpec::Identity,
        other => {
            return Err(SimError::config(format!(
                "compressor must be topk, randk, or identity, got {other:?}"
            )))
        }
    };

    let cwtm_b: usize = match keys.get("cwtm_b") {
        None | Some("auto") => byzantine,
        Some(s) => s
            .parse()
            .map_err(|_| SimError::config(format!("bad value {s:?} for key \"cwtm_b\"")))?,
    };
    let base = match keys.get("aggregator").unwrap_or("rfa") {
        "mean" => BaseAggregator::Mean,
        "cm" => BaseAggregator::CoordinateMedian,
        "cwtm" => BaseAggregator::Cwtm { trim: cwtm_b },
        "rfa" => BaseAggregator::Rfa {
            steps: keys.parse("rfa_steps", 8)?,
            smoothing: keys.parse("rfa_smoothing", 1e-6)?,
        },
        other => {
            return Err(SimError::config(format!(
                "aggregator must be mean, cm, cwtm, or rfa, got {other:?}"
            )))
        }
    };
    let nnm_on: bool = keys.parse("nnm", !matches!(base, BaseAggregator::Mean))?;
    let aggregator = AggregatorSpec {
        base,
        nnm: nnm_on.then_some(byzantine),
    };

    let attack = match keys.get("attack").unwrap_or("none") {
        "none" => AttackSpec::NoAttack,
        "sf" => AttackSpec::SignFlip,
        "lf" => AttackSpec::LabelFlip,
        "ipm" => AttackSpec::Ipm {
            z: keys.parse("ipm_z", 0.1)?,
        },
        "alie" => AttackSpec::Alie {
            z: match keys.get("alie_z") {
                None | Some("auto") => None,
                Some(s) => Some(s.parse().map_err(|_| {
                    SimError::config(format!("bad value {s:?} for key \"alie_z\""))
                })?),
            },
        },
        other => {
            return Err(SimError::config(format!(
                "attack must be none, sf, lf, ipm, or alie, got {other:?}"
            )))
        }
    };

    let lambda = match keys.get("lambda") {
        None | Some("auto") => None,
        Some(s) => Some(
            s.parse::<f64>()
                .map_err(|_| SimError::config(format!("bad value {s:?} for key \"lambda\"")))?,
        ),
    };

    let gamma: f64 = keys.parse_required("gamma")?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SimError::config(format!("gamma = {gamma} must be > 0")));
    }

    let run = RunConfig {
        variant,
        gamma,
        eta: keys.parse("eta", 0.1)?,
        rounds: keys.parse_required("rounds")?,
        workers,
        byzantine,
        compressor,
        aggregator,
        attack,
        seed: 0, // overwritten per seed at execution time
        init_batch: keys.parse("init_batch", 1)?,
        lambda,
    };
    run.validate()?;

    let seeds = parse_seeds(keys.get("seeds").unwrap_or("0"))?;

    Ok(Experiment {
        run,
        data,
        partition,
        out_dir: PathBuf::from(keys.get("out_dir").unwrap_or(".")),
        prefix: keys.get("prefix").unwrap_or("byzsim").to_string(),
        seeds,
        emit_wire_variance: keys.parse("emit_wire_variance", false)?,
    })
}
