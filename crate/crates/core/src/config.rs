//! Run configuration: `key = value` lines under `[section]` headers, with
//! command-line overrides applied on top.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::accountant::{fmt_f, optimal_r_for_p, ProtocolParams, Statistic};
use crate::error::{Error, Result};
use crate::protocols::Execution;
use crate::runtime::LatencyPreset;
use crate::synth::DEFAULT_ZIPF_EXPONENT;

/// How the dummy rate is chosen.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum RateChoice {
    /// Minimise the leakage for the configured `t / ell`.
    Optimal,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InputSource {
    Synthetic,
    File(PathBuf),
}

/// Every setting a subcommand may read.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: ProtocolParams,
    pub rate: RateChoice,
    /// `protocol.clients` was set; otherwise a dataset file supplies it.
    pub clients_explicit: bool,
    pub input: InputSource,
    pub zipf: f64,
    pub seed: u64,
    pub preset: LatencyPreset,
    pub statistic: Statistic,
    pub noise: bool,
    pub beta_conf: f64,
    pub validate_inputs: bool,
    pub execution: Execution,
    pub divisor_bound: Option<u64>,
    pub audit: bool,
    pub out: Option<PathBuf>,
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub bench_nodes: Vec<usize>,
    pub bench_keys: Vec<usize>,
    pub bench_inputs: Vec<usize>,
    pub bench_clients: usize,
    pub q_max: u64,
    pub lambdas: Vec<u32>,
    pub view_trials: u64,
    pub view_q: u64,
}

const KNOWN_KEYS: &[&str] = &[
    "protocol.nodes",
    "protocol.subset",
    "protocol.rate",
    "protocol.max_keys",
    "protocol.min_frequency",
    "protocol.half_range",
    "protocol.center",
    "protocol.keys",
    "protocol.clients",
    "protocol.collusion",
    "protocol.eps_f",
    "protocol.eps_m",
    "protocol.dummy_generators",
    "data.dataset",
    "data.synthetic",
    "data.zipf",
    "run.seed",
    "run.preset",
    "run.statistic",
    "run.noise",
    "run.beta_conf",
    "run.validate",
    "run.execution",
    "run.divisor_bound",
    "run.audit",
    "run.out",
    "compare.eps_grid",
    "compare.delta",
    "bench.nodes",
    "bench.keys",
    "bench.inputs",
    "bench.clients",
    "verify.q_max",
    "verify.lambdas",
    "verify.view_trials",
    "verify.view_q",
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Reads a config file into `section.key -> value`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let ini = Ini::load_from_str(text).map_err(|e| config_err(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (section, props) in ini.iter() {
        for (key, value) in props.iter() {
            let Some(section) = section else {
                return Err(config_err(format!("setting {key:?} appears before any [section]")));
            };
            let full = format!("{}.{}", section.trim(), key.trim());
            if !KNOWN_KEYS.contains(&full.as_str()) {
                return Err(config_err(format!("unknown setting {full}")));
            }
            out.insert(full, value.trim().to_string());
        }
    }
    Ok(out)
}

/// A number, optionally written as `base^exponent` (for example `2^-40`).
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('^') {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|_| config_err(format!("bad number {s:?}")))?;
            let e: f64 = e.trim().parse().map_err(|_| config_err(format!("bad number {s:?}")))?;
            b.powf(e)
        }
        None => s.parse().map_err(|_| config_err(format!("bad number {s:?}")))?,
    };
    if !value.is_finite() {
        return Err(config_err(format!("number {s:?} is not finite")));
    }
    Ok(value)
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| config_err(format!("{key}: bad list entry {x:?}"))))
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got {s:?}"))),
    }
}

struct Settings(BTreeMap<String, String>);

impl Settings {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            Some(v) => v.trim().parse().map_err(|_| config_err(format!("{key}: bad value {v:?}"))),
            None => Ok(default),
        }
    }

    fn number(&self, key: &str, default: f64) -> Result<f64> {
        self.0.get(key).map_or(Ok(default), |v| parse_number(v))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        self.0.get(key).map_or(Ok(default), |v| parse_bool(key, v))
    }

    fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>> {
        let raw = self.0.get(key).map(String::as_str).unwrap_or(default);
        let out = parse_list(key, raw)?;
        if out.is_empty() {
            return Err(config_err(format!("{key} must not be empty")));
        }
        Ok(out)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::load(None, &[]).expect("defaults are valid")
    }
}

impl RunConfig {
    /// File settings first, then `overrides` (`section.key`, value); later wins.
    pub fn load(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = match file_text {
            Some(text) => parse_config_text(text)?,
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(config_err(format!("unknown setting {k}")));
            }
            map.insert(k.clone(), v.clone());
        }
        Self::from_settings(Settings(map))
    }

    fn from_settings(s: Settings) -> Result<Self> {
        let rate = match s.0.get("protocol.rate").map(|v| v.trim()) {
            None | Some("optimal") => RateChoice::Optimal,
            Some(v) => RateChoice::Fixed(parse_number(v)?),
        };
        let dataset = s.0.get("data.dataset").filter(|v| !v.trim().is_empty());
        let synthetic = s.0.get("data.synthetic").map(|v| parse_bool("data.synthetic", v)).transpose()?;
        let input = match (dataset, synthetic) {
            (Some(_), Some(true)) => {
                return Err(config_err("data.dataset and data.synthetic = true are mutually exclusive"))
            }
            (Some(path), _) => InputSource::File(PathBuf::from(path.trim())),
            (None, Some(false)) => return Err(config_err("data.synthetic = false needs data.dataset")),
            (None, _) => InputSource::Synthetic,
        };
        let mut params = ProtocolParams {
            nodes: s.get("protocol.nodes", 3)?,
            subset: s.get("protocol.subset", 2)?,
            rate: 0.5,
            max_keys: s.get("protocol.max_keys", 1)?,
            min_frequency: s.get("protocol.min_frequency", 1)?,
            half_range: s.number("protocol.half_range", 1.0)?,
            center: s.number("protocol.center", 0.0)?,
            key_domain: s.get("protocol.keys", 10)?,
            clients: s.get("protocol.clients", 100)?,
            collusion: s.get("protocol.collusion", 1)?,
            eps_freq: s.number("protocol.eps_f", 1.0)?,
            eps_mean: s.number("protocol.eps_m", 1.0)?,
            dummy_generators: s.get("protocol.dummy_generators", 1)?,
        };
        if params.nodes < 3 || params.subset < 2 || params.subset >= params.nodes {
            params.validate().map_err(|e| config_err(e.to_string()))?;
        }
        params.rate = match rate {
            RateChoice::Optimal => optimal_r_for_p(params.p()).map_err(|e| config_err(e.to_string()))?,
            RateChoice::Fixed(r) => r,
        };
        params.validate().map_err(|e| config_err(e.to_string()))?;

        let execution = match s.0.get("run.execution").map(|v| v.trim().to_ascii_lowercase()) {
            None => Execution::Batched,
            Some(v) if v == "batched" => Execution::Batched,
            Some(v) if v == "parallel" => Execution::Parallel,
            Some(v) => return Err(config_err(format!("run.execution: expected batched or parallel, got {v:?}"))),
        };
        let divisor_bound = match s.0.get("run.divisor_bound").map(|v| v.trim()) {
            None | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| config_err(format!("run.divisor_bound: bad value {v:?}")))?),
        };
        let cfg = Self {
            clients_explicit: s.0.contains_key("protocol.clients"),
            params,
            rate,
            input,
            zipf: s.number("data.zipf", DEFAULT_ZIPF_EXPONENT)?,
            seed: s.get("run.seed", 0)?,
            preset: s.0.get("run.preset").map_or(Ok(LatencyPreset::Local), |v| v.parse())?,
            statistic: s.0.get("run.statistic").map_or(Ok(Statistic::Both), |v| {
                v.parse().map_err(|e: Error| config_err(e.to_string()))
            })?,
            noise: s.flag("run.noise", true)?,
            beta_conf: s.number("run.beta_conf", 0.05)?,
            validate_inputs: s.flag("run.validate", false)?,
            execution,
            divisor_bound,
            audit: s.flag("run.audit", false)?,
            out: s.0.get("run.out").map(|v| PathBuf::from(v.trim())),
            eps_grid: s
                .list::<String>("compare.eps_grid", "0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3,1.4,1.5")?
                .iter()
                .map(|x| parse_number(x))
                .collect::<Result<_>>()?,
            delta: s.number("compare.delta", 2f64.powi(-40))?,
            bench_nodes: s.list("bench.nodes", "3,5,10")?,
            bench_keys: s.list("bench.keys", "10,100,1000,10000")?,
            bench_inputs: s.list("bench.inputs", "10,100,1000,10000")?,
            bench_clients: s.get("bench.clients", 100)?,
            q_max: s.get("verify.q_max", 50)?,
            lambdas: s.list("verify.lambdas", "1,2")?,
            view_trials: s.get("verify.view_trials", 0)?,
            view_q: s.get("verify.view_q", 10)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.eps_grid.iter().any(|&e| e.is_nan() || e <= 0.0) {
            return Err(config_err("compare.eps_grid entries must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(format!("compare.delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.beta_conf > 0.0 && self.beta_conf < 1.0) {
            return Err(config_err(format!("run.beta_conf must lie in (0, 1), got {}", self.beta_conf)));
        }
        if self.zipf.is_nan() || self.zipf <= 0.0 {
            return Err(config_err("data.zipf must be positive"));
        }
        if self.bench_nodes.iter().any(|&n| n < 3) {
            return Err(config_err("bench.nodes entries must be at least 3"));
        }
        if self.bench_keys.contains(&0) || self.bench_inputs.contains(&0) || self.bench_clients == 0 {
            return Err(config_err("bench sizes must be positive"));
        }
        if self.q_max < 1 || self.lambdas.contains(&0) {
            return Err(config_err("verify.q_max and verify.lambdas entries must be at least 1"));
        }
        if let Some(b) = self.divisor_bound {
            if b < self.params.min_frequency as u64 {
                return Err(config_err(format!(
                    "run.divisor_bound {b} is below protocol.min_frequency {}",
                    self.params.min_frequency
                )));
            }
        }
        Ok(())
    }

    /// Resolved settings as sorted `section.key=value` lines.
    pub fn canonical(&self) -> String {
        let p = &self.params;
        let join = |v: Vec<String>| v.join(",");
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("protocol.nodes", p.nodes.to_string());
        m.insert("protocol.subset", p.subset.to_string());
        m.insert("protocol.rate", fmt_f(p.rate));
        m.insert("protocol.max_keys", p.max_keys.to_string());
        m.insert("protocol.min_frequency", p.min_frequency.to_string());
        m.insert("protocol.half_range", fmt_f(p.half_range));
        m.insert("protocol.center", fmt_f(p.center));
        m.insert("protocol.keys", p.key_domain.to_string());
        m.insert("protocol.clients", if self.clients_explicit { p.clients.to_string() } else { "auto".into() });
        m.insert("protocol.collusion", p.collusion.to_string());
        m.insert("protocol.eps_f", fmt_f(p.eps_freq));
        m.insert("protocol.eps_m", fmt_f(p.eps_mean));
        m.insert("protocol.dummy_generators", p.dummy_generators.to_string());
        m.insert(
            "data.source",
            match &self.input {
                InputSource::Synthetic => "synthetic".into(),
                InputSource::File(_) => "file".into(),
            },
        );
        m.insert("data.zipf", fmt_f(self.zipf));
        m.insert("run.seed", self.seed.to_string());
        m.insert("run.preset", self.preset.to_string());
        m.insert("run.statistic", self.statistic.as_str().into());
        m.insert("run.noise", self.noise.to_string());
        m.insert("run.beta_conf", fmt_f(self.beta_conf));
        m.insert("run.validate", self.validate_inputs.to_string());
        m.insert("run.execution", format!("{:?}", self.execution).to_ascii_lowercase());
        m.insert("run.divisor_bound", self.divisor_bound.map_or("auto".into(), |b| b.to_string()));
        m.insert("run.audit", self.audit.to_string());
        m.insert("compare.eps_grid", join(self.eps_grid.iter().map(|&e| fmt_f(e)).collect()));
        m.insert("compare.delta", format!("{:e}", self.delta));
        m.insert("bench.nodes", join(self.bench_nodes.iter().map(|x| x.to_string()).collect()));
        m.insert("bench.keys", join(self.bench_keys.iter().map(|x| x.to_string()).collect()));
        m.insert("bench.inputs", join(self.bench_inputs.iter().map(|x| x.to_string()).collect()));
        m.insert("bench.clients", self.bench_clients.to_string());
        m.insert("verify.q_max", self.q_max.to_string());
        m.insert("verify.lambdas", join(self.lambdas.iter().map(|x| x.to_string()).collect()));
        m.insert("verify.view_trials", self.view_trials.to_string());
        m.insert("verify.view_q", self.view_q.to_string());
        m.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// First 16 hex digits of SHA-256 over the canonical settings and, for
    /// file input, the dataset bytes.
    pub fn config_hash(&self, dataset_bytes: Option<&[u8]>) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        if let Some(bytes) = dataset_bytes {
            h.update(b"dataset\n");
            h.update(bytes);
        }
        hex::encode(h.finalize())[..16].to_string()
    }
}
