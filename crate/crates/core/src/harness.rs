//! Subcommand implementations. Each returns the files it would write plus a
//! short text block, so the binary only handles I/O and exit codes.

use std::fmt::Write as _;
use std::fs;

use crate::accountant::{
    collusion_epsilon, collusion_p, default_divisor_bound, expected_dummies, expected_dummies_one_sided,
    fmt_f, leakage_epsilon, leakage_lower_bound, optimal_r, optimal_r_for_collusion, optimal_r_for_p,
    PrivacyReport, ProtocolParams,
};
use crate::collection::{client_prepare, shuffle_channel, KeyValuePair, Sender, Submission};
use crate::config::{InputSource, RunConfig};
use crate::dataset::{ClientRecord, Dataset};
use crate::error::{Error, Result};
use crate::leakage::{empirical_view_check, verify_collusion, verify_theorem1, DpRatioResult};
use crate::protocols::{run_codec, run_end_to_end, validate_inputs, Execution, KeySelection, StatisticsRequest};
use crate::rng::{substream, Domain};
use crate::runtime::{Bus, LatencyPreset, NodeState, TranscriptMetrics};
use crate::stats::linear_fit;
use crate::synth::SyntheticSpec;

/// How a subcommand ended when it did not fail outright.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    AssumptionViolation,
    VerificationFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::AssumptionViolation => 3,
            Self::VerificationFailure => 4,
        }
    }
}

/// Exit code for a failed subcommand.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Parse { .. } | Error::Range { .. } => 2,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    /// `(file name, contents)`; every CSV has a header and a `config_hash` column.
    pub files: Vec<(String, String)>,
    pub stdout: String,
    pub outcome: Outcome,
}

/// The dataset a config points at, the bytes it came from, and the
/// parameters with the client count filled in.
pub fn load_input(cfg: &RunConfig) -> Result<(Dataset, Option<Vec<u8>>, ProtocolParams)> {
    let mut params = cfg.params.clone();
    match &cfg.input {
        InputSource::File(path) => {
            let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| Error::Parse { line: 0, message: "dataset is not UTF-8".into() })?;
            let dataset = Dataset::parse(&text)?;
            if !cfg.clients_explicit {
                params.clients = dataset.len().max(1);
            }
            Ok((dataset, Some(bytes), params))
        }
        InputSource::Synthetic => {
            let dataset = SyntheticSpec {
                clients: params.clients,
                key_domain: params.key_domain,
                max_keys: params.max_keys,
                center: params.center,
                half_range: params.half_range,
                zipf_exponent: cfg.zipf,
            }
            .generate(cfg.seed)?;
            Ok((dataset, None, params))
        }
    }
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    match &cfg.input {
        InputSource::File(_) => {
            let (_, bytes, _) = load_input(cfg)?;
            Ok(cfg.config_hash(bytes.as_deref()))
        }
        InputSource::Synthetic => Ok(cfg.config_hash(None)),
    }
}

pub fn request_from(cfg: &RunConfig) -> StatisticsRequest {
    StatisticsRequest {
        statistic: cfg.statistic,
        keys: KeySelection::All,
        noise: cfg.noise,
        beta_conf: cfg.beta_conf,
        validate_inputs: cfg.validate_inputs,
        dummies: true,
        offline_noise: false,
        execution: cfg.execution,
        divisor_bound: cfg.divisor_bound,
        audit: cfg.audit,
    }
}

/// Leakage, collusion variants, dummy expectations and accuracy bounds.
pub fn cmd_plan(cfg: &RunConfig) -> Result<CommandOutput> {
    let hash = config_hash(cfg)?;
    let p = &cfg.params;
    let report = PrivacyReport::new(p, cfg.statistic, cfg.noise, cfg.beta_conf)?;
    let mut collusion = String::from("c,p_c,eps_leakage,optimal_r,eps_leakage_at_optimal_r,config_hash\n");
    let mut text = String::from("[plan]\n");
    text.push_str(&report.to_key_value());
    let _ = writeln!(text, "rate_source = {}", match cfg.rate {
        crate::config::RateChoice::Optimal => "optimized",
        crate::config::RateChoice::Fixed(_) => "given",
    });
    let _ = writeln!(text, "divisor_bound = {}", default_divisor_bound(p)?);
    let _ = writeln!(text, "\n[collusion]");
    for c in 1..=p.nodes - 2 {
        let pc = collusion_p(p.nodes, c)?;
        let eps = collusion_epsilon(p.max_keys, p.rate, p.nodes, c)?;
        let (r_opt, eps_opt) = match optimal_r_for_collusion(p.nodes, c) {
            Ok(r) => (fmt_f(r), fmt_f(collusion_epsilon(p.max_keys, r, p.nodes, c)?)),
            Err(_) => ("none".to_string(), fmt_f(f64::INFINITY)),
        };
        let _ = writeln!(collusion, "{c},{},{},{r_opt},{eps_opt},{hash}", fmt_f(pc), fmt_f(eps));
        let _ = writeln!(text, "c = {c}: eps_leakage = {}, best = {eps_opt} at r = {r_opt}", fmt_f(eps));
    }
    Ok(CommandOutput {
        files: vec![("plan.csv".into(), report.to_csv(&hash)), ("collusion.csv".into(), collusion)],
        stdout: text,
        outcome: Outcome::Success,
    })
}

const METRICS_HEADER: &str =
    "run_id,kind,preset,l,t,keys,inputs,rounds,bytes_total,node_bytes,node_messages,client_elements,model_time_ms,config_hash\n";

#[allow(clippy::too_many_arguments)]
fn metrics_row(
    out: &mut String,
    run_id: &str,
    kind: &str,
    preset: LatencyPreset,
    params: &ProtocolParams,
    keys: usize,
    inputs: usize,
    m: &TranscriptMetrics,
    hash: &str,
) {
    let _ = writeln!(
        out,
        "{run_id},{kind},{preset},{},{},{keys},{inputs},{},{},{},{},{},{},{hash}",
        params.nodes,
        params.subset,
        m.rounds,
        m.bytes_total(),
        m.node_bytes(),
        m.messages,
        m.client_elements,
        fmt_f(m.model_time_ms(preset)),
    );
}

/// Runs the full pipeline and writes estimates, metrics and a summary.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<CommandOutput> {
    let (dataset, bytes, params) = load_input(cfg)?;
    let hash = cfg.config_hash(bytes.as_deref());
    let report = run_end_to_end(&dataset, &request_from(cfg), &params, cfg.seed)?;
    let mut metrics = String::from(METRICS_HEADER);
    metrics_row(
        &mut metrics,
        "simulate",
        "end_to_end",
        cfg.preset,
        &params,
        report.estimates.len(),
        dataset.pair_count(),
        &report.metrics,
        &hash,
    );
    let mut summary = report.summary();
    let _ = writeln!(summary, "model_time_ms = {} ({})", fmt_f(report.metrics.model_time_ms(cfg.preset)), cfg.preset);
    let _ = writeln!(summary, "config_hash = {hash}");
    let outcome = if report.has_violations() {
        Outcome::AssumptionViolation
    } else {
        Outcome::Success
    };
    Ok(CommandOutput {
        files: vec![
            ("estimates.csv".into(), report.to_csv(&hash)),
            ("metrics.csv".into(), metrics),
            ("summary.txt".into(), summary.clone()),
        ],
        stdout: summary,
        outcome,
    })
}

/// Plaintext reference statistics of the configured input.
pub fn cmd_plaintext(cfg: &RunConfig) -> Result<CommandOutput> {
    let (dataset, bytes, params) = load_input(cfg)?;
    let hash = cfg.config_hash(bytes.as_deref());
    let mut csv = String::from("key,frequency,mean,config_hash\n");
    for (k, s) in dataset.plaintext(params.key_domain).iter().enumerate() {
        let mean = s.mean().map_or("no data".to_string(), fmt_f);
        let _ = writeln!(csv, "{k},{},{mean},{hash}", fmt_f(s.frequency as f64));
    }
    Ok(CommandOutput {
        stdout: format!("keys = {}\npairs = {}\nconfig_hash = {hash}\n", params.key_domain, dataset.pair_count()),
        files: vec![("plaintext.csv".into(), csv)],
        outcome: Outcome::Success,
    })
}

fn ratio_row(out: &mut String, kind: &str, c: Option<usize>, r: &DpRatioResult, hash: &str) {
    let _ = writeln!(
        out,
        "{kind},{},{},{},{},{},{},{},{},{},{},{},{},{hash}",
        fmt_f(r.r),
        fmt_f(r.p),
        r.lambda,
        c.map_or(String::new(), |c| c.to_string()),
        r.q_max,
        fmt_f(r.max_log_ratio),
        fmt_f(r.bound),
        fmt_f(r.bound - r.max_log_ratio),
        r.attaining_q,
        r.attaining_z,
        r.direction.as_str(),
        r.passed,
    );
}

/// Brute-force ratio sweeps for the standard cases and the configured one.
pub fn cmd_verify_leakage(cfg: &RunConfig) -> Result<CommandOutput> {
    let hash = config_hash(cfg)?;
    let p = &cfg.params;
    let mut csv = String::from(
        "kind,r,p,lambda,c,q_max,max_log_ratio,bound,slack,attaining_q,attaining_z,direction,passed,config_hash\n",
    );
    let mut text = String::from("[verify-leakage]\n");
    let mut all_passed = true;
    let cases = [
        (0.4, 2.0 / 3.0),
        (optimal_r(20)?, 0.1),
        (optimal_r(5)?, 0.4),
        (p.rate, p.p()),
    ];
    for &(r, pp) in &cases {
        for &lambda in &cfg.lambdas {
            let res = verify_theorem1(r, pp, lambda, cfg.q_max)?;
            all_passed &= res.passed;
            ratio_row(&mut csv, "single_node", None, &res, &hash);
            let _ = writeln!(text, "{}", res.describe());
        }
    }
    let mut collusion_cases = vec![(20usize, optimal_r(20)?, (1..=8).collect::<Vec<_>>())];
    let own: Vec<usize> = (1..=p.nodes - 2).filter(|&c| 2 * c < p.nodes).collect();
    collusion_cases.push((p.nodes, p.rate, own));
    for (nodes, r, cs) in collusion_cases {
        for c in cs {
            let res = verify_collusion(r, nodes, c, 1, cfg.q_max)?;
            all_passed &= res.passed;
            ratio_row(&mut csv, &format!("collusion_l{nodes}"), Some(c), &res, &hash);
            let _ = writeln!(text, "l={nodes} c={c}: {}", res.describe());
        }
    }
    let mut files = vec![("verify_leakage.csv".into(), csv)];
    if cfg.view_trials > 0 {
        let view = empirical_view_check(p, cfg.view_q, cfg.view_trials, cfg.seed)?;
        let _ = writeln!(
            text,
            "view check q={} trials={}: tv = {}, tv_no_dummies = {}, Pr[Z>q] = {} (no dummies {})",
            view.q,
            view.trials,
            fmt_f(view.tv),
            fmt_f(view.tv_no_dummies),
            fmt_f(view.above_q),
            fmt_f(view.above_q_no_dummies)
        );
        files.push(("view.csv".into(), view.to_csv(&hash)?));
    }
    let _ = writeln!(text, "result = {}", if all_passed { "pass" } else { "FAIL" });
    Ok(CommandOutput {
        files,
        stdout: text,
        outcome: if all_passed { Outcome::Success } else { Outcome::VerificationFailure },
    })
}

/// One row of the dummy comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct DummyComparison {
    pub eps: f64,
    /// Empty when feasible; otherwise why the selective protocol cannot meet `eps`.
    pub infeasible: Option<&'static str>,
    pub r: f64,
    pub eps_leakage: f64,
    /// `d (1 - r) / r`.
    pub selective: f64,
    /// `d / r`.
    pub selective_reciprocal: f64,
    pub beta: f64,
    pub one_sided: f64,
}

impl DummyComparison {
    pub fn ratio(&self) -> f64 {
        self.one_sided / self.selective
    }

    pub fn ratio_reciprocal(&self) -> f64 {
        self.one_sided / self.selective_reciprocal
    }
}

/// Expected dummies per key: selective protocol at the leakage-minimising
/// rate versus the one-sided baseline at the same `eps`.
pub fn compare_dummies(params: &ProtocolParams, eps_grid: &[f64], delta: f64) -> Result<Vec<DummyComparison>> {
    if eps_grid.is_empty() {
        return Err(Error::Config("epsilon grid is empty".into()));
    }
    let lambda = params.max_keys;
    let r = optimal_r_for_p(params.p())?;
    let eps_leakage = leakage_epsilon(lambda, r, params.p())?;
    let at_r = ProtocolParams { rate: r, ..params.clone() };
    let selective = expected_dummies(&at_r)?;
    eps_grid
        .iter()
        .map(|&eps| {
            let one = expected_dummies_one_sided(params.key_domain, eps, delta, lambda)?;
            let infeasible = if eps < leakage_lower_bound(lambda) {
                Some("below_lower_bound")
            } else if eps < eps_leakage {
                Some("below_node_minimum")
            } else {
                None
            };
            Ok(DummyComparison {
                eps,
                infeasible,
                r,
                eps_leakage,
                selective: selective.per_key,
                selective_reciprocal: selective.per_key_reciprocal,
                beta: one.beta,
                one_sided: one.per_key_exact,
            })
        })
        .collect()
}

pub fn cmd_compare_dummies(cfg: &RunConfig) -> Result<CommandOutput> {
    let hash = config_hash(cfg)?;
    let rows = compare_dummies(&cfg.params, &cfg.eps_grid, cfg.delta)?;
    let mut csv = String::from(
        "eps,feasible,reason,r,eps_leakage,selective_per_key,selective_per_key_reciprocal,\
         one_sided_beta,one_sided_per_key,ratio,ratio_reciprocal,config_hash\n",
    );
    let mut text = format!(
        "[compare-dummies]\nnodes = {}\nsubset = {}\nlambda = {}\ndelta = {:e}\n",
        cfg.params.nodes, cfg.params.subset, cfg.params.max_keys, cfg.delta
    );
    for row in &rows {
        let (sel, sel_rec, ratio, ratio_rec) = match row.infeasible {
            None => (
                fmt_f(row.selective),
                fmt_f(row.selective_reciprocal),
                fmt_f(row.ratio()),
                fmt_f(row.ratio_reciprocal()),
            ),
            Some(_) => Default::default(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{sel},{sel_rec},{},{},{ratio},{ratio_rec},{hash}",
            fmt_f(row.eps),
            row.infeasible.is_none(),
            row.infeasible.unwrap_or(""),
            fmt_f(row.r),
            fmt_f(row.eps_leakage),
            fmt_f(row.beta),
            fmt_f(row.one_sided),
        );
        match row.infeasible {
            None => {
                let _ = writeln!(
                    text,
                    "eps = {:.2}: selective {:.3} per key, one-sided {:.3}, ratio {:.2} (reciprocal convention {:.2})",
                    row.eps,
                    row.selective,
                    row.one_sided,
                    row.ratio(),
                    row.ratio_reciprocal()
                );
            }
            Some(reason) => {
                let _ = writeln!(text, "eps = {:.2}: infeasible for selective sharing ({reason})", row.eps);
            }
        }
    }
    Ok(CommandOutput {
        files: vec![("compare_dummies.csv".into(), csv)],
        stdout: text,
        outcome: Outcome::Success,
    })
}

/// Transcript of the flag check alone for `inputs` single-pair clients.
pub fn validation_sweep(params: &ProtocolParams, inputs: usize, seed: u64) -> Result<TranscriptMetrics> {
    let params = ProtocolParams {
        clients: inputs,
        max_keys: 1,
        ..params.clone()
    };
    let codec = run_codec()?;
    let mut subs = Vec::with_capacity(inputs);
    for i in 0..inputs as u64 {
        let pair = [KeyValuePair {
            key: i % params.key_domain as u64,
            value: params.center,
        }];
        let mut rng = substream(seed, Domain::Bench, i);
        subs.push(Submission {
            sender: Sender::Client(i),
            envelopes: client_prepare(i, &pair, &params, &codec, &mut rng)?,
        });
    }
    let (inboxes, _) = shuffle_channel(subs, params.nodes, &mut substream(seed, Domain::Shuffle, 1))?;
    let mut nodes = inboxes
        .iter()
        .enumerate()
        .map(|(i, b)| NodeState::receive(i, b))
        .collect::<Result<Vec<_>>>()?;
    let mut bus = Bus::new(params.nodes);
    let rejected = validate_inputs(&mut bus, &mut nodes, seed)?;
    if !rejected.is_empty() {
        return Err(Error::Protocol(format!("{} honest pairs rejected", rejected.len())));
    }
    Ok(bus.into_metrics())
}

/// Sweeps node counts and key counts, then the validation sweep.
pub fn cmd_bench(cfg: &RunConfig) -> Result<CommandOutput> {
    let hash = config_hash(cfg)?;
    let mut csv = String::from(METRICS_HEADER);
    let mut text = String::from("[bench]\n");
    for &nodes in &cfg.bench_nodes {
        let subset = cfg.params.subset.min(nodes - 1);
        let base = ProtocolParams {
            nodes,
            subset,
            collusion: cfg.params.collusion.min(subset - 1),
            clients: cfg.bench_clients,
            ..cfg.params.clone()
        };
        let base = ProtocolParams {
            rate: match cfg.rate {
                crate::config::RateChoice::Optimal => optimal_r_for_p(base.p())?,
                crate::config::RateChoice::Fixed(r) => r,
            },
            ..base
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rounds = Vec::new();
        for &keys in &cfg.bench_keys {
            let params = ProtocolParams { key_domain: keys, ..base.clone() };
            let dataset = SyntheticSpec {
                clients: params.clients,
                key_domain: keys,
                max_keys: params.max_keys,
                center: params.center,
                half_range: params.half_range,
                zipf_exponent: cfg.zipf,
            }
            .generate(cfg.seed)?;
            let request = StatisticsRequest {
                execution: Execution::Parallel,
                ..request_from(cfg)
            };
            let report = run_end_to_end(&dataset, &request, &params, cfg.seed)?;
            let run_id = format!("l{nodes}-k{keys}");
            for preset in LatencyPreset::ALL {
                metrics_row(&mut csv, &run_id, "keys", preset, &params, keys, dataset.pair_count(), &report.metrics, &hash);
            }
            xs.push(keys as f64);
            ys.push(report.metrics.bytes_total() as f64);
            rounds.push(report.metrics.rounds);
        }
        if xs.len() >= 2 {
            let (slope, _, r2) = linear_fit(&xs, &ys);
            let _ = writeln!(
                text,
                "l = {nodes}: bytes per key {:.1}, r2 {:.6}, rounds {:?}",
                slope, r2, rounds
            );
        }
    }
    for &inputs in &cfg.bench_inputs {
        let m = validation_sweep(&cfg.params, inputs, cfg.seed)?;
        for preset in LatencyPreset::ALL {
            metrics_row(&mut csv, &format!("validate-{inputs}"), "validation", preset, &cfg.params, cfg.params.key_domain, inputs, &m, &hash);
        }
        let _ = writeln!(
            text,
            "validate {inputs} inputs: rounds {}, node bytes {}, model time {} ms ({})",
            m.rounds,
            m.node_bytes(),
            fmt_f(m.model_time_ms(cfg.preset)),
            cfg.preset
        );
    }
    Ok(CommandOutput {
        files: vec![("bench.csv".into(), csv)],
        stdout: text,
        outcome: Outcome::Success,
    })
}

/// Builds a one-client-per-row dataset; handy for small fixtures.
pub fn dataset_from_rows(rows: &[(u64, u64, f64)]) -> Dataset {
    let mut clients: Vec<ClientRecord> = Vec::new();
    for &(id, key, value) in rows {
        match clients.iter_mut().find(|c| c.id == id) {
            Some(c) => c.pairs.push(KeyValuePair { key, value }),
            None => clients.push(ClientRecord { id, pairs: vec![KeyValuePair { key, value }] }),
        }
    }
    clients.sort_by_key(|c| c.id);
    Dataset::new(clients)
}
