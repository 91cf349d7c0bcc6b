//! Measurement: Monte Carlo reliability of full encode/transmit/decode
//! pipelines, exact secrecy-leakage enumeration at tiny scale, a per-index
//! leakage proxy at scale, and report files.
//!
//! The exact oracle integrates every piece of encoder randomness
//! analytically: message bits, chaining seeds, per-block random fills and
//! the frozen constants enter as uniform bits, and the rule draws enter
//! through the prefix-conditional probabilities they sample from. Nothing
//! is estimated inside the oracle.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bcc::{bcc_decode_rx1, bcc_decode_rx2, bcc_encode, extra_positions};
use crate::channel::WiretapSpec;
use crate::config::{
    bcc_partitions, bcc_stats, wiretap_partition, wiretap_stats, ExperimentConfig, SpecConfig,
};
use crate::error::{Error, Result};
use crate::partition::IndexPartition;
use crate::polar::{polar_transform, posteriors_along_path, prior_leaves};
use crate::reliability::{BitChannelStats, StatsMethod};
use crate::rng::stream;
use crate::wiretap::{decode_cluster, encode_cluster, RuleMode, RuleSet, SeedBlock};

/// 95% Wilson score interval for `errors` successes in `trials`.
pub fn wilson_95(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Error tally for one receiver and one granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverStats {
    pub receiver: String,
    pub trials: u64,
    pub errors: u64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl ReceiverStats {
    fn new(receiver: &str, errors: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_95(errors, trials);
        ReceiverStats {
            receiver: receiver.to_string(),
            trials,
            errors,
            rate: if trials > 0 {
                errors as f64 / trials as f64
            } else {
                0.0
            },
            ci_lo,
            ci_hi,
        }
    }
}

/// Outcome of a reliability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub schema_version: u32,
    pub trials: u64,
    pub receivers: Vec<ReceiverStats>,
    pub config_digest: String,
}

impl ReliabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trials,errors,rate,ci_lo,ci_hi,receiver\n");
        for r in &self.receivers {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.trials, r.errors, r.rate, r.ci_lo, r.ci_hi, r.receiver
            ));
        }
        out
    }

    pub fn rate_of(&self, receiver: &str) -> Option<f64> {
        self.receivers
            .iter()
            .find(|r| r.receiver == receiver)
            .map(|r| r.rate)
    }
}

const TRIAL_CHUNK: u64 = 16;

fn chunked_trials<F>(trials: u64, threads: usize, run_chunk: F) -> Result<Vec<u64>>
where
    F: Fn(u64, u64) -> Result<Vec<u64>> + Sync,
{
    let chunks: Vec<(u64, u64)> = (0..trials)
        .step_by(TRIAL_CHUNK as usize)
        .map(|s| (s, (s + TRIAL_CHUNK).min(trials)))
        .collect();
    let slots = threads.max(1).min(chunks.len().max(1));
    let results: Vec<Result<Vec<u64>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..slots {
            let chunks = &chunks;
            let run_chunk = &run_chunk;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                for (id, &(s, e)) in chunks.iter().enumerate() {
                    if id % slots == worker {
                        out.push((id, run_chunk(s, e)));
                    }
                }
                out
            }));
        }
        let mut collected: Vec<Option<Result<Vec<u64>>>> =
            (0..chunks.len()).map(|_| None).collect();
        for handle in handles {
            for (id, res) in handle.join().expect("trial worker panicked") {
                collected[id] = Some(res);
            }
        }
        collected
            .into_iter()
            .map(|r| r.expect("chunk missing"))
            .collect()
    });
    let mut totals: Vec<u64> = Vec::new();
    for res in results {
        let counts = res?;
        if totals.is_empty() {
            totals = vec![0; counts.len()];
        }
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    Ok(totals)
}

fn random_bits(rng: &mut impl Rng, k: usize) -> Vec<bool> {
    (0..k).map(|_| rng.gen()).collect()
}

/// Runs the configured number of end-to-end trials and tallies decoding
/// errors per receiver. Deterministic given the configuration: every trial
/// derives its own streams from `(master_seed, trial)`.
pub fn run_reliability(config: &ExperimentConfig, threads: usize) -> Result<ReliabilityReport> {
    config.validate()?;
    match &config.spec {
        SpecConfig::Wiretap(_) => run_wiretap_reliability(config, threads),
        SpecConfig::Bcc(_) => run_bcc_reliability(config, threads),
    }
}

fn run_wiretap_reliability(config: &ExperimentConfig, threads: usize) -> Result<ReliabilityReport> {
    let stats = wiretap_stats(config, threads)?;
    let partition = wiretap_partition(config, &stats)?;
    run_wiretap_reliability_with(config, &partition, threads)
}

/// Rebuilds the exact cluster a given trial transmits, for transcript
/// export: the same streams the reliability loop uses.
pub fn wiretap_trial_cluster(
    config: &ExperimentConfig,
    partition: &IndexPartition,
    trial: u64,
) -> Result<crate::wiretap::ChainCluster> {
    let spec = config.wiretap_spec()?;
    let master = config.params.master_seed;
    let rules = RuleSet::for_partition(master, config.flags.rule_mode, partition);
    let mut msg_rng = stream(master, "trial.msg", trial);
    let messages: Vec<Vec<bool>> = (0..config.params.m)
        .map(|_| random_bits(&mut msg_rng, partition.message_len()))
        .collect();
    let seed = SeedBlock::generate(partition.r2_set.len(), master, trial);
    encode_cluster(&messages, &seed, partition, &rules, spec, master, trial)
}

/// Wiretap reliability against a pre-built partition; running `construct`
/// and then simulating from the emitted file matches a single-shot run.
pub fn run_wiretap_reliability_with(
    config: &ExperimentConfig,
    partition: &IndexPartition,
    threads: usize,
) -> Result<ReliabilityReport> {
    let spec = config.wiretap_spec()?;
    let rules =
        RuleSet::for_partition(config.params.master_seed, config.flags.rule_mode, partition);
    let m = config.params.m;
    let master = config.params.master_seed;
    let msg_len = partition.message_len();

    // counts: [cluster_errors, block_errors]
    let totals = chunked_trials(config.trials, threads, |start, end| {
        let mut counts = vec![0u64; 2];
        for trial in start..end {
            let mut msg_rng = stream(master, "trial.msg", trial);
            let messages: Vec<Vec<bool>> =
                (0..m).map(|_| random_bits(&mut msg_rng, msg_len)).collect();
            let seed = SeedBlock::generate(partition.r2_set.len(), master, trial);
            let cluster = encode_cluster(&messages, &seed, partition, &rules, spec, master, trial)?;
            let mut ch = stream(master, "trial.chan", trial);
            let y: Vec<Vec<usize>> = cluster
                .blocks
                .iter()
                .map(|b| {
                    b.x.iter()
                        .map(|&x| spec.w1.sample(x as usize, &mut ch))
                        .collect()
                })
                .collect();
            let decoded = decode_cluster(&y, &seed, partition, &rules, spec)?;
            let block_errs = decoded
                .messages
                .iter()
                .zip(&messages)
                .filter(|(got, want)| got != want)
                .count() as u64;
            counts[0] += u64::from(block_errs > 0);
            counts[1] += block_errs;
        }
        Ok(counts)
    })?;

    Ok(ReliabilityReport {
        schema_version: 1,
        trials: config.trials,
        receivers: vec![
            ReceiverStats::new("rx1_cluster", totals[0], config.trials),
            ReceiverStats::new("rx1_block", totals[1], config.trials * m as u64),
        ],
        config_digest: config.digest(),
    })
}

fn run_bcc_reliability(config: &ExperimentConfig, threads: usize) -> Result<ReliabilityReport> {
    let (q_stats, t_stats) = bcc_stats(config, threads)?;
    let (common, secret) = bcc_partitions(config, &q_stats, &t_stats)?;
    run_bcc_reliability_with(config, &common, &secret, threads)
}

/// Rebuilds the exact broadcast cluster a given trial transmits, for
/// transcript export.
pub fn bcc_trial_cluster(
    config: &ExperimentConfig,
    common: &crate::partition::BccCommonPartition,
    secret: &IndexPartition,
    trial: u64,
) -> Result<crate::bcc::BccCluster> {
    let spec = config.bcc_spec()?;
    let master = config.params.master_seed;
    let m = config.params.m;
    let q_rules = RuleSet::new(
        master,
        config.flags.rule_mode,
        common.block_len(),
        &common.frozen,
    );
    let t_rules = RuleSet::for_partition(master.wrapping_add(1), config.flags.rule_mode, secret);
    let mut msg_rng = stream(master, "trial.msg", trial);
    let common_bits = random_bits(&mut msg_rng, common.common_bits(m));
    let secrets: Vec<Vec<bool>> = (0..m)
        .map(|_| random_bits(&mut msg_rng, secret.message_len()))
        .collect();
    let extras: Vec<Vec<bool>> = (0..m)
        .map(|_| random_bits(&mut msg_rng, extra_positions(secret).len()))
        .collect();
    let seed = SeedBlock::generate(secret.r2_set.len(), master, trial);
    bcc_encode(
        &common_bits,
        &secrets,
        Some(&extras),
        &seed,
        common,
        secret,
        &q_rules,
        &t_rules,
        spec,
        master,
        trial,
    )
}

/// Broadcast reliability against pre-built partitions.
pub fn run_bcc_reliability_with(
    config: &ExperimentConfig,
    common: &crate::partition::BccCommonPartition,
    secret: &IndexPartition,
    threads: usize,
) -> Result<ReliabilityReport> {
    let spec = config.bcc_spec()?;
    let q_rules = RuleSet::new(
        config.params.master_seed,
        config.flags.rule_mode,
        common.block_len(),
        &common.frozen,
    );
    let t_rules = RuleSet::for_partition(
        config.params.master_seed.wrapping_add(1),
        config.flags.rule_mode,
        secret,
    );
    let m = config.params.m;
    let master = config.params.master_seed;
    let sec_len = secret.message_len();
    let ext_len = extra_positions(secret).len();
    let common_len = common.common_bits(m);

    // counts: [rx1 joint cluster, rx2 common cluster, rx1 extra cluster]
    let totals = chunked_trials(config.trials, threads, |start, end| {
        let mut counts = vec![0u64; 3];
        for trial in start..end {
            let mut msg_rng = stream(master, "trial.msg", trial);
            let common_bits = random_bits(&mut msg_rng, common_len);
            let secrets: Vec<Vec<bool>> =
                (0..m).map(|_| random_bits(&mut msg_rng, sec_len)).collect();
            let extras: Vec<Vec<bool>> =
                (0..m).map(|_| random_bits(&mut msg_rng, ext_len)).collect();
            let seed = SeedBlock::generate(secret.r2_set.len(), master, trial);
            let cluster = bcc_encode(
                &common_bits,
                &secrets,
                Some(&extras),
                &seed,
                common,
                secret,
                &q_rules,
                &t_rules,
                spec,
                master,
                trial,
            )?;
            let mut ch = stream(master, "trial.chan", trial);
            let y: Vec<Vec<usize>> = cluster
                .t_blocks
                .iter()
                .map(|b| {
                    b.x.iter()
                        .map(|&x| spec.w1.sample(x as usize, &mut ch))
                        .collect()
                })
                .collect();
            let z: Vec<Vec<usize>> = cluster
                .t_blocks
                .iter()
                .map(|b| {
                    b.x.iter()
                        .map(|&x| spec.w2.sample(x as usize, &mut ch))
                        .collect()
                })
                .collect();
            let rx1 = bcc_decode_rx1(
                &y, &seed, common, secret, &q_rules, &t_rules, spec, master, trial,
            )?;
            let rx2 = bcc_decode_rx2(&z, common, &q_rules, spec, master, trial)?;
            let joint_err = rx1.common != common_bits || rx1.secret != secrets;
            counts[0] += u64::from(joint_err);
            counts[1] += u64::from(rx2 != common_bits);
            counts[2] += u64::from(rx1.extra != extras);
        }
        Ok(counts)
    })?;

    Ok(ReliabilityReport {
        schema_version: 1,
        trials: config.trials,
        receivers: vec![
            ReceiverStats::new("rx1_joint_cluster", totals[0], config.trials),
            ReceiverStats::new("rx2_common_cluster", totals[1], config.trials),
            ReceiverStats::new("rx1_extra_cluster", totals[2], config.trials),
        ],
        config_digest: config.digest(),
    })
}

/// A secrecy-leakage measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub schema_version: u32,
    pub method: String,
    /// Mutual information (exact) or heuristic margin (proxy), in bits.
    pub bits: f64,
    pub message_bits: usize,
    pub per_message_bit: f64,
    pub n: u32,
    pub m: usize,
    /// Which variables the eavesdropper view contains.
    pub scope: String,
    /// True only for the exact enumeration; the proxy is an indicator, not
    /// a bound certificate.
    pub certified: bool,
}

impl LeakageReport {
    pub fn to_csv(&self) -> String {
        format!(
            "method,bits,message_bits,per_message_bit,n,m,scope,certified\n{},{},{},{},{},{},{},{}\n",
            self.method, self.bits, self.message_bits, self.per_message_bit, self.n, self.m, self.scope, self.certified
        )
    }
}

/// Exact `I(M^m; view)` by full enumeration.
///
/// The view always contains the eavesdropper observations `Z^m`; the frozen
/// constants are appended when `reveal_b` is set, and the final block's
/// chaining values when `include_chain` is set (useful for data-processing
/// checks). The cost and table sizes are bounded by `budget` up front.
pub fn exact_leakage(
    spec: &WiretapSpec,
    partition: &IndexPartition,
    rule_mode: RuleMode,
    m: usize,
    reveal_b: bool,
    include_chain: bool,
    budget: u64,
) -> Result<LeakageReport> {
    partition.validate()?;
    spec.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let len = partition.block_len();
    let eff_z = spec.effective_w2()?;
    let k = eff_z.output_size();

    let msg_pos: Vec<usize> = partition
        .i_set
        .iter()
        .filter(|i| partition.e_set.binary_search(i).is_err())
        .copied()
        .collect();
    let msg_bits_total = m * msg_pos.len();
    let b_len = partition.b_set.len();
    // seeded constants are random and always marginalized; revealing them
    // only adds them to the view
    let b_states: usize = if rule_mode == RuleMode::SeededSampling {
        1 << b_len
    } else {
        1
    };
    let b_view: usize = if reveal_b { b_states } else { 1 };
    let e_states: usize = if include_chain {
        1 << partition.e_set.len()
    } else {
        1
    };

    let z_block: u64 = (k as u64).checked_pow(len as u32).ok_or_else(budget_err)?;
    let z_total = z_block.checked_pow(m as u32).ok_or_else(budget_err)?;
    let free_first = len - b_len; // everything except the globally shared constants
    let free_later = len - b_len - partition.r2_set.len();
    let t_tuples = (b_states as u64)
        .checked_mul(1u64 << free_first)
        .and_then(|v| v.checked_mul(1u64 << (free_later as u64 * (m as u64 - 1))))
        .ok_or_else(budget_err)?;
    let cost = t_tuples.checked_mul(z_total).ok_or_else(budget_err)?;
    let table_cells = (1u64 << msg_bits_total)
        .checked_mul(z_total)
        .and_then(|v| v.checked_mul(b_view as u64 * e_states as u64))
        .ok_or_else(budget_err)?;
    if cost > budget || table_cells > budget / 4 {
        return Err(Error::BudgetExceeded(format!(
            "exact leakage needs {cost} enumeration steps and {table_cells} table cells \
             (budget {budget}); shrink N, m or the alphabet"
        )));
    }

    let priors = vec![spec.p_v; len];
    let prior_lv = prior_leaves(&priors)?;
    let view_states = (z_total as usize) * b_view * e_states;
    let msg_count = 1usize << msg_bits_total;
    let mut table = vec![vec![0.0f64; view_states]; msg_count];

    let is_rule_const: Vec<bool> = {
        let mut v = vec![false; len];
        for &i in &partition.b_set {
            v[i] = true;
        }
        v
    };
    let is_chain: Vec<bool> = {
        let mut v = vec![false; len];
        for &i in &partition.r2_set {
            v[i] = true;
        }
        v
    };
    let is_d: Vec<bool> = {
        let mut v = vec![false; len];
        for &i in &partition.d_set {
            v[i] = true;
        }
        v
    };

    // enumerate the shared frozen constants once, then the blocks
    for b_assign in 0..b_states {
        let b_weight = 1.0 / b_states as f64;
        let b_vals: Vec<bool> = (0..b_len).map(|j| b_assign >> j & 1 == 1).collect();
        enumerate_blocks(
            &mut table,
            &EnumCtx {
                partition,
                prior_lv: &prior_lv,
                eff_z: &eff_z,
                msg_pos: &msg_pos,
                is_rule_const: &is_rule_const,
                is_chain: &is_chain,
                is_d: &is_d,
                rule_mode,
                m,
                len,
                k,
                z_block,
                b_vals: &b_vals,
                b_view_idx: if reveal_b { b_assign } else { 0 },
                e_states,
                include_chain,
            },
            0,
            b_weight,
            &[],
            0,
            &[1.0],
        )?;
    }

    let info = mutual_information_from_table(&table);

    let mut scope = String::from("M;Z^m");
    if reveal_b && b_len > 0 {
        scope.push_str(",B");
    }
    if include_chain {
        scope.push_str(",E_m");
    }
    Ok(LeakageReport {
        schema_version: 1,
        method: "exact_enumeration".into(),
        bits: info,
        message_bits: msg_bits_total,
        per_message_bit: if msg_bits_total > 0 {
            info / msg_bits_total as f64
        } else {
            0.0
        },
        n: partition.n,
        m,
        scope,
        certified: true,
    })
}

fn budget_err() -> Error {
    Error::BudgetExceeded("exact leakage state space overflows".into())
}

/// `I(M; View)` for uniform messages from a table of conditional view
/// distributions, one row per message.
fn mutual_information_from_table(table: &[Vec<f64>]) -> f64 {
    let msg_p = 1.0 / table.len() as f64;
    let views = table[0].len();
    let mut marginal = vec![0.0f64; views];
    for row in table {
        for (vm, &p) in marginal.iter_mut().zip(row) {
            *vm += msg_p * p;
        }
    }
    let mut info = 0.0;
    for row in table {
        for (v, &p) in row.iter().enumerate() {
            if p > 0.0 {
                info += msg_p * p * (p / marginal[v]).log2();
            }
        }
    }
    info.max(0.0)
}

struct EnumCtx<'a> {
    partition: &'a IndexPartition,
    prior_lv: &'a [crate::polar::BeliefPair],
    eff_z: &'a crate::channel::Dmc,
    msg_pos: &'a [usize],
    is_rule_const: &'a [bool],
    is_chain: &'a [bool],
    is_d: &'a [bool],
    rule_mode: RuleMode,
    m: usize,
    len: usize,
    k: usize,
    z_block: u64,
    b_vals: &'a [bool],
    /// Index of the constants assignment within the view; zero when hidden.
    b_view_idx: usize,
    e_states: usize,
    include_chain: bool,
}

/// Depth-first enumeration over blocks: at each block every non-forced
/// position takes both values, weighted by its role; forced positions come
/// from the chain and the shared constants.
fn enumerate_blocks(
    table: &mut [Vec<f64>],
    ctx: &EnumCtx<'_>,
    block: usize,
    weight: f64,
    chain: &[bool],
    msg_idx: usize,
    z_dist_so_far: &[f64],
) -> Result<()> {
    if block == ctx.m {
        let last = chain; // E values of the final block
        let e_idx = if ctx.include_chain {
            last.iter()
                .enumerate()
                .fold(0usize, |acc, (j, &b)| acc | (usize::from(b) << j))
        } else {
            0
        };
        let base = ctx.b_view_idx * ctx.e_states + e_idx;
        let offset = base * ctx.z_block.pow(ctx.m as u32) as usize;
        let row = &mut table[msg_idx];
        for (zi, &p) in z_dist_so_far.iter().enumerate() {
            row[offset + zi] += weight * p;
        }
        return Ok(());
    }

    let len = ctx.len;
    let free_positions: Vec<usize> = (0..len)
        .filter(|&i| !ctx.is_rule_const[i] && !(ctx.is_chain[i] && block > 0))
        .collect();

    let mut t = vec![false; len];
    for (j, &pos) in ctx.partition.b_set.iter().enumerate() {
        t[pos] = match ctx.rule_mode {
            RuleMode::SeededSampling => ctx.b_vals[j],
            RuleMode::ArgmaxPrior => false,
        };
    }
    if block > 0 {
        for (j, &pos) in ctx.partition.r2_set.iter().enumerate() {
            t[pos] = chain[j];
        }
    }

    let free = free_positions.len();
    for assign in 0..(1u64 << free) {
        for (j, &pos) in free_positions.iter().enumerate() {
            t[pos] = assign >> j & 1 == 1;
        }
        // weight of this block's transform vector given roles
        let path = posteriors_along_path(ctx.prior_lv, &t)?;
        let mut w = weight;
        for (i, &bit) in t.iter().enumerate() {
            if ctx.is_d[i] {
                w *= match ctx.rule_mode {
                    RuleMode::SeededSampling => path[i].mass(bit),
                    RuleMode::ArgmaxPrior => {
                        if bit == path[i].argmax() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
            } else if !ctx.is_rule_const[i] && !(ctx.is_chain[i] && block > 0) {
                // message, random, chaining-source and first-block seed bits
                // are uniform
                if ctx.msg_pos.binary_search(&i).is_err() {
                    w *= 0.5;
                }
            }
            if w == 0.0 {
                break;
            }
        }
        if w == 0.0 {
            continue;
        }

        let mut msg_next = msg_idx;
        let base = block * ctx.msg_pos.len();
        for (j, &pos) in ctx.msg_pos.iter().enumerate() {
            msg_next |= usize::from(t[pos]) << (base + j);
        }
        let next_chain: Vec<bool> = ctx.partition.e_set.iter().map(|&i| t[i]).collect();

        // spread this block's observation distribution
        let v = polar_transform(&t)?;
        let mut block_dist = vec![1.0f64; 1];
        for &vb in &v {
            let mut next = vec![0.0f64; block_dist.len() * ctx.k];
            for (zi, &p) in block_dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for z in 0..ctx.k {
                    let lik = ctx.eff_z.likelihood(vb as usize, z);
                    if lik > 0.0 {
                        next[zi * ctx.k + z] = p * lik;
                    }
                }
            }
            block_dist = next;
        }
        // combine with the accumulated blocks (block-major ordering)
        let mut combined = vec![0.0f64; z_dist_so_far.len() * block_dist.len()];
        for (a, &pa) in z_dist_so_far.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in block_dist.iter().enumerate() {
                combined[a * block_dist.len() + b] = pa * pb;
            }
        }
        // messages are uniform: each message combination owns its slice of
        // the enumeration, so the weight needs no message factor
        enumerate_blocks(table, ctx, block + 1, w, &next_chain, msg_next, &combined)?;
    }
    Ok(())
}

/// Exact `I(M^m; U^m, Z^m)` for the broadcast scheme by full enumeration:
/// the secret messages against the eavesdropper's observations joined with
/// the entire common-layer sequence (known to Receiver 2 by construction,
/// which is why the strong condition conditions on it). Common and
/// individual message bits, seeds, random fills and rule draws are
/// integrated analytically, exactly as in [`exact_leakage`].
#[allow(clippy::too_many_arguments)]
pub fn exact_bcc_leakage(
    spec: &crate::channel::BccSpec,
    common: &crate::partition::BccCommonPartition,
    secret: &IndexPartition,
    rule_mode: RuleMode,
    m: usize,
    reveal_b: bool,
    budget: u64,
) -> Result<LeakageReport> {
    common.validate()?;
    secret.validate()?;
    spec.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let len = secret.block_len();
    if common.block_len() != len {
        return Err(Error::InvalidParameter("layer lengths differ".into()));
    }
    let eff_z = spec.effective_vz()?;
    let k = eff_z.output_size();

    let msg_pos: Vec<usize> = secret
        .i_set
        .iter()
        .filter(|i| secret.e_set.binary_search(i).is_err())
        .copied()
        .collect();
    let msg_bits_total = m * msg_pos.len();
    let tb_len = secret.b_set.len();
    let tb_states: usize = if rule_mode == RuleMode::SeededSampling {
        1 << tb_len
    } else {
        1
    };
    let qf_len = common.frozen.len();
    let qf_states: usize = if rule_mode == RuleMode::SeededSampling {
        1 << qf_len
    } else {
        1
    };
    let view_b: usize = if reveal_b { tb_states } else { 1 };

    let z_block: u64 = (k as u64).checked_pow(len as u32).ok_or_else(budget_err)?;
    let z_total = z_block.checked_pow(m as u32).ok_or_else(budget_err)?;
    let q_total: u64 = 1u64.checked_shl((m * len) as u32).ok_or_else(budget_err)?;
    // everything except global constants takes both values somewhere
    let q_free_per_block = len - qf_len;
    let t_free_first = len - tb_len;
    let t_free_later = t_free_first - secret.r2_set.len();
    let tuples = (tb_states as u64 * qf_states as u64)
        .checked_mul(1u64 << (q_free_per_block as u64 * m as u64))
        .and_then(|v| v.checked_mul(1u64 << t_free_first))
        .and_then(|v| v.checked_mul(1u64 << (t_free_later as u64 * (m as u64 - 1))))
        .ok_or_else(budget_err)?;
    let cost = tuples.checked_mul(z_total).ok_or_else(budget_err)?;
    let table_cells = (1u64 << msg_bits_total)
        .checked_mul(view_b as u64)
        .and_then(|v| v.checked_mul(q_total))
        .and_then(|v| v.checked_mul(z_total))
        .ok_or_else(budget_err)?;
    if cost > budget || table_cells > budget / 4 {
        return Err(Error::BudgetExceeded(format!(
            "exact broadcast leakage needs {cost} enumeration steps and {table_cells} table \
             cells (budget {budget}); shrink N, m or the alphabet"
        )));
    }

    let q_prior_lv = prior_leaves(&vec![spec.p_u; len])?;
    let msg_count = 1usize << msg_bits_total;
    let mut table = vec![vec![0.0f64; (view_b as u64 * q_total * z_total) as usize]; msg_count];

    let in_set = |set: &[usize], i: usize| set.binary_search(&i).is_ok();
    let e2_of_d2: Vec<bool> = (0..len).map(|i| in_set(&common.e2, i)).collect();

    for tb_assign in 0..tb_states {
        let tb_vals: Vec<bool> = (0..tb_len).map(|j| tb_assign >> j & 1 == 1).collect();
        for qf_assign in 0..qf_states {
            let qf_vals: Vec<bool> = (0..qf_len).map(|j| qf_assign >> j & 1 == 1).collect();
            let weight = 1.0 / (tb_states * qf_states) as f64;
            bcc_blocks(
                &mut table,
                &BccEnumCtx {
                    spec,
                    common,
                    secret,
                    rule_mode,
                    m,
                    len,
                    k,
                    eff_z: &eff_z,
                    q_prior_lv: &q_prior_lv,
                    msg_pos: &msg_pos,
                    tb_vals: &tb_vals,
                    qf_vals: &qf_vals,
                    e2_of_d2: &e2_of_d2,
                    z_total,
                    q_total,
                    view_b_idx: if reveal_b { tb_assign as u64 } else { 0 },
                },
                0,
                weight,
                &[],
                &[],
                0,
                0,
                &[1.0],
            )?;
        }
    }

    let info = mutual_information_from_table(&table);
    let mut scope = String::from("M;U^m,Z^m");
    if reveal_b && tb_len > 0 {
        scope.push_str(",B");
    }
    Ok(LeakageReport {
        schema_version: 1,
        method: "exact_enumeration".into(),
        bits: info,
        message_bits: msg_bits_total,
        per_message_bit: if msg_bits_total > 0 {
            info / msg_bits_total as f64
        } else {
            0.0
        },
        n: secret.n,
        m,
        scope,
        certified: true,
    })
}

struct BccEnumCtx<'a> {
    spec: &'a crate::channel::BccSpec,
    common: &'a crate::partition::BccCommonPartition,
    secret: &'a IndexPartition,
    rule_mode: RuleMode,
    m: usize,
    len: usize,
    k: usize,
    eff_z: &'a crate::channel::Dmc,
    q_prior_lv: &'a [crate::polar::BeliefPair],
    msg_pos: &'a [usize],
    tb_vals: &'a [bool],
    qf_vals: &'a [bool],
    e2_of_d2: &'a [bool],
    z_total: u64,
    q_total: u64,
    view_b_idx: u64,
}

/// One block of the two-layer enumeration: the common layer's free
/// positions, then the secret layer's free positions conditioned on the
/// realized side sequence.
#[allow(clippy::too_many_arguments)]
fn bcc_blocks(
    table: &mut [Vec<f64>],
    ctx: &BccEnumCtx<'_>,
    block: usize,
    weight: f64,
    q_chain: &[bool],
    t_chain: &[bool],
    msg_idx: usize,
    q_view: u64,
    z_dist: &[f64],
) -> Result<()> {
    if block == ctx.m {
        let base = ((ctx.view_b_idx * ctx.q_total + q_view) * ctx.z_total) as usize;
        let row = &mut table[msg_idx];
        for (zi, &p) in z_dist.iter().enumerate() {
            row[base + zi] += weight * p;
        }
        return Ok(());
    }
    let len = ctx.len;
    let common = ctx.common;
    let last = block == ctx.m - 1;

    // common layer: forced values and free positions for this block
    let mut q = vec![false; len];
    for (j, &pos) in common.frozen.iter().enumerate() {
        q[pos] = match ctx.rule_mode {
            RuleMode::SeededSampling => ctx.qf_vals[j],
            RuleMode::ArgmaxPrior => false,
        };
    }
    if block > 0 {
        for (j, &pos) in common.e2.iter().enumerate() {
            q[pos] = q_chain[j];
        }
    }
    // block 0 keeps the chained piece at its shared zeros; the final block
    // keeps the message piece at its shared zeros
    let q_free: Vec<usize> = (0..len)
        .filter(|&i| {
            if in_sorted(&common.frozen, i) {
                false
            } else if in_sorted(&common.d1, i) {
                !last
            } else if in_sorted(&common.d2, i) {
                if block == 0 {
                    false
                } else {
                    !ctx.e2_of_d2[i] // chained copies are forced
                }
            } else {
                true // i_u and the deterministic remainder
            }
        })
        .collect();

    for q_assign in 0..(1u64 << q_free.len()) {
        for (j, &pos) in q_free.iter().enumerate() {
            q[pos] = q_assign >> j & 1 == 1;
        }
        let q_path = posteriors_along_path(ctx.q_prior_lv, &q)?;
        let mut qw = weight;
        for (i, &bit) in q.iter().enumerate() {
            if in_sorted(&common.deterministic, i) {
                qw *= match ctx.rule_mode {
                    RuleMode::SeededSampling => q_path[i].mass(bit),
                    RuleMode::ArgmaxPrior => {
                        if bit == q_path[i].argmax() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
            } else if in_sorted(&common.i_u, i)
                || (in_sorted(&common.d1, i) && !last)
                || (block > 0 && in_sorted(&common.d2, i) && !ctx.e2_of_d2[i])
            {
                qw *= 0.5; // common message bits and shared random fills
            }
            if qw == 0.0 {
                break;
            }
        }
        if qw == 0.0 {
            continue;
        }
        let u = polar_transform(&q)?;
        let next_q_chain: Vec<bool> = common.d1.iter().map(|&i| q[i]).collect();
        let q_idx: u64 = q
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &b)| acc | (u64::from(b) << j));
        let q_view_next = q_view | (q_idx << (block * len));

        // secret layer conditioned on u
        let priors: Vec<f64> = u
            .iter()
            .map(|&ub| ctx.spec.p_v_given_u[ub as usize][1])
            .collect();
        let t_prior_lv = prior_leaves(&priors)?;
        let mut t = vec![false; len];
        for (j, &pos) in ctx.secret.b_set.iter().enumerate() {
            t[pos] = match ctx.rule_mode {
                RuleMode::SeededSampling => ctx.tb_vals[j],
                RuleMode::ArgmaxPrior => false,
            };
        }
        if block > 0 {
            for (j, &pos) in ctx.secret.r2_set.iter().enumerate() {
                t[pos] = t_chain[j];
            }
        }
        let t_free: Vec<usize> = (0..len)
            .filter(|&i| {
                !in_sorted(&ctx.secret.b_set, i) && !(block > 0 && in_sorted(&ctx.secret.r2_set, i))
            })
            .collect();

        for t_assign in 0..(1u64 << t_free.len()) {
            for (j, &pos) in t_free.iter().enumerate() {
                t[pos] = t_assign >> j & 1 == 1;
            }
            let t_path = posteriors_along_path(&t_prior_lv, &t)?;
            let mut tw = qw;
            for (i, &bit) in t.iter().enumerate() {
                if in_sorted(&ctx.secret.d_set, i) {
                    tw *= match ctx.rule_mode {
                        RuleMode::SeededSampling => t_path[i].mass(bit),
                        RuleMode::ArgmaxPrior => {
                            if bit == t_path[i].argmax() {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                } else if !in_sorted(&ctx.secret.b_set, i)
                    && !(block > 0 && in_sorted(&ctx.secret.r2_set, i))
                    && ctx.msg_pos.binary_search(&i).is_err()
                {
                    tw *= 0.5; // individual payload, chain sources, seed bits
                }
                if tw == 0.0 {
                    break;
                }
            }
            if tw == 0.0 {
                continue;
            }
            let mut msg_next = msg_idx;
            let base = block * ctx.msg_pos.len();
            for (j, &pos) in ctx.msg_pos.iter().enumerate() {
                msg_next |= usize::from(t[pos]) << (base + j);
            }
            let next_t_chain: Vec<bool> = ctx.secret.e_set.iter().map(|&i| t[i]).collect();

            let v = polar_transform(&t)?;
            let mut block_dist = vec![1.0f64; 1];
            for &vb in &v {
                let mut next = vec![0.0f64; block_dist.len() * ctx.k];
                for (zi, &p) in block_dist.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for z in 0..ctx.k {
                        let lik = ctx.eff_z.likelihood(vb as usize, z);
                        if lik > 0.0 {
                            next[zi * ctx.k + z] = p * lik;
                        }
                    }
                }
                block_dist = next;
            }
            let mut combined = vec![0.0f64; z_dist.len() * block_dist.len()];
            for (a, &pa) in z_dist.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (b, &pb) in block_dist.iter().enumerate() {
                    combined[a * block_dist.len() + b] = pa * pb;
                }
            }
            bcc_blocks(
                table,
                ctx,
                block + 1,
                tw,
                &next_q_chain,
                &next_t_chain,
                msg_next,
                q_view_next,
                &combined,
            )?;
        }
    }
    Ok(())
}

fn in_sorted(set: &[usize], i: usize) -> bool {
    set.binary_search(&i).is_ok()
}

/// Heuristic per-index leakage margin at scale: the sum over
/// message-carrying indices of `1 - z^2` under the eavesdropper's observer,
/// which upper-bounds each index's information deficit when the statistics
/// are exact. Never a certificate.
pub fn leakage_proxy(stats: &BitChannelStats, partition: &IndexPartition) -> LeakageReport {
    let bits: f64 = partition
        .i_set
        .iter()
        .map(|&i| 1.0 - stats.z_z[i] * stats.z_z[i])
        .sum();
    let msg = partition.message_len();
    LeakageReport {
        schema_version: 1,
        method: if stats.method == StatsMethod::MonteCarlo {
            "proxy_bound_mc".into()
        } else {
            "proxy_bound".into()
        },
        bits,
        message_bits: msg,
        per_message_bit: if msg > 0 { bits / msg as f64 } else { 0.0 },
        n: partition.n,
        m: 1,
        scope: "sum over I of 1 - z_z^2".into(),
        certified: false,
    }
}

/// Writes a report as JSON and CSV side by side: `base.json` and
/// `base.csv`. Byte-identical on repeated calls with equal inputs.
pub fn emit_report<T: Serialize>(
    value: &T,
    csv: String,
    base: &Path,
) -> Result<(PathBuf, PathBuf)> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let json_path = base.with_extension("json");
    let csv_path = base.with_extension("csv");
    let mut file = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    std::fs::write(&csv_path, csv)?;
    Ok((json_path, csv_path))
}
