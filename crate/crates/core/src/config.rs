//! Experiment configuration: the JSON schema the workbench consumes, plus
//! the construction pipeline that turns a configuration into statistics and
//! partitions.
//!
//! Every run is fully determined by the configuration and its master seed;
//! unknown fields are rejected so a config cannot silently drift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{BccSpec, ConstructionParams, WiretapSpec};
use crate::error::{Error, Result};
use crate::partition::{
    build_bcc_partitions, build_wiretap_partition, classify, BccCommonPartition, IndexPartition,
};
use crate::reliability::{
    bec_closed_form_stats, exact_bcc_q_stats, exact_bcc_t_stats, exact_wiretap_stats,
    mc_bcc_q_stats, mc_bcc_t_stats, mc_wiretap_stats, BitChannelStats, DEFAULT_STATE_CAP,
};
use crate::wiretap::RuleMode;

/// Which transmission problem a configuration describes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SpecConfig {
    Wiretap(WiretapSpec),
    Bcc(BccSpec),
}

/// How reliability statistics are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatsMethodConfig {
    /// Closed form for uniform BEC specs, exact synthesis when it fits the
    /// state cap, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
    BecClosedForm,
}

fn default_samples() -> u64 {
    100_000
}

fn default_state_cap() -> usize {
    DEFAULT_STATE_CAP
}

/// Estimation knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default)]
    pub method: StatsMethodConfig,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            method: StatsMethodConfig::Auto,
            samples: default_samples(),
            state_cap: default_state_cap(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_leakage_budget() -> u64 {
    1 << 28
}

/// Behavioral switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFlags {
    /// Include the frozen-set values in the eavesdropper's view when
    /// measuring leakage.
    #[serde(default = "default_true")]
    pub reveal_b_to_eve: bool,
    #[serde(default = "default_rule_mode")]
    pub rule_mode: RuleMode,
    /// Optional acceptance bound checked by the leakage subcommand, in bits
    /// per message bit.
    #[serde(default)]
    pub max_leakage_bits: Option<f64>,
    /// State budget for the exact leakage enumeration.
    #[serde(default = "default_leakage_budget")]
    pub leakage_budget: u64,
    /// Force the common-layer orientation instead of the measured one.
    #[serde(default)]
    pub orientation_override: Option<bool>,
}

fn default_rule_mode() -> RuleMode {
    RuleMode::SeededSampling
}

impl Default for RunFlags {
    fn default() -> Self {
        RunFlags {
            reveal_b_to_eve: true,
            rule_mode: RuleMode::SeededSampling,
            max_leakage_bits: None,
            leakage_budget: default_leakage_budget(),
            orientation_override: None,
        }
    }
}

/// One experiment, fully pinned.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub spec: SpecConfig,
    pub params: ConstructionParams,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub flags: RunFlags,
    /// Directory report files land in; the current directory when absent.
    #[serde(default)]
    pub outputs: Option<std::path::PathBuf>,
}

fn default_trials() -> u64 {
    200
}

impl ExperimentConfig {
    pub fn from_json(data: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(data)?;
        config.validate()?;
        Ok(config)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Self::from_json(&data)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::InvalidParameter(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        self.params.validate()?;
        match &self.spec {
            SpecConfig::Wiretap(spec) => spec.validate(),
            SpecConfig::Bcc(spec) => spec.validate(),
        }
    }

    pub fn wiretap_spec(&self) -> Result<&WiretapSpec> {
        match &self.spec {
            SpecConfig::Wiretap(spec) => Ok(spec),
            SpecConfig::Bcc(_) => Err(Error::InvalidParameter(
                "this operation needs a wiretap specification".into(),
            )),
        }
    }

    pub fn bcc_spec(&self) -> Result<&BccSpec> {
        match &self.spec {
            SpecConfig::Bcc(spec) => Ok(spec),
            SpecConfig::Wiretap(_) => Err(Error::InvalidParameter(
                "this operation needs a broadcast specification".into(),
            )),
        }
    }

    /// FNV-1a digest of the canonical JSON form; pins spec, parameters and
    /// seeds in emitted reports.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Statistics for the wiretap layer according to the configured method.
pub fn wiretap_stats(config: &ExperimentConfig, threads: usize) -> Result<BitChannelStats> {
    let spec = config.wiretap_spec()?;
    let n = config.params.n;
    let closed_form_ok = bec_closed_form_stats(spec, n).is_ok();
    match config.stats.method {
        StatsMethodConfig::BecClosedForm => bec_closed_form_stats(spec, n),
        StatsMethodConfig::Exact => exact_wiretap_stats(spec, n, config.stats.state_cap),
        StatsMethodConfig::MonteCarlo => mc_wiretap_stats(
            spec,
            n,
            config.stats.samples,
            config.params.master_seed,
            threads,
        ),
        StatsMethodConfig::Auto => {
            if closed_form_ok {
                bec_closed_form_stats(spec, n)
            } else {
                exact_wiretap_stats(spec, n, config.stats.state_cap).or_else(|_| {
                    mc_wiretap_stats(
                        spec,
                        n,
                        config.stats.samples,
                        config.params.master_seed,
                        threads,
                    )
                })
            }
        }
    }
}

/// Statistics for both broadcast layers according to the configured method.
pub fn bcc_stats(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<(BitChannelStats, BitChannelStats)> {
    let spec = config.bcc_spec()?;
    let n = config.params.n;
    let seed = config.params.master_seed;
    match config.stats.method {
        StatsMethodConfig::BecClosedForm => Err(Error::InvalidParameter(
            "the BEC closed form does not cover broadcast layers".into(),
        )),
        StatsMethodConfig::Exact => Ok((
            exact_bcc_q_stats(spec, n, config.stats.state_cap)?,
            exact_bcc_t_stats(spec, n, config.stats.state_cap)?,
        )),
        StatsMethodConfig::MonteCarlo => Ok((
            mc_bcc_q_stats(spec, n, config.stats.samples, seed, threads)?,
            mc_bcc_t_stats(spec, n, config.stats.samples, seed, threads)?,
        )),
        StatsMethodConfig::Auto => {
            let q = exact_bcc_q_stats(spec, n, config.stats.state_cap)
                .or_else(|_| mc_bcc_q_stats(spec, n, config.stats.samples, seed, threads))?;
            let t = exact_bcc_t_stats(spec, n, config.stats.state_cap)
                .or_else(|_| mc_bcc_t_stats(spec, n, config.stats.samples, seed, threads))?;
            Ok((q, t))
        }
    }
}

/// Builds the wiretap partition for a configuration.
pub fn wiretap_partition(
    config: &ExperimentConfig,
    stats: &BitChannelStats,
) -> Result<IndexPartition> {
    let flags = classify(stats, config.params.delta_low, config.params.delta_high);
    build_wiretap_partition(&flags)
}

/// Builds both broadcast partitions for a configuration.
pub fn bcc_partitions(
    config: &ExperimentConfig,
    q_stats: &BitChannelStats,
    t_stats: &BitChannelStats,
) -> Result<(BccCommonPartition, IndexPartition)> {
    let q_flags = classify(q_stats, config.params.delta_low, config.params.delta_high);
    let t_flags = classify(t_stats, config.params.delta_low, config.params.delta_high);
    let (mut common, secret) = build_bcc_partitions(&q_flags, &t_flags)?;
    if let Some(force) = config.flags.orientation_override {
        if force != common.swapped {
            std::mem::swap(&mut common.d1, &mut common.d2);
            common.e2 = common.d2.iter().copied().take(common.d1.len()).collect();
            common.swapped = force;
            common.validate()?;
        }
    }
    Ok((common, secret))
}
