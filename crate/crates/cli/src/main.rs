//! Command-line workbench: construct reliability statistics and coordinate
//! partitions, simulate wiretap and broadcast transmissions, measure
//! leakage, and export rate reports.
//!
//! Every run is pinned by its configuration file and the master seed inside
//! it. Exit codes: 0 success, 1 configuration error, 2 infeasible
//! construction, 3 state budget exceeded.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use polarwire::bcc::bcc_rate_triple;
use polarwire::config::{
    bcc_partitions, bcc_stats, wiretap_partition, wiretap_stats, ExperimentConfig, SpecConfig,
};
use polarwire::error::{Error, Result};
use polarwire::eval::{emit_report, exact_leakage, leakage_proxy};
use polarwire::partition::{build_baseline_partition, classify, BaselineKind, IndexPartition};
use polarwire::reliability::BitChannelStats;
use polarwire::wiretap::wiretap_rates;

#[derive(Parser)]
#[command(
    name = "polarwire",
    version,
    about = "polar-coded wiretap and broadcast channel workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; falls back to POLARWIRE_THREADS, then to the machine
    /// parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the configuration's `outputs` field.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute reliability statistics and the coordinate partition.
    Construct {
        #[command(flatten)]
        common: Common,
        /// Path of the statistics JSON (CSV lands next to it). Defaults to
        /// `stats.json` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo reliability of the wiretap chain.
    SimulateWiretap {
        #[command(flatten)]
        common: Common,
        /// Trial count override.
        #[arg(long)]
        trials: Option<u64>,
        /// Reuse an emitted partition instead of rebuilding it.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Also write trial 0's full cluster transcript for audit.
        #[arg(long)]
        transcript: bool,
    },
    /// Monte Carlo reliability of the broadcast scheme (both receivers).
    SimulateBcc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
        /// Reuse emitted partitions instead of rebuilding them.
        #[arg(long)]
        partition_common: Option<PathBuf>,
        #[arg(long)]
        partition_secret: Option<PathBuf>,
        /// Also write trial 0's full cluster transcript for audit.
        #[arg(long)]
        transcript: bool,
    },
    /// Secrecy-leakage measurement: exact enumeration or per-index proxy.
    Leakage {
        #[command(flatten)]
        common: Common,
        /// Run the exact enumeration oracle instead of the proxy.
        #[arg(long)]
        exact: bool,
    },
    /// Rate accounting for the configured scheme.
    Rates {
        #[command(flatten)]
        common: Common,
    },
    /// Build the two prior-work partitions for comparison.
    Baselines {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("polarwire: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn threads_from(common: &Common) -> usize {
    common
        .threads
        .or_else(|| {
            std::env::var("POLARWIRE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn out_dir(common: &Common, config: &ExperimentConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| config.outputs.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::read_json(&common.config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Construct { common, out } => construct(&common, out.as_deref()),
        Command::SimulateWiretap {
            common,
            trials,
            partition,
            transcript,
        } => simulate_wiretap(&common, trials, partition.as_deref(), transcript),
        Command::SimulateBcc {
            common,
            trials,
            partition_common,
            partition_secret,
            transcript,
        } => simulate_bcc(
            &common,
            trials,
            partition_common.as_deref(),
            partition_secret.as_deref(),
            transcript,
        ),
        Command::Leakage { common, exact } => leakage(&common, exact),
        Command::Rates { common } => rates(&common),
        Command::Baselines { common } => baselines(&common),
    }
}

fn construct(common: &Common, out: Option<&Path>) -> Result<()> {
    let config = load(common)?;
    let threads = threads_from(common);
    let dir = out_dir(common, &config);
    std::fs::create_dir_all(&dir)?;
    let stats_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| dir.join("stats.json"));
    match &config.spec {
        SpecConfig::Wiretap(_) => {
            let stats = wiretap_stats(&config, threads)?;
            let partition = wiretap_partition(&config, &stats)?;
            write_stats(&stats, &stats_path)?;
            let partition_path = sibling(&stats_path, "partition.json");
            partition.write_json(&partition_path)?;
            println!(
                "construct: wrote {} and {} (|I|={}, |E|={}, |R2|={}, unclassified={})",
                stats_path.display(),
                partition_path.display(),
                partition.i_set.len(),
                partition.e_set.len(),
                partition.r2_set.len(),
                partition.unclassified
            );
        }
        SpecConfig::Bcc(_) => {
            let (q_stats, t_stats) = bcc_stats(&config, threads)?;
            let (common_part, secret_part) = bcc_partitions(&config, &q_stats, &t_stats)?;
            let q_path = with_suffix(&stats_path, "_q");
            let t_path = with_suffix(&stats_path, "_t");
            write_stats(&q_stats, &q_path)?;
            write_stats(&t_stats, &t_path)?;
            let common_path = sibling(&stats_path, "partition_common.json");
            let secret_path = sibling(&stats_path, "partition_secret.json");
            write_json(&common_part, &common_path)?;
            secret_part.write_json(&secret_path)?;
            println!(
                "construct: wrote {}, {}, {}, {} (|I_u|={}, |D1|={}, |D2|={}, swapped={})",
                q_path.display(),
                t_path.display(),
                common_path.display(),
                secret_path.display(),
                common_part.i_u.len(),
                common_part.d1.len(),
                common_part.d2.len(),
                common_part.swapped
            );
        }
    }
    Ok(())
}

fn simulate_wiretap(
    common: &Common,
    trials: Option<u64>,
    partition: Option<&Path>,
    transcript: bool,
) -> Result<()> {
    let mut config = load(common)?;
    config.wiretap_spec()?;
    if let Some(t) = trials {
        config.trials = t;
    }
    let threads = threads_from(common);
    let built;
    let partition = match partition {
        Some(path) => {
            built = IndexPartition::read_json(path)?;
            &built
        }
        None => {
            let stats = wiretap_stats(&config, threads)?;
            built = wiretap_partition(&config, &stats)?;
            &built
        }
    };
    let report = polarwire::eval::run_wiretap_reliability_with(&config, partition, threads)?;
    let dir = out_dir(common, &config);
    if transcript {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("cluster.json");
        write_json(
            &polarwire::eval::wiretap_trial_cluster(&config, partition, 0)?,
            &path,
        )?;
        println!("simulate-wiretap: wrote {}", path.display());
    }
    let (json, csv) = emit_report(&report, report.to_csv(), &dir.join("reliability"))?;
    println!(
        "simulate-wiretap: wrote {} and {}",
        json.display(),
        csv.display()
    );
    for r in &report.receivers {
        println!(
            "  {}: {}/{} errors, rate {:.5} (95% CI [{:.5}, {:.5}])",
            r.receiver, r.errors, r.trials, r.rate, r.ci_lo, r.ci_hi
        );
    }
    Ok(())
}

fn simulate_bcc(
    common: &Common,
    trials: Option<u64>,
    partition_common: Option<&Path>,
    partition_secret: Option<&Path>,
    transcript: bool,
) -> Result<()> {
    let mut config = load(common)?;
    config.bcc_spec()?;
    if let Some(t) = trials {
        config.trials = t;
    }
    let threads = threads_from(common);
    let parts = match (partition_common, partition_secret) {
        (Some(cp), Some(sp)) => {
            let common_part: polarwire::partition::BccCommonPartition = read_json(cp)?;
            common_part.validate()?;
            (common_part, IndexPartition::read_json(sp)?)
        }
        (None, None) => {
            let (q_stats, t_stats) = bcc_stats(&config, threads)?;
            bcc_partitions(&config, &q_stats, &t_stats)?
        }
        _ => {
            return Err(Error::InvalidParameter(
                "pass both partition files or neither".into(),
            ))
        }
    };
    let report = polarwire::eval::run_bcc_reliability_with(&config, &parts.0, &parts.1, threads)?;
    let dir = out_dir(common, &config);
    if transcript {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("cluster_bcc.json");
        write_json(
            &polarwire::eval::bcc_trial_cluster(&config, &parts.0, &parts.1, 0)?,
            &path,
        )?;
        println!("simulate-bcc: wrote {}", path.display());
    }
    let (json, csv) = emit_report(&report, report.to_csv(), &dir.join("reliability_bcc"))?;
    println!(
        "simulate-bcc: wrote {} and {}",
        json.display(),
        csv.display()
    );
    for r in &report.receivers {
        println!(
            "  {}: {}/{} errors, rate {:.5} (95% CI [{:.5}, {:.5}])",
            r.receiver, r.errors, r.trials, r.rate, r.ci_lo, r.ci_hi
        );
    }
    Ok(())
}

fn leakage(common: &Common, exact: bool) -> Result<()> {
    let config = load(common)?;
    let threads = threads_from(common);
    let report = match &config.spec {
        SpecConfig::Wiretap(spec) => {
            let stats = wiretap_stats(&config, threads)?;
            let partition = wiretap_partition(&config, &stats)?;
            if exact {
                exact_leakage(
                    spec,
                    &partition,
                    config.flags.rule_mode,
                    config.params.m,
                    config.flags.reveal_b_to_eve,
                    false,
                    config.flags.leakage_budget,
                )?
            } else {
                leakage_proxy(&stats, &partition)
            }
        }
        SpecConfig::Bcc(spec) => {
            let (q_stats, t_stats) = bcc_stats(&config, threads)?;
            let (common_part, secret_part) = bcc_partitions(&config, &q_stats, &t_stats)?;
            if exact {
                polarwire::eval::exact_bcc_leakage(
                    spec,
                    &common_part,
                    &secret_part,
                    config.flags.rule_mode,
                    config.params.m,
                    config.flags.reveal_b_to_eve,
                    config.flags.leakage_budget,
                )?
            } else {
                leakage_proxy(&t_stats, &secret_part)
            }
        }
    };
    let dir = out_dir(common, &config);
    let (json, csv) = emit_report(&report, report.to_csv(), &dir.join("leakage"))?;
    println!(
        "leakage: {} = {:.6} bits over {} message bits ({:.6}/bit), wrote {} and {}",
        report.method,
        report.bits,
        report.message_bits,
        report.per_message_bit,
        json.display(),
        csv.display()
    );
    if let Some(cap) = config.flags.max_leakage_bits {
        if report.per_message_bit > cap {
            return Err(Error::InvalidParameter(format!(
                "leakage {:.6} bits/message bit exceeds the configured bound {cap}",
                report.per_message_bit
            )));
        }
        println!("leakage: within the configured bound {cap} bits/message bit");
    }
    Ok(())
}

fn rates(common: &Common) -> Result<()> {
    let config = load(common)?;
    let threads = threads_from(common);
    let dir = out_dir(common, &config);
    match &config.spec {
        SpecConfig::Wiretap(spec) => {
            let stats = wiretap_stats(&config, threads)?;
            let partition = wiretap_partition(&config, &stats)?;
            let report = wiretap_rates(&partition, spec, config.params.m)?;
            let (json, csv) = emit_report(&report, report.to_csv(), &dir.join("rates"))?;
            println!(
                "rates: message {:.5} vs target {:.5}; seed {:.6}; frozen {:.6}; wrote {} and {}",
                report.message_rate,
                report.target_rate,
                report.seed_rate,
                report.frozen_overhead,
                json.display(),
                csv.display()
            );
        }
        SpecConfig::Bcc(spec) => {
            let (q_stats, t_stats) = bcc_stats(&config, threads)?;
            let (common_part, secret_part) = bcc_partitions(&config, &q_stats, &t_stats)?;
            let report = bcc_rate_triple(&common_part, &secret_part, spec, config.params.m)?;
            let (json, csv) = emit_report(&report, report.to_csv(), &dir.join("rates_bcc"))?;
            println!(
                "rates: R0 {:.5} (target {:.5}), Rs {:.5} (target {:.5}), R1 {:.5}; wrote {} and {}",
                report.r0,
                report.r0_target,
                report.rs,
                report.rs_target,
                report.r1,
                json.display(),
                csv.display()
            );
        }
    }
    Ok(())
}

fn baselines(common: &Common) -> Result<()> {
    let config = load(common)?;
    let threads = threads_from(common);
    let stats = wiretap_stats(&config, threads)?;
    let flags = classify(&stats, config.params.delta_low, config.params.delta_high);
    let dir = out_dir(common, &config);
    std::fs::create_dir_all(&dir)?;
    let mut summary = String::from("kind,i,b,r1,r2,d\n");
    for (kind, name) in [
        (BaselineKind::Mahdavifar, "baseline_mahdavifar"),
        (BaselineKind::Sasoglu, "baseline_sasoglu"),
    ] {
        let partition = build_baseline_partition(kind, &flags)?;
        let path = dir.join(format!("{name}.json"));
        partition.write_json(&path)?;
        summary.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            partition.i_set.len(),
            partition.b_set.len(),
            partition.r1_set.len(),
            partition.r2_set.len(),
            partition.d_set.len()
        ));
        println!("baselines: wrote {}", path.display());
    }
    std::fs::write(dir.join("baselines.csv"), summary)?;
    Ok(())
}

fn write_stats(stats: &BitChannelStats, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    stats.write_json(path)?;
    stats.write_csv(&path.with_extension("csv"))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    use std::io::Write as _;
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let data = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&data)?)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("stats");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("json");
    sibling(path, &format!("{stem}{suffix}.{ext}"))
}
