use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use scalebench::config::Config;
use scalebench::genval::{self, Channels, Status, Thresholds};
use scalebench::harness::{self, RunOptions};
use scalebench::sim::RunRecord;
use scalebench::stats::{cohens_kappa, read_ratings};
use scalebench::store::DecisionStore;
use scalebench::stub::{serve_stub, StubMode, TokenReport};
use scalebench::workload::{write_jobs, Generator, SubclassId};

#[derive(Parser)]
#[command(name = "scalebench", version, about = "Autoscaling policy benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit a generated workload as NDJSON job specs.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        subclass: SubclassId,
        #[arg(long, default_value_t = 10)]
        jobs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare generated jobs with reference trace files.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        subclass: SubclassId,
        #[arg(long, default_value_t = 200)]
        jobs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-job input sizes in bytes, one column with a header line.
        #[arg(long)]
        reference_input: Option<PathBuf>,
        /// Per-job shuffle volumes in bytes.
        #[arg(long)]
        reference_shuffle: Option<PathBuf>,
        /// Key-frequency histogram rows `lower,upper,mass`.
        #[arg(long)]
        reference_keys: Option<PathBuf>,
        /// Column to read from the sample files (first column otherwise).
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        ks_max: f64,
        /// Fraction of the histogram range.
        #[arg(long, default_value_t = 0.05)]
        emd_max: f64,
    },
    /// Compute SLA medians and static-optimal counts, cached by config hash.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the plan's subclasses.
        #[arg(long)]
        subclass: Vec<SubclassId>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Defaults to the plan's output directory.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Run the experiment plan of a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Decision store served to external policies' history lookups.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Recompute the report of a finished run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Conformance-test an external policy command.
    ProtocolCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seconds to wait for each reply.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(required = true, last = true)]
        command: Vec<String>,
    },
    /// Add run records to a decision store.
    Ingest {
        #[arg(long)]
        store: PathBuf,
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print every decision store entry as NDJSON.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa of a two-column reviewer score file.
    Kappa { ratings: PathBuf },
    /// Reference policy client speaking the wire protocol on stdio.
    #[command(hide = true)]
    StubPolicy {
        #[arg(long, value_enum, default_value_t = ModeArg::RuleMirror)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1.0)]
        headroom: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 3)]
        every: u64,
        #[arg(long, default_value_t = 2000)]
        delay_ms: u64,
        #[arg(long, default_value_t = 3)]
        after: u64,
        #[arg(long)]
        host_counted: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Echo,
    RuleMirror,
    StubAgent,
    HybridGate,
    Slow,
    Malformed,
    Crash,
    Silent,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    })
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        // Output piped into `head` and the like.
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Generate {
            config,
            subclass,
            jobs,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let g = Generator::new(&cfg.workload, &cfg.cluster)?;
            let jobs = g.generate_workload(&subclass.registered()?, jobs, seed)?;
            let mut w = output(out.as_deref())?;
            write_jobs(&mut w, &jobs)?;
            w.flush()?;
        }
        Cmd::Validate {
            config,
            subclass,
            jobs,
            seed,
            reference_input,
            reference_shuffle,
            reference_keys,
            column,
            ks_max,
            emd_max,
        } => {
            let cfg = load_config(config.as_deref())?;
            let reference = Channels {
                input: reference_input
                    .as_deref()
                    .map(|p| genval::read_sample(p, column.as_deref()))
                    .transpose()?,
                shuffle: reference_shuffle
                    .as_deref()
                    .map(|p| genval::read_sample(p, column.as_deref()))
                    .transpose()?,
                keys: reference_keys.as_deref().map(genval::read_histogram).transpose()?,
            };
            let g = Generator::new(&cfg.workload, &cfg.cluster)?;
            let generated_jobs = g.generate_workload(&subclass.registered()?, jobs, seed)?;
            let edges = reference.keys.as_ref().map(|h| h.bin_edges.clone());
            let generated = genval::channels_from_jobs(&generated_jobs, edges.as_deref())?;
            let verdict = genval::validate_class(&generated, &reference, Thresholds { ks_max, emd_max })?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            if verdict.overall == Status::Fail {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Calibrate {
            config,
            subclass,
            seed,
            jobs,
            cache_dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let subs = if subclass.is_empty() {
                cfg.plan.subclasses.clone()
            } else {
                subclass
            };
            let dir = cache_dir.unwrap_or_else(|| cfg.plan.output_dir.clone());
            let (cal, status) = harness::calibrate_cached(
                &cfg,
                &subs,
                seed.unwrap_or(cfg.workload.calibration_seed),
                jobs.unwrap_or(cfg.plan.jobs_per_cell),
                &dir,
            )?;
            eprintln!("calibration {:?}: {}", status, harness::cache_path(&dir, &cal.key).display());
            println!("{:<16} {:>12} {:>9} {:>10}", "subclass", "median_s", "oracle", "infeasible");
            for (id, m) in &cal.medians {
                let o = &cal.oracle[id];
                println!("{:<16} {:>12.3} {:>9} {:>10}", id.to_string(), m, o.executors, o.infeasible);
            }
        }
        Cmd::Run {
            config,
            output_dir,
            store,
        } => {
            let cfg = load_config(Some(&config))?;
            let store = store
                .map(|p| DecisionStore::open(&p).map(Arc::new))
                .transpose()?;
            let outcome = harness::run_plan(
                &cfg,
                &RunOptions {
                    output_dir,
                    stamp: None,
                    store,
                },
            )?;
            print!("{}", harness::summary_table(&outcome.report));
            println!("\nresults in {}", outcome.dir.display());
        }
        Cmd::Report { dir } => {
            let report = harness::report_from_dir(&dir)?;
            harness::write_report(&dir, &report)?;
            print!("{}", harness::summary_table(&report));
        }
        Cmd::ProtocolCheck {
            config,
            timeout,
            command,
        } => {
            let cfg = load_config(config.as_deref())?;
            let timeout = Duration::from_secs_f64(timeout.unwrap_or(cfg.policy.timeout));
            let report = harness::protocol_check(&command, &cfg, timeout);
            for c in &report.cases {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!(
                "{} ticks, {} faults, {:.2}s",
                report.ticks, report.faults, report.elapsed_secs
            );
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Ingest { store, runs } => {
            let mut s = DecisionStore::open(&store)?;
            for path in runs {
                let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                let record = RunRecord::read_ndjson(BufReader::new(f))
                    .with_context(|| format!("reading {}", path.display()))?;
                let n = s.ingest(&record)?;
                println!("{}: {n} entries", path.display());
            }
            println!("store holds {} entries", s.len());
        }
        Cmd::Export { store, out } => {
            if !store.exists() {
                bail!("no store at {}", store.display());
            }
            let s = DecisionStore::open(&store)?;
            let mut w = output(out.as_deref())?;
            s.export(&mut w)?;
            w.flush()?;
        }
        Cmd::Kappa { ratings } => {
            let (a, b) = read_ratings(&ratings)?;
            let k = cohens_kappa::<f64>(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&k)?);
        }
        Cmd::StubPolicy {
            mode,
            headroom,
            threshold,
            every,
            delay_ms,
            after,
            host_counted,
        } => {
            let mode = match mode {
                ModeArg::Echo => StubMode::Echo,
                ModeArg::RuleMirror => StubMode::RuleMirror { headroom },
                ModeArg::StubAgent => StubMode::StubAgent,
                ModeArg::HybridGate => StubMode::HybridGate { threshold },
                ModeArg::Slow => StubMode::Slow { every, delay_ms },
                ModeArg::Malformed => StubMode::Malformed { every },
                ModeArg::Crash => StubMode::Crash { after },
                ModeArg::Silent => StubMode::Silent,
            };
            let tokens = if host_counted {
                TokenReport::HostCounted
            } else {
                TokenReport::SelfCounted
            };
            serve_stub(mode, tokens, io::stdin().lock(), io::stdout().lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
