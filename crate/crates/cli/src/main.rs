use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use polar_bpl::perm::write_pfg_list;
use polar_bpl::polar::encode;
use polar_bpl::sim::{
    perm_selftest, run_bler, run_latency_census, run_sg, write_csv, write_json, ExperimentConfig,
    Fault,
};
use polar_bpl::Error;

#[derive(Parser)]
#[command(name = "polar-bpl", version, about = "Polar BP list decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated Eb/N0 points in dB, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// BLER, I_avg and latency per SNR and list size.
    Bler {
        #[command(flatten)]
        common: Common,
        /// Output file; a JSON sidecar is written next to a CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Latency distribution over all stage orders fixing the first p stages.
    Census {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        p: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Collect a failure dataset and select a PFG list.
    Select {
        #[command(flatten)]
        common: Common,
        /// Where to write the selected list.
        #[arg(long)]
        out: PathBuf,
        /// Also keep the failure dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Check the permutation-decomposition properties.
    Selftest {
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, default_value_t = 10)]
        sampled_n: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// none, sub-shuffle or update-stage.
        #[arg(long, default_value = "none", hide = true)]
        inject_fault: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Encode one frame of the configured code.
    Encode {
        #[arg(long)]
        config: PathBuf,
        /// Message as a string of 0/1; random from --seed when absent.
        #[arg(long)]
        msg: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Format(_) | Error::NoCandidates => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(snr) = &common.snr {
        cfg.channel.snr = snr.clone();
    }
    if let Some(seed) = common.seed {
        cfg.channel.seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.run.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Bler {
            common,
            out,
            format,
        } => {
            let cfg = load(&common)?;
            let result = run_bler(&cfg)?;
            let mut w = output(&out)?;
            match format {
                Format::Csv => {
                    write_csv(&result.points, &mut w)?;
                    if let Some(p) = &out {
                        let sidecar = p.with_extension("json");
                        write_json(&result, create(&sidecar)?)?;
                    }
                }
                Format::Json => write_json(&result, &mut w)?,
            }
            w.flush()?;
        }
        Command::Census { n, p, out, format } => {
            let (census, csv) = run_latency_census(n, p)?;
            eprintln!(
                "{} permutations; pgu latency min {} max {} mean {:.3}; plan latency mean {:.3}; below 80: {:.4}",
                census.permutations,
                census.pgu_min(),
                census.pgu_max(),
                census.pgu_mean(),
                census.plan_mean(),
                census.pgu_fraction_below(80)
            );
            let mut w = output(&out)?;
            match format {
                Format::Csv => w.write_all(csv.as_bytes())?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &census).map_err(io::Error::other)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
        }
        Command::Select {
            common,
            out,
            dataset,
            format,
        } => {
            let cfg = load(&common)?;
            let (report, data) = run_sg(&cfg)?;
            let mut w = create(&out)?;
            write_pfg_list(&mut w, report.list.perms())?;
            w.flush()?;
            if let Some(path) = dataset {
                data.save(&path)?;
            }
            info!("selected {} graphs from {} failures", report.list.len(), data.len());
            let mut stdout = io::stdout().lock();
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &report).map_err(io::Error::other)?;
                    writeln!(stdout)?;
                }
                Format::Csv => {
                    writeln!(stdout, "step,candidate,pfg,weight,columns,conditional_rate")?;
                    for (i, s) in report.steps.iter().enumerate() {
                        writeln!(
                            stdout,
                            "{},{},{},{},{},{:.6}",
                            i + 1,
                            s.candidate,
                            s.pfg,
                            s.weight,
                            s.columns,
                            s.conditional_rate
                        )?;
                    }
                }
            }
        }
        Command::Selftest {
            n_max,
            sampled_n,
            samples,
            seed,
            inject_fault,
            format,
        } => {
            let fault: Fault = inject_fault.parse()?;
            let report = perm_selftest(n_max, sampled_n, samples, seed, fault)?;
            let mut stdout = io::stdout().lock();
            match format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut stdout, &report).map_err(io::Error::other)?;
                    writeln!(stdout)?;
                }
                Format::Csv => {
                    writeln!(stdout, "check,passed,cases,failures")?;
                    for c in &report.checks {
                        writeln!(stdout, "{},{},{},{}", c.name, c.passed, c.cases, c.failures)?;
                    }
                }
            }
            if !report.all_passed() {
                return Err(Failure::Runtime("self-test failed".into()));
            }
        }
        Command::Encode { config, msg, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let code = cfg.build_code()?;
            let msg: Vec<u8> = match msg {
                Some(s) => s
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        _ => Err(Failure::Validation(format!("bad message bit {c:?}"))),
                    })
                    .collect::<Result<_, _>>()?,
                None => polar_bpl::channel::generate_frame(&code, 0.0, seed, 0).msg,
            };
            let u = code.u_vector(&msg)?;
            let x = encode(&code, &msg)?;
            let bits = |v: &[u8]| v.iter().map(|b| char::from(b'0' + b)).collect::<String>();
            println!("msg {}", bits(&msg));
            println!("u   {}", bits(&u));
            println!("x   {}", bits(&x));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
