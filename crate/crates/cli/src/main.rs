use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetqrng::acquisition::{default_sweep_powers, fit_calibration, linearity_residuals, run_calibration_sweep};
use hetqrng::config::PipelineConfig;
use hetqrng::dsp::{band_gap_db, decimation_factor};
use hetqrng::entropy::{build_certificate, EntropyCertificate};
use hetqrng::format::{parse_count, parse_f64, KvDoc};
use hetqrng::pipeline::{autocorr_stream, spectrum_stream, spectrum_text, Channel, Pipeline, SPECTRUM_SAMPLES, SPECTRUM_SEGMENT};
use hetqrng::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_TESTS: u8 = 4;

/// Heterodyne QRNG simulator: acquisition, filtering, min-entropy
/// certification, Toeplitz extraction and statistical testing.
#[derive(Parser)]
#[command(name = "hetqrng", version)]
struct Cli {
    /// Key-value config file; see `hetqrng config` for every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set adc.bits=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the effective configuration.
    Config,
    /// Simulate detector output into a QRB1 file plus `<out>.monitor`.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep LO power and fit the detector calibration.
    Calibrate {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated LO powers in W; 20 points over 0.01-4.05 mW by default.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<String>>,
        /// Samples per sweep point.
        #[arg(long, default_value = "1e6")]
        samples: String,
    },
    /// Write an entropy certificate from a QRB1 file or explicit bin sizes.
    Entropy(EntropyArgs),
    /// Band-pass filter and downsample a QRB1 file.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized autocorrelation of one channel.
    Autocorr {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value = "i")]
        channel: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Welch PSD of one channel, with the band gap against an LO-off capture.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lo_off: Option<PathBuf>,
        #[arg(long, default_value_t = SPECTRUM_SEGMENT)]
        segment: usize,
        #[arg(long, default_value_t = SPECTRUM_SAMPLES)]
        max_samples: usize,
        #[arg(long, default_value = "i")]
        channel: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Toeplitz-hash a QRB1 file into raw bytes plus `<out>.meta`.
    Extract {
        #[arg(long)]
        input: PathBuf,
        /// Certificate to extract at; computed from the input when absent.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the statistical battery on extracted bits.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage in order, writing into `output.dir`.
    Run {
        /// Overrides `output.dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EntropyArgs {
    /// QRB1 file to certify; bin sizes, variances and rate come from it.
    #[arg(long, conflicts_with_all = ["delta_q", "delta_p", "var_q", "var_p", "rate"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "delta_p")]
    delta_q: Option<String>,
    #[arg(long, requires = "delta_q")]
    delta_p: Option<String>,
    #[arg(long, requires = "var_p")]
    var_q: Option<String>,
    #[arg(long, requires = "var_q")]
    var_p: Option<String>,
    /// Samples per second; defaults to the downsampled configured rate.
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Core(Error),
    Tests,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Tests) => ExitCode::from(EXIT_TESTS),
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn load_config(cli: &Cli) -> hetqrng::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path) -> hetqrng::Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes `text` to `out`, or stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> hetqrng::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn num(s: &str) -> hetqrng::Result<f64> {
    parse_f64(s).map_err(Error::Config)
}

fn opt_f64(v: &Option<String>) -> hetqrng::Result<Option<f64>> {
    v.as_deref().map(num).transpose()
}

fn dispatch(cli: Cli) -> CmdResult {
    let cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Config => emit(None, &cfg.to_text())?,
        Cmd::Simulate { out } => {
            let s = Pipeline::new(cfg)?.simulate_to_path(&out)?;
            emit(None, &s.to_kv().to_text())?;
        }
        Cmd::Calibrate { out, powers, samples } => {
            let powers = match powers {
                Some(p) => p.iter().map(|s| num(s)).collect::<hetqrng::Result<Vec<_>>>()?,
                None => default_sweep_powers(),
            };
            let n = parse_count(&samples).map_err(Error::Config)? as usize;
            let truth = cfg.resolve_calibration()?;
            let adc = cfg.adc(&truth)?;
            let points = run_calibration_sweep(&truth, &powers, n, &adc, cfg.simulation_seed)?;
            let fit = fit_calibration(&points)?;
            let mut kv = fit.to_kv();
            for (k, r) in linearity_residuals(&points, &fit).iter().enumerate() {
                kv.push(format!("linearity.ch{}.rms", k + 1), r.rms);
                kv.push(format!("linearity.ch{}.max_relative", k + 1), r.max_relative);
                kv.push(format!("linearity.ch{}.r_squared", k + 1), r.r_squared);
            }
            kv.push("sweep.points", powers.len());
            kv.push("sweep.samples_per_point", n);
            let text = kv.to_text();
            emit(Some(&out), &text)?;
            emit(None, &text)?;
        }
        Cmd::Entropy(a) => {
            let cert = entropy(&cfg, &a)?;
            emit(a.out.as_deref(), &cert.to_text())?;
        }
        Cmd::Filter { input, out } => {
            let s = Pipeline::new(cfg)?.filter_path(&input, &out)?;
            emit(None, &s.to_kv().to_text())?;
        }
        Cmd::Autocorr {
            input,
            max_lag,
            channel,
            out,
        } => {
            let a = autocorr_stream(open(&input)?, Channel::parse(&channel)?, max_lag)?;
            emit(out.as_deref(), &a.to_text())?;
        }
        Cmd::Spectrum {
            input,
            lo_off,
            segment,
            max_samples,
            channel,
            out,
        } => {
            let ch = Channel::parse(&channel)?;
            let on = spectrum_stream(open(&input)?, ch, segment, max_samples)?;
            let gap = match lo_off {
                Some(p) => {
                    let off = spectrum_stream(open(&p)?, ch, segment, max_samples)?;
                    Some(band_gap_db(&on, &off, &cfg.band)?)
                }
                None => None,
            };
            emit(out.as_deref(), &spectrum_text(&on, gap))?;
        }
        Cmd::Extract {
            input,
            certificate,
            out,
        } => {
            let p = Pipeline::new(cfg)?;
            let cert = match certificate {
                Some(c) => {
                    let text = std::fs::read_to_string(&c).map_err(|e| io_err(&c, e))?;
                    EntropyCertificate::from_kv(&KvDoc::parse(&text)?)?
                }
                None => p.certify_path(&input)?,
            };
            let s = p.extract_path(&input, &cert, &out)?;
            let mut kv = KvDoc::new();
            kv.push("blocks", s.blocks);
            kv.push("bits", s.output_bits);
            kv.push("ratio", format!("{:.5}", s.ratio()));
            emit(None, &kv.to_text())?;
        }
        Cmd::Test { input, out } => {
            let rep = Pipeline::new(cfg)?.test_path(&input)?;
            emit(out.as_deref(), &rep.table())?;
            if out.is_some() {
                emit(None, &rep.table())?;
            }
            if !rep.all_passed() {
                return Err(Failure::Tests);
            }
        }
        Cmd::Run { out_dir } => {
            let dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let rep = Pipeline::new(cfg)?.run(&dir)?;
            emit(None, &rep.to_kv().to_text())?;
            if !rep.passed() {
                return Err(Failure::Tests);
            }
        }
    }
    Ok(())
}

fn entropy(cfg: &PipelineConfig, a: &EntropyArgs) -> hetqrng::Result<EntropyCertificate> {
    let epsilon = opt_f64(&a.epsilon)?.unwrap_or(cfg.epsilon);
    if let Some(input) = &a.input {
        let mut c = cfg.clone();
        c.epsilon = epsilon;
        return Pipeline::new(c)?.certify_path(input);
    }
    let (Some(dq), Some(dp)) = (opt_f64(&a.delta_q)?, opt_f64(&a.delta_p)?) else {
        return Err(Error::Config("entropy needs --input or both --delta-q and --delta-p".into()));
    };
    let variances = opt_f64(&a.var_q)?.zip(opt_f64(&a.var_p)?);
    let rate = match opt_f64(&a.rate)? {
        Some(r) => r,
        None => cfg.sample_rate / decimation_factor(cfg.sample_rate, &cfg.band)? as f64,
    };
    build_certificate(dq, dp, variances, rate, epsilon)
}
