//! Run configuration as flat `section.key=value` text.
//!
//! Every key has a default, unknown keys are rejected, and serializing a
//! parsed config reproduces it exactly. Physical quantities are SI (W, Hz,
//! V); phase-space quantities are dimensionless.
//!
//! | key | unit | meaning |
//! |-----|------|---------|
//! | `state` | | `vacuum`, `coherent`, `thermal` or `mixture` |
//! | `state.alpha_re`, `state.alpha_im` | | coherent amplitude |
//! | `state.mean_photons` | | thermal occupation |
//! | `state.mixture` | | `weight:re:im` terms separated by `;` |
//! | `lo.power` | W | local oscillator power at the detectors |
//! | `lo.blocked` | | simulate with the LO blocked (electronic noise only) |
//! | `lo.drift_blocks` | | acquisition blocks whose LO power drifts, `,`-separated |
//! | `lo.drift_factor` | | LO power multiplier inside drifting blocks |
//! | `adc.sample_rate` | Hz | |
//! | `adc.bits` | | |
//! | `adc.full_scale` | V | peak-to-peak; empty to derive from `adc.target_delta` |
//! | `adc.target_delta` | | phase-space LSB on channel 1 |
//! | `band.f_lo`, `band.f_hi` | Hz | pass band |
//! | `dsp.enabled` | | `false` passes raw samples through |
//! | `dsp.fft_len`, `dsp.margin` | samples | filter window and discarded edge |
//! | `dsp.phase` | samples | downsampling phase |
//! | `calibration.file` | | calibration report; empty to use the inline values |
//! | `calibration.m1` … `calibration.q2_err` | V²/W, V² | inline calibration |
//! | `noise.spurs` | Hz:V | `frequency:amplitude` terms separated by `;` |
//! | `noise.lf_cutoff`, `noise.lf_rms` | Hz, V | low-frequency noise; rms 0 disables |
//! | `monitor.tap_ratio` | | fraction of LO power on the monitor |
//! | `monitor.tolerance` | | relative deviation flagged as drift |
//! | `extract.epsilon` | | security parameter |
//! | `extract.block_samples` | samples | samples hashed per Toeplitz call |
//! | `extract.backend` | | `clmul` or `fft` |
//! | `extract.reuse_seed` | | one Toeplitz seed for every block |
//! | `seed.simulation` | | 64-bit simulation seed |
//! | `seed.extraction` | | 256-bit Toeplitz master seed, hex |
//! | `run.raw_samples` | samples | acquisition length at the ADC rate |
//! | `run.block_samples` | samples | acquisition block length |
//! | `run.workers` | | worker threads, 0 for all cores |
//! | `test.alpha` | | battery significance level |
//! | `test.bits` | bits | battery block length |
//! | `output.dir` | | directory for `run` outputs |

use std::path::{Path, PathBuf};

use crate::acquisition::{AdcConfig, ChannelCalibration, DetectorCalibration, NoiseInjection, Spur};
use crate::dsp::{decimation_factor, BandFilter, BandSpec};
use crate::error::{Error, Result};
use crate::extractor::{parse_master_seed, Backend, ExtractorParams, DEFAULT_BLOCK_SAMPLES, DEFAULT_EPSILON};
use crate::format::{parse_count, parse_f64, KvDoc};
use crate::phase_space::{Amplitude, MixtureComponent, StateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Vacuum,
    Coherent,
    Thermal,
    Mixture,
}

impl StateKind {
    fn as_str(&self) -> &'static str {
        match self {
            StateKind::Vacuum => "vacuum",
            StateKind::Coherent => "coherent",
            StateKind::Thermal => "thermal",
            StateKind::Mixture => "mixture",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vacuum" => Ok(StateKind::Vacuum),
            "coherent" => Ok(StateKind::Coherent),
            "thermal" => Ok(StateKind::Thermal),
            "mixture" => Ok(StateKind::Mixture),
            _ => Err(format!("unknown state `{s}`")),
        }
    }
}

/// Source state parameters; only the fields of `kind` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpec {
    pub kind: StateKind,
    pub alpha: Amplitude,
    pub mean_photons: f64,
    pub mixture: Vec<MixtureComponent>,
}

impl StateSpec {
    pub fn model(&self) -> Result<StateModel> {
        match self.kind {
            StateKind::Vacuum => Ok(StateModel::Vacuum),
            StateKind::Coherent => StateModel::coherent(self.alpha.re, self.alpha.im),
            StateKind::Thermal => StateModel::thermal(self.mean_photons),
            StateKind::Mixture => StateModel::mixture(self.mixture.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationSource {
    Inline(DetectorCalibration),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub state: StateSpec,
    pub lo_power: f64,
    pub lo_blocked: bool,
    pub drift_blocks: Vec<u64>,
    pub drift_factor: f64,
    pub sample_rate: f64,
    pub adc_bits: u32,
    pub full_scale: Option<f64>,
    pub target_delta: f64,
    pub band: BandSpec,
    pub dsp_enabled: bool,
    pub fft_len: usize,
    pub margin: usize,
    pub phase: usize,
    pub calibration: CalibrationSource,
    pub spurs: Vec<Spur>,
    pub lf_cutoff: f64,
    /// 0 disables the low-frequency term
    pub lf_rms: f64,
    pub tap_ratio: f64,
    pub monitor_tolerance: f64,
    pub epsilon: f64,
    pub extract_block_samples: usize,
    pub backend: Backend,
    pub reuse_seed: bool,
    pub simulation_seed: u64,
    pub extraction_seed: [u8; 32],
    pub raw_samples: u64,
    pub block_samples: usize,
    pub workers: usize,
    pub alpha: f64,
    pub test_bits: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            state: StateSpec {
                kind: StateKind::Vacuum,
                alpha: Amplitude::ZERO,
                mean_photons: 0.0,
                mixture: Vec::new(),
            },
            lo_power: 4.05e-3,
            lo_blocked: false,
            drift_blocks: Vec::new(),
            drift_factor: 1.05,
            sample_rate: 10e9,
            adc_bits: 10,
            full_scale: None,
            target_delta: 14.05e-3,
            band: BandSpec::DEFAULT,
            dsp_enabled: true,
            fft_len: 16384,
            margin: 1024,
            phase: 0,
            calibration: CalibrationSource::Inline(DetectorCalibration::reference()),
            spurs: Vec::new(),
            lf_cutoff: 1e6,
            lf_rms: 0.0,
            tap_ratio: 0.1,
            monitor_tolerance: 0.01,
            epsilon: DEFAULT_EPSILON,
            extract_block_samples: DEFAULT_BLOCK_SAMPLES,
            backend: Backend::Clmul,
            reuse_seed: false,
            simulation_seed: 1,
            extraction_seed: [0x5a; 32],
            raw_samples: 10_000_000,
            block_samples: 1 << 20,
            workers: 0,
            alpha: crate::randomness::DEFAULT_ALPHA,
            test_bits: 100_000_000,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn cfg_err(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {reason}"))
}

fn f64_val(key: &str, v: &str) -> Result<f64> {
    parse_f64(v).map_err(|e| cfg_err(key, e))
}

fn count_val(key: &str, v: &str) -> Result<u64> {
    parse_count(v).map_err(|e| cfg_err(key, e))
}

fn usize_val(key: &str, v: &str) -> Result<usize> {
    usize::try_from(count_val(key, v)?).map_err(|e| cfg_err(key, e))
}

fn bool_val(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true or false, got `{v}`"))),
    }
}

/// Splits `a:b:c;d:e:f` into float tuples of width `n`.
fn tuples(key: &str, v: &str, n: usize) -> Result<Vec<Vec<f64>>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.split(':').collect();
            if parts.len() != n {
                return Err(cfg_err(key, format!("`{t}` needs {n} `:`-separated numbers")));
            }
            parts.iter().map(|p| f64_val(key, p)).collect()
        })
        .collect()
}

fn join<T>(items: &[T], sep: &str, f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(sep)
}

impl PipelineConfig {
    /// Parses a config document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let mut cfg = PipelineConfig::default();
        for (k, v) in doc.entries() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn inline_cal(&mut self, key: &str) -> Result<&mut DetectorCalibration> {
        match &mut self.calibration {
            CalibrationSource::Inline(c) => Ok(c),
            CalibrationSource::File(_) => Err(cfg_err(key, "inline calibration values conflict with calibration.file")),
        }
    }

    /// Applies one `key=value` pair.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "state" => self.state.kind = StateKind::parse(v).map_err(|e| cfg_err(key, e))?,
            "state.alpha_re" => self.state.alpha.re = f64_val(key, v)?,
            "state.alpha_im" => self.state.alpha.im = f64_val(key, v)?,
            "state.mean_photons" => self.state.mean_photons = f64_val(key, v)?,
            "state.mixture" => {
                self.state.mixture = tuples(key, v, 3)?
                    .into_iter()
                    .map(|t| MixtureComponent {
                        weight: t[0],
                        center: Amplitude { re: t[1], im: t[2] },
                    })
                    .collect()
            }
            "lo.power" => self.lo_power = f64_val(key, v)?,
            "lo.blocked" => self.lo_blocked = bool_val(key, v)?,
            "lo.drift_blocks" => {
                self.drift_blocks = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| count_val(key, s))
                    .collect::<Result<_>>()?
            }
            "lo.drift_factor" => self.drift_factor = f64_val(key, v)?,
            "adc.sample_rate" => self.sample_rate = f64_val(key, v)?,
            "adc.bits" => {
                self.adc_bits = u32::try_from(count_val(key, v)?).map_err(|e| cfg_err(key, e))?
            }
            "adc.full_scale" => {
                self.full_scale = if v.is_empty() { None } else { Some(f64_val(key, v)?) }
            }
            "adc.target_delta" => self.target_delta = f64_val(key, v)?,
            "band.f_lo" => self.band.f_lo = f64_val(key, v)?,
            "band.f_hi" => self.band.f_hi = f64_val(key, v)?,
            "dsp.enabled" => self.dsp_enabled = bool_val(key, v)?,
            "dsp.fft_len" => self.fft_len = usize_val(key, v)?,
            "dsp.margin" => self.margin = usize_val(key, v)?,
            "dsp.phase" => self.phase = usize_val(key, v)?,
            "calibration.file" => {
                self.calibration = if v.is_empty() {
                    CalibrationSource::Inline(DetectorCalibration::reference())
                } else {
                    CalibrationSource::File(PathBuf::from(v))
                }
            }
            "calibration.m1" => self.inline_cal(key)?.channels[0].slope = f64_val(key, v)?,
            "calibration.q1" => self.inline_cal(key)?.channels[0].intercept = f64_val(key, v)?,
            "calibration.m2" => self.inline_cal(key)?.channels[1].slope = f64_val(key, v)?,
            "calibration.q2" => self.inline_cal(key)?.channels[1].intercept = f64_val(key, v)?,
            "calibration.m1_err" => self.inline_cal(key)?.channels[0].slope_err = f64_val(key, v)?,
            "calibration.q1_err" => self.inline_cal(key)?.channels[0].intercept_err = f64_val(key, v)?,
            "calibration.m2_err" => self.inline_cal(key)?.channels[1].slope_err = f64_val(key, v)?,
            "calibration.q2_err" => self.inline_cal(key)?.channels[1].intercept_err = f64_val(key, v)?,
            "noise.spurs" => {
                self.spurs = tuples(key, v, 2)?
                    .into_iter()
                    .map(|t| Spur {
                        frequency: t[0],
                        amplitude: t[1],
                    })
                    .collect()
            }
            "noise.lf_cutoff" => self.lf_cutoff = f64_val(key, v)?,
            "noise.lf_rms" => self.lf_rms = f64_val(key, v)?,
            "monitor.tap_ratio" => self.tap_ratio = f64_val(key, v)?,
            "monitor.tolerance" => self.monitor_tolerance = f64_val(key, v)?,
            "extract.epsilon" => self.epsilon = f64_val(key, v)?,
            "extract.block_samples" => self.extract_block_samples = usize_val(key, v)?,
            "extract.backend" => self.backend = Backend::parse(v)?,
            "extract.reuse_seed" => self.reuse_seed = bool_val(key, v)?,
            "seed.simulation" => self.simulation_seed = count_val(key, v)?,
            "seed.extraction" => self.extraction_seed = parse_master_seed(v)?,
            "run.raw_samples" => self.raw_samples = count_val(key, v)?,
            "run.block_samples" => self.block_samples = usize_val(key, v)?,
            "run.workers" => self.workers = usize_val(key, v)?,
            "test.alpha" => self.alpha = f64_val(key, v)?,
            "test.bits" => self.test_bits = count_val(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Every key, in a fixed order.
    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("state", self.state.kind.as_str());
        kv.push("state.alpha_re", self.state.alpha.re);
        kv.push("state.alpha_im", self.state.alpha.im);
        kv.push("state.mean_photons", self.state.mean_photons);
        kv.push(
            "state.mixture",
            join(&self.state.mixture, ";", |c| {
                format!("{}:{}:{}", c.weight, c.center.re, c.center.im)
            }),
        );
        kv.push("lo.power", self.lo_power);
        kv.push("lo.blocked", self.lo_blocked);
        kv.push("lo.drift_blocks", join(&self.drift_blocks, ",", |b| b.to_string()));
        kv.push("lo.drift_factor", self.drift_factor);
        kv.push("adc.sample_rate", self.sample_rate);
        kv.push("adc.bits", self.adc_bits);
        kv.push(
            "adc.full_scale",
            self.full_scale.map(|f| f.to_string()).unwrap_or_default(),
        );
        kv.push("adc.target_delta", self.target_delta);
        kv.push("band.f_lo", self.band.f_lo);
        kv.push("band.f_hi", self.band.f_hi);
        kv.push("dsp.enabled", self.dsp_enabled);
        kv.push("dsp.fft_len", self.fft_len);
        kv.push("dsp.margin", self.margin);
        kv.push("dsp.phase", self.phase);
        match &self.calibration {
            CalibrationSource::File(p) => kv.push("calibration.file", p.display()),
            CalibrationSource::Inline(c) => {
                for (k, v) in c.to_kv().entries() {
                    kv.push(format!("calibration.{k}"), v);
                }
            }
        }
        kv.push(
            "noise.spurs",
            join(&self.spurs, ";", |s| format!("{}:{}", s.frequency, s.amplitude)),
        );
        kv.push("noise.lf_cutoff", self.lf_cutoff);
        kv.push("noise.lf_rms", self.lf_rms);
        kv.push("monitor.tap_ratio", self.tap_ratio);
        kv.push("monitor.tolerance", self.monitor_tolerance);
        kv.push("extract.epsilon", self.epsilon);
        kv.push("extract.block_samples", self.extract_block_samples);
        kv.push("extract.backend", self.backend.as_str());
        kv.push("extract.reuse_seed", self.reuse_seed);
        kv.push("seed.simulation", self.simulation_seed);
        kv.push("seed.extraction", hex::encode(self.extraction_seed));
        kv.push("run.raw_samples", self.raw_samples);
        kv.push("run.block_samples", self.block_samples);
        kv.push("run.workers", self.workers);
        kv.push("test.alpha", self.alpha);
        kv.push("test.bits", self.test_bits);
        kv.push("output.dir", self.output_dir.display());
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn noise_injection(&self) -> NoiseInjection {
        NoiseInjection {
            spurs: self.spurs.clone(),
            low_frequency: (self.lf_rms > 0.0).then_some((self.lf_cutoff, self.lf_rms)),
        }
    }

    /// Calibration in effect, reading the report file if one is configured.
    pub fn resolve_calibration(&self) -> Result<DetectorCalibration> {
        match &self.calibration {
            CalibrationSource::Inline(c) => {
                c.validate()?;
                Ok(*c)
            }
            CalibrationSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                DetectorCalibration::from_kv(&KvDoc::parse(&text)?)
            }
        }
    }

    /// ADC at the configured rate, with full scale derived from the target
    /// phase-space LSB unless given.
    pub fn adc(&self, cal: &DetectorCalibration) -> Result<AdcConfig> {
        match self.full_scale {
            Some(fs) => AdcConfig::new(self.sample_rate, self.adc_bits, fs),
            None => AdcConfig::for_target_delta(self.sample_rate, self.adc_bits, cal, self.lo_power, self.target_delta),
        }
    }

    /// Band filter for the configured geometry, with gain `√((fs/2)/B)`.
    pub fn band_filter(&self) -> Result<BandFilter> {
        let m = decimation_factor(self.sample_rate, &self.band)?;
        let gain = (self.sample_rate / 2.0 / self.band.width()).sqrt();
        Ok(BandFilter::new(self.sample_rate, &self.band, self.fft_len, self.margin, m, self.phase)?.with_gain(gain))
    }

    pub fn worker_count(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }

    /// Checks every field that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        self.state.model()?;
        if !(self.lo_power.is_finite() && self.lo_power > 0.0) {
            return Err(Error::invalid("LO power", format!("must be > 0 W, got {}", self.lo_power)));
        }
        if !(self.drift_factor.is_finite() && self.drift_factor > 0.0) {
            return Err(Error::invalid("drift factor", format!("must be > 0, got {}", self.drift_factor)));
        }
        if let CalibrationSource::Inline(c) = &self.calibration {
            c.validate()?;
            self.adc(c)?;
        } else {
            AdcConfig::new(self.sample_rate, self.adc_bits, 1.0)?;
        }
        if !(self.target_delta.is_finite() && self.target_delta > 0.0) {
            return Err(Error::invalid("target delta", format!("must be > 0, got {}", self.target_delta)));
        }
        self.band.validate_for(self.sample_rate)?;
        if self.dsp_enabled {
            self.band_filter()?;
            if self.block_samples < self.fft_len {
                return Err(Error::invalid(
                    "acquisition block",
                    format!("{} samples is shorter than the {}-point filter window", self.block_samples, self.fft_len),
                ));
            }
        }
        for s in &self.spurs {
            if !(s.frequency.is_finite() && s.amplitude.is_finite() && s.frequency >= 0.0) {
                return Err(Error::invalid("spur", format!("bad spur {}:{}", s.frequency, s.amplitude)));
            }
        }
        let (c, r) = (self.lf_cutoff, self.lf_rms);
        if !(c > 0.0 && c.is_finite() && r >= 0.0 && r.is_finite()) {
            return Err(Error::invalid("low-frequency noise", format!("cutoff {c} Hz, rms {r} V")));
        }
        if !(self.tap_ratio > 0.0 && self.tap_ratio <= 1.0) {
            return Err(Error::invalid("monitor tap ratio", format!("{} not in (0, 1]", self.tap_ratio)));
        }
        if !(self.monitor_tolerance > 0.0) {
            return Err(Error::invalid("monitor tolerance", "must be > 0"));
        }
        // output length is checked once the certificate is known
        ExtractorParams::lengths(1, 1, 1.0, self.epsilon).map(|_| ()).or_else(|e| match e {
            Error::BlockTooSmall { .. } => Ok(()),
            e => Err(e),
        })?;
        if self.extract_block_samples == 0 {
            return Err(Error::invalid("extraction block", "must be >= 1 sample"));
        }
        if self.raw_samples == 0 || self.block_samples == 0 {
            return Err(Error::invalid("run length", "raw_samples and block_samples must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Channel calibration with the given constants and no uncertainties.
pub fn inline_calibration(m1: f64, q1: f64, m2: f64, q2: f64) -> CalibrationSource {
    CalibrationSource::Inline(DetectorCalibration {
        channels: [ChannelCalibration::new(m1, q1), ChannelCalibration::new(m2, q2)],
    })
}
