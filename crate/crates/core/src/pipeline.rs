//! Stage functions shared by the command-line tool and [`Pipeline::run`].
//!
//! Every stage reads and writes the documented files only: QRB1 sample
//! streams with a `.monitor` sidecar, raw extracted bytes with a `.meta`
//! sidecar, and key-value reports. Blocks are processed concurrently in
//! fixed-size batches and written back in order, so outputs do not depend on
//! the worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::acquisition::{lo_monitor_check, quantize, quantize_code, AdcConfig, DetectorCalibration, DetectorSimulator, MonitorReport, SampleBlock};
use crate::config::PipelineConfig;
use crate::dsp::{band_gap_db, welch_psd, AutocorrAccumulator, BandFilter, PsdEstimate};
use crate::entropy::{build_certificate, EntropyCertificate};
use crate::error::{Error, Result};
use crate::extractor::{pack_samples_to_bits, seed_expand_stream, toeplitz_extract_with, BitBlock, BitOrigin, ExtractorParams};
use crate::format::{two_column_text, KvDoc, Qrb1Header, Qrb1Reader, Qrb1Writer};
use crate::phase_space::StateModel;
use crate::randomness::{run_battery, BatteryReport, TestParams};

/// Samples used for the LO-on/LO-off spectra in [`Pipeline::run`].
pub const SPECTRUM_SAMPLES: usize = 1 << 20;
/// Welch segment length for spectra.
pub const SPECTRUM_SEGMENT: usize = 4096;
/// Autocorrelation lags summarized in reports.
pub const REPORT_MAX_LAG: usize = 100;

/// Path with `suffix` appended to the file name, e.g. `raw.qrb.monitor`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_kv(path: &Path) -> Result<KvDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KvDoc::parse(&text)
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// LO monitor readings, one per acquisition block.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorLog {
    /// W at the monitor
    pub nominal: f64,
    pub block_samples: usize,
    pub readings: Vec<f64>,
}

impl MonitorLog {
    pub fn check(&self, tolerance: f64) -> Result<MonitorReport> {
        lo_monitor_check(&self.readings, self.nominal, tolerance)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("nominal", self.nominal);
        kv.push("block_samples", self.block_samples);
        kv.push("blocks", self.readings.len());
        for (i, r) in self.readings.iter().enumerate() {
            kv.push(format!("reading.{i}"), r);
        }
        kv
    }

    pub fn from_kv(kv: &KvDoc) -> Result<Self> {
        let blocks = kv.get_u64("blocks")?.ok_or_else(|| missing("monitor", "blocks"))?;
        let readings = (0..blocks)
            .map(|i| kv.require_f64(&format!("reading.{i}")))
            .collect::<Result<_>>()?;
        Ok(MonitorLog {
            nominal: kv.require_f64("nominal")?,
            block_samples: kv.get_u64("block_samples")?.ok_or_else(|| missing("monitor", "block_samples"))? as usize,
            readings,
        })
    }
}

fn missing(format: &'static str, key: &str) -> Error {
    Error::Format {
        format,
        reason: format!("missing key `{key}`"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub samples: u64,
    pub blocks: u64,
    pub clipped: u64,
    /// Phase-space variance of the quantized codes per channel.
    pub variance: [f64; 2],
    pub monitor: MonitorLog,
}

impl SimulationSummary {
    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("samples", self.samples);
        kv.push("blocks", self.blocks);
        kv.push("clipped_count", self.clipped);
        kv.push("variance_q", self.variance[0]);
        kv.push("variance_p", self.variance[1]);
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub input_blocks: u64,
    /// Acquisition blocks dropped because the LO monitor reported drift.
    pub excluded_blocks: Vec<u64>,
    /// Blocks too short for one filter window.
    pub short_blocks: u64,
    pub factor: usize,
    pub output_rate: f64,
    pub output_samples: u64,
    pub clipped: u64,
}

impl FilterSummary {
    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("input_blocks", self.input_blocks);
        kv.push("excluded_blocks", join_u64(&self.excluded_blocks));
        kv.push("short_blocks", self.short_blocks);
        kv.push("factor", self.factor);
        kv.push("output_rate", self.output_rate);
        kv.push("output_samples", self.output_samples);
        kv.push("clipped_count", self.clipped);
        kv
    }
}

fn join_u64(v: &[u64]) -> String {
    v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub blocks: u64,
    pub block_samples: usize,
    pub input_samples: u64,
    pub input_bits: u64,
    pub output_bits: u64,
    /// Samples after the last full block, not hashed.
    pub dropped_samples: u64,
    pub digests: Vec<String>,
}

impl ExtractSummary {
    pub fn ratio(&self) -> f64 {
        if self.input_bits == 0 {
            0.0
        } else {
            self.output_bits as f64 / self.input_bits as f64
        }
    }
}

/// Integer moments of a code stream, exact and order independent.
#[derive(Debug, Clone, Copy, Default)]
struct CodeMoments {
    n: u64,
    sum: [i64; 2],
    sum_sq: [i128; 2],
}

impl CodeMoments {
    fn add(&mut self, ci: &[i16], cq: &[i16]) {
        self.n += ci.len() as u64;
        for (k, ch) in [ci, cq].into_iter().enumerate() {
            for &c in ch {
                self.sum[k] += c as i64;
                self.sum_sq[k] += (c as i64 * c as i64) as i128;
            }
        }
    }

    fn variance(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let s = self.sum[k] as f64;
        (self.sum_sq[k] as f64 - s * s / n) / (n - 1.0)
    }
}

/// Packs extracted blocks into MSB-first bytes across block boundaries.
struct BitSink<W: Write> {
    inner: W,
    acc: u8,
    filled: u32,
    bits: u64,
    buf: Vec<u8>,
}

impl<W: Write> BitSink<W> {
    fn new(inner: W) -> Self {
        BitSink {
            inner,
            acc: 0,
            filled: 0,
            bits: 0,
            buf: Vec::new(),
        }
    }

    fn push(&mut self, block: &BitBlock) -> std::io::Result<()> {
        self.buf.clear();
        let bytes = block.to_bytes();
        let tail_bits = (block.len() % 8) as u32;
        let full = block.len() / 8;
        for &b in &bytes[..full] {
            self.push_byte(b, 8);
        }
        if tail_bits > 0 {
            self.push_byte(bytes[full] >> (8 - tail_bits), tail_bits);
        }
        self.bits += block.len() as u64;
        self.inner.write_all(&self.buf)
    }

    /// Appends the low `n` bits of `v`.
    fn push_byte(&mut self, v: u8, n: u32) {
        if self.filled == 0 && n == 8 {
            self.buf.push(v);
            return;
        }
        let total = self.filled + n;
        let merged = ((self.acc as u16) << n) | v as u16;
        if total >= 8 {
            let rest = total - 8;
            self.buf.push((merged >> rest) as u8);
            self.acc = (merged & ((1 << rest) - 1)) as u8;
            self.filled = rest;
        } else {
            self.acc = merged as u8;
            self.filled = total;
        }
    }

    fn finish(mut self) -> std::io::Result<(W, u64)> {
        if self.filled > 0 {
            let last = self.acc << (8 - self.filled);
            self.inner.write_all(&[last])?;
        }
        self.inner.flush()?;
        Ok((self.inner, self.bits))
    }
}

/// Toeplitz hashing of fixed-size sample blocks at a certified entropy.
#[derive(Debug, Clone)]
pub struct BlockExtractor {
    block_samples: usize,
    bits_per_sample: u32,
    hmin: f64,
    epsilon: f64,
    master: [u8; 32],
    backend: crate::extractor::Backend,
    shared_seed: Option<BitBlock>,
    n_in: usize,
    n_out: usize,
}

impl BlockExtractor {
    pub fn new(cfg: &PipelineConfig, cert: &EntropyCertificate, adc_bits: u32) -> Result<Self> {
        let bits_per_sample = 2 * adc_bits;
        let (n_in, n_out) = ExtractorParams::lengths(cfg.extract_block_samples, bits_per_sample, cert.h_quantum_bound, cfg.epsilon)?;
        let shared_seed = if cfg.reuse_seed {
            Some(seed_expand_stream(&cfg.extraction_seed, 0, n_in + n_out - 1)?)
        } else {
            None
        };
        Ok(BlockExtractor {
            block_samples: cfg.extract_block_samples,
            bits_per_sample,
            hmin: cert.h_quantum_bound,
            epsilon: cfg.epsilon,
            master: cfg.extraction_seed,
            backend: cfg.backend,
            shared_seed,
            n_in,
            n_out,
        })
    }

    pub fn block_samples(&self) -> usize {
        self.block_samples
    }

    pub fn output_bits_per_block(&self) -> usize {
        self.n_out
    }

    /// Hashes block `index`; its seed comes from ChaCha20 stream `index`
    /// unless one seed is shared by every block.
    pub fn extract(&self, index: u64, block: &SampleBlock) -> Result<BitBlock> {
        if block.len() != self.block_samples {
            return Err(Error::invalid(
                "extraction block",
                format!("{} samples, expected {}", block.len(), self.block_samples),
            ));
        }
        if 2 * block.adc.bits != self.bits_per_sample {
            return Err(Error::invalid("extraction block", "ADC resolution changed between blocks"));
        }
        let seed = match &self.shared_seed {
            Some(s) => s.clone(),
            None => seed_expand_stream(&self.master, index, self.n_in + self.n_out - 1)?,
        };
        let params = ExtractorParams::new(self.block_samples, self.bits_per_sample, self.hmin, self.epsilon, seed)?;
        let raw = pack_samples_to_bits(block)?;
        Ok(toeplitz_extract_with(&raw, &params, self.backend)?.with_origin(BitOrigin::Extracted))
    }
}

/// Autocorrelation of one channel with the white-noise threshold `4/√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrSummary {
    pub samples: u64,
    pub r: Vec<f64>,
    pub max_abs: f64,
    pub max_lag_at: usize,
    pub threshold: f64,
    pub flagged: bool,
}

impl AutocorrSummary {
    fn new(samples: u64, r: Vec<f64>) -> Self {
        let (max_lag_at, max_abs) = r
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, v)| (k, v.abs()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let threshold = 4.0 / (samples as f64).sqrt();
        AutocorrSummary {
            samples,
            r,
            max_abs,
            max_lag_at,
            threshold,
            flagged: max_abs >= threshold,
        }
    }

    pub fn to_text(&self) -> String {
        two_column_text(
            &[
                "lag\tr".to_string(),
                format!("samples={}", self.samples),
                format!("max_abs_r={:e} at lag {}", self.max_abs, self.max_lag_at),
                format!("threshold={:e}", self.threshold),
                format!("flagged={}", self.flagged),
            ],
            self.r.iter().enumerate().map(|(k, v)| (k as f64, *v)),
        )
    }
}

/// Which quadrature channel of a QRB1 stream to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    I,
    Q,
}

impl Channel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "i" | "I" => Ok(Channel::I),
            "q" | "Q" => Ok(Channel::Q),
            _ => Err(Error::invalid("channel", format!("`{s}` is not i or q"))),
        }
    }
}

/// Streaming autocorrelation of one channel's codes.
pub fn autocorr_stream<R: Read>(input: R, channel: Channel, max_lag: usize) -> Result<AutocorrSummary> {
    let mut reader = Qrb1Reader::new(input)?;
    let mut acc = AutocorrAccumulator::new(max_lag);
    loop {
        let (ci, cq) = reader.read_pairs(1 << 20)?;
        if ci.is_empty() {
            break;
        }
        let ch = if channel == Channel::I { ci } else { cq };
        let v: Vec<f64> = ch.iter().map(|&c| c as f64).collect();
        acc.push(&v);
    }
    let n = acc.count();
    Ok(AutocorrSummary::new(n, acc.finish()?))
}

/// Welch PSD in V²/Hz of the first `max_samples` samples of one channel.
pub fn spectrum_stream<R: Read>(input: R, channel: Channel, segment_len: usize, max_samples: usize) -> Result<PsdEstimate> {
    let mut reader = Qrb1Reader::new(input)?;
    let adc = reader.header().adc()?;
    let (ci, cq) = reader.read_pairs(max_samples)?;
    let ch = if channel == Channel::I { ci } else { cq };
    let lsb = adc.lsb();
    let v: Vec<f64> = ch.iter().map(|&c| c as f64 * lsb).collect();
    welch_psd(&v, adc.sample_rate, segment_len, 0.5)
}

/// PSD export with an optional band-gap line.
pub fn spectrum_text(psd: &PsdEstimate, band_gap: Option<f64>) -> String {
    let mut header = vec!["frequency_hz\tpsd_v2_per_hz".to_string(), format!("segments={}", psd.segments)];
    if let Some(g) = band_gap {
        header.push(format!("band_gap_db={g:.3}"));
    }
    two_column_text(&header, psd.freqs.iter().copied().zip(psd.psd.iter().copied()))
}

/// Reads a raw bit file; the length comes from the `.meta` sidecar when
/// present, else every byte counts.
pub fn read_bits(path: &Path) -> Result<BitBlock> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = sidecar(path, ".meta");
    let len = if meta.exists() {
        read_kv(&meta)?.get_u64("bits")?.ok_or_else(|| missing("meta", "bits"))? as usize
    } else {
        bytes.len() * 8
    };
    BitBlock::from_bytes(&bytes, len, BitOrigin::Extracted)
}

/// Paths written by [`Pipeline::run`] inside the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPaths {
    pub raw: PathBuf,
    pub lo_off: PathBuf,
    pub filtered: PathBuf,
    pub certificate: PathBuf,
    pub extracted: PathBuf,
    pub tests: PathBuf,
    pub autocorr: PathBuf,
    pub spectrum: PathBuf,
    pub report: PathBuf,
}

impl RunPaths {
    pub fn in_dir(dir: &Path) -> Self {
        RunPaths {
            raw: dir.join("raw.qrb"),
            lo_off: dir.join("lo_off.qrb"),
            filtered: dir.join("filtered.qrb"),
            certificate: dir.join("certificate.txt"),
            extracted: dir.join("extracted.bin"),
            tests: dir.join("tests.txt"),
            autocorr: dir.join("autocorr.txt"),
            spectrum: dir.join("spectrum.txt"),
            report: dir.join("report.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub simulation: SimulationSummary,
    pub filter: FilterSummary,
    pub certificate: EntropyCertificate,
    pub extraction: ExtractSummary,
    pub autocorr: Option<AutocorrSummary>,
    pub band_gap_db: f64,
    pub battery: BatteryReport,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.battery.all_passed()
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("status", if self.passed() { "pass" } else { "fail" });
        for (k, v) in self.certificate.to_kv().entries() {
            kv.push(format!("certificate.{k}"), v);
        }
        kv.push("simulation.samples", self.simulation.samples);
        kv.push("simulation.clipped_count", self.simulation.clipped);
        kv.push("filter.factor", self.filter.factor);
        kv.push("filter.output_samples", self.filter.output_samples);
        kv.push("filter.excluded_blocks", join_u64(&self.filter.excluded_blocks));
        kv.push("filter.clipped_count", self.filter.clipped);
        match &self.autocorr {
            Some(a) => {
                kv.push("autocorr.samples", a.samples);
                kv.push("autocorr.lag1", format!("{:e}", a.r[1]));
                kv.push("autocorr.max_abs", format!("{:e}", a.max_abs));
                kv.push("autocorr.max_at_lag", a.max_lag_at);
                kv.push("autocorr.threshold", format!("{:e}", a.threshold));
                kv.push("autocorr.flagged", a.flagged);
            }
            None => kv.push("autocorr.flagged", "skipped"),
        }
        kv.push("band_gap_db", format!("{:.3}", self.band_gap_db));
        kv.push("extraction.blocks", self.extraction.blocks);
        kv.push("extraction.input_bits", self.extraction.input_bits);
        kv.push("extraction.output_bits", self.extraction.output_bits);
        kv.push("extraction.ratio", format!("{:.5}", self.extraction.ratio()));
        kv.push("tests.alpha", self.battery.alpha);
        kv.push("tests.passed", format!("{}/{}", self.battery.passed_count(), self.battery.results.len()));
        for r in &self.battery.results {
            kv.push(format!("tests.{}.p_value", r.name), format!("{:.6}", r.p_value));
            kv.push(format!("tests.{}.passed", r.name), r.passed);
        }
        if let Some(rt) = &self.battery.retest {
            kv.push("tests.retest", rt.first.name);
            kv.push("tests.retest.first_p_value", format!("{:.6}", rt.first.p_value));
            kv.push("tests.retest.second_p_value", format!("{:.6}", rt.second.p_value));
        }
        kv
    }
}

/// A validated configuration with its calibration resolved and a worker
/// pool sized by `run.workers`.
pub struct Pipeline {
    cfg: PipelineConfig,
    cal: DetectorCalibration,
    adc: AdcConfig,
    state: StateModel,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let cal = cfg.resolve_calibration()?;
        let adc = cfg.adc(&cal)?;
        let state = cfg.state.model()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count())
            .build()
            .map_err(|e| Error::Stage {
                stage: "setup",
                reason: e.to_string(),
            })?;
        Ok(Pipeline {
            cfg,
            cal,
            adc,
            state,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> &DetectorCalibration {
        &self.cal
    }

    pub fn adc(&self) -> &AdcConfig {
        &self.adc
    }

    fn batch(&self) -> usize {
        self.pool.current_num_threads().max(1)
    }

    fn block_count(&self) -> u64 {
        self.cfg.raw_samples.div_ceil(self.cfg.block_samples as u64)
    }

    /// LO power reaching the detectors during block `b`.
    pub fn lo_power_for_block(&self, b: u64) -> f64 {
        if self.cfg.drift_blocks.contains(&b) {
            self.cfg.lo_power * self.cfg.drift_factor
        } else {
            self.cfg.lo_power
        }
    }

    /// Quantized acquisition block `b`.
    pub fn simulate_block(&self, b: u64) -> Result<SampleBlock> {
        let bs = self.cfg.block_samples as u64;
        let start = b * bs;
        let n = bs.min(self.cfg.raw_samples.saturating_sub(start)) as usize;
        let mut sim = DetectorSimulator::new(self.cal, self.lo_power_for_block(b), &self.adc, &self.state, self.cfg.simulation_seed)?
            .with_noise(self.cfg.noise_injection());
        if self.cfg.lo_blocked {
            sim = sim.with_lo_blocked();
        }
        let (vi, vq) = sim.block(b, start, n);
        let (ci, clip_i) = quantize(&vi, &self.adc);
        let (cq, clip_q) = quantize(&vq, &self.adc);
        SampleBlock::new(ci, cq, self.adc, self.cfg.lo_power, clip_i + clip_q, b)
    }

    /// Writes the acquisition as a QRB1 stream.
    pub fn simulate<W: Write>(&self, out: W) -> Result<(SimulationSummary, W)> {
        let path = Path::new("<simulation output>");
        let mut w = Qrb1Writer::new(out, Qrb1Header::new(&self.adc, self.cfg.lo_power)).map_err(io_at(path))?;
        let blocks = self.block_count();
        let mut moments = CodeMoments::default();
        let mut clipped = 0u64;
        let mut readings = Vec::with_capacity(blocks as usize);
        let mut b0 = 0;
        while b0 < blocks {
            let b1 = (b0 + self.batch() as u64).min(blocks);
            let done: Vec<SampleBlock> = self
                .pool
                .install(|| (b0..b1).into_par_iter().map(|b| self.simulate_block(b)).collect::<Result<_>>())?;
            for (b, blk) in (b0..b1).zip(&done) {
                w.write_codes(&blk.codes_i, &blk.codes_q).map_err(io_at(path))?;
                moments.add(&blk.codes_i, &blk.codes_q);
                clipped += blk.clipped_count as u64;
                readings.push(self.cfg.tap_ratio * self.lo_power_for_block(b));
            }
            b0 = b1;
        }
        let out = w.finish().map_err(io_at(path))?;
        let (dq, dp) = self.adc.deltas(&self.cal, self.cfg.lo_power);
        let summary = SimulationSummary {
            samples: moments.n,
            blocks,
            clipped,
            variance: [moments.variance(0) * dq * dq, moments.variance(1) * dp * dp],
            monitor: MonitorLog {
                nominal: self.cfg.tap_ratio * self.cfg.lo_power,
                block_samples: self.cfg.block_samples,
                readings,
            },
        };
        Ok((summary, out))
    }

    /// [`Pipeline::simulate`] to a file plus its `.monitor` sidecar.
    pub fn simulate_to_path(&self, path: &Path) -> Result<SimulationSummary> {
        let (summary, _) = self.simulate(create(path)?).map_err(|e| relabel_io(e, path))?;
        write_text(&sidecar(path, ".monitor"), &summary.monitor.to_kv().to_text())?;
        Ok(summary)
    }

    /// Band filter at `sample_rate` with the configured band and geometry.
    pub fn band_filter_at(&self, sample_rate: f64) -> Result<BandFilter> {
        let mut c = self.cfg.clone();
        c.sample_rate = sample_rate;
        c.band_filter()
    }

    /// Filters, downsamples and requantizes one block with the same LSB.
    pub fn filter_block(&self, filter: &BandFilter, block: &SampleBlock) -> Result<SampleBlock> {
        let adc = AdcConfig::new(block.adc.sample_rate / filter.factor() as f64, block.adc.bits, block.adc.full_scale)?;
        let n = filter.output_len(block.len());
        let (mut ci, mut cq) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (lo, hi) = (adc.min_code() as i64, adc.max_code() as i64);
        let mut clipped = 0;
        filter.for_each_pair_f32(&block.codes_i, &block.codes_q, |x, y| {
            let (a, ca) = quantize_code(x, lo, hi);
            let (b, cb) = quantize_code(y, lo, hi);
            ci.push(a);
            cq.push(b);
            clipped += ca as usize + cb as usize;
        })?;
        SampleBlock::new(ci, cq, adc, block.lo_power, clipped, block.seed_tag)
    }

    /// Filter stage over a QRB1 stream. Blocks flagged by `monitor` are
    /// dropped. With `dsp.enabled=false` the remaining samples pass
    /// through unchanged.
    pub fn filter<R: Read, W: Write>(&self, input: R, monitor: Option<&MonitorLog>, out: W) -> Result<(FilterSummary, W)> {
        let path = Path::new("<filter output>");
        let mut reader = Qrb1Reader::new(input)?;
        let header = *reader.header();
        let in_adc = header.adc()?;
        let excluded: Vec<u64> = match monitor {
            Some(m) => {
                if m.block_samples != self.cfg.block_samples {
                    return Err(Error::Config(format!(
                        "monitor log uses {}-sample blocks but run.block_samples is {}",
                        m.block_samples, self.cfg.block_samples
                    )));
                }
                m.check(self.cfg.monitor_tolerance)?.violations.iter().map(|&i| i as u64).collect()
            }
            None => Vec::new(),
        };
        let filter = if self.cfg.dsp_enabled {
            Some(self.band_filter_at(header.sample_rate)?)
        } else {
            None
        };
        let factor = filter.as_ref().map_or(1, |f| f.factor());
        let mut out_header = header;
        out_header.sample_rate = header.sample_rate / factor as f64;
        let mut w = Qrb1Writer::new(out, out_header).map_err(io_at(path))?;
        let mut summary = FilterSummary {
            input_blocks: 0,
            excluded_blocks: Vec::new(),
            short_blocks: 0,
            factor,
            output_rate: out_header.sample_rate,
            output_samples: 0,
            clipped: 0,
        };
        let mut next_block = 0u64;
        loop {
            let mut batch = Vec::with_capacity(self.batch());
            while batch.len() < self.batch() {
                let (ci, cq) = reader.read_pairs(self.cfg.block_samples)?;
                if ci.is_empty() {
                    break;
                }
                let b = next_block;
                next_block += 1;
                if excluded.contains(&b) {
                    summary.excluded_blocks.push(b);
                    continue;
                }
                batch.push(SampleBlock::new(ci, cq, in_adc, header.lo_power, 0, b)?);
            }
            if batch.is_empty() {
                break;
            }
            let done: Vec<Option<SampleBlock>> = match &filter {
                None => batch.into_iter().map(Some).collect(),
                Some(f) => self.pool.install(|| {
                    batch
                        .par_iter()
                        .map(|blk| {
                            if blk.len() < f.fft_len() {
                                Ok(None)
                            } else {
                                self.filter_block(f, blk).map(Some)
                            }
                        })
                        .collect::<Result<_>>()
                })?,
            };
            for blk in done {
                match blk {
                    None => summary.short_blocks += 1,
                    Some(blk) => {
                        w.write_codes(&blk.codes_i, &blk.codes_q).map_err(io_at(path))?;
                        summary.output_samples += blk.len() as u64;
                        summary.clipped += blk.clipped_count as u64;
                    }
                }
            }
        }
        summary.input_blocks = next_block;
        let out = w.finish().map_err(io_at(path))?;
        Ok((summary, out))
    }

    /// [`Pipeline::filter`] between files; `<input>.monitor` is honored
    /// when it exists.
    pub fn filter_path(&self, input: &Path, output: &Path) -> Result<FilterSummary> {
        let mon_path = sidecar(input, ".monitor");
        let monitor = if mon_path.exists() {
            Some(MonitorLog::from_kv(&read_kv(&mon_path)?)?)
        } else {
            None
        };
        let (summary, _) = self
            .filter(open(input)?, monitor.as_ref(), create(output)?)
            .map_err(|e| relabel_io(e, output))?;
        Ok(summary)
    }

    /// Certificate for a QRB1 stream: bin sizes from its header and the
    /// calibration, variances from its codes, rate from its sample rate.
    pub fn certify<R: Read>(&self, input: R) -> Result<EntropyCertificate> {
        let mut reader = Qrb1Reader::new(input)?;
        let header = *reader.header();
        let adc = header.adc()?;
        if !(header.lo_power > 0.0) {
            return Err(Error::invalid("certificate", "stream has no LO power in its header"));
        }
        let mut m = CodeMoments::default();
        loop {
            let (ci, cq) = reader.read_pairs(1 << 20)?;
            if ci.is_empty() {
                break;
            }
            m.add(&ci, &cq);
        }
        if m.n < 2 {
            return Err(Error::invalid("certificate", "need at least 2 samples"));
        }
        let (dq, dp) = adc.deltas(&self.cal, header.lo_power);
        build_certificate(dq, dp, Some((m.variance(0) * dq * dq, m.variance(1) * dp * dp)), adc.sample_rate, self.cfg.epsilon)
    }

    pub fn certify_path(&self, input: &Path) -> Result<EntropyCertificate> {
        self.certify(open(input)?)
    }

    /// Hashes every full block of the stream and writes the packed output.
    pub fn extract<R: Read, W: Write>(&self, input: R, cert: &EntropyCertificate, out: W) -> Result<(ExtractSummary, W)> {
        let path = Path::new("<extraction output>");
        let mut reader = Qrb1Reader::new(input)?;
        let header = *reader.header();
        let adc = header.adc()?;
        let ex = BlockExtractor::new(&self.cfg, cert, adc.bits)?;
        let bs = ex.block_samples();
        // keep batches near 2^20 samples so workers stay busy
        let per_batch = ((1usize << 20) / bs).max(1) * self.batch();
        let mut sink = BitSink::new(out);
        let mut summary = ExtractSummary {
            blocks: 0,
            block_samples: bs,
            input_samples: 0,
            input_bits: 0,
            output_bits: 0,
            dropped_samples: 0,
            digests: Vec::new(),
        };
        loop {
            let (ci, cq) = reader.read_pairs(bs * per_batch)?;
            if ci.is_empty() {
                break;
            }
            let full = ci.len() / bs;
            summary.dropped_samples += (ci.len() - full * bs) as u64;
            let first = summary.blocks;
            let done: Vec<BitBlock> = self.pool.install(|| {
                (0..full)
                    .into_par_iter()
                    .map(|j| {
                        let r = j * bs..(j + 1) * bs;
                        let blk = SampleBlock::new(ci[r.clone()].to_vec(), cq[r].to_vec(), adc, header.lo_power, 0, first + j as u64)?;
                        ex.extract(first + j as u64, &blk)
                    })
                    .collect::<Result<_>>()
            })?;
            for bits in &done {
                sink.push(bits).map_err(io_at(path))?;
                summary.digests.push(hex::encode(Sha256::digest(bits.to_bytes())));
            }
            summary.blocks += full as u64;
            summary.input_samples += (full * bs) as u64;
            if ci.len() < bs * per_batch {
                break;
            }
        }
        summary.input_bits = summary.input_samples * 2 * adc.bits as u64;
        let (out, bits) = sink.finish().map_err(io_at(path))?;
        summary.output_bits = bits;
        if summary.blocks == 0 {
            return Err(Error::Stage {
                stage: "extract",
                reason: format!("stream holds fewer than {bs} samples, no block to hash"),
            });
        }
        Ok((summary, out))
    }

    /// Sidecar metadata for an extraction.
    pub fn extraction_meta(&self, cert: &EntropyCertificate, s: &ExtractSummary) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("bits", s.output_bits);
        kv.push("blocks", s.blocks);
        kv.push("block_samples", s.block_samples);
        kv.push("input_samples", s.input_samples);
        kv.push("input_bits", s.input_bits);
        kv.push("dropped_samples", s.dropped_samples);
        kv.push("ratio", s.ratio());
        kv.push("epsilon", self.cfg.epsilon);
        kv.push("backend", self.cfg.backend.as_str());
        kv.push("reuse_seed", self.cfg.reuse_seed);
        kv.push("seed.extraction", hex::encode(self.cfg.extraction_seed));
        for (k, v) in cert.to_kv().entries() {
            kv.push(format!("certificate.{k}"), v);
        }
        for (i, d) in s.digests.iter().enumerate() {
            kv.push(format!("block.{i}.sha256"), d);
        }
        kv
    }

    /// [`Pipeline::extract`] between files plus the `.meta` sidecar.
    pub fn extract_path(&self, input: &Path, cert: &EntropyCertificate, output: &Path) -> Result<ExtractSummary> {
        let (summary, _) = self
            .extract(open(input)?, cert, create(output)?)
            .map_err(|e| relabel_io(e, output))?;
        write_text(&sidecar(output, ".meta"), &self.extraction_meta(cert, &summary).to_text())?;
        Ok(summary)
    }

    /// Battery on the first `test.bits` bits. A single failure is retested
    /// on the next disjoint `test.bits` bits when the input has them.
    pub fn test_bits(&self, bits: &BitBlock) -> Result<BatteryReport> {
        let len = (self.cfg.test_bits as usize).min(bits.len());
        let first = bits.slice(0, len)?;
        let params = TestParams::default();
        let mut rep = self.pool.install(|| run_battery(&first, self.cfg.alpha, &params))?;
        if rep.retest_candidate().is_some() && bits.len() >= 2 * len {
            let fresh = bits.slice(len, len)?;
            self.pool.install(|| rep.apply_retest(&fresh, &params))?;
        }
        Ok(rep)
    }

    pub fn test_path(&self, input: &Path) -> Result<BatteryReport> {
        self.test_bits(&read_bits(input)?)
    }

    /// Every stage in order, writing [`RunPaths`] under `dir`.
    pub fn run(&self, dir: &Path) -> Result<RunReport> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = RunPaths::in_dir(dir);
        let simulation = self.simulate_to_path(&p.raw)?;
        let filter = self.filter_path(&p.raw, &p.filtered)?;
        let certificate = self.certify_path(&p.filtered)?;
        write_text(&p.certificate, &certificate.to_text())?;
        let extraction = self.extract_path(&p.filtered, &certificate, &p.extracted)?;
        let battery = self.test_path(&p.extracted)?;
        write_text(&p.tests, &battery.table())?;

        let autocorr = if filter.output_samples as usize > 2 * REPORT_MAX_LAG + 2 {
            let a = autocorr_stream(open(&p.filtered)?, Channel::I, REPORT_MAX_LAG)?;
            write_text(&p.autocorr, &a.to_text())?;
            Some(a)
        } else {
            None
        };

        let mut off_cfg = self.cfg.clone();
        off_cfg.lo_blocked = true;
        off_cfg.raw_samples = off_cfg.raw_samples.min(SPECTRUM_SAMPLES as u64);
        off_cfg.drift_blocks.clear();
        Pipeline::new(off_cfg)?.simulate_to_path(&p.lo_off)?;
        let seg = SPECTRUM_SEGMENT.min(self.cfg.raw_samples as usize);
        let on = spectrum_stream(open(&p.raw)?, Channel::I, seg, SPECTRUM_SAMPLES)?;
        let off = spectrum_stream(open(&p.lo_off)?, Channel::I, seg, SPECTRUM_SAMPLES)?;
        let band_gap_db = band_gap_db(&on, &off, &self.cfg.band)?;
        write_text(&p.spectrum, &spectrum_text(&on, Some(band_gap_db)))?;

        let report = RunReport {
            simulation,
            filter,
            certificate,
            extraction,
            autocorr,
            band_gap_db,
            battery,
        };
        write_text(&p.report, &report.to_kv().to_text())?;
        Ok(report)
    }
}

/// Replaces the placeholder path of a stream I/O error with the real one.
fn relabel_io(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    }
}
