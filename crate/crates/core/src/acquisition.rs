//! Optical/electronic front end: balanced-detector noise, ADC quantization,
//! detector calibration and LO power monitoring.
//!
//! Detector `k` outputs `v = s_k·X_k + √q_k·g` where `X` is the heterodyne
//! outcome in phase-space units, `s_k = √(2·m_k·P)` is the volt-per-unit
//! scale fixed by the calibration slope `m_k` and LO power `P`, and `q_k` is
//! the electronic noise variance. For the vacuum this is shot noise of
//! variance `m_k·P` plus the electronic floor `q_k`.

use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::format::KvDoc;
use crate::phase_space::{HeterodyneSampler, StateModel};

/// Linear fit `variance = slope·P + intercept` for one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCalibration {
    /// V²/W
    pub slope: f64,
    /// V²
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
}

impl ChannelCalibration {
    pub fn new(slope: f64, intercept: f64) -> Self {
        ChannelCalibration {
            slope,
            intercept,
            slope_err: 0.0,
            intercept_err: 0.0,
        }
    }

    pub fn variance_at(&self, lo_power: f64) -> f64 {
        self.slope * lo_power + self.intercept
    }
}

/// Calibration of the detector pair: channel 0 measures `Re α`, channel 1
/// measures `Im α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorCalibration {
    pub channels: [ChannelCalibration; 2],
}

impl DetectorCalibration {
    pub fn new(ch1: ChannelCalibration, ch2: ChannelCalibration) -> Result<Self> {
        let cal = DetectorCalibration {
            channels: [ch1, ch2],
        };
        cal.validate()?;
        Ok(cal)
    }

    /// Fitted constants of the reference 1.6 GHz detector pair.
    pub fn reference() -> Self {
        DetectorCalibration {
            channels: [
                ChannelCalibration {
                    slope: 2.783e-2,
                    intercept: 1.526e-5,
                    slope_err: 0.005e-2,
                    intercept_err: 0.005e-5,
                },
                ChannelCalibration {
                    slope: 2.748e-2,
                    intercept: 1.419e-5,
                    slope_err: 0.004e-2,
                    intercept_err: 0.004e-5,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.channels.iter().enumerate() {
            if !(c.slope.is_finite() && c.slope > 0.0) {
                return Err(Error::invalid(
                    "calibration",
                    format!("channel {} slope must be > 0, got {}", k + 1, c.slope),
                ));
            }
            if !(c.intercept.is_finite() && c.intercept >= 0.0) {
                return Err(Error::invalid(
                    "calibration",
                    format!("channel {} intercept must be >= 0, got {}", k + 1, c.intercept),
                ));
            }
            if !(c.slope_err >= 0.0 && c.intercept_err >= 0.0) {
                return Err(Error::invalid("calibration", "negative uncertainty"));
            }
        }
        Ok(())
    }

    /// Volts per phase-space unit on channel `k`, `√(2·m_k·P)`.
    pub fn scale(&self, k: usize, lo_power: f64) -> f64 {
        (2.0 * self.channels[k].slope * lo_power).sqrt()
    }

    /// Phase-space variance expected for the vacuum on channel `k`:
    /// `(m_k·P + q_k)/(2·m_k·P)`.
    pub fn vacuum_phase_variance(&self, k: usize, lo_power: f64) -> f64 {
        let c = &self.channels[k];
        c.variance_at(lo_power) / (2.0 * c.slope * lo_power)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        for (k, c) in self.channels.iter().enumerate() {
            let i = k + 1;
            kv.push(format!("m{i}"), c.slope);
            kv.push(format!("q{i}"), c.intercept);
            kv.push(format!("m{i}_err"), c.slope_err);
            kv.push(format!("q{i}_err"), c.intercept_err);
        }
        kv
    }

    pub fn from_kv(kv: &KvDoc) -> Result<Self> {
        let ch = |i: usize| -> Result<ChannelCalibration> {
            Ok(ChannelCalibration {
                slope: kv.require_f64(&format!("m{i}"))?,
                intercept: kv.require_f64(&format!("q{i}"))?,
                slope_err: kv.get_f64(&format!("m{i}_err"))?.unwrap_or(0.0),
                intercept_err: kv.get_f64(&format!("q{i}_err"))?.unwrap_or(0.0),
            })
        };
        Self::new(ch(1)?, ch(2)?)
    }
}

/// Digitizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcConfig {
    /// samples/s
    pub sample_rate: f64,
    pub bits: u32,
    /// V, peak-to-peak
    pub full_scale: f64,
}

impl AdcConfig {
    pub fn new(sample_rate: f64, bits: u32, full_scale: f64) -> Result<Self> {
        let adc = AdcConfig {
            sample_rate,
            bits,
            full_scale,
        };
        adc.validate()?;
        Ok(adc)
    }

    /// ADC whose LSB maps to `delta_q` phase-space units on channel 1.
    pub fn for_target_delta(
        sample_rate: f64,
        bits: u32,
        cal: &DetectorCalibration,
        lo_power: f64,
        delta_q: f64,
    ) -> Result<Self> {
        if !(lo_power > 0.0 && delta_q > 0.0) {
            return Err(Error::invalid(
                "ADC target",
                format!("lo_power and delta must be > 0, got {lo_power}, {delta_q}"),
            ));
        }
        let lsb = delta_q * cal.scale(0, lo_power);
        Self::new(sample_rate, bits, lsb * 2f64.powi(bits as i32))
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.bits) {
            return Err(Error::invalid(
                "ADC",
                format!("bits must lie in [4, 16], got {}", self.bits),
            ));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid(
                "ADC",
                format!("sample rate must be > 0, got {}", self.sample_rate),
            ));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(Error::invalid(
                "ADC",
                format!("full scale must be > 0, got {}", self.full_scale),
            ));
        }
        Ok(())
    }

    pub fn code_count(&self) -> u32 {
        1 << self.bits
    }

    pub fn lsb(&self) -> f64 {
        self.full_scale / self.code_count() as f64
    }

    pub fn min_code(&self) -> i16 {
        (-(1i32 << (self.bits - 1))) as i16
    }

    pub fn max_code(&self) -> i16 {
        ((1i32 << (self.bits - 1)) - 1) as i16
    }

    /// Phase-space resolution `(δq, δp)` for a calibration and LO power.
    pub fn deltas(&self, cal: &DetectorCalibration, lo_power: f64) -> (f64, f64) {
        (
            self.lsb() / cal.scale(0, lo_power),
            self.lsb() / cal.scale(1, lo_power),
        )
    }
}

/// Contiguous I/Q code pairs from one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub codes_i: Vec<i16>,
    pub codes_q: Vec<i16>,
    pub adc: AdcConfig,
    /// W
    pub lo_power: f64,
    pub clipped_count: usize,
    pub seed_tag: u64,
}

impl SampleBlock {
    pub fn new(
        codes_i: Vec<i16>,
        codes_q: Vec<i16>,
        adc: AdcConfig,
        lo_power: f64,
        clipped_count: usize,
        seed_tag: u64,
    ) -> Result<Self> {
        let b = SampleBlock {
            codes_i,
            codes_q,
            adc,
            lo_power,
            clipped_count,
            seed_tag,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        self.adc.validate()?;
        if self.codes_i.len() != self.codes_q.len() {
            return Err(Error::invalid(
                "sample block",
                format!(
                    "channel lengths differ ({} vs {})",
                    self.codes_i.len(),
                    self.codes_q.len()
                ),
            ));
        }
        let (lo, hi) = (self.adc.min_code(), self.adc.max_code());
        if let Some(c) = self
            .codes_i
            .iter()
            .chain(&self.codes_q)
            .find(|&&c| c < lo || c > hi)
        {
            return Err(Error::invalid(
                "sample block",
                format!("code {c} outside [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.codes_i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes_i.is_empty()
    }
}

/// Narrow technical spur, `amplitude·cos(2π f t)` added to both channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spur {
    /// Hz
    pub frequency: f64,
    /// V
    pub amplitude: f64,
}

/// Optional colored noise used to exercise the band filter. Off by default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseInjection {
    pub spurs: Vec<Spur>,
    /// First-order low-pass technical noise: `(cutoff Hz, rms V)`.
    pub low_frequency: Option<(f64, f64)>,
}

impl NoiseInjection {
    pub fn is_empty(&self) -> bool {
        self.spurs.is_empty() && self.low_frequency.is_none()
    }
}

/// Block-wise generator of balanced-detector voltage streams.
///
/// Block `b` draws from stream `b` of the seed, so blocks can be generated
/// in any order or in parallel with identical results. Spur phases follow
/// the global sample index.
pub struct DetectorSimulator {
    cal: DetectorCalibration,
    lo_power: f64,
    sample_rate: f64,
    sampler: HeterodyneSampler,
    noise: NoiseInjection,
    seed: u64,
    lo_on: bool,
}

impl DetectorSimulator {
    pub fn new(
        cal: DetectorCalibration,
        lo_power: f64,
        adc: &AdcConfig,
        state: &StateModel,
        seed: u64,
    ) -> Result<Self> {
        cal.validate()?;
        adc.validate()?;
        if !(lo_power.is_finite() && lo_power > 0.0) {
            return Err(Error::invalid(
                "LO power",
                format!("must be > 0 W, got {lo_power}"),
            ));
        }
        Ok(DetectorSimulator {
            cal,
            lo_power,
            sample_rate: adc.sample_rate,
            sampler: HeterodyneSampler::new(state)?,
            noise: NoiseInjection::default(),
            seed,
            lo_on: true,
        })
    }

    pub fn with_noise(mut self, noise: NoiseInjection) -> Self {
        self.noise = noise;
        self
    }

    /// Blocks the LO: only electronic noise (and injected noise) remains.
    pub fn with_lo_blocked(mut self) -> Self {
        self.lo_on = false;
        self
    }

    pub fn lo_power(&self) -> f64 {
        self.lo_power
    }

    /// Voltages for block `index`, whose first sample has global index
    /// `start`.
    pub fn block(&self, index: u64, start: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = crate::sim_rng(self.seed, index);
        let s = [self.cal.scale(0, self.lo_power), self.cal.scale(1, self.lo_power)];
        let e = [
            self.cal.channels[0].intercept.sqrt(),
            self.cal.channels[1].intercept.sqrt(),
        ];
        let mut vi = Vec::with_capacity(n);
        let mut vq = Vec::with_capacity(n);
        for _ in 0..n {
            let x = if self.lo_on {
                self.sampler.sample(&mut rng)
            } else {
                crate::phase_space::Amplitude::ZERO
            };
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            vi.push(s[0] * x.re + e[0] * g1);
            vq.push(s[1] * x.im + e[1] * g2);
        }
        if !self.noise.is_empty() {
            self.add_injected(&mut rng, start, &mut vi, &mut vq);
        }
        (vi, vq)
    }

    fn add_injected(&self, rng: &mut crate::SimRng, start: u64, vi: &mut [f64], vq: &mut [f64]) {
        for sp in &self.noise.spurs {
            let w = 2.0 * PI * sp.frequency / self.sample_rate;
            for (t, (a, b)) in vi.iter_mut().zip(vq.iter_mut()).enumerate() {
                let v = sp.amplitude * (w * (start + t as u64) as f64).cos();
                *a += v;
                *b += v;
            }
        }
        if let Some((cutoff, rms)) = self.noise.low_frequency {
            // AR(1) with pole exp(-2π fc/fs), started in its stationary state.
            let a = (-2.0 * PI * cutoff / self.sample_rate).exp();
            let drive = rms * (1.0 - a * a).sqrt();
            for ch in [vi, vq] {
                let mut y = rms * rng.sample::<f64, _>(StandardNormal);
                for v in ch.iter_mut() {
                    y = a * y + drive * rng.sample::<f64, _>(StandardNormal);
                    *v += y;
                }
            }
        }
    }
}

/// Vacuum voltage streams for both channels.
pub fn simulate_detector_stream(
    cal: &DetectorCalibration,
    lo_power: f64,
    adc: &AdcConfig,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("sample count", "n must be >= 1"));
    }
    let sim = DetectorSimulator::new(*cal, lo_power, adc, &StateModel::Vacuum, seed)?;
    Ok(sim.block(0, 0, n))
}

/// Mid-tread quantizer: `clamp(round(v/lsb))` with rounding half away from
/// zero. Returns the codes and the number of saturated samples.
pub fn quantize(voltages: &[f64], adc: &AdcConfig) -> (Vec<i16>, usize) {
    let mut codes = Vec::with_capacity(voltages.len());
    let clipped = quantize_into(voltages, adc.lsb(), adc, &mut codes);
    (codes, clipped)
}

pub(crate) fn quantize_into(voltages: &[f64], lsb: f64, adc: &AdcConfig, out: &mut Vec<i16>) -> usize {
    let inv = 1.0 / lsb;
    let (lo, hi) = (adc.min_code() as i64, adc.max_code() as i64);
    let mut clipped = 0;
    out.extend(voltages.iter().map(|&v| {
        let (c, clip) = quantize_code(v * inv, lo, hi);
        clipped += clip as usize;
        c
    }));
    clipped
}

/// Rounds `x` to the nearest code in `[lo, hi]`; the flag is set when it
/// had to be clamped.
#[inline]
pub(crate) fn quantize_code(x: f64, lo: i64, hi: i64) -> (i16, bool) {
    let c = round_half_away(x);
    if c < lo {
        (lo as i16, true)
    } else if c > hi {
        (hi as i16, true)
    } else {
        (c as i16, false)
    }
}

/// `x.round()` as an integer, saturating; NaN maps to 0. Avoids the libm
/// call `round` compiles to on baseline x86-64.
#[inline]
fn round_half_away(x: f64) -> i64 {
    if x.abs() < 1e15 {
        let t = x as i64;
        let d = x - t as f64;
        t + (d >= 0.5) as i64 - (d <= -0.5) as i64
    } else {
        x.round() as i64
    }
}

/// Phase-space outcomes of a block together with their resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceSamples {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub delta_q: f64,
    pub delta_p: f64,
}

/// Converts codes to phase-space units with `s_k = √(2·m_k·P)`, so pure
/// shot noise maps to the vacuum variance 1/2.
pub fn codes_to_phase_space(block: &SampleBlock, cal: &DetectorCalibration) -> Result<PhaseSpaceSamples> {
    block.validate()?;
    cal.validate()?;
    if !(block.lo_power > 0.0) {
        return Err(Error::invalid(
            "sample block",
            format!("LO power must be > 0 to convert, got {}", block.lo_power),
        ));
    }
    let (delta_q, delta_p) = block.adc.deltas(cal, block.lo_power);
    Ok(PhaseSpaceSamples {
        re: block.codes_i.iter().map(|&c| c as f64 * delta_q).collect(),
        im: block.codes_q.iter().map(|&c| c as f64 * delta_p).collect(),
        delta_q,
        delta_p,
    })
}

/// One point of a calibration sweep: LO power and the measured voltage
/// variance on both channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub power: f64,
    pub variance: [f64; 2],
}

/// Ordinary least squares of variance against LO power, per channel, with
/// standard errors from the residual scatter.
pub fn fit_calibration(points: &[SweepPoint]) -> Result<DetectorCalibration> {
    if points.len() < 3 {
        return Err(Error::invalid(
            "calibration sweep",
            format!("need at least 3 points, got {}", points.len()),
        ));
    }
    let mut powers: Vec<f64> = points.iter().map(|p| p.power).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 3 {
        return Err(Error::invalid(
            "calibration sweep",
            format!("need at least 3 distinct powers, got {}", powers.len()),
        ));
    }
    let n = points.len() as f64;
    let xbar = points.iter().map(|p| p.power).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.power - xbar).powi(2)).sum();
    let mut ch = [ChannelCalibration::new(0.0, 0.0); 2];
    for (k, out) in ch.iter_mut().enumerate() {
        let ybar = points.iter().map(|p| p.variance[k]).sum::<f64>() / n;
        let sxy: f64 = points
            .iter()
            .map(|p| (p.power - xbar) * (p.variance[k] - ybar))
            .sum();
        let slope = sxy / sxx;
        let intercept = ybar - slope * xbar;
        let rss: f64 = points
            .iter()
            .map(|p| (p.variance[k] - slope * p.power - intercept).powi(2))
            .sum();
        let s2 = rss / (n - 2.0);
        *out = ChannelCalibration {
            slope,
            intercept,
            slope_err: (s2 / sxx).sqrt(),
            intercept_err: (s2 * (1.0 / n + xbar * xbar / sxx)).sqrt(),
        };
        if !(slope > 0.0) {
            return Err(Error::invalid(
                "calibration fit",
                format!("channel {} slope {slope:.3e} <= 0: detector not responding to LO", k + 1),
            ));
        }
    }
    // a slightly negative fitted intercept is noise around a zero floor
    for c in &mut ch {
        c.intercept = c.intercept.max(0.0);
    }
    DetectorCalibration::new(ch[0], ch[1])
}

/// Fit quality per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityResiduals {
    pub rms: f64,
    pub max_relative: f64,
    pub r_squared: f64,
}

pub fn linearity_residuals(points: &[SweepPoint], cal: &DetectorCalibration) -> [LinearityResiduals; 2] {
    std::array::from_fn(|k| {
        let c = &cal.channels[k];
        let n = points.len().max(1) as f64;
        let ybar = points.iter().map(|p| p.variance[k]).sum::<f64>() / n;
        let mut rss = 0.0;
        let mut tss = 0.0;
        let mut max_rel = 0.0f64;
        for p in points {
            let r = p.variance[k] - c.variance_at(p.power);
            rss += r * r;
            tss += (p.variance[k] - ybar).powi(2);
            max_rel = max_rel.max((r / p.variance[k]).abs());
        }
        LinearityResiduals {
            rms: (rss / n).sqrt(),
            max_relative: max_rel,
            r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        }
    })
}

/// Twenty LO powers evenly spaced from 0.01 mW to 4.05 mW.
pub fn default_sweep_powers() -> Vec<f64> {
    let (lo, hi, n) = (0.01e-3, 4.05e-3, 20);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Simulates the calibration sweep: for each power, the unbiased voltage
/// variance of both channels before quantization.
pub fn run_calibration_sweep(
    cal_truth: &DetectorCalibration,
    powers: &[f64],
    samples_per_point: usize,
    adc: &AdcConfig,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if powers.is_empty() {
        return Err(Error::invalid("calibration sweep", "no LO powers given"));
    }
    if samples_per_point < 2 {
        return Err(Error::invalid(
            "calibration sweep",
            "need at least 2 samples per point",
        ));
    }
    powers
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let sim = DetectorSimulator::new(*cal_truth, p, adc, &StateModel::Vacuum, seed)?;
            let (vi, vq) = sim.block(j as u64, 0, samples_per_point);
            Ok(SweepPoint {
                power: p,
                variance: [sample_variance(&vi), sample_variance(&vq)],
            })
        })
        .collect()
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Result of checking LO monitor readings against their nominal value.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub ok: bool,
    pub max_relative_deviation: f64,
    pub violations: Vec<usize>,
}

/// Flags readings deviating from `nominal` by more than `rel_tolerance`.
/// Blocks whose monitor reports drift are discarded by the pipeline.
pub fn lo_monitor_check(readings: &[f64], nominal: f64, rel_tolerance: f64) -> Result<MonitorReport> {
    if readings.is_empty() {
        return Err(Error::invalid("LO monitor", "no readings"));
    }
    if !(nominal > 0.0 && rel_tolerance > 0.0) {
        return Err(Error::invalid(
            "LO monitor",
            format!("nominal and tolerance must be > 0, got {nominal}, {rel_tolerance}"),
        ));
    }
    let mut max_dev = 0.0f64;
    let mut violations = Vec::new();
    for (i, &r) in readings.iter().enumerate() {
        let dev = ((r - nominal) / nominal).abs();
        max_dev = max_dev.max(dev);
        if dev > rel_tolerance {
            violations.push(i);
        }
    }
    Ok(MonitorReport {
        ok: violations.is_empty(),
        max_relative_deviation: max_dev,
        violations,
    })
}
