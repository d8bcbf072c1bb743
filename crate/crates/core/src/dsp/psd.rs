use realfft::RealFftPlanner;

use super::BandSpec;
use crate::error::{Error, Result};

/// One-sided power spectral density in units²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub segments: usize,
}

impl PsdEstimate {
    /// Mean PSD over the bins inside `band`.
    pub fn band_mean(&self, band: &BandSpec) -> Option<f64> {
        let v: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| band.contains(**f) && **f > 0.0)
            .map(|(_, p)| *p)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Integral of the PSD over frequency; equals the signal variance.
    pub fn total_power(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        let df = self.freqs[1] - self.freqs[0];
        self.psd.iter().sum::<f64>() * df
    }
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
pub fn welch_psd(stream: &[f64], sample_rate: f64, segment_len: usize, overlap: f64) -> Result<PsdEstimate> {
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::invalid("overlap", format!("{overlap} must lie in [0, 0.9]")));
    }
    if segment_len < 8 || segment_len > stream.len() {
        return Err(Error::invalid(
            "segment length",
            format!("{segment_len} must be in [8, {}]", stream.len()),
        ));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::invalid("sample rate", format!("{sample_rate} must be positive")));
    }
    let step = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window: Vec<f64> = (0..segment_len)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / segment_len as f64).sin();
            s * s
        })
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let mut planner = RealFftPlanner::<f64>::new();
    let r2c = planner.plan_fft_forward(segment_len);
    let mut buf = r2c.make_input_vec();
    let mut spec = r2c.make_output_vec();
    let mut acc = vec![0.0; spec.len()];
    let mut segments = 0;
    let mut start = 0;
    while start + segment_len <= stream.len() {
        let seg = &stream[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = (x - mean) * w;
        }
        r2c.process(&mut buf, &mut spec).expect("plan size");
        for (a, s) in acc.iter_mut().zip(&spec) {
            *a += s.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let norm = 1.0 / (sample_rate * wss * segments as f64);
    let nyquist = segment_len % 2 == 0;
    let last = acc.len() - 1;
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (nyquist && k == last) { 1.0 } else { 2.0 };
            a * norm * one_sided
        })
        .collect();
    let freqs = (0..acc.len())
        .map(|k| k as f64 * sample_rate / segment_len as f64)
        .collect();
    Ok(PsdEstimate { freqs, psd, segments })
}

/// Smallest in-band ratio `10·log10(on/off)` between two PSDs on the same
/// frequency grid.
pub fn band_gap_db(on: &PsdEstimate, off: &PsdEstimate, band: &BandSpec) -> Result<f64> {
    let same_grid = on.freqs.len() == off.freqs.len()
        && on
            .freqs
            .iter()
            .zip(&off.freqs)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
    if !same_grid {
        return Err(Error::invalid("band gap", "PSD frequency grids differ"));
    }
    let mut worst = f64::INFINITY;
    for ((f, a), b) in on.freqs.iter().zip(&on.psd).zip(&off.psd) {
        if *f > 0.0 && band.contains(*f) {
            let gap = if *b <= 0.0 {
                f64::INFINITY
            } else {
                10.0 * (a / b).log10()
            };
            worst = worst.min(gap);
        }
    }
    if worst == f64::INFINITY && !on.freqs.iter().any(|f| *f > 0.0 && band.contains(*f)) {
        return Err(Error::invalid("band gap", "no PSD bins inside the band"));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn noise(n: usize, seed: u64, sigma: f64) -> Vec<f64> {
        let mut rng = crate::sim_rng(seed, 0);
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn white_noise_level_and_parseval() {
        let fs = 1e9;
        let x = noise(1 << 20, 1, 2.0);
        let p = welch_psd(&x, fs, 4096, 0.5).unwrap();
        assert_eq!(p.freqs.len(), 2049);
        assert_eq!(p.segments, (1 << 20) / 2048 - 1);
        let level = 2.0 * 4.0 / fs;
        let mid = &p.psd[10..2000];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean / level - 1.0).abs() < 0.01, "{mean} vs {level}");
        assert!((p.total_power() / 4.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let fs = 1e6;
        let f0 = 1e6 * 100.0 / 1024.0;
        let x: Vec<f64> = (0..1 << 16)
            .map(|t| (2.0 * std::f64::consts::PI * f0 * t as f64 / fs).sin())
            .collect();
        let p = welch_psd(&x, fs, 1024, 0.5).unwrap();
        let peak = p
            .psd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 100);
        // power of a unit sine is 1/2
        assert!((p.total_power() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn band_gap_of_scaled_noise() {
        let fs = 10e9;
        let on = welch_psd(&noise(1 << 18, 2, 10.0), fs, 1024, 0.5).unwrap();
        let off = welch_psd(&noise(1 << 18, 3, 1.0), fs, 1024, 0.5).unwrap();
        let gap = band_gap_db(&on, &off, &BandSpec::DEFAULT).unwrap();
        assert!(gap > 17.0 && gap < 20.0, "{gap}");
        let other = welch_psd(&noise(1 << 18, 3, 1.0), fs, 2048, 0.5).unwrap();
        assert!(band_gap_db(&on, &other, &BandSpec::DEFAULT).is_err());
    }

    #[test]
    fn flat_per_bin() {
        let fs = 2e6;
        let p = welch_psd(&noise(1 << 19, 5, 1.0), fs, 64, 0.5).unwrap();
        assert!(p.segments >= 100);
        // bin 1 shares the Hann main lobe with the removed mean
        for v in &p.psd[2..32] {
            assert!((v * fs / 2.0 - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn band_gap_exact_cases() {
        let fs = 10e9;
        let x = noise(1 << 16, 6, 1.0);
        let loud: Vec<f64> = x.iter().map(|v| v * 10f64.sqrt()).collect();
        let off = welch_psd(&x, fs, 1024, 0.5).unwrap();
        let on = welch_psd(&loud, fs, 1024, 0.5).unwrap();
        assert!((band_gap_db(&on, &off, &BandSpec::DEFAULT).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(band_gap_db(&off, &off, &BandSpec::DEFAULT).unwrap(), 0.0);
    }

    #[test]
    fn wiener_khinchin() {
        // FIR-filtered noise: r(k) vanishes beyond lag 2
        let h = [1.0, 0.5, 0.2];
        let x = noise((1 << 20) + 2, 7, 1.0);
        let y: Vec<f64> = x.windows(3).map(|w| h[0] * w[2] + h[1] * w[1] + h[2] * w[0]).collect();
        let fs = 1.0;
        let p = welch_psd(&y, fs, 256, 0.5).unwrap();
        let r = crate::dsp::autocorrelation(&y, 8).unwrap();
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let wk: Vec<f64> = p
            .freqs
            .iter()
            .map(|f| {
                let w = 2.0 * std::f64::consts::PI * f / fs;
                let s: f64 = r[1..].iter().enumerate().map(|(k, rk)| 2.0 * rk * (w * (k + 1) as f64).cos()).sum();
                2.0 * var * (r[0] + s) / fs
            })
            .collect();
        // per-bin relative spread of an averaged periodogram is about 1/√segments
        let tol = 4.0 / (p.segments as f64).sqrt();
        for (a, b) in p.psd[2..128].iter().zip(&wk[2..128]) {
            assert!((a - b).abs() < tol * b, "{a} vs {b}");
        }
    }

    #[test]
    fn errors() {
        let x = noise(1000, 4, 1.0);
        assert!(welch_psd(&x, 1.0, 256, 0.95).is_err());
        assert!(welch_psd(&x, 1.0, 2000, 0.5).is_err());
        assert!(welch_psd(&x, 0.0, 256, 0.5).is_err());
        assert!(welch_psd(&x, 1.0, 256, 0.0).is_ok());
    }
}
