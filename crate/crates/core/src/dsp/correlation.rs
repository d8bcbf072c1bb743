use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Normalised (biased) autocorrelation `r[0..=max_lag]` with `r[0] = 1`.
///
/// `r(k) = Σ_{t<N-k} (x_t - μ)(x_{t+k} - μ) / Σ_t (x_t - μ)²`
pub fn autocorrelation(stream: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if stream.len() < 2 || max_lag >= stream.len() / 2 {
        return Err(Error::invalid(
            "autocorrelation",
            format!("max_lag {max_lag} must be < len/2 = {}", stream.len() / 2),
        ));
    }
    let mut acc = AutocorrAccumulator::new(max_lag);
    acc.push(stream);
    acc.finish()
}

/// Streaming autocorrelation over a sequence of chunks, computed block-wise
/// with FFT products so memory stays bounded.
pub struct AutocorrAccumulator {
    max_lag: usize,
    fft_len: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    offset: Option<f64>,
    pending: Vec<f64>,
    raw: Vec<f64>,
    head: Vec<f64>,
    tail: Vec<f64>,
    sum: f64,
    count: u64,
}

impl AutocorrAccumulator {
    pub fn new(max_lag: usize) -> Self {
        let fft_len = (8 * (max_lag + 1)).next_power_of_two().max(1 << 16);
        let mut planner = RealFftPlanner::<f64>::new();
        AutocorrAccumulator {
            max_lag,
            fft_len,
            r2c: planner.plan_fft_forward(fft_len),
            c2r: planner.plan_fft_inverse(fft_len),
            offset: None,
            pending: Vec::new(),
            raw: vec![0.0; max_lag + 1],
            head: Vec::with_capacity(max_lag),
            tail: Vec::new(),
            sum: 0.0,
            count: 0,
        }
    }

    fn seg_len(&self) -> usize {
        self.fft_len - self.max_lag
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, chunk: &[f64]) {
        if chunk.is_empty() {
            return;
        }
        let c = *self
            .offset
            .get_or_insert_with(|| chunk.iter().sum::<f64>() / chunk.len() as f64);
        let start = self.pending.len();
        self.pending.extend(chunk.iter().map(|v| v - c));
        let fresh = &self.pending[start..];
        self.sum += fresh.iter().sum::<f64>();
        self.count += fresh.len() as u64;
        if self.head.len() < self.max_lag {
            let need = self.max_lag - self.head.len();
            self.head.extend(fresh.iter().take(need));
        }
        while self.pending.len() >= self.fft_len {
            self.process_segment(self.seg_len());
        }
    }

    /// Accumulates lag products for `pending[..s]` against
    /// `pending[..s + max_lag]`, then drops the first `s` samples.
    fn process_segment(&mut self, s: usize) {
        let f = self.fft_len;
        let b_len = (s + self.max_lag).min(self.pending.len());
        let mut a = vec![0.0; f];
        let mut b = vec![0.0; f];
        a[..s].copy_from_slice(&self.pending[..s]);
        b[..b_len].copy_from_slice(&self.pending[..b_len]);
        let mut fa = self.r2c.make_output_vec();
        let mut fb = self.r2c.make_output_vec();
        self.r2c.process(&mut a, &mut fa).expect("plan size");
        self.r2c.process(&mut b, &mut fb).expect("plan size");
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = x.conj() * y;
        }
        fa[0].im = 0.0;
        let last = fa.len() - 1;
        fa[last] = Complex64::new(fa[last].re, 0.0);
        let mut c = vec![0.0; f];
        self.c2r.process(&mut fa, &mut c).expect("plan size");
        let scale = 1.0 / f as f64;
        for (r, v) in self.raw.iter_mut().zip(&c) {
            *r += v * scale;
        }
        let drained: Vec<f64> = self.pending.drain(..s).collect();
        self.tail.extend(drained);
        if self.tail.len() > self.max_lag {
            let cut = self.tail.len() - self.max_lag;
            self.tail.drain(..cut);
        }
    }

    pub fn finish(mut self) -> Result<Vec<f64>> {
        let n = self.count as usize;
        if n < 2 || self.max_lag >= n / 2 {
            return Err(Error::invalid(
                "autocorrelation",
                format!("max_lag {} must be < len/2 = {}", self.max_lag, n / 2),
            ));
        }
        while !self.pending.is_empty() {
            let s = self.seg_len().min(self.pending.len());
            self.process_segment(s);
        }
        let nf = n as f64;
        let mu = self.sum / nf;
        let mut first = 0.0; // Σ of the first k samples
        let mut last = 0.0; // Σ of the last k samples
        let mut out = Vec::with_capacity(self.max_lag + 1);
        for k in 0..=self.max_lag {
            if k > 0 {
                first += self.head[k - 1];
                last += self.tail[self.tail.len() - k];
            }
            let centred = self.raw[k] - mu * ((self.sum - last) + (self.sum - first))
                + (n - k) as f64 * mu * mu;
            out.push(centred);
        }
        let c0 = out[0];
        if !(c0 > 1e-300 * nf) {
            return Err(Error::invalid("autocorrelation", "stream has zero variance"));
        }
        out.iter_mut().for_each(|v| *v /= c0);
        out[0] = 1.0;
        Ok(out)
    }
}
