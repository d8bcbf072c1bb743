//! Min-entropy quantities for heterodyne outcomes.
//!
//! Two families live here. Classical min-entropy `H_min(X)` describes the raw
//! outcome distribution and is what an observer without side information
//! could extract; it is estimated either from a histogram or from the
//! Gaussian peak. The conditional min-entropy `H_min(X|E)` bounds what an
//! adversary holding the source can guess, and for heterodyne detection it
//! depends only on the bin sizes: `log2(π/(δq·δp))`.
//!
//! The general guessing problem over arbitrary source decompositions is not
//! solved here. Instead the universal bound is paired with the coherent-state
//! strategy [`pguess_oracle_heterodyne`], which attains it as the bins shrink.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use libm::erf;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::format::KvDoc;

fn positive(what: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(what, format!("must be finite and > 0, got {v}")))
    }
}

/// Dense 2D histogram of binned outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    rows: usize,
    cols: usize,
    row_offset: i64,
    col_offset: i64,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram2d {
    /// Histogram indexed directly by signed ADC codes of `bits` bits.
    pub fn for_codes(bits: u32) -> Result<Self> {
        if !(1..=12).contains(&bits) {
            return Err(Error::invalid(
                "histogram",
                format!("dense code histograms support 1..=12 bits, got {bits}"),
            ));
        }
        let side = 1usize << bits;
        let off = -(1i64 << (bits - 1));
        Ok(Histogram2d {
            rows: side,
            cols: side,
            row_offset: off,
            col_offset: off,
            counts: vec![0; side * side],
            total: 0,
        })
    }

    /// Histogram from explicit counts in row-major order. `total` must equal
    /// the sum of the counts.
    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u64>, total: u64) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::invalid(
                "histogram",
                format!("expected {} counts, got {}", rows * cols, counts.len()),
            ));
        }
        let sum: u64 = counts.iter().sum();
        if sum != total {
            return Err(Error::invalid(
                "histogram",
                format!("counts sum to {sum}, total says {total}"),
            ));
        }
        Ok(Histogram2d {
            rows,
            cols,
            row_offset: 0,
            col_offset: 0,
            counts,
            total,
        })
    }

    #[inline]
    pub fn add_code(&mut self, code_q: i16, code_p: i16) {
        let r = (code_q as i64 - self.row_offset) as usize;
        let c = (code_p as i64 - self.col_offset) as usize;
        self.counts[r * self.cols + c] += 1;
        self.total += 1;
    }

    pub fn add_codes(&mut self, codes_q: &[i16], codes_p: &[i16]) {
        for (&q, &p) in codes_q.iter().zip(codes_p) {
            self.add_code(q, p);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Adds the counts of a histogram with the same layout.
    pub fn merge(&mut self, other: &Histogram2d) -> Result<()> {
        if (self.rows, self.cols, self.row_offset, self.col_offset) != (other.rows, other.cols, other.row_offset, other.col_offset) {
            return Err(Error::invalid("histogram", "cannot merge histograms with different layouts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Empirical classical min-entropy `-log2(max_bin/total)` in bits.
///
/// This is a plug-in estimate without finite-size correction; the maximum of
/// many noisy counts is biased upward, so the estimate sits slightly below
/// the true value for small samples.
pub fn classical_min_entropy_hist(hist: &Histogram2d) -> Result<f64> {
    if hist.total == 0 {
        return Err(Error::invalid("histogram", "empty histogram"));
    }
    Ok(-(hist.max_count() as f64 / hist.total as f64).log2())
}

/// Classical min-entropy of a Gaussian outcome distribution discretized at
/// `(δq, δp)`, using the peak density times the bin area.
pub fn classical_min_entropy_gaussian(
    var_q: f64,
    var_p: f64,
    delta_q: f64,
    delta_p: f64,
) -> Result<f64> {
    let vq = positive("variance", var_q)?;
    let vp = positive("variance", var_p)?;
    let dq = positive("delta_q", delta_q)?;
    let dp = positive("delta_p", delta_p)?;
    Ok(-(dq * dp / (2.0 * PI * (vq * vp).sqrt())).log2())
}

/// `log2(π)`: lower bound on the conditional min-entropy of the continuous
/// heterodyne outcome. It bounds a differential quantity (the outcome is a
/// density on an infinite-dimensional space), so it is a per-unit-area
/// figure, not bits per discrete sample.
pub fn quantum_bound_continuous() -> f64 {
    PI.log2()
}

/// `log2(π/(δq·δp))` bits per sample: conditional min-entropy lower bound for
/// heterodyne outcomes digitized on a `δq × δp` grid.
pub fn quantum_bound_discrete(delta_q: f64, delta_p: f64) -> Result<f64> {
    let dq = positive("delta_q", delta_q)?;
    let dp = positive("delta_p", delta_p)?;
    Ok((PI / (dq * dp)).log2())
}

/// Largest bin probability an adversary reaches by preparing coherent states
/// centered on a bin: `erf(δq/2)·erf(δp/2)`. Never exceeds `δq·δp/π` and
/// approaches it as the bins shrink, which shows the discrete bound is tight.
pub fn pguess_oracle_heterodyne(delta_q: f64, delta_p: f64) -> Result<f64> {
    let dq = positive("delta_q", delta_q)?;
    let dp = positive("delta_p", delta_p)?;
    Ok(erf(dq / 2.0) * erf(dp / 2.0))
}

const PSD_TOL: f64 = 1e-10;
const COMPLETENESS_TOL: f64 = 1e-9;

/// Measurement on a finite-dimensional Hilbert space.
#[derive(Debug, Clone)]
pub struct FinitePovm {
    elements: Vec<DMatrix<Complex64>>,
}

impl FinitePovm {
    pub fn new(elements: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::invalid("POVM", "no elements"))?;
        let d = first.nrows();
        if d == 0 {
            return Err(Error::invalid("POVM", "zero-dimensional elements"));
        }
        let mut sum = DMatrix::<Complex64>::zeros(d, d);
        for (k, e) in elements.iter().enumerate() {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::invalid(
                    "POVM",
                    format!("element {k} is {}x{}, expected {d}x{d}", e.nrows(), e.ncols()),
                ));
            }
            let asym = (e - e.adjoint()).norm();
            if asym > PSD_TOL {
                return Err(Error::invalid(
                    "POVM",
                    format!("element {k} is not Hermitian (|E - E†| = {asym:.3e})"),
                ));
            }
            let low = SymmetricEigen::new(e.clone()).eigenvalues.min();
            if low < -PSD_TOL {
                return Err(Error::invalid(
                    "POVM",
                    format!("element {k} has negative eigenvalue {low:.3e}"),
                ));
            }
            sum += e;
        }
        let residual = (sum - DMatrix::<Complex64>::identity(d, d)).norm();
        if residual > COMPLETENESS_TOL {
            return Err(Error::IncompletePovm { residual });
        }
        Ok(FinitePovm { elements })
    }

    /// Projective measurement onto the columns of a unitary.
    pub fn projective(basis: &DMatrix<Complex64>) -> Result<Self> {
        let elements = basis
            .column_iter()
            .map(|c| {
                let v = c.into_owned();
                &v * v.adjoint()
            })
            .collect();
        Self::new(elements)
    }

    /// Rank-one elements `w_k |ψ_k⟩⟨ψ_k|`.
    pub fn from_rank_one(terms: &[(f64, Vec<Complex64>)]) -> Result<Self> {
        let elements = terms
            .iter()
            .map(|(w, psi)| {
                let v = nalgebra::DVector::from_vec(psi.clone());
                (&v * v.adjoint()).scale(*w)
            })
            .collect();
        Self::new(elements)
    }

    /// Qubit SIC-POVM: four elements `|ψ_k⟩⟨ψ_k|/2` on a regular tetrahedron
    /// of the Bloch sphere.
    pub fn qubit_sic() -> Self {
        let s = (2.0f64 / 3.0).sqrt();
        let r = (1.0f64 / 3.0).sqrt();
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let phases = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
        let mut terms = vec![(0.5, vec![c(1.0, 0.0), c(0.0, 0.0)])];
        for ph in phases {
            terms.push((0.5, vec![c(r, 0.0), c(s * ph.cos(), s * ph.sin())]));
        }
        Self::from_rank_one(&terms).expect("SIC-POVM is complete")
    }

    /// Qubit trine: `(2/3)|ψ_k⟩⟨ψ_k|` with real states 120° apart on the Bloch
    /// sphere.
    pub fn trine() -> Self {
        let terms: Vec<_> = (0..3)
            .map(|k| {
                let t = k as f64 * PI / 3.0;
                (
                    2.0 / 3.0,
                    vec![Complex64::new(t.cos(), 0.0), Complex64::new(t.sin(), 0.0)],
                )
            })
            .collect();
        Self::from_rank_one(&terms).expect("trine is complete")
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn elements(&self) -> &[DMatrix<Complex64>] {
        &self.elements
    }
}

/// Guessing-probability bound `-log2 max_x λ_max(Π_x)` for any POVM.
///
/// `max_τ Tr[Π_x τ]` over states is the top eigenvalue of `Π_x`, so this is the
/// min-entropy an adversary holding the source cannot beat. Eigenvalues
/// within 1e-12 of one are taken as one, so projective measurements give
/// exactly zero.
pub fn povm_guess_bound(povm: &FinitePovm) -> f64 {
    let top = povm
        .elements
        .iter()
        .map(|e| SymmetricEigen::new(e.clone()).eigenvalues.max())
        .fold(0.0f64, f64::max);
    let top = if top > 1.0 - 1e-12 { 1.0 } else { top };
    -top.log2()
}

/// Entropy figures certified for one acquisition configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCertificate {
    pub delta_q: f64,
    pub delta_p: f64,
    /// Gaussian-peak classical min-entropy, bits/sample; absent when no
    /// variances were supplied.
    pub h_classical: Option<f64>,
    /// Conditional min-entropy lower bound, bits/sample.
    pub h_quantum_bound: f64,
    pub epsilon: f64,
    pub samples_per_second: f64,
    /// `h_quantum_bound · samples_per_second`, bits/s.
    pub secure_rate: f64,
}

/// Allowed shortfall of the classical estimate below the quantum bound
/// before variances are treated as below the vacuum level.
const CLASSICAL_SHORTFALL_TOL: f64 = 0.01;

pub fn build_certificate(
    delta_q: f64,
    delta_p: f64,
    variances: Option<(f64, f64)>,
    sample_rate: f64,
    epsilon: f64,
) -> Result<EntropyCertificate> {
    let h_quantum_bound = quantum_bound_discrete(delta_q, delta_p)?;
    let samples_per_second = positive("sample rate", sample_rate)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must lie in (0, 1), got {epsilon}"),
        ));
    }
    let h_classical = variances
        .map(|(vq, vp)| classical_min_entropy_gaussian(vq, vp, delta_q, delta_p))
        .transpose()?;
    let cert = EntropyCertificate {
        delta_q,
        delta_p,
        h_classical,
        h_quantum_bound,
        epsilon,
        samples_per_second,
        secure_rate: h_quantum_bound * samples_per_second,
    };
    cert.check_ordering()?;
    Ok(cert)
}

impl EntropyCertificate {
    fn check_ordering(&self) -> Result<()> {
        if let Some(hc) = self.h_classical {
            if hc < self.h_quantum_bound - CLASSICAL_SHORTFALL_TOL {
                return Err(Error::invalid(
                    "certificate",
                    format!(
                        "classical min-entropy {hc:.3} is below the quantum bound {:.3}; \
                         measured variances are under the vacuum level (check calibration)",
                        self.h_quantum_bound
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Key-value block; entropies in bits to three decimals, everything else
    /// at full precision.
    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.push("delta_q", self.delta_q);
        kv.push("delta_p", self.delta_p);
        if let Some(h) = self.h_classical {
            kv.push("h_classical", format!("{h:.3}"));
        }
        kv.push("h_quantum_bound", format!("{:.3}", self.h_quantum_bound));
        kv.push("epsilon", self.epsilon);
        kv.push("samples_per_second", self.samples_per_second);
        kv.push("secure_rate", self.secure_rate);
        kv
    }

    pub fn to_text(&self) -> String {
        format!(
            "# entropy certificate (bits/sample, secure_rate in bit/s)\n{}",
            self.to_kv().to_text()
        )
    }

    /// Reads a certificate back; the quantum bound is recomputed from the
    /// bin sizes at full precision and checked against the stored value.
    pub fn from_kv(kv: &KvDoc) -> Result<Self> {
        let delta_q = kv.require_f64("delta_q")?;
        let delta_p = kv.require_f64("delta_p")?;
        let h_quantum_bound = quantum_bound_discrete(delta_q, delta_p)?;
        let stored = kv.require_f64("h_quantum_bound")?;
        if (stored - h_quantum_bound).abs() > 5.0005e-4 {
            return Err(Error::Format {
                format: "certificate",
                reason: format!(
                    "h_quantum_bound={stored} disagrees with the bin sizes ({h_quantum_bound:.6})"
                ),
            });
        }
        let epsilon = kv.require_f64("epsilon")?;
        let samples_per_second = kv.require_f64("samples_per_second")?;
        let cert = EntropyCertificate {
            delta_q,
            delta_p,
            h_classical: kv.get_f64("h_classical")?,
            h_quantum_bound,
            epsilon,
            samples_per_second,
            secure_rate: h_quantum_bound * samples_per_second,
        };
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid("epsilon", format!("{epsilon} not in (0, 1)")));
        }
        Ok(cert)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{bin_probability, husimi_density, Amplitude, PhaseSpaceBin, StateModel};
    use proptest::prelude::*;

    const DQ: f64 = 14.05e-3;
    const DP: f64 = 14.14e-3;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Closed-form top eigenvalue of a 2x2 Hermitian matrix.
    fn top_eig_2x2(m: &DMatrix<Complex64>) -> f64 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = m[(0, 1)].norm();
        (a + d) / 2.0 + (((a - d) / 2.0).powi(2) + b * b).sqrt()
    }

    #[test]
    fn histogram_min_entropy() {
        let h = Histogram2d::from_counts(2, 2, vec![0, 7, 0, 0], 7).unwrap();
        assert_eq!(classical_min_entropy_hist(&h).unwrap(), 0.0);
        let h = Histogram2d::from_counts(128, 128, vec![3; 1 << 14], 3 << 14).unwrap();
        assert!((classical_min_entropy_hist(&h).unwrap() - 14.0).abs() < 1e-12);
        let empty = Histogram2d::from_counts(2, 2, vec![0; 4], 0).unwrap();
        assert!(classical_min_entropy_hist(&empty).is_err());
        assert!(Histogram2d::from_counts(2, 2, vec![1; 4], 5).is_err());
        assert!(Histogram2d::for_codes(16).is_err());
    }

    #[test]
    fn code_histogram_indexing() {
        let mut h = Histogram2d::for_codes(4).unwrap();
        h.add_codes(&[-8, 7, 7], &[7, -8, -8]);
        assert_eq!(h.total(), 3);
        assert_eq!(h.max_count(), 2);
        let mut g = Histogram2d::for_codes(4).unwrap();
        g.add_code(7, -8);
        g.merge(&h).unwrap();
        assert_eq!((g.total(), g.max_count()), (4, 3));
        assert!(g.merge(&Histogram2d::for_codes(5).unwrap()).is_err());
    }

    #[test]
    fn gaussian_min_entropy() {
        let h = classical_min_entropy_gaussian(0.5, 0.5, 1.0, 1.0).unwrap();
        assert!((h - PI.log2()).abs() < 1e-15);
        let h = classical_min_entropy_gaussian(0.55135, 0.56732, DQ, DP).unwrap();
        assert!((h - 14.11).abs() < 0.02, "{h}");
        let h2 = classical_min_entropy_gaussian(0.55135, 0.56732, 2.0 * DQ, 2.0 * DP).unwrap();
        assert!((h - h2 - 2.0).abs() < 1e-12);
        assert!(classical_min_entropy_gaussian(0.0, 0.5, 1.0, 1.0).is_err());
        assert!(classical_min_entropy_gaussian(0.5, 0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn discrete_bound_values() {
        let h = quantum_bound_discrete(DQ, DP).unwrap();
        assert!((h - 13.949).abs() < 1e-3, "{h}");
        let s = PI.sqrt();
        assert!(quantum_bound_discrete(s, s).unwrap().abs() < 1e-15);
        assert!((quantum_bound_discrete(1.0, 1.0).unwrap() - quantum_bound_continuous()).abs() < 1e-12);
        assert!((quantum_bound_continuous() - 1.651_496_129_472_318_8).abs() < 1e-15);
        assert!(quantum_bound_discrete(0.0, 1.0).is_err());
    }

    #[test]
    fn continuous_bound_below_thermal_grid_search() {
        let st = StateModel::thermal(0.5).unwrap();
        let mut peak = 0.0f64;
        for i in -100..=100 {
            for j in -100..=100 {
                let a = Amplitude::new(i as f64 * 0.03, j as f64 * 0.03).unwrap();
                peak = peak.max(husimi_density(&st, a).unwrap());
            }
        }
        assert!(quantum_bound_continuous() <= -peak.log2());
    }

    #[test]
    fn oracle_values() {
        let p = pguess_oracle_heterodyne(DQ, DP).unwrap();
        let area = DQ * DP / PI;
        assert!((area - 6.3239e-5).abs() < 5e-9);
        assert!((p - 6.3236e-5).abs() < 5e-9, "{p}");
        assert!(p >= 0.9999 * area && p <= area);
        let p2 = pguess_oracle_heterodyne(2.0, 2.0).unwrap();
        // erf(1) from its Maclaurin series
        let mut erf1 = 0.0;
        let mut fact = 1.0;
        for n in 0..40 {
            if n > 0 {
                fact *= n as f64;
            }
            erf1 += (-1.0f64).powi(n) / (fact * (2 * n + 1) as f64);
        }
        erf1 *= 2.0 / PI.sqrt();
        assert!((p2 - erf1 * erf1).abs() < 1e-15);
        assert!((p2 - 0.7101446).abs() < 1e-7);
        assert!(pguess_oracle_heterodyne(0.0, 1.0).is_err());
    }

    #[test]
    fn oracle_matches_coherent_bin_probability() {
        let b = Amplitude::new(0.7, -1.1).unwrap();
        let bin = PhaseSpaceBin::centered(b, DQ, DP).unwrap();
        let p = bin_probability(&StateModel::Coherent(b), &bin).unwrap();
        assert!((p - pguess_oracle_heterodyne(DQ, DP).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_dominated_on_log_grid() {
        for i in 0..=40 {
            for j in 0..=40 {
                let dq = 10f64.powf(-4.0 + 4.0 * i as f64 / 40.0);
                let dp = 10f64.powf(-4.0 + 4.0 * j as f64 / 40.0);
                let p = pguess_oracle_heterodyne(dq, dp).unwrap();
                let bound = dq * dp / PI;
                assert!(p <= bound, "({dq}, {dp})");
                let lower = 1.0 - dq * dq / 12.0 - dp * dp / 12.0;
                assert!(p / bound >= lower - 1e-15);
            }
        }
        let p = pguess_oracle_heterodyne(1e-4, 1e-4).unwrap();
        assert!((p / (1e-8 / PI) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mixtures_never_beat_the_oracle() {
        use crate::phase_space::MixtureComponent;
        let (dq, dp) = (0.3, 0.2);
        let oracle = pguess_oracle_heterodyne(dq, dp).unwrap();
        let st = StateModel::mixture(vec![
            MixtureComponent {
                weight: 0.6,
                center: Amplitude::new(0.02, 0.01).unwrap(),
            },
            MixtureComponent {
                weight: 0.4,
                center: Amplitude::new(-0.05, 0.04).unwrap(),
            },
        ])
        .unwrap();
        let mut best = 0.0f64;
        for i in -30..30 {
            for j in -30..30 {
                let q0 = i as f64 * 0.01;
                let p0 = j as f64 * 0.01;
                let bin = PhaseSpaceBin::new(q0, q0 + dq, p0, p0 + dp).unwrap();
                best = best.max(bin_probability(&st, &bin).unwrap());
            }
        }
        assert!(best <= oracle);
    }

    #[test]
    fn povm_bounds() {
        let id = DMatrix::<Complex64>::identity(2, 2);
        let proj = FinitePovm::projective(&id).unwrap();
        assert_eq!(povm_guess_bound(&proj), 0.0);

        // rotated projective measurement: |+>, |->
        let h = 1.0 / 2f64.sqrt();
        let basis = DMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)]);
        assert_eq!(povm_guess_bound(&FinitePovm::projective(&basis).unwrap()), 0.0);

        let sic = FinitePovm::qubit_sic();
        assert_eq!(sic.elements().len(), 4);
        for e in sic.elements() {
            assert!((top_eig_2x2(e) - 0.5).abs() < 1e-12);
            assert!((e.trace().re - 0.5).abs() < 1e-12);
        }
        assert!((povm_guess_bound(&sic) - 1.0).abs() < 1e-10);

        let trine = FinitePovm::trine();
        for e in trine.elements() {
            assert!((top_eig_2x2(e) - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!((povm_guess_bound(&trine) - 1.5f64.log2()).abs() < 1e-10);
    }

    #[test]
    fn povm_validation() {
        let half = DMatrix::<Complex64>::identity(2, 2).scale(0.5);
        match FinitePovm::new(vec![half.clone()]) {
            Err(Error::IncompletePovm { residual }) => {
                assert!((residual - 0.5f64 * 2f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("expected incompleteness, got {other:?}"),
        }
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        let rest = DMatrix::from_row_slice(2, 2, &[c(-0.5), c(0.0), c(0.0), c(1.5)]);
        assert!(FinitePovm::new(vec![neg, rest]).is_err());
        let nonherm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.0), c(0.5)]);
        assert!(FinitePovm::new(vec![nonherm.clone(), half - nonherm + DMatrix::identity(2, 2).scale(0.5)]).is_err());
    }

    #[test]
    fn certificate_values() {
        let eps = 2f64.powi(-100);
        let cert = build_certificate(DQ, DP, Some((0.55135, 0.56732)), 1.25e9, eps).unwrap();
        assert!((cert.secure_rate / 1e9 - 17.44).abs() < 0.03);
        assert!(cert.h_quantum_bound <= cert.h_classical.unwrap());
        assert!((cert.h_quantum_bound - (PI / (DQ * DP)).log2()).abs() < 1e-12);
        assert!(build_certificate(DQ, DP, None, 0.0, eps).is_err());
        assert!(build_certificate(DQ, DP, None, 1.0, 1.0).is_err());
        assert!(build_certificate(DQ, DP, Some((0.2, 0.2)), 1.0, eps).is_err());
        let unit = build_certificate(1.0, 1.0, None, 1.0, eps).unwrap();
        assert!((unit.secure_rate - PI.log2()).abs() < 1e-12);
        assert_eq!(unit.h_classical, None);
    }

    #[test]
    fn certificate_text() {
        let eps = 2f64.powi(-100);
        let cert = build_certificate(DQ, DP, Some((0.55135, 0.56732)), 1.25e9, eps).unwrap();
        let text = cert.to_text();
        assert!(text.contains("h_quantum_bound=13.949\n"), "{text}");
        assert!(text.contains("h_classical=14.11"));
        let back = EntropyCertificate::from_kv(&KvDoc::parse(&text).unwrap()).unwrap();
        assert_eq!(back.delta_q, cert.delta_q);
        assert_eq!(back.h_quantum_bound, cert.h_quantum_bound);
        assert_eq!(back.secure_rate, cert.secure_rate);
        let tampered = text.replace("h_quantum_bound=13.949", "h_quantum_bound=14.500");
        assert!(EntropyCertificate::from_kv(&KvDoc::parse(&tampered).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn discrete_bound_strictly_decreasing(dq in 1e-4..1.0f64, dp in 1e-4..1.0f64, f in 1.001..3.0f64) {
            let h = quantum_bound_discrete(dq, dp).unwrap();
            prop_assert!(quantum_bound_discrete(dq * f, dp).unwrap() < h);
            prop_assert!(quantum_bound_discrete(dq, dp * f).unwrap() < h);
        }

        #[test]
        fn physical_variances_order_the_entropies(
            vq in 0.5..3.0f64, vp in 0.5..3.0f64, dq in 1e-3..0.1f64, dp in 1e-3..0.1f64,
        ) {
            let cert = build_certificate(dq, dp, Some((vq, vp)), 1e9, 1e-9).unwrap();
            prop_assert!(cert.h_quantum_bound <= cert.h_classical.unwrap() + 1e-12);
        }
    }
}
