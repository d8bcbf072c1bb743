//! Phase-space description of the source and ideal heterodyne statistics.
//!
//! Units are shot-noise units in which the vacuum Q-function has variance 1/2
//! per quadrature, so `Q(α) = exp(-|α|²)/π` for the vacuum. Every supported
//! state has a Q-function that is a finite mixture of isotropic Gaussians,
//! which makes densities, sampling and rectangle probabilities exact.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use libm::{erf, erfc};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Per-quadrature variance of the vacuum Q-function.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// A point of phase space, `α = re + i·im`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Amplitude {
    pub re: f64,
    pub im: f64,
}

impl Amplitude {
    pub const ZERO: Amplitude = Amplitude { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        let a = Amplitude { re, im };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.re.is_finite() && self.im.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(
                "amplitude",
                format!("components must be finite, got ({}, {})", self.re, self.im),
            ))
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

impl std::ops::Sub for Amplitude {
    type Output = Amplitude;
    fn sub(self, rhs: Amplitude) -> Amplitude {
        Amplitude {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl std::ops::Add for Amplitude {
    type Output = Amplitude;
    fn add(self, rhs: Amplitude) -> Amplitude {
        Amplitude {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub center: Amplitude,
}

/// Source state. `CoherentMixture` is a state with a positive
/// Glauber-Sudarshan P-function given as a finite decomposition.
#[derive(Debug, Clone, PartialEq)]
pub enum StateModel {
    Vacuum,
    Coherent(Amplitude),
    Thermal { mean_photons: f64 },
    CoherentMixture(Vec<MixtureComponent>),
}

/// One isotropic Gaussian term of a Q-function.
#[derive(Debug, Clone, Copy)]
struct Lobe {
    weight: f64,
    center: Amplitude,
    variance: f64,
}

impl StateModel {
    pub fn coherent(re: f64, im: f64) -> Result<Self> {
        Ok(StateModel::Coherent(Amplitude::new(re, im)?))
    }

    pub fn thermal(mean_photons: f64) -> Result<Self> {
        let s = StateModel::Thermal { mean_photons };
        s.validate()?;
        Ok(s)
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let s = StateModel::CoherentMixture(components);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateModel::Vacuum => Ok(()),
            StateModel::Coherent(b) => b.validate(),
            StateModel::Thermal { mean_photons } => {
                if mean_photons.is_finite() && *mean_photons >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "thermal state",
                        format!("mean photon number must be finite and >= 0, got {mean_photons}"),
                    ))
                }
            }
            StateModel::CoherentMixture(components) => {
                if components.is_empty() {
                    return Err(Error::invalid("coherent mixture", "no components"));
                }
                let mut total = 0.0;
                for c in components {
                    c.center.validate()?;
                    if !(c.weight.is_finite() && c.weight > 0.0) {
                        return Err(Error::invalid(
                            "coherent mixture",
                            format!("weights must be strictly positive, got {}", c.weight),
                        ));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "coherent mixture",
                        format!("weights sum to {total}, expected 1"),
                    ));
                }
                Ok(())
            }
        }
    }

    fn lobes(&self) -> Vec<Lobe> {
        match self {
            StateModel::Vacuum => vec![Lobe {
                weight: 1.0,
                center: Amplitude::ZERO,
                variance: VACUUM_VARIANCE,
            }],
            StateModel::Coherent(b) => vec![Lobe {
                weight: 1.0,
                center: *b,
                variance: VACUUM_VARIANCE,
            }],
            StateModel::Thermal { mean_photons } => vec![Lobe {
                weight: 1.0,
                center: Amplitude::ZERO,
                variance: VACUUM_VARIANCE * (1.0 + mean_photons),
            }],
            StateModel::CoherentMixture(cs) => cs
                .iter()
                .map(|c| Lobe {
                    weight: c.weight,
                    center: c.center,
                    variance: VACUUM_VARIANCE,
                })
                .collect(),
        }
    }

    /// Mean of the heterodyne outcome.
    pub fn mean(&self) -> Amplitude {
        self.lobes().iter().fold(Amplitude::ZERO, |acc, l| Amplitude {
            re: acc.re + l.weight * l.center.re,
            im: acc.im + l.weight * l.center.im,
        })
    }

    /// Largest distance of any lobe center from the origin.
    pub fn max_center_norm(&self) -> f64 {
        self.lobes()
            .iter()
            .map(|l| l.center.norm())
            .fold(0.0, f64::max)
    }
}

/// Husimi Q-function `Q(α) = ⟨α|ρ|α⟩/π`.
pub fn husimi_density(state: &StateModel, alpha: Amplitude) -> Result<f64> {
    state.validate()?;
    alpha.validate()?;
    Ok(state
        .lobes()
        .iter()
        .map(|l| {
            let d2 = (alpha - l.center).norm_sqr();
            l.weight / (2.0 * PI * l.variance) * (-d2 / (2.0 * l.variance)).exp()
        })
        .sum())
}

/// Streaming exact sampler of heterodyne outcomes.
pub struct HeterodyneSampler {
    lobes: Vec<Lobe>,
    scales: Vec<f64>,
    picker: Option<WeightedIndex<f64>>,
}

impl HeterodyneSampler {
    pub fn new(state: &StateModel) -> Result<Self> {
        state.validate()?;
        let lobes = state.lobes();
        let scales = lobes.iter().map(|l| l.variance.sqrt()).collect();
        let picker = if lobes.len() > 1 {
            Some(
                WeightedIndex::new(lobes.iter().map(|l| l.weight))
                    .map_err(|e| Error::invalid("coherent mixture", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(HeterodyneSampler {
            lobes,
            scales,
            picker,
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Amplitude {
        let k = match &self.picker {
            Some(p) => p.sample(rng),
            None => 0,
        };
        let (c, s) = (self.lobes[k].center, self.scales[k]);
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        Amplitude {
            re: c.re + s * g1,
            im: c.im + s * g2,
        }
    }
}

/// `n` i.i.d. heterodyne outcomes drawn from the state's Q-function.
pub fn sample_heterodyne(state: &StateModel, n: usize, seed: u64) -> Result<Vec<Amplitude>> {
    if n == 0 {
        return Err(Error::invalid("sample count", "n must be >= 1"));
    }
    let sampler = HeterodyneSampler::new(state)?;
    let mut rng = crate::sim_rng(seed, 0);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Rectangular outcome region `[q_lo, q_hi) × [p_lo, p_hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceBin {
    pub q_lo: f64,
    pub q_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
}

impl PhaseSpaceBin {
    pub fn new(q_lo: f64, q_hi: f64, p_lo: f64, p_hi: f64) -> Result<Self> {
        let b = PhaseSpaceBin {
            q_lo,
            q_hi,
            p_lo,
            p_hi,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn centered(center: Amplitude, delta_q: f64, delta_p: f64) -> Result<Self> {
        Self::new(
            center.re - delta_q / 2.0,
            center.re + delta_q / 2.0,
            center.im - delta_p / 2.0,
            center.im + delta_p / 2.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.q_lo, self.q_hi, self.p_lo, self.p_hi]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.q_hi > self.q_lo && self.p_hi > self.p_lo {
            Ok(())
        } else {
            Err(Error::invalid(
                "phase-space bin",
                format!("need q_hi > q_lo and p_hi > p_lo, got {self:?}"),
            ))
        }
    }

    pub fn delta_q(&self) -> f64 {
        self.q_hi - self.q_lo
    }

    pub fn delta_p(&self) -> f64 {
        self.p_hi - self.p_lo
    }

    pub fn center(&self) -> Amplitude {
        Amplitude {
            re: 0.5 * (self.q_lo + self.q_hi),
            im: 0.5 * (self.p_lo + self.p_hi),
        }
    }

    pub fn translated(&self, by: Amplitude) -> PhaseSpaceBin {
        PhaseSpaceBin {
            q_lo: self.q_lo + by.re,
            q_hi: self.q_hi + by.re,
            p_lo: self.p_lo + by.im,
            p_hi: self.p_hi + by.im,
        }
    }
}

/// `P(lo < X < hi)` for `X ~ N(mean, variance)`, written so that both tails
/// keep full relative precision.
pub(crate) fn gaussian_interval(lo: f64, hi: f64, mean: f64, variance: f64) -> f64 {
    let s = (2.0 * variance).sqrt();
    let a = (lo - mean) / s;
    let b = (hi - mean) / s;
    let p = if a >= 0.0 {
        0.5 * (erfc(a) - erfc(b))
    } else if b <= 0.0 {
        0.5 * (erfc(-b) - erfc(-a))
    } else {
        0.5 * (erf(b) - erf(a))
    };
    p.clamp(0.0, 1.0)
}

/// Probability that a heterodyne outcome falls in `bin`.
pub fn bin_probability(state: &StateModel, bin: &PhaseSpaceBin) -> Result<f64> {
    state.validate()?;
    bin.validate()?;
    let p: f64 = state
        .lobes()
        .iter()
        .map(|l| {
            l.weight
                * gaussian_interval(bin.q_lo, bin.q_hi, l.center.re, l.variance)
                * gaussian_interval(bin.p_lo, bin.p_hi, l.center.im, l.variance)
        })
        .sum();
    Ok(p.clamp(0.0, 1.0))
}
