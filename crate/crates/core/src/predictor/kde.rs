use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::{std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};

/// How a KDE picks its bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum BandwidthRule {
    /// Silverman's rule of thumb, never below `floor`.
    Silverman {
        floor: f64,
    },
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, samples: &[f64]) -> f64 {
        match *self {
            BandwidthRule::Silverman { floor } => silverman_bandwidth(samples).max(floor),
            BandwidthRule::Fixed(h) => h,
        }
    }
}

/// `0.9 · min(σ, IQR/1.34) · n^(-1/5)`; zero for fewer than two distinct samples.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = libm::sqrt(var);

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * libm::pow(n as f64, -0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Gaussian kernel density estimate.
///
/// With a support interval the kernels are reflected at both ends, so no
/// mass leaks outside; what the two reflections miss is renormalized away.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(Serialize, Deserialize),
    serde(try_from = "KdeSpec", into = "KdeSpec")
)]
pub struct Kde1D {
    samples: Vec<f64>,
    bandwidth: f64,
    support: Option<(f64, f64)>,
    /// Kernel mass inside the support (1 when unbounded).
    mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct KdeSpec {
    pub samples: Vec<f64>,
    pub bandwidth: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub support: Option<(f64, f64)>,
}

impl TryFrom<KdeSpec> for Kde1D {
    type Error = Error;

    fn try_from(spec: KdeSpec) -> Result<Self> {
        match spec.support {
            None => fit_kde(&spec.samples, spec.bandwidth),
            Some((lo, hi)) => Kde1D::reflected(&spec.samples, spec.bandwidth, lo, hi),
        }
    }
}

impl From<Kde1D> for KdeSpec {
    fn from(kde: Kde1D) -> Self {
        KdeSpec {
            samples: kde.samples,
            bandwidth: kde.bandwidth,
            support: kde.support,
        }
    }
}

/// Fits an unbounded Gaussian KDE.
pub fn fit_kde(samples: &[f64], bandwidth: f64) -> Result<Kde1D> {
    check_inputs(samples, bandwidth)?;
    Ok(Kde1D {
        samples: samples.to_vec(),
        bandwidth,
        support: None,
        mass: 1.0,
    })
}

fn check_inputs(samples: &[f64], bandwidth: f64) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::ModelFit("no samples".into()));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::ModelFit(format!("sample {x} is not finite")));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::ModelFit(format!(
            "bandwidth {bandwidth} is not positive"
        )));
    }
    Ok(())
}

impl Kde1D {
    /// KDE on `[lo, hi]` with reflection at both boundaries.
    pub fn reflected(samples: &[f64], bandwidth: f64, lo: f64, hi: f64) -> Result<Kde1D> {
        check_inputs(samples, bandwidth)?;
        if !(lo < hi) {
            return Err(Error::ModelFit(format!("empty support [{lo}, {hi}]")));
        }
        let samples: Vec<f64> = samples.iter().map(|x| x.clamp(lo, hi)).collect();
        let mut kde = Kde1D {
            samples,
            bandwidth,
            support: Some((lo, hi)),
            mass: 1.0,
        };
        kde.mass = kde.raw_cdf(hi) - kde.raw_cdf(lo);
        Ok(kde)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    fn for_each_center(&self, mut f: impl FnMut(f64)) {
        for &x in &self.samples {
            f(x);
            if let Some((lo, hi)) = self.support {
                f(2.0 * lo - x);
                f(2.0 * hi - x);
            }
        }
    }

    /// Σ Φ((x - c)/h) / n over all kernel centres, before renormalization.
    fn raw_cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_center(|c| acc += std_normal_cdf((x - c) / self.bandwidth));
        acc / self.samples.len() as f64
    }

    pub fn density(&self, x: f64) -> f64 {
        if let Some((lo, hi)) = self.support {
            if x < lo || x > hi {
                return 0.0;
            }
        }
        let h = self.bandwidth;
        let mut acc = 0.0;
        self.for_each_center(|c| acc += std_normal_pdf((x - c) / h));
        acc / (self.samples.len() as f64 * h * self.mass)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.support {
            None => self.raw_cdf(x),
            Some((lo, hi)) => {
                if x <= lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    ((self.raw_cdf(x) - self.raw_cdf(lo)) / self.mass).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// `∫ₐᵇ x·f(x) dx`, clipped to the support.
    pub fn partial_expectation(&self, a: f64, b: f64) -> f64 {
        let (a, b) = match self.support {
            Some((lo, hi)) => (a.max(lo), b.min(hi)),
            None => (a, b),
        };
        if !(a < b) {
            return 0.0;
        }
        let h = self.bandwidth;
        let mut acc = 0.0;
        self.for_each_center(|c| {
            let (za, zb) = ((a - c) / h, (b - c) / h);
            let (pa, pb) = (bounded_pdf(za), bounded_pdf(zb));
            acc += c * (std_normal_cdf(zb) - std_normal_cdf(za)) + h * (pa - pb);
        });
        acc / (self.samples.len() as f64 * self.mass)
    }

    pub fn mean(&self) -> f64 {
        match self.support {
            None => self.samples.iter().sum::<f64>() / self.samples.len() as f64,
            Some((lo, hi)) => self.partial_expectation(lo, hi),
        }
    }

    /// `E[X | X > a]`, or `None` when no mass is left above `a`.
    pub fn conditional_mean_above(&self, a: f64) -> Option<f64> {
        let tail = 1.0 - self.cdf(a);
        if tail < 1e-12 {
            return None;
        }
        let upper = self.support.map_or(f64::INFINITY, |(_, hi)| hi);
        Some(self.partial_expectation(a, upper) / tail)
    }
}

fn bounded_pdf(z: f64) -> f64 {
    if z.is_finite() {
        std_normal_pdf(z)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule; independent of the closed-form CDFs above.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn single_sample_peak() {
        let kde = fit_kde(&[0.0], 1.0).unwrap();
        assert!((kde.density(0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let kde = fit_kde(&[-1.5, 1.5], 0.7).unwrap();
        assert_eq!(kde.density(0.3), kde.density(-0.3));
        let flipped = fit_kde(&[1.5, -1.5], 0.7).unwrap();
        assert_eq!(kde.density(0.0), flipped.density(0.0));
    }

    #[test]
    fn integrates_to_one() {
        let samples = [1.0, 2.5, 2.7, 4.0, 9.0];
        let h = 0.8;
        let kde = fit_kde(&samples, h).unwrap();
        let total = simpson(|x| kde.density(x), 1.0 - 8.0 * h, 9.0 + 8.0 * h, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn reflected_integrates_to_one_on_support() {
        let samples = [3.0, 20.0, 700.0, 1430.0, 1440.0];
        let kde = Kde1D::reflected(&samples, 40.0, 0.0, 1440.0).unwrap();
        let total = simpson(|x| kde.density(x), 0.0, 1440.0, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert_eq!(kde.cdf(1440.0), 1.0);
        assert_eq!(kde.cdf(0.0), 0.0);
        let mid = simpson(|x| kde.density(x), 0.0, 500.0, 20_000);
        assert!((kde.cdf(500.0) - mid).abs() < 1e-6);
    }

    #[test]
    fn partial_expectation_matches_quadrature() {
        let kde = Kde1D::reflected(&[100.0, 400.0, 420.0, 900.0], 60.0, 0.0, 1440.0).unwrap();
        let q = simpson(|x| x * kde.density(x), 300.0, 800.0, 20_000);
        assert!((kde.partial_expectation(300.0, 800.0) - q).abs() < 1e-5);
        let tail = simpson(|x| x * kde.density(x), 500.0, 1440.0, 20_000) / (1.0 - kde.cdf(500.0));
        assert!((kde.conditional_mean_above(500.0).unwrap() - tail).abs() < 1e-5);

        let free = fit_kde(&[1.0, 3.0], 0.5).unwrap();
        assert!((free.partial_expectation(f64::NEG_INFINITY, f64::INFINITY) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_fits() {
        assert!(fit_kde(&[], 1.0).is_err());
        assert!(fit_kde(&[1.0], 0.0).is_err());
        assert!(fit_kde(&[f64::NAN], 1.0).is_err());
        assert!(Kde1D::reflected(&[1.0], 1.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn silverman_reference_value() {
        // n = 5, sd = 1.5811, IQR = 2 -> min(1.5811, 1.4925) = 1.4925
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let expected = 0.9 * (2.0 / 1.34) * libm::pow(5.0, -0.2);
        assert!((h - expected).abs() < 1e-12);
        assert_eq!(silverman_bandwidth(&[3.0]), 0.0);
        assert_eq!(
            BandwidthRule::Silverman { floor: 5.0 }.bandwidth(&[3.0, 3.0]),
            5.0
        );
    }
}
