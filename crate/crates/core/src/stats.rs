//! Ensemble statistics under uniform disorder on `[−W, W]`.
//!
//! Second-order frequencies are `ω = |Δh − J|` (bulk) or `|Δh − J/2|` (edge)
//! and amplitudes `a = J²/(2Δh²)`, where `Δh` is the difference of two
//! independent fields and so has the triangular density
//! `1/(2W) − |x|/(4W²)` on `[−2W, 2W]`. The densities below are exact
//! transformations of that law.

use std::fmt::Write as _;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::chain::mix_seed;
use crate::scalar::{fmt17, Real};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("{what} is outside the domain of the density: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid parameters: J = {coupling}, W = {disorder}")]
    Parameters { coupling: f64, disorder: f64 },
    #[error("frequency density needs J ≤ W (effective J = {coupling}, W = {disorder})")]
    NotPerturbative { coupling: f64, disorder: f64 },
    #[error("perturbation order must be a positive even number, got {0}")]
    OddOrder(u32),
    #[error("need at least {needed} finite samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("comparison window [{lo}, {hi}] holds no mass")]
    EmptyWindow { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdfKind {
    FrequencyBulk,
    FrequencyEdge,
    Amplitude,
}

/// Closed-form second-order density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPdf<T> {
    kind: PdfKind,
    coupling: T,
    disorder: T,
}

impl<T: Real> AnalyticPdf<T> {
    pub fn new(kind: PdfKind, coupling: T, disorder: T) -> Result<Self, StatsError> {
        if !(coupling > T::zero()) || !(disorder > T::zero()) || !coupling.is_finite() || !disorder.is_finite() {
            return Err(StatsError::Parameters {
                coupling: coupling.to_f64_lossy(),
                disorder: disorder.to_f64_lossy(),
            });
        }
        let pdf = Self { kind, coupling, disorder };
        if kind != PdfKind::Amplitude && pdf.effective_coupling() > disorder {
            return Err(StatsError::NotPerturbative {
                coupling: pdf.effective_coupling().to_f64_lossy(),
                disorder: disorder.to_f64_lossy(),
            });
        }
        Ok(pdf)
    }

    pub fn kind(&self) -> PdfKind {
        self.kind
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn disorder(&self) -> T {
        self.disorder
    }

    /// `J` for bulk spins, `J/2` at the edge; the frequency shift.
    pub fn effective_coupling(&self) -> T {
        match self.kind {
            PdfKind::FrequencyEdge => self.coupling * T::half(),
            _ => self.coupling,
        }
    }

    /// Closed support `[lo, hi]`; `hi` is infinite for amplitudes.
    pub fn support(&self) -> (T, T) {
        match self.kind {
            PdfKind::Amplitude => (amplitude_floor(self.coupling, self.disorder), T::max_value().unwrap_or(T::zero())),
            _ => (T::zero(), T::lit(2.0) * self.disorder + self.effective_coupling()),
        }
    }

    /// Density at `x`; zero off the support (including negative `x`).
    pub fn density(&self, x: T) -> T {
        let (j, w) = (self.effective_coupling(), self.disorder);
        match self.kind {
            PdfKind::Amplitude => {
                if x < amplitude_floor(j, w) {
                    return T::zero();
                }
                let r = w / j;
                (r * (T::lit(8.0) * x).sqrt() - T::one()) / (T::lit(8.0) * (r * x) * (r * x))
            }
            _ => {
                let two_w = T::lit(2.0) * w;
                let w2 = w * w;
                if x < T::zero() || x > two_w + j {
                    T::zero()
                } else if x <= j {
                    T::one() / w - j / (T::lit(2.0) * w2)
                } else if x <= two_w - j {
                    T::one() / w - x / (T::lit(2.0) * w2)
                } else {
                    (j + two_w - x) / (T::lit(4.0) * w2)
                }
            }
        }
    }

    /// Cumulative distribution, exact.
    pub fn cdf(&self, x: T) -> T {
        let (j, w) = (self.effective_coupling(), self.disorder);
        match self.kind {
            PdfKind::Amplitude => amplitude_cdf(x, j, w),
            _ => {
                let two_w = T::lit(2.0) * w;
                let w2 = w * w;
                let first = |y: T| y * (T::one() / w - j / (T::lit(2.0) * w2));
                if x <= T::zero() {
                    T::zero()
                } else if x <= j {
                    first(x)
                } else if x <= two_w - j {
                    first(j) + (x - j) / w - (x * x - j * j) / (T::lit(4.0) * w2)
                } else if x < two_w + j {
                    let tail = two_w + j - x;
                    T::one() - tail * tail / (T::lit(8.0) * w2)
                } else {
                    T::one()
                }
            }
        }
    }

    /// Probability of `[lo, hi]`.
    pub fn mass(&self, lo: T, hi: T) -> T {
        if hi <= lo {
            T::zero()
        } else {
            self.cdf(hi) - self.cdf(lo)
        }
    }

    /// `∫ density` by double-exponential quadrature, piecewise over the
    /// smooth branches. Amplitudes use `a = a₀/y²`, which maps the
    /// half-line onto `(0, 1]`.
    pub fn total_mass(&self) -> f64 {
        let tol = 1e-14;
        match self.kind {
            PdfKind::Amplitude => {
                let a0 = amplitude_floor(self.coupling, self.disorder).to_f64_lossy();
                let f = |y: f64| {
                    if y <= 0.0 {
                        return 0.0;
                    }
                    let a = T::lit(a0 / (y * y));
                    self.density(a).to_f64_lossy() * 2.0 * a0 / (y * y * y)
                };
                quadrature::integrate(f, 0.0, 1.0, tol).integral
            }
            _ => {
                let j = self.effective_coupling().to_f64_lossy();
                let w = self.disorder.to_f64_lossy();
                let f = |x: f64| self.density(T::lit(x)).to_f64_lossy();
                [(0.0, j), (j, 2.0 * w - j), (2.0 * w - j, 2.0 * w + j)]
                    .iter()
                    .map(|&(a, b)| quadrature::integrate(f, a, b, tol).integral)
                    .sum()
            }
        }
    }
}

/// `a₀ = (J/W)²/8`.
pub fn amplitude_floor<T: Real>(coupling: T, disorder: T) -> T {
    let r = coupling / disorder;
    r * r / T::lit(8.0)
}

/// Most probable amplitude `(√2 J / 3W)²`.
pub fn amplitude_mode<T: Real>(coupling: T, disorder: T) -> T {
    let x = T::lit(2.0).sqrt() * coupling / (T::lit(3.0) * disorder);
    x * x
}

/// Second-order frequency density; `edge` halves the first-order shift.
pub fn pdf_frequency<T: Real>(omega: T, coupling: T, disorder: T, edge: bool) -> Result<T, StatsError> {
    if omega < T::zero() || !omega.is_finite() {
        return Err(StatsError::Domain {
            what: "frequency",
            value: omega.to_f64_lossy(),
        });
    }
    let kind = if edge { PdfKind::FrequencyEdge } else { PdfKind::FrequencyBulk };
    Ok(AnalyticPdf::new(kind, coupling, disorder)?.density(omega))
}

/// Second-order amplitude density; zero below `a₀`.
pub fn pdf_amplitude<T: Real>(a: T, coupling: T, disorder: T) -> Result<T, StatsError> {
    if !(a > T::zero()) {
        return Err(StatsError::Domain {
            what: "amplitude",
            value: a.to_f64_lossy(),
        });
    }
    Ok(AnalyticPdf::new(PdfKind::Amplitude, coupling, disorder)?.density(a))
}

/// `R_A(a) = (1 − J/(2W√(2a)))²` for `a ≥ a₀`; 0 below.
pub fn cdf_amplitude<T: Real>(a: T, coupling: T, disorder: T) -> T {
    amplitude_cdf(a, coupling, disorder)
}

fn amplitude_cdf<T: Real>(a: T, coupling: T, disorder: T) -> T {
    if !(a > amplitude_floor(coupling, disorder)) {
        return T::zero();
    }
    let u = T::one() - coupling / (T::lit(2.0) * disorder * (T::lit(2.0) * a).sqrt());
    u * u
}

/// Leading-order critical probability of order `2n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalProbability {
    pub order: u32,
    /// `(J/W)^{2n} (2n ln(2W/J))^{2n−1} / (2n−1)!`
    pub value: f64,
    /// `ln` of `value`.
    pub ln_value: f64,
    /// Stirling form `2n ln(J/W) + (2n−1)(ln(2n ln(2W/J)/(2n−1)) + 1)`, linear in `2n`
    /// up to the slowly varying logarithm.
    pub ln_linear: f64,
}

pub fn critical_probability(order: u32, coupling: f64, disorder: f64) -> Result<CriticalProbability, StatsError> {
    if order == 0 || order % 2 == 1 {
        return Err(StatsError::OddOrder(order));
    }
    if !(coupling > 0.0 && disorder > coupling / 2.0) {
        return Err(StatsError::Parameters { coupling, disorder });
    }
    let m = order as f64;
    let ln_ratio = (coupling / disorder).ln();
    let big_l = (2.0 * disorder / coupling).ln();
    let ln_fact: f64 = (1..order).map(|k| (k as f64).ln()).sum();
    let ln_value = m * ln_ratio + (m - 1.0) * (m * big_l).ln() - ln_fact;
    let ln_linear = m * ln_ratio + (m - 1.0) * ((m * big_l / (m - 1.0)).ln() + 1.0);
    Ok(CriticalProbability {
        order,
        value: ln_value.exp(),
        ln_value,
        ln_linear,
    })
}

/// Monte Carlo estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub hits: u64,
}

impl McEstimate {
    pub fn ln_estimate(&self) -> f64 {
        self.estimate.ln()
    }
}

const MC_BLOCK: u64 = 1 << 16;

/// `P{Π_{m=1}^{2n} |Δh_m / J| ≤ 1}` with independent `Δh_m = h − h'`,
/// `h, h' ~ U[−W, W]`. Blocks of samples draw from independent sub-seeds and
/// are reduced in block order, so the result does not depend on the thread
/// count.
pub fn critical_probability_mc(
    order: u32,
    coupling: f64,
    disorder: f64,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, StatsError> {
    if order == 0 || order % 2 == 1 {
        return Err(StatsError::OddOrder(order));
    }
    if !(coupling > 0.0 && disorder > 0.0) {
        return Err(StatsError::Parameters { coupling, disorder });
    }
    if samples == 0 {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 });
    }
    let field = Uniform::new_inclusive(-disorder, disorder);
    let blocks = samples.div_ceil(MC_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, b));
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut prod = 1.0f64;
                for _ in 0..order {
                    prod *= ((field.sample(&mut rng) - field.sample(&mut rng)) / coupling).abs();
                }
                hits += u64::from(prod <= 1.0);
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let n = samples as f64;
    let p = hits as f64 / n;
    Ok(McEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        samples,
        hits,
    })
}

/// Equal-count binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinPolicy {
    pub bins: usize,
}

impl Default for BinPolicy {
    fn default() -> Self {
        Self { bins: 64 }
    }
}

/// Density histogram over adaptive bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    edges: Vec<T>,
    densities: Vec<T>,
    samples: usize,
}

impl<T: Real> Histogram<T> {
    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn densities(&self) -> &[T] {
        &self.densities
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Restores the sample count, which the CSV form does not carry.
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    /// `Σ density · width`.
    pub fn total_mass(&self) -> T {
        (0..self.bins()).fold(T::zero(), |acc, i| acc + self.densities[i] * (self.edges[i + 1] - self.edges[i]))
    }

    /// Piecewise-linear empirical CDF.
    pub fn cdf(&self, x: T) -> T {
        let mut acc = T::zero();
        for i in 0..self.bins() {
            let (lo, hi) = (self.edges[i], self.edges[i + 1]);
            if x <= lo {
                break;
            }
            acc += self.densities[i] * (x.min(hi) - lo);
        }
        acc
    }

    /// CSV `bin_lo,bin_hi,density`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,density\n");
        for i in 0..self.bins() {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt17(self.edges[i]),
                fmt17(self.edges[i + 1]),
                fmt17(self.densities[i])
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Option<Self> {
        let mut edges = Vec::new();
        let mut densities = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let mut it = line.split(',').map(|f| f.trim().parse::<f64>());
            let (lo, hi, d) = (it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?);
            if edges.is_empty() {
                edges.push(T::lit(lo));
            }
            edges.push(T::lit(hi));
            densities.push(T::lit(d));
        }
        (!densities.is_empty()).then_some(Self {
            edges,
            densities,
            samples: 0,
        })
    }
}

/// Bins holding (nearly) equal sample counts; interior edges sit midway
/// between neighbouring order statistics. Tied edges merge their bins.
pub fn build_histogram<T: Real>(samples: &[T], policy: &BinPolicy) -> Result<Histogram<T>, StatsError> {
    let bins = policy.bins.max(1);
    let mut sorted: Vec<T> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if sorted.len() < bins.max(2) || sorted.len() != samples.len() {
        return Err(StatsError::TooFewSamples {
            needed: bins.max(2),
            got: sorted.len(),
        });
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    let mut edges = vec![sorted[0]];
    let mut cuts = vec![0usize];
    for b in 1..bins {
        let idx = b * n / bins;
        let edge = (sorted[idx - 1] + sorted[idx]) * T::half();
        if edge > *edges.last().expect("nonempty") {
            edges.push(edge);
            cuts.push(idx);
        }
    }
    if sorted[n - 1] > *edges.last().expect("nonempty") {
        edges.push(sorted[n - 1]);
        cuts.push(n);
    } else {
        // every remaining sample equals the last edge: fold into the final bin
        *cuts.last_mut().expect("nonempty") = n;
    }
    if edges.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: 1 });
    }
    let total = T::lit(n as f64);
    let densities = (0..edges.len() - 1)
        .map(|i| T::lit((cuts[i + 1] - cuts[i]) as f64) / (total * (edges[i + 1] - edges[i])))
        .collect();
    Ok(Histogram {
        edges,
        densities,
        samples: n,
    })
}

/// Histogram-versus-density discrepancy on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub total_variation: f64,
    pub ks: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

impl Comparison {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "tv": self.total_variation,
            "ks": self.ks,
            "window": [self.window.0, self.window.1],
            "samples": self.samples,
        })
    }
}

/// Compares `h` with `pdf` on `window`, both renormalized to unit mass there.
/// TV uses the exact density mass of each bin (bin average rather than the
/// midpoint value); KS is taken over bin edges.
pub fn compare_histogram<T: Real>(
    h: &Histogram<T>,
    pdf: &AnalyticPdf<T>,
    window: (T, T),
) -> Result<Comparison, StatsError> {
    let (lo, hi) = window;
    let empty = || StatsError::EmptyWindow {
        lo: lo.to_f64_lossy(),
        hi: hi.to_f64_lossy(),
    };
    if !(hi > lo) {
        return Err(empty());
    }
    let h_lo = h.edges[0].max(lo);
    let h_hi = h.edges[h.bins()].min(hi);
    let h_total = h.cdf(hi) - h.cdf(lo);
    let p_total = pdf.mass(lo, hi);
    if !(h_total > T::zero()) || !(p_total > T::zero()) {
        return Err(empty());
    }

    let mut tv = T::zero();
    for i in 0..h.bins() {
        let a = h.edges[i].max(lo);
        let b = h.edges[i + 1].min(hi);
        if b <= a {
            continue;
        }
        let hm = h.densities[i] * (b - a) / h_total;
        let pm = pdf.mass(a, b) / p_total;
        tv += (hm - pm).abs();
    }
    // density mass inside the window the histogram never reaches
    let outside = if h_hi > h_lo {
        pdf.mass(lo, h_lo) + pdf.mass(h_hi, hi)
    } else {
        p_total
    };
    tv = (tv + outside / p_total) * T::half();

    let mut ks = T::zero();
    let base_h = h.cdf(lo);
    let base_p = pdf.cdf(lo);
    let mut probe = |x: T| {
        let fh = (h.cdf(x) - base_h) / h_total;
        let fp = (pdf.cdf(x) - base_p) / p_total;
        ks = ks.max((fh - fp).abs());
    };
    probe(lo);
    for &e in h.edges.iter().filter(|&&e| e > lo && e < hi) {
        probe(e);
    }
    probe(hi);

    Ok(Comparison {
        total_variation: tv.to_f64_lossy(),
        ks: ks.to_f64_lossy(),
        window: (lo.to_f64_lossy(), hi.to_f64_lossy()),
        samples: h.samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn triangular_samples(n: usize, w: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-w..=w) - rng.gen_range(-w..=w)).collect()
    }

    #[test]
    fn frequency_density_examples() {
        assert!((pdf_frequency(0.0f64, 1.0, 10.0, false).unwrap() - 0.095).abs() < 1e-15);
        assert_eq!(pdf_frequency(21.5, 1.0, 10.0, false).unwrap(), 0.0);
        assert!(matches!(pdf_frequency(-0.1, 1.0, 10.0, false), Err(StatsError::Domain { .. })));
        assert!(pdf_frequency(0.0, 1.0, 10.0, true).unwrap() > 0.095);
        assert!(matches!(
            AnalyticPdf::new(PdfKind::FrequencyBulk, 2.0, 1.0),
            Err(StatsError::NotPerturbative { .. })
        ));
    }

    #[test]
    fn normalization() {
        for (j, w) in [(1.0f64, 10.0), (1.0, 20.0), (0.5, 3.0), (1.0, 1.0)] {
            for kind in [PdfKind::FrequencyBulk, PdfKind::FrequencyEdge, PdfKind::Amplitude] {
                let pdf = AnalyticPdf::new(kind, j, w).unwrap();
                assert!((pdf.total_mass() - 1.0).abs() <= 1e-9, "{kind:?} {j} {w}");
                let (_, hi) = pdf.support();
                if kind != PdfKind::Amplitude {
                    assert!((pdf.cdf(hi) - 1.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn frequency_breakpoints_are_continuous() {
        for edge in [false, true] {
            let kind = if edge { PdfKind::FrequencyEdge } else { PdfKind::FrequencyBulk };
            let pdf = AnalyticPdf::new(kind, 1.0f64, 10.0).unwrap();
            let j = pdf.effective_coupling();
            for x in [j, 20.0 - j] {
                let left = pdf.density(x);
                let right = pdf.density(x + 1e-13);
                assert!((left - right).abs() <= 1e-12);
                assert!((pdf.cdf(x) - pdf.cdf(x - 1e-13)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn amplitude_density_properties() {
        let (j, w) = (1.0f64, 10.0);
        let a0 = amplitude_floor(j, w);
        assert_eq!(pdf_amplitude(a0 * 0.99, j, w).unwrap(), 0.0);
        assert!(matches!(pdf_amplitude(0.0, j, w), Err(StatsError::Domain { .. })));
        assert_eq!(cdf_amplitude(a0, j, w), 0.0);
        assert!((cdf_amplitude(1e12f64, j, w) - 1.0).abs() < 1e-6);

        let mode = amplitude_mode(j, w);
        let at_mode = pdf_amplitude(mode, j, w).unwrap();
        for f in [0.98, 0.995, 1.005, 1.02] {
            assert!(pdf_amplitude(mode * f, j, w).unwrap() < at_mode);
        }

        for k in 0..40 {
            let a = a0 * 1.05 * 10f64.powf(k as f64 * 0.1);
            let h = a * 1e-5;
            let fd = (cdf_amplitude(a + h, j, w) - cdf_amplitude(a - h, j, w)) / (2.0 * h);
            let p = pdf_amplitude(a, j, w).unwrap();
            assert!(((fd - p) / p).abs() <= 1e-6, "a = {a}");
        }
    }

    #[test]
    fn amplitude_tail_law() {
        let (j, w) = (1.0, 10.0);
        let a = 1e4 * amplitude_floor(j, w);
        let tail = 2f64.sqrt() * j / (4.0 * w) * a.powf(-1.5);
        let p = pdf_amplitude(a, j, w).unwrap();
        assert!(((p - tail) / tail).abs() <= 0.01);
    }

    #[test]
    fn sampled_amplitudes_follow_density() {
        let (j, w) = (1.0, 10.0);
        let a: Vec<f64> = triangular_samples(100_000, w, 4)
            .into_iter()
            .map(|d| j * j / (2.0 * d * d))
            .collect();
        let a0 = amplitude_floor(j, w);
        assert!(a.iter().all(|&x| x >= a0));
        let h = build_histogram(&a, &BinPolicy::default()).unwrap();
        let pdf = AnalyticPdf::new(PdfKind::Amplitude, j, w).unwrap();
        let cmp = compare_histogram(&h, &pdf, (a0, f64::MAX)).unwrap();
        assert!(cmp.total_variation <= 0.05, "{cmp:?}");
        assert!(cmp.ks <= 0.05);
    }

    #[test]
    fn sampled_frequencies_follow_density() {
        let (j, w) = (1.0, 10.0);
        let d = triangular_samples(100_000, w, 5);
        for edge in [false, true] {
            let shift = if edge { j / 2.0 } else { j };
            let f: Vec<f64> = d.iter().map(|x| (x - shift).abs()).collect();
            let h = build_histogram(&f, &BinPolicy::default()).unwrap();
            let kind = if edge { PdfKind::FrequencyEdge } else { PdfKind::FrequencyBulk };
            let pdf = AnalyticPdf::new(kind, j, w).unwrap();
            let full = compare_histogram(&h, &pdf, (0.0, 2.0 * w + j)).unwrap();
            let windowed = compare_histogram(&h, &pdf, (5.0 * j, 2.0 * w + j)).unwrap();
            assert!(full.total_variation <= 0.03, "{full:?}");
            assert!(windowed.total_variation <= 0.05);
            assert!(windowed.ks <= 0.02);
        }
    }

    #[test]
    fn histogram_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let h = build_histogram(&u, &BinPolicy::default()).unwrap();
        assert_eq!(h.bins(), 64);
        assert!((h.total_mass() - 1.0).abs() <= 1e-12);
        assert!(h.densities().iter().all(|&d| d >= 0.0));
        let ks = (0..=100)
            .map(|k| k as f64 / 100.0)
            .map(|x| (h.cdf(x) - x).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.05);

        assert!(matches!(
            build_histogram(&u[..10], &BinPolicy::default()),
            Err(StatsError::TooFewSamples { .. })
        ));
        let tied = vec![1.0; 50].into_iter().chain((0..50).map(|k| k as f64)).collect::<Vec<_>>();
        let h = build_histogram(&tied, &BinPolicy { bins: 10 }).unwrap();
        assert!((h.total_mass() - 1.0).abs() < 1e-12);

        let back = Histogram::<f64>::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back.edges(), h.edges());
    }

    #[test]
    fn disjoint_window_is_an_error() {
        let u: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
        let h = build_histogram(&u, &BinPolicy::default()).unwrap();
        let pdf = AnalyticPdf::new(PdfKind::FrequencyBulk, 1.0, 10.0).unwrap();
        assert!(matches!(compare_histogram(&h, &pdf, (5.0, 21.0)), Err(StatsError::EmptyWindow { .. })));
        assert!(matches!(compare_histogram(&h, &pdf, (0.5, 0.5)), Err(StatsError::EmptyWindow { .. })));
    }

    #[test]
    fn critical_probability_leading_order() {
        let p2 = critical_probability(2, 1.0, 10.0).unwrap();
        assert!((p2.value - 0.01 * 2.0 * 20f64.ln()).abs() < 1e-15);
        let p4 = critical_probability(4, 1.0, 10.0).unwrap();
        let p6 = critical_probability(6, 1.0, 10.0).unwrap();
        assert!(p4.value < p2.value && p6.value < p4.value);
        let d1 = p4.ln_value - p2.ln_value;
        let d2 = p6.ln_value - 2.0 * p4.ln_value + p2.ln_value;
        assert!(d2.abs() < 0.5 * d1.abs());
        let l1 = p6.ln_linear - p4.ln_linear;
        assert!(l1 < 0.0);
        assert!(matches!(critical_probability(3, 1.0, 10.0), Err(StatsError::OddOrder(3))));
        assert!(matches!(critical_probability(0, 1.0, 10.0), Err(StatsError::OddOrder(0))));
    }

    #[test]
    fn monte_carlo_matches_triangular_integral() {
        // P{|x₁x₂| ≤ J²} with |xᵢ| of density 1/W − x/(2W²) on [0, 2W]
        let (j, w) = (1.0, 10.0);
        let g = |x: f64| 1.0 / w - x / (2.0 * w * w);
        let cdf = |y: f64| if y >= 2.0 * w { 1.0 } else { y / w - y * y / (4.0 * w * w) };
        let knee = j * j / (2.0 * w);
        let exact = quadrature::integrate(|x| g(x) * cdf(j * j / x), 0.0, knee, 1e-13).integral
            + quadrature::integrate(|x| g(x) * cdf(j * j / x), knee, 2.0 * w, 1e-13).integral;
        let mc = critical_probability_mc(2, j, w, 1_000_000, 3).unwrap();
        assert!((mc.estimate - exact).abs() < 4.0 * mc.std_error, "{mc:?} vs {exact}");
        let far = critical_probability_mc(2, 1.0, 1e9, 100_000, 3).unwrap();
        assert_eq!(far.estimate, 0.0);
        let p4 = critical_probability_mc(4, 1.0, 10.0, 1_000_000, 3).unwrap();
        let p6 = critical_probability_mc(6, 1.0, 10.0, 1_000_000, 3).unwrap();
        assert!(p4.estimate < mc.estimate && p6.estimate < p4.estimate);
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let a = critical_probability_mc(4, 1.0, 10.0, 300_000, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| critical_probability_mc(4, 1.0, 10.0, 300_000, 11).unwrap());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn frequency_cdf_matches_density(x in 0.0f64..22.0, w in 1.0f64..30.0, edge in any::<bool>()) {
            let kind = if edge { PdfKind::FrequencyEdge } else { PdfKind::FrequencyBulk };
            let pdf = AnalyticPdf::new(kind, 1.0, w).unwrap();
            let h = 1e-6;
            let lo = (x - h).max(0.0);
            let fd = (pdf.cdf(x + h) - pdf.cdf(lo)) / (x + h - lo);
            let mid = pdf.density((x + h + lo) / 2.0);
            prop_assert!((fd - mid).abs() <= 1e-6 / w + 1e-8);
            prop_assert!(pdf.density(x) >= 0.0);
        }
    }
}
