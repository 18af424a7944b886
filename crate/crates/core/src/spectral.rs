//! Spectra and harmonic fits of sampled traces.
//!
//! Coefficients follow the pole convention used everywhere else: a trace
//! `Σ c e^{-iωt}` shows `c` at `ω`, so `a·cos(ωt)` shows `a/2` at `±ω`.
//! Transforms run in `f64` whatever the trace scalar is.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::dynamics::EntanglementTrace;
use crate::scalar::{fmt17, Real};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("trace has {len} samples; at least {min} needed")]
    TooShort { len: usize, min: usize },
    #[error("time grid is not uniform at sample {index}")]
    NonUniformGrid { index: usize },
    #[error("frequency {omega} outside [0, {nyquist}]")]
    FrequencyOutOfRange { omega: f64, nyquist: f64 },
    #[error("least-squares fit is ill-conditioned (singular value ratio {ratio:e})")]
    IllConditioned { ratio: f64 },
}

/// Minimum trace length for a spectrum.
pub const MIN_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    /// Hann taper, normalized by its coherent gain.
    Hann,
}

/// Two-sided spectrum on the grid `ω_k = 2πk/T`, ascending in `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    omegas: Vec<f64>,
    coefficients: Vec<Complex<f64>>,
    duration: f64,
    dt: f64,
}

impl Spectrum {
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn coefficients(&self) -> &[Complex<f64>] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// `T = M·dt`.
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Bin spacing `2π/T`.
    pub fn resolution(&self) -> f64 {
        2.0 * PI / self.duration
    }

    /// Index of the bin nearest `omega`.
    pub fn nearest_bin(&self, omega: f64) -> usize {
        let k = (omega / self.resolution()).round() as i64;
        let zero = self.zero_bin() as i64;
        (zero + k).clamp(0, self.len() as i64 - 1) as usize
    }

    pub fn zero_bin(&self) -> usize {
        self.len() / 2
    }

    pub fn coefficient_at(&self, omega: f64) -> Complex<f64> {
        self.coefficients[self.nearest_bin(omega)]
    }

    /// `(ω, |c|)` for `ω ≥ 0`.
    pub fn half_spectrum(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let z = self.zero_bin();
        self.omegas[z..].iter().zip(&self.coefficients[z..]).map(|(w, c)| (*w, c.norm()))
    }

    /// CSV `omega,magnitude` over `ω ≥ 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,magnitude\n");
        for (w, m) in self.half_spectrum() {
            let _ = writeln!(out, "{},{}", fmt17(w), fmt17(m));
        }
        out
    }
}

fn check_grid<T: Real>(trace: &EntanglementTrace<T>, min: usize) -> Result<(Vec<f64>, Vec<f64>, f64), SpectralError> {
    let m = trace.len();
    if m < min || trace.times.len() != m {
        return Err(SpectralError::TooShort { len: m, min });
    }
    let t: Vec<f64> = trace.times.iter().map(|x| x.to_f64_lossy()).collect();
    let q: Vec<f64> = trace.values.iter().map(|x| x.to_f64_lossy()).collect();
    let dt = t[1] - t[0];
    if !(dt > 0.0) {
        return Err(SpectralError::NonUniformGrid { index: 1 });
    }
    for (j, tj) in t.iter().enumerate() {
        if (tj - t[0] - j as f64 * dt).abs() > 1e-6 * dt {
            return Err(SpectralError::NonUniformGrid { index: j });
        }
    }
    Ok((t, q, dt))
}

/// Rectangular-window spectrum.
pub fn dft_spectrum<T: Real>(trace: &EntanglementTrace<T>) -> Result<Spectrum, SpectralError> {
    dft_spectrum_with(trace, Window::Rectangular)
}

/// `c(ω_k) = Σ_j w_j q_j e^{+iω_k t_j} / Σ_j w_j`.
pub fn dft_spectrum_with<T: Real>(trace: &EntanglementTrace<T>, window: Window) -> Result<Spectrum, SpectralError> {
    let (t, q, dt) = check_grid(trace, MIN_SAMPLES)?;
    let m = q.len();
    let weights: Vec<f64> = match window {
        Window::Rectangular => vec![1.0; m],
        Window::Hann => (0..m).map(|j| 0.5 * (1.0 - (2.0 * PI * j as f64 / m as f64).cos())).collect(),
    };
    let gain: f64 = weights.iter().sum();
    let mut buf: Vec<Complex<f64>> = q.iter().zip(&weights).map(|(x, w)| Complex::new(x * w, 0.0)).collect();
    // the inverse transform carries the e^{+i...} kernel
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);

    let duration = m as f64 * dt;
    let lo = -((m / 2) as i64);
    let mut omegas = Vec::with_capacity(m);
    let mut coefficients = Vec::with_capacity(m);
    for k in lo..lo + m as i64 {
        let omega = 2.0 * PI * k as f64 / duration;
        let c = buf[k.rem_euclid(m as i64) as usize] / gain;
        // shift from a grid starting at t₀ ≠ 0
        let (s, co) = (omega * t[0]).sin_cos();
        omegas.push(omega);
        coefficients.push(c * Complex::new(co, s));
    }
    Ok(Spectrum {
        omegas,
        coefficients,
        duration,
        dt,
    })
}

/// Fitted `a·cos(ωt + φ)` with `a ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Joint fit result: constant offset plus one component per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFit {
    pub offset: f64,
    pub components: Vec<Component>,
    /// Root-mean-square residual.
    pub residual: f64,
}

/// Singular value ratio below which a fit is refused.
pub const CONDITION_FLOOR: f64 = 1e-10;

/// Least-squares fit of `c₀ + a cos(ω* t + φ)`. At `ω* = 0` the model
/// degenerates to a constant; the amplitude is then `|mean|` and the phase
/// `0` or `π` by its sign.
pub fn extract_component<T: Real>(trace: &EntanglementTrace<T>, omega: f64) -> Result<Component, SpectralError> {
    let (_, q, dt) = check_grid(trace, 3)?;
    let nyquist = PI / dt;
    if !(0.0..=nyquist * (1.0 + 1e-12)).contains(&omega) {
        return Err(SpectralError::FrequencyOutOfRange { omega, nyquist });
    }
    if omega == 0.0 {
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        return Ok(Component {
            omega,
            amplitude: mean.abs(),
            phase: if mean < 0.0 { PI } else { 0.0 },
        });
    }
    Ok(fit_components(trace, &[omega])?.components[0])
}

/// Joint least-squares fit of `c₀ + Σ_k a_k cos(ω_k t + φ_k)`; every `ω_k`
/// must be positive and within Nyquist.
pub fn fit_components<T: Real>(trace: &EntanglementTrace<T>, omegas: &[f64]) -> Result<HarmonicFit, SpectralError> {
    let (t, q, dt) = check_grid(trace, 1 + 2 * omegas.len())?;
    let nyquist = PI / dt;
    for &w in omegas {
        if !(w > 0.0 && w <= nyquist * (1.0 + 1e-12)) {
            return Err(SpectralError::FrequencyOutOfRange { omega: w, nyquist });
        }
    }
    let m = t.len();
    let cols = 1 + 2 * omegas.len();
    let design = DMatrix::from_fn(m, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (s, co) = (omegas[(c - 1) / 2] * t[r]).sin_cos();
            if c % 2 == 1 {
                co
            } else {
                s
            }
        }
    });
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = smin / smax;
    if !(ratio > CONDITION_FLOOR) {
        return Err(SpectralError::IllConditioned { ratio });
    }
    let rhs = DVector::from_vec(q);
    let x = svd.solve(&rhs, 0.0).map_err(|_| SpectralError::IllConditioned { ratio })?;
    let resid = &design * &x - &rhs;
    let components = omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            let (a, b) = (x[1 + 2 * k], x[2 + 2 * k]);
            // a cos + b sin = A cos(ωt + φ) with A cos φ = a, A sin φ = −b
            Component {
                omega: w,
                amplitude: a.hypot(b),
                phase: (-b).atan2(a),
            }
        })
        .collect();
    Ok(HarmonicFit {
        offset: x[0],
        components,
        residual: (resid.norm_squared() / m as f64).sqrt(),
    })
}

/// Single-component fit at the strongest frequency within
/// `[omega − halfwidth, omega + halfwidth]`. The search scans the projection
/// `|Σ (q − q̄) e^{iωt}|` on a grid finer than the resolution, then refines
/// the best cell by golden section.
pub fn refine_component<T: Real>(
    trace: &EntanglementTrace<T>,
    omega: f64,
    halfwidth: f64,
) -> Result<Component, SpectralError> {
    let (t, mut q, dt) = check_grid(trace, 3)?;
    let nyquist = PI / dt;
    let lo = (omega - halfwidth.abs()).max(0.0);
    let hi = (omega + halfwidth.abs()).min(nyquist);
    if !(lo < hi) {
        return extract_component(trace, omega.clamp(0.0, nyquist));
    }
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    q.iter_mut().for_each(|x| *x -= mean);
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&tk, &qk) in t.iter().zip(&q) {
            let (s, c) = (w * tk).sin_cos();
            re += qk * c;
            im += qk * s;
        }
        re * re + im * im
    };
    let span = t[t.len() - 1] - t[0];
    let step = (2.0 * PI / span) / 8.0;
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let step = (hi - lo) / cells as f64;
    let best = (0..=cells)
        .map(|i| lo + step * i as f64)
        .map(|w| (w, power(w)))
        .fold((omega, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (power(x1), power(x2));
    for _ in 0..40 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = power(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = power(x2);
        }
    }
    let w = 0.5 * (a + b);
    if w > 0.0 {
        fit_components(trace, &[w]).map(|f| f.components[0])
    } else {
        extract_component(trace, 0.0)
    }
}

/// Total amplitude of the lines within `[omega − halfwidth, omega + halfwidth]`.
///
/// Lines are found one at a time with [`refine_component`] on the residual
/// of a joint fit, up to `max_lines`, stopping once a new line carries less
/// than `floor` times the first. A line split into a multiplet by weak
/// couplings elsewhere thus reports the weight of the whole multiplet.
pub fn line_weight<T: Real>(
    trace: &EntanglementTrace<T>,
    omega: f64,
    halfwidth: f64,
    max_lines: usize,
    floor: f64,
) -> Result<HarmonicFit, SpectralError> {
    let first = refine_component(trace, omega, halfwidth)?;
    let mut omegas = vec![first.omega];
    let mut fit = fit_components(trace, &omegas)?;
    let times: Vec<f64> = trace.times.iter().map(|t| t.to_f64_lossy()).collect();
    let values: Vec<f64> = trace.values.iter().map(|q| q.to_f64_lossy()).collect();
    let min_gap = PI / (times[times.len() - 1] - times[0]);
    while omegas.len() < max_lines.max(1) {
        let residual = EntanglementTrace {
            times: times.clone(),
            values: values
                .iter()
                .zip(&times)
                .map(|(&q, &t)| {
                    q - fit.offset
                        - fit
                            .components
                            .iter()
                            .map(|c| c.amplitude * (c.omega * t + c.phase).cos())
                            .sum::<f64>()
                })
                .collect(),
        };
        let next = refine_component(&residual, omega, halfwidth)?;
        if next.amplitude < floor * first.amplitude || omegas.iter().any(|w| (w - next.omega).abs() < min_gap) {
            break;
        }
        omegas.push(next.omega);
        match fit_components(trace, &omegas) {
            Ok(f) => fit = f,
            Err(SpectralError::IllConditioned { .. }) => {
                omegas.pop();
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(fit)
}

/// A local maximum of `|c(ω)|`, `ω ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub omega: f64,
    pub magnitude: f64,
}

/// Peaks below this fraction of the largest bin are ignored as round-off.
pub const PEAK_FLOOR: f64 = 1e-10;

/// Up to `count` local maxima of the half spectrum, strongest first.
pub fn dominant_peaks(spectrum: &Spectrum, count: usize, exclude_dc: bool) -> Vec<Peak> {
    let half: Vec<(f64, f64)> = spectrum.half_spectrum().collect();
    let top = spectrum.coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = top * PEAK_FLOOR;
    let n = half.len();
    let mut peaks: Vec<Peak> = (0..n)
        .filter(|&i| !(exclude_dc && i == 0))
        .filter(|&i| {
            let m = half[i].1;
            // at ω = 0 the left neighbour mirrors the right one
            let left = if i == 0 { half.get(1).map_or(0.0, |p| p.1) } else { half[i - 1].1 };
            let right = half.get(i + 1).map_or(0.0, |p| p.1);
            m > floor && m >= left && m > right
        })
        .map(|i| Peak {
            omega: half[i].0,
            magnitude: half[i].1,
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks.truncate(count);
    peaks
}
