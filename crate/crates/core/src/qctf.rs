//! Frequency-domain entanglement algebra.
//!
//! Every Laplace-domain object of a pure state evolving under a
//! time-independent Hamiltonian is a finite sum of simple poles
//! `F(s) = Σ c / (s + iω)`, held here as a [`PoleSum`]. The `⋆` product of two
//! such sums adds frequencies and multiplies coefficients, which is the
//! s-domain image of a pointwise product in time. Contour integrals over the
//! structural variables reduce to selecting the coefficient of a given
//! exponent pair, so nothing in this module integrates numerically.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex;
use thiserror::Error;

use crate::dynamics::{split_amplitude, split_index, DynamicsError, EigenSystem, StateVector};
use crate::scalar::{cabs, czero, fmt17, phasor, Real};

#[derive(Debug, Error)]
pub enum QctfError {
    #[error("⋆ product would hold {terms} terms, above the cap {cap}; enable pruning or raise the cap")]
    TermOverflow { terms: usize, cap: usize },
    #[error("QCTF block needs about {bytes} bytes, above the memory cap {cap}")]
    MemoryCap { bytes: usize, cap: usize },
    #[error("entanglement pole sum is not real-valued: conjugate residue {residual:e}")]
    NotRealValued { residual: f64 },
    #[error("overlap ⟨A⁻|A⁺⟩ is undefined when a spin component vanishes")]
    UndefinedOverlap,
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One simple pole `c / (s + iω)`; its time-domain image is `c·e^{-iωt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole<T> {
    pub omega: T,
    pub coefficient: Complex<T>,
}

/// Growth control for `⋆`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsolidationPolicy<T> {
    /// Poles closer than this merge.
    pub freq_tol: T,
    /// Poles with `|c|` below this are dropped (and accounted).
    pub prune_floor: T,
    /// Largest raw term count a single `⋆` may produce.
    pub max_terms: usize,
}

impl<T: Real> ConsolidationPolicy<T> {
    /// Exact arithmetic: only identical frequencies merge, nothing is pruned.
    pub fn exact() -> Self {
        Self {
            freq_tol: T::zero(),
            prune_floor: T::zero(),
            max_terms: 1 << 24,
        }
    }

    /// Default chain policy: merge within `1e-9·J`, no pruning.
    pub fn for_coupling(coupling: T) -> Self {
        Self {
            freq_tol: T::lit(1e-9) * coupling,
            ..Self::exact()
        }
    }
}

impl<T: Real> Default for ConsolidationPolicy<T> {
    fn default() -> Self {
        Self::for_coupling(T::one())
    }
}

/// Finite pole sum, sorted ascending by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSum<T> {
    terms: Vec<Pole<T>>,
    real_valued: bool,
}

impl<T: Real> Default for PoleSum<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Real> PoleSum<T> {
    pub fn zero() -> Self {
        Self {
            terms: Vec::new(),
            real_valued: false,
        }
    }

    /// `1/s`: the unit step, identity of `⋆`.
    pub fn unit_step() -> Self {
        Self::from_terms([(T::zero(), Complex::new(T::one(), T::zero()))])
    }

    /// Builds a sum from `(ω, c)` pairs; identical frequencies are summed and
    /// exactly-zero coefficients dropped.
    pub fn from_terms<I: IntoIterator<Item = (T, Complex<T>)>>(terms: I) -> Self {
        let raw = terms
            .into_iter()
            .map(|(omega, coefficient)| Pole { omega, coefficient })
            .collect();
        merge_sorted(raw, T::zero(), T::zero()).0
    }

    pub fn terms(&self) -> &[Pole<T>] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Set once conjugate symmetry `(ω, c) ↔ (−ω, c*)` has been verified.
    pub fn is_real_valued(&self) -> bool {
        self.real_valued
    }

    /// Inverse Laplace transform at `t`: `Σ c·e^{-iωt}`.
    pub fn eval_time(&self, t: T) -> Complex<T> {
        self.terms
            .iter()
            .fold(czero(), |acc, p| acc + p.coefficient * phasor(p.omega * t))
    }

    /// `Σ |c|`, a bound on `|F(t)|` for every real `t`.
    pub fn total_mass(&self) -> T {
        self.terms.iter().fold(T::zero(), |a, p| a + cabs(p.coefficient))
    }

    /// `F*(s*)`: each `(ω, c)` becomes `(−ω, c*)`.
    pub fn conjugate(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .rev()
            .map(|p| Pole {
                omega: -p.omega,
                coefficient: p.coefficient.conj(),
            })
            .collect();
        Self {
            terms,
            real_valued: self.real_valued,
        }
    }

    /// Merges poles within `freq_tol` (coefficient sum at the amplitude-weighted
    /// mean frequency) and drops `|c| < prune_floor`. Returns the sum of dropped
    /// `|c|`, which bounds the time-domain change.
    pub fn consolidate(&self, freq_tol: T, prune_floor: T) -> (Self, T) {
        let (mut out, dropped) = merge_sorted(self.terms.clone(), freq_tol, prune_floor);
        out.real_valued = self.real_valued;
        (out, dropped)
    }

    /// `⋆` under the default policy.
    pub fn star(&self, other: &Self) -> Result<Self, QctfError> {
        Ok(self.star_with(other, &ConsolidationPolicy::default())?.0)
    }

    /// `{(ω₁,c₁)} ⋆ {(ω₂,c₂)} = {(ω₁+ω₂, c₁c₂)}` over all pairs, consolidated.
    pub fn star_with(&self, other: &Self, policy: &ConsolidationPolicy<T>) -> Result<(Self, T), QctfError> {
        let terms = self.len().saturating_mul(other.len());
        if terms > policy.max_terms {
            return Err(QctfError::TermOverflow {
                terms,
                cap: policy.max_terms,
            });
        }
        let mut raw = Vec::with_capacity(terms);
        for a in &self.terms {
            for b in &other.terms {
                raw.push(Pole {
                    omega: a.omega + b.omega,
                    coefficient: a.coefficient * b.coefficient,
                });
            }
        }
        Ok(merge_sorted(raw, policy.freq_tol, policy.prune_floor))
    }

    pub fn add(&self, other: &Self, freq_tol: T) -> Self {
        let mut raw = self.terms.clone();
        raw.extend_from_slice(&other.terms);
        merge_sorted(raw, freq_tol, T::zero()).0
    }

    pub fn sub(&self, other: &Self, freq_tol: T) -> Self {
        self.add(&other.scale(Complex::new(-T::one(), T::zero())), freq_tol)
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self::from_terms(self.terms.iter().map(|p| (p.omega, p.coefficient * factor)))
    }

    /// Sum of coefficients with `|ω − omega| ≤ tol`.
    pub fn coefficient_at(&self, omega: T, tol: T) -> Complex<T> {
        let start = self.terms.partition_point(|p| p.omega < omega - tol);
        self.terms[start..]
            .iter()
            .take_while(|p| p.omega <= omega + tol)
            .fold(czero(), |acc, p| acc + p.coefficient)
    }

    /// Largest `|c(ω) − c(−ω)*|` over all poles, matching frequencies within `tol`.
    pub fn conjugate_asymmetry(&self, tol: T) -> T {
        self.terms
            .iter()
            .map(|p| cabs(p.coefficient - self.coefficient_at(-p.omega, tol).conj()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Marks the sum real-valued if its conjugate asymmetry is within `threshold`.
    pub fn into_real_valued(mut self, freq_tol: T, threshold: T) -> Result<Self, QctfError> {
        let residual = self.conjugate_asymmetry(freq_tol);
        if residual > threshold {
            return Err(QctfError::NotRealValued {
                residual: residual.to_f64_lossy(),
            });
        }
        self.real_valued = true;
        Ok(self)
    }

    /// CSV `omega,re,im`, ascending in `omega`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,re,im\n");
        for p in &self.terms {
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt17(p.omega),
                fmt17(p.coefficient.re),
                fmt17(p.coefficient.im)
            );
        }
        out
    }
}

/// Free-function form of [`PoleSum::star`].
pub fn star_product<T: Real>(f: &PoleSum<T>, g: &PoleSum<T>) -> Result<PoleSum<T>, QctfError> {
    f.star(g)
}

fn merge_sorted<T: Real>(mut raw: Vec<Pole<T>>, freq_tol: T, prune_floor: T) -> (PoleSum<T>, T) {
    raw.sort_by(|a, b| a.omega.partial_cmp(&b.omega).expect("finite frequencies"));
    let mut terms: Vec<Pole<T>> = Vec::with_capacity(raw.len());
    let mut dropped = T::zero();
    let mut i = 0;
    while i < raw.len() {
        let anchor = raw[i].omega;
        let mut coef = czero();
        let mut weight = T::zero();
        let mut weighted = T::zero();
        let mut j = i;
        while j < raw.len() && raw[j].omega - anchor <= freq_tol {
            let w = cabs(raw[j].coefficient);
            coef += raw[j].coefficient;
            weight += w;
            weighted += w * raw[j].omega;
            j += 1;
        }
        let last = raw[j - 1].omega;
        let omega = if last == anchor || weight == T::zero() {
            anchor
        } else {
            (weighted / weight).clamp(anchor, last)
        };
        let mag = cabs(coef);
        if mag == T::zero() {
            // nothing to keep, nothing lost
        } else if mag < prune_floor {
            dropped += mag;
        } else {
            terms.push(Pole {
                omega,
                coefficient: coef,
            });
        }
        i = j;
    }
    (
        PoleSum {
            terms,
            real_valued: false,
        },
        dropped,
    )
}

/// State of the selected spin in the product basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn is_up(self) -> bool {
        matches!(self, Spin::Up)
    }
}

/// Laplace-domain amplitudes `c̃_{al}(s) = Σ_n ⟨al|n⟩⟨n|ψ₀⟩ / (s + iE_n)` for
/// every complement index `l` of one site.
#[derive(Debug, Clone)]
pub struct AmplitudeTable<T> {
    site: usize,
    up: Vec<PoleSum<T>>,
    down: Vec<PoleSum<T>>,
}

impl<T: Real> AmplitudeTable<T> {
    pub fn new(eig: &EigenSystem<T>, psi0: &StateVector<T>, site: usize) -> Result<Self, QctfError> {
        let n = eig.n_sites();
        if site == 0 || site > n {
            return Err(QctfError::SiteOutOfRange { site, n });
        }
        let d = 1usize << (n - 1);
        let overlaps = eig.project(psi0)?;
        let mut up: Vec<Vec<(T, Complex<T>)>> = vec![Vec::new(); d];
        let mut down: Vec<Vec<(T, Complex<T>)>> = vec![Vec::new(); d];
        for (block, ov) in eig.blocks().iter().zip(&overlaps) {
            for (c, w) in ov.iter().enumerate() {
                if *w == czero() {
                    continue;
                }
                let energy = block.energies()[c];
                for (r, &x) in block.indices().iter().enumerate() {
                    let v = block.vectors()[(r, c)];
                    if v == T::zero() {
                        continue;
                    }
                    let (is_up, l) = split_index(n, site, x);
                    let slot = if is_up { &mut up[l] } else { &mut down[l] };
                    slot.push((energy, *w * v));
                }
            }
        }
        Ok(Self {
            site,
            up: up.into_iter().map(PoleSum::from_terms).collect(),
            down: down.into_iter().map(PoleSum::from_terms).collect(),
        })
    }

    pub fn site(&self) -> usize {
        self.site
    }

    /// Complement dimension `d = 2^{N-1}`.
    pub fn complement_dim(&self) -> usize {
        self.up.len()
    }

    pub fn get(&self, spin: Spin, l: usize) -> &PoleSum<T> {
        match spin {
            Spin::Up => &self.up[l],
            Spin::Down => &self.down[l],
        }
    }

    /// `⟨a l|ρ̃(s)|b k⟩ = c̃_{al} ⋆ conj(c̃_{bk})`.
    pub fn density_element(
        &self,
        a: Spin,
        l: usize,
        b: Spin,
        k: usize,
        policy: &ConsolidationPolicy<T>,
    ) -> Result<PoleSum<T>, QctfError> {
        Ok(self.get(a, l).star_with(&self.get(b, k).conjugate(), policy)?.0)
    }

    /// Reduced block `ρ̃_{ab} = Σ_l c̃_{al} ⋆ conj(c̃_{bl})` and its dropped mass.
    pub fn reduced_element(&self, a: Spin, b: Spin, policy: &ConsolidationPolicy<T>) -> Result<(PoleSum<T>, T), QctfError> {
        let mut raw: Vec<Pole<T>> = Vec::new();
        let mut dropped = T::zero();
        for l in 0..self.complement_dim() {
            let (f, g) = (self.get(a, l), self.get(b, l));
            if f.is_empty() || g.is_empty() {
                continue;
            }
            let (prod, lost) = f.star_with(&g.conjugate(), policy)?;
            dropped += lost;
            raw.extend_from_slice(prod.terms());
            if raw.len() > policy.max_terms {
                return Err(QctfError::TermOverflow {
                    terms: raw.len(),
                    cap: policy.max_terms,
                });
            }
        }
        let (sum, lost) = merge_sorted(raw, policy.freq_tol, policy.prune_floor);
        Ok((sum, dropped + lost))
    }
}

/// `c̃_{al}(s)` for one basis label.
pub fn amplitude_polesum<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    site: usize,
    spin: Spin,
    l: usize,
) -> Result<PoleSum<T>, QctfError> {
    Ok(AmplitudeTable::new(eig, psi0, site)?.get(spin, l).clone())
}

/// Default memory ceiling for [`qctf_block`].
pub const DEFAULT_BLOCK_MEMORY_CAP: usize = 512 << 20;

/// Off-diagonal QCTF block: the pole sum multiplying `z_d^{l−k} z_a^{l+k}`
/// is `⟨+l|ρ̃(s)|−k⟩`.
#[derive(Debug, Clone)]
pub struct QctfBlock<T> {
    complement_dim: usize,
    entries: BTreeMap<(usize, usize), PoleSum<T>>,
}

impl<T: Real> QctfBlock<T> {
    pub fn complement_dim(&self) -> usize {
        self.complement_dim
    }

    /// Nonzero `(l, k)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &PoleSum<T>)> {
        self.entries.iter()
    }

    pub fn entry(&self, l: usize, k: usize) -> Option<&PoleSum<T>> {
        self.entries.get(&(l, k))
    }

    /// Exponents `(l − k, l + k)` of `(z_d, z_a)` carried by entry `(l, k)`.
    pub fn structural_exponents(l: usize, k: usize) -> (i64, i64) {
        (l as i64 - k as i64, (l + k) as i64)
    }

    /// Residue selection: the coefficient of `z_d^{diag} z_a^{anti}`.
    pub fn structural_coefficient(&self, diag: i64, anti: i64) -> Option<&PoleSum<T>> {
        if (diag + anti) % 2 != 0 || anti < diag.abs() {
            return None;
        }
        let l = (diag + anti) / 2;
        let k = (anti - diag) / 2;
        self.entry(l as usize, k as usize)
    }
}

/// Builds every `⟨+l|ρ̃|−k⟩` for spin `site`.
pub fn qctf_block<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    site: usize,
) -> Result<QctfBlock<T>, QctfError> {
    qctf_block_with(eig, psi0, site, &ConsolidationPolicy::default(), DEFAULT_BLOCK_MEMORY_CAP)
}

pub fn qctf_block_with<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    site: usize,
    policy: &ConsolidationPolicy<T>,
    memory_cap: usize,
) -> Result<QctfBlock<T>, QctfError> {
    let table = AmplitudeTable::new(eig, psi0, site)?;
    let d = table.complement_dim();
    let plus_terms: usize = table.up.iter().map(PoleSum::len).sum();
    let minus_terms: usize = table.down.iter().map(PoleSum::len).sum();
    let bytes = plus_terms
        .saturating_mul(minus_terms)
        .saturating_mul(std::mem::size_of::<Pole<T>>());
    if bytes > memory_cap {
        return Err(QctfError::MemoryCap {
            bytes,
            cap: memory_cap,
        });
    }
    let mut entries = BTreeMap::new();
    for l in 0..d {
        if table.up[l].is_empty() {
            continue;
        }
        for k in 0..d {
            if table.down[k].is_empty() {
                continue;
            }
            let e = table.density_element(Spin::Up, l, Spin::Down, k, policy)?;
            if !e.is_empty() {
                entries.insert((l, k), e);
            }
        }
    }
    Ok(QctfBlock {
        complement_dim: d,
        entries,
    })
}

/// Inverse transform of one block entry: `⟨+l|ρ(t)|−k⟩`; absent entries are 0.
pub fn reconstruct_element<T: Real>(block: &QctfBlock<T>, l: usize, k: usize, t: T) -> Complex<T> {
    block.entry(l, k).map_or(czero(), |p| p.eval_time(t))
}

/// Largest accepted conjugate residue of `Q̃_M`.
pub const REALITY_THRESHOLD: f64 = 1e-9;

/// `Q̃_M(s) = ρ̃₊₊ ⋆ ρ̃₋₋ − ρ̃₊₋ ⋆ ρ̃₋₊`, flagged real-valued.
pub fn entanglement_polesum<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    site: usize,
    policy: &ConsolidationPolicy<T>,
) -> Result<PoleSum<T>, QctfError> {
    Ok(entanglement_polesum_budgeted(eig, psi0, site, policy)?.0)
}

/// As [`entanglement_polesum`], also returning a bound on `max_t |ΔQ(t)|`
/// caused by pruning.
pub fn entanglement_polesum_budgeted<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    site: usize,
    policy: &ConsolidationPolicy<T>,
) -> Result<(PoleSum<T>, T), QctfError> {
    let table = AmplitudeTable::new(eig, psi0, site)?;
    let (pp, m_pp) = table.reduced_element(Spin::Up, Spin::Up, policy)?;
    let (mm, m_mm) = table.reduced_element(Spin::Down, Spin::Down, policy)?;
    let (pm, m_pm) = table.reduced_element(Spin::Up, Spin::Down, policy)?;
    let mp = pm.conjugate();

    let (diag, m_diag) = pp.star_with(&mm, policy)?;
    let (cross, m_cross) = pm.star_with(&mp, policy)?;
    let (q, m_final) = diag
        .sub(&cross, policy.freq_tol)
        .consolidate(policy.freq_tol, policy.prune_floor);

    // |ρ_ab(t)| ≤ 1, so a truncation δ in one factor moves the product by at
    // most δ times the other factor's bound.
    let one = T::one();
    let budget = m_pp + (one + m_pp) * m_mm + m_pm * (one + (one + m_pm)) + m_diag + m_cross + m_final;

    let q = q.into_real_valued(policy.freq_tol, T::lit(REALITY_THRESHOLD))?;
    Ok((q, budget))
}

/// Decomposition `|A⟩ = α⁺|+⟩⊗|A⁺⟩ + α⁻|−⟩⊗|A⁻⟩` of a state around one spin.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenstateSplit<T> {
    pub alpha_plus: T,
    pub alpha_minus: T,
    /// `|A⁺⟩` over the complement; `None` when `α⁺ = 0`.
    pub a_plus: Option<Vec<Complex<T>>>,
    pub a_minus: Option<Vec<Complex<T>>>,
    /// `⟨A⁻|A⁺⟩` when both components exist.
    pub overlap: Option<Complex<T>>,
    /// `true` when `α⁺` vanished and the roles of `±` were exchanged.
    pub swapped: bool,
}

fn vanishing<T: Real>() -> T {
    T::default_epsilon().sqrt() * T::lit(1e-6)
}

/// Static measure `Q = |α⁺α⁻|² (1 − |⟨A⁻|A⁺⟩|²)` of spin `site` in `vector`.
pub fn static_measure<T: Real>(vector: &StateVector<T>, site: usize) -> Result<(EigenstateSplit<T>, T), QctfError> {
    let n = vector.n_sites();
    if site == 0 || site > n {
        return Err(QctfError::SiteOutOfRange { site, n });
    }
    let d = 1usize << (n - 1);
    let mut plus: Vec<_> = (0..d).map(|l| split_amplitude(vector, site, true, l)).collect();
    let mut minus: Vec<_> = (0..d).map(|l| split_amplitude(vector, site, false, l)).collect();
    let norm = |v: &[Complex<T>]| v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
    let mut ap = norm(&plus);
    let mut am = norm(&minus);
    let swapped = ap <= vanishing::<T>();
    if swapped {
        std::mem::swap(&mut plus, &mut minus);
        std::mem::swap(&mut ap, &mut am);
    }
    let unit = |v: Vec<Complex<T>>, a: T| {
        if a <= vanishing::<T>() {
            None
        } else {
            Some(v.into_iter().map(|z| z / a).collect::<Vec<_>>())
        }
    };
    let a_plus = unit(plus, ap);
    let a_minus = unit(minus, am);
    let overlap = match (&a_plus, &a_minus) {
        (Some(p), Some(m)) => Some(m.iter().zip(p).fold(czero(), |acc, (x, y)| acc + x.conj() * y)),
        _ => None,
    };
    let q = match overlap {
        Some(ov) => (ap * am) * (ap * am) * (T::one() - ov.norm_sqr()),
        None => T::zero(),
    };
    Ok((
        EigenstateSplit {
            alpha_plus: ap,
            alpha_minus: am,
            a_plus,
            a_minus,
            overlap,
            swapped,
        },
        q,
    ))
}

/// `|⟨A⁻|A⁺⟩|`: 1 for a product state at the spin, 0 for a strictly non-local one.
pub fn nonlocality_overlap<T: Real>(split: &EigenstateSplit<T>) -> Result<T, QctfError> {
    split.overlap.map(cabs).ok_or(QctfError::UndefinedOverlap)
}
