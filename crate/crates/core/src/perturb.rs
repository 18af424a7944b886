//! Perturbative predictions for strong disorder.
//!
//! The interaction is treated as a perturbation of the disorder term. Around
//! a chosen spin `r` the Néel state couples to a short line of product states
//! labelled `−3..=3`, each reached from its neighbour by one bond flip:
//!
//! ```text
//!  −3 ─ −2 ─ −1 ─ 0 ─ 1 ─ 2 ─ 3
//! ```
//!
//! Spin `r` is up in `|0⟩`, down in `|±1⟩`, `|±2⟩` and up again in `|±3⟩`.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde_json::json;
use thiserror::Error;

use crate::chain::{apply_bond_flip, neel_state, unperturbed_energy, BasisState, ChainError, ChainSpec, DisorderFields};
use crate::scalar::{cabs, Real};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("configuration |{label}⟩ does not exist at this site")]
    MissingConfiguration { label: i32 },
    #[error("network label {label} outside -3..=3")]
    LabelOutOfRange { label: i32 },
    #[error("degenerate step |{from}⟩ → |{to}⟩: zero energy denominator")]
    Degenerate { from: i32, to: i32 },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Relative `|Δh|` (in units of `J`) below which a step counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;

/// Product states around spin `site`, keyed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNetwork {
    site: usize,
    configurations: BTreeMap<i32, BasisState>,
}

impl StateNetwork {
    pub fn site(&self) -> usize {
        self.site
    }

    pub fn get(&self, label: i32) -> Option<&BasisState> {
        self.configurations.get(&label)
    }

    pub fn contains(&self, label: i32) -> bool {
        self.configurations.contains_key(&label)
    }

    /// Existing labels, ascending.
    pub fn labels(&self) -> impl Iterator<Item = i32> + '_ {
        self.configurations.keys().copied()
    }

    fn require(&self, label: i32) -> Result<&BasisState, PerturbError> {
        if !(-3..=3).contains(&label) {
            return Err(PerturbError::LabelOutOfRange { label });
        }
        self.get(label).ok_or(PerturbError::MissingConfiguration { label })
    }
}

/// Builds the network from the Néel state oriented so that `site` is up.
/// Labels whose flip sequence leaves the chain are omitted.
pub fn state_network<T: Real>(spec: &ChainSpec<T>, site: usize) -> Result<StateNetwork, PerturbError> {
    spec.check_site(site)?;
    let n = spec.n_sites() as i64;
    let r = site as i64;
    let mut configurations = BTreeMap::new();
    configurations.insert(0, neel_state(spec, site % 2 == 1));

    // (label, parent, bond) in build order
    let steps: [(i32, i32, i64); 6] = [
        (1, 0, r),
        (-1, 0, r - 1),
        (2, 1, r - 2),
        (-2, -1, r + 1),
        (3, 2, r - 1),
        (-3, -2, r),
    ];
    for (label, parent, bond) in steps {
        let Some(from) = configurations.get(&parent) else {
            continue;
        };
        if bond < 1 || bond >= n {
            continue;
        }
        if let Some(next) = apply_bond_flip(from, bond as usize)? {
            configurations.insert(label, next);
        }
    }
    Ok(StateNetwork { site, configurations })
}

/// Disorder energy plus the diagonal of the interaction: `±J/4` per
/// parallel/antiparallel bond.
pub fn first_order_energy<T: Real>(fields: &DisorderFields<T>, spec: &ChainSpec<T>, state: &BasisState) -> T {
    let j = spec.coupling();
    (1..state.n_sites()).fold(unperturbed_energy(fields, state), |acc, k| {
        acc + j * state.spin_z::<T>(k) * state.spin_z::<T>(k + 1)
    })
}

/// `c_{to,from}`: product over the line path of `(J/2) / (E⁰_prev − E⁰_next)`.
pub fn interference_amplitude<T: Real>(
    fields: &DisorderFields<T>,
    spec: &ChainSpec<T>,
    network: &StateNetwork,
    from: i32,
    to: i32,
) -> Result<Complex<T>, PerturbError> {
    fields.check_len(spec)?;
    network.require(from)?;
    network.require(to)?;
    let half_j = spec.coupling() * T::half();
    let tol = T::lit(RESONANCE_TOL) * spec.coupling();
    let dir = (to - from).signum();
    let mut amp = T::one();
    let mut label = from;
    while label != to {
        let next = label + dir;
        let e_prev = unperturbed_energy(fields, network.require(label)?);
        let e_next = unperturbed_energy(fields, network.require(next)?);
        let denom = e_prev - e_next;
        if denom.abs() < tol {
            return Err(PerturbError::Degenerate { from: label, to: next });
        }
        amp *= half_j / denom;
        label = next;
    }
    Ok(Complex::new(amp, T::zero()))
}

/// One predicted component of the entanglement measure.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEntry<T> {
    /// Perturbation order; always even.
    pub order: u32,
    /// Angular frequency `ω ≥ 0`.
    pub omega: T,
    /// Cosine amplitude `a`; `None` for frequency-only or resonant entries.
    pub amplitude: Option<T>,
    pub resonant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPrediction<T> {
    pub site: usize,
    pub entries: Vec<PredictionEntry<T>>,
    /// `(J/W)²/8`, the least second-order amplitude under uniform disorder.
    pub a0: T,
}

impl<T: Real> PerturbationPrediction<T> {
    /// Second-order entries only.
    pub fn second_order(&self) -> impl Iterator<Item = &PredictionEntry<T>> {
        self.entries.iter().filter(|e| e.order == 2)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|e| {
                json!({
                    "order": e.order,
                    "omega": e.omega.to_f64_lossy(),
                    "amplitude": e.amplitude.map(|a| a.to_f64_lossy()),
                    "resonant": e.resonant,
                })
            })
            .collect();
        json!({ "site": self.site, "a0": self.a0.to_f64_lossy(), "entries": entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("plain JSON value")
    }
}

/// `(J/W)²/8`; infinite for a clean chain.
pub fn amplitude_floor<T: Real>(spec: &ChainSpec<T>) -> T {
    let ratio = spec.coupling() / spec.disorder_bound();
    ratio * ratio / T::lit(8.0)
}

/// Lowest-order prediction: one entry per existing neighbour of `site`, at
/// `ω = |E⁽¹⁾₀ − E⁽¹⁾±₁|` with `a = 2|c_{±1,0}|²`.
pub fn second_order_prediction<T: Real>(
    fields: &DisorderFields<T>,
    spec: &ChainSpec<T>,
    site: usize,
) -> Result<PerturbationPrediction<T>, PerturbError> {
    fields.check_len(spec)?;
    let net = state_network(spec, site)?;
    let e0 = first_order_energy(fields, spec, net.require(0)?);
    let mut entries = Vec::new();
    for label in [1, -1] {
        let Some(state) = net.get(label) else {
            continue;
        };
        let omega = (e0 - first_order_energy(fields, spec, state)).abs();
        let entry = match interference_amplitude(fields, spec, &net, 0, label) {
            Ok(c) => PredictionEntry {
                order: 2,
                omega,
                amplitude: Some(T::lit(2.0) * c.norm_sqr()),
                resonant: false,
            },
            Err(PerturbError::Degenerate { .. }) => PredictionEntry {
                order: 2,
                omega,
                amplitude: None,
                resonant: true,
            },
            Err(e) => return Err(e),
        };
        entries.push(entry);
    }
    Ok(PerturbationPrediction {
        site,
        entries,
        a0: amplitude_floor(spec),
    })
}

/// Non-zero fourth-order frequencies, in the order
/// `|E₋₁−E₁|, |2E₀−E₁−E₋₁|, |E₂−E₀|, |E₋₂−E₀|, 2|E₁−E₀|, 2|E₋₁−E₀|, |E₁−E₀|, |E₋₁−E₀|`
/// (first-order energies). Terms needing an absent label are skipped.
pub fn fourth_order_frequencies<T: Real>(
    fields: &DisorderFields<T>,
    spec: &ChainSpec<T>,
    site: usize,
) -> Result<Vec<T>, PerturbError> {
    fields.check_len(spec)?;
    let net = state_network(spec, site)?;
    let e = |label: i32| net.get(label).map(|s| first_order_energy(fields, spec, s));
    let e0 = e(0).expect("Néel state is always present");
    let two = T::lit(2.0);
    let mut out = Vec::new();
    if let (Some(p), Some(m)) = (e(1), e(-1)) {
        out.push((m - p).abs());
        out.push((two * e0 - p - m).abs());
    }
    out.extend([2, -2].into_iter().filter_map(e).map(|x| (x - e0).abs()));
    out.extend([1, -1].into_iter().filter_map(e).map(|x| two * (x - e0).abs()));
    out.extend([1, -1].into_iter().filter_map(e).map(|x| (x - e0).abs()));
    Ok(out)
}

/// Second-order entries followed by frequency-only fourth-order entries.
pub fn prediction_through_fourth_order<T: Real>(
    fields: &DisorderFields<T>,
    spec: &ChainSpec<T>,
    site: usize,
) -> Result<PerturbationPrediction<T>, PerturbError> {
    let mut p = second_order_prediction(fields, spec, site)?;
    for omega in fourth_order_frequencies(fields, spec, site)? {
        p.entries.push(PredictionEntry {
            order: 4,
            omega,
            amplitude: None,
            resonant: false,
        });
    }
    Ok(p)
}

/// One pole of the perturbative entanglement measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeTerm<T> {
    pub order: u32,
    pub omega: T,
    pub coefficient: Complex<T>,
}

/// Full perturbative sum over `l ∈ {0, ±3}` (spin up), `k ∈ {±1, ±2}` (spin
/// down) and four line indices:
/// `c*_{i0} c_{il} c_{j0} c*_{jk} c_{i'0} c*_{i'l} c*_{j'0} c_{j'k}` at
/// `ω = E_i − E_j − E_{i'} + E_{j'}` (first-order energies). The order of a
/// term is its total path length. Terms are not merged.
pub fn perturbative_terms<T: Real>(
    fields: &DisorderFields<T>,
    spec: &ChainSpec<T>,
    site: usize,
) -> Result<Vec<PerturbativeTerm<T>>, PerturbError> {
    fields.check_len(spec)?;
    let net = state_network(spec, site)?;
    let labels: Vec<i32> = net.labels().collect();
    let mut amp = BTreeMap::new();
    for &a in &labels {
        for &b in &labels {
            amp.insert((a, b), interference_amplitude(fields, spec, &net, b, a)?);
        }
    }
    let c = |to: i32, from: i32| amp[&(to, from)];
    let energy: BTreeMap<i32, T> = labels
        .iter()
        .map(|&l| (l, first_order_energy(fields, spec, net.get(l).expect("listed label"))))
        .collect();
    let ups: Vec<i32> = [0, 3, -3].into_iter().filter(|l| net.contains(*l)).collect();
    let downs: Vec<i32> = [1, -1, 2, -2].into_iter().filter(|l| net.contains(*l)).collect();
    let dist = |a: i32, b: i32| (a - b).unsigned_abs();

    let mut out = Vec::new();
    for &l in &ups {
        for &k in &downs {
            for &i in &labels {
                for &j in &labels {
                    for &ip in &labels {
                        for &jp in &labels {
                            let coefficient = c(i, 0).conj()
                                * c(i, l)
                                * c(j, 0)
                                * c(j, k).conj()
                                * c(ip, 0)
                                * c(ip, l).conj()
                                * c(jp, 0).conj()
                                * c(jp, k);
                            let order = dist(i, 0)
                                + dist(i, l)
                                + dist(j, 0)
                                + dist(j, k)
                                + dist(ip, 0)
                                + dist(ip, l)
                                + dist(jp, 0)
                                + dist(jp, k);
                            out.push(PerturbativeTerm {
                                order,
                                omega: energy[&i] - energy[&j] - energy[&ip] + energy[&jp],
                                coefficient,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Smallest order among terms with `|ω| > freq_tol` and `|c| > coef_tol`.
pub fn lowest_oscillating_order<T: Real>(terms: &[PerturbativeTerm<T>], freq_tol: T, coef_tol: T) -> Option<u32> {
    terms
        .iter()
        .filter(|t| t.omega.abs() > freq_tol && cabs(t.coefficient) > coef_tol)
        .map(|t| t.order)
        .min()
}
