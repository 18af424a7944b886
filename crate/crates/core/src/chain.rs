//! Disordered Heisenberg chain: lattice parameters, disorder sampling, the
//! product basis and the sparse Hamiltonian
//!
//! ```text
//! H = J Σ_{k=1}^{N-1} S_k·S_{k+1} + Σ_k h_k S_k^z,      S = σ/2, ħ = 1
//! ```
//!
//! with open boundaries.
//!
//! # Basis convention
//!
//! Sites are numbered `1..=N`. A product state is an `N`-bit word where site
//! `k` lives at bit position `N - k` (site 1 is the most significant bit) and a
//! set bit means spin-up (`s_k = +½`). The index of a state in the `2^N`
//! Hilbert space is the integer value of its word, which is the same ordering
//! as the Kronecker product `site_1 ⊗ site_2 ⊗ … ⊗ site_N` with local basis
//! `(|↓⟩, |↑⟩)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{czero, Real};

/// Largest chain the bit-word basis supports.
pub const MAX_SITES: usize = 30;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain needs between 2 and {MAX_SITES} sites, got {0}")]
    InvalidSites(usize),
    #[error("coupling must be positive and finite, got {0}")]
    InvalidCoupling(f64),
    #[error("disorder bound must be non-negative and finite, got {0}")]
    InvalidDisorder(f64),
    #[error("expected {expected} site fields, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("bond {bond} out of range 1..={max}")]
    BondOutOfRange { bond: usize, max: usize },
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("invalid basis word: {0}")]
    InvalidBits(String),
    #[error("disorder record: {0}")]
    Json(#[from] serde_json::Error),
}

/// Lattice parameters: size `N`, coupling `J > 0`, disorder half-width `W ≥ 0`.
/// Boundaries are always open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec<T> {
    n_sites: usize,
    coupling: T,
    disorder_bound: T,
}

impl<T: Real> ChainSpec<T> {
    pub fn new(n_sites: usize, coupling: T, disorder_bound: T) -> Result<Self, ChainError> {
        if !(2..=MAX_SITES).contains(&n_sites) {
            return Err(ChainError::InvalidSites(n_sites));
        }
        let j = coupling.to_f64_lossy();
        if !(j > 0.0 && j.is_finite()) {
            return Err(ChainError::InvalidCoupling(j));
        }
        let w = disorder_bound.to_f64_lossy();
        if !(w >= 0.0 && w.is_finite()) {
            return Err(ChainError::InvalidDisorder(w));
        }
        Ok(Self {
            n_sites,
            coupling,
            disorder_bound,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> T {
        self.coupling
    }

    pub fn disorder_bound(&self) -> T {
        self.disorder_bound
    }

    /// Hilbert space dimension `2^N`.
    pub fn dimension(&self) -> usize {
        1usize << self.n_sites
    }

    pub fn check_site(&self, site: usize) -> Result<(), ChainError> {
        if site == 0 || site > self.n_sites {
            Err(ChainError::SiteOutOfRange {
                site,
                n: self.n_sites,
            })
        } else {
            Ok(())
        }
    }
}

/// On-site fields `h_1..h_N` together with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderFields<T> {
    fields: Vec<T>,
    seed: u64,
}

impl<T: Real> DisorderFields<T> {
    pub fn new(fields: Vec<T>, seed: u64) -> Self {
        Self { fields, seed }
    }

    pub fn fields(&self) -> &[T] {
        &self.fields
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Field on site `site` (1-based).
    pub fn h(&self, site: usize) -> T {
        self.fields[site - 1]
    }

    pub(crate) fn check_len(&self, spec: &ChainSpec<T>) -> Result<(), ChainError> {
        if self.fields.len() != spec.n_sites() {
            return Err(ChainError::LengthMismatch {
                expected: spec.n_sites(),
                found: self.fields.len(),
            });
        }
        Ok(())
    }

    /// Serializes as `{"n", "j", "w", "seed", "fields"}`.
    pub fn to_json(&self, spec: &ChainSpec<T>) -> Result<String, ChainError> {
        self.check_len(spec)?;
        let record = DisorderRecord {
            n: spec.n_sites(),
            j: spec.coupling().to_f64_lossy(),
            w: spec.disorder_bound().to_f64_lossy(),
            seed: self.seed,
            fields: self.fields.iter().map(|h| h.to_f64_lossy()).collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(text: &str) -> Result<(ChainSpec<T>, Self), ChainError> {
        let record: DisorderRecord = serde_json::from_str(text)?;
        let spec = ChainSpec::new(record.n, T::lit(record.j), T::lit(record.w))?;
        let fields = Self::new(record.fields.into_iter().map(T::lit).collect(), record.seed);
        fields.check_len(&spec)?;
        Ok((spec, fields))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DisorderRecord {
    n: usize,
    j: f64,
    w: f64,
    seed: u64,
    fields: Vec<f64>,
}

/// SplitMix64 finalizer (Steele, Lea & Flood). Full avalanche on 64 bits.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-realization seed: `splitmix64(master ^ splitmix64(index))`.
///
/// Depends only on `(master, index)`, so an ensemble draws the same fields no
/// matter how realizations are scheduled across threads.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Draws `h_k` i.i.d. uniform on `[-W, W]`.
///
/// The stream is ChaCha8 keyed with `splitmix64(seed)`; values are drawn in
/// `f64` and converted to `T`.
pub fn sample_disorder<T: Real>(spec: &ChainSpec<T>, seed: u64) -> DisorderFields<T> {
    let w = spec.disorder_bound().to_f64_lossy();
    let fields = if w == 0.0 {
        vec![T::zero(); spec.n_sites()]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
        (0..spec.n_sites())
            .map(|_| T::lit(rng.gen_range(-w..=w)))
            .collect()
    };
    DisorderFields::new(fields, seed)
}

/// Product state of the chain as an `N`-bit word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    bits: u64,
    n_sites: usize,
}

impl BasisState {
    pub fn new(n_sites: usize, bits: u64) -> Result<Self, ChainError> {
        if !(1..=MAX_SITES).contains(&n_sites) {
            return Err(ChainError::InvalidSites(n_sites));
        }
        if bits >> n_sites != 0 {
            return Err(ChainError::InvalidBits(format!(
                "{bits:#b} has more than {n_sites} significant bits"
            )));
        }
        Ok(Self { bits, n_sites })
    }

    pub fn from_index(n_sites: usize, index: usize) -> Result<Self, ChainError> {
        Self::new(n_sites, index as u64)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn population(&self) -> u32 {
        self.bits.count_ones()
    }

    fn mask(&self, site: usize) -> u64 {
        1u64 << (self.n_sites - site)
    }

    /// Whether site `site` (1-based) is spin-up.
    pub fn is_up(&self, site: usize) -> bool {
        self.bits & self.mask(site) != 0
    }

    /// `s_k = ±½`.
    pub fn spin_z<T: Real>(&self, site: usize) -> T {
        if self.is_up(site) {
            T::half()
        } else {
            -T::half()
        }
    }

    pub fn flipped(&self, site: usize) -> Self {
        Self {
            bits: self.bits ^ self.mask(site),
            n_sites: self.n_sites,
        }
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for site in 1..=self.n_sites {
            f.write_str(if self.is_up(site) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BasisState {
    type Err = ChainError;

    /// Parses a site-ordered string such as `"1010"` (site 1 first).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u64;
        for ch in s.chars() {
            bits <<= 1;
            match ch {
                '1' => bits |= 1,
                '0' => {}
                _ => return Err(ChainError::InvalidBits(s.to_string())),
            }
        }
        Self::new(s.len(), bits)
    }
}

/// Alternating ↑↓↑↓… state. `up_first` sets the orientation of site 1.
pub fn neel_state<T: Real>(spec: &ChainSpec<T>, up_first: bool) -> BasisState {
    let n = spec.n_sites();
    let bits = (1..=n)
        .filter(|site| (site % 2 == 1) == up_first)
        .fold(0u64, |acc, site| acc | (1u64 << (n - site)));
    BasisState { bits, n_sites: n }
}

/// `Σ_k h_k s_k`: energy of a product state under the disorder term alone.
pub fn unperturbed_energy<T: Real>(fields: &DisorderFields<T>, state: &BasisState) -> T {
    (1..=state.n_sites()).fold(T::zero(), |acc, site| {
        acc + fields.h(site) * state.spin_z::<T>(site)
    })
}

/// Flip-flop on bond `(bond, bond + 1)`: toggles both spins when they are
/// anti-parallel, returns `None` when they are parallel.
pub fn apply_bond_flip(state: &BasisState, bond: usize) -> Result<Option<BasisState>, ChainError> {
    let n = state.n_sites();
    if bond == 0 || bond >= n {
        return Err(ChainError::BondOutOfRange { bond, max: n - 1 });
    }
    if state.is_up(bond) == state.is_up(bond + 1) {
        return Ok(None);
    }
    Ok(Some(state.flipped(bond).flipped(bond + 1)))
}

/// Bit mask of site `site` in an `n_sites` word.
pub fn site_mask(n_sites: usize, site: usize) -> usize {
    1usize << (n_sites - site)
}

/// Index of the complement (all sites except `site`) of basis index `x`.
/// The remaining sites keep their relative order.
pub fn complement_index(n_sites: usize, site: usize, x: usize) -> usize {
    let pos = n_sites - site;
    let low = x & ((1usize << pos) - 1);
    let high = x >> (pos + 1);
    (high << pos) | low
}

/// Inverse of [`complement_index`]: inserts the spin of `site` into `l`.
pub fn join_index(n_sites: usize, site: usize, up: bool, l: usize) -> usize {
    let pos = n_sites - site;
    let low = l & ((1usize << pos) - 1);
    let high = l >> pos;
    (high << (pos + 1)) | (usize::from(up) << pos) | low
}

/// Sparse real-symmetric Hamiltonian in the product basis.
///
/// Each row holds the diagonal element plus at most `N - 1` flip-flop
/// couplings of value `J/2`.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix<T> {
    spec: ChainSpec<T>,
    fields: DisorderFields<T>,
    diagonal: Vec<T>,
    off_diagonal: Vec<Vec<(usize, T)>>,
}

impl<T: Real> HamiltonianMatrix<T> {
    pub fn spec(&self) -> &ChainSpec<T> {
        &self.spec
    }

    pub fn fields(&self) -> &DisorderFields<T> {
        &self.fields
    }

    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    /// Off-diagonal couplings of row `i` as `(column, value)`.
    pub fn row_couplings(&self, i: usize) -> &[(usize, T)] {
        &self.off_diagonal[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.diagonal[i];
        }
        self.off_diagonal[i]
            .iter()
            .find(|(col, _)| *col == j)
            .map_or(T::zero(), |(_, v)| *v)
    }

    pub fn nnz_in_row(&self, i: usize) -> usize {
        1 + self.off_diagonal[i].len()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let d = self.dimension();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.diagonal[i];
            for &(j, v) in &self.off_diagonal[i] {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `out = H · psi`.
    pub fn apply(&self, psi: &[Complex<T>], out: &mut [Complex<T>]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = psi[i] * self.diagonal[i];
            for &(j, v) in &self.off_diagonal[i] {
                acc += psi[j] * v;
            }
            *o = acc;
        }
    }

    /// `⟨psi|H|psi⟩` (real for Hermitian `H`).
    pub fn expectation(&self, psi: &[Complex<T>]) -> T {
        let mut hpsi = vec![czero(); psi.len()];
        self.apply(psi, &mut hpsi);
        psi.iter()
            .zip(&hpsi)
            .fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re)
    }

    /// Gershgorin bound on the spectral norm.
    pub fn norm_bound(&self) -> T {
        (0..self.dimension())
            .map(|i| {
                self.off_diagonal[i]
                    .iter()
                    .fold(self.diagonal[i].abs(), |acc, (_, v)| acc + v.abs())
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Basis indices grouped by total magnetization (population count),
    /// ordered by population.
    pub fn sz_sectors(&self) -> Vec<Vec<usize>> {
        let n = self.spec.n_sites();
        let mut sectors = vec![Vec::new(); n + 1];
        for x in 0..self.dimension() {
            sectors[x.count_ones() as usize].push(x);
        }
        sectors
    }
}

/// Builds the full Hamiltonian `J Σ S_k·S_{k+1} + Σ h_k S_k^z`.
pub fn build_hamiltonian<T: Real>(
    spec: &ChainSpec<T>,
    fields: &DisorderFields<T>,
) -> Result<HamiltonianMatrix<T>, ChainError> {
    assemble(spec, fields, true)
}

/// Builds only the disorder term `Σ h_k S_k^z` (diagonal).
pub fn build_disorder_hamiltonian<T: Real>(
    spec: &ChainSpec<T>,
    fields: &DisorderFields<T>,
) -> Result<HamiltonianMatrix<T>, ChainError> {
    assemble(spec, fields, false)
}

fn assemble<T: Real>(
    spec: &ChainSpec<T>,
    fields: &DisorderFields<T>,
    interacting: bool,
) -> Result<HamiltonianMatrix<T>, ChainError> {
    fields.check_len(spec)?;
    let n = spec.n_sites();
    let dim = spec.dimension();
    let j = spec.coupling();
    let zz = j * T::quarter();
    let flip = j * T::half();

    let mut diagonal = Vec::with_capacity(dim);
    let mut off_diagonal = Vec::with_capacity(dim);
    for x in 0..dim {
        let state = BasisState {
            bits: x as u64,
            n_sites: n,
        };
        let mut e = unperturbed_energy(fields, &state);
        let mut row = Vec::new();
        if interacting {
            for bond in 1..n {
                if state.is_up(bond) == state.is_up(bond + 1) {
                    e += zz;
                } else {
                    e -= zz;
                    row.push((state.flipped(bond).flipped(bond + 1).index(), flip));
                }
            }
            row.sort_unstable_by_key(|(col, _)| *col);
        }
        diagonal.push(e);
        off_diagonal.push(row);
    }
    Ok(HamiltonianMatrix {
        spec: *spec,
        fields: fields.clone(),
        diagonal,
        off_diagonal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    type Cx = Complex<f64>;

    fn spec(n: usize, j: f64, w: f64) -> ChainSpec<f64> {
        ChainSpec::new(n, j, w).unwrap()
    }

    fn kron(a: &DMatrix<Cx>, b: &DMatrix<Cx>) -> DMatrix<Cx> {
        let (ar, ac) = a.shape();
        let (br, bc) = b.shape();
        DMatrix::from_fn(ar * br, ac * bc, |i, j| {
            a[(i / br, j / bc)] * b[(i % br, j % bc)]
        })
    }

    /// `op` on `site`, identity elsewhere; local basis (|↓⟩, |↑⟩).
    fn embed(op: &DMatrix<Cx>, site: usize, n: usize) -> DMatrix<Cx> {
        let id = DMatrix::<Cx>::identity(2, 2);
        (1..=n).fold(DMatrix::from_element(1, 1, Cx::new(1.0, 0.0)), |acc, k| {
            kron(&acc, if k == site { op } else { &id })
        })
    }

    fn dense_oracle(n: usize, j: f64, h: &[f64]) -> DMatrix<Cx> {
        let c = |re: f64, im: f64| Cx::new(re, im);
        let sx = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0.5, 0.), c(0.5, 0.), c(0., 0.)]);
        let sy = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.5), c(0., -0.5), c(0., 0.)]);
        let sz = DMatrix::from_row_slice(2, 2, &[c(-0.5, 0.), c(0., 0.), c(0., 0.), c(0.5, 0.)]);
        let dim = 1 << n;
        let mut hm = DMatrix::<Cx>::zeros(dim, dim);
        for k in 1..n {
            for s in [&sx, &sy, &sz] {
                hm += embed(s, k, n) * embed(s, k + 1, n) * c(j, 0.0);
            }
        }
        for k in 1..=n {
            hm += embed(&sz, k, n) * c(h[k - 1], 0.0);
        }
        hm
    }

    #[test]
    fn zero_width_disorder_is_zero() {
        let f = sample_disorder(&spec(6, 1.0, 0.0), 17);
        assert!(f.fields().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn disorder_respects_support_and_is_deterministic() {
        let s = spec(6, 1.0, 10.0);
        let a = sample_disorder(&s, 1);
        let b = sample_disorder(&s, 1);
        assert_eq!(a, b);
        assert!(a.fields().iter().all(|h| h.abs() <= 10.0));
        assert_ne!(a, sample_disorder(&s, 2));
    }

    #[test]
    fn disorder_json_round_trip() {
        let s = spec(5, 1.0, 3.0);
        let f = sample_disorder(&s, 99);
        let text = f.to_json(&s).unwrap();
        assert!(text.contains("\"seed\":99"));
        let (s2, f2) = DisorderFields::<f64>::from_json(&text).unwrap();
        assert_eq!(s, s2);
        assert_eq!(f, f2);
    }

    #[test]
    fn spec_validation() {
        assert!(ChainSpec::new(1, 1.0, 1.0).is_err());
        assert!(ChainSpec::new(4, 0.0, 1.0).is_err());
        assert!(ChainSpec::new(4, 1.0, -1.0).is_err());
        assert!(ChainSpec::new(4, 1.0f32, 0.0).is_ok());
    }

    #[test]
    fn two_site_spectrum() {
        let s = spec(2, 1.0, 0.0);
        let h = build_hamiltonian(&s, &DisorderFields::new(vec![0.0, 0.0], 0)).unwrap();
        let mut e: Vec<f64> = SymmetricEigen::new(h.to_dense()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        for (got, want) in e.iter().zip([-0.75, 0.25, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn flip_flop_element_is_half_j() {
        let s = spec(2, 1.0, 1.0);
        let h = build_hamiltonian(&s, &DisorderFields::new(vec![0.35, -0.35], 0)).unwrap();
        let ud: BasisState = "10".parse().unwrap();
        let du: BasisState = "01".parse().unwrap();
        assert_eq!(h.get(ud.index(), du.index()), 0.5);
        assert_eq!(h.get(du.index(), ud.index()), 0.5);
    }

    #[test]
    fn matches_dense_kronecker_oracle() {
        for (n, seed) in [(2, 3), (4, 7), (6, 1), (8, 11)] {
            let s = spec(n, 1.0, 10.0);
            let f = sample_disorder(&s, seed);
            let h = build_hamiltonian(&s, &f).unwrap().to_dense();
            let oracle = dense_oracle(n, 1.0, f.fields());
            let dev = h
                .iter()
                .zip(oracle.iter())
                .map(|(a, b)| (Cx::new(*a, 0.0) - b).norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-14, "n={n} deviation {dev}");
        }
    }

    #[test]
    fn hamiltonian_structure() {
        let s = spec(7, 1.3, 4.0);
        let h = build_hamiltonian(&s, &sample_disorder(&s, 5)).unwrap();
        let dense = h.to_dense();
        assert_eq!(dense, dense.transpose());
        for i in 0..h.dimension() {
            assert!(h.nnz_in_row(i) <= s.n_sites() + 1);
            for &(j, _) in h.row_couplings(i) {
                assert_eq!(i.count_ones(), j.count_ones());
            }
        }
    }

    #[test]
    fn unperturbed_energy_matches_disorder_matrix() {
        let s = spec(6, 1.0, 10.0);
        let f = sample_disorder(&s, 21);
        let hd = build_disorder_hamiltonian(&s, &f).unwrap();
        for x in 0..s.dimension() {
            let st = BasisState::from_index(6, x).unwrap();
            assert!((unperturbed_energy(&f, &st) - hd.get(x, x)).abs() <= 1e-14);
        }
    }

    #[test]
    fn neel_patterns() {
        assert_eq!(neel_state(&spec(4, 1.0, 0.0), true).to_string(), "1010");
        assert_eq!(neel_state(&spec(3, 1.0, 0.0), false).to_string(), "010");
        for n in 2..10 {
            for up in [true, false] {
                let p = neel_state(&spec(n, 1.0, 0.0), up).population() as usize;
                assert!(p == n / 2 || p == n.div_ceil(2));
            }
        }
    }

    #[test]
    fn unperturbed_energy_examples() {
        let f = DisorderFields::new(vec![1.0, -2.0, 3.0, -4.0], 0);
        let neel: BasisState = "1010".parse().unwrap();
        assert_eq!(unperturbed_energy(&f, &neel), 5.0);
        let up: BasisState = "1111".parse().unwrap();
        assert_eq!(unperturbed_energy(&f, &up), -1.0);
        for site in 1..=4 {
            let delta = unperturbed_energy(&f, &neel.flipped(site)) - unperturbed_energy(&f, &neel);
            let sign = if neel.is_up(site) { 1.0 } else { -1.0 };
            assert_eq!(delta, -f.h(site) * sign);
        }
    }

    #[test]
    fn bond_flip_examples() {
        let s: BasisState = "1010".parse().unwrap();
        assert_eq!(apply_bond_flip(&s, 1).unwrap().unwrap().to_string(), "0110");
        let p: BasisState = "1100".parse().unwrap();
        assert_eq!(apply_bond_flip(&p, 1).unwrap(), None);
        let once = apply_bond_flip(&s, 2).unwrap().unwrap();
        assert_eq!(apply_bond_flip(&once, 2).unwrap().unwrap(), s);
        assert!(apply_bond_flip(&s, 0).is_err());
        assert!(apply_bond_flip(&s, 4).is_err());
    }

    #[test]
    fn complement_indices_round_trip() {
        let n = 5;
        for site in 1..=n {
            for x in 0..(1 << n) {
                let up = x & site_mask(n, site) != 0;
                let l = complement_index(n, site, x);
                assert!(l < 1 << (n - 1));
                assert_eq!(join_index(n, site, up, l), x);
            }
        }
    }

    #[test]
    fn mixer_is_not_identity() {
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(0, 1));
    }

    proptest::proptest! {
        #[test]
        fn bond_flip_preserves_population(bits in 0u64..256, bond in 1usize..8) {
            let s = BasisState::new(8, bits).unwrap();
            if let Some(t) = apply_bond_flip(&s, bond).unwrap() {
                proptest::prop_assert_eq!(t.population(), s.population());
            }
        }
    }
}
