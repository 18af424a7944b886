//! Exact time evolution and time-domain single-spin entanglement.
//!
//! The Hamiltonian conserves total `S_z`, so [`diagonalize`] solves each
//! population sector as an independent dense symmetric eigenproblem. Chains
//! beyond the dense cap go through the Lanczos propagator
//! ([`KrylovPropagator`]).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{complement_index, join_index, site_mask, BasisState, HamiltonianMatrix};
use crate::scalar::{cabs, czero, fmt17, phasor, Real};

/// Largest Hilbert space dimension handed to the dense eigensolver.
pub const DEFAULT_DENSE_CAP: usize = 1 << 12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "dimension {dimension} exceeds the dense eigensolver cap {cap}; use the Krylov propagator"
    )]
    DimensionOverCap { dimension: usize, cap: usize },
    #[error("state has {found} amplitudes, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("state norm {norm} is not 1")]
    NotNormalized { norm: f64 },
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("state has weight {weight:e} outside the diagonalized sectors")]
    UncoveredSector { weight: f64 },
    #[error("Krylov step {step}: residual {residual:e} above tolerance after {dim} vectors")]
    KrylovNotConverged {
        step: usize,
        residual: f64,
        dim: usize,
    },
    #[error("Krylov step dt·‖H‖ = {phase} outside the accuracy envelope {limit}")]
    KrylovStepTooLarge { phase: f64, limit: f64 },
    #[error("entanglement measure {q:e} at t = {t} left [0, 1/4]")]
    MeasureOutOfRange { t: f64, q: f64 },
    #[error("Rényi-2 entropy needs 0 ≤ q < 1/2, got {0}")]
    RenyiDomain(f64),
    #[error("invalid time grid: dt = {dt}, t_max = {t_max}")]
    InvalidGrid { dt: f64, t_max: f64 },
}

fn norm_tol<T: Real>() -> T {
    T::default_epsilon() * T::lit(4096.0)
}

fn range_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::default_epsilon() * T::lit(1000.0))
}

/// Normalized pure state over the `2^N` product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    n_sites: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    /// Wraps amplitudes that are already normalized (within `~1e-12` for f64).
    pub fn new(n_sites: usize, amps: Vec<Complex<T>>) -> Result<Self, DynamicsError> {
        let expected = 1usize << n_sites;
        if amps.len() != expected {
            return Err(DynamicsError::LengthMismatch {
                expected,
                found: amps.len(),
            });
        }
        let s = Self { n_sites, amps };
        let norm = s.norm();
        if (norm - T::one()).abs() > norm_tol::<T>() {
            return Err(DynamicsError::NotNormalized {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(s)
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(n_sites: usize, mut amps: Vec<Complex<T>>) -> Result<Self, DynamicsError> {
        let norm = amps.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
        if norm == T::zero() {
            return Err(DynamicsError::NotNormalized { norm: 0.0 });
        }
        for z in &mut amps {
            *z = *z / norm;
        }
        Self::new(n_sites, amps)
    }

    pub fn basis(state: &BasisState) -> Self {
        let mut amps = vec![czero(); 1 << state.n_sites()];
        amps[state.index()] = Complex::new(T::one(), T::zero());
        Self {
            n_sites: state.n_sites(),
            amps,
        }
    }

    /// Haar-like random state (normalized complex Gaussian amplitudes).
    pub fn random<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Self {
        let amps = (0..1usize << n_sites)
            .map(|_| {
                // Box–Muller
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen::<f64>();
                let r = (-2.0 * u1.ln()).sqrt();
                let th = std::f64::consts::TAU * u2;
                Complex::new(T::lit(r * th.cos()), T::lit(r * th.sin()))
            })
            .collect();
        Self::normalized(n_sites, amps).expect("gaussian vector is nonzero")
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn norm(&self) -> T {
        self.amps.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| cabs(*a - *b))
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn check_site(&self, site: usize) -> Result<(), DynamicsError> {
        if site == 0 || site > self.n_sites {
            return Err(DynamicsError::SiteOutOfRange {
                site,
                n: self.n_sites,
            });
        }
        Ok(())
    }
}

/// Eigenpairs of one population sector.
#[derive(Debug, Clone)]
pub struct EigenBlock<T> {
    population: u32,
    indices: Vec<usize>,
    energies: Vec<T>,
    vectors: DMatrix<T>,
}

impl<T: Real> EigenBlock<T> {
    pub fn population(&self) -> u32 {
        self.population
    }

    /// Basis indices spanned by this sector, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Ascending within the sector.
    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    /// Columns are eigenvectors in the sector's local basis.
    pub fn vectors(&self) -> &DMatrix<T> {
        &self.vectors
    }
}

/// Spectral decomposition of a chain Hamiltonian, stored per `S_z` sector.
#[derive(Debug, Clone)]
pub struct EigenSystem<T> {
    n_sites: usize,
    blocks: Vec<EigenBlock<T>>,
    /// (block, column) of each eigenpair in ascending energy order.
    order: Vec<(usize, usize)>,
}

impl<T: Real> EigenSystem<T> {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn blocks(&self) -> &[EigenBlock<T>] {
        &self.blocks
    }

    /// Number of eigenpairs held.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// All held energies, ascending.
    pub fn energies(&self) -> Vec<T> {
        self.order
            .iter()
            .map(|&(b, c)| self.blocks[b].energies[c])
            .collect()
    }

    pub fn energy(&self, n: usize) -> T {
        let (b, c) = self.order[n];
        self.blocks[b].energies[c]
    }

    /// Eigenvector `n` (ascending energy order) as a full-length state.
    pub fn eigenvector(&self, n: usize) -> StateVector<T> {
        let (b, c) = self.order[n];
        let block = &self.blocks[b];
        let mut amps = vec![czero(); 1 << self.n_sites];
        for (r, &x) in block.indices.iter().enumerate() {
            amps[x] = Complex::new(block.vectors[(r, c)], T::zero());
        }
        StateVector {
            n_sites: self.n_sites,
            amps,
        }
    }

    /// Overlaps `⟨n|ψ⟩`, grouped per block in local column order.
    ///
    /// Fails when `ψ` has weight outside the sectors this system covers.
    pub fn project(&self, psi: &StateVector<T>) -> Result<Vec<Vec<Complex<T>>>, DynamicsError> {
        let expected = 1usize << self.n_sites;
        if psi.amps.len() != expected {
            return Err(DynamicsError::LengthMismatch {
                expected,
                found: psi.amps.len(),
            });
        }
        let mut covered_weight = T::zero();
        let overlaps = self
            .blocks
            .iter()
            .map(|block| {
                let re = DVector::from_iterator(
                    block.indices.len(),
                    block.indices.iter().map(|&x| psi.amps[x].re),
                );
                let im = DVector::from_iterator(
                    block.indices.len(),
                    block.indices.iter().map(|&x| psi.amps[x].im),
                );
                covered_weight += re.norm_squared() + im.norm_squared();
                let pr = block.vectors.tr_mul(&re);
                let pi = block.vectors.tr_mul(&im);
                pr.iter()
                    .zip(pi.iter())
                    .map(|(&a, &b)| Complex::new(a, b))
                    .collect()
            })
            .collect();
        let outside = (psi.norm() * psi.norm() - covered_weight).abs();
        if outside > norm_tol::<T>() {
            return Err(DynamicsError::UncoveredSector {
                weight: outside.to_f64_lossy(),
            });
        }
        Ok(overlaps)
    }

    /// Dense `Σ_n E_n |n⟩⟨n|` over the covered sectors.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let d = 1usize << self.n_sites;
        let mut m = DMatrix::zeros(d, d);
        for block in &self.blocks {
            let scaled = &block.vectors * DMatrix::from_diagonal(&DVector::from_column_slice(&block.energies));
            let local = scaled * block.vectors.transpose();
            for (r, &x) in block.indices.iter().enumerate() {
                for (c, &y) in block.indices.iter().enumerate() {
                    m[(x, y)] = local[(r, c)];
                }
            }
        }
        m
    }
}

/// Full spectral decomposition, sector by sector.
pub fn diagonalize<T: Real>(h: &HamiltonianMatrix<T>) -> Result<EigenSystem<T>, DynamicsError> {
    diagonalize_with_cap(h, DEFAULT_DENSE_CAP)
}

pub fn diagonalize_with_cap<T: Real>(
    h: &HamiltonianMatrix<T>,
    cap: usize,
) -> Result<EigenSystem<T>, DynamicsError> {
    if h.dimension() > cap {
        return Err(DynamicsError::DimensionOverCap {
            dimension: h.dimension(),
            cap,
        });
    }
    let sectors: Vec<_> = h.sz_sectors().into_iter().enumerate().collect();
    Ok(assemble_system(h, sectors))
}

/// Diagonalizes only the sector with `population` up spins.
///
/// The sector dimension is checked against [`DEFAULT_DENSE_CAP`].
pub fn diagonalize_sector<T: Real>(
    h: &HamiltonianMatrix<T>,
    population: u32,
) -> Result<EigenSystem<T>, DynamicsError> {
    let indices: Vec<usize> = (0..h.dimension())
        .filter(|x| x.count_ones() == population)
        .collect();
    if indices.len() > DEFAULT_DENSE_CAP {
        return Err(DynamicsError::DimensionOverCap {
            dimension: indices.len(),
            cap: DEFAULT_DENSE_CAP,
        });
    }
    Ok(assemble_system(h, vec![(population as usize, indices)]))
}

fn assemble_system<T: Real>(
    h: &HamiltonianMatrix<T>,
    sectors: Vec<(usize, Vec<usize>)>,
) -> EigenSystem<T> {
    let mut blocks: Vec<EigenBlock<T>> = sectors
        .into_par_iter()
        .filter(|(_, idx)| !idx.is_empty())
        .map(|(pop, indices)| solve_block(h, pop as u32, indices))
        .collect();
    blocks.sort_by_key(|b| b.population);

    let mut order: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, block)| (0..block.energies.len()).map(move |c| (b, c)))
        .collect();
    order.sort_by(|&(b1, c1), &(b2, c2)| {
        blocks[b1].energies[c1]
            .partial_cmp(&blocks[b2].energies[c2])
            .expect("finite energies")
            .then((b1, c1).cmp(&(b2, c2)))
    });
    EigenSystem {
        n_sites: h.spec().n_sites(),
        blocks,
        order,
    }
}

fn solve_block<T: Real>(h: &HamiltonianMatrix<T>, population: u32, indices: Vec<usize>) -> EigenBlock<T> {
    let d = indices.len();
    let local = |x: usize| indices.binary_search(&x).expect("sector closed under H");
    let mut m = DMatrix::zeros(d, d);
    for (r, &x) in indices.iter().enumerate() {
        m[(r, r)] = h.diagonal()[x];
        for &(y, v) in h.row_couplings(x) {
            m[(r, local(y))] = v;
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut perm: Vec<usize> = (0..d).collect();
    perm.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite"));
    let energies = perm.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, perm[c])]);
    EigenBlock {
        population,
        indices,
        energies,
        vectors,
    }
}

/// Precomputed `⟨n|ψ₀⟩` for repeated spectral evolution of one initial state.
#[derive(Debug, Clone)]
pub struct SpectralPropagator<'a, T> {
    eig: &'a EigenSystem<T>,
    overlaps: Vec<Vec<Complex<T>>>,
}

impl<'a, T: Real> SpectralPropagator<'a, T> {
    pub fn new(eig: &'a EigenSystem<T>, psi0: &StateVector<T>) -> Result<Self, DynamicsError> {
        Ok(Self {
            eig,
            overlaps: eig.project(psi0)?,
        })
    }

    /// `ψ(t) = Σ_n e^{-iE_n t} ⟨n|ψ₀⟩ |n⟩`.
    pub fn state_at(&self, t: T) -> StateVector<T> {
        let mut amps = vec![czero(); 1 << self.eig.n_sites];
        for (block, ov) in self.eig.blocks.iter().zip(&self.overlaps) {
            if ov.iter().all(|z| *z == czero()) {
                continue;
            }
            let d = block.indices.len();
            let mut re = DVector::zeros(d);
            let mut im = DVector::zeros(d);
            for (c, z) in ov.iter().enumerate() {
                let w = *z * phasor(block.energies[c] * t);
                re[c] = w.re;
                im[c] = w.im;
            }
            let out_re = &block.vectors * re;
            let out_im = &block.vectors * im;
            for (r, &x) in block.indices.iter().enumerate() {
                amps[x] = Complex::new(out_re[r], out_im[r]);
            }
        }
        StateVector {
            n_sites: self.eig.n_sites,
            amps,
        }
    }
}

/// Spectral evolution `e^{-iHt} ψ₀`.
pub fn evolve<T: Real>(
    eig: &EigenSystem<T>,
    psi0: &StateVector<T>,
    t: T,
) -> Result<StateVector<T>, DynamicsError> {
    Ok(SpectralPropagator::new(eig, psi0)?.state_at(t))
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig<T> {
    /// Local error target per step.
    pub tolerance: T,
    /// Largest Krylov subspace tried before giving up.
    pub max_dim: usize,
    /// Largest accepted `dt·‖H‖`.
    pub max_phase: T,
}

impl<T: Real> Default for KrylovConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-12).max(T::default_epsilon() * T::lit(64.0)),
            max_dim: 64,
            max_phase: T::lit(25.0),
        }
    }
}

/// Lanczos propagator for `e^{-iH dt}` with adaptive subspace size.
///
/// Each step grows an orthonormal Krylov basis (full reorthogonalization)
/// until the a-posteriori estimate `β_{k} |[e^{-iT_k dt}]_{k,1}|` drops
/// below the tolerance.
#[derive(Debug, Clone)]
pub struct KrylovPropagator<'a, T> {
    h: &'a HamiltonianMatrix<T>,
    dt: T,
    config: KrylovConfig<T>,
}

impl<'a, T: Real> KrylovPropagator<'a, T> {
    pub fn new(h: &'a HamiltonianMatrix<T>, dt: T, config: KrylovConfig<T>) -> Result<Self, DynamicsError> {
        let phase = dt.abs() * h.norm_bound();
        if phase > config.max_phase {
            return Err(DynamicsError::KrylovStepTooLarge {
                phase: phase.to_f64_lossy(),
                limit: config.max_phase.to_f64_lossy(),
            });
        }
        Ok(Self { h, dt, config })
    }

    /// Advances `psi` by one step; `step` only labels errors.
    pub fn step(&self, psi: &StateVector<T>, step: usize) -> Result<StateVector<T>, DynamicsError> {
        let dim = psi.amps.len();
        let beta0 = psi.norm();
        let mut basis: Vec<Vec<Complex<T>>> = vec![psi.amps.iter().map(|z| *z / beta0).collect()];
        let mut alphas: Vec<T> = Vec::new();
        let mut betas: Vec<T> = Vec::new();
        let mut w = vec![czero(); dim];
        let breakdown = T::default_epsilon() * T::lit(100.0) * (T::one() + self.h.norm_bound());
        let mut last_residual = T::zero();

        for k in 1..=self.config.max_dim.min(dim) {
            self.h.apply(&basis[k - 1], &mut w);
            let alpha = dot(&basis[k - 1], &w).re;
            alphas.push(alpha);
            for _ in 0..2 {
                for q in &basis {
                    let proj = dot(q, &w);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= *qi * proj;
                    }
                }
            }
            let beta = w.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();

            let coeffs = tridiagonal_expm_e1(&alphas, &betas, self.dt);
            let residual = beta * cabs(coeffs[k - 1]);
            last_residual = residual;
            if beta <= breakdown || residual <= self.config.tolerance || k == dim {
                let mut out = vec![czero(); dim];
                for (q, c) in basis.iter().zip(&coeffs) {
                    let c = *c * beta0;
                    for (o, qi) in out.iter_mut().zip(q) {
                        *o += *qi * c;
                    }
                }
                return Ok(StateVector {
                    n_sites: psi.n_sites,
                    amps: out,
                });
            }
            betas.push(beta);
            basis.push(w.iter().map(|z| *z / beta).collect());
        }
        Err(DynamicsError::KrylovNotConverged {
            step,
            residual: last_residual.to_f64_lossy(),
            dim: basis.len(),
        })
    }
}

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

/// First column of `exp(-i T dt)` for the symmetric tridiagonal `T`.
fn tridiagonal_expm_e1<T: Real>(alphas: &[T], betas: &[T], dt: T) -> Vec<Complex<T>> {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (0..k)
        .map(|r| {
            (0..k).fold(czero(), |acc, j| {
                let u = eig.eigenvectors[(r, j)] * eig.eigenvectors[(0, j)];
                acc + phasor(eig.eigenvalues[j] * dt) * u
            })
        })
        .collect()
}

/// `steps` Krylov steps of size `dt`; returns `steps + 1` states starting with `ψ₀`.
pub fn evolve_krylov<T: Real>(
    h: &HamiltonianMatrix<T>,
    psi0: &StateVector<T>,
    dt: T,
    steps: usize,
) -> Result<Vec<StateVector<T>>, DynamicsError> {
    let prop = KrylovPropagator::new(h, dt, KrylovConfig::default())?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi0.clone());
    for s in 1..=steps {
        let next = prop.step(&out[s - 1], s)?;
        out.push(next);
    }
    Ok(out)
}

/// 2×2 reduced density matrix of one spin; row/column 0 is spin-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedDensity<T> {
    pub up_up: T,
    pub down_down: T,
    /// `⟨↑|ρ|↓⟩`
    pub up_down: Complex<T>,
}

impl<T: Real> ReducedDensity<T> {
    pub fn from_matrix(m: [[Complex<T>; 2]; 2]) -> Self {
        Self {
            up_up: m[0][0].re,
            down_down: m[1][1].re,
            up_down: m[0][1],
        }
    }

    pub fn matrix(&self) -> [[Complex<T>; 2]; 2] {
        [
            [Complex::new(self.up_up, T::zero()), self.up_down],
            [self.up_down.conj(), Complex::new(self.down_down, T::zero())],
        ]
    }

    pub fn trace(&self) -> T {
        self.up_up + self.down_down
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> [T; 2] {
        let mean = self.trace() * T::half();
        let diff = (self.up_up - self.down_down) * T::half();
        let r = (diff * diff + self.up_down.norm_sqr()).sqrt();
        [mean - r, mean + r]
    }
}

/// Partial trace of `|ψ⟩⟨ψ|` over every site except `site`.
pub fn reduced_density<T: Real>(
    psi: &StateVector<T>,
    site: usize,
) -> Result<ReducedDensity<T>, DynamicsError> {
    psi.check_site(site)?;
    let n = psi.n_sites;
    let mask = site_mask(n, site);
    let mut uu = T::zero();
    let mut dd = T::zero();
    let mut ud = czero();
    for (x, up) in psi.amps.iter().enumerate() {
        if x & mask == 0 {
            continue;
        }
        let down = psi.amps[x ^ mask];
        uu += up.norm_sqr();
        dd += down.norm_sqr();
        ud += *up * down.conj();
    }
    Ok(ReducedDensity {
        up_up: uu,
        down_down: dd,
        up_down: ud,
    })
}

/// `Q = det ρ = ρ↑↑ ρ↓↓ − |ρ↑↓|²`.
pub fn q_measure<T: Real>(rho: &ReducedDensity<T>) -> T {
    rho.up_up * rho.down_down - rho.up_down.norm_sqr()
}

/// `Q` from the coefficient matrix `M_{a,l} = ⟨a l|ψ⟩` (2 × d) as the sum of
/// squared 2×2 minors `Σ_{i<j} |M_{+i} M_{-j} − M_{+j} M_{-i}|²`.
pub fn q_minors<T: Real>(psi: &StateVector<T>, site: usize) -> Result<T, DynamicsError> {
    psi.check_site(site)?;
    let n = psi.n_sites;
    let d = 1usize << (n - 1);
    let plus: Vec<_> = (0..d).map(|l| psi.amps[join_index(n, site, true, l)]).collect();
    let minus: Vec<_> = (0..d).map(|l| psi.amps[join_index(n, site, false, l)]).collect();
    let mut acc = T::zero();
    for i in 0..d {
        for j in (i + 1)..d {
            acc += (plus[i] * minus[j] - plus[j] * minus[i]).norm_sqr();
        }
    }
    Ok(acc)
}

/// Second-order Rényi entropy `S₂ = −ln(1 − 2Q)`.
pub fn renyi2<T: Real>(q: T) -> Result<T, DynamicsError> {
    if q < -range_tol::<T>() || q >= T::half() || q != q {
        return Err(DynamicsError::RenyiDomain(q.to_f64_lossy()));
    }
    Ok(-(T::one() - q - q).ln())
}

/// Uniformly sampled `Q_M(t_j)`, `t_j = j·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementTrace<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> EntanglementTrace<T> {
    pub fn dt(&self) -> T {
        if self.times.len() < 2 {
            T::zero()
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `t,q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,q\n");
        for (t, q) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*q));
        }
        out
    }

    pub fn renyi2(&self) -> Result<Vec<T>, DynamicsError> {
        self.values.iter().map(|&q| renyi2(q)).collect()
    }
}

/// Which propagator drives [`trace_q`].
#[derive(Debug, Clone, Copy)]
pub enum Evolution<'a, T> {
    Spectral(&'a EigenSystem<T>),
    Krylov {
        hamiltonian: &'a HamiltonianMatrix<T>,
        config: KrylovConfig<T>,
    },
}

/// Number of grid points `t_j = j·dt ≤ t_max`.
pub fn grid_len<T: Real>(t_max: T, dt: T) -> usize {
    let ratio = (t_max / dt).to_f64_lossy();
    (ratio + 1e-9).floor() as usize + 1
}

/// Samples `Q_M(t)` for spin `site` on a uniform grid up to `t_max`.
///
/// Values outside `[−1e-12, 1/4 + 1e-12]` abort the trace.
pub fn trace_q<T: Real>(
    evolution: Evolution<'_, T>,
    psi0: &StateVector<T>,
    site: usize,
    t_max: T,
    dt: T,
) -> Result<EntanglementTrace<T>, DynamicsError> {
    psi0.check_site(site)?;
    if !(dt > T::zero()) || t_max < dt {
        return Err(DynamicsError::InvalidGrid {
            dt: dt.to_f64_lossy(),
            t_max: t_max.to_f64_lossy(),
        });
    }
    let m = grid_len(t_max, dt);
    let times: Vec<T> = (0..m).map(|j| T::lit(j as f64) * dt).collect();
    let values: Vec<T> = match evolution {
        Evolution::Spectral(eig) => {
            let prop = SpectralPropagator::new(eig, psi0)?;
            times
                .par_iter()
                .map(|&t| q_of(&prop.state_at(t), site))
                .collect::<Result<_, _>>()?
        }
        Evolution::Krylov {
            hamiltonian,
            config,
        } => {
            let prop = KrylovPropagator::new(hamiltonian, dt, config)?;
            let mut psi = psi0.clone();
            let mut values = Vec::with_capacity(m);
            for j in 0..m {
                if j > 0 {
                    psi = prop.step(&psi, j)?;
                }
                values.push(q_of(&psi, site)?);
            }
            values
        }
    };
    let tol = range_tol::<T>();
    for (t, q) in times.iter().zip(&values) {
        if *q < -tol || *q > T::quarter() + tol || *q != *q {
            return Err(DynamicsError::MeasureOutOfRange {
                t: t.to_f64_lossy(),
                q: q.to_f64_lossy(),
            });
        }
    }
    Ok(EntanglementTrace { times, values })
}

fn q_of<T: Real>(psi: &StateVector<T>, site: usize) -> Result<T, DynamicsError> {
    Ok(q_measure(&reduced_density(psi, site)?))
}

/// Complement-space coefficient `⟨a l|ψ⟩`.
pub fn split_amplitude<T: Real>(psi: &StateVector<T>, site: usize, up: bool, l: usize) -> Complex<T> {
    psi.amps[join_index(psi.n_sites, site, up, l)]
}

/// Inverse of [`split_amplitude`]'s indexing: `(spin-up?, l)` of basis index `x`.
pub fn split_index(n_sites: usize, site: usize, x: usize) -> (bool, usize) {
    (x & site_mask(n_sites, site) != 0, complement_index(n_sites, site, x))
}
