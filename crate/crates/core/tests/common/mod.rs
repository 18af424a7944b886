#![allow(dead_code)]

use qctf_core::chain::{build_hamiltonian, sample_disorder, ChainSpec, DisorderFields};
use qctf_core::dynamics::{diagonalize, EigenSystem, StateVector};
use qctf_core::perturb::state_network;

pub struct Realization {
    pub spec: ChainSpec<f64>,
    pub fields: DisorderFields<f64>,
    pub eig: EigenSystem<f64>,
}

pub fn realization(n: usize, j: f64, w: f64, seed: u64) -> Realization {
    let spec = ChainSpec::new(n, j, w).unwrap();
    let fields = sample_disorder(&spec, seed);
    let eig = diagonalize(&build_hamiltonian(&spec, &fields).unwrap()).unwrap();
    Realization { spec, fields, eig }
}

/// The Néel state with `site` up.
pub fn neel(spec: &ChainSpec<f64>, site: usize) -> StateVector<f64> {
    StateVector::basis(state_network(spec, site).unwrap().get(0).unwrap())
}

/// First seed whose bonds `1..=bonds` all have `|h_k − h_{k+1}| ≥ gap`.
pub fn separated_seed(spec: &ChainSpec<f64>, bonds: usize, gap: f64) -> u64 {
    (0..)
        .find(|&s| {
            let f = sample_disorder(spec, s);
            (1..=bonds).all(|b| (f.h(b) - f.h(b + 1)).abs() >= gap)
        })
        .unwrap()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}
