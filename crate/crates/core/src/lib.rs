//! Entanglement dynamics of a single spin in a disordered Heisenberg chain:
//! exact evolution, pole-sum transforms of the determinant measure,
//! perturbative predictions, and their disorder statistics.
//!
//! Numerical types are generic over [`scalar::Real`]; the aliases below fix
//! them to `f64` or `f32`.

pub mod chain;
pub mod dynamics;
pub mod ensemble;
pub mod perturb;
pub mod qctf;
pub mod scalar;
pub mod spectral;
pub mod stats;

pub use scalar::Real;

pub type ChainSpecF64 = chain::ChainSpec<f64>;
pub type DisorderFieldsF64 = chain::DisorderFields<f64>;
pub type HamiltonianF64 = chain::HamiltonianMatrix<f64>;
pub type StateVectorF64 = dynamics::StateVector<f64>;
pub type EigenSystemF64 = dynamics::EigenSystem<f64>;
pub type TraceF64 = dynamics::EntanglementTrace<f64>;
pub type PoleSumF64 = qctf::PoleSum<f64>;
pub type PredictionF64 = perturb::PerturbationPrediction<f64>;
pub type AnalyticPdfF64 = stats::AnalyticPdf<f64>;
pub type HistogramF64 = stats::Histogram<f64>;

pub type ChainSpecF32 = chain::ChainSpec<f32>;
pub type DisorderFieldsF32 = chain::DisorderFields<f32>;
pub type HamiltonianF32 = chain::HamiltonianMatrix<f32>;
pub type StateVectorF32 = dynamics::StateVector<f32>;
pub type EigenSystemF32 = dynamics::EigenSystem<f32>;
pub type TraceF32 = dynamics::EntanglementTrace<f32>;
pub type PoleSumF32 = qctf::PoleSum<f32>;
pub type PredictionF32 = perturb::PerturbationPrediction<f32>;
pub type AnalyticPdfF32 = stats::AnalyticPdf<f32>;
pub type HistogramF32 = stats::Histogram<f32>;
