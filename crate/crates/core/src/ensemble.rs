//! Disorder ensembles: per-realization predictions (and optionally exact
//! evolution), reconstructed densities, and on-disk persistence.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{build_hamiltonian, mix_seed, sample_disorder, ChainError, ChainSpec};
use crate::dynamics::{diagonalize, trace_q, DynamicsError, Evolution, StateVector};
use crate::perturb::{second_order_prediction, state_network, PerturbError};
use crate::scalar::fmt17;
use crate::spectral::{line_weight, SpectralError};
use crate::stats::{
    amplitude_floor, build_histogram, compare_histogram, AnalyticPdf, BinPolicy, Comparison, Histogram, PdfKind,
    StatsError,
};

/// On-disk layout version.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest chain simulate mode accepts.
pub const MAX_SIMULATE_SITES: usize = 12;

/// Fraction of failed realizations that aborts a run.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Multiplet members weaker than this fraction of the main line are ignored.
pub const LINE_FLOOR: f64 = 0.1;

const CHECKSUM_FILE: &str = "checksums.sha256";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} realizations failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("schema version {found} cannot be read by this build (expects {expected}); migrate the directory")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("corrupt ensemble file {file}: {reason}")]
    Corrupt { file: String, reason: String },
    #[error("no samples to reconstruct from")]
    EmptySamples,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteSelection {
    /// Site 1.
    Edge,
    /// Site 3, two sites in from the left edge.
    Bulk,
}

impl SiteSelection {
    pub fn site(self) -> usize {
        match self {
            SiteSelection::Edge => 1,
            SiteSelection::Bulk => 3,
        }
    }

    pub fn is_edge(self) -> bool {
        self == SiteSelection::Edge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    Analytic,
    Simulate,
    Both,
}

impl EnsembleMode {
    pub fn simulates(self) -> bool {
        self != EnsembleMode::Analytic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_sites: usize,
    pub coupling: f64,
    pub disorder: f64,
    pub realizations: usize,
    pub master_seed: u64,
    pub site: SiteSelection,
    pub mode: EnsembleMode,
    pub t_max: f64,
    pub dt: f64,
    /// Entries with `|Δh| < resonance_tol · J` are excluded.
    pub resonance_tol: f64,
    /// Frequency comparisons use `ω > window_min · J`.
    pub window_min: f64,
    /// Half-width, in units of `J`, of the window searched around each
    /// predicted frequency when extracting amplitudes from evolution.
    pub search_width: f64,
    /// Most lines summed into one extracted amplitude.
    pub max_lines: usize,
    pub bins: usize,
    /// Worker threads; 0 uses the global pool. Not persisted: results do
    /// not depend on it.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_sites: 6,
            coupling: 1.0,
            disorder: 10.0,
            realizations: 10_000,
            master_seed: 0,
            site: SiteSelection::Bulk,
            mode: EnsembleMode::Analytic,
            t_max: 100.0,
            dt: 0.05,
            resonance_tol: 0.05,
            window_min: 5.0,
            search_width: 1.0,
            max_lines: 4,
            bins: 64,
            workers: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self) -> Result<ChainSpec<f64>, EnsembleError> {
        Ok(ChainSpec::new(self.n_sites, self.coupling, self.disorder)?)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        self.spec()?;
        let bad = |m: String| Err(EnsembleError::Config(m));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.site == SiteSelection::Bulk && self.n_sites < 5 {
            return bad(format!("bulk site 3 needs N ≥ 5, got {}", self.n_sites));
        }
        if self.mode.simulates() {
            if self.n_sites > MAX_SIMULATE_SITES {
                return bad(format!("simulate mode supports N ≤ {MAX_SIMULATE_SITES}"));
            }
            if !(self.dt > 0.0 && self.t_max > self.dt) {
                return bad(format!("need 0 < dt < t_max, got dt = {}, t_max = {}", self.dt, self.t_max));
            }
        }
        if !(self.resonance_tol >= 0.0) || !(self.window_min >= 0.0) || !(self.search_width >= 0.0) || self.bins == 0 {
            return bad("tolerances must be non-negative and bins positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One non-resonant second-order entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub realization: u64,
    /// `+1` for the right neighbour, `−1` for the left.
    pub neighbor: i8,
    /// `h_r − h_neighbour`.
    pub delta_h: f64,
    pub omega: f64,
    /// `J²/(2Δh²)`, the variable whose density has the closed form.
    pub amplitude: f64,
    /// `2|c|²` with first-order energy denominators.
    pub predicted: f64,
    /// Least-squares amplitude near `omega` from exact evolution.
    pub extracted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub realization: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
}

/// Histograms and their comparison with the closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfReports {
    pub frequency: Histogram<f64>,
    pub amplitude: Histogram<f64>,
    pub frequency_comparison: Comparison,
    pub amplitude_comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub config: EnsembleConfig,
    pub samples: Vec<Sample>,
    /// Entries dropped for `|Δh| < resonance_tol · J`.
    pub excluded: usize,
    pub failures: Vec<Failure>,
    pub reports: Option<PdfReports>,
    pub provenance: Provenance,
}

impl EnsembleResult {
    pub fn frequencies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.omega).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.amplitude).collect()
    }

    /// Neighbours per realization: 1 at the edge, 2 in the bulk.
    pub fn neighbors(&self) -> usize {
        if self.config.site.is_edge() {
            1
        } else {
            2
        }
    }
}

struct Outcome {
    samples: Vec<Sample>,
    excluded: usize,
}

#[derive(Debug, Error)]
enum RealizationError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn realize(cfg: &EnsembleConfig, spec: &ChainSpec<f64>, index: u64) -> Result<Outcome, RealizationError> {
    let site = cfg.site.site();
    let fields = sample_disorder(spec, mix_seed(cfg.master_seed, index));
    let prediction = second_order_prediction(&fields, spec, site)?;
    let neighbors: Vec<(i8, usize)> = [(1i8, site + 1), (-1i8, site.wrapping_sub(1))]
        .into_iter()
        .filter(|&(_, s)| s >= 1 && s <= cfg.n_sites)
        .collect();
    debug_assert_eq!(neighbors.len(), prediction.entries.len());

    let tol = cfg.resonance_tol * cfg.coupling;
    let mut samples = Vec::new();
    let mut excluded = 0;
    for (&(neighbor, nb), entry) in neighbors.iter().zip(&prediction.entries) {
        let delta_h = fields.h(site) - fields.h(nb);
        match entry.amplitude {
            Some(a) if delta_h.abs() >= tol && !entry.resonant => samples.push(Sample {
                realization: index,
                neighbor,
                delta_h,
                omega: entry.omega,
                amplitude: cfg.coupling * cfg.coupling / (2.0 * delta_h * delta_h),
                predicted: a,
                extracted: None,
            }),
            _ => excluded += 1,
        }
    }

    if cfg.mode.simulates() && !samples.is_empty() {
        let h = build_hamiltonian(spec, &fields)?;
        let eig = diagonalize(&h)?;
        let net = state_network(spec, site)?;
        let psi0 = StateVector::basis(net.get(0).expect("Néel state"));
        let trace = trace_q(Evolution::Spectral(&eig), &psi0, site, cfg.t_max, cfg.dt)?;
        let omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
        for (k, s) in samples.iter_mut().enumerate() {
            let gap = omegas
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &w)| 0.5 * (w - s.omega).abs())
                .fold(f64::INFINITY, f64::min);
            let halfwidth = (cfg.search_width * cfg.coupling).min(gap).min(s.omega / 3.0);
            let fit = line_weight(&trace, s.omega, halfwidth, cfg.max_lines, LINE_FLOOR)?;
            s.extracted = Some(fit.components.iter().map(|c| c.amplitude).sum());
        }
    }
    Ok(Outcome { samples, excluded })
}

/// Runs every realization; results do not depend on `workers`.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleResult, EnsembleError> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let work = || -> Vec<Result<Outcome, String>> {
        (0..cfg.realizations as u64)
            .into_par_iter()
            .map(|i| realize(cfg, &spec, i).map_err(|e| e.to_string()))
            .collect()
    };
    let outcomes = if cfg.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| EnsembleError::Config(e.to_string()))?
            .install(work)
    };

    let mut samples = Vec::new();
    let mut excluded = 0;
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => {
                samples.extend(o.samples);
                excluded += o.excluded;
            }
            Err(message) => failures.push(Failure {
                realization: i as u64,
                message,
            }),
        }
    }
    if failures.len() as f64 > FAILURE_BUDGET * cfg.realizations as f64 {
        return Err(EnsembleError::TooManyFailures {
            failed: failures.len(),
            total: cfg.realizations,
            first: failures[0].message.clone(),
        });
    }

    let mut result = EnsembleResult {
        config: cfg.clone(),
        samples,
        excluded,
        failures,
        reports: None,
        provenance: Provenance {
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    result.reports = reconstruct_pdfs(&result).ok();
    Ok(result)
}

/// Histograms of the ensemble's samples against the matching closed forms.
pub fn reconstruct_pdfs(res: &EnsembleResult) -> Result<PdfReports, EnsembleError> {
    let c = &res.config;
    reconstruct_pdfs_from(
        &res.frequencies(),
        &res.amplitudes(),
        c.coupling,
        c.disorder,
        c.site.is_edge(),
        &BinPolicy { bins: c.bins },
        c.window_min,
    )
}

/// As [`reconstruct_pdfs`] for bare sample lists. Frequencies compare on
/// `(window_min·J, 2W + J_eff]`, amplitudes on `[a₀, ∞)`.
pub fn reconstruct_pdfs_from(
    frequencies: &[f64],
    amplitudes: &[f64],
    coupling: f64,
    disorder: f64,
    edge: bool,
    policy: &BinPolicy,
    window_min: f64,
) -> Result<PdfReports, EnsembleError> {
    if frequencies.is_empty() || amplitudes.is_empty() {
        return Err(EnsembleError::EmptySamples);
    }
    let kind = if edge { PdfKind::FrequencyEdge } else { PdfKind::FrequencyBulk };
    let fpdf = AnalyticPdf::new(kind, coupling, disorder)?;
    let apdf = AnalyticPdf::new(PdfKind::Amplitude, coupling, disorder)?;
    let frequency = build_histogram(frequencies, policy)?;
    let amplitude = build_histogram(amplitudes, policy)?;
    let frequency_comparison = compare_histogram(&frequency, &fpdf, (window_min * coupling, fpdf.support().1))?;
    let amplitude_comparison = compare_histogram(&amplitude, &apdf, (amplitude_floor(coupling, disorder), f64::MAX))?;
    Ok(PdfReports {
        frequency,
        amplitude,
        frequency_comparison,
        amplitude_comparison,
    })
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    schema_version: u32,
    config: EnsembleConfig,
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    excluded: usize,
    failures: Vec<Failure>,
    provenance: Provenance,
    samples: usize,
    comparisons: Option<[ComparisonRecord; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ComparisonRecord {
    name: String,
    tv: f64,
    ks: f64,
    window: [f64; 2],
    samples: usize,
}

impl ComparisonRecord {
    fn new(name: &str, c: &Comparison) -> Self {
        Self {
            name: name.into(),
            tv: c.total_variation,
            ks: c.ks,
            window: [c.window.0, c.window.1],
            samples: c.samples,
        }
    }

    fn restore(&self) -> Comparison {
        Comparison {
            total_variation: self.tv,
            ks: self.ks,
            window: (self.window[0], self.window[1]),
            samples: self.samples,
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn samples_csv(samples: &[Sample]) -> Result<Vec<u8>, EnsembleError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["realization", "neighbor", "delta_h", "omega", "amplitude", "predicted", "extracted"])?;
    for s in samples {
        w.write_record([
            s.realization.to_string(),
            s.neighbor.to_string(),
            fmt17(s.delta_h),
            fmt17(s.omega),
            fmt17(s.amplitude),
            fmt17(s.predicted),
            s.extracted.map(fmt17).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| EnsembleError::Io(e.into_error()))
}

fn parse_samples(bytes: &[u8]) -> Result<Vec<Sample>, EnsembleError> {
    let corrupt = |reason: String| EnsembleError::Corrupt {
        file: "samples.csv".into(),
        reason,
    };
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(bytes).records() {
        let rec = rec?;
        if rec.len() != 7 {
            return Err(corrupt(format!("expected 7 fields, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| corrupt(e.to_string()));
        out.push(Sample {
            realization: rec[0].parse().map_err(|e: std::num::ParseIntError| corrupt(e.to_string()))?,
            neighbor: rec[1].parse().map_err(|e: std::num::ParseIntError| corrupt(e.to_string()))?,
            delta_h: num(2)?,
            omega: num(3)?,
            amplitude: num(4)?,
            predicted: num(5)?,
            extracted: if rec[6].is_empty() { None } else { Some(num(6)?) },
        });
    }
    Ok(out)
}

/// Writes `config.json`, `samples.csv`, `histograms/*.csv`, `report.json`
/// and a SHA-256 manifest of all of them.
pub fn persist(res: &EnsembleResult, dir: &Path) -> Result<(), EnsembleError> {
    fs::create_dir_all(dir.join("histograms"))?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let config = ConfigFile {
        schema_version: SCHEMA_VERSION,
        config: res.config.clone(),
    };
    files.push(("config.json".into(), serde_json::to_vec_pretty(&config)?));
    files.push(("samples.csv".into(), samples_csv(&res.samples)?));
    if let Some(r) = &res.reports {
        files.push(("histograms/frequency.csv".into(), r.frequency.to_csv().into_bytes()));
        files.push(("histograms/amplitude.csv".into(), r.amplitude.to_csv().into_bytes()));
    }
    let report = ReportFile {
        excluded: res.excluded,
        failures: res.failures.clone(),
        provenance: res.provenance.clone(),
        samples: res.samples.len(),
        comparisons: res.reports.as_ref().map(|r| {
            [
                ComparisonRecord::new("frequency", &r.frequency_comparison),
                ComparisonRecord::new("amplitude", &r.amplitude_comparison),
            ]
        }),
    };
    files.push(("report.json".into(), serde_json::to_vec_pretty(&report)?));

    let mut manifest = String::new();
    for (name, bytes) in &files {
        fs::write(dir.join(name), bytes)?;
        manifest.push_str(&format!("{}  {}\n", sha256_hex(bytes), name));
    }
    fs::write(dir.join(CHECKSUM_FILE), manifest)?;
    Ok(())
}

/// Reads a directory written by [`persist`], verifying every checksum.
pub fn load(dir: &Path) -> Result<EnsembleResult, EnsembleError> {
    let manifest = fs::read_to_string(dir.join(CHECKSUM_FILE))?;
    let mut contents = std::collections::BTreeMap::new();
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let (digest, name) = line.split_once("  ").ok_or_else(|| EnsembleError::Corrupt {
            file: CHECKSUM_FILE.into(),
            reason: format!("bad line {line:?}"),
        })?;
        let bytes = fs::read(dir.join(name))?;
        if sha256_hex(&bytes) != digest {
            return Err(EnsembleError::Checksum(name.into()));
        }
        contents.insert(name.to_string(), bytes);
    }
    let get = |name: &str| {
        contents.get(name).ok_or_else(|| EnsembleError::Corrupt {
            file: name.into(),
            reason: "missing from checksum manifest".into(),
        })
    };

    let value: serde_json::Value = serde_json::from_slice(get("config.json")?)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(EnsembleError::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    let config: ConfigFile = serde_json::from_value(value)?;
    let report: ReportFile = serde_json::from_slice(get("report.json")?)?;
    let samples = parse_samples(get("samples.csv")?)?;
    if samples.len() != report.samples {
        return Err(EnsembleError::Corrupt {
            file: "samples.csv".into(),
            reason: format!("{} rows, report says {}", samples.len(), report.samples),
        });
    }
    let reports = match report.comparisons {
        None => None,
        Some([f, a]) => {
            let hist = |name: &str| -> Result<Histogram<f64>, EnsembleError> {
                let text = String::from_utf8_lossy(get(name)?).into_owned();
                let h = Histogram::from_csv(&text).ok_or_else(|| EnsembleError::Corrupt {
                    file: name.into(),
                    reason: "unreadable histogram".into(),
                })?;
                Ok(h.with_samples(samples.len()))
            };
            Some(PdfReports {
                frequency: hist("histograms/frequency.csv")?,
                amplitude: hist("histograms/amplitude.csv")?,
                frequency_comparison: f.restore(),
                amplitude_comparison: a.restore(),
            })
        }
    };
    Ok(EnsembleResult {
        config: config.config,
        samples,
        excluded: report.excluded,
        failures: report.failures,
        reports,
        provenance: report.provenance,
    })
}
