//! Acceptance criteria, one report line each. Runs without the libtest
//! harness so the lines come out in order; the process fails if any
//! criterion outside `EXPECTED_RED` fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::{neel, realization, rel_err, separated_seed};
use qctf_core::chain::{build_hamiltonian, ChainSpec, DisorderFields};
use qctf_core::dynamics::{diagonalize, q_measure, q_minors, reduced_density, trace_q, Evolution, StateVector};
use qctf_core::ensemble::{run_ensemble, EnsembleConfig, EnsembleMode, EnsembleResult, Sample, SiteSelection};
use qctf_core::perturb::second_order_prediction;
use qctf_core::qctf::{entanglement_polesum, static_measure, ConsolidationPolicy, PoleSum};
use qctf_core::spectral::{dft_spectrum, dominant_peaks, refine_component};
use qctf_core::stats::{
    amplitude_floor, amplitude_mode, critical_probability, critical_probability_mc, pdf_amplitude, AnalyticPdf,
    PdfKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria known to be out of reach; they still print FAIL.
const EXPECTED_RED: [&str; 2] = ["6b", "8"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn c1_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = 2 + i % 7;
        let psi = StateVector::<f64>::random(n, &mut rng);
        let site = rng.gen_range(1..=n);
        let a = q_minors(&psi, site).unwrap();
        let b = q_measure(&reduced_density(&psi, site).unwrap());
        worst = worst.max((a - b).abs());
    }
    verdict(worst <= 1e-12, format!("max |q_minors − det ρ| = {worst:.2e} over 1000 states"))
}

fn c2_static() -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for seed in 0..20 {
        let r = realization(6, 1.0, 10.0, seed);
        for i in 0..r.eig.len() {
            let v = r.eig.eigenvector(i);
            for site in 1..=6 {
                let (_, q) = static_measure(&v, site).unwrap();
                let direct = q_measure(&reduced_density(&v, site).unwrap());
                worst = worst.max((q - direct).abs());
                count += 1;
            }
        }
    }
    verdict(worst <= 1e-10, format!("max deviation {worst:.2e} over {count} (eigenstate, site) pairs"))
}

struct Crosscheck {
    worst: f64,
    asymmetry: f64,
    imaginary: f64,
}

fn crosscheck() -> Crosscheck {
    let mut out = Crosscheck {
        worst: 0.0,
        asymmetry: 0.0,
        imaginary: 0.0,
    };
    let dt = 40.0 / 99.0;
    for n in 2..=6 {
        for seed in 0..5 {
            let r = realization(n, 1.0, 10.0, seed);
            let mut sites = vec![1, n.div_ceil(2)];
            sites.dedup();
            for site in sites {
                let psi = neel(&r.spec, site);
                let q = entanglement_polesum(&r.eig, &psi, site, &ConsolidationPolicy::for_coupling(1.0)).unwrap();
                let trace = trace_q(Evolution::Spectral(&r.eig), &psi, site, 40.0, dt).unwrap();
                assert_eq!(trace.len(), 100);
                for (&t, &v) in trace.times.iter().zip(&trace.values) {
                    let z = q.eval_time(t);
                    out.worst = out.worst.max((z.re - v).abs());
                    out.imaginary = out.imaginary.max(z.im.abs());
                }
                out.asymmetry = out.asymmetry.max(q.conjugate_asymmetry(1e-9));
            }
        }
    }
    out
}

fn c3_qctf(x: &Crosscheck) -> Verdict {
    verdict(
        x.worst <= 1e-8,
        format!("max |inverse-Laplace − trace| = {:.2e} (N = 2..6, 5 seeds, 100 times)", x.worst),
    )
}

/// `Q = P(1 − P)` with `P = r sin²(Δt/2)`, `r = (J/Δ)²`, `Δ = √(δ² + J²)`.
fn rabi_poles(delta: f64, j: f64) -> Vec<(f64, f64)> {
    let big = (delta * delta + j * j).sqrt();
    let r = (j / big).powi(2);
    let first = (r * r - r) / 4.0;
    let second = -r * r / 16.0;
    vec![
        (-2.0 * big, second),
        (-big, first),
        (0.0, r / 2.0 - 3.0 * r * r / 8.0),
        (big, first),
        (2.0 * big, second),
    ]
}

fn pole_distance(q: &PoleSum<f64>, expected: &[(f64, f64)]) -> f64 {
    let mut worst = 0.0f64;
    for &(w, c) in expected {
        worst = worst.max((q.coefficient_at(w, 1e-9) - c).norm());
    }
    for p in q.terms() {
        if !expected.iter().any(|&(w, _)| (w - p.omega).abs() <= 1e-9) {
            worst = worst.max(p.coefficient.norm());
        }
    }
    worst
}

fn c4_two_spin() -> Verdict {
    let spec = ChainSpec::new(2, 1.0, 5.0).unwrap();
    let mut worst = 0.0f64;
    for delta in [0.0, 1.0, 5.0] {
        let fields = DisorderFields::new(vec![delta / 2.0, -delta / 2.0], 0);
        let eig = diagonalize(&build_hamiltonian(&spec, &fields).unwrap()).unwrap();
        let q = entanglement_polesum(&eig, &neel(&spec, 1), 1, &ConsolidationPolicy::for_coupling(1.0)).unwrap();
        worst = worst.max(pole_distance(&q, &rabi_poles(delta, 1.0)));
    }
    verdict(worst <= 1e-12, format!("max pole deviation from the Rabi solution {worst:.2e}, δ ∈ {{0, 1, 5}}"))
}

fn c5_fig3() -> Verdict {
    let (t_max, dt) = (40.0, 0.05);
    let res = 2.0 * PI / t_max;
    let spec = ChainSpec::new(12, 1.0, 10.0).unwrap();
    let seed = separated_seed(&spec, 5, 3.0);
    let r = realization(12, 1.0, 10.0, seed);
    let mut pass = true;
    let mut parts = vec![format!("seed {seed}")];
    for site in [1usize, 3] {
        let prediction = second_order_prediction(&r.fields, &r.spec, site).unwrap();
        let trace = trace_q(Evolution::Spectral(&r.eig), &neel(&r.spec, site), site, t_max, dt).unwrap();
        let spectrum = dft_spectrum(&trace).unwrap();
        let lines = prediction.entries.len();
        let peaks = dominant_peaks(&spectrum, lines + 1, true);
        let located: Vec<f64> = peaks[..lines]
            .iter()
            .map(|p| refine_component(&trace, p.omega, res).unwrap().omega)
            .collect();
        let mut unmatched: Vec<f64> = prediction.entries.iter().map(|e| e.omega).collect();
        let mut offsets = Vec::new();
        for &w in &located {
            let (k, d) = unmatched
                .iter()
                .enumerate()
                .map(|(k, &p)| (k, (p - w).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            offsets.push(d);
            unmatched.remove(k);
        }
        let mut amp_err = 0.0f64;
        for e in &prediction.entries {
            let fit = refine_component(&trace, e.omega, (0.5f64).min(e.omega / 3.0)).unwrap();
            amp_err = amp_err.max(rel_err(fit.amplitude, e.amplitude.unwrap()));
        }
        let dominance = peaks[lines].magnitude / peaks[lines - 1].magnitude;
        let ok = offsets.iter().all(|&d| d <= res) && amp_err <= 0.3 && dominance < 0.25;
        pass &= ok;
        parts.push(format!(
            "site {site}: {lines} line(s), peak offsets {:?} (≤ {res:.3}), amplitude err {:.0}%, next peak {:.2} of last",
            offsets.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>(),
            100.0 * amp_err,
            dominance
        ));
    }
    verdict(pass, parts.join("; "))
}

fn analytic(w: f64, site: SiteSelection) -> EnsembleResult {
    run_ensemble(&EnsembleConfig {
        n_sites: 6,
        coupling: 1.0,
        disorder: w,
        realizations: 10_000,
        master_seed: 2024,
        site,
        mode: EnsembleMode::Analytic,
        ..EnsembleConfig::default()
    })
    .unwrap()
}

fn c6a_histograms(ensembles: &[(f64, SiteSelection, EnsembleResult)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (w, site, r) in ensembles {
        let rep = r.reports.as_ref().unwrap();
        let tv = rep.frequency_comparison.total_variation;
        pass &= tv <= 0.05;
        let mut line = format!("W={w} {site:?}: freq TV {tv:.3}");
        if *w == 20.0 {
            let ks = rep.amplitude_comparison.ks;
            pass &= ks <= 0.05;
            line += &format!(", amp KS {ks:.3}");
        }
        parts.push(line);
    }
    verdict(pass, parts.join("; "))
}

fn c6b_simulate() -> Verdict {
    let sim = run_ensemble(&EnsembleConfig {
        n_sites: 6,
        coupling: 1.0,
        disorder: 20.0,
        realizations: 100,
        master_seed: 7,
        site: SiteSelection::Bulk,
        mode: EnsembleMode::Both,
        ..EnsembleConfig::default()
    })
    .unwrap();
    let close = |s: &Sample| rel_err(s.extracted.unwrap(), s.predicted) <= 0.3;
    let all = sim.samples.len();
    let hits = sim.samples.iter().filter(|s| close(s)).count();
    let window: Vec<&Sample> = sim.samples.iter().filter(|s| s.omega > 5.0).collect();
    let window_hits = window.iter().filter(|s| close(s)).count();
    verdict(
        hits as f64 >= 0.9 * all as f64,
        format!(
            "{hits}/{all} non-resonant entries within 30% ({:.0}%); ω > 5J only: {window_hits}/{}",
            100.0 * hits as f64 / all as f64,
            window.len()
        ),
    )
}

fn c7_floor(ensembles: &[(f64, SiteSelection, EnsembleResult)]) -> Verdict {
    let below: usize = ensembles
        .iter()
        .map(|(w, _, r)| {
            let a0 = amplitude_floor(1.0, *w);
            r.samples.iter().filter(|s| s.amplitude < a0).count()
        })
        .sum();
    let mut mode_ok = true;
    for w in [10.0, 20.0] {
        let mode: f64 = amplitude_mode(1.0, w);
        let want = (2f64.sqrt() / (3.0 * w)).powi(2);
        let peak = pdf_amplitude(mode, 1.0, w).unwrap();
        let h = mode * 1e-4;
        mode_ok &= rel_err(mode, want) <= 1e-14
            && peak > pdf_amplitude(mode - h, 1.0, w).unwrap()
            && peak > pdf_amplitude(mode + h, 1.0, w).unwrap();
    }
    verdict(
        below == 0 && mode_ok,
        format!("{below} samples below a₀; argmax at (√2J/3W)²: {mode_ok}"),
    )
}

fn c8_critical() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for wj in [10.0, 20.0] {
        let mut last = f64::INFINITY;
        for order in [2, 4, 6] {
            let f = critical_probability(order, 1.0, wj).unwrap();
            let mc = critical_probability_mc(order, 1.0, wj, 10_000_000, 11).unwrap();
            let gap = (mc.ln_estimate() - f.ln_value).abs();
            pass &= gap <= 0.5 && mc.estimate < last;
            last = mc.estimate;
            parts.push(format!("W/J={wj} 2n={order}: |Δln P| {gap:.2}"));
        }
    }
    verdict(pass, parts.join("; "))
}

fn c9_normalization(x: &Crosscheck) -> Verdict {
    let mut mass_err = 0.0f64;
    let mut jump = 0.0f64;
    for w in [10.0, 20.0] {
        for kind in [PdfKind::FrequencyBulk, PdfKind::FrequencyEdge, PdfKind::Amplitude] {
            let pdf = AnalyticPdf::<f64>::new(kind, 1.0, w).unwrap();
            mass_err = mass_err.max((pdf.total_mass() - 1.0).abs());
            if kind != PdfKind::Amplitude {
                let j = pdf.effective_coupling();
                for b in [j, 2.0 * w - j] {
                    let after = f64::from_bits(b.to_bits() + 1);
                    jump = jump.max((pdf.density(b) - pdf.density(after)).abs());
                }
            }
        }
    }
    let residue = x.asymmetry.max(x.imaginary);
    verdict(
        mass_err <= 1e-9 && jump <= 1e-12 && residue <= 1e-9,
        format!("|mass − 1| {mass_err:.1e}, breakpoint jump {jump:.1e}, imaginary residue {residue:.1e}"),
    )
}

fn c10_determinism() -> Verdict {
    let run = |workers| {
        run_ensemble(&EnsembleConfig {
            realizations: 3000,
            master_seed: 99,
            workers,
            ..EnsembleConfig::default()
        })
        .unwrap()
    };
    let (a, b) = (run(1), run(8));
    let bits = |r: &EnsembleResult| -> Vec<u64> {
        r.samples
            .iter()
            .flat_map(|s| [s.omega.to_bits(), s.amplitude.to_bits(), s.predicted.to_bits()])
            .collect()
    };
    let same = bits(&a) == bits(&b) && a.reports == b.reports && a.provenance == b.provenance;
    verdict(same, format!("{} samples, bit-identical across 1 and 8 workers: {same}", a.samples.len()))
}

fn main() {
    let mut failures = Vec::new();
    let mut report = |id: &'static str, name: &str, limit_s: u64, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let elapsed = start.elapsed();
        let pass = v.pass && within(elapsed, limit_s);
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if !pass && EXPECTED_RED.contains(&id) { " (expected)" } else { "" };
        println!(
            "criterion {id:>3} {tag}{note} {name}: {} [{:.1}s]",
            v.detail,
            elapsed.as_secs_f64()
        );
        if !pass && !EXPECTED_RED.contains(&id) {
            failures.push(id);
        }
    };

    report("1", "oracle equivalence", 60, &mut c1_oracle);
    report("2", "static measure", 60, &mut c2_static);
    let mut x = None;
    report("3", "pole-sum cross-validation", 600, &mut || {
        let c = crosscheck();
        let v = c3_qctf(&c);
        x = Some(c);
        v
    });
    let x = x.unwrap();
    report("4", "two-spin closed form", 10, &mut c4_two_spin);
    report("5", "N=12 spectrum vs prediction", 600, &mut c5_fig3);
    let mut ensembles = Vec::new();
    report("6a", "N=6 analytic ensembles", 1200, &mut || {
        for w in [10.0, 20.0] {
            for site in [SiteSelection::Bulk, SiteSelection::Edge] {
                ensembles.push((w, site, analytic(w, site)));
            }
        }
        c6a_histograms(&ensembles)
    });
    report("6b", "N=6 simulate subsample", 1200, &mut c6b_simulate);
    report("7", "amplitude floor", 10, &mut || c7_floor(&ensembles));
    report("8", "critical probability", 300, &mut c8_critical);
    report("9", "normalizations and symmetries", 60, &mut || c9_normalization(&x));
    report("10", "determinism", 120, &mut c10_determinism);

    if !failures.is_empty() {
        println!("unexpected failures: {failures:?}");
        std::process::exit(1);
    }
}
