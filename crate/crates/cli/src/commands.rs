use std::fmt::Write as _;

use qctf_core::chain::{build_hamiltonian, sample_disorder, ChainSpec, DisorderFields};
use qctf_core::dynamics::{diagonalize, trace_q, EigenSystem, EntanglementTrace, Evolution, KrylovConfig, StateVector};
use qctf_core::ensemble::{persist, run_ensemble, EnsembleConfig, EnsembleError, EnsembleMode, SiteSelection};
use qctf_core::perturb::{prediction_through_fourth_order, second_order_prediction, state_network};
use qctf_core::qctf::{entanglement_polesum_budgeted, nonlocality_overlap, static_measure, ConsolidationPolicy};
use qctf_core::scalar::fmt17;
use qctf_core::spectral::{dft_spectrum_with, refine_component, Window};
use qctf_core::stats::{critical_probability, critical_probability_mc, AnalyticPdf, PdfKind};

use crate::manifest::Record;
use crate::{
    ChainArgs, CliError, CliResult, CriticalArgs, EigenArgs, EnsembleArgs, ModeArg, PdfArgs, PdfKindArg, PredictArgs,
    QctfArgs, SimulateArgs,
};

/// Dense diagonalization limit for the commands that need eigenstates.
const DENSE_SITES: usize = 12;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn config_of<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("flag structs serialize")
}

fn chain(a: &ChainArgs) -> CliResult<(ChainSpec<f64>, DisorderFields<f64>)> {
    if a.j == 0.0 && a.w == 0.0 {
        return Err(usage("J = 0 and W = 0 leave nothing to simulate"));
    }
    let spec = ChainSpec::new(a.n, a.j, a.w).map_err(usage)?;
    spec.check_site(a.site).map_err(usage)?;
    Ok((spec, sample_disorder(&spec, a.seed)))
}

fn dense(spec: &ChainSpec<f64>, fields: &DisorderFields<f64>) -> CliResult<EigenSystem<f64>> {
    if spec.n_sites() > DENSE_SITES {
        return Err(usage(format!("this command diagonalizes densely and supports N ≤ {DENSE_SITES}")));
    }
    let h = build_hamiltonian(spec, fields).map_err(numeric)?;
    diagonalize(&h).map_err(numeric)
}

fn neel(spec: &ChainSpec<f64>, site: usize) -> CliResult<StateVector<f64>> {
    let net = state_network(spec, site).map_err(usage)?;
    Ok(StateVector::basis(net.get(0).expect("network holds the initial state")))
}

fn fields_csv(fields: &DisorderFields<f64>, n: usize) -> Vec<u8> {
    let mut s = String::from("site,h\n");
    for k in 1..=n {
        let _ = writeln!(s, "{k},{}", fmt17(fields.h(k)));
    }
    s.into_bytes()
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn q_range(trace: &EntanglementTrace<f64>) -> (f64, f64) {
    trace
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| (lo.min(q), hi.max(q)))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Record> {
    let (spec, fields) = chain(&a.chain)?;
    let (tmax, dt) = (a.time.tmax, a.time.dt);
    if !(dt > 0.0 && tmax > dt) {
        return Err(usage(format!("need 0 < dt < tmax, got dt = {dt}, tmax = {tmax}")));
    }
    let site = a.chain.site;
    let psi0 = neel(&spec, site)?;
    let trace = if spec.n_sites() <= DENSE_SITES {
        let eig = dense(&spec, &fields)?;
        trace_q(Evolution::Spectral(&eig), &psi0, site, tmax, dt)
    } else {
        let h = build_hamiltonian(&spec, &fields).map_err(numeric)?;
        let config = KrylovConfig::default();
        trace_q(Evolution::Krylov { hamiltonian: &h, config }, &psi0, site, tmax, dt)
    }
    .map_err(numeric)?;
    let window = if a.hann { Window::Hann } else { Window::Rectangular };
    let spectrum = dft_spectrum_with(&trace, window).map_err(numeric)?;
    let prediction = prediction_through_fourth_order(&fields, &spec, site).map_err(numeric)?;

    let nyquist = std::f64::consts::PI / dt;
    let mut overlay = String::from("order,omega,amplitude,resonant,measured_omega,measured_amplitude\n");
    for e in &prediction.entries {
        let measured = if e.omega > 0.0 && e.omega < nyquist && !e.resonant {
            let halfwidth = (0.5 * spec.coupling()).min(e.omega / 3.0);
            refine_component(&trace, e.omega, halfwidth).ok()
        } else {
            None
        };
        let _ = writeln!(
            overlay,
            "{},{},{},{},{},{}",
            e.order,
            fmt17(e.omega),
            opt(e.amplitude),
            e.resonant,
            opt(measured.map(|c| c.omega)),
            opt(measured.map(|c| c.amplitude)),
        );
    }

    let (lo, hi) = q_range(&trace);
    let mut record = Record {
        config: config_of(a),
        seed: Some(a.chain.seed),
        files: vec![
            ("fields.csv".into(), fields_csv(&fields, spec.n_sites())),
            ("trace.csv".into(), trace.to_csv().into_bytes()),
            ("spectrum.csv".into(), spectrum.to_csv().into_bytes()),
            ("overlay.csv".into(), overlay.into_bytes()),
        ],
        summary: vec![
            format!("Q range [{lo:.6e}, {hi:.6e}] over {} samples", trace.len()),
            format!("{} predicted lines", prediction.entries.len()),
        ],
        ..Record::default()
    };
    if lo < -1e-12 || hi > 0.25 + 1e-12 {
        record.violation = Some(format!("Q left [0, 1/4]: [{lo}, {hi}]"));
    }
    Ok(record)
}

pub fn predict(a: &PredictArgs) -> CliResult<Record> {
    let (spec, fields) = chain(&a.chain)?;
    let site = a.chain.site;
    let prediction = if a.fourth {
        prediction_through_fourth_order(&fields, &spec, site)
    } else {
        second_order_prediction(&fields, &spec, site)
    }
    .map_err(numeric)?;
    let summary = prediction
        .entries
        .iter()
        .map(|e| {
            format!(
                "order {} omega {:.6} amplitude {}",
                e.order,
                e.omega,
                e.amplitude.map_or("-".into(), |x| format!("{x:.6e}"))
            )
        })
        .collect();
    Ok(Record {
        config: config_of(a),
        seed: Some(a.chain.seed),
        files: vec![
            ("fields.csv".into(), fields_csv(&fields, spec.n_sites())),
            ("prediction.json".into(), (prediction.to_json() + "\n").into_bytes()),
        ],
        summary,
        ..Record::default()
    })
}

pub fn qctf(a: &QctfArgs) -> CliResult<Record> {
    let (spec, fields) = chain(&a.chain)?;
    if a.points < 2 || !(a.tmax > 0.0) {
        return Err(usage("need at least 2 points on a positive time span"));
    }
    if !(a.prune >= 0.0) || !(a.tol > 0.0) {
        return Err(usage("prune must be ≥ 0 and tol > 0"));
    }
    let site = a.chain.site;
    let eig = dense(&spec, &fields)?;
    let psi0 = neel(&spec, site)?;
    let policy = ConsolidationPolicy {
        prune_floor: a.prune,
        ..ConsolidationPolicy::for_coupling(spec.coupling())
    };
    let (poles, budget) = entanglement_polesum_budgeted(&eig, &psi0, site, &policy).map_err(numeric)?;
    let dt = a.tmax / (a.points - 1) as f64;
    let trace = trace_q(Evolution::Spectral(&eig), &psi0, site, a.tmax, dt).map_err(numeric)?;

    let mut check = String::from("t,trace,poles,deviation\n");
    let mut worst = 0.0f64;
    for (&t, &q) in trace.times.iter().zip(&trace.values) {
        let p = poles.eval_time(t).re;
        let d = (p - q).abs();
        worst = worst.max(d);
        let _ = writeln!(check, "{},{},{},{}", fmt17(t), fmt17(q), fmt17(p), fmt17(d));
    }
    let report = serde_json::json!({
        "poles": poles.len(),
        "max_deviation": worst,
        "tolerance": a.tol,
        "pruning_budget": budget,
        "points": trace.len(),
    });
    let violation =
        (worst > a.tol).then(|| format!("max |inverse-Laplace − trace| = {worst:.3e} exceeds {:.1e}", a.tol));
    Ok(Record {
        config: config_of(a),
        seed: Some(a.chain.seed),
        files: vec![
            ("poles.csv".into(), poles.to_csv().into_bytes()),
            ("crosscheck.csv".into(), check.into_bytes()),
            (
                "report.json".into(),
                (serde_json::to_string_pretty(&report).expect("plain JSON") + "\n").into_bytes(),
            ),
        ],
        summary: vec![
            format!("{} poles, pruning budget {budget:.3e}", poles.len()),
            format!("max |inverse-Laplace − trace| = {worst:.3e}"),
        ],
        violation,
        ..Record::default()
    })
}

pub fn ensemble(a: &EnsembleArgs) -> CliResult<Record> {
    if a.chain.j == 0.0 && a.chain.w == 0.0 {
        return Err(usage("J = 0 and W = 0 leave nothing to simulate"));
    }
    let site = match a.chain.site {
        1 => SiteSelection::Edge,
        3 => SiteSelection::Bulk,
        s => return Err(usage(format!("ensembles observe site 1 (edge) or 3 (bulk), got {s}"))),
    };
    let cfg = EnsembleConfig {
        n_sites: a.chain.n,
        coupling: a.chain.j,
        disorder: a.chain.w,
        realizations: a.realizations,
        master_seed: a.chain.seed,
        site,
        mode: match a.mode {
            ModeArg::Analytic => EnsembleMode::Analytic,
            ModeArg::Simulate => EnsembleMode::Simulate,
            ModeArg::Both => EnsembleMode::Both,
        },
        t_max: a.time.tmax,
        dt: a.time.dt,
        resonance_tol: a.resonance_tol,
        window_min: a.window_min,
        bins: a.bins,
        workers: a.threads,
        ..EnsembleConfig::default()
    };
    let result = run_ensemble(&cfg).map_err(|e| match e {
        EnsembleError::Config(_) | EnsembleError::Chain(_) => usage(e),
        other => numeric(other),
    })?;
    persist(&result, &a.out.out).map_err(|e| match e {
        EnsembleError::Io(io) => CliError::Io(io),
        other => numeric(other),
    })?;
    let mut written = vec!["config.json".to_string(), "samples.csv".into(), "report.json".into()];
    if result.reports.is_some() {
        written.push("histograms/frequency.csv".into());
        written.push("histograms/amplitude.csv".into());
    }
    written.push("checksums.sha256".into());
    let mut summary = vec![format!(
        "{} samples, {} excluded, {} failed realizations",
        result.samples.len(),
        result.excluded,
        result.failures.len()
    )];
    if let Some(r) = &result.reports {
        summary.push(format!(
            "frequency TV {:.4} KS {:.4}; amplitude TV {:.4} KS {:.4}",
            r.frequency_comparison.total_variation,
            r.frequency_comparison.ks,
            r.amplitude_comparison.total_variation,
            r.amplitude_comparison.ks
        ));
    }
    Ok(Record {
        config: config_of(a),
        seed: Some(a.chain.seed),
        written,
        summary,
        ..Record::default()
    })
}

pub fn pdf(a: &PdfArgs) -> CliResult<Record> {
    let (kind, name) = match a.kind {
        PdfKindArg::FrequencyBulk => (PdfKind::FrequencyBulk, "frequency-bulk"),
        PdfKindArg::FrequencyEdge => (PdfKind::FrequencyEdge, "frequency-edge"),
        PdfKindArg::Amplitude => (PdfKind::Amplitude, "amplitude"),
    };
    let pdf = AnalyticPdf::new(kind, a.j, a.w).map_err(usage)?;
    if a.points < 2 || !(a.decades > 0.0) {
        return Err(usage("need at least 2 points and positive decades"));
    }
    let (lo, hi) = pdf.support();
    let last = (a.points - 1) as f64;
    let xs: Vec<f64> = match kind {
        PdfKind::Amplitude => (0..a.points).map(|i| lo * 10f64.powf(a.decades * i as f64 / last)).collect(),
        _ => (0..a.points).map(|i| lo + (hi - lo) * i as f64 / last).collect(),
    };
    let mut table = String::from("x,density,cdf\n");
    for &x in &xs {
        let _ = writeln!(table, "{},{},{}", fmt17(x), fmt17(pdf.density(x)), fmt17(pdf.cdf(x)));
    }
    Ok(Record {
        config: config_of(a),
        files: vec![(format!("pdf_{name}.csv"), table.into_bytes())],
        summary: vec![format!("first support point {}", fmt17(lo))],
        ..Record::default()
    })
}

pub fn critical(a: &CriticalArgs) -> CliResult<Record> {
    if a.samples == 0 {
        return Err(usage("samples must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut table = String::from("order,w_over_j,formula,ln_formula,ln_linear,mc,mc_stderr,hits,samples\n");
    let mut summary = vec![format!("{:>5} {:>6} {:>14} {:>14} {:>12}", "2n", "W/J", "formula", "MC", "stderr")];
    for &wj in &a.wj {
        for &order in &a.order {
            let f = critical_probability(order, 1.0, wj).map_err(usage)?;
            let mc = pool
                .install(|| critical_probability_mc(order, 1.0, wj, a.samples, a.seed))
                .map_err(usage)?;
            let _ = writeln!(
                table,
                "{order},{},{},{},{},{},{},{},{}",
                fmt17(wj),
                fmt17(f.value),
                fmt17(f.ln_value),
                fmt17(f.ln_linear),
                fmt17(mc.estimate),
                fmt17(mc.std_error),
                mc.hits,
                mc.samples
            );
            summary.push(format!(
                "{order:>5} {wj:>6} {:>14.6e} {:>14.6e} {:>12.3e}",
                f.value, mc.estimate, mc.std_error
            ));
        }
    }
    Ok(Record {
        config: config_of(a),
        seed: Some(a.seed),
        files: vec![("critical.csv".into(), table.into_bytes())],
        summary,
        ..Record::default()
    })
}

pub fn eigen(a: &EigenArgs) -> CliResult<Record> {
    let (spec, fields) = chain(&a.chain)?;
    let eig = dense(&spec, &fields)?;
    let site = a.chain.site;
    let mut table = String::from("index,energy,q,overlap,alpha_plus,alpha_minus\n");
    let mut mean_q = 0.0;
    for i in 0..eig.len() {
        let (split, q) = static_measure(&eig.eigenvector(i), site).map_err(numeric)?;
        mean_q += q;
        let _ = writeln!(
            table,
            "{i},{},{},{},{},{}",
            fmt17(eig.energy(i)),
            fmt17(q),
            opt(nonlocality_overlap(&split).ok()),
            fmt17(split.alpha_plus),
            fmt17(split.alpha_minus)
        );
    }
    mean_q /= eig.len() as f64;
    Ok(Record {
        config: config_of(a),
        seed: Some(a.chain.seed),
        files: vec![
            ("fields.csv".into(), fields_csv(&fields, spec.n_sites())),
            ("eigen.csv".into(), table.into_bytes()),
        ],
        summary: vec![format!("{} eigenstates, mean Q {mean_q:.6e}", eig.len())],
        ..Record::default()
    })
}
