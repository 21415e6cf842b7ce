//! Acceptance suite. Runs every criterion in sequence (so wall-clock limits
//! are measured without other tests competing for the CPU), prints one
//! PASS/FAIL line each and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use qcpp_core::anneal::{
    anneal, anneal_restarts, metropolis_accept, rank_reports, temperature_at_epoch, AnnealConfig,
    AnnealReport, StopReason,
};
use qcpp_core::evaluate::{cross_fidelities, cross_fidelity};
use qcpp_core::experiment::{median, run_sweep, write_sweep_csv, SolverKind, SweepConfig};
use qcpp_core::ising::{brute_force_ground_state, build_coefficients, energy, GroundState, SpinConfiguration};
use qcpp_core::newton::{loss, loss_gradient_hessian, multi_restart, random_init, NewtonConfig, WeightVector};
use qcpp_core::record::SolutionRecord;
use qcpp_core::rng::{derive_seed, Domain, Stream};
use qcpp_core::scenario::generate_scenario;
use qcpp_core::statement::{statement_sweep, write_statement_csv, StatementConfig};
use qcpp_core::DensityMatrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn within_limit(o: Outcome, elapsed: Duration, limit_s: u64) -> Outcome {
    let in_time = elapsed <= Duration::from_secs(limit_s);
    outcome(
        o.pass && in_time,
        format!(
            "{}; runtime {:.1} s (limit {limit_s} s{})",
            o.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", EXCEEDED" }
        ),
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

fn reduced_loss(v: &[f64], detectors: &[DensityMatrix]) -> f64 {
    loss(&WeightVector::from_reduced(v), detectors).unwrap()
}

fn criterion_1() -> Outcome {
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let s = generate_scenario(8, 3, 7, seed).unwrap();
        let dets = s.detectors();
        let w = random_init(7, &mut Stream::new(seed, Domain::NewtonInit, 999));
        let (g, h) = loss_gradient_hessian(&w, dets).unwrap();
        let v = w.reduced().to_vec();
        let step = 1e-4;
        let mut fd_g = Vec::new();
        let mut fd_h = Vec::new();
        for i in 0..v.len() {
            let mut p = v.clone();
            let mut q = v.clone();
            p[i] += step;
            q[i] -= step;
            fd_g.push((reduced_loss(&p, dets) - reduced_loss(&q, dets)) / (2.0 * step));
            let gp = loss_gradient_hessian(&WeightVector::from_reduced(&p), dets).unwrap().0;
            let gq = loss_gradient_hessian(&WeightVector::from_reduced(&q), dets).unwrap().0;
            for j in 0..v.len() {
                fd_h.push((gp[j] - gq[j]) / (2.0 * step));
            }
        }
        let analytic_h: Vec<f64> = (0..v.len())
            .flat_map(|i| (0..v.len()).map(move |j| (i, j)))
            .map(|(i, j)| h[(j, i)])
            .collect();
        worst_g = worst_g.max(rel_err(g.as_slice(), &fd_g));
        worst_h = worst_h.max(rel_err(&analytic_h, &fd_h));
    }
    outcome(
        worst_g <= 1e-6 && worst_h <= 1e-4,
        format!("worst gradient rel. error {worst_g:.2e} (<= 1e-6), Hessian {worst_h:.2e} (<= 1e-4)"),
    )
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    let (mut min_matched, mut max_gap, mut max_loss) = (1.0f64, 0.0f64, 0.0f64);
    for seed in 0..10u64 {
        for m in [3, 5, 7] {
            let s = generate_scenario(8, 3, m, seed).unwrap();
            let cross = cross_fidelities(s.sources());
            let sols = multi_restart(s.detectors(), 50, derive_seed(seed, Domain::Sweep, m as u64), &NewtonConfig::default())
                .unwrap();
            let mut found = [false; 3];
            for r in &sols {
                let rec = SolutionRecord::from_newton(0, r, s.sources()).unwrap();
                let k = rec.matched_source;
                found[k] = true;
                min_matched = min_matched.min(rec.matched_fidelity);
                max_loss = max_loss.max(r.loss_final);
                for j in (0..3).filter(|&j| j != k) {
                    let gap = (rec.fidelities[j] - cross_fidelity(&cross, k, j).unwrap()).abs();
                    max_gap = max_gap.max(gap);
                }
            }
            if found.iter().any(|f| !f) {
                failures.push(format!("seed {seed} M={m}: recovered {found:?}"));
            }
        }
    }
    let pass = failures.is_empty() && min_matched >= 0.999 && max_gap <= 0.01 && max_loss <= 1e-10;
    outcome(
        pass,
        format!(
            "all sources recovered in {}/30 cases; min matched fidelity {min_matched:.6} (>= 0.999); max unmatched gap {max_gap:.2e} (<= 0.01); max loss {max_loss:.2e} (<= 1e-10){}",
            30 - failures.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = Stream::new(3, Domain::Anneal, 0);
    for case in 0..100u64 {
        let m = [3, 5, 7, 9, 11][(case % 5) as usize];
        let s = generate_scenario(8, 3, m, 1000 + case).unwrap();
        let coeffs = build_coefficients(s.detectors()).unwrap();
        let mut spins: Vec<i8> = (0..m).map(|j| if j <= m / 2 { 1 } else { -1 }).collect();
        rng.shuffle(&mut spins);
        let spins = SpinConfiguration::new(spins).unwrap();
        let l = loss(&WeightVector::new(spins.weights()).unwrap(), s.detectors()).unwrap();
        let e_tensor = coeffs.energy(&spins).unwrap();
        let e_powers = energy(&spins, s.detectors()).unwrap();
        worst = worst.max((e_tensor - l).abs() / l.abs()).max((e_powers - l).abs() / l.abs());
    }
    outcome(worst <= 1e-9, format!("worst relative deviation {worst:.2e} over 100 pairs (<= 1e-9)"))
}

fn same_energy(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

struct OracleRun {
    ground: GroundState,
    report: AnnealReport,
}

fn run_criterion_4() -> (Vec<OracleRun>, Duration) {
    timed(|| {
        (0..10u64)
            .map(|seed| {
                let s = generate_scenario(8, 3, 11, seed).unwrap();
                let ground = brute_force_ground_state(s.detectors()).unwrap();
                let cfg = AnnealConfig {
                    seed,
                    ..AnnealConfig::default()
                };
                let report = anneal(s.detectors(), &cfg).unwrap();
                OracleRun { ground, report }
            })
            .collect()
    })
}

fn criterion_4(runs: &[OracleRun]) -> Outcome {
    let equal = runs
        .iter()
        .filter(|r| same_energy(r.report.energy_final, r.ground.energy))
        .count();
    let beaten = runs
        .iter()
        .filter(|r| r.report.energy_final < r.ground.energy && !same_energy(r.report.energy_final, r.ground.energy))
        .count();
    outcome(
        equal >= 8 && beaten == 0,
        format!("annealer matched the oracle in {equal}/10 runs (>= 8), beat it in {beaten}"),
    )
}

const TREND_M: [usize; 3] = [19, 23, 27];
const TREND_RESTARTS: u64 = 4;

struct TrendCell {
    m: usize,
    best: SolutionRecord,
    reference: Vec<f64>,
    reports: Vec<AnnealReport>,
}

fn run_criterion_5() -> (Vec<TrendCell>, Duration) {
    timed(|| {
        let mut cells = Vec::new();
        for m in TREND_M {
            for seed in 0..5u64 {
                let s = generate_scenario(8, 3, m, seed).unwrap();
                let cfg = AnnealConfig {
                    seed: derive_seed(seed, Domain::Sweep, m as u64),
                    restarts: TREND_RESTARTS,
                    ..AnnealConfig::default()
                };
                let mut reports = anneal_restarts(s.detectors(), &cfg).unwrap();
                rank_reports(&mut reports, &cfg);
                let best = SolutionRecord::from_anneal(0, &reports[0], s.sources()).unwrap();
                let cross = cross_fidelities(s.sources());
                let k = best.matched_source;
                let reference = (0..3)
                    .map(|j| if j == k { 1.0 } else { cross_fidelity(&cross, k, j).unwrap() })
                    .collect();
                cells.push(TrendCell {
                    m,
                    best,
                    reference,
                    reports,
                });
            }
        }
        cells
    })
}

fn criterion_5(cells: &[TrendCell]) -> Outcome {
    let medians: Vec<f64> = TREND_M
        .iter()
        .map(|&m| {
            let v: Vec<f64> = cells.iter().filter(|c| c.m == m).map(|c| c.best.matched_fidelity).collect();
            median(&v)
        })
        .collect();
    // unmatched fidelities at the largest M against the matching cross-fidelities
    let (mut unmatched, mut reference) = (Vec::new(), Vec::new());
    for c in cells.iter().filter(|c| c.m == 27) {
        for j in (0..3).filter(|&j| j != c.best.matched_source) {
            unmatched.push(c.best.fidelities[j]);
            reference.push(c.reference[j]);
        }
    }
    let gap = (median(&unmatched) - median(&reference)).abs();
    let monotone = medians.windows(2).all(|w| w[1] >= w[0]);
    let pass = monotone && medians[0] >= 0.97 && medians[2] >= 0.99 && gap <= 0.06;
    outcome(
        pass,
        format!(
            "median best matched fidelity M=19/23/27: {:.5}/{:.5}/{:.5} (non-decreasing: {monotone}; >= 0.97 at 19, >= 0.99 at 27); median unmatched {:.4} vs cross {:.4} at M=27, gap {gap:.4} (<= 0.06)",
            medians[0],
            medians[1],
            medians[2],
            median(&unmatched),
            median(&reference)
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = StatementConfig {
        n: 5,
        dim: 8,
        m_list: vec![5, 9, 13, 17, 21],
        trials: 20,
        seed: 0,
        target: 0,
        nested: true,
    };
    let sweep = statement_sweep(&cfg).unwrap();
    let mut violations = Vec::new();
    for trial in 0..cfg.trials {
        let v: Vec<(usize, f64)> = sweep.rows.iter().filter(|r| r.trial == trial).map(|r| (r.m, r.residual)).collect();
        for w in v.windows(2) {
            if w[1].1 > w[0].1 {
                violations.push(format!("trial {trial} M={}->{}: {:.4}->{:.4}", w[0].0, w[1].0, w[0].1, w[1].1));
            }
        }
    }
    let first = sweep.summary.first().unwrap().mean;
    let last = sweep.summary.last().unwrap().mean;
    let ratio_ok = last <= 0.5 * first;
    outcome(
        violations.is_empty() && ratio_ok,
        format!(
            "mean residual M=5 {first:.4} -> M=21 {last:.4} (ratio {:.3} <= 0.5: {ratio_ok}); per-trial monotonicity violations: {}{}",
            last / first,
            violations.len(),
            if violations.is_empty() { String::new() } else { format!(" [{}]", violations.join("; ")) }
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut exact = true;
    let mut worst: f64 = 0.0;
    let mut t = 1.0f64;
    for n in 1..=100_000u64 {
        exact &= temperature_at_epoch(n) == 1.0 / (n as f64 + 1.0);
        t -= 1.0 / (n as f64 * (n as f64 + 1.0));
        worst = worst.max((t - temperature_at_epoch(n)).abs());
    }
    let mut rng = Stream::new(7, Domain::Anneal, 0);
    let trials = 100_000;
    let temp = 0.37;
    let hits = (0..trials).filter(|_| metropolis_accept(1.0, 1.0 + temp, temp, &mut rng)).count();
    let rate = hits as f64 / trials as f64;
    let target = (-1.0f64).exp();
    outcome(
        exact && worst <= 1e-15 && (rate - target).abs() <= 0.005,
        format!(
            "T(n) = 1/(n+1) exactly for n <= 1e5: {exact}; max |closed - iterated| {worst:.1e} (<= 1e-15); acceptance at dE=T {rate:.4} vs e^-1 {target:.4} (+-0.005)"
        ),
    )
}

fn criterion_8(oracle: &[OracleRun], trend: &[TrendCell]) -> Outcome {
    let cfg = AnnealConfig::default();
    let reports: Vec<&AnnealReport> = oracle
        .iter()
        .map(|r| &r.report)
        .chain(trend.iter().flat_map(|c| c.reports.iter()))
        .collect();
    let met: Vec<&&AnnealReport> = reports.iter().filter(|r| r.stopped_by == StopReason::CriteriaMet).collect();
    let bad = met
        .iter()
        .filter(|r| {
            !(r.entropy_final <= cfg.entropy_threshold
                && r.min_eigenvalue >= -cfg.psd_tolerance
                && (r.rho_f.trace() - 1.0).abs() <= 1e-9)
        })
        .count();
    outcome(
        bad == 0,
        format!(
            "{} of {} reports stopped on criteria; {bad} violate entropy <= 0.05, min eigenvalue >= -1e-6 or trace 1 +- 1e-9",
            met.len(),
            reports.len()
        ),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn payloads() -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let s = generate_scenario(8, 3, 9, 42).unwrap();
    out.push(s.to_json().unwrap().into_bytes());
    let newton = multi_restart(s.detectors(), 20, 42, &NewtonConfig::default()).unwrap();
    let records: Vec<SolutionRecord> = newton
        .iter()
        .enumerate()
        .map(|(i, r)| SolutionRecord::from_newton(i, r, s.sources()).unwrap())
        .collect();
    out.push(serde_json::to_vec(&records).unwrap());
    let cfg = AnnealConfig {
        seed: 42,
        restarts: 3,
        max_epochs: 40,
        record_trace: true,
        ..AnnealConfig::default()
    };
    let reports = anneal_restarts(s.detectors(), &cfg).unwrap();
    let records: Vec<SolutionRecord> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| SolutionRecord::from_anneal(i, r, s.sources()).unwrap())
        .collect();
    out.push(serde_json::to_vec(&records).unwrap());
    let traces: Vec<_> = reports.iter().map(|r| r.trace.clone()).collect();
    out.push(serde_json::to_vec(&traces).unwrap());
    let sweep = run_sweep(&SweepConfig {
        kind: SolverKind::Newton,
        d: 8,
        n: 3,
        m_list: vec![3, 5],
        seeds: vec![1, 2, 3],
        restarts: 10,
        newton: NewtonConfig::default(),
        anneal: AnnealConfig::default(),
    })
    .unwrap();
    let mut csv = Vec::new();
    write_sweep_csv(&sweep, 3, &mut csv).unwrap();
    out.push(csv);
    let st = statement_sweep(&StatementConfig {
        m_list: vec![5, 9, 13],
        trials: 6,
        ..StatementConfig::default()
    })
    .unwrap();
    let mut csv = Vec::new();
    write_statement_csv(&st.rows, &mut csv).unwrap();
    out.push(csv);
    out
}

fn criterion_9() -> Outcome {
    let first = in_pool(1, payloads);
    let again = in_pool(1, payloads);
    let multi = in_pool(4, payloads);
    let repeat_ok = first == again;
    let thread_ok = first == multi;
    outcome(
        repeat_ok && thread_ok,
        format!(
            "{} payloads (scenario, Newton, anneal, trace, sweep CSV, statement CSV): repeat identical {repeat_ok}, 1 vs 4 threads identical {thread_ok}",
            first.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    let (o, t) = timed(criterion_1);
    report(1, "gradient/Hessian correctness", within_limit(o, t, 10));
    let (o, t) = timed(criterion_2);
    report(2, "Newton recovery", within_limit(o, t, 120));
    let (o, t) = timed(criterion_3);
    report(3, "mapping identity", within_limit(o, t, 30));
    let (oracle, t4) = run_criterion_4();
    let (o, t) = timed(|| criterion_4(&oracle));
    report(4, "oracle agreement", within_limit(o, t4 + t, 120));
    let (trend, t5) = run_criterion_5();
    let (o, t) = timed(|| criterion_5(&trend));
    report(5, "annealing trend", within_limit(o, t5 + t, 900));
    let (o, t) = timed(criterion_6);
    report(6, "Statement convergence", within_limit(o, t, 300));
    let (o, t) = timed(criterion_7);
    report(7, "schedule and acceptance", within_limit(o, t, 5));
    report(8, "stopping-criteria soundness", criterion_8(&oracle, &trend));
    report(9, "reproducibility", criterion_9());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
