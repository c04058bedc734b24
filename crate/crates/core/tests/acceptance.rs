//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conepp::diagnostics::{
    check_dissipation, check_global_bound, check_gronwall, check_growth_lower_bound, check_nminus_invariance,
    classify_sminus, dissipation_identity, nminus_entry_index, CheckStatus,
};
use conepp::functionals::{evaluate, fibering_lambda_star};
use conepp::grid::{ConeGrid, DiscreteOperators, Field, ProblemParams, TipBc};
use conepp::oracle::{convergence_study, dense_quadrature, eigen_reference, fitted_decay_rate};
use conepp::scenario::{make_initial, run_preset, Preset, PresetOutput, RunResult};
use conepp::stepper::{run, Outcome, StepperConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

fn single(preset: Preset) -> RunResult {
    match run_preset(preset, None, None).expect("preset runs") {
        PresetOutput::Run(r) => *r,
        PresetOutput::Sweep(_) => unreachable!("{preset} is a single run"),
    }
}

fn sweep_runs() -> Vec<RunResult> {
    match run_preset(Preset::SminusDichotomySweep, None, None).expect("sweep runs") {
        PresetOutput::Sweep(s) => s.runs,
        PresetOutput::Run(_) => unreachable!(),
    }
}

struct Presets {
    linear: RunResult,
    global: RunResult,
    sub_blowup: RunResult,
    high_blowup: RunResult,
    high_elapsed: Duration,
    sweep: Vec<RunResult>,
}

impl Presets {
    fn all(&self) -> impl Iterator<Item = &RunResult> {
        [&self.linear, &self.global, &self.sub_blowup, &self.high_blowup].into_iter().chain(self.sweep.iter())
    }
}

fn green_identity() -> Verdict {
    let start = Instant::now();
    // hs == htheta bitwise, so every conductance is 1 or 1/2 and integer
    // fields make both forms exact sums of integers and halves
    let ht = 2.0 * PI / 64.0;
    let g = ConeGrid::new(63.0 * ht, 64, 64, TipBc::NeumannTip).unwrap();
    let ops = DiscreteOperators::assemble(&g);
    if g.hs() != g.htheta() || ops.conductance().iter().any(|&w| w != 1.0 && w != 0.5) {
        return Verdict::new(false, "isotropic grid does not have unit conductances");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1000i32..=1000) as f64).collect();
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1000i32..=1000) as f64).collect();
        worst = worst.max((ops.stiffness_form(&v, &u) - ops.edge_form(&v, &u)).abs());
    }
    // general real data on the default grid: equal up to rounding
    let g5 = ConeGrid::new(5.0, 64, 64, TipBc::DirichletTip).unwrap();
    let ops5 = DiscreteOperators::assemble(&g5);
    let mut worst_rel = 0.0_f64;
    for _ in 0..100 {
        let u: Vec<f64> = (0..g5.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..g5.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = ops5.stiffness_form(&v, &u);
        let b = ops5.edge_form(&v, &u);
        let scale = ops5.stiffness_form(&u, &u).sqrt() * ops5.stiffness_form(&v, &v).sqrt();
        worst_rel = worst_rel.max((a - b).abs() / scale);
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst == 0.0 && worst_rel < 1e-13 && elapsed < Duration::from_secs(1),
        format!(
            "max |vKu - (Gv)W(Gu)| = {worst:e} on exact data, {worst_rel:.1e} relative on real data, {elapsed:.2?}"
        ),
    )
}

fn decay_rate_run(ns: usize, ntheta: usize, dt: f64, t_end: f64) -> f64 {
    let depth = 5.0;
    let g = ConeGrid::new(depth, ns, ntheta, TipBc::DirichletTip).unwrap();
    let ops = DiscreteOperators::assemble(&g);
    let params = ProblemParams::linear(3.0).unwrap();
    let u0 = Field::from_fn(&g, |s, th| conepp::functionals::separable_mode(TipBc::DirichletTip, depth, 1, 0, s, th));
    let cfg = StepperConfig { dt0: dt, dt_max: dt, t_end, ..StepperConfig::default() };
    fitted_decay_rate(&run(&g, &ops, &u0, &params, &cfg).unwrap().rows).unwrap()
}

fn linear_decay(p: &Presets, preset_elapsed: Duration) -> Verdict {
    let start = Instant::now();
    let reference = eigen_reference(5.0, TipBc::DirichletTip, 1, 0).unwrap().decay_rate;
    let fitted = fitted_decay_rate(&p.linear.trajectory.rows).unwrap();
    let rel = (fitted - reference).abs() / reference;
    let hs_samples: Vec<(f64, f64)> =
        [9usize, 17, 33].iter().map(|&ns| (5.0 / (ns - 1) as f64, decay_rate_run(ns, 4, 1e-3, 5.0))).collect();
    let dt_samples: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&dt| (dt, decay_rate_run(33, 4, dt, 4.8))).collect();
    let hs_order = convergence_study(&hs_samples, None).unwrap().order();
    let dt_order = convergence_study(&dt_samples, None).unwrap().order();
    let elapsed = start.elapsed() + preset_elapsed;
    let pass = p.linear.trajectory.outcome == Outcome::GlobalDecay
        && rel < 0.01
        && hs_order.is_some_and(|q| (1.8..=2.2).contains(&q))
        && dt_order.is_some_and(|q| (0.8..=1.2).contains(&q))
        && elapsed < Duration::from_secs(30);
    Verdict::new(
        pass,
        format!(
            "rate {fitted:.7} vs {reference:.7} ({:.3}%), order hs {:?}, dt {:?}, {elapsed:.2?}",
            100.0 * rel,
            hs_order.map(|q| (q * 1000.0).round() / 1000.0),
            dt_order.map(|q| (q * 1000.0).round() / 1000.0)
        ),
    )
}

fn conservation(p: &Presets) -> Verdict {
    let mut worst_ratio = 0.0_f64;
    let mut count = 0;
    for r in p.all().filter(|r| r.grid.tip_bc() == TipBc::NeumannTip) {
        let rows = &r.trajectory.rows;
        let s0 = rows[0].s;
        let t_final = rows.last().unwrap().t;
        let drift = rows.iter().map(|x| (x.s - s0).abs()).fold(0.0, f64::max);
        let budget = 1e-8 * s0.abs().max(1.0) * t_final.max(1.0);
        worst_ratio = worst_ratio.max(drift / budget);
        count += 1;
    }
    Verdict::new(worst_ratio <= 1.0, format!("{count} NeumannTip runs, worst drift {worst_ratio:.2e} of budget"))
}

fn identity_defect(dt: f64) -> f64 {
    let g = ConeGrid::new(5.0, 32, 32, TipBc::NeumannTip).unwrap();
    let ops = DiscreteOperators::assemble(&g);
    let params = ProblemParams::new(3.0, 2, true).unwrap();
    let mut spec = Preset::HigherenergyBlowup.config().initial;
    spec.amplitude = 2.0;
    let u0 = make_initial(&g, &spec).unwrap();
    let cfg = StepperConfig {
        dt0: dt,
        dt_max: dt,
        t_end: 0.2,
        growth_cap: 10.0,
        snapshot_every: 1,
        ..StepperConfig::default()
    };
    let traj = run(&g, &ops, &u0, &params, &cfg).unwrap();
    dissipation_identity(&g, &ops, &params, &traj).unwrap().max_rate
}

fn dissipation(p: &Presets) -> Verdict {
    let worst = p.all().map(|r| check_dissipation(&r.trajectory, 1e-10).worst_violation).fold(0.0, f64::max);
    let samples: Vec<(f64, f64)> = [0.01, 0.005, 0.0025].iter().map(|&dt| (dt, identity_defect(dt))).collect();
    let order = convergence_study(&samples, Some(0.0)).unwrap().order();
    let pass = worst <= 1e-10 && order.is_some_and(|q| (0.8..=1.2).contains(&q));
    Verdict::new(
        pass,
        format!(
            "largest J increase {worst:e}; identity defect per unit time {:.3e}, {:.3e}, {:.3e}, order {:?}",
            samples[0].1,
            samples[1].1,
            samples[2].1,
            order.map(|q| (q * 1000.0).round() / 1000.0)
        ),
    )
}

fn fibering() -> Verdict {
    let g = ConeGrid::new(5.0, 16, 16, TipBc::DirichletTip).unwrap();
    let ops = DiscreteOperators::assemble(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_i, mut worst_dec) = (0.0_f64, 0.0_f64);
    for k in 0..1000 {
        let p = rng.gen_range(1.2..6.0);
        let params = ProblemParams::new(p, 2, true).unwrap();
        let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
        let u = if k % 2 == 0 {
            Field::new(&g, (0..g.len()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).unwrap()
        } else {
            let (sc, tc, w) = (-rng.gen_range(0.5..4.5), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.2..1.5));
            Field::from_fn(&g, |s, th| {
                let d = (th - tc + PI).rem_euclid(2.0 * PI) - PI;
                scale * (-((s - sc).powi(2) + d * d) / (2.0 * w * w)).exp()
            })
        };
        let r = evaluate(&g, &ops, &u, &params).unwrap();
        let dec = (p - 1.0) / (2.0 * (p + 1.0)) * r.grad + r.i / (p + 1.0);
        let denom = r.j.abs().max(r.grad / 2.0).max(r.lp1 / (p + 1.0));
        worst_dec = worst_dec.max((r.j - dec).abs() / denom);
        let lam = fibering_lambda_star(r.grad, r.lp1, p).unwrap();
        let at = evaluate(&g, &ops, &u.scaled(lam), &params).unwrap();
        worst_i = worst_i.max(at.i.abs() / at.h2.max(1.0));
    }
    Verdict::new(
        worst_i <= 1e-10 && worst_dec <= 1e-12,
        format!("max |I(lambda* u)|/max(1,H2) = {worst_i:.2e}, decomposition {worst_dec:.2e} relative"),
    )
}

fn high_energy_blowup(p: &Presets) -> Verdict {
    let r = &p.high_blowup;
    let init = &r.initial;
    let d = init.d_est.unwrap();
    let hypotheses = init.i0 < 0.0 && init.s0.abs() < 1e-14 * init.h2_0 && init.j0 > d;
    let t_est = match r.trajectory.outcome {
        Outcome::BlowUp { t_est } if t_est.is_finite() => Some(t_est),
        _ => None,
    };
    let entry = nminus_entry_index(&r.trajectory).unwrap_or(0);
    let gron = check_gronwall(&r.trajectory, entry, 5e-2, 1e-8);
    let growth = check_growth_lower_bound(&r.trajectory, entry, 5e-2, 1e-8);
    let pass = hypotheses
        && t_est.is_some()
        && gron.status == CheckStatus::Pass
        && growth.status == CheckStatus::Pass
        && p.high_elapsed < Duration::from_secs(60);
    Verdict::new(
        pass,
        format!(
            "I0 = {:.3}, S0 = {:.1e}, J0 = {:.3} > d_est = {:.4}; {}; gronwall {:?}, growth {:?}, {:.2?}",
            init.i0, init.s0, init.j0, d, r.trajectory.outcome, gron.status, growth.status, p.high_elapsed
        ),
    )
}

fn global_regime(p: &Presets) -> Verdict {
    let r = &p.global;
    let init = &r.initial;
    let d = init.d_est.unwrap();
    let rows = &r.trajectory.rows;
    let t_end = r.config.stepper.t_end;
    let reached = (rows.last().unwrap().t - t_end).abs() <= 1e-9 * t_end
        && matches!(r.trajectory.outcome, Outcome::GlobalDecay | Outcome::GlobalBounded);
    let bound = check_global_bound(&r.trajectory, 1e-8);
    let q = r.config.params.p;
    let cap = 2.0 * (q + 1.0) / (q - 1.0) * init.j0 + 1e-6;
    let h2_max = rows.iter().map(|x| x.h2).fold(0.0, f64::max);
    let pass = init.i0 > 0.0 && init.j0 < d && reached && bound.status == CheckStatus::Pass && h2_max <= cap;
    Verdict::new(
        pass,
        format!(
            "I0 = {:.3e} > 0, J0 = {:.4e} < d_est = {:.4e}; {} at t = {}; max H2 = {h2_max:.4e} <= {cap:.4e}",
            init.i0,
            init.j0,
            d,
            r.trajectory.outcome,
            rows.last().unwrap().t
        ),
    )
}

fn nminus_invariance(p: &Presets) -> Verdict {
    let mut entered = 0;
    let mut failures = Vec::new();
    for r in &p.sweep {
        let rep = check_nminus_invariance(&r.trajectory);
        if nminus_entry_index(&r.trajectory).is_some() {
            entered += 1;
        }
        if rep.status != CheckStatus::Pass {
            failures.push(format!("A = {} {:?}", r.config.initial.amplitude, rep.status));
        }
    }
    Verdict::new(
        failures.is_empty() && p.sweep.len() == 20,
        format!("{} runs, {entered} entered N-, no sign return; problems: {failures:?}", p.sweep.len()),
    )
}

fn oracle_equivalence() -> Verdict {
    let depth = 5.0;
    let g = ConeGrid::new(depth, 64, 64, TipBc::NeumannTip).unwrap();
    let ops = DiscreteOperators::assemble(&g);
    let params = ProblemParams::new(3.0, 2, true).unwrap();
    let (hs, ht) = (g.hs(), g.htheta());
    let res = 4 * 64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    for _ in 0..20 {
        // trigonometric polynomials in theta, constant in s
        let c: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = move |_s: f64, th: f64| {
            c[0] + (1..=3).map(|m| c[2 * m - 1] * (m as f64 * th).cos() + c[2 * m] * (m as f64 * th).sin()).sum::<f64>()
        };
        let u = Field::from_fn(&g, f.clone());
        let main = evaluate(&g, &ops, &u, &params).unwrap();
        let q = |h: &dyn Fn(f64, f64) -> f64| dense_quadrature(h, depth, res).unwrap().value;
        let s = q(&|a, b| f(a, b));
        let l2 = q(&|a, b| f(a, b).powi(2));
        let lp1 = q(&|a, b| f(a, b).abs().powi(4));
        let grad = q(&|a, b| ((f(a, b + ht) - f(a, b)) / ht).powi(2));
        let j = 0.5 * grad - lp1 / 4.0;
        let i = grad - lp1;
        for (m, o) in [
            (main.s, s),
            (main.l2, l2),
            (main.lp1, lp1),
            (main.grad, grad),
            (main.j, j),
            (main.i, i),
            (main.h2, l2 + grad),
        ] {
            worst = worst.max(rel(m, o));
        }
        // affine in s: mass and gradient energy
        let (alpha, beta) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let lin = move |sv: f64, _th: f64| alpha + beta * sv;
        let u = Field::from_fn(&g, lin);
        let main = evaluate(&g, &ops, &u, &params).unwrap();
        let s = q(&|a, b| lin(a, b));
        let grad = q(&|a, b| ((lin(a + hs, b) - lin(a, b)) / hs).powi(2));
        worst = worst.max(rel(main.s, s)).max(rel(main.grad, grad));
    }
    Verdict::new(worst <= 1e-12, format!("worst relative difference {worst:.2e} over 40 nodal-coincident inputs"))
}

fn dichotomy(p: &Presets) -> (Verdict, usize) {
    let mut violations = Vec::new();
    let mut inconclusive = 0;
    let (mut blowups, mut globals) = (0, 0);
    for r in &p.sweep {
        let sminus = classify_sminus(&r.trajectory).unwrap();
        let outcome = r.trajectory.outcome;
        match (sminus, outcome) {
            (true, Outcome::BlowUp { .. }) => blowups += 1,
            (true, Outcome::HorizonReached) => inconclusive += 1,
            (false, o) if !o.is_blowup() && o != Outcome::SolverFailure => globals += 1,
            (s, o) => violations.push(format!("A = {}: sminus = {s}, {o}", r.config.initial.amplitude)),
        }
    }
    (
        Verdict::new(
            violations.is_empty(),
            format!(
                "{blowups} blow-ups in S-, {globals} global outside S-, {inconclusive} inconclusive; {violations:?}"
            ),
        ),
        inconclusive,
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    results.push((1, "discrete Green identity", green_identity()));

    let t = Instant::now();
    let linear = single(Preset::LinearDecay);
    let linear_elapsed = t.elapsed();
    let global = single(Preset::SubcriticalGlobal);
    let sub_blowup = single(Preset::SubcriticalBlowup);
    let t = Instant::now();
    let high_blowup = single(Preset::HigherenergyBlowup);
    let high_elapsed = t.elapsed();
    let presets = Presets { linear, global, sub_blowup, high_blowup, high_elapsed, sweep: sweep_runs() };

    results.push((2, "linear eigenmode decay", linear_decay(&presets, linear_elapsed)));
    results.push((3, "conservation", conservation(&presets)));
    results.push((4, "dissipation", dissipation(&presets)));
    results.push((5, "fibering and Nehari identities", fibering()));
    results.push((6, "high-energy blow-up", high_energy_blowup(&presets)));
    results.push((7, "global regime", global_regime(&presets)));
    results.push((8, "N- invariance", nminus_invariance(&presets)));
    results.push((9, "oracle equivalence", oracle_equivalence()));
    let (verdict, inconclusive) = dichotomy(&presets);
    results.push((10, "dichotomy consistency", verdict));

    let mut failed = 0;
    for (n, name, v) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if inconclusive > 0 {
        println!("INCONCLUSIVE: {inconclusive} sweep runs in S- reached the horizon without blow-up");
    }
    let sub = &presets.sub_blowup;
    println!(
        "note: subcritical_blowup J0 = {:.3} <= d_est = {:.4}, outcome {}",
        sub.initial.j0,
        sub.initial.d_est.unwrap(),
        sub.trajectory.outcome
    );
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
