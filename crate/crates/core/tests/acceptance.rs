//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p ris-iterative --test acceptance` runs all eleven criteria;
//! extra arguments (`-- C3 C7`) select a subset. The process exits non-zero
//! when a criterion cannot be evaluated, and also on any FAIL when
//! `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::io::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use ris_iterative::channel::{watts_to_dbm, EffectiveChannel};
use ris_iterative::coding::default_code;
use ris_iterative::coding::transfer::{default_table, TransferTable};
use ris_iterative::convex::linalg::{CMatrix, CVector};
use ris_iterative::harness::{
    load_transfer, run_experiment, run_method, targets, MethodOutcome, Optimizer, Realization, ScenarioConfig,
};
use ris_iterative::info::{min_capacity_slack, optimize_info, solve_theta_info, solve_w_info, InfoOptions, RateSpec};
use ris_iterative::sic::grouping::{exhaustive_grouping, group_users, sum_rate};
use ris_iterative::sic::sca::{phases, ScaWorkingSet};
use ris_iterative::sic::{fp_precode, optimize, sic_constraints, FpOptions, SicOptions};
use ris_iterative::state_evolution::{se_run, Grouping};
use ris_iterative::transceiver::{effective_columns, lmmse_ese, simulate, transmit, user_codecs, Ofdm, PrecoderSet, SimOptions};

type Outcome = Result<(bool, String), String>;

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn rho_tar() -> f64 {
    default_table().target_to_sinr(1e-2).unwrap().1
}

/// Mean of linear powers in dBm; `+∞` when any entry is infinite.
fn mean_dbm(powers: &[f64]) -> f64 {
    watts_to_dbm(powers.iter().sum::<f64>() / powers.len() as f64)
}

fn c1_oracle_equivalence() -> Outcome {
    let mut rg = common::rng(1001);
    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let j = 1 + inst % 4;
        let k = 1 + (inst / 4) % 2;
        let m = 1 + (inst / 8) % 2;
        let ofdm = Ofdm::new(j);
        let cols = common::random_columns(&mut rg, k, j, m, 1.0);
        let sym = |rg: &mut _| -> Vec<Vec<Complex64>> { (0..k).map(|_| (0..2 * j).map(|_| common::cn(rg)).collect()).collect() };
        let x = sym(&mut rg);
        let noise = rg.random_range(0.05..1.0);
        let r = transmit(&ofdm, &cols, &x, noise, &mut rg).map_err(e)?;
        let pri: Vec<Vec<Complex64>> = sym(&mut rg).iter().map(|p| p.iter().map(|z| z * 0.5).collect()).collect();
        let v: Vec<f64> = (0..k).map(|_| rg.random_range(0.05..1.0)).collect();
        let got = lmmse_ese(&ofdm, &r, &cols, noise, &pri, &v).map_err(e)?;
        let want = common::dense_lmmse(&r, &cols, noise, &pri, &v);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g.v_post - w.v_post).abs());
            worst = worst.max((g.rho - w.rho).abs() / w.rho.max(1.0));
            for (a, b) in g.mean.iter().zip(&w.mean) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max abs error {worst:.2e} over 50 instances (tol 1e-10)")))
}

/// Power offset in dB at which `ber(offset)` falls through `target`,
/// interpolating `log10 BER` linearly between grid points.
fn crossing(offsets: &[f64], ber: &[f64], target: f64) -> Option<f64> {
    let lg = |b: f64| b.max(1e-7).log10();
    (1..offsets.len()).find_map(|i| {
        (ber[i - 1] > target && ber[i] <= target).then(|| {
            let (a, b) = (lg(ber[i - 1]), lg(ber[i]));
            offsets[i - 1] + (offsets[i] - offsets[i - 1]) * (a - target.log10()) / (a - b)
        })
    })
}

fn c2_se_fidelity() -> Outcome {
    let cfg = ScenarioConfig { k: 2, m: 2, j_prime: 8, frames: 200, ..ScenarioConfig::default() };
    let table = load_transfer(&cfg).map_err(e)?;
    let seed = 3;
    let real = Realization::draw(&cfg, seed).map_err(e)?;
    let design = run_method(Optimizer::Sic, &cfg, &table, &real.design, seed).map_err(e)?;
    let codecs = user_codecs(default_code(), cfg.k).map_err(e)?;
    let sim = |w: &PrecoderSet, s: u64| {
        let opts = SimOptions { frames: cfg.frames, t_max: cfg.t_max, bp_iters: cfg.bp_iters, seed: s };
        simulate(&real.full, &design.theta, w, &codecs, &opts)
    };
    let se = |w: &PrecoderSet| -> Result<_, String> {
        let cols = effective_columns(&real.full, &design.theta, w).map_err(e)?;
        se_run(&[1.0; 2], cfg.t_max, &table, &cols, real.full.noise_power, None).map_err(e)
    };
    // Variance traces at the designed operating point.
    let rep = sim(&design.precoders, 77).map_err(e)?;
    let tr = se(&design.precoders)?;
    let (mut worst_v, mut worst_at, mut worst_rho) = (0.0f64, (0, 0), 0.0f64);
    for t in 0..cfg.t_max {
        for k in 0..cfg.k {
            let d = common::rel(rep.v_trace[t][k], tr.v[t + 1][k], 0.0);
            if d > worst_v {
                (worst_v, worst_at) = (d, (t, k));
            }
            worst_rho = worst_rho.max(common::rel(rep.rho_trace[t][k], tr.rho[t][k], 0.0));
        }
    }
    let (wt, wk) = worst_at;
    // Waterfall position under a common power offset.
    let offsets: Vec<f64> = (0..=20).map(|i| -3.0 + 0.25 * i as f64).collect();
    let (mut mc, mut pred) = (Vec::new(), Vec::new());
    for (i, d) in offsets.iter().enumerate() {
        let w = design.precoders.scaled(10f64.powf(d / 20.0));
        mc.push(sim(&w, 1000 + i as u64).map_err(e)?.overall_ber());
        let rho = tr_last(&se(&w)?.rho);
        pred.push(rho.iter().map(|&r| table.ber_at(r)).sum::<f64>() / rho.len() as f64);
    }
    let (x_mc, x_se) = (crossing(&offsets, &mc, 1e-2), crossing(&offsets, &pred, 1e-2));
    let shift = match (x_mc, x_se) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    Ok((
        worst_v <= 0.2 && shift <= 0.5,
        format!(
            "worst v-trace deviation {:.1}% (tol 20%) at iteration {}, user {wk}: MC {:.3e} vs SE {:.3e}; \
             worst rho-trace deviation {:.1}%; 1e-2 crossing MC {} dB vs SE {} dB, shift {shift:.2} dB (tol 0.5)",
            100.0 * worst_v,
            wt + 1,
            rep.v_trace[wt][wk],
            tr.v[wt + 1][wk],
            100.0 * worst_rho,
            x_mc.map_or("none".into(), |x| format!("{x:+.2}")),
            x_se.map_or("none".into(), |x| format!("{x:+.2}")),
        ),
    ))
}

fn tr_last(rho: &[Vec<f64>]) -> Vec<f64> {
    rho.last().cloned().unwrap_or_default()
}

fn c3_minorizer_suite() -> Outcome {
    let ch = common::scenario_channel(3, 2, 8, 64, 4, 1003).whitened();
    let mut rg = common::rng(1004);
    let g = Grouping::new(vec![vec![0], vec![1, 2]], 3).map_err(e)?;
    let cons = sic_constraints(&g, &[rho_tar(); 3]).map_err(e)?;
    let tau = std::f64::consts::TAU;
    let (mut touch, mut minor, mut grad): (f64, usize, f64) = (0.0, 0, 0.0);
    let (mut lip_literal, mut lip_doubled) = (0usize, 0usize);
    for i in 0..1000 {
        let c = &cons[i % cons.len()];
        let scale = rg.random_range(0.05..1.0);
        let w = common::random_precoders(&mut rg, 3, 4, scale);
        let bb: Vec<f64> = (0..8).map(|_| rg.random_range(0.0..tau)).collect();
        let ws = ScaWorkingSet::new(&ch, &w, c, &bb).map_err(e)?;
        let exact = |b: &[f64]| {
            let cols = common::columns_reference(&ch, &phases(b), &w);
            let t = common::tau_reference(&cols, 1.0, &c.weights)[c.user];
            common::sinr_reference(t, c.weights[c.user]) - c.target
        };
        touch = touch.max(common::rel(ws.surrogate(&bb), exact(&bb), 1e-300));
        let b: Vec<f64> = (0..8).map(|_| rg.random_range(0.0..tau)).collect();
        let (l, f) = (ws.surrogate(&b), exact(&b));
        if l > f + 1e-12 * f.abs().max(1.0) {
            minor += 1;
        }
        let gr = ws.grad_f(&b);
        let h = 1e-5;
        let mut fd = gr.clone();
        for n in 0..8 {
            let (mut p, mut q) = (b.clone(), b.clone());
            p[n] += h;
            q[n] -= h;
            fd[n] = (ws.f(&p) - ws.f(&q)) / (2.0 * h);
        }
        grad = grad.max((&gr - &fd).norm() / fd.norm().max(1e-300));
        let b2: Vec<f64> = (0..8).map(|_| rg.random_range(0.0..tau)).collect();
        let dg = (ws.grad_f(&b) - ws.grad_f(&b2)).norm();
        let db = b.iter().zip(&b2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let gamma_f = ws.kappa / 2.0;
        if dg > gamma_f * db * (1.0 + 1e-12) {
            lip_literal += 1;
        }
        if dg > ws.kappa * db * (1.0 + 1e-12) {
            lip_doubled += 1;
        }
    }
    Ok((
        touch <= 1e-9 && minor == 0 && grad <= 1e-6 && lip_literal == 0,
        format!(
            "touching rel err {touch:.1e} (tol 1e-9); minorization violations {minor}/1000; gradient rel err {grad:.1e} \
             (tol 1e-6); Lipschitz violations with ‖Γ‖_F {lip_literal}/1000, with 2‖Γ‖_F {lip_doubled}/1000"
        ),
    ))
}

fn scalar_channel(g: Complex64, noise: f64) -> EffectiveChannel {
    EffectiveChannel {
        m: 1,
        n: 0,
        noise_power: noise,
        direct: vec![vec![CVector::from_element(1, g)]],
        cascade: vec![vec![CMatrix::zeros(1, 0)]],
    }
}

fn c4_fp_correctness() -> Outcome {
    let mut tight: f64 = 0.0;
    let rho = rho_tar();
    for seed in 0..10 {
        let ch = common::scenario_channel(3, 2, 4, 64, 4, 1100 + seed).whitened();
        let th = common::unit_phases(&mut common::rng(seed), 4);
        let g = Grouping::new(vec![vec![0, 1], vec![2]], 3).map_err(e)?;
        let cons = sic_constraints(&g, &[rho; 3]).map_err(e)?;
        let out = fp_precode(&ch, &th, &cons, None, &FpOptions::default()).map_err(e)?;
        tight = tight.max(out.max_tightness_error);
    }
    let fp = FpOptions { tol: 1e-13, max_iters: 2000, solver_tol: 1e-13, working_set: 24 };
    let (mut scalar, mut steps): (f64, usize) = (0.0, 0);
    for (g, noise) in [(Complex64::new(0.3, -0.4), 0.1), (Complex64::new(2.0, 1.0), 1.0), (Complex64::new(-0.05, 0.02), 1e-3)] {
        let ch = scalar_channel(g, noise);
        let cons = sic_constraints(&Grouping::single(1), &[rho]).map_err(e)?;
        let want = rho * noise / g.norm_sqr();
        // Start at four times the optimal power so the iteration has to descend.
        let warm = PrecoderSet::new(vec![vec![Complex64::from_polar(2.0 * want.sqrt(), 1.0)]]).map_err(e)?;
        let out = fp_precode(&ch.whitened(), &[], &cons, Some(&warm), &fp).map_err(e)?;
        tight = tight.max(out.max_tightness_error);
        scalar = scalar.max(common::rel(out.precoders.w[0][0].norm_sqr(), want, 0.0));
        steps += out.power_trace.len() - 1;
    }
    Ok((
        tight <= 1e-10 && scalar <= 1e-8 && steps > 0,
        format!(
            "surrogate vs quadratic form {tight:.1e} (tol 1e-10); scalar closed form rel err {scalar:.1e} (tol 1e-8) \
             after {steps} descent steps from 4x power"
        ),
    ))
}

fn c5_monotone_descent() -> Outcome {
    let rho = rho_tar();
    let (mut violations, mut worst, mut rounds) = (0usize, 0.0f64, 0usize);
    for seed in 0..20 {
        let ch = common::scenario_channel(4, 4, 16, 256, 4, 1200 + seed);
        let r = optimize(&ch, &[rho; 4], &SicOptions::new(4), seed).map_err(e)?;
        let trace = r.outcome.power_trace();
        rounds += trace.len();
        for p in trace.windows(2) {
            let rise = (p[1] - p[0]) / p[0];
            worst = worst.max(rise);
            if rise > 1e-9 {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} increases beyond 1e-9 over {rounds} recorded rounds; largest relative step {worst:+.1e}")))
}

fn c6_grouping_oracle() -> Outcome {
    let mut worst: f64 = 1.0;
    for seed in 0..20 {
        let ch = common::scenario_channel(4, 4, 32, 256, 4, 1300 + seed);
        let th = common::unit_phases(&mut common::rng(seed), 32);
        let w = PrecoderSet::uniform(4, 4, 1.0);
        let g = group_users(&ch, &th, &w, 2).map_err(e)?;
        let greedy = sum_rate(&ch, &th, &w, &g).map_err(e)?;
        let (_, best) = exhaustive_grouping(&ch, &th, &w, 2).map_err(e)?;
        worst = worst.min(greedy / best);
    }
    Ok((worst >= 0.98, format!("worst greedy/exhaustive sum-rate ratio {:.4} over 20 instances (need ≥ 0.98)", worst)))
}

/// Mean powers of `methods` over `seeds` at `cfg`; a failed run counts as `+∞`.
fn powers(cfg: &ScenarioConfig, table: &TransferTable, methods: &[Optimizer], seeds: u64) -> Vec<(Vec<f64>, usize)> {
    methods
        .iter()
        .map(|&m| {
            let mut failures = 0;
            let p = (0..seeds)
                .map(|s| {
                    let r = Realization::draw(cfg, s).and_then(|r| run_method(m, cfg, table, &r.design, s));
                    match r {
                        Ok(out) => MethodOutcome::power(&out),
                        Err(_) => {
                            failures += 1;
                            f64::INFINITY
                        }
                    }
                })
                .collect();
            (p, failures)
        })
        .collect()
}

fn c7_baseline_ordering() -> Outcome {
    let cfg = ScenarioConfig { k: 4, m: 4, n: 32, t_max: 1, frames: 0, ..ScenarioConfig::default() };
    let table = load_transfer(&cfg).map_err(e)?;
    let r = powers(&cfg, &table, &[Optimizer::Sic, Optimizer::RandomPhase, Optimizer::NoRis], 50);
    let [sic, rnd, none] = [mean_dbm(&r[0].0), mean_dbm(&r[1].0), mean_dbm(&r[2].0)];
    let (g1, g2) = (rnd - sic, none - rnd);
    Ok((
        g1 >= 0.5 && g2 >= 0.5,
        format!(
            "SIC {sic:.2} dBm, random {rnd:.2} dBm, no-RIS {none:.2} dBm; gaps {g1:.2} dB and {g2:.2} dB (need ≥ 0.5 each); \
             failures {}/{}/{}",
            r[0].1, r[1].1, r[2].1
        ),
    ))
}

fn c8_sic_vs_diagonal() -> Outcome {
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for k in [4, 8] {
        let cfg = ScenarioConfig { k, m: 4, n: 32, t_max: 4, frames: 0, ..ScenarioConfig::default() };
        let table = load_transfer(&cfg).map_err(e)?;
        let r = powers(&cfg, &table, &[Optimizer::Sic, Optimizer::DiagonalPath], 30);
        let (sic, diag) = (mean_dbm(&r[0].0), mean_dbm(&r[1].0));
        gaps.push(diag - sic);
        detail.push(format!("K={k}: SIC {sic:.2} dBm, diagonal {diag:.2} dBm, gap {:+.2} dB", diag - sic));
    }
    Ok((gaps[0] >= 0.0 && gaps[1] >= 0.0 && gaps[1] > gaps[0], detail.join("; ")))
}

fn c9_iteration_monotonicity() -> Outcome {
    let mut means = Vec::new();
    let mut detail = Vec::new();
    for t in [1, 2, 4] {
        let cfg = ScenarioConfig { k: 8, m: 4, n: 32, t_max: t, frames: 0, ..ScenarioConfig::default() };
        let table = load_transfer(&cfg).map_err(e)?;
        let (p, failures) = powers(&cfg, &table, &[Optimizer::Sic], 30).remove(0);
        let m = mean_dbm(&p);
        means.push(m);
        detail.push(format!("T={t}: {m:.2} dBm ({failures} infeasible)"));
    }
    let ok = means.windows(2).all(|w| w[1] <= w[0]) && means.last().is_some_and(|m| m.is_finite());
    Ok((ok, detail.join("; ")))
}

fn c10_info_audit() -> Outcome {
    let cfg = ScenarioConfig { k: 2, frames: 0, ..ScenarioConfig::default() };
    let spec = RateSpec {
        q: cfg.q,
        rates: vec![default_code().rate(); 2],
        l_cp: cfg.l_cp,
        j: cfg.j,
        j_prime: cfg.j_prime,
    };
    let mut worst_slack = f64::INFINITY;
    for seed in 0..20 {
        let real = Realization::draw(&cfg, seed).map_err(e)?;
        let r = optimize_info(&real.design, &spec, &InfoOptions::default(), seed).map_err(e)?;
        worst_slack = worst_slack.min(min_capacity_slack(&real.design, &r.theta, &r.precoders, &spec));
    }
    let scalar_spec = RateSpec { q: 2, rates: vec![0.5], l_cp: 2, j: 1, j_prime: 1 };
    let mut scalar: f64 = 0.0;
    for (g, noise) in [(Complex64::new(0.3, -0.2), 1e-3), (Complex64::new(1.5, 0.5), 2.0)] {
        let w = solve_w_info(&scalar_channel(g, noise), &[], &scalar_spec, 1e-12).map_err(e)?;
        let want = noise * (2f64.powf(scalar_spec.bits_per_rate() * 0.5) - 1.0) / g.norm_sqr();
        scalar = scalar.max(common::rel(w.w[0][0].norm_sqr(), want, 0.0));
    }
    let (mut above, mut within) = (0.0f64, true);
    for seed in 0..3 {
        let mut rg = common::rng(1400 + seed);
        let ch = common::synthetic_channel(&mut rg, 2, 2, 3, 2, 1.0, 0.6, 1.0);
        let th = common::unit_phases(&mut rg, 3);
        let w = common::random_precoders(&mut rg, 2, 2, 1.0);
        let sp = RateSpec { q: 2, rates: vec![0.1; 2], l_cp: 0, j: 2, j_prime: 2 };
        let n = seed as usize % 3;
        let (_, dr) = solve_theta_info(&ch, &th, &w, &sp, n, 1e-12).map_err(e)?;
        let steps = 100;
        let h = 2.0 / steps as f64;
        let (mut best, mut resolution) = (f64::NEG_INFINITY, 0.0f64);
        for a in 0..=steps {
            for b in 0..=steps {
                let p = Complex64::new(-1.0 + a as f64 * h, -1.0 + b as f64 * h);
                if p.norm() > 1.0 {
                    continue;
                }
                let v = common::margin_reference(&ch, &th, &w, &sp, n, p);
                best = best.max(v);
                let q = Complex64::new(p.re + h, p.im);
                if q.norm() <= 1.0 {
                    resolution = resolution.max((common::margin_reference(&ch, &th, &w, &sp, n, q) - v).abs());
                }
            }
        }
        above = above.max(best - dr);
        within &= dr >= best - 1e-9 && dr <= best + 2.0 * resolution;
    }
    Ok((
        worst_slack >= -1e-6 && scalar <= 1e-6 && within,
        format!(
            "worst slack {worst_slack:.2e} over 20 seeds (need ≥ -1e-6); scalar rel err {scalar:.1e} (tol 1e-6); \
             element subproblem within grid resolution: {within} (grid excess {above:.1e})"
        ),
    ))
}

fn c11_closure() -> Outcome {
    let cfg = ScenarioConfig { realizations: 50, frames: 100, ..ScenarioConfig::default() };
    let rep = run_experiment(&cfg).map_err(e)?;
    let closed = rep.rows.iter().filter(|r| r.ok() && r.max_ber().is_some_and(|b| b <= 1.5 * cfg.p_tar)).count();
    let failures = rep.rows.iter().filter(|r| !r.ok()).count();
    let frac = closed as f64 / rep.rows.len() as f64;
    let (_, rho) = targets(&cfg, &load_transfer(&cfg).map_err(e)?).map_err(e)?;
    Ok((
        frac >= 0.9,
        format!(
            "{closed}/{} seeds with worst-user BER ≤ 1.5e-2 (need ≥ 90%); {failures} optimizer failures; \
             pooled BER {:.2e}; ρ_tar {:.3}",
            rep.rows.len(),
            rep.aggregate.ber,
            rho[0]
        ),
    ))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 11] = [
        ("C1", "LMMSE-ESE oracle equivalence", c1_oracle_equivalence),
        ("C2", "state-evolution fidelity", c2_se_fidelity),
        ("C3", "SCA minorizer suite", c3_minorizer_suite),
        ("C4", "FP correctness", c4_fp_correctness),
        ("C5", "monotone AO descent", c5_monotone_descent),
        ("C6", "grouping vs exhaustive search", c6_grouping_oracle),
        ("C7", "baseline ordering", c7_baseline_ordering),
        ("C8", "SIC vs diagonal path", c8_sic_vs_diagonal),
        ("C9", "receiver-iteration monotonicity", c9_iteration_monotonicity),
        ("C10", "capacity-region baseline audit", c10_info_audit),
        ("C11", "end-to-end BER closure", c11_closure),
    ];
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_uppercase()).collect();
    let (mut passed, mut ran, mut errored) = (0, 0, 0);
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let start = Instant::now();
        let res = run();
        let secs = start.elapsed().as_secs_f64();
        ran += 1;
        match res {
            Ok((ok, detail)) => {
                passed += usize::from(ok);
                println!("{} {id} {name}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
            }
            Err(msg) => {
                errored += 1;
                println!("ERROR {id} {name}: {msg} [{secs:.1} s]");
            }
        }
        std::io::stdout().flush().ok();
    }
    println!("{passed}/{ran} criteria passed");
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errored > 0 || (strict && passed < ran) {
        std::process::exit(1);
    }
}
