//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use miqado_cli::config;
use miqado_core::amount::{CollateralAmount, Price};
use miqado_core::lending::{health, short_liquidation_profit, BorrowingPosition, FslParams};
use miqado_core::market::{direct_price_decline, CpAmmPool, PricePath, PricePoint};
use miqado_core::miqado::{Miqado, MiqadoParams, Mode, SessionState};
use miqado_core::option::{bs_call_price, std_normal_cdf, BsInputs};
use miqado_core::sim::{
    release_reduction, run_scenario, run_sweep, LiquidationEvent, Regime, Scenario, SupporterPolicy,
    SweepResult,
};
use miqado_core::Error;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rust_decimal::Decimal;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn dec(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn case_study_profit() -> Outcome {
    let seized = CollateralAmount::new(dec("2034.64")).map_err(|e| e.to_string())?;
    let sold = CollateralAmount::new(dec("1933.43")).map_err(|e| e.to_string())?;
    let profit = short_liquidation_profit(seized, sold).map_err(|e| e.to_string())?.value();
    let gap = (profit - dec("101.20")).abs();
    ensure(gap <= dec("0.02"), format!("profit {profit}, gap {gap}"))?;
    Ok(format!("profit {profit} ETH vs 101.20 (gap {gap})"))
}

fn case_study_decline() -> Outcome {
    let before = Price::new(dec("2477.96")).unwrap();
    let after = Price::new(dec("2305.85")).unwrap();
    let seized = CollateralAmount::new(dec("2034.64")).unwrap();
    let sold = dec("1933.43");
    let pool = CpAmmPool::from_observed_decline(before, after, sold).map_err(|e| e.to_string())?;
    let decline = direct_price_decline(&pool, seized, sold / seized.value()).map_err(|e| e.to_string())?;
    let pp = (decline - dec("0.0695")).abs() * dec("100");
    ensure(pp <= dec("0.05"), format!("decline {decline}, off by {pp} pp"))?;
    Ok(format!(
        "reserves x={:.2} USDC, y={:.4} ETH; decline {:.4}% (off by {:.4} pp)",
        pool.reserve_quote,
        pool.reserve_base,
        decline * dec("100"),
        pp
    ))
}

// Discounted mean of the call payoff over seeded GBM terminal values, with
// antithetic pairs and the terminal price as a control variate.
fn monte_carlo_call(i: &BsInputs, paths: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let drift = (i.domestic_rate - i.foreign_rate - 0.5 * i.volatility * i.volatility) * i.term;
    let vol = i.volatility * i.term.sqrt();
    let forward = i.spot * ((i.domestic_rate - i.foreign_rate) * i.term).exp();
    let pairs = paths / 2;
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..pairs {
        let z: f64 = rng.sample(StandardNormal);
        let up = i.spot * (drift + vol * z).exp();
        let down = i.spot * (drift - vol * z).exp();
        let y = 0.5 * ((up - i.strike).max(0.0) + (down - i.strike).max(0.0));
        let x = 0.5 * (up + down);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let n = pairs as f64;
    let (mx, my) = (sx / n, sy / n);
    let cov = sxy / n - mx * my;
    let var_x = sxx / n - mx * mx;
    let beta = cov / var_x;
    let estimate = my - beta * (mx - forward);
    let var_y = syy / n - my * my;
    let resid = (var_y - beta * cov).max(0.0);
    let discount = (-i.domestic_rate * i.term).exp();
    (discount * estimate, discount * (resid / n).sqrt())
}

fn cdf_by_quadrature(x: f64) -> f64 {
    let lo = -14.0;
    let n = 400_000;
    let h = (x - lo) / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = pdf(lo) + pdf(x);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(lo + k as f64 * h);
    }
    acc * h / 3.0
}

fn pricing_oracle() -> Outcome {
    let mut worst: (f64, String) = (0.0, String::new());
    let mut cell = 0u64;
    for &moneyness in &[0.9, 1.0, 1.1] {
        for &sigma in &[0.2, 0.5, 0.8] {
            for &term in &[0.25, 0.5, 1.0] {
                let i = BsInputs::new(100.0, 100.0 * moneyness, 0.05, 0.01, sigma, term)
                    .map_err(|e| e.to_string())?;
                let (mc, se) = monte_carlo_call(&i, 1_000_000, 0x5eed + cell);
                cell += 1;
                let bs = bs_call_price(&i);
                let rel = (bs - mc).abs() / mc;
                if rel > worst.0 {
                    worst = (rel, format!("K/S0={moneyness} σ={sigma} T={term}: bs {bs:.6} mc {mc:.6} ± {se:.6}"));
                }
            }
        }
    }
    ensure(worst.0 <= 0.005, format!("max relative error {:.5} at {}", worst.0, worst.1))?;

    let mut cdf_gap = 0.0f64;
    for k in 0..=240 {
        let x = -6.0 + 0.05 * k as f64;
        cdf_gap = cdf_gap.max((std_normal_cdf(x) - cdf_by_quadrature(x)).abs());
    }
    ensure(cdf_gap <= 1e-7, format!("cdf off by {cdf_gap:e}"))?;
    Ok(format!(
        "27 cells × 1e6 paths, max rel err {:.4}% ({}); max |Φ − quad| {:.1e}",
        worst.0 * 100.0,
        worst.1,
        cdf_gap
    ))
}

fn rand_dec(rng: &mut StdRng, lo: i64, hi: i64, scale: u32) -> Decimal {
    Decimal::new(rng.random_range(lo..hi), scale)
}

fn miqado_invariants() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = StdRng::seed_from_u64(4);
    let theta = dec("0.8");
    let (mut exercised, mut defaulted, mut terminated) = (0, 0, 0);
    for case in 0..CASES {
        let fail = |what: &str| format!("case {case}: {what}");
        let debt = rand_dec(&mut rng, 100, 100_000_000, 2);
        let price = Price::new(rand_dec(&mut rng, 1, 500_000_000, 4)).unwrap();
        // HF uniform in [0.5, 1).
        let hf_target = rand_dec(&mut rng, 5_000, 10_000, 4);
        let collateral = (hf_target * debt / (price.value() * theta)).round_dp(8);
        let rate = rand_dec(&mut rng, 1, 2_000, 4);
        let lambda = rand_dec(&mut rng, 1, 5_000, 4);
        let k_re = rand_dec(&mut rng, 1, 10_000, 4);
        let mut pos = match BorrowingPosition::new(format!("p{case}"), debt, collateral, rate) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let pre = health(&pos, price, theta).unwrap();
        if !pre.is_unhealthy() || pos.collateral().is_zero() {
            continue;
        }
        let params = MiqadoParams::new(lambda, 3600, k_re, Mode::Pure).unwrap();
        let mut book = Miqado::new(params, theta).unwrap();
        let mut session = book.initiate(&mut pos, price, 0).map_err(|e| fail(&e.to_string()))?;

        let post = health(&pos, price, theta).unwrap();
        let expected = pre.scaled(Decimal::ONE + lambda).unwrap();
        ensure(post == expected, fail("HF_post != (1+λ)·HF_pre"))?;
        ensure(pos.collateral().value() == collateral * (Decimal::ONE + lambda), fail("top-up"))?;

        match case % 3 {
            0 => {
                let outcome = book
                    .terminate(&mut session, &mut pos, price, 1800)
                    .map_err(|e| fail(&e.to_string()))?;
                let receipt = lambda * collateral * (Decimal::ONE + (Decimal::ONE + rate) * k_re);
                ensure(outcome.supporter_receipt.value() == receipt, fail("termination receipt"))?;
                ensure(pos.collateral().value() == collateral, fail("top-up not returned"))?;
                terminated += 1;
            }
            _ => {
                // Maturity price either side of the exercise boundary.
                let factor = if case % 3 == 1 { dec("0.5") } else { dec("2") };
                let p_t = Price::new(price.value() * factor).unwrap();
                let outcome = book
                    .settle_at_maturity(&mut session, &mut pos, p_t, 3600)
                    .map_err(|e| fail(&e.to_string()))?;
                let coll_value = collateral * (Decimal::ONE + lambda) * p_t.value();
                if coll_value >= debt {
                    ensure(outcome.state == SessionState::Exercised, fail("should exercise"))?;
                    exercised += 1;
                } else {
                    ensure(outcome.state == SessionState::Defaulted, fail("should default"))?;
                    ensure(
                        outcome.supporter_payoff == -(lambda * collateral * price.value()),
                        fail("default payoff != −premium"),
                    )?;
                    defaulted += 1;
                }
            }
        }
        let again = book.settle_at_maturity(&mut session, &mut pos, price, 7200);
        ensure(matches!(again, Err(Error::SessionNotActive(_))), fail("double settlement accepted"))?;
        let again = book.terminate(&mut session, &mut pos, price, 1800);
        ensure(matches!(again, Err(Error::SessionNotActive(_))), fail("terminate after settlement"))?;
    }
    let total = exercised + defaulted + terminated;
    ensure(total >= CASES * 9 / 10, format!("only {total} usable cases"))?;
    Ok(format!(
        "{total} randomized sessions ({exercised} exercised, {defaulted} defaulted, {terminated} terminated)"
    ))
}

fn fixture_sweep() -> Result<SweepResult, String> {
    let path = fixture("synthetic/config.json");
    let cfg = config::load(&path).map_err(|e| format!("{e:#}"))?;
    let prepared = config::prepare(&cfg, &path, cfg.seed).map_err(|e| format!("{e:#}"))?;
    run_sweep(&prepared.scenario, &prepared.lambdas, &prepared.terms_secs).map_err(|e| e.to_string())
}

fn unit_path(points: &[(i64, &str)]) -> PricePath {
    PricePath::new(
        points
            .iter()
            .map(|&(timestamp, p)| PricePoint {
                timestamp,
                price: Price::new(dec(p)).unwrap(),
            })
            .collect(),
    )
    .unwrap()
}

fn unit_event(id: &str, offset: usize) -> LiquidationEvent {
    LiquidationEvent {
        position: BorrowingPosition::new(id, dec("100"), dec("1"), dec("0.05")).unwrap(),
        path_offset: offset,
        amm_pool: None,
    }
}

fn hand_scenario(regime: Regime, events: Vec<LiquidationEvent>, path: PricePath, k_cf: &str) -> Scenario {
    Scenario {
        events,
        path,
        fsl: FslParams::new(dec("0.8"), dec(k_cf), dec("0.1")).unwrap(),
        miqado: MiqadoParams::new(dec("0.1"), 3600, dec("0.5"), Mode::Hybrid)
            .unwrap()
            .with_buffer(dec("0.05")),
        regime,
        sold_fraction: dec("0.5"),
        supporter: SupporterPolicy::Always,
        amm: None,
    }
}

fn payoff_structure(sweep: &SweepResult) -> Outcome {
    let tolerance = dec("1e-9");
    let mut trend = Vec::new();
    for chunk in sweep.cells.chunks_exact(5) {
        let mut defaults = Vec::new();
        for c in chunk {
            let row = c.report.payoff_rows.first().ok_or("missing payoff row")?;
            let sum = row.p_exercise_profit + row.p_exercise_loss + row.p_default;
            ensure((sum - Decimal::ONE).abs() <= tolerance, format!("row λ={} sums to {sum}", row.lambda))?;
            ensure(
                [row.p_exercise_profit, row.p_exercise_loss, row.p_default]
                    .iter()
                    .all(|p| *p >= Decimal::ZERO && *p <= Decimal::ONE),
                "probability outside [0,1]",
            )?;
            defaults.push(row.p_default);
        }
        ensure(
            defaults.windows(2).all(|w| w[1] <= w[0]),
            format!("p_default not non-increasing at ΔT={}: {defaults:?}", chunk[0].term_secs),
        )?;
        trend.push(format!(
            "ΔT={}h {}",
            chunk[0].term_secs / 3600,
            defaults.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("→")
        ));
    }

    // One event of each class: 100 → 120 (+22), 100 → 100 (0), 100 → 80 (−10).
    let path = unit_path(&[(0, "100"), (3600, "120"), (7200, "100"), (10800, "100"), (14400, "80")]);
    let events = vec![unit_event("p", 0), unit_event("l", 2), unit_event("d", 3)];
    let report = run_scenario(&hand_scenario(Regime::MiqadoOnly, events, path, "1")).map_err(|e| e.to_string())?;
    let row = &report.payoff_rows[0];
    let third = dec("0.333333333333333333");
    ensure(
        row.p_exercise_profit == third && row.p_exercise_loss == third && row.p_default == third,
        "3-event fixture is not (1/3, 1/3, 1/3)",
    )?;
    ensure(row.mean_profit == dec("4"), format!("3-event mean {}", row.mean_profit))?;
    Ok(format!("15 rows partition to 1; p_default {}; 3-event fixture (1/3,1/3,1/3), mean 4", trend.join("; ")))
}

fn restraint_linearity(sweep: &SweepResult) -> Outcome {
    let mut checked = 0;
    for a in &sweep.cells {
        for b in &sweep.cells {
            if a.term_secs == b.term_secs && b.lambda == a.lambda * Decimal::TWO {
                let (ra, rb) = (a.report.collateral_restraint_usd, b.report.collateral_restraint_usd);
                ensure(rb == ra * Decimal::TWO, format!("restraint({}) = {rb} ≠ 2·{ra}", b.lambda))?;
                checked += 1;
            }
        }
    }
    ensure(checked > 0, "no λ/2λ pairs in sweep")?;
    let first = &sweep.cells[0].report;
    Ok(format!(
        "{checked} λ→2λ pairs exact (e.g. λ=0.01: {} → λ=0.02: {})",
        first.collateral_restraint_usd,
        sweep.cells[1].report.collateral_restraint_usd
    ))
}

fn release_reduction_check(sweep: &SweepResult) -> Outcome {
    let baseline = sweep.baseline.collateral_release_usd;
    for c in &sweep.cells {
        ensure(
            c.report.collateral_release_usd <= baseline,
            format!("λ={} ΔT={}: hybrid {} > fsl-only {baseline}", c.lambda, c.term_secs, c.report.collateral_release_usd),
        )?;
    }
    // Hand oracle: 1 − 88/200.
    let oracle = dec("0.56");
    let path = unit_path(&[(0, "100"), (3600, "120"), (7200, "100"), (10800, "80")]);
    let events = || vec![unit_event("a", 0), unit_event("b", 2)];
    let fsl = run_scenario(&hand_scenario(Regime::FslOnly, events(), path.clone(), "1")).map_err(|e| e.to_string())?;
    let hybrid = run_scenario(&hand_scenario(Regime::Hybrid, events(), path, "1")).map_err(|e| e.to_string())?;
    let reduction = release_reduction(&fsl, &hybrid).map_err(|e| e.to_string())?;
    ensure((reduction - oracle).abs() <= dec("1e-9"), format!("hand reduction {reduction} vs {oracle}"))?;
    Ok(format!(
        "hybrid ≤ fsl-only in all {} cells; hand reduction {reduction} (oracle {oracle})",
        sweep.cells.len()
    ))
}

fn no_bare_floats(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Number(n) => n.is_i64() || n.is_u64(),
        serde_json::Value::Array(a) => a.iter().all(no_bare_floats),
        serde_json::Value::Object(o) => o.values().all(no_bare_floats),
        _ => true,
    }
}

fn determinism() -> Outcome {
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let status = Command::new(env!("CARGO_BIN_EXE_miqado"))
                .args(["simulate", "--config"])
                .arg(fixture("synthetic/config.json"))
                .arg("--out")
                .arg(dir.path())
                .args(["--seed", "20"])
                .status()
                .map_err(|e| e.to_string())?;
            ensure(status.success(), format!("simulate exited with {status}"))?;
            fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()?;
    ensure(runs[0] == runs[1], "report.json differs between runs")?;
    let json: serde_json::Value = serde_json::from_slice(&runs[0]).map_err(|e| e.to_string())?;
    ensure(no_bare_floats(&json), "report.json contains binary floats")?;
    Ok(format!("two runs byte-identical ({} bytes), all decimals as strings", runs[0].len()))
}

fn main() -> ExitCode {
    let sweep = &fixture_sweep();
    let with_sweep = |f: fn(&SweepResult) -> Outcome| move || sweep.as_ref().map_err(Clone::clone).and_then(f);
    let criteria: Vec<(&str, Check)> = vec![
        ("AC1 case-study liquidation profit", Box::new(case_study_profit)),
        ("AC2 AMM case-study price decline", Box::new(case_study_decline)),
        ("AC3 pricing vs Monte-Carlo and CDF quadrature", Box::new(pricing_oracle)),
        ("AC4 session invariants", Box::new(miqado_invariants)),
        ("AC5 payoff-table structure", Box::new(with_sweep(payoff_structure))),
        ("AC6 restraint linearity", Box::new(with_sweep(restraint_linearity))),
        ("AC7 release reduction", Box::new(with_sweep(release_reduction_check))),
        ("AC8 simulate determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.2}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.2}s]: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
