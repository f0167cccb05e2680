//! Fixtures shared by the benchmarks.

use miqado_core::sim::{synthesize_events, AmmSpec, SynthConfig};
use miqado_core::{
    generate_gbm, FslParams, GbmParams, MiqadoParams, Mode, Price, Regime, Scenario, SupporterPolicy,
};
use rust_decimal::Decimal;

/// Hourly path for a 30-day window at 80% annual volatility.
pub fn sample_path_params(seed: u64) -> GbmParams {
    GbmParams {
        p0: Price::new(Decimal::from(2000)).expect("positive"),
        mu: 0.0,
        sigma: 0.8,
        dt: 1.0 / (365.0 * 24.0),
        steps: 720,
        seed,
        start: 0,
    }
}

/// A hybrid scenario with `events` synthetic positions on a seeded path.
pub fn sample_scenario(events: usize, seed: u64) -> Scenario {
    let path = generate_gbm(&sample_path_params(seed)).expect("valid gbm");
    let fsl = FslParams::new(Decimal::new(9, 1), Decimal::new(5, 1), Decimal::new(5, 2)).expect("valid fsl");
    let synth = SynthConfig {
        count: events,
        hf_low: Decimal::new(90, 2),
        hf_high: Decimal::ONE,
        debt_low: Decimal::from(1000),
        debt_high: Decimal::from(250_000),
        borrow_rate: Decimal::new(5, 2),
    };
    let events = synthesize_events(&path, fsl.theta, &synth, 86_400, seed ^ 1).expect("valid synthesis");
    Scenario {
        events,
        path,
        fsl,
        miqado: MiqadoParams::new(Decimal::new(5, 2), 86_400, Decimal::new(5, 1), Mode::Hybrid).expect("valid params"),
        regime: Regime::Hybrid,
        sold_fraction: Decimal::new(95, 2),
        supporter: SupporterPolicy::Always,
        amm: Some(AmmSpec {
            base_reserve: Decimal::from(20_000),
            fee: Decimal::new(3, 3),
        }),
    }
}
