//! Liquidation mitigation for collateralized lending.
//!
//! Fixed-spread liquidation and health factors live in [`lending`],
//! option pricing in [`option`], support sessions in [`miqado`], price
//! paths and AMM impact in [`market`], and the scenario engine in [`sim`].

pub mod amount;
pub mod error;
pub mod lending;
pub mod market;
pub mod miqado;
pub mod option;
pub mod sim;

pub use amount::{canonical, Amount, CollateralAmount, DebtAmount, Price};
pub use error::{Error, Result};
pub use lending::{
    collateralization_ratio, execute_fsl, execute_max_fsl, fsl_post_health_factor, health,
    health_factor, is_liquidatable, short_liquidation_profit, BorrowingPosition, FslOutcome,
    FslParams, HealthFactor, PositionId, PostHealth, PostLiquidationHealth,
};
pub use market::{
    direct_price_decline, generate_gbm, load_price_csv, CpAmmPool, GbmParams, PricePath,
    PricePoint, SECONDS_PER_YEAR,
};
pub use miqado::{
    BorrowerPolicy, InterestAccrual, Miqado, MiqadoParams, MiqadoSession, Mode, SessionState,
    SettlementOutcome,
};
pub use option::{bs_call_price, optimal_premium_factor, std_normal_cdf, BsInputs, ReversibleCallOption};
pub use sim::{
    run_scenario, run_sweep, EventRecord, LiquidationEvent, MetricsReport, Regime, Scenario,
    SupporterPolicy,
};
