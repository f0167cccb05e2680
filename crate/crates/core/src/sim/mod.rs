//! Scenario replay under the three liquidation regimes, plus metrics.
//!
//! Every event is replayed on its own: a fresh copy of the position, its own
//! session book and its own AMM snapshot. Nothing feeds back across events.

mod events;
mod metrics;

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

pub use events::{events_to_csv, load_events_csv, synthesize_events, LiquidationEvent, SynthConfig};
pub use metrics::{
    aggregate, collateral_release, collateral_restraint, health_recovery, payoff_row,
    payoff_table, release_reduction, Distribution, MetricsReport, PayoffRow, SettlementCounts,
    SupporterResult,
};

use crate::amount::{canonical, Price};
use crate::error::{Error, Result};
use crate::lending::{execute_max_fsl, BorrowingPosition, fsl_post_health_factor, health, FslParams, HealthFactor, PostHealth};
use crate::market::{direct_price_decline, CpAmmPool, PricePath, SECONDS_PER_YEAR};
use crate::miqado::{BorrowerPolicy, Miqado, MiqadoParams, Mode, SessionState};
use crate::option::historical_volatility;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FslOnly,
    MiqadoOnly,
    Hybrid,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::FslOnly => "fsl_only",
            Regime::MiqadoOnly => "miqado_only",
            Regime::Hybrid => "hybrid",
        }
    }
}

/// How the supporter decides whether to engage with an eligible position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SupporterPolicy {
    /// Engage with every eligible position.
    Always,
    /// Engage iff `λ ≤ λ*`. Without a fixed volatility, σ is estimated from
    /// the last `vol_window` returns before the event.
    Priced {
        foreign_rate: f64,
        #[serde(default)]
        volatility: Option<f64>,
        #[serde(default = "default_vol_window")]
        vol_window: usize,
    },
}

fn default_vol_window() -> usize {
    24
}

/// Pool used for the short-liquidation sale when an event carries no
/// snapshot: `base_reserve` units of collateral priced at the sale price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmmSpec {
    pub base_reserve: Decimal,
    pub fee: Decimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub events: Vec<LiquidationEvent>,
    pub path: PricePath,
    pub fsl: FslParams,
    pub miqado: MiqadoParams,
    pub regime: Regime,
    pub sold_fraction: Decimal,
    pub supporter: SupporterPolicy,
    pub amm: Option<AmmSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.miqado.validate()?;
        if self.sold_fraction < Decimal::ZERO || self.sold_fraction > Decimal::ONE {
            return Err(Error::param("sold_fraction", "must lie in [0, 1]"));
        }
        if let SupporterPolicy::Priced {
            foreign_rate,
            volatility,
            vol_window,
        } = self.supporter
        {
            if !foreign_rate.is_finite() {
                return Err(Error::param("supporter.foreign_rate", "must be finite"));
            }
            if volatility.is_some_and(|v| !v.is_finite() || v < 0.0) {
                return Err(Error::param("supporter.volatility", "must be finite and non-negative"));
            }
            if volatility.is_none() && vol_window < 2 {
                return Err(Error::param("supporter.vol_window", "needs at least 2 returns"));
            }
        }
        if let Some(amm) = self.amm {
            CpAmmPool::new(amm.base_reserve, amm.base_reserve, amm.fee)
                .map_err(|e| Error::param("amm", e.to_string()))?;
        }
        Ok(())
    }

    fn mode(&self) -> Mode {
        match self.regime {
            Regime::Hybrid => Mode::Hybrid,
            _ => Mode::Pure,
        }
    }
}

/// Per-event outcome of one regime. Flat so it maps onto a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub regime: Regime,
    pub lambda: Option<Decimal>,
    pub term_secs: Option<i64>,
    pub event_index: usize,
    pub position_id: String,
    pub t0: i64,
    pub price_t0: Decimal,
    pub hf_pre: Decimal,
    /// After a maximal FSL at `t0`.
    pub hf_post_fsl: PostHealth,
    pub healthy_post_fsl: bool,
    /// `(1+λ)·HF_pre`.
    pub hf_post_miqado: Option<Decimal>,
    pub healthy_post_miqado: Option<bool>,
    /// Release of the FSL-only counterfactual, in debt units.
    pub baseline_release_usd: Decimal,
    pub settlement: Option<SessionState>,
    pub settled_at: Option<i64>,
    pub supporter_payoff: Option<Decimal>,
    pub premium_value: Decimal,
    pub topup: Decimal,
    pub restraint_usd: Decimal,
    pub liquidated: bool,
    pub seized: Decimal,
    pub release_price: Option<Decimal>,
    pub release_usd: Decimal,
    pub price_decline: Option<Decimal>,
}

struct Release {
    seized: Decimal,
    price: Decimal,
    value: Decimal,
    decline: Option<Decimal>,
}

fn sale_pool(s: &Scenario, ev: &LiquidationEvent, price: Price, at_t0: bool) -> Result<Option<CpAmmPool>> {
    match (ev.amm_pool, s.amm) {
        (Some(pool), _) if at_t0 => Ok(Some(pool)),
        (Some(pool), _) => CpAmmPool::at_price(pool.reserve_base, price, pool.fee).map(Some),
        (None, Some(spec)) => CpAmmPool::at_price(spec.base_reserve, price, spec.fee).map(Some),
        (None, None) => Ok(None),
    }
}

fn liquidate(
    s: &Scenario,
    ev: &LiquidationEvent,
    pos: &mut BorrowingPosition,
    price: Price,
    at_t0: bool,
) -> Result<Release> {
    let outcome = execute_max_fsl(pos, price, &s.fsl)?;
    let seized = outcome.collateral_seized;
    let decline = match sale_pool(s, ev, price, at_t0)? {
        Some(pool) if !seized.is_zero() && !s.sold_fraction.is_zero() => {
            Some(canonical(direct_price_decline(&pool, seized, s.sold_fraction)?))
        }
        _ => None,
    };
    Ok(Release {
        seized: seized.value(),
        price: price.value(),
        value: canonical(outcome.released_value(price)?.value()),
        decline,
    })
}

fn event_sigma(s: &Scenario, offset: usize, volatility: Option<f64>, window: usize) -> Result<f64> {
    if let Some(v) = volatility {
        return Ok(v);
    }
    let start = offset.saturating_sub(window);
    if offset - start < 2 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: offset - start + 1,
        });
    }
    let history = s.path.slice(start, offset + 1)?;
    let span = (history.last().timestamp - history.points()[0].timestamp) as f64;
    let per_year = SECONDS_PER_YEAR as f64 * (offset - start) as f64 / span;
    historical_volatility(&history, per_year)
}

fn engages(s: &Scenario, book: &Miqado, ev: &LiquidationEvent, price: Price) -> Result<bool> {
    if !book.can_initiate(&ev.position, price)? {
        return Ok(false);
    }
    match s.supporter {
        SupporterPolicy::Always => Ok(true),
        SupporterPolicy::Priced {
            foreign_rate,
            volatility,
            vol_window,
        } => {
            let sigma = event_sigma(s, ev.path_offset, volatility, vol_window)?;
            book.supporter_decision(&ev.position, price, sigma, foreign_rate)
        }
    }
}

fn at_least(hf: &HealthFactor, threshold: Decimal) -> bool {
    hf.value() >= threshold
}

fn replay_event(s: &Scenario, index: usize, ev: &LiquidationEvent) -> Result<EventRecord> {
    let point = s.path.get(ev.path_offset).ok_or(Error::PathTooShort {
        needed: ev.path_offset as i64,
        last: s.path.len() as i64 - 1,
    })?;
    let (t0, p0) = (point.timestamp, point.price);
    let theta = s.fsl.theta;
    let hf = health(&ev.position, p0, theta)?;
    if !hf.is_unhealthy() {
        return Err(Error::NotLiquidatable(hf.value()));
    }
    let post_fsl = fsl_post_health_factor(&ev.position, p0, &s.fsl)?.health;
    let baseline = liquidate(s, ev, &mut ev.position.clone(), p0, true)?;

    let mut record = EventRecord {
        regime: s.regime,
        lambda: None,
        term_secs: None,
        event_index: index,
        position_id: ev.position.id().to_string(),
        t0,
        price_t0: p0.value(),
        hf_pre: canonical(hf.value()),
        hf_post_fsl: match post_fsl {
            PostHealth::Finite(v) => PostHealth::Finite(canonical(v)),
            PostHealth::Unbounded => PostHealth::Unbounded,
        },
        healthy_post_fsl: post_fsl.is_healthy(),
        hf_post_miqado: None,
        healthy_post_miqado: None,
        baseline_release_usd: baseline.value,
        settlement: None,
        settled_at: None,
        supporter_payoff: None,
        premium_value: Decimal::ZERO,
        topup: Decimal::ZERO,
        restraint_usd: Decimal::ZERO,
        liquidated: false,
        seized: Decimal::ZERO,
        release_price: None,
        release_usd: Decimal::ZERO,
        price_decline: None,
    };
    let mut release = None;

    if s.regime == Regime::FslOnly {
        release = Some(baseline);
    } else {
        let params = MiqadoParams {
            mode: s.mode(),
            ..s.miqado
        };
        let lambda = params.premium_factor;
        let boosted = hf.scaled(Decimal::ONE + lambda)?;
        record.lambda = Some(lambda);
        record.term_secs = Some(params.term_secs);
        record.hf_post_miqado = Some(canonical(boosted.value()));
        record.healthy_post_miqado = Some(!boosted.is_unhealthy());

        let mut book = Miqado::new(params, theta)?;
        let mut pos = ev.position.clone();
        if engages(s, &book, ev, p0)? {
            let mut session = book.initiate(&mut pos, p0, t0)?;
            record.topup = session.topup.value();
            record.premium_value = canonical(session.premium_value.value());
            record.restraint_usd = record.premium_value;

            let maturity_index = s.path.index_at_or_after(session.maturity).ok_or(Error::PathTooShort {
                needed: session.maturity,
                last: s.path.last().timestamp,
            })?;
            let mut outcome = None;
            if let BorrowerPolicy::RescueAboveHf(threshold) = params.borrower_policy {
                for pt in &s.path.points()[ev.path_offset + 1..maturity_index] {
                    if at_least(&health(&pos, pt.price, theta)?, threshold) {
                        outcome = Some((book.terminate(&mut session, &mut pos, pt.price, pt.timestamp)?, pt.timestamp));
                        break;
                    }
                }
            }
            let (outcome, settled_at) = match outcome {
                Some(done) => done,
                None => {
                    let pt = s.path.points()[maturity_index];
                    (
                        book.settle_at_maturity(&mut session, &mut pos, pt.price, pt.timestamp)?,
                        pt.timestamp,
                    )
                }
            };
            record.settlement = Some(outcome.state);
            record.settled_at = Some(settled_at);
            record.supporter_payoff = Some(canonical(outcome.supporter_payoff));

            if outcome.state == SessionState::Defaulted && s.regime == Regime::Hybrid {
                let p_t = s.path.points()[maturity_index].price;
                if health(&pos, p_t, theta)?.is_unhealthy() {
                    release = Some(liquidate(s, ev, &mut pos, p_t, false)?);
                }
            }
        } else if s.regime == Regime::Hybrid {
            release = Some(liquidate(s, ev, &mut pos, p0, true)?);
        }
    }

    if let Some(r) = release {
        record.liquidated = true;
        record.seized = r.seized;
        record.release_price = Some(r.price);
        record.release_usd = r.value;
        record.price_decline = r.decline;
    }
    Ok(record)
}

/// Replay every event of `s` independently, in order.
pub fn replay(s: &Scenario) -> Result<Vec<EventRecord>> {
    s.validate()?;
    s.events
        .iter()
        .enumerate()
        .map(|(i, ev)| replay_event(s, i, ev).map_err(|e| e.at_event(i)))
        .collect()
}

pub fn run_scenario(s: &Scenario) -> Result<MetricsReport> {
    let records = replay(s)?;
    let (lambda, term) = match s.regime {
        Regime::FslOnly => (None, None),
        _ => (Some(s.miqado.premium_factor), Some(s.miqado.term_secs)),
    };
    Ok(aggregate(s.regime, lambda, term, &records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub lambda: Decimal,
    pub term_secs: i64,
    pub report: MetricsReport,
    #[serde(skip)]
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub baseline: MetricsReport,
    #[serde(skip)]
    pub baseline_records: Vec<EventRecord>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn payoff_rows(&self) -> Vec<PayoffRow> {
        self.cells.iter().flat_map(|c| c.report.payoff_rows.clone()).collect()
    }
}

/// Run `base` once under FSL-only and once per `(λ, ΔT)` cell under
/// `base.regime`. Cells run in parallel; results keep grid order
/// (terms outer, λ inner).
pub fn run_sweep(base: &Scenario, lambdas: &[Decimal], terms_secs: &[i64]) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::param("sweep.lambdas", "must not be empty"));
    }
    if terms_secs.is_empty() {
        return Err(Error::param("sweep.terms_secs", "must not be empty"));
    }
    let fsl_only = Scenario {
        regime: Regime::FslOnly,
        ..base.clone()
    };
    let baseline_records = replay(&fsl_only)?;
    let baseline = aggregate(Regime::FslOnly, None, None, &baseline_records);

    let grid: Vec<(i64, Decimal)> = terms_secs
        .iter()
        .flat_map(|&t| lambdas.iter().map(move |&l| (t, l)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(term_secs, lambda)| {
            let miqado = MiqadoParams {
                premium_factor: lambda,
                term_secs,
                ..base.miqado
            };
            let scenario = Scenario {
                miqado,
                regime: if base.regime == Regime::FslOnly {
                    Regime::Hybrid
                } else {
                    base.regime
                },
                ..base.clone()
            };
            let records = replay(&scenario)?;
            let report = aggregate(scenario.regime, Some(lambda), Some(term_secs), &records);
            Ok(SweepCell {
                lambda,
                term_secs,
                report,
                records,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        baseline,
        baseline_records,
        cells,
    })
}
