//! Aggregate metrics over replayed events.

use rust_decimal::{Decimal, MathematicalOps};
use serde::{Deserialize, Serialize};

use super::{EventRecord, LiquidationEvent, Regime};
use crate::amount::{add, canonical, div, Price};
use crate::error::{Error, Result};
use crate::lending::{health, FslOutcome, PostHealth};
use crate::market::PricePath;
use crate::miqado::{MiqadoSession, SessionState, SettlementOutcome};

/// Order statistics of a sample; `unbounded` counts values excluded from the
/// finite statistics because they are infinite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub unbounded: usize,
    pub min: Option<Decimal>,
    pub median: Option<Decimal>,
    pub mean: Option<Decimal>,
    pub max: Option<Decimal>,
}

impl Distribution {
    pub fn of(values: impl IntoIterator<Item = Decimal>, unbounded: usize) -> Self {
        let mut sorted: Vec<Decimal> = values.into_iter().collect();
        sorted.sort();
        let n = sorted.len();
        if n == 0 {
            return Distribution {
                count: unbounded,
                unbounded,
                ..Default::default()
            };
        }
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / Decimal::TWO
        };
        let sum: Decimal = sorted.iter().sum();
        Distribution {
            count: n + unbounded,
            unbounded,
            min: Some(sorted[0]),
            median: Some(canonical(median)),
            mean: Some(canonical(sum / Decimal::from(n))),
            max: Some(sorted[n - 1]),
        }
    }
}

/// What a payoff row needs from one settled session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupporterResult {
    pub state: SessionState,
    pub payoff: Decimal,
}

impl From<&SettlementOutcome> for SupporterResult {
    fn from(o: &SettlementOutcome) -> Self {
        SupporterResult {
            state: o.state,
            payoff: o.supporter_payoff,
        }
    }
}

/// Supporter outcomes of one `(λ, ΔT)` cell. The three probabilities are
/// taken over sessions that reached maturity; terminated sessions are
/// counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRow {
    pub lambda: Decimal,
    pub term_secs: i64,
    pub sessions: usize,
    pub terminated: usize,
    pub p_exercise_profit: Decimal,
    pub p_exercise_loss: Decimal,
    pub p_default: Decimal,
    pub p_terminated: Decimal,
    pub mean_profit: Decimal,
    pub std_profit: Decimal,
}

fn ratio(part: usize, whole: usize) -> Decimal {
    if whole == 0 {
        Decimal::ZERO
    } else {
        canonical(Decimal::from(part) / Decimal::from(whole))
    }
}

/// `None` when no session in the group reached maturity.
pub fn payoff_row(lambda: Decimal, term_secs: i64, results: &[SupporterResult]) -> Option<PayoffRow> {
    let terminated = results
        .iter()
        .filter(|r| r.state == SessionState::Terminated)
        .count();
    let settled: Vec<&SupporterResult> = results
        .iter()
        .filter(|r| matches!(r.state, SessionState::Exercised | SessionState::Defaulted))
        .collect();
    let n = settled.len();
    if n == 0 {
        return None;
    }
    let count = |f: &dyn Fn(&SupporterResult) -> bool| settled.iter().filter(|r| f(r)).count();
    let profit = count(&|r| r.state == SessionState::Exercised && r.payoff > Decimal::ZERO);
    let loss = count(&|r| r.state == SessionState::Exercised && r.payoff <= Decimal::ZERO);
    let default = count(&|r| r.state == SessionState::Defaulted);

    let n_dec = Decimal::from(n);
    let mean = settled.iter().map(|r| r.payoff).sum::<Decimal>() / n_dec;
    let var = settled
        .iter()
        .map(|r| (r.payoff - mean) * (r.payoff - mean))
        .sum::<Decimal>()
        / n_dec;
    Some(PayoffRow {
        lambda,
        term_secs,
        sessions: results.len(),
        terminated,
        p_exercise_profit: ratio(profit, n),
        p_exercise_loss: ratio(loss, n),
        p_default: ratio(default, n),
        p_terminated: ratio(terminated, results.len()),
        mean_profit: canonical(mean),
        std_profit: canonical(var.sqrt().unwrap_or(Decimal::ZERO)),
    })
}

pub fn payoff_table<I>(groups: I) -> Vec<PayoffRow>
where
    I: IntoIterator<Item = ((Decimal, i64), Vec<SupporterResult>)>,
{
    groups
        .into_iter()
        .filter_map(|((lambda, term), results)| payoff_row(lambda, term, &results))
        .collect()
}

/// `Σ seized_i · p_i`.
pub fn collateral_release(outcomes: &[(FslOutcome, Price)]) -> Result<Decimal> {
    outcomes.iter().try_fold(Decimal::ZERO, |acc, (o, p)| {
        add(acc, o.released_value(*p)?.value())
    })
}

/// `Σ topup_i · p_i(t0)`.
pub fn collateral_restraint(sessions: &[MiqadoSession]) -> Result<Decimal> {
    sessions
        .iter()
        .try_fold(Decimal::ZERO, |acc, s| add(acc, s.topup.value_at(s.price_t0)?.value()))
}

/// Health factors after a `λ` top-up, `(1+λ)·HF_pre`, and the fraction of
/// events they lift to at least one.
pub fn health_recovery(
    events: &[LiquidationEvent],
    path: &PricePath,
    theta: Decimal,
    lambda: Decimal,
) -> Result<(Decimal, Vec<Decimal>)> {
    let factor = add(Decimal::ONE, lambda)?;
    let mut healthy = 0;
    let mut post = Vec::with_capacity(events.len());
    for (i, ev) in events.iter().enumerate() {
        let point = path.get(ev.path_offset).ok_or(Error::PathTooShort {
            needed: ev.path_offset as i64,
            last: path.len() as i64 - 1,
        });
        let hf = point
            .and_then(|pt| health(&ev.position, pt.price, theta))
            .and_then(|hf| hf.scaled(factor))
            .map_err(|e| e.at_event(i))?;
        if !hf.is_unhealthy() {
            healthy += 1;
        }
        post.push(canonical(hf.value()));
    }
    Ok((ratio(healthy, events.len()), post))
}

/// `1 − release_hybrid / release_fsl_only`.
pub fn release_reduction(fsl_only: &MetricsReport, hybrid: &MetricsReport) -> Result<Decimal> {
    if fsl_only.event_count != hybrid.event_count {
        return Err(Error::param(
            "release_reduction",
            format!(
                "reports cover {} and {} events",
                fsl_only.event_count, hybrid.event_count
            ),
        ));
    }
    reduction(hybrid.collateral_release_usd, fsl_only.collateral_release_usd)
}

fn reduction(released: Decimal, baseline: Decimal) -> Result<Decimal> {
    if baseline.is_zero() {
        return Err(Error::ZeroBaseline);
    }
    Ok(canonical(Decimal::ONE - div(released, baseline)?))
}

/// Each event lands in exactly one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettlementCounts {
    /// Liquidated at `t0` without a session.
    pub liquidated: usize,
    /// Neither supported nor liquidated.
    pub unsupported: usize,
    pub terminated: usize,
    pub exercised: usize,
    pub defaulted: usize,
}

impl SettlementCounts {
    pub fn total(&self) -> usize {
        self.liquidated + self.unsupported + self.terminated + self.exercised + self.defaulted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regime: Regime,
    pub lambda: Option<Decimal>,
    pub term_secs: Option<i64>,
    pub event_count: usize,
    pub collateral_release_usd: Decimal,
    pub collateral_restraint_usd: Decimal,
    /// Release of the same events under FSL only.
    pub baseline_release_usd: Decimal,
    /// Against `baseline_release_usd`; absent when that is zero.
    pub release_reduction: Option<Decimal>,
    pub hf_pre: Distribution,
    pub hf_post_fsl: Distribution,
    pub hf_post_miqado: Distribution,
    pub healthy_fraction_fsl: Decimal,
    pub healthy_fraction_miqado: Decimal,
    pub settlements: SettlementCounts,
    pub payoff_rows: Vec<PayoffRow>,
    pub price_declines: Vec<Decimal>,
}

fn total(values: impl Iterator<Item = Decimal>) -> Decimal {
    values.fold(Decimal::ZERO, |a, b| a + b)
}

/// Fold per-event records of one regime into a report.
pub fn aggregate(
    regime: Regime,
    lambda: Option<Decimal>,
    term_secs: Option<i64>,
    records: &[EventRecord],
) -> MetricsReport {
    let n = records.len();
    let release = total(records.iter().map(|r| r.release_usd));
    let baseline = total(records.iter().map(|r| r.baseline_release_usd));

    let mut settlements = SettlementCounts::default();
    let mut results = Vec::new();
    for r in records {
        match r.settlement {
            Some(state) => {
                match state {
                    SessionState::Terminated => settlements.terminated += 1,
                    SessionState::Exercised => settlements.exercised += 1,
                    SessionState::Defaulted => settlements.defaulted += 1,
                    SessionState::Active => {}
                }
                results.push(SupporterResult {
                    state,
                    payoff: r.supporter_payoff.unwrap_or_default(),
                });
            }
            None if r.liquidated => settlements.liquidated += 1,
            None => settlements.unsupported += 1,
        }
    }
    let payoff_rows = match (lambda, term_secs) {
        (Some(l), Some(t)) => payoff_row(l, t, &results).into_iter().collect(),
        _ => Vec::new(),
    };

    let unbounded = records
        .iter()
        .filter(|r| r.hf_post_fsl == PostHealth::Unbounded)
        .count();
    let miqado_values: Vec<Decimal> = records.iter().filter_map(|r| r.hf_post_miqado).collect();
    MetricsReport {
        regime,
        lambda,
        term_secs,
        event_count: n,
        collateral_release_usd: canonical(release),
        collateral_restraint_usd: canonical(total(records.iter().map(|r| r.restraint_usd))),
        baseline_release_usd: canonical(baseline),
        release_reduction: reduction(release, baseline).ok(),
        hf_pre: Distribution::of(records.iter().map(|r| r.hf_pre), 0),
        hf_post_fsl: Distribution::of(records.iter().filter_map(|r| r.hf_post_fsl.finite()), unbounded),
        hf_post_miqado: Distribution::of(miqado_values, 0),
        healthy_fraction_fsl: ratio(records.iter().filter(|r| r.healthy_post_fsl).count(), n),
        healthy_fraction_miqado: ratio(
            records
                .iter()
                .filter(|r| r.healthy_post_miqado == Some(true))
                .count(),
            n,
        ),
        settlements,
        payoff_rows,
        price_declines: records.iter().filter_map(|r| r.price_decline).collect(),
    }
}
