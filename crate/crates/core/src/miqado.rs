//! Support sessions: a supporter tops up an unhealthy position and in
//! exchange holds a reversible call option on it.
//!
//! Lifecycle of one session:
//!
//! 1. **Initiation** at `t0`: the supporter deposits `λ·C_t0` collateral.
//!    The position's collateral becomes `(1+λ)·C_t0`, so its health factor
//!    is multiplied by exactly `1+λ`. The option premium is `λ·C_t0·p_t0`.
//! 2. **Pre-maturity** (`t0 < t < T`): the borrower may terminate by paying
//!    `C_re = λ·C_t0·(1+I_L)·k_re`. The supporter gets the top-up back plus
//!    `C_re`.
//! 3. **Maturity**: the supporter takes the position over (repays the debt,
//!    receives all collateral) when the collateral covers the debt, and
//!    defaults otherwise, leaving the top-up in the position.

use std::collections::BTreeSet;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::amount::{add, mul, sub, CollateralAmount, DebtAmount, Price};
use crate::error::{Error, Result};
use crate::lending::{collateralization_ratio, health, BorrowingPosition, PositionId};
use crate::market::seconds_to_years;
use crate::option::optimal_premium_factor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sessions replace liquidation: eligible when `HF < 1`.
    Pure,
    /// Sessions run ahead of liquidation: eligible when `CR·(θ+B) < 1`.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrikeRule {
    /// Strike equals the debt outstanding at maturity.
    #[default]
    OutstandingDebt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorrowerPolicy {
    #[default]
    Never,
    /// Terminate at the first pre-maturity point where the topped-up health
    /// factor reaches the threshold.
    RescueAboveHf(Decimal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestAccrual {
    /// Debt at maturity equals debt at initiation.
    #[default]
    Off,
    /// Debt at maturity is `D_t0·(1+I_L)`.
    PerTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiqadoParams {
    /// `λ`
    pub premium_factor: Decimal,
    /// `ΔT` in seconds.
    pub term_secs: i64,
    pub k_re: Decimal,
    /// `B`
    pub buffer: Decimal,
    pub mode: Mode,
    pub strike_rule: StrikeRule,
    pub borrower_policy: BorrowerPolicy,
    pub accrual: InterestAccrual,
}

impl MiqadoParams {
    pub fn new(premium_factor: Decimal, term_secs: i64, k_re: Decimal, mode: Mode) -> Result<Self> {
        let params = MiqadoParams {
            premium_factor,
            term_secs,
            k_re,
            buffer: Decimal::ZERO,
            mode,
            strike_rule: StrikeRule::OutstandingDebt,
            borrower_policy: BorrowerPolicy::Never,
            accrual: InterestAccrual::Off,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_buffer(mut self, buffer: Decimal) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn with_borrower_policy(mut self, policy: BorrowerPolicy) -> Self {
        self.borrower_policy = policy;
        self
    }

    pub fn with_accrual(mut self, accrual: InterestAccrual) -> Self {
        self.accrual = accrual;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.premium_factor <= Decimal::ZERO {
            return Err(Error::param("premium_factor", "must be positive"));
        }
        if self.term_secs <= 0 {
            return Err(Error::param("term_secs", "must be positive"));
        }
        if self.k_re <= Decimal::ZERO || self.k_re >= Decimal::ONE {
            return Err(Error::param("k_re", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn term_years(&self) -> f64 {
        seconds_to_years(self.term_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Terminated,
    Exercised,
    Defaulted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiqadoSession {
    pub position_id: PositionId,
    pub premium_factor: Decimal,
    /// `C_t0`
    pub base_collateral: CollateralAmount,
    pub price_t0: Price,
    /// `λ·C_t0`
    pub topup: CollateralAmount,
    /// `λ·C_t0·p_t0`
    pub premium_value: DebtAmount,
    /// `I_L` captured at initiation.
    pub borrow_rate: Decimal,
    pub k_re: Decimal,
    pub accrual: InterestAccrual,
    pub started: i64,
    pub maturity: i64,
    pub state: SessionState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollateralDisposition {
    /// Top-up (plus reimbursement) paid back to the supporter.
    ReturnedToSupporter,
    /// Supporter repaid the debt and received all collateral.
    TakenOverBySupporter,
    /// Top-up stays in the position.
    RetainedInPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlementOutcome {
    pub state: SessionState,
    /// Debt units.
    pub supporter_payoff: Decimal,
    /// Collateral units; negative when the borrower gains collateral.
    pub borrower_cost: Decimal,
    /// Collateral handed to the supporter at settlement.
    pub supporter_receipt: CollateralAmount,
    pub disposition: CollateralDisposition,
}

impl SettlementOutcome {
    pub fn exercised(&self) -> bool {
        self.state == SessionState::Exercised
    }
}

/// Eligibility at `price`: `HF < 1` in pure mode, `CR·(θ+B) < 1` in hybrid
/// mode.
pub fn can_initiate(
    pos: &BorrowingPosition,
    price: Price,
    theta: Decimal,
    params: &MiqadoParams,
) -> Result<bool> {
    match params.mode {
        Mode::Pure => Ok(health(pos, price, theta)?.is_unhealthy()),
        Mode::Hybrid => Ok(support_factor(pos, price, theta, params.buffer)? < Decimal::ONE),
    }
}

/// `k_SF = CR·(θ+B)`.
pub fn support_factor(
    pos: &BorrowingPosition,
    price: Price,
    theta: Decimal,
    buffer: Decimal,
) -> Result<Decimal> {
    mul(collateralization_ratio(pos, price)?, add(theta, buffer)?)
}

/// Fair premium factor for supporting `pos`, valuing the takeover as a call
/// on the whole collateral (`C_t0·p_t0`) struck at the outstanding debt.
pub fn fair_premium_factor(
    pos: &BorrowingPosition,
    price: Price,
    params: &MiqadoParams,
    sigma: f64,
    foreign_rate: f64,
) -> Result<f64> {
    let collateral_value = pos.collateral().value_at(price)?.value().to_f64().unwrap_or(0.0);
    if collateral_value <= 0.0 {
        return Err(Error::ZeroCollateral);
    }
    let strike = pos.debt().value().to_f64().unwrap_or(f64::NAN);
    let rate = pos.borrow_rate().to_f64().unwrap_or(f64::NAN);
    optimal_premium_factor(
        collateral_value,
        1.0,
        strike,
        rate,
        foreign_rate,
        sigma,
        params.term_years(),
    )
}

/// A rational supporter engages iff `λ ≤ λ*`.
pub fn supporter_decision(
    pos: &BorrowingPosition,
    price: Price,
    theta: Decimal,
    params: &MiqadoParams,
    sigma: f64,
    foreign_rate: f64,
) -> Result<bool> {
    if !can_initiate(pos, price, theta, params)? {
        return Err(Error::NotEligible(pos.id().to_string()));
    }
    let fair = fair_premium_factor(pos, price, params, sigma, foreign_rate)?;
    let lambda = params.premium_factor.to_f64().unwrap_or(f64::INFINITY);
    Ok(engages(lambda, fair))
}

/// Ties engage.
fn engages(lambda: f64, fair: f64) -> bool {
    lambda <= fair
}

/// Session book of one lending pool: enforces one active session per
/// position.
#[derive(Debug, Clone)]
pub struct Miqado {
    params: MiqadoParams,
    theta: Decimal,
    active: BTreeSet<PositionId>,
}

impl Miqado {
    pub fn new(params: MiqadoParams, theta: Decimal) -> Result<Self> {
        params.validate()?;
        if theta <= Decimal::ZERO || theta >= Decimal::ONE {
            return Err(Error::param("theta", "collateral discount must lie in (0, 1)"));
        }
        Ok(Miqado {
            params,
            theta,
            active: BTreeSet::new(),
        })
    }

    pub fn params(&self) -> &MiqadoParams {
        &self.params
    }

    pub fn theta(&self) -> Decimal {
        self.theta
    }

    pub fn has_active_session(&self, id: &PositionId) -> bool {
        self.active.contains(id)
    }

    pub fn can_initiate(&self, pos: &BorrowingPosition, price: Price) -> Result<bool> {
        can_initiate(pos, price, self.theta, &self.params)
    }

    pub fn supporter_decision(
        &self,
        pos: &BorrowingPosition,
        price: Price,
        sigma: f64,
        foreign_rate: f64,
    ) -> Result<bool> {
        supporter_decision(pos, price, self.theta, &self.params, sigma, foreign_rate)
    }

    pub fn initiate(
        &mut self,
        pos: &mut BorrowingPosition,
        price: Price,
        now: i64,
    ) -> Result<MiqadoSession> {
        if self.active.contains(pos.id()) {
            return Err(Error::SessionAlreadyActive(pos.id().to_string()));
        }
        if !self.can_initiate(pos, price)? {
            return Err(Error::NotEligible(pos.id().to_string()));
        }
        let lambda = self.params.premium_factor;
        let base = pos.collateral();
        let topup = base.scale(lambda)?;
        if topup.is_zero() {
            return Err(Error::NotEligible(pos.id().to_string()));
        }
        let premium_value = topup.value_at(price)?;
        let maturity = now
            .checked_add(self.params.term_secs)
            .ok_or(Error::Overflow)?;

        pos.set_collateral(base.checked_add(topup)?);
        self.active.insert(pos.id().clone());
        Ok(MiqadoSession {
            position_id: pos.id().clone(),
            premium_factor: lambda,
            base_collateral: base,
            price_t0: price,
            topup,
            premium_value,
            borrow_rate: pos.borrow_rate(),
            k_re: self.params.k_re,
            accrual: self.params.accrual,
            started: now,
            maturity,
            state: SessionState::Active,
        })
    }

    fn check_active(&self, session: &MiqadoSession, pos: &BorrowingPosition) -> Result<()> {
        if session.state != SessionState::Active {
            return Err(Error::SessionNotActive(session.state));
        }
        if &session.position_id != pos.id() {
            return Err(Error::PositionMismatch {
                session: session.position_id.to_string(),
                position: pos.id().to_string(),
            });
        }
        Ok(())
    }

    /// Borrower buys the option back before maturity.
    pub fn terminate(
        &mut self,
        session: &mut MiqadoSession,
        pos: &mut BorrowingPosition,
        price: Price,
        now: i64,
    ) -> Result<SettlementOutcome> {
        self.check_active(session, pos)?;
        if now <= session.started || now >= session.maturity {
            return Err(Error::TerminationWindow {
                now,
                start: session.started,
                maturity: session.maturity,
            });
        }
        let reimbursement = reimbursement(session)?;
        pos.set_collateral(pos.collateral().checked_sub(session.topup)?);
        session.state = SessionState::Terminated;
        self.active.remove(&session.position_id);
        Ok(SettlementOutcome {
            state: SessionState::Terminated,
            supporter_payoff: reimbursement.value_at(price)?.value(),
            borrower_cost: reimbursement.value(),
            supporter_receipt: session.topup.checked_add(reimbursement)?,
            disposition: CollateralDisposition::ReturnedToSupporter,
        })
    }

    /// Exercise iff collateral value covers the outstanding debt
    /// (ties exercise); otherwise default.
    pub fn settle_at_maturity(
        &mut self,
        session: &mut MiqadoSession,
        pos: &mut BorrowingPosition,
        price_at_maturity: Price,
        now: i64,
    ) -> Result<SettlementOutcome> {
        self.check_active(session, pos)?;
        if now < session.maturity {
            return Err(Error::BeforeMaturity {
                now,
                maturity: session.maturity,
            });
        }
        let debt_at_maturity = match session.accrual {
            InterestAccrual::Off => pos.debt(),
            InterestAccrual::PerTerm => pos.debt().scale(add(Decimal::ONE, session.borrow_rate)?)?,
        };
        let collateral = pos.collateral();
        let collateral_value = collateral.value_at(price_at_maturity)?;
        self.active.remove(&session.position_id);

        if collateral_value >= debt_at_maturity {
            let payoff = sub(
                sub(collateral_value.value(), debt_at_maturity.value())?,
                session.premium_value.value(),
            )?;
            let debt_in_collateral = debt_at_maturity.in_collateral(price_at_maturity)?;
            pos.set_debt(DebtAmount::ZERO);
            pos.set_collateral(CollateralAmount::ZERO);
            session.state = SessionState::Exercised;
            Ok(SettlementOutcome {
                state: SessionState::Exercised,
                supporter_payoff: payoff,
                borrower_cost: sub(session.base_collateral.value(), debt_in_collateral.value())?,
                supporter_receipt: collateral,
                disposition: CollateralDisposition::TakenOverBySupporter,
            })
        } else {
            pos.set_debt(debt_at_maturity);
            session.state = SessionState::Defaulted;
            Ok(SettlementOutcome {
                state: SessionState::Defaulted,
                supporter_payoff: -session.premium_value.value(),
                borrower_cost: -session.topup.value(),
                supporter_receipt: CollateralAmount::ZERO,
                disposition: CollateralDisposition::RetainedInPosition,
            })
        }
    }
}

/// `C_re = λ·C_t0·(1+I_L)·k_re`, in collateral units.
pub fn reimbursement(session: &MiqadoSession) -> Result<CollateralAmount> {
    session
        .topup
        .scale(add(Decimal::ONE, session.borrow_rate)?)?
        .scale(session.k_re)
}

/// Multiple of the premium the supporter recovers on termination:
/// `1 + (1+I_L)·k_re`.
pub fn effective_termination_multiple(borrow_rate: Decimal, k_re: Decimal) -> Result<Decimal> {
    add(Decimal::ONE, mul(add(Decimal::ONE, borrow_rate)?, k_re)?)
}
