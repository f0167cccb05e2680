//! Reversible call options and their Black-Scholes valuation.
//!
//! A reversible call option is a European call in which the seller may
//! terminate the contract before maturity by reimbursing the buyer `φ·k`.
//! If it is not terminated, the buyer's payoff at maturity is that of an
//! ordinary call:
//!
//! ```text
//! A(T) ≥ K:  A(T) − K − φ
//! A(T) < K:  −φ
//! ```
//!
//! Valuation ignores the termination right and prices the maturity leg as
//! a Garman-Kohlhagen call (domestic rate `r`, foreign rate `r_f`):
//!
//! ```text
//! c  = S₀·e^(−r_f·T)·N(d₁) − K·e^(−r·T)·N(d₂)
//! d₁ = (ln(S₀/K) + (r − r_f + σ²/2)·T) / (σ·√T)
//! d₂ = d₁ − σ·√T
//! ```
//!
//! Ledger quantities stay in [`Decimal`]; the pricing kernel works in `f64`.

use std::f64::consts::SQRT_2;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::amount::{mul, CollateralAmount, DebtAmount};
use crate::error::{Error, Result};
use crate::market::PricePath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibleCallOption {
    /// `N`: units of the underlying.
    pub asset_amount: CollateralAmount,
    /// `K`: total exercise price.
    pub strike: DebtAmount,
    /// `φ`
    pub premium: DebtAmount,
    /// `k`: termination multiple of the premium.
    pub reimbursement_factor: Decimal,
    pub start: i64,
    pub maturity: i64,
}

impl ReversibleCallOption {
    pub fn new(
        asset_amount: CollateralAmount,
        strike: DebtAmount,
        premium: DebtAmount,
        reimbursement_factor: Decimal,
        start: i64,
        maturity: i64,
    ) -> Result<Self> {
        if maturity <= start {
            return Err(Error::param("maturity", "must be after start"));
        }
        if asset_amount.is_zero() {
            return Err(Error::param("asset_amount", "must be positive"));
        }
        if strike.is_zero() {
            return Err(Error::param("strike", "must be positive"));
        }
        if premium.is_zero() {
            return Err(Error::param("premium", "must be positive"));
        }
        if reimbursement_factor <= Decimal::ZERO {
            return Err(Error::param("reimbursement_factor", "must be positive"));
        }
        Ok(ReversibleCallOption {
            asset_amount,
            strike,
            premium,
            reimbursement_factor,
            start,
            maturity,
        })
    }

    /// Buyer payoff if the option runs to maturity and `asset_value` is the
    /// value of the `N` units at `T`.
    pub fn payoff_at_maturity(&self, asset_value: DebtAmount) -> Decimal {
        buyer_payoff_at_maturity(
            asset_value.value(),
            self.strike.value(),
            self.premium.value(),
        )
    }

    pub fn payoff_on_termination(&self) -> Result<Decimal> {
        termination_payoff(self.premium.value(), self.reimbursement_factor)
    }
}

pub fn buyer_payoff_at_maturity(asset_value: Decimal, strike: Decimal, premium: Decimal) -> Decimal {
    if asset_value >= strike {
        asset_value - strike - premium
    } else {
        -premium
    }
}

pub fn termination_payoff(premium: Decimal, k: Decimal) -> Result<Decimal> {
    if k <= Decimal::ZERO {
        return Err(Error::param("k", "reimbursement factor must be positive"));
    }
    mul(premium, k)
}

/// Standard normal CDF through the complementary error function, which
/// keeps full relative precision in the lower tail.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub domestic_rate: f64,
    pub foreign_rate: f64,
    /// Annualized.
    pub volatility: f64,
    /// Years.
    pub term: f64,
}

impl BsInputs {
    pub fn new(
        spot: f64,
        strike: f64,
        domestic_rate: f64,
        foreign_rate: f64,
        volatility: f64,
        term: f64,
    ) -> Result<Self> {
        let inputs = BsInputs {
            spot,
            strike,
            domestic_rate,
            foreign_rate,
            volatility,
            term,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.spot,
            self.strike,
            self.domestic_rate,
            self.foreign_rate,
            self.volatility,
            self.term,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("bs_inputs", "all inputs must be finite"));
        }
        if self.spot <= 0.0 {
            return Err(Error::param("spot", "must be positive"));
        }
        if self.strike <= 0.0 {
            return Err(Error::param("strike", "must be positive"));
        }
        if self.volatility < 0.0 {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        if self.term <= 0.0 {
            return Err(Error::param("term", "must be positive"));
        }
        Ok(())
    }

    fn discounted_forward_legs(&self) -> (f64, f64) {
        (
            self.spot * (-self.foreign_rate * self.term).exp(),
            self.strike * (-self.domestic_rate * self.term).exp(),
        )
    }
}

/// European call value; the `σ√T = 0` case falls back to the deterministic
/// limit `max(S₀e^(−r_f T) − Ke^(−rT), 0)`.
pub fn bs_call_price(inputs: &BsInputs) -> f64 {
    let (spot_leg, strike_leg) = inputs.discounted_forward_legs();
    let vol_sqrt_t = inputs.volatility * inputs.term.sqrt();
    if vol_sqrt_t == 0.0 {
        return (spot_leg - strike_leg).max(0.0);
    }
    let d1 = ((inputs.spot / inputs.strike).ln()
        + (inputs.domestic_rate - inputs.foreign_rate + 0.5 * inputs.volatility.powi(2))
            * inputs.term)
        / vol_sqrt_t;
    let d2 = d1 - vol_sqrt_t;
    let price = spot_leg * std_normal_cdf(d1) - strike_leg * std_normal_cdf(d2);
    // Cancellation can leave a tiny negative residue deep out of the money.
    price.max(0.0)
}

/// `λ* = c / (C_t0 · p_t0)` where `c` is the call value at spot `p_t0`.
pub fn optimal_premium_factor(
    p_t0: f64,
    collateral_t0: f64,
    strike: f64,
    borrow_rate: f64,
    foreign_rate: f64,
    sigma: f64,
    term: f64,
) -> Result<f64> {
    if collateral_t0 <= 0.0 {
        return Err(Error::ZeroCollateral);
    }
    let inputs = BsInputs::new(p_t0, strike, borrow_rate, foreign_rate, sigma, term)?;
    Ok(bs_call_price(&inputs) / (collateral_t0 * p_t0))
}

/// Annualized sample standard deviation of log returns.
pub fn historical_volatility(path: &PricePath, periods_per_year: f64) -> Result<f64> {
    let prices: Vec<f64> = path.points().iter().map(|pt| pt.price.to_f64()).collect();
    log_return_volatility(&prices, periods_per_year)
}

pub(crate) fn log_return_volatility(prices: &[f64], periods_per_year: f64) -> Result<f64> {
    if prices.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: prices.len(),
        });
    }
    if periods_per_year.is_nan() || periods_per_year <= 0.0 {
        return Err(Error::param("periods_per_year", "must be positive"));
    }
    let returns: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt() * periods_per_year.sqrt())
}
