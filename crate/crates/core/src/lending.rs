//! Collateralized debt positions and fixed-spread liquidation.
//!
//! A position holds debt `D` and collateral `C`. At price `p` the
//! collateralization ratio is `C·p / D` and the health factor discounts the
//! collateral by `θ`: `HF = C·p·θ / D`. Positions with `HF < 1` may be
//! liquidated: a liquidator repays up to `k_CF·D` and seizes
//! `repaid·(1+S)/p` collateral.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::amount::{add, div, mul, CollateralAmount, DebtAmount, Price};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionId(String);

impl PositionId {
    pub fn new(id: impl Into<String>) -> Self {
        PositionId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Single-debt, single-collateral borrowing position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowingPosition {
    id: PositionId,
    debt: DebtAmount,
    collateral: CollateralAmount,
    /// Interest rate the borrower agreed to, as a fraction per option term.
    borrow_rate: Decimal,
}

impl BorrowingPosition {
    pub fn new(
        id: impl Into<String>,
        debt: Decimal,
        collateral: Decimal,
        borrow_rate: Decimal,
    ) -> Result<Self> {
        let debt = DebtAmount::new(debt)?;
        if debt.is_zero() {
            return Err(Error::ZeroDebt);
        }
        if borrow_rate <= Decimal::ZERO || borrow_rate >= Decimal::ONE {
            return Err(Error::param("borrow_rate", "must lie in (0, 1)"));
        }
        Ok(BorrowingPosition {
            id: PositionId::new(id),
            debt,
            collateral: CollateralAmount::new(collateral)?,
            borrow_rate,
        })
    }

    pub fn id(&self) -> &PositionId {
        &self.id
    }

    pub fn debt(&self) -> DebtAmount {
        self.debt
    }

    pub fn collateral(&self) -> CollateralAmount {
        self.collateral
    }

    pub fn borrow_rate(&self) -> Decimal {
        self.borrow_rate
    }

    pub fn is_open(&self) -> bool {
        !self.debt.is_zero()
    }

    pub(crate) fn set_collateral(&mut self, collateral: CollateralAmount) {
        self.collateral = collateral;
    }

    pub(crate) fn set_debt(&mut self, debt: DebtAmount) {
        self.debt = debt;
    }
}

/// Health factor kept as the exact ratio `C·p·θ / D`.
///
/// Comparisons are done on the ratio, so `HF < 1` is decided without
/// rounding and scaling by `(1+λ)` is exact.
#[derive(Debug, Clone, Copy)]
pub struct HealthFactor {
    discounted_value: Decimal,
    debt: Decimal,
}

impl HealthFactor {
    pub fn value(&self) -> Decimal {
        self.discounted_value
            .checked_div(self.debt)
            .unwrap_or(Decimal::MAX)
    }

    /// Strictly below one: liquidatable.
    pub fn is_unhealthy(&self) -> bool {
        self.discounted_value < self.debt
    }

    pub fn scaled(&self, factor: Decimal) -> Result<Self> {
        Ok(HealthFactor {
            discounted_value: mul(self.discounted_value, factor)?,
            debt: self.debt,
        })
    }

    fn compare(&self, other: &Self) -> Ordering {
        if self.debt == other.debt {
            return self.discounted_value.cmp(&other.discounted_value);
        }
        match (
            self.discounted_value.checked_mul(other.debt),
            other.discounted_value.checked_mul(self.debt),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.value().cmp(&other.value()),
        }
    }
}

impl PartialEq for HealthFactor {
    fn eq(&self, other: &Self) -> bool {
        self.compare(other) == Ordering::Equal
    }
}

impl PartialOrd for HealthFactor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.compare(other))
    }
}

fn check_theta(theta: Decimal) -> Result<()> {
    if theta <= Decimal::ZERO || theta >= Decimal::ONE {
        return Err(Error::param("theta", "collateral discount must lie in (0, 1)"));
    }
    Ok(())
}

pub fn health(pos: &BorrowingPosition, price: Price, theta: Decimal) -> Result<HealthFactor> {
    check_theta(theta)?;
    if pos.debt.is_zero() {
        return Err(Error::ZeroDebt);
    }
    Ok(HealthFactor {
        discounted_value: mul(mul(pos.collateral.value(), price.value())?, theta)?,
        debt: pos.debt.value(),
    })
}

pub fn health_factor(pos: &BorrowingPosition, price: Price, theta: Decimal) -> Result<Decimal> {
    Ok(health(pos, price, theta)?.value())
}

pub fn collateralization_ratio(pos: &BorrowingPosition, price: Price) -> Result<Decimal> {
    if pos.debt.is_zero() {
        return Err(Error::ZeroDebt);
    }
    div(pos.collateral.value_at(price)?.value(), pos.debt.value())
}

pub fn is_liquidatable(pos: &BorrowingPosition, price: Price, theta: Decimal) -> Result<bool> {
    Ok(health(pos, price, theta)?.is_unhealthy())
}

/// The fixed-spread liquidation tuple `⟨θ, k_CF, S⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFslParams")]
pub struct FslParams {
    pub theta: Decimal,
    pub close_factor: Decimal,
    pub spread: Decimal,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFslParams {
    theta: Decimal,
    close_factor: Decimal,
    spread: Decimal,
}

impl TryFrom<RawFslParams> for FslParams {
    type Error = Error;

    fn try_from(raw: RawFslParams) -> Result<Self> {
        FslParams::new(raw.theta, raw.close_factor, raw.spread)
    }
}

impl FslParams {
    pub fn new(theta: Decimal, close_factor: Decimal, spread: Decimal) -> Result<Self> {
        check_theta(theta)?;
        if close_factor <= Decimal::ZERO || close_factor > Decimal::ONE {
            return Err(Error::param("close_factor", "must lie in (0, 1]"));
        }
        if spread <= Decimal::ZERO {
            return Err(Error::param("spread", "must be positive"));
        }
        Ok(FslParams {
            theta,
            close_factor,
            spread,
        })
    }

    pub fn max_repay(&self, pos: &BorrowingPosition) -> Result<DebtAmount> {
        pos.debt.scale(self.close_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FslOutcome {
    pub debt_repaid: DebtAmount,
    pub collateral_seized: CollateralAmount,
    /// `debt_repaid · S`, in debt units.
    pub liquidator_profit: DebtAmount,
    /// Seizure was clamped to the available collateral.
    pub shortfall: bool,
}

impl FslOutcome {
    pub const NONE: FslOutcome = FslOutcome {
        debt_repaid: DebtAmount::ZERO,
        collateral_seized: CollateralAmount::ZERO,
        liquidator_profit: DebtAmount::ZERO,
        shortfall: false,
    };

    /// Liquidator profit in collateral units: what remains of the seized
    /// collateral after selling enough of it at `price` to cover the
    /// repayment.
    pub fn profit_in_collateral(&self, price: Price) -> Result<CollateralAmount> {
        let cover = self.debt_repaid.in_collateral(price)?;
        short_liquidation_profit(self.collateral_seized, cover)
    }

    /// Market value of the seized collateral at `price`.
    pub fn released_value(&self, price: Price) -> Result<DebtAmount> {
        self.collateral_seized.value_at(price)
    }
}

/// Collateral kept by a liquidator who sold `sold_to_cover` of the
/// `seized` collateral to fund the repayment.
pub fn short_liquidation_profit(
    seized: CollateralAmount,
    sold_to_cover: CollateralAmount,
) -> Result<CollateralAmount> {
    seized.checked_sub(sold_to_cover)
}

pub fn execute_fsl(
    pos: &mut BorrowingPosition,
    price: Price,
    params: &FslParams,
    repay: DebtAmount,
) -> Result<FslOutcome> {
    let hf = health(pos, price, params.theta)?;
    if !hf.is_unhealthy() {
        return Err(Error::NotLiquidatable(hf.value()));
    }
    apply_fsl(pos, price, params, repay)
}

fn apply_fsl(
    pos: &mut BorrowingPosition,
    price: Price,
    params: &FslParams,
    repay: DebtAmount,
) -> Result<FslOutcome> {
    let bound = params.max_repay(pos)?;
    if repay > bound {
        return Err(Error::CloseFactorViolation {
            repay: repay.value(),
            bound: bound.value(),
        });
    }
    if repay.is_zero() {
        return Ok(FslOutcome::NONE);
    }

    let bonus = add(Decimal::ONE, params.spread)?;
    let mut repaid = repay;
    let mut seized = repay.scale(bonus)?.in_collateral(price)?;
    let shortfall = seized > pos.collateral;
    if shortfall {
        seized = pos.collateral;
        repaid = DebtAmount::new(div(seized.value_at(price)?.value(), bonus)?)?;
    }

    pos.debt = pos.debt.checked_sub(repaid)?;
    pos.collateral = pos.collateral.checked_sub(seized)?;
    Ok(FslOutcome {
        debt_repaid: repaid,
        collateral_seized: seized,
        liquidator_profit: repaid.scale(params.spread)?,
        shortfall,
    })
}

/// Maximal liquidation: repay the full close-factor share of the debt.
pub fn execute_max_fsl(
    pos: &mut BorrowingPosition,
    price: Price,
    params: &FslParams,
) -> Result<FslOutcome> {
    let repay = params.max_repay(pos)?;
    execute_fsl(pos, price, params, repay)
}

/// Health factor after a liquidation. A fully repaid position has no
/// finite health factor and is reported as [`PostHealth::Unbounded`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PostHealth {
    Finite(Decimal),
    Unbounded,
}

impl PostHealth {
    pub fn is_healthy(&self) -> bool {
        match self {
            PostHealth::Finite(v) => *v >= Decimal::ONE,
            PostHealth::Unbounded => true,
        }
    }

    pub fn finite(&self) -> Option<Decimal> {
        match self {
            PostHealth::Finite(v) => Some(*v),
            PostHealth::Unbounded => None,
        }
    }
}

impl fmt::Display for PostHealth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostHealth::Finite(v) => fmt::Display::fmt(v, f),
            PostHealth::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for PostHealth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" => Ok(PostHealth::Unbounded),
            other => Decimal::from_str_exact(other)
                .map(PostHealth::Finite)
                .map_err(|e| Error::param("health_factor", format!("`{other}`: {e}"))),
        }
    }
}

impl Serialize for PostHealth {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PostHealth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostLiquidationHealth {
    pub health: PostHealth,
    pub shortfall: bool,
}

/// Health factor of `pos` after a maximal liquidation at `price`; the
/// position itself is left untouched. Healthy positions are evaluated as
/// if they could be liquidated.
pub fn fsl_post_health_factor(
    pos: &BorrowingPosition,
    price: Price,
    params: &FslParams,
) -> Result<PostLiquidationHealth> {
    let mut after = pos.clone();
    let repay = params.max_repay(&after)?;
    let outcome = apply_fsl(&mut after, price, params, repay)?;
    let health = if after.debt.is_zero() {
        PostHealth::Unbounded
    } else {
        PostHealth::Finite(health_factor(&after, price, params.theta)?)
    };
    Ok(PostLiquidationHealth {
        health,
        shortfall: outcome.shortfall,
    })
}

// Reference form of the post-liquidation health factor, used to cross-check
// the ledger route above.
#[cfg(test)]
fn post_health_closed_form(
    d: Decimal,
    c: Decimal,
    p: Decimal,
    params: &FslParams,
) -> Option<Decimal> {
    let residual_debt = d * (Decimal::ONE - params.close_factor);
    if residual_debt.is_zero() {
        return None;
    }
    let seized = d * params.close_factor * (Decimal::ONE + params.spread) / p;
    Some((c - seized) * p * params.theta / residual_debt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rust_decimal_macros::dec;

    fn pos(d: Decimal, c: Decimal) -> BorrowingPosition {
        BorrowingPosition::new("p", d, c, dec!(0.05)).unwrap()
    }

    fn price(p: Decimal) -> Price {
        Price::new(p).unwrap()
    }

    #[test]
    fn health_factor_examples() {
        assert_eq!(
            health_factor(&pos(dec!(100), dec!(150)), price(dec!(1)), dec!(0.8)).unwrap(),
            dec!(1.2)
        );
        assert_eq!(
            health_factor(&pos(dec!(100), dec!(125)), price(dec!(1)), dec!(0.8)).unwrap(),
            dec!(1)
        );
        assert_eq!(
            health_factor(&pos(dec!(80), dec!(100)), price(dec!(0.9)), dec!(0.85)).unwrap(),
            dec!(0.95625)
        );
    }

    #[test]
    fn zero_debt_is_rejected() {
        assert_eq!(
            BorrowingPosition::new("p", dec!(0), dec!(1), dec!(0.05)),
            Err(Error::ZeroDebt)
        );
        let mut p = pos(dec!(10), dec!(10));
        p.set_debt(DebtAmount::ZERO);
        assert_eq!(health_factor(&p, price(dec!(1)), dec!(0.8)), Err(Error::ZeroDebt));
        assert_eq!(collateralization_ratio(&p, price(dec!(1))), Err(Error::ZeroDebt));
    }

    #[test]
    fn collateralization_ratio_examples() {
        assert_eq!(
            collateralization_ratio(&pos(dec!(100), dec!(100)), price(dec!(1))).unwrap(),
            dec!(1)
        );
        assert_eq!(
            collateralization_ratio(&pos(dec!(100), dec!(150)), price(dec!(1))).unwrap(),
            dec!(1.5)
        );
    }

    #[test]
    fn liquidatable_boundary() {
        // HF = 124.999875 * 0.8 / 100 = 0.9999990
        let barely = pos(dec!(100), dec!(124.999875));
        assert_eq!(
            health_factor(&barely, price(dec!(1)), dec!(0.8)).unwrap(),
            dec!(0.9999990)
        );
        assert!(is_liquidatable(&barely, price(dec!(1)), dec!(0.8)).unwrap());
        assert!(!is_liquidatable(&pos(dec!(100), dec!(125)), price(dec!(1)), dec!(0.8)).unwrap());
        assert!(is_liquidatable(&pos(dec!(80), dec!(100)), price(dec!(0.9)), dec!(0.85)).unwrap());
    }

    #[test]
    fn fsl_example() {
        let params = FslParams::new(dec!(0.8), dec!(0.5), dec!(0.05)).unwrap();
        let mut p = pos(dec!(100), dec!(200));
        // HF = 200*0.8/100 = 1.6 is healthy; drop the price to make it liquidatable.
        assert_eq!(
            execute_fsl(&mut p, price(dec!(1)), &params, DebtAmount::new(dec!(50)).unwrap()),
            Err(Error::NotLiquidatable(dec!(1.6)))
        );
        let params = FslParams::new(dec!(0.45), dec!(0.5), dec!(0.05)).unwrap();
        let out =
            execute_fsl(&mut p, price(dec!(1)), &params, DebtAmount::new(dec!(50)).unwrap())
                .unwrap();
        assert_eq!(out.collateral_seized.value(), dec!(52.5));
        assert_eq!(out.liquidator_profit.value(), dec!(2.5));
        assert_eq!(out.debt_repaid.value(), dec!(50));
        assert!(!out.shortfall);
        assert_eq!(p.debt().value(), dec!(50));
        assert_eq!(p.collateral().value(), dec!(147.5));
    }

    #[test]
    fn fsl_zero_repay_is_a_no_op() {
        let params = FslParams::new(dec!(0.45), dec!(0.5), dec!(0.05)).unwrap();
        let mut p = pos(dec!(100), dec!(200));
        let before = p.clone();
        let out = execute_fsl(&mut p, price(dec!(1)), &params, DebtAmount::ZERO).unwrap();
        assert_eq!(out, FslOutcome::NONE);
        assert_eq!(p, before);
    }

    #[test]
    fn fsl_rejects_repay_above_close_factor() {
        let params = FslParams::new(dec!(0.45), dec!(0.5), dec!(0.05)).unwrap();
        let mut p = pos(dec!(100), dec!(200));
        let err = execute_fsl(&mut p, price(dec!(1)), &params, DebtAmount::new(dec!(50.01)).unwrap())
            .unwrap_err();
        assert_eq!(
            err,
            Error::CloseFactorViolation {
                repay: dec!(50.01),
                bound: dec!(50)
            }
        );
    }

    #[test]
    fn fsl_clamps_seizure_and_flags_shortfall() {
        let params = FslParams::new(dec!(0.8), dec!(1), dec!(0.1)).unwrap();
        let mut p = pos(dec!(100), dec!(1));
        let out = execute_max_fsl(&mut p, price(dec!(100)), &params).unwrap();
        assert!(out.shortfall);
        assert_eq!(out.collateral_seized.value(), dec!(1));
        assert_eq!(out.debt_repaid.value().round_dp(20), (dec!(100) / dec!(1.1)).round_dp(20));
        assert_eq!(p.collateral().value(), dec!(0));
        assert!(p.debt().value() > dec!(9));
    }

    #[test]
    fn case_study_profit() {
        let seized = CollateralAmount::new(dec!(2034.64)).unwrap();
        let sold = CollateralAmount::new(dec!(1933.43)).unwrap();
        let profit = short_liquidation_profit(seized, sold).unwrap();
        assert_eq!(profit.value(), dec!(101.21));
        assert!((profit.value() - dec!(101.20)).abs() <= dec!(0.02));
    }

    #[test]
    fn post_health_examples() {
        let params = FslParams::new(dec!(0.8), dec!(0.5), dec!(0.05)).unwrap();
        let p = pos(dec!(100), dec!(130));
        let post = fsl_post_health_factor(&p, price(dec!(1)), &params).unwrap();
        assert_eq!(post.health, PostHealth::Finite(dec!(1.24)));
        assert!(!post.shortfall);
        assert_eq!(post, fsl_post_health_factor(&p, price(dec!(1)), &params).unwrap());

        let full = FslParams::new(dec!(0.8), dec!(1), dec!(0.05)).unwrap();
        let post = fsl_post_health_factor(&p, price(dec!(1)), &full).unwrap();
        assert_eq!(post.health, PostHealth::Unbounded);
    }

    #[test]
    fn post_health_parses_sentinel() {
        assert_eq!("inf".parse::<PostHealth>().unwrap(), PostHealth::Unbounded);
        assert_eq!(
            "1.24".parse::<PostHealth>().unwrap(),
            PostHealth::Finite(dec!(1.24))
        );
        assert_eq!(PostHealth::Unbounded.to_string(), "inf");
    }

    fn dec_in(lo: i64, hi: i64, scale: u32) -> impl Strategy<Value = Decimal> {
        (lo..hi).prop_map(move |m| Decimal::new(m, scale))
    }

    proptest! {
        #[test]
        fn cr_times_theta_is_hf(
            d in dec_in(1, 10_000_000, 2),
            c in dec_in(0, 10_000_000, 2),
            p in dec_in(1, 10_000_000, 4),
            theta in dec_in(1, 100, 2),
        ) {
            let position = pos(d, c);
            let px = price(p);
            let hf = health(&position, px, theta).unwrap();
            let exact = HealthFactor {
                discounted_value: c * p * theta,
                debt: d,
            };
            prop_assert_eq!(hf, exact);
            let cr = collateralization_ratio(&position, px).unwrap();
            prop_assert!((cr * theta - hf.value()).abs() <= dec!(1e-20));
        }

        #[test]
        fn health_factor_is_monotone(
            d in dec_in(100, 1_000_000, 2),
            c in dec_in(1, 1_000_000, 2),
            p in dec_in(1, 1_000_000, 4),
            bump in dec_in(1, 10_000, 2),
        ) {
            let theta = dec!(0.8);
            let base = health(&pos(d, c), price(p), theta).unwrap();
            prop_assert!(health(&pos(d, c + bump), price(p), theta).unwrap() > base);
            prop_assert!(health(&pos(d, c), price(p + bump), theta).unwrap() > base);
            prop_assert!(health(&pos(d + bump, c), price(p), theta).unwrap() < base);
        }

        #[test]
        fn max_fsl_conserves_units(
            d in dec_in(100, 10_000_000, 2),
            cr_bp in 50i64..125,
            k in dec_in(1, 101, 2),
            s in dec_in(1, 2_000, 4),
            p in dec_in(1, 1_000_000, 2),
        ) {
            // Collateral sized so that CR = cr_bp/100 at price p.
            let c = (d * Decimal::new(cr_bp, 2) / p).round_dp(8);
            prop_assume!(c > Decimal::ZERO);
            let params = FslParams::new(dec!(0.8), k.min(Decimal::ONE), s).unwrap();
            let mut position = pos(d, c);
            prop_assume!(is_liquidatable(&position, price(p), params.theta).unwrap());
            let out = execute_max_fsl(&mut position, price(p), &params).unwrap();
            prop_assert!(position.debt().value() >= Decimal::ZERO);
            prop_assert!(position.collateral().value() >= Decimal::ZERO);
            prop_assert!(out.collateral_seized.value() <= c);
            prop_assert!(out.debt_repaid.value() <= params.close_factor * d);
            let lhs = out.collateral_seized.value() * p;
            let rhs = out.debt_repaid.value() * (Decimal::ONE + s);
            // Off by at most one unit in the last place of the seizure.
            let ulp = Decimal::new(1, out.collateral_seized.value().scale());
            prop_assert!((lhs - rhs).abs() <= ulp * p);
            if !out.shortfall {
                prop_assert_eq!(position.debt().value(), d * (Decimal::ONE - params.close_factor));
                prop_assert_eq!(out.liquidator_profit.value(), out.debt_repaid.value() * s);
            }
        }

        #[test]
        fn post_health_matches_closed_form(
            d in dec_in(100, 1_000_000, 2),
            cr_bp in 100i64..125,
            k in dec_in(1, 100, 2),
            s in dec_in(1, 1_500, 4),
        ) {
            let p = dec!(1);
            let c = d * Decimal::new(cr_bp, 2);
            let params = FslParams::new(dec!(0.8), k, s).unwrap();
            let position = pos(d, c);
            prop_assume!(is_liquidatable(&position, price(p), params.theta).unwrap());
            let post = fsl_post_health_factor(&position, price(p), &params).unwrap();
            prop_assume!(!post.shortfall);
            let expected = post_health_closed_form(d, c, p, &params).unwrap();
            let got = post.health.finite().unwrap();
            prop_assert!((got - expected).abs() <= dec!(1e-20), "{} vs {}", got, expected);
        }
    }
}
