//! Unit-tagged ledger quantities.
//!
//! Debt and collateral magnitudes share one representation (an exact
//! base-10 [`Decimal`]) but carry a zero-sized unit marker, so adding a debt
//! amount to a collateral amount does not type-check. Crossing units goes
//! through a [`Price`] (debt units per collateral unit).

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::marker::PhantomData;
use std::ops::Add;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub trait Unit: Copy + fmt::Debug + Default + 'static {
    const NAME: &'static str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DebtUnit;

#[derive(Debug, Clone, Copy, Default)]
pub struct CollateralUnit;

impl Unit for DebtUnit {
    const NAME: &'static str = "debt";
}

impl Unit for CollateralUnit {
    const NAME: &'static str = "collateral";
}

/// A non-negative quantity of one unit.
pub struct Amount<U: Unit> {
    value: Decimal,
    unit: PhantomData<U>,
}

pub type DebtAmount = Amount<DebtUnit>;
pub type CollateralAmount = Amount<CollateralUnit>;

impl<U: Unit> Amount<U> {
    pub const ZERO: Self = Amount {
        value: Decimal::ZERO,
        unit: PhantomData,
    };

    pub fn new(value: Decimal) -> Result<Self> {
        if value.is_sign_negative() && !value.is_zero() {
            return Err(Error::NegativeAmount(value));
        }
        Ok(Self::from_raw(value))
    }

    fn from_raw(value: Decimal) -> Self {
        Amount {
            value,
            unit: PhantomData,
        }
    }

    pub fn value(self) -> Decimal {
        self.value
    }

    pub fn is_zero(self) -> bool {
        self.value.is_zero()
    }

    pub fn checked_add(self, other: Self) -> Result<Self> {
        Ok(Self::from_raw(add(self.value, other.value)?))
    }

    /// Subtraction that refuses to go below zero.
    pub fn checked_sub(self, other: Self) -> Result<Self> {
        Self::new(sub(self.value, other.value)?)
    }

    /// Multiply by a non-negative dimensionless factor.
    pub fn scale(self, factor: Decimal) -> Result<Self> {
        Self::new(mul(self.value, factor)?)
    }

    pub fn min(self, other: Self) -> Self {
        if self.value <= other.value {
            self
        } else {
            other
        }
    }
}

impl CollateralAmount {
    /// Value of this collateral in debt units.
    pub fn value_at(self, price: Price) -> Result<DebtAmount> {
        Ok(DebtAmount::from_raw(mul(self.value, price.value())?))
    }
}

impl DebtAmount {
    /// Collateral units purchasable with this much debt currency.
    pub fn in_collateral(self, price: Price) -> Result<CollateralAmount> {
        Ok(CollateralAmount::from_raw(div(self.value, price.value())?))
    }
}

impl<U: Unit> Add for Amount<U> {
    type Output = Amount<U>;

    /// Panics on overflow; use [`Amount::checked_add`] on untrusted magnitudes.
    fn add(self, rhs: Self) -> Self {
        Self::from_raw(self.value + rhs.value)
    }
}

impl<U: Unit> Clone for Amount<U> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<U: Unit> Copy for Amount<U> {}

impl<U: Unit> PartialEq for Amount<U> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<U: Unit> Eq for Amount<U> {}

impl<U: Unit> PartialOrd for Amount<U> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<U: Unit> Ord for Amount<U> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.cmp(&other.value)
    }
}

impl<U: Unit> Hash for Amount<U> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.value.normalize().hash(state)
    }
}

impl<U: Unit> Default for Amount<U> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<U: Unit> fmt::Debug for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, U::NAME)
    }
}

impl<U: Unit> fmt::Display for Amount<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value, f)
    }
}

impl<U: Unit> Serialize for Amount<U> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        Serialize::serialize(&self.value, serializer)
    }
}

impl<'de, U: Unit> Deserialize<'de> for Amount<U> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = <Decimal as Deserialize>::deserialize(deserializer)?;
        Self::new(value).map_err(serde::de::Error::custom)
    }
}

/// Debt units per collateral unit; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Price(Decimal);

impl Price {
    pub fn new(value: Decimal) -> Result<Self> {
        if value <= Decimal::ZERO {
            return Err(Error::NonPositivePrice(value));
        }
        Ok(Price(value))
    }

    pub fn value(self) -> Decimal {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl FromStr for Price {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let value = Decimal::from_str_exact(s.trim())
            .map_err(|e| Error::param("price", format!("`{s}`: {e}")))?;
        Price::new(value)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = <Decimal as Deserialize>::deserialize(deserializer)?;
        Price::new(value).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn add(a: Decimal, b: Decimal) -> Result<Decimal> {
    a.checked_add(b).ok_or(Error::Overflow)
}

pub(crate) fn sub(a: Decimal, b: Decimal) -> Result<Decimal> {
    a.checked_sub(b).ok_or(Error::Overflow)
}

pub(crate) fn mul(a: Decimal, b: Decimal) -> Result<Decimal> {
    a.checked_mul(b).ok_or(Error::Overflow)
}

pub(crate) fn div(a: Decimal, b: Decimal) -> Result<Decimal> {
    a.checked_div(b).ok_or(Error::Overflow)
}

/// Canonical output form: at most 18 fractional digits, no trailing zeros.
pub fn canonical(value: Decimal) -> Decimal {
    value.round_dp(18).normalize()
}
