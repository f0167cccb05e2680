//! Price paths and a constant-product AMM.
//!
//! Paths come from a `timestamp,price` CSV or from a seeded geometric
//! Brownian motion. The AMM quantifies the spot impact of a liquidator
//! dumping seized collateral in the same transaction.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_pcg::Pcg64;
use rust_decimal::{Decimal, MathematicalOps};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::amount::{add, div, mul, sub, CollateralAmount, Price};
use crate::error::{Error, Result};

pub const SECONDS_PER_YEAR: i64 = 31_536_000;

/// Decimal places of generated GBM prices.
pub const PRICE_DECIMALS: u32 = 8;

pub fn seconds_to_years(secs: i64) -> f64 {
    secs as f64 / SECONDS_PER_YEAR as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricePoint {
    pub timestamp: i64,
    pub price: Price,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PricePoint>", into = "Vec<PricePoint>")]
pub struct PricePath {
    points: Vec<PricePoint>,
}

impl TryFrom<Vec<PricePoint>> for PricePath {
    type Error = Error;

    fn try_from(points: Vec<PricePoint>) -> Result<Self> {
        PricePath::new(points)
    }
}

impl From<PricePath> for Vec<PricePoint> {
    fn from(path: PricePath) -> Self {
        path.points
    }
}

impl PricePath {
    pub fn new(points: Vec<PricePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPath);
        }
        if let Some(w) = points.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::param(
                "timestamp",
                format!(
                    "timestamps must strictly increase ({} then {})",
                    w[0].timestamp, w[1].timestamp
                ),
            ));
        }
        Ok(PricePath { points })
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<PricePoint> {
        self.points.get(index).copied()
    }

    pub fn last(&self) -> PricePoint {
        self.points[self.points.len() - 1]
    }

    /// Index of the first point with `timestamp >= ts`.
    pub fn index_at_or_after(&self, ts: i64) -> Option<usize> {
        let i = self.points.partition_point(|pt| pt.timestamp < ts);
        (i < self.points.len()).then_some(i)
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<PricePath> {
        PricePath::new(self.points[start..end].to_vec())
    }

    /// The `timestamp,price` CSV form; [`load_price_csv`] reads it back
    /// byte for byte.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * (self.points.len() + 1));
        out.push_str("timestamp,price\n");
        for pt in &self.points {
            let _ = writeln!(out, "{},{}", pt.timestamp, pt.price);
        }
        out
    }
}

pub fn load_price_csv(bytes: &[u8]) -> Result<PricePath> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "price"] {
        return Err(Error::Csv {
            line: 1,
            reason: "expected header `timestamp,price`".into(),
        });
    }

    let mut points: Vec<PricePoint> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Csv { line, reason };
        if record.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", record.len())));
        }
        let timestamp: i64 = record[0]
            .parse()
            .map_err(|_| bad(format!("invalid timestamp `{}`", &record[0])))?;
        let value = Decimal::from_str_exact(&record[1])
            .map_err(|_| bad(format!("invalid price `{}`", &record[1])))?;
        let price = Price::new(value).map_err(|e| bad(e.to_string()))?;
        if let Some(prev) = points.last() {
            if timestamp <= prev.timestamp {
                return Err(bad(format!(
                    "timestamp {timestamp} does not increase (previous {})",
                    prev.timestamp
                )));
            }
        }
        points.push(PricePoint { timestamp, price });
    }
    PricePath::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    pub p0: Price,
    /// Annual drift.
    pub mu: f64,
    /// Annual volatility.
    pub sigma: f64,
    /// Years per step; point spacing is `dt` rounded to whole seconds.
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub start: i64,
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::param("sigma", "must be non-negative"));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.interval_secs() < 1 {
            return Err(Error::param("dt", "must span at least one second"));
        }
        if self.steps < 1 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn interval_secs(&self) -> i64 {
        (self.dt * SECONDS_PER_YEAR as f64).round() as i64
    }
}

/// PCG-XSL-RR 128/64 stream feeding standard normals through the inverse
/// normal CDF. Uniforms take the top 53 bits of each draw and are centred
/// in their bucket, so they never hit 0 or 1.
pub struct NormalStream {
    rng: Pcg64,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: Pcg64::seed_from_u64(seed),
            normal: Normal::standard(),
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Price levels `p_0..=p_steps` of a GBM path as `f64`.
pub fn gbm_levels(params: &GbmParams) -> Result<Vec<f64>> {
    params.validate()?;
    let p0 = params.p0.to_f64();
    let drift = (params.mu - 0.5 * params.sigma * params.sigma) * params.dt;
    let shock = params.sigma * params.dt.sqrt();
    let mut stream = NormalStream::new(params.seed);
    let mut log_level = 0.0f64;
    let mut out = Vec::with_capacity(params.steps + 1);
    out.push(p0);
    for _ in 0..params.steps {
        log_level += drift + shock * stream.next_normal();
        out.push(p0 * log_level.exp());
    }
    Ok(out)
}

pub fn generate_gbm(params: &GbmParams) -> Result<PricePath> {
    let levels = gbm_levels(params)?;
    let interval = params.interval_secs();
    let mut points = Vec::with_capacity(levels.len());
    for (i, level) in levels.into_iter().enumerate() {
        let price = if i == 0 {
            params.p0
        } else {
            f64_to_price(level)?
        };
        points.push(PricePoint {
            timestamp: params.start + i as i64 * interval,
            price,
        });
    }
    PricePath::new(points)
}

/// Price levels are quoted to [`PRICE_DECIMALS`] places.
fn f64_to_price(v: f64) -> Result<Price> {
    if !v.is_finite() {
        return Err(Error::param("price", format!("non-finite level {v}")));
    }
    let value = Decimal::from_str(&format!("{v:.prec$}", prec = PRICE_DECIMALS as usize))
        .map_err(|e| Error::param("price", format!("{v}: {e}")))?;
    Price::new(value.normalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpAmmPool {
    /// `x`, debt units.
    pub reserve_quote: Decimal,
    /// `y`, collateral units.
    pub reserve_base: Decimal,
    pub fee: Decimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Swap {
    pub quote_out: Decimal,
    pub new_spot: Decimal,
}

impl CpAmmPool {
    pub fn new(reserve_quote: Decimal, reserve_base: Decimal, fee: Decimal) -> Result<Self> {
        if reserve_quote <= Decimal::ZERO || reserve_base <= Decimal::ZERO {
            return Err(Error::param("reserves", "must be positive"));
        }
        if fee < Decimal::ZERO || fee >= Decimal::ONE {
            return Err(Error::param("fee", "must lie in [0, 1)"));
        }
        Ok(CpAmmPool {
            reserve_quote,
            reserve_base,
            fee,
        })
    }

    /// Pool holding `reserve_base` collateral whose spot equals `price`.
    pub fn at_price(reserve_base: Decimal, price: Price, fee: Decimal) -> Result<Self> {
        CpAmmPool::new(mul(reserve_base, price.value())?, reserve_base, fee)
    }

    /// Fee-free pool whose spot moves from `before` to `after` when `sold`
    /// collateral is sold into it. With fee 0 the spot ratio after selling
    /// `Δy` is `(y/(y+Δy))²`, so `y = Δy·ρ/(1−ρ)` with `ρ = √(after/before)`.
    pub fn from_observed_decline(before: Price, after: Price, sold: Decimal) -> Result<Self> {
        if after >= before {
            return Err(Error::param("after", "must be below the starting spot"));
        }
        if sold <= Decimal::ZERO {
            return Err(Error::param("sold", "must be positive"));
        }
        let rho = div(after.value(), before.value())?
            .sqrt()
            .ok_or(Error::Overflow)?;
        let base = div(mul(sold, rho)?, sub(Decimal::ONE, rho)?)?;
        CpAmmPool::at_price(base, before, Decimal::ZERO)
    }

    pub fn spot(&self) -> Decimal {
        self.reserve_quote / self.reserve_base
    }

    pub fn invariant(&self) -> Decimal {
        self.reserve_quote * self.reserve_base
    }

    pub fn swap_base_for_quote(&mut self, amount_base_in: Decimal) -> Result<Swap> {
        if amount_base_in < Decimal::ZERO {
            return Err(Error::param("amount_base_in", "must be non-negative"));
        }
        if amount_base_in.is_zero() {
            return Ok(Swap {
                quote_out: Decimal::ZERO,
                new_spot: self.spot(),
            });
        }
        let k = mul(self.reserve_quote, self.reserve_base)?;
        let effective_in = mul(amount_base_in, sub(Decimal::ONE, self.fee)?)?;
        let new_quote = div(k, add(self.reserve_base, effective_in)?)?;
        let quote_out = sub(self.reserve_quote, new_quote)?;
        self.reserve_quote = new_quote;
        self.reserve_base = add(self.reserve_base, amount_base_in)?;
        Ok(Swap {
            quote_out,
            new_spot: div(self.reserve_quote, self.reserve_base)?,
        })
    }
}

/// Relative spot decline `(old − new)/old` after selling
/// `seized · sold_fraction` into a copy of `pool`.
pub fn direct_price_decline(
    pool: &CpAmmPool,
    seized: CollateralAmount,
    sold_fraction: Decimal,
) -> Result<Decimal> {
    if sold_fraction < Decimal::ZERO || sold_fraction > Decimal::ONE {
        return Err(Error::param("sold_fraction", "must lie in [0, 1]"));
    }
    let mut scratch = *pool;
    let before = scratch.spot();
    let swap = scratch.swap_base_for_quote(mul(seized.value(), sold_fraction)?)?;
    div(sub(before, swap.new_spot)?, before)
}
