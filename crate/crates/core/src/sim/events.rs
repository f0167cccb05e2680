//! Liquidation events: CSV ingestion and seeded synthesis.

use std::fmt::Write as _;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::amount::{div, mul};
use crate::error::{Error, Result};
use crate::lending::{health, BorrowingPosition};
use crate::market::{CpAmmPool, NormalStream, PricePath};

/// A position that became liquidatable at `path[path_offset]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquidationEvent {
    pub position: BorrowingPosition,
    pub path_offset: usize,
    #[serde(default)]
    pub amm_pool: Option<CpAmmPool>,
}

const EVENTS_HEADER: [&str; 5] = ["position_id", "debt", "collateral", "borrow_rate", "path_offset"];

pub fn load_events_csv(bytes: &[u8]) -> Result<Vec<LiquidationEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != EVENTS_HEADER {
        return Err(Error::Csv {
            line: 1,
            reason: format!("expected header `{}`", EVENTS_HEADER.join(",")),
        });
    }
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| Error::Csv { line, reason };
        if record.len() != EVENTS_HEADER.len() {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let decimal = |i: usize| {
            Decimal::from_str_exact(&record[i])
                .map_err(|_| bad(format!("invalid {} `{}`", EVENTS_HEADER[i], &record[i])))
        };
        let position = BorrowingPosition::new(&record[0], decimal(1)?, decimal(2)?, decimal(3)?)
            .map_err(|e| bad(e.to_string()))?;
        let path_offset = record[4]
            .parse()
            .map_err(|_| bad(format!("invalid path_offset `{}`", &record[4])))?;
        events.push(LiquidationEvent {
            position,
            path_offset,
            amm_pool: None,
        });
    }
    Ok(events)
}

pub fn events_to_csv(events: &[LiquidationEvent]) -> String {
    let mut out = EVENTS_HEADER.join(",");
    out.push('\n');
    for ev in events {
        let p = &ev.position;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.id(),
            p.debt(),
            p.collateral(),
            p.borrow_rate(),
            ev.path_offset
        );
    }
    out
}

/// Parameters for synthetic event sets: health factors uniform in
/// `[hf_low, hf_high)`, debts uniform in `[debt_low, debt_high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    #[serde(default = "default_hf_low")]
    pub hf_low: Decimal,
    #[serde(default = "default_hf_high")]
    pub hf_high: Decimal,
    pub debt_low: Decimal,
    pub debt_high: Decimal,
    pub borrow_rate: Decimal,
}

fn default_hf_low() -> Decimal {
    Decimal::new(90, 2)
}

fn default_hf_high() -> Decimal {
    Decimal::ONE
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hf_low <= Decimal::ZERO || self.hf_low >= self.hf_high || self.hf_high > Decimal::ONE {
            return Err(Error::param("hf_low/hf_high", "need 0 < hf_low < hf_high <= 1"));
        }
        if self.debt_low <= Decimal::ZERO || self.debt_low > self.debt_high {
            return Err(Error::param("debt_low/debt_high", "need 0 < debt_low <= debt_high"));
        }
        Ok(())
    }
}

fn unit_interval(stream: &mut NormalStream) -> Decimal {
    Decimal::from(stream.next_u64() >> 11) / Decimal::from(1u64 << 53)
}

/// Draw `count` liquidatable positions on `path`.
///
/// Each event picks a path point from which `horizon_secs` still fits in
/// the path, a target health factor and a debt; collateral is then sized to
/// `HF·D/(p·θ)`, rounded down to 8 decimals so the realized health factor
/// never exceeds the target.
pub fn synthesize_events(
    path: &PricePath,
    theta: Decimal,
    cfg: &SynthConfig,
    horizon_secs: i64,
    seed: u64,
) -> Result<Vec<LiquidationEvent>> {
    cfg.validate()?;
    let last = path.last().timestamp;
    let eligible = path
        .points()
        .iter()
        .take_while(|pt| pt.timestamp.saturating_add(horizon_secs) <= last)
        .count();
    if eligible == 0 {
        return Err(Error::PathTooShort {
            needed: path.points()[0].timestamp.saturating_add(horizon_secs),
            last,
        });
    }

    let mut stream = NormalStream::new(seed);
    let mut events = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let offset = ((stream.next_u64() as u128 * eligible as u128) >> 64) as usize;
        let price = path.points()[offset].price;
        let hf = (cfg.hf_low + (cfg.hf_high - cfg.hf_low) * unit_interval(&mut stream))
            .round_dp_with_strategy(6, RoundingStrategy::ToZero)
            .max(cfg.hf_low);
        let debt = (cfg.debt_low + (cfg.debt_high - cfg.debt_low) * unit_interval(&mut stream))
            .round_dp_with_strategy(2, RoundingStrategy::ToZero)
            .max(Decimal::new(1, 2));
        let collateral = div(mul(hf, debt)?, mul(price.value(), theta)?)?
            .round_dp_with_strategy(8, RoundingStrategy::ToZero);
        let position = BorrowingPosition::new(format!("syn-{i:04}"), debt, collateral, cfg.borrow_rate)?;
        debug_assert!(health(&position, price, theta)?.is_unhealthy());
        events.push(LiquidationEvent {
            position,
            path_offset: offset,
            amm_pool: None,
        });
    }
    Ok(events)
}
