//! Run configuration for `simulate`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use miqado_core::sim::{load_events_csv, synthesize_events, AmmSpec, SynthConfig};
use miqado_core::{
    generate_gbm, load_price_csv, BorrowerPolicy, FslParams, GbmParams, InterestAccrual,
    LiquidationEvent, MiqadoParams, Mode, Price, PricePath, Regime, Scenario, SupporterPolicy,
};
use rust_decimal::Decimal;
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Mixed into the run seed for event synthesis so prices and events use
/// independent streams.
const EVENT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub prices: PriceSource,
    pub events: EventSource,
    pub fsl: FslParams,
    pub miqado: MiqadoConfig,
    pub regime: Regime,
    #[serde(default = "default_supporter")]
    pub supporter: SupporterPolicy,
    pub sold_fraction: Decimal,
    #[serde(default)]
    pub amm: Option<AmmSpec>,
    pub sweep: SweepConfig,
}

fn default_supporter() -> SupporterPolicy {
    SupporterPolicy::Always
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSource {
    /// Path relative to the config file.
    Csv(PathBuf),
    Gbm(GbmSpec),
}

/// GBM parameters; the seed comes from the run.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmSpec {
    pub p0: Price,
    pub mu: f64,
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub start: i64,
}

impl GbmSpec {
    pub fn with_seed(self, seed: u64) -> GbmParams {
        GbmParams {
            p0: self.p0,
            mu: self.mu,
            sigma: self.sigma,
            dt: self.dt,
            steps: self.steps,
            seed,
            start: self.start,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSource {
    Csv(PathBuf),
    Synthesize(SynthConfig),
}

/// Session parameters shared by every sweep cell.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiqadoConfig {
    pub k_re: Decimal,
    #[serde(default)]
    pub buffer: Decimal,
    #[serde(default)]
    pub borrower_policy: BorrowerPolicy,
    #[serde(default)]
    pub accrual: InterestAccrual,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<Decimal>,
    pub terms_secs: Vec<i64>,
}

/// A loaded configuration: the scenario template plus the sweep grid.
pub struct Prepared {
    pub scenario: Scenario,
    pub lambdas: Vec<Decimal>,
    pub terms_secs: Vec<i64>,
    pub seed: u64,
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow::anyhow!("invalid config {}: field `{field}`: {}", path.display(), e.inner())
    })?;
    if config.schema_version != SCHEMA_VERSION {
        bail!(
            "invalid config {}: field `schema_version`: expected {SCHEMA_VERSION}, found {}",
            path.display(),
            config.schema_version
        );
    }
    Ok(config)
}

fn read_relative(base: &Path, file: &Path) -> anyhow::Result<Vec<u8>> {
    let full = base.join(file);
    fs::read(&full).with_context(|| format!("cannot read {}", full.display()))
}

pub fn prepare(config: &RunConfig, config_path: &Path, seed: u64) -> anyhow::Result<Prepared> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let sweep = &config.sweep;
    if sweep.lambdas.is_empty() {
        bail!("invalid config: field `sweep.lambdas`: must not be empty");
    }
    if sweep.terms_secs.is_empty() {
        bail!("invalid config: field `sweep.terms_secs`: must not be empty");
    }
    let lambda0 = sweep.lambdas[0];
    let term0 = sweep.terms_secs[0];
    for (i, &l) in sweep.lambdas.iter().enumerate() {
        MiqadoParams::new(l, term0, config.miqado.k_re, Mode::Pure)
            .with_context(|| format!("invalid config: field `sweep.lambdas[{i}]`"))?;
    }
    for (i, &t) in sweep.terms_secs.iter().enumerate() {
        MiqadoParams::new(lambda0, t, config.miqado.k_re, Mode::Pure)
            .with_context(|| format!("invalid config: field `sweep.terms_secs[{i}]`"))?;
    }
    let miqado = MiqadoParams::new(lambda0, term0, config.miqado.k_re, Mode::Hybrid)
        .context("invalid config: field `miqado`")?
        .with_buffer(config.miqado.buffer)
        .with_borrower_policy(config.miqado.borrower_policy)
        .with_accrual(config.miqado.accrual);

    let path: PricePath = match &config.prices {
        PriceSource::Csv(file) => load_price_csv(&read_relative(base, file)?)
            .with_context(|| format!("invalid price file {}", base.join(file).display()))?,
        PriceSource::Gbm(spec) => {
            generate_gbm(&spec.with_seed(seed)).context("invalid config: field `prices.gbm`")?
        }
    };
    let horizon = *sweep.terms_secs.iter().max().unwrap_or(&0);
    let events: Vec<LiquidationEvent> = match &config.events {
        EventSource::Csv(file) => load_events_csv(&read_relative(base, file)?)
            .with_context(|| format!("invalid events file {}", base.join(file).display()))?,
        EventSource::Synthesize(cfg) => {
            synthesize_events(&path, config.fsl.theta, cfg, horizon, seed ^ EVENT_STREAM)
                .context("invalid config: field `events.synthesize`")?
        }
    };
    let scenario = Scenario {
        events,
        path,
        fsl: config.fsl,
        miqado,
        regime: config.regime,
        sold_fraction: config.sold_fraction,
        supporter: config.supporter,
        amm: config.amm,
    };
    scenario.validate().context("invalid config")?;
    Ok(Prepared {
        scenario,
        lambdas: sweep.lambdas.clone(),
        terms_secs: sweep.terms_secs.clone(),
        seed,
    })
}
