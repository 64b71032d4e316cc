//! Observation, action, and transition value types.
//!
//! An observation is the fixed-order concatenation `[s, x_t, x_i]`:
//! the nominal state (10 floats), the trend factors (15 floats, five
//! sources by three metrics), and the inherent features (content embedding
//! plus category/brand/shop ids, consumed as indices by the encoder).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NOMINAL_DIM: usize = 10;
pub const TREND_SOURCES: usize = 5;
pub const TREND_METRICS: usize = 3;
pub const TREND_DIM: usize = TREND_SOURCES * TREND_METRICS;
/// Numeric (normalized) observation block: nominal state then trends.
pub const NUMERIC_DIM: usize = NOMINAL_DIM + TREND_DIM;
pub const DEFAULT_CONTENT_DIM: usize = 16;

/// Trend sources, index order fixed: market, campaign, seller, brand, category.
pub const TREND_SOURCE_NAMES: [&str; TREND_SOURCES] =
    ["market", "campaign", "seller", "brand", "category"];
/// Trend metrics, index order fixed: pv, ipv, sls.
pub const TREND_METRIC_NAMES: [&str; TREND_METRICS] = ["pv", "ipv", "sls"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl std::fmt::Display for ItemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalState {
    pub days_on_market: u32,
    pub pv_today: f64,
    pub ipv_today: f64,
    pub sls_today: f64,
    pub pv_cum: f64,
    pub ipv_cum: f64,
    pub sls_cum: f64,
    pub crowd_size: f64,
    pub crowd_activeness: f64,
    pub crowd_purchase_power: f64,
}

impl NominalState {
    pub fn fresh(crowd_size: f64, crowd_activeness: f64, crowd_purchase_power: f64) -> Self {
        NominalState {
            days_on_market: 0,
            pv_today: 0.0,
            ipv_today: 0.0,
            sls_today: 0.0,
            pv_cum: 0.0,
            ipv_cum: 0.0,
            sls_cum: 0.0,
            crowd_size,
            crowd_activeness,
            crowd_purchase_power,
        }
    }

    /// Feature order: days, pv/ipv/sls today, pv/ipv/sls cumulative,
    /// crowd size, activeness, purchase power.
    pub fn to_features(&self) -> [f64; NOMINAL_DIM] {
        [
            self.days_on_market as f64,
            self.pv_today,
            self.ipv_today,
            self.sls_today,
            self.pv_cum,
            self.ipv_cum,
            self.sls_cum,
            self.crowd_size,
            self.crowd_activeness,
            self.crowd_purchase_power,
        ]
    }

    /// Indices in the numeric block that hold counts (log1p-transformed).
    /// Crowd activeness and purchase power are rates, left on their scale.
    pub fn count_feature_mask() -> [bool; NOMINAL_DIM] {
        [
            true, true, true, true, true, true, true, true, false, false,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.to_features();
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("nominal state index {i} not finite")));
        }
        for (i, v) in f.iter().enumerate().take(8) {
            if *v < 0.0 {
                return Err(Error::domain(format!("nominal state index {i} negative: {v}")));
            }
        }
        Ok(())
    }
}

/// MAGP of pv/ipv/sls per trend source, laid out source-major:
/// `magp[source * 3 + metric]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFactors {
    pub magp: [f64; TREND_DIM],
}

impl TrendFactors {
    pub fn zeros() -> Self {
        TrendFactors {
            magp: [0.0; TREND_DIM],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.magp.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("trend factor index {i} not finite")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InherentFeatures {
    pub content: Vec<f64>,
    pub category_id: u32,
    pub brand_id: u32,
    pub shop_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub s: NominalState,
    pub x_t: TrendFactors,
    pub x_i: InherentFeatures,
}

impl Observation {
    /// Raw numeric block in fixed order, before normalization.
    pub fn numeric_raw(&self) -> [f64; NUMERIC_DIM] {
        let mut out = [0.0; NUMERIC_DIM];
        out[..NOMINAL_DIM].copy_from_slice(&self.s.to_features());
        out[NOMINAL_DIM..].copy_from_slice(&self.x_t.magp);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Item-affinity score, a sigmoid output, strictly inside (0,1).
    pub y_rl: f64,
    /// Average paid price over original price, in (0,1].
    pub price: f64,
}

impl Action {
    pub fn new(y_rl: f64, price: f64) -> Result<Self> {
        if !(y_rl > 0.0 && y_rl < 1.0) {
            return Err(Error::domain(format!("y_rl {y_rl} outside (0,1)")));
        }
        if !(price > 0.0 && price <= 1.0) {
            return Err(Error::domain(format!("price ratio {price} outside (0,1]")));
        }
        Ok(Action { y_rl, price })
    }

    pub fn dims() -> usize {
        2
    }

    pub fn to_vec(&self) -> [f64; 2] {
        [self.y_rl, self.price]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub item: ItemId,
    pub day: u32,
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub item: ItemId,
    pub transitions: Vec<Transition>,
}

impl Episode {
    /// Chaining: `next_obs` of step t is `obs` of step t+1, days advance
    /// by exactly one, every step names the same item, and only the last
    /// step may be terminal.
    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::domain("empty episode"));
        }
        for (t, tr) in self.transitions.iter().enumerate() {
            if tr.item != self.item {
                return Err(Error::domain(format!(
                    "episode item {:?} contains transition for {:?}",
                    self.item, tr.item
                )));
            }
            if t + 1 < self.transitions.len() {
                let next = &self.transitions[t + 1];
                if tr.terminal {
                    return Err(Error::domain(format!(
                        "non-final transition at step {t} marked terminal"
                    )));
                }
                if next.day != tr.day + 1 {
                    return Err(Error::domain(format!(
                        "days not consecutive at step {t}: {} then {}",
                        tr.day, next.day
                    )));
                }
                if next.obs != tr.next_obs {
                    return Err(Error::domain(format!(
                        "chaining broken at step {t}: next_obs != following obs"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}
