//! BTC/cash accounting under daily allocation targets, plus passive baselines.
//!
//! Cash is the balancing account: after a trade it absorbs the floating-point
//! residual so that `btc_units * mark_price + cash_usd` reproduces the
//! pre-trade value bit-for-bit when fees are zero.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortfolioError {
    #[error("allocation {0} outside [0, 1]")]
    AllocationOutOfRange(f64),
    #[error("price must be positive and finite, got {0}")]
    BadPrice(f64),
    #[error("fee_bps must be >= 0, got {0}")]
    BadFee(f64),
    #[error("price series is empty")]
    EmptySeries,
}

/// Fraction of portfolio value held in BTC.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Allocation(f64);

impl Allocation {
    pub const HALF: Allocation = Allocation(0.5);

    pub fn new(btc_fraction: f64) -> Result<Self, PortfolioError> {
        if (0.0..=1.0).contains(&btc_fraction) {
            Ok(Self(btc_fraction))
        } else {
            Err(PortfolioError::AllocationOutOfRange(btc_fraction))
        }
    }

    pub fn btc_fraction(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Allocation {
    type Error = PortfolioError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Allocation::new(v)
    }
}

impl From<Allocation> for f64 {
    fn from(a: Allocation) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeeModel {
    #[serde(default)]
    pub fee_bps: f64,
}

impl FeeModel {
    pub fn new(fee_bps: f64) -> Result<Self, PortfolioError> {
        if fee_bps.is_finite() && fee_bps >= 0.0 {
            Ok(Self { fee_bps })
        } else {
            Err(PortfolioError::BadFee(fee_bps))
        }
    }

    fn rate(&self) -> f64 {
        self.fee_bps / 10_000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    pub date: NaiveDate,
    pub btc_units: f64,
    pub cash_usd: f64,
    pub mark_price: f64,
    pub value_usd: f64,
}

fn check_price(price: f64) -> Result<(), PortfolioError> {
    if price.is_finite() && price > 0.0 {
        Ok(())
    } else {
        Err(PortfolioError::BadPrice(price))
    }
}

/// Smallest cash balance `c` with `btc_value + c == value` in floating point,
/// if one exists. The rounded sum is monotone in `c`, so a bisection over the
/// ordered bit patterns of non-negative doubles finds it.
fn balancing_cash(value: f64, btc_value: f64) -> Option<f64> {
    let guess = (value - btc_value).max(0.0);
    if btc_value + guess == value {
        return Some(guess);
    }
    let (mut lo, mut hi) = (0u64, value.to_bits());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if btc_value + f64::from_bits(mid) < value {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let cash = f64::from_bits(lo);
    (btc_value + cash == value).then_some(cash)
}

fn next_down(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

impl PortfolioState {
    pub fn all_cash(date: NaiveDate, cash_usd: f64, price: f64) -> Result<Self, PortfolioError> {
        check_price(price)?;
        Ok(Self {
            date,
            btc_units: 0.0,
            cash_usd,
            mark_price: price,
            value_usd: cash_usd,
        })
    }

    /// Current BTC share of value.
    pub fn btc_fraction(&self) -> f64 {
        if self.value_usd > 0.0 {
            self.btc_units * self.mark_price / self.value_usd
        } else {
            0.0
        }
    }

    /// Re-values at `price`; units and cash are untouched.
    pub fn mark(&self, date: NaiveDate, price: f64) -> Result<Self, PortfolioError> {
        check_price(price)?;
        Ok(Self {
            date,
            btc_units: self.btc_units,
            cash_usd: self.cash_usd,
            mark_price: price,
            value_usd: self.btc_units * price + self.cash_usd,
        })
    }

    /// Trades to `target` at `price`, paying fees out of cash.
    ///
    /// A buy that cannot cover its fee is scaled down so cash stays >= 0.
    pub fn rebalance(
        &self,
        date: NaiveDate,
        target: Allocation,
        price: f64,
        fees: FeeModel,
    ) -> Result<Self, PortfolioError> {
        let marked = self.mark(date, price)?;
        let value = marked.value_usd;
        let held = marked.btc_units * price;
        let wanted = target.btc_fraction() * value;
        if wanted == held {
            return Ok(marked);
        }
        let rate = fees.rate();
        let (units, cash) = if rate == 0.0 {
            let mut units = wanted / price;
            loop {
                let btc_value = units * price;
                if btc_value <= value {
                    if let Some(cash) = balancing_cash(value, btc_value) {
                        break (units, cash);
                    }
                }
                units = next_down(units);
            }
        } else if wanted > held {
            let mut notional = wanted - held;
            if notional * (1.0 + rate) > marked.cash_usd {
                notional = marked.cash_usd / (1.0 + rate);
            }
            let fee = notional * rate;
            let units = marked.btc_units + notional / price;
            let cash = (marked.cash_usd - notional - fee).max(0.0);
            (units, cash)
        } else {
            let notional = held - wanted;
            let fee = notional * rate;
            let units = (marked.btc_units - notional / price).max(0.0);
            (units, marked.cash_usd + notional - fee)
        };
        Ok(Self {
            date,
            btc_units: units,
            cash_usd: cash,
            mark_price: price,
            value_usd: units * price + cash,
        })
    }
}

/// Value path of a passive portfolio, stored as cumulative returns since the
/// first price so that period returns are exact functions of the price ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSeries {
    pub initial_value: f64,
    pub cumulative_return: Vec<f64>,
}

impl BaselineSeries {
    pub fn values(&self) -> Vec<f64> {
        self.cumulative_return
            .iter()
            .map(|r| self.initial_value * (1.0 + r))
            .collect()
    }

    pub fn total_return(&self) -> f64 {
        self.cumulative_return.last().copied().unwrap_or(0.0)
    }
}

fn price_ratios(prices: &[f64]) -> Result<Vec<f64>, PortfolioError> {
    let &p0 = prices.first().ok_or(PortfolioError::EmptySeries)?;
    prices.iter().try_for_each(|&p| check_price(p))?;
    Ok(prices.iter().map(|p| p / p0).collect())
}

/// `value_t = initial * price_t / price_0`.
pub fn baseline_buy_and_hold(initial_value: f64, prices: &[f64]) -> Result<BaselineSeries, PortfolioError> {
    Ok(BaselineSeries {
        initial_value,
        cumulative_return: price_ratios(prices)?.into_iter().map(|r| r - 1.0).collect(),
    })
}

/// Half in BTC at the first price, never rebalanced:
/// `value_t = initial / 2 + (initial / 2) * price_t / price_0`.
pub fn baseline_static_5050(initial_value: f64, prices: &[f64]) -> Result<BaselineSeries, PortfolioError> {
    let cumulative_return = price_ratios(prices)?
        .into_iter()
        .map(|r| 0.5 * (r - 1.0))
        .collect();
    Ok(BaselineSeries {
        initial_value,
        cumulative_return,
    })
}

/// 50/50 restored at every close; the sensitivity variant of the static baseline.
pub fn baseline_rebalanced_5050(initial_value: f64, prices: &[f64]) -> Result<BaselineSeries, PortfolioError> {
    let ratios = price_ratios(prices)?;
    let mut cumulative_return = Vec::with_capacity(ratios.len());
    let mut g = 1.0;
    cumulative_return.push(0.0);
    for w in ratios.windows(2) {
        g *= 1.0 + 0.5 * (w[1] / w[0] - 1.0);
        cumulative_return.push(g - 1.0);
    }
    Ok(BaselineSeries {
        initial_value,
        cumulative_return,
    })
}
