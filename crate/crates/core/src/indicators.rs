//! Technical indicators over daily bar windows.
//!
//! Every function is pure and works on the whole slice it is given: the EMA
//! family seeds its recursion with the first element of the slice, so the
//! window length is part of the result.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::Bar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndicatorError {
    #[error("{indicator} needs at least {needed} values, window has {got}")]
    WindowTooShort {
        indicator: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("empty window")]
    EmptyWindow,
    #[error("total volume over the VWAP lookback is zero")]
    ZeroVolume,
    #[error("all true ranges are zero; ADX undefined")]
    DegenerateRange,
    #[error("invalid indicator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorParams {
    pub sma_window: usize,
    pub ema_window: usize,
    pub rsi_window: usize,
    pub bb_window: usize,
    pub bb_k: f64,
    pub adx_window: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub vwap_lookback: usize,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            sma_window: 20,
            ema_window: 12,
            rsi_window: 14,
            bb_window: 20,
            bb_k: 2.0,
            adx_window: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            vwap_lookback: 10,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let windows = [
            ("sma_window", self.sma_window),
            ("ema_window", self.ema_window),
            ("rsi_window", self.rsi_window),
            ("bb_window", self.bb_window),
            ("adx_window", self.adx_window),
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("vwap_lookback", self.vwap_lookback),
        ];
        if let Some((name, _)) = windows.iter().find(|(_, w)| *w == 0) {
            return Err(IndicatorError::InvalidParams(format!("{name} must be >= 1")));
        }
        if self.macd_fast >= self.macd_slow {
            return Err(IndicatorError::InvalidParams(
                "macd_fast must be smaller than macd_slow".into(),
            ));
        }
        if !(self.bb_k.is_finite() && self.bb_k > 0.0) {
            return Err(IndicatorError::InvalidParams("bb_k must be > 0".into()));
        }
        Ok(())
    }

    /// Shortest window for which [`snapshot`] succeeds.
    pub fn required_len(&self) -> usize {
        [
            self.sma_window,
            self.ema_window,
            self.macd_slow,
            self.rsi_window + 1,
            self.bb_window,
            2 * self.adx_window + 1,
            self.vwap_lookback,
        ]
        .into_iter()
        .max()
        .unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSnapshot {
    pub date: NaiveDate,
    pub sma: f64,
    pub ema: f64,
    pub macd_line: f64,
    pub macd_signal_line: f64,
    pub macd_hist: f64,
    pub rsi: f64,
    pub bb_upper: f64,
    pub bb_mid: f64,
    pub bb_lower: f64,
    pub vwap: f64,
    pub pct_below_vwap: f64,
    pub adx: f64,
    /// True when every true range in the window was zero and `adx` was set to 0.
    pub adx_degenerate: bool,
}

fn need(indicator: &'static str, needed: usize, got: usize) -> Result<(), IndicatorError> {
    if got < needed {
        Err(IndicatorError::WindowTooShort { indicator, needed, got })
    } else {
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean of the last `n` closes.
pub fn sma(closes: &[f64], n: usize) -> Result<f64, IndicatorError> {
    need("SMA", n.max(1), closes.len())?;
    Ok(mean(&closes[closes.len() - n.max(1)..]))
}

/// Full EMA path with `alpha = 2 / (n + 1)`, seeded with the first value.
pub fn ema_series(values: &[f64], n: usize) -> Result<Vec<f64>, IndicatorError> {
    let (&first, rest) = values.split_first().ok_or(IndicatorError::EmptyWindow)?;
    let alpha = 2.0 / (n as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    out.push(first);
    let mut e = first;
    for &v in rest {
        e = alpha * v + (1.0 - alpha) * e;
        out.push(e);
    }
    Ok(out)
}

pub fn ema(closes: &[f64], n: usize) -> Result<f64, IndicatorError> {
    Ok(*ema_series(closes, n)?.last().expect("non-empty"))
}

/// Returns `(macd_line, signal_line, histogram)` at the last close.
pub fn macd(closes: &[f64], fast: usize, slow: usize, signal_n: usize) -> Result<(f64, f64, f64), IndicatorError> {
    need("MACD", slow.max(1), closes.len())?;
    let fast_path = ema_series(closes, fast)?;
    let slow_path = ema_series(closes, slow)?;
    let line: Vec<f64> = fast_path.iter().zip(&slow_path).map(|(f, s)| f - s).collect();
    let signal = ema(&line, signal_n)?;
    let last = *line.last().expect("non-empty");
    Ok((last, signal, last - signal))
}

/// Wilder RSI. Flat windows (no gains and no losses) read 50.
pub fn rsi(closes: &[f64], n: usize) -> Result<f64, IndicatorError> {
    let n = n.max(1);
    need("RSI", n + 1, closes.len())?;
    let mut gains = 0.0;
    let mut losses = 0.0;
    for w in closes[..=n].windows(2) {
        let ch = w[1] - w[0];
        if ch > 0.0 {
            gains += ch;
        } else {
            losses -= ch;
        }
    }
    let mut avg_gain = gains / n as f64;
    let mut avg_loss = losses / n as f64;
    for w in closes[n..].windows(2) {
        let ch = w[1] - w[0];
        let (g, l) = if ch > 0.0 { (ch, 0.0) } else { (0.0, -ch) };
        avg_gain = (avg_gain * (n as f64 - 1.0) + g) / n as f64;
        avg_loss = (avg_loss * (n as f64 - 1.0) + l) / n as f64;
    }
    Ok(if avg_loss == 0.0 {
        if avg_gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        let rs = avg_gain / avg_loss;
        100.0 - 100.0 / (1.0 + rs)
    })
}

/// Bollinger bands `(upper, mid, lower)` with population standard deviation.
pub fn bollinger(closes: &[f64], n: usize, k: f64) -> Result<(f64, f64, f64), IndicatorError> {
    let n = n.max(1);
    need("Bollinger", n, closes.len())?;
    let tail = &closes[closes.len() - n..];
    let mid = mean(tail);
    let var = tail.iter().map(|c| (c - mid).powi(2)).sum::<f64>() / n as f64;
    let band = k * var.sqrt();
    Ok((mid + band, mid, mid - band))
}

/// Rolling VWAP over the last `lookback` bars and the fraction of those
/// closes strictly below it.
pub fn vwap(bars: &[Bar], lookback: usize) -> Result<(f64, f64), IndicatorError> {
    let lookback = lookback.max(1);
    need("VWAP", lookback, bars.len())?;
    let tail = &bars[bars.len() - lookback..];
    let volume: f64 = tail.iter().map(|b| b.volume).sum();
    if volume <= 0.0 {
        return Err(IndicatorError::ZeroVolume);
    }
    let vwap = tail.iter().map(|b| b.typical_price() * b.volume).sum::<f64>() / volume;
    let below = tail.iter().filter(|b| b.close < vwap).count();
    Ok((vwap, below as f64 / lookback as f64))
}

fn dx(plus_dm: f64, minus_dm: f64, tr: f64) -> f64 {
    if tr == 0.0 {
        return 0.0;
    }
    let plus_di = 100.0 * plus_dm / tr;
    let minus_di = 100.0 * minus_dm / tr;
    let sum = plus_di + minus_di;
    if sum == 0.0 {
        0.0
    } else {
        100.0 * (plus_di - minus_di).abs() / sum
    }
}

/// Wilder ADX over the whole window.
pub fn adx(bars: &[Bar], n: usize) -> Result<f64, IndicatorError> {
    let n = n.max(1);
    need("ADX", 2 * n + 1, bars.len())?;
    let moves: Vec<(f64, f64, f64)> = bars
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            let up = cur.high - prev.high;
            let down = prev.low - cur.low;
            let plus = if up > down && up > 0.0 { up } else { 0.0 };
            let minus = if down > up && down > 0.0 { down } else { 0.0 };
            let tr = (cur.high - cur.low)
                .max((cur.high - prev.close).abs())
                .max((cur.low - prev.close).abs());
            (tr, plus, minus)
        })
        .collect();
    if moves.iter().all(|m| m.0 == 0.0) {
        return Err(IndicatorError::DegenerateRange);
    }
    let (mut s_tr, mut s_plus, mut s_minus) = moves[..n]
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1, acc.2 + m.2));
    let mut dxs = vec![dx(s_plus, s_minus, s_tr)];
    let nf = n as f64;
    for &(tr, plus, minus) in &moves[n..] {
        s_tr = s_tr - s_tr / nf + tr;
        s_plus = s_plus - s_plus / nf + plus;
        s_minus = s_minus - s_minus / nf + minus;
        dxs.push(dx(s_plus, s_minus, s_tr));
    }
    let mut adx = mean(&dxs[..n]);
    for &d in &dxs[n..] {
        adx = (adx * (nf - 1.0) + d) / nf;
    }
    Ok(adx)
}

/// All indicators for the last bar of `window`.
///
/// A degenerate ADX (flat bars) is reported as `adx = 0` with
/// `adx_degenerate` set; every other error propagates.
pub fn snapshot(window: &[Bar], params: &IndicatorParams) -> Result<IndicatorSnapshot, IndicatorError> {
    params.validate()?;
    let last = window.last().ok_or(IndicatorError::EmptyWindow)?;
    let closes: Vec<f64> = window.iter().map(|b| b.close).collect();
    let sma = sma(&closes, params.sma_window)?;
    let ema = ema(&closes, params.ema_window)?;
    let (macd_line, macd_signal_line, macd_hist) =
        macd(&closes, params.macd_fast, params.macd_slow, params.macd_signal)?;
    let rsi = rsi(&closes, params.rsi_window)?;
    let (bb_upper, bb_mid, bb_lower) = bollinger(&closes, params.bb_window, params.bb_k)?;
    let (vwap, pct_below_vwap) = vwap(window, params.vwap_lookback)?;
    let (adx, adx_degenerate) = match adx(window, params.adx_window) {
        Ok(v) => (v, false),
        Err(IndicatorError::DegenerateRange) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(IndicatorSnapshot {
        date: last.date,
        sma,
        ema,
        macd_line,
        macd_signal_line,
        macd_hist,
        rsi,
        bb_upper,
        bb_mid,
        bb_lower,
        vwap,
        pct_below_vwap,
        adx,
        adx_degenerate,
    })
}
