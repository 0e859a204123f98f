//! Brute-force reference formulas, written independently of the library.

use verbal_trader::Bar;

pub fn sma(xs: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in xs.len() - n..xs.len() {
        s += xs[i];
    }
    s / n as f64
}

/// Closed-form EMA seeded with the first value:
/// `(1-a)^t x0 + sum_k a (1-a)^(t-k) x_k`.
pub fn ema(xs: &[f64], n: usize) -> f64 {
    let a = 2.0 / (n as f64 + 1.0);
    let t = xs.len() - 1;
    let mut s = (1.0 - a).powi(t as i32) * xs[0];
    for (k, x) in xs.iter().enumerate().skip(1) {
        s += a * (1.0 - a).powi((t - k) as i32) * x;
    }
    s
}

pub fn macd(xs: &[f64], fast: usize, slow: usize, signal: usize) -> (f64, f64, f64) {
    let line: Vec<f64> = (1..=xs.len()).map(|t| ema(&xs[..t], fast) - ema(&xs[..t], slow)).collect();
    let l = *line.last().unwrap();
    let s = ema(&line, signal);
    (l, s, l - s)
}

/// Wilder smoothing unrolled: seed^(decay m) plus the decayed later terms.
fn wilder_avg(values: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    let seed = values[..n].iter().sum::<f64>() / nf;
    let rest = &values[n..];
    let m = rest.len();
    let decay = (nf - 1.0) / nf;
    let mut s = decay.powi(m as i32) * seed;
    for (j, v) in rest.iter().enumerate() {
        s += v / nf * decay.powi((m - 1 - j) as i32);
    }
    s
}

pub fn rsi(xs: &[f64], n: usize) -> f64 {
    let gains: Vec<f64> = xs.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let losses: Vec<f64> = xs.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let g = wilder_avg(&gains, n);
    let l = wilder_avg(&losses, n);
    if g + l == 0.0 {
        50.0
    } else {
        100.0 * g / (g + l)
    }
}

/// Population deviation from pairwise differences.
pub fn bollinger(xs: &[f64], n: usize, k: f64) -> (f64, f64, f64) {
    let tail = &xs[xs.len() - n..];
    let mid = sma(xs, n);
    let mut pair = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pair += (tail[i] - tail[j]).powi(2);
        }
    }
    let sd = (pair / (n * n) as f64).sqrt();
    (mid + k * sd, mid, mid - k * sd)
}

pub fn vwap(bars: &[Bar], n: usize) -> (f64, f64) {
    let tail = &bars[bars.len() - n..];
    let mut pv = 0.0;
    let mut v = 0.0;
    for b in tail {
        pv += (b.high + b.low + b.close) / 3.0 * b.volume;
        v += b.volume;
    }
    let vw = pv / v;
    let below = tail.iter().filter(|b| b.close < vw).count();
    (vw, below as f64 / n as f64)
}

/// Textbook Wilder ADX using averaged (not summed) smoothing.
pub fn adx(bars: &[Bar], n: usize) -> f64 {
    let mut tr = Vec::new();
    let mut pdm = Vec::new();
    let mut mdm = Vec::new();
    for i in 1..bars.len() {
        let (p, c) = (bars[i - 1], bars[i]);
        tr.push((c.high - c.low).max((c.high - p.close).abs()).max((c.low - p.close).abs()));
        let up = c.high - p.high;
        let down = p.low - c.low;
        pdm.push(if up > down && up > 0.0 { up } else { 0.0 });
        mdm.push(if down > up && down > 0.0 { down } else { 0.0 });
    }
    let nf = n as f64;
    let smooth = |xs: &[f64]| {
        let mut out = vec![xs[..n].iter().sum::<f64>() / nf];
        for x in &xs[n..] {
            let last = *out.last().unwrap();
            out.push((last * (nf - 1.0) + x) / nf);
        }
        out
    };
    let (atr, ps, ms) = (smooth(&tr), smooth(&pdm), smooth(&mdm));
    let dx: Vec<f64> = (0..atr.len())
        .map(|i| {
            if atr[i] == 0.0 {
                return 0.0;
            }
            let (p, m) = (100.0 * ps[i] / atr[i], 100.0 * ms[i] / atr[i]);
            if p + m == 0.0 {
                0.0
            } else {
                100.0 * (p - m).abs() / (p + m)
            }
        })
        .collect();
    *smooth(&dx).last().unwrap()
}
