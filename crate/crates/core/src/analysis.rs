//! Series tables, the tree function, and critical-exponent extraction.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::mc::MCEstimate;
use crate::polymer::{bp_exact_coefficient, bp_exact_ln_coefficient};

/// One series coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesValue {
    Exact { value: f64 },
    /// Exact value kept as `(-1)^negative · e^{ln_abs}` when it overflows `f64`.
    LogExact { ln_abs: f64, negative: bool },
    Mc(MCEstimate),
}

impl SeriesValue {
    pub fn exact(value: f64) -> Self {
        SeriesValue::Exact { value }
    }

    pub fn value(&self) -> f64 {
        match *self {
            SeriesValue::Exact { value } => value,
            SeriesValue::LogExact { ln_abs, negative } => {
                let v = ln_abs.exp();
                if negative {
                    -v
                } else {
                    v
                }
            }
            SeriesValue::Mc(e) => e.mean,
        }
    }

    pub fn ln_abs(&self) -> f64 {
        match *self {
            SeriesValue::LogExact { ln_abs, .. } => ln_abs,
            _ => self.value().abs().ln(),
        }
    }

    /// -1, 0 or 1.
    pub fn sign(&self) -> f64 {
        match *self {
            SeriesValue::LogExact { negative, .. } => {
                if negative {
                    -1.0
                } else {
                    1.0
                }
            }
            _ => {
                let v = self.value();
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Relative standard error (0 for exact values).
    pub fn rel_error(&self) -> f64 {
        match self {
            SeriesValue::Mc(e) if e.mean != 0.0 => e.std_error / e.mean.abs(),
            SeriesValue::Mc(_) => f64::INFINITY,
            _ => 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            SeriesValue::Exact { value } => value.is_finite(),
            SeriesValue::LogExact { ln_abs, .. } => !ln_abs.is_nan() && ln_abs < f64::INFINITY,
            SeriesValue::Mc(e) => e.mean.is_finite() && e.std_error.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Mc,
}

/// Coefficients indexed by order, contiguous from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub model: String,
    pub dimension: usize,
    pub provenance: Provenance,
    entries: BTreeMap<usize, SeriesValue>,
}

impl SeriesTable {
    pub fn new(model: impl Into<String>, dimension: usize, exact: bool) -> Self {
        Self {
            model: model.into(),
            dimension,
            provenance: if exact { Provenance::Exact } else { Provenance::Mc },
            entries: BTreeMap::new(),
        }
    }

    /// Appends order `n`, which must be the next order after the last one.
    pub fn insert(&mut self, n: usize, value: SeriesValue) -> Result<()> {
        let next = self.entries.len() + 1;
        if n != next {
            return Err(out_of_range("order", n, format!("{next} (orders are contiguous from 1)")));
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!("coefficient at order {n} is not finite")));
        }
        if matches!(value, SeriesValue::Mc(_)) {
            self.provenance = Provenance::Mc;
        }
        self.entries.insert(n, value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, n: usize) -> Option<&SeriesValue> {
        self.entries.get(&n)
    }

    pub fn value(&self, n: usize) -> Option<f64> {
        self.get(n).map(SeriesValue::value)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.values().map(SeriesValue::value).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &SeriesValue)> {
        self.entries.iter().map(|(&n, v)| (n, v))
    }

    /// `(-1)^{n-1}` when the coefficients alternate starting positive, else 1.
    fn sign_normalizer(&self) -> impl Fn(usize) -> f64 {
        let alternating = self.len() >= 2
            && self
                .iter()
                .all(|(n, v)| v.sign() == if n % 2 == 1 { 1.0 } else { -1.0 });
        move |n| if alternating && n % 2 == 0 { -1.0 } else { 1.0 }
    }
}

/// Exact hard-core polymer table `(1/N!) Σ_T W(T)` for `d ∈ {2, 3}`.
pub fn bp_exact_table(d: usize, n_max: usize) -> Result<SeriesTable> {
    let mut table = SeriesTable::new(format!("branched polymer d={d}"), d, true);
    for n in 1..=n_max {
        let v = bp_exact_coefficient(n, d)?;
        let entry = if v.is_finite() {
            SeriesValue::exact(v)
        } else {
            SeriesValue::LogExact {
                ln_abs: bp_exact_ln_coefficient(n, d)?,
                negative: false,
            }
        };
        table.insert(n, entry)?;
    }
    Ok(table)
}

/// Tree function `T(z)`: the principal solution of `T e^{-T} = z`, `z <= 1/e`.
pub fn tree_function(z: f64) -> Result<f64> {
    let inv_e = (-1.0f64).exp();
    if z.is_nan() || z > inv_e {
        return Err(Error::Domain(format!("tree function needs z <= 1/e, got {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z == inv_e {
        return Ok(1.0);
    }
    // branch-point expansion in p = sqrt(2 (1 - e z))
    let p = (2.0 * (1.0 - std::f64::consts::E * z)).max(0.0).sqrt();
    let branch = |p: f64| 1.0 - p + p * p / 3.0 - 11.0 / 72.0 * p.powi(3) + 43.0 / 540.0 * p.powi(4);
    if p < 1e-4 {
        return Ok(branch(p));
    }
    let mut t = if z.abs() < 0.05 {
        z * (1.0 + z * (1.0 + z * (1.5 + z * 8.0 / 3.0)))
    } else if z > 0.0 {
        branch(p)
    } else {
        // -T = W(|z|) for z < 0 (Winitzki's approximation)
        let a = (-z).ln_1p();
        -a * (1.0 - a.ln_1p() / (2.0 + a))
    };
    // Halley on f(T) = T e^{-T} - z
    for _ in 0..100 {
        let e = (-t).exp();
        let f = t * e - z;
        let f1 = (1.0 - t) * e;
        let f2 = (t - 2.0) * e;
        let denom = f1 - 0.5 * f * f2 / f1;
        let step = f / denom;
        let next = (t - step).min(1.0);
        let done = (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300);
        t = next;
        if done {
            break;
        }
    }
    Ok(t)
}

/// Large-`N` asymptotic form of the `d = 3` polymer coefficient,
/// `(2π)^{N - 3/2} e^{N} N^{-3/2}`.
pub fn stirling_asymptotic(n: usize) -> f64 {
    stirling_asymptotic_ln(n).exp()
}

pub fn stirling_asymptotic_ln(n: usize) -> f64 {
    let nf = n as f64;
    let ln_two_pi = (2.0 * std::f64::consts::PI).ln();
    (nf - 1.5) * ln_two_pi + nf - 1.5 * nf.ln()
}

/// Power-law fit `b_N ≈ C N^{-θ} z_c^{-N}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub theta: f64,
    pub z_c: f64,
    /// RMS of the (weighted) residuals of `ln |b_N|`.
    pub residual: f64,
    pub orders: (usize, usize),
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Weighted least-squares fit of `ln b_N = c - θ ln N - N ln z_c` over `window`.
///
/// Alternating tables are sign-normalized by `(-1)^{N-1}` first. Monte Carlo
/// entries are weighted by their inverse relative variance.
pub fn fit_theta(table: &SeriesTable, window: RangeInclusive<usize>) -> Result<ExponentFit> {
    let (lo, hi) = (*window.start(), *window.end());
    if hi < lo || hi - lo + 1 < 4 {
        return Err(Error::Fit(format!("fit window {lo}..={hi} has fewer than 4 orders")));
    }
    let norm = table.sign_normalizer();
    let mut rows = Vec::with_capacity(hi - lo + 1);
    for n in lo..=hi {
        let v = table
            .get(n)
            .ok_or_else(|| Error::Fit(format!("order {n} missing from table")))?;
        if v.sign() * norm(n) <= 0.0 {
            return Err(Error::Fit(format!("coefficient at order {n} is not positive after sign normalization")));
        }
        let rel = v.rel_error();
        let w = if rel > 0.0 { 1.0 / (rel * rel) } else { 1.0 };
        let nf = n as f64;
        rows.push(([1.0, nf.ln(), nf], v.ln_abs(), w));
    }
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (x, y, w) in &rows {
        for i in 0..3 {
            atb[i] += w * x[i] * y;
            for j in 0..3 {
                ata[i][j] += w * x[i] * x[j];
            }
        }
    }
    let coef = solve3(ata, atb).ok_or_else(|| Error::Fit("singular normal equations".into()))?;
    let wsum: f64 = rows.iter().map(|r| r.2).sum();
    let rss: f64 = rows
        .iter()
        .map(|(x, y, w)| {
            let r = y - (coef[0] * x[0] + coef[1] * x[1] + coef[2] * x[2]);
            w * r * r
        })
        .sum();
    Ok(ExponentFit {
        theta: -coef[1],
        z_c: (-coef[2]).exp(),
        residual: (rss / wsum).sqrt(),
        orders: (lo, hi),
    })
}

/// Ratio-method estimate at the highest available order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub z_c: f64,
    pub theta: f64,
    pub order: usize,
}

/// Ratio method: `r_N = b_N / b_{N-1} ≈ μ (1 - θ / N)`; the linear intercepts
/// `μ_N = N r_N - (N-1) r_{N-1}` cancel the `1/N` term (first Richardson step).
pub fn ratio_extrapolate(table: &SeriesTable) -> Result<RatioEstimate> {
    let n_max = table.len();
    if n_max < 6 {
        return Err(Error::Fit(format!("ratio method needs at least 6 orders, got {n_max}")));
    }
    let norm = table.sign_normalizer();
    let mut ln = Vec::with_capacity(n_max + 1);
    ln.push(f64::NAN);
    for n in 1..=n_max {
        let v = table.get(n).expect("contiguous table");
        if v.sign() * norm(n) <= 0.0 {
            return Err(Error::Fit(format!("coefficient at order {n} is not positive after sign normalization")));
        }
        ln.push(v.ln_abs());
    }
    let ratio = |n: usize| (ln[n] - ln[n - 1]).exp();
    let n = n_max;
    let nf = n as f64;
    let mu = nf * ratio(n) - (nf - 1.0) * ratio(n - 1);
    let theta = nf * (1.0 - ratio(n) / mu);
    Ok(RatioEstimate {
        z_c: 1.0 / mu,
        theta,
        order: n,
    })
}
