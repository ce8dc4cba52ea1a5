//! Repulsive-gas side: Boltzmann factors, Mayer coefficients of the pressure
//! and the exact `D = 0, 1` hard-core results.
//!
//! The order-`n` pressure coefficient is
//! `a_n = (1/n!) ∫ J_c(0, x_2, …, x_n) dx_2 … dx_n`, with `x_1` pinned at the
//! origin by translation invariance. `J_c` vanishes unless the interaction
//! graph is connected, so `x_2 … x_n` are sampled in the box
//! `[-(n-1) r, (n-1) r]^D` where `r` is the interaction range.

use serde::{Deserialize, Serialize};

use crate::analysis::{SeriesTable, SeriesValue};
use crate::combinatorics::{enumerate_partitions, ConnectedParts};
use crate::error::{out_of_range, Error, Result};
use crate::mc::{try_estimate_with, MCEstimate, RandomStream, Value};
use crate::potential::PotentialSpec;

/// Largest order handled by the cluster Monte Carlo.
pub const MAX_GAS_ORDER: usize = 8;

/// Fraction of samples (one in this many) re-checked by partition resummation.
pub const SELF_CHECK_EVERY: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasMethod {
    ExactD0,
    ExactD1,
    McCluster,
}

impl GasMethod {
    pub fn name(self) -> &'static str {
        match self {
            GasMethod::ExactD0 => "exact_d0",
            GasMethod::ExactD1 => "exact_d1",
            GasMethod::McCluster => "mc_cluster",
        }
    }
}

/// Per-volume pressure coefficient `a_n` in dimension `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasCoefficient {
    pub n: usize,
    pub dim: usize,
    pub value: Value,
    pub potential: String,
    pub method: GasMethod,
}

/// Joint Boltzmann weight `J(X)` of a configuration (rows of `positions`).
pub fn boltzmann(positions: &[Vec<f64>], potential: &PotentialSpec) -> f64 {
    let mut w = 1.0;
    for (a, xa) in positions.iter().enumerate() {
        for xb in &positions[a + 1..] {
            let t: f64 = xa.iter().zip(xb).map(|(p, q)| (p - q) * (p - q)).sum();
            w *= potential.pair_boltzmann(t);
            if w == 0.0 {
                return 0.0;
            }
        }
    }
    w
}

/// Scratch space for evaluating `J_c` of one sampled configuration.
struct ClusterState {
    pos: Vec<f64>,
    pair: Vec<f64>,
    j: Vec<f64>,
    table: ConnectedParts,
    partitions: Vec<Vec<usize>>,
    count: u64,
}

impl ClusterState {
    fn new(n: usize, dim: usize) -> Self {
        let ground: Vec<usize> = (0..n).collect();
        let partitions = enumerate_partitions(&ground)
            .expect("n <= MAX_GAS_ORDER")
            .map(|p| {
                p.blocks()
                    .iter()
                    .map(|b| b.iter().map(|&k| 1usize << k).sum())
                    .collect()
            })
            .collect();
        Self {
            pos: vec![0.0; n * dim],
            pair: vec![1.0; n * n],
            j: vec![1.0; 1 << n],
            table: ConnectedParts::new(),
            partitions,
            count: 0,
        }
    }

    /// Fills `J(S)` for every subset and returns `J_c` of the full set.
    fn connected_part(&mut self, n: usize, dim: usize, potential: &PotentialSpec) -> Result<f64> {
        for i in 0..n {
            for k in i + 1..n {
                let t: f64 = (0..dim)
                    .map(|c| {
                        let diff = self.pos[i * dim + c] - self.pos[k * dim + c];
                        diff * diff
                    })
                    .sum();
                self.pair[i * n + k] = potential.pair_boltzmann(t);
            }
        }
        self.j[0] = 1.0;
        for s in 1usize..(1 << n) {
            let h = usize::BITS as usize - 1 - s.leading_zeros() as usize;
            let prev = s ^ (1 << h);
            let mut v = self.j[prev];
            let mut rest = prev;
            while rest != 0 && v != 0.0 {
                let i = rest.trailing_zeros() as usize;
                v *= self.pair[i * n + h];
                rest &= rest - 1;
            }
            self.j[s] = v;
        }
        let full = (1usize << n) - 1;
        let jc = self.table.compute(&self.j)[full];

        self.count += 1;
        if self.count % SELF_CHECK_EVERY == 1 {
            let jc_all = self.table.values();
            let resum: f64 = self
                .partitions
                .iter()
                .map(|blocks| blocks.iter().map(|&b| jc_all[b]).product::<f64>())
                .sum();
            let target = self.j[full];
            if (resum - target).abs() > 1e-12 * target.abs().max(1.0) {
                return Err(Error::SelfCheck(format!(
                    "partition resum {resum} differs from J = {target}"
                )));
            }
        }
        Ok(jc)
    }
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn check_order(n: usize, dim: usize) -> Result<()> {
    if !(2..=MAX_GAS_ORDER).contains(&n) {
        return Err(out_of_range("n", n, format!("2..={MAX_GAS_ORDER}")));
    }
    if dim == 0 {
        return Err(out_of_range("D", 0, ">= 1"));
    }
    Ok(())
}

/// `(1/n!) ∫ J_c(0, x_2, …, x_n) w(x) dx_2 … dx_n` by uniform box sampling.
///
/// `weight` receives the flattened positions (`n × dim`, row 0 at the origin).
pub(crate) fn cluster_integral<W>(
    n: usize,
    dim: usize,
    potential: &PotentialSpec,
    n_samples: u64,
    seed: u64,
    weight: W,
) -> Result<MCEstimate>
where
    W: Fn(&[f64]) -> f64 + Sync,
{
    check_order(n, dim)?;
    let half = (n as f64 - 1.0) * potential.interaction_range()?;
    let est = try_estimate_with(
        || ClusterState::new(n, dim),
        |state: &mut ClusterState, rng: &mut RandomStream| {
            for x in state.pos[dim..].iter_mut() {
                *x = rng.uniform_in(-half, half);
            }
            let jc = state.connected_part(n, dim, potential)?;
            Ok(if jc == 0.0 { 0.0 } else { jc * weight(&state.pos) })
        },
        n_samples,
        seed,
    )?;
    // box volume^{n-1} / n!
    let ln_scale = (n as f64 - 1.0) * dim as f64 * (2.0 * half).ln() - ln_factorial(n);
    Ok(est.scaled(ln_scale.exp()))
}

/// Mayer coefficient `a_n` of the pressure in `D` dimensions.
pub fn mayer_coefficient_mc(n: usize, dim: usize, potential: &PotentialSpec, n_samples: u64, seed: u64) -> Result<GasCoefficient> {
    let est = cluster_integral(n, dim, potential, n_samples, seed, |_| 1.0)?;
    Ok(GasCoefficient {
        n,
        dim,
        value: Value::Mc(est),
        potential: potential.label(),
        method: GasMethod::McCluster,
    })
}

/// [`mayer_coefficient_mc`] restricted to soft potentials.
pub fn soft_gas_coefficient_mc(n: usize, dim: usize, potential: &PotentialSpec, n_samples: u64, seed: u64) -> Result<GasCoefficient> {
    if potential.as_soft().is_none() {
        return Err(Error::Potential("soft gas coefficient needs a soft potential".into()));
    }
    mayer_coefficient_mc(n, dim, potential, n_samples, seed)
}

/// Exact infinite-volume pressure of the hard-core gas for `D ∈ {0, 1}`.
///
/// `D = 0` gives `log(1 + z)`; `D = 1` gives the largest real root of
/// `x e^x = z`, defined for `z > -1/e`.
pub fn pressure_exact(dim: usize, z: f64) -> Result<f64> {
    match dim {
        0 => {
            if z <= -1.0 {
                return Err(Error::Domain(format!("log(1 + z) needs z > -1, got {z}")));
            }
            Ok(z.ln_1p())
        }
        1 => {
            let edge = -(-1.0f64).exp();
            if z <= edge {
                return Err(Error::Domain(format!("x e^x = z needs z > -1/e, got {z}")));
            }
            solve_x_exp_x(z)
        }
        _ => Err(Error::Domain(format!(
            "exact pressure is only available for D = 0, 1 (got D = {dim})"
        ))),
    }
}

/// Largest real root of `x e^x = z` for `z > -1/e`, by safeguarded Newton.
fn solve_x_exp_x(z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(0.0);
    }
    let e = std::f64::consts::E;
    // bracket [lo, hi] on the branch x >= -1 where x e^x is increasing
    let mut lo = -1.0;
    let mut hi = if z > 0.0 { z.max(1.0).ln().max(0.0) + 1.0 } else { 0.0 };
    while hi * hi.exp() < z {
        hi *= 2.0;
    }
    let mut x = if z < 0.0 {
        // square-root branch behavior near the edge z = -1/e
        let p = (2.0 * (1.0 + e * z)).max(0.0).sqrt();
        (-1.0 + p - p * p / 3.0).min(0.0)
    } else {
        (1.0 + z).ln()
    };
    for _ in 0..200 {
        let f = x * x.exp() - z;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let df = (1.0 + x) * x.exp();
        let mut next = if df > 0.0 { x - f / df } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.abs().max(1e-300) || hi - lo < 1e-300 {
            x = next;
            break;
        }
        x = next;
    }
    let residual = (x * x.exp() - z).abs();
    if residual > 1e-14 * z.abs().max(1.0) {
        return Err(Error::Domain(format!(
            "Newton iteration for x e^x = {z} stalled (residual {residual:e})"
        )));
    }
    Ok(x)
}

/// Exact pressure-series coefficients `a_1 … a_{n_max}` for `D ∈ {0, 1}`.
pub fn series_exact(dim: usize, n_max: usize) -> Result<SeriesTable> {
    let mut table = SeriesTable::new(format!("hard-core gas D={dim}"), dim, true);
    for n in 1..=n_max {
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let value = match dim {
            0 => sign / n as f64,
            1 => {
                // n^{n-1} / n!
                let prod: f64 = (1..=n).map(|k| n as f64 / k as f64).product();
                sign * prod / n as f64
            }
            _ => {
                return Err(Error::Domain(format!(
                    "exact series are only available for D = 0, 1 (got D = {dim})"
                )))
            }
        };
        table.insert(n, SeriesValue::exact(value))?;
    }
    Ok(table)
}

/// [`GasCoefficient`] from the exact `D ∈ {0, 1}` series.
pub fn gas_exact(n: usize, dim: usize) -> Result<GasCoefficient> {
    if n == 0 {
        return Err(out_of_range("n", 0, ">= 1"));
    }
    let table = series_exact(dim, n)?;
    Ok(GasCoefficient {
        n,
        dim,
        value: Value::exact(table.value(n).expect("order present")),
        potential: PotentialSpec::HardCore.label(),
        method: if dim == 0 { GasMethod::ExactD0 } else { GasMethod::ExactD1 },
    })
}
