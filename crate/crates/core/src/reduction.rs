//! Order-by-order comparison of gas coefficients in `D` dimensions with
//! polymer coefficients in `D + 2` dimensions.
//!
//! Both sides are expanded in the activity: with
//! `log Z_gas(z)/|Λ| = Σ a_n z^n` and `Z_BP(z) = Σ b_n z^n`, the identity
//! `Σ a_n z^n = -2π Σ b_n (-z/2π)^n` reads `a_n = (-1)^{n-1} (2π)^{1-n} b_n`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_trees, TreeGraph};
use crate::error::{out_of_range, Error, Result};
use crate::gas::{cluster_integral, gas_exact, mayer_coefficient_mc, soft_gas_coefficient_mc};
use crate::mc::{derive_seed, estimate_with, sphere_area, MCEstimate, Value};
use crate::polymer::{bp_coefficient, bp_exact, non_edges_clear, place_unit_steps};
use crate::potential::PotentialSpec;

/// Largest order accepted by [`verify_order`].
pub const MAX_VERIFY_ORDER: usize = 6;

/// Largest order of the two-point coefficients.
pub const MAX_GREEN_ORDER: usize = 4;

/// Default pass threshold on the z-score.
pub const PASS_Z: f64 = 3.0;

const TAG_GAS: u64 = 0x0067_6173;
const TAG_POLYMER: u64 = 0x706f_6c79;

/// `(-1)^{n-1} (2π)^{1-n}`.
pub fn mapping_constant(n: usize) -> f64 {
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    sign * (2.0 * std::f64::consts::PI).powi(1 - n as i32)
}

/// `-2π (-1/2π)^n`, the two-point analogue of [`mapping_constant`].
pub fn green_mapping_constant(n: usize) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    -two_pi * (-1.0 / two_pi).powi(n as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    HardCore,
    Soft,
    Green,
}

/// Outcome of comparing the two sides at one order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub kind: ReductionKind,
    pub n: usize,
    pub gas_dimension: usize,
    pub polymer_dimension: usize,
    pub potential: String,
    pub lhs: Value,
    pub lhs_method: String,
    pub rhs_raw: Value,
    pub rhs_method: String,
    pub rhs_mapped: Value,
    pub z_score: f64,
    pub pass: bool,
}

impl ReductionReport {
    #[allow(clippy::too_many_arguments)]
    fn build(
        kind: ReductionKind,
        n: usize,
        dim: usize,
        potential: String,
        lhs: Value,
        lhs_method: String,
        rhs_raw: Value,
        rhs_method: String,
        factor: f64,
    ) -> Result<Self> {
        let rhs_mapped = rhs_raw.scaled(factor);
        if !rhs_mapped.mean().is_finite() || !rhs_mapped.std_error().is_finite() {
            return Err(Error::NonFinite {
                value: rhs_mapped.mean(),
                stream: 0,
                sample: 0,
            });
        }
        let z = lhs.z_score(&rhs_mapped);
        Ok(Self {
            kind,
            n,
            gas_dimension: dim,
            polymer_dimension: dim + 2,
            potential,
            lhs,
            lhs_method,
            rhs_raw,
            rhs_method,
            rhs_mapped,
            z_score: z,
            pass: z <= PASS_Z,
        })
    }
}

fn check_dims(n: usize, dim: usize, max_n: usize) -> Result<()> {
    if !(2..=max_n).contains(&n) {
        return Err(out_of_range("n", n, format!("2..={max_n}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(out_of_range("D", dim, "1..=3"));
    }
    Ok(())
}

/// Hard-core gas in `D` dimensions against hard-core polymers in `D + 2`,
/// both by Monte Carlo.
pub fn verify_order(n: usize, dim: usize, n_samples: u64, seed: u64) -> Result<ReductionReport> {
    check_dims(n, dim, MAX_VERIFY_ORDER)?;
    let pot = PotentialSpec::HardCore;
    let lhs = mayer_coefficient_mc(n, dim, &pot, n_samples, derive_seed(seed, TAG_GAS))?;
    let rhs = bp_coefficient(n, dim + 2, &pot, n_samples, derive_seed(seed, TAG_POLYMER))?;
    ReductionReport::build(
        ReductionKind::HardCore,
        n,
        dim,
        pot.label(),
        lhs.value,
        lhs.method.name().into(),
        rhs.value,
        rhs.method.name().into(),
        mapping_constant(n),
    )
}

/// Closed form against closed form: hard rods (`D = 1`) against `d = 3`
/// polymers. Defined for every `n >= 1`.
pub fn verify_exact_order(n: usize) -> Result<ReductionReport> {
    let lhs = gas_exact(n, 1)?;
    let rhs = bp_exact(n, 3)?;
    let mut report = ReductionReport::build(
        ReductionKind::HardCore,
        n,
        1,
        PotentialSpec::HardCore.label(),
        lhs.value,
        lhs.method.name().into(),
        rhs.value,
        rhs.method.name().into(),
        mapping_constant(n),
    )?;
    // both sides are rounded closed forms
    let (a, b) = (report.lhs.mean(), report.rhs_mapped.mean());
    report.pass = (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    Ok(report)
}

/// Soft gas against soft polymers with the same pair potential.
pub fn verify_soft_order(n: usize, dim: usize, potential: &PotentialSpec, n_samples: u64, seed: u64) -> Result<ReductionReport> {
    check_dims(n, dim, MAX_VERIFY_ORDER)?;
    if potential.as_soft().is_none() {
        return Err(Error::Potential("soft verification needs a soft potential".into()));
    }
    let lhs = soft_gas_coefficient_mc(n, dim, potential, n_samples, derive_seed(seed, TAG_GAS))?;
    let rhs = bp_coefficient(n, dim + 2, potential, n_samples, derive_seed(seed, TAG_POLYMER))?;
    ReductionReport::build(
        ReductionKind::Soft,
        n,
        dim,
        potential.label(),
        lhs.value,
        lhs.method.name().into(),
        rhs.value,
        rhs.method.name().into(),
        mapping_constant(n),
    )
}

type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Continuous test function of compact support on `R^D`.
#[derive(Clone)]
pub struct GreenTestFunction {
    label: String,
    support_radius: f64,
    f: PointFn,
}

impl fmt::Debug for GreenTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreenTestFunction")
            .field("label", &self.label)
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl GreenTestFunction {
    /// Wraps `f`; values outside the ball of radius `support_radius` are
    /// forced to zero.
    pub fn new<F>(label: impl Into<String>, support_radius: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::Domain(format!("support radius must be positive, got {support_radius}")));
        }
        Ok(Self {
            label: label.into(),
            support_radius,
            f: Arc::new(f),
        })
    }

    /// `exp(-r²/2σ²) - exp(-R²/2σ²)` for `r < R`, zero beyond.
    pub fn gaussian_bump(sigma: f64, radius: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let floor = (-radius * radius / (2.0 * sigma * sigma)).exp();
        Self::new(format!("gaussian-bump(sigma={sigma},R={radius})"), radius, move |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (-r2 / (2.0 * sigma * sigma)).exp() - floor
        })
    }

    /// `(1 + cos(π r / R)) / 2` for `r < R`, zero beyond.
    pub fn raised_cosine(radius: f64) -> Result<Self> {
        Self::new(format!("raised-cosine(R={radius})"), radius, move |x: &[f64]| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            0.5 * (1.0 + (std::f64::consts::PI * r / radius).cos())
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= self.support_radius * self.support_radius {
            0.0
        } else {
            (self.f)(x)
        }
    }
}

/// `Σ_{j,k} f(x_k - x_j)` over the rows of `pos` (`n × stride`), using the
/// first `dim` coordinates of each row. `f0` is `f(0)`.
#[inline]
fn pair_insertions(f: &GreenTestFunction, f0: f64, pos: &[f64], n: usize, stride: usize, diff: &mut [f64]) -> f64 {
    let dim = diff.len();
    let mut total = n as f64 * f0;
    for j in 0..n {
        for k in j + 1..n {
            for c in 0..dim {
                diff[c] = pos[k * stride + c] - pos[j * stride + c];
            }
            let forward = f.eval(diff);
            diff.iter_mut().for_each(|v| *v = -*v);
            total += forward + f.eval(diff);
        }
    }
    total
}

fn check_green(n: usize, dim: usize) -> Result<()> {
    if !(1..=MAX_GREEN_ORDER).contains(&n) {
        return Err(out_of_range("n", n, format!("1..={MAX_GREEN_ORDER}")));
    }
    if !(1..=3).contains(&dim) {
        return Err(out_of_range("D", dim, "1..=3"));
    }
    Ok(())
}

/// Order-`n` coefficient of the connected two-point function of the hard-core
/// gas in `D` dimensions, integrated against `f`:
/// `(1/n!) Σ_{j,k} ∫ J_c(0, x_2, …, x_n) f(x_k - x_j)`.
pub fn green_coefficient_gas(n: usize, dim: usize, f: &GreenTestFunction, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    check_green(n, dim)?;
    let f0 = f.eval(&vec![0.0; dim]);
    if n == 1 {
        return Ok(MCEstimate::exact(f0));
    }
    cluster_integral(n, dim, &PotentialSpec::HardCore, n_samples, seed, |pos| {
        let mut diff = [0.0; 3];
        pair_insertions(f, f0, pos, n, dim, &mut diff[..dim])
    })
}

/// Order-`n` two-point coefficient of hard-core polymers in `d` dimensions:
/// `(1/n!) Σ_T ∫ Π dω(y_ij) Π 1{|y_ij| >= 1} Σ_{j,k} f(π(y_k - y_j))`, with
/// `y_1 = 0` and `π` the projection onto the first `d - 2` coordinates.
pub fn green_coefficient_bp(n: usize, d: usize, f: &GreenTestFunction, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    if d < 3 {
        return Err(out_of_range("d", d, "3..=5"));
    }
    let dim = d - 2;
    check_green(n, dim)?;
    let f0 = f.eval(&vec![0.0; dim]);
    if n == 1 {
        return Ok(MCEstimate::exact(f0));
    }
    let inv_fact = 1.0 / (1..=n).product::<usize>() as f64;
    let area = sphere_area(d)?.powi(n as i32 - 1);
    let trees: Vec<TreeGraph> = enumerate_trees(n)?.collect();
    let per_tree = (n_samples / trees.len() as u64).max(2);
    let mut parts = Vec::with_capacity(trees.len());
    for (k, tree) in trees.iter().enumerate() {
        let bfs = tree.bfs_edges();
        let non_edges = tree.non_edges();
        let est = estimate_with(
            || (vec![0.0; n * d], vec![0.0; d], vec![0.0; dim]),
            |(pos, step, diff), rng| {
                place_unit_steps(pos, step, d, &bfs, rng);
                if non_edges_clear(pos, d, &non_edges) {
                    pair_insertions(f, f0, pos, n, d, diff)
                } else {
                    0.0
                }
            },
            per_tree,
            derive_seed(seed, k as u64),
        )?;
        parts.push(est.scaled(area * inv_fact));
    }
    Ok(MCEstimate::sum_independent(&parts, seed))
}

/// Two-point coefficient of the gas against the mapped polymer coefficient,
/// `c_n = -2π (-1/2π)^n g_n`.
pub fn verify_green_order(n: usize, dim: usize, f: &GreenTestFunction, n_samples: u64, seed: u64) -> Result<ReductionReport> {
    check_green(n, dim)?;
    let lhs = green_coefficient_gas(n, dim, f, n_samples, derive_seed(seed, TAG_GAS))?;
    let rhs = green_coefficient_bp(n, dim + 2, f, n_samples, derive_seed(seed, TAG_POLYMER))?;
    let (lm, rm) = if n == 1 { ("exact", "exact") } else { ("mc_cluster", "enumerated_mc") };
    ReductionReport::build(
        ReductionKind::Green,
        n,
        dim,
        format!("hard-core; f = {}", f.label()),
        lhs.into(),
        lm.into(),
        rhs.into(),
        rm.into(),
        green_mapping_constant(n),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use crate::SoftPotential;
    use std::f64::consts::PI;

    #[test]
    fn mapping_constant_values() {
        assert_eq!(mapping_constant(1), 1.0);
        assert!((mapping_constant(2) + 1.0 / (2.0 * PI)).abs() < 1e-16);
        assert!((mapping_constant(3) - 1.0 / (4.0 * PI * PI)).abs() < 1e-16);
        assert!((green_mapping_constant(1) - 1.0).abs() < 1e-15);
        assert!((green_mapping_constant(2) + 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn mapping_matches_series_expansion() {
        // coefficient of z^n in -2π Σ b_m (-z/2π)^m, read off by finite powers
        for n in 1..=8 {
            let expanded = -2.0 * PI * (-1.0 / (2.0 * PI)).powi(n as i32);
            assert!((expanded - mapping_constant(n)).abs() <= 1e-15 * expanded.abs());
        }
    }

    #[test]
    fn exact_orders_agree() {
        for n in 1..=6 {
            let r = verify_exact_order(n).unwrap();
            assert!(r.pass, "n={n}: {} vs {}", r.lhs.mean(), r.rhs_mapped.mean());
        }
        let r = verify_exact_order(3).unwrap();
        assert!((r.lhs.mean() - 1.5).abs() < 1e-14);
        assert!((r.rhs_raw.mean() - 6.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn dimer_hard_core_d1() {
        let r = verify_order(2, 1, 200_000, 5).unwrap();
        assert!((r.lhs.mean() + 1.0).abs() < 0.02);
        assert!((r.rhs_raw.mean() - 2.0 * PI).abs() < 1e-12);
        assert!(r.pass, "z = {}", r.z_score);
    }

    #[test]
    fn dimer_hard_core_d2() {
        let r = verify_order(2, 2, 200_000, 6).unwrap();
        // Ω_4 / 2
        assert!((r.rhs_raw.mean() - PI * PI).abs() < 1e-12);
        assert!((r.lhs.mean() + PI / 2.0).abs() < 0.03);
        assert!(r.pass, "z = {}", r.z_score);
    }

    #[test]
    fn trimer_hard_core_d1() {
        let r = verify_order(3, 1, 400_000, 7).unwrap();
        assert!(r.pass, "z = {}", r.z_score);
        assert!((r.rhs_mapped.mean() - 1.5).abs() < 0.05);
    }

    #[test]
    fn order_bounds() {
        assert!(verify_order(1, 1, 100, 1).is_err());
        assert!(verify_order(7, 1, 100, 1).is_err());
        assert!(verify_order(2, 0, 100, 1).is_err());
        assert!(verify_order(2, 4, 100, 1).is_err());
        assert!(verify_soft_order(2, 1, &PotentialSpec::HardCore, 100, 1).is_err());
        let f = GreenTestFunction::raised_cosine(1.5).unwrap();
        assert!(green_coefficient_gas(5, 1, &f, 100, 1).is_err());
        assert!(green_coefficient_bp(2, 2, &f, 100, 1).is_err());
    }

    fn soft_dimer_oracles(amp: f64) -> (f64, f64) {
        let v = |t: f64| amp * (-t).exp();
        let dv = |t: f64| -amp * (-t).exp();
        // a_2 = (1/2) ∫_R (e^{-v(x²)} - 1) dx
        let gas = integrate(|x| (-v(x * x)).exp() - 1.0, 0.0, 12.0, 1e-14, 1e-13);
        // b_2 = (1/2) 4π ∫ r² (-2 v'(r²)) e^{-v(r²)} dr
        let bp = 0.5 * 4.0 * PI * integrate(|r| r * r * (-2.0 * dv(r * r)) * (-v(r * r)).exp(), 0.0, 12.0, 1e-14, 1e-13);
        (gas, bp)
    }

    #[test]
    fn soft_dimer_quadrature_oracles_agree() {
        for amp in [0.5, 1.0, 3.0] {
            let (gas, bp) = soft_dimer_oracles(amp);
            let mapped = mapping_constant(2) * bp;
            assert!((gas - mapped).abs() < 1e-10 * gas.abs(), "{gas} vs {mapped}");
        }
    }

    #[test]
    fn soft_dimer_mc_matches_oracles() {
        let pot = PotentialSpec::Soft(SoftPotential::gaussian(1.0));
        let (gas, bp) = soft_dimer_oracles(1.0);
        let r = verify_soft_order(2, 1, &pot, 400_000, 11).unwrap();
        assert!(r.pass, "z = {}", r.z_score);
        let lhs = r.lhs.mean();
        let rhs = r.rhs_raw.mean();
        assert!((lhs - gas).abs() <= 4.0 * r.lhs.std_error(), "{lhs} vs {gas}");
        assert!((rhs - bp).abs() <= 4.0 * r.rhs_raw.std_error().max(1e-4 * bp), "{rhs} vs {bp}");
    }

    #[test]
    fn vanishing_soft_potential() {
        let pot = PotentialSpec::Soft(SoftPotential::gaussian(1e-9));
        let r = verify_soft_order(2, 1, &pot, 20_000, 3).unwrap();
        assert!(r.lhs.mean().abs() < 1e-6);
        assert!(r.rhs_mapped.mean().abs() < 1e-6);
    }

    #[test]
    fn test_functions_vanish_outside_support() {
        let g = GreenTestFunction::gaussian_bump(0.5, 1.5).unwrap();
        let c = GreenTestFunction::raised_cosine(1.5).unwrap();
        for f in [&g, &c] {
            assert_eq!(f.eval(&[1.5]), 0.0);
            assert_eq!(f.eval(&[-2.0]), 0.0);
            assert!(f.eval(&[1.4999]) >= 0.0);
            assert!(f.eval(&[1.4999]) < 1e-3);
        }
        assert!((c.eval(&[0.0]) - 1.0).abs() < 1e-15);
        assert!(GreenTestFunction::gaussian_bump(0.0, 1.0).is_err());
        assert!(GreenTestFunction::raised_cosine(-1.0).is_err());
    }

    #[test]
    fn green_first_order_is_f0() {
        let f = GreenTestFunction::gaussian_bump(0.5, 1.5).unwrap();
        let f0 = f.eval(&[0.0]);
        assert_eq!(green_coefficient_gas(1, 1, &f, 10, 1).unwrap().mean, f0);
        assert_eq!(green_coefficient_bp(1, 3, &f, 10, 1).unwrap().mean, f0);
        let r = verify_green_order(1, 1, &f, 10, 1).unwrap();
        assert!(r.pass);
        assert!((r.rhs_mapped.mean() - f0).abs() < 1e-15);
    }

    #[test]
    fn green_dimer_matches_quadrature() {
        // hard rods: c_2 = -2 f(0) - ∫_{-1}^{1} f
        for f in [
            GreenTestFunction::gaussian_bump(0.5, 1.5).unwrap(),
            GreenTestFunction::raised_cosine(1.5).unwrap(),
        ] {
            let f0 = f.eval(&[0.0]);
            let oracle = -2.0 * f0 - integrate(|x| f.eval(&[x]), -1.0, 1.0, 1e-14, 1e-13);
            let gas = green_coefficient_gas(2, 1, &f, 400_000, 21).unwrap();
            assert!(gas.covers(oracle, 4.0), "{} ± {} vs {oracle}", gas.mean, gas.std_error);
            let bp = green_coefficient_bp(2, 3, &f, 400_000, 22).unwrap().scaled(green_mapping_constant(2));
            assert!(bp.covers(oracle, 4.0), "{} ± {} vs {oracle}", bp.mean, bp.std_error);
        }
    }

    #[test]
    fn green_support_beyond_core_gives_zero_at_order_two() {
        let f = GreenTestFunction::new("shell", 2.0, |x: &[f64]| {
            let r = x[0].abs();
            if r > 1.0 && r < 2.0 {
                (r - 1.0) * (2.0 - r)
            } else {
                0.0
            }
        })
        .unwrap();
        let gas = green_coefficient_gas(2, 1, &f, 50_000, 4).unwrap();
        assert_eq!(gas.mean, 0.0);
    }

    #[test]
    fn green_trimer_agrees() {
        let f = GreenTestFunction::raised_cosine(1.5).unwrap();
        let r = verify_green_order(3, 1, &f, 600_000, 8).unwrap();
        assert!(r.pass, "z = {} ({} vs {})", r.z_score, r.lhs.mean(), r.rhs_mapped.mean());
    }
}
