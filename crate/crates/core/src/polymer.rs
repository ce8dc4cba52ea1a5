//! Branched-polymer weights `W(T)`, `W_v(T)` and generating-function
//! coefficients `(1/n!) Σ_T W(T)` in dimension `d`.
//!
//! Positions are built outward from vertex 0 (fixed at the origin) along
//! breadth-first tree edges, so every tree constraint holds by construction
//! and only the non-edge pairs are averaged over.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_trees_bounded, sample_tree_uniform, tree_count, TreeGraph, DEFAULT_TREE_BOUND};
use crate::error::{out_of_range, Error, Result};
use crate::mc::{derive_seed, estimate_with, fill_unit_sphere, sphere_area, MCEstimate, RandomStream, Value};
use crate::potential::{EdgeSampler, PotentialSpec, SoftPotential, HARD_CORE_SLACK};

/// How a polymer coefficient was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpMethod {
    ExactFormula,
    EnumeratedMc,
    SampledTreesMc,
}

impl BpMethod {
    pub fn name(self) -> &'static str {
        match self {
            BpMethod::ExactFormula => "exact_formula",
            BpMethod::EnumeratedMc => "enumerated_mc",
            BpMethod::SampledTreesMc => "sampled_trees_mc",
        }
    }
}

/// `(1/n!) Σ_T W(T)` at order `n` in dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BPCoefficient {
    pub n: usize,
    pub d: usize,
    pub value: Value,
    pub method: BpMethod,
}

/// Geometry of one tree, precomputed for the sampler.
#[derive(Clone, Debug)]
struct TreeLayout {
    n: usize,
    bfs: Vec<(usize, usize)>,
    non_edges: Vec<(usize, usize)>,
}

impl TreeLayout {
    fn new(tree: &TreeGraph) -> Self {
        Self {
            n: tree.n(),
            bfs: tree.bfs_edges(),
            non_edges: tree.non_edges(),
        }
    }
}

#[inline]
fn dist2(pos: &[f64], d: usize, i: usize, j: usize) -> f64 {
    let (a, b) = (&pos[i * d..(i + 1) * d], &pos[j * d..(j + 1) * d]);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Places vertices by unit steps along `bfs` edges; vertex 0 sits at the origin.
#[inline]
pub(crate) fn place_unit_steps(pos: &mut [f64], step: &mut [f64], d: usize, bfs: &[(usize, usize)], rng: &mut RandomStream) {
    pos[..d].iter_mut().for_each(|x| *x = 0.0);
    for &(p, c) in bfs {
        fill_unit_sphere(step, rng);
        for k in 0..d {
            pos[c * d + k] = pos[p * d + k] + step[k];
        }
    }
}

#[inline]
pub(crate) fn non_edges_clear(pos: &[f64], d: usize, non_edges: &[(usize, usize)]) -> bool {
    non_edges
        .iter()
        .all(|&(i, j)| dist2(pos, d, i, j) >= 1.0 - HARD_CORE_SLACK)
}

fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(out_of_range("d", d, ">= 2"));
    }
    Ok(())
}

/// Hard-core polymer weight `W(T)` in `R^d`.
pub fn tree_weight_hardcore(tree: &TreeGraph, d: usize, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    check_dimension(d)?;
    if tree.n() == 1 {
        return Ok(MCEstimate::exact(1.0));
    }
    let layout = TreeLayout::new(tree);
    let n = layout.n;
    let est = estimate_with(
        || (vec![0.0; n * d], vec![0.0; d]),
        |(pos, step), rng| {
            place_unit_steps(pos, step, d, &layout.bfs, rng);
            non_edges_clear(pos, d, &layout.non_edges) as u8 as f64
        },
        n_samples,
        seed,
    )?;
    Ok(est.scaled(sphere_area(d)?.powi(n as i32 - 1)))
}

/// Soft polymer weight `W_v(T)` in `R^d`.
pub fn tree_weight_soft(tree: &TreeGraph, potential: &SoftPotential, d: usize, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    check_dimension(d)?;
    if tree.n() == 1 {
        return Ok(MCEstimate::exact(1.0));
    }
    let sampler = EdgeSampler::new(potential, d)?;
    tree_weight_soft_with(tree, potential, &sampler, n_samples, seed)
}

/// [`tree_weight_soft`] with a prebuilt edge sampler.
pub fn tree_weight_soft_with(
    tree: &TreeGraph,
    potential: &SoftPotential,
    sampler: &EdgeSampler,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    let d = sampler.dimension();
    check_dimension(d)?;
    if tree.n() == 1 {
        return Ok(MCEstimate::exact(1.0));
    }
    let layout = TreeLayout::new(tree);
    let n = layout.n;
    let est = estimate_with(
        || (vec![0.0; n * d], vec![0.0; d]),
        |(pos, step), rng| {
            place_soft_steps(pos, step, &layout.bfs, sampler, rng);
            soft_boltzmann(pos, d, n, potential)
        },
        n_samples,
        seed,
    )?;
    Ok(est.scaled(sampler.normalization().powi(n as i32 - 1)))
}

#[inline]
fn place_soft_steps(pos: &mut [f64], step: &mut [f64], bfs: &[(usize, usize)], sampler: &EdgeSampler, rng: &mut RandomStream) {
    let d = step.len();
    pos[..d].iter_mut().for_each(|x| *x = 0.0);
    for &(p, c) in bfs {
        sampler.sample_into(step, rng);
        for k in 0..d {
            pos[c * d + k] = pos[p * d + k] + step[k];
        }
    }
}

/// `Π_{i<j} e^{-v(|y_ij|^2)}` over all pairs, tree edges included.
#[inline]
fn soft_boltzmann(pos: &[f64], d: usize, n: usize, potential: &SoftPotential) -> f64 {
    let mut energy = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            energy += potential.v(dist2(pos, d, i, j));
        }
    }
    (-energy).exp()
}

/// Options for [`bp_coefficient_with`].
#[derive(Clone, Copy, Debug)]
pub struct BpOptions {
    /// Orders up to this bound sum over every labeled tree; larger orders
    /// sample trees uniformly.
    pub enumeration_bound: usize,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            enumeration_bound: DEFAULT_TREE_BOUND,
        }
    }
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// `(1/n!) Σ_T W(T)` (hard-core) or `(1/n!) Σ_T W_v(T)` (soft) by Monte Carlo.
pub fn bp_coefficient(n: usize, d: usize, potential: &PotentialSpec, n_samples: u64, seed: u64) -> Result<BPCoefficient> {
    bp_coefficient_with(n, d, potential, n_samples, seed, BpOptions::default())
}

pub fn bp_coefficient_with(
    n: usize,
    d: usize,
    potential: &PotentialSpec,
    n_samples: u64,
    seed: u64,
    options: BpOptions,
) -> Result<BPCoefficient> {
    if n == 0 {
        return Err(out_of_range("n", 0, ">= 1"));
    }
    check_dimension(d)?;
    if n == 1 {
        return Ok(BPCoefficient {
            n,
            d,
            value: Value::exact(1.0),
            method: BpMethod::ExactFormula,
        });
    }
    let sampler = match potential {
        PotentialSpec::Soft(s) => Some(EdgeSampler::new(s, d)?),
        PotentialSpec::HardCore => None,
    };
    let weight = |tree: &TreeGraph, samples: u64, s: u64| match (potential, &sampler) {
        (PotentialSpec::Soft(p), Some(sm)) => tree_weight_soft_with(tree, p, sm, samples, s),
        _ => tree_weight_hardcore(tree, d, samples, s),
    };

    if n <= options.enumeration_bound {
        let count = tree_count(n);
        let per_tree = (n_samples / count).max(2);
        let inv_fact = (-ln_factorial(n)).exp();
        let mut parts = Vec::with_capacity(count as usize);
        for (k, tree) in enumerate_trees_bounded(n, options.enumeration_bound)?.enumerate() {
            parts.push(weight(&tree, per_tree, derive_seed(seed, k as u64))?.scaled(inv_fact));
        }
        let total = MCEstimate::sum_independent(&parts, seed);
        return Ok(BPCoefficient {
            n,
            d,
            value: Value::Mc(total),
            method: BpMethod::EnumeratedMc,
        });
    }

    // n^{n-2} / n! · E_T[W(T)] with T uniform
    let prefactor = ((n as f64 - 2.0) * (n as f64).ln() - ln_factorial(n)).exp();
    let est = match (potential, &sampler) {
        (PotentialSpec::Soft(p), Some(sm)) => estimate_with(
            || (vec![0.0; n * d], vec![0.0; d]),
            |(pos, step), rng| {
                let tree = sample_tree_uniform(n, rng);
                place_soft_steps(pos, step, &tree.bfs_edges(), sm, rng);
                soft_boltzmann(pos, d, n, p)
            },
            n_samples,
            seed,
        )?
        .scaled(sm.normalization().powi(n as i32 - 1)),
        _ => estimate_with(
            || (vec![0.0; n * d], vec![0.0; d]),
            |(pos, step), rng| {
                let tree = sample_tree_uniform(n, rng);
                place_unit_steps(pos, step, d, &tree.bfs_edges(), rng);
                non_edges_clear(pos, d, &tree.non_edges()) as u8 as f64
            },
            n_samples,
            seed,
        )?
        .scaled(sphere_area(d)?.powi(n as i32 - 1)),
    };
    Ok(BPCoefficient {
        n,
        d,
        value: Value::Mc(est.scaled(prefactor)),
        method: BpMethod::SampledTreesMc,
    })
}

/// Closed-form `(1/n!) Σ_T W(T)` for hard-core polymers in `d ∈ {2, 3}`:
/// `(2π)^{n-1} / n` in d = 2 and `n^{n-1} (2π)^{n-1} / n!` in d = 3.
pub fn bp_exact_coefficient(n: usize, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(out_of_range("n", 0, ">= 1"));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    match d {
        2 => Ok(two_pi.powi(n as i32 - 1) / n as f64),
        3 => {
            // Π_{k=1}^{n} (2π n / k) / (2π n)
            let scale = two_pi * n as f64;
            let prod: f64 = (1..=n).map(|k| scale / k as f64).product();
            Ok(prod / scale)
        }
        _ => Err(Error::Domain(format!(
            "closed-form polymer coefficients exist only for d = 2, 3 (got d = {d})"
        ))),
    }
}

/// Natural log of [`bp_exact_coefficient`], valid for orders where the
/// coefficient itself overflows.
pub fn bp_exact_ln_coefficient(n: usize, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(out_of_range("n", 0, ">= 1"));
    }
    let ln_two_pi = (2.0 * std::f64::consts::PI).ln();
    let nf = n as f64;
    match d {
        2 => Ok((nf - 1.0) * ln_two_pi - nf.ln()),
        3 => Ok((nf - 1.0) * (ln_two_pi + nf.ln()) - ln_factorial(n)),
        _ => Err(Error::Domain(format!(
            "closed-form polymer coefficients exist only for d = 2, 3 (got d = {d})"
        ))),
    }
}

/// [`BPCoefficient`] from the closed form.
pub fn bp_exact(n: usize, d: usize) -> Result<BPCoefficient> {
    Ok(BPCoefficient {
        n,
        d,
        value: Value::exact(bp_exact_coefficient(n, d)?),
        method: BpMethod::ExactFormula,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::enumerate_trees;
    use std::f64::consts::PI;

    fn path(n: usize) -> TreeGraph {
        TreeGraph::new(n, (0..n - 1).map(|i| (i, i + 1)).collect()).unwrap()
    }

    #[test]
    fn single_vertex_weight_is_one() {
        let t = TreeGraph::singleton();
        assert_eq!(tree_weight_hardcore(&t, 3, 100, 1).unwrap().mean, 1.0);
        let g = SoftPotential::gaussian(1.0);
        assert_eq!(tree_weight_soft(&t, &g, 3, 100, 1).unwrap().mean, 1.0);
    }

    #[test]
    fn dimer_weight_is_sphere_area() {
        let w = tree_weight_hardcore(&path(2), 2, 1000, 1).unwrap();
        assert!((w.mean - 2.0 * PI).abs() < 1e-12);
        assert_eq!(w.std_error, 0.0);
    }

    #[test]
    fn trimer_path_in_3d() {
        // |u + v|^2 = 2 + 2cosθ ≥ 1 with cosθ uniform: probability 3/4
        let w = tree_weight_hardcore(&path(3), 3, 400_000, 3).unwrap();
        let exact = 16.0 * PI * PI * 0.75;
        assert!(w.covers(exact, 3.5), "{w:?} vs {exact}");
    }

    #[test]
    fn low_dimensions_rejected() {
        assert!(tree_weight_hardcore(&path(3), 1, 100, 1).is_err());
        assert!(bp_coefficient(2, 1, &PotentialSpec::HardCore, 100, 1).is_err());
    }

    #[test]
    fn weights_respect_bounds() {
        let omega = sphere_area(3).unwrap();
        for tree in enumerate_trees(4).unwrap().take(5) {
            let w = tree_weight_hardcore(&tree, 3, 5000, 9).unwrap();
            assert!(w.mean >= 0.0 && w.mean <= omega.powi(3) + 1e-9);
        }
    }

    #[test]
    fn relabeling_keeps_weight() {
        // star and path are the two shapes at n = 4
        let star = TreeGraph::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap();
        let star2 = star.relabel(&[2, 0, 3, 1]).unwrap();
        let p = path(4);
        let p2 = p.relabel(&[3, 1, 0, 2]).unwrap();
        for (a, b) in [(star, star2), (p, p2)] {
            let wa = tree_weight_hardcore(&a, 3, 200_000, 1).unwrap();
            let wb = tree_weight_hardcore(&b, 3, 200_000, 2).unwrap();
            assert!(wa.z_score(&wb) <= 3.0, "{wa:?} {wb:?}");
        }
    }

    #[test]
    fn acceptance_grows_with_dimension() {
        let p = path(4);
        let a3 = tree_weight_hardcore(&p, 3, 200_000, 4).unwrap();
        let a4 = tree_weight_hardcore(&p, 4, 200_000, 5).unwrap();
        let f3 = a3.scaled(sphere_area(3).unwrap().powi(-3));
        let f4 = a4.scaled(sphere_area(4).unwrap().powi(-3));
        assert!(f4.mean + 3.0 * (f3.std_error.hypot(f4.std_error)) >= f3.mean);
    }

    #[test]
    fn exact_coefficients() {
        assert_eq!(bp_exact_coefficient(1, 2).unwrap(), 1.0);
        assert_eq!(bp_exact_coefficient(1, 3).unwrap(), 1.0);
        assert!((bp_exact_coefficient(2, 2).unwrap() - PI).abs() < 1e-14);
        assert!((bp_exact_coefficient(3, 2).unwrap() - 4.0 * PI * PI / 3.0).abs() < 1e-13);
        assert!((bp_exact_coefficient(2, 3).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!((bp_exact_coefficient(3, 3).unwrap() - 6.0 * PI * PI).abs() < 1e-12);
        assert!(bp_exact_coefficient(3, 4).is_err());
        for n in 1..60 {
            for d in [2, 3] {
                let direct = bp_exact_coefficient(n, d).unwrap();
                let via_log = bp_exact_ln_coefficient(n, d).unwrap().exp();
                assert!((direct - via_log).abs() <= 1e-12 * direct);
            }
        }
    }

    #[test]
    fn coefficient_small_orders() {
        let c = bp_coefficient(1, 3, &PotentialSpec::HardCore, 10, 1).unwrap();
        assert_eq!(c.value.mean(), 1.0);
        let c = bp_coefficient(2, 3, &PotentialSpec::HardCore, 100, 1).unwrap();
        assert!((c.value.mean() - 2.0 * PI).abs() < 1e-12);
        let c = bp_coefficient(3, 3, &PotentialSpec::HardCore, 600_000, 2).unwrap();
        assert_eq!(c.method, BpMethod::EnumeratedMc);
        assert!(c.value.z_score(&Value::exact(6.0 * PI * PI)) <= 3.0, "{c:?}");
    }

    #[test]
    fn sampled_trees_agree_with_closed_form() {
        let opts = BpOptions { enumeration_bound: 3 };
        let c = bp_coefficient_with(4, 2, &PotentialSpec::HardCore, 400_000, 8, opts).unwrap();
        assert_eq!(c.method, BpMethod::SampledTreesMc);
        let exact = bp_exact_coefficient(4, 2).unwrap();
        assert!(c.value.z_score(&Value::exact(exact)) <= 3.0, "{c:?} vs {exact}");
    }

    #[test]
    fn vanishing_soft_interaction_kills_edges() {
        let g = SoftPotential::gaussian(1e-9);
        let w = tree_weight_soft(&path(3), &g, 3, 10_000, 1).unwrap();
        assert!(w.mean.abs() < 1e-15);
    }
}
