//! Numerical check of the Forest-Root formula
//!
//! ```text
//! f(0) = Σ_{(F,R)} ∫_{C^n} f^{(F,R)}(t) Π_i d²z_i / (-π)
//! ```
//!
//! with `t_ij = |z_i - z_j|²`, `t_i = |z_i|²`, and `f^{(F,R)}` the mixed
//! partial derivative in the bond variables of `F` and the vertex variables of
//! `R`. The sum runs over forests `F` on `n` vertices together with a root set
//! `R` holding exactly one vertex of each tree.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::combinatorics::{enumerate_rooted_forests, RootedForest};
use crate::error::{out_of_range, Error, Result};
use crate::mc::{derive_seed, try_estimate_with, MCEstimate, RandomStream};
use crate::quad::integrate_to_infinity;

/// Largest vertex count accepted by [`forest_root_sum`].
pub const MAX_FOREST_ROOT_N: usize = 5;

/// Tail of the per-vertex importance density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Envelope {
    /// `|f| <= C exp(-precision · |z|²)` in each vertex variable.
    Gaussian { precision: f64 },
    /// Polynomial decay; sampled with a Lomax law in `|z|²` of the given
    /// scale and tail index.
    PowerLaw { scale: f64, tail: f64 },
}

impl Envelope {
    fn validate(self) -> Result<Self> {
        let ok = match self {
            Envelope::Gaussian { precision } => precision > 0.0 && precision.is_finite(),
            Envelope::PowerLaw { scale, tail } => scale > 0.0 && tail > 0.0 && scale.is_finite() && tail.is_finite(),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Domain(format!("invalid envelope {self:?}")))
        }
    }

    /// Draws `z ∈ C` and returns its density in the plane.
    #[inline]
    fn sample(self, rng: &mut RandomStream) -> ([f64; 2], f64) {
        match self {
            Envelope::Gaussian { precision } => {
                let s = (0.5 / precision).sqrt();
                let z = [s * rng.normal(), s * rng.normal()];
                let t = z[0] * z[0] + z[1] * z[1];
                (z, precision / PI * (-precision * t).exp())
            }
            Envelope::PowerLaw { scale, tail } => {
                let u = rng.uniform();
                let t = scale * ((1.0 - u).powf(-1.0 / tail) - 1.0);
                let phi = 2.0 * PI * rng.uniform();
                let r = t.sqrt();
                let q = tail / scale * (1.0 + t / scale).powf(-tail - 1.0);
                ([r * phi.cos(), r * phi.sin()], q / PI)
            }
        }
    }
}

/// Bond and vertex variables of one configuration.
#[derive(Clone, Debug)]
pub struct Variables {
    n: usize,
    pair: Vec<f64>,
    vertex: Vec<f64>,
}

impl Variables {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            pair: vec![0.0; n * n],
            vertex: vec![0.0; n],
        }
    }

    /// Variables of the points `z` (rows `[re, im]`).
    pub fn from_points(z: &[[f64; 2]]) -> Self {
        let mut v = Self::zeros(z.len());
        v.set_points(z);
        v
    }

    pub fn set_points(&mut self, z: &[[f64; 2]]) {
        let n = self.n;
        for i in 0..n {
            self.vertex[i] = z[i][0] * z[i][0] + z[i][1] * z[i][1];
            for j in i + 1..n {
                let (a, b) = (z[i][0] - z[j][0], z[i][1] - z[j][1]);
                let t = a * a + b * b;
                self.pair[i * n + j] = t;
                self.pair[j * n + i] = t;
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n + j]
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> f64 {
        self.vertex[i]
    }
}

/// A function of the bond and vertex variables with the first mixed partials
/// needed by the formula.
pub trait SmoothTestFunction: Sync {
    fn n(&self) -> usize;

    fn value(&self, t: &Variables) -> f64;

    /// `f^{(F,R)}(t)`, or `None` when the evaluator cannot supply it.
    fn derivative(&self, forest: &RootedForest, t: &Variables) -> Option<f64>;

    /// Importance density for vertex `i`.
    fn envelope(&self, vertex: usize) -> Envelope;
}

/// `(-1)^n`, from the measure `(d²z / -π)^n` after the `π^n` is absorbed
/// into the planar densities.
#[inline]
pub fn measure_sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `f(t) = exp(-Σ a_ij t_ij - Σ a_i t_i)` with `a_i > 0`, `a_ij >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFamily {
    n: usize,
    pair: Vec<f64>,
    vertex: Vec<f64>,
}

impl GaussianFamily {
    /// `bonds` lists `(i, j, a_ij)`; missing bonds have `a_ij = 0`.
    pub fn new(vertex: Vec<f64>, bonds: &[(usize, usize, f64)]) -> Result<Self> {
        let n = vertex.len();
        if n == 0 {
            return Err(out_of_range("n", 0, ">= 1"));
        }
        if let Some(a) = vertex.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!("vertex coefficients must be positive, got {a}")));
        }
        let mut pair = vec![0.0; n * n];
        for &(i, j, a) in bonds {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidGraph(format!("bad bond ({i}, {j}) on {n} vertices")));
            }
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("bond coefficients must be non-negative, got {a}")));
            }
            pair[i * n + j] = a;
            pair[j * n + i] = a;
        }
        Ok(Self { n, pair, vertex })
    }

    /// Every `a_i` and `a_ij` equal to `a`.
    pub fn uniform(n: usize, a: f64) -> Result<Self> {
        let bonds: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, a))).collect();
        Self::new(vec![a; n], &bonds)
    }

    /// Coefficients drawn from `seed`: `a_i ∈ [0.5, 2]`, `a_ij ∈ [0, 1]`.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = RandomStream::new(seed, 0);
        let vertex: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.5, 2.0)).collect();
        let mut bonds = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                bonds.push((i, j, rng.uniform()));
            }
        }
        Self::new(vertex, &bonds)
    }

    /// The family member `t ↦ f(λ t)`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {lambda}")));
        }
        Ok(Self {
            n: self.n,
            pair: self.pair.iter().map(|a| a * lambda).collect(),
            vertex: self.vertex.iter().map(|a| a * lambda).collect(),
        })
    }

    pub fn vertex_coefficient(&self, i: usize) -> f64 {
        self.vertex[i]
    }

    pub fn bond_coefficient(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n + j]
    }
}

impl SmoothTestFunction for GaussianFamily {
    fn n(&self) -> usize {
        self.n
    }

    fn value(&self, t: &Variables) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for i in 0..n {
            e += self.vertex[i] * t.vertex(i);
            for j in i + 1..n {
                e += self.pair[i * n + j] * t.pair(i, j);
            }
        }
        (-e).exp()
    }

    fn derivative(&self, forest: &RootedForest, t: &Variables) -> Option<f64> {
        let mut c = 1.0;
        for &(i, j) in forest.edges() {
            c *= -self.pair[i * self.n + j];
        }
        for &r in forest.roots() {
            c *= -self.vertex[r];
        }
        if c == 0.0 {
            return Some(0.0);
        }
        Some(c * self.value(t))
    }

    fn envelope(&self, _vertex: usize) -> Envelope {
        let precision = self.vertex.iter().copied().fold(f64::INFINITY, f64::min);
        Envelope::Gaussian { precision }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One radial factor `g(t)` with derivative `g'(t)`.
#[derive(Clone)]
pub struct RadialFactor {
    label: String,
    g: ScalarFn,
    dg: ScalarFn,
    envelope: Envelope,
}

impl fmt::Debug for RadialFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialFactor")
            .field("label", &self.label)
            .field("envelope", &self.envelope)
            .finish()
    }
}

impl RadialFactor {
    pub fn new<G, D>(label: impl Into<String>, g: G, dg: D, envelope: Envelope) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Ok(Self {
            label: label.into(),
            g: Arc::new(g),
            dg: Arc::new(dg),
            envelope: envelope.validate()?,
        })
    }

    /// `e^{-a t}`.
    pub fn exponential(a: f64) -> Result<Self> {
        Self::new(
            format!("exp(-{a} t)"),
            move |t| (-a * t).exp(),
            move |t| -a * (-a * t).exp(),
            Envelope::Gaussian { precision: a },
        )
    }

    /// `(1 + t)^{-k}`, `k > 1`.
    pub fn power(k: f64) -> Result<Self> {
        if k.is_nan() || k <= 1.0 {
            return Err(Error::Domain(format!("power factor needs k > 1, got {k}")));
        }
        Self::new(
            format!("(1+t)^-{k}"),
            move |t| (1.0 + t).powf(-k),
            move |t| -k * (1.0 + t).powf(-k - 1.0),
            Envelope::PowerLaw { scale: 1.0, tail: k - 1.0 },
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.g)(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        (self.dg)(t)
    }

    /// `-∫_0^∞ g'(s) ds` by adaptive quadrature.
    pub fn radial_integral(&self) -> f64 {
        -integrate_to_infinity(|s| (self.dg)(s), 0.0, 1e-14, 1e-13)
    }
}

/// `g(t) = Π_i g_i(t_i)`, a function of the vertex variables only.
#[derive(Clone, Debug)]
pub struct RadialProduct {
    factors: Vec<RadialFactor>,
}

impl RadialProduct {
    pub fn new(factors: Vec<RadialFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(out_of_range("n", 0, ">= 1"));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[RadialFactor] {
        &self.factors
    }

    /// `g(0)`.
    pub fn at_origin(&self) -> f64 {
        self.factors.iter().map(|f| f.value(0.0)).product()
    }

    /// The single surviving term as a product of one-dimensional integrals.
    pub fn quadrature_total(&self) -> f64 {
        self.factors.iter().map(RadialFactor::radial_integral).product()
    }
}

impl SmoothTestFunction for RadialProduct {
    fn n(&self) -> usize {
        self.factors.len()
    }

    fn value(&self, t: &Variables) -> f64 {
        self.factors.iter().enumerate().map(|(i, f)| f.value(t.vertex(i))).product()
    }

    fn derivative(&self, forest: &RootedForest, t: &Variables) -> Option<f64> {
        if !forest.edges().is_empty() {
            return Some(0.0);
        }
        // no bonds: every vertex is its own root
        Some(
            self.factors
                .iter()
                .enumerate()
                .map(|(i, f)| f.derivative(t.vertex(i)))
                .product(),
        )
    }

    fn envelope(&self, vertex: usize) -> Envelope {
        self.factors[vertex].envelope
    }
}

fn missing(forest: &RootedForest) -> Error {
    Error::MissingDerivative {
        forest: forest.edges().to_vec(),
        roots: forest.roots().to_vec(),
    }
}

/// One summand `∫_{C^n} f^{(F,R)}(t) Π d²z_i / (-π)`.
pub fn forest_root_term<F: SmoothTestFunction + ?Sized>(
    f: &F,
    forest: &RootedForest,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    let n = f.n();
    if forest.n() != n {
        return Err(Error::InvalidGraph(format!(
            "forest on {} vertices for a function of {n}",
            forest.n()
        )));
    }
    if f.derivative(forest, &Variables::zeros(n)).is_none() {
        return Err(missing(forest));
    }
    let envelopes: Vec<Envelope> = (0..n).map(|i| f.envelope(i).validate()).collect::<Result<_>>()?;
    // π^n from the measure cancels against the 1/π in each planar density
    let sign = measure_sign(n) * PI.powi(-(n as i32));
    try_estimate_with(
        || (vec![[0.0; 2]; n], Variables::zeros(n)),
        |(z, t), rng| {
            let mut density = 1.0;
            for (zi, env) in z.iter_mut().zip(&envelopes) {
                let (p, q) = env.sample(rng);
                *zi = p;
                density *= q;
            }
            t.set_points(z);
            let g = f.derivative(forest, t).ok_or_else(|| missing(forest))?;
            Ok(if g == 0.0 { 0.0 } else { sign * g / density })
        },
        n_samples,
        seed,
    )
}

/// Every `(F, R)` term on `n` vertices, in enumeration order, each with its
/// own sub-seed and `n_samples` draws.
pub fn forest_root_terms<F: SmoothTestFunction + ?Sized>(
    f: &F,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<(RootedForest, MCEstimate)>> {
    let n = f.n();
    if !(1..=MAX_FOREST_ROOT_N).contains(&n) {
        return Err(out_of_range("n", n, format!("1..={MAX_FOREST_ROOT_N}")));
    }
    enumerate_rooted_forests(n)?
        .enumerate()
        .map(|(k, fr)| {
            let est = forest_root_term(f, &fr, n_samples, derive_seed(seed, k as u64))?;
            Ok((fr, est))
        })
        .collect()
}

/// `Σ_{(F,R)} ∫ f^{(F,R)}`, to be compared with `f(0)`.
pub fn forest_root_sum<F: SmoothTestFunction + ?Sized>(f: &F, n: usize, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    if f.n() != n {
        return Err(Error::Domain(format!("function has {} vertices, expected {n}", f.n())));
    }
    let terms = forest_root_terms(f, n_samples, seed)?;
    Ok(MCEstimate::sum_independent(terms.iter().map(|(_, e)| e), seed))
}

/// The root-only term for a vertex-only product function; the formula says
/// it equals `g(0)`.
pub fn localization_check(g: &RadialProduct, n: usize, n_samples: u64, seed: u64) -> Result<MCEstimate> {
    if g.n() != n {
        return Err(Error::Domain(format!("function has {} vertices, expected {n}", g.n())));
    }
    let all_roots = RootedForest::new(n, Vec::new(), (0..n).collect())?;
    forest_root_term(g, &all_roots, n_samples, seed)
}
