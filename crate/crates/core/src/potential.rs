//! Radial repulsive interactions and the edge-length sampler for soft polymers.
//!
//! Soft potentials are given as functions of the squared distance `t = |y|^2`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mc::{fill_unit_sphere, sphere_area, RandomStream};
use crate::quad::{integrate, MonotoneCubic};

/// Threshold below which `|v|` counts as negligible when locating the
/// interaction range.
pub const TRUNCATION_THRESHOLD: f64 = 1e-12;

/// Number of knots in the radial inverse-CDF table.
pub const SAMPLER_KNOTS: usize = 1 << 12;

/// Slack on the non-edge hard-core test `|y_ij| >= 1`.
pub const HARD_CORE_SLACK: f64 = 1e-12;

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth pair potential `v(t)`, `t = r^2`, with derivative `v'(t)`.
#[derive(Clone)]
pub struct SoftPotential {
    label: String,
    v: RadialFn,
    v_prime: RadialFn,
    scale: f64,
    truncation: Option<f64>,
}

impl fmt::Debug for SoftPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SoftPotential")
            .field("label", &self.label)
            .field("scale", &self.scale)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl SoftPotential {
    /// A custom potential. `scale` is a rough interaction length used to seed
    /// the search for the truncation radius.
    pub fn new<V, D>(label: impl Into<String>, v: V, v_prime: D, scale: f64) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            v: Arc::new(v),
            v_prime: Arc::new(v_prime),
            scale,
            truncation: None,
        }
    }

    /// The built-in Gaussian potential `v(t) = a e^{-t}`.
    pub fn gaussian(amplitude: f64) -> Self {
        Self::new(
            format!("gaussian(a={amplitude})"),
            move |t| amplitude * (-t).exp(),
            move |t| -amplitude * (-t).exp(),
            1.0,
        )
    }

    /// Overrides the truncation radius used for box sampling.
    pub fn with_truncation_radius(mut self, radius: f64) -> Self {
        self.truncation = Some(radius);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn v(&self, t: f64) -> f64 {
        (self.v)(t)
    }

    #[inline]
    pub fn v_prime(&self, t: f64) -> f64 {
        (self.v_prime)(t)
    }

    /// Smallest radius beyond which `|v(r^2)| < 1e-12`, unless overridden.
    pub fn truncation_radius(&self) -> Result<f64> {
        if let Some(r) = self.truncation {
            return Ok(r);
        }
        let small = |r: f64| self.v(r * r).abs() < TRUNCATION_THRESHOLD;
        let mut hi = self.scale.max(1e-6);
        while !small(hi) {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Potential(format!(
                    "{} has no finite truncation radius",
                    self.label
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if small(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        Ok(hi)
    }

    /// Radial edge density `Ω_d r^{d-1} (-2 v'(r^2))`.
    pub fn radial_edge_density(&self, d: usize, r: f64) -> f64 {
        let omega = sphere_area(d).unwrap_or(f64::NAN);
        omega * r.powi(d as i32 - 1) * (-2.0 * self.v_prime(r * r))
    }

    /// `∫_{R^d} -2 v'(|y|^2) d^d y`.
    pub fn edge_normalization(&self, d: usize) -> Result<f64> {
        Ok(EdgeSampler::new(self, d)?.normalization())
    }
}

/// Pair interaction: hard-core exclusion at distance 1, or a soft potential.
#[derive(Clone, Debug)]
pub enum PotentialSpec {
    HardCore,
    Soft(SoftPotential),
}

impl PotentialSpec {
    pub fn label(&self) -> String {
        match self {
            PotentialSpec::HardCore => "hard-core".to_string(),
            PotentialSpec::Soft(s) => s.label().to_string(),
        }
    }

    /// Range beyond which two particles do not interact.
    pub fn interaction_range(&self) -> Result<f64> {
        match self {
            PotentialSpec::HardCore => Ok(1.0),
            PotentialSpec::Soft(s) => s.truncation_radius(),
        }
    }

    /// Pair Boltzmann factor at squared distance `t`.
    #[inline]
    pub fn pair_boltzmann(&self, t: f64) -> f64 {
        match self {
            PotentialSpec::HardCore => {
                if t >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PotentialSpec::Soft(s) => (-s.v(t)).exp(),
        }
    }

    pub fn as_soft(&self) -> Option<&SoftPotential> {
        match self {
            PotentialSpec::Soft(s) => Some(s),
            PotentialSpec::HardCore => None,
        }
    }
}

/// Draws edge displacements `y ∈ R^d` with density `-2 v'(|y|^2) / N_d`.
///
/// The radius is drawn from a tabulated inverse CDF on a log-spaced grid,
/// interpolated with a monotone cubic; the direction is uniform.
#[derive(Clone, Debug)]
pub struct EdgeSampler {
    d: usize,
    normalization: f64,
    r_min: f64,
    mass_below: f64,
    inverse_cdf: MonotoneCubic,
}

impl EdgeSampler {
    pub fn new(potential: &SoftPotential, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(crate::error::out_of_range("d", 0, ">= 1"));
        }
        let r_max = 2.0 * potential.truncation_radius()?;
        let r_min = r_max * 1e-7;
        let density = |r: f64| potential.radial_edge_density(d, r);

        let knots: Vec<f64> = (0..SAMPLER_KNOTS)
            .map(|k| r_min * (r_max / r_min).powf(k as f64 / (SAMPLER_KNOTS - 1) as f64))
            .collect();
        for &r in &knots {
            let rho = density(r);
            if rho < 0.0 {
                return Err(Error::NegativeDensity {
                    radius: r,
                    density: rho,
                });
            }
        }

        let mass_below = integrate(density, 0.0, r_min, 0.0, 1e-12);
        let mut cdf = Vec::with_capacity(SAMPLER_KNOTS);
        let mut acc = mass_below;
        cdf.push(acc);
        for w in knots.windows(2) {
            let piece = integrate(density, w[0], w[1], 0.0, 1e-12);
            if piece < 0.0 {
                return Err(Error::NegativeDensity {
                    radius: w[0],
                    density: piece,
                });
            }
            acc += piece;
            cdf.push(acc);
        }
        let normalization = acc;
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::Potential(format!(
                "edge density of {} has non-positive total mass {normalization}",
                potential.label()
            )));
        }

        // keep strictly increasing CDF knots only
        let mut xs = Vec::with_capacity(SAMPLER_KNOTS);
        let mut ys = Vec::with_capacity(SAMPLER_KNOTS);
        for (&c, &r) in cdf.iter().zip(&knots) {
            let c = c / normalization;
            if xs.last().is_none_or(|&last| c > last) {
                xs.push(c);
                ys.push(r);
            }
        }
        if xs.len() < 2 {
            return Err(Error::Potential("edge density has no resolvable mass".into()));
        }
        Ok(Self {
            d,
            normalization,
            r_min,
            mass_below: mass_below / normalization,
            inverse_cdf: MonotoneCubic::new(xs, ys),
        })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// `∫_{R^d} -2 v'(|y|^2) d^d y`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Radius for the CDF level `u ∈ [0, 1)`.
    pub fn radius(&self, u: f64) -> f64 {
        if u <= self.mass_below && self.mass_below > 0.0 {
            // density ~ r^{d-1} near the origin
            return self.r_min * (u / self.mass_below).powf(1.0 / self.d as f64);
        }
        let top = *self.inverse_cdf.x().last().expect("non-empty table");
        if u >= top {
            return *self.inverse_cdf.y().last().expect("non-empty table");
        }
        self.inverse_cdf.eval(u)
    }

    /// Writes a displacement into `out` (length `d`).
    #[inline]
    pub fn sample_into(&self, out: &mut [f64], rng: &mut RandomStream) {
        let r = self.radius(rng.uniform());
        fill_unit_sphere(out, rng);
        out.iter_mut().for_each(|x| *x *= r);
    }
}
