//! Output-side embedding defenses: Gaussian noise and two metric-LDP style
//! mechanisms (normalized planar Laplace and a Purkayastha-type directional
//! perturbation).
//!
//! The budget is given per dimension; the total is `eps_per_dim * d`. Smaller
//! values inject more noise.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Embedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseKind {
    #[default]
    None,
    Random,
    LapMech,
    PurMech,
}

impl DefenseKind {
    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::None => "none",
            DefenseKind::Random => "random",
            DefenseKind::LapMech => "lapmech",
            DefenseKind::PurMech => "purmech",
        }
    }
}

impl std::str::FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "random" => Ok(Self::Random),
            "lapmech" => Ok(Self::LapMech),
            "purmech" => Ok(Self::PurMech),
            other => Err(Error::Config(format!("unknown defense {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseSpec {
    #[serde(default)]
    pub kind: DefenseKind,
    /// Privacy budget per dimension (lapmech, purmech).
    #[serde(default)]
    pub eps_per_dim: Option<f64>,
    /// Per-coordinate standard deviation (random).
    #[serde(default)]
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DefenseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl DefenseSpec {
    pub fn none() -> Self {
        Self { kind: DefenseKind::None, eps_per_dim: None, noise_scale: None, seed: 0 }
    }

    pub fn random(noise_scale: f64, seed: u64) -> Self {
        Self { kind: DefenseKind::Random, eps_per_dim: None, noise_scale: Some(noise_scale), seed }
    }

    pub fn lapmech(eps_per_dim: f64, seed: u64) -> Self {
        Self { kind: DefenseKind::LapMech, eps_per_dim: Some(eps_per_dim), noise_scale: None, seed }
    }

    pub fn purmech(eps_per_dim: f64, seed: u64) -> Self {
        Self { kind: DefenseKind::PurMech, eps_per_dim: Some(eps_per_dim), noise_scale: None, seed }
    }

    pub fn validate(self) -> Result<Self> {
        match self.kind {
            DefenseKind::None => {}
            DefenseKind::Random => match self.noise_scale {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => return Err(Error::Config("noise_scale must be positive for random noise".into())),
            },
            DefenseKind::LapMech | DefenseKind::PurMech => match self.eps_per_dim {
                Some(e) if e > 0.0 && e.is_finite() => {}
                _ => return Err(Error::Config("eps_per_dim must be positive".into())),
            },
        }
        Ok(self)
    }

    /// True when repeated calls on the same input can differ.
    pub fn is_randomized(&self) -> bool {
        self.kind != DefenseKind::None
    }
}

/// Applies `spec` to `e` using the caller's RNG stream.
pub fn apply_defense<R: Rng + ?Sized>(spec: &DefenseSpec, e: &Embedding, rng: &mut R) -> Result<Embedding> {
    let spec = spec.validate()?;
    let d = e.dim();
    match spec.kind {
        DefenseKind::None => Ok(e.clone()),
        DefenseKind::Random => {
            let normal = Normal::new(0.0, spec.noise_scale.unwrap_or_default())
                .map_err(|err| Error::Config(err.to_string()))?;
            let noisy: Vec<f64> = e.values().iter().map(|v| v + normal.sample(rng)).collect();
            Embedding::new(noisy)?.normalized().ok_or(Error::Empty("noised embedding is zero"))
        }
        DefenseKind::LapMech => {
            let x = e.normalized().ok_or(Error::Empty("zero vector for directional defense"))?;
            let eps = spec.eps_per_dim.unwrap_or_default() * d as f64;
            let gamma = Gamma::new(d as f64, 1.0 / eps).map_err(|err| Error::Config(err.to_string()))?;
            let radius = gamma.sample(rng);
            let dir = random_unit(d, rng);
            let out: Vec<f64> = x.values().iter().zip(&dir).map(|(a, u)| a + radius * u).collect();
            Embedding::new(out)?.normalized().ok_or(Error::Empty("noised embedding is zero"))
        }
        DefenseKind::PurMech => {
            if d < 2 {
                return Err(Error::Config("purmech needs dimension >= 2".into()));
            }
            let x = e.normalized().ok_or(Error::Empty("zero vector for directional defense"))?;
            let eps = spec.eps_per_dim.unwrap_or_default() * d as f64;
            let theta = sample_angle(eps, d, rng);
            let tangent = random_tangent(x.values(), rng);
            let (s, c) = theta.sin_cos();
            let out: Vec<f64> = x.values().iter().zip(&tangent).map(|(a, u)| c * a + s * u).collect();
            Embedding::new(out)
        }
    }
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform unit vector orthogonal to the unit vector `x`.
fn random_tangent<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = random_unit(x.len(), rng);
        let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(x).for_each(|(a, b)| *a -= dot * b);
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

/// Draws the geodesic angle from the density `exp(-eps θ) sin^(d-2) θ` on
/// `[0, π]`.
///
/// For `d > 2` the log-density has curvature at most `-(d-2)`, so a normal
/// centred on the mode with variance `1/(d-2)` dominates it after scaling;
/// that normal is the rejection envelope.
pub(crate) fn sample_angle<R: Rng + ?Sized>(eps: f64, d: usize, rng: &mut R) -> f64 {
    use std::f64::consts::PI;
    if d == 2 {
        // truncated exponential, inverted CDF
        let u: f64 = rng.random();
        return -(1.0 - u * (1.0 - (-eps * PI).exp())).ln() / eps;
    }
    let m = (d - 2) as f64;
    let log_density = |t: f64| -eps * t + m * t.sin().ln();
    let mode = m.atan2(eps);
    let peak = log_density(mode);
    let sd = 1.0 / m.sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let t = mode + sd * z;
        if t <= 0.0 || t >= PI {
            continue;
        }
        let log_ratio = log_density(t) - peak + 0.5 * z * z;
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            return t;
        }
    }
}
