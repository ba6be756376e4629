//! Reference lattice problem and the generic Anderson impurity comparison model.
//!
//! The lattice enters the loop only through its non-interacting density of
//! states, here the semicircle of the infinite-coordination Bethe lattice.
//! The momentum sum is replaced by a Gauss–Chebyshev quadrature in energy,
//! which is exact for this model in the same limit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GgutError, Result};
use crate::linalg::CMatrix;
use crate::scloop::EmbParams;

/// Bethe-lattice band: half-bandwidth `D`, hopping `t = D/2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub half_bandwidth: f64,
    pub n_energy: usize,
}

impl LatticeSpec {
    pub fn new(half_bandwidth: f64, n_energy: usize) -> Result<Self> {
        if half_bandwidth <= 0.0 {
            return Err(GgutError::InvalidInput(
                "half-bandwidth must be positive".into(),
            ));
        }
        if n_energy < 2 {
            return Err(GgutError::InvalidInput(
                "need at least 2 energy points".into(),
            ));
        }
        Ok(Self {
            half_bandwidth,
            n_energy,
        })
    }

    /// Nearest-neighbor hopping, tied to the half-bandwidth.
    pub fn hopping(&self) -> f64 {
        self.half_bandwidth / 2.0
    }

    /// Non-interacting DOS of the infinite Bethe lattice at energy `w`.
    pub fn bare_dos(&self, w: f64) -> f64 {
        let t = self.hopping();
        let x = w / (2.0 * t);
        if x.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - x * x).sqrt() / (std::f64::consts::PI * t)
        }
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            half_bandwidth: 1.0,
            n_energy: 400,
        }
    }
}

/// Interaction parameters of the lattice model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HubbardParams {
    /// On-site repulsion.
    pub u: f64,
    /// Chemical potential (−U/2 at half filling).
    pub mu: f64,
    /// Temperature entering the Fermi function.
    pub temperature: f64,
}

impl HubbardParams {
    pub fn new(u: f64, mu: f64, temperature: f64) -> Result<Self> {
        if u < 0.0 {
            return Err(GgutError::InvalidInput("U must be nonnegative".into()));
        }
        if temperature <= 0.0 {
            return Err(GgutError::InvalidInput(
                "temperature must be positive".into(),
            ));
        }
        Ok(Self {
            u,
            mu,
            temperature,
        })
    }

    /// Half-filled model at the particle-hole symmetric point μ = −U/2.
    pub fn half_filled(u: f64, temperature: f64) -> Result<Self> {
        Self::new(u, -u / 2.0, temperature)
    }
}

/// Energy quadrature replacing the lattice momentum sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EnergyGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weighted moment Σ w_i ε_i^k.
    pub fn moment(&self, k: u32) -> f64 {
        self.iter().map(|(e, w)| w * e.powi(k as i32)).sum()
    }

    /// Two-column CSV body (energy, weight).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("energy,weight\n");
        for (e, w) in self.iter() {
            out.push_str(&format!("{:.15e},{:.15e}\n", e, w));
        }
        out
    }
}

/// Gauss–Chebyshev (second kind) quadrature matching the semicircular DOS.
///
/// Nodes ε_i = D cos(iπ/(n+1)), weights ∝ sin²(iπ/(n+1)), normalized so the
/// weights sum to one exactly; the weighted node density converges to the
/// semicircle as n grows.
pub fn discretize_semicircle(spec: &LatticeSpec) -> EnergyGrid {
    let n = spec.n_energy;
    let d = spec.half_bandwidth;
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 1..=n {
        let phase = i as f64 * std::f64::consts::PI / (n as f64 + 1.0);
        points.push(d * phase.cos());
        weights.push(phase.sin().powi(2));
    }
    let norm: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= norm;
    }
    EnergyGrid { points, weights }
}

/// Chain Anderson impurity model used as an ad-hoc comparison to converged
/// embedding Hamiltonians: Δ = (−1, 0, …, 0), nearest-neighbor ghost chain
/// with unit couplings and μ = −U/2.
pub fn build_generic_aim(n_ghosts: usize, u: f64) -> Result<EmbParams> {
    if n_ghosts < 1 {
        return Err(GgutError::InvalidInput(
            "need at least one ghost orbital".into(),
        ));
    }
    let mut delta = vec![Complex64::default(); n_ghosts];
    delta[0] = Complex64::new(-1.0, 0.0);
    let mut lambda = CMatrix::zeros(n_ghosts, n_ghosts);
    for a in 0..n_ghosts.saturating_sub(1) {
        lambda[(a, a + 1)] = Complex64::new(1.0, 0.0);
        lambda[(a + 1, a)] = Complex64::new(1.0, 0.0);
    }
    EmbParams::new(delta.into(), lambda, u, -u / 2.0)
}
