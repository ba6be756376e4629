//! Green's function, density of states and gap diagnostics from converged
//! quasi-particle parameters.
//!
//! The local Green's function is the energy-weighted resolvent average
//! G(ω) = Σ_i w_i Ω† [ω + iδ − ε_i ΩΩ† − Λqp]⁻¹ Ω, evaluated with one linear
//! solve per (ω, ε) pair; the DOS is A(ω) = −Im G(ω)/π.

use num_complex::Complex64;

use crate::error::{GgutError, Result};
use crate::linalg::CMatrix;
use crate::model::EnergyGrid;
use crate::scloop::QpParams;

/// Frequency mesh with Lorentzian broadening δ.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    pub delta: f64,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>, delta: f64) -> Result<Self> {
        if delta <= 0.0 {
            return Err(GgutError::InvalidInput("broadening must be positive".into()));
        }
        if omegas.len() < 2 || omegas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GgutError::InvalidInput(
                "frequencies must be strictly increasing".into(),
            ));
        }
        Ok(Self { omegas, delta })
    }

    /// Uniform mesh over [lo, hi] with the given step.
    pub fn uniform(lo: f64, hi: f64, step: f64, delta: f64) -> Result<Self> {
        if step <= 0.0 || hi <= lo {
            return Err(GgutError::InvalidInput("bad frequency window".into()));
        }
        let n = ((hi - lo) / step).round() as usize;
        let omegas = (0..=n).map(|k| lo + k as f64 * step).collect();
        Self::new(omegas, delta)
    }

    /// Default window ω ∈ [−3, 3], Δω = 0.01, δ = 0.01.
    pub fn standard() -> Self {
        Self::uniform(-3.0, 3.0, 0.01, 0.01).expect("valid standard grid")
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// DOS values aligned with a frequency grid.
#[derive(Debug, Clone)]
pub struct DosCurve {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
}

impl DosCurve {
    /// Trapezoidal ∫ A(ω) dω.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.omegas.len() {
            let dw = self.omegas[k] - self.omegas[k - 1];
            acc += 0.5 * dw * (self.values[k] + self.values[k - 1]);
        }
        acc
    }

    /// Trapezoidal ∫ ω^n A(ω) dω.
    pub fn moment(&self, n: u32) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.omegas.len() {
            let dw = self.omegas[k] - self.omegas[k - 1];
            let f = |i: usize| self.omegas[i].powi(n as i32) * self.values[i];
            acc += 0.5 * dw * (f(k) + f(k - 1));
        }
        acc
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,dos\n");
        for (w, a) in self.omegas.iter().zip(&self.values) {
            out.push_str(&format!("{:.6},{:.12e}\n", w, a));
        }
        out
    }
}

fn greens_at(qp: &QpParams, grid: &EnergyGrid, omega: f64, delta: f64) -> Complex64 {
    let ng = qp.n_ghosts();
    let outer = &qp.omega * qp.omega.adjoint();
    let z = Complex64::new(omega, delta);
    let mut g = Complex64::default();
    for (e, w) in grid.iter() {
        let mut m = CMatrix::from_diagonal_element(ng, ng, z);
        m -= &outer * Complex64::new(e, 0.0);
        m -= &qp.lambda_qp;
        let lu = m.lu();
        if let Some(x) = lu.solve(&qp.omega) {
            g += Complex64::new(w, 0.0) * (qp.omega.adjoint() * x)[(0, 0)];
        }
    }
    g
}

/// Local Green's function on a frequency grid.
pub fn greens_function(
    qp: &QpParams,
    grid: &EnergyGrid,
    freq: &FrequencyGrid,
) -> Vec<Complex64> {
    let eval = |&w: &f64| greens_at(qp, grid, w, freq.delta);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        freq.omegas.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        freq.omegas.iter().map(eval).collect()
    }
}

/// A(ω) = −Im G(ω)/π.
pub fn dos(g: &[Complex64], freq: &FrequencyGrid) -> DosCurve {
    let values = g
        .iter()
        .map(|z| -z.im / std::f64::consts::PI)
        .collect();
    DosCurve {
        omegas: freq.omegas.clone(),
        values,
    }
}

/// Convenience: converged parameters straight to the DOS.
pub fn dos_from_qp(qp: &QpParams, grid: &EnergyGrid, freq: &FrequencyGrid) -> DosCurve {
    dos(&greens_function(qp, grid, freq), freq)
}

/// |∫A dω − Σ|Ω_a|²|: the spectral weight carried by the quasi-particle
/// projection, up to broadening tails outside the window.
pub fn sum_rule(curve: &DosCurve, qp: &QpParams) -> f64 {
    (curve.integral() - qp.spectral_weight()).abs()
}

/// A(0), interpolated linearly when the grid does not contain ω = 0.
pub fn gap_metric(curve: &DosCurve) -> f64 {
    let n = curve.omegas.len();
    for (k, &w) in curve.omegas.iter().enumerate() {
        if w.abs() < 1e-12 {
            return curve.values[k];
        }
    }
    for k in 1..n {
        if curve.omegas[k - 1] < 0.0 && curve.omegas[k] >= 0.0 {
            let (w0, w1) = (curve.omegas[k - 1], curve.omegas[k]);
            let t = -w0 / (w1 - w0);
            return curve.values[k - 1] * (1.0 - t) + curve.values[k] * t;
        }
    }
    f64::NAN
}
