//! Selected-CI truncation, subspace diagonalization and error metrics.
//!
//! A CI set is a weight-ranked subset of a sector basis. Diagonalizing the
//! embedding Hamiltonian restricted to the subset gives a variational upper
//! bound on the ground state; the error metrics quantify how the energy and
//! the DOS converge as the subset grows.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::basisrot::RotatedModel;
use crate::error::{GgutError, Result};
use crate::fock::{build_hamiltonian, ground_state, EmbSolution, SectorBasis};
use crate::linalg::eigh;
use crate::scloop::{EmbParams, ImpuritySolver};
use crate::spectral::DosCurve;

/// How to pick the retained determinants.
#[derive(Debug, Clone, Copy)]
pub enum TruncationPolicy {
    /// Keep ⌈p·|S_sym|⌉ determinants.
    Fraction(f64),
    /// Keep a fixed number.
    Count(usize),
    /// Keep every determinant with weight ≥ threshold.
    Threshold(f64),
}

/// Ranked, truncated subset of a sector basis.
#[derive(Debug, Clone)]
pub struct CiSet {
    /// Positions in the parent basis, ranked by descending weight
    /// (ties broken by basis order).
    pub indices: Vec<usize>,
    /// Weights aligned with `indices`, sorted descending.
    pub weights: Vec<f64>,
    /// p = |set| / |S_sym|.
    pub fraction: f64,
}

impl CiSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Captured weight Σ of the retained entries (callers normalize).
    pub fn captured_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Top-ranked subset of `weights` under the policy. Ranking is by weight
/// descending with ties broken by index ascending, so results are
/// deterministic for repeated weights.
pub fn truncate_by_weight(weights: &[f64], policy: TruncationPolicy) -> Result<CiSet> {
    if weights.is_empty() {
        return Err(GgutError::InvalidInput("no weights given".into()));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(GgutError::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total = weights.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));

    let keep = match policy {
        TruncationPolicy::Fraction(p) => {
            if !(0.0..=1.0).contains(&p) || p == 0.0 {
                return Err(GgutError::InvalidInput(format!(
                    "fraction {p} outside (0, 1]"
                )));
            }
            ((p * total as f64).ceil() as usize).min(total)
        }
        TruncationPolicy::Count(k) => k.min(total),
        TruncationPolicy::Threshold(t) => order.iter().take_while(|&&i| weights[i] >= t).count(),
    };
    if keep == 0 {
        return Err(GgutError::InvalidInput(
            "truncation selected an empty set".into(),
        ));
    }
    let indices: Vec<usize> = order[..keep].to_vec();
    let kept_weights: Vec<f64> = indices.iter().map(|&i| weights[i]).collect();
    Ok(CiSet {
        fraction: keep as f64 / total as f64,
        indices,
        weights: kept_weights,
    })
}

/// Ground state of the model restricted to the rows/columns of `ci`.
///
/// Dense diagonalization below dimension 64, Lanczos above. The returned
/// amplitudes live on the full parent basis (zero outside the subset), so
/// density matrices come out in the usual orbital layout.
pub fn solve_subspace(
    model: &RotatedModel,
    basis: &SectorBasis,
    ci: &CiSet,
    seed: u64,
) -> Result<EmbSolution> {
    if ci.is_empty() {
        return Err(GgutError::InvalidInput("empty CI set".into()));
    }
    let sub_of_full: HashMap<usize, usize> = ci
        .indices
        .iter()
        .enumerate()
        .map(|(sub, &full)| (full, sub))
        .collect();
    if sub_of_full.len() != ci.indices.len() {
        return Err(GgutError::InvalidInput("duplicate determinants".into()));
    }
    for &i in &ci.indices {
        if i >= basis.len() {
            return Err(GgutError::InvalidInput(format!(
                "determinant index {i} outside the sector"
            )));
        }
    }

    // Restrict the sparse operator by filtering full-basis columns.
    let full = build_hamiltonian(model, basis)?;
    let dim = ci.len();
    let rows: Vec<Vec<(u32, Complex64)>> = ci
        .indices
        .iter()
        .map(|&full_i| {
            full.row_entries(full_i)
                .filter_map(|(col, val)| {
                    sub_of_full
                        .get(&(col as usize))
                        .map(|&sub_j| (sub_j as u32, val))
                })
                .collect()
        })
        .collect();
    let sub = crate::fock::SparseHamiltonianMatrix::from_rows(dim, rows);

    let (energy, amps) = if dim < 64 {
        let (vals, vecs) = eigh(&sub.to_dense());
        let column: Vec<Complex64> = (0..dim).map(|i| vecs[(i, 0)]).collect();
        (vals[0], column)
    } else {
        ground_state(&sub, seed)?
    };
    let mut amps_full = vec![Complex64::default(); basis.len()];
    for (sub_idx, &fullidx) in ci.indices.iter().enumerate() {
        amps_full[fullidx] = amps[sub_idx];
    }
    EmbSolution::from_ground_state(energy, amps_full, basis)
}

/// Energy and DOS errors between a trial solution and a reference.
#[derive(Debug, Clone)]
pub struct SciErrorReport {
    /// |E_trial − E_ref|.
    pub r_energy: f64,
    /// R_E normalized by |E_ref|.
    pub r_energy_relative: f64,
    /// Σ_ω |ΔA|² Δω.
    pub r_dos: f64,
    /// Σ_ω |ω^n ΔA| Δω for n = 0..=max_moment.
    pub r_moments: Vec<f64>,
    /// Cumulative captured weight of the trial CI set.
    pub sigma_alpha: f64,
}

/// Computes the error metrics on a common frequency grid.
pub fn error_metrics(
    reference: &DosCurve,
    e_reference: f64,
    trial: &DosCurve,
    e_trial: f64,
    max_moment: u32,
    sigma_alpha: f64,
) -> Result<SciErrorReport> {
    if reference.omegas.len() != trial.omegas.len()
        || reference
            .omegas
            .iter()
            .zip(&trial.omegas)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(GgutError::InvalidInput(
            "DOS curves live on different grids".into(),
        ));
    }
    let n = reference.omegas.len();
    // trapezoid-consistent measure: interior points get the mean adjacent
    // spacing, endpoints half a step, so Σ dw equals the grid span
    let dw = |k: usize| -> f64 {
        if k == 0 {
            0.5 * (reference.omegas[1] - reference.omegas[0])
        } else if k == n - 1 {
            0.5 * (reference.omegas[n - 1] - reference.omegas[n - 2])
        } else {
            0.5 * (reference.omegas[k + 1] - reference.omegas[k - 1])
        }
    };
    let mut r_dos = 0.0;
    let mut r_moments = vec![0.0; (max_moment + 1) as usize];
    for k in 0..n {
        let diff = trial.values[k] - reference.values[k];
        let w = reference.omegas[k];
        r_dos += diff * diff * dw(k);
        for (m, acc) in r_moments.iter_mut().enumerate() {
            *acc += (w.powi(m as i32) * diff).abs() * dw(k);
        }
    }
    let r_energy = (e_trial - e_reference).abs();
    Ok(SciErrorReport {
        r_energy,
        r_energy_relative: r_energy / e_reference.abs().max(1e-300),
        r_dos,
        r_moments,
        sigma_alpha,
    })
}

/// Squared-amplitude weights of a state vector.
pub fn amplitude_weights(amplitudes: &[Complex64]) -> Vec<f64> {
    amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// Weights sorted descending.
pub fn sorted_weights(amplitudes: &[Complex64]) -> Vec<f64> {
    let mut w = amplitude_weights(amplitudes);
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// Smallest K whose top-K weight sum reaches `target` (weights normalized).
pub fn count_for_captured_weight(sorted_desc: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in sorted_desc.iter().enumerate() {
        acc += w;
        if acc >= target {
            return k + 1;
        }
    }
    sorted_desc.len()
}

/// Least-squares fit of K ≈ a + b·exp(c·N) by damped Gauss–Newton.
///
/// Deterministic: starts from a = 0, b = K₀, and c from the log-slope of the
/// last two points.
pub fn fit_exponential(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(GgutError::InvalidInput(
            "need at least 3 points for the exponential fit".into(),
        ));
    }
    let (n_last, k_last) = points[points.len() - 1];
    let (n_prev, k_prev) = points[points.len() - 2];
    let c0 = if k_last > 0.0 && k_prev > 0.0 && (n_last - n_prev).abs() > 1e-12 {
        ((k_last / k_prev).ln() / (n_last - n_prev)).clamp(-5.0, 5.0)
    } else {
        0.1
    };
    let mut theta = [0.0, points[0].1, c0];
    let cost = |t: &[f64; 3]| -> f64 {
        points
            .iter()
            .map(|&(n, k)| {
                let r = t[0] + t[1] * (t[2] * n).exp() - k;
                r * r
            })
            .sum()
    };
    let mut lambda = 1e-3;
    let mut current = cost(&theta);
    for _step in 0..500 {
        // normal equations with Levenberg damping
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(n, k) in points {
            let e = (theta[2] * n).exp();
            let r = theta[0] + theta[1] * e - k;
            let j = [1.0, e, theta[1] * n * e];
            for (a, ja) in j.iter().enumerate() {
                jtr[a] += ja * r;
                for (b, jb) in j.iter().enumerate() {
                    jtj[a][b] += ja * jb;
                }
            }
        }
        let mut accepted = false;
        for _try in 0..40 {
            let mut m = nalgebra::Matrix3::zeros();
            let mut rhs = nalgebra::Vector3::zeros();
            for a in 0..3 {
                rhs[a] = -jtr[a];
                for b in 0..3 {
                    m[(a, b)] = jtj[a][b];
                }
                m[(a, a)] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(deltap) = m.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [
                theta[0] + deltap[0],
                theta[1] + deltap[1],
                (theta[2] + deltap[2]).clamp(-8.0, 8.0),
            ];
            let c_cost = cost(&cand);
            if c_cost < current {
                let step_norm = deltap.norm();
                theta = cand;
                current = c_cost;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if step_norm < 1e-12 * (1.0 + theta.iter().map(|x| x * x).sum::<f64>().sqrt())
                    || current < 1e-22
                {
                    return Ok((theta[0], theta[1], theta[2]));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // stuck in a damping ladder: treat as converged if the gradient
            // is already negligible
            let grad: f64 = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
            if grad < 1e-10 * (1.0 + current) {
                return Ok((theta[0], theta[1], theta[2]));
            }
            return Err(GgutError::FitNonConvergence(500));
        }
    }
    Ok((theta[0], theta[1], theta[2]))
}

/// Truncation-based impurity solver: exact ground state, ranked by weight,
/// re-diagonalized in the retained subspace.
#[derive(Debug, Clone)]
pub struct SciSolver {
    pub seed: u64,
    pub fraction: f64,
}

impl SciSolver {
    pub fn new(seed: u64, fraction: f64) -> Self {
        Self { seed, fraction }
    }
}

impl ImpuritySolver for SciSolver {
    fn solve(&mut self, emb: &EmbParams, iteration: usize) -> Result<EmbSolution> {
        let basis = SectorBasis::half_filled(emb.n_orbitals())?;
        let model = RotatedModel::from_emb(emb);
        let h = build_hamiltonian(&model, &basis)?;
        let (_, amps) = ground_state(&h, self.seed ^ iteration as u64)?;
        let ci = truncate_by_weight(
            &amplitude_weights(&amps),
            TruncationPolicy::Fraction(self.fraction),
        )?;
        solve_subspace(&model, &basis, &ci, self.seed)
    }

    fn name(&self) -> &'static str {
        "sci"
    }
}
