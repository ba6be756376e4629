//! Self-consistent embedding loop coupling quasi-particle and embedding
//! parameters.
//!
//! One iteration runs four steps: (1) quasi-particle density matrix from
//! (Ω, Λqp) by a Fermi-weighted energy sum, (2) hybridization Δ and ghost
//! potential Λemb, (3) impurity-solver ground state of the embedding model,
//! (4) new (Ω, Λqp) from the solver's density matrices. Linear mixing is
//! applied to (Ω, Λqp) and the loop stops when all three residuals —
//! ‖δΩ‖, ‖δΛqp‖ and |Tr ρqp − Tr ρemb| — fall below the tolerance.
//!
//! Everything is paramagnetic: one spin sector is computed and mirrored.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GgutError, Result};
use crate::fock::EmbSolution;
use crate::linalg::{check_hermitian, eigh, hermitize, CMatrix, CVector};
use crate::model::{EnergyGrid, HubbardParams, LatticeSpec};

/// Quasi-particle renormalization vector Ω and potential Λqp (one spin).
#[derive(Debug, Clone)]
pub struct QpParams {
    pub omega: CVector,
    pub lambda_qp: CMatrix,
}

impl QpParams {
    /// Validating constructor: Λqp Hermitian, Ω finite with 0 < Σ|Ω|² ≤ 1 + 1e-8.
    pub fn new(omega: CVector, lambda_qp: CMatrix) -> Result<Self> {
        if omega.len() != lambda_qp.nrows() {
            return Err(GgutError::DimensionMismatch {
                expected: lambda_qp.nrows(),
                got: omega.len(),
            });
        }
        check_hermitian(&lambda_qp, 1e-12)?;
        let weight: f64 = omega.iter().map(|z| z.norm_sqr()).sum();
        if !weight.is_finite() || weight <= 0.0 || weight > 1.0 + 1e-8 {
            return Err(GgutError::InvalidInput(format!(
                "quasiparticle weight Σ|Ω|² = {weight:.6e} outside (0, 1]"
            )));
        }
        Ok(Self { omega, lambda_qp })
    }

    /// Loop-internal constructor; transient iterates may overshoot the
    /// quasiparticle-weight bound before mixing pulls them back.
    fn new_unchecked(omega: CVector, lambda_qp: CMatrix) -> Self {
        Self { omega, lambda_qp }
    }

    /// Default cold start: uniform Ω = 1/√N_g, Λqp diagonal with N_g evenly
    /// spaced values spanning [−D, D] (a single ghost starts at 0).
    pub fn initial_guess(n_ghosts: usize, half_bandwidth: f64) -> Result<Self> {
        if n_ghosts % 2 == 0 {
            return Err(GgutError::EvenGhostCount(n_ghosts));
        }
        let omega = CVector::from_element(
            n_ghosts,
            Complex64::new(1.0 / (n_ghosts as f64).sqrt(), 0.0),
        );
        let mut lambda = CMatrix::zeros(n_ghosts, n_ghosts);
        for a in 0..n_ghosts {
            let x = if n_ghosts == 1 {
                0.0
            } else {
                -half_bandwidth + 2.0 * half_bandwidth * a as f64 / (n_ghosts - 1) as f64
            };
            lambda[(a, a)] = Complex64::new(x, 0.0);
        }
        Ok(Self {
            omega,
            lambda_qp: lambda,
        })
    }

    pub fn n_ghosts(&self) -> usize {
        self.omega.len()
    }

    /// Σ_a |Ω_a|², the total quasiparticle spectral weight.
    pub fn spectral_weight(&self) -> f64 {
        self.omega.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Embedding-model parameters: hybridization Δ, ghost potential Λemb, plus
/// the impurity interaction U and chemical potential μ.
#[derive(Debug, Clone)]
pub struct EmbParams {
    pub delta: CVector,
    pub lambda_emb: CMatrix,
    pub u: f64,
    pub mu: f64,
}

impl EmbParams {
    pub fn new(delta: CVector, lambda_emb: CMatrix, u: f64, mu: f64) -> Result<Self> {
        if delta.len() != lambda_emb.nrows() {
            return Err(GgutError::DimensionMismatch {
                expected: lambda_emb.nrows(),
                got: delta.len(),
            });
        }
        check_hermitian(&lambda_emb, 1e-12)?;
        Ok(Self {
            delta,
            lambda_emb,
            u,
            mu,
        })
    }

    pub fn n_ghosts(&self) -> usize {
        self.delta.len()
    }

    /// Spatial orbital count of the embedding model (impurity + ghosts).
    pub fn n_orbitals(&self) -> usize {
        self.delta.len() + 1
    }

    /// One-body coefficient matrix h with h_pq the coefficient of d†_p d_q,
    /// impurity at index 0: h_0a = Δ_a, h_ab = −Λemb_ba on the ghost block.
    /// μ and U are kept separate (they live on the impurity only).
    pub fn one_body(&self) -> CMatrix {
        let ng = self.n_ghosts();
        let mut h = CMatrix::zeros(ng + 1, ng + 1);
        for a in 0..ng {
            h[(0, a + 1)] = self.delta[a];
            h[(a + 1, 0)] = self.delta[a].conj();
            for b in 0..ng {
                h[(a + 1, b + 1)] = -self.lambda_emb[(b, a)];
            }
        }
        h
    }
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoopState {
    pub iteration: usize,
    pub residual_omega: f64,
    pub residual_lambda: f64,
    pub residual_trace: f64,
    pub mixing_alpha: f64,
}

impl LoopState {
    pub fn max_residual(&self) -> f64 {
        self.residual_omega
            .max(self.residual_lambda)
            .max(self.residual_trace)
    }
}

/// Loop controls. Defaults: tol 1e-6 on all residuals, mixing 0.3, 200
/// iterations, temperature 0.002.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub tol: f64,
    pub mixing_alpha: f64,
    pub max_iter: usize,
    pub warm_start: Option<QpParams>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            mixing_alpha: 0.3,
            max_iter: 200,
            warm_start: None,
        }
    }
}

/// Converged loop output.
#[derive(Debug, Clone)]
pub struct ConvergedResult {
    pub qp: QpParams,
    pub emb: EmbParams,
    pub solution: EmbSolution,
    pub history: Vec<LoopState>,
    pub iterations: usize,
}

/// How to treat ρ(1−ρ) eigenvalues at the boundary of (0, 1).
///
/// `Strict` signals [`GgutError::SingularDensity`] when an eigenvalue lies
/// within 1e-12 of {0, 1}; `Clip` regularizes into [1e-10, 1−1e-10], which the
/// loop uses because empty/full ghost orbitals occur on physical insulating
/// solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularization {
    Strict,
    Clip,
}

const SINGULAR_TOL: f64 = 1e-12;
const CLIP_EPS: f64 = 1e-10;
/// Gauge-cycle rescue thresholds: the aligned proposal replaces the raw one
/// only when the update is a near-pure gauge move (aligned distance a small
/// fraction of the raw distance) with the physics essentially converged.
const GAUGE_RESCUE_DISTANCE: f64 = 1e-3;
const GAUGE_RESCUE_RATIO: f64 = 0.05;

fn regularize_occupations(vals: &[f64], reg: Regularization) -> Result<Vec<f64>> {
    match reg {
        Regularization::Strict => {
            for &v in vals {
                if v < SINGULAR_TOL || v > 1.0 - SINGULAR_TOL {
                    return Err(GgutError::SingularDensity { eigenvalue: v });
                }
            }
            Ok(vals.to_vec())
        }
        Regularization::Clip => Ok(vals
            .iter()
            .map(|&v| v.clamp(CLIP_EPS, 1.0 - CLIP_EPS))
            .collect()),
    }
}

/// Stable Fermi function 1/(e^{x/T} + 1).
fn fermi(x: f64, temperature: f64) -> f64 {
    let z = x / temperature;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Matrix Fermi function: U f(diag) U† in the eigenbasis of `h`.
pub fn fermi_matrix(h: &CMatrix, temperature: f64) -> Result<CMatrix> {
    check_hermitian(h, 1e-9)?;
    if temperature <= 0.0 {
        return Err(GgutError::InvalidInput(
            "temperature must be positive".into(),
        ));
    }
    let (vals, vecs) = eigh(h);
    let n = h.nrows();
    let mut f = CMatrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        f[(k, k)] = Complex64::new(fermi(v, temperature), 0.0);
    }
    Ok(&vecs * f * vecs.adjoint())
}

/// Quasi-particle density matrix ρqp = Σ_i w_i n_F(ε_i ΩΩ† + Λqp)ᵀ.
///
/// The transpose implements the reversed index order of the defining
/// expectation value ⟨f†_a f_b⟩; the quadrature weights carry the lattice
/// normalization.
pub fn compute_rho_qp(qp: &QpParams, grid: &EnergyGrid, temperature: f64) -> Result<CMatrix> {
    let ng = qp.n_ghosts();
    let outer = &qp.omega * qp.omega.adjoint();
    let mut rho = CMatrix::zeros(ng, ng);
    for (e, w) in grid.iter() {
        let h = &outer * Complex64::new(e, 0.0) + &qp.lambda_qp;
        let f = fermi_matrix(&h, temperature)?;
        rho += f.transpose() * Complex64::new(w, 0.0);
    }
    Ok(hermitize(&rho))
}

/// f(x) = √(x(1−x)) applied to a Hermitian matrix.
pub fn sqrt_rho_complement(rho: &CMatrix) -> CMatrix {
    let (vals, vecs) = eigh(rho);
    let n = rho.nrows();
    let mut d = CMatrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        d[(k, k)] = Complex64::new((v.max(0.0) * (1.0 - v).max(0.0)).sqrt(), 0.0);
    }
    &vecs * d * vecs.adjoint()
}

/// [ρ(1−ρ)]^{−1/2} with the chosen boundary policy.
fn inv_sqrt_complement(rho: &CMatrix, reg: Regularization) -> Result<CMatrix> {
    let (vals, vecs) = eigh(rho);
    let vals = regularize_occupations(&vals, reg)?;
    let n = rho.nrows();
    let mut d = CMatrix::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        d[(k, k)] = Complex64::new(1.0 / (v * (1.0 - v)).sqrt(), 0.0);
    }
    Ok(&vecs * d * vecs.adjoint())
}

fn sqrt_complement_fn(x: f64) -> f64 {
    (x.max(0.0) * (1.0 - x).max(0.0)).sqrt()
}

fn sqrt_complement_deriv(x: f64) -> f64 {
    (1.0 - 2.0 * x) / (2.0 * sqrt_complement_fn(x))
}

/// Divided differences f[λ_i, λ_j] for f(x) = √(x(1−x)), with the confluent
/// limit f'(λ) below 1e-10 separation.
fn divided_differences(vals: &[f64]) -> DMatrix<f64> {
    let n = vals.len();
    DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (vals[i], vals[j]);
        if (a - b).abs() < 1e-10 {
            sqrt_complement_deriv(0.5 * (a + b))
        } else {
            (sqrt_complement_fn(a) - sqrt_complement_fn(b)) / (a - b)
        }
    })
}

/// Rank-4 derivative table ∂[ρ(1−ρ)]^{1/2}_cd / ∂ρ_ab.
///
/// Daleckii–Krein construction in the eigenbasis of ρ, rotated back:
/// entry(c,d,a,b) = Σ_ij V_ci V*_dj f[λ_i,λ_j] V*_ai V_bj.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    n: usize,
    data: Vec<Complex64>,
}

impl DerivativeTable {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, c: usize, d: usize, a: usize, b: usize) -> Complex64 {
        let n = self.n;
        self.data[((c * n + d) * n + a) * n + b]
    }

    /// Directional derivative: df_cd = Σ_ab entry(c,d,a,b) E_ab.
    pub fn apply_direction(&self, direction: &CMatrix) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, n, |c, d| {
            let mut acc = Complex64::default();
            for a in 0..n {
                for b in 0..n {
                    acc += self.entry(c, d, a, b) * direction[(a, b)];
                }
            }
            acc
        })
    }
}

/// Full derivative table of the matrix square-root function at ρ.
pub fn matfunc_derivative(rho: &CMatrix) -> DerivativeTable {
    let n = rho.nrows();
    let (vals, vecs) = eigh(rho);
    let dd = divided_differences(&vals);
    let mut data = vec![Complex64::default(); n * n * n * n];
    for c in 0..n {
        for d in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let mut acc = Complex64::default();
                    for i in 0..n {
                        for j in 0..n {
                            acc += vecs[(c, i)]
                                * vecs[(d, j)].conj()
                                * Complex64::new(dd[(i, j)], 0.0)
                                * vecs[(a, i)].conj()
                                * vecs[(b, j)];
                        }
                    }
                    data[((c * n + d) * n + a) * n + b] = acc;
                }
            }
        }
    }
    DerivativeTable { n, data }
}

/// Hermitian gradient G_ab of the real scalar Σ_cd (Ω_c [ρ(1−ρ)]^{1/2}_cd Δ_d
/// + c.c.) with respect to ρ_ab, evaluated as T + T† with
/// T = V̄ M Vᵀ, M_ij = (VᵀΩ)_i (V†Δ)_j f[λ_i, λ_j].
fn derivative_gradient(
    rho: &CMatrix,
    omega: &CVector,
    delta: &CVector,
    reg: Regularization,
) -> Result<CMatrix> {
    let (vals, vecs) = eigh(rho);
    let vals = regularize_occupations(&vals, reg)?;
    let dd = divided_differences(&vals);
    let u = vecs.transpose() * omega;
    let w = vecs.adjoint() * delta;
    let n = rho.nrows();
    let m = CMatrix::from_fn(n, n, |i, j| u[i] * w[j] * Complex64::new(dd[(i, j)], 0.0));
    let t = vecs.conjugate() * m * vecs.transpose();
    Ok(&t + t.adjoint())
}

/// Step 2: hybridization and ghost potential from the quasi-particle sector.
///
/// Δ_a = Σ_c [ρ(1−ρ)]^{−1/2}_ac Σ_i w_i ε_i [Ω† n_F(ε_i ΩΩ† + Λqp)]_c and
/// Λemb_ab = −G_ab − Λqp_ab with G the derivative-gradient above. U and μ are
/// copied from the lattice model.
pub fn compute_emb_params(
    qp: &QpParams,
    rho_qp: &CMatrix,
    grid: &EnergyGrid,
    model: &HubbardParams,
    reg: Regularization,
) -> Result<EmbParams> {
    let ng = qp.n_ghosts();
    if rho_qp.nrows() != ng {
        return Err(GgutError::DimensionMismatch {
            expected: ng,
            got: rho_qp.nrows(),
        });
    }
    let outer = &qp.omega * qp.omega.adjoint();
    let mut v = CVector::zeros(ng);
    for (e, w) in grid.iter() {
        let h = &outer * Complex64::new(e, 0.0) + &qp.lambda_qp;
        let f = fermi_matrix(&h, model.temperature)?;
        // row vector Ω†F, scaled by w ε
        let row = qp.omega.adjoint() * f;
        for c in 0..ng {
            v[c] += row[c] * Complex64::new(w * e, 0.0);
        }
    }
    let r_inv = inv_sqrt_complement(rho_qp, reg)?;
    let delta = &r_inv * v;
    let grad = derivative_gradient(rho_qp, &qp.omega, &delta, reg)?;
    let lambda_emb = hermitize(&(-grad - &qp.lambda_qp));
    EmbParams::new(delta, lambda_emb, model.u, model.mu)
}

/// Step 4: new (Ω, Λqp) from the embedding solution.
///
/// Ω_a = Σ_b ζ_b [ρemb(1−ρemb)]^{−1/2}_ba, then
/// Λqp = −G(ρemb; Ω_new, Δ) − Λemb.
pub fn update_qp(
    solution: &EmbSolution,
    emb: &EmbParams,
    reg: Regularization,
) -> Result<QpParams> {
    let ng = emb.n_ghosts();
    if solution.rho_emb.nrows() != ng {
        return Err(GgutError::DimensionMismatch {
            expected: ng,
            got: solution.rho_emb.nrows(),
        });
    }
    let r_inv = inv_sqrt_complement(&solution.rho_emb, reg)?;
    let omega = r_inv.transpose() * &solution.zeta;
    let grad = derivative_gradient(&solution.rho_emb, &omega, &emb.delta, reg)?;
    let lambda_qp = hermitize(&(-grad - &emb.lambda_emb));
    Ok(QpParams::new_unchecked(omega, lambda_qp))
}

/// Unitary polar factor (SVD-based), identity for a zero matrix.
fn unitary_polar(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    if m.norm() < 1e-14 {
        return CMatrix::identity(n, n);
    }
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => u * vt,
        _ => CMatrix::identity(n, n),
    }
}

/// Aligns the ghost-basis gauge of `proposal` to `reference`.
///
/// The paramagnetic parameterization is invariant under rotations of the
/// ghost basis (Λqp → WΛqpW†, Ω → WΩ leaves ρqp, the embedding model and the
/// Green's function unchanged), and the loop map can exploit that freedom to
/// rotate or sign-flip the parameters between iterations without moving the
/// physics. Before mixing, the proposal is therefore rotated by the gauge
/// W = V_ref Q V_prop† that pairs Λqp eigenvectors by eigenvalue order, with
/// Q chosen block-wise (Procrustes on the Ω components) inside clusters of
/// degenerate eigenvalues. With no gauge drift W reduces to the identity.
pub fn align_gauge(proposal: &QpParams, reference: &QpParams) -> QpParams {
    let ng = proposal.n_ghosts();
    if ng != reference.n_ghosts() {
        return proposal.clone();
    }
    let (dp, vp) = eigh(&proposal.lambda_qp);
    let (_, vc) = eigh(&reference.lambda_qp);
    let a = vp.adjoint() * &proposal.omega;
    let b = vc.adjoint() * &reference.omega;

    let scale = dp.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let cluster_tol = 1e-8 * scale.max(1.0);
    let mut q = CMatrix::zeros(ng, ng);
    let mut start = 0usize;
    while start < ng {
        let mut end = start + 1;
        while end < ng && (dp[end] - dp[end - 1]).abs() < cluster_tol {
            end += 1;
        }
        let m = end - start;
        let mut outer = CMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                outer[(i, j)] = b[start + i] * a[start + j].conj();
            }
        }
        let q_blk = unitary_polar(&outer);
        for i in 0..m {
            for j in 0..m {
                q[(start + i, start + j)] = q_blk[(i, j)];
            }
        }
        start = end;
    }
    let w = &vc * q * vp.adjoint();
    QpParams::new_unchecked(
        &w * &proposal.omega,
        hermitize(&(&w * &proposal.lambda_qp * w.adjoint())),
    )
}

/// Impurity solver interface: ground state of the embedding model, reporting
/// ζ and ρemb in the same basis the parameters are given in.
pub trait ImpuritySolver {
    fn solve(&mut self, emb: &EmbParams, iteration: usize) -> Result<EmbSolution>;
    fn name(&self) -> &'static str;
}

/// Runs the four-step loop to convergence.
pub fn run_loop(
    model: &HubbardParams,
    lattice: &LatticeSpec,
    grid: &EnergyGrid,
    solver: &mut dyn ImpuritySolver,
    n_ghosts: usize,
    cfg: &LoopConfig,
) -> Result<ConvergedResult> {
    if n_ghosts % 2 == 0 {
        return Err(GgutError::EvenGhostCount(n_ghosts));
    }
    let mut qp = match &cfg.warm_start {
        Some(start) => {
            if start.n_ghosts() != n_ghosts {
                return Err(GgutError::DimensionMismatch {
                    expected: n_ghosts,
                    got: start.n_ghosts(),
                });
            }
            start.clone()
        }
        None => QpParams::initial_guess(n_ghosts, lattice.half_bandwidth)?,
    };
    let mut alpha = cfg.mixing_alpha;
    let mut history = Vec::new();
    // period-2 cycle detection: remember the two previous mixed iterates
    let mut prev: [Option<QpParams>; 2] = [None, None];
    let mut stagnations = 0usize;

    for iteration in 0..cfg.max_iter {
        let rho_qp = compute_rho_qp(&qp, grid, model.temperature)?;
        let emb = compute_emb_params(&qp, &rho_qp, grid, model, Regularization::Clip)?;
        let solution = solver.solve(&emb, iteration)?;
        let raw = update_qp(&solution, &emb, Regularization::Clip)?;
        // Gauge-align the proposal only once it is physically near the
        // current iterate (small aligned distance): late-stage updates can
        // drift along a gauge orbit (rotations/sign flips of the ghost basis)
        // without moving the physics, which stalls parameter-space
        // convergence. Early in the flow the raw proposal is kept: mixing
        // unaligned Hermitian matrices pulls their spectra together, which
        // damps ghost-level run-away.
        let aligned = align_gauge(&raw, &qp);
        let dist = |p: &QpParams| {
            let o = (&p.omega - &qp.omega).norm_squared();
            let l = (&p.lambda_qp - &qp.lambda_qp).norm_squared();
            (o + l).sqrt()
        };
        let proposed = if dist(&aligned) < GAUGE_RESCUE_DISTANCE
            && dist(&aligned) < GAUGE_RESCUE_RATIO * dist(&raw)
        {
            aligned
        } else {
            raw
        };

        let residual_omega = (&proposed.omega - &qp.omega).norm();
        let residual_lambda = (&proposed.lambda_qp - &qp.lambda_qp).norm();
        let trace_qp: Complex64 = rho_qp.trace();
        let trace_emb: Complex64 = solution.rho_emb.trace();
        let residual_trace = (trace_qp - trace_emb).norm();
        let state = LoopState {
            iteration,
            residual_omega,
            residual_lambda,
            residual_trace,
            mixing_alpha: alpha,
        };
        history.push(state);

        let mixed_omega = &proposed.omega * Complex64::new(alpha, 0.0)
            + &qp.omega * Complex64::new(1.0 - alpha, 0.0);
        let mixed_lambda = hermitize(
            &(&proposed.lambda_qp * Complex64::new(alpha, 0.0)
                + &qp.lambda_qp * Complex64::new(1.0 - alpha, 0.0)),
        );
        let previous = qp;
        qp = QpParams::new_unchecked(mixed_omega, mixed_lambda);

        if state.max_residual() < cfg.tol {
            return Ok(ConvergedResult {
                qp,
                emb,
                solution,
                history,
                iterations: iteration + 1,
            });
        }

        // A mixing strength above the stability threshold can lock the
        // damped iteration into a period-2 orbit around the fixed point.
        // When the iterate returns to where it was two steps ago, collapse
        // to the midpoint of the orbit (averaging successive iterates) and,
        // if that keeps happening, lower the working mixing strength.
        if iteration > 10 {
            if let [Some(p1), Some(_)] = &prev {
                let d1 = (&qp.omega - &previous.omega).norm()
                    + (&qp.lambda_qp - &previous.lambda_qp).norm();
                let d2 = (&qp.omega - &p1.omega).norm()
                    + (&qp.lambda_qp - &p1.lambda_qp).norm();
                if d2 < 0.05 * d1 && d1 > cfg.tol {
                    let half = Complex64::new(0.5, 0.0);
                    qp = QpParams::new_unchecked(
                        (&qp.omega + &previous.omega) * half,
                        hermitize(&((&qp.lambda_qp + &previous.lambda_qp) * half)),
                    );
                    stagnations += 1;
                    if stagnations >= 3 {
                        alpha = (alpha * 0.5).max(0.05);
                        stagnations = 0;
                    }
                    prev = [None, None];
                    continue;
                }
            }
        }
        prev = [Some(previous), prev[0].take()];
    }

    let last = history.last().copied();
    Err(GgutError::NonConvergence {
        iterations: cfg.max_iter,
        residual_omega: last.map_or(f64::NAN, |s| s.residual_omega),
        residual_lambda: last.map_or(f64::NAN, |s| s.residual_lambda),
        residual_trace: last.map_or(f64::NAN, |s| s.residual_trace),
    })
}

/// On-disk snapshot of the loop state (structured text, TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n_ghosts: usize,
    pub u: f64,
    pub mu: f64,
    pub temperature: f64,
    pub iteration: usize,
    pub residual_omega: f64,
    pub residual_lambda: f64,
    pub residual_trace: f64,
    /// Complex entries as [re, im] pairs.
    pub omega: Vec<[f64; 2]>,
    /// Row-major complex entries as [re, im] pairs.
    pub lambda_qp: Vec<[f64; 2]>,
}

impl Checkpoint {
    pub fn from_result(result: &ConvergedResult, model: &HubbardParams) -> Self {
        let last = result.history.last().copied();
        let ng = result.qp.n_ghosts();
        let omega = result.qp.omega.iter().map(|z| [z.re, z.im]).collect();
        let mut lambda_qp = Vec::with_capacity(ng * ng);
        for a in 0..ng {
            for b in 0..ng {
                let z = result.qp.lambda_qp[(a, b)];
                lambda_qp.push([z.re, z.im]);
            }
        }
        Self {
            n_ghosts: ng,
            u: model.u,
            mu: model.mu,
            temperature: model.temperature,
            iteration: result.iterations,
            residual_omega: last.map_or(0.0, |s| s.residual_omega),
            residual_lambda: last.map_or(0.0, |s| s.residual_lambda),
            residual_trace: last.map_or(0.0, |s| s.residual_trace),
            omega,
            lambda_qp,
        }
    }

    pub fn qp_params(&self) -> Result<QpParams> {
        let ng = self.n_ghosts;
        if self.omega.len() != ng || self.lambda_qp.len() != ng * ng {
            return Err(GgutError::InvalidConfig(
                "checkpoint dimensions are inconsistent".into(),
            ));
        }
        let omega = CVector::from_iterator(
            ng,
            self.omega.iter().map(|p| Complex64::new(p[0], p[1])),
        );
        let lambda = CMatrix::from_fn(ng, ng, |a, b| {
            let p = self.lambda_qp[a * ng + b];
            Complex64::new(p[0], p[1])
        });
        QpParams::new(omega, lambda)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| GgutError::InvalidConfig(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| GgutError::InvalidConfig(format!("checkpoint parse: {e}")))
    }
}
