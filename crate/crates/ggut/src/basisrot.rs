//! Single-particle rotations of the embedding model.
//!
//! All rotations act on the quadratic part only and leave the impurity
//! orbital untouched, so the interaction U n₀↑n₀↓ keeps its form. The chain
//! form tridiagonalizes the bath seeded by the hybridization vector; the star
//! form diagonalizes the bath so each ghost couples only to the impurity;
//! partial rotations diagonalize the last `r` chain orbitals.

use num_complex::Complex64;

use crate::error::{GgutError, Result};
use crate::linalg::{eigh, hermitize, CMatrix};
use crate::scloop::EmbParams;

/// Which single-particle basis the model is expressed in. The conventional
/// index (0 = original, 1 = chain, r = partial, N_g = star) matches the
/// number of rotated ghost orbitals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationKind {
    Original,
    Chain,
    Partial(usize),
    Star,
}

impl RotationKind {
    pub fn index(&self, n_ghosts: usize) -> usize {
        match self {
            RotationKind::Original => 0,
            RotationKind::Chain => 1,
            RotationKind::Partial(r) => *r,
            RotationKind::Star => n_ghosts,
        }
    }

    pub fn label(&self) -> String {
        match self {
            RotationKind::Original => "original".into(),
            RotationKind::Chain => "chain".into(),
            RotationKind::Partial(r) => format!("partial{r}"),
            RotationKind::Star => "star".into(),
        }
    }
}

/// Embedding model with a general quadratic part, tracked together with the
/// unitary that produced it. `one_body[(p,q)]` is the coefficient of d†_p d_q
/// with the impurity at index 0; μ and U are stored separately.
#[derive(Debug, Clone)]
pub struct RotatedModel {
    pub one_body: CMatrix,
    pub u: f64,
    pub mu: f64,
    /// Columns are the new modes in the original basis: h_rot = V† h V.
    pub rotation: CMatrix,
    pub kind: RotationKind,
}

impl RotatedModel {
    /// The unrotated embedding model (identity rotation).
    pub fn from_emb(emb: &EmbParams) -> Self {
        let n = emb.n_orbitals();
        Self {
            one_body: emb.one_body(),
            u: emb.u,
            mu: emb.mu,
            rotation: CMatrix::identity(n, n),
            kind: RotationKind::Original,
        }
    }

    pub fn n_orbitals(&self) -> usize {
        self.one_body.nrows()
    }

    pub fn n_ghosts(&self) -> usize {
        self.n_orbitals() - 1
    }

    /// |h_rot[(0,a)]| for ghost orbitals a, in stored order.
    pub fn hybridization_magnitudes(&self) -> Vec<f64> {
        (1..self.n_orbitals())
            .map(|a| self.one_body[(0, a)].norm())
            .collect()
    }

    /// Maps a one-particle density matrix expressed in this rotated basis
    /// back to the original basis: M = V̄ M_rot Vᵀ.
    pub fn rdm_to_original(&self, m_rot: &CMatrix) -> CMatrix {
        hermitize(&(self.rotation.conjugate() * m_rot * self.rotation.transpose()))
    }

    /// Largest deviation of V from unitarity.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.n_orbitals();
        (self.rotation.adjoint() * &self.rotation - CMatrix::identity(n, n)).norm()
    }
}

/// Applies V (impurity-preserving) to an embedding one-body matrix.
fn rotated(emb: &EmbParams, v: CMatrix, kind: RotationKind) -> RotatedModel {
    let h = emb.one_body();
    let one_body = hermitize(&(v.adjoint() * &h * &v));
    RotatedModel {
        one_body,
        u: emb.u,
        mu: emb.mu,
        rotation: v,
        kind,
    }
}

/// Householder tridiagonalization of a Hermitian matrix, preserving index 0.
///
/// Returns V with V† h V tridiagonal and real nonnegative off-diagonals.
fn tridiagonalize(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let mut a = h.clone();
    let mut v_total = CMatrix::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        // column below the subdiagonal
        let m = n - k - 1;
        let mut x = vec![Complex64::default(); m];
        for i in 0..m {
            x[i] = a[(k + 1 + i, k)];
        }
        let norm_x: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_x < 1e-300 {
            continue;
        }
        let tail: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if tail < 1e-14 * norm_x.max(1.0) {
            continue; // already in form for this column
        }
        let phase = if x[0].norm() > 1e-300 {
            x[0] / x[0].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * norm_x;
        let mut v = x;
        v[0] -= alpha;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= vnorm;
        }
        // P = I - 2 v v† embedded at rows/cols k+1..
        let mut p = CMatrix::identity(n, n);
        for i in 0..m {
            for j in 0..m {
                p[(k + 1 + i, k + 1 + j)] -= 2.0 * v[i] * v[j].conj();
            }
        }
        a = &p * a * &p;
        v_total *= &p;
    }
    // fix phases so subdiagonal entries come out real nonnegative:
    // (D† a D)[k,k-1] = d̄_k a[k,k-1] d_{k-1} with d_0 = 1
    let mut d = CMatrix::identity(n, n);
    let mut prev = Complex64::new(1.0, 0.0);
    for k in 1..n {
        let sub = a[(k, k - 1)] * prev;
        let cur = if sub.norm() > 1e-300 {
            sub / sub.norm()
        } else {
            prev
        };
        d[(k, k)] = cur;
        prev = cur;
    }
    v_total * d
}

/// Rotation to the chain (tridiagonal) basis.
pub fn to_chain(emb: &EmbParams) -> RotatedModel {
    let v = tridiagonalize(&emb.one_body());
    rotated(emb, v, RotationKind::Chain)
}

/// Orders and phase-fixes rotated bath columns: descending coupling
/// magnitude to `anchor_row`, ties by ascending eigenvalue; each column's
/// phase chosen so its anchor coupling is real nonnegative.
fn canonicalize_bath_columns(
    h: &CMatrix,
    bath_vecs: &mut CMatrix,
    bath_vals: &[f64],
    anchor_row: usize,
    bath_offset: usize,
) -> Vec<usize> {
    let nb = bath_vals.len();
    let mut couplings = Vec::with_capacity(nb);
    for a in 0..nb {
        // coupling of rotated bath orbital a to the anchor orbital
        let mut c = Complex64::default();
        for s in 0..nb {
            c += h[(anchor_row, bath_offset + s)] * bath_vecs[(s, a)];
        }
        couplings.push(c);
    }
    for a in 0..nb {
        let c = couplings[a];
        let phase = if c.norm() > 1e-12 {
            c / c.norm()
        } else {
            // zero coupling: anchor the largest component instead
            let mut best = 0;
            for s in 1..nb {
                if bath_vecs[(s, a)].norm() > bath_vecs[(best, a)].norm() {
                    best = s;
                }
            }
            let z = bath_vecs[(best, a)];
            if z.norm() > 1e-300 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        };
        for s in 0..nb {
            bath_vecs[(s, a)] *= phase.conj();
        }
        couplings[a] *= phase.conj();
    }
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| {
        couplings[b]
            .norm()
            .total_cmp(&couplings[a].norm())
            .then(bath_vals[a].total_cmp(&bath_vals[b]))
    });
    order
}

/// Rotation to the star basis: bath block diagonal, every ghost coupled only
/// to the impurity. Output columns are sorted by descending |Δrot|.
pub fn to_star(emb: &EmbParams) -> RotatedModel {
    let h = emb.one_body();
    let n = emb.n_orbitals();
    let ng = n - 1;
    let bath = h.view((1, 1), (ng, ng)).into_owned();
    let (vals, mut vecs) = eigh(&bath);
    let order = canonicalize_bath_columns(&h, &mut vecs, &vals, 0, 1);
    let mut v = CMatrix::identity(n, n);
    for (slot, &col) in order.iter().enumerate() {
        for s in 0..ng {
            v[(1 + s, 1 + slot)] = vecs[(s, col)];
        }
    }
    rotated(emb, v, RotationKind::Star)
}

/// Chain basis first, then diagonalization of the last `r` chain orbitals.
/// Requires 2 ≤ r ≤ N_g − 1; `r = N_g` is the star configuration.
pub fn to_partial(emb: &EmbParams, r: usize) -> Result<RotatedModel> {
    let ng = emb.n_ghosts();
    if r < 2 || r + 1 > ng {
        return Err(GgutError::InvalidInput(format!(
            "partial rotation count {r} outside 2..={}",
            ng.saturating_sub(1)
        )));
    }
    Ok(partial_rotation(emb, r))
}

fn partial_rotation(emb: &EmbParams, r: usize) -> RotatedModel {
    let chain = to_chain(emb);
    let n = chain.n_orbitals();
    let h = &chain.one_body;
    let offset = n - r;
    let tail = h.view((offset, offset), (r, r)).into_owned();
    let (vals, mut vecs) = eigh(&tail);
    let order = canonicalize_bath_columns(h, &mut vecs, &vals, offset - 1, offset);
    let mut v_tail = CMatrix::identity(n, n);
    for (slot, &col) in order.iter().enumerate() {
        for s in 0..r {
            v_tail[(offset + s, offset + slot)] = vecs[(s, col)];
        }
    }
    let v = &chain.rotation * &v_tail;
    let one_body = hermitize(&(v_tail.adjoint() * h * &v_tail));
    RotatedModel {
        one_body,
        u: emb.u,
        mu: emb.mu,
        rotation: v,
        kind: if r == emb.n_ghosts() {
            RotationKind::Star
        } else {
            RotationKind::Partial(r)
        },
    }
}

/// Dispatch by rotation kind.
pub fn rotate(emb: &EmbParams, kind: RotationKind) -> Result<RotatedModel> {
    match kind {
        RotationKind::Original => Ok(RotatedModel::from_emb(emb)),
        RotationKind::Chain => Ok(to_chain(emb)),
        RotationKind::Partial(r) => to_partial(emb, r),
        RotationKind::Star => Ok(to_star(emb)),
    }
}

/// All rotation kinds for an `n_ghosts`-sized model, by conventional index.
pub fn all_kinds(n_ghosts: usize) -> Vec<RotationKind> {
    let mut kinds = vec![RotationKind::Original];
    if n_ghosts >= 1 {
        kinds.push(RotationKind::Chain);
    }
    for r in 2..n_ghosts {
        kinds.push(RotationKind::Partial(r));
    }
    if n_ghosts >= 2 {
        kinds.push(RotationKind::Star);
    }
    kinds
}
