//! Pauli wire cutting: identity-channel decomposition, sub-circuit
//! construction around the cross-spin gate of a single-layer LUCJ circuit,
//! variant sampling, and tensor-product reassembly of partial determinants.
//!
//! The impurity-down wire is cut twice, before and after the cross-spin
//! density-density gate, which moves that gate into the up sub-circuit with
//! one ancilla qubit and leaves the down sub-circuit with a mid-circuit
//! measure/re-prepare pair. For subspace harvesting only the identities of
//! the sampled partial bitstrings matter, so all variants are pooled without
//! quasiprobability signs; the signed reconstruction is implemented
//! separately and verified exactly at the state-vector level.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{GgutError, Result};
use crate::fock::Determinant;
use crate::qsim::{
    apply_gate, sample, simulate, Circuit, GateOp, PauliBasis, PrepState, QubitLayout,
    StateVector,
};

/// Single-qubit preparations of the full 8-term decomposition; the last two
/// are inferred classically in the reduced scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutPreparation {
    Zero,
    One,
    Plus,
    PlusI,
    Minus,
    MinusI,
}

impl CutPreparation {
    /// Density matrix of the preparation.
    pub fn density(&self) -> nalgebra::Matrix2<Complex64> {
        let half = Complex64::new(0.5, 0.0);
        let (a, b, c, d) = match self {
            CutPreparation::Zero => (1.0, 0.0, 0.0, 0.0),
            CutPreparation::One => (0.0, 0.0, 0.0, 1.0),
            _ => {
                let off = match self {
                    CutPreparation::Plus => Complex64::new(1.0, 0.0),
                    CutPreparation::Minus => Complex64::new(-1.0, 0.0),
                    CutPreparation::PlusI => Complex64::new(0.0, 1.0),
                    CutPreparation::MinusI => Complex64::new(0.0, -1.0),
                    _ => unreachable!(),
                };
                return nalgebra::Matrix2::new(half, half * off.conj(), half * off, half);
            }
        };
        nalgebra::Matrix2::new(
            Complex64::new(a, 0.0),
            Complex64::new(b, 0.0),
            Complex64::new(c, 0.0),
            Complex64::new(d, 0.0),
        )
    }

    /// Amplitudes (c0, c1) of the pure preparation state.
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            CutPreparation::Zero => (Complex64::new(1.0, 0.0), Complex64::default()),
            CutPreparation::One => (Complex64::default(), Complex64::new(1.0, 0.0)),
            CutPreparation::Plus => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            CutPreparation::Minus => (Complex64::new(s, 0.0), Complex64::new(-s, 0.0)),
            CutPreparation::PlusI => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
            CutPreparation::MinusI => (Complex64::new(s, 0.0), Complex64::new(0.0, -s)),
        }
    }
}

/// Measurement observable of a decomposition term; `I` shares the Z basis
/// with `Z` but ignores the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutObservable {
    I,
    X,
    Y,
    Z,
}

impl CutObservable {
    pub fn basis(&self) -> PauliBasis {
        match self {
            CutObservable::I | CutObservable::Z => PauliBasis::Z,
            CutObservable::X => PauliBasis::X,
            CutObservable::Y => PauliBasis::Y,
        }
    }

    /// Eigenvalue attached to a measurement outcome bit.
    pub fn eigenvalue(&self, outcome: bool) -> f64 {
        match self {
            CutObservable::I => 1.0,
            _ => {
                if outcome {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn matrix(&self) -> nalgebra::Matrix2<Complex64> {
        let (a, b, c, d) = match self {
            CutObservable::I => ((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)),
            CutObservable::X => ((0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)),
            CutObservable::Y => ((0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)),
            CutObservable::Z => ((1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)),
        };
        nalgebra::Matrix2::new(
            Complex64::new(a.0, a.1),
            Complex64::new(b.0, b.1),
            Complex64::new(c.0, c.1),
            Complex64::new(d.0, d.1),
        )
    }
}

/// One term of ρ = ½ Σ c · Tr(ρO) · ρ_prep.
#[derive(Debug, Clone, Copy)]
pub struct CutTerm {
    pub coefficient: f64,
    pub observable: CutObservable,
    pub preparation: CutPreparation,
}

/// The 8-term Pauli decomposition of the single-qubit identity channel.
pub fn decompose_identity_channel() -> Vec<CutTerm> {
    use CutObservable as O;
    use CutPreparation as P;
    vec![
        CutTerm { coefficient: 1.0, observable: O::I, preparation: P::Zero },
        CutTerm { coefficient: 1.0, observable: O::I, preparation: P::One },
        CutTerm { coefficient: 1.0, observable: O::X, preparation: P::Plus },
        CutTerm { coefficient: -1.0, observable: O::X, preparation: P::Minus },
        CutTerm { coefficient: 1.0, observable: O::Y, preparation: P::PlusI },
        CutTerm { coefficient: -1.0, observable: O::Y, preparation: P::MinusI },
        CutTerm { coefficient: 1.0, observable: O::Z, preparation: P::Zero },
        CutTerm { coefficient: -1.0, observable: O::Z, preparation: P::One },
    ]
}

/// Rewrites a |−⟩ or |−i⟩ preparation as a signed combination of the four
/// physical preparations {|0⟩, |1⟩, |+⟩, |i⟩} (reduced O(4^k) scheme).
pub fn reduced_preparations(prep: CutPreparation) -> Vec<(f64, PrepState)> {
    match prep {
        CutPreparation::Zero => vec![(1.0, PrepState::Zero)],
        CutPreparation::One => vec![(1.0, PrepState::One)],
        CutPreparation::Plus => vec![(1.0, PrepState::Plus)],
        CutPreparation::PlusI => vec![(1.0, PrepState::PlusI)],
        CutPreparation::Minus => vec![
            (1.0, PrepState::Zero),
            (1.0, PrepState::One),
            (-1.0, PrepState::Plus),
        ],
        CutPreparation::MinusI => vec![
            (1.0, PrepState::Zero),
            (1.0, PrepState::One),
            (-1.0, PrepState::PlusI),
        ],
    }
}

fn basis_rotation_gates(state: &mut StateVector, q: usize, basis: PauliBasis) {
    match basis {
        PauliBasis::Z => {}
        PauliBasis::X => state.apply_h(q),
        PauliBasis::Y => {
            state.apply_sdg(q);
            state.apply_h(q);
        }
    }
}

/// Exact expectation of a diagonal observable after cutting one wire.
///
/// Splits the circuit at `cut_pos` on `cut_qubit`, runs every decomposition
/// term with exact branch arithmetic (no sampling) and recombines with the
/// quasiprobability signs. Agrees with the uncut expectation to machine
/// precision for any circuit.
pub fn cut_expectation_exact(
    circuit: &Circuit,
    initial_bits: u64,
    cut_qubit: usize,
    cut_pos: usize,
    observable: &dyn Fn(u64) -> f64,
) -> Result<f64> {
    if cut_qubit >= circuit.n_qubits || cut_pos > circuit.gates.len() {
        return Err(GgutError::InvalidInput("cut outside the circuit".into()));
    }
    let mut pre = StateVector::basis_state(circuit.n_qubits, initial_bits);
    for gate in &circuit.gates[..cut_pos] {
        apply_gate(&mut pre, gate)?;
    }

    let mut total = 0.0;
    for term in decompose_identity_channel() {
        // measure side: rotate to the term's basis, project both outcomes
        let mut rotated = pre.clone();
        basis_rotation_gates(&mut rotated, cut_qubit, term.observable.basis());
        let mut term_value = 0.0;
        for outcome in [false, true] {
            let mut branch = rotated.clone();
            let prob = branch.project_qubit(cut_qubit, outcome);
            if prob < 1e-300 {
                continue;
            }
            // prepare side: replace the cut qubit by the term's state
            let (c0, c1) = term.preparation.amplitudes();
            let m = 1usize << cut_qubit;
            let mut prepared = branch.clone();
            for amp in prepared.amps.iter_mut() {
                *amp = Complex64::default();
            }
            for (idx, amp) in branch.amps.iter().enumerate() {
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                let base = idx & !m;
                prepared.amps[base] += c0 * amp;
                prepared.amps[base | m] += c1 * amp;
            }
            for gate in &circuit.gates[cut_pos..] {
                apply_gate(&mut prepared, gate)?;
            }
            let mut exp_obs = 0.0;
            for (idx, amp) in prepared.amps.iter().enumerate() {
                let w = amp.norm_sqr();
                if w > 0.0 {
                    exp_obs += w * observable(idx as u64);
                }
            }
            // branch norm² already carries the outcome probability
            term_value += term.observable.eigenvalue(outcome) * exp_obs;
        }
        total += term.coefficient * term_value;
    }
    Ok(0.5 * total)
}

/// The two cuts around the cross-spin gate: variant classes pair the
/// preparation states with the effective measurement classes
/// [(I,|0⟩), (Z,|1⟩), (X,|+⟩), (Y,|i⟩)].
#[derive(Debug, Clone)]
pub struct WireCutPlan {
    /// Global index of the impurity-down qubit carrying both cuts.
    pub cut_qubit: usize,
    /// Position of the cross-spin gate in the gate list.
    pub gate_index: usize,
    pub n_cuts: usize,
}

pub const VARIANT_CLASSES: [(CutObservable, PrepState); 4] = [
    (CutObservable::I, PrepState::Zero),
    (CutObservable::Z, PrepState::One),
    (CutObservable::X, PrepState::Plus),
    (CutObservable::Y, PrepState::PlusI),
];

/// Number of sampled sub-circuit pairs for QSCI harvesting.
pub const N_VARIANT_PAIRS: usize = 16;

/// LUCJ circuit split into spin-resolved sub-circuits.
///
/// Up sub-circuit: n_orb register qubits (global up block) plus one ancilla
/// carrying the cross-spin gate. Down sub-circuit: n_orb register qubits with
/// a mid-circuit measure/re-prepare pair on the impurity-down wire (local
/// index 0). With no cross-spin coupling the circuits decouple exactly and no
/// cut channels are inserted.
#[derive(Debug, Clone)]
pub struct CutLucj {
    pub n_orb: usize,
    up_pre: Vec<GateOp>,
    up_post: Vec<GateOp>,
    dn_pre: Vec<GateOp>,
    dn_post: Vec<GateOp>,
    pub phi_updown: f64,
    pub up_init_bits: u64,
    pub dn_init_bits: u64,
}

impl CutLucj {
    pub fn is_decoupled(&self) -> bool {
        self.phi_updown == 0.0
    }

    pub fn up_qubits(&self) -> usize {
        if self.is_decoupled() {
            self.n_orb
        } else {
            self.n_orb + 1
        }
    }

    pub fn dn_qubits(&self) -> usize {
        self.n_orb
    }

    fn ancilla(&self) -> usize {
        self.n_orb
    }

    /// Up sub-circuit for one variant pair: ancilla prepared in the cut-1
    /// class state, cross-spin gate against the ancilla, measured in the
    /// cut-2 class basis (rotation appended so a Z sample reads it out).
    pub fn up_variant(&self, prep: PrepState, measure: CutObservable) -> Circuit {
        let mut c = Circuit::new(self.up_qubits());
        c.gates.extend(self.up_pre.iter().copied());
        if !self.is_decoupled() {
            c.gates.push(GateOp::Prepare {
                q: self.ancilla(),
                state: prep,
            });
            c.gates.push(GateOp::ZZ {
                a: self.n_orb - 1, // impurity-up qubit
                b: self.ancilla(),
                phi: self.phi_updown,
            });
        }
        c.gates.extend(self.up_post.iter().copied());
        if !self.is_decoupled() {
            c.gates.push(GateOp::MeasureBasis {
                q: self.ancilla(),
                basis: measure.basis(),
            });
        }
        c
    }

    /// Down sub-circuit for one variant pair: impurity-down wire measured in
    /// the cut-1 class basis mid-circuit, then re-prepared in the cut-2
    /// class state.
    pub fn dn_variant(&self, measure: CutObservable, prep: PrepState) -> Circuit {
        let mut c = Circuit::new(self.dn_qubits());
        c.gates.extend(self.dn_pre.iter().copied());
        if !self.is_decoupled() {
            c.gates.push(GateOp::MeasureBasis {
                q: 0,
                basis: measure.basis(),
            });
            c.gates.push(GateOp::Prepare { q: 0, state: prep });
        }
        c.gates.extend(self.dn_post.iter().copied());
        c
    }
}

/// Locates the cross-spin gate and splits a single-layer LUCJ circuit.
///
/// Circuits with several cross-spin gates (m > 1 layers) are rejected with
/// the number of wire cuts they would need.
pub fn build_subcircuits(circuit: &Circuit, layout: &QubitLayout, initial_bits: u64) -> Result<CutLucj> {
    let n_orb = layout.n_orb;
    let imp_up = layout.impurity_up();
    let imp_dn = layout.impurity_dn();
    let is_up = |q: usize| q < n_orb;

    let mut cross_positions = Vec::new();
    for (pos, gate) in circuit.gates.iter().enumerate() {
        if let GateOp::ZZ { a, b, .. } = gate {
            if is_up(*a) != is_up(*b) {
                cross_positions.push(pos);
            }
        }
    }
    if cross_positions.len() != 1 {
        return Err(GgutError::InvalidInput(format!(
            "expected one cross-spin gate, found {}; {} wire cuts would be required",
            cross_positions.len(),
            2 * cross_positions.len()
        )));
    }
    let gate_index = cross_positions[0];
    let phi_updown = match circuit.gates[gate_index] {
        GateOp::ZZ { a, b, phi } => {
            if !((a == imp_up && b == imp_dn) || (a == imp_dn && b == imp_up)) {
                return Err(GgutError::InvalidInput(
                    "cross-spin gate must act on the impurity pair".into(),
                ));
            }
            phi
        }
        _ => unreachable!(),
    };

    let mut parts = CutLucj {
        n_orb,
        up_pre: Vec::new(),
        up_post: Vec::new(),
        dn_pre: Vec::new(),
        dn_post: Vec::new(),
        phi_updown,
        up_init_bits: initial_bits & ((1 << n_orb) - 1),
        dn_init_bits: initial_bits >> n_orb,
    };
    let localize_dn = |g: &GateOp| -> GateOp {
        match *g {
            GateOp::XXplusYY { a, b, theta } => GateOp::XXplusYY {
                a: a - n_orb,
                b: b - n_orb,
                theta,
            },
            GateOp::PhaseZ { q, lambda } => GateOp::PhaseZ { q: q - n_orb, lambda },
            GateOp::ZZ { a, b, phi } => GateOp::ZZ {
                a: a - n_orb,
                b: b - n_orb,
                phi,
            },
            other => other,
        }
    };
    for (pos, gate) in circuit.gates.iter().enumerate() {
        if pos == gate_index {
            continue;
        }
        let touches_up = match *gate {
            GateOp::XXplusYY { a, b, .. } | GateOp::ZZ { a, b, .. } => {
                if is_up(a) != is_up(b) {
                    return Err(GgutError::InvalidInput(
                        "found a second spin-mixing gate".into(),
                    ));
                }
                is_up(a)
            }
            GateOp::PhaseZ { q, .. } | GateOp::Prepare { q, .. } | GateOp::MeasureBasis { q, .. } => {
                is_up(q)
            }
        };
        if touches_up {
            if pos < gate_index {
                parts.up_pre.push(*gate);
            } else {
                parts.up_post.push(*gate);
            }
        } else if pos < gate_index {
            parts.dn_pre.push(localize_dn(gate));
        } else {
            parts.dn_post.push(localize_dn(gate));
        }
    }
    Ok(parts)
}

/// Sampled counts of one sub-circuit variant. Register bitstrings and the
/// cut-channel outcome bit (mid-circuit measurement or ancilla readout) are
/// kept separately.
#[derive(Debug, Clone)]
pub struct SubCircuitSample {
    pub variant: (usize, usize),
    pub spin_up: bool,
    /// register bits → count, summed over cut outcomes
    pub counts: BTreeMap<u64, u64>,
    /// (cut outcome, register bits) → count
    pub counts_with_cut: BTreeMap<(u8, u64), u64>,
}

/// Simulates a sub-circuit that contains at most one `MeasureBasis`,
/// returning the exact joint distribution over (cut outcome, final bits).
fn subcircuit_distribution(circuit: &Circuit, initial_bits: u64) -> Result<Vec<(u8, StateVector, f64)>> {
    let measure_pos = circuit
        .gates
        .iter()
        .position(|g| matches!(g, GateOp::MeasureBasis { .. }));
    let mut state = StateVector::basis_state(circuit.n_qubits, initial_bits);
    let Some(pos) = measure_pos else {
        for gate in &circuit.gates {
            apply_gate(&mut state, gate)?;
        }
        return Ok(vec![(0, state, 1.0)]);
    };
    for gate in &circuit.gates[..pos] {
        apply_gate(&mut state, gate)?;
    }
    let (q, basis) = match circuit.gates[pos] {
        GateOp::MeasureBasis { q, basis } => (q, basis),
        _ => unreachable!(),
    };
    basis_rotation_gates(&mut state, q, basis);
    let mut branches = Vec::new();
    for outcome in [false, true] {
        let mut branch = state.clone();
        let prob = branch.project_qubit(q, outcome);
        if prob < 1e-300 {
            continue;
        }
        let scale = Complex64::new(1.0 / prob.sqrt(), 0.0);
        for a in &mut branch.amps {
            *a *= scale;
        }
        for gate in &circuit.gates[pos + 1..] {
            apply_gate(&mut branch, gate)?;
        }
        branches.push((outcome as u8, branch, prob));
    }
    Ok(branches)
}

/// Samples one variant circuit: exact branch probabilities for the cut
/// outcome, multinomial sampling of the final register bits.
fn sample_variant(
    circuit: &Circuit,
    initial_bits: u64,
    register_mask: u64,
    ancilla_bit: Option<usize>,
    shots: u64,
    seed: u64,
) -> Result<(BTreeMap<u64, u64>, BTreeMap<(u8, u64), u64>)> {
    let branches = subcircuit_distribution(circuit, initial_bits)?;
    // flatten to a joint weighted distribution over (cut bit, full bits)
    let mut joint: Vec<((u8, u64), f64)> = Vec::new();
    for (outcome, state, prob) in &branches {
        for (idx, amp) in state.amps.iter().enumerate() {
            let w = amp.norm_sqr() * prob;
            if w > 1e-300 {
                let bits = idx as u64;
                let cut_bit = match ancilla_bit {
                    Some(b) => (bits >> b & 1) as u8,
                    None => *outcome,
                };
                joint.push(((cut_bit, bits & register_mask), w));
            }
        }
    }
    // aggregate duplicates (different global states with equal register bits)
    let mut merged: BTreeMap<(u8, u64), f64> = BTreeMap::new();
    for (key, w) in joint {
        *merged.entry(key).or_insert(0.0) += w;
    }
    let keys: Vec<(u8, u64)> = merged.keys().copied().collect();
    let mut cumulative = Vec::with_capacity(keys.len());
    let mut acc = 0.0;
    for key in &keys {
        acc += merged[key];
        cumulative.push(acc);
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    let mut counts_with_cut = BTreeMap::new();
    for _ in 0..shots {
        let r = rng.random_range(0.0..acc);
        let pos = cumulative.partition_point(|&c| c <= r).min(keys.len() - 1);
        let (cut_bit, bits) = keys[pos];
        *counts.entry(bits).or_insert(0u64) += 1;
        *counts_with_cut.entry((cut_bit, bits)).or_insert(0u64) += 1;
    }
    Ok((counts, counts_with_cut))
}

/// Samples all 16 variant pairs with the shot budget split evenly between
/// the up and down executions of each pair (16 × shots_per_variant shots in
/// total). Per-variant seeds derive from the master seed.
pub fn sample_variants(
    parts: &CutLucj,
    shots_per_variant: u64,
    seed: u64,
) -> Result<Vec<SubCircuitSample>> {
    if shots_per_variant == 0 {
        return Err(GgutError::InvalidInput("need at least one shot".into()));
    }
    let register_mask = (1u64 << parts.n_orb) - 1;
    let mut samples = Vec::new();
    if parts.is_decoupled() {
        // identity cut: plain decoupled circuits, one variant each
        let shots_total = N_VARIANT_PAIRS as u64 * shots_per_variant / 2;
        let up = parts.up_variant(PrepState::Zero, CutObservable::I);
        let (counts, with_cut) =
            sample_variant(&up, parts.up_init_bits, register_mask, None, shots_total, seed ^ 1)?;
        samples.push(SubCircuitSample {
            variant: (0, 0),
            spin_up: true,
            counts,
            counts_with_cut: with_cut,
        });
        let dn = parts.dn_variant(CutObservable::I, PrepState::Zero);
        let (counts, with_cut) =
            sample_variant(&dn, parts.dn_init_bits, register_mask, None, shots_total, seed ^ 2)?;
        samples.push(SubCircuitSample {
            variant: (0, 0),
            spin_up: false,
            counts,
            counts_with_cut: with_cut,
        });
        return Ok(samples);
    }
    let up_shots = shots_per_variant / 2 + shots_per_variant % 2;
    let dn_shots = shots_per_variant / 2;
    for k in 0..4 {
        for l in 0..4 {
            let variant_seed = seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((k * 4 + l) as u64);
            let (_, prep_k) = VARIANT_CLASSES[k];
            let (obs_l, _) = VARIANT_CLASSES[l];
            let up = parts.up_variant(prep_k, obs_l);
            let (counts, with_cut) = sample_variant(
                &up,
                parts.up_init_bits,
                register_mask,
                Some(parts.n_orb),
                up_shots,
                variant_seed ^ 0xaaaa,
            )?;
            samples.push(SubCircuitSample {
                variant: (k, l),
                spin_up: true,
                counts,
                counts_with_cut: with_cut,
            });

            let (obs_k, _) = VARIANT_CLASSES[k];
            let (_, prep_l) = VARIANT_CLASSES[l];
            let dn = parts.dn_variant(obs_k, prep_l);
            let (counts, with_cut) = sample_variant(
                &dn,
                parts.dn_init_bits,
                register_mask,
                None,
                dn_shots,
                variant_seed ^ 0x5555,
            )?;
            samples.push(SubCircuitSample {
                variant: (k, l),
                spin_up: false,
                counts,
                counts_with_cut: with_cut,
            });
        }
    }
    Ok(samples)
}

/// Pools per-spin marginal frequencies over all variants and forms the
/// product-measure weight map over full determinants.
pub fn reassemble(
    samples: &[SubCircuitSample],
    layout: &QubitLayout,
) -> Result<Vec<(Determinant, f64)>> {
    let mut up_counts: BTreeMap<u64, f64> = BTreeMap::new();
    let mut dn_counts: BTreeMap<u64, f64> = BTreeMap::new();
    for s in samples {
        let target = if s.spin_up {
            &mut up_counts
        } else {
            &mut dn_counts
        };
        for (&bits, &c) in &s.counts {
            *target.entry(bits).or_insert(0.0) += c as f64;
        }
    }
    reassemble_from_marginals(&up_counts, &dn_counts, layout)
}

/// Product reassembly from explicit per-spin marginal weights.
pub fn reassemble_from_marginals(
    up_marginal: &BTreeMap<u64, f64>,
    dn_marginal: &BTreeMap<u64, f64>,
    layout: &QubitLayout,
) -> Result<Vec<(Determinant, f64)>> {
    let up_total: f64 = up_marginal.values().sum();
    let dn_total: f64 = dn_marginal.values().sum();
    if up_total <= 0.0 || dn_total <= 0.0 {
        return Err(GgutError::EmptyBasis);
    }
    let mut out = Vec::with_capacity(up_marginal.len() * dn_marginal.len());
    for (&up_bits, &wu) in up_marginal {
        for (&dn_bits, &wd) in dn_marginal {
            let full = up_bits | (dn_bits << layout.n_orb);
            let det = layout.bits_to_determinant(full);
            out.push((det, (wu / up_total) * (wd / dn_total)));
        }
    }
    Ok(out)
}
