//! State-vector circuit simulator, LUCJ trial state, SPSA optimization and
//! computational-basis sampling.
//!
//! Qubit layout for an `n_orb`-orbital embedding model: 2·n_orb qubits, the
//! up-spin block on qubits 0..n_orb (orbital order reversed so the impurity
//! sits at qubit n_orb−1), the down-spin block on qubits n_orb..2n_orb in
//! natural order (impurity at qubit n_orb). The two impurity qubits are
//! therefore adjacent at the block boundary, where the single cross-spin
//! density-density gate acts.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basisrot::RotatedModel;
use crate::error::{GgutError, Result};
use crate::fock::Determinant;

/// Single-qubit preparation states used by wire cutting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepState {
    Zero,
    One,
    Plus,
    PlusI,
}

impl PrepState {
    /// Amplitudes (c0, c1).
    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PrepState::Zero => (Complex64::new(1.0, 0.0), Complex64::default()),
            PrepState::One => (Complex64::default(), Complex64::new(1.0, 0.0)),
            PrepState::Plus => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            PrepState::PlusI => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
        }
    }
}

/// Measurement bases for mid-circuit wire-cut measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliBasis {
    Z,
    X,
    Y,
}

/// Circuit operations. The three unitary gates conserve particle number per
/// spin block; preparation and measurement appear only in wire-cut
/// sub-circuits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    /// exp(i·θ·(XᵢXⱼ + YᵢYⱼ)/2): mixes |01⟩,|10⟩ with cos θ / i·sin θ.
    XXplusYY { a: usize, b: usize, theta: f64 },
    /// exp(i·λ·n_q): phase on the occupied state of one qubit.
    PhaseZ { q: usize, lambda: f64 },
    /// exp(i·φ·Z_a Z_b).
    ZZ { a: usize, b: usize, phi: f64 },
    /// Resets a (disentangled) qubit to the given state.
    Prepare { q: usize, state: PrepState },
    /// Projective measurement in the given basis; handled by the wire-cut
    /// executor, rejected by plain simulation.
    MeasureBasis { q: usize, basis: PauliBasis },
}

/// Gate list over a fixed qubit count.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn count_gates(&self, pred: impl Fn(&GateOp) -> bool) -> usize {
        self.gates.iter().filter(|g| pred(g)).count()
    }
}

/// Dense complex amplitude vector over 2^n basis states; bit q of the index
/// is the occupation of qubit q.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn basis_state(n_qubits: usize, bits: u64) -> Self {
        let mut amps = vec![Complex64::default(); 1 << n_qubits];
        amps[bits as usize] = Complex64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
    }

    fn apply_xxplusyy(&mut self, a: usize, b: usize, theta: f64) {
        let (c, s) = (theta.cos(), theta.sin());
        let is = Complex64::new(0.0, s);
        let ma = 1usize << a;
        let mb = 1usize << b;
        for idx in 0..self.amps.len() {
            // visit each {01,10} pair once, from its `a`-occupied member
            if idx & ma != 0 && idx & mb == 0 {
                let partner = idx ^ ma ^ mb;
                let va = self.amps[idx];
                let vb = self.amps[partner];
                self.amps[idx] = c * va + is * vb;
                self.amps[partner] = is * va + c * vb;
            }
        }
    }

    fn apply_phasez(&mut self, q: usize, lambda: f64) {
        let phase = Complex64::from_polar(1.0, lambda);
        let m = 1usize << q;
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & m != 0 {
                *amp *= phase;
            }
        }
    }

    fn apply_zz(&mut self, a: usize, b: usize, phi: f64) {
        let plus = Complex64::from_polar(1.0, phi);
        let minus = Complex64::from_polar(1.0, -phi);
        let (ma, mb) = (1usize << a, 1usize << b);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            let za = idx & ma != 0;
            let zb = idx & mb != 0;
            *amp *= if za == zb { plus } else { minus };
        }
    }

    /// Hadamard, used to rotate X-basis measurements onto Z.
    pub(crate) fn apply_h(&mut self, q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = 1usize << q;
        for idx in 0..self.amps.len() {
            if idx & m == 0 {
                let partner = idx | m;
                let v0 = self.amps[idx];
                let v1 = self.amps[partner];
                self.amps[idx] = s * (v0 + v1);
                self.amps[partner] = s * (v0 - v1);
            }
        }
    }

    /// S†, used together with H to rotate Y-basis measurements onto Z.
    pub(crate) fn apply_sdg(&mut self, q: usize) {
        let m = 1usize << q;
        let mi = Complex64::new(0.0, -1.0);
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if idx & m != 0 {
                *amp *= mi;
            }
        }
    }

    /// Unnormalized projection of qubit `q` onto |outcome⟩; returns the
    /// branch probability.
    pub(crate) fn project_qubit(&mut self, q: usize, outcome: bool) -> f64 {
        let m = 1usize << q;
        let mut prob = 0.0;
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if (idx & m != 0) == outcome {
                prob += amp.norm_sqr();
            } else {
                *amp = Complex64::default();
            }
        }
        prob
    }

    /// Re-prepares a qubit that currently holds a definite computational
    /// value (after projection) in `state`.
    pub(crate) fn set_qubit(&mut self, q: usize, state: PrepState) {
        let (c0, c1) = state.amplitudes();
        let m = 1usize << q;
        let mut next = vec![Complex64::default(); self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let base = idx & !m;
            next[base] += c0 * amp;
            next[base | m] += c1 * amp;
        }
        self.amps = next;
    }

    /// |amplitude|² of every basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Applies the circuit's unitary gates in order. `Prepare` is allowed (the
/// qubit must hold a definite value, as at circuit start); mid-circuit
/// measurements are rejected here and belong to the wire-cut executor.
pub fn simulate(circuit: &Circuit, initial: &StateVector) -> Result<StateVector> {
    if initial.n_qubits != circuit.n_qubits {
        return Err(GgutError::DimensionMismatch {
            expected: circuit.n_qubits,
            got: initial.n_qubits,
        });
    }
    let mut state = initial.clone();
    for gate in &circuit.gates {
        apply_gate(&mut state, gate)?;
    }
    Ok(state)
}

pub(crate) fn apply_gate(state: &mut StateVector, gate: &GateOp) -> Result<()> {
    let n = state.n_qubits;
    let check = |q: usize| -> Result<()> {
        if q >= n {
            return Err(GgutError::InvalidInput(format!(
                "qubit {q} outside register of {n}"
            )));
        }
        Ok(())
    };
    match *gate {
        GateOp::XXplusYY { a, b, theta } => {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(GgutError::InvalidInput(
                    "two-qubit gate needs distinct qubits".into(),
                ));
            }
            state.apply_xxplusyy(a, b, theta);
        }
        GateOp::PhaseZ { q, lambda } => {
            check(q)?;
            state.apply_phasez(q, lambda);
        }
        GateOp::ZZ { a, b, phi } => {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(GgutError::InvalidInput(
                    "two-qubit gate needs distinct qubits".into(),
                ));
            }
            state.apply_zz(a, b, phi);
        }
        GateOp::Prepare { q, state: prep } => {
            check(q)?;
            state.set_qubit(q, prep);
        }
        GateOp::MeasureBasis { .. } => {
            return Err(GgutError::InvalidInput(
                "mid-circuit measurement outside the wire-cut executor".into(),
            ));
        }
    }
    Ok(())
}

/// Orbital ↔ qubit mapping for the two-block layout.
#[derive(Debug, Clone, Copy)]
pub struct QubitLayout {
    pub n_orb: usize,
}

impl QubitLayout {
    pub fn new(n_orb: usize) -> Self {
        Self { n_orb }
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_orb
    }

    /// Up-spin block is reversed so the impurity (orbital 0) lands on the
    /// innermost qubit of the block.
    pub fn up_qubit(&self, orbital: usize) -> usize {
        self.n_orb - 1 - orbital
    }

    pub fn dn_qubit(&self, orbital: usize) -> usize {
        self.n_orb + orbital
    }

    pub fn impurity_up(&self) -> usize {
        self.n_orb - 1
    }

    pub fn impurity_dn(&self) -> usize {
        self.n_orb
    }

    /// Spin-resolved occupation masks from a sampled bitstring.
    pub fn bits_to_determinant(&self, bits: u64) -> Determinant {
        let mut up = 0u32;
        let mut dn = 0u32;
        for orb in 0..self.n_orb {
            if bits >> self.up_qubit(orb) & 1 == 1 {
                up |= 1 << orb;
            }
            if bits >> self.dn_qubit(orb) & 1 == 1 {
                dn |= 1 << orb;
            }
        }
        Determinant::new(up, dn)
    }

    pub fn determinant_to_bits(&self, det: Determinant) -> u64 {
        let mut bits = 0u64;
        for orb in 0..self.n_orb {
            if det.up_bits >> orb & 1 == 1 {
                bits |= 1 << self.up_qubit(orb);
            }
            if det.dn_bits >> orb & 1 == 1 {
                bits |= 1 << self.dn_qubit(orb);
            }
        }
        bits
    }
}

/// Per-layer LUCJ parameters: orbital-rotation angles θ (brickwork over each
/// spin block) with phases λ, plus same-spin Jastrow angles φ and the single
/// cross-spin impurity term.
#[derive(Debug, Clone)]
pub struct LucjLayer {
    pub theta_up: Vec<f64>,
    pub theta_dn: Vec<f64>,
    pub lambda_up: Vec<f64>,
    pub lambda_dn: Vec<f64>,
    pub phi_up: Vec<f64>,
    pub phi_dn: Vec<f64>,
    pub phi_updown: f64,
}

/// Full parameter set for an m-layer ansatz on n_orb orbitals.
#[derive(Debug, Clone)]
pub struct LucjParams {
    pub n_orb: usize,
    pub layers: Vec<LucjLayer>,
}

impl LucjParams {
    pub fn n_theta(n_orb: usize) -> usize {
        n_orb * (n_orb - 1) / 2
    }

    /// Parameters per layer: θ and λ for both spins plus Jastrow angles.
    pub fn params_per_layer(n_orb: usize) -> usize {
        2 * Self::n_theta(n_orb) + 2 * n_orb + 2 * (n_orb - 1) + 1
    }

    /// Small seeded random angles in [−0.05, 0.05].
    pub fn random_small(n_orb: usize, n_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-0.05..0.05)).collect()
        };
        let layers = (0..n_layers)
            .map(|_| LucjLayer {
                theta_up: draw(Self::n_theta(n_orb)),
                theta_dn: draw(Self::n_theta(n_orb)),
                lambda_up: draw(n_orb),
                lambda_dn: draw(n_orb),
                phi_up: draw(n_orb - 1),
                phi_dn: draw(n_orb - 1),
                phi_updown: draw(1)[0],
            })
            .collect();
        Self { n_orb, layers }
    }

    pub fn zeros(n_orb: usize, n_layers: usize) -> Self {
        let layers = (0..n_layers)
            .map(|_| LucjLayer {
                theta_up: vec![0.0; Self::n_theta(n_orb)],
                theta_dn: vec![0.0; Self::n_theta(n_orb)],
                lambda_up: vec![0.0; n_orb],
                lambda_dn: vec![0.0; n_orb],
                phi_up: vec![0.0; n_orb - 1],
                phi_dn: vec![0.0; n_orb - 1],
                phi_updown: 0.0,
            })
            .collect();
        Self { n_orb, layers }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(&l.theta_up);
            out.extend(&l.theta_dn);
            out.extend(&l.lambda_up);
            out.extend(&l.lambda_dn);
            out.extend(&l.phi_up);
            out.extend(&l.phi_dn);
            out.push(l.phi_updown);
        }
        out
    }

    pub fn from_flat(n_orb: usize, n_layers: usize, flat: &[f64]) -> Result<Self> {
        let expected = n_layers * Self::params_per_layer(n_orb);
        if flat.len() != expected {
            return Err(GgutError::DimensionMismatch {
                expected,
                got: flat.len(),
            });
        }
        let nt = Self::n_theta(n_orb);
        let mut layers = Vec::with_capacity(n_layers);
        let mut it = flat.iter().copied();
        let mut take = |len: usize| -> Vec<f64> { (0..len).map(|_| it.next().unwrap()).collect() };
        for _ in 0..n_layers {
            layers.push(LucjLayer {
                theta_up: take(nt),
                theta_dn: take(nt),
                lambda_up: take(n_orb),
                lambda_dn: take(n_orb),
                phi_up: take(n_orb - 1),
                phi_dn: take(n_orb - 1),
                phi_updown: take(1)[0],
            });
        }
        Ok(Self { n_orb, layers })
    }
}

/// Brickwork pair schedule covering all n(n−1)/2 adjacent-index pairs of a
/// contiguous block, alternating even and odd sublayers.
fn brickwork_pairs(block: &[usize]) -> Vec<(usize, usize)> {
    let n = block.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for layer in 0..n {
        let mut p = layer % 2;
        while p + 1 < n {
            pairs.push((block[p], block[p + 1]));
            p += 2;
        }
    }
    debug_assert_eq!(pairs.len(), n * (n - 1) / 2);
    pairs
}

fn orbital_rotation_gates(block: &[usize], thetas: &[f64], lambdas: &[f64]) -> Vec<GateOp> {
    let mut gates = Vec::new();
    for (&(a, b), &theta) in brickwork_pairs(block).iter().zip(thetas) {
        gates.push(GateOp::XXplusYY { a, b, theta });
    }
    for (&q, &lambda) in block.iter().zip(lambdas) {
        gates.push(GateOp::PhaseZ { q, lambda });
    }
    gates
}

fn adjoint_gates(gates: &[GateOp]) -> Vec<GateOp> {
    gates
        .iter()
        .rev()
        .map(|g| match *g {
            GateOp::XXplusYY { a, b, theta } => GateOp::XXplusYY { a, b, theta: -theta },
            GateOp::PhaseZ { q, lambda } => GateOp::PhaseZ { q, lambda: -lambda },
            GateOp::ZZ { a, b, phi } => GateOp::ZZ { a, b, phi: -phi },
            other => other,
        })
        .collect()
}

/// LUCJ ansatz circuit: per layer, K̃† then the Jastrow phases (same-spin
/// chains and the single impurity cross-spin term) then K̃.
///
/// Ghost counts follow the embedding loop's convention and must be odd.
pub fn build_lucj(n_ghosts: usize, params: &LucjParams) -> Result<Circuit> {
    if n_ghosts % 2 == 0 {
        return Err(GgutError::EvenGhostCount(n_ghosts));
    }
    let n_orb = n_ghosts + 1;
    if params.n_orb != n_orb || params.layers.is_empty() {
        return Err(GgutError::InvalidInput(
            "parameter shape does not match the ansatz".into(),
        ));
    }
    let layout = QubitLayout::new(n_orb);
    let up_block: Vec<usize> = (0..n_orb).collect();
    let dn_block: Vec<usize> = (n_orb..2 * n_orb).collect();
    let mut circuit = Circuit::new(layout.n_qubits());
    for layer in &params.layers {
        let k_up = orbital_rotation_gates(&up_block, &layer.theta_up, &layer.lambda_up);
        let k_dn = orbital_rotation_gates(&dn_block, &layer.theta_dn, &layer.lambda_dn);
        circuit.gates.extend(adjoint_gates(&k_up));
        circuit.gates.extend(adjoint_gates(&k_dn));
        // same-spin Jastrow on adjacent qubit pairs
        for (w, &phi) in up_block.windows(2).zip(&layer.phi_up) {
            circuit.gates.push(GateOp::ZZ {
                a: w[0],
                b: w[1],
                phi,
            });
        }
        for (w, &phi) in dn_block.windows(2).zip(&layer.phi_dn) {
            circuit.gates.push(GateOp::ZZ {
                a: w[0],
                b: w[1],
                phi,
            });
        }
        circuit.gates.push(GateOp::ZZ {
            a: layout.impurity_up(),
            b: layout.impurity_dn(),
            phi: layer.phi_updown,
        });
        circuit.gates.extend(k_up);
        circuit.gates.extend(k_dn);
    }
    Ok(circuit)
}

/// Reference determinant occupying the lowest-diagonal orbitals of the model
/// per spin (half filling), as a qubit bitstring.
pub fn initial_state_bits(model: &RotatedModel) -> u64 {
    let n_orb = model.n_orbitals();
    let layout = QubitLayout::new(n_orb);
    let mut energies: Vec<(f64, usize)> = (0..n_orb)
        .map(|p| {
            let mut e = model.one_body[(p, p)].re;
            if p == 0 {
                e += model.mu;
            }
            (e, p)
        })
        .collect();
    energies.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut det = Determinant::new(0, 0);
    for &(_, orb) in energies.iter().take(n_orb / 2) {
        det.up_bits |= 1 << orb;
        det.dn_bits |= 1 << orb;
    }
    layout.determinant_to_bits(det)
}

/// ⟨Ψ|H|Ψ⟩ for the embedding model, evaluated directly on the 2^N vector
/// with Jordan–Wigner parities in qubit ordering.
pub fn energy_expectation(state: &StateVector, model: &RotatedModel) -> Result<f64> {
    let n_orb = model.n_orbitals();
    let layout = QubitLayout::new(n_orb);
    if state.n_qubits != layout.n_qubits() {
        return Err(GgutError::DimensionMismatch {
            expected: layout.n_qubits(),
            got: state.n_qubits,
        });
    }
    let dim = state.amps.len();
    let imp_up = 1usize << layout.impurity_up();
    let imp_dn = 1usize << layout.impurity_dn();

    // qubit index of (orbital, spin)
    let qubit = |orb: usize, spin: usize| -> usize {
        if spin == 0 {
            layout.up_qubit(orb)
        } else {
            layout.dn_qubit(orb)
        }
    };

    let mut hops = Vec::new();
    for spin in 0..2 {
        for p in 0..n_orb {
            for q in 0..n_orb {
                if p != q && model.one_body[(p, q)].norm() > 1e-14 {
                    hops.push((qubit(p, spin), qubit(q, spin), model.one_body[(p, q)]));
                }
            }
        }
    }
    let diag: Vec<f64> = (0..n_orb).map(|p| model.one_body[(p, p)].re).collect();

    let mut energy = Complex64::default();
    for (idx, amp) in state.amps.iter().enumerate() {
        let w = amp.norm_sqr();
        if w == 0.0 && amp.norm() == 0.0 {
            continue;
        }
        let mut e_diag = 0.0;
        if idx & imp_up != 0 && idx & imp_dn != 0 {
            e_diag += model.u;
        }
        e_diag +=
            model.mu * ((idx & imp_up != 0) as u64 + (idx & imp_dn != 0) as u64) as f64;
        for (orb, d) in diag.iter().enumerate() {
            let occ = (idx >> qubit(orb, 0) & 1) + (idx >> qubit(orb, 1) & 1);
            e_diag += d * occ as f64;
        }
        energy += Complex64::new(e_diag * w, 0.0);

        // hop terms: ⟨Ψ| c†_p c_q |idx⟩ with JW parity between the qubits
        for &(qp, qq, h) in &hops {
            if idx >> qq & 1 == 1 && idx >> qp & 1 == 0 {
                let target = idx ^ (1 << qp) ^ (1 << qq);
                let (lo, hi) = if qp < qq { (qp, qq) } else { (qq, qp) };
                let window = ((1usize << hi) - 1) & !((1usize << (lo + 1)) - 1);
                let sign = if (idx & window).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                if target < dim {
                    energy += state.amps[target].conj() * h * sign * amp;
                }
            }
        }
    }
    Ok(energy.re)
}

/// Multinomial sample of computational-basis outcomes.
///
/// Deterministic given the seed; keys are basis indices (qubit 0 = bit 0).
pub fn sample(state: &StateVector, n_shots: u64, seed: u64) -> BTreeMap<u64, u64> {
    let mut cumulative = Vec::with_capacity(state.amps.len());
    let mut acc = 0.0f64;
    for a in &state.amps {
        acc += a.norm_sqr();
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..n_shots {
        let r = rng.random_range(0.0..total);
        let pos = cumulative.partition_point(|&c| c <= r);
        *counts.entry(pos.min(state.amps.len() - 1) as u64).or_insert(0u64) += 1;
    }
    counts
}

/// Counts as a JSON object mapping bitstrings (qubit 0 rightmost) to counts.
pub fn counts_to_json(counts: &BTreeMap<u64, u64>, n_qubits: usize) -> String {
    let map: BTreeMap<String, u64> = counts
        .iter()
        .map(|(&bits, &c)| {
            let s: String = (0..n_qubits)
                .rev()
                .map(|q| if bits >> q & 1 == 1 { '1' } else { '0' })
                .collect();
            (s, c)
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("serializable")
}

/// Parses the JSON produced by [`counts_to_json`] (or supplied externally).
pub fn counts_from_json(text: &str) -> Result<BTreeMap<u64, u64>> {
    let map: BTreeMap<String, u64> = serde_json::from_str(text)
        .map_err(|e| GgutError::InvalidInput(format!("counts JSON: {e}")))?;
    let mut out = BTreeMap::new();
    for (key, count) in map {
        let mut bits = 0u64;
        for ch in key.chars() {
            bits <<= 1;
            match ch {
                '0' => {}
                '1' => bits |= 1,
                _ => {
                    return Err(GgutError::InvalidInput(format!(
                        "bitstring key `{key}` contains `{ch}`"
                    )))
                }
            }
        }
        *out.entry(bits).or_insert(0) += count;
    }
    Ok(out)
}

/// SPSA outcome: best-seen parameters and objective value.
#[derive(Debug, Clone)]
pub struct SpsaResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Simultaneous perturbation stochastic approximation.
///
/// Runs `macro_iters` restarts of `micro_iters` steps each; gain sequences
/// a_k = a/(k+1+A)^0.602 and c_k = c/(k+1)^0.101 reset at each restart, with
/// a = c = 0.1 and A = 2. Returns the best parameters over every objective
/// evaluation (probes included), never worse than the initial point.
pub fn spsa_optimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    init: &[f64],
    macro_iters: usize,
    micro_iters: usize,
    seed: u64,
) -> SpsaResult {
    const A_GAIN: f64 = 0.1;
    const C_GAIN: f64 = 0.1;
    const STABILITY: f64 = 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = init.len();
    let mut best = init.to_vec();
    let mut best_value = objective(init);
    let mut evaluations = 1usize;

    for _restart in 0..macro_iters {
        let mut x = best.clone();
        for k in 0..micro_iters {
            let a_k = A_GAIN / (k as f64 + 1.0 + STABILITY).powf(0.602);
            let c_k = C_GAIN / (k as f64 + 1.0).powf(0.101);
            let delta: Vec<f64> = (0..dim)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let plus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v + c_k * d).collect();
            let minus: Vec<f64> = x.iter().zip(&delta).map(|(v, d)| v - c_k * d).collect();
            let y_plus = objective(&plus);
            let y_minus = objective(&minus);
            evaluations += 2;
            if y_plus < best_value {
                best_value = y_plus;
                best = plus.clone();
            }
            if y_minus < best_value {
                best_value = y_minus;
                best = minus.clone();
            }
            let grad_scale = (y_plus - y_minus) / (2.0 * c_k);
            for (xi, d) in x.iter_mut().zip(&delta) {
                *xi -= a_k * grad_scale / d;
            }
            let y_x = objective(&x);
            evaluations += 1;
            if y_x < best_value {
                best_value = y_x;
                best = x.clone();
            }
        }
    }
    SpsaResult {
        params: best,
        value: best_value,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, SectorBasis};
    use crate::linalg::CMatrix;
    use crate::model::build_generic_aim;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pauli(which: char) -> CMatrix {
        let (a, b, c, d) = match which {
            'i' => (1.0.into(), 0.0.into(), 0.0.into(), 1.0.into()),
            'x' => (0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()),
            'y' => (
                0.0.into(),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0),
                0.0.into(),
            ),
            'z' => (1.0.into(), 0.0.into(), 0.0.into(), Complex64::new(-1.0, 0.0)),
            _ => unreachable!(),
        };
        CMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a.kronecker(b)
    }

    /// exp(iM) by Taylor series.
    fn expi(m: &CMatrix) -> CMatrix {
        let n = m.nrows();
        let im = m * Complex64::new(0.0, 1.0);
        let mut acc = CMatrix::identity(n, n);
        let mut term = CMatrix::identity(n, n);
        for k in 1..40 {
            term = &term * &im / Complex64::new(k as f64, 0.0);
            acc += &term;
        }
        acc
    }

    /// Dense unitary of one gate on the full register, built independently
    /// from Kronecker products and a series exponential.
    fn dense_gate(gate: &GateOp, n: usize) -> CMatrix {
        let mut op = |q: usize, m: CMatrix| -> CMatrix {
            // qubit 0 is the least-significant factor
            let mut full = CMatrix::identity(1, 1);
            for bit in (0..n).rev() {
                let factor = if bit == q { m.clone() } else { pauli('i') };
                full = kron(&full, &factor);
            }
            full
        };
        match *gate {
            GateOp::XXplusYY { a, b, theta } => {
                let xx = op(a, pauli('x')) * op(b, pauli('x'));
                let yy = op(a, pauli('y')) * op(b, pauli('y'));
                expi(&((xx + yy) * Complex64::new(theta / 2.0, 0.0)))
            }
            GateOp::PhaseZ { q, lambda } => {
                let nq = (CMatrix::identity(1 << n, 1 << n) - op(q, pauli('z')))
                    * Complex64::new(0.5, 0.0);
                expi(&(nq * Complex64::new(lambda, 0.0)))
            }
            GateOp::ZZ { a, b, phi } => {
                let zz = op(a, pauli('z')) * op(b, pauli('z'));
                expi(&(zz * Complex64::new(phi, 0.0)))
            }
            _ => unreachable!(),
        }
    }

    fn random_unitary_circuit(n: usize, gates: usize, seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Circuit::new(n);
        for _ in 0..gates {
            let kind = rng.random_range(0..3);
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n);
            while b == a {
                b = rng.random_range(0..n);
            }
            let angle = rng.random_range(-1.5..1.5);
            c.gates.push(match kind {
                0 => GateOp::XXplusYY { a, b, theta: angle },
                1 => GateOp::PhaseZ { q: a, lambda: angle },
                _ => GateOp::ZZ { a, b, phi: angle },
            });
        }
        c
    }

    #[test]
    fn xxplusyy_half_pi_swaps_with_i_phase() {
        let mut c = Circuit::new(2);
        c.gates.push(GateOp::XXplusYY {
            a: 0,
            b: 1,
            theta: std::f64::consts::FRAC_PI_2,
        });
        // |01⟩ in qubit convention: qubit 0 occupied
        let out = simulate(&c, &StateVector::basis_state(2, 0b01)).unwrap();
        assert!(out.amps[0b01].norm() < 1e-12);
        assert_relative_eq!(out.amps[0b10].im, 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.amps[0b10].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn simulate_matches_dense_unitary_on_small_registers() {
        for n in [2usize, 4, 6] {
            let circuit = random_unitary_circuit(n, 25, 1000 + n as u64);
            let mut dense = CMatrix::identity(1 << n, 1 << n);
            for g in &circuit.gates {
                dense = dense_gate(g, n) * dense;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut init = StateVector::basis_state(n, 0);
            for a in &mut init.amps {
                *a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            init.normalize();
            let fast = simulate(&circuit, &init).unwrap();
            let col = nalgebra::DVector::from_iterator(1 << n, init.amps.iter().copied());
            let expect = dense * col;
            let mut dev = 0.0f64;
            for (i, amp) in fast.amps.iter().enumerate() {
                dev = dev.max((amp - expect[i]).norm());
            }
            assert!(dev < 1e-10, "n = {n}: deviation {dev}");
        }
    }

    #[test]
    fn diagonal_gates_preserve_probabilities() {
        let mut c = Circuit::new(3);
        c.gates.push(GateOp::PhaseZ { q: 0, lambda: 0.4 });
        c.gates.push(GateOp::ZZ { a: 0, b: 2, phi: -0.9 });
        let mut init = StateVector::basis_state(3, 0);
        for (i, a) in init.amps.iter_mut().enumerate() {
            *a = Complex64::new(1.0 + i as f64, 0.5);
        }
        init.normalize();
        let out = simulate(&c, &init).unwrap();
        for (pa, pb) in init.probabilities().iter().zip(out.probabilities()) {
            assert_relative_eq!(*pa, pb, epsilon = 1e-14);
        }
    }

    #[test]
    fn norm_preserved_over_many_random_gates() {
        let circuit = random_unitary_circuit(6, 1000, 5);
        let mut init = StateVector::basis_state(6, 0b010110);
        let out = simulate(&circuit, &mut init).unwrap();
        assert_relative_eq!(out.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lucj_gate_counts_match_hand_enumeration() {
        // N_g = 1: n_orb = 2, 4 qubits. Per K̃: 2 XX+YY (one per spin) and
        // 4 phases; per layer: K̃† and K̃ plus 2 same-spin ZZ and 1 cross-spin.
        let params = LucjParams::random_small(2, 1, 3);
        let circuit = build_lucj(1, &params).unwrap();
        let xx = circuit.count_gates(|g| matches!(g, GateOp::XXplusYY { .. }));
        let ph = circuit.count_gates(|g| matches!(g, GateOp::PhaseZ { .. }));
        let zz = circuit.count_gates(|g| matches!(g, GateOp::ZZ { .. }));
        assert_eq!(xx, 4);
        assert_eq!(ph, 8);
        assert_eq!(zz, 3);

        // N/2(N/2−1) = 56 entangling rotations per K̃ on N = 16 qubits,
        // applied twice per layer (K̃† and K̃)
        let params = LucjParams::random_small(8, 1, 4);
        let circuit = build_lucj(7, &params).unwrap();
        let xx = circuit.count_gates(|g| matches!(g, GateOp::XXplusYY { .. }));
        assert_eq!(xx, 112);
    }

    #[test]
    fn zero_angles_act_as_identity() {
        let emb = build_generic_aim(3, 2.0).unwrap();
        let model = crate::basisrot::to_star(&emb);
        let params = LucjParams::zeros(4, 1);
        let circuit = build_lucj(3, &params).unwrap();
        let bits = initial_state_bits(&model);
        let out = simulate(&circuit, &StateVector::basis_state(8, bits)).unwrap();
        assert_relative_eq!(out.amps[bits as usize].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lucj_conserves_particle_numbers() {
        let params = LucjParams::random_small(4, 2, 11);
        let circuit = build_lucj(3, &params).unwrap();
        let layout = QubitLayout::new(4);
        let emb = build_generic_aim(3, 1.0).unwrap();
        let model = crate::basisrot::to_star(&emb);
        let bits = initial_state_bits(&model);
        let out = simulate(&circuit, &StateVector::basis_state(8, bits)).unwrap();
        for (idx, amp) in out.amps.iter().enumerate() {
            if amp.norm() > 1e-12 {
                let det = layout.bits_to_determinant(idx as u64);
                assert_eq!(det.up_bits.count_ones(), 2);
                assert_eq!(det.dn_bits.count_ones(), 2);
            }
        }
    }

    #[test]
    fn energy_matches_fock_quadratic_form() {
        let emb = build_generic_aim(3, 2.5).unwrap();
        let model = crate::basisrot::to_star(&emb);
        let basis = SectorBasis::half_filled(4).unwrap();
        let layout = QubitLayout::new(4);
        let h = build_hamiltonian(&model, &basis).unwrap();

        // random sector state embedded into the full register
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut amps: Vec<Complex64> = (0..basis.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        let mut state = StateVector::basis_state(8, 0);
        state.amps[0] = Complex64::default();
        for (i, det) in basis.states().iter().enumerate() {
            state.amps[layout.determinant_to_bits(*det) as usize] = amps[i];
        }

        let direct = energy_expectation(&state, &model).unwrap();
        let mut hv = vec![Complex64::default(); basis.len()];
        h.matvec(&amps, &mut hv);
        let quad: Complex64 = amps.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
        assert_relative_eq!(direct, quad.re, epsilon = 1e-10);
        assert!(quad.im.abs() < 1e-10);
    }

    #[test]
    fn doubly_occupied_impurity_energy() {
        // impurity doubly occupied, no hybridization: E = U + 2μ
        let ng = 1;
        let delta = crate::linalg::CVector::zeros(ng);
        let lambda = CMatrix::zeros(ng, ng);
        let emb = crate::scloop::EmbParams::new(delta, lambda, 3.0, -0.7).unwrap();
        let model = RotatedModel::from_emb(&emb);
        let layout = QubitLayout::new(2);
        let det = Determinant::new(0b01, 0b01);
        let state = StateVector::basis_state(4, layout.determinant_to_bits(det));
        let e = energy_expectation(&state, &model).unwrap();
        assert_relative_eq!(e, 3.0 - 1.4, epsilon = 1e-12);
    }

    #[test]
    fn spsa_minimizes_quadratic_bowl() {
        let objective = |x: &[f64]| x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>();
        let result = spsa_optimize(objective, &[1.0, -0.5, 0.8, 0.0], 4, 10, 9);
        assert!(result.value < 1e-2, "best value {}", result.value);
        assert!(result.evaluations >= 80);
    }

    #[test]
    fn spsa_constant_objective_keeps_initial() {
        let result = spsa_optimize(|_| 1.5, &[0.2, 0.4], 2, 5, 1);
        assert_eq!(result.params, vec![0.2, 0.4]);
        assert_eq!(result.value, 1.5);
    }

    #[test]
    fn sampling_statistics() {
        // basis state: every shot lands on it
        let state = StateVector::basis_state(3, 0b101);
        let counts = sample(&state, 1000, 4);
        assert_eq!(counts.len(), 1);
        assert_eq!(counts[&0b101], 1000);

        // uniform two-qubit superposition: counts within 3σ of n/4
        let mut uniform = StateVector::basis_state(2, 0);
        uniform.amps = vec![Complex64::new(0.5, 0.0); 4];
        let n = 400_000u64;
        let counts = sample(&uniform, n, 12345);
        let expected = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for k in 0..4u64 {
            let c = counts[&k] as f64;
            assert!(
                (c - expected).abs() < 3.0 * sigma,
                "outcome {k}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn sampled_lucj_bitstrings_stay_in_sector() {
        let emb = build_generic_aim(7, 1.0).unwrap();
        let model = crate::basisrot::to_star(&emb);
        let params = LucjParams::random_small(8, 1, 2);
        let circuit = build_lucj(7, &params).unwrap();
        let out = simulate(
            &circuit,
            &StateVector::basis_state(16, initial_state_bits(&model)),
        )
        .unwrap();
        let layout = QubitLayout::new(8);
        let counts = sample(&out, 5000, 8);
        for (&bits, _) in &counts {
            let det = layout.bits_to_determinant(bits);
            assert_eq!(det.up_bits.count_ones(), 4);
            assert_eq!(det.dn_bits.count_ones(), 4);
        }
    }

    #[test]
    fn counts_json_roundtrip() {
        let mut counts = BTreeMap::new();
        counts.insert(0b0110u64, 42u64);
        counts.insert(0b0001u64, 8u64);
        let json = counts_to_json(&counts, 4);
        assert!(json.contains("\"0110\""));
        assert!(json.contains("\"0001\""));
        let back = counts_from_json(&json).unwrap();
        assert_eq!(back, counts);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn random_lucj_circuits_conserve_number(seed in 0u64..500) {
            let params = LucjParams::random_small(4, 1, seed);
            let circuit = build_lucj(3, &params).unwrap();
            let layout = QubitLayout::new(4);
            let init = Determinant::new(0b0011, 0b0101);
            let out = simulate(
                &circuit,
                &StateVector::basis_state(8, layout.determinant_to_bits(init)),
            )
            .unwrap();
            for (idx, amp) in out.amps.iter().enumerate() {
                if amp.norm() > 1e-10 {
                    let det = layout.bits_to_determinant(idx as u64);
                    prop_assert_eq!(det.up_bits.count_ones(), 2);
                    prop_assert_eq!(det.dn_bits.count_ones(), 2);
                }
            }
        }
    }
}
