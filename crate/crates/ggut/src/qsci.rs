//! Sampled-CI impurity solver: harvests a determinant subspace from
//! computational-basis samples of the LUCJ trial state (plain or wire-cut),
//! post-selects on the particle-number sector, truncates by sampled weight
//! and diagonalizes the embedding Hamiltonian in the surviving subspace.

use std::collections::BTreeMap;

use crate::basisrot::{to_star, RotatedModel};
use crate::cutting::{build_subcircuits, reassemble, sample_variants};
use crate::error::{GgutError, Result};
use crate::fock::{Determinant, EmbSolution, SectorBasis};
use crate::qsim::{
    build_lucj, energy_expectation, initial_state_bits, sample, simulate, LucjParams,
    QubitLayout, StateVector,
};
use crate::sci::{solve_subspace, truncate_by_weight, CiSet, TruncationPolicy};
use crate::scloop::{EmbParams, ImpuritySolver};

/// Where the computational-basis samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    /// Full-register sampling of the simulated LUCJ state.
    Uncut,
    /// Wire-cut sub-circuits with tensor-product reassembly.
    Cut,
}

/// Harvesting controls.
#[derive(Debug, Clone, Copy)]
pub struct HarvestConfig {
    pub total_shots: u64,
    /// Basis truncation fraction p of |S_sym|.
    pub fraction: f64,
    pub source: SampleSource,
    /// SPSA budget (restarts, steps per restart).
    pub spsa_macro: usize,
    pub spsa_micro: usize,
}

impl HarvestConfig {
    pub fn new(total_shots: u64, fraction: f64, source: SampleSource) -> Result<Self> {
        if total_shots == 0 {
            return Err(GgutError::InvalidInput("need at least one shot".into()));
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(GgutError::InvalidInput(format!(
                "fraction {fraction} outside (0, 1]"
            )));
        }
        Ok(Self {
            total_shots,
            fraction,
            source,
            spsa_macro: 4,
            spsa_micro: 10,
        })
    }
}

/// Drops weights outside the (n_up, n_dn) sector and renormalizes.
pub fn postselect(
    weights: &[(Determinant, f64)],
    sector: (usize, usize),
) -> Result<Vec<(Determinant, f64)>> {
    let mut survivors: Vec<(Determinant, f64)> = weights
        .iter()
        .filter(|(det, w)| {
            *w > 0.0
                && det.up_bits.count_ones() as usize == sector.0
                && det.dn_bits.count_ones() as usize == sector.1
        })
        .copied()
        .collect();
    let total: f64 = survivors.iter().map(|(_, w)| w).sum();
    if survivors.is_empty() || total <= 0.0 {
        return Err(GgutError::EmptyBasis);
    }
    for (_, w) in &mut survivors {
        *w /= total;
    }
    Ok(survivors)
}

/// Converts sampled full-register bitstring counts into determinant weights.
pub fn counts_to_weights(
    counts: &BTreeMap<u64, u64>,
    layout: &QubitLayout,
) -> Vec<(Determinant, f64)> {
    let total: u64 = counts.values().sum();
    let mut merged: BTreeMap<Determinant, f64> = BTreeMap::new();
    for (&bits, &c) in counts {
        let det = layout.bits_to_determinant(bits);
        *merged.entry(det).or_insert(0.0) += c as f64 / total.max(1) as f64;
    }
    merged.into_iter().collect()
}

/// Ranks post-selected survivors by weight and truncates to ⌈p·|S_sym|⌉ (or
/// to the number of distinct survivors when fewer). Ties break by
/// determinant order in the sector basis.
pub fn harvest(
    survivors: &[(Determinant, f64)],
    fraction: f64,
    basis: &SectorBasis,
) -> Result<CiSet> {
    let mut dense = vec![0.0f64; basis.len()];
    let mut n_distinct = 0usize;
    for (det, w) in survivors {
        let idx = basis.index(*det).ok_or_else(|| {
            GgutError::InvalidInput("survivor outside the sector basis".into())
        })?;
        if dense[idx] == 0.0 && *w > 0.0 {
            n_distinct += 1;
        }
        dense[idx] += w;
    }
    if n_distinct == 0 {
        return Err(GgutError::EmptyBasis);
    }
    let cap = ((fraction * basis.len() as f64).ceil() as usize).max(1);
    let keep = cap.min(n_distinct);
    truncate_by_weight(&dense, TruncationPolicy::Count(keep))
}

/// One sampled-CI solve against a (star-basis) embedding model.
///
/// Pipeline: LUCJ (m = 1) → SPSA with a noiseless simulator objective →
/// sampling (plain or cut) → symmetry post-selection → weight-ranked
/// truncation → subspace diagonalization. Deterministic given the seed; the
/// optimized parameters are returned for warm starts.
pub fn qsci_solve(
    model: &RotatedModel,
    cfg: &HarvestConfig,
    start: Option<LucjParams>,
    seed: u64,
) -> Result<(EmbSolution, LucjParams, CiSet)> {
    let n_orb = model.n_orbitals();
    let n_ghosts = n_orb - 1;
    let layout = QubitLayout::new(n_orb);
    let init_bits = initial_state_bits(model);

    let params0 = match start {
        Some(p) if p.n_orb == n_orb => p,
        _ => LucjParams::random_small(n_orb, 1, seed),
    };
    let objective = |flat: &[f64]| -> f64 {
        let params = LucjParams::from_flat(n_orb, 1, flat).expect("shape fixed");
        let circuit = build_lucj(n_ghosts, &params).expect("valid ansatz");
        let state = simulate(&circuit, &StateVector::basis_state(layout.n_qubits(), init_bits))
            .expect("simulable");
        energy_expectation(&state, model).expect("hermitian model")
    };
    let spsa = crate::qsim::spsa_optimize(
        objective,
        &params0.flatten(),
        cfg.spsa_macro,
        cfg.spsa_micro,
        seed ^ 0x517cc1b727220a95,
    );
    let params = LucjParams::from_flat(n_orb, 1, &spsa.params)?;
    let circuit = build_lucj(n_ghosts, &params)?;

    let weights = match cfg.source {
        SampleSource::Uncut => {
            let state = simulate(
                &circuit,
                &StateVector::basis_state(layout.n_qubits(), init_bits),
            )?;
            let counts = sample(&state, cfg.total_shots, seed ^ 0x2545f4914f6cdd1d);
            counts_to_weights(&counts, &layout)
        }
        SampleSource::Cut => {
            let parts = build_subcircuits(&circuit, &layout, init_bits)?;
            let per_variant = (cfg.total_shots / crate::cutting::N_VARIANT_PAIRS as u64).max(1);
            let samples = sample_variants(&parts, per_variant, seed ^ 0x2545f4914f6cdd1d)?;
            reassemble(&samples, &layout)?
        }
    };

    let sector = (n_orb / 2, n_orb / 2);
    let survivors = postselect(&weights, sector)?;
    let basis = SectorBasis::half_filled(n_orb)?;
    let ci = harvest(&survivors, cfg.fraction, &basis)?;
    let solution = solve_subspace(model, &basis, &ci, seed)?;
    Ok((solution, params, ci))
}

/// Sampled-CI impurity solver for the self-consistent loop: rotates each
/// embedding model to the star basis, re-optimizes the ansatz warm-started
/// from the previous iteration, and reports density matrices back in the
/// original basis.
#[derive(Debug, Clone)]
pub struct QsciSolver {
    pub cfg: HarvestConfig,
    pub seed: u64,
    warm_params: Option<LucjParams>,
    /// Harvested-basis record of the most recent solve (for dumps).
    pub last_ci: Option<CiSet>,
}

impl QsciSolver {
    pub fn new(cfg: HarvestConfig, seed: u64) -> Self {
        Self {
            cfg,
            seed,
            warm_params: None,
            last_ci: None,
        }
    }
}

impl ImpuritySolver for QsciSolver {
    fn solve(&mut self, emb: &EmbParams, iteration: usize) -> Result<EmbSolution> {
        let star = to_star(emb);
        let seed = self
            .seed
            .wrapping_mul(0x100000001b3)
            .wrapping_add(iteration as u64);
        let (solution, params, ci) =
            qsci_solve(&star, &self.cfg, self.warm_params.take(), seed)?;
        self.warm_params = Some(params);
        self.last_ci = Some(ci);
        Ok(solution.into_original_basis(&star))
    }

    fn name(&self) -> &'static str {
        "qsci"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, ground_state};
    use crate::model::build_generic_aim;
    use approx::assert_relative_eq;

    fn star_model(n_ghosts: usize, u: f64) -> RotatedModel {
        to_star(&build_generic_aim(n_ghosts, u).unwrap())
    }

    #[test]
    fn noiseless_samples_survive_postselection() {
        let model = star_model(3, 1.0);
        let layout = QubitLayout::new(4);
        let params = LucjParams::random_small(4, 1, 17);
        let circuit = build_lucj(3, &params).unwrap();
        let state = simulate(
            &circuit,
            &StateVector::basis_state(8, initial_state_bits(&model)),
        )
        .unwrap();
        let counts = sample(&state, 20_000, 3);
        let weights = counts_to_weights(&counts, &layout);
        let survivors = postselect(&weights, (2, 2)).unwrap();
        assert_eq!(survivors.len(), weights.len());
        let total: f64 = survivors.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn corrupted_bitstrings_are_dropped() {
        let weights = vec![
            (Determinant::new(0b0011, 0b0101), 0.6),
            (Determinant::new(0b0111, 0b0101), 0.4), // three up particles
        ];
        let survivors = postselect(&weights, (2, 2)).unwrap();
        assert_eq!(survivors.len(), 1);
        assert_relative_eq!(survivors[0].1, 1.0);

        let all_bad = vec![(Determinant::new(0b1111, 0b0101), 1.0)];
        assert!(matches!(
            postselect(&all_bad, (2, 2)),
            Err(GgutError::EmptyBasis)
        ));
    }

    #[test]
    fn cut_survivors_sit_in_the_half_filled_sector() {
        let model = star_model(7, 1.0);
        let layout = QubitLayout::new(8);
        let params = LucjParams::random_small(8, 1, 23);
        let circuit = build_lucj(7, &params).unwrap();
        let parts = build_subcircuits(&circuit, &layout, initial_state_bits(&model)).unwrap();
        let samples = sample_variants(&parts, 2_000, 11).unwrap();
        let weights = reassemble(&samples, &layout).unwrap();
        let survivors = postselect(&weights, (4, 4)).unwrap();
        assert!(!survivors.is_empty());
        for (det, _) in survivors {
            assert_eq!(det.up_bits.count_ones(), 4);
            assert_eq!(det.dn_bits.count_ones(), 4);
        }
    }

    #[test]
    fn harvest_caps_at_fraction_of_sector() {
        // arithmetic of the largest tabulated sector: 1% of 853776
        let cap = (0.01f64 * 853_776.0).ceil() as usize;
        assert_eq!(cap, 8538);

        let basis = SectorBasis::half_filled(4).unwrap();
        let survivors: Vec<(Determinant, f64)> = basis
            .states()
            .iter()
            .map(|d| (*d, 1.0 / basis.len() as f64))
            .collect();
        let ci = harvest(&survivors, 1.0, &basis).unwrap();
        assert_eq!(ci.len(), basis.len());
        let ci = harvest(&survivors, 0.25, &basis).unwrap();
        assert_eq!(ci.len(), 9);

        // fewer distinct survivors than the cap
        let few = vec![
            (basis.determinant(0), 0.7),
            (basis.determinant(5), 0.3),
        ];
        let ci = harvest(&few, 0.5, &basis).unwrap();
        assert_eq!(ci.len(), 2);
    }

    #[test]
    fn exhaustive_survivors_at_full_fraction_reproduce_fci() {
        let model = star_model(3, 2.0);
        let basis = SectorBasis::half_filled(4).unwrap();
        let h = build_hamiltonian(&model, &basis).unwrap();
        let (e_fci, _) = ground_state(&h, 5).unwrap();

        let survivors: Vec<(Determinant, f64)> = basis
            .states()
            .iter()
            .enumerate()
            .map(|(i, d)| (*d, 1.0 / (i + 1) as f64))
            .collect();
        let survivors = postselect(&survivors, (2, 2)).unwrap();
        let ci = harvest(&survivors, 1.0, &basis).unwrap();
        let sol = solve_subspace(&model, &basis, &ci, 5).unwrap();
        assert_relative_eq!(sol.energy, e_fci, epsilon = 1e-9);
    }

    #[test]
    fn qsci_energy_is_variational_and_monotone_in_fraction() {
        let model = star_model(5, 2.0);
        let basis = SectorBasis::half_filled(6).unwrap();
        let h = build_hamiltonian(&model, &basis).unwrap();
        let (e_fci, _) = ground_state(&h, 5).unwrap();

        let mut energies = Vec::new();
        for fraction in [0.05, 0.2, 0.8] {
            let cfg = HarvestConfig::new(100_000, fraction, SampleSource::Uncut).unwrap();
            let (sol, _, ci) = qsci_solve(&model, &cfg, None, 42).unwrap();
            assert!(
                sol.energy >= e_fci - 1e-10,
                "variational bound violated: {} < {}",
                sol.energy,
                e_fci
            );
            energies.push((sol.energy, ci.len()));
        }
        // same seed → nested sampled bases → monotone energies
        assert!(energies[0].0 >= energies[1].0 - 1e-10);
        assert!(energies[1].0 >= energies[2].0 - 1e-10);
    }

    #[test]
    fn qsci_solve_is_deterministic() {
        let model = star_model(3, 1.0);
        let cfg = HarvestConfig::new(50_000, 0.5, SampleSource::Cut).unwrap();
        let (a, _, ci_a) = qsci_solve(&model, &cfg, None, 7).unwrap();
        let (b, _, ci_b) = qsci_solve(&model, &cfg, None, 7).unwrap();
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        assert_eq!(ci_a.indices, ci_b.indices);
    }

    #[test]
    fn strong_coupling_concentrates_the_sampled_basis() {
        // at large U the sampled distribution concentrates, so the distinct
        // survivors fall short of the truncation cap
        let model = star_model(7, 6.0);
        let cfg = HarvestConfig::new(320_000, 0.3, SampleSource::Uncut).unwrap();
        let (_, _, ci) = qsci_solve(&model, &cfg, None, 13).unwrap();
        let cap = (0.3 * 4900.0f64).ceil() as usize;
        assert!(
            ci.len() < cap,
            "expected fewer distinct survivors ({}) than the cap ({cap})",
            ci.len()
        );
    }
}
