use ggut::basisrot::to_star;
use ggut::cutting::*;
use ggut::fock::Determinant;
use ggut::model::build_generic_aim;
use ggut::qsim::*;
use std::collections::BTreeSet;

fn main() {
    let n_ghosts = 7; let n_orb = 8;
    let emb = build_generic_aim(n_ghosts, 1.0).unwrap();
    let model = to_star(&emb);
    for seed in [31u64, 404, 7, 99, 2024, 5150] {
        let params = LucjParams::random_small(n_orb, 1, seed);
        let circuit = build_lucj(n_ghosts, &params).unwrap();
        let layout = QubitLayout::new(n_orb);
        let bits = initial_state_bits(&model);
        let full = simulate(&circuit, &StateVector::basis_state(16, bits)).unwrap();
        let uncut_counts = sample(&full, 320_000, seed ^ 1);
        let uncut: BTreeSet<Determinant> = uncut_counts.keys().map(|&b| layout.bits_to_determinant(b)).collect();
        let parts = build_subcircuits(&circuit, &layout, bits).unwrap();
        let samples = sample_variants(&parts, 20_000, seed ^ 1).unwrap();
        let re = reassemble(&samples, &layout).unwrap();
        let cut: BTreeSet<Determinant> = re.iter().map(|(d, _)| *d).collect();
        let missing = uncut.iter().filter(|d| !cut.contains(d)).count();
        println!("seed {seed}: uncut {} cut {} missing {}", uncut.len(), cut.len(), missing);
    }
}
