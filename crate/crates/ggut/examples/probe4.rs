use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;
use ggut::spectral::*;
use num_complex::Complex64;

fn report(tag: &str, qp: &QpParams, grid: &ggut::model::EnergyGrid, e: f64) {
    let freq = FrequencyGrid::uniform(-5.0, 5.0, 0.01, 0.01).unwrap();
    let curve = dos_from_qp(qp, grid, &freq);
    println!("== {tag}: E_emb {:.6} W {:.6} sumrule_dev(-5..5) {:.3e}", e, qp.spectral_weight(), sum_rule(&curve, qp));
    println!("   lam eigs {:?}", ggut::linalg::eigh(&qp.lambda_qp).0.iter().map(|v| (v*1e3).round()/1e3).collect::<Vec<_>>());
    // coarse DOS profile
    let mut prof = String::new();
    for k in (0..curve.omegas.len()).step_by(25) {
        prof.push_str(&format!("{:.1}:{:.3} ", curve.omegas[k], curve.values[k]));
    }
    println!("   A: {prof}");
}

fn main() {
    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);
    let model = HubbardParams::half_filled(1.0, 0.002).unwrap();

    // raw (unaligned) damped iteration, alpha = 0.3
    let mut solver = FciSolver::new(7);
    let mut qp = QpParams::initial_guess(3, 1.0).unwrap();
    let mut e_last = 0.0;
    for it in 0..400 {
        let rho_qp = compute_rho_qp(&qp, &grid, model.temperature).unwrap();
        let emb = compute_emb_params(&qp, &rho_qp, &grid, &model, Regularization::Clip).unwrap();
        let sol = solver.solve(&emb, it).unwrap();
        let prop = update_qp(&sol, &emb, Regularization::Clip).unwrap();
        e_last = sol.energy;
        let a = Complex64::new(0.3, 0.0);
        let b = Complex64::new(0.7, 0.0);
        qp = QpParams {
            omega: (&prop.omega * a + &qp.omega * b).clone_owned(),
            lambda_qp: ggut::linalg::hermitize(&(&prop.lambda_qp * a + &qp.lambda_qp * b)),
        };
    }
    report("raw alpha=0.3 (400 its)", &qp, &grid, e_last);

    // aligned run_loop
    let mut solver = FciSolver::new(7);
    let cfg = LoopConfig::default();
    let r = run_loop(&model, &lattice, &grid, &mut solver, 3, &cfg).unwrap();
    report("aligned run_loop", &r.qp, &grid, r.solution.energy);
}
