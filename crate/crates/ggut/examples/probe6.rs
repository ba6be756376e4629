use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;
use num_complex::Complex64;

fn main() {
    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);
    let model = HubbardParams::half_filled(1.0, 0.002).unwrap();
    let mut solver = FciSolver::new(7);
    let alpha = 0.5;
    let mut qp = QpParams::initial_guess(3, 1.0).unwrap();
    for it in 0..260 {
        let rho_qp = compute_rho_qp(&qp, &grid, model.temperature).unwrap();
        let emb = compute_emb_params(&qp, &rho_qp, &grid, &model, Regularization::Clip).unwrap();
        let sol = solver.solve(&emb, it).unwrap();
        let raw = update_qp(&sol, &emb, Regularization::Clip).unwrap();
        let aligned = align_gauge(&raw, &qp);
        let dist = |p: &QpParams| {
            ((&p.omega - &qp.omega).norm_squared() + (&p.lambda_qp - &qp.lambda_qp).norm_squared()).sqrt()
        };
        if it % 20 == 0 || it > 250 {
            println!("it {it:3} raw {:9.3e} aligned {:9.3e} E {:.6}", dist(&raw), dist(&aligned), sol.energy);
        }
        let a = Complex64::new(alpha, 0.0);
        let b = Complex64::new(1.0 - alpha, 0.0);
        qp = QpParams {
            omega: (&raw.omega * a + &qp.omega * b).clone_owned(),
            lambda_qp: ggut::linalg::hermitize(&(&raw.lambda_qp * a + &qp.lambda_qp * b)),
        };
    }
}
