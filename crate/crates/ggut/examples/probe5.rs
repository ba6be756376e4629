use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;
use num_complex::Complex64;

fn main() {
    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);
    let fine = discretize_semicircle(&LatticeSpec::new(1.0, 8000).unwrap());
    let model = HubbardParams::half_filled(1.0, 0.002).unwrap();

    for alpha in [0.1, 0.3] {
        let mut solver = FciSolver::new(7);
        let mut qp = QpParams::initial_guess(5, 1.0).unwrap();
        let mut last = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for it in 0..900 {
            let rho_qp = compute_rho_qp(&qp, &grid, model.temperature).unwrap();
            let emb = compute_emb_params(&qp, &rho_qp, &grid, &model, Regularization::Clip).unwrap();
            let sol = solver.solve(&emb, it).unwrap();
            let prop = update_qp(&sol, &emb, Regularization::Clip).unwrap();
            let r_o = (&prop.omega - &qp.omega).norm();
            let r_l = (&prop.lambda_qp - &qp.lambda_qp).norm();
            let tr_qp = rho_qp.trace().re;
            let tr_emb = sol.rho_emb.trace().re;
            last = (r_o, r_l, tr_qp, tr_emb);
            let a = Complex64::new(alpha, 0.0);
            let b = Complex64::new(1.0 - alpha, 0.0);
            qp = QpParams {
                omega: (&prop.omega * a + &qp.omega * b).clone_owned(),
                lambda_qp: ggut::linalg::hermitize(&(&prop.lambda_qp * a + &qp.lambda_qp * b)),
            };
            if it == 899 || (r_o < 1e-9 && r_l < 1e-9) {
                let rho_fine = compute_rho_qp(&qp, &fine, model.temperature).unwrap();
                println!("alpha {alpha} it {it}: r_o {:.2e} r_l {:.2e} | tr_qp(400) {:.8} tr_qp(8000) {:.8} tr_emb {:.8} | E {:.6} W {:.6}",
                    last.0, last.1, last.2, rho_fine.trace().re, last.3, sol.energy, qp.spectral_weight());
                println!("  lam eigs {:?}", ggut::linalg::eigh(&qp.lambda_qp).0.iter().map(|v| (v*1e4).round()/1e4).collect::<Vec<_>>());
                break;
            }
        }
    }
}
