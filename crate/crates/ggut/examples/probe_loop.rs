use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;

fn main() {
    let alpha: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.1);
    let u: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1.0);
    let ng: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);

    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);
    let model = HubbardParams::half_filled(u, 0.002).unwrap();
    let mut solver = FciSolver::new(7);

    let mut qp = QpParams::initial_guess(ng, 1.0).unwrap();
    for it in 0..200 {
        let rho_qp = compute_rho_qp(&qp, &grid, model.temperature).unwrap();
        let emb = compute_emb_params(&qp, &rho_qp, &grid, &model, Regularization::Clip).unwrap();
        let sol = solver.solve(&emb, it).unwrap();
        let prop = update_qp(&sol, &emb, Regularization::Clip).unwrap();
        let r_o = (&prop.omega - &qp.omega).norm();
        let r_l = (&prop.lambda_qp - &qp.lambda_qp).norm();
        if it % 10 == 0 || it > 190 {
            let om: Vec<String> = qp.omega.iter().map(|z| format!("{:+.4}", z.re)).collect();
            let lam_d: Vec<String> = (0..ng)
                .map(|a| format!("{:+.4}", qp.lambda_qp[(a, a)].re))
                .collect();
            println!(
                "it {it:3} r_omega {r_o:10.3e} r_lambda {r_l:10.3e} E {:9.5} W {:7.5} omega [{}] lam_diag [{}]",
                sol.energy,
                qp.spectral_weight(),
                om.join(","),
                lam_d.join(",")
            );
        }
        let a = num_complex::Complex64::new(alpha, 0.0);
        let b = num_complex::Complex64::new(1.0 - alpha, 0.0);
        qp = QpParams::new(
            (&prop.omega * a + &qp.omega * b).clone_owned(),
            ggut::linalg::hermitize(&(&prop.lambda_qp * a + &qp.lambda_qp * b)),
        )
        .unwrap_or_else(|_| QpParams::initial_guess(ng, 1.0).unwrap());
    }
}

#[allow(dead_code)]
fn unused() {}
