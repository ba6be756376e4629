use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;
use ggut::spectral::*;

fn main() {
    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);
    let model = HubbardParams::half_filled(1.0, 0.002).unwrap();
    let freq = FrequencyGrid::standard();
    for alpha in [0.3] {
        let mut solver = FciSolver::new(7);
        let cfg = LoopConfig { mixing_alpha: alpha, max_iter: 600, ..LoopConfig::default() };
        let r = run_loop(&model, &lattice, &grid, &mut solver, 3, &cfg).unwrap();
        let curve = dos_from_qp(&r.qp, &grid, &freq);
        println!("E {:.6} W {:.6} iters {}", r.solution.energy, r.qp.spectral_weight(), r.iterations);
        println!("omega: {:?}", r.qp.omega.iter().map(|z| (z.re*1e4).round()/1e4).collect::<Vec<_>>());
        println!("lam eigs: {:?}", ggut::linalg::eigh(&r.qp.lambda_qp).0.iter().map(|v| (v*1e4).round()/1e4).collect::<Vec<_>>());
        println!("delta: {:?}", r.emb.delta.iter().map(|z| (z.re*1e4).round()/1e4).collect::<Vec<_>>());
        println!("rho_emb diag: {:?}", (0..3).map(|a| (r.solution.rho_emb[(a,a)].re*1e4).round()/1e4).collect::<Vec<_>>());
        println!("zeta: {:?}", r.solution.zeta.iter().map(|z| (z.re*1e4).round()/1e4).collect::<Vec<_>>());
        println!("A(0) = {:.4}, sumrule dev {:.2e}, integral {:.4}", gap_metric(&curve), sum_rule(&curve, &r.qp), curve.integral());
        println!("trace rho_emb {:.6}", r.solution.rho_emb.trace().re);
    }
}
