use ggut::fock::FciSolver;
use ggut::model::{discretize_semicircle, HubbardParams, LatticeSpec};
use ggut::scloop::*;

fn main() {
    let lattice = LatticeSpec::default();
    let grid = discretize_semicircle(&lattice);

    // cold starts
    for ng in [3usize, 5] {
        for u in [1.0, 2.0, 3.0] {
            let model = HubbardParams::half_filled(u, 0.002).unwrap();
            for alpha in [0.1, 0.3, 0.5] {
                let mut solver = FciSolver::new(7);
                let cfg = LoopConfig { mixing_alpha: alpha, max_iter: 2000, ..LoopConfig::default() };
                match run_loop(&model, &lattice, &grid, &mut solver, ng, &cfg) {
                    Ok(r) => println!("cold ng {ng} U {u} alpha {alpha}: {} iters, E = {:.6}, W = {:.6}", r.iterations, r.solution.energy, r.qp.spectral_weight()),
                    Err(e) => println!("cold ng {ng} U {u} alpha {alpha}: FAILED {e}"),
                }
            }
        }
    }

    // warm chains in U at alpha = 0.3
    for ng in [3usize, 5, 7] {
        let mut warm: Option<QpParams> = None;
        for u in [1.0, 1.5, 2.0, 2.5, 3.0] {
            let model = HubbardParams::half_filled(u, 0.002).unwrap();
            let mut solver = FciSolver::new(7);
            let cfg = LoopConfig { max_iter: 2000, warm_start: warm.clone(), ..LoopConfig::default() };
            match run_loop(&model, &lattice, &grid, &mut solver, ng, &cfg) {
                Ok(r) => {
                    println!("chain ng {ng} U {u}: {} iters, E = {:.6}, W = {:.6}", r.iterations, r.solution.energy, r.qp.spectral_weight());
                    warm = Some(r.qp.clone());
                }
                Err(e) => { println!("chain ng {ng} U {u}: FAILED {e}"); warm = None; }
            }
        }
    }
}
