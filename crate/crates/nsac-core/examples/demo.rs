// Minimal end-to-end driver: run a preset on a uniform torus mesh and print
// the per-step energy ledger. Usage:
//
//   cargo run --example demo [preset] [n] [t_final]
//
// Defaults: smooth 8 0.5. Preset names are listed on a bad name.

use nsac_core::consistency::{consistency_residuals, ConsistencyProbe};
use nsac_core::mesh::Mesh;
use nsac_core::preset;
use nsac_core::scheme::{Params, System};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("smooth");
    let n: usize = args
        .get(1)
        .map(|s| s.parse().expect("n must be a positive integer"))
        .unwrap_or(8);
    let t_final: f64 = args
        .get(2)
        .map(|s| s.parse().expect("t_final must be a number"))
        .unwrap_or(0.5);

    let p = match preset::by_name(name) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let m = match Mesh::uniform_torus(n) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let params = Params {
        t_final,
        ..Params::default()
    };
    let sys = System::new(&m, params).unwrap();
    let s0 = sys.initial_state(p.rho, p.u, p.c).unwrap();
    let traj = match sys.run(s0) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(3);
        }
    };

    println!("preset = {name}, n = {n}, h = {:.4}, steps = {}", m.h, traj.reports.len());
    println!("{:>3} {:>9} {:>14} {:>10} {:>10} {:>10} {:>9}", "k", "t", "E", "r_E", "min dnum", "mass", "min rho");
    for (k, r) in traj.reports.iter().enumerate() {
        let min_dnum = r.dnum.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "{:>3} {:>9.4} {:>14.8} {:>10.2e} {:>10.2e} {:>10.6} {:>9.6}",
            k + 1,
            traj.states[k + 1].t,
            r.e_total,
            r.r_e,
            min_dnum,
            r.mass,
            r.min_rho
        );
    }
    let probe = ConsistencyProbe::standard(t_final);
    let res = consistency_residuals(&sys, &traj.states, &probe);
    println!("consistency residuals: e1 = {:.3e}, e2 = {:.3e}, e3 = {:.3e}", res.e1, res.e2, res.e3);
}
