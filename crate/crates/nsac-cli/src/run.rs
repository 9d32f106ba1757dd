use std::path::Path;

use nsac_core::config::RunConfig;
use nsac_core::energy;
use nsac_core::io;
use nsac_core::mesh::Mesh;
use nsac_core::preset;
use nsac_core::scheme::{State, System};
use nsac_core::Result;

/// Per-step identity gate on accepted states. These are the guarantees the
/// scheme carries by construction; exceeding them means a defect, and the run
/// exits 4 after the ledger has been written out for inspection.
const RE_TOL: f64 = 1e-10;
const DNUM_TOL: f64 = 1e-12;
const R1_TOL: f64 = 1e-12;

fn initial_state(cfg: &RunConfig, sys: &System, mesh: &Mesh) -> Result<State> {
    if let Some(name) = &cfg.preset {
        let p = preset::by_name(name)?;
        return sys.initial_state(p.rho, p.u, p.c);
    }
    // validate_for_run guarantees the snapshot triple exists here.
    let paths = cfg.snapshots.as_ref().expect("validated initial data");
    let (t0, rho, u, c) = io::read_state_fields(&paths[0], &paths[1], &paths[2], mesh)?;
    // Restarts must land on the original step grid so a resumed ledger lines
    // up row for row with the uninterrupted one.
    let k0 = (t0 / sys.dt).round() as usize;
    let c_prev = c.clone();
    sys.state_from_fields(k0, t0, rho, u, c, &c_prev)
}

pub fn cmd_run(config: &Path, out: &Path, snapshot_every: Option<usize>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = snapshot_every {
        cfg.snapshot_every = s;
    }
    cfg.validate_for_run()?;

    let mesh = Mesh::uniform_torus(cfg.n)?;
    let sys = System::new(&mesh, cfg.params.clone())?;
    let init = initial_state(&cfg, &sys, &mesh)?;
    let k0 = init.k;
    let (e0, ..) = energy::energy_parts(&sys, &init);

    let traj = sys.run(init)?;

    std::fs::create_dir_all(out)?;
    io::write_energy_csv(&out.join("energy.csv"), &traj.reports)?;
    if cfg.snapshot_every > 0 {
        for s in &traj.states[1..] {
            if (s.k - k0) % cfg.snapshot_every == 0 {
                io::write_state(out, &format!("state_{:06}", s.k), &mesh, s)?;
            }
        }
    }
    let last = traj.states.last().expect("at least the initial state");
    io::write_state(out, "final", &mesh, last)?;

    for r in &traj.reports {
        r.check(e0, RE_TOL, DNUM_TOL, R1_TOL)?;
    }

    let r_last = traj.reports.last();
    println!(
        "run: {} steps to t = {}, E = {}, mass = {}, min rho = {}; outputs in {}",
        traj.reports.len(),
        last.t,
        r_last.map_or(e0, |r| r.e_total),
        r_last.map_or(f64::NAN, |r| r.mass),
        r_last.map_or(f64::NAN, |r| r.min_rho),
        out.display()
    );
    Ok(())
}
