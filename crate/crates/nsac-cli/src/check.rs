use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsac_core::config::RunConfig;
use nsac_core::dg::{self, BForm};
use nsac_core::energy::flux_identity_check;
use nsac_core::field::{FieldQ, FieldV, FieldX};
use nsac_core::mesh::Mesh;
use nsac_core::{Error, Result};

const DRAWS: usize = 20;

fn random_q(m: &Mesh, rng: &mut ChaCha8Rng) -> FieldQ {
    let mut f = FieldQ::zeros(m);
    for v in &mut f.vals {
        *v = rng.gen_range(0.05..4.0);
    }
    f
}

fn random_v(m: &Mesh, rng: &mut ChaCha8Rng) -> FieldV {
    let mut f = FieldV::zeros(m);
    for v in &mut f.vals {
        *v = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
    }
    f
}

fn random_x(m: &Mesh, rng: &mut ChaCha8Rng) -> FieldX {
    let mut f = FieldX::zeros(m);
    for e in &mut f.vals {
        for v in e.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

/// Identity battery on seeded random fields. Each entry reports its largest
/// relative residual over the draws; all residuals are rounding-level when
/// the assembly is correct, so any tolerance above ~1e-13 separates cleanly.
pub fn cmd_check(config: Option<&Path>, seed: u64) -> Result<()> {
    let cfg = match config {
        Some(p) => {
            let c = RunConfig::load(p)?;
            c.validate()?;
            c
        }
        None => RunConfig::default(),
    };
    let tol = cfg.check_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Mesh::uniform_torus(cfg.n)?;
    let beta = cfg.params.beta;
    let b = BForm::assemble(&m, beta)?;

    let mut results: Vec<(&str, f64)> = Vec::new();

    // Kinetic flux identity: momentum-side vs kinetic-side assembly.
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let rho = random_q(&m, &mut rng);
        let u = random_v(&m, &mut rng);
        let chk = flux_identity_check(&m, &rho, &u, cfg.params.epsilon);
        worst = worst.max(chk.diff / chk.lhs.abs().max(chk.rhs.abs()).max(1.0));
    }
    results.push(("kinetic flux identity", worst));

    // Phase form symmetry.
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let v = random_x(&m, &mut rng);
        let w = random_x(&m, &mut rng);
        let scale = b.quadratic(&v).max(b.quadratic(&w)).max(1.0);
        worst = worst.max((b.bilinear(&v, &w) - b.bilinear(&w, &v)).abs() / scale);
    }
    results.push(("phase form symmetry", worst));

    // Difference identity behind the phase-energy telescoping, with the right
    // side taken from the independently computed seminorm.
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let v = random_x(&m, &mut rng);
        let w = random_x(&m, &mut rng);
        let mut diff = FieldX::zeros(&m);
        for e in 0..m.elements.len() {
            for i in 0..3 {
                diff.vals[e][i] = v.vals[e][i] - w.vals[e][i];
            }
        }
        let sn = |z: &FieldX| z.seminorm_sq(&m, beta).unwrap();
        let lhs = b.bilinear(&v, &diff);
        let rhs = 0.5 * sn(&v) - 0.5 * sn(&w) + 0.5 * sn(&diff);
        let scale = sn(&v).max(sn(&w)).max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    results.push(("phase difference identity", worst));

    // Discrete Laplacian adjointness against every P1 basis function.
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let v = random_x(&m, &mut rng);
        let lap = b.laplacian(&m, &v);
        let bv = b.apply(&v);
        let scale = bv.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        for (e, el) in m.elements.iter().enumerate() {
            let l = lap.vals[e];
            let s: f64 = l.iter().sum();
            for i in 0..3 {
                let mass_row = el.area / 12.0 * (l[i] + s);
                worst = worst.max((mass_row + bv[3 * e + i]).abs() / scale);
            }
        }
    }
    results.push(("laplacian adjointness", worst));

    // Mass row telescoping: signed face fluxes cancel over the closed mesh,
    // so the row sums of the density update are pure redistribution.
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let rho = random_q(&m, &mut rng);
        let u = random_v(&m, &mut rng);
        let h_eps = m.h.powf(cfg.params.epsilon);
        let mut total = 0.0;
        let mut scale = 1.0f64;
        for (_, el) in m.elements.iter().enumerate() {
            for i in 0..3 {
                let f = el.faces[i];
                let flux = el.face_sign[i]
                    * m.faces[f].area
                    * dg::face_flux_scalar(&m, &rho, &u, f, h_eps);
                total += flux;
                scale = scale.max(flux.abs());
            }
        }
        worst = worst.max(total.abs() / scale);
    }
    results.push(("mass row telescoping", worst));

    let mut failed = None;
    for (name, residual) in &results {
        let ok = *residual <= tol;
        println!(
            "identity {name:<26} max residual = {residual:.3e}  (tol {tol:.1e})  {}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok && failed.is_none() {
            failed = Some((*name, *residual));
        }
    }
    if let Some((name, value)) = failed {
        return Err(Error::Identity {
            what: format!("check battery: {name}"),
            value,
            tol,
        });
    }
    println!("all identities within tolerance (seed {seed}, n = {})", cfg.n);
    Ok(())
}
