//! Refinement studies: relative energy of coarse runs against a fine-grid
//! reference, consistency defects along the family, and the parameter
//! admissibility gate.

use crate::consistency::{consistency_residuals, ConsistencyProbe, ConsistencyResiduals};
use crate::energy::relative_energy_states;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::physics::{self, EpsilonVerdict};
use crate::preset::Preset;
use crate::scheme::{Params, State, System};
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    /// Relative energy against the reference run at the final time;
    /// identically zero on the reference row.
    pub rel_energy: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub order_rel: Option<f64>,
    pub order_e1: Option<f64>,
    pub order_e2: Option<f64>,
    pub order_e3: Option<f64>,
    /// Wall-clock seconds for the member run; informational only and
    /// excluded from determinism comparisons.
    pub runtime_s: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub preset: String,
    pub reference_n: usize,
    pub rows: Vec<StudyRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,h,dt,rel_energy,e1,e2,e3,order_rel,order_e1,order_e2,order_e3,runtime_s\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{:.3}\n",
                r.n,
                r.h,
                r.dt,
                r.rel_energy,
                r.e1,
                r.e2,
                r.e3,
                fmt_opt(r.order_rel),
                fmt_opt(r.order_e1),
                fmt_opt(r.order_e2),
                fmt_opt(r.order_e3),
                r.runtime_s,
            ));
        }
        out
    }
}

/// Observed order between two errors measured at mesh sizes h0 > h1.
fn order(err0: f64, err1: f64, h0: f64, h1: f64) -> Option<f64> {
    if err0 > 0.0 && err1 > 0.0 && h0 > h1 {
        Some((err0 / err1).ln() / (h0 / h1).ln())
    } else {
        None
    }
}

/// Least-squares slope of ln(err) against ln(h); positive means decay
/// under refinement.
pub fn ls_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

struct MemberRun {
    n: usize,
    mesh: Mesh,
    final_state: State,
    res: ConsistencyResiduals,
    h: f64,
    dt: f64,
    runtime_s: f64,
}

fn run_member(preset: &Preset, n: usize, params: &Params, probe: &ConsistencyProbe) -> Result<MemberRun> {
    let mesh = Mesh::uniform_torus(n)?;
    let start = Instant::now();
    let (final_state, res, h, dt) = {
        let sys = System::new(&mesh, params.clone())?;
        let s0 = sys.initial_state(preset.rho, preset.u, preset.c)?;
        let traj = sys.run(s0).map_err(|e| match e {
            Error::NonConvergence { step, detail } => Error::NonConvergence {
                step,
                detail: format!("study member n = {n} aborted (partial results discarded): {detail}"),
            },
            other => other,
        })?;
        let res = consistency_residuals(&sys, &traj.states, &probe);
        (
            traj.states.into_iter().last().unwrap(),
            res,
            mesh.h,
            sys.dt,
        )
    };
    Ok(MemberRun {
        n,
        mesh,
        final_state,
        res,
        h,
        dt,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Run the preset on every mesh in `n_list` (ascending; the finest is the
/// reference) and tabulate relative energies at the final time plus the
/// consistency defects of each member.
pub fn reference_convergence_study(
    preset: &Preset,
    n_list: &[usize],
    params: &Params,
) -> Result<ConvergenceTable> {
    reference_convergence_study_threaded(preset, n_list, params, 1)
}

/// Same study with member runs distributed over up to `threads` worker
/// threads. Members are independent and the merge is by index, so the table
/// is identical to the serial one (runtimes aside) for any thread count.
pub fn reference_convergence_study_threaded(
    preset: &Preset,
    n_list: &[usize],
    params: &Params,
    threads: usize,
) -> Result<ConvergenceTable> {
    if n_list.is_empty() {
        return Err(Error::config("study needs a non-empty n_list"));
    }
    for w in n_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::config(format!(
                "n_list must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let law = params.law()?;
    let probe = ConsistencyProbe::standard(params.t_final);
    let members: Vec<MemberRun> = if threads <= 1 || n_list.len() == 1 {
        let mut out = Vec::with_capacity(n_list.len());
        for &n in n_list {
            out.push(run_member(preset, n, params, &probe)?);
        }
        out
    } else {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Mutex;
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<MemberRun>>>> =
            n_list.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..threads.min(n_list.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n_list.len() {
                        break;
                    }
                    let r = run_member(preset, n_list[i], params, &probe);
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        // First error by index wins, so failures are as deterministic as
        // results.
        let mut out = Vec::with_capacity(n_list.len());
        for slot in slots {
            out.push(slot.into_inner().unwrap().expect("worker finished")?);
        }
        out
    };

    let last = members.len() - 1;
    let mut rows: Vec<StudyRow> = Vec::with_capacity(members.len());
    for i in 0..members.len() {
        let m = &members[i];
        let rel_energy = if i == last {
            0.0
        } else {
            let r = &members[last];
            relative_energy_states(&law, &m.mesh, &m.final_state, &r.mesh, &r.final_state)?
        };
        let (order_rel, order_e1, order_e2, order_e3) = if i == 0 {
            (None, None, None, None)
        } else {
            let p = &rows[i - 1];
            (
                if i == last {
                    None
                } else {
                    order(p.rel_energy, rel_energy, p.h, m.h)
                },
                order(p.e1, m.res.e1, p.h, m.h),
                order(p.e2, m.res.e2, p.h, m.h),
                order(p.e3, m.res.e3, p.h, m.h),
            )
        };
        rows.push(StudyRow {
            n: m.n,
            h: m.h,
            dt: m.dt,
            rel_energy,
            e1: m.res.e1,
            e2: m.res.e2,
            e3: m.res.e3,
            order_rel,
            order_e1,
            order_e2,
            order_e3,
            runtime_s: m.runtime_s,
        });
    }
    Ok(ConvergenceTable {
        preset: preset.name.to_string(),
        reference_n: members[last].n,
        rows,
    })
}

/// Whether (d, gamma, epsilon) satisfies the hypotheses the convergence
/// theory needs, with the violated inequality named.
#[derive(Clone, Debug)]
pub struct AdmissibilityReport {
    pub d: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub verdict: EpsilonVerdict,
    pub message: String,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.verdict.is_admissible()
    }
}

pub fn theorem_condition_check(d: usize, gamma: f64, epsilon: f64) -> AdmissibilityReport {
    let verdict = physics::epsilon_verdict(d, gamma, epsilon);
    let message = match &verdict {
        EpsilonVerdict::Admissible { window } => format!(
            "admissible: epsilon = {epsilon} lies in ({}, {}) for gamma = {gamma}, d = {d}",
            window.0, window.1
        ),
        EpsilonVerdict::OutsideWindow { window } => format!(
            "inadmissible: epsilon = {epsilon} is outside the window ({}, {}) required for gamma = {gamma}, d = {d}",
            window.0, window.1
        ),
        EpsilonVerdict::NoWindow { gamma_min } => format!(
            "inadmissible: gamma = {gamma} <= {gamma_min}; no flux diffusion exponent is admissible for d = {d}"
        ),
    };
    AdmissibilityReport {
        d,
        gamma,
        epsilon,
        verdict,
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset;

    #[test]
    fn admissibility_verdicts() {
        let a = theorem_condition_check(2, 2.0, 1.0);
        assert!(a.admissible());
        assert!(a.message.starts_with("admissible"));

        let b = theorem_condition_check(2, 1.5, 2.0);
        assert!(!b.admissible());
        assert!(b.message.contains("outside the window"), "{}", b.message);
        match b.verdict {
            EpsilonVerdict::OutsideWindow { window } => {
                assert!((window.1 - 4.0 / 3.0).abs() < 1e-15);
            }
            _ => panic!("expected window verdict"),
        }

        let c = theorem_condition_check(2, 1.1, 1.0);
        assert!(!c.admissible());
        assert!(c.message.contains("no flux diffusion"), "{}", c.message);
    }

    #[test]
    fn rejects_bad_n_lists() {
        let p = preset::by_name("constant").unwrap();
        let params = Params::default();
        assert!(reference_convergence_study(p, &[], &params).is_err());
        assert!(reference_convergence_study(p, &[4, 4], &params).is_err());
        assert!(reference_convergence_study(p, &[8, 4], &params).is_err());
    }

    #[test]
    fn single_member_table() {
        let p = preset::by_name("constant").unwrap();
        let params = Params {
            t_final: 0.1,
            ..Params::default()
        };
        let t = reference_convergence_study(p, &[4], &params).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.reference_n, 4);
        assert_eq!(t.rows[0].rel_energy, 0.0);
        assert!(t.rows[0].order_rel.is_none());
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("n,h,dt,rel_energy"));
    }

    #[test]
    fn relative_energy_decreases_toward_reference() {
        let p = preset::by_name("smooth").unwrap();
        let params = Params {
            t_final: 0.1,
            ..Params::default()
        };
        let t = reference_convergence_study(p, &[4, 8, 16], &params).unwrap();
        assert_eq!(t.rows.len(), 3);
        let r4 = t.rows[0].rel_energy;
        let r8 = t.rows[1].rel_energy;
        assert!(r4 > r8 && r8 > 0.0, "rel energies {r4} {r8}");
        assert!(t.rows[2].rel_energy == 0.0);
        assert!(t.rows[1].order_rel.is_none() || t.rows[1].order_rel.unwrap() > 0.0);
    }

    #[test]
    fn ls_slope_recovers_exact_order() {
        let hs = [0.4, 0.2, 0.1];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((ls_slope(&hs, &errs) - 2.0).abs() < 1e-12);
    }
}
