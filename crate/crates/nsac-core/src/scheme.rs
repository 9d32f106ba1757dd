//! The implicit time stepper: one backward-Euler step couples the upwind
//! mass update, the momentum balance, and the phase equation into a single
//! nonlinear algebraic system, solved by damped Newton with a homotopy
//! fallback.
//!
//! The whole residual is parameterized by a continuation weight `zeta`:
//! convective fluxes, pressure, capillary forcing, bulk viscosity, phase
//! transport, and the reaction term all carry zeta factors, and the
//! Laplacian is shifted by (1-zeta) times the identity. At zeta = 1 this is
//! the target scheme; at zeta = 0 the system is linear and decoupled, which
//! seeds the continuation path when plain Newton stalls.
//!
//! Every nonlinear volume integral uses one fixed order-4 rule. The energy
//! bookkeeping in `energy` depends on this: with a shared rule the discrete
//! energy balance closes to rounding, not to quadrature error.

use crate::dg::{self, BForm};
use crate::energy::{self, EnergyReport};
use crate::error::{Error, Result};
use crate::field::{FieldQ, FieldV, FieldX};
use crate::linsolve::SparseLu;
use crate::mesh::Mesh;
use crate::physics::{self, GammaLaw};
use crate::quad::TRI_DEG4;

/// Nodes of the fixed volume rule.
pub const NQ: usize = 6;

#[derive(Clone, Debug)]
pub struct Params {
    /// Shear viscosity, > 0.
    pub nu: f64,
    /// Bulk viscosity, >= 0; in 2D the momentum penalty eta equals lambda,
    /// so lambda must be strictly positive there.
    pub lambda: f64,
    pub gamma: f64,
    pub a: f64,
    /// Artificial flux-diffusion exponent (the face term scales with h^epsilon).
    pub epsilon: f64,
    /// Jump-penalty exponent in the penalized-gradient form B.
    pub beta: f64,
    /// Time step as a multiple of the mesh size: dt = dt_factor * h.
    pub dt_factor: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Number of uniform continuation increments the fallback starts from.
    pub homotopy_steps: usize,
}

impl Default for Params {
    fn default() -> Params {
        Params {
            nu: 1.0,
            lambda: 1.0,
            gamma: 2.0,
            a: 1.0,
            epsilon: 1.0,
            beta: 1.0,
            dt_factor: 0.5,
            t_final: 0.5,
            newton_tol: 1e-12,
            newton_max_iter: 30,
            homotopy_steps: 10,
        }
    }
}

impl Params {
    /// Momentum penalty coefficient eta = ((d-2)/d) nu + lambda.
    pub fn eta(&self, d: usize) -> f64 {
        (d as f64 - 2.0) / d as f64 * self.nu + self.lambda
    }

    pub fn law(&self) -> Result<GammaLaw> {
        GammaLaw::new(self.a, self.gamma)
    }

    pub fn dt(&self, h: f64) -> f64 {
        self.dt_factor * h
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::config(format!("shear viscosity nu must be > 0, got {}", self.nu)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config(format!("bulk viscosity lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.eta(d) > 0.0) {
            return Err(Error::config(format!(
                "momentum penalty eta = ((d-2)/d) nu + lambda must be > 0; \
                 in 2D eta equals lambda, so lambda = 0 is not usable (got eta = {})",
                self.eta(d)
            )));
        }
        self.law()?;
        let verdict = physics::epsilon_verdict(d, self.gamma, self.epsilon);
        match verdict {
            physics::EpsilonVerdict::Admissible { .. } => {}
            physics::EpsilonVerdict::OutsideWindow { window } => {
                return Err(Error::config(format!(
                    "flux diffusion exponent epsilon = {} outside the admissible window ({}, {}) for gamma = {}",
                    self.epsilon, window.0, window.1, self.gamma
                )));
            }
            physics::EpsilonVerdict::NoWindow { gamma_min } => {
                return Err(Error::config(format!(
                    "gamma = {} admits no flux diffusion exponent (needs gamma > {gamma_min})",
                    self.gamma
                )));
            }
        }
        if !(self.beta > 0.0) {
            return Err(Error::config(format!("penalty exponent beta must be > 0, got {}", self.beta)));
        }
        if !(self.dt_factor > 0.0) {
            return Err(Error::config(format!("dt_factor must be > 0, got {}", self.dt_factor)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::config(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config(format!("newton_tol must be > 0, got {}", self.newton_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::config("newton_max_iter must be at least 1"));
        }
        if self.homotopy_steps == 0 {
            return Err(Error::config("homotopy_steps must be at least 1"));
        }
        Ok(())
    }
}

/// One time level with the caches the diagnostics reuse.
#[derive(Clone, Debug)]
pub struct State {
    pub k: usize,
    pub t: f64,
    pub rho: FieldQ,
    pub u: FieldV,
    pub c: FieldX,
    /// Cell averages of u.
    pub hat_u: Vec<[f64; 2]>,
    /// Discrete Laplacian of c (zero mean).
    pub lap_c: FieldX,
    /// Splitting values f(c^k, c^{k-1}) at the volume quadrature nodes; for
    /// the initial state both arguments are c^0.
    pub f_q: Vec<[f64; NQ]>,
}

pub struct Trajectory {
    pub states: Vec<State>,
    pub reports: Vec<EnergyReport>,
}

/// Assembly context for one mesh + parameter set.
pub struct System<'m> {
    pub mesh: &'m Mesh,
    pub params: Params,
    pub bform: BForm,
    pub law: GammaLaw,
    pub dt: f64,
    pub h_eps: f64,
    ne: usize,
    nf: usize,
    /// Barycentric coordinates and weights of the volume rule.
    pub(crate) lamq: [[f64; 3]; NQ],
    pub(crate) wq: [f64; NQ],
    /// Nonconforming basis values at the volume nodes: phiq[q][m] = 1 - 2 lam_m.
    pub(crate) phiq: [[f64; 3]; NQ],
    /// d(lap_h c)_K / d c_{e'}: per element, blocks of -M_K^{-1} B.
    lap_jac: Vec<Vec<(usize, [[f64; 3]; 3])>>,
}

struct Assembled {
    residual: Vec<f64>,
    jacobian: Option<Vec<(usize, usize, f64)>>,
}

impl<'m> System<'m> {
    pub fn new(mesh: &'m Mesh, params: Params) -> Result<System<'m>> {
        params.validate(mesh.dim)?;
        let law = params.law()?;
        let bform = BForm::assemble(mesh, params.beta)?;
        let ne = mesh.elements.len();
        let nf = mesh.faces.len();
        let mut lamq = [[0.0; 3]; NQ];
        let mut wq = [0.0; NQ];
        let mut phiq = [[0.0; 3]; NQ];
        assert_eq!(TRI_DEG4.bary.len(), NQ);
        for q in 0..NQ {
            lamq[q] = TRI_DEG4.bary[q];
            wq[q] = TRI_DEG4.weights[q];
            for m in 0..3 {
                phiq[q][m] = 1.0 - 2.0 * lamq[q][m];
            }
        }
        // Group the rows of B elementwise and hit them with the local inverse
        // mass matrix, giving the dense blocks of d(lap c)/dc.
        let mut lap_jac: Vec<Vec<(usize, [[f64; 3]; 3])>> = Vec::with_capacity(ne);
        for (e, el) in mesh.elements.iter().enumerate() {
            // raw[i] collects row 3e+i of B by column element.
            let mut cols: Vec<usize> = Vec::new();
            let mut raw: Vec<[[f64; 3]; 3]> = Vec::new();
            for i in 0..3 {
                for (col, v) in bform.mat.row(3 * e + i) {
                    let ce = col / 3;
                    let ci = col % 3;
                    let slot = match cols.iter().position(|&c| c == ce) {
                        Some(s) => s,
                        None => {
                            cols.push(ce);
                            raw.push([[0.0; 3]; 3]);
                            cols.len() - 1
                        }
                    };
                    raw[slot][i][ci] += v;
                }
            }
            let inv = 3.0 / el.area;
            let mut blocks = Vec::with_capacity(cols.len());
            for (s, &ce) in cols.iter().enumerate() {
                let b = raw[s];
                let mut blk = [[0.0; 3]; 3];
                for j in 0..3 {
                    let colsum = b[0][j] + b[1][j] + b[2][j];
                    for i in 0..3 {
                        // (M^-1)_{i.} row applied: 3/|K| (4 b_ij - sum_i b_ij).
                        blk[i][j] = -inv * (4.0 * b[i][j] - colsum);
                    }
                }
                blocks.push((ce, blk));
            }
            lap_jac.push(blocks);
        }
        let dt = params.dt(mesh.h);
        let h_eps = mesh.h.powf(params.epsilon);
        Ok(System {
            mesh,
            params,
            bform,
            law,
            dt,
            h_eps,
            ne,
            nf,
            lamq,
            wq,
            phiq,
            lap_jac,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.ne + 2 * self.nf + 3 * self.ne
    }

    pub fn idx_rho(&self, e: usize) -> usize {
        e
    }

    pub fn idx_u(&self, f: usize, comp: usize) -> usize {
        self.ne + 2 * f + comp
    }

    pub fn idx_c(&self, e: usize, i: usize) -> usize {
        self.ne + 2 * self.nf + 3 * e + i
    }

    pub fn pack(&self, s: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.n_dofs()];
        for e in 0..self.ne {
            x[self.idx_rho(e)] = s.rho.vals[e];
        }
        for f in 0..self.nf {
            x[self.idx_u(f, 0)] = s.u.vals[f][0];
            x[self.idx_u(f, 1)] = s.u.vals[f][1];
        }
        for e in 0..self.ne {
            for i in 0..3 {
                x[self.idx_c(e, i)] = s.c.vals[e][i];
            }
        }
        x
    }

    fn fields_of(&self, x: &[f64]) -> (FieldQ, FieldV, FieldX) {
        let rho = FieldQ {
            vals: (0..self.ne).map(|e| x[self.idx_rho(e)]).collect(),
        };
        let u = FieldV {
            vals: (0..self.nf)
                .map(|f| [x[self.idx_u(f, 0)], x[self.idx_u(f, 1)]])
                .collect(),
        };
        let c = FieldX {
            vals: (0..self.ne)
                .map(|e| [x[self.idx_c(e, 0)], x[self.idx_c(e, 1)], x[self.idx_c(e, 2)]])
                .collect(),
        };
        (rho, u, c)
    }

    /// Build a full state (with caches) from raw fields.
    pub fn state_from_fields(
        &self,
        k: usize,
        t: f64,
        rho: FieldQ,
        u: FieldV,
        c: FieldX,
        c_prev: &FieldX,
    ) -> Result<State> {
        if !(rho.min() > 0.0) {
            return Err(Error::config(format!(
                "density must be strictly positive (min = {})",
                rho.min()
            )));
        }
        let hat_u = u.hat(self.mesh);
        let lap_c = self.bform.laplacian(self.mesh, &c);
        let mut f_q = vec![[0.0; NQ]; self.ne];
        for e in 0..self.ne {
            for q in 0..NQ {
                let ck = c.eval(e, self.lamq[q]);
                let ckm1 = c_prev.eval(e, self.lamq[q]);
                f_q[e][q] = physics::f_split(ck, ckm1);
            }
        }
        Ok(State {
            k,
            t,
            rho,
            u,
            c,
            hat_u,
            lap_c,
            f_q,
        })
    }

    /// Project initial data and build the level-0 state.
    pub fn initial_state(
        &self,
        rho0: impl Fn([f64; 2]) -> f64,
        u0: impl Fn([f64; 2]) -> [f64; 2],
        c0: impl Fn([f64; 2]) -> f64,
    ) -> Result<State> {
        let rho = FieldQ::project(self.mesh, rho0);
        let u = FieldV::project(self.mesh, u0);
        let c = FieldX::project(self.mesh, c0);
        let c_prev = c.clone();
        self.state_from_fields(0, 0.0, rho, u, c, &c_prev)
    }

    /// Residual (and optionally the Jacobian) of the zeta-weighted system at
    /// candidate x, one backward-Euler step of size dt after `prev`.
    fn assemble(&self, prev: &State, x: &[f64], dt: f64, zeta: f64, want_jac: bool) -> Assembled {
        let mesh = self.mesh;
        let ne = self.ne;
        let n = self.n_dofs();
        let mut r = vec![0.0; n];
        let mut jac: Vec<(usize, usize, f64)> = if want_jac {
            Vec::with_capacity(160 * ne)
        } else {
            Vec::new()
        };
        let (rho, u, c) = self.fields_of(x);
        let hat = u.hat(mesh);
        let eta = self.params.eta(mesh.dim);
        let nu = self.params.nu;
        let h_eps = self.h_eps;

        // zeta-shifted Laplacian of c: -(1-zeta) c - M^{-1} B c.
        let mut delta = self.bform.laplacian(mesh, &c);
        if zeta != 1.0 {
            for e in 0..ne {
                for i in 0..3 {
                    delta.vals[e][i] -= (1.0 - zeta) * c.vals[e][i];
                }
            }
        }

        // Per-face flux data.
        struct FaceData {
            fs: f64,
            fv: [f64; 2],
            rho_up: f64,
            m_up: [f64; 2],
            dplus: f64,
            dminus: f64,
        }
        let faces: Vec<FaceData> = (0..self.nf)
            .map(|f| {
                let face = &mesh.faces[f];
                let nrm = face.normal;
                let vn = u.vals[f][0] * nrm[0] + u.vals[f][1] * nrm[1];
                let (ki, ko) = (face.elem_in, face.elem_out);
                let fs = dg::diffusive_flux(rho.vals[ki], rho.vals[ko], vn, h_eps);
                let m_in = [rho.vals[ki] * hat[ki][0], rho.vals[ki] * hat[ki][1]];
                let m_out = [rho.vals[ko] * hat[ko][0], rho.vals[ko] * hat[ko][1]];
                let fv = [
                    dg::diffusive_flux(m_in[0], m_out[0], vn, h_eps),
                    dg::diffusive_flux(m_in[1], m_out[1], vn, h_eps),
                ];
                FaceData {
                    fs,
                    fv,
                    rho_up: dg::upwind_value(rho.vals[ki], rho.vals[ko], vn),
                    m_up: [
                        dg::upwind_value(m_in[0], m_out[0], vn),
                        dg::upwind_value(m_in[1], m_out[1], vn),
                    ],
                    dplus: vn.max(0.0) + h_eps,
                    dminus: vn.min(0.0) - h_eps,
                }
            })
            .collect();

        // Mass equation: cell rate plus signed face fluxes.
        for e in 0..ne {
            let a = mesh.elements[e].area;
            r[self.idx_rho(e)] += a * (rho.vals[e] - prev.rho.vals[e]) / dt;
            if want_jac {
                jac.push((self.idx_rho(e), self.idx_rho(e), a / dt));
            }
        }
        for (f, fd) in faces.iter().enumerate() {
            let face = &mesh.faces[f];
            let (ki, ko) = (face.elem_in, face.elem_out);
            let s_len = face.area;
            let w = zeta * s_len;
            r[self.idx_rho(ki)] += w * fd.fs;
            r[self.idx_rho(ko)] -= w * fd.fs;
            if want_jac {
                let nrm = face.normal;
                for (row, sgn) in [(ki, 1.0), (ko, -1.0)] {
                    let rr = self.idx_rho(row);
                    jac.push((rr, self.idx_rho(ki), sgn * w * fd.dplus));
                    jac.push((rr, self.idx_rho(ko), sgn * w * fd.dminus));
                    jac.push((rr, self.idx_u(f, 0), sgn * w * fd.rho_up * nrm[0]));
                    jac.push((rr, self.idx_u(f, 1), sgn * w * fd.rho_up * nrm[1]));
                }
            }
        }

        // Momentum equation.
        for (e, el) in mesh.elements.iter().enumerate() {
            let area = el.area;
            // gphi[m] = gradient of the face basis function opposite vertex m.
            let gphi: [[f64; 2]; 3] = [
                [-2.0 * el.grad_lambda[0][0], -2.0 * el.grad_lambda[0][1]],
                [-2.0 * el.grad_lambda[1][0], -2.0 * el.grad_lambda[1][1]],
                [-2.0 * el.grad_lambda[2][0], -2.0 * el.grad_lambda[2][1]],
            ];
            let p_k = self.law.p(rho.vals[e]);
            let dp_k = self.law.p_deriv(rho.vals[e]);
            let div_u = u.div(mesh, e);
            let gc = c.grad(mesh, e);
            let m_prev = [
                prev.rho.vals[e] * prev.hat_u[e][0],
                prev.rho.vals[e] * prev.hat_u[e][1],
            ];

            for m in 0..3 {
                let fm = el.faces[m];
                for i in 0..2 {
                    let row = self.idx_u(fm, i);
                    // Momentum rate against the cell average of the test function.
                    r[row] += area / (3.0 * dt) * (rho.vals[e] * hat[e][i] - m_prev[i]);
                    // Viscous stress: componentwise stiffness.
                    let mut visc = 0.0;
                    for mp in 0..3 {
                        visc += u.vals[el.faces[mp]][i]
                            * (gphi[mp][0] * gphi[m][0] + gphi[mp][1] * gphi[m][1]);
                    }
                    r[row] += nu * area * visc;
                    // Bulk part and pressure, both continued by zeta.
                    r[row] += zeta * eta * area * div_u * gphi[m][i];
                    r[row] -= zeta * p_k * area * gphi[m][i];
                    // Convective flux against the jump of the averaged test
                    // function: +zeta/3 sum over this element's faces.
                    for mp in 0..3 {
                        let fp = el.faces[mp];
                        let sgn = el.face_sign[mp];
                        r[row] += zeta / 3.0 * sgn * mesh.faces[fp].area * faces[fp].fv[i];
                    }
                    // Capillary forcing -zeta (zeta f - lap c) grad c . phi.
                    let mut cap = 0.0;
                    for q in 0..NQ {
                        let fq = {
                            let ck = c.eval(e, self.lamq[q]);
                            let cp = prev.c.eval(e, self.lamq[q]);
                            physics::f_split(ck, cp)
                        };
                        let dq = delta.eval(e, self.lamq[q]);
                        cap += self.wq[q] * (zeta * fq - dq) * self.phiq[q][m];
                    }
                    r[row] -= zeta * area * cap * gc[i];
                }
            }

            if want_jac {
                for m in 0..3 {
                    let fm = el.faces[m];
                    for i in 0..2 {
                        let row = self.idx_u(fm, i);
                        // d/d rho_e of the rate and pressure terms.
                        jac.push((
                            row,
                            self.idx_rho(e),
                            area / (3.0 * dt) * hat[e][i] - zeta * dp_k * area * gphi[m][i],
                        ));
                        for mp in 0..3 {
                            let cf = el.faces[mp];
                            // Rate: d hat_u / d u.
                            jac.push((
                                row,
                                self.idx_u(cf, i),
                                area * rho.vals[e] / (9.0 * dt),
                            ));
                            // Viscous stiffness (diagonal in the component).
                            jac.push((
                                row,
                                self.idx_u(cf, i),
                                nu * area * (gphi[mp][0] * gphi[m][0] + gphi[mp][1] * gphi[m][1]),
                            ));
                            // Bulk divergence coupling (mixes components).
                            for j in 0..2 {
                                jac.push((
                                    row,
                                    self.idx_u(cf, j),
                                    zeta * eta * area * gphi[mp][j] * gphi[m][i],
                                ));
                            }
                        }
                        // Convective flux derivatives.
                        for mp in 0..3 {
                            let fp = el.faces[mp];
                            let face = &mesh.faces[fp];
                            let fd = &faces[fp];
                            let wgt = zeta / 3.0 * el.face_sign[mp] * face.area;
                            let (ki, ko) = (face.elem_in, face.elem_out);
                            // Through the cell momenta rho*hat_u.
                            jac.push((row, self.idx_rho(ki), wgt * hat[ki][i] * fd.dplus));
                            jac.push((row, self.idx_rho(ko), wgt * hat[ko][i] * fd.dminus));
                            for mq in 0..3 {
                                jac.push((
                                    row,
                                    self.idx_u(mesh.elements[ki].faces[mq], i),
                                    wgt * rho.vals[ki] * fd.dplus / 3.0,
                                ));
                                jac.push((
                                    row,
                                    self.idx_u(mesh.elements[ko].faces[mq], i),
                                    wgt * rho.vals[ko] * fd.dminus / 3.0,
                                ));
                            }
                            // Through the face-normal velocity.
                            jac.push((row, self.idx_u(fp, 0), wgt * fd.m_up[i] * face.normal[0]));
                            jac.push((row, self.idx_u(fp, 1), wgt * fd.m_up[i] * face.normal[1]));
                        }
                        // Capillary derivatives in c: the splitting value, the
                        // gradient factor, and the Laplacian chain.
                        for q in 0..NQ {
                            let lam = self.lamq[q];
                            let ck = c.eval(e, lam);
                            let cp = prev.c.eval(e, lam);
                            let fq = physics::f_split(ck, cp);
                            let dfq = physics::f_split_deriv(ck);
                            let dq = delta.eval(e, lam);
                            let wphi = self.wq[q] * self.phiq[q][m];
                            for ip in 0..3 {
                                // f channel and grad-c channel (local).
                                jac.push((
                                    row,
                                    self.idx_c(e, ip),
                                    -zeta * area * wphi
                                        * (zeta * dfq * lam[ip] * gc[i]
                                            + (zeta * fq - dq) * el.grad_lambda[ip][i]),
                                ));
                            }
                            // Laplacian channel: dq depends on c of e and neighbors.
                            for (ce, blk) in &self.lap_jac[e] {
                                for ip in 0..3 {
                                    // d dq / d c_{ce,ip} = sum_j lam_j blk[j][ip].
                                    let mut ddq = lam[0] * blk[0][ip]
                                        + lam[1] * blk[1][ip]
                                        + lam[2] * blk[2][ip];
                                    if *ce == e && zeta != 1.0 {
                                        ddq -= (1.0 - zeta) * lam[ip];
                                    }
                                    jac.push((
                                        row,
                                        self.idx_c(*ce, ip),
                                        zeta * area * wphi * ddq * gc[i],
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }

        // Phase equation. The penalized-gradient part B c is added rowwise from
        // the assembled matrix, exactly matching the Laplacian definition.
        {
            let c_flat = dg::flatten(&c);
            let off = self.idx_c(0, 0);
            let mut bc = vec![0.0; 3 * ne];
            self.bform.mat.matvec(&c_flat, &mut bc);
            for row in 0..3 * ne {
                r[off + row] += bc[row];
            }
            if want_jac {
                for row in 0..3 * ne {
                    for (col, v) in self.bform.mat.row(row) {
                        jac.push((off + row, off + col, v));
                    }
                }
            }
        }
        for (e, el) in mesh.elements.iter().enumerate() {
            let area = el.area;
            let gc = c.grad(mesh, e);
            let dc = [
                c.vals[e][0] - prev.c.vals[e][0],
                c.vals[e][1] - prev.c.vals[e][1],
                c.vals[e][2] - prev.c.vals[e][2],
            ];
            let sdc = dc[0] + dc[1] + dc[2];
            let sc = c.vals[e][0] + c.vals[e][1] + c.vals[e][2];
            for i in 0..3 {
                let row = self.idx_c(e, i);
                // Rate and the (1-zeta) mass shift, exact local mass matrix.
                r[row] += area / 12.0 * (dc[i] + sdc) / dt;
                r[row] += (1.0 - zeta) * area / 12.0 * (c.vals[e][i] + sc);
                let mut tr = 0.0;
                let mut ff = 0.0;
                for q in 0..NQ {
                    let lam = self.lamq[q];
                    let uq = [
                        u.vals[el.faces[0]][0] * self.phiq[q][0]
                            + u.vals[el.faces[1]][0] * self.phiq[q][1]
                            + u.vals[el.faces[2]][0] * self.phiq[q][2],
                        u.vals[el.faces[0]][1] * self.phiq[q][0]
                            + u.vals[el.faces[1]][1] * self.phiq[q][1]
                            + u.vals[el.faces[2]][1] * self.phiq[q][2],
                    ];
                    tr += self.wq[q] * (uq[0] * gc[0] + uq[1] * gc[1]) * lam[i];
                    let ck = c.eval(e, lam);
                    let cp = prev.c.eval(e, lam);
                    ff += self.wq[q] * physics::f_split(ck, cp) * lam[i];
                }
                r[row] += zeta * area * tr;
                r[row] += zeta * area * ff;
            }
            if want_jac {
                for i in 0..3 {
                    let row = self.idx_c(e, i);
                    for ip in 0..3 {
                        let mass = area / 12.0 * (if i == ip { 2.0 } else { 1.0 });
                        jac.push((row, self.idx_c(e, ip), mass / dt + (1.0 - zeta) * mass));
                    }
                    for q in 0..NQ {
                        let lam = self.lamq[q];
                        let uq = [
                            u.vals[el.faces[0]][0] * self.phiq[q][0]
                                + u.vals[el.faces[1]][0] * self.phiq[q][1]
                                + u.vals[el.faces[2]][0] * self.phiq[q][2],
                            u.vals[el.faces[0]][1] * self.phiq[q][0]
                                + u.vals[el.faces[1]][1] * self.phiq[q][1]
                                + u.vals[el.faces[2]][1] * self.phiq[q][2],
                        ];
                        let ck = c.eval(e, lam);
                        let dfq = physics::f_split_deriv(ck);
                        for ip in 0..3 {
                            jac.push((
                                row,
                                self.idx_c(e, ip),
                                zeta * area
                                    * self.wq[q]
                                    * ((uq[0] * el.grad_lambda[ip][0]
                                        + uq[1] * el.grad_lambda[ip][1])
                                        + dfq * lam[ip])
                                    * lam[i],
                            ));
                        }
                        for m in 0..3 {
                            for j in 0..2 {
                                jac.push((
                                    row,
                                    self.idx_u(el.faces[m], j),
                                    zeta * area * self.wq[q] * self.phiq[q][m] * gc[j] * lam[i],
                                ));
                            }
                        }
                    }
                }
            }
        }

        Assembled {
            residual: r,
            jacobian: want_jac.then_some(jac),
        }
    }

    fn min_rho(&self, x: &[f64]) -> f64 {
        (0..self.ne)
            .map(|e| x[self.idx_rho(e)])
            .fold(f64::INFINITY, f64::min)
    }

    /// Damped Newton at fixed zeta. Trial updates keeping the density
    /// positive and the residual decreasing; one extra polished iteration
    /// after meeting the tolerance pushes the residual to its rounding floor.
    fn newton(&self, prev: &State, mut x: Vec<f64>, dt: f64, zeta: f64) -> Result<Vec<f64>> {
        let tol = self.params.newton_tol;
        let n = self.n_dofs();
        for _ in 0..self.params.newton_max_iter {
            let asm = self.assemble(prev, &x, dt, zeta, true);
            let res = inf_norm(&asm.residual);
            if !res.is_finite() {
                return Err(Error::NonConvergence {
                    step: prev.k + 1,
                    detail: format!("residual not finite at zeta = {zeta}"),
                });
            }
            let lu = match SparseLu::new(n, asm.jacobian.as_ref().unwrap()) {
                Ok(lu) => lu,
                Err(e) => {
                    return Err(Error::NonConvergence {
                        step: prev.k + 1,
                        detail: format!("factorization failed at zeta = {zeta}: {e}"),
                    })
                }
            };
            let rhs: Vec<f64> = asm.residual.iter().map(|v| -v).collect();
            let dx = lu.solve(&rhs);
            if res <= tol {
                // Polish: accept the full correction only if it helps.
                if res > 0.0 {
                    let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
                    if self.min_rho(&trial) > 0.0 {
                        let r2 = inf_norm(&self.assemble(prev, &trial, dt, zeta, false).residual);
                        if r2 < res {
                            return Ok(trial);
                        }
                    }
                }
                return Ok(x);
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= 1e-8 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&dx)
                    .map(|(a, b)| a + alpha * b)
                    .collect();
                if self.min_rho(&trial) > 0.0 {
                    let r_new = inf_norm(&self.assemble(prev, &trial, dt, zeta, false).residual);
                    if r_new.is_finite() && (r_new < res || alpha < 1e-4) {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence {
                    step: prev.k + 1,
                    detail: format!("line search stalled at zeta = {zeta}, residual {res:.3e}"),
                });
            }
        }
        let res = inf_norm(&self.assemble(prev, &x, dt, zeta, false).residual);
        if res <= tol {
            Ok(x)
        } else {
            Err(Error::NonConvergence {
                step: prev.k + 1,
                detail: format!(
                    "Newton did not reach {tol:.1e} in {} iterations at zeta = {zeta} (residual {res:.3e})",
                    self.params.newton_max_iter
                ),
            })
        }
    }

    /// Advance one step of size dt. Plain Newton from the previous state
    /// first; on failure, continuation in zeta from the linear zeta = 0
    /// system, with bisected increments.
    pub fn step_dt(&self, prev: &State, dt: f64) -> Result<State> {
        let x0 = self.pack(prev);
        let x = match self.newton(prev, x0.clone(), dt, 1.0) {
            Ok(x) => x,
            Err(_) => self.continuation(prev, x0, dt)?,
        };
        self.finish(prev, x, dt)
    }

    pub fn step(&self, prev: &State) -> Result<State> {
        self.step_dt(prev, self.dt)
    }

    fn continuation(&self, prev: &State, x0: Vec<f64>, dt: f64) -> Result<Vec<f64>> {
        let mut x = self.newton(prev, x0, dt, 0.0)?;
        let base = 1.0 / self.params.homotopy_steps as f64;
        let mut zeta = 0.0;
        let mut dz = base;
        while zeta < 1.0 {
            let target = (zeta + dz).min(1.0);
            match self.newton(prev, x.clone(), dt, target) {
                Ok(xn) => {
                    x = xn;
                    zeta = target;
                    dz = (dz * 2.0).min(base);
                }
                Err(e) => {
                    dz *= 0.5;
                    if dz < 1.0 / 256.0 {
                        return Err(Error::NonConvergence {
                            step: prev.k + 1,
                            detail: format!("continuation exhausted below zeta = {target}: {e}"),
                        });
                    }
                }
            }
        }
        Ok(x)
    }

    fn finish(&self, prev: &State, x: Vec<f64>, dt: f64) -> Result<State> {
        let (rho, u, c) = self.fields_of(&x);
        let state = self.state_from_fields(prev.k + 1, prev.t + dt, rho, u, c, &prev.c)?;
        debug_assert!(state.rho.min() > 0.0);
        Ok(state)
    }

    /// March to t_final with uniform steps (the last one may be shorter) and
    /// collect the per-step energy ledger.
    pub fn run(&self, init: State) -> Result<Trajectory> {
        let t_final = self.params.t_final;
        let mut states = vec![init];
        let mut reports = Vec::new();
        let safety = 1e-12 * t_final.max(1.0);
        while states.last().unwrap().t < t_final - safety {
            let prev = states.last().unwrap();
            let dt = self.dt.min(t_final - prev.t);
            let next = self.step_dt(prev, dt)?;
            reports.push(energy::step_report(self, prev, &next));
            states.push(next);
        }
        Ok(Trajectory { states, reports })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize) -> Mesh {
        Mesh::uniform_torus(n).unwrap()
    }

    #[test]
    fn params_validation() {
        let d = 2;
        assert!(Params::default().validate(d).is_ok());
        assert!(Params { nu: 0.0, ..Params::default() }.validate(d).is_err());
        // lambda = 0 means eta = 0 in 2D: rejected with an explanation.
        let err = Params { lambda: 0.0, ..Params::default() }
            .validate(d)
            .unwrap_err()
            .to_string();
        assert!(err.contains("lambda"), "{err}");
        assert!(Params { gamma: 1.0, ..Params::default() }.validate(d).is_err());
        assert!(Params { epsilon: 2.0, gamma: 1.5, ..Params::default() }.validate(d).is_err());
        assert!(Params { epsilon: 1.0, gamma: 1.5, ..Params::default() }.validate(d).is_ok());
        assert!(Params { beta: 0.0, ..Params::default() }.validate(d).is_err());
        assert!(Params { homotopy_steps: 0, ..Params::default() }.validate(d).is_err());
    }

    #[test]
    fn constant_state_is_a_fixed_point() {
        let m = mesh(4);
        let sys = System::new(&m, Params::default()).unwrap();
        let s0 = sys
            .initial_state(|_| 1.0, |_| [0.0, 0.0], |_| 0.0)
            .unwrap();
        let x = sys.pack(&s0);
        let asm = sys.assemble(&s0, &x, sys.dt, 1.0, false);
        assert!(inf_norm(&asm.residual) < 1e-14);
        let s1 = sys.step(&s0).unwrap();
        for e in 0..m.elements.len() {
            assert!((s1.rho.vals[e] - 1.0).abs() < 1e-13);
            for i in 0..3 {
                assert!(s1.c.vals[e][i].abs() < 1e-13);
            }
        }
        for f in 0..m.faces.len() {
            assert!(s1.u.vals[f][0].abs() < 1e-13 && s1.u.vals[f][1].abs() < 1e-13);
        }
    }

    #[test]
    fn pure_phases_are_fixed_points() {
        let m = mesh(4);
        let sys = System::new(&m, Params::default()).unwrap();
        for phase in [-1.0, 1.0] {
            let s0 = sys
                .initial_state(|_| 2.0, |_| [0.0, 0.0], |_| phase)
                .unwrap();
            let x = sys.pack(&s0);
            let asm = sys.assemble(&s0, &x, sys.dt, 1.0, false);
            assert!(inf_norm(&asm.residual) < 1e-13, "phase {phase}");
            let s1 = sys.step(&s0).unwrap();
            for e in 0..m.elements.len() {
                assert!((s1.rho.vals[e] - 2.0).abs() < 1e-12);
                for i in 0..3 {
                    assert!((s1.c.vals[e][i] - phase).abs() < 1e-12);
                }
            }
        }
    }

    /// Finite-difference check of every Jacobian column against the analytic
    /// assembly, at a state activating all three splitting branches.
    #[test]
    fn jacobian_matches_finite_differences() {
        let m = mesh(2);
        let sys = System::new(&m, Params::default()).unwrap();
        let s0 = sys
            .initial_state(
                |x| 1.0 + 0.3 * (std::f64::consts::PI * x[0]).cos(),
                |x| [0.2 * (std::f64::consts::PI * x[1]).sin(), -0.1 * x[0]],
                |x| 1.2 * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).cos(),
            )
            .unwrap();
        let mut x = sys.pack(&s0);
        // Nudge off the initial data so D_t terms are active too.
        for (i, v) in x.iter_mut().enumerate() {
            *v += 1e-2 * ((i * 2654435761) % 97) as f64 / 97.0;
        }
        for zeta in [1.0, 0.35] {
            let asm = sys.assemble(&s0, &x, sys.dt, zeta, true);
            let n = sys.n_dofs();
            let mut dense = vec![vec![0.0; n]; n];
            for &(i, j, v) in asm.jacobian.as_ref().unwrap() {
                dense[i][j] += v;
            }
            let dh = 1e-6;
            let mut worst: f64 = 0.0;
            for j in 0..n {
                let mut xp = x.clone();
                xp[j] += dh;
                let rp = sys.assemble(&s0, &xp, sys.dt, zeta, false).residual;
                let mut xm = x.clone();
                xm[j] -= dh;
                let rm = sys.assemble(&s0, &xm, sys.dt, zeta, false).residual;
                for i in 0..n {
                    let fd = (rp[i] - rm[i]) / (2.0 * dh);
                    let diff = (fd - dense[i][j]).abs();
                    let scale = dense[i][j].abs().max(fd.abs()).max(1.0);
                    worst = worst.max(diff / scale);
                }
            }
            assert!(worst < 1e-6, "zeta {zeta}: worst relative mismatch {worst}");
        }
    }

    #[test]
    fn small_perturbation_converges_and_conserves_mass() {
        let m = mesh(4);
        let sys = System::new(&m, Params::default()).unwrap();
        let s0 = sys
            .initial_state(
                |x| 1.0 + 0.05 * (std::f64::consts::PI * x[0]).cos() * (std::f64::consts::PI * x[1]).cos(),
                |x| [0.05 * (std::f64::consts::PI * x[1]).sin(), 0.0],
                |x| 0.3 * (std::f64::consts::PI * x[0]).sin(),
            )
            .unwrap();
        let mass0 = s0.rho.integral(&m);
        let mut s = s0;
        for _ in 0..5 {
            s = sys.step(&s).unwrap();
            assert!(s.rho.min() > 0.0);
            let drift = (s.rho.integral(&m) - mass0).abs() / mass0.abs();
            assert!(drift < 1e-12, "mass drift {drift}");
        }
        assert_eq!(s.k, 5);
        assert!((s.t - 5.0 * sys.dt).abs() < 1e-14);
    }

    #[test]
    fn positivity_bound_at_minimizing_cell() {
        let m = mesh(4);
        let sys = System::new(&m, Params::default()).unwrap();
        let s0 = sys
            .initial_state(
                |x| 1.0 + 0.9 * (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin(),
                |x| [0.5 * (std::f64::consts::PI * x[1]).sin(), -0.4 * (std::f64::consts::PI * x[0]).cos()],
                |_| 0.0,
            )
            .unwrap();
        let s1 = sys.step(&s0).unwrap();
        let kmin = (0..m.elements.len())
            .min_by(|&a, &b| s1.rho.vals[a].partial_cmp(&s1.rho.vals[b]).unwrap())
            .unwrap();
        let div = s1.u.div(&m, kmin).abs();
        let bound = s0.rho.vals[kmin] / (1.0 + sys.dt * div);
        assert!(
            s1.rho.vals[kmin] >= bound * (1.0 - 1e-12),
            "rho {} vs bound {bound}",
            s1.rho.vals[kmin]
        );
    }

    #[test]
    fn run_handles_partial_final_step() {
        let m = mesh(2);
        let params = Params {
            t_final: 2.5 * Params::default().dt_factor * m.h,
            ..Params::default()
        };
        let sys = System::new(&m, params).unwrap();
        let s0 = sys.initial_state(|_| 1.0, |_| [0.0, 0.0], |_| 0.5).unwrap();
        let traj = sys.run(s0).unwrap();
        assert_eq!(traj.states.len(), 4);
        assert_eq!(traj.reports.len(), 3);
        let t_end = traj.states.last().unwrap().t;
        assert!((t_end - sys.params.t_final).abs() < 1e-13);
        // Last step is half-length.
        let dt_last = traj.states[3].t - traj.states[2].t;
        assert!((dt_last - 0.5 * sys.dt).abs() < 1e-13);
    }

    #[test]
    fn continuation_matches_direct_newton() {
        // Force the continuation path and compare against the plain solve.
        let m = mesh(2);
        let sys = System::new(&m, Params::default()).unwrap();
        let s0 = sys
            .initial_state(
                |x| 1.0 + 0.2 * (std::f64::consts::PI * x[0]).cos(),
                |x| [0.1 * (std::f64::consts::PI * x[1]).sin(), 0.0],
                |x| 0.4 * (std::f64::consts::PI * x[1]).cos(),
            )
            .unwrap();
        let direct = sys.newton(&s0, sys.pack(&s0), sys.dt, 1.0).unwrap();
        let cont = sys.continuation(&s0, sys.pack(&s0), sys.dt).unwrap();
        for (a, b) in direct.iter().zip(&cont) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_nonpositive_initial_density() {
        let m = mesh(2);
        let sys = System::new(&m, Params::default()).unwrap();
        assert!(sys
            .initial_state(|x| x[0], |_| [0.0, 0.0], |_| 0.0)
            .is_err());
    }
}
