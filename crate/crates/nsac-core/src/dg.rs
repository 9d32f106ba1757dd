//! Broken operators on faces: upwind and diffusive fluxes, the jump-penalized
//! gradient form B, and the discrete Laplacian it induces.
//!
//! Sign conventions follow the mesh orientation: on a face the jump is
//! [[v]] = v_out - v_in (out is the side the normal points into), and the
//! average is {{v}} = (v_in + v_out)/2. Note the jump sign is opposite to the
//! more common DG convention.

use crate::error::{Error, Result};
use crate::field::{FieldQ, FieldV, FieldX};
use crate::linsolve::Csr;
use crate::mesh::{FaceId, Mesh};
use crate::quad::EDGE_GAUSS2;

/// Two-sided trace of a piecewise-constant quantity on a face.
#[derive(Clone, Copy, Debug)]
pub struct FaceTrace {
    pub v_in: f64,
    pub v_out: f64,
}

impl FaceTrace {
    pub fn of_q(r: &FieldQ, mesh: &Mesh, f: FaceId) -> FaceTrace {
        let face = &mesh.faces[f];
        FaceTrace {
            v_in: r.vals[face.elem_in],
            v_out: r.vals[face.elem_out],
        }
    }

    pub fn jump(&self) -> f64 {
        self.v_out - self.v_in
    }

    pub fn avg(&self) -> f64 {
        0.5 * (self.v_in + self.v_out)
    }
}

/// Value transported through the face: the in-side trace for outflow
/// (v_n >= 0), the out-side trace for inflow.
pub fn upwind_value(v_in: f64, v_out: f64, vn: f64) -> f64 {
    if vn >= 0.0 {
        v_in
    } else {
        v_out
    }
}

/// Upwind flux density r_up * vn in selector form.
pub fn upwind(v_in: f64, v_out: f64, vn: f64) -> f64 {
    upwind_value(v_in, v_out, vn) * vn
}

/// The same flux written as {{r}} vn - |vn|/2 [[r]]; agrees with `upwind` to
/// rounding, used as a cross-check.
pub fn upwind_avg_jump(v_in: f64, v_out: f64, vn: f64) -> f64 {
    0.5 * (v_in + v_out) * vn - 0.5 * vn.abs() * (v_out - v_in)
}

/// Upwind flux with artificial face diffusion: Up - h^eps [[r]].
/// `h_eps` is the precomputed h^eps.
pub fn diffusive_flux(v_in: f64, v_out: f64, vn: f64, h_eps: f64) -> f64 {
    upwind(v_in, v_out, vn) - h_eps * (v_out - v_in)
}

/// Scalar diffusive upwind flux of a cell field through a face.
pub fn face_flux_scalar(mesh: &Mesh, r: &FieldQ, u: &FieldV, f: FaceId, h_eps: f64) -> f64 {
    let face = &mesh.faces[f];
    let vn = dot(u.face_velocity(f), face.normal);
    diffusive_flux(r.vals[face.elem_in], r.vals[face.elem_out], vn, h_eps)
}

/// Componentwise diffusive upwind flux of cellwise vector data (e.g. rho*u_hat).
pub fn face_flux_vector(
    mesh: &Mesh,
    m: &[[f64; 2]],
    u: &FieldV,
    f: FaceId,
    h_eps: f64,
) -> [f64; 2] {
    let face = &mesh.faces[f];
    let vn = dot(u.face_velocity(f), face.normal);
    let a = m[face.elem_in];
    let b = m[face.elem_out];
    [
        diffusive_flux(a[0], b[0], vn, h_eps),
        diffusive_flux(a[1], b[1], vn, h_eps),
    ]
}

/// Direct evaluation of the penalized-gradient bilinear form
/// B(v, w) = int grad_h v . grad_h w + h^-(1+beta) sum_f int [[v]][[w]].
///
/// B carries no face consistency terms: B(v,v) must equal the jump seminorm
/// squared exactly, or the difference identity behind the phase-energy
/// telescoping fails and B loses positivity on coarse meshes (the gradient
/// term only dominates the consistency terms asymptotically).
pub fn bilinear_b(mesh: &Mesh, v: &FieldX, w: &FieldX, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let pen = mesh.h.powf(-(1.0 + beta));
    let mut acc = 0.0;
    for (e, el) in mesh.elements.iter().enumerate() {
        let gv = v.grad(mesh, e);
        let gw = w.grad(mesh, e);
        acc += el.area * (gv[0] * gw[0] + gv[1] * gw[1]);
    }
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        for &t in EDGE_GAUSS2.iter() {
            let (jv, _) = v.face_jump_avg(mesh, f, t);
            let (jw, _) = w.face_jump_avg(mesh, f, t);
            acc += 0.5 * face.area * pen * jv * jw;
        }
    }
    Ok(acc)
}

/// Assembled matrix of the form B over the discontinuous-linear dof vector
/// (element-major, three vertex values per element).
pub struct BForm {
    pub mat: Csr,
    pub beta: f64,
}

impl BForm {
    pub fn assemble(mesh: &Mesh, beta: f64) -> Result<BForm> {
        check_beta(beta)?;
        let pen = mesh.h.powf(-(1.0 + beta));
        let nx = 3 * mesh.elements.len();
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(21 * mesh.elements.len());
        for (e, el) in mesh.elements.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let g = el.area * dot(el.grad_lambda[i], el.grad_lambda[j]);
                    trip.push((3 * e + i, 3 * e + j, g));
                }
            }
        }
        for face in &mesh.faces {
            let k = face.elem_in;
            let l = face.elem_out;
            let dofs = [3 * k, 3 * k + 1, 3 * k + 2, 3 * l, 3 * l + 1, 3 * l + 2];
            let mut local = [[0.0; 6]; 6];
            for &t in EDGE_GAUSS2.iter() {
                let x = [
                    face.ends[0][0] + t * (face.ends[1][0] - face.ends[0][0]),
                    face.ends[0][1] + t * (face.ends[1][1] - face.ends[0][1]),
                ];
                let lam_in = mesh.barycentric(k, x);
                let lam_out = mesh.barycentric(l, face.to_out_chart(x));
                // Jump of each basis function at this quadrature point.
                let jump = [
                    -lam_in[0], -lam_in[1], -lam_in[2], lam_out[0], lam_out[1], lam_out[2],
                ];
                for r in 0..6 {
                    for c in 0..6 {
                        local[r][c] += 0.5 * face.area * pen * jump[r] * jump[c];
                    }
                }
            }
            for r in 0..6 {
                for c in 0..6 {
                    trip.push((dofs[r], dofs[c], local[r][c]));
                }
            }
        }
        Ok(BForm {
            mat: Csr::from_triplets(nx, nx, &trip),
            beta,
        })
    }

    /// y = B v over flattened dofs.
    pub fn apply(&self, v: &FieldX) -> Vec<f64> {
        let x = flatten(v);
        let mut y = vec![0.0; x.len()];
        self.mat.matvec(&x, &mut y);
        y
    }

    pub fn bilinear(&self, v: &FieldX, w: &FieldX) -> f64 {
        self.mat.bilinear(&flatten(w), &flatten(v))
    }

    /// B(v, v); the quadratic form the discrete energy bookkeeping uses.
    pub fn quadratic(&self, v: &FieldX) -> f64 {
        self.bilinear(v, v)
    }

    /// Discrete Laplacian: the unique field with -int (lap v) w = B(v, w) for
    /// every w. The mass solve is elementwise; the result has zero mean
    /// because B annihilates constants.
    pub fn laplacian(&self, mesh: &Mesh, v: &FieldX) -> FieldX {
        let y = self.apply(v);
        let mut out = FieldX::zeros(mesh);
        for (e, el) in mesh.elements.iter().enumerate() {
            let b = [y[3 * e], y[3 * e + 1], y[3 * e + 2]];
            let s = b[0] + b[1] + b[2];
            for i in 0..3 {
                // Inverse local mass matrix: M^-1 = 3/|K| (4I - ones).
                out.vals[e][i] = -(3.0 / el.area) * (4.0 * b[i] - s);
            }
        }
        out
    }
}

/// Both sides of the kinetic-flux identity: the convective face terms of the
/// momentum and mass equations tested against u_hat and |u_hat|^2/2 collapse
/// to a strictly dissipative right side. Returns (lhs, rhs); they agree to
/// rounding for any density and velocity.
pub fn flux_identity_sides(mesh: &Mesh, rho: &FieldQ, u: &FieldV, h_eps: f64) -> (f64, f64) {
    let hat = u.hat(mesh);
    let m: Vec<[f64; 2]> = hat
        .iter()
        .zip(&rho.vals)
        .map(|(h, r)| [r * h[0], r * h[1]])
        .collect();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (f, face) in mesh.faces.iter().enumerate() {
        let vn = dot(u.face_velocity(f), face.normal);
        let (k, l) = (face.elem_in, face.elem_out);
        let fv = face_flux_vector(mesh, &m, u, f, h_eps);
        let fs = face_flux_scalar(mesh, rho, u, f, h_eps);
        let jump_hat = [hat[l][0] - hat[k][0], hat[l][1] - hat[k][1]];
        let jump_ke = 0.5 * (dot(hat[l], hat[l]) - dot(hat[k], hat[k]));
        lhs += face.area * (fv[0] * jump_hat[0] + fv[1] * jump_hat[1] - fs * jump_ke);
        let r_up = upwind_value(rho.vals[k], rho.vals[l], vn);
        let r_avg = 0.5 * (rho.vals[k] + rho.vals[l]);
        let jj = dot(jump_hat, jump_hat);
        rhs += -face.area * (0.5 * r_up * vn.abs() + h_eps * r_avg) * jj;
    }
    (lhs, rhs)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "jump penalty exponent beta must be positive, got {beta}"
        )))
    }
}

pub fn flatten(v: &FieldX) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * v.vals.len());
    for c in &v.vals {
        out.extend_from_slice(c);
    }
    out
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
