//! Uniform periodic triangulations of the square torus [-1,1]^2.
//!
//! The mesh is an n x n grid of squares, each split into two triangles along
//! the lower-left to upper-right diagonal. Opposite boundary vertices are
//! identified at build time, so every face is an interior face with exactly
//! two neighboring elements. Element geometry is stored in a local chart
//! (coordinates are *not* wrapped); faces that cross the periodic seam carry
//! the chart offset of their far element instead.

use crate::error::{Error, Result};

pub type ElemId = usize;
pub type FaceId = usize;

#[derive(Clone, Debug)]
pub struct Element {
    /// Vertex coordinates in this element's chart, counterclockwise.
    pub verts: [[f64; 2]; 3],
    /// Periodic identification class of each vertex.
    pub vertex_class: [usize; 3],
    pub area: f64,
    pub diameter: f64,
    pub centroid: [f64; 2],
    /// Gradients of the barycentric coordinates (constant on the element).
    pub grad_lambda: [[f64; 2]; 3],
    /// faces[i] is the face opposite local vertex i.
    pub faces: [FaceId; 3],
    /// +1.0 where this element is the face's "in" side, -1.0 otherwise.
    pub face_sign: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Face {
    pub elem_in: ElemId,
    pub elem_out: ElemId,
    /// Opposite-vertex index of this face within elem_in / elem_out.
    pub local_in: usize,
    pub local_out: usize,
    /// Endpoints in elem_in's chart.
    pub ends: [[f64; 2]; 2],
    /// Length of the face.
    pub area: f64,
    /// Unit normal pointing from elem_in toward elem_out.
    pub normal: [f64; 2],
    pub midpoint: [f64; 2],
    /// Chart offset of elem_out: a point x in elem_in's chart corresponds to
    /// x - wrap in elem_out's stored chart. Zero away from the periodic seam.
    pub wrap: [f64; 2],
}

impl Face {
    /// Map a point from the in-chart to elem_out's stored chart.
    pub fn to_out_chart(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0] - self.wrap[0], x[1] - self.wrap[1]]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub n: usize,
    pub dim: usize,
    pub elements: Vec<Element>,
    pub faces: Vec<Face>,
    pub n_vertex_classes: usize,
    /// Mesh size: the largest element diameter.
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshStats {
    pub h: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub quasi_uniformity_ratio: f64,
    pub n_elements: usize,
    pub n_faces: usize,
    pub n_vertex_classes: usize,
    pub total_volume: f64,
}

/// Pre-normalized face record used during construction.
struct RawFace {
    a: ElemId,
    b: ElemId,
    local_a: usize,
    local_b: usize,
    /// Endpoints in a's chart.
    ends: [[f64; 2]; 2],
    /// Chart offset of b relative to a.
    wrap: [f64; 2],
}

impl Mesh {
    /// Build the uniform periodic triangulation with `n` squares per axis.
    pub fn uniform_torus(n: usize) -> Result<Mesh> {
        Self::uniform_torus_dim(n, 2)
    }

    /// Dimension-checked variant. Only d = 2 is implemented; d = 3 is
    /// reserved (the split-cube construction slots in here if ever needed).
    pub fn uniform_torus_dim(n: usize, dim: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::config("mesh resolution n must be at least 1"));
        }
        match dim {
            2 => Ok(Self::build_2d(n)),
            3 => Err(Error::config(
                "d = 3 meshes are not implemented; only d = 2 is supported",
            )),
            d => Err(Error::config(format!("dimension must be 2 or 3, got {d}"))),
        }
    }

    fn build_2d(n: usize) -> Mesh {
        let s = 2.0 / n as f64;
        let vclass = |i: usize, j: usize| (j % n) * n + (i % n);
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let x0 = -1.0 + i as f64 * s;
                let y0 = -1.0 + j as f64 * s;
                let v00 = [x0, y0];
                let v10 = [x0 + s, y0];
                let v01 = [x0, y0 + s];
                let v11 = [x0 + s, y0 + s];
                // Lower-right triangle, then upper-left; both counterclockwise.
                elements.push(Self::element(
                    [v00, v10, v11],
                    [vclass(i, j), vclass(i + 1, j), vclass(i + 1, j + 1)],
                ));
                elements.push(Self::element(
                    [v00, v11, v01],
                    [vclass(i, j), vclass(i + 1, j + 1), vclass(i, j + 1)],
                ));
            }
        }

        // Each square owns three faces: its diagonal, its bottom edge and its
        // left edge; the other edges belong to the neighboring squares.
        let elem0 = |i: usize, j: usize| 2 * (j * n + i);
        let mut raw = Vec::with_capacity(3 * n * n);
        for j in 0..n {
            for i in 0..n {
                let x0 = -1.0 + i as f64 * s;
                let y0 = -1.0 + j as f64 * s;
                let t0 = elem0(i, j);
                let t1 = t0 + 1;
                // Diagonal: T0's edge opposite local vertex 1, T1's opposite 2.
                raw.push(RawFace {
                    a: t0,
                    b: t1,
                    local_a: 1,
                    local_b: 2,
                    ends: [[x0, y0], [x0 + s, y0 + s]],
                    wrap: [0.0, 0.0],
                });
                // Bottom edge: pairs with the top edge of the square below.
                let jb = (j + n - 1) % n;
                raw.push(RawFace {
                    a: t0,
                    b: elem0(i, jb) + 1,
                    local_a: 2,
                    local_b: 0,
                    ends: [[x0, y0], [x0 + s, y0]],
                    wrap: [0.0, if j == 0 { -2.0 } else { 0.0 }],
                });
                // Left edge: pairs with the right edge of the square to the left.
                let il = (i + n - 1) % n;
                raw.push(RawFace {
                    a: t1,
                    b: elem0(il, j),
                    local_a: 1,
                    local_b: 0,
                    ends: [[x0, y0 + s], [x0, y0]],
                    wrap: [if i == 0 { -2.0 } else { 0.0 }, 0.0],
                });
            }
        }

        let mut faces = Vec::with_capacity(raw.len());
        for rf in raw {
            faces.push(Self::orient_face(&elements, rf));
        }

        for (fid, f) in faces.iter().enumerate() {
            // Filled once per (element, local edge); every slot is visited
            // exactly once because each element has three distinct faces.
            let e_in = f.elem_in;
            let e_out = f.elem_out;
            // Safe split: a face may connect an element to itself only via
            // distinct local edges, which cannot happen here (elem_in != elem_out
            // on this mesh family), but keep the assignment order-insensitive.
            {
                let el = &mut elements[e_in];
                el.faces[f.local_in] = fid;
                el.face_sign[f.local_in] = 1.0;
            }
            {
                let el = &mut elements[e_out];
                el.faces[f.local_out] = fid;
                el.face_sign[f.local_out] = -1.0;
            }
        }

        let h = elements.iter().map(|e| e.diameter).fold(0.0, f64::max);
        Mesh {
            n,
            dim: 2,
            elements,
            faces,
            n_vertex_classes: n * n,
            h,
        }
    }

    fn element(verts: [[f64; 2]; 3], vertex_class: [usize; 3]) -> Element {
        let e1 = sub(verts[1], verts[0]);
        let e2 = sub(verts[2], verts[0]);
        let twice_area = e1[0] * e2[1] - e1[1] * e2[0];
        debug_assert!(twice_area > 0.0, "element vertices must be counterclockwise");
        let area = 0.5 * twice_area;
        let diameter = [
            dist(verts[0], verts[1]),
            dist(verts[1], verts[2]),
            dist(verts[2], verts[0]),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let centroid = [
            (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0,
            (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0,
        ];
        // grad lambda_i is the inward rotation of the opposite edge.
        let mut grad_lambda = [[0.0; 2]; 3];
        for i in 0..3 {
            let p = verts[(i + 1) % 3];
            let q = verts[(i + 2) % 3];
            let edge = sub(q, p);
            grad_lambda[i] = [-edge[1] / twice_area, edge[0] / twice_area];
        }
        Element {
            verts,
            vertex_class,
            area,
            diameter,
            centroid,
            grad_lambda,
            faces: [usize::MAX; 3],
            face_sign: [0.0; 3],
        }
    }

    /// Fix the in/out convention (lower element index is "in") and derive the
    /// metric data.
    fn orient_face(elements: &[Element], rf: RawFace) -> Face {
        let (elem_in, elem_out, local_in, local_out, ends, wrap) = if rf.a <= rf.b {
            (rf.a, rf.b, rf.local_a, rf.local_b, rf.ends, rf.wrap)
        } else {
            // Re-express the endpoints in b's chart and flip the offset.
            let ends = [
                sub(rf.ends[0], rf.wrap),
                sub(rf.ends[1], rf.wrap),
            ];
            (rf.b, rf.a, rf.local_b, rf.local_a, ends, neg(rf.wrap))
        };
        let t = sub(ends[1], ends[0]);
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        let mut normal = [t[1] / len, -t[0] / len];
        let midpoint = [
            0.5 * (ends[0][0] + ends[1][0]),
            0.5 * (ends[0][1] + ends[1][1]),
        ];
        let c_in = elements[elem_in].centroid;
        if normal[0] * (midpoint[0] - c_in[0]) + normal[1] * (midpoint[1] - c_in[1]) < 0.0 {
            normal = neg(normal);
        }
        Face {
            elem_in,
            elem_out,
            local_in,
            local_out,
            ends,
            area: len,
            normal,
            midpoint,
            wrap,
        }
    }

    pub fn stats(&self) -> MeshStats {
        let h_min = self
            .elements
            .iter()
            .map(|e| e.diameter)
            .fold(f64::INFINITY, f64::min);
        let h_max = self.h;
        MeshStats {
            h: self.h,
            h_min,
            h_max,
            quasi_uniformity_ratio: h_max / h_min,
            n_elements: self.elements.len(),
            n_faces: self.faces.len(),
            n_vertex_classes: self.n_vertex_classes,
            total_volume: self.elements.iter().map(|e| e.area).sum(),
        }
    }

    /// In/out neighbors and unit normal of a face.
    pub fn face_sides(&self, f: FaceId) -> Result<(ElemId, ElemId, [f64; 2])> {
        let face = self
            .faces
            .get(f)
            .ok_or_else(|| Error::config(format!("face id {f} out of range")))?;
        Ok((face.elem_in, face.elem_out, face.normal))
    }

    /// Element containing the point (after wrapping into the periodic cell).
    /// Points on internal edges resolve to the lower-right triangle.
    pub fn locate(&self, x: [f64; 2]) -> ElemId {
        let n = self.n as f64;
        let s = 2.0 / n;
        let wrapv = |v: f64| {
            let mut w = (v + 1.0).rem_euclid(2.0);
            if !(0.0..2.0).contains(&w) {
                w = 0.0;
            }
            w
        };
        let xs = wrapv(x[0]);
        let ys = wrapv(x[1]);
        let i = ((xs / s).floor() as usize).min(self.n - 1);
        let j = ((ys / s).floor() as usize).min(self.n - 1);
        let dx = xs - i as f64 * s;
        let dy = ys - j as f64 * s;
        let t = usize::from(dy > dx);
        2 * (j * self.n + i) + t
    }

    /// Barycentric coordinates of a point with respect to an element, using
    /// that element's chart.
    pub fn barycentric(&self, e: ElemId, x: [f64; 2]) -> [f64; 3] {
        let el = &self.elements[e];
        let mut lam = [0.0; 3];
        for i in 0..3 {
            let g = el.grad_lambda[i];
            lam[i] = 1.0 / 3.0
                + g[0] * (x[0] - el.centroid[0])
                + g[1] * (x[1] - el.centroid[1]);
        }
        lam
    }

    /// Plain-text dump of the full topology, used by golden-file tests.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(
            out,
            "nsac-mesh n={} d={} elements={} faces={} vertex-classes={}",
            self.n,
            self.dim,
            self.elements.len(),
            self.faces.len(),
            self.n_vertex_classes
        )
        .unwrap();
        writeln!(out, "# elem <id> <class0> <class1> <class2> <x0> <y0> <x1> <y1> <x2> <y2> <area> <diameter>").unwrap();
        for (id, e) in self.elements.iter().enumerate() {
            writeln!(
                out,
                "elem {} {} {} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                id,
                e.vertex_class[0],
                e.vertex_class[1],
                e.vertex_class[2],
                e.verts[0][0],
                e.verts[0][1],
                e.verts[1][0],
                e.verts[1][1],
                e.verts[2][0],
                e.verts[2][1],
                e.area,
                e.diameter,
            )
            .unwrap();
        }
        writeln!(out, "# face <id> <in> <out> <length> <nx> <ny> <mx> <my> <wrapx> <wrapy>").unwrap();
        for (id, f) in self.faces.iter().enumerate() {
            writeln!(
                out,
                "face {} {} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                id,
                f.elem_in,
                f.elem_out,
                f.area,
                f.normal[0],
                f.normal[1],
                f.midpoint[0],
                f.midpoint[1],
                f.wrap[0],
                f.wrap[1],
            )
            .unwrap();
        }
        out
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn neg(a: [f64; 2]) -> [f64; 2] {
    [-a[0], -a[1]]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(n: usize) -> Mesh {
        Mesh::uniform_torus(n).unwrap()
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(Mesh::uniform_torus(0).is_err());
        assert!(Mesh::uniform_torus_dim(2, 4).is_err());
        assert!(Mesh::uniform_torus_dim(2, 3).is_err());
    }

    #[test]
    fn counts_n1() {
        // Hand enumeration: one square gives 2 triangles, a single vertex
        // class, and 3 faces, every one of them between the two triangles.
        let m = build(1);
        assert_eq!(m.elements.len(), 2);
        assert_eq!(m.n_vertex_classes, 1);
        assert_eq!(m.faces.len(), 3);
        for f in &m.faces {
            assert_ne!(f.elem_in, f.elem_out);
        }
        // Torus Euler characteristic: V - E + F = 0.
        assert_eq!(1 + 2, 3);
    }

    #[test]
    fn counts_n2() {
        // Hand enumeration of the 2x2 grid with periodic identification.
        let m = build(2);
        assert_eq!(m.elements.len(), 8);
        assert_eq!(m.n_vertex_classes, 4);
        assert_eq!(m.faces.len(), 12);
        assert_eq!(4 - 12 + 8, 0);
    }

    #[test]
    fn total_area_is_four() {
        for n in [1, 2, 3, 4, 7] {
            let stats = build(n).stats();
            assert!(
                (stats.total_volume - 4.0).abs() < 1e-12 * 4.0,
                "n={n}: {}",
                stats.total_volume
            );
        }
    }

    #[test]
    fn uniform_family_is_uniform() {
        for n in [2, 4] {
            let stats = build(n).stats();
            assert_eq!(stats.quasi_uniformity_ratio, 1.0);
            assert!(stats.h_min > 0.0);
        }
        // Refining n -> 2n halves every diameter.
        let h2 = build(2).h;
        let h4 = build(4).h;
        assert!((h2 / h4 - 2.0).abs() < 1e-13);
        assert!((build(2).stats().h - 2.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn normals_unit_and_consistent() {
        let m = build(3);
        for f in &m.faces {
            let norm = (f.normal[0] * f.normal[0] + f.normal[1] * f.normal[1]).sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
            assert!(f.elem_in < f.elem_out || f.elem_in == f.elem_out);
        }
    }

    #[test]
    fn face_sides_convention() {
        let m = build(2);
        let (k_in, k_out, n) = m.face_sides(0).unwrap();
        assert!(k_in < k_out);
        // Querying the same face always returns the same signed normal; the
        // out-side element sees it through face_sign = -1.
        let el_out = &m.elements[k_out];
        let slot = el_out.faces.iter().position(|&f| f == 0).unwrap();
        assert_eq!(el_out.face_sign[slot], -1.0);
        assert_eq!(m.elements[k_in].face_sign[m.elements[k_in].faces.iter().position(|&f| f == 0).unwrap()], 1.0);
        assert!(n[0].is_finite() && n[1].is_finite());
        assert!(m.face_sides(usize::MAX).is_err());
    }

    #[test]
    fn periodic_faces_offset_by_domain_length() {
        for n in [1, 2, 3] {
            let m = build(n);
            let mut wrapped = 0;
            for f in &m.faces {
                if f.wrap != [0.0, 0.0] {
                    wrapped += 1;
                    let mag = f.wrap[0].abs() + f.wrap[1].abs();
                    assert!((mag - 2.0).abs() < 1e-15, "offset must be one period");
                }
            }
            // One wrapped bottom face and one wrapped left face per boundary square.
            assert_eq!(wrapped, 2 * n);
        }
    }

    #[test]
    fn closed_surface_identity() {
        // sum over the faces of an element of sign * |sigma| * n is zero.
        for n in [1, 2, 5] {
            let m = build(n);
            for e in &m.elements {
                let mut acc = [0.0_f64; 2];
                for i in 0..3 {
                    let f = &m.faces[e.faces[i]];
                    acc[0] += e.face_sign[i] * f.area * f.normal[0];
                    acc[1] += e.face_sign[i] * f.area * f.normal[1];
                }
                assert!(acc[0].abs() < 1e-12 && acc[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn topology_round_trip() {
        let m = build(4);
        for (fid, f) in m.faces.iter().enumerate() {
            assert_eq!(m.elements[f.elem_in].faces[f.local_in], fid);
            assert_eq!(m.elements[f.elem_out].faces[f.local_out], fid);
        }
    }

    #[test]
    fn face_endpoints_match_in_element_edge() {
        let m = build(3);
        for f in &m.faces {
            let el = &m.elements[f.elem_in];
            let p = el.verts[(f.local_in + 1) % 3];
            let q = el.verts[(f.local_in + 2) % 3];
            let same = (dist(p, f.ends[0]) < 1e-14 && dist(q, f.ends[1]) < 1e-14)
                || (dist(p, f.ends[1]) < 1e-14 && dist(q, f.ends[0]) < 1e-14);
            assert!(same);
            // And in the out element's chart after shifting by the offset.
            let el_out = &m.elements[f.elem_out];
            let a = f.to_out_chart(f.ends[0]);
            let b = f.to_out_chart(f.ends[1]);
            let p = el_out.verts[(f.local_out + 1) % 3];
            let q = el_out.verts[(f.local_out + 2) % 3];
            let same = (dist(p, a) < 1e-14 && dist(q, b) < 1e-14)
                || (dist(p, b) < 1e-14 && dist(q, a) < 1e-14);
            assert!(same);
        }
    }

    #[test]
    fn locate_and_barycentric() {
        let m = build(4);
        for (eid, el) in m.elements.iter().enumerate() {
            let c = el.centroid;
            assert_eq!(m.locate(c), eid);
            let lam = m.barycentric(eid, c);
            for l in lam {
                assert!((l - 1.0 / 3.0).abs() < 1e-14);
            }
            let lam0 = m.barycentric(eid, el.verts[0]);
            assert!((lam0[0] - 1.0).abs() < 1e-13 && lam0[1].abs() < 1e-13 && lam0[2].abs() < 1e-13);
        }
        // Wrapping: a point one period away lands in the same element.
        let e = m.locate([0.3, -0.4]);
        assert_eq!(m.locate([0.3 + 2.0, -0.4 - 2.0]), e);
    }

    #[test]
    fn grad_lambda_is_dual_to_vertices() {
        let m = build(2);
        for el in &m.elements {
            for i in 0..3 {
                for j in 0..3 {
                    // lambda_i(v_j) = delta_ij reproduced through the stored gradients.
                    let lam = 1.0 / 3.0
                        + el.grad_lambda[i][0] * (el.verts[j][0] - el.centroid[0])
                        + el.grad_lambda[i][1] * (el.verts[j][1] - el.centroid[1]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((lam - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn dump_round_trips_key_counts() {
        let m = build(2);
        let text = m.dump_text();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "nsac-mesh n=2 d=2 elements=8 faces=12 vertex-classes=4");
        assert_eq!(text.lines().filter(|l| l.starts_with("elem ")).count(), 8);
        assert_eq!(text.lines().filter(|l| l.starts_with("face ")).count(), 12);
    }
}
