//! Field snapshots and CSV emission.
//!
//! Snapshots are plain text: a header `nsac-field <TAG> n=<n> d=<d> t=<time>`
//! followed by one line per dof (element or face id first, then the values).
//! All floats are written with 17 significant digits, which round-trips f64
//! exactly, so a state restored from its snapshot is bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::field::{FieldQ, FieldV, FieldX};
use crate::mesh::Mesh;
use crate::scheme::State;

pub const SNAPSHOT_MAGIC: &str = "nsac-field";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(tag: &str, mesh: &Mesh, t: f64) -> String {
    format!("{SNAPSHOT_MAGIC} {tag} n={} d={} t={}", mesh.n, mesh.dim, fmt(t))
}

struct HeaderInfo {
    tag: String,
    t: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, first: &str, mesh: &Mesh) -> Result<HeaderInfo> {
    let toks: Vec<&str> = first.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != SNAPSHOT_MAGIC {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{SNAPSHOT_MAGIC} <TAG> n=<n> d=<d> t=<t>'"),
        ));
    }
    let field = |tok: &str, key: &str| -> Result<String> {
        tok.strip_prefix(key)
            .map(str::to_string)
            .ok_or_else(|| parse_err(path, 1, format!("expected '{key}<value>', got '{tok}'")))
    };
    let n: usize = field(toks[2], "n=")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad mesh n: {e}")))?;
    let d: usize = field(toks[3], "d=")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad dimension: {e}")))?;
    let t: f64 = field(toks[4], "t=")?
        .parse()
        .map_err(|e| parse_err(path, 1, format!("bad time: {e}")))?;
    if n != mesh.n || d != mesh.dim {
        return Err(parse_err(
            path,
            1,
            format!(
                "snapshot is for n={n}, d={d} but the mesh is n={}, d={}",
                mesh.n, mesh.dim
            ),
        ));
    }
    Ok(HeaderInfo {
        tag: toks[1].to_string(),
        t,
    })
}

/// Parse the body lines of a snapshot: `id v0 [v1 ...]`, ids dense from 0.
fn parse_rows(path: &Path, text: &str, expect_rows: usize, expect_vals: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(expect_rows);
    for (i, line) in text.lines().enumerate().skip(1) {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != expect_vals + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected id + {expect_vals} values, got {} tokens", toks.len()),
            ));
        }
        let id: usize = toks[0]
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad dof id: {e}")))?;
        if id != rows.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("dof ids must be dense and ordered; expected {}, got {id}", rows.len()),
            ));
        }
        let mut vals = Vec::with_capacity(expect_vals);
        for tok in &toks[1..] {
            vals.push(
                tok.parse::<f64>()
                    .map_err(|e| parse_err(path, lineno, format!("bad value '{tok}': {e}")))?,
            );
        }
        rows.push(vals);
    }
    if rows.len() != expect_rows {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("expected {expect_rows} dof lines, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

pub fn write_q(path: &Path, mesh: &Mesh, f: &FieldQ, t: f64) -> Result<()> {
    let mut out = header("Q", mesh, t);
    out.push('\n');
    for (e, v) in f.vals.iter().enumerate() {
        out.push_str(&format!("{e} {}\n", fmt(*v)));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_v(path: &Path, mesh: &Mesh, f: &FieldV, t: f64) -> Result<()> {
    let mut out = header("V", mesh, t);
    out.push('\n');
    for (fc, v) in f.vals.iter().enumerate() {
        out.push_str(&format!("{fc} {} {}\n", fmt(v[0]), fmt(v[1])));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_x(path: &Path, mesh: &Mesh, f: &FieldX, t: f64) -> Result<()> {
    let mut out = header("X", mesh, t);
    out.push('\n');
    for (e, v) in f.vals.iter().enumerate() {
        out.push_str(&format!("{e} {} {} {}\n", fmt(v[0]), fmt(v[1]), fmt(v[2])));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_q(path: &Path, mesh: &Mesh) -> Result<(f64, FieldQ)> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    let hd = parse_header(path, first, mesh)?;
    if hd.tag != "Q" {
        return Err(parse_err(path, 1, format!("expected a Q snapshot, got tag '{}'", hd.tag)));
    }
    let rows = parse_rows(path, &text, mesh.elements.len(), 1)?;
    let mut f = FieldQ::zeros(mesh);
    for (e, row) in rows.iter().enumerate() {
        f.vals[e] = row[0];
    }
    Ok((hd.t, f))
}

pub fn read_v(path: &Path, mesh: &Mesh) -> Result<(f64, FieldV)> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    let hd = parse_header(path, first, mesh)?;
    if hd.tag != "V" {
        return Err(parse_err(path, 1, format!("expected a V snapshot, got tag '{}'", hd.tag)));
    }
    let rows = parse_rows(path, &text, mesh.faces.len(), 2)?;
    let mut f = FieldV::zeros(mesh);
    for (fc, row) in rows.iter().enumerate() {
        f.vals[fc] = [row[0], row[1]];
    }
    Ok((hd.t, f))
}

pub fn read_x(path: &Path, mesh: &Mesh) -> Result<(f64, FieldX)> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    let hd = parse_header(path, first, mesh)?;
    if hd.tag != "X" {
        return Err(parse_err(path, 1, format!("expected an X snapshot, got tag '{}'", hd.tag)));
    }
    let rows = parse_rows(path, &text, mesh.elements.len(), 3)?;
    let mut f = FieldX::zeros(mesh);
    for (e, row) in rows.iter().enumerate() {
        f.vals[e] = [row[0], row[1], row[2]];
    }
    Ok((hd.t, f))
}

/// Write the three field snapshots of a state as `<stem>.{rho,u,c}.snap`.
pub fn write_state(dir: &Path, stem: &str, mesh: &Mesh, s: &State) -> Result<[PathBuf; 3]> {
    let paths = [
        dir.join(format!("{stem}.rho.snap")),
        dir.join(format!("{stem}.u.snap")),
        dir.join(format!("{stem}.c.snap")),
    ];
    write_q(&paths[0], mesh, &s.rho, s.t)?;
    write_v(&paths[1], mesh, &s.u, s.t)?;
    write_x(&paths[2], mesh, &s.c, s.t)?;
    Ok(paths)
}

/// Read the three snapshots of a saved state; the times must agree exactly.
pub fn read_state_fields(
    rho_path: &Path,
    u_path: &Path,
    c_path: &Path,
    mesh: &Mesh,
) -> Result<(f64, FieldQ, FieldV, FieldX)> {
    let (t0, rho) = read_q(rho_path, mesh)?;
    let (t1, u) = read_v(u_path, mesh)?;
    let (t2, c) = read_x(c_path, mesh)?;
    if t0 != t1 || t0 != t2 {
        return Err(Error::config(format!(
            "snapshot times disagree: rho at t={t0}, u at t={t1}, c at t={t2}"
        )));
    }
    Ok((t0, rho, u, c))
}

pub const ENERGY_CSV_HEADER: &str = "k,t,E,KE,P_int,F_int,grad_c_seminorm,visc_diss,div_diss,ac_diss,dnum_1,dnum_2,dnum_3,dnum_4,dnum_5,dnum_6,dnum_7,r_E,mass,min_rho";

pub fn energy_csv_row(r: &EnergyReport) -> String {
    let mut cols = vec![r.k.to_string(), fmt(r.t)];
    for v in [
        r.e_total,
        r.kinetic,
        r.internal,
        r.phase,
        r.grad_c_seminorm,
        r.visc_diss,
        r.div_diss,
        r.ac_diss,
    ] {
        cols.push(fmt(v));
    }
    for v in r.dnum {
        cols.push(fmt(v));
    }
    for v in [r.r_e, r.mass, r.min_rho] {
        cols.push(fmt(v));
    }
    cols.join(",")
}

pub fn energy_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from(ENERGY_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&energy_csv_row(r));
        out.push('\n');
    }
    out
}

pub fn write_energy_csv(path: &Path, reports: &[EnergyReport]) -> Result<()> {
    fs::write(path, energy_csv(reports))?;
    Ok(())
}
