//! Named analytic initial data. All presets are periodic on [-1,1]^2 with
//! strictly positive density, so any of them can seed any mesh size.

use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub rho: fn([f64; 2]) -> f64,
    pub u: fn([f64; 2]) -> [f64; 2],
    pub c: fn([f64; 2]) -> f64,
}

fn zero_v(_: [f64; 2]) -> [f64; 2] {
    [0.0, 0.0]
}

fn one(_: [f64; 2]) -> f64 {
    1.0
}

fn zero(_: [f64; 2]) -> f64 {
    0.0
}

/// Fold a coordinate into the fundamental cell [-1, 1).
fn wrap(x: f64) -> f64 {
    x - 2.0 * (x / 2.0).round()
}

/// Disk of one phase inside the other, tanh interface of width 0.15.
/// Coordinates are folded into the fundamental cell, so the profile is
/// exactly periodic; the tails meet smoothly at the seam.
fn blob_c(x: [f64; 2]) -> f64 {
    let (wx, wy) = (wrap(x[0]), wrap(x[1]));
    let r = (wx * wx + wy * wy).sqrt();
    ((0.5 - r) / 0.15).tanh()
}

/// Periodic smooth density hill centered at the origin, range [1, 1.4].
fn bump_rho(x: [f64; 2]) -> f64 {
    let qx = (0.5 * PI * x[0]).cos();
    let qy = (0.5 * PI * x[1]).cos();
    1.0 + 0.4 * qx * qx * qy * qy
}

/// Horizontal shear layer with a weak vertical perturbation.
fn shear_u(x: [f64; 2]) -> [f64; 2] {
    [0.5 * (PI * x[1]).sin(), 0.05 * (2.0 * PI * x[0]).sin()]
}

fn shear_c(x: [f64; 2]) -> f64 {
    0.3 * (PI * x[0]).sin()
}

fn smooth_rho(x: [f64; 2]) -> f64 {
    1.0 + 0.2 * (PI * x[0]).cos() * (PI * x[1]).sin()
}

fn smooth_u(x: [f64; 2]) -> [f64; 2] {
    [0.3 * (PI * x[1]).sin(), -0.3 * (PI * x[0]).cos()]
}

fn smooth_c(x: [f64; 2]) -> f64 {
    0.5 * (PI * x[0]).sin() * (PI * x[1]).sin()
}

pub const ALL: &[Preset] = &[
    Preset {
        name: "constant",
        rho: one,
        u: zero_v,
        c: zero,
    },
    Preset {
        name: "phase-blob",
        rho: one,
        u: zero_v,
        c: blob_c,
    },
    Preset {
        name: "density-bump",
        rho: bump_rho,
        u: zero_v,
        c: zero,
    },
    Preset {
        name: "shear",
        rho: one,
        u: shear_u,
        c: shear_c,
    },
    Preset {
        name: "smooth",
        rho: smooth_rho,
        u: smooth_u,
        c: smooth_c,
    },
];

pub fn by_name(name: &str) -> Result<&'static Preset> {
    ALL.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = ALL.iter().map(|p| p.name).collect();
        Error::config(format!(
            "unknown preset '{name}'; available: {}",
            names.join(", ")
        ))
    })
}
