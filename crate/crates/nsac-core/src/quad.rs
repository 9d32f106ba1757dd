//! Fixed quadrature rules.
//!
//! Every assembly routine in the crate draws from the rules below, so that
//! integrals of the same quantity evaluated in different places agree to the
//! last bit. In particular all nonlinear volume terms (double-well potential,
//! its splitting, phase transport, capillary force) use the single degree-4
//! rule [`TRI_DEG4`]; the per-step energy bookkeeping closes exactly only
//! because both sides sample those integrands at identical nodes.

/// Symmetric rule on a triangle. Barycentric nodes with weights that sum to
/// one; multiply by the element area to integrate.
#[derive(Clone, Copy, Debug)]
pub struct TriRule {
    pub bary: &'static [[f64; 3]],
    pub weights: &'static [f64],
    /// Highest polynomial degree integrated exactly.
    pub degree: usize,
}

impl TriRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical node positions for a triangle with the given vertices.
    pub fn nodes(&self, verts: &[[f64; 2]; 3]) -> Vec<[f64; 2]> {
        self.bary
            .iter()
            .map(|b| {
                [
                    b[0] * verts[0][0] + b[1] * verts[1][0] + b[2] * verts[2][0],
                    b[0] * verts[0][1] + b[1] * verts[1][1] + b[2] * verts[2][1],
                ]
            })
            .collect()
    }
}

/// Edge-midpoint rule, exact for quadratics. Used for the cellwise and
/// elementwise-linear projections.
pub const TRI_DEG2: TriRule = TriRule {
    bary: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: &[THIRD, THIRD, THIRD],
    degree: 2,
};

const THIRD: f64 = 1.0 / 3.0;

const D4_A: f64 = 0.445_948_490_915_965;
const D4_B: f64 = 0.091_576_213_509_771;
const D4_WA: f64 = 0.223_381_589_678_011;
const D4_WB: f64 = 0.109_951_743_655_322;

/// Six-point degree-4 rule (Dunavant). The shared rule for all nonlinear
/// volume integrals.
pub const TRI_DEG4: TriRule = TriRule {
    bary: &[
        [1.0 - 2.0 * D4_A, D4_A, D4_A],
        [D4_A, 1.0 - 2.0 * D4_A, D4_A],
        [D4_A, D4_A, 1.0 - 2.0 * D4_A],
        [1.0 - 2.0 * D4_B, D4_B, D4_B],
        [D4_B, 1.0 - 2.0 * D4_B, D4_B],
        [D4_B, D4_B, 1.0 - 2.0 * D4_B],
    ],
    weights: &[D4_WA, D4_WA, D4_WA, D4_WB, D4_WB, D4_WB],
    degree: 4,
};

const D6_A: f64 = 0.249_286_745_170_910;
const D6_B: f64 = 0.063_089_014_491_502;
const D6_C1: f64 = 0.310_352_451_033_785;
const D6_C2: f64 = 0.636_502_499_121_399;
const D6_C3: f64 = 1.0 - D6_C1 - D6_C2;
const D6_WA: f64 = 0.116_786_275_726_379;
const D6_WB: f64 = 0.050_844_906_370_207;
const D6_WC: f64 = 0.082_851_075_618_374;

/// Twelve-point degree-6 rule (Dunavant). Reserved for error measurement
/// (projection studies, probe integrals), never for scheme assembly.
pub const TRI_DEG6: TriRule = TriRule {
    bary: &[
        [1.0 - 2.0 * D6_A, D6_A, D6_A],
        [D6_A, 1.0 - 2.0 * D6_A, D6_A],
        [D6_A, D6_A, 1.0 - 2.0 * D6_A],
        [1.0 - 2.0 * D6_B, D6_B, D6_B],
        [D6_B, 1.0 - 2.0 * D6_B, D6_B],
        [D6_B, D6_B, 1.0 - 2.0 * D6_B],
        [D6_C1, D6_C2, D6_C3],
        [D6_C2, D6_C3, D6_C1],
        [D6_C3, D6_C1, D6_C2],
        [D6_C2, D6_C1, D6_C3],
        [D6_C1, D6_C3, D6_C2],
        [D6_C3, D6_C2, D6_C1],
    ],
    weights: &[
        D6_WA, D6_WA, D6_WA, D6_WB, D6_WB, D6_WB, D6_WC, D6_WC, D6_WC, D6_WC, D6_WC, D6_WC,
    ],
    degree: 6,
};

/// Two-point Gauss parameters on the unit interval, exact for cubics. Face
/// integrands in the penalty form are at most quadratic, so these are exact.
pub const EDGE_GAUSS2: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // 0.5 - 1/(2 sqrt 3)
    0.5 + 0.288_675_134_594_812_9,
];
