//! Small complex linear-algebra helpers.

use crate::{CMatrix, CVector, Complex64};

/// Moore-Penrose pseudo-inverse with its numerical rank.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: CMatrix,
    pub rank: usize,
}

/// Pseudo-inverse through the SVD. Singular values at or below
/// `max(rows, cols) · ε · σ_max` are treated as zero.
pub fn pseudo_inverse(m: &CMatrix) -> PseudoInverse {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse { matrix: CMatrix::zeros(cols, rows), rank: 0 };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let s = &svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = rows.max(cols) as f64 * f64::EPSILON * s_max;
    let mut out = CMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (i, &sv) in s.iter().enumerate() {
        if sv <= cutoff || sv == 0.0 {
            continue;
        }
        rank += 1;
        let inv = 1.0 / sv;
        // V Σ⁺ Uᴴ accumulated one rank-one term at a time
        for r in 0..cols {
            let vr = v_t[(i, r)].conj() * inv;
            for c in 0..rows {
                out[(r, c)] += vr * u[(c, i)].conj();
            }
        }
    }
    PseudoInverse { matrix: out, rank }
}

/// Real part of the Hermitian form aᴴ C a, with the imaginary residue.
pub fn hermitian_form(a: &CVector, c: &CMatrix) -> (f64, f64) {
    let ca = c * a;
    let v: Complex64 = a.dotc(&ca);
    (v.re, v.im)
}
