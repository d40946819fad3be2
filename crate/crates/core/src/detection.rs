//! MRC and ZF linear detectors and the instantaneous SINR they achieve.

use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_form, pseudo_inverse};
use crate::{CMatrix, CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Mrc,
    Zf,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Mrc => "mrc",
            DetectorKind::Zf => "zf",
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrc" => Ok(DetectorKind::Mrc),
            "zf" => Ok(DetectorKind::Zf),
            other => Err(Error::InvalidConfig(format!("unknown detector `{other}`"))),
        }
    }
}

/// Components of the SINR for one tag, all linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrBreakdown {
    pub signal: f64,
    pub intra: f64,
    pub inter: f64,
    pub noise: f64,
    pub sinr: f64,
}

/// Matched filter: the combiner is the desired channel itself.
pub fn mrc_operator(xi: &CVector) -> Result<CVector> {
    if xi.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::DegenerateChannel("MRC needs a nonzero compound channel".into()));
    }
    Ok(xi.clone())
}

#[derive(Debug, Clone)]
pub struct ZfOperator {
    pub a: CVector,
    /// Set when P lacks full column rank; intra-cell nulling is then not
    /// guaranteed.
    pub rank_deficient: bool,
}

/// ZF combiner for column `q` of P, the in-cell channels sharing a
/// subchannel: aᴴ is row `q` of P⁺.
pub fn zf_operator(p: &CMatrix, q: usize) -> Result<ZfOperator> {
    let (_, cols) = p.shape();
    if cols == 0 {
        return Err(Error::Dimension("ZF needs at least one channel column".into()));
    }
    if q >= cols {
        return Err(Error::Dimension(format!("column {q} out of range for {cols} columns")));
    }
    let pinv = pseudo_inverse(p);
    let a = pinv.matrix.row(q).adjoint();
    Ok(ZfOperator {
        a,
        rank_deficient: pinv.rank < cols,
    })
}

/// ZF combiners for every column of P from a single pseudo-inverse.
pub fn zf_operators(p: &CMatrix) -> Result<Vec<ZfOperator>> {
    let cols = p.ncols();
    if cols == 0 {
        return Err(Error::Dimension("ZF needs at least one channel column".into()));
    }
    let pinv = pseudo_inverse(p);
    let rank_deficient = pinv.rank < cols;
    Ok((0..cols)
        .map(|q| ZfOperator {
            a: pinv.matrix.row(q).adjoint(),
            rank_deficient,
        })
        .collect())
}

/// SINR = |aᴴξ_k|² / (Σ_intra |aᴴξ_k'|² + Σ_inter aᴴ C_k' a + σ² ‖a‖²).
pub fn instantaneous_sinr(
    a: &CVector,
    xi_k: &CVector,
    intra: &[&CVector],
    inter_covs: &[&CMatrix],
    noise_var: f64,
) -> Result<SinrBreakdown> {
    if !(noise_var > 0.0) {
        return Err(Error::Domain(format!("noise variance {noise_var} must be positive")));
    }
    let n = a.len();
    if xi_k.len() != n || intra.iter().any(|x| x.len() != n) || inter_covs.iter().any(|c| c.shape() != (n, n)) {
        return Err(Error::Dimension("combiner, channels and covariances must share N_R".into()));
    }
    let signal = a.dotc(xi_k).norm_sqr();
    let intra_p: f64 = intra.iter().map(|x| a.dotc(x).norm_sqr()).sum();
    let mut inter = 0.0;
    for c in inter_covs {
        let (re, im) = hermitian_form(a, c);
        debug_assert!(
            im.abs() <= 1e-12 * a.norm_squared() * c.norm(),
            "covariance is not Hermitian: residue {im}"
        );
        inter += re.max(0.0);
    }
    let noise = noise_var * a.norm_squared();
    let denom = intra_p + inter + noise;
    Ok(SinrBreakdown {
        signal,
        intra: intra_p,
        inter,
        noise,
        sinr: signal / denom,
    })
}

/// Hard decisions sign(Re{aᴴ r_i}); exact zeros map to +1.
pub fn detect_symbols(a: &CVector, frames: &[CVector]) -> Vec<i8> {
    frames
        .iter()
        .map(|r| if a.dotc(r).re >= 0.0 { 1 } else { -1 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn v(xs: &[Complex64]) -> CVector {
        CVector::from_column_slice(xs)
    }

    #[test]
    fn mrc_copies_channel() {
        let xi = v(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(mrc_operator(&xi).unwrap(), xi);
        assert!(matches!(mrc_operator(&CVector::zeros(2)), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn mrc_sinr_is_channel_snr_and_scale_free() {
        let xi = v(&[c(1.0, -2.0), c(0.5, 0.25), c(0.0, 3.0)]);
        let s = instantaneous_sinr(&xi, &xi, &[], &[], 0.7).unwrap();
        assert!((s.sinr - xi.norm_squared() / 0.7).abs() < 1e-12);
        let a2 = xi.scale(2.0);
        let s2 = instantaneous_sinr(&a2, &xi, &[], &[], 0.7).unwrap();
        assert!((s2.sinr - s.sinr).abs() / s.sinr < 1e-14);
    }

    #[test]
    fn zf_single_column_is_scaled_matched_filter() {
        let xi = v(&[c(1.0, 1.0), c(-2.0, 0.5)]);
        let p = CMatrix::from_columns(std::slice::from_ref(&xi));
        let zf = zf_operator(&p, 0).unwrap();
        assert!(!zf.rank_deficient);
        assert!((&zf.a - xi.unscale(xi.norm_squared())).norm() < 1e-14);
        assert!((zf.a.dotc(&xi) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zf_orthonormal_columns_return_column() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = CMatrix::from_columns(&[v(&[c(s, 0.0), c(0.0, s)]), v(&[c(0.0, s), c(s, 0.0)])]);
        let zf = zf_operator(&p, 1).unwrap();
        assert!((&zf.a - p.column(1)).norm() < 1e-14);
    }

    #[test]
    fn zf_nulls_other_columns() {
        let p = CMatrix::from_fn(4, 2, |i, j| c((1 + i + 2 * j) as f64 * 0.3, ((i * j) as f64 - 1.0) * 0.7));
        let zf = zf_operator(&p, 0).unwrap();
        assert!(zf.a.dotc(&p.column(1).into_owned()).norm() <= 1e-10 * p.norm());
        assert!((zf.a.dotc(&p.column(0).into_owned()) - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zf_flags_rank_deficiency() {
        let col = v(&[c(1.0, 0.0), c(2.0, 1.0)]);
        let p = CMatrix::from_columns(&[col.clone(), col.scale(3.0)]);
        assert!(zf_operator(&p, 0).unwrap().rank_deficient);
        assert!(zf_operator(&p, 2).is_err());
    }

    #[test]
    fn batched_zf_matches_single() {
        let p = CMatrix::from_fn(4, 3, |i, j| c((i as f64 + 1.0) * (j as f64 - 0.5), (i * j) as f64 * 0.2 - 0.3));
        let all = zf_operators(&p).unwrap();
        for (q, op) in all.iter().enumerate() {
            assert_eq!(op.a, zf_operator(&p, q).unwrap().a);
        }
    }

    #[test]
    fn sinr_hand_values() {
        let a = v(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let s = instantaneous_sinr(&a, &a, &[], &[], 1.0).unwrap();
        assert_eq!(s.sinr, 1.0);

        let a = v(&[c(1.0, 0.0)]);
        let xi = v(&[c(2.0, 0.0)]);
        let other = v(&[c(1.0, 0.0)]);
        let s = instantaneous_sinr(&a, &xi, &[&other], &[], 1.0).unwrap();
        assert_eq!(s.signal, 4.0);
        assert_eq!(s.intra, 1.0);
        assert_eq!(s.sinr, 2.0);

        let cov = CMatrix::from_element(1, 1, c(3.0, 0.0));
        let s = instantaneous_sinr(&a, &xi, &[], &[&cov], 1.0).unwrap();
        assert_eq!(s.inter, 3.0);
        assert_eq!(s.sinr, 1.0);

        assert!(matches!(instantaneous_sinr(&a, &xi, &[], &[], 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sign_decisions() {
        let a = v(&[c(1.0, 0.0)]);
        let frames = [v(&[c(0.3, 5.0)]), v(&[c(-0.1, 0.0)]), v(&[c(0.0, -1.0)])];
        assert_eq!(detect_symbols(&a, &frames), vec![1, -1, 1]);
        let xi = v(&[c(0.2, -0.4), c(1.0, 0.3)]);
        let a = mrc_operator(&xi).unwrap();
        assert_eq!(detect_symbols(&a, &[-xi.clone()]), vec![-1]);
    }
}
