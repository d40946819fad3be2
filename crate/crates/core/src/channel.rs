//! Rician links, compound scatter channels and the discrete baseband model.
//!
//! A tag's contribution at a core's c-th correlator output is the compound
//! channel
//!
//! ```text
//! g_kb  = (2/π) · Σ_b' √(P_b'/N_T) (1ᵀ h^d_b'k) · η (Γ0 − Γ1) · h^u_kb
//! ξ_kb  = g_kb · √(T/2) · cos Φ_kb
//! ```
//!
//! and is nonzero only on the subchannel the tag is allocated to, provided
//! every subcarrier is an integer multiple of 1/T.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::NetworkConfig;
use crate::topology::Topology;
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Large-scale path gain `(d0/d)^ν · (λ / 4π d0)²`.
pub fn path_gain(d: f64, nu: f64, lambda: f64, d0: f64) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::Domain(format!("reference distance {d0} must be positive")));
    }
    if !(d >= d0) {
        return Err(Error::Domain(format!("distance {d} is below the reference distance {d0}")));
    }
    Ok((d0 / d).powf(nu) * (lambda / (4.0 * PI * d0)).powi(2))
}

/// Half-wavelength uniform linear array response, entry p = e^{−jπ p sin θ}.
pub fn steering_vector(angle: f64, n: usize) -> CVector {
    let s = angle.sin();
    CVector::from_iterator(n, (0..n).map(|p| Complex64::from_polar(1.0, -PI * p as f64 * s)))
}

/// Circularly-symmetric complex normal with variance `var` (`var/2` per
/// real dimension).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Second-order description of one Rician link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    /// Normalized channel power σ² (linear).
    pub sigma2: f64,
    /// Rician factor (linear).
    pub kappa: f64,
    /// Unit-modulus array response of the line-of-sight path.
    pub steering: CVector,
}

impl LinkStats {
    pub fn new(sigma2: f64, kappa: f64, steering: CVector) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::Domain(format!("link power {sigma2} must be positive")));
        }
        if !(kappa >= 0.0) {
            return Err(Error::Domain(format!("Rician factor {kappa} must be nonnegative")));
        }
        if steering.iter().any(|e| (e.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::Domain("steering entries must have unit modulus".into()));
        }
        Ok(Self { sigma2, kappa, steering })
    }

    pub fn len(&self) -> usize {
        self.steering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steering.is_empty()
    }

    /// Line-of-sight mean √(κ/(κ+1)) σ e.
    pub fn mean(&self) -> CVector {
        if self.kappa.is_infinite() {
            return self.steering.scale(self.sigma2.sqrt());
        }
        self.steering
            .scale((self.kappa / (self.kappa + 1.0)).sqrt() * self.sigma2.sqrt())
    }

    /// Per-entry variance of the scattered part σ²/(κ+1).
    pub fn scatter_variance(&self) -> f64 {
        if self.kappa.is_infinite() {
            return 0.0;
        }
        self.sigma2 / (self.kappa + 1.0)
    }

    /// E[h hᴴ] = σ²(κ e eᴴ + I)/(κ+1).
    pub fn second_moment(&self) -> CMatrix {
        let mean = self.mean();
        let n = self.len();
        &mean * mean.adjoint() + CMatrix::identity(n, n).scale(self.scatter_variance())
    }
}

/// One draw from CN(√(κ/(κ+1)) σ e, σ²/(κ+1) I).
pub fn sample_rician<R: Rng + ?Sized>(stats: &LinkStats, rng: &mut R) -> CVector {
    let var = stats.scatter_variance();
    let mut h = stats.mean();
    for z in h.iter_mut() {
        *z += complex_normal(rng, var);
    }
    h
}

/// Tag-side scattering and core transmit parameters entering g_kb.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterParams {
    /// Transmit power of each core, watts.
    pub powers: Vec<f64>,
    pub tx_antennas: usize,
    pub eta: f64,
    pub delta_gamma: Complex64,
    pub symbol_period: f64,
}

impl ScatterParams {
    pub fn from_config(cfg: &NetworkConfig) -> Self {
        Self {
            powers: vec![cfg.core_power_watts(); cfg.cores],
            tx_antennas: cfg.tx_antennas,
            eta: cfg.scattering_efficiency,
            delta_gamma: cfg.delta_gamma(),
            symbol_period: cfg.symbol_period_s,
        }
    }

    /// η (Γ0 − Γ1) · (2/π) · √(T/2), the factor between D·h^u·cos Φ and ξ.
    fn scale(&self) -> Complex64 {
        self.delta_gamma * (self.eta * 2.0 / PI * (self.symbol_period / 2.0).sqrt())
    }
}

/// All channel draws of one coherence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_cores: usize,
    n_tags: usize,
    h_dl: Vec<CVector>,
    h_ul: Vec<CVector>,
    phi: Vec<f64>,
}

impl ChannelRealization {
    /// Assembles a realization from explicit per-link values.
    ///
    /// `h_dl[b][k]`, `h_ul[k][b]` and `phi[k][b]`.
    pub fn from_parts(h_dl: Vec<Vec<CVector>>, h_ul: Vec<Vec<CVector>>, phi: Vec<Vec<f64>>) -> Result<Self> {
        let n_cores = h_dl.len();
        let n_tags = h_ul.len();
        if h_dl.iter().any(|r| r.len() != n_tags)
            || h_ul.iter().any(|r| r.len() != n_cores)
            || phi.len() != n_tags
            || phi.iter().any(|r| r.len() != n_cores)
        {
            return Err(Error::Dimension("realization parts disagree on core/tag counts".into()));
        }
        let mut dl = vec![CVector::zeros(0); n_cores * n_tags];
        for (b, row) in h_dl.into_iter().enumerate() {
            for (k, h) in row.into_iter().enumerate() {
                dl[b * n_tags + k] = h;
            }
        }
        Ok(Self {
            n_cores,
            n_tags,
            h_dl: dl,
            h_ul: h_ul.into_iter().flatten().collect(),
            phi: phi.into_iter().flatten().collect(),
        })
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn n_tags(&self) -> usize {
        self.n_tags
    }

    pub fn h_dl(&self, b: usize, k: usize) -> &CVector {
        &self.h_dl[b * self.n_tags + k]
    }

    pub fn h_ul(&self, k: usize, b: usize) -> &CVector {
        &self.h_ul[k * self.n_cores + b]
    }

    pub fn phi(&self, k: usize, b: usize) -> f64 {
        self.phi[k * self.n_cores + b]
    }

    /// Text dump, one link per line.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let fmt = |v: &CVector| {
            v.iter().map(|z| format!("{:+.6e}{:+.6e}j", z.re, z.im)).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::new();
        for b in 0..self.n_cores {
            for k in 0..self.n_tags {
                let _ = writeln!(out, "dl b={b} k={k} {}", fmt(self.h_dl(b, k)));
            }
        }
        for k in 0..self.n_tags {
            for b in 0..self.n_cores {
                let _ = writeln!(out, "ul k={k} b={b} phi={:.6} {}", self.phi(k, b), fmt(self.h_ul(k, b)));
            }
        }
        out
    }
}

/// Σ_b' √(P_b'/N_T) · 1ᵀ h^d_b'k, the carrier amplitude impinging on tag k.
pub fn incident_carrier(real: &ChannelRealization, k: usize, scatter: &ScatterParams) -> Complex64 {
    let n_t = scatter.tx_antennas as f64;
    (0..real.n_cores())
        .map(|b| real.h_dl(b, k).sum() * (scatter.powers[b] / n_t).sqrt())
        .sum()
}

/// Compound channel ξ_kb at the output of tag k's own subchannel correlator.
pub fn compound_channel(real: &ChannelRealization, k: usize, b: usize, scatter: &ScatterParams) -> CVector {
    let amp = incident_carrier(real, k, scatter) * scatter.scale() * real.phi(k, b).cos();
    real.h_ul(k, b).map(|h| h * amp)
}

/// Large-scale model of every link in a topology.
#[derive(Debug, Clone)]
pub struct NetworkChannels {
    n_cores: usize,
    n_tags: usize,
    downlinks: Vec<LinkStats>,
    uplinks: Vec<LinkStats>,
    pub scatter: ScatterParams,
    /// Forces every Φ_kb to this value instead of drawing U[0, 2π).
    pub phase_override: Option<f64>,
}

impl NetworkChannels {
    /// Link powers from the path-loss model; steering angles are the
    /// core-to-tag azimuths. Links are reciprocal in power.
    pub fn new(cfg: &NetworkConfig, topo: &Topology) -> Result<Self> {
        cfg.validate()?;
        let (nb, nk) = (topo.n_cores(), topo.n_tags());
        if nb != cfg.cores {
            return Err(Error::Dimension(format!("topology has {nb} cores, config {}", cfg.cores)));
        }
        let (kd, ku) = (cfg.kappa_dl(), cfg.kappa_ul());
        let mut downlinks = Vec::with_capacity(nb * nk);
        for b in 0..nb {
            for k in 0..nk {
                let s2 = path_gain(
                    topo.distances[k][b],
                    cfg.path_loss_exponent,
                    cfg.wavelength_m,
                    cfg.reference_distance_m,
                )?;
                downlinks.push(LinkStats::new(s2, kd, steering_vector(topo.azimuth(k, b), cfg.tx_antennas))?);
            }
        }
        let mut uplinks = Vec::with_capacity(nb * nk);
        for k in 0..nk {
            for b in 0..nb {
                let s2 = downlinks[b * nk + k].sigma2;
                uplinks.push(LinkStats::new(s2, ku, steering_vector(topo.azimuth(k, b), cfg.rx_antennas))?);
            }
        }
        Ok(Self {
            n_cores: nb,
            n_tags: nk,
            downlinks,
            uplinks,
            scatter: ScatterParams::from_config(cfg),
            phase_override: None,
        })
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn n_tags(&self) -> usize {
        self.n_tags
    }

    pub fn downlink(&self, b: usize, k: usize) -> &LinkStats {
        &self.downlinks[b * self.n_tags + k]
    }

    pub fn uplink(&self, k: usize, b: usize) -> &LinkStats {
        &self.uplinks[k * self.n_cores + b]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let h_dl = self.downlinks.iter().map(|s| sample_rician(s, rng)).collect();
        let h_ul = self.uplinks.iter().map(|s| sample_rician(s, rng)).collect();
        let phi = (0..self.n_tags * self.n_cores)
            .map(|_| match self.phase_override {
                Some(p) => p,
                None => 2.0 * PI * rng.random::<f64>(),
            })
            .collect();
        ChannelRealization {
            n_cores: self.n_cores,
            n_tags: self.n_tags,
            h_dl,
            h_ul,
            phi,
        }
    }

    /// Like [`sample`](Self::sample) but draws only the uplink of each tag
    /// to its serving core `cell_of[k]`; other uplinks are left at zero.
    /// Enough for SINR evaluation, where out-of-cell links enter through
    /// their covariance.
    pub fn sample_serving<R: Rng + ?Sized>(&self, cell_of: &[usize], rng: &mut R) -> ChannelRealization {
        let h_dl = self.downlinks.iter().map(|s| sample_rician(s, rng)).collect();
        let mut h_ul: Vec<CVector> = self.uplinks.iter().map(|s| CVector::zeros(s.steering.len())).collect();
        let mut phi = vec![0.0; self.n_tags * self.n_cores];
        for (k, &b) in cell_of.iter().enumerate() {
            let i = k * self.n_cores + b;
            h_ul[i] = sample_rician(&self.uplinks[i], rng);
            phi[i] = match self.phase_override {
                Some(p) => p,
                None => 2.0 * PI * rng.random::<f64>(),
            };
        }
        ChannelRealization {
            n_cores: self.n_cores,
            n_tags: self.n_tags,
            h_dl,
            h_ul,
            phi,
        }
    }

    /// Covariance of ξ_k'b over fading and phase draws.
    pub fn xi_covariance(&self, k: usize, b: usize) -> CMatrix {
        let downlinks: Vec<&LinkStats> = (0..self.n_cores).map(|bp| self.downlink(bp, k)).collect();
        xi_covariance_analytic(&downlinks, self.uplink(k, b), &self.scatter)
    }
}

/// Analytic covariance E[ξ ξᴴ] of a compound channel with Φ ~ U[0, 2π).
///
/// With D = Σ_b' √(P_b'/N_T) 1ᵀh^d_b'k, the downlinks independent of the
/// uplink and E[cos²Φ] = 1/2:
///
/// ```text
/// C = (T/4)(2/π)² η² |Γ0 − Γ1|² · E|D|² · E[h^u h^uᴴ]
/// E|D|² = |Σ_b' √(P_b'/N_T) 1ᵀμ_b'|² + Σ_b' P_b' σ²_b'/(κ_b'+1)
/// ```
///
/// The first term of E|D|² couples the line-of-sight means of different
/// cores and vanishes only for a single core or κ = 0.
pub fn xi_covariance_analytic(downlinks: &[&LinkStats], uplink: &LinkStats, scatter: &ScatterParams) -> CMatrix {
    assert_eq!(downlinks.len(), scatter.powers.len(), "one downlink per core");
    let n_t = scatter.tx_antennas as f64;
    let mut mean_sum = Complex64::new(0.0, 0.0);
    let mut var_sum = 0.0;
    for (stats, &p) in downlinks.iter().zip(&scatter.powers) {
        mean_sum += stats.mean().sum() * (p / n_t).sqrt();
        // 1ᵀ(scatter) has variance N_T σ²/(κ+1)
        var_sum += p / n_t * stats.len() as f64 * stats.scatter_variance();
    }
    let carrier_power = mean_sum.norm_sqr() + var_sum;
    let t = scatter.symbol_period;
    let factor = t / 4.0 * (2.0 / PI).powi(2) * scatter.eta.powi(2) * scatter.delta_gamma.norm_sqr();
    uplink.second_moment().scale(factor * carrier_power)
}

#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub n_samples: usize,
    pub mean: CVector,
    /// (1/n) Σ ξ ξᴴ, not mean-subtracted.
    pub covariance: CMatrix,
}

/// Sample second moment of independent draws from `sampler`.
pub fn xi_covariance_empirical<F: FnMut() -> CVector>(mut sampler: F, n_samples: usize) -> Result<EmpiricalMoments> {
    if n_samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let first = sampler();
    let n = first.len();
    let mut mean = CVector::zeros(n);
    let mut cov = CMatrix::zeros(n, n);
    let mut acc = |x: &CVector| {
        mean += x;
        cov.ger(Complex64::new(1.0, 0.0), x, &x.conjugate(), Complex64::new(1.0, 0.0));
    };
    acc(&first);
    for _ in 1..n_samples {
        let x = sampler();
        if x.len() != n {
            return Err(Error::Dimension("sampler changed output length".into()));
        }
        acc(&x);
    }
    let inv = 1.0 / n_samples as f64;
    Ok(EmpiricalMoments {
        n_samples,
        mean: mean.scale(inv),
        covariance: cov.scale(inv),
    })
}

/// ξ for every (tag, core) pair under one allocation.
#[derive(Debug, Clone)]
pub struct CompoundChannelTable {
    n_cores: usize,
    n_subchannels: usize,
    n_rx: usize,
    xi: Vec<CVector>,
    pub allocation: Vec<usize>,
}

impl CompoundChannelTable {
    pub fn build(real: &ChannelRealization, allocation: &[usize], n_subchannels: usize, scatter: &ScatterParams) -> Result<Self> {
        if allocation.len() != real.n_tags() {
            return Err(Error::Dimension("allocation must cover every tag".into()));
        }
        if let Some(&c) = allocation.iter().find(|&&c| c >= n_subchannels) {
            return Err(Error::Dimension(format!("subchannel {c} out of range")));
        }
        let n_cores = real.n_cores();
        let xi: Vec<CVector> = (0..real.n_tags())
            .flat_map(|k| (0..n_cores).map(move |b| (k, b)))
            .map(|(k, b)| compound_channel(real, k, b, scatter))
            .collect();
        let n_rx = xi.first().map_or(0, |v| v.len());
        Ok(Self {
            n_cores,
            n_subchannels,
            n_rx,
            xi,
            allocation: allocation.to_vec(),
        })
    }

    /// Assembles a table from explicit vectors `xi[k][b]`.
    pub fn from_vectors(xi: Vec<Vec<CVector>>, allocation: Vec<usize>, n_subchannels: usize) -> Result<Self> {
        let n_cores = xi.first().map_or(0, Vec::len);
        let n_rx = xi.first().and_then(|r| r.first()).map_or(0, |v| v.len());
        if xi.len() != allocation.len() || xi.iter().flatten().any(|v| v.len() != n_rx) || xi.iter().any(|r| r.len() != n_cores) {
            return Err(Error::Dimension("inconsistent compound channel vectors".into()));
        }
        if allocation.iter().any(|&c| c >= n_subchannels) {
            return Err(Error::Dimension("subchannel out of range".into()));
        }
        Ok(Self {
            n_cores,
            n_subchannels,
            n_rx,
            xi: xi.into_iter().flatten().collect(),
            allocation,
        })
    }

    pub fn n_tags(&self) -> usize {
        self.allocation.len()
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    /// ξ_kb on the tag's own subchannel.
    pub fn xi(&self, k: usize, b: usize) -> &CVector {
        &self.xi[k * self.n_cores + b]
    }

    /// ξ_kb^(c): zero unless `c` is the subchannel allocated to `k`.
    pub fn xi_on(&self, k: usize, b: usize, c: usize) -> CVector {
        if self.allocation[k] == c {
            self.xi(k, b).clone()
        } else {
            CVector::zeros(self.n_rx)
        }
    }
}

/// Correlator outputs of every core and subchannel over a packet.
#[derive(Debug, Clone)]
pub struct BasebandFrame {
    /// `r[b][c][i]`, length N_R each.
    pub r: Vec<Vec<Vec<CVector>>>,
    pub noise_var: f64,
}

/// r_{b,i}^(c) = Σ_{k on c} ξ_kb x_{k,i} + n, n ~ CN(0, σ² I).
///
/// `symbols[k]` holds the ±1 packet of tag k; all packets share a length.
pub fn synthesize_baseband<R: Rng + ?Sized>(
    table: &CompoundChannelTable,
    symbols: &[Vec<i8>],
    noise_var: f64,
    rng: &mut R,
) -> Result<BasebandFrame> {
    if symbols.len() != table.n_tags() {
        return Err(Error::Dimension("one symbol sequence per tag required".into()));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Domain("noise variance must be nonnegative".into()));
    }
    let m = symbols.first().map_or(0, Vec::len);
    if symbols.iter().any(|s| s.len() != m) {
        return Err(Error::Dimension("symbol sequences differ in length".into()));
    }
    let mut r = vec![vec![vec![CVector::zeros(table.n_rx); m]; table.n_subchannels]; table.n_cores];
    for (b, per_core) in r.iter_mut().enumerate() {
        for (k, xs) in symbols.iter().enumerate() {
            let c = table.allocation[k];
            let xi = table.xi(k, b);
            for (i, &x) in xs.iter().enumerate() {
                per_core[c][i] += xi.scale(f64::from(x));
            }
        }
        if noise_var > 0.0 {
            for v in per_core.iter_mut().flatten().flat_map(|v| v.iter_mut()) {
                *v += complex_normal(rng, noise_var);
            }
        }
    }
    Ok(BasebandFrame { r, noise_var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn path_gain_hand_values() {
        let g1 = path_gain(1.0, 2.1, 0.3456, 1.0).unwrap();
        assert!((g1 - 7.5635e-4).abs() / 7.5635e-4 < 1e-4);
        assert_eq!(g1, (0.3456 / (4.0 * PI)).powi(2));
        let g2 = path_gain(2.0, 2.1, 0.3456, 1.0).unwrap();
        assert!((g2 - 1.7643e-4).abs() / 1.7643e-4 < 1e-3);
        assert!(matches!(path_gain(0.5, 2.1, 0.3456, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn steering_vector_cases() {
        let e = steering_vector(0.0, 4);
        assert!(e.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(steering_vector(1.234, 1)[0], c(1.0, 0.0));
        let e = steering_vector(PI / 2.0, 2);
        assert!((e[1] - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn near_infinite_kappa_returns_mean() {
        let stats = LinkStats::new(2.0, 1e12, steering_vector(0.3, 4)).unwrap();
        let mut rng = rng_from_seed(5);
        let h = sample_rician(&stats, &mut rng);
        let mean = stats.mean();
        assert!((&h - &mean).norm() / mean.norm() < 1e-5);
    }

    #[test]
    fn compound_channel_hand_value() {
        let real = ChannelRealization::from_parts(
            vec![vec![CVector::from_element(1, c(1.0, 0.0))]],
            vec![vec![CVector::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])]],
            vec![vec![0.0]],
        )
        .unwrap();
        let scatter = ScatterParams {
            powers: vec![1.0],
            tx_antennas: 1,
            eta: 0.2,
            delta_gamma: c(1.01, 0.0),
            symbol_period: 1e-4,
        };
        let xi = compound_channel(&real, 0, 0, &scatter);
        let expected = 2.0 / PI * 0.2 * 1.01 * 5e-5f64.sqrt();
        assert!((xi[0].re - expected).abs() < 1e-15);
        assert!((expected - 9.093e-4).abs() < 1e-6);
        assert!(xi.iter().skip(1).all(|z| z.norm() == 0.0));

        let doubled = ScatterParams { delta_gamma: c(2.02, 0.0), ..scatter.clone() };
        let xi2 = compound_channel(&real, 0, 0, &doubled);
        assert!((xi2.norm() - 2.0 * xi.norm()).abs() < 1e-15);

        let quadrature = ChannelRealization { phi: vec![PI / 2.0], ..real };
        assert!(compound_channel(&quadrature, 0, 0, &scatter).norm() < 1e-18);
    }

    #[test]
    fn covariance_vanishes_without_scattering() {
        let dl = LinkStats::new(1e-4, 10.0, steering_vector(0.0, 1)).unwrap();
        let ul = LinkStats::new(1e-4, 10.0, steering_vector(0.4, 4)).unwrap();
        let scatter = ScatterParams {
            powers: vec![0.1],
            tx_antennas: 1,
            eta: 0.0,
            delta_gamma: c(1.01, 0.0),
            symbol_period: 1e-4,
        };
        let cov = xi_covariance_analytic(&[&dl], &ul, &scatter);
        assert_eq!(cov.norm(), 0.0);
    }

    #[test]
    fn scalar_covariance_reduction() {
        let (sd, su, p, t, eta, dg) = (3e-4, 5e-4, 0.1, 1e-4, 0.2, 1.01);
        let dl = LinkStats::new(sd, 0.0, steering_vector(0.0, 1)).unwrap();
        let ul = LinkStats::new(su, 0.0, steering_vector(0.0, 1)).unwrap();
        let scatter = ScatterParams {
            powers: vec![p],
            tx_antennas: 1,
            eta,
            delta_gamma: c(dg, 0.0),
            symbol_period: t,
        };
        let cov = xi_covariance_analytic(&[&dl], &ul, &scatter);
        let expected = t / 4.0 * (2.0 / PI).powi(2) * eta * eta * dg * dg * p * sd * su;
        assert!((cov[(0, 0)].re - expected).abs() / expected < 1e-12);
        assert_eq!(cov[(0, 0)].im, 0.0);
    }

    #[test]
    fn empirical_second_moment_of_constant_zero() {
        let m = xi_covariance_empirical(|| CVector::zeros(3), 10_000).unwrap();
        assert_eq!(m.covariance.norm(), 0.0);
        assert_eq!(m.mean.norm(), 0.0);
    }

    #[test]
    fn empirical_second_moment_of_signs() {
        let mut rng = rng_from_seed(9);
        let n = 40_000;
        let m = xi_covariance_empirical(
            || CVector::from_element(1, c(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)),
            n,
        )
        .unwrap();
        assert!((m.covariance[(0, 0)].re - 1.0).abs() <= 3.0 / (n as f64).sqrt());
    }

    fn table_1core(xis: &[CVector], alloc: Vec<usize>, n_sub: usize) -> CompoundChannelTable {
        CompoundChannelTable::from_vectors(xis.iter().map(|x| vec![x.clone()]).collect(), alloc, n_sub).unwrap()
    }

    #[test]
    fn baseband_superposition() {
        let x1 = CVector::from_column_slice(&[c(1.0, 2.0), c(0.5, -1.0)]);
        let x2 = CVector::from_column_slice(&[c(-0.3, 0.1), c(2.0, 0.0)]);
        let table = table_1core(&[x1.clone(), x2.clone()], vec![1, 1], 3);
        let mut rng = rng_from_seed(1);
        let frame = synthesize_baseband(&table, &[vec![1], vec![-1]], 0.0, &mut rng).unwrap();
        assert!((&frame.r[0][1][0] - (&x1 - &x2)).norm() < 1e-15);
        // idle subchannels carry nothing
        assert_eq!(frame.r[0][0][0].norm(), 0.0);
        assert_eq!(frame.r[0][2][0].norm(), 0.0);

        let single = table_1core(std::slice::from_ref(&x1), vec![0], 2);
        let frame = synthesize_baseband(&single, &[vec![1]], 0.0, &mut rng).unwrap();
        assert_eq!(frame.r[0][0][0], x1);
        assert_eq!(single.xi_on(0, 0, 1).norm(), 0.0);
    }

    #[test]
    fn baseband_noise_variance() {
        let x = CVector::zeros(2);
        let table = table_1core(&[x], vec![0], 1);
        let mut rng = rng_from_seed(2);
        let frame = synthesize_baseband(&table, &[vec![1; 20_000]], 0.5, &mut rng).unwrap();
        let power: f64 = frame.r[0][0].iter().map(|v| v.norm_squared()).sum::<f64>() / 40_000.0;
        assert!((power - 0.5).abs() < 0.02);
    }

    #[test]
    fn links_are_reciprocal_in_power() {
        let cfg = NetworkConfig { tags: 14, ..Default::default() };
        let topo = crate::topology::build_cellular_topology(&cfg, &mut rng_from_seed(4)).unwrap();
        let ch = NetworkChannels::new(&cfg, &topo).unwrap();
        for k in 0..topo.n_tags() {
            for b in 0..topo.n_cores() {
                assert_eq!(ch.downlink(b, k).sigma2, ch.uplink(k, b).sigma2);
            }
        }
    }

    #[test]
    fn serving_sample_draws_only_serving_uplinks() {
        let cfg = NetworkConfig { tags: 14, ..Default::default() };
        let topo = crate::topology::build_cellular_topology(&cfg, &mut rng_from_seed(4)).unwrap();
        let ch = NetworkChannels::new(&cfg, &topo).unwrap();
        let real = ch.sample_serving(&topo.cell_of, &mut rng_from_seed(5));
        for k in 0..topo.n_tags() {
            for b in 0..topo.n_cores() {
                let serving = b == topo.cell_of[k];
                assert_eq!(real.h_ul(k, b).norm() > 0.0, serving);
                assert_eq!(real.phi(k, b) != 0.0, serving);
            }
            assert!(compound_channel(&real, k, topo.cell_of[k], &ch.scatter).norm() > 0.0);
        }
        for b in 0..topo.n_cores() {
            for k in 0..topo.n_tags() {
                assert!(real.h_dl(b, k).norm() > 0.0);
            }
        }
    }
}
