//! Measurement phase: per-frame random allocations and the long-term
//! average SINR table.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::{compound_channel, ChannelRealization, NetworkChannels};
use crate::config::{linear_to_db, NetworkConfig};
use crate::detection::{instantaneous_sinr, mrc_operator, zf_operators, DetectorKind};
use crate::rng::{stream, sub_rng};
use crate::topology::Topology;
use crate::{CMatrix, CVector, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyAllocation {
    /// Subchannel (0-based) of each tag.
    pub channel_of: Vec<usize>,
}

/// Balanced per-frame allocation law.
///
/// Frames are cut into blocks of C. In block `j / C` every tag draws a
/// fresh permutation of the subchannels and, in frame `j`, uses entry
/// `(j + offset_k) mod C` of it. Each block therefore visits every
/// subchannel exactly once per tag, so after J frames every count is
/// ⌊J/C⌋ or ⌈J/C⌉.
#[derive(Debug, Clone)]
pub struct FrameAllocator {
    n_subchannels: usize,
    seed: u64,
    offsets: Vec<usize>,
}

impl FrameAllocator {
    pub fn new(n_tags: usize, n_subchannels: usize, seed: u64) -> Self {
        let mut rng = sub_rng(seed, &[stream::FRAME_ALLOCATION, u64::MAX]);
        let offsets = (0..n_tags).map(|_| rng.random_range(0..n_subchannels.max(1))).collect();
        Self { n_subchannels, seed, offsets }
    }

    pub fn allocation(&self, frame: usize) -> FrequencyAllocation {
        let c = self.n_subchannels;
        if c == 1 {
            return FrequencyAllocation { channel_of: vec![0; self.offsets.len()] };
        }
        let block = (frame / c) as u64;
        let mut rng = sub_rng(self.seed, &[stream::FRAME_ALLOCATION, block]);
        let mut perm: Vec<usize> = (0..c).collect();
        let channel_of = self
            .offsets
            .iter()
            .map(|&off| {
                perm.shuffle(&mut rng);
                perm[(frame + off) % c]
            })
            .collect();
        FrequencyAllocation { channel_of }
    }
}

/// Allocation of frame `frame` under the balanced law seeded by `seed`.
pub fn frame_allocation(topology: &Topology, frame: usize, seed: u64) -> FrequencyAllocation {
    FrameAllocator::new(topology.n_tags(), topology.n_subchannels(), seed).allocation(frame)
}

/// Long-term average SINR per (tag, subchannel) at the tag's serving core.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTable {
    n_subchannels: usize,
    cell_of: Vec<usize>,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl SinrTable {
    pub fn new(cell_of: Vec<usize>, n_subchannels: usize) -> Self {
        let n = cell_of.len() * n_subchannels;
        Self {
            n_subchannels,
            cell_of,
            sums: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    /// Table with a prescribed average per entry (one sample each).
    pub fn from_averages(cell_of: Vec<usize>, n_subchannels: usize, avg: &[f64]) -> Self {
        let mut t = Self::new(cell_of, n_subchannels);
        assert_eq!(avg.len(), t.sums.len(), "one average per (tag, subchannel)");
        t.sums.copy_from_slice(avg);
        t.counts.iter_mut().for_each(|c| *c = 1);
        t
    }

    pub fn n_tags(&self) -> usize {
        self.cell_of.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn cell_of(&self, k: usize) -> usize {
        self.cell_of[k]
    }

    pub fn record(&mut self, k: usize, c: usize, sinr: f64) {
        let i = k * self.n_subchannels + c;
        self.sums[i] += sinr;
        self.counts[i] += 1;
    }

    pub fn count(&self, k: usize, c: usize) -> u64 {
        self.counts[k * self.n_subchannels + c]
    }

    pub fn sum(&self, k: usize, c: usize) -> f64 {
        self.sums[k * self.n_subchannels + c]
    }

    /// Arithmetic mean of the recorded SINRs, `None` if never measured.
    pub fn avg(&self, k: usize, c: usize) -> Option<f64> {
        let n = self.count(k, c);
        (n > 0).then(|| self.sum(k, c) / n as f64)
    }

    /// CSV rows `tag,core,subchannel,count,avg_linear,avg_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,core,subchannel,count,avg_linear,avg_db\n");
        for k in 0..self.n_tags() {
            for c in 0..self.n_subchannels {
                let avg = self.avg(k, c).unwrap_or(f64::NAN);
                let _ = writeln!(
                    out,
                    "{k},{},{c},{},{avg:.12e},{:.6}",
                    self.cell_of[k],
                    self.count(k, c),
                    linear_to_db(avg)
                );
            }
        }
        out
    }
}

/// Everything that stays fixed across frames for one network.
#[derive(Debug, Clone)]
pub struct MeasurementContext<'a> {
    pub topology: &'a Topology,
    pub channels: NetworkChannels,
    /// Analytic ξ covariance, `[k * B + b]`.
    inter_cov: Vec<CMatrix>,
    pub noise_var: f64,
    pub detector: DetectorKind,
}

impl<'a> MeasurementContext<'a> {
    pub fn new(topology: &'a Topology, cfg: &NetworkConfig, detector: DetectorKind) -> Result<Self> {
        let channels = NetworkChannels::new(cfg, topology)?;
        Ok(Self::with_channels(topology, channels, cfg.noise_var(), detector))
    }

    pub fn with_channels(topology: &'a Topology, channels: NetworkChannels, noise_var: f64, detector: DetectorKind) -> Self {
        let nb = topology.n_cores();
        let inter_cov = (0..topology.n_tags())
            .flat_map(|k| (0..nb).map(move |b| (k, b)))
            .map(|(k, b)| channels.xi_covariance(k, b))
            .collect();
        Self {
            topology,
            channels,
            inter_cov,
            noise_var,
            detector,
        }
    }

    pub fn xi_covariance(&self, k: usize, b: usize) -> &CMatrix {
        &self.inter_cov[k * self.topology.n_cores() + b]
    }

    /// Instantaneous SINR of every tag at its serving core on its allocated
    /// subchannel for one realization.
    ///
    /// Intra-cell interferers are the other in-cell tags on the subchannel
    /// (known channels); inter-cell interferers are all out-of-cell tags on
    /// it and enter through their covariance. A tag whose combiner
    /// collapses to zero scores 0.
    pub fn frame_sinrs(&self, real: &ChannelRealization, alloc: &FrequencyAllocation) -> Result<Vec<f64>> {
        let topo = self.topology;
        let (nb, nk, nc) = (topo.n_cores(), topo.n_tags(), topo.n_subchannels());
        let n_r = self.channels.uplink(0, 0).len();
        let xi: Vec<CVector> = (0..nk)
            .map(|k| compound_channel(real, k, topo.cell_of[k], &self.channels.scatter))
            .collect();

        let mut inter = vec![CMatrix::zeros(n_r, n_r); nb * nc];
        for k in 0..nk {
            let c = alloc.channel_of[k];
            for b in (0..nb).filter(|&b| b != topo.cell_of[k]) {
                inter[b * nc + c] += self.xi_covariance(k, b);
            }
        }

        let mut on_channel: Vec<Vec<usize>> = vec![Vec::new(); nb * nc];
        for k in 0..nk {
            on_channel[topo.cell_of[k] * nc + alloc.channel_of[k]].push(k);
        }

        let mut out = vec![0.0; nk];
        for (slot, tags) in on_channel.iter().enumerate() {
            if tags.is_empty() {
                continue;
            }
            let cov = &inter[slot];
            let zf = if self.detector == DetectorKind::Zf && tags.len() > 1 {
                let p = CMatrix::from_columns(&tags.iter().map(|&k| xi[k].clone()).collect::<Vec<_>>());
                Some(zf_operators(&p)?)
            } else {
                None
            };
            for (q, &k) in tags.iter().enumerate() {
                let a = match (self.detector, &zf) {
                    (DetectorKind::Mrc, _) => match mrc_operator(&xi[k]) {
                        Ok(a) => a,
                        Err(_) => continue,
                    },
                    (DetectorKind::Zf, None) => {
                        let n2 = xi[k].norm_squared();
                        if n2 == 0.0 {
                            continue;
                        }
                        xi[k].unscale(n2)
                    }
                    (DetectorKind::Zf, Some(ops)) => ops[q].a.clone(),
                };
                let intra: Vec<&CVector> = tags.iter().filter(|&&o| o != k).map(|&o| &xi[o]).collect();
                let s = instantaneous_sinr(&a, &xi[k], &intra, &[cov], self.noise_var)?;
                if s.signal > 0.0 {
                    out[k] = s.sinr;
                }
            }
        }
        Ok(out)
    }

    /// Runs `frames` frames and averages per (tag, subchannel).
    ///
    /// Frame `j` draws its channels from the sub-seed `(seed, j)`; frames are
    /// evaluated in parallel and accumulated in frame order, so the result
    /// does not depend on the thread count.
    pub fn run(&self, frames: usize, seed: u64) -> Result<SinrTable> {
        let topo = self.topology;
        let allocator = FrameAllocator::new(topo.n_tags(), topo.n_subchannels(), seed);
        let mut table = SinrTable::new(topo.cell_of.clone(), topo.n_subchannels());
        const CHUNK: usize = 512;
        let mut start = 0;
        while start < frames {
            let end = (start + CHUNK).min(frames);
            let chunk: Vec<(FrequencyAllocation, Vec<f64>)> = (start..end)
                .into_par_iter()
                .map(|j| {
                    let mut rng = sub_rng(seed, &[stream::FRAME_CHANNEL, j as u64]);
                    let real = self.channels.sample_serving(&topo.cell_of, &mut rng);
                    let alloc = allocator.allocation(j);
                    let sinrs = self.frame_sinrs(&real, &alloc)?;
                    Ok((alloc, sinrs))
                })
                .collect::<Result<_>>()?;
            for (alloc, sinrs) in &chunk {
                for (k, &s) in sinrs.iter().enumerate() {
                    table.record(k, alloc.channel_of[k], s);
                }
            }
            start = end;
        }
        Ok(table)
    }
}

/// Measurement phase of `frames` frames with fresh channels per frame.
pub fn run_measurement_phase(
    topology: &Topology,
    cfg: &NetworkConfig,
    frames: usize,
    detector: DetectorKind,
    seed: u64,
) -> Result<SinrTable> {
    MeasurementContext::new(topology, cfg, detector)?.run(frames, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::topology::{build_cellular_topology, Point3};

    #[test]
    fn single_subchannel_is_constant() {
        let a = FrameAllocator::new(5, 1, 3);
        for j in 0..10 {
            assert_eq!(a.allocation(j).channel_of, vec![0; 5]);
        }
    }

    #[test]
    fn one_block_visits_each_channel_once() {
        let (k, c) = (12, 8);
        let a = FrameAllocator::new(k, c, 42);
        let mut seen = vec![vec![0; c]; k];
        for j in 0..c {
            for (t, &ch) in a.allocation(j).channel_of.iter().enumerate() {
                seen[t][ch] += 1;
            }
        }
        assert!(seen.iter().flatten().all(|&n| n == 1));
    }

    #[test]
    fn counts_are_balanced() {
        let (k, c, frames) = (7, 8, 10_000);
        let a = FrameAllocator::new(k, c, 9);
        let mut counts = vec![vec![0; c]; k];
        for j in 0..frames {
            for (t, &ch) in a.allocation(j).channel_of.iter().enumerate() {
                counts[t][ch] += 1;
            }
        }
        assert!(counts.iter().flatten().all(|&n| n == 1250));

        let mut partial = vec![vec![0; c]; k];
        for j in 0..21 {
            for (t, &ch) in a.allocation(j).channel_of.iter().enumerate() {
                partial[t][ch] += 1;
            }
        }
        assert!(partial.iter().flatten().all(|&n| n == 2 || n == 3));
    }

    #[test]
    fn deterministic_channel_gives_constant_average() {
        let cfg = NetworkConfig {
            cores: 1,
            tags: 1,
            subchannels: 2,
            training_sequences: 1,
            kappa_dl_db: 120.0,
            kappa_ul_db: 120.0,
            ..Default::default()
        };
        let topo = Topology::from_positions(
            vec![Point3::new(0.0, 0.0, 2.0)],
            vec![Point3::new(3.0, 1.0, 0.5)],
            cfg.subcarriers(),
        )
        .assign_training_groups(1)
        .unwrap();
        let mut channels = NetworkChannels::new(&cfg, &topo).unwrap();
        channels.phase_override = Some(0.0);
        let ctx = MeasurementContext::with_channels(&topo, channels, cfg.noise_var(), DetectorKind::Mrc);
        let real = ctx.channels.sample(&mut rng_from_seed(0));
        let one = ctx.frame_sinrs(&real, &FrequencyAllocation { channel_of: vec![0] }).unwrap()[0];
        let table = ctx.run(40, 5).unwrap();
        for c in 0..2 {
            assert_eq!(table.count(0, c), 20);
            assert!((table.avg(0, c).unwrap() - one).abs() / one < 1e-6);
        }
    }

    #[test]
    fn counts_partition_frames() {
        let cfg = NetworkConfig { tags: 21, ..Default::default() };
        let topo = build_cellular_topology(&cfg, &mut rng_from_seed(2)).unwrap();
        let table = run_measurement_phase(&topo, &cfg, 37, DetectorKind::Zf, 8).unwrap();
        for k in 0..21 {
            let total: u64 = (0..8).map(|c| table.count(k, c)).sum();
            assert_eq!(total, 37);
        }
        assert_eq!(table.to_csv().lines().count(), 21 * 8 + 1);
    }
}
