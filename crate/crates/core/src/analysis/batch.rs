//! Side counts of many (query, index subset) pairs in one pass over paths.

use rayon::prelude::*;

use crate::depth::SideCounts;
use crate::gridfn::{dominance_on, Grid, GridFunction, IndexSubset};
use crate::models::ProcessModel;

/// Paths per parallel work unit.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone)]
enum Mode {
    /// All queries constant: per-path extrema against sorted levels.
    Levels {
        sorted: Vec<f64>,
        order: Vec<usize>,
    },
    General {
        queries: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Batch {
    subsets: Vec<Option<Vec<usize>>>,
    n_queries: usize,
    mode: Mode,
}

impl Batch {
    /// `subsets` of `None` mean the full grid.
    pub(crate) fn new(queries: &[GridFunction<f64>], subsets: Vec<Option<Vec<usize>>>) -> Self {
        let levels: Option<Vec<f64>> = queries.iter().map(GridFunction::as_constant).collect();
        let mode = match levels {
            Some(levels) => {
                let mut order: Vec<usize> = (0..levels.len()).collect();
                order.sort_by(|a, b| levels[*a].total_cmp(&levels[*b]));
                Mode::Levels { sorted: order.iter().map(|i| levels[*i]).collect(), order }
            }
            None => Mode::General { queries: queries.iter().map(|q| q.values().to_vec()).collect() },
        };
        Self { subsets, n_queries: queries.len(), mode }
    }

    pub(crate) fn from_index_subsets(queries: &[GridFunction<f64>], subsets: &[IndexSubset], width: usize) -> Self {
        let subsets =
            subsets.iter().map(|s| if s.len() == width { None } else { Some(s.indices().to_vec()) }).collect();
        Self::new(queries, subsets)
    }

    fn stride(&self) -> usize {
        match self.mode {
            // above histogram, below histogram (q + 1 slots each), exact ties (q)
            Mode::Levels { .. } => 3 * self.n_queries + 2,
            Mode::General { .. } => 3 * self.n_queries,
        }
    }

    pub(crate) fn zero(&self) -> Vec<u64> {
        vec![0; self.subsets.len() * self.stride() + 1]
    }

    pub(crate) fn add_path(&self, path: &[f64], acc: &mut [u64]) {
        let stride = self.stride();
        let q = self.n_queries;
        *acc.last_mut().expect("accumulator has a path counter") += 1;
        for (s, subset) in self.subsets.iter().enumerate() {
            let slot = &mut acc[s * stride..(s + 1) * stride];
            match &self.mode {
                Mode::Levels { sorted, .. } => {
                    let (lo, hi) = extrema(path, subset.as_deref());
                    // Levels at or below the path minimum are dominated from above.
                    slot[sorted.partition_point(|c| *c <= lo)] += 1;
                    // Levels at or above the path maximum dominate it from below.
                    slot[q + 1 + sorted.partition_point(|c| *c < hi)] += 1;
                    if lo == hi {
                        let first = sorted.partition_point(|c| *c < lo);
                        let last = sorted.partition_point(|c| *c <= lo);
                        for k in first..last {
                            slot[2 * q + 2 + k] += 1;
                        }
                    }
                }
                Mode::General { queries } => {
                    for (k, h) in queries.iter().enumerate() {
                        let d = dominance_on(path, h, subset.as_deref());
                        slot[3 * k] += d.above as u64;
                        slot[3 * k + 1] += d.below as u64;
                        slot[3 * k + 2] += (d.above && d.below) as u64;
                    }
                }
            }
        }
    }

    pub(crate) fn merge(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    }

    /// Counts indexed `[subset][query]`.
    pub(crate) fn finish(&self, acc: &[u64]) -> Vec<Vec<SideCounts>> {
        let stride = self.stride();
        let q = self.n_queries;
        let n = *acc.last().expect("accumulator has a path counter");
        (0..self.subsets.len())
            .map(|s| {
                let slot = &acc[s * stride..(s + 1) * stride];
                match &self.mode {
                    Mode::Levels { order, .. } => {
                        let mut out = vec![SideCounts::default(); q];
                        // above(level k) = paths whose minimum histogram slot is > k.
                        let mut above = slot[..=q].iter().sum::<u64>();
                        let mut below = 0;
                        for (k, &orig) in order.iter().enumerate() {
                            above -= slot[k];
                            below += slot[q + 1 + k];
                            out[orig] = SideCounts { above, below, both: slot[2 * q + 2 + k], n };
                        }
                        out
                    }
                    Mode::General { .. } => (0..q)
                        .map(|k| SideCounts { above: slot[3 * k], below: slot[3 * k + 1], both: slot[3 * k + 2], n })
                        .collect(),
                }
            })
            .collect()
    }

    /// Count paths `0..n` of `model` under `seed` (identical to the paths
    /// of `simulate_on(model, grid, n, seed)`).
    pub(crate) fn count_model(
        &self,
        model: &ProcessModel,
        grid: &Grid,
        seed: u64,
        n: u64,
        parallel: bool,
    ) -> Vec<Vec<SideCounts>> {
        let w = grid.len();
        let run_chunk = |c: u64| {
            let mut acc = self.zero();
            let mut buf = vec![0.0; w];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                model.fill_path(grid, seed, i, &mut buf);
                self.add_path(&buf, &mut acc);
            }
            acc
        };
        let chunks = n.div_ceil(CHUNK);
        let acc = if parallel {
            (0..chunks).into_par_iter().map(run_chunk).reduce(|| self.zero(), Self::merge)
        } else {
            (0..chunks).map(run_chunk).fold(self.zero(), Self::merge)
        };
        self.finish(&acc)
    }
}

fn extrema(path: &[f64], idx: Option<&[usize]>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut see = |v: f64| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    match idx {
        Some(idx) => idx.iter().for_each(|&i| see(path[i])),
        None => path.iter().for_each(|v| see(*v)),
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::count_sides;
    use crate::models::simulate_on;
    use crate::smoothing::SmoothingDensity;
    use crate::ProcessKind;
    use std::sync::Arc;

    #[test]
    fn level_mode_matches_direct_counts() {
        let grid = Arc::new(Grid::uniform(12).unwrap());
        let model = ProcessModel::smoothed(ProcessKind::BrownianMotion, SmoothingDensity::gaussian(0.5).unwrap());
        let ens = simulate_on::<f64>(&model, grid.clone(), 3000, 21).unwrap();
        let levels = [0.4, -0.3, 0.0, 1.2, -0.3];
        let queries: Vec<_> = levels.iter().map(|c| GridFunction::constant(grid.clone(), *c)).collect();
        let subsets = vec![None, Some(vec![0, 4, 11]), Some(vec![7])];
        let batch = Batch::new(&queries, subsets.clone());
        let got = batch.count_model(&model, &grid, 21, 3000, true);
        let general = Batch {
            mode: Mode::General { queries: queries.iter().map(|q| q.values().to_vec()).collect() },
            ..batch.clone()
        };
        assert_eq!(got, general.count_model(&model, &grid, 21, 3000, false));
        for (s, subset) in subsets.iter().enumerate() {
            for (k, q) in queries.iter().enumerate() {
                assert_eq!(got[s][k], count_sides(&ens, q.values(), subset.as_deref()));
            }
        }
    }

    #[test]
    fn level_mode_counts_exact_ties() {
        let grid = Arc::new(Grid::uniform(3).unwrap());
        let model = ProcessModel::new(ProcessKind::ProductSequence {
            marginals: vec![crate::MarginalSpec::PointMass { x: 0.5 }; 4],
        });
        let queries: Vec<_> = [0.5, 0.0, 1.0].iter().map(|c| GridFunction::constant(grid.clone(), *c)).collect();
        let got = Batch::new(&queries, vec![None]).count_model(&model, &grid, 1, 10, false);
        assert_eq!(got[0][0], SideCounts { above: 10, below: 10, both: 10, n: 10 });
        assert_eq!(got[0][1], SideCounts { above: 10, below: 0, both: 0, n: 10 });
        assert_eq!(got[0][2], SideCounts { above: 0, below: 10, both: 0, n: 10 });
    }
}
