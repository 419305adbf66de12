//! NSGA-II building blocks over lattice configurations: fast
//! non-dominated sorting, crowding distance, binary tournament selection,
//! uniform crossover and per-gene mutation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pareto::{dominates, Objectives};
use crate::space::{Config, DesignSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsgaConfig {
    pub population: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / genes`.
    pub mutation_prob: Option<f64>,
    /// Attempts to breed a feasible, canonical child before falling back to
    /// a uniform feasible draw.
    pub max_repair: usize,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        NsgaConfig {
            population: 20,
            crossover_prob: 0.9,
            mutation_prob: None,
            max_repair: 100,
        }
    }
}

/// Front index (0 = non-dominated) of every point.
pub fn fast_non_dominated_sort(objs: &[Objectives]) -> Vec<usize> {
    let n = objs.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&objs[i], &objs[j]) {
                dominates_list[i].push(j);
            } else if i != j && dominates(&objs[j], &objs[i]) {
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut rank = vec![usize::MAX; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = level;
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }
    rank
}

/// Crowding distance of each member of `front` (indices into `objs`), in
/// the same order. Boundary points get `f64::INFINITY`.
pub fn crowding_distance(objs: &[Objectives], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for k in 0..2 {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| objs[front[a]][k].total_cmp(&objs[front[b]][k]).then(a.cmp(&b)));
        let lo = objs[front[order[0]]][k];
        let hi = objs[front[order[m - 1]]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..m - 1 {
                let gap = objs[front[order[w + 1]]][k] - objs[front[order[w - 1]]][k];
                dist[order[w]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Rank and crowding distance of every point.
pub fn rank_and_crowding(objs: &[Objectives]) -> (Vec<usize>, Vec<f64>) {
    let rank = fast_non_dominated_sort(objs);
    let mut crowd = vec![0.0; objs.len()];
    let levels = rank.iter().copied().max().map_or(0, |r| r + 1);
    for level in 0..levels {
        let front: Vec<usize> = (0..objs.len()).filter(|&i| rank[i] == level).collect();
        for (i, d) in front.iter().zip(crowding_distance(objs, &front)) {
            crowd[*i] = d;
        }
    }
    (rank, crowd)
}

/// Crowded-comparison order: lower rank first, then larger crowding
/// distance, then lower index.
fn better(a: usize, b: usize, rank: &[usize], crowd: &[f64]) -> bool {
    rank[a] < rank[b] || (rank[a] == rank[b] && (crowd[a] > crowd[b] || (crowd[a] == crowd[b] && a < b)))
}

/// Indices of the `n` survivors under the crowded-comparison order.
pub fn select_survivors(objs: &[Objectives], n: usize) -> Vec<usize> {
    let (rank, crowd) = rank_and_crowding(objs);
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| {
        rank[a]
            .cmp(&rank[b])
            .then(crowd[b].total_cmp(&crowd[a]))
            .then(a.cmp(&b))
    });
    order.truncate(n);
    order
}

/// Binary tournament on the crowded-comparison order.
pub fn tournament<R: Rng + ?Sized>(rng: &mut R, rank: &[usize], crowd: &[f64]) -> usize {
    let a = rng.gen_range(0..rank.len());
    let b = rng.gen_range(0..rank.len());
    if better(b, a, rank, crowd) {
        b
    } else {
        a
    }
}

/// Uniform crossover with probability `p`; otherwise a copy of `a`.
pub fn crossover<R: Rng + ?Sized>(rng: &mut R, a: &Config, b: &Config, p: f64) -> Config {
    if rng.gen::<f64>() >= p {
        return a.clone();
    }
    Config(
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| if rng.gen::<bool>() { *x } else { *y })
            .collect(),
    )
}

/// Resamples each gene with probability `p` to a different value of its
/// domain, then canonicalizes.
pub fn mutate<R: Rng + ?Sized>(rng: &mut R, space: &DesignSpace, config: &mut Config, p: f64) {
    for (v, size) in config.0.iter_mut().zip(space.gene_sizes()) {
        if size > 1 && rng.gen::<f64>() < p {
            let shift = rng.gen_range(1..size);
            *v = (*v + shift) % size;
        }
    }
    space.canonicalize(config);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force ranking: peel off non-dominated layers one by one.
    fn brute_rank(objs: &[Objectives]) -> Vec<usize> {
        let mut rank = vec![usize::MAX; objs.len()];
        let mut level = 0;
        while rank.contains(&usize::MAX) {
            let remaining: Vec<usize> = (0..objs.len()).filter(|&i| rank[i] == usize::MAX).collect();
            let layer: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| dominates(&objs[j], &objs[i])))
                .collect();
            for i in layer {
                rank[i] = level;
            }
            level += 1;
        }
        rank
    }

    proptest! {
        #[test]
        fn sorting_matches_brute_force(pts in prop::collection::vec((0u8..8, 0u8..8), 1..50)) {
            let objs: Vec<Objectives> = pts.iter().map(|(a, b)| [f64::from(*a), f64::from(*b)]).collect();
            prop_assert_eq!(fast_non_dominated_sort(&objs), brute_rank(&objs));
        }

        #[test]
        fn survivors_respect_fronts(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..40), n in 1usize..20) {
            let objs: Vec<Objectives> = pts.iter().map(|(a, b)| [*a, *b]).collect();
            let n = n.min(objs.len());
            let keep = select_survivors(&objs, n);
            prop_assert_eq!(keep.len(), n);
            let rank = fast_non_dominated_sort(&objs);
            let worst_kept = keep.iter().map(|&i| rank[i]).max().unwrap();
            for i in 0..objs.len() {
                if !keep.contains(&i) {
                    prop_assert!(rank[i] >= worst_kept);
                }
            }
        }
    }

    #[test]
    fn boundary_points_get_the_sentinel() {
        let objs = [[0.0, 4.0], [1.0, 3.0], [2.0, 1.0], [4.0, 0.0]];
        let d = crowding_distance(&objs, &[0, 1, 2, 3]);
        assert_eq!(d[0], f64::INFINITY);
        assert_eq!(d[3], f64::INFINITY);
        assert!((d[1] - (2.0 / 4.0 + 3.0 / 4.0)).abs() < 1e-12);
        assert!((d[2] - (3.0 / 4.0 + 3.0 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn variation_stays_on_the_lattice() {
        let space = DesignSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let genes = space.genes();
        for _ in 0..500 {
            let a = space.sample(&mut rng);
            let b = space.sample(&mut rng);
            let mut child = crossover(&mut rng, &a, &b, 0.9);
            mutate(&mut rng, &space, &mut child, 0.2);
            assert!(space.is_canonical(&child));
            for (v, g) in child.0.iter().zip(&genes) {
                assert!(*v < g.size);
            }
        }
    }
}
