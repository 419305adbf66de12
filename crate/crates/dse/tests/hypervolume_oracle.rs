//! Exact sweep hypervolume against brute-force grid integration.

use memexplorer_core::{presets, Catalog};
use memexplorer_dse::{hypervolume, ArchiveEntry, DesignSpace, Evaluation, Objectives, ParetoArchive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE: Objectives = [1.0, 1.0];
const RESOLUTION: f64 = 1e-3;

/// Counts grid cells (by centre) in `[0, r]²` dominated by some point.
fn grid_hypervolume(points: &[Objectives]) -> f64 {
    let cells = (REFERENCE[0] / RESOLUTION).round() as usize;
    let mut covered = 0usize;
    for i in 0..cells {
        let x = (i as f64 + 0.5) * RESOLUTION;
        // Lowest second objective among points at or left of x.
        let floor = points
            .iter()
            .filter(|p| p[0] <= x)
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min);
        if floor < REFERENCE[1] {
            let above = (REFERENCE[1] - floor) / RESOLUTION;
            // Cell centres strictly above the floor.
            covered += (above - 0.5).ceil().max(0.0) as usize;
        }
    }
    covered as f64 * RESOLUTION * RESOLUTION
}

#[test]
fn sweep_matches_grid_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for front_idx in 0..50 {
        let n = rng.gen_range(1..=12);
        // Coordinates on the grid lattice, where cell counting is exact;
        // off-lattice staircases carry a midpoint-rule error of order
        // perimeter × resolution that says nothing about the sweep.
        let mut coord = || rng.gen_range(0..900) as f64 * RESOLUTION;
        let points: Vec<Objectives> = (0..n).map(|_| [coord(), coord()]).collect();
        let exact = hypervolume(&points, REFERENCE);
        let grid = grid_hypervolume(&points);
        let rel = (exact - grid).abs() / exact;
        assert!(rel <= 1e-3, "front {front_idx}: sweep {exact}, grid {grid}, rel {rel}");
    }
}

fn entry(throughput: f64, power: f64) -> ArchiveEntry {
    let catalog = Catalog::bundled();
    let design = presets::design("d1").resolve(&catalog, None).unwrap();
    let config = DesignSpace::default().config_of(&design).unwrap();
    ArchiveEntry::new(
        config,
        design,
        Evaluation {
            throughput_tps: throughput,
            power_w: power,
            tdp_w: power,
            tokens_per_j: throughput / power,
            batch: 1,
            latency_s: 1.0,
        },
    )
}

#[test]
fn archive_hypervolume_never_decreases_under_insertion() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let mut archive = ParetoArchive::new([0.0, 700.0]);
        let mut previous = 0.0;
        for _ in 0..60 {
            archive.insert(entry(rng.gen_range(0.0..500.0), rng.gen_range(50.0..800.0)));
            let hv = archive.hypervolume();
            assert!(hv >= previous, "{hv} < {previous}");
            previous = hv;
            let objs = archive.objectives();
            for a in &objs {
                assert!(!objs.iter().any(|b| memexplorer_dse::dominates(b, a)));
            }
        }
    }
}
