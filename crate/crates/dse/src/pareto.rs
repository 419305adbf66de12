//! Pareto dominance, exact two-objective hypervolume and the
//! non-dominated archive. Everything here uses the minimization
//! convention.

use memexplorer_core::DesignPoint;
use sha2::{Digest, Sha256};

use crate::problem::Evaluation;
use crate::space::Config;

/// Objective vector, both components minimized.
pub type Objectives = [f64; 2];

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Area dominated by `points` and bounded by the reference `r`. Points that
/// do not strictly improve on `r` in both objectives contribute nothing.
pub fn hypervolume(points: &[Objectives], r: Objectives) -> f64 {
    let mut inside: Vec<Objectives> = points
        .iter()
        .copied()
        .filter(|p| p[0] < r[0] && p[1] < r[1])
        .collect();
    inside.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut volume = 0.0;
    let mut ceiling = r[1];
    for p in inside {
        if p[1] < ceiling {
            volume += (r[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    volume
}

/// Non-dominated subset, sorted by the first objective.
pub fn non_dominated(points: &[Objectives]) -> Vec<Objectives> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut front: Vec<Objectives> = Vec::new();
    for p in sorted {
        match front.last() {
            Some(last) if p[1] >= last[1] => {}
            _ => front.push(p),
        }
    }
    front
}

/// Short content hash of a design's canonical JSON form.
pub fn design_id(design: &DesignPoint) -> String {
    let json = serde_json::to_string(&design.to_file()).expect("design files serialize");
    let digest = Sha256::digest(json.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub design_id: String,
    pub config: Config,
    pub design: DesignPoint,
    pub eval: Evaluation,
}

impl ArchiveEntry {
    pub fn new(config: Config, design: DesignPoint, eval: Evaluation) -> Self {
        ArchiveEntry {
            design_id: design_id(&design),
            config,
            design,
            eval,
        }
    }

    pub fn objectives(&self) -> Objectives {
        self.eval.objectives()
    }
}

/// Mutually non-dominated evaluated designs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoArchive {
    pub reference: Objectives,
    pub entries: Vec<ArchiveEntry>,
}

impl ParetoArchive {
    pub fn new(reference: Objectives) -> Self {
        ParetoArchive {
            reference,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds `entry` unless an existing member dominates it or has identical
    /// objectives; evicts members it dominates. Returns whether it was kept.
    pub fn insert(&mut self, entry: ArchiveEntry) -> bool {
        let y = entry.objectives();
        if self
            .entries
            .iter()
            .any(|e| dominates(&e.objectives(), &y) || e.objectives() == y)
        {
            return false;
        }
        self.entries.retain(|e| !dominates(&y, &e.objectives()));
        self.entries.push(entry);
        true
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.entries.iter().map(ArchiveEntry::objectives).collect()
    }

    pub fn hypervolume(&self) -> f64 {
        hypervolume(&self.objectives(), self.reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_sweep() {
        // Maximize/maximize {(1,2),(2,1)} against (0,0), negated.
        let hv = hypervolume(&[[-1.0, -2.0], [-2.0, -1.0]], [0.0, 0.0]);
        assert_eq!(hv, 3.0);
    }

    #[test]
    fn single_rectangle() {
        assert_eq!(hypervolume(&[[-2.0, -3.0]], [0.0, 0.0]), 6.0);
    }

    #[test]
    fn dominated_point_changes_nothing() {
        let base = [[-1.0, -2.0], [-2.0, -1.0]];
        let mut with = base.to_vec();
        with.push([-0.5, -0.5]);
        assert_eq!(hypervolume(&with, [0.0, 0.0]), hypervolume(&base, [0.0, 0.0]));
    }

    #[test]
    fn points_outside_the_reference_box_are_ignored() {
        assert_eq!(hypervolume(&[[1.0, -5.0], [-1.0, 0.0]], [0.0, 0.0]), 0.0);
        assert_eq!(hypervolume(&[], [0.0, 0.0]), 0.0);
    }

    #[test]
    fn dominance_relation() {
        assert!(dominates(&[0.0, 0.0], &[1.0, 0.0]));
        assert!(!dominates(&[0.0, 0.0], &[0.0, 0.0]));
        assert!(!dominates(&[0.0, 1.0], &[1.0, 0.0]));
    }

    proptest! {
        #[test]
        fn non_dominated_matches_pairwise_scan(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)) {
            let pts: Vec<Objectives> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let front = non_dominated(&pts);
            for p in &pts {
                let dominated = pts.iter().any(|q| dominates(q, p));
                let in_front = front.contains(p);
                if dominated {
                    prop_assert!(!in_front);
                } else {
                    prop_assert!(front.iter().any(|f| f == p));
                }
            }
            prop_assert_eq!(hypervolume(&front, [1.0, 1.0]), hypervolume(&pts, [1.0, 1.0]));
        }

        #[test]
        fn hypervolume_is_monotone_under_insertion(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30),
            extra in (0.0f64..1.2, 0.0f64..1.2),
        ) {
            let mut pts: Vec<Objectives> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let before = hypervolume(&pts, [1.0, 1.0]);
            pts.push([extra.0, extra.1]);
            prop_assert!(hypervolume(&pts, [1.0, 1.0]) >= before);
        }
    }
}
