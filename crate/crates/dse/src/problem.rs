//! The optimization problem: which stage of which workload is evaluated,
//! under which power budget, and the cheap feasibility filter applied
//! before any objective is computed.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use memexplorer_core::catalog::{ShorelineBudget, MAX_OFF_CHIP_TIERS};
use memexplorer_core::evaluator::{decode_batch, eval_decode, eval_prefill, prefill_fits};
use memexplorer_core::hierarchy::effective_bandwidths;
use memexplorer_core::power::tdp;
use memexplorer_core::{Catalog, ComputePowerModel, DesignPoint, Workload};
use serde::{Deserialize, Serialize};

use crate::pareto::Objectives;
use crate::space::{Config, DesignSpace};
use crate::DseError;

/// Inference stage being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prefill,
    Decode,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Prefill => "prefill",
            Stage::Decode => "decode",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prefill" => Ok(Stage::Prefill),
            "decode" => Ok(Stage::Decode),
            other => Err(format!("unknown stage `{other}` (expected prefill or decode)")),
        }
    }
}

/// Metrics of one evaluated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub throughput_tps: f64,
    /// Average power over the stage, watts.
    pub power_w: f64,
    pub tdp_w: f64,
    pub tokens_per_j: f64,
    pub batch: u64,
    pub latency_s: f64,
}

impl Evaluation {
    /// Objectives in minimization form: negated throughput, then power.
    pub fn objectives(&self) -> Objectives {
        [-self.throughput_tps, self.power_w]
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub space: DesignSpace,
    pub catalog: Catalog,
    pub workload: Workload,
    pub stage: Stage,
    /// Maximum admissible TDP, watts.
    pub tdp_budget: f64,
    pub shoreline: ShorelineBudget,
    pub compute_power: ComputePowerModel,
}

impl Problem {
    pub fn new(
        space: DesignSpace,
        catalog: Catalog,
        workload: Workload,
        stage: Stage,
        tdp_budget: f64,
    ) -> Result<Self, DseError> {
        space.check(&catalog)?;
        if !(tdp_budget.is_finite() && tdp_budget >= 0.0) {
            return Err(DseError::Options(format!(
                "TDP budget must be a non-negative number of watts, got {tdp_budget}"
            )));
        }
        Ok(Problem {
            space,
            catalog,
            workload,
            stage,
            tdp_budget,
            shoreline: ShorelineBudget::default(),
            compute_power: ComputePowerModel::default(),
        })
    }

    /// Hypervolume reference: zero throughput at the full power budget.
    pub fn reference(&self) -> Objectives {
        [0.0, self.tdp_budget]
    }

    /// Builds the design and applies every analytic feasibility rule:
    /// domains and shoreline, at least one on-chip buffer, TDP at peak
    /// activity, positive effective bandwidth at every boundary, and
    /// capacity for the stage.
    pub fn design(&self, config: &Config) -> Result<DesignPoint, DseError> {
        self.space
            .screen(config, &self.catalog, &self.shoreline, MAX_OFF_CHIP_TIERS)?;
        let design = self.space.to_design(config, &self.catalog, self.compute_power)?;
        let report = design.feasibility(&self.catalog, &self.shoreline);
        if !report.feasible {
            let mut reasons: Vec<String> = report.problems.clone();
            reasons.extend(report.hierarchy.violations.iter().map(ToString::to_string));
            return Err(DseError::Infeasible(reasons.join("; ")));
        }
        if design.hierarchy.on_chip_count() == 0 {
            return Err(DseError::Infeasible("the hierarchy has no on-chip tier".into()));
        }
        let peak = tdp(&design.compute, &design.hierarchy, &design.compute_power)
            .map_err(|e| DseError::Infeasible(e.to_string()))?;
        if peak > self.tdp_budget {
            return Err(DseError::Infeasible(format!(
                "TDP {peak:.1} W exceeds the {:.1} W budget",
                self.tdp_budget
            )));
        }
        effective_bandwidths(&design.hierarchy).map_err(|e| DseError::Infeasible(e.to_string()))?;
        let fits = match self.stage {
            Stage::Prefill => prefill_fits(&design, &self.workload),
            Stage::Decode => matches!(decode_batch(&design, &self.workload), Ok(b) if b > 0),
        };
        if !fits {
            return Err(DseError::Infeasible(format!(
                "{} of the workload does not fit in {:.1} GB",
                self.stage,
                design.hierarchy.total_capacity() / 1e9
            )));
        }
        Ok(design)
    }

    pub fn is_feasible(&self, config: &Config) -> bool {
        self.design(config).is_ok()
    }

    /// Runs the stage model on an already-built design.
    pub fn evaluate_design(&self, design: &DesignPoint) -> Result<Evaluation, DseError> {
        let result = match self.stage {
            Stage::Prefill => eval_prefill(design, &self.workload),
            Stage::Decode => eval_decode(design, &self.workload),
        }
        .map_err(|e| DseError::Infeasible(e.to_string()))?;
        let tdp_w = tdp(&design.compute, &design.hierarchy, &design.compute_power)
            .map_err(|e| DseError::Infeasible(e.to_string()))?;
        Ok(Evaluation {
            throughput_tps: result.tps,
            power_w: result.power.avg_power,
            tdp_w,
            tokens_per_j: result.tokens_per_j,
            batch: result.batch,
            latency_s: result.latency_s,
        })
    }

    pub fn evaluate(&self, config: &Config) -> Result<(DesignPoint, Evaluation), DseError> {
        let design = self.design(config)?;
        let eval = self.evaluate_design(&design)?;
        Ok((design, eval))
    }
}

/// Memoized feasibility verdicts for one problem. Software strategy genes
/// never affect feasibility, so verdicts are shared across them.
#[derive(Debug, Clone, Default)]
pub struct FeasibilityMemo {
    known: HashMap<u128, bool>,
}

impl FeasibilityMemo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_feasible(&mut self, problem: &Problem, config: &Config) -> bool {
        let key = problem.space.prefix_index(config, problem.space.hardware_genes());
        *self.known.entry(key).or_insert_with(|| problem.is_feasible(config))
    }
}
