//! Plan documents: a TOML header (system, mode, tolerances, status) followed
//! by one `[[legs]]` record per maneuver, in order.

use serde::{Deserialize, Serialize};

use crate::map::{steady_state_at, ControlledMap};
use crate::planner::{ManeuverPlan, PlanStatus, VerificationReport, VerifyMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTolerances {
    pub newton_tol: f64,
    pub conv_tol: f64,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegRecord {
    pub leg_index: usize,
    pub alpha_from: Vec<f64>,
    pub alpha_to: Vec<f64>,
    pub x_from: Vec<f64>,
    pub x_to: Vec<f64>,
    pub steps: usize,
    pub final_distance: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub system: String,
    pub mode: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_leg: Option<usize>,
    pub tolerances: PlanTolerances,
    pub legs: Vec<LegRecord>,
}

pub fn mode_name(mode: VerifyMode) -> &'static str {
    match mode {
        VerifyMode::Nominal => "nominal",
        VerifyMode::Chained => "chained",
    }
}

pub fn parse_mode(name: &str) -> Result<VerifyMode, String> {
    match name {
        "nominal" => Ok(VerifyMode::Nominal),
        "chained" => Ok(VerifyMode::Chained),
        other => Err(format!("unknown mode `{other}` (expected nominal or chained)")),
    }
}

impl PlanDocument {
    /// Per-leg outcomes come from `report`, which must cover the same plan.
    pub fn new(system: &str, plan: &ManeuverPlan, report: &VerificationReport, tolerances: PlanTolerances) -> Self {
        let legs = plan
            .legs
            .iter()
            .enumerate()
            .map(|(i, leg)| {
                let outcome = report.legs.get(i);
                LegRecord {
                    leg_index: i,
                    alpha_from: leg.source.alpha.iter().copied().collect(),
                    alpha_to: leg.target.alpha.iter().copied().collect(),
                    x_from: leg.source.x.iter().copied().collect(),
                    x_to: leg.target.x.iter().copied().collect(),
                    steps: outcome.map_or(0, |o| o.steps),
                    final_distance: outcome.map_or(f64::INFINITY, |o| o.final_distance),
                    success: outcome.is_some_and(|o| o.success),
                }
            })
            .collect();
        let (status, failed_leg) = match report.status {
            PlanStatus::Verified => ("verified", None),
            PlanStatus::Failed { leg } => ("failed", Some(leg)),
        };
        Self {
            system: system.to_string(),
            mode: mode_name(report.mode).to_string(),
            status: status.to_string(),
            failed_leg,
            tolerances,
            legs,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan documents always serialise")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Rebuilds the plan from the stored states. Residuals and stability are
    /// re-evaluated; a stored state that is no longer a steady state within
    /// `newton_tol` is an error.
    pub fn to_plan(&self, map: &ControlledMap) -> Result<ManeuverPlan, String> {
        if self.legs.is_empty() {
            return Err("plan document has no legs".into());
        }
        let state = |x: &[f64], alpha: &[f64], what: &str, i: usize| {
            let ss = steady_state_at(
                map,
                nalgebra::DVector::from_column_slice(x),
                nalgebra::DVector::from_column_slice(alpha),
            )
            .map_err(|e| format!("leg {i} {what}: {e}"))?;
            if ss.residual > self.tolerances.newton_tol {
                return Err(format!("leg {i} {what}: residual {:e} exceeds newton_tol", ss.residual));
            }
            Ok(ss)
        };
        let mut legs = Vec::with_capacity(self.legs.len());
        for (i, record) in self.legs.iter().enumerate() {
            if record.leg_index != i {
                return Err(format!("leg records out of order at position {i}"));
            }
            let source = state(&record.x_from, &record.alpha_from, "source", i)?;
            let target = state(&record.x_to, &record.alpha_to, "target", i)?;
            legs.push(crate::planner::Maneuver {
                source,
                target,
                success: record.success,
                evidence: crate::map::OrbitSummary {
                    steps: record.steps,
                    final_state: nalgebra::DVector::from_column_slice(&record.x_to),
                    final_distance: record.final_distance,
                    termination: crate::map::Termination::StepBudget,
                },
            });
        }
        for w in legs.windows(2) {
            if w[0].target != w[1].source {
                return Err("consecutive legs do not chain".into());
            }
        }
        let mut control_sequence = vec![legs[0].source.alpha.clone()];
        control_sequence.extend(legs.iter().map(|l| l.target.alpha.clone()));
        let status = match self.failed_leg {
            Some(leg) => PlanStatus::Failed { leg },
            None => PlanStatus::Verified,
        };
        Ok(ManeuverPlan { legs, control_sequence, status })
    }
}
