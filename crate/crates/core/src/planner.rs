//! Single maneuvers `α' → α''` and finite maneuver sequences along a path of
//! asymptotically stable steady states.

use crate::basin::{simulate_to, Attractor, MembershipOptions, Verdict};
use crate::continuation::SteadyPath;
use crate::error::{Error, Result};
use crate::map::{Control, ControlledMap, OrbitSummary, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverOptions {
    pub conv_tol: f64,
    pub k_max: usize,
}

impl Default for ManeuverOptions {
    fn default() -> Self {
        Self { conv_tol: 1e-10, k_max: 100_000 }
    }
}

/// Switching the control from `source.alpha` to `target.alpha` while the
/// state sits at `source.x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Maneuver {
    pub source: SteadyState,
    pub target: SteadyState,
    pub success: bool,
    pub evidence: OrbitSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Verified,
    Failed { leg: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverPlan {
    pub legs: Vec<Maneuver>,
    /// `α*, α¹, …, αᵖ, α**`
    pub control_sequence: Vec<Control>,
    pub status: PlanStatus,
}

impl ManeuverPlan {
    fn from_legs(legs: Vec<Maneuver>) -> Self {
        let mut control_sequence = vec![legs[0].source.alpha.clone()];
        control_sequence.extend(legs.iter().map(|leg| leg.target.alpha.clone()));
        let status = match legs.iter().position(|leg| !leg.success) {
            Some(leg) => PlanStatus::Failed { leg },
            None => PlanStatus::Verified,
        };
        Self { legs, control_sequence, status }
    }

    pub fn is_verified(&self) -> bool {
        self.status == PlanStatus::Verified
    }

    /// Intermediate control values `α¹ … αᵖ`.
    pub fn intermediates(&self) -> &[Control] {
        let n = self.control_sequence.len();
        if n <= 2 {
            &[]
        } else {
            &self.control_sequence[1..n - 1]
        }
    }
}

/// Succeeds iff the orbit of `source.x` under `target.alpha` is certified to
/// converge to `target.x` and reaches it within `conv_tol`.
pub fn check_maneuver(
    map: &ControlledMap,
    source: &SteadyState,
    target: &SteadyState,
    opts: &ManeuverOptions,
) -> Result<Maneuver> {
    map.check_state(&source.x)?;
    let attractor = Attractor::new(map, target)?;
    let membership = attractor.membership(
        &source.x,
        &MembershipOptions { k_max: opts.k_max, conv_tol: opts.conv_tol, escape_radius: None },
    )?;
    let success = membership.verdict == Verdict::In && membership.evidence.termination.is_converged();
    Ok(Maneuver { source: source.clone(), target: target.clone(), success, evidence: membership.evidence })
}

/// Checks the consecutive maneuvers through `states` in order.
pub fn plan_from_states(
    map: &ControlledMap,
    states: &[SteadyState],
    opts: &ManeuverOptions,
) -> Result<ManeuverPlan> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("a plan needs at least one steady state".into()));
    }
    let legs = if states.len() == 1 {
        vec![check_maneuver(map, &states[0], &states[0], opts)?]
    } else {
        states
            .windows(2)
            .map(|w| check_maneuver(map, &w[0], &w[1], opts))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ManeuverPlan::from_legs(legs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    /// Smallest admissible leg in arclength; `None` means `|t_end − t_start| / 1000`.
    pub min_step: Option<f64>,
    /// Longest admissible leg in arclength.
    pub max_leg: Option<f64>,
    pub max_legs: usize,
    pub maneuver: ManeuverOptions,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self { min_step: None, max_leg: None, max_legs: 10_000, maneuver: ManeuverOptions::default() }
    }
}

/// Greedy farthest-advance planner.
///
/// From the current arclength `t`, first tries the farthest admissible
/// `t'`; otherwise bisects for the largest `t'` whose maneuver succeeds.
/// Every bisection candidate is simulated, so an emitted leg is always a
/// verified maneuver even if success is not monotone in `t'`.
pub fn plan_along_path(
    map: &ControlledMap,
    path: &SteadyPath,
    t_start: f64,
    t_end: f64,
    opts: &PlannerOptions,
) -> Result<ManeuverPlan> {
    let (t_min, t_max) = path.t_range();
    for t in [t_start, t_end] {
        if !(t >= t_min && t <= t_max) {
            return Err(Error::InvalidArgument(format!("t = {t} lies outside the traced range [{t_min}, {t_max}]")));
        }
    }
    let (lo, hi) = (t_start.min(t_end), t_start.max(t_end));
    if let Some(s) = path
        .samples
        .iter()
        .find(|s| s.t >= lo && s.t <= hi && !s.steady.stability.is_stable())
    {
        return Err(Error::UnstableOnPath { t: s.t });
    }
    let state_at = |t: f64| -> Result<SteadyState> {
        let ss = path.solve_at(map, t)?;
        if !ss.stability.is_stable() {
            return Err(Error::UnstableOnPath { t });
        }
        Ok(ss)
    };

    let total = hi - lo;
    let mut current = state_at(t_start)?;
    if total == 0.0 {
        let leg = check_maneuver(map, &current, &current, &opts.maneuver)?;
        return Ok(ManeuverPlan::from_legs(vec![leg]));
    }
    let direction = (t_end - t_start).signum();
    let min_step = opts.min_step.unwrap_or(total / 1000.0);
    if !(min_step > 0.0) {
        return Err(Error::InvalidArgument("min_step must be positive".into()));
    }
    let max_leg = opts.max_leg.unwrap_or(f64::INFINITY);
    if !(max_leg >= min_step) {
        return Err(Error::InvalidArgument("max_leg must be at least min_step".into()));
    }

    let mut legs: Vec<Maneuver> = Vec::new();
    let mut t = t_start;
    while t != t_end {
        if legs.len() >= opts.max_legs {
            return Err(Error::LegBudgetExceeded { max_legs: opts.max_legs });
        }
        let remaining = (t_end - t).abs();
        let target_t = |advance: f64| if advance >= remaining { t_end } else { t + direction * advance };
        let attempt = |advance: f64| -> Result<(f64, Maneuver)> {
            let t_next = target_t(advance);
            let target = state_at(t_next)?;
            Ok((t_next, check_maneuver(map, &current, &target, &opts.maneuver)?))
        };

        let reach = remaining.min(max_leg);
        let (far_t, far) = attempt(reach)?;
        let mut chosen = far.success.then_some((far_t, far.clone()));
        let mut last_failure = far.evidence;

        if chosen.is_none() {
            let (mut good, mut bad) = (0.0, reach);
            let mut best: Option<(f64, Maneuver)> = None;
            while bad - good > 0.5 * min_step {
                let mid = 0.5 * (good + bad);
                let (t_mid, leg) = attempt(mid)?;
                if leg.success {
                    good = mid;
                    best = Some((t_mid, leg));
                } else {
                    bad = mid;
                    last_failure = leg.evidence;
                }
            }
            chosen = match best {
                Some(found) if good >= min_step.min(remaining) => Some(found),
                _ => {
                    let (t_min_step, leg) = attempt(min_step)?;
                    if leg.success {
                        Some((t_min_step, leg))
                    } else {
                        last_failure = leg.evidence;
                        None
                    }
                }
            };
        }

        match chosen {
            Some((t_next, leg)) => {
                current = leg.target.clone();
                legs.push(leg);
                t = t_next;
            }
            None => return Err(Error::NoProgress { t, evidence: last_failure }),
        }
    }
    Ok(ManeuverPlan::from_legs(legs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Every leg restarts exactly at its source steady state.
    Nominal,
    /// One continuous journey: the control switches to the next leg once the
    /// state is within `conv_tol` of the current leg's target.
    Chained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegOutcome {
    pub index: usize,
    pub steps: usize,
    pub final_distance: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    pub legs: Vec<LegOutcome>,
    pub status: PlanStatus,
}

/// Re-simulates every leg of `plan`. Failures are reported in the returned
/// status; a chained run stops at the first failing leg.
pub fn verify_plan(
    map: &ControlledMap,
    plan: &ManeuverPlan,
    mode: VerifyMode,
    opts: &ManeuverOptions,
) -> Result<VerificationReport> {
    if plan.legs.is_empty() {
        return Err(Error::InvalidArgument("plan has no legs".into()));
    }
    for leg in &plan.legs {
        map.check_state(&leg.source.x)?;
        map.check_state(&leg.target.x)?;
        map.check_control(&leg.target.alpha)?;
    }
    let mut legs = Vec::with_capacity(plan.legs.len());
    let mut state = plan.legs[0].source.x.clone();
    for (index, leg) in plan.legs.iter().enumerate() {
        let start = match mode {
            VerifyMode::Nominal => &leg.source.x,
            VerifyMode::Chained => &state,
        };
        let orbit = simulate_to(map, start, &leg.target, opts.conv_tol, opts.k_max);
        let success = orbit.termination.is_converged();
        legs.push(LegOutcome { index, steps: orbit.steps, final_distance: orbit.final_distance, success });
        state = orbit.final_state;
        if !success && mode == VerifyMode::Chained {
            break;
        }
    }
    let status = match legs.iter().position(|l| !l.success) {
        Some(leg) => PlanStatus::Failed { leg },
        None => PlanStatus::Verified,
    };
    Ok(VerificationReport { mode, legs, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{trace_path, ControlPolyline, ContinuationOptions};
    use crate::map::solve_steady_state;
    use crate::systems;
    use nalgebra::DVector;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn steady(map: &ControlledMap, alpha: f64, guess: &[f64]) -> SteadyState {
        solve_steady_state(map, &v(&[alpha]), &v(guess), 1e-12, 60).unwrap()
    }

    fn path(map: &ControlledMap, from: f64, to: f64, guess: &[f64]) -> SteadyPath {
        let polyline = ControlPolyline::segment(v(&[from]), v(&[to])).unwrap();
        trace_path(map, &steady(map, from, guess), &polyline, &ContinuationOptions::default()).unwrap()
    }

    #[test]
    fn logistic_maneuvers() {
        let map = systems::logistic();
        let m = check_maneuver(&map, &steady(&map, 1.1, &[0.1]), &steady(&map, 2.9, &[0.65]), &Default::default())
            .unwrap();
        assert!(m.success);
        assert!(m.evidence.termination.is_converged());

        let cross = check_maneuver(&map, &steady(&map, 2.0, &[0.5]), &steady(&map, 0.0, &[0.0]), &Default::default())
            .unwrap();
        assert!(cross.success);

        let unstable_target = steady(&map, 2.0, &[0.0]);
        assert!(matches!(
            check_maneuver(&map, &steady(&map, 0.0, &[0.0]), &unstable_target, &Default::default()),
            Err(Error::TargetNotStable { .. })
        ));
    }

    #[test]
    fn cubic_direct_maneuver_fails() {
        let map = systems::cubic_shift();
        let m = check_maneuver(&map, &steady(&map, 0.0, &[0.0]), &steady(&map, 2.0, &[2.0]), &Default::default())
            .unwrap();
        assert!(!m.success);
        assert!(matches!(m.evidence.termination, crate::map::Termination::Escaped { .. }));
    }

    #[test]
    fn cubic_plan_needs_intermediates() {
        let map = systems::cubic_shift();
        let p = path(&map, 0.0, 2.0, &[0.0]);
        let plan = plan_along_path(&map, &p, 0.0, 2.0, &Default::default()).unwrap();
        assert!(plan.is_verified());
        assert!(plan.intermediates().len() >= 2);
        for w in plan.legs.windows(2) {
            assert_eq!(w[0].target, w[1].source);
        }
        let report = verify_plan(&map, &plan, VerifyMode::Nominal, &Default::default()).unwrap();
        assert_eq!(report.status, PlanStatus::Verified);
    }

    #[test]
    fn reverse_plan() {
        let map = systems::cubic_shift();
        let p = path(&map, 0.0, 2.0, &[0.0]);
        let plan = plan_along_path(&map, &p, 2.0, 0.0, &Default::default()).unwrap();
        assert!(plan.is_verified());
        assert_eq!(plan.control_sequence.first().unwrap()[0], 2.0);
        assert_eq!(plan.control_sequence.last().unwrap()[0], 0.0);
    }

    #[test]
    fn identity_plan_is_trivial() {
        let map = systems::cubic_shift();
        let p = path(&map, 0.0, 2.0, &[0.0]);
        let plan = plan_along_path(&map, &p, 1.0, 1.0, &Default::default()).unwrap();
        assert_eq!(plan.legs.len(), 1);
        let report = verify_plan(&map, &plan, VerifyMode::Nominal, &Default::default()).unwrap();
        assert_eq!(report.status, PlanStatus::Verified);
        assert_eq!(report.legs[0].steps, 0);
    }

    #[test]
    fn unstable_stretch_is_refused() {
        let map = systems::logistic();
        let p = path(&map, 2.5, 3.5, &[0.6]);
        assert!(matches!(
            plan_along_path(&map, &p, 0.0, 1.0, &Default::default()),
            Err(Error::UnstableOnPath { .. })
        ));
    }

    #[test]
    fn tiny_budget_is_reported() {
        let map = systems::cubic_shift();
        let p = path(&map, 0.0, 2.0, &[0.0]);
        let opts = PlannerOptions { max_legs: 1, ..Default::default() };
        assert!(matches!(
            plan_along_path(&map, &p, 0.0, 2.0, &opts),
            Err(Error::LegBudgetExceeded { max_legs: 1 })
        ));
    }

    #[test]
    fn no_progress_when_min_step_too_large() {
        let map = systems::cubic_shift();
        let p = path(&map, 0.0, 2.0, &[0.0]);
        let opts = PlannerOptions { min_step: Some(1.5), ..Default::default() };
        match plan_along_path(&map, &p, 0.0, 2.0, &opts) {
            Err(Error::NoProgress { t, .. }) => assert_eq!(t, 0.0),
            other => panic!("expected NoProgress, got {other:?}"),
        }
    }

    #[test]
    fn failed_leg_is_located() {
        let map = systems::cubic_shift();
        let states: Vec<_> = [0.0, 0.7, 2.0].iter().map(|&a| steady(&map, a, &[a])).collect();
        let plan = plan_from_states(&map, &states, &Default::default()).unwrap();
        assert_eq!(plan.status, PlanStatus::Failed { leg: 1 });
        let report = verify_plan(&map, &plan, VerifyMode::Chained, &Default::default()).unwrap();
        assert_eq!(report.status, PlanStatus::Failed { leg: 1 });
        assert_eq!(report.legs.len(), 2);
    }
}
