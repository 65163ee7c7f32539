//! Controlled maps `x_{k+1} = f(x_k, α)`, their orbits, steady states and
//! linear stability.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type State = DVector<f64>;
pub type Control = DVector<f64>;

type EvalFn = dyn Fn(&State, &Control) -> State + Send + Sync;
type JacobianFn = dyn Fn(&State, &Control) -> DMatrix<f64> + Send + Sync;

pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e6;
pub const DEFAULT_MARGIN: f64 = 1e-9;

/// A map `f : ℝⁿ × ℝᵐ → ℝⁿ` with an optional analytic state-Jacobian.
#[derive(Clone)]
pub struct ControlledMap {
    name: String,
    state_dim: usize,
    control_dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacobianFn>>,
    escape_radius: f64,
}

impl fmt::Debug for ControlledMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledMap")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("escape_radius", &self.escape_radius)
            .finish()
    }
}

impl ControlledMap {
    pub fn new<F>(name: impl Into<String>, state_dim: usize, control_dim: usize, eval: F) -> Self
    where
        F: Fn(&State, &Control) -> State + Send + Sync + 'static,
    {
        assert!(state_dim > 0 && control_dim > 0, "map dimensions must be positive");
        Self {
            name: name.into(),
            state_dim,
            control_dim,
            eval: Arc::new(eval),
            jacobian: None,
            escape_radius: DEFAULT_ESCAPE_RADIUS,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&State, &Control) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_escape_radius(mut self, escape_radius: f64) -> Self {
        assert!(escape_radius > 0.0, "escape radius must be positive");
        self.escape_radius = escape_radius;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn escape_radius(&self) -> f64 {
        self.escape_radius
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &State, alpha: &Control) -> State {
        (self.eval)(x, alpha)
    }

    pub fn check_state(&self, x: &State) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_control(&self, alpha: &Control) -> Result<()> {
        if alpha.len() != self.control_dim {
            return Err(Error::DimensionMismatch {
                what: "control",
                expected: self.control_dim,
                got: alpha.len(),
            });
        }
        Ok(())
    }

    fn check_dims(&self, x: &State, alpha: &Control) -> Result<()> {
        self.check_state(x)?;
        self.check_control(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    AsymptoticallyStable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        self == Stability::AsymptoticallyStable
    }
}

/// A verified fixed point `x = f(x, α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub x: State,
    pub alpha: Control,
    /// `‖f(x, α) − x‖`
    pub residual: f64,
    pub spectral_radius: f64,
    /// Induced 2-norm of `∂x f`.
    pub operator_norm: f64,
    pub stability: Stability,
}

/// Spectral data of a state-Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub spectral_radius: f64,
    pub operator_norm: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    StepBudget,
    /// `index` is the position in the orbit of the first state that left the
    /// escape radius or was not finite.
    Escaped { index: usize, non_finite: bool },
    ConvergedTo { target: State, tolerance: f64 },
}

impl Termination {
    pub fn is_converged(&self) -> bool {
        matches!(self, Termination::ConvergedTo { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub alpha: Control,
    pub states: Vec<State>,
    pub terminated_by: Termination,
}

/// Compact record of an orbit that was run without being stored.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSummary {
    /// Number of map applications performed.
    pub steps: usize,
    pub final_state: State,
    /// Distance of `final_state` to the reference point of the run.
    pub final_distance: f64,
    pub termination: Termination,
}

pub(crate) struct Stop<'a> {
    pub target: &'a State,
    pub tolerance: f64,
}

/// Runs the orbit of `x0`, calling `visit` on every state (including `x0`).
pub(crate) fn walk(
    map: &ControlledMap,
    x0: &State,
    alpha: &Control,
    max_steps: usize,
    stop: Option<Stop<'_>>,
    escape_radius: f64,
    mut visit: impl FnMut(&State),
) -> (State, usize, Termination) {
    let mut x = x0.clone();
    let mut k = 0;
    loop {
        visit(&x);
        let non_finite = x.iter().any(|v| !v.is_finite());
        if non_finite || x.norm() > escape_radius {
            return (x, k, Termination::Escaped { index: k, non_finite });
        }
        if let Some(stop) = &stop {
            if (&x - stop.target).norm() < stop.tolerance {
                let termination = Termination::ConvergedTo {
                    target: stop.target.clone(),
                    tolerance: stop.tolerance,
                };
                return (x, k, termination);
            }
        }
        if k == max_steps {
            return (x, k, Termination::StepBudget);
        }
        x = map.eval(&x, alpha);
        k += 1;
    }
}

/// Iterates the map from `x0` for at most `max_steps` steps, storing every
/// state. With `stop = Some((target, tol))` the orbit ends as soon as a state
/// lies strictly within `tol` of `target`.
pub fn iterate(
    map: &ControlledMap,
    x0: &State,
    alpha: &Control,
    max_steps: usize,
    stop: Option<(&State, f64)>,
) -> Result<Trajectory> {
    map.check_dims(x0, alpha)?;
    if let Some((target, _)) = stop {
        map.check_state(target)?;
    }
    let mut states = Vec::new();
    let stop = stop.map(|(target, tolerance)| Stop { target, tolerance });
    let (_, _, terminated_by) = walk(map, x0, alpha, max_steps, stop, map.escape_radius(), |x| {
        states.push(x.clone())
    });
    Ok(Trajectory { alpha: alpha.clone(), states, terminated_by })
}

/// State-Jacobian `∂x f(x, α)`: analytic when the map provides one, central
/// differences otherwise.
pub fn jacobian_x(map: &ControlledMap, x: &State, alpha: &Control) -> Result<DMatrix<f64>> {
    map.check_dims(x, alpha)?;
    let jac = match &map.jacobian {
        Some(jac) => jac(x, alpha),
        None => finite_difference_jacobian(map, x, alpha),
    };
    if jac.nrows() != map.state_dim || jac.ncols() != map.state_dim {
        return Err(Error::DimensionMismatch {
            what: "jacobian",
            expected: map.state_dim,
            got: jac.nrows().max(jac.ncols()),
        });
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { x: x.iter().copied().collect() });
    }
    Ok(jac)
}

/// Central differences with step `cbrt(ε)·max(1, |x_i|)` per coordinate.
pub fn finite_difference_jacobian(map: &ControlledMap, x: &State, alpha: &Control) -> DMatrix<f64> {
    let n = x.len();
    let base = f64::EPSILON.cbrt();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = base * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = map.eval(&probe, alpha);
        probe[i] = x[i] - h;
        let minus = map.eval(&probe, alpha);
        probe[i] = x[i];
        // actual spacing after rounding of x ± h
        let width = (x[i] + h) - (x[i] - h);
        jac.set_column(i, &((plus - minus) / width));
    }
    jac
}

/// Spectral radius, induced 2-norm and stability class of `jac`. The class
/// is `Marginal` when the spectral radius is within `margin` of 1.
pub fn classify_stability(jac: &DMatrix<f64>, margin: f64) -> Linearization {
    assert!(jac.is_square(), "jacobian must be square");
    let (spectral_radius, operator_norm) = if jac.nrows() == 1 {
        let v = jac[(0, 0)].abs();
        (v, v)
    } else {
        let rho = jac
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        let sigma = jac.singular_values().iter().copied().fold(0.0_f64, f64::max);
        (rho, sigma)
    };
    let stability = if spectral_radius < 1.0 - margin {
        Stability::AsymptoticallyStable
    } else if spectral_radius > 1.0 + margin {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    Linearization { spectral_radius, operator_norm, stability }
}

/// Builds a `SteadyState` for `x` at `alpha` without any solving: residual and
/// stability are evaluated as they stand.
pub fn steady_state_at(map: &ControlledMap, x: State, alpha: Control) -> Result<SteadyState> {
    map.check_dims(&x, &alpha)?;
    let residual = (map.eval(&x, &alpha) - &x).norm();
    let lin = classify_stability(&jacobian_x(map, &x, &alpha)?, DEFAULT_MARGIN);
    Ok(SteadyState {
        x,
        alpha,
        residual,
        spectral_radius: lin.spectral_radius,
        operator_norm: lin.operator_norm,
        stability: lin.stability,
    })
}

/// Newton's method on `F(x) = f(x, α) − x`.
///
/// Stops once the residual is below `newton_tol` and the last Newton step is
/// below `newton_tol·max(1, ‖x‖)`, or when `max_iters` is reached with the
/// residual already below `newton_tol`.
pub fn solve_steady_state(
    map: &ControlledMap,
    alpha: &Control,
    guess: &State,
    newton_tol: f64,
    max_iters: usize,
) -> Result<SteadyState> {
    map.check_dims(guess, alpha)?;
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("steady-state guess must be finite".into()));
    }
    if !(newton_tol > 0.0) {
        return Err(Error::InvalidArgument("newton_tol must be positive".into()));
    }
    let n = map.state_dim();
    let mut x = guess.clone();
    let mut last_step = f64::INFINITY;
    for iter in 0..=max_iters {
        let fx = map.eval(&x, alpha);
        let r = &fx - &x;
        let residual = r.norm();
        if !residual.is_finite() {
            return Err(Error::NoConvergence { iterations: iter, residual });
        }
        let small_step = last_step <= newton_tol * x.norm().max(1.0);
        if residual <= newton_tol && (residual == 0.0 || small_step || iter == max_iters) {
            return steady_state_at(map, x, alpha.clone());
        }
        if iter == max_iters {
            return Err(Error::NoConvergence { iterations: iter, residual });
        }
        let a = jacobian_x(map, &x, alpha)? - DMatrix::identity(n, n);
        let svd = a.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        if sigma_min <= n as f64 * f64::EPSILON * sigma_max.max(1.0) {
            return Err(Error::NearSingularJacobian { x: x.iter().copied().collect(), sigma_min });
        }
        let delta = svd
            .solve(&(-r), 0.0)
            .map_err(|e| Error::InvalidArgument(format!("linear solve failed: {e}")))?;
        last_step = delta.norm();
        x += delta;
    }
    unreachable!("loop returns on its last iteration")
}

/// Conjugates `map` so that the steady state `ss` sits at the origin:
/// `g(y, α) = f(y + x*, α) − x*`.
pub fn shift_to_origin(map: &ControlledMap, ss: &SteadyState) -> ControlledMap {
    let center = ss.x.clone();
    let inner = map.clone();
    let eval_center = center.clone();
    let mut shifted = ControlledMap::new(
        format!("{}@origin", map.name()),
        map.state_dim(),
        map.control_dim(),
        move |y, alpha| inner.eval(&(y + &eval_center), alpha) - &eval_center,
    )
    .with_escape_radius(map.escape_radius());
    if let Some(jac) = map.jacobian.clone() {
        shifted = shifted.with_jacobian(move |y, alpha| jac(&(y + &center), alpha));
    }
    shifted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn cubic_shift_orbit_matches_hand_computation() {
        let map = systems::cubic_shift();
        let traj = iterate(&map, &v(&[1.0]), &v(&[0.5]), 2, None).unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![1.0, 0.625, 0.501953125]);
        assert_eq!(traj.terminated_by, Termination::StepBudget);
    }

    #[test]
    fn logistic_fixed_point_orbit_is_constant() {
        let map = systems::logistic();
        let traj = iterate(&map, &v(&[0.5]), &v(&[2.0]), 25, None).unwrap();
        assert_eq!(traj.states.len(), 26);
        assert!(traj.states.iter().all(|s| s[0] == 0.5));
    }

    #[test]
    fn cubic_shift_outside_basin_escapes() {
        let map = systems::cubic_shift();
        let traj = iterate(&map, &v(&[1.5]), &v(&[0.0]), 100, None).unwrap();
        assert!(matches!(traj.terminated_by, Termination::Escaped { index: 4, non_finite: false }));
        for w in traj.states.windows(2) {
            assert_eq!(w[1], map.eval(&w[0], &v(&[0.0])));
        }
    }

    #[test]
    fn non_finite_state_is_reported_as_escape() {
        let map = ControlledMap::new("nan", 1, 1, |x, _| x.map(|_| f64::NAN))
            .with_escape_radius(f64::INFINITY);
        let traj = iterate(&map, &v(&[1.0]), &v(&[0.0]), 10, None).unwrap();
        assert_eq!(traj.terminated_by, Termination::Escaped { index: 1, non_finite: true });
    }

    #[test]
    fn iterate_stops_on_convergence() {
        let map = systems::cubic_shift();
        let target = v(&[0.0]);
        let traj = iterate(&map, &v(&[0.5]), &v(&[0.0]), 100, Some((&target, 1e-6))).unwrap();
        assert!(traj.terminated_by.is_converged());
        assert!(traj.states.last().unwrap()[0].abs() < 1e-6);
    }

    #[test]
    fn iterate_rejects_wrong_dimensions() {
        let map = systems::radial_cubic_2d();
        assert!(matches!(
            iterate(&map, &v(&[0.0]), &v(&[0.0]), 3, None),
            Err(Error::DimensionMismatch { what: "state", .. })
        ));
    }

    #[test]
    fn newton_finds_paper_steady_states() {
        let logistic = systems::logistic();
        let ss = solve_steady_state(&logistic, &v(&[2.0]), &v(&[0.6]), 1e-12, 50).unwrap();
        assert_relative_eq!(ss.x[0], 0.5, epsilon = 1e-12);
        assert!(ss.stability.is_stable());

        let cubic = systems::cubic_shift();
        let ss = solve_steady_state(&cubic, &v(&[1.4]), &v(&[1.3]), 1e-12, 50).unwrap();
        assert_relative_eq!(ss.x[0], 1.4, epsilon = 1e-12);

        let ss = solve_steady_state(&logistic, &v(&[0.0]), &v(&[0.1]), 1e-12, 50).unwrap();
        assert_eq!(ss.x[0], 0.0);
        assert!(ss.residual <= 1e-12);
    }

    #[test]
    fn newton_locates_unstable_states() {
        let cubic = systems::cubic_shift();
        let ss = solve_steady_state(&cubic, &v(&[0.3]), &v(&[1.2]), 1e-12, 50).unwrap();
        assert_relative_eq!(ss.x[0], 1.3, epsilon = 1e-12);
        assert_eq!(ss.stability, Stability::Unstable);
        assert_relative_eq!(ss.spectral_radius, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        // F(x) = (x² − 1)² has F'(0) = 0 at the guess
        let map = ControlledMap::new("flat", 1, 1, |x, _| x.map(|v| v + (v * v - 1.0).powi(2)))
            .with_jacobian(|x, _| DMatrix::from_element(1, 1, 1.0 + 4.0 * x[0] * (x[0] * x[0] - 1.0)));
        let err = solve_steady_state(&map, &v(&[0.0]), &v(&[0.0]), 1e-12, 50);
        assert!(matches!(err, Err(Error::NearSingularJacobian { .. })), "{err:?}");
    }

    #[test]
    fn newton_reports_no_convergence() {
        // x ↦ x + 1 has no fixed point
        let map = ControlledMap::new("shift", 1, 1, |x, _| x.map(|v| v + 1.0 + 0.1 * v.sin()));
        let err = solve_steady_state(&map, &v(&[0.0]), &v(&[0.0]), 1e-12, 5);
        assert!(matches!(err, Err(Error::NoConvergence { iterations: 5, .. })), "{err:?}");
    }

    #[test]
    fn analytic_jacobians_match_hand_derivatives() {
        let logistic = systems::logistic();
        assert_eq!(jacobian_x(&logistic, &v(&[0.5]), &v(&[2.0])).unwrap()[(0, 0)], 0.0);
        assert_eq!(jacobian_x(&logistic, &v(&[0.0]), &v(&[2.0])).unwrap()[(0, 0)], 2.0);
        let radial = systems::radial_cubic_2d();
        for a in [-1.0, 0.0, 0.7] {
            let j = jacobian_x(&radial, &v(&[a, a]), &v(&[a])).unwrap();
            assert_eq!(j, DMatrix::zeros(2, 2));
            let fd = finite_difference_jacobian(&radial, &v(&[a, a]), &v(&[a]));
            assert!(fd.amax() < 1e-9);
        }
    }

    #[test]
    fn non_finite_jacobian_is_an_error() {
        let map = ControlledMap::new("sqrt", 1, 1, |x, _| x.map(f64::sqrt));
        assert!(matches!(
            jacobian_x(&map, &v(&[0.0]), &v(&[0.0])),
            Err(Error::NonFiniteDerivative { .. })
        ));
    }

    #[test]
    fn classify_examples() {
        let lin = classify_stability(&DMatrix::from_element(1, 1, 0.0), DEFAULT_MARGIN);
        assert_eq!((lin.spectral_radius, lin.operator_norm), (0.0, 0.0));
        assert_eq!(lin.stability, Stability::AsymptoticallyStable);

        let alpha: f64 = 3.0;
        let lin = classify_stability(&DMatrix::from_element(1, 1, 2.0 - alpha), DEFAULT_MARGIN);
        assert_eq!((lin.spectral_radius, lin.operator_norm), (1.0, 1.0));
        assert_eq!(lin.stability, Stability::Marginal);

        let lin = classify_stability(&DMatrix::from_element(1, 1, 3.0), DEFAULT_MARGIN);
        assert_eq!((lin.spectral_radius, lin.operator_norm), (3.0, 3.0));
        assert_eq!(lin.stability, Stability::Unstable);
    }

    #[test]
    fn classify_separates_radius_and_norm_for_non_normal_matrices() {
        // nilpotent: every eigenvalue 0, 2-norm 2
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        let lin = classify_stability(&j, DEFAULT_MARGIN);
        assert!(lin.spectral_radius < 1e-10);
        assert_relative_eq!(lin.operator_norm, 2.0, epsilon = 1e-12);
        assert!(lin.stability.is_stable());

        // rotation by 90° scaled by 0.9: complex pair of modulus 0.9
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -0.9, 0.9, 0.0]);
        let lin = classify_stability(&j, DEFAULT_MARGIN);
        assert_relative_eq!(lin.spectral_radius, 0.9, epsilon = 1e-10);
    }

    #[test]
    fn shifted_map_fixes_origin() {
        let logistic = systems::logistic();
        let ss = solve_steady_state(&logistic, &v(&[2.0]), &v(&[0.6]), 1e-12, 50).unwrap();
        let g = shift_to_origin(&logistic, &ss);
        assert!(g.eval(&v(&[0.0]), &ss.alpha).norm() <= ss.residual.max(1e-15));
        assert_eq!(g.state_dim(), 1);

        let cubic = systems::cubic_shift();
        for alpha in [-0.4, 0.0, 1.4] {
            let ss = solve_steady_state(&cubic, &v(&[alpha]), &v(&[alpha]), 1e-12, 50).unwrap();
            let g = shift_to_origin(&cubic, &ss);
            for y in [-0.5, 0.1, 0.9] {
                let gy = g.eval(&v(&[y]), &ss.alpha)[0];
                assert!((gy - y * y * y).abs() <= 1e-12, "alpha {alpha} y {y}: {gy}");
            }
        }
    }
}
