//! Domains of attraction of asymptotically stable steady states.
//!
//! Membership is decided by iteration with a certified contraction ball
//! around the target: once an orbit enters the ball it provably converges, so
//! finite orbits become `In` certificates. The Lyapunov function
//! `V(x) = Σₖ ‖fᵏ(x) − x*‖²` is summed the same way, with the ball's
//! contraction factor bounding the remaining tail.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::{jacobian_x, walk, ControlledMap, OrbitSummary, State, SteadyState, Stop, Termination};

/// Ball `B(x*, radius)` on which every sampled `‖∂x f‖₂ ≤ factor < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionBall {
    pub radius: f64,
    pub factor: f64,
}

const BALL_RADIAL_LEVELS: usize = 4;
const BALL_MAX_HALVINGS: usize = 80;

impl ContractionBall {
    /// Starts from `max(1, ‖x*‖)` and halves the radius until the sampled
    /// Jacobian norm on the ball is at most `(1 + ‖J(x*)‖)/2`.
    pub fn certify(map: &ControlledMap, target: &SteadyState) -> Result<Self> {
        let norm = target.operator_norm;
        if norm >= 1.0 {
            return Err(Error::ContractionUncertified { norm });
        }
        let factor = 0.5 * (1.0 + norm);
        let n = map.state_dim();
        let directions = sample_directions(n);
        let mut radius = target.x.norm().max(1.0);
        for _ in 0..BALL_MAX_HALVINGS {
            let ok = directions.iter().all(|d| {
                (1..=BALL_RADIAL_LEVELS).all(|level| {
                    let r = radius * level as f64 / BALL_RADIAL_LEVELS as f64;
                    let y = &target.x + d * r;
                    let image_finite = map.eval(&y, &target.alpha).iter().all(|v| v.is_finite());
                    image_finite
                        && jacobian_x(map, &y, &target.alpha)
                            .map(|j| j.singular_values().max() <= factor)
                            .unwrap_or(false)
                })
            });
            if ok {
                return Ok(Self { radius, factor });
            }
            radius *= 0.5;
        }
        Err(Error::ContractionUncertified { norm })
    }
}

fn sample_directions(n: usize) -> Vec<State> {
    match n {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => circle_directions(16),
        _ => {
            let mut dirs: Vec<State> = (0..n)
                .flat_map(|i| {
                    [1.0, -1.0].map(|s| {
                        let mut e = DVector::zeros(n);
                        e[i] = s;
                        e
                    })
                })
                .collect();
            dirs.extend(sphere_directions(n, 16));
            dirs
        }
    }
}

fn circle_directions(count: usize) -> Vec<State> {
    (0..count)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / count as f64;
            DVector::from_column_slice(&[theta.cos(), theta.sin()])
        })
        .collect()
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let base_f = base as f64;
    let mut inv = 1.0 / base_f;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= base_f;
    }
    out
}

/// Low-discrepancy points on the unit sphere in ℝⁿ: Halton coordinates
/// pushed through Box–Muller and normalised.
fn sphere_directions(n: usize, count: usize) -> Vec<State> {
    assert!(n <= PRIMES.len(), "sphere directions supported up to dimension {}", PRIMES.len());
    let pairs = n.div_ceil(2);
    let primes: Vec<u32> = PRIMES.iter().copied().cycle().take(2 * pairs).collect();
    (1..=count as u64)
        .map(|i| {
            let mut gauss = Vec::with_capacity(2 * pairs);
            for p in 0..pairs {
                // offset index per dimension pair keeps cycled primes decorrelated
                let idx = i + (p / 8) as u64 * 7919;
                let u1 = radical_inverse(idx, primes[2 * p]).max(f64::MIN_POSITIVE);
                let u2 = radical_inverse(idx, primes[2 * p + 1]);
                let r = (-2.0 * u1.ln()).sqrt();
                gauss.push(r * (2.0 * PI * u2).cos());
                gauss.push(r * (2.0 * PI * u2).sin());
            }
            let v = DVector::from_iterator(n, gauss.into_iter().take(n));
            let norm = v.norm();
            v / norm
        })
        .collect()
}

/// Unit directions used by the star-shaped estimate: uniform angles for
/// n = 2, low-discrepancy sphere points otherwise.
pub fn ray_directions(n: usize, num_rays: usize) -> Vec<State> {
    if n == 2 {
        circle_directions(num_rays)
    } else {
        sphere_directions(n, num_rays)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    pub k_max: usize,
    pub tail_tol: f64,
    pub value_cap: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self { k_max: 100_000, tail_tol: 1e-12, value_cap: 1e12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceCause {
    Escaped,
    ValueCap,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovStatus {
    Converged,
    Diverged(DivergenceCause),
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEvaluation {
    pub value: f64,
    pub terms_used: usize,
    /// Bound on `|V − value|`: geometric tail inside the contraction ball
    /// plus the floating-point summation error.
    pub tail_bound: f64,
    pub status: LyapunovStatus,
}

/// Neumaier compensated sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    In,
    Out,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipResult {
    pub verdict: Verdict,
    pub evidence: OrbitSummary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipOptions {
    pub k_max: usize,
    pub conv_tol: f64,
    /// Overrides the map's escape radius.
    pub escape_radius: Option<f64>,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        Self { k_max: 100_000, conv_tol: 1e-10, escape_radius: None }
    }
}

/// An asymptotically stable steady state together with its certified
/// contraction ball. Reuse one `Attractor` for many probes.
#[derive(Debug, Clone)]
pub struct Attractor<'a> {
    map: &'a ControlledMap,
    target: SteadyState,
    ball: ContractionBall,
}

impl<'a> Attractor<'a> {
    pub fn new(map: &'a ControlledMap, target: &SteadyState) -> Result<Self> {
        map.check_state(&target.x)?;
        map.check_control(&target.alpha)?;
        if !target.stability.is_stable() {
            return Err(Error::TargetNotStable { spectral_radius: target.spectral_radius });
        }
        let ball = ContractionBall::certify(map, target)?;
        Ok(Self { map, target: target.clone(), ball })
    }

    pub fn target(&self) -> &SteadyState {
        &self.target
    }

    pub fn ball(&self) -> ContractionBall {
        self.ball
    }

    pub fn lyapunov(&self, x: &State, opts: &LyapunovOptions) -> Result<LyapunovEvaluation> {
        self.map.check_state(x)?;
        if !(opts.tail_tol > 0.0) {
            return Err(Error::InvalidArgument("tail_tol must be positive".into()));
        }
        let target = &self.target;
        if *x == target.x {
            // V(φ(α), α) = 0
            return Ok(LyapunovEvaluation {
                value: 0.0,
                terms_used: 0,
                tail_bound: 0.0,
                status: LyapunovStatus::Converged,
            });
        }
        let q2 = self.ball.factor * self.ball.factor;
        let tail_factor = q2 / (1.0 - q2);
        let rounding_per_unit = (self.map.state_dim() as f64 + 4.0) * f64::EPSILON;
        let escape = self.map.escape_radius();
        let mut sum = CompensatedSum::default();
        let mut y = x.clone();
        let diverged = |cause, sum: &CompensatedSum, terms| LyapunovEvaluation {
            value: sum.value(),
            terms_used: terms,
            tail_bound: f64::INFINITY,
            status: LyapunovStatus::Diverged(cause),
        };
        for k in 0..opts.k_max {
            if y.iter().any(|v| !v.is_finite()) {
                return Ok(diverged(DivergenceCause::NonFinite, &sum, k));
            }
            if y.norm() > escape {
                return Ok(diverged(DivergenceCause::Escaped, &sum, k));
            }
            let d2 = (&y - &target.x).norm_squared();
            sum.add(d2);
            let value = sum.value();
            if value > opts.value_cap {
                return Ok(diverged(DivergenceCause::ValueCap, &sum, k + 1));
            }
            if d2.sqrt() <= self.ball.radius {
                let rounding = rounding_per_unit * value;
                let tail_bound = d2 * tail_factor + rounding;
                if tail_bound <= opts.tail_tol {
                    return Ok(LyapunovEvaluation {
                        value,
                        terms_used: k + 1,
                        tail_bound,
                        status: LyapunovStatus::Converged,
                    });
                }
                if rounding > opts.tail_tol {
                    // precision floor: more terms cannot reach tail_tol
                    return Ok(LyapunovEvaluation {
                        value,
                        terms_used: k + 1,
                        tail_bound,
                        status: LyapunovStatus::Inconclusive,
                    });
                }
            }
            y = self.map.eval(&y, &target.alpha);
        }
        Ok(LyapunovEvaluation {
            value: sum.value(),
            terms_used: opts.k_max,
            tail_bound: f64::INFINITY,
            status: LyapunovStatus::Inconclusive,
        })
    }

    /// `|V(f(x)) − V(x) + ‖x − x*‖²|`
    pub fn functional_residual(&self, x: &State, opts: &LyapunovOptions) -> Result<FunctionalResidual> {
        let at_x = self.lyapunov(x, opts)?;
        let fx = self.map.eval(x, &self.target.alpha);
        let at_fx = self.lyapunov(&fx, opts)?;
        if at_x.status != LyapunovStatus::Converged {
            return Err(Error::NotConverged { which: "x" });
        }
        if at_fx.status != LyapunovStatus::Converged {
            return Err(Error::NotConverged { which: "f(x)" });
        }
        let forcing = (x - &self.target.x).norm_squared();
        Ok(FunctionalResidual {
            residual: (at_fx.value - at_x.value + forcing).abs(),
            tail_sum: at_x.tail_bound + at_fx.tail_bound,
        })
    }

    /// `In` once the orbit enters the contraction ball; the orbit is then
    /// continued until it lies within `conv_tol` of the target so the
    /// evidence records a `ConvergedTo` termination.
    pub fn membership(&self, x: &State, opts: &MembershipOptions) -> Result<MembershipResult> {
        self.map.check_state(x)?;
        let target = &self.target;
        let escape = opts.escape_radius.unwrap_or(self.map.escape_radius());
        let mut entered = false;
        let mut steps = 0;
        let mut state = x.clone();
        let mut termination = Termination::StepBudget;
        for k in 0..=opts.k_max {
            steps = k;
            let non_finite = state.iter().any(|v| !v.is_finite());
            if non_finite || state.norm() > escape {
                termination = Termination::Escaped { index: k, non_finite };
                break;
            }
            let d = (&state - &target.x).norm();
            entered |= d <= self.ball.radius;
            if entered && d < opts.conv_tol {
                termination = Termination::ConvergedTo { target: target.x.clone(), tolerance: opts.conv_tol };
                break;
            }
            if k == opts.k_max {
                break;
            }
            state = self.map.eval(&state, &target.alpha);
        }
        let verdict = match (&termination, entered) {
            (Termination::Escaped { .. }, _) => Verdict::Out,
            (_, true) => Verdict::In,
            _ => Verdict::Undetermined,
        };
        let final_distance = (&state - &target.x).norm();
        Ok(MembershipResult {
            verdict,
            evidence: OrbitSummary { steps, final_state: state, final_distance, termination },
        })
    }

    fn is_in(&self, x: &State, opts: &MembershipOptions) -> bool {
        matches!(self.membership(x, opts), Ok(MembershipResult { verdict: Verdict::In, .. }))
    }

    /// Largest `r ≤ r_max` along `direction` with an `In` verdict, found by
    /// doubling from the ball radius then bisecting. Returns
    /// `(radius, open_ended)`.
    pub fn radial_extent(
        &self,
        direction: &State,
        r_max: f64,
        bisect_tol: f64,
        opts: &MembershipOptions,
    ) -> (f64, bool) {
        let center = &self.target.x;
        let probe = |r: f64| self.is_in(&(center + direction * r), opts);
        let mut inside = self.ball.radius.min(r_max);
        let mut outside = None;
        let mut r = 2.0 * inside;
        while r < r_max {
            if probe(r) {
                inside = r;
                r *= 2.0;
            } else {
                outside = Some(r);
                break;
            }
        }
        let mut outside = match outside {
            Some(r) => r,
            None if probe(r_max) => return (r_max, true),
            None => r_max,
        };
        while outside - inside > bisect_tol {
            let mid = 0.5 * (inside + outside);
            if probe(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        (0.5 * (inside + outside), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalResidual {
    pub residual: f64,
    /// Sum of the tail bounds at `x` and at `f(x)`.
    pub tail_sum: f64,
}

pub fn lyapunov_value(
    map: &ControlledMap,
    x: &State,
    target: &SteadyState,
    opts: &LyapunovOptions,
) -> Result<LyapunovEvaluation> {
    Attractor::new(map, target)?.lyapunov(x, opts)
}

pub fn functional_residual(
    map: &ControlledMap,
    x: &State,
    target: &SteadyState,
    opts: &LyapunovOptions,
) -> Result<FunctionalResidual> {
    Attractor::new(map, target)?.functional_residual(x, opts)
}

pub fn in_basin(
    map: &ControlledMap,
    x: &State,
    target: &SteadyState,
    opts: &MembershipOptions,
) -> Result<MembershipResult> {
    Attractor::new(map, target)?.membership(x, opts)
}

/// Runs a plain orbit to `conv_tol` of `target` without any certificate.
pub(crate) fn simulate_to(
    map: &ControlledMap,
    x0: &State,
    target: &SteadyState,
    conv_tol: f64,
    k_max: usize,
) -> OrbitSummary {
    let stop = Stop { target: &target.x, tolerance: conv_tol };
    let (final_state, steps, termination) =
        walk(map, x0, &target.alpha, k_max, Some(stop), map.escape_radius(), |_| {});
    let final_distance = (&final_state - &target.x).norm();
    OrbitSummary { steps, final_state, final_distance, termination }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub direction: State,
    pub radius: f64,
    pub open_ended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasinGeometry {
    /// For open-ended sides the bound is `x* ∓ r_probe_max`.
    Interval { lo: f64, hi: f64, lo_open_ended: bool, hi_open_ended: bool },
    Star { center: State, rays: Vec<Ray> },
    GridMask { lower: State, upper: State, resolution: usize, cells: Vec<bool> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    IntervalBisection,
    RayBisection,
    GridScan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinSlice {
    pub target: SteadyState,
    pub geometry: BasinGeometry,
    pub method: EstimateMethod,
    pub probe_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalOptions {
    pub r_probe_max: f64,
    pub bisect_tol: f64,
    pub membership: MembershipOptions,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        Self { r_probe_max: 1e3, bisect_tol: 1e-7, membership: MembershipOptions::default() }
    }
}

pub fn estimate_interval_1d(
    map: &ControlledMap,
    target: &SteadyState,
    opts: &IntervalOptions,
) -> Result<BasinSlice> {
    if map.state_dim() != 1 {
        return Err(Error::InvalidArgument("interval estimates need a one-dimensional state".into()));
    }
    let attractor = Attractor::new(map, target)?;
    let side = |s: f64| {
        attractor.radial_extent(&DVector::from_element(1, s), opts.r_probe_max, opts.bisect_tol, &opts.membership)
    };
    let (r_lo, lo_open_ended) = side(-1.0);
    let (r_hi, hi_open_ended) = side(1.0);
    let x = target.x[0];
    Ok(BasinSlice {
        target: target.clone(),
        geometry: BasinGeometry::Interval { lo: x - r_lo, hi: x + r_hi, lo_open_ended, hi_open_ended },
        method: EstimateMethod::IntervalBisection,
        probe_tolerance: opts.bisect_tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarOptions {
    pub num_rays: usize,
    pub r_max: f64,
    pub bisect_tol: f64,
    pub membership: MembershipOptions,
}

impl Default for StarOptions {
    fn default() -> Self {
        Self { num_rays: 16, r_max: 1e3, bisect_tol: 1e-7, membership: MembershipOptions::default() }
    }
}

/// Star-shaped inner estimate: the largest admissible radius along each of
/// `num_rays` directions. Rays are probed in parallel.
pub fn estimate_star(map: &ControlledMap, target: &SteadyState, opts: &StarOptions) -> Result<BasinSlice> {
    if map.state_dim() < 2 {
        return Err(Error::InvalidArgument("star estimates need a state dimension of at least 2".into()));
    }
    if opts.num_rays < 4 {
        return Err(Error::InvalidArgument("num_rays must be at least 4".into()));
    }
    let attractor = Attractor::new(map, target)?;
    let rays = ray_directions(map.state_dim(), opts.num_rays)
        .into_par_iter()
        .map(|direction| {
            let (radius, open_ended) =
                attractor.radial_extent(&direction, opts.r_max, opts.bisect_tol, &opts.membership);
            Ray { direction, radius, open_ended }
        })
        .collect();
    Ok(BasinSlice {
        target: target.clone(),
        geometry: BasinGeometry::Star { center: target.x.clone(), rays },
        method: EstimateMethod::RayBisection,
        probe_tolerance: opts.bisect_tol,
    })
}

/// Membership mask on a `resolution^n` grid of cell centres, row-major with
/// the first coordinate varying fastest.
pub fn estimate_grid(
    map: &ControlledMap,
    target: &SteadyState,
    lower: &State,
    upper: &State,
    resolution: usize,
    opts: &MembershipOptions,
) -> Result<BasinSlice> {
    map.check_state(lower)?;
    map.check_state(upper)?;
    if resolution == 0 || lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidArgument("grid needs resolution > 0 and lower < upper".into()));
    }
    let n = map.state_dim();
    let total = resolution
        .checked_pow(n as u32)
        .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
    let attractor = Attractor::new(map, target)?;
    let cell = (upper - lower) / resolution as f64;
    let cells = (0..total)
        .into_par_iter()
        .map(|index| {
            let mut rest = index;
            let mut point = lower.clone();
            for axis in 0..n {
                point[axis] += (rest % resolution) as f64 * cell[axis] + 0.5 * cell[axis];
                rest /= resolution;
            }
            attractor.is_in(&point, opts)
        })
        .collect();
    Ok(BasinSlice {
        target: target.clone(),
        geometry: BasinGeometry::GridMask { lower: lower.clone(), upper: upper.clone(), resolution, cells },
        method: EstimateMethod::GridScan,
        probe_tolerance: cell.max(),
    })
}
