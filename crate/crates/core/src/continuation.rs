//! Continuation of steady-state paths `α ↦ φ(α)` along control-space
//! polylines, and location of the points where linear stability changes.

use crate::error::{Error, Result};
use crate::map::{solve_steady_state, Control, ControlledMap, State, SteadyState};

/// Piecewise-linear curve in control space, parameterised by arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolyline {
    vertices: Vec<Control>,
    cumulative: Vec<f64>,
}

impl ControlPolyline {
    pub fn new(vertices: Vec<Control>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidPolyline(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        let dim = vertices[0].len();
        if dim == 0 {
            return Err(Error::InvalidPolyline("vertices must be non-empty vectors".into()));
        }
        let mut cumulative = vec![0.0];
        for (i, pair) in vertices.windows(2).enumerate() {
            if pair[1].len() != dim {
                return Err(Error::InvalidPolyline(format!("vertex {} has dimension {}", i + 1, pair[1].len())));
            }
            if pair.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
                return Err(Error::InvalidPolyline("vertices must be finite".into()));
            }
            let length = (&pair[1] - &pair[0]).norm();
            if length == 0.0 {
                return Err(Error::InvalidPolyline(format!(
                    "consecutive vertices {i} and {} coincide",
                    i + 1
                )));
            }
            cumulative.push(cumulative[i] + length);
        }
        Ok(Self { vertices, cumulative })
    }

    pub fn segment(from: Control, to: Control) -> Result<Self> {
        Self::new(vec![from, to])
    }

    pub fn vertices(&self) -> &[Control] {
        &self.vertices
    }

    pub fn control_dim(&self) -> usize {
        self.vertices[0].len()
    }

    /// Total arclength `L`.
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arclength at each vertex.
    pub fn vertex_ts(&self) -> &[f64] {
        &self.cumulative
    }

    /// Control value at arclength `t`, clamped to `[0, L]`.
    pub fn alpha_at(&self, t: f64) -> Control {
        let t = t.clamp(0.0, self.length());
        let seg = self
            .cumulative
            .partition_point(|&c| c <= t)
            .clamp(1, self.vertices.len() - 1)
            - 1;
        let (t0, t1) = (self.cumulative[seg], self.cumulative[seg + 1]);
        let frac = (t - t0) / (t1 - t0);
        // convex-combination form keeps both endpoints exact
        &self.vertices[seg] * (1.0 - frac) + &self.vertices[seg + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub alpha: Control,
    pub steady: SteadyState,
    /// The jump bound this sample was accepted under (0 for the seed).
    pub jump_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    /// Spectral radius rises through 1 as `t` increases.
    LosesStability,
    GainsStability,
}

/// Unrefined stability change between two consecutive samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEvent {
    /// Linear estimate of where `ρ = 1` between the two samples.
    pub t: f64,
    pub direction: Crossing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyPath {
    pub polyline: ControlPolyline,
    pub samples: Vec<PathSample>,
    pub all_stable: bool,
    pub boundary_events: Vec<BoundaryEvent>,
    pub newton_tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Fixed bound on `‖x_{i+1} − x_i‖`. `None` uses
    /// `10 × step × max(1, local ‖Δx‖/‖Δα‖)`.
    pub jump_cap: Option<f64>,
    pub newton_tol: f64,
    pub max_iters: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.01,
            min_step: 1e-9,
            max_step: 0.02,
            jump_cap: None,
            newton_tol: 1e-12,
            max_iters: 60,
        }
    }
}

fn is_stable_side(ss: &SteadyState) -> bool {
    ss.spectral_radius < 1.0
}

fn boundary_events(samples: &[PathSample]) -> Vec<BoundaryEvent> {
    samples
        .windows(2)
        .filter(|w| is_stable_side(&w[0].steady) != is_stable_side(&w[1].steady))
        .map(|w| {
            let (r0, r1) = (w[0].steady.spectral_radius - 1.0, w[1].steady.spectral_radius - 1.0);
            let frac = if r1 != r0 { (-r0 / (r1 - r0)).clamp(0.0, 1.0) } else { 0.5 };
            BoundaryEvent {
                t: w[0].t + frac * (w[1].t - w[0].t),
                direction: if is_stable_side(&w[0].steady) {
                    Crossing::LosesStability
                } else {
                    Crossing::GainsStability
                },
            }
        })
        .collect()
}

/// Follows the steady state `seed` along `polyline`.
///
/// The predictor is the previous state (secant extrapolation once two
/// samples exist) and the corrector is Newton. The step halves on corrector
/// failure or when the corrected state moves further than the jump cap, and
/// doubles (up to `max_step`) after two clean accepts. Unstable samples are
/// kept and flagged.
pub fn trace_path(
    map: &ControlledMap,
    seed: &SteadyState,
    polyline: &ControlPolyline,
    opts: &ContinuationOptions,
) -> Result<SteadyPath> {
    if polyline.control_dim() != map.control_dim() {
        return Err(Error::DimensionMismatch {
            what: "polyline control",
            expected: map.control_dim(),
            got: polyline.control_dim(),
        });
    }
    map.check_state(&seed.x)?;
    let start = polyline.alpha_at(0.0);
    if seed.alpha.len() != start.len() || (&seed.alpha - &start).amax() > 1e-12 {
        return Err(Error::InvalidSeed(format!(
            "seed alpha {:?} is not the polyline start {:?}",
            seed.alpha.as_slice(),
            start.as_slice()
        )));
    }
    if seed.residual > opts.newton_tol {
        return Err(Error::InvalidSeed(format!(
            "seed residual {:e} exceeds newton_tol {:e}",
            seed.residual, opts.newton_tol
        )));
    }
    if !(opts.min_step > 0.0 && opts.initial_step >= opts.min_step && opts.max_step >= opts.initial_step) {
        return Err(Error::InvalidArgument(
            "continuation steps must satisfy 0 < min_step <= initial_step <= max_step".into(),
        ));
    }

    let length = polyline.length();
    let mut samples = vec![PathSample { t: 0.0, alpha: start, steady: seed.clone(), jump_cap: 0.0 }];
    let mut step = opts.initial_step;
    let mut clean_accepts = 0;
    let mut slope = 1.0_f64;

    let partial = |samples: &[PathSample]| SteadyPath {
        polyline: polyline.clone(),
        all_stable: samples.iter().all(|s| s.steady.stability.is_stable()),
        boundary_events: boundary_events(samples),
        samples: samples.to_vec(),
        newton_tol: opts.newton_tol,
        max_iters: opts.max_iters,
    };

    while samples.last().unwrap().t < length {
        let last = samples.last().unwrap();
        let t_new = (last.t + step).min(length);
        let alpha = polyline.alpha_at(t_new);
        let predictor = match samples.len() {
            1 => last.steady.x.clone(),
            k => {
                let prev = &samples[k - 2];
                let ratio = (t_new - last.t) / (last.t - prev.t);
                &last.steady.x + (&last.steady.x - &prev.steady.x) * ratio
            }
        };
        let cap = opts.jump_cap.unwrap_or(10.0 * step * slope.max(1.0));
        let failure = match solve_steady_state(map, &alpha, &predictor, opts.newton_tol, opts.max_iters) {
            Ok(ss) => {
                let jump = (&ss.x - &last.steady.x).norm();
                if jump <= cap {
                    let dalpha = (&alpha - &last.alpha).norm();
                    if dalpha > 0.0 {
                        slope = jump / dalpha;
                    }
                    samples.push(PathSample { t: t_new, alpha, steady: ss, jump_cap: cap });
                    clean_accepts += 1;
                    if clean_accepts == 2 {
                        step = (2.0 * step).min(opts.max_step);
                        clean_accepts = 0;
                    }
                    None
                } else {
                    Some(format!("jump {jump:e} exceeds cap {cap:e}"))
                }
            }
            Err(e) => Some(e.to_string()),
        };
        if let Some(cause) = failure {
            clean_accepts = 0;
            step /= 2.0;
            if step < opts.min_step {
                let t = samples.last().unwrap().t;
                return Err(Error::PathLost { t, step, cause, partial: Box::new(partial(&samples)) });
            }
        }
    }
    Ok(partial(&samples))
}

/// Quadratic (or linear, with two points) Lagrange interpolation of states.
fn interpolate(points: &[(f64, &State)], t: f64) -> State {
    let mut out = points[0].1 * 0.0;
    for (i, (ti, xi)) in points.iter().enumerate() {
        let weight: f64 = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (tj, _))| (t - tj) / (ti - tj))
            .product();
        out += *xi * weight;
    }
    out
}

/// Up to three known points nearest to `t`.
fn nearest(known: &[(f64, State)], t: f64) -> Vec<(f64, &State)> {
    let mut idx: Vec<usize> = (0..known.len()).collect();
    idx.sort_by(|&a, &b| (known[a].0 - t).abs().total_cmp(&(known[b].0 - t).abs()));
    idx.into_iter().take(3).map(|i| (known[i].0, &known[i].1)).collect()
}

impl SteadyPath {
    pub fn t_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples.last().unwrap().t)
    }

    /// Interpolated state guess at arclength `t`.
    pub fn guess_at(&self, t: f64) -> State {
        let i = self.samples.partition_point(|s| s.t <= t);
        let window = &self.samples[i.saturating_sub(2)..(i + 2).min(self.samples.len())];
        let known: Vec<(f64, State)> = window.iter().map(|s| (s.t, s.steady.x.clone())).collect();
        interpolate(&nearest(&known, t), t)
    }

    /// Solves for the steady state at arclength `t` from the interpolated
    /// guess, rejecting solutions that land away from the traced branch.
    pub fn solve_at(&self, map: &ControlledMap, t: f64) -> Result<SteadyState> {
        if let Some(s) = self.samples.iter().find(|s| s.t == t) {
            return Ok(s.steady.clone());
        }
        let guess = self.guess_at(t);
        let alpha = self.polyline.alpha_at(t);
        let ss = solve_steady_state(map, &alpha, &guess, self.newton_tol, self.max_iters)?;
        let i = self.samples.partition_point(|s| s.t <= t).clamp(1, self.samples.len() - 1);
        let local = (&self.samples[i].steady.x - &self.samples[i - 1].steady.x).norm();
        let distance = (&ss.x - &guess).norm();
        if distance > local.max(1e3 * self.newton_tol) {
            return Err(Error::BranchJump { t, distance });
        }
        Ok(ss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCrossing {
    pub t: f64,
    pub alpha: Control,
    pub direction: Crossing,
}

/// Refines every change of `sign(ρ − 1)` between consecutive samples by
/// bisection in `t` until the bracket is narrower than `refine_tol`.
pub fn stability_boundary(
    map: &ControlledMap,
    path: &SteadyPath,
    refine_tol: f64,
) -> Result<Vec<BoundaryCrossing>> {
    if !(refine_tol > 0.0) {
        return Err(Error::InvalidArgument("refine_tol must be positive".into()));
    }
    let samples = &path.samples;
    let mut crossings = Vec::new();
    for i in 0..samples.len().saturating_sub(1) {
        let (a, b) = (&samples[i], &samples[i + 1]);
        let stable_lo = is_stable_side(&a.steady);
        if stable_lo == is_stable_side(&b.steady) {
            continue;
        }
        let mut known: Vec<(f64, State)> = samples[i.saturating_sub(1)..(i + 3).min(samples.len())]
            .iter()
            .map(|s| (s.t, s.steady.x.clone()))
            .collect();
        let (mut lo, mut hi) = (a.t, b.t);
        while hi - lo >= refine_tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let guess = interpolate(&nearest(&known, mid), mid);
            let alpha = path.polyline.alpha_at(mid);
            let ss = solve_steady_state(map, &alpha, &guess, path.newton_tol, path.max_iters)
                .map_err(|e| Error::BoundaryRefinementFailed { lo, hi, source: Box::new(e) })?;
            if is_stable_side(&ss) == stable_lo {
                lo = mid;
            } else {
                hi = mid;
            }
            known.push((mid, ss.x));
        }
        let t = 0.5 * (lo + hi);
        crossings.push(BoundaryCrossing {
            t,
            alpha: path.polyline.alpha_at(t),
            direction: if stable_lo { Crossing::LosesStability } else { Crossing::GainsStability },
        });
    }
    Ok(crossings)
}
