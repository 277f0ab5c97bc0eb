//! Averaged problems, the fast-forcing family `u̇ = Au + F(t/λ, u)`, branching
//! of its `λT`-periodic orbits from averaged equilibria, and continuation in λ.

use serde::{Deserialize, Serialize};

use crate::degree::{brouwer_degree, natural_ball, semilinear_degree_with, semilinear_field, DegreeOptions};
use crate::error::{invalid, LabError, Result};
use crate::integrator::endpoint;
use crate::linalg::{newton, weighted_norm, NewtonOptions};
use crate::poincare::{find_periodic, fixed_point_index, PeriodicOrbit};
use crate::problem::ProblemSpec;
use crate::spectral::State;

/// Default λ-schedule `{2⁻¹, …, 2⁻⁷}`.
pub fn dyadic_schedule(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

pub fn averaged_problem(problem: &ProblemSpec) -> ProblemSpec {
    problem.averaged()
}

/// Minimum number of steps per fast period `λT`.
pub const MIN_STEPS_PER_FAST_PERIOD: usize = 32;

/// Gap between the solutions of `(Z_λ)` and of the averaged problem from `x0`.
///
/// Both are sampled at the multiples of the base period `T` in `(0, horizon]`
/// (or at `horizon` when it is shorter than `T`), in the natural norm.
pub fn averaging_error(problem: &ProblemSpec, x0: &State, lambda: f64, horizon: f64) -> Result<f64> {
    averaging_error_with(problem, x0, lambda, horizon, problem.steps_per_period())
}

/// As [`averaging_error`] with `base_steps` steps per base period before the
/// fast-period refinement.
pub fn averaging_error_with(
    problem: &ProblemSpec,
    x0: &State,
    lambda: f64,
    horizon: f64,
    base_steps: usize,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid(format!("λ must lie in (0, 1], got {lambda}")));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    x0.check(problem.basis(), problem.order())?;
    let fast = problem.with_time_scale(lambda);
    let slow = problem.averaged().with_time_scale(1.0);
    let t = problem.base_period();
    let samples: Vec<f64> = if horizon < t {
        vec![horizon]
    } else {
        (1..=(horizon / t + 1e-9).floor() as usize).map(|j| j as f64 * t).collect()
    };
    let fast_steps = (MIN_STEPS_PER_FAST_PERIOD as f64 / lambda).ceil() as usize;
    let per_base = base_steps.max(fast_steps);
    let mut a = x0.clone();
    let mut b = x0.clone();
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for &s in &samples {
        let steps = ((s - prev) / t * per_base as f64).ceil().max(1.0) as usize;
        a = endpoint(&fast, &a, prev, s, steps)?;
        b = endpoint(&slow, &b, prev, s, steps)?;
        worst = worst.max(a.axpy(-1.0, &b).natural_norm(problem.basis()));
        prev = s;
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub lambda: f64,
    pub error: f64,
}

pub fn averaging_sweep(problem: &ProblemSpec, x0: &State, lambdas: &[f64], horizon: f64) -> Result<Vec<ErrorSample>> {
    lambdas
        .iter()
        .map(|&lambda| {
            Ok(ErrorSample {
                lambda,
                error: averaging_error(problem, x0, lambda, horizon)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub lambda: f64,
    pub distance: f64,
    pub orbit: PeriodicOrbit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub equilibrium: State,
    pub averaged_residual: f64,
    /// Sign of the Jacobian of the semilinear field at the equilibrium.
    pub local_sign: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<i32>,
    pub orbits: Vec<BranchSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl BranchPoint {
    pub fn distances(&self) -> Vec<f64> {
        self.orbits.iter().map(|o| o.distance).collect()
    }
}

/// Where equilibria are searched for: a natural-norm ball around zero.
#[derive(Debug, Clone)]
pub struct EquilibriumSearch {
    pub radius: f64,
    pub options: DegreeOptions,
}

impl EquilibriumSearch {
    pub fn ball(radius: f64) -> Self {
        Self {
            radius,
            options: DegreeOptions {
                allow_linear_spectral: false,
                ..Default::default()
            },
        }
    }
}

/// Zeros of `Aū + F̂(ū)` in the search ball, polished to residual ≤ 1e-10.
pub fn find_averaged_equilibria(problem: &ProblemSpec, search: &EquilibriumSearch) -> Result<Vec<BranchPoint>> {
    let avg = problem.averaged();
    let region = natural_ball(problem, None, search.radius)?;
    let f = semilinear_field(problem, 1.0)?;
    let mut field = |x: &[f64]| Ok(f(x));
    let report = brouwer_degree(&mut field, &region, &search.options)?;
    let ones = vec![1.0; problem.dim()];
    let mut g = |x: &[f64]| Ok(avg.stationary_field(x));
    let polish = NewtonOptions {
        tol: 1e-11,
        max_iter: 8,
        ..Default::default()
    };
    let mut points: Vec<BranchPoint> = Vec::new();
    for z in report.zeros {
        let x = match newton(&mut g, &z.point, &ones, &polish) {
            Ok(r) => r.x,
            Err(_) => z.point.clone(),
        };
        let residual = weighted_norm(&avg.stationary_field(&x), &ones);
        if residual > 1e-8 {
            continue;
        }
        let state = State::from_slice(problem.order(), problem.modes(), &x);
        if points
            .iter()
            .any(|p| p.equilibrium.axpy(-1.0, &state).natural_norm(problem.basis()) <= 1e-6)
        {
            continue;
        }
        points.push(BranchPoint {
            equilibrium: state,
            averaged_residual: residual,
            local_sign: z.jacobian_sign,
            degree: None,
            orbits: Vec::new(),
            failure: None,
        });
    }
    Ok(points)
}

/// Degree of each equilibrium on a ball of half the distance to its nearest
/// neighbour (or `fallback_radius` when it is alone).
pub fn attach_degrees(problem: &ProblemSpec, points: &mut [BranchPoint], fallback_radius: f64) -> Result<()> {
    let basis = problem.basis();
    let centers: Vec<State> = points.iter().map(|p| p.equilibrium.clone()).collect();
    for (i, p) in points.iter_mut().enumerate() {
        let nearest = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c.axpy(-1.0, &p.equilibrium).natural_norm(basis))
            .fold(f64::INFINITY, f64::min);
        let radius = if nearest.is_finite() { 0.5 * nearest } else { fallback_radius };
        let opts = DegreeOptions { allow_linear_spectral: false, ..Default::default() };
        let r = semilinear_degree_with(problem, Some(&p.equilibrium), radius, 1.0, false, &opts)?;
        p.degree = Some(r.degree);
    }
    Ok(())
}

/// Follow `λT`-periodic orbits of `(Z_λ)` down the schedule, each seeded at the previous one.
pub fn branch_orbits(problem: &ProblemSpec, seed: &BranchPoint, schedule: &[f64], tol: f64) -> BranchPoint {
    branch_orbits_from(problem, seed, &seed.equilibrium, schedule, tol, false)
}

pub fn branch_orbits_from(
    problem: &ProblemSpec,
    seed: &BranchPoint,
    start: &State,
    schedule: &[f64],
    tol: f64,
    with_index: bool,
) -> BranchPoint {
    let mut out = seed.clone();
    out.orbits.clear();
    out.failure = None;
    let mut guess = start.clone();
    for &lambda in schedule {
        if !(lambda > 0.0 && lambda <= 1.0) {
            out.failure = Some(format!("λ = {lambda} outside (0, 1]"));
            break;
        }
        let zl = problem.with_time_scale(lambda);
        match find_periodic(&zl, &guess, tol) {
            Ok(orbit) => {
                let distance = orbit.initial.axpy(-1.0, &seed.equilibrium).natural_norm(problem.basis());
                let index = if with_index { fixed_point_index(&zl, &orbit).ok() } else { None };
                guess = orbit.initial.clone();
                out.orbits.push(BranchSample { lambda, distance, orbit, index });
            }
            Err(e) => {
                out.failure = Some(format!("λ = {lambda}: {e}"));
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub lambda: f64,
    pub residual: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ContinuationOutcome {
    Reached {
        orbit: PeriodicOrbit,
        log: Vec<ContinuationStep>,
    },
    BoundaryHit {
        lambda: f64,
        norm: f64,
        radius: f64,
        log: Vec<ContinuationStep>,
    },
}

impl ContinuationOutcome {
    pub fn reached(&self) -> Option<&PeriodicOrbit> {
        match self {
            ContinuationOutcome::Reached { orbit, .. } => Some(orbit),
            _ => None,
        }
    }

    pub fn log(&self) -> &[ContinuationStep] {
        match self {
            ContinuationOutcome::Reached { log, .. } | ContinuationOutcome::BoundaryHit { log, .. } => log,
        }
    }
}

/// Simple continuation in λ from `(λ₀, seed)` up to 1 with step halving on failure.
/// Stops with a boundary report once an orbit's initial point reaches norm `r0`.
pub fn continue_to_one(
    problem: &ProblemSpec,
    seed: &PeriodicOrbit,
    lambda0: f64,
    r0: f64,
    tol: f64,
) -> Result<ContinuationOutcome> {
    if seed.residual > tol {
        return Err(LabError::Precondition(format!(
            "seed residual {:e} exceeds tolerance {tol:e}",
            seed.residual
        )));
    }
    let basis = problem.basis();
    let mut lambda = lambda0;
    let mut current = seed.clone();
    let mut log = vec![ContinuationStep {
        lambda,
        residual: seed.residual,
        norm: seed.initial.natural_norm(basis),
    }];
    let mut step: f64 = 0.05;
    while lambda < 1.0 {
        let next = (lambda + step).min(1.0);
        match find_periodic(&problem.with_time_scale(next), &current.initial, tol) {
            Ok(orbit) => {
                let norm = orbit.initial.natural_norm(basis);
                log.push(ContinuationStep { lambda: next, residual: orbit.residual, norm });
                if norm >= r0 {
                    return Ok(ContinuationOutcome::BoundaryHit { lambda: next, norm, radius: r0, log });
                }
                lambda = next;
                current = orbit;
                step = (step * 1.5).min(0.05);
            }
            Err(e) => {
                step *= 0.5;
                if step < 1e-4 {
                    return Err(LabError::NoConvergence(format!(
                        "continuation stalled at λ = {lambda}: {e}"
                    )));
                }
            }
        }
    }
    Ok(ContinuationOutcome::Reached { orbit: current, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Nonlinearity, NonlinearitySpec, SpaceProfile, StateLaw, TimeFactor};
    use crate::problem::{BeamParams, Damping, Forcing};
    use crate::spectral::{BoundaryKind, Order, SpectralBasis};
    use std::f64::consts::PI;

    fn sine(n: usize) -> SpectralBasis {
        SpectralBasis::new(BoundaryKind::DirichletSine, PI, n).unwrap()
    }

    #[test]
    fn autonomous_problem_has_zero_error() {
        let nl = NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 }).compile(2.0 * PI, PI).unwrap();
        let p = ProblemSpec::heat(sine(6), nl).unwrap();
        let x = State::first(vec![1.0, 0.5, 0.0, 0.1, 0.0, 0.0]);
        assert!(averaging_error(&p, &x, 0.125, 2.0 * PI).unwrap() <= 1e-9);
    }

    #[test]
    fn scalar_forcing_matches_closed_form() {
        // u̇ = Δu + sin(2πt/(λT)): each mode differs from the averaged one by
        // d_k(t) = a_k(μ sin ωt − ω cos ωt + ω e^{−μt})/(μ² + ω²)
        let t_base = 2.0 * PI;
        let n = 4;
        let nl = NonlinearitySpec::new(StateLaw::Zero)
            .forced(1.0, TimeFactor::sine(0.0, 1.0), SpaceProfile::Constant)
            .compile(t_base, PI)
            .unwrap();
        let p = ProblemSpec::heat(sine(n), nl).unwrap();
        let a = p.basis().analyze(&vec![1.0; p.basis().default_grid()]).unwrap();
        let mut errors = Vec::new();
        for lambda in [0.25, 0.125, 0.0625] {
            let omega = 2.0 * PI / (lambda * t_base);
            let oracle = (1..=2)
                .map(|j| {
                    let t = j as f64 * t_base;
                    (0..n)
                        .map(|k| {
                            let mu = ((k + 1) * (k + 1)) as f64;
                            let d = a[k] * (mu * (omega * t).sin() - omega * (omega * t).cos() + omega * (-mu * t).exp())
                                / (mu * mu + omega * omega);
                            d * d
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            let e = averaging_error_with(&p, &State::zeros(Order::First, n), lambda, 2.0 * t_base, 262_144).unwrap();
            assert!((e - oracle).abs() < 1e-8, "λ={lambda}: {e} vs {oracle}");
            errors.push(e / lambda);
        }
        eprintln!("e/λ = {errors:?}");
        // first order in λ: e/λ approaches a constant
        assert!(errors.windows(2).all(|w| w[1] / w[0] > 0.5 && w[1] / w[0] < 2.0));
    }

    fn beam(n: usize, b: f64, forcing: f64) -> ProblemSpec {
        let basis = SpectralBasis::new(BoundaryKind::HingedBeam, PI, n).unwrap();
        let params = BeamParams { alpha: 0.1, beta: 0.5, sigma: 0.2, a: 1.0, b };
        let mut coeffs = vec![0.0; n];
        coeffs[0] = forcing;
        let f = Forcing::new(vec![(TimeFactor::cosine(0.0, 1.0), coeffs)], 2.0 * PI);
        ProblemSpec::beam(basis, params, Some(f), 1.0, 2.0 * PI).unwrap().with_steps_per_period(256)
    }

    #[test]
    fn beam_equilibria_follow_closed_form() {
        let p = beam(4, -2.5, 1.0);
        let eq = find_averaged_equilibria(&p, &EquilibriumSearch::ball(4.0)).unwrap();
        assert_eq!(eq.len(), 3);
        let mut c: Vec<f64> = eq.iter().map(|e| e.equilibrium.u[0]).collect();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r = 1.5f64.sqrt();
        assert!((c[0] + r).abs() < 1e-9 && c[1].abs() < 1e-9 && (c[2] - r).abs() < 1e-9);
        // b = −5.5 adds the second mode, c₂² = (5.5 − 4)/4
        let p = beam(4, -5.5, 0.0);
        let eq = find_averaged_equilibria(&p, &EquilibriumSearch::ball(8.0)).unwrap();
        assert_eq!(eq.len(), 5);
        assert!(eq.iter().any(|e| (e.equilibrium.u[1].abs() - 0.375f64.sqrt()).abs() < 1e-9));
    }

    #[test]
    fn cubic_heat_has_one_equilibrium() {
        let nl = NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 })
            .modulated(TimeFactor::cosine(1.0, 0.5))
            .compile(2.0 * PI, PI)
            .unwrap();
        let p = ProblemSpec::heat(sine(6), nl).unwrap();
        let eq = find_averaged_equilibria(&p, &EquilibriumSearch::ball(3.0)).unwrap();
        assert_eq!(eq.len(), 1);
        assert!(eq[0].equilibrium.to_vector().amax() < 1e-12);
    }

    #[test]
    fn beam_branches_shrink_toward_equilibria() {
        let p = beam(3, -2.5, 1.0);
        let mut eq = find_averaged_equilibria(&p, &EquilibriumSearch::ball(4.0)).unwrap();
        attach_degrees(&p, &mut eq, 1.0).unwrap();
        let schedule = [0.125, 0.0625, 0.03125];
        for seed in &eq {
            let b = branch_orbits_from(&p, seed, &seed.equilibrium, &schedule, 1e-9, true);
            assert!(b.failure.is_none(), "{:?}", b.failure);
            let d = b.distances();
            assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
            let idx: Vec<i32> = b.orbits.iter().map(|o| o.index.unwrap()).collect();
            assert!(idx.iter().all(|i| *i == idx[0]));
            assert_eq!(Some(idx[0]), seed.degree);
        }
    }

    #[test]
    fn unforced_branch_stays_at_equilibrium() {
        let p = beam(3, -2.5, 0.0);
        let eq = find_averaged_equilibria(&p, &EquilibriumSearch::ball(4.0)).unwrap();
        let b = branch_orbits(&p, &eq[0], &[0.5, 0.25], 1e-9);
        assert!(b.distances().iter().all(|d| *d < 1e-8));
    }

    #[test]
    fn zero_problem_continues_trivially() {
        let p = ProblemSpec::damped_wave(sine(4), Damping::Constant(0.5), Nonlinearity::zero(2.0 * PI)).unwrap();
        let z = State::zeros(Order::Second, 4);
        let seed = find_periodic(&p.with_time_scale(0.5), &z, 1e-10).unwrap();
        let out = continue_to_one(&p, &seed, 0.5, 10.0, 1e-8).unwrap();
        let orbit = out.reached().unwrap();
        assert!(orbit.initial.to_vector().amax() < 1e-12);
        assert_eq!(out.log().last().unwrap().lambda, 1.0);
    }
}
