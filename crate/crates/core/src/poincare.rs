//! The translation operator `Φ_t`, the period map, periodic-orbit solvers and
//! fixed-point indices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::integrator::{endpoint, integrate, Trajectory};
use crate::linalg::{fd_jacobian, newton, weighted_norm, NewtonOptions};
use crate::problem::ProblemSpec;
use crate::spectral::State;

/// Distance from the unit circle below which a multiplier makes the index undecidable.
pub const HYPERBOLICITY_MARGIN: f64 = 1e-6;
/// Relative forward-difference step of the monodromy.
pub const MONODROMY_STEP: f64 = 1e-6;
/// Picard is preferred when the probed contraction ratio is below this value.
pub const PICARD_RATIO: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub initial: State,
    pub period: f64,
    pub residual: f64,
    pub method: String,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monodromy: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<i32>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl PeriodicOrbit {
    pub(crate) fn new(initial: State, period: f64, residual: f64, method: &str) -> Self {
        Self {
            initial,
            period,
            residual,
            method: method.into(),
            iterations: 0,
            residual_history: vec![residual],
            contraction: None,
            monodromy: None,
            multipliers: None,
            index: None,
            trajectory: None,
        }
    }

    /// Attach monodromy, multipliers and index (when hyperbolic).
    pub fn with_stability(mut self, problem: &ProblemSpec) -> Result<Self> {
        let m = monodromy(problem, &self)?;
        let report = index_from_monodromy(&m);
        self.multipliers = Some(report.multipliers.clone());
        self.index = report.index().ok();
        self.monodromy = Some(m.row_iter().map(|r| r.iter().copied().collect()).collect());
        Ok(self)
    }

    /// Record the trajectory over one period.
    pub fn with_trajectory(mut self, problem: &ProblemSpec) -> Result<Self> {
        let steps = steps_for(problem, self.period);
        self.trajectory = Some(integrate(problem, &self.initial, 0.0, self.period, steps)?);
        Ok(self)
    }
}

fn steps_for(problem: &ProblemSpec, t: f64) -> usize {
    let per = problem.steps_per_period() as f64 * t / problem.period();
    (per.ceil() as usize).max(16)
}

/// `Φ_t(x)`: the state at time `t` of the solution starting at `x` at time 0.
pub fn translate(problem: &ProblemSpec, state0: &State, t: f64) -> Result<State> {
    if t < 0.0 || !t.is_finite() {
        return Err(invalid(format!("translation time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        state0.check(problem.basis(), problem.order())?;
        return Ok(state0.clone());
    }
    endpoint(problem, state0, 0.0, t, steps_for(problem, t))
}

/// `Φ_T` over the period of the (possibly scaled) problem.
pub fn poincare_map(problem: &ProblemSpec, state0: &State) -> Result<State> {
    translate(problem, state0, problem.period())
}

pub(crate) fn period_map_flat(problem: &ProblemSpec, x: &[f64]) -> Result<Vec<f64>> {
    let s = State::from_slice(problem.order(), problem.modes(), x);
    Ok(poincare_map(problem, &s)?.to_vector().iter().copied().collect())
}

fn residual_of(problem: &ProblemSpec, x: &State, image: &State) -> f64 {
    image.axpy(-1.0, x).natural_norm(problem.basis())
}

/// Fixed-point iteration `x ← Φ_T(x)`.
pub fn find_periodic_picard(problem: &ProblemSpec, guess: &State, tol: f64, max_iter: usize) -> Result<PeriodicOrbit> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let mut x = guess.clone();
    let mut image = poincare_map(problem, &x)?;
    let mut r = residual_of(problem, &x, &image);
    let mut history = vec![r];
    let mut ratios: Vec<f64> = Vec::new();
    for it in 0..max_iter {
        if r <= tol {
            let mut orbit = PeriodicOrbit::new(x, problem.period(), r, "picard");
            orbit.iterations = it;
            orbit.residual_history = history;
            orbit.contraction = ratios.last().copied();
            return Ok(orbit);
        }
        x = image;
        image = poincare_map(problem, &x)?;
        let r_new = residual_of(problem, &x, &image);
        ratios.push(r_new / r);
        r = r_new;
        history.push(r);
        let n = ratios.len();
        if n >= 3 && ratios[n - 3..].iter().all(|q| *q >= 1.0) {
            return Err(LabError::NoConvergence(format!(
                "picard diverging: contraction ratios {:?}, residual {r:e}",
                &ratios[n - 3..]
            )));
        }
    }
    if r <= tol {
        let mut orbit = PeriodicOrbit::new(x, problem.period(), r, "picard");
        orbit.iterations = max_iter;
        orbit.residual_history = history;
        orbit.contraction = ratios.last().copied();
        return Ok(orbit);
    }
    Err(LabError::NoConvergence(format!(
        "picard: {max_iter} iterations, residual {r:e}, last ratio {:?}",
        ratios.last()
    )))
}

/// Shooting: Newton on `G(x) = x − Φ_T(x)`.
pub fn find_periodic_newton(problem: &ProblemSpec, guess: &State, tol: f64) -> Result<PeriodicOrbit> {
    find_periodic_newton_with(problem, guess, tol, 30)
}

pub fn find_periodic_newton_with(problem: &ProblemSpec, guess: &State, tol: f64, max_iter: usize) -> Result<PeriodicOrbit> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    guess.check(problem.basis(), problem.order())?;
    let weights = problem.basis().natural_weights(problem.order());
    let mut g = |x: &[f64]| -> Result<Vec<f64>> {
        let fx = period_map_flat(problem, x)?;
        Ok(x.iter().zip(&fx).map(|(a, b)| a - b).collect())
    };
    let x0: Vec<f64> = guess.to_vector().iter().copied().collect();
    let opts = NewtonOptions {
        tol,
        max_iter,
        fd_step: 1e-7,
        ..Default::default()
    };
    let res = newton(&mut g, &x0, &weights, &opts)?;
    let mut orbit = PeriodicOrbit::new(
        State::from_slice(problem.order(), problem.modes(), &res.x),
        problem.period(),
        res.residual,
        "newton",
    );
    orbit.iterations = res.iterations;
    orbit.residual_history = res.history;
    Ok(orbit)
}

/// Probe three Picard steps; continue with Picard if contracting, otherwise
/// shoot with Newton from the original guess (the probe may have drifted off a saddle).
pub fn find_periodic(problem: &ProblemSpec, guess: &State, tol: f64) -> Result<PeriodicOrbit> {
    let mut x = guess.clone();
    let mut image = poincare_map(problem, &x)?;
    let mut r = residual_of(problem, &x, &image);
    if r <= tol {
        return Ok(PeriodicOrbit::new(x, problem.period(), r, "picard"));
    }
    let mut ratio: f64 = 0.0;
    for _ in 0..3 {
        let next = match poincare_map(problem, &image) {
            Ok(n) => n,
            Err(_) => {
                ratio = f64::INFINITY;
                break;
            }
        };
        let r_next = residual_of(problem, &image, &next);
        ratio = ratio.max(r_next / r);
        x = image;
        image = next;
        r = r_next;
        if r <= tol {
            break;
        }
    }
    if ratio < PICARD_RATIO {
        let max_iter = (tol.ln() / ratio.max(1e-12).ln()).abs().ceil() as usize * 2 + 50;
        if let Ok(orbit) = find_periodic_picard(problem, &x, tol, max_iter.min(2000)) {
            return Ok(orbit);
        }
    }
    find_periodic_newton(problem, guess, tol)
}

/// `DΦ_T` at the orbit's initial point by forward differences.
pub fn monodromy(problem: &ProblemSpec, orbit: &PeriodicOrbit) -> Result<DMatrix<f64>> {
    if orbit.residual > 1e-6 {
        return Err(LabError::Precondition(format!(
            "monodromy needs residual ≤ 1e-6, orbit has {:e}",
            orbit.residual
        )));
    }
    monodromy_at(problem, &orbit.initial)
}

pub fn monodromy_at(problem: &ProblemSpec, x: &State) -> Result<DMatrix<f64>> {
    x.check(problem.basis(), problem.order())?;
    let flat: Vec<f64> = x.to_vector().iter().copied().collect();
    let mut f = |y: &[f64]| period_map_flat(problem, y);
    let fx = f(&flat)?;
    fd_jacobian(&mut f, &flat, &fx, MONODROMY_STEP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub multipliers: Vec<(f64, f64)>,
    pub det_i_minus_m: f64,
    pub unstable_real: usize,
    pub min_circle_distance: f64,
}

impl IndexReport {
    /// `sign det(I − M)`, refused when a multiplier sits on the unit circle or
    /// the two ways of counting disagree.
    pub fn index(&self) -> Result<i32> {
        if self.min_circle_distance < HYPERBOLICITY_MARGIN {
            return Err(LabError::NonHyperbolic {
                distance: self.min_circle_distance,
                multipliers: self.multipliers.clone(),
            });
        }
        let by_det = if self.det_i_minus_m > 0.0 { 1 } else { -1 };
        let by_count = if self.unstable_real % 2 == 0 { 1 } else { -1 };
        if by_det != by_count || self.det_i_minus_m == 0.0 {
            return Err(LabError::NonHyperbolic {
                distance: self.min_circle_distance,
                multipliers: self.multipliers.clone(),
            });
        }
        Ok(by_det)
    }
}

pub fn index_from_monodromy(m: &DMatrix<f64>) -> IndexReport {
    let n = m.nrows();
    let eig = m.clone().complex_eigenvalues();
    let mut multipliers: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    multipliers.sort_by(|a, b| {
        let (ma, mb) = (a.0.hypot(a.1), b.0.hypot(b.1));
        mb.partial_cmp(&ma).unwrap().then(b.0.partial_cmp(&a.0).unwrap())
    });
    let min_circle_distance = multipliers
        .iter()
        .map(|(re, im)| (re.hypot(*im) - 1.0).abs())
        .fold(f64::INFINITY, f64::min);
    let unstable_real = multipliers
        .iter()
        .filter(|(re, im)| im.abs() <= 1e-9 * (1.0 + re.abs()) && *re > 1.0)
        .count();
    let i_minus_m = DMatrix::<f64>::identity(n, n) - m;
    IndexReport {
        multipliers,
        det_i_minus_m: i_minus_m.lu().determinant(),
        unstable_real,
        min_circle_distance,
    }
}

/// Fixed-point index of `Φ_T` at a hyperbolic orbit.
pub fn fixed_point_index(problem: &ProblemSpec, orbit: &PeriodicOrbit) -> Result<i32> {
    let m = monodromy(problem, orbit)?;
    index_from_monodromy(&m).index()
}

/// Euclidean residual in flattened coordinates, for callers working with raw vectors.
pub fn flat_residual(problem: &ProblemSpec, x: &[f64]) -> Result<f64> {
    let fx = period_map_flat(problem, x)?;
    let d: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - b).collect();
    Ok(weighted_norm(&d, &problem.basis().natural_weights(problem.order())))
}
