//! Mild-solution time stepping.
//!
//! Each mode is propagated by the exact exponential of its generator block;
//! the nonlinearity enters through the exponential midpoint rule
//!
//! ```text
//! x_mid = e^{hL/2} x + (h/2)φ₁(hL/2) N(t, x)
//! x⁺    = e^{hL} x   + h φ₁(hL)     N(t + h/2, x_mid)
//! ```
//!
//! which is exact for linear problems and of order two otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::matfun::{apply2, expm2, phi1, phi1m2, Mat2};
use crate::problem::{LinearBlock, ProblemSpec};
use crate::spectral::{Order, State};

/// Natural-norm threshold beyond which integration is aborted.
pub const BLOW_UP_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy)]
enum ModeProp {
    Scalar { e_half: f64, p_half: f64, e_full: f64, p_full: f64 },
    Pair { e_half: Mat2, p_half: Mat2, e_full: Mat2, p_full: Mat2 },
}

impl ModeProp {
    fn new(block: LinearBlock, h: f64) -> Self {
        match block {
            LinearBlock::Scalar(l) => ModeProp::Scalar {
                e_half: (0.5 * h * l).exp(),
                p_half: 0.5 * h * phi1(0.5 * h * l),
                e_full: (h * l).exp(),
                p_full: h * phi1(h * l),
            },
            LinearBlock::Pair(m) => ModeProp::Pair {
                e_half: expm2(&m, 0.5 * h),
                p_half: phi1m2(&m, 0.5 * h),
                e_full: expm2(&m, h),
                p_full: phi1m2(&m, h),
            },
        }
    }
}

/// Fixed-step propagator for one problem and one step size.
pub struct Stepper<'a> {
    problem: &'a ProblemSpec,
    h: f64,
    props: Vec<ModeProp>,
    linear_only: bool,
    time_dependent: bool,
    n0_u: Vec<f64>,
    n0_v: Vec<f64>,
    mid_u: Vec<f64>,
    mid_v: Vec<f64>,
    grid: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a ProblemSpec, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("step must be positive, got {h}")));
        }
        let n = problem.modes();
        let props = Self::props_at(problem, h, 0.5 * h);
        Ok(Self {
            problem,
            h,
            props,
            linear_only: problem.is_linear_homogeneous(),
            time_dependent: !problem.damping().is_constant(),
            n0_u: vec![0.0; n],
            n0_v: vec![0.0; n],
            mid_u: vec![0.0; n],
            mid_v: vec![0.0; n],
            grid: vec![0.0; problem.basis().default_grid()],
        })
    }

    fn props_at(problem: &ProblemSpec, h: f64, t_mid: f64) -> Vec<ModeProp> {
        let beta = problem.beta_at(t_mid);
        (1..=problem.modes())
            .map(|k| ModeProp::new(problem.block_with_beta(k, beta), h))
            .collect()
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Advance `(u, v)` in place from `t` to `t + h`.
    pub fn advance(&mut self, t: f64, u: &mut [f64], v: &mut [f64]) {
        if self.time_dependent {
            self.props = Self::props_at(self.problem, self.h, t + 0.5 * self.h);
        }
        if self.linear_only {
            for (k, p) in self.props.iter().enumerate() {
                match *p {
                    ModeProp::Scalar { e_full, .. } => u[k] *= e_full,
                    ModeProp::Pair { e_full, .. } => {
                        let (a, b) = apply2(&e_full, u[k], v[k]);
                        u[k] = a;
                        v[k] = b;
                    }
                }
            }
            return;
        }
        let p = self.problem;
        p.increment_into(t, u, v, &mut self.n0_u, &mut self.n0_v, &mut self.grid);
        for (k, prop) in self.props.iter().enumerate() {
            match *prop {
                ModeProp::Scalar { e_half, p_half, .. } => {
                    self.mid_u[k] = e_half * u[k] + p_half * self.n0_u[k];
                }
                ModeProp::Pair { e_half, p_half, .. } => {
                    let (a, b) = apply2(&e_half, u[k], v[k]);
                    let (c, d) = apply2(&p_half, self.n0_u[k], self.n0_v[k]);
                    self.mid_u[k] = a + c;
                    self.mid_v[k] = b + d;
                }
            }
        }
        p.increment_into(
            t + 0.5 * self.h,
            &self.mid_u,
            &self.mid_v,
            &mut self.n0_u,
            &mut self.n0_v,
            &mut self.grid,
        );
        for (k, prop) in self.props.iter().enumerate() {
            match *prop {
                ModeProp::Scalar { e_full, p_full, .. } => {
                    u[k] = e_full * u[k] + p_full * self.n0_u[k];
                }
                ModeProp::Pair { e_full, p_full, .. } => {
                    let (a, b) = apply2(&e_full, u[k], v[k]);
                    let (c, d) = apply2(&p_full, self.n0_u[k], self.n0_v[k]);
                    u[k] = a + c;
                    v[k] = b + d;
                }
            }
        }
    }
}

/// Time-sampled solution path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub problem_tag: String,
}

impl Trajectory {
    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, u_1..u_N, [v_1..v_N,] norm_l2, norm_half[, energy]`.
    pub fn to_csv(&self, problem: &ProblemSpec) -> String {
        let n = problem.modes();
        let basis = problem.basis();
        let second = problem.order() == Order::Second;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|k| format!("u_{k}")));
        if second {
            header.extend((1..=n).map(|k| format!("v_{k}")));
        }
        header.push("norm_l2".into());
        header.push("norm_half".into());
        if second {
            header.push("energy".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(s.u.iter().chain(s.v()).map(|x| format!("{x:.17e}")));
            row.push(format!("{:.17e}", basis.frac_norm(&s.u, 0.0)));
            row.push(format!("{:.17e}", basis.frac_norm(&s.u, 0.5)));
            if second {
                row.push(format!("{:.17e}", s.natural_norm(basis)));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Integration failure with the path computed up to it.
#[derive(Debug, Clone)]
pub struct IntegrationError {
    pub error: LabError,
    pub partial: Trajectory,
}

impl From<IntegrationError> for LabError {
    fn from(e: IntegrationError) -> Self {
        e.error
    }
}

impl std::fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} samples kept)", self.error, self.partial.len())
    }
}

impl std::error::Error for IntegrationError {}

/// `S_A(h)` applied mode by mode.
pub fn propagate_linear(problem: &ProblemSpec, state: &State, h: f64) -> Result<State> {
    state.check(problem.basis(), problem.order())?;
    if !(h > 0.0) {
        return Err(invalid("propagation time must be positive"));
    }
    let beta = problem.beta_at(0.5 * h);
    let mut out = state.clone();
    let n = problem.modes();
    for k in 1..=n {
        match problem.block_with_beta(k, beta) {
            LinearBlock::Scalar(l) => out.u[k - 1] = (h * l).exp() * state.u[k - 1],
            LinearBlock::Pair(m) => {
                let e = expm2(&m, h);
                let (a, b) = apply2(&e, state.u[k - 1], state.v()[k - 1]);
                out.u[k - 1] = a;
                out.v.as_mut().unwrap()[k - 1] = b;
            }
        }
    }
    Ok(out)
}

/// One exponential-midpoint step from `t`.
pub fn step(problem: &ProblemSpec, t: f64, state: &State, h: f64) -> Result<State> {
    state.check(problem.basis(), problem.order())?;
    let mut stepper = Stepper::new(problem, h)?;
    let mut u = state.u.clone();
    let mut v = state.v.clone().unwrap_or_else(|| vec![0.0; problem.modes()]);
    stepper.advance(t, &mut u, &mut v);
    let out = match problem.order() {
        Order::First => State::first(u),
        Order::Second => State::second(u, v),
    };
    if !out.is_finite() {
        return Err(LabError::IntegrationFailure {
            time: t + h,
            reason: "non-finite state".into(),
        });
    }
    Ok(out)
}

fn blow_up(problem: &ProblemSpec, u: &[f64], v: &[f64]) -> Option<String> {
    let b = problem.basis();
    let norm_sq = match problem.order() {
        Order::First => b.frac_norm_sq(u, 0.0),
        Order::Second => b.frac_norm_sq(u, 0.5) + b.frac_norm_sq(v, 0.0),
    };
    if !norm_sq.is_finite() {
        Some("non-finite state".into())
    } else if norm_sq > BLOW_UP_NORM * BLOW_UP_NORM {
        Some(format!("natural norm {:e} exceeds {BLOW_UP_NORM:e}", norm_sq.sqrt()))
    } else {
        None
    }
}

/// Uniform-step integration over `[t0, t1]` keeping every `stride`-th sample
/// (the endpoint is always kept).
pub fn integrate_strided(
    problem: &ProblemSpec,
    state0: &State,
    t0: f64,
    t1: f64,
    steps: usize,
    stride: usize,
) -> std::result::Result<Trajectory, IntegrationError> {
    let tag = problem.variant().name().to_string();
    let empty = |error: LabError| IntegrationError {
        error,
        partial: Trajectory {
            times: vec![],
            states: vec![],
            problem_tag: tag.clone(),
        },
    };
    state0
        .check(problem.basis(), problem.order())
        .map_err(empty)?;
    if !(t1 > t0) || steps == 0 {
        return Err(empty(invalid("need t1 > t0 and at least one step")));
    }
    let h = (t1 - t0) / steps as f64;
    let mut stepper = Stepper::new(problem, h).map_err(empty)?;
    let stride = stride.max(1);
    let order = problem.order();
    let n = problem.modes();
    let mut u = state0.u.clone();
    let mut v = state0.v.clone().unwrap_or_else(|| vec![0.0; n]);
    let pack = |u: &[f64], v: &[f64]| match order {
        Order::First => State::first(u.to_vec()),
        Order::Second => State::second(u.to_vec(), v.to_vec()),
    };
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![state0.clone()],
        problem_tag: tag,
    };
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        stepper.advance(t, &mut u, &mut v);
        let t_next = if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * h };
        if let Some(reason) = blow_up(problem, &u, &v) {
            return Err(IntegrationError {
                error: LabError::IntegrationFailure { time: t_next, reason },
                partial: traj,
            });
        }
        if (i + 1) % stride == 0 || i + 1 == steps {
            traj.times.push(t_next);
            traj.states.push(pack(&u, &v));
        }
    }
    Ok(traj)
}

pub fn integrate(
    problem: &ProblemSpec,
    state0: &State,
    t0: f64,
    t1: f64,
    steps: usize,
) -> std::result::Result<Trajectory, IntegrationError> {
    integrate_strided(problem, state0, t0, t1, steps, 1)
}

/// Endpoint of a uniform-step integration, without recording the path.
pub fn endpoint(problem: &ProblemSpec, state0: &State, t0: f64, t1: f64, steps: usize) -> Result<State> {
    state0.check(problem.basis(), problem.order())?;
    if t1 == t0 {
        return Ok(state0.clone());
    }
    if !(t1 > t0) || steps == 0 {
        return Err(invalid("need t1 > t0 and at least one step"));
    }
    let h = (t1 - t0) / steps as f64;
    let mut stepper = Stepper::new(problem, h)?;
    let n = problem.modes();
    let mut u = state0.u.clone();
    let mut v = state0.v.clone().unwrap_or_else(|| vec![0.0; n]);
    for i in 0..steps {
        stepper.advance(t0 + i as f64 * h, &mut u, &mut v);
        if let Some(reason) = blow_up(problem, &u, &v) {
            return Err(LabError::IntegrationFailure {
                time: t0 + (i + 1) as f64 * h,
                reason,
            });
        }
    }
    Ok(match problem.order() {
        Order::First => State::first(u),
        Order::Second => State::second(u, v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::oracle::exp_dense;
    use crate::nonlinearity::{Nonlinearity, NonlinearitySpec, SpaceProfile, StateLaw, TimeFactor};
    use crate::problem::{Damping, Variant};
    use crate::spectral::{BoundaryKind, SpectralBasis};
    use std::f64::consts::PI;

    fn sine(n: usize) -> SpectralBasis {
        SpectralBasis::new(BoundaryKind::DirichletSine, PI, n).unwrap()
    }

    #[test]
    fn heat_mode_decays_exactly() {
        let p = ProblemSpec::heat(sine(4), Nonlinearity::zero(1.0)).unwrap();
        let s = propagate_linear(&p, &State::unit(Order::First, 4, 1), 1.0).unwrap();
        assert!((s.u[0] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn critically_damped_mode_matches_dense_exponential() {
        let p = ProblemSpec::damped_wave(sine(3), Damping::Constant(2.0), Nonlinearity::zero(1.0)).unwrap();
        let s = propagate_linear(&p, &State::second(vec![1.0, 0.0, 0.0], vec![0.0; 3]), 1.0).unwrap();
        let e = exp_dense(&[[0.0, 1.0], [-1.0, -2.0]], 1.0);
        assert!((s.u[0] - e[0][0]).abs() < 1e-10);
        assert!((s.v()[0] - e[1][0]).abs() < 1e-10);
        // defective closed form: u = (1 + t)e^{-t}, v = −t e^{-t}
        assert!((s.u[0] - 2.0 * (-1f64).exp()).abs() < 1e-12);
        assert!((s.v()[0] + (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn small_time_propagation_is_near_identity() {
        let p = ProblemSpec::damped_wave(sine(8), Damping::Constant(0.3), Nonlinearity::zero(1.0)).unwrap();
        for k in 1..=8 {
            let x = State::second(vec![0.0; 8], vec![0.0; 8]);
            let mut x = x;
            x.u[k - 1] = 1.0 / p.basis().eigenvalues()[k - 1].sqrt();
            let y = propagate_linear(&p, &x, 1e-8).unwrap();
            assert!(y.axpy(-1.0, &x).natural_norm(p.basis()) <= 1e-6);
        }
    }

    #[test]
    fn semigroup_property() {
        let p = ProblemSpec::damped_wave(sine(6), Damping::Constant(0.7), Nonlinearity::zero(1.0)).unwrap();
        let x = State::second(vec![0.3, -0.1, 0.2, 0.0, 0.1, 0.05], vec![0.1, 0.2, 0.0, -0.3, 0.0, 0.1]);
        let a = propagate_linear(&p, &propagate_linear(&p, &x, 0.3).unwrap(), 0.45).unwrap();
        let b = propagate_linear(&p, &x, 0.75).unwrap();
        assert!(a.axpy(-1.0, &b).to_vector().amax() < 1e-11);
    }

    /// heat with one mode and `f = φ₁(x)`, i.e. `ċ = −c + 1`
    fn forced_scalar(time: TimeFactor) -> ProblemSpec {
        let amp = (2.0 / PI).sqrt();
        let spec = NonlinearitySpec::new(StateLaw::Zero).forced(amp, time, SpaceProfile::SineMode { k: 1 });
        ProblemSpec::heat(sine(1), spec.compile(2.0 * PI, PI).unwrap()).unwrap()
    }

    #[test]
    fn unforced_step_is_linear_propagation() {
        let p = ProblemSpec::heat(sine(4), Nonlinearity::zero(1.0)).unwrap();
        let x = State::first(vec![1.0, 0.5, -0.25, 0.1]);
        assert_eq!(step(&p, 0.0, &x, 0.1).unwrap(), propagate_linear(&p, &x, 0.1).unwrap());
    }

    #[test]
    fn constant_forcing_step_is_exact() {
        let p = forced_scalar(TimeFactor::constant(1.0));
        let s = step(&p, 0.0, &State::first(vec![0.0]), 0.1).unwrap();
        assert!((s.u[0] - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn one_step_defect_is_third_order() {
        // ċ = −c + cos t, c(0) = 0: c(t) = (cos t + sin t − e^{−t})/2
        let p = forced_scalar(TimeFactor::cosine(0.0, 1.0));
        let exact = |t: f64| 0.5 * (t.cos() + t.sin() - (-t).exp());
        let defect = |h: f64| (step(&p, 0.0, &State::first(vec![0.0]), h).unwrap().u[0] - exact(h)).abs();
        let (d1, d2) = (defect(0.2), defect(0.1));
        assert!(d1 / d2 >= 4.0, "ratio {}", d1 / d2);
    }

    #[test]
    fn linear_heat_integration() {
        let p = ProblemSpec::heat(sine(4), Nonlinearity::zero(1.0)).unwrap();
        let tr = integrate(&p, &State::unit(Order::First, 4, 1), 0.0, 1.0, 1024).unwrap();
        assert_eq!(tr.len(), 1025);
        assert!((tr.last().unwrap().u[0] - (-1f64).exp()).abs() < 1e-9);
        assert!(integrate(&p, &State::unit(Order::First, 4, 1), 1.0, 1.0, 4).is_err());
        assert!(integrate(&p, &State::unit(Order::First, 4, 1), 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn forward_composition() {
        let spec = NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 });
        let p = ProblemSpec::heat(sine(8), spec.compile(1.0, PI).unwrap()).unwrap();
        let x = State::first(vec![1.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.1, 0.0]);
        let mid = endpoint(&p, &x, 0.0, 1.0, 512).unwrap();
        let a = endpoint(&p, &mid, 1.0, 2.0, 512).unwrap();
        let b = endpoint(&p, &x, 0.0, 2.0, 1024).unwrap();
        assert!(a.axpy(-1.0, &b).to_vector().amax() < 1e-9);
    }

    #[test]
    fn blow_up_reports_partial_path() {
        let spec = NonlinearitySpec::new(StateLaw::Cubic { coefficient: 1.0 });
        let p = ProblemSpec::heat(sine(4), spec.compile(1.0, PI).unwrap()).unwrap();
        let err = integrate(&p, &State::first(vec![5.0, 0.0, 0.0, 0.0]), 0.0, 10.0, 10_000).unwrap_err();
        assert!(matches!(err.error, LabError::IntegrationFailure { .. }));
        assert!(!err.partial.is_empty());
        let _ = Variant::Heat;
    }

    #[test]
    fn damped_linear_energy_is_nonincreasing() {
        let p = ProblemSpec::damped_wave(sine(8), Damping::Constant(0.5), Nonlinearity::zero(1.0)).unwrap();
        let x = State::second(vec![1.0, 0.5, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.3, 0.0, 0.0, 0.1, 0.0]);
        let tr = integrate(&p, &x, 0.0, 10.0, 2000).unwrap();
        let e: Vec<f64> = tr.states.iter().map(|s| s.natural_norm(p.basis())).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn csv_export_layout() {
        let p = ProblemSpec::damped_wave(sine(2), Damping::Constant(0.5), Nonlinearity::zero(1.0)).unwrap();
        let tr = integrate(&p, &State::second(vec![1.0, 0.0], vec![0.0, 0.0]), 0.0, 1.0, 4).unwrap();
        let csv = tr.to_csv(&p);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,u_1,u_2,v_1,v_2,norm_l2,norm_half,energy");
        assert_eq!(lines.count(), 5);
    }
}
