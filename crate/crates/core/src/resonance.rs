//! Resonance at infinity for the damped wave `u_tt + βu_t − Δu − μ_{k*}u + εf = 0`:
//! kernel reduction, Landesman–Lazer conditions, the index formula and
//! continuation in ε.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degree::{brouwer_degree, gaussian, Component, DegreeOptions, DegreeReport, Region};
use crate::error::{invalid, LabError, Result};
use crate::poincare::{find_periodic, period_map_flat, PeriodicOrbit};
use crate::problem::{ProblemSpec, Variant};
use crate::quadrature::CompositeRule;
use crate::spectral::{Order, State};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelData {
    /// 1-based modes with zero shifted eigenvalue.
    pub kernel_modes: Vec<usize>,
    pub dim_n: usize,
    /// Number of modes with negative shifted eigenvalue.
    pub k_minus: usize,
    /// `mask[k-1]` is true on kernel modes.
    pub mask: Vec<bool>,
}

fn require_resonant(problem: &ProblemSpec) -> Result<()> {
    if problem.variant() != Variant::ResonantWave {
        return Err(invalid(format!(
            "kernel reduction needs resonant_wave, not {}",
            problem.variant().name()
        )));
    }
    Ok(())
}

pub fn kernel_data(problem: &ProblemSpec) -> Result<KernelData> {
    require_resonant(problem)?;
    let n = problem.modes();
    let scale = problem.basis().eigenvalues()[n - 1];
    let kappa: Vec<f64> = (1..=n).map(|k| problem.stiffness(k)).collect();
    let mask: Vec<bool> = kappa.iter().map(|k| k.abs() <= 1e-12 * scale).collect();
    let kernel_modes: Vec<usize> = (1..=n).filter(|k| mask[k - 1]).collect();
    let k_minus = kappa.iter().zip(&mask).filter(|(k, m)| !**m && **k < 0.0).count();
    Ok(KernelData {
        dim_n: kernel_modes.len(),
        kernel_modes,
        k_minus,
        mask,
    })
}

/// `F̄(c)`: kernel projection of the time-averaged Nemytskii image of `Σ c_i φ_{k_i}`.
pub fn reduced_average(problem: &ProblemSpec, c: &[f64]) -> Result<Vec<f64>> {
    let kd = kernel_data(problem)?;
    reduced_average_with(problem, &kd, c)
}

fn reduced_average_with(problem: &ProblemSpec, kd: &KernelData, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != kd.dim_n {
        return Err(invalid(format!("expected {} kernel coordinates, got {}", kd.dim_n, c.len())));
    }
    let mut u = vec![0.0; problem.modes()];
    for (ci, k) in c.iter().zip(&kd.kernel_modes) {
        u[k - 1] = *ci;
    }
    let avg = problem.averaged();
    let image = avg.nemytskii_coeffs(0.0, &u);
    Ok(kd.kernel_modes.iter().map(|k| image[k - 1]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlVerdict {
    LlPlus,
    LlMinus,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandesmanLazerReport {
    pub verdict: LlVerdict,
    /// Worst case over the samples of the integral that decides the verdict
    /// (for `neither`, the better of the two worst cases, which is ≤ 0).
    pub margin: f64,
    pub samples: usize,
    pub sampling: String,
    pub plus_integrals: Vec<f64>,
    pub minus_integrals: Vec<f64>,
}

/// Unit vectors in the kernel coordinates used to probe the LL integrals.
pub fn kernel_sphere(dim: usize) -> (Vec<Vec<f64>>, String) {
    match dim {
        1 => (vec![vec![1.0], vec![-1.0]], "exact: ±1".into()),
        2 => (
            (0..64)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / 64.0;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            "64 equispaced points on the circle".into(),
        ),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let pts = (0..64)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / 64.0;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * i as f64;
                    vec![r * th.cos(), y, r * th.sin()]
                })
                .collect();
            (pts, "Fibonacci sphere, 64 points".into())
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let pts = (0..64)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect();
            (pts, "64 normalized Gaussian points (seed 0)".into())
        }
    }
}

/// Time-mean Landesman–Lazer integrals over a sampled kernel sphere.
pub fn landesman_lazer(problem: &ProblemSpec) -> Result<LandesmanLazerReport> {
    let kd = kernel_data(problem)?;
    let limits = problem
        .nonlinearity()
        .limit_data()
        .ok_or_else(|| LabError::Precondition("nonlinearity has no limit data".into()))?;
    let basis = problem.basis();
    let period = problem.base_period();
    let times = CompositeRule::time_average(period, 0);
    // panel count divisible by every small k keeps sign changes of φ on panel edges
    let space = CompositeRule::new(0.0, basis.length(), 240, 8);
    let modes: Vec<Vec<f64>> = kd
        .kernel_modes
        .iter()
        .map(|&k| space.nodes.iter().map(|&x| basis.mode_value(k, x)).collect())
        .collect();
    let (points, sampling) = kernel_sphere(kd.dim_n);
    let mut plus = Vec::with_capacity(points.len());
    let mut minus = Vec::with_capacity(points.len());
    for c in &points {
        let phi: Vec<f64> = (0..space.len())
            .map(|j| c.iter().zip(&modes).map(|(ci, m)| ci * m[j]).sum())
            .collect();
        let (mut ip, mut im) = (0.0, 0.0);
        for (t, wt) in times.nodes.iter().zip(&times.weights) {
            for ((x, wx), p) in space.nodes.iter().zip(&space.weights).zip(&phi) {
                let w = wt * wx * p;
                if *p > 0.0 {
                    ip += w * (limits.liminf_plus)(*t, *x);
                    im += w * (limits.limsup_plus)(*t, *x);
                } else if *p < 0.0 {
                    ip += w * (limits.limsup_minus)(*t, *x);
                    im += w * (limits.liminf_minus)(*t, *x);
                }
            }
        }
        plus.push(ip / period);
        minus.push(im / period);
    }
    let worst_plus = plus.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_minus = minus.iter().map(|v| -v).fold(f64::INFINITY, f64::min);
    let tol = 1e-12;
    let (verdict, margin) = if worst_plus > tol {
        (LlVerdict::LlPlus, worst_plus)
    } else if worst_minus > tol {
        (LlVerdict::LlMinus, worst_minus)
    } else {
        (LlVerdict::Neither, worst_plus.max(worst_minus))
    };
    Ok(LandesmanLazerReport {
        verdict,
        margin,
        samples: points.len(),
        sampling,
        plus_integrals: plus,
        minus_integrals: minus,
    })
}

/// Product region `U × B_r × B_R` of the direct index computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRegion {
    /// `U = (−h, h)^{dim N}` in kernel coordinates.
    pub kernel_half_width: f64,
    /// Radius in `|·|_{1/2}` of the non-kernel displacement ball.
    pub r: f64,
    /// Radius in `|·|₀` of the velocity ball.
    pub big_r: f64,
}

impl Default for ResonanceRegion {
    fn default() -> Self {
        Self { kernel_half_width: 5.0, r: 10.0, big_r: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceIndexReport {
    pub kernel: KernelData,
    pub epsilon: f64,
    pub region: ResonanceRegion,
    pub formula_index: i32,
    pub reduced_degree: DegreeReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_index: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_report: Option<DegreeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub agree: bool,
}

/// Options for the direct index; the singular values of `I − Φ_T` in kernel
/// directions are `O(ε)`, so the regularity threshold sits far below the default.
pub fn direct_index_options() -> DegreeOptions {
    DegreeOptions {
        allow_linear_spectral: false,
        regular_margin: 1e-10,
        random_starts: 24,
        ..Default::default()
    }
}

pub fn product_region(problem: &ProblemSpec, kd: &KernelData, region: &ResonanceRegion) -> Result<Region> {
    let n = problem.modes();
    let mu = problem.basis().eigenvalues();
    let mut comps: Vec<Component> = kd
        .kernel_modes
        .iter()
        .map(|&k| Component::Interval {
            coord: k - 1,
            lo: -region.kernel_half_width,
            hi: region.kernel_half_width,
        })
        .collect();
    let rest: Vec<usize> = (0..n).filter(|i| !kd.mask[*i]).collect();
    if !rest.is_empty() {
        comps.push(Component::Ball {
            center: vec![0.0; rest.len()],
            weights_sq: rest.iter().map(|&i| mu[i]).collect(),
            coords: rest,
            radius: region.r,
        });
    }
    comps.push(Component::Ball {
        coords: (n..2 * n).collect(),
        center: vec![0.0; n],
        radius: region.big_r,
        weights_sq: vec![1.0; n],
    });
    Region::product(2 * n, comps)
}

/// Both sides of `Ind(Φ_T^{(ε)}, U ⊕ B_r × B_R) = (−1)^{k−} deg(F̄, U)`.
pub fn resonance_index(problem: &ProblemSpec, region: &ResonanceRegion, epsilon: f64) -> Result<ResonanceIndexReport> {
    resonance_index_with(problem, region, epsilon, &direct_index_options())
}

pub fn resonance_index_with(
    problem: &ProblemSpec,
    region: &ResonanceRegion,
    epsilon: f64,
    opts: &DegreeOptions,
) -> Result<ResonanceIndexReport> {
    if !(epsilon > 0.0) {
        return Err(invalid("ε must be positive"));
    }
    let kd = kernel_data(problem)?;
    let u = Region::symmetric_cube(kd.dim_n, region.kernel_half_width)?;
    let mut fbar = |c: &[f64]| reduced_average_with(problem, &kd, c);
    let reduced = brouwer_degree(&mut fbar, &u, &DegreeOptions::default())?;
    if !(reduced.boundary_margin > 1e-10) {
        return Err(LabError::BoundaryMargin(format!(
            "F̄ nearly vanishes on ∂U (margin {:e})",
            reduced.boundary_margin
        )));
    }
    let sign = if kd.k_minus % 2 == 0 { 1 } else { -1 };
    let formula_index = sign * reduced.degree;

    let p = problem.with_epsilon(epsilon);
    let prod = product_region(&p, &kd, region)?;
    let mut field = |x: &[f64]| -> Result<Vec<f64>> {
        let y = period_map_flat(&p, x)?;
        Ok(x.iter().zip(&y).map(|(a, b)| a - b).collect())
    };
    let (direct_index, direct_report, failure) = match brouwer_degree(&mut field, &prod, opts) {
        Ok(r) if r.trusted => (Some(r.degree), Some(r), None),
        Ok(r) => {
            let why = format!("direct degree certificate failed: {}", r.notes.join("; "));
            (None, Some(r), Some(why))
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(ResonanceIndexReport {
        kernel: kd,
        epsilon,
        region: *region,
        formula_index,
        agree: direct_index == Some(formula_index) && reduced.trusted,
        reduced_degree: reduced,
        direct_index,
        direct_report,
        failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStep {
    pub epsilon: f64,
    pub residual: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ResonantOutcome {
    Reached { orbit: PeriodicOrbit, log: Vec<EpsilonStep> },
    BoundaryHit { epsilon: f64, norm: f64, radius: f64, log: Vec<EpsilonStep> },
    Stalled { epsilon: f64, reason: String, log: Vec<EpsilonStep> },
}

impl ResonantOutcome {
    pub fn reached(&self) -> Option<&PeriodicOrbit> {
        match self {
            Self::Reached { orbit, .. } => Some(orbit),
            _ => None,
        }
    }

    pub fn log(&self) -> &[EpsilonStep] {
        match self {
            Self::Reached { log, .. } | Self::BoundaryHit { log, .. } | Self::Stalled { log, .. } => log,
        }
    }
}

/// Default schedule `2⁻⁷, 2⁻⁶, …, 1`.
pub fn epsilon_schedule() -> Vec<f64> {
    (0..=7).rev().map(|k| 2f64.powi(-k)).collect()
}

/// Zero of `F̄` closest to the origin of the kernel box.
fn kernel_solution(problem: &ProblemSpec, kd: &KernelData, half_width: f64) -> Result<Vec<f64>> {
    let u = Region::symmetric_cube(kd.dim_n, half_width)?;
    let mut fbar = |c: &[f64]| reduced_average_with(problem, kd, c);
    let opts = DegreeOptions { allow_linear_spectral: false, ..Default::default() };
    let r = brouwer_degree(&mut fbar, &u, &opts)?;
    r.zeros
        .into_iter()
        .map(|z| z.point)
        .min_by(|a, b| {
            let na: f64 = a.iter().map(|v| v * v).sum();
            let nb: f64 = b.iter().map(|v| v * v).sum();
            na.total_cmp(&nb)
        })
        .ok_or_else(|| LabError::NoConvergence("F̄ has no zero in the kernel box".into()))
}

/// Continue `T`-periodic orbits from small ε up to ε = 1, stopping if an orbit
/// leaves the energy ball of radius `r0`.
pub fn find_periodic_resonant(problem: &ProblemSpec, r0: f64, schedule: &[f64], tol: f64) -> Result<ResonantOutcome> {
    let kd = kernel_data(problem)?;
    let ll = landesman_lazer(problem)?;
    if ll.verdict == LlVerdict::Neither {
        return Err(LabError::Precondition(format!(
            "Landesman–Lazer conditions fail (margin {:e})",
            ll.margin
        )));
    }
    if schedule.is_empty() || schedule.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(invalid("ε schedule must be nonempty and lie in (0, 1]"));
    }
    let c = kernel_solution(problem, &kd, r0)?;
    let n = problem.modes();
    let mut u = vec![0.0; n];
    for (ci, k) in c.iter().zip(&kd.kernel_modes) {
        u[k - 1] = *ci;
    }
    let mut guess = State::second(u, vec![0.0; n]);
    let mut log = Vec::new();
    let mut eps = 0.0;
    let mut first = true;
    for &target in schedule {
        let mut next = target;
        loop {
            let p = problem.with_epsilon(next);
            match find_periodic(&p, &guess, tol) {
                Ok(orbit) => {
                    let norm = orbit.initial.natural_norm(p.basis());
                    log.push(EpsilonStep { epsilon: next, residual: orbit.residual, norm });
                    if norm >= r0 {
                        return Ok(ResonantOutcome::BoundaryHit { epsilon: next, norm, radius: r0, log });
                    }
                    guess = orbit.initial.clone();
                    eps = next;
                    first = false;
                    if next == target {
                        if next == *schedule.last().unwrap() {
                            return Ok(ResonantOutcome::Reached { orbit, log });
                        }
                        break;
                    }
                    next = target;
                }
                Err(e) => {
                    if first {
                        return Ok(ResonantOutcome::Stalled {
                            epsilon: next,
                            reason: format!("no orbit at the first ε: {e}"),
                            log,
                        });
                    }
                    next = eps + 0.5 * (next - eps);
                    if next - eps < 1e-4 {
                        return Ok(ResonantOutcome::Stalled {
                            epsilon: eps,
                            reason: e.to_string(),
                            log,
                        });
                    }
                }
            }
        }
    }
    unreachable!("the schedule loop returns at its last entry")
}

/// Kernel-mode state `c·φ_{k*}` with zero velocity, for seeding.
pub fn kernel_state(problem: &ProblemSpec, c: &[f64]) -> Result<State> {
    let kd = kernel_data(problem)?;
    if c.len() != kd.dim_n {
        return Err(invalid("kernel coordinate count mismatch"));
    }
    let mut u = vec![0.0; problem.modes()];
    for (ci, k) in c.iter().zip(&kd.kernel_modes) {
        u[k - 1] = *ci;
    }
    Ok(State::from_slice(Order::Second, problem.modes(), &[u, vec![0.0; problem.modes()]].concat()))
}
