//! The catalog of model evolution problems, each reduced to per-mode linear
//! blocks plus a Nemytskii-type nonlinearity evaluated by collocation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::nonlinearity::{ForcingTerm, Nonlinearity, NonlinearitySpec, StateLaw, TimeFactor};
use crate::quadrature::CompositeRule;
use crate::spectral::{BoundaryKind, Order, SpectralBasis, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `u_t = Δu + f(t,x,u)`
    Heat,
    /// Heat equation restricted to the nonnegative cone.
    ConstrainedHeat,
    /// `u_tt + β(t)u_t − Δu + f(t,x,u) = 0`
    DampedWave,
    /// `u_tt + βu_t − Δu − μ_{k*}u + ε f(t,x,u) = 0`
    ResonantWave,
    /// Extensible beam with strong damping, hinged ends.
    Beam,
}

impl Variant {
    pub fn order(self) -> Order {
        match self {
            Variant::Heat | Variant::ConstrainedHeat => Order::First,
            _ => Order::Second,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Heat => "heat",
            Variant::ConstrainedHeat => "constrained_heat",
            Variant::DampedWave => "damped_wave",
            Variant::ResonantWave => "resonant_wave",
            Variant::Beam => "beam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    Constant(f64),
    /// `β(t)` periodic with the nonlinearity's period.
    Periodic(TimeFactor),
}

impl Damping {
    pub fn mean(&self) -> f64 {
        match self {
            Damping::Constant(b) => *b,
            Damping::Periodic(tf) => tf.mean,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Damping::Constant(_) => true,
            Damping::Periodic(tf) => tf.is_constant(),
        }
    }
}

/// Per-mode generator block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearBlock {
    Scalar(f64),
    /// Rows `((m00, m01), (m10, m11))`.
    Pair([[f64; 2]; 2]),
}

/// Beam forcing `f(t)` as time factors times coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    terms: Vec<(TimeFactor, Vec<f64>)>,
    period: f64,
}

impl Forcing {
    pub fn new(terms: Vec<(TimeFactor, Vec<f64>)>, period: f64) -> Self {
        Self { terms, period }
    }

    pub fn add_at(&self, t: f64, scale: f64, out: &mut [f64]) {
        for (tf, c) in &self.terms {
            let a = scale * tf.eval(t, self.period);
            if a != 0.0 {
                for (o, ci) in out.iter_mut().zip(c) {
                    *o += a * ci;
                }
            }
        }
    }

    pub fn at(&self, t: f64, modes: usize) -> Vec<f64> {
        let mut out = vec![0.0; modes];
        self.add_at(t, 1.0, &mut out);
        out
    }

    pub fn mean(&self) -> Forcing {
        Forcing {
            terms: self
                .terms
                .iter()
                .map(|(tf, c)| (TimeFactor::constant(tf.mean), c.clone()))
                .collect(),
            period: self.period,
        }
    }

    pub fn is_autonomous(&self) -> bool {
        self.terms.iter().all(|(tf, _)| tf.is_constant())
    }
}

/// Extensible-beam coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    variant: Variant,
    basis: SpectralBasis,
    damping: Damping,
    alpha: f64,
    sigma: f64,
    a: f64,
    b: f64,
    resonant_mode: Option<usize>,
    nonlinearity: Nonlinearity,
    forcing: Option<Forcing>,
    epsilon: f64,
    /// λ of the fast-forced family: coefficients are read at `t/λ`, period is `λT`.
    time_scale: f64,
    steps_per_period: usize,
}

pub const DEFAULT_STEPS_PER_PERIOD: usize = 1024;

impl ProblemSpec {
    fn base(variant: Variant, basis: SpectralBasis, nonlinearity: Nonlinearity) -> Self {
        Self {
            variant,
            basis,
            damping: Damping::Constant(0.0),
            alpha: 0.0,
            sigma: 0.0,
            a: 0.0,
            b: 0.0,
            resonant_mode: None,
            nonlinearity,
            forcing: None,
            epsilon: 1.0,
            time_scale: 1.0,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
        }
    }

    fn need_kind(basis: &SpectralBasis, kind: BoundaryKind, variant: Variant) -> Result<()> {
        if basis.kind() != kind {
            return Err(invalid(format!(
                "{} needs a {:?} basis, got {:?}",
                variant.name(),
                kind,
                basis.kind()
            )));
        }
        Ok(())
    }

    pub fn heat(basis: SpectralBasis, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::need_kind(&basis, BoundaryKind::DirichletSine, Variant::Heat)?;
        Ok(Self::base(Variant::Heat, basis, nonlinearity))
    }

    pub fn constrained_heat(basis: SpectralBasis, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::need_kind(&basis, BoundaryKind::DirichletSine, Variant::ConstrainedHeat)?;
        Ok(Self::base(Variant::ConstrainedHeat, basis, nonlinearity))
    }

    pub fn damped_wave(basis: SpectralBasis, damping: Damping, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::need_kind(&basis, BoundaryKind::DirichletSine, Variant::DampedWave)?;
        match damping {
            Damping::Constant(b) if b < 0.0 => return Err(invalid("damping must be nonnegative")),
            Damping::Periodic(tf) if tf.mean <= (tf.cos.hypot(tf.sin)) => {
                return Err(invalid("periodic damping must stay positive"))
            }
            _ => {}
        }
        let mut p = Self::base(Variant::DampedWave, basis, nonlinearity);
        p.damping = damping;
        Ok(p)
    }

    pub fn resonant_wave(
        basis: SpectralBasis,
        beta: f64,
        resonant_mode: usize,
        nonlinearity: Nonlinearity,
        epsilon: f64,
    ) -> Result<Self> {
        Self::need_kind(&basis, BoundaryKind::DirichletSine, Variant::ResonantWave)?;
        if resonant_mode == 0 || resonant_mode > basis.modes() {
            return Err(invalid(format!(
                "resonant mode {resonant_mode} outside 1..={}",
                basis.modes()
            )));
        }
        if !(beta > 0.0) {
            return Err(invalid("resonant wave needs positive damping"));
        }
        if epsilon < 0.0 {
            return Err(invalid("epsilon must be nonnegative"));
        }
        let mut p = Self::base(Variant::ResonantWave, basis, nonlinearity);
        p.damping = Damping::Constant(beta);
        p.resonant_mode = Some(resonant_mode);
        p.epsilon = epsilon;
        Ok(p)
    }

    /// Beam driven by `forcing(ω t)`; `period` is the period `T` of the forcing profile.
    pub fn beam(
        basis: SpectralBasis,
        params: BeamParams,
        forcing: Option<Forcing>,
        omega: f64,
        period: f64,
    ) -> Result<Self> {
        Self::need_kind(&basis, BoundaryKind::HingedBeam, Variant::Beam)?;
        if !(params.a > 0.0) {
            return Err(invalid("beam needs a > 0"));
        }
        if params.alpha < 0.0 || params.beta < 0.0 {
            return Err(invalid("beam damping coefficients must be nonnegative"));
        }
        if !(omega > 0.0) {
            return Err(invalid("omega must be positive"));
        }
        if let Some(f) = &forcing {
            if f.terms.iter().any(|(_, c)| c.len() != basis.modes()) {
                return Err(invalid("forcing coefficient vectors must match the basis"));
            }
        }
        let mut p = Self::base(Variant::Beam, basis, Nonlinearity::zero(period));
        p.damping = Damping::Constant(params.beta);
        p.alpha = params.alpha;
        p.sigma = params.sigma;
        p.a = params.a;
        p.b = params.b;
        p.forcing = forcing.map(|f| Forcing { period, ..f });
        p.time_scale = 1.0 / omega;
        Ok(p)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn order(&self) -> Order {
        self.variant.order()
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    /// Coordinate count of a state.
    pub fn dim(&self) -> usize {
        match self.order() {
            Order::First => self.modes(),
            Order::Second => 2 * self.modes(),
        }
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn forcing(&self) -> Option<&Forcing> {
        self.forcing.as_ref()
    }

    pub fn damping(&self) -> Damping {
        self.damping
    }

    pub fn beam_params(&self) -> BeamParams {
        BeamParams {
            alpha: self.alpha,
            beta: self.damping.mean(),
            sigma: self.sigma,
            a: self.a,
            b: self.b,
        }
    }

    pub fn resonant_mode(&self) -> Option<usize> {
        self.resonant_mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Forcing frequency of the beam, `1/λ`.
    pub fn omega(&self) -> f64 {
        1.0 / self.time_scale
    }

    /// Period `T` of the time dependence before scaling.
    pub fn base_period(&self) -> f64 {
        self.nonlinearity.period()
    }

    /// Period of the (possibly scaled) problem, `λT`.
    pub fn period(&self) -> f64 {
        self.time_scale * self.base_period()
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn with_steps_per_period(mut self, steps: usize) -> Self {
        self.steps_per_period = steps.max(1);
        self
    }

    /// Member of the family `u̇ = Au + F(t/λ, u)` with period `λT`.
    pub fn with_time_scale(&self, lambda: f64) -> Self {
        let mut p = self.clone();
        p.time_scale = lambda;
        p
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut p = self.clone();
        p.epsilon = epsilon;
        p
    }

    pub fn with_nonlinearity(&self, nonlinearity: Nonlinearity) -> Self {
        let mut p = self.clone();
        p.nonlinearity = nonlinearity;
        p
    }

    /// Same problem on a basis with a different mode count.
    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        let mut p = self.clone();
        let old = self.modes();
        p.basis = self.basis.with_modes(modes)?;
        if let Some(f) = &mut p.forcing {
            for (_, c) in &mut f.terms {
                c.resize(modes, 0.0);
            }
        }
        if let Some(k) = p.resonant_mode {
            if k > modes {
                return Err(invalid(format!("resonant mode {k} lost when truncating {old} → {modes}")));
            }
        }
        Ok(p)
    }

    pub fn is_autonomous(&self) -> bool {
        self.nonlinearity.is_autonomous()
            && self.damping.is_constant()
            && self.forcing.as_ref().map_or(true, Forcing::is_autonomous)
    }

    /// True when the nonlinear increment vanishes identically.
    pub fn is_linear_homogeneous(&self) -> bool {
        match self.variant {
            Variant::Beam => false,
            _ => self.nonlinearity.is_zero(),
        }
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.modes() {
            return Err(invalid(format!("mode {k} outside 1..={}", self.modes())));
        }
        Ok(())
    }

    /// Generator block of mode `k` with the mean damping.
    pub fn linear_block(&self, k: usize) -> Result<LinearBlock> {
        self.check_mode(k)?;
        Ok(self.block_with_beta(k, self.damping.mean()))
    }

    /// Generator block of mode `k` at time `t` (differs only for periodic damping).
    pub fn linear_block_at(&self, k: usize, t: f64) -> Result<LinearBlock> {
        self.check_mode(k)?;
        Ok(self.block_with_beta(k, self.beta_at(t)))
    }

    pub(crate) fn beta_at(&self, t: f64) -> f64 {
        match self.damping {
            Damping::Constant(b) => b,
            Damping::Periodic(tf) => tf.eval(t / self.time_scale, self.base_period()),
        }
    }

    pub(crate) fn block_with_beta(&self, k: usize, beta: f64) -> LinearBlock {
        let mu = self.basis.eigenvalues()[k - 1];
        match self.variant {
            Variant::Heat | Variant::ConstrainedHeat => LinearBlock::Scalar(-mu),
            Variant::DampedWave => LinearBlock::Pair([[0.0, 1.0], [-mu, -beta]]),
            Variant::ResonantWave => {
                let shift = self.basis.eigenvalues()[self.resonant_mode.unwrap_or(1) - 1];
                LinearBlock::Pair([[0.0, 1.0], [-(mu - shift), -beta]])
            }
            Variant::Beam => LinearBlock::Pair([[0.0, 1.0], [-mu, -self.alpha * mu - beta]]),
        }
    }

    /// Shifted stiffness `κ_k` of the operator `A` (eigenvalue of `A` on mode `k`).
    pub fn stiffness(&self, k: usize) -> f64 {
        let mu = self.basis.eigenvalues()[k - 1];
        match self.variant {
            Variant::ResonantWave => mu - self.basis.eigenvalues()[self.resonant_mode.unwrap_or(1) - 1],
            _ => mu,
        }
    }

    /// Coefficients of `x ↦ f(t, x, u(x))`, de-aliased on the `2N+1` grid.
    /// `t` is the problem time; the nonlinearity is read at `t/λ`.
    pub fn nemytskii_coeffs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.modes()];
        let mut grid = vec![0.0; self.basis.default_grid()];
        self.nemytskii_coeffs_into(t, u, &mut out, &mut grid);
        out
    }

    pub(crate) fn nemytskii_coeffs_into(&self, t: f64, u: &[f64], out: &mut [f64], grid: &mut [f64]) {
        if self.nonlinearity.is_zero() {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let tau = t / self.time_scale;
        self.basis.synth_default_into(u, grid);
        let h = self.basis.length() / (grid.len() + 1) as f64;
        for (m, g) in grid.iter_mut().enumerate() {
            let x = (m + 1) as f64 * h;
            *g = self.nonlinearity.eval(tau, x, *g);
        }
        self.basis.analyze_default_into(grid, out);
    }

    /// State-space increment of the nonlinear part into caller buffers.
    pub(crate) fn increment_into(
        &self,
        t: f64,
        u: &[f64],
        v: &[f64],
        out_u: &mut [f64],
        out_v: &mut [f64],
        grid: &mut [f64],
    ) {
        match self.variant {
            Variant::Heat | Variant::ConstrainedHeat => {
                self.nemytskii_coeffs_into(t, u, out_u, grid);
            }
            Variant::DampedWave | Variant::ResonantWave => {
                out_u.iter_mut().for_each(|o| *o = 0.0);
                self.nemytskii_coeffs_into(t, u, out_v, grid);
                let scale = if self.variant == Variant::ResonantWave {
                    -self.epsilon
                } else {
                    -1.0
                };
                out_v.iter_mut().for_each(|o| *o *= scale);
            }
            Variant::Beam => {
                out_u.iter_mut().for_each(|o| *o = 0.0);
                let lam = self.basis.eigenvalues();
                // |u|²_{1/4} and (A^{1/2}u, v)₀ in ascending mode order
                let mut quarter = 0.0;
                let mut cross = 0.0;
                for ((ui, vi), l) in u.iter().zip(v).zip(lam) {
                    let s = l.sqrt();
                    quarter += s * ui * ui;
                    cross += s * ui * vi;
                }
                let coef = self.a * quarter + self.b + self.sigma * cross;
                for ((o, ui), l) in out_v.iter_mut().zip(u).zip(lam) {
                    *o = -coef * l.sqrt() * ui;
                }
                if let Some(f) = &self.forcing {
                    f.add_at(t / self.time_scale, 1.0, out_v);
                }
            }
        }
    }

    /// The nonlinear increment at `(t, state)`.
    pub fn nemytskii(&self, t: f64, state: &State) -> Result<State> {
        state.check(&self.basis, self.order())?;
        let n = self.modes();
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        let mut grid = vec![0.0; self.basis.default_grid()];
        self.increment_into(t, &state.u, state.v(), &mut du, &mut dv, &mut grid);
        Ok(match self.order() {
            Order::First => State::first(du),
            Order::Second => State::second(du, dv),
        })
    }

    /// `(1/T)∫₀^T nemytskii(t, ·) dt` over the problem period.
    pub fn averaged_nonlinearity(&self, state: &State) -> Result<State> {
        self.averaged_nonlinearity_refined(state, 0)
    }

    pub fn averaged_nonlinearity_refined(&self, state: &State, refine: u32) -> Result<State> {
        if self.is_autonomous() {
            return self.nemytskii(0.0, state);
        }
        let period = self.period();
        let rule = CompositeRule::time_average(period, refine);
        let mut acc = State::zeros(self.order(), self.modes());
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            acc = acc.axpy(w / period, &self.nemytskii(*t, state)?);
        }
        Ok(acc)
    }

    /// The averaged autonomous problem: same linear part with mean damping,
    /// time-averaged nonlinearity and forcing.
    pub fn averaged(&self) -> Self {
        self.averaged_refined(0)
    }

    pub fn averaged_refined(&self, refine: u32) -> Self {
        let mut p = self.clone();
        p.nonlinearity = self.nonlinearity.averaged(refine);
        p.forcing = self.forcing.as_ref().map(Forcing::mean);
        p.damping = Damping::Constant(self.damping.mean());
        p
    }

    /// `A x + F̂(x)` of the averaged problem on flattened coordinates.
    pub fn stationary_field(&self, x: &[f64]) -> Vec<f64> {
        let n = self.modes();
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        let mut grid = vec![0.0; self.basis.default_grid()];
        let (u, v) = x.split_at(n);
        self.increment_into(0.0, u, v, &mut du, &mut dv, &mut grid);
        let mut out = vec![0.0; self.dim()];
        for k in 1..=n {
            match self.block_with_beta(k, self.damping.mean()) {
                LinearBlock::Scalar(m) => out[k - 1] = m * u[k - 1] + du[k - 1],
                LinearBlock::Pair(m) => {
                    out[k - 1] = m[0][0] * u[k - 1] + m[0][1] * v[k - 1] + du[k - 1];
                    out[n + k - 1] = m[1][0] * u[k - 1] + m[1][1] * v[k - 1] + dv[k - 1];
                }
            }
        }
        out
    }

    /// Minimum grid value of `u` and whether `f(t,x,0) ≥ 0` on sampled `(t, x)`.
    pub fn cone_guard(&self, state: &State) -> Result<ConeReport> {
        if self.variant != Variant::ConstrainedHeat {
            return Err(invalid(format!(
                "cone guard applies to constrained_heat, not {}",
                self.variant.name()
            )));
        }
        state.check(&self.basis, Order::First)?;
        let grid = self.basis.synth(&state.u, self.basis.default_grid())?;
        let min_value = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let times = CompositeRule::time_average(self.base_period(), 0).nodes;
        let xs: Vec<f64> = std::iter::once(0.0)
            .chain(self.basis.nodes(self.basis.default_grid()))
            .chain(std::iter::once(self.basis.length()))
            .collect();
        let mut min_source = f64::INFINITY;
        for &t in &times {
            for &x in &xs {
                min_source = min_source.min(self.nonlinearity.eval(t, x, 0.0));
            }
        }
        Ok(ConeReport {
            min_value,
            tangent: min_source >= 0.0,
            min_source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub min_value: f64,
    /// `f(t,x,0) ≥ 0` on every sample.
    pub tangent: bool,
    pub min_source: f64,
}

pub fn linear_block(problem: &ProblemSpec, k: usize) -> Result<LinearBlock> {
    problem.linear_block(k)
}

pub fn nemytskii(problem: &ProblemSpec, t: f64, state: &State) -> Result<State> {
    problem.nemytskii(t, state)
}

pub fn averaged_nonlinearity(problem: &ProblemSpec, state: &State) -> Result<State> {
    problem.averaged_nonlinearity(state)
}

pub fn cone_guard(problem: &ProblemSpec, state: &State) -> Result<ConeReport> {
    problem.cone_guard(state)
}

/// Periodic damping `β(t)` in JSON form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DampingConfig {
    Constant(f64),
    Periodic(TimeFactor),
}

impl DampingConfig {
    fn to_damping(self) -> Damping {
        match self {
            DampingConfig::Constant(b) => Damping::Constant(b),
            DampingConfig::Periodic(tf) => Damping::Periodic(tf),
        }
    }
}

fn default_length() -> f64 {
    PI
}
fn default_modes() -> usize {
    32
}
fn default_period() -> f64 {
    2.0 * PI
}
fn default_one() -> f64 {
    1.0
}
fn default_steps() -> usize {
    DEFAULT_STEPS_PER_PERIOD
}
fn zero_law() -> NonlinearitySpec {
    NonlinearitySpec::new(StateLaw::Zero)
}

/// JSON description of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub variant: Variant,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Period `T` of the time dependence.
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<DampingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonant_mode: Option<usize>,
    #[serde(default = "default_one")]
    pub omega: f64,
    #[serde(default = "default_one")]
    pub epsilon: f64,
    #[serde(default = "zero_law")]
    pub nonlinearity: NonlinearitySpec,
    /// Beam forcing profile `f(t)`; its period is `period`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forcing: Vec<ForcingTerm>,
}

impl ProblemConfig {
    pub fn new(variant: Variant, modes: usize, nonlinearity: NonlinearitySpec) -> Self {
        Self {
            variant,
            length: PI,
            modes,
            period: 2.0 * PI,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            beta: None,
            beam: None,
            resonant_mode: None,
            omega: 1.0,
            epsilon: 1.0,
            nonlinearity,
            forcing: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        if !(self.period > 0.0) {
            return Err(invalid("period must be positive"));
        }
        let kind = match self.variant {
            Variant::Beam => BoundaryKind::HingedBeam,
            _ => BoundaryKind::DirichletSine,
        };
        let basis = SpectralBasis::new(kind, self.length, self.modes)?;
        let nl = self.nonlinearity.compile(self.period, self.length)?;
        let need_beta = || {
            self.beta
                .ok_or_else(|| invalid(format!("{} needs `beta`", self.variant.name())))
        };
        let unused = |what: &str, present: bool| -> Result<()> {
            if present {
                Err(invalid(format!("`{what}` does not apply to {}", self.variant.name())))
            } else {
                Ok(())
            }
        };
        let p = match self.variant {
            Variant::Heat | Variant::ConstrainedHeat => {
                unused("beta", self.beta.is_some())?;
                unused("beam", self.beam.is_some())?;
                unused("resonant_mode", self.resonant_mode.is_some())?;
                if self.variant == Variant::Heat {
                    ProblemSpec::heat(basis, nl)?
                } else {
                    ProblemSpec::constrained_heat(basis, nl)?
                }
            }
            Variant::DampedWave => {
                unused("beam", self.beam.is_some())?;
                unused("resonant_mode", self.resonant_mode.is_some())?;
                ProblemSpec::damped_wave(basis, need_beta()?.to_damping(), nl)?
            }
            Variant::ResonantWave => {
                unused("beam", self.beam.is_some())?;
                let beta = match need_beta()? {
                    DampingConfig::Constant(b) => b,
                    DampingConfig::Periodic(_) => {
                        return Err(invalid("resonant_wave takes a constant beta"))
                    }
                };
                let k = self
                    .resonant_mode
                    .ok_or_else(|| invalid("resonant_wave needs `resonant_mode`"))?;
                ProblemSpec::resonant_wave(basis, beta, k, nl, self.epsilon)?
            }
            Variant::Beam => {
                unused("beta", self.beta.is_some())?;
                let params = self
                    .beam
                    .ok_or_else(|| invalid("beam needs `beam` parameters"))?;
                if !matches!(self.nonlinearity.law, StateLaw::Zero) {
                    return Err(invalid("beam takes its forcing in `forcing`, not `nonlinearity`"));
                }
                let forcing = if self.forcing.is_empty() {
                    None
                } else {
                    let mut terms = Vec::new();
                    let nodes = basis.nodes(basis.default_grid());
                    for term in &self.forcing {
                        let profile = NonlinearitySpec::new(StateLaw::Zero).forced(
                            1.0,
                            TimeFactor::constant(1.0),
                            term.profile.clone(),
                        );
                        let p = profile.compile(1.0, self.length)?;
                        let grid: Vec<f64> = nodes.iter().map(|&x| p.eval(0.0, x, 0.0)).collect();
                        let c = basis.analyze(&grid)?;
                        terms.push((term.time, c.iter().map(|ci| term.amplitude * ci).collect()));
                    }
                    Some(Forcing::new(terms, self.period))
                };
                ProblemSpec::beam(basis, params, forcing, self.omega, self.period)?
            }
        };
        Ok(p.with_steps_per_period(self.steps_per_period))
    }
}

impl std::str::FromStr for ProblemConfig {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| invalid(format!("problem schema: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::SpaceProfile;
    use approx::assert_abs_diff_eq;

    fn sine(n: usize) -> SpectralBasis {
        SpectralBasis::new(BoundaryKind::DirichletSine, PI, n).unwrap()
    }

    fn law(l: StateLaw) -> Nonlinearity {
        NonlinearitySpec::new(l).compile(2.0 * PI, PI).unwrap()
    }

    #[test]
    fn blocks_transcribe_generators() {
        let heat = ProblemSpec::heat(sine(4), Nonlinearity::zero(1.0)).unwrap();
        assert_eq!(heat.linear_block(1).unwrap(), LinearBlock::Scalar(-1.0));
        let wave = ProblemSpec::damped_wave(sine(4), Damping::Constant(2.0), Nonlinearity::zero(1.0)).unwrap();
        assert_eq!(
            wave.linear_block(2).unwrap(),
            LinearBlock::Pair([[0.0, 1.0], [-4.0, -2.0]])
        );
        let res = ProblemSpec::resonant_wave(sine(4), 0.5, 1, Nonlinearity::zero(1.0), 1.0).unwrap();
        assert_eq!(
            res.linear_block(1).unwrap(),
            LinearBlock::Pair([[0.0, 1.0], [0.0, -0.5]])
        );
        assert!(heat.linear_block(0).is_err());
        assert!(heat.linear_block(5).is_err());
        let beam_basis = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 3).unwrap();
        let params = BeamParams { alpha: 0.1, beta: 0.2, sigma: 0.0, a: 1.0, b: -2.5 };
        let beam = ProblemSpec::beam(beam_basis, params, None, 1.0, 1.0).unwrap();
        match beam.linear_block(2).unwrap() {
            LinearBlock::Pair(m) => {
                assert_eq!(m[1][0], -16.0);
                assert_abs_diff_eq!(m[1][1], -0.1 * 16.0 - 0.2, epsilon = 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn variant_basis_mismatch_rejected() {
        let beam_basis = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 3).unwrap();
        assert!(ProblemSpec::heat(beam_basis, Nonlinearity::zero(1.0)).is_err());
        assert!(ProblemSpec::resonant_wave(sine(3), 0.5, 4, Nonlinearity::zero(1.0), 1.0).is_err());
    }

    #[test]
    fn nemytskii_identity_and_zero() {
        let p = ProblemSpec::heat(sine(6), law(StateLaw::Linear { slope: 1.0 })).unwrap();
        let u = State::first(vec![0.3, -0.2, 0.1, 0.0, 0.05, 0.0]);
        let inc = p.nemytskii(0.7, &u).unwrap();
        for (a, b) in inc.u.iter().zip(&u.u) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let z = ProblemSpec::heat(sine(6), Nonlinearity::zero(1.0)).unwrap();
        assert!(z.nemytskii(0.0, &u).unwrap().u.iter().all(|&x| x == 0.0));
        assert!(p.nemytskii(0.0, &State::zeros(Order::Second, 6)).is_err());
    }

    #[test]
    fn beam_single_mode_increment() {
        // closed form: v-part = −(a c² + b)·c·λ₁^{1/2} with λ₁ = 1
        let basis = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 4).unwrap();
        let params = BeamParams { alpha: 0.1, beta: 0.1, sigma: 0.7, a: 1.3, b: -2.5 };
        let p = ProblemSpec::beam(basis, params, None, 1.0, 1.0).unwrap();
        let c = 0.8;
        let s = State::second(vec![c, 0.0, 0.0, 0.0], vec![0.0; 4]);
        let inc = p.nemytskii(0.0, &s).unwrap();
        assert!(inc.u.iter().all(|&x| x == 0.0));
        assert_abs_diff_eq!(inc.v()[0], -(1.3 * c * c - 2.5) * c, epsilon = 1e-14);
        assert!(inc.v()[1..].iter().all(|&x| x == 0.0));

        // odd symmetry when unforced
        let s = State::second(vec![0.3, -0.1, 0.2, 0.05], vec![0.1, 0.4, -0.2, 0.0]);
        let plus = p.nemytskii(0.0, &s).unwrap();
        let minus = p.nemytskii(0.0, &s.scale(-1.0)).unwrap();
        for (a, b) in plus.v().iter().zip(minus.v()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn averaging_quadrature() {
        let basis = sine(5);
        let u = State::first(vec![0.4, 0.1, -0.3, 0.0, 0.2]);
        // time-independent: F̂ = F
        let p = ProblemSpec::heat(basis.clone(), law(StateLaw::Arctan { amplitude: 1.0 })).unwrap();
        assert_eq!(p.averaged_nonlinearity(&u).unwrap(), p.nemytskii(0.0, &u).unwrap());
        // mean-zero factor
        let spec = NonlinearitySpec::new(StateLaw::Arctan { amplitude: 1.0 }).modulated(TimeFactor::sine(0.0, 1.0));
        let p = ProblemSpec::heat(basis.clone(), spec.compile(2.0, PI).unwrap()).unwrap();
        assert!(p.averaged_nonlinearity(&u).unwrap().u.iter().all(|x| x.abs() < 1e-14));
        // (1 + cos)·s averages to s
        let spec = NonlinearitySpec::new(StateLaw::Linear { slope: 1.0 }).modulated(TimeFactor::cosine(1.0, 1.0));
        let p = ProblemSpec::heat(basis, spec.compile(2.0, PI).unwrap()).unwrap();
        let avg = p.averaged_nonlinearity(&u).unwrap();
        for (a, b) in avg.u.iter().zip(&u.u) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn nemytskii_periodic_and_average_converged() {
        let spec = NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 })
            .modulated(TimeFactor::cosine(1.0, 0.5))
            .forced(1.0, TimeFactor::sine(0.0, 1.0), SpaceProfile::SineMode { k: 1 });
        let p = ProblemSpec::heat(sine(8), spec.compile(1.5, PI).unwrap()).unwrap();
        let u = State::first(vec![0.5, -0.2, 0.1, 0.0, 0.1, 0.0, 0.0, 0.02]);
        for t in [0.0, 0.37, 1.2] {
            let a = p.nemytskii(t, &u).unwrap();
            let b = p.nemytskii(t + 1.5, &u).unwrap();
            for (x, y) in a.u.iter().zip(&b.u) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
        let a = p.averaged_nonlinearity_refined(&u, 0).unwrap();
        let b = p.averaged_nonlinearity_refined(&u, 1).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn cone_guard_reports() {
        let basis = sine(8);
        let src = |c: f64| {
            NonlinearitySpec::new(StateLaw::Linear { slope: -0.5 })
                .forced(c, TimeFactor::constant(1.0), SpaceProfile::Constant)
                .compile(1.0, PI)
                .unwrap()
        };
        let p = ProblemSpec::constrained_heat(basis.clone(), src(1.0)).unwrap();
        let r = p.cone_guard(&State::unit(Order::First, 8, 1)).unwrap();
        assert!(r.min_value > 0.0 && r.tangent);
        let p_neg = ProblemSpec::constrained_heat(basis.clone(), src(-1.0)).unwrap();
        assert!(!p_neg.cone_guard(&State::unit(Order::First, 8, 1)).unwrap().tangent);
        let r = p.cone_guard(&State::unit(Order::First, 8, 2)).unwrap();
        let want = -(2.0 / PI).sqrt();
        assert!(r.min_value < 0.0 && (r.min_value - want).abs() < 0.05);
        let heat = ProblemSpec::heat(basis, src(1.0)).unwrap();
        assert!(heat.cone_guard(&State::unit(Order::First, 8, 1)).is_err());
    }

    #[test]
    fn config_schema() {
        let text = r#"{"variant":"resonant_wave","modes":6,"period":6.283185307179586,"beta":0.5,
            "resonant_mode":2,"epsilon":0.01,"nonlinearity":{"kind":"arctan","amplitude":1.0}}"#;
        let p = text.parse::<ProblemConfig>().unwrap().build().unwrap();
        assert_eq!(p.variant(), Variant::ResonantWave);
        assert_eq!(p.epsilon(), 0.01);
        assert!("{\"variant\":\"plate\"}".parse::<ProblemConfig>().is_err());
        let missing = r#"{"variant":"damped_wave"}"#.parse::<ProblemConfig>().unwrap();
        assert!(missing.build().is_err());
        let beam = r#"{"variant":"beam","modes":4,"period":1.0,"omega":8.0,
            "beam":{"alpha":0.1,"beta":0.2,"sigma":0.0,"a":1.0,"b":-2.5},
            "forcing":[{"amplitude":1.0,"time":{"cos":1.0},"profile":{"kind":"sine_mode","k":1}}]}"#;
        let p = beam.parse::<ProblemConfig>().unwrap().build().unwrap();
        assert_abs_diff_eq!(p.period(), 0.125, epsilon = 1e-15);
        let f = p.forcing().unwrap().at(0.0, 4);
        assert_abs_diff_eq!(f[0], (PI / 2.0).sqrt(), epsilon = 1e-13);
    }
}
