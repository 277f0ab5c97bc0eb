//! Sine bases, coefficient states and the fractional power scale.
//!
//! Both supported boundary kinds diagonalize in the orthonormal sine modes
//! `φ_k(x) = √(2/L) sin(kπx/L)`, so a single discrete sine transform on the
//! uniform interior grid `x_m = m·L/(M+1)` serves both.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// `−∂²` with Dirichlet conditions, eigenvalues `(kπ/L)²`.
    DirichletSine,
    /// `∂⁴` with hinged ends, eigenvalues `(jπ/L)⁴`.
    HingedBeam,
}

#[derive(Clone)]
pub struct SpectralBasis {
    kind: BoundaryKind,
    length: f64,
    eigenvalues: Vec<f64>,
    default_grid: usize,
    table: Arc<SineTable>,
}

impl std::fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("kind", &self.kind)
            .field("length", &self.length)
            .field("modes", &self.eigenvalues.len())
            .finish()
    }
}

/// `φ_k(x_m)` for one grid size, row-major in the node index.
struct SineTable {
    grid: usize,
    modes: usize,
    values: Vec<f64>,
}

impl SineTable {
    fn new(length: f64, modes: usize, grid: usize) -> Self {
        let scale = (2.0 / length).sqrt();
        let period = 2 * (grid + 1);
        let mut values = Vec::with_capacity(grid * modes);
        for m in 1..=grid {
            for k in 1..=modes {
                // reduce the integer phase first so the table is exact up to one sin() rounding
                let j = (k * m) % period;
                values.push(scale * (PI * j as f64 / (grid + 1) as f64).sin());
            }
        }
        Self {
            grid,
            modes,
            values,
        }
    }

    fn synth(&self, coeffs: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            let row = &self.values[m * self.modes..(m + 1) * self.modes];
            let mut acc = 0.0;
            for (phi, c) in row.iter().zip(coeffs) {
                acc += phi * c;
            }
            *o = acc;
        }
    }

    fn analyze(&self, length: f64, grid_values: &[f64], out: &mut [f64]) {
        let weight = length / (self.grid + 1) as f64;
        out.iter_mut().for_each(|c| *c = 0.0);
        for (m, g) in grid_values.iter().enumerate() {
            let row = &self.values[m * self.modes..(m + 1) * self.modes];
            for (c, phi) in out.iter_mut().zip(row) {
                *c += g * phi;
            }
        }
        out.iter_mut().for_each(|c| *c *= weight);
    }
}

impl SpectralBasis {
    pub fn new(kind: BoundaryKind, length: f64, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(invalid("mode count must be at least 1"));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(invalid(format!("domain length must be positive, got {length}")));
        }
        let eigenvalues = (1..=modes)
            .map(|k| {
                let w = k as f64 * PI / length;
                match kind {
                    BoundaryKind::DirichletSine => w * w,
                    BoundaryKind::HingedBeam => (w * w) * (w * w),
                }
            })
            .collect();
        let default_grid = 2 * modes + 1;
        Ok(Self {
            kind,
            length,
            eigenvalues,
            default_grid,
            table: Arc::new(SineTable::new(length, modes, default_grid)),
        })
    }

    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Node count of the de-aliased collocation grid, `2N+1`.
    pub fn default_grid(&self) -> usize {
        self.default_grid
    }

    /// Same kind and length with a different mode count.
    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        Self::new(self.kind, self.length, modes)
    }

    pub fn nodes(&self, grid_size: usize) -> Vec<f64> {
        let h = self.length / (grid_size + 1) as f64;
        (1..=grid_size).map(|m| m as f64 * h).collect()
    }

    /// Value of the normalized mode `k` (1-based) at `x`.
    pub fn mode_value(&self, k: usize, x: f64) -> f64 {
        (2.0 / self.length).sqrt() * (k as f64 * PI * x / self.length).sin()
    }

    fn table_for(&self, grid_size: usize) -> Arc<SineTable> {
        if grid_size == self.default_grid {
            Arc::clone(&self.table)
        } else {
            Arc::new(SineTable::new(self.length, self.modes(), grid_size))
        }
    }

    /// Evaluate `Σ c_k φ_k` on the interior grid of `grid_size` nodes.
    pub fn synth(&self, coeffs: &[f64], grid_size: usize) -> Result<Vec<f64>> {
        self.check_coeffs(coeffs)?;
        if grid_size < self.modes() {
            return Err(invalid(format!(
                "grid of {grid_size} nodes aliases {} modes",
                self.modes()
            )));
        }
        let mut out = vec![0.0; grid_size];
        self.table_for(grid_size).synth(coeffs, &mut out);
        Ok(out)
    }

    /// Discrete sine-transform quadrature of `(g, φ_k)`; the node count is
    /// read off the input.
    pub fn analyze(&self, grid_values: &[f64]) -> Result<Vec<f64>> {
        let grid_size = grid_values.len();
        if grid_size < self.modes() {
            return Err(invalid(format!(
                "{grid_size} grid values cannot resolve {} modes",
                self.modes()
            )));
        }
        let mut out = vec![0.0; self.modes()];
        self.table_for(grid_size)
            .analyze(self.length, grid_values, &mut out);
        Ok(out)
    }

    /// Grid-sized `synth` into a caller buffer on the default grid.
    pub(crate) fn synth_default_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.default_grid);
        self.table.synth(coeffs, out);
    }

    pub(crate) fn analyze_default_into(&self, grid_values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(grid_values.len(), self.default_grid);
        self.table.analyze(self.length, grid_values, out);
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.modes() {
            return Err(invalid(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                self.modes()
            )));
        }
        Ok(())
    }

    /// `c_k ↦ λ_k^θ c_k`.
    pub fn apply_frac_power(&self, coeffs: &[f64], theta: f64) -> Vec<f64> {
        coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, l)| l.powf(theta) * c)
            .collect()
    }

    /// `Σ λ_k^{2θ} c_k²`, ascending in k.
    pub fn frac_norm_sq(&self, coeffs: &[f64], theta: f64) -> f64 {
        let p = 2.0 * theta;
        let mut acc = 0.0;
        for (c, l) in coeffs.iter().zip(&self.eigenvalues) {
            acc += l.powf(p) * c * c;
        }
        acc
    }

    pub fn frac_norm(&self, coeffs: &[f64], theta: f64) -> f64 {
        self.frac_norm_sq(coeffs, theta).sqrt()
    }

    /// `(u, w)_θ = Σ λ_k^{2θ} u_k w_k`.
    pub fn frac_inner(&self, u: &[f64], w: &[f64], theta: f64) -> f64 {
        let p = 2.0 * theta;
        let mut acc = 0.0;
        for ((a, b), l) in u.iter().zip(w).zip(&self.eigenvalues) {
            acc += l.powf(p) * a * b;
        }
        acc
    }

    /// Squared weights of the natural norm on flattened coordinates:
    /// `|·|₀` for first-order states, `|u|²_{1/2} + |v|²₀` for second-order.
    pub fn natural_weights(&self, order: Order) -> Vec<f64> {
        match order {
            Order::First => vec![1.0; self.modes()],
            Order::Second => self
                .eigenvalues
                .iter()
                .copied()
                .chain(std::iter::repeat(1.0).take(self.modes()))
                .collect(),
        }
    }
}

/// Fractional power exponent θ of the scale `X^θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracNorm {
    pub theta: f64,
}

impl FracNorm {
    pub const L2: FracNorm = FracNorm { theta: 0.0 };
    pub const HALF: FracNorm = FracNorm { theta: 0.5 };
    pub const QUARTER: FracNorm = FracNorm { theta: 0.25 };

    pub fn of(&self, basis: &SpectralBasis, state: &State) -> f64 {
        frac_norm(basis, state, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::First => "first",
            Order::Second => "second",
        }
    }
}

/// Truncated spectral coefficients of a point of the phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
}

impl State {
    pub fn first(u: Vec<f64>) -> Self {
        Self { u, v: None }
    }

    pub fn second(u: Vec<f64>, v: Vec<f64>) -> Self {
        Self { u, v: Some(v) }
    }

    pub fn zeros(order: Order, modes: usize) -> Self {
        match order {
            Order::First => Self::first(vec![0.0; modes]),
            Order::Second => Self::second(vec![0.0; modes], vec![0.0; modes]),
        }
    }

    /// `e_k` in the displacement component (1-based).
    pub fn unit(order: Order, modes: usize, k: usize) -> Self {
        let mut s = Self::zeros(order, modes);
        s.u[k - 1] = 1.0;
        s
    }

    pub fn order(&self) -> Order {
        if self.v.is_some() {
            Order::Second
        } else {
            Order::First
        }
    }

    pub fn modes(&self) -> usize {
        self.u.len()
    }

    pub fn dim(&self) -> usize {
        match self.order() {
            Order::First => self.u.len(),
            Order::Second => 2 * self.u.len(),
        }
    }

    pub fn v(&self) -> &[f64] {
        self.v.as_deref().unwrap_or(&[])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v()).all(|x| x.is_finite())
    }

    pub fn check(&self, basis: &SpectralBasis, order: Order) -> Result<()> {
        if self.order() != order {
            return Err(LabError::OrderMismatch {
                expected: order.name(),
                got: self.order().name(),
            });
        }
        if self.u.len() != basis.modes() || self.v.as_ref().is_some_and(|v| v.len() != basis.modes())
        {
            return Err(invalid(format!(
                "state has {} modes, basis has {}",
                self.u.len(),
                basis.modes()
            )));
        }
        if !self.is_finite() {
            return Err(invalid("state has non-finite entries"));
        }
        Ok(())
    }

    /// Coordinates `(u, v)` stacked into one vector.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.u.iter().chain(self.v()).copied())
    }

    pub fn from_slice(order: Order, modes: usize, x: &[f64]) -> Self {
        match order {
            Order::First => Self::first(x[..modes].to_vec()),
            Order::Second => Self::second(x[..modes].to_vec(), x[modes..2 * modes].to_vec()),
        }
    }

    pub fn from_vector(order: Order, modes: usize, x: &DVector<f64>) -> Self {
        Self::from_slice(order, modes, x.as_slice())
    }

    /// `self + a·other`
    pub fn axpy(&self, a: f64, other: &State) -> State {
        let u = self.u.iter().zip(&other.u).map(|(x, y)| x + a * y).collect();
        let v = self
            .v
            .as_ref()
            .map(|v| v.iter().zip(other.v()).map(|(x, y)| x + a * y).collect());
        State { u, v }
    }

    pub fn scale(&self, a: f64) -> State {
        State {
            u: self.u.iter().map(|x| a * x).collect(),
            v: self.v.as_ref().map(|v| v.iter().map(|x| a * x).collect()),
        }
    }

    pub fn natural_norm(&self, basis: &SpectralBasis) -> f64 {
        match self.order() {
            Order::First => basis.frac_norm(&self.u, 0.0),
            Order::Second => (basis.frac_norm_sq(&self.u, 0.5) + basis.frac_norm_sq(self.v(), 0.0)).sqrt(),
        }
    }
}

pub fn build_basis(kind: BoundaryKind, length: f64, modes: usize) -> Result<SpectralBasis> {
    SpectralBasis::new(kind, length, modes)
}

pub fn synth(basis: &SpectralBasis, coeffs: &[f64], grid_size: usize) -> Result<Vec<f64>> {
    basis.synth(coeffs, grid_size)
}

pub fn analyze(basis: &SpectralBasis, grid_values: &[f64]) -> Result<Vec<f64>> {
    basis.analyze(grid_values)
}

/// `|u|_θ` of a first-order state or of the displacement of a second-order one.
pub fn frac_norm(basis: &SpectralBasis, state: &State, theta: f64) -> f64 {
    basis.frac_norm(&state.u, theta)
}

/// `‖(u,v)‖_E = (|u|²_{1/2} + |v|²₀)^{1/2}`.
pub fn energy_norm(basis: &SpectralBasis, state: &State) -> Result<f64> {
    energy_norm_sq(basis, state).map(f64::sqrt)
}

pub fn energy_norm_sq(basis: &SpectralBasis, state: &State) -> Result<f64> {
    match &state.v {
        Some(v) => Ok(basis.frac_norm_sq(&state.u, 0.5) + basis.frac_norm_sq(v, 0.0)),
        None => Err(LabError::OrderMismatch {
            expected: "second",
            got: "first",
        }),
    }
}

pub fn apply_frac_power(basis: &SpectralBasis, coeffs: &[f64], theta: f64) -> Vec<f64> {
    basis.apply_frac_power(coeffs, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sine(l: f64, n: usize) -> SpectralBasis {
        SpectralBasis::new(BoundaryKind::DirichletSine, l, n).unwrap()
    }

    #[test]
    fn closed_form_eigenvalues() {
        assert_eq!(sine(PI, 3).eigenvalues(), &[1.0, 4.0, 9.0]);
        let beam = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 2).unwrap();
        assert_eq!(beam.eigenvalues(), &[1.0, 16.0]);
        let wide = sine(2.0 * PI, 2);
        assert_abs_diff_eq!(wide.eigenvalues()[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(wide.eigenvalues()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_degenerate_bases() {
        assert!(SpectralBasis::new(BoundaryKind::DirichletSine, PI, 0).is_err());
        assert!(SpectralBasis::new(BoundaryKind::DirichletSine, 0.0, 4).is_err());
        assert!(SpectralBasis::new(BoundaryKind::HingedBeam, -1.0, 4).is_err());
    }

    #[test]
    fn synth_single_mode() {
        let b = sine(PI, 3);
        let g = b.synth(&[1.0, 0.0, 0.0], 3).unwrap();
        let s = (2.0 / PI).sqrt();
        for (gi, x) in g.iter().zip([PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]) {
            assert_abs_diff_eq!(*gi, s * x.sin(), epsilon = 1e-15);
        }
        assert!(b.synth(&[0.0; 3], 7).unwrap().iter().all(|&x| x == 0.0));
        assert!(b.synth(&[1.0, 0.0, 0.0], 2).is_err());
    }

    #[test]
    fn analyze_band_limited() {
        let b = sine(PI, 5);
        let nodes = b.nodes(11);
        let g2: Vec<f64> = nodes.iter().map(|&x| b.mode_value(2, x)).collect();
        let c = b.analyze(&g2).unwrap();
        for (k, ck) in c.iter().enumerate() {
            assert_abs_diff_eq!(*ck, if k == 1 { 1.0 } else { 0.0 }, epsilon = 1e-14);
        }
        // φ₁ + 2φ₃ evaluated pointwise, independently of the sine table
        let g: Vec<f64> = nodes
            .iter()
            .map(|&x| (2.0 / PI).sqrt() * (x.sin() + 2.0 * (3.0 * x).sin()))
            .collect();
        let c = b.analyze(&g).unwrap();
        for (ck, want) in c.iter().zip([1.0, 0.0, 2.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*ck, want, epsilon = 1e-14);
        }
        assert!(b.analyze(&[0.0; 11]).unwrap().iter().all(|&x| x == 0.0));
        assert!(b.analyze(&[0.0; 4]).is_err());
    }

    #[test]
    fn norms_on_unit_vectors() {
        let b = sine(PI, 3);
        let e2 = State::unit(Order::First, 3, 2);
        assert_abs_diff_eq!(frac_norm(&b, &e2, 0.5), 2.0, epsilon = 1e-15);
        let u = State::first(vec![3.0, 4.0, 0.0]);
        assert_abs_diff_eq!(frac_norm(&b, &u, 0.0), 5.0, epsilon = 1e-15);
        let beam = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 3).unwrap();
        assert_abs_diff_eq!(
            frac_norm(&beam, &State::unit(Order::First, 3, 1), 0.25),
            1.0,
            epsilon = 1e-15
        );

        let s = State::second(vec![1.0, 0.0, 0.0], vec![0.0; 3]);
        assert_abs_diff_eq!(energy_norm(&b, &s).unwrap(), 1.0, epsilon = 1e-15);
        let s = State::second(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(energy_norm(&b, &s).unwrap(), 1.0, epsilon = 1e-15);
        let s = State::second(vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(energy_norm(&b, &s).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
        assert!(energy_norm(&b, &e2).is_err());
    }

    #[test]
    fn frac_powers() {
        let b = sine(PI, 3);
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(b.apply_frac_power(&e2, 0.0), e2.to_vec());
        assert_eq!(b.apply_frac_power(&e2, 1.0), vec![0.0, 4.0, 0.0]);
        assert_eq!(b.apply_frac_power(&e2, -0.5), vec![0.0, 0.5, 0.0]);
    }

    #[test]
    fn state_checks() {
        let b = sine(PI, 3);
        assert!(State::zeros(Order::First, 3).check(&b, Order::First).is_ok());
        assert!(State::zeros(Order::First, 3).check(&b, Order::Second).is_err());
        assert!(State::zeros(Order::First, 4).check(&b, Order::First).is_err());
        assert!(State::first(vec![f64::NAN, 0.0, 0.0]).check(&b, Order::First).is_err());
    }

    proptest! {
        #[test]
        fn analyze_inverts_synth(
            coeffs in prop::collection::vec(-10.0f64..10.0, 1..24),
            extra in 0usize..20,
            kind in prop_oneof![Just(BoundaryKind::DirichletSine), Just(BoundaryKind::HingedBeam)],
            length in 0.5f64..7.0,
        ) {
            let b = SpectralBasis::new(kind, length, coeffs.len()).unwrap();
            let grid = coeffs.len() + extra;
            let back = b.analyze(&b.synth(&coeffs, grid).unwrap()).unwrap();
            for (x, y) in back.iter().zip(&coeffs) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn frac_norm_shifts_exponent(
            coeffs in prop::collection::vec(-3.0f64..3.0, 1..12),
            t1 in -1.0f64..1.0,
            t2 in -1.0f64..1.0,
        ) {
            let b = sine(PI, coeffs.len());
            let lhs = b.frac_norm(&coeffs, t1 + t2);
            let rhs = b.frac_norm(&b.apply_frac_power(&coeffs, t2), t1);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs));
        }

        #[test]
        fn energy_splits_exactly(
            u in prop::collection::vec(-3.0f64..3.0, 6),
            v in prop::collection::vec(-3.0f64..3.0, 6),
        ) {
            let b = sine(PI, 6);
            let s = State::second(u.clone(), v.clone());
            let e = energy_norm_sq(&b, &s).unwrap();
            prop_assert_eq!(e, b.frac_norm_sq(&u, 0.5) + b.frac_norm_sq(&v, 0.0));
        }
    }
}
