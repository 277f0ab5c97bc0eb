//! Brouwer degree of finite-dimensional fields, the degree of semilinear pairs
//! through their Galerkin truncations, and the small-time index check.
//!
//! Degrees are computed by enumerating zeros with multistart Newton and
//! summing Jacobian signs. In one and two dimensions a sign-change or
//! winding-number computation is available as a fallback when a zero is
//! degenerate. There is no interval arithmetic: every report carries its
//! boundary margin and the `trusted` predicate says which checks passed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, LabError, Result};
use crate::linalg::{fd_jacobian, newton, scaled_det, NewtonOptions};
use crate::poincare::translate;
use crate::problem::{LinearBlock, ProblemSpec};
use crate::spectral::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeMethod {
    RegularSum,
    Winding1d,
    Winding2d,
    LinearSpectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub point: Vec<f64>,
    pub jacobian_sign: i32,
    pub scaled_det: f64,
    /// `σ_min(J)` relative to the field's size over the region; small means degenerate.
    pub regularity: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeReport {
    pub degree: i32,
    pub zeros: Vec<ZeroRecord>,
    pub boundary_margin: f64,
    pub method: DegreeMethod,
    pub trusted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_stable: Option<bool>,
    pub notes: Vec<String>,
}

/// One factor of a product region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    Interval { coord: usize, lo: f64, hi: f64 },
    /// `{x : Σ w_i (x_i − c_i)² < r²}` over the listed coordinates.
    Ball { coords: Vec<usize>, center: Vec<f64>, radius: f64, weights_sq: Vec<f64> },
}

impl Component {
    fn depth(&self, x: &[f64]) -> f64 {
        match self {
            Component::Interval { coord, lo, hi } => (x[*coord] - lo).min(hi - x[*coord]) / (hi - lo),
            Component::Ball { coords, center, radius, weights_sq } => {
                let d: f64 = coords
                    .iter()
                    .zip(center)
                    .zip(weights_sq)
                    .map(|((&i, c), w)| w * (x[i] - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (radius - d) / radius
            }
        }
    }

    fn put_center(&self, x: &mut [f64]) {
        match self {
            Component::Interval { coord, lo, hi } => x[*coord] = 0.5 * (lo + hi),
            Component::Ball { coords, center, .. } => {
                for (&i, c) in coords.iter().zip(center) {
                    x[i] = *c;
                }
            }
        }
    }

    fn put_interior(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        match self {
            Component::Interval { coord, lo, hi } => x[*coord] = lo + (hi - lo) * rng.gen_range(0.05..0.95),
            Component::Ball { radius, .. } => {
                let s = radius * rng.gen_range(0.0..0.95);
                self.put_on_sphere(rng, s, x);
            }
        }
    }

    fn put_on_sphere(&self, rng: &mut ChaCha8Rng, r: f64, x: &mut [f64]) {
        if let Component::Ball { coords, center, weights_sq, .. } = self {
            let g: Vec<f64> = coords.iter().map(|_| gaussian(rng)).collect();
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            for ((&i, c), (gi, w)) in coords.iter().zip(center).zip(g.iter().zip(weights_sq)) {
                x[i] = c + r * gi / n / w.sqrt();
            }
        }
    }

    /// Deterministic boundary points plus `random` extra ones.
    fn boundary_points(&self, rng: &mut ChaCha8Rng, random: usize, base: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        match self {
            Component::Interval { coord, lo, hi } => {
                for v in [*lo, *hi] {
                    let mut x = base.to_vec();
                    x[*coord] = v;
                    out.push(x);
                }
            }
            Component::Ball { coords, center, radius, weights_sq } => {
                for (j, &i) in coords.iter().enumerate() {
                    for s in [-1.0, 1.0] {
                        let mut x = base.to_vec();
                        for (&k, c) in coords.iter().zip(center) {
                            x[k] = *c;
                        }
                        x[i] = center[j] + s * radius / weights_sq[j].sqrt();
                        out.push(x);
                    }
                }
                for _ in 0..random {
                    let mut x = base.to_vec();
                    self.put_on_sphere(rng, *radius, &mut x);
                    out.push(x);
                }
            }
        }
        out
    }

    /// Extent of coordinate `i` inside the component, as `(center, half-width)`.
    fn extent(&self, i: usize) -> Option<(f64, f64)> {
        match self {
            Component::Interval { coord, lo, hi } if *coord == i => Some((0.5 * (lo + hi), 0.5 * (hi - lo))),
            Component::Ball { coords, center, radius, weights_sq } => coords
                .iter()
                .position(|&c| c == i)
                .map(|j| (center[j], radius / weights_sq[j].sqrt())),
            _ => None,
        }
    }
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Product of intervals and weighted balls covering every coordinate once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub dim: usize,
    pub components: Vec<Component>,
}

impl Region {
    pub fn product(dim: usize, components: Vec<Component>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for c in &components {
            let coords: Vec<usize> = match c {
                Component::Interval { coord, lo, hi } => {
                    if !(hi > lo) {
                        return Err(invalid(format!("empty interval [{lo}, {hi}]")));
                    }
                    vec![*coord]
                }
                Component::Ball { coords, center, radius, weights_sq } => {
                    if !(*radius > 0.0) || center.len() != coords.len() || weights_sq.len() != coords.len() {
                        return Err(invalid("malformed ball component"));
                    }
                    if weights_sq.iter().any(|w| !(*w > 0.0)) {
                        return Err(invalid("ball weights must be positive"));
                    }
                    coords.clone()
                }
            };
            for i in coords {
                if i >= dim || seen[i] {
                    return Err(invalid(format!("coordinate {i} missing or repeated in region")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("region does not cover every coordinate"));
        }
        Ok(Self { dim, components })
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("box bounds must have equal, nonzero length"));
        }
        let comps = lo
            .iter()
            .zip(hi)
            .enumerate()
            .map(|(i, (l, h))| Component::Interval { coord: i, lo: *l, hi: *h })
            .collect();
        Self::product(lo.len(), comps)
    }

    pub fn symmetric_cube(n: usize, half: f64) -> Result<Self> {
        Self::cube(&vec![-half; n], &vec![half; n])
    }

    pub fn ball(center: Vec<f64>, radius: f64, weights_sq: Vec<f64>) -> Result<Self> {
        let dim = center.len();
        Self::product(
            dim,
            vec![Component::Ball { coords: (0..dim).collect(), center, radius, weights_sq }],
        )
    }

    pub fn is_box(&self) -> bool {
        self.components.iter().all(|c| matches!(c, Component::Interval { .. }))
    }

    /// Box bounds ordered by coordinate, when the region is a box.
    pub fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_box() {
            return None;
        }
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for c in &self.components {
            if let Component::Interval { coord, lo: l, hi: h } = c {
                lo[*coord] = *l;
                hi[*coord] = *h;
            }
        }
        Some((lo, hi))
    }

    /// Normalized distance to the boundary, positive inside.
    pub fn depth(&self, x: &[f64]) -> f64 {
        self.components.iter().map(|c| c.depth(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.depth(x) > 0.0
    }

    pub fn center(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for c in &self.components {
            c.put_center(&mut x);
        }
        x
    }

    fn boundary_samples(&self, rng: &mut ChaCha8Rng, per_face: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        if let Some((lo, hi)) = self.box_bounds() {
            if self.dim <= 3 {
                return face_grid(&lo, &hi, per_face.max(2));
            }
            for _ in 0..per_face * 2 * self.dim {
                let face = rng.gen_range(0..self.dim);
                let mut x: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
                x[face] = if rng.gen::<bool>() { hi[face] } else { lo[face] };
                out.push(x);
            }
            return out;
        }
        let center = self.center();
        for (j, comp) in self.components.iter().enumerate() {
            // other factors at their centers, then at random interior points
            out.extend(comp.boundary_points(rng, per_face, &center));
            for _ in 0..per_face / 4 {
                let mut base = center.clone();
                for (k, other) in self.components.iter().enumerate() {
                    if k != j {
                        other.put_interior(rng, &mut base);
                    }
                }
                out.extend(comp.boundary_points(rng, 1, &base));
            }
        }
        out
    }

    fn starts(&self, dominant: &[usize], levels: usize, random: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let center = self.center();
        let axes: Vec<(usize, f64, f64)> = dominant
            .iter()
            .filter_map(|&i| {
                self.components
                    .iter()
                    .find_map(|c| c.extent(i))
                    .map(|(c, h)| (i, c, h))
            })
            .collect();
        let mut out = Vec::new();
        let total = levels.pow(axes.len() as u32);
        for idx in 0..total {
            let mut x = center.clone();
            let mut rem = idx;
            for &(i, c, h) in &axes {
                let l = rem % levels;
                rem /= levels;
                let frac = if levels == 1 { 0.0 } else { -0.9 + 1.8 * l as f64 / (levels - 1) as f64 };
                x[i] = c + frac * h;
            }
            out.push(x);
        }
        for _ in 0..random {
            let mut x = center.clone();
            for c in &self.components {
                c.put_interior(rng, &mut x);
            }
            out.push(x);
        }
        out
    }
}

fn face_grid(lo: &[f64], hi: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    for face in 0..n {
        for side in [lo[face], hi[face]] {
            let free: Vec<usize> = (0..n).filter(|&i| i != face).collect();
            let count = k.pow(free.len() as u32);
            for idx in 0..count {
                let mut x = vec![0.0; n];
                x[face] = side;
                let mut rem = idx;
                for &i in &free {
                    let l = rem % k;
                    rem /= k;
                    x[i] = lo[i] + (hi[i] - lo[i]) * l as f64 / (k - 1) as f64;
                }
                out.push(x);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct DegreeOptions {
    /// Coordinates seeded on a grid; defaults to the first `min(dim, 4)`.
    pub dominant: Option<Vec<usize>>,
    pub levels: usize,
    pub random_starts: usize,
    pub seed: u64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub fd_step: f64,
    pub dedup: f64,
    pub boundary_per_face: usize,
    /// Minimum regularity for a zero to count as nondegenerate.
    pub regular_margin: f64,
    pub boundary_tol: f64,
    /// Sum zero signs even when the field looks linear.
    pub allow_linear_spectral: bool,
    pub force: Option<DegreeMethod>,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        Self {
            dominant: None,
            levels: 5,
            random_starts: 16,
            seed: 7,
            newton_tol: 1e-11,
            newton_max_iter: 40,
            fd_step: 1e-7,
            dedup: 1e-6,
            boundary_per_face: 17,
            regular_margin: 1e-5,
            boundary_tol: 1e-10,
            allow_linear_spectral: true,
            force: None,
        }
    }
}

pub type FieldFn<'a> = dyn FnMut(&[f64]) -> Result<Vec<f64>> + 'a;

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimum and maximum of `‖f‖` over the samples.
fn boundary_margin(field: &mut FieldFn, samples: &[Vec<f64>]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for x in samples {
        let v = norm2(&field(x)?);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

fn looks_linear(field: &mut FieldFn, region: &Region, rng: &mut ChaCha8Rng) -> Result<Option<DMatrix<f64>>> {
    let n = region.dim;
    let zero = vec![0.0; n];
    let f0 = field(&zero)?;
    if norm2(&f0) > 1e-12 {
        return Ok(None);
    }
    for _ in 0..3 {
        let x: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + 1.7 * b).collect();
        let (fx, fy, fxy) = (field(&x)?, field(&y)?, field(&xy)?);
        let scale = 1.0 + norm2(&fx) + norm2(&fy);
        let defect: f64 = fxy
            .iter()
            .zip(fx.iter().zip(&fy))
            .map(|(s, (a, b))| (s - a - 1.7 * b).abs())
            .fold(0.0, f64::max);
        if defect > 1e-10 * scale {
            return Ok(None);
        }
    }
    let mut jac = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = field(&e)?;
        e[j] = 0.0;
        for i in 0..n {
            jac[(i, j)] = col[i];
        }
    }
    Ok(Some(jac))
}

fn enumerate_zeros(
    field: &mut FieldFn,
    region: &Region,
    opts: &DegreeOptions,
    field_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ZeroRecord>> {
    let region_scale = (0..region.dim)
        .filter_map(|i| region.components.iter().find_map(|c| c.extent(i)).map(|e| e.1))
        .fold(0.0, f64::max);
    let dominant = opts
        .dominant
        .clone()
        .unwrap_or_else(|| (0..region.dim.min(4)).collect());
    let levels = if dominant.len() <= 2 { opts.levels.max(9) } else { opts.levels };
    let levels = if dominant.len() >= 4 { levels.min(3) } else { levels };
    let starts = region.starts(&dominant, levels, opts.random_starts, rng);
    let nopts = NewtonOptions {
        tol: opts.newton_tol,
        max_iter: opts.newton_max_iter,
        fd_step: opts.fd_step,
        min_damping: 1.0 / 4096.0,
        singular_det: 0.0,
    };
    let ones = vec![1.0; region.dim];
    let mut zeros: Vec<ZeroRecord> = Vec::new();
    for s in starts {
        let res = match newton(field, &s, &ones, &nopts) {
            Ok(r) => r,
            Err(_) => continue,
        };
        if !region.contains(&res.x) {
            continue;
        }
        if zeros.iter().any(|z| {
            z.point.iter().zip(&res.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                <= opts.dedup * (1.0 + norm2(&z.point))
        }) {
            continue;
        }
        let fx = field(&res.x)?;
        let jac = fd_jacobian(field, &res.x, &fx, opts.fd_step)?;
        let det = scaled_det(&jac);
        let sigma_min = jac.clone().svd(false, false).singular_values.min();
        zeros.push(ZeroRecord {
            point: res.x,
            jacobian_sign: if det > 0.0 { 1 } else if det < 0.0 { -1 } else { 0 },
            scaled_det: det,
            regularity: sigma_min * region_scale / field_scale.max(f64::MIN_POSITIVE),
            residual: res.residual,
        });
    }
    zeros.sort_by(|a, b| a.point.partial_cmp(&b.point).unwrap_or(std::cmp::Ordering::Equal));
    Ok(zeros)
}

/// Degree by the endpoint sign change of a scalar field.
pub fn winding_1d(field: &mut FieldFn, lo: f64, hi: f64) -> Result<(i32, f64)> {
    let a = field(&[lo])?[0];
    let b = field(&[hi])?[0];
    let sgn = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    Ok(((sgn(b) - sgn(a)) / 2, a.abs().min(b.abs())))
}

/// Winding number of a planar field along the counter-clockwise boundary of a box.
pub fn winding_2d(field: &mut FieldFn, lo: &[f64], hi: &[f64]) -> Result<(i32, f64)> {
    let corners = [
        [lo[0], lo[1]],
        [hi[0], lo[1]],
        [hi[0], hi[1]],
        [lo[0], hi[1]],
    ];
    let mut margin = f64::INFINITY;
    let mut turn = 0.0;
    let mut eval = |p: [f64; 2]| -> Result<[f64; 2]> {
        let v = field(&p)?;
        Ok([v[0], v[1]])
    };
    for e in 0..4 {
        let (p, q) = (corners[e], corners[(e + 1) % 4]);
        let pieces = 64;
        let point = |s: f64| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
        let mut stack: Vec<(f64, f64, [f64; 2], [f64; 2], u32)> = Vec::new();
        let mut prev = eval(point(0.0))?;
        margin = margin.min(prev[0].hypot(prev[1]));
        for i in 0..pieces {
            let (s0, s1) = (i as f64 / pieces as f64, (i + 1) as f64 / pieces as f64);
            let next = eval(point(s1))?;
            margin = margin.min(next[0].hypot(next[1]));
            stack.push((s0, s1, prev, next, 0));
            while let Some((a, b, fa, fb, depth)) = stack.pop() {
                let d = angle_between(fa, fb);
                if d.abs() > 0.25 && depth < 40 {
                    let m = 0.5 * (a + b);
                    let fm = eval(point(m))?;
                    margin = margin.min(fm[0].hypot(fm[1]));
                    // push the right half first so the left half is processed first
                    stack.push((m, b, fm, fb, depth + 1));
                    stack.push((a, m, fa, fm, depth + 1));
                } else {
                    turn += d;
                }
            }
            prev = next;
        }
    }
    let k = (turn / (2.0 * PI)).round();
    if (turn - 2.0 * PI * k).abs() > 1e-3 {
        return Err(LabError::BoundaryMargin(format!(
            "winding total {turn} not within 1e-3 of a multiple of 2π"
        )));
    }
    Ok((k as i32, margin))
}

fn angle_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

/// Brouwer degree of `field` on `region`.
pub fn brouwer_degree(field: &mut FieldFn, region: &Region, opts: &DegreeOptions) -> Result<DegreeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples = region.boundary_samples(&mut rng, opts.boundary_per_face);
    let (margin, field_scale) = boundary_margin(field, &samples)?;
    let mut notes = Vec::new();
    if margin <= opts.boundary_tol {
        notes.push(format!("field nearly vanishes on the boundary (margin {margin:e})"));
    }
    let bounds = region.box_bounds();
    let low_dim_box = bounds.is_some() && region.dim <= 2;
    let run_winding = |field: &mut FieldFn, notes: &mut Vec<String>| -> Result<DegreeReport> {
        let (lo, hi) = bounds.clone().unwrap();
        let (deg, m, method) = if region.dim == 1 {
            let (d, m) = winding_1d(field, lo[0], hi[0])?;
            (d, m, DegreeMethod::Winding1d)
        } else {
            let (d, m) = winding_2d(field, &lo, &hi)?;
            (d, m, DegreeMethod::Winding2d)
        };
        let m = m.min(margin);
        Ok(DegreeReport {
            degree: deg,
            zeros: vec![],
            boundary_margin: m,
            method,
            trusted: m > opts.boundary_tol,
            truncation_stable: None,
            notes: notes.clone(),
        })
    };
    match opts.force {
        Some(DegreeMethod::Winding1d) | Some(DegreeMethod::Winding2d) => {
            if !low_dim_box {
                return Err(invalid("winding methods need a box in one or two dimensions"));
            }
            return run_winding(field, &mut notes);
        }
        _ => {}
    }
    if opts.allow_linear_spectral && opts.force != Some(DegreeMethod::RegularSum) {
        if let Some(jac) = looks_linear(field, region, &mut rng)? {
            let det = scaled_det(&jac);
            let inside = region.contains(&vec![0.0; region.dim]);
            let degree = if !inside || det == 0.0 { 0 } else if det > 0.0 { 1 } else { -1 };
            let zeros = if inside {
                vec![ZeroRecord {
                    point: vec![0.0; region.dim],
                    jacobian_sign: degree,
                    scaled_det: det,
                    regularity: det.abs(),
                    residual: 0.0,
                }]
            } else {
                vec![]
            };
            return Ok(DegreeReport {
                degree,
                zeros,
                boundary_margin: margin,
                method: DegreeMethod::LinearSpectral,
                trusted: margin > opts.boundary_tol && det.abs() > opts.regular_margin,
                truncation_stable: None,
                notes,
            });
        }
    }
    let zeros = enumerate_zeros(field, region, opts, field_scale, &mut rng)?;
    let degenerate = zeros.iter().any(|z| z.regularity <= opts.regular_margin);
    let near_boundary = zeros.iter().any(|z| region.depth(&z.point) < 1e-6);
    if degenerate && low_dim_box {
        notes.push("degenerate zero: falling back to winding number".into());
        let mut r = run_winding(field, &mut notes)?;
        r.zeros = zeros;
        return Ok(r);
    }
    if degenerate {
        notes.push("degenerate zero and no winding fallback in this dimension".into());
    }
    if near_boundary {
        notes.push("zero within 1e-6 of the boundary".into());
    }
    let degree = zeros.iter().map(|z| z.jacobian_sign).sum();
    Ok(DegreeReport {
        degree,
        trusted: margin > opts.boundary_tol && !degenerate && !near_boundary,
        zeros,
        boundary_margin: margin,
        method: DegreeMethod::RegularSum,
        truncation_stable: None,
        notes,
    })
}

fn resolvent_coeffs(problem: &ProblemSpec, lambda: f64) -> Result<Vec<[[f64; 2]; 2]>> {
    (1..=problem.modes())
        .map(|k| match problem.linear_block(k)? {
            LinearBlock::Scalar(l) => {
                if lambda - l == 0.0 {
                    return Err(invalid(format!("λ = {lambda} is an eigenvalue of A")));
                }
                Ok([[1.0 / (lambda - l), 0.0], [0.0, 0.0]])
            }
            LinearBlock::Pair(m) => {
                // (λI − M)^{-1} for M = [[0, 1], [−κ, −γ]]
                let (kappa, gamma) = (-m[1][0], -m[1][1]);
                let det = lambda * (lambda + gamma) + kappa;
                if det == 0.0 {
                    return Err(invalid(format!("λ = {lambda} is an eigenvalue of mode {k}")));
                }
                Ok([[(lambda + gamma) / det, 1.0 / det], [-kappa / det, lambda / det]])
            }
        })
        .collect()
}

/// `x ↦ x − (λI − A)^{-1}(λx + F̂(x))` on flattened coordinates.
pub fn semilinear_field(problem: &ProblemSpec, lambda: f64) -> Result<impl Fn(&[f64]) -> Vec<f64> + '_> {
    if !(lambda > 0.0) {
        return Err(invalid("λ_res must be positive"));
    }
    let avg = problem.averaged();
    let res = resolvent_coeffs(problem, lambda)?;
    let n = problem.modes();
    let second = problem.dim() == 2 * n;
    Ok(move |x: &[f64]| {
        // λx + F̂(x) = (λ − A)x + (Ax + F̂(x)), so the map is −(λ − A)^{-1}(Ax + F̂(x))
        let g = avg.stationary_field(x);
        let mut out = vec![0.0; x.len()];
        for k in 0..n {
            let r = &res[k];
            if second {
                out[k] = -(r[0][0] * g[k] + r[0][1] * g[n + k]);
                out[n + k] = -(r[1][0] * g[k] + r[1][1] * g[n + k]);
            } else {
                out[k] = -r[0][0] * g[k];
            }
        }
        out
    })
}

pub fn natural_ball(problem: &ProblemSpec, center: Option<&State>, radius: f64) -> Result<Region> {
    let c = match center {
        Some(s) => {
            s.check(problem.basis(), problem.order())?;
            s.to_vector().iter().copied().collect()
        }
        None => vec![0.0; problem.dim()],
    };
    Region::ball(c, radius, problem.basis().natural_weights(problem.order()))
}

/// Degree of the semilinear pair `(A, F̂)` on the natural-norm ball of the given
/// radius, with the `N → 2N` stability check.
pub fn semilinear_degree(problem: &ProblemSpec, radius: f64, lambda: f64) -> Result<DegreeReport> {
    semilinear_degree_with(problem, None, radius, lambda, true, &DegreeOptions::default())
}

pub fn semilinear_degree_with(
    problem: &ProblemSpec,
    center: Option<&State>,
    radius: f64,
    lambda: f64,
    doubling: bool,
    opts: &DegreeOptions,
) -> Result<DegreeReport> {
    let region = natural_ball(problem, center, radius)?;
    let f = semilinear_field(problem, lambda)?;
    let mut field = |x: &[f64]| Ok(f(x));
    let mut report = brouwer_degree(&mut field, &region, opts)?;
    if doubling {
        let fine = problem.with_modes(2 * problem.modes())?;
        let fine_center = center.map(|s| pad_state(s, fine.modes()));
        let r2 = semilinear_degree_with(&fine, fine_center.as_ref(), radius, lambda, false, opts)?;
        let stable = r2.degree == report.degree;
        if !stable {
            report.notes.push(format!("degree {} at N = {}", r2.degree, fine.modes()));
        }
        report.truncation_stable = Some(stable);
    }
    Ok(report)
}

pub fn pad_state(s: &State, modes: usize) -> State {
    let mut u = s.u.clone();
    u.resize(modes, 0.0);
    match &s.v {
        None => State::first(u),
        Some(v) => {
            let mut v = v.clone();
            v.resize(modes, 0.0);
            State::second(u, v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrasnoselskiiEntry {
    pub t: f64,
    pub index: Option<i32>,
    pub agrees: bool,
    pub boundary_margin: f64,
    pub trusted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrasnoselskiiReport {
    pub degree: i32,
    pub degree_report: DegreeReport,
    pub entries: Vec<KrasnoselskiiEntry>,
    /// Largest `t` at which the index agrees with the degree.
    pub largest_agreeing_t: Option<f64>,
    pub all_agree: bool,
}

/// Index of `Φ_t` on a ball for each small `t`, compared with the semilinear degree.
pub fn krasnoselskii_check(
    problem: &ProblemSpec,
    center: Option<&State>,
    radius: f64,
    t_list: &[f64],
    opts: &DegreeOptions,
) -> Result<KrasnoselskiiReport> {
    if !problem.is_autonomous() {
        return Err(LabError::Precondition("the small-time check needs an autonomous problem".into()));
    }
    let degree_report = semilinear_degree_with(problem, center, radius, 1.0, false, opts)?;
    if degree_report.boundary_margin <= opts.boundary_tol {
        return Err(LabError::BoundaryMargin(format!(
            "A + F̂ nearly vanishes on the sphere (margin {:e})",
            degree_report.boundary_margin
        )));
    }
    let region = natural_ball(problem, center, radius)?;
    let order = problem.order();
    let n = problem.modes();
    let mut entries = Vec::new();
    for &t in t_list {
        // x − Φ_t(x) is O(t); rescaling by 1/t keeps Newton tolerances meaningful
        let mut field = |x: &[f64]| -> Result<Vec<f64>> {
            let s = State::from_slice(order, n, x);
            let y = translate(problem, &s, t)?;
            Ok(x.iter().zip(y.to_vector().iter()).map(|(a, b)| (a - b) / t).collect())
        };
        let entry = match brouwer_degree(&mut field, &region, opts) {
            Ok(r) => KrasnoselskiiEntry {
                t,
                index: Some(r.degree),
                agrees: r.degree == degree_report.degree && r.trusted,
                boundary_margin: r.boundary_margin,
                trusted: r.trusted,
                failure: None,
            },
            Err(e) => KrasnoselskiiEntry {
                t,
                index: None,
                agrees: false,
                boundary_margin: 0.0,
                trusted: false,
                failure: Some(e.to_string()),
            },
        };
        entries.push(entry);
    }
    let largest_agreeing_t = entries
        .iter()
        .filter(|e| e.agrees)
        .map(|e| e.t)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    let all_agree = entries.iter().all(|e| e.agrees);
    Ok(KrasnoselskiiReport {
        degree: degree_report.degree,
        degree_report,
        entries,
        largest_agreeing_t,
        all_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Nonlinearity, NonlinearitySpec, StateLaw};
    use crate::problem::BeamParams;
    use crate::spectral::{BoundaryKind, SpectralBasis};

    fn deg(f: impl Fn(&[f64]) -> Vec<f64>, region: &Region) -> DegreeReport {
        let mut field = |x: &[f64]| Ok(f(x));
        brouwer_degree(&mut field, region, &DegreeOptions::default()).unwrap()
    }

    fn no_linear() -> DegreeOptions {
        DegreeOptions { allow_linear_spectral: false, ..Default::default() }
    }

    #[test]
    fn identity_and_reflection() {
        for n in 1..=4 {
            let r = deg(|x| x.to_vec(), &Region::symmetric_cube(n, 1.0).unwrap());
            assert_eq!(r.degree, 1);
            assert!(r.trusted);
        }
        let r = deg(|x| vec![x[0], -x[1]], &Region::symmetric_cube(2, 1.0).unwrap());
        assert_eq!(r.degree, -1);
        let mut f = |x: &[f64]| Ok(vec![x[0], -x[1]]);
        let r = brouwer_degree(&mut f, &Region::symmetric_cube(2, 1.0).unwrap(), &no_linear()).unwrap();
        assert_eq!((r.degree, r.method), (-1, DegreeMethod::RegularSum));
    }

    #[test]
    fn complex_square_has_degree_two() {
        let r = deg(|x| vec![x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1]], &Region::symmetric_cube(2, 1.0).unwrap());
        assert_eq!(r.degree, 2);
        assert_eq!(r.method, DegreeMethod::Winding2d);
        let mut f = |x: &[f64]| Ok(vec![x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1]]);
        let (w, _) = winding_2d(&mut f, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(w, 2);
    }

    #[test]
    fn cubic_zero_in_one_dimension() {
        let r = deg(|x| vec![x[0].powi(3)], &Region::symmetric_cube(1, 1.0).unwrap());
        assert_eq!((r.degree, r.method), (1, DegreeMethod::Winding1d));
        let r = deg(|x| vec![x[0] * x[0] - 0.25], &Region::symmetric_cube(1, 1.0).unwrap());
        assert_eq!(r.degree, 0);
        assert_eq!(r.zeros.len(), 2);
    }

    #[test]
    fn zero_on_boundary_is_untrusted() {
        let r = deg(|x| vec![x[0] - 1.0, x[1]], &Region::symmetric_cube(2, 1.0).unwrap());
        assert!(!r.trusted);
    }

    #[test]
    fn homotopy_keeps_degree() {
        // from the identity to a rotated cubic perturbation, with a margin at every step
        let region = Region::symmetric_cube(2, 1.0).unwrap();
        for step in 0..=10 {
            let s = step as f64 / 10.0;
            let r = deg(
                |x| {
                    let (a, b) = (x[0] + 0.3 * x[1].powi(3), x[1] - 0.3 * x[0].powi(3));
                    vec![(1.0 - s) * x[0] + s * a, (1.0 - s) * x[1] + s * b]
                },
                &region,
            );
            assert!(r.boundary_margin > 0.1);
            assert_eq!(r.degree, 1);
        }
    }

    #[test]
    fn excision_over_a_partition() {
        let f = |x: &[f64]| vec![x[0] * x[0] - 0.25, x[1]];
        let whole = deg(f, &Region::cube(&[-1.0, -1.0], &[1.0, 1.0]).unwrap()).degree;
        let left = deg(f, &Region::cube(&[-1.0, -1.0], &[0.1, 1.0]).unwrap()).degree;
        let right = deg(f, &Region::cube(&[0.1, -1.0], &[1.0, 1.0]).unwrap()).degree;
        assert_eq!((left, right), (-1, 1));
        assert_eq!(whole, left + right);
    }

    #[test]
    fn block_products_multiply() {
        let g = |x: &[f64]| vec![x[0] * x[0] - 0.25, x[1]];
        let h = |x: &[f64]| vec![x[0], -x[1] + 0.1 * x[0] * x[0]];
        let r2 = Region::symmetric_cube(2, 1.0).unwrap();
        let left = Region::cube(&[0.1, -1.0], &[1.0, 1.0]).unwrap();
        let dg = deg(g, &left).degree;
        let dh = deg(h, &r2).degree;
        let prod = Region::cube(&[0.1, -1.0, -1.0, -1.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let both = deg(
            |x| {
                let mut a = g(&x[..2]);
                a.extend(h(&x[2..]));
                a
            },
            &prod,
        );
        assert_eq!(both.degree, dg * dh);
    }

    fn heat(slope: Option<f64>, cubic: bool, n: usize) -> ProblemSpec {
        let basis = SpectralBasis::new(BoundaryKind::DirichletSine, PI, n).unwrap();
        let nl = match (slope, cubic) {
            (Some(s), _) => NonlinearitySpec::new(StateLaw::Linear { slope: s }).compile(1.0, PI).unwrap(),
            (None, true) => NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 }).compile(1.0, PI).unwrap(),
            _ => Nonlinearity::zero(1.0),
        };
        ProblemSpec::heat(basis, nl).unwrap()
    }

    #[test]
    fn semilinear_heat_degrees() {
        let r = semilinear_degree(&heat(None, false, 8), 1.0, 1.0).unwrap();
        assert_eq!((r.degree, r.truncation_stable), (1, Some(true)));
        // f_∞ = 5 crosses μ₁ = 1 and μ₂ = 4
        let r = semilinear_degree(&heat(Some(5.0), false, 8), 1.0, 1.0).unwrap();
        assert_eq!(r.degree, 1);
        assert_eq!(r.method, DegreeMethod::LinearSpectral);
        let r = semilinear_degree(&heat(Some(3.0), false, 8), 1.0, 10.0).unwrap();
        assert_eq!(r.degree, -1);
        let r = semilinear_degree(&heat(None, true, 6), 3.0, 1.0).unwrap();
        assert_eq!(r.degree, 1);
        assert_eq!(r.zeros.len(), 1);
        assert!(r.trusted);
    }

    #[test]
    fn semilinear_beam_degree_counts_three_equilibria() {
        let basis = SpectralBasis::new(BoundaryKind::HingedBeam, PI, 3).unwrap();
        let params = BeamParams { alpha: 0.1, beta: 0.5, sigma: 0.2, a: 1.0, b: -2.5 };
        let p = ProblemSpec::beam(basis, params, None, 1.0, 2.0 * PI).unwrap();
        let r = semilinear_degree_with(&p, None, 3.0, 1.0, false, &DegreeOptions::default()).unwrap();
        assert_eq!(r.zeros.len(), 3);
        let signs: Vec<i32> = r.zeros.iter().map(|z| z.jacobian_sign).collect();
        assert_eq!(signs, vec![1, -1, 1]);
        assert_eq!(r.degree, 1);
    }

    #[test]
    fn small_time_index_matches_degree() {
        let opts = DegreeOptions::default();
        let p = heat(Some(3.0), false, 3);
        let k = krasnoselskii_check(&p, None, 1.0, &[1e-1, 1e-2, 1e-3], &opts).unwrap();
        assert_eq!(k.degree, -1);
        assert!(k.all_agree, "{:?}", k.entries);
        let p = heat(None, true, 3);
        let k = krasnoselskii_check(&p, None, 2.0, &[1e-2], &opts).unwrap();
        assert!(k.all_agree);
    }

    #[test]
    fn product_region_validation() {
        assert!(Region::product(2, vec![Component::Interval { coord: 0, lo: -1.0, hi: 1.0 }]).is_err());
        let r = Region::product(
            3,
            vec![
                Component::Interval { coord: 0, lo: -1.0, hi: 1.0 },
                Component::Ball { coords: vec![1, 2], center: vec![0.0, 0.0], radius: 2.0, weights_sq: vec![1.0, 4.0] },
            ],
        )
        .unwrap();
        assert!(r.contains(&[0.5, 1.0, 0.5]));
        assert!(!r.contains(&[0.5, 0.0, 1.1]));
        let d = deg(|x| vec![x[0], x[1], -x[2]], &r);
        assert_eq!(d.degree, -1);
    }
}
