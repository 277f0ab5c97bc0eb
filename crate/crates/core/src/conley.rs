//! Box isolating blocks: face classification, Euler characteristics of the exit
//! set, and the three-way identity `deg(−f) = χ(B) − χ(B⁻) = ind(π_t)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::degree::{brouwer_degree, krasnoselskii_check, DegreeOptions, Region};
use crate::error::{invalid, LabError, Result};
use crate::problem::{ProblemSpec, Variant};

pub const TRANSVERSALITY_MARGIN: f64 = 1e-8;

pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A vector field given by name or by a polynomial table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `−x` in `dim` dimensions.
    Attractor { dim: usize },
    /// `(x, −y)`
    Saddle,
    /// `(x, y, −z)`
    Saddle3,
    /// `(−y, x)`
    Rotation,
    /// Component `i` is `Σ c·Π x_j^{e_j}` over `terms[i]`.
    Polynomial { dim: usize, terms: Vec<Vec<Monomial>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

impl FieldSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Attractor { dim } | Self::Polynomial { dim, .. } => *dim,
            Self::Saddle | Self::Rotation => 2,
            Self::Saddle3 => 3,
        }
    }

    pub fn build(&self) -> Result<VectorField> {
        Ok(match self.clone() {
            Self::Attractor { dim } => {
                if dim == 0 {
                    return Err(invalid("field dimension must be positive"));
                }
                Arc::new(|x: &[f64]| x.iter().map(|v| -v).collect())
            }
            Self::Saddle => Arc::new(|x: &[f64]| vec![x[0], -x[1]]),
            Self::Saddle3 => Arc::new(|x: &[f64]| vec![x[0], x[1], -x[2]]),
            Self::Rotation => Arc::new(|x: &[f64]| vec![-x[1], x[0]]),
            Self::Polynomial { dim, terms } => {
                if dim == 0 || terms.len() != dim {
                    return Err(invalid(format!("polynomial field needs {dim} components")));
                }
                if terms.iter().flatten().any(|m| m.exponents.len() != dim) {
                    return Err(invalid(format!("every monomial needs {dim} exponents")));
                }
                Arc::new(move |x: &[f64]| {
                    terms
                        .iter()
                        .map(|comp| {
                            comp.iter()
                                .map(|m| m.coef * x.iter().zip(&m.exponents).map(|(v, e)| v.powi(*e as i32)).product::<f64>())
                                .sum()
                        })
                        .collect()
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceLabel {
    Egress,
    Ingress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBlock {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `labels[i] = [face x_i = lo_i, face x_i = hi_i]`
    pub labels: Vec<[FaceLabel; 2]>,
    pub sample_density: usize,
}

impl BoxBlock {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_egress(&self, coord: usize, upper: bool) -> bool {
        self.labels[coord][upper as usize] == FaceLabel::Egress
    }

    pub fn egress_count(&self) -> usize {
        self.labels.iter().flatten().filter(|l| **l == FaceLabel::Egress).count()
    }
}

fn face_points(lo: &[f64], hi: &[f64], coord: usize, upper: bool, density: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let free: Vec<usize> = (0..n).filter(|&i| i != coord).collect();
    let k = density.max(2);
    let count = k.pow(free.len() as u32);
    (0..count)
        .map(|idx| {
            let mut x = vec![0.0; n];
            x[coord] = if upper { hi[coord] } else { lo[coord] };
            let mut rem = idx;
            for &i in &free {
                let l = rem % k;
                rem /= k;
                x[i] = lo[i] + (hi[i] - lo[i]) * l as f64 / (k - 1) as f64;
            }
            x
        })
        .collect()
}

fn face_name(coord: usize, upper: bool) -> String {
    format!("x{} = {}", coord + 1, if upper { "hi" } else { "lo" })
}

/// Label each face by the sign of the outward normal component at `density`
/// samples per free coordinate.
pub fn classify_faces(field: &dyn Fn(&[f64]) -> Vec<f64>, lo: &[f64], hi: &[f64], density: usize) -> Result<BoxBlock> {
    if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(invalid("box needs lo < hi in every coordinate"));
    }
    let n = lo.len();
    let mut labels = Vec::with_capacity(n);
    for coord in 0..n {
        let mut pair = [FaceLabel::Ingress; 2];
        for upper in [false, true] {
            let sign = if upper { 1.0 } else { -1.0 };
            let mut label = None;
            for x in face_points(lo, hi, coord, upper, density) {
                let v = field(&x);
                if v.len() != n || !v[coord].is_finite() {
                    return Err(invalid(format!("field is not a finite {n}-vector at {x:?}")));
                }
                let out = sign * v[coord];
                let here = if out > TRANSVERSALITY_MARGIN {
                    FaceLabel::Egress
                } else if out < -TRANSVERSALITY_MARGIN {
                    FaceLabel::Ingress
                } else {
                    return Err(LabError::BlockRejected(format!(
                        "face {} is tangent at {x:?} (outward component {out:e})",
                        face_name(coord, upper)
                    )));
                };
                match label {
                    None => label = Some(here),
                    Some(l) if l != here => {
                        return Err(LabError::BlockRejected(format!(
                            "face {} is mixed: {:?} elsewhere, {:?} at {x:?}",
                            face_name(coord, upper),
                            l,
                            here
                        )))
                    }
                    _ => {}
                }
            }
            pair[upper as usize] = label.unwrap();
        }
        labels.push(pair);
    }
    Ok(BoxBlock { lo: lo.to_vec(), hi: hi.to_vec(), labels, sample_density: density })
}

/// `χ(B⁻)` by counting the cells of the boundary complex that lie in a closed egress face.
pub fn euler_exit_set(block: &BoxBlock) -> i64 {
    let n = block.dim();
    let mut chi = 0i64;
    // each coordinate of a cell is fixed low (0), fixed high (1) or free (2)
    for idx in 0..3usize.pow(n as u32) {
        let mut rem = idx;
        let mut free = 0;
        let mut inside = false;
        let mut fixed = false;
        for coord in 0..n {
            match rem % 3 {
                2 => free += 1,
                side => {
                    fixed = true;
                    inside |= block.is_egress(coord, side == 1);
                }
            }
            rem /= 3;
        }
        if fixed && inside {
            chi += if free % 2 == 0 { 1 } else { -1 };
        }
    }
    chi
}

/// `χ(B⁻)` by inclusion–exclusion over intersections of egress faces, each
/// either empty (opposite faces) or a contractible sub-box.
pub fn euler_exit_set_inclusion_exclusion(block: &BoxBlock) -> i64 {
    let faces: Vec<(usize, bool)> = (0..block.dim())
        .flat_map(|c| [(c, false), (c, true)])
        .filter(|&(c, u)| block.is_egress(c, u))
        .collect();
    let mut chi = 0i64;
    for mask in 1u64..(1u64 << faces.len()) {
        let chosen: Vec<(usize, bool)> = (0..faces.len()).filter(|i| mask >> i & 1 == 1).map(|i| faces[i]).collect();
        let disjoint = chosen.iter().any(|(c, u)| chosen.iter().any(|(c2, u2)| c == c2 && u != u2));
        if !disjoint {
            chi += if chosen.len() % 2 == 1 { 1 } else { -1 };
        }
    }
    chi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub chi_b: i64,
    pub chi_bminus: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deg_minus_f: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index_pi_t: Option<i32>,
    pub t_used: f64,
    /// Absent when a component could not be computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agree: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<BoxBlock>,
    pub notes: Vec<String>,
}

impl BlockReport {
    fn finish(mut self) -> Self {
        let euler = self.chi_b - self.chi_bminus;
        self.agree = match (self.deg_minus_f, self.index_pi_t) {
            (Some(d), Some(i)) => Some(d as i64 == euler && i as i64 == euler),
            _ => None,
        };
        self
    }
}

/// Time-`t` flow map by classical RK4 with `steps` steps.
pub fn flow_map(field: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let h = t / steps as f64;
    let mut y = x.to_vec();
    let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for _ in 0..steps {
        let k1 = field(&y);
        let k2 = field(&axpy(&y, 0.5 * h, &k1));
        let k3 = field(&axpy(&y, 0.5 * h, &k2));
        let k4 = field(&axpy(&y, h, &k3));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

pub const FLOW_STEPS: usize = 64;

/// Three independent integers for the block: `deg(−f)`, `χ(B) − χ(B⁻)` and the index of `π_t`.
pub fn poincare_hopf_check(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    t: f64,
    density: usize,
) -> Result<BlockReport> {
    if !(t > 0.0) {
        return Err(invalid("t must be positive"));
    }
    let block = classify_faces(field, lo, hi, density)?;
    let region = Region::cube(lo, hi)?;
    let opts = DegreeOptions::default();
    let mut notes = Vec::new();
    let mut minus_f = |x: &[f64]| Ok(field(x).into_iter().map(|v| -v).collect());
    let deg_minus_f = match brouwer_degree(&mut minus_f, &region, &opts) {
        Ok(r) if r.trusted => Some(r.degree),
        Ok(r) => {
            notes.push(format!("deg(−f) untrusted: {}", r.notes.join("; ")));
            None
        }
        Err(e) => {
            notes.push(format!("deg(−f) failed: {e}"));
            None
        }
    };
    // (x − π_t x)/t has the index's sign and an O(1) size
    let mut shift = |x: &[f64]| {
        let y = flow_map(field, x, t, FLOW_STEPS);
        Ok(x.iter().zip(&y).map(|(a, b)| (a - b) / t).collect())
    };
    let index_pi_t = match brouwer_degree(&mut shift, &region, &opts) {
        Ok(r) if r.trusted => Some(r.degree),
        Ok(r) => {
            notes.push(format!("ind(π_t) untrusted: {}", r.notes.join("; ")));
            None
        }
        Err(e) => {
            notes.push(format!("ind(π_t) failed: {e}"));
            None
        }
    };
    let chi_bminus = euler_exit_set(&block);
    Ok(BlockReport {
        chi_b: 1,
        chi_bminus,
        deg_minus_f,
        index_pi_t,
        t_used: t,
        agree: None,
        block: Some(block),
        notes,
    }
    .finish())
}

/// Ball block for a dissipative heat problem, where `B⁻ = ∅`.
pub fn semiflow_block_check(problem: &ProblemSpec, radius: f64, t: f64) -> Result<BlockReport> {
    if !matches!(problem.variant(), Variant::Heat | Variant::ConstrainedHeat) {
        return Err(LabError::Precondition(format!(
            "semiflow blocks are checked on heat variants, not {}",
            problem.variant().name()
        )));
    }
    if !problem.is_autonomous() {
        return Err(LabError::Precondition("semiflow block needs an autonomous problem".into()));
    }
    if !(radius > 0.0 && t > 0.0) {
        return Err(invalid("radius and t must be positive"));
    }
    // d/dt |x|²/2 = ⟨x, Ax + F(x)⟩ must be negative on the sphere
    let n = problem.dim();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [radius, -radius] {
            let mut x = vec![0.0; n];
            x[i] = s;
            samples.push(x);
        }
    }
    {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..64 {
            let v: Vec<f64> = (0..n).map(|_| crate::degree::gaussian(&mut rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            samples.push(v.into_iter().map(|a| radius * a / norm).collect());
        }
    }
    for x in &samples {
        let g = problem.stationary_field(x);
        let outward: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / radius;
        if outward >= -TRANSVERSALITY_MARGIN {
            return Err(LabError::BlockRejected(format!(
                "ball of radius {radius} is not forward-invariant: outward component {outward:e} at {x:?}"
            )));
        }
    }
    let opts = DegreeOptions::default();
    let k = krasnoselskii_check(problem, None, radius, &[t], &opts)?;
    let mut notes = Vec::new();
    let deg = if k.degree_report.trusted {
        Some(k.degree)
    } else {
        notes.push("semilinear degree untrusted".into());
        None
    };
    let entry = &k.entries[0];
    let index = if entry.trusted { entry.index } else { None };
    if let Some(f) = &entry.failure {
        notes.push(format!("ind(Φ_t) failed: {f}"));
    }
    Ok(BlockReport {
        chi_b: 1,
        chi_bminus: 0,
        deg_minus_f: deg,
        index_pi_t: index,
        t_used: t,
        agree: None,
        block: None,
        notes,
    }
    .finish())
}
