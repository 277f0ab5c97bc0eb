//! `exp` and `φ₁` of scalars and real 2×2 blocks.
//!
//! A 2×2 matrix `M` is written `sI + N` with `s = tr M / 2` and `N² = qI`,
//! so any analytic `g` gives `g(M) = a·I + b·N` with `a, b` read off the two
//! eigenvalues `s ± √q`. Near the defective case the divided difference is
//! replaced by its Taylor expansion in `q`.

use num_complex::Complex64;

pub type Mat2 = [[f64; 2]; 2];

/// Below this value of `τ·√|q|` the Taylor branch is used.
pub const TAYLOR_GAP: f64 = 1e-3;

pub fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `φ_k(x) = Σ xⁿ/(n+k)!`
pub fn phi_k(k: usize, x: f64) -> f64 {
    if x.abs() < 1.0 {
        let mut term = 1.0 / factorial(k);
        let mut acc = term;
        for n in 1..40 {
            term *= x / (n + k) as f64;
            acc += term;
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        let mut p = x.exp();
        for j in 0..k {
            p = (p - 1.0 / factorial(j)) / x;
        }
        p
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn phi1_c(z: Complex64) -> Complex64 {
    if z.norm() < 1.0 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = term;
        for n in 1..30 {
            term = term * z / (n + 1) as f64;
            acc += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        acc
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `sinh(x)/x`
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// `sin(x)/x`
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

fn decompose(m: &Mat2) -> (f64, f64, Mat2) {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let d = 0.5 * (m[0][0] - m[1][1]);
    let q = d * d + m[0][1] * m[1][0];
    let n = [[m[0][0] - s, m[0][1]], [m[1][0], m[1][1] - s]];
    (s, q, n)
}

fn combine(a: f64, b: f64, n: &Mat2) -> Mat2 {
    [
        [a + b * n[0][0], b * n[0][1]],
        [b * n[1][0], a + b * n[1][1]],
    ]
}

/// `exp(τM)`
pub fn expm2(m: &Mat2, tau: f64) -> Mat2 {
    let (s, q, n) = decompose(m);
    let (a, b) = if q >= 0.0 {
        let d = q.sqrt();
        let x = tau * d;
        if x < 1.0 {
            let e = (tau * s).exp();
            (e * x.cosh(), e * tau * sinhc(x))
        } else {
            // split to avoid overflow of cosh for stiff overdamped modes
            let ep = (tau * (s + d)).exp();
            let em = (tau * (s - d)).exp();
            (0.5 * (ep + em), (ep - em) / (2.0 * d))
        }
    } else {
        let w = (-q).sqrt();
        let e = (tau * s).exp();
        (e * (tau * w).cos(), e * tau * sinc(tau * w))
    };
    combine(a, b, &n)
}

/// `τ·φ₁(τM)`, the Duhamel weight of a constant forcing over a step `τ`.
pub fn phi1m2(m: &Mat2, tau: f64) -> Mat2 {
    let (s, q, n) = decompose(m);
    let gap = tau * q.abs().sqrt();
    let (a, b) = if gap < TAYLOR_GAP {
        // derivatives of g(z) = φ₁(τz) through Dφ_k = φ_k − kφ_{k+1}
        let x = tau * s;
        let p: Vec<f64> = (1..=4).map(|k| phi_k(k, x)).collect();
        let g0 = p[0];
        let g1 = tau * (p[0] - p[1]);
        let g2 = tau * tau * (p[0] - 2.0 * p[1] + 2.0 * p[2]);
        let g3 = tau * tau * tau * (p[0] - 3.0 * p[1] + 6.0 * p[2] - 6.0 * p[3]);
        (g0 + g2 * q / 2.0, g1 + g3 * q / 6.0)
    } else if q > 0.0 {
        let d = q.sqrt();
        let gp = phi1(tau * (s + d));
        let gm = phi1(tau * (s - d));
        (0.5 * (gp + gm), (gp - gm) / (2.0 * d))
    } else {
        let w = (-q).sqrt();
        let g = phi1_c(Complex64::new(tau * s, tau * w));
        (g.re, g.im / w)
    };
    let r = combine(a, b, &n);
    [[tau * r[0][0], tau * r[0][1]], [tau * r[1][0], tau * r[1][1]]]
}

#[inline]
pub fn apply2(m: &Mat2, x: f64, y: f64) -> (f64, f64) {
    (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::Mat2;

    /// Dense `exp` by scaling and squaring of a Taylor series, independent of the
    /// closed forms above. Works on any square matrix stored row-major.
    pub fn expm_dense(a: &[f64], n: usize) -> Vec<f64> {
        let norm = a.iter().fold(0.0f64, |m, x| m.max(x.abs())) * n as f64;
        let mut j = 0;
        while norm / 2f64.powi(j) > 0.25 {
            j += 1;
        }
        let scale = 2f64.powi(j);
        let b: Vec<f64> = a.iter().map(|x| x / scale).collect();
        let mut result = identity(n);
        let mut term = identity(n);
        for k in 1..30 {
            term = matmul(&term, &b, n);
            term.iter_mut().for_each(|x| *x /= k as f64);
            result.iter_mut().zip(&term).for_each(|(r, t)| *r += t);
        }
        for _ in 0..j {
            result = matmul(&result, &result, n);
        }
        result
    }

    pub fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    c[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        c
    }

    /// `τφ₁(τM)` from the augmented exponential `exp([[τM, τI],[0, 0]])`.
    pub fn phi1_dense(m: &Mat2, tau: f64) -> Mat2 {
        let mut aug = vec![0.0; 16];
        for i in 0..2 {
            for j in 0..2 {
                aug[i * 4 + j] = tau * m[i][j];
            }
            aug[i * 4 + 2 + i] = tau;
        }
        let e = expm_dense(&aug, 4);
        [[e[2], e[3]], [e[6], e[7]]]
    }

    pub fn exp_dense(m: &Mat2, tau: f64) -> Mat2 {
        let a = [tau * m[0][0], tau * m[0][1], tau * m[1][0], tau * m[1][1]];
        let e = expm_dense(&a, 2);
        [[e[0], e[1]], [e[2], e[3]]]
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        let scale = 1.0 + b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn blocks_against_dense_oracle() {
        let cases: &[(f64, f64, f64)] = &[
            // (mu, beta, tau): complex, critical, overdamped, kernel, near-critical
            (1.0, 0.5, 1.0),
            (1.0, 2.0, 1.0),
            (4.0, 5.0, 0.3),
            (0.0, 0.7, 2.0),
            (1.0, 2.0 + 1e-9, 0.01),
            (1.0, 2.0 - 1e-5, 0.1),
            (-3.0, 0.5, 0.8),
            (256.0, 0.1, 1e-3),
        ];
        for &(mu, beta, tau) in cases {
            let m = [[0.0, 1.0], [-mu, -beta]];
            assert!(close(&expm2(&m, tau), &exp_dense(&m, tau), 1e-12), "exp {mu} {beta} {tau}");
            assert!(close(&phi1m2(&m, tau), &phi1_dense(&m, tau), 1e-12), "phi1 {mu} {beta} {tau}");
        }
    }

    #[test]
    fn stiff_overdamped_block_is_finite() {
        // beam-like mode: λ = 10⁶, strong damping α = 0.1
        let l = 1e6;
        let m = [[0.0, 1.0], [-l, -0.1 * l - 0.1]];
        let e = expm2(&m, 0.05);
        let p = phi1m2(&m, 0.05);
        assert!(e.iter().flatten().chain(p.iter().flatten()).all(|x| x.is_finite()));
        // u(t) = (r₂e^{r₁t} − r₁e^{r₂t})/(r₂ − r₁) with the fast term negligible
        let g = 0.1 * l + 0.1;
        let disc = (g * g - 4.0 * l).sqrt();
        let slow = -2.0 * l / (g + disc);
        let fast = -(g + disc) / 2.0;
        let expected = fast * (slow * 0.05).exp() / (fast - slow);
        assert!((e[0][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn phi_functions() {
        for x in [-30.0, -2.0, -0.5, 0.0, 1e-8, 0.7, 3.0] {
            assert!((phi_k(1, x) - phi1(x)).abs() < 1e-14 * (1.0 + phi1(x).abs()));
            let direct = if x == 0.0 { 0.5 } else { (x.exp() - 1.0 - x) / (x * x) };
            if x.abs() > 1e-3 {
                assert!((phi_k(2, x) - direct).abs() < 1e-10);
            }
        }
    }
}
