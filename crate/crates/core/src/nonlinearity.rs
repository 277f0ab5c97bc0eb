//! Scalar nonlinearities `f(t, x, s)` and their JSON catalog.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::CompositeRule;

pub type ScalarRule = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `lim f(t,x,s)/s` as `|s| → ∞`.
#[derive(Clone)]
pub enum AsymptoticSlope {
    Constant(f64),
    Periodic(TimeFn),
}

impl AsymptoticSlope {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            AsymptoticSlope::Constant(c) => *c,
            AsymptoticSlope::Periodic(f) => f(t),
        }
    }
}

/// One-sided limits of `f` in `s`, each a function of `(t, x)`.
#[derive(Clone)]
pub struct LimitData {
    /// `liminf_{s→+∞} f`
    pub liminf_plus: SpaceTimeFn,
    /// `limsup_{s→+∞} f`
    pub limsup_plus: SpaceTimeFn,
    /// `liminf_{s→−∞} f`
    pub liminf_minus: SpaceTimeFn,
    /// `limsup_{s→−∞} f`
    pub limsup_minus: SpaceTimeFn,
}

impl LimitData {
    /// Limits that exist (liminf = limsup on each side).
    pub fn exact(plus: SpaceTimeFn, minus: SpaceTimeFn) -> Self {
        Self {
            liminf_plus: plus.clone(),
            limsup_plus: plus,
            liminf_minus: minus.clone(),
            limsup_minus: minus,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let sc = |f: &SpaceTimeFn| -> SpaceTimeFn {
            let f = f.clone();
            Arc::new(move |t, x| c * f(t, x))
        };
        if c >= 0.0 {
            Self {
                liminf_plus: sc(&self.liminf_plus),
                limsup_plus: sc(&self.limsup_plus),
                liminf_minus: sc(&self.liminf_minus),
                limsup_minus: sc(&self.limsup_minus),
            }
        } else {
            Self {
                liminf_plus: sc(&self.limsup_plus),
                limsup_plus: sc(&self.liminf_plus),
                liminf_minus: sc(&self.limsup_minus),
                limsup_minus: sc(&self.liminf_minus),
            }
        }
    }
}

/// A Nemytskii-type nonlinearity. `rule` must be pure and reentrant.
#[derive(Clone)]
pub struct Nonlinearity {
    rule: ScalarRule,
    period: f64,
    lipschitz_bound: f64,
    asymptotic_slope: Option<AsymptoticSlope>,
    limit_data: Option<LimitData>,
    autonomous: bool,
    zero: bool,
    /// Closed-form time average, when the builder knows one.
    mean_rule: Option<ScalarRule>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("period", &self.period)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .field("autonomous", &self.autonomous)
            .field("zero", &self.zero)
            .finish_non_exhaustive()
    }
}

impl Nonlinearity {
    pub fn new(
        rule: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        period: f64,
        lipschitz_bound: f64,
    ) -> Result<Self> {
        if !(period > 0.0) {
            return Err(invalid(format!("period must be positive, got {period}")));
        }
        if !(lipschitz_bound > 0.0) {
            return Err(invalid("lipschitz bound must be positive"));
        }
        Ok(Self {
            rule: Arc::new(rule),
            period,
            lipschitz_bound,
            asymptotic_slope: None,
            limit_data: None,
            autonomous: false,
            zero: false,
            mean_rule: None,
        })
    }

    pub fn zero(period: f64) -> Self {
        Self {
            rule: Arc::new(|_, _, _| 0.0),
            period,
            lipschitz_bound: f64::MIN_POSITIVE,
            asymptotic_slope: Some(AsymptoticSlope::Constant(0.0)),
            limit_data: Some(LimitData::exact(Arc::new(|_, _| 0.0), Arc::new(|_, _| 0.0))),
            autonomous: true,
            zero: true,
            mean_rule: None,
        }
    }

    /// Supplies the exact time average `(x, s) ↦ (1/T)∫ f(t, x, s) dt`, used by
    /// [`Nonlinearity::averaged`] instead of quadrature.
    pub fn with_mean_rule(mut self, mean: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.mean_rule = Some(Arc::new(move |_, x, s| mean(x, s)));
        self
    }

    /// Declares the rule independent of `t`, which lets averaging skip quadrature.
    pub fn autonomous(mut self, yes: bool) -> Self {
        self.autonomous = yes;
        self
    }

    pub fn with_slope(mut self, slope: AsymptoticSlope) -> Self {
        self.asymptotic_slope = Some(slope);
        self
    }

    pub fn with_limits(mut self, limits: LimitData) -> Self {
        self.limit_data = Some(limits);
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, s: f64) -> f64 {
        (self.rule)(t, x, s)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn asymptotic_slope(&self) -> Option<&AsymptoticSlope> {
        self.asymptotic_slope.as_ref()
    }

    pub fn limit_data(&self) -> Option<&LimitData> {
        self.limit_data.as_ref()
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `c·f`
    pub fn scaled(&self, c: f64) -> Self {
        if c == 1.0 {
            return self.clone();
        }
        let rule = self.rule.clone();
        Self {
            rule: Arc::new(move |t, x, s| c * rule(t, x, s)),
            period: self.period,
            lipschitz_bound: (c.abs() * self.lipschitz_bound).max(f64::MIN_POSITIVE),
            asymptotic_slope: self.asymptotic_slope.as_ref().map(|a| match a {
                AsymptoticSlope::Constant(v) => AsymptoticSlope::Constant(c * v),
                AsymptoticSlope::Periodic(f) => {
                    let f = f.clone();
                    AsymptoticSlope::Periodic(Arc::new(move |t| c * f(t)))
                }
            }),
            limit_data: self.limit_data.as_ref().map(|l| l.scaled(c)),
            autonomous: self.autonomous,
            zero: self.zero || c == 0.0,
            mean_rule: self.mean_rule.as_ref().map(|m| {
                let m = m.clone();
                Arc::new(move |t, x, s| c * m(t, x, s)) as ScalarRule
            }),
        }
    }

    /// Time average over one period with the composite Gauss–Legendre rule.
    pub fn averaged(&self, refine: u32) -> Self {
        if self.autonomous {
            return self.clone();
        }
        let rule_q = CompositeRule::time_average(self.period, refine);
        let period = self.period;
        let nodes: Arc<[(f64, f64)]> = rule_q
            .nodes
            .iter()
            .zip(&rule_q.weights)
            .map(|(t, w)| (*t, w / period))
            .collect();
        let rule = self.rule.clone();
        let q = nodes.clone();
        let avg_rule: ScalarRule = match &self.mean_rule {
            Some(m) if refine == 0 => m.clone(),
            _ => Arc::new(move |_, x, s| {
                let mut acc = 0.0;
                for (t, w) in q.iter() {
                    acc += w * rule(*t, x, s);
                }
                acc
            }),
        };
        let avg_st = |f: &SpaceTimeFn| -> SpaceTimeFn {
            let f = f.clone();
            let q = nodes.clone();
            Arc::new(move |_, x| q.iter().map(|(t, w)| w * f(*t, x)).sum())
        };
        Self {
            rule: avg_rule,
            period: self.period,
            lipschitz_bound: self.lipschitz_bound,
            asymptotic_slope: self.asymptotic_slope.as_ref().map(|a| match a {
                AsymptoticSlope::Constant(v) => AsymptoticSlope::Constant(*v),
                AsymptoticSlope::Periodic(f) => {
                    AsymptoticSlope::Constant(nodes.iter().map(|(t, w)| w * f(*t)).sum())
                }
            }),
            // averaging liminf pointwise bounds the liminf of the average from below,
            // which is equality for limits that exist
            limit_data: self.limit_data.as_ref().map(|l| LimitData {
                liminf_plus: avg_st(&l.liminf_plus),
                limsup_plus: avg_st(&l.limsup_plus),
                liminf_minus: avg_st(&l.liminf_minus),
                limsup_minus: avg_st(&l.limsup_minus),
            }),
            autonomous: true,
            zero: self.zero,
            mean_rule: None,
        }
    }
}

/// `mean + cos·cos(2πn t/T) + sin·sin(2πn t/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFactor {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
    #[serde(default = "one_u32")]
    pub harmonic: u32,
}

fn one_u32() -> u32 {
    1
}

impl Default for TimeFactor {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

impl TimeFactor {
    pub const fn constant(c: f64) -> Self {
        Self {
            mean: c,
            cos: 0.0,
            sin: 0.0,
            harmonic: 1,
        }
    }

    pub const fn cosine(mean: f64, amp: f64) -> Self {
        Self {
            mean,
            cos: amp,
            sin: 0.0,
            harmonic: 1,
        }
    }

    pub const fn sine(mean: f64, amp: f64) -> Self {
        Self {
            mean,
            cos: 0.0,
            sin: amp,
            harmonic: 1,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.cos == 0.0 && self.sin == 0.0
    }

    #[inline]
    pub fn eval(&self, t: f64, period: f64) -> f64 {
        if self.is_constant() {
            return self.mean;
        }
        let w = 2.0 * PI * self.harmonic as f64 * t / period;
        self.mean + self.cos * w.cos() + self.sin * w.sin()
    }

    pub fn sup_abs(&self) -> f64 {
        self.mean.abs() + (self.cos * self.cos + self.sin * self.sin).sqrt()
    }

    /// `(1/T)∫₀^T |factor|`, by a fine midpoint sum.
    pub fn mean_abs(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|i| self.eval((i as f64 + 0.5) / n as f64, 1.0).abs())
            .sum::<f64>()
            / n as f64
    }
}

/// Spatial profile `p(x)` of a forcing term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceProfile {
    Constant,
    /// `sin(kπx/L)` (unnormalized).
    SineMode { k: usize },
    /// Piecewise-linear interpolation of `(x, value)` pairs, constant beyond the ends.
    Table { x: Vec<f64>, values: Vec<f64> },
}

impl SpaceProfile {
    fn compile(&self, length: f64) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
        Ok(match self.clone() {
            SpaceProfile::Constant => Arc::new(|_| 1.0),
            SpaceProfile::SineMode { k } => {
                if k == 0 {
                    return Err(invalid("sine_mode profile needs k ≥ 1"));
                }
                Arc::new(move |x| (k as f64 * PI * x / length).sin())
            }
            SpaceProfile::Table { x, values } => {
                let table = PiecewiseLinear::new(x, values, 0.0, 0.0)?;
                Arc::new(move |s| table.eval(s))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub amplitude: f64,
    #[serde(default)]
    pub time: TimeFactor,
    pub profile: SpaceProfile,
}

/// The `s`-dependent part of a catalog nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateLaw {
    Zero,
    Linear {
        slope: f64,
    },
    /// `coefficient·s³`
    Cubic {
        coefficient: f64,
    },
    /// `amplitude·arctan(s)`
    Arctan {
        amplitude: f64,
    },
    /// `slope·s + amplitude·arctan(s)`
    LinearPlusBounded {
        slope: f64,
        amplitude: f64,
    },
    /// Piecewise-linear through `(s, f)` with linear extrapolation at the end slopes.
    CustomTable {
        s: Vec<f64>,
        f: Vec<f64>,
    },
}

/// Range used for the local Lipschitz bound of superlinear laws.
pub const LOCAL_LIPSCHITZ_RANGE: f64 = 4.0;

impl StateLaw {
    fn compile(&self) -> Result<CompiledLaw> {
        Ok(match self.clone() {
            StateLaw::Zero => CompiledLaw {
                g: Arc::new(|_| 0.0),
                lipschitz: 0.0,
                slope: Some(0.0),
                limits: Some((0.0, 0.0)),
            },
            StateLaw::Linear { slope } => CompiledLaw {
                g: Arc::new(move |s| slope * s),
                lipschitz: slope.abs(),
                slope: Some(slope),
                limits: (slope == 0.0).then_some((0.0, 0.0)),
            },
            StateLaw::Cubic { coefficient } => CompiledLaw {
                g: Arc::new(move |s| coefficient * s * s * s),
                lipschitz: 3.0 * coefficient.abs() * LOCAL_LIPSCHITZ_RANGE * LOCAL_LIPSCHITZ_RANGE,
                slope: None,
                limits: None,
            },
            StateLaw::Arctan { amplitude } => CompiledLaw {
                g: Arc::new(move |s| amplitude * s.atan()),
                lipschitz: amplitude.abs(),
                slope: Some(0.0),
                limits: Some((amplitude * PI / 2.0, -amplitude * PI / 2.0)),
            },
            StateLaw::LinearPlusBounded { slope, amplitude } => CompiledLaw {
                g: Arc::new(move |s| slope * s + amplitude * s.atan()),
                lipschitz: slope.abs() + amplitude.abs(),
                slope: Some(slope),
                limits: (slope == 0.0)
                    .then_some((amplitude * PI / 2.0, -amplitude * PI / 2.0)),
            },
            StateLaw::CustomTable { s, f } => {
                let first = (f[1] - f[0]) / (s[1] - s[0]);
                let n = s.len();
                let last = (f[n - 1] - f[n - 2]) / (s[n - 1] - s[n - 2]);
                let table = PiecewiseLinear::new(s, f, first, last)?;
                let lipschitz = table.max_slope();
                let limits = (first == 0.0 && last == 0.0)
                    .then(|| (table.values[n - 1], table.values[0]));
                let slope = (first == last).then_some(first);
                CompiledLaw {
                    g: Arc::new(move |x| table.eval(x)),
                    lipschitz,
                    slope,
                    limits,
                }
            }
        })
    }
}

struct CompiledLaw {
    g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lipschitz: f64,
    slope: Option<f64>,
    /// limits at `s → +∞` and `s → −∞` when they exist
    limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PiecewiseLinear {
    fn new(knots: Vec<f64>, values: Vec<f64>, left_slope: f64, right_slope: f64) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(invalid("table needs at least two (x, value) pairs of equal length"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table abscissae must be strictly increasing"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("table entries must be finite"));
        }
        Ok(Self {
            knots,
            values,
            left_slope,
            right_slope,
        })
    }

    fn eval(&self, s: f64) -> f64 {
        let n = self.knots.len();
        if s <= self.knots[0] {
            return self.values[0] + self.left_slope * (s - self.knots[0]);
        }
        if s >= self.knots[n - 1] {
            return self.values[n - 1] + self.right_slope * (s - self.knots[n - 1]);
        }
        let i = self.knots.partition_point(|&k| k <= s) - 1;
        let w = (s - self.knots[i]) / (self.knots[i + 1] - self.knots[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(self.left_slope.abs().max(self.right_slope.abs()), f64::max)
    }
}

/// JSON form of `f(t,x,s) = modulation(t)·g(s) + Σ amplitude·time(t)·profile(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    #[serde(flatten)]
    pub law: StateLaw,
    #[serde(default)]
    pub modulation: TimeFactor,
    #[serde(default)]
    pub forcing: Vec<ForcingTerm>,
}

impl NonlinearitySpec {
    pub fn new(law: StateLaw) -> Self {
        Self {
            law,
            modulation: TimeFactor::default(),
            forcing: Vec::new(),
        }
    }

    pub fn modulated(mut self, m: TimeFactor) -> Self {
        self.modulation = m;
        self
    }

    pub fn forced(mut self, amplitude: f64, time: TimeFactor, profile: SpaceProfile) -> Self {
        self.forcing.push(ForcingTerm {
            amplitude,
            time,
            profile,
        });
        self
    }

    /// Build the runtime nonlinearity on a domain of the given length.
    pub fn compile(&self, period: f64, length: f64) -> Result<Nonlinearity> {
        let law = self.law.compile()?;
        let modulation = self.modulation;
        let mut forcing = Vec::with_capacity(self.forcing.len());
        for term in &self.forcing {
            forcing.push((term.amplitude, term.time, term.profile.compile(length)?));
        }
        let forcing: Arc<[(f64, TimeFactor, Arc<dyn Fn(f64) -> f64 + Send + Sync>)]> =
            forcing.into();
        let zero_law = matches!(self.law, StateLaw::Zero)
            || matches!(self.law, StateLaw::Linear { slope } if slope == 0.0);
        let zero = zero_law && forcing.iter().all(|(a, _, _)| *a == 0.0);
        if zero {
            return Ok(Nonlinearity::zero(period));
        }
        let autonomous =
            modulation.is_constant() && forcing.iter().all(|(_, tf, _)| tf.is_constant());

        let g = law.g.clone();
        let fs = forcing.clone();
        let rule = move |t: f64, x: f64, s: f64| {
            let mut acc = modulation.eval(t, period) * g(s);
            for (a, tf, p) in fs.iter() {
                acc += a * tf.eval(t, period) * p(x);
            }
            acc
        };
        let lipschitz = (modulation.sup_abs() * law.lipschitz).max(f64::MIN_POSITIVE);
        let mut nl = Nonlinearity::new(rule, period, lipschitz)?.autonomous(autonomous);
        if !autonomous {
            let g = law.g.clone();
            let fs = forcing.clone();
            let m = modulation.mean;
            nl = nl.with_mean_rule(move |x, s| {
                let mut acc = m * g(s);
                for (a, tf, p) in fs.iter() {
                    acc += a * tf.mean * p(x);
                }
                acc
            });
        }
        if let Some(slope) = law.slope {
            nl = nl.with_slope(if modulation.is_constant() {
                AsymptoticSlope::Constant(modulation.mean * slope)
            } else {
                AsymptoticSlope::Periodic(Arc::new(move |t| modulation.eval(t, period) * slope))
            });
        }
        if let Some((plus, minus)) = law.limits {
            let forcing_at = {
                let fs = forcing.clone();
                move |t: f64, x: f64| -> f64 {
                    fs.iter().map(|(a, tf, p)| a * tf.eval(t, period) * p(x)).sum()
                }
            };
            let fp = forcing_at.clone();
            let fm = forcing_at;
            nl = nl.with_limits(LimitData::exact(
                Arc::new(move |t, x| modulation.eval(t, period) * plus + fp(t, x)),
                Arc::new(move |t, x| modulation.eval(t, period) * minus + fm(t, x)),
            ));
        }
        Ok(nl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rule(spec: &NonlinearitySpec) -> Nonlinearity {
        spec.compile(2.0, PI).unwrap()
    }

    #[test]
    fn catalog_laws() {
        let f = rule(&NonlinearitySpec::new(StateLaw::Arctan { amplitude: 2.0 }));
        assert!((f.eval(0.3, 1.0, 1.0) - 2.0 * 1f64.atan()).abs() < 1e-15);
        assert!(f.is_autonomous());
        let l = f.limit_data().unwrap();
        assert!(((l.liminf_plus)(0.0, 0.5) - PI).abs() < 1e-15);
        assert!(((l.limsup_minus)(0.0, 0.5) + PI).abs() < 1e-15);

        let f = rule(&NonlinearitySpec::new(StateLaw::Cubic { coefficient: -1.0 }));
        assert_eq!(f.eval(0.0, 0.0, 2.0), -8.0);
        assert!(f.limit_data().is_none());

        let f = rule(&NonlinearitySpec::new(StateLaw::LinearPlusBounded {
            slope: 0.5,
            amplitude: 1.0,
        }));
        assert!(matches!(f.asymptotic_slope(), Some(AsymptoticSlope::Constant(s)) if *s == 0.5));

        let f = rule(&NonlinearitySpec::new(StateLaw::CustomTable {
            s: vec![-1.0, 0.0, 1.0],
            f: vec![-2.0, 0.0, 1.0],
        }));
        assert_eq!(f.eval(0.0, 0.0, 0.5), 0.5);
        assert_eq!(f.eval(0.0, 0.0, 3.0), 3.0);
        assert_eq!(f.eval(0.0, 0.0, -3.0), -6.0);
        assert_eq!(f.lipschitz_bound(), 2.0);
    }

    #[test]
    fn zero_detection() {
        assert!(rule(&NonlinearitySpec::new(StateLaw::Zero)).is_zero());
        let forced = NonlinearitySpec::new(StateLaw::Zero).forced(
            1.0,
            TimeFactor::cosine(0.0, 1.0),
            SpaceProfile::Constant,
        );
        let f = rule(&forced);
        assert!(!f.is_zero());
        assert!(!f.is_autonomous());
    }

    #[test]
    fn averaging_removes_mean_zero_factors() {
        let spec = NonlinearitySpec::new(StateLaw::Linear { slope: 1.0 })
            .modulated(TimeFactor::cosine(1.0, 1.0));
        let avg = rule(&spec).averaged(0);
        assert!(avg.is_autonomous());
        assert!((avg.eval(0.0, 0.3, 2.5) - 2.5).abs() < 1e-13);
        let spec = NonlinearitySpec::new(StateLaw::Arctan { amplitude: 1.0 })
            .modulated(TimeFactor::sine(0.0, 1.0));
        assert!(rule(&spec).averaged(0).eval(0.0, 0.3, 2.5).abs() < 1e-13);
    }

    #[test]
    fn json_round_trip_shape() {
        let text = r#"{"kind":"linear_plus_bounded","slope":0.5,"amplitude":1.0,
            "forcing":[{"amplitude":2.0,"time":{"cos":1.0},"profile":{"kind":"sine_mode","k":1}}]}"#;
        let spec: NonlinearitySpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.modulation, TimeFactor::constant(1.0));
        assert_eq!(spec.forcing[0].time, TimeFactor::cosine(0.0, 1.0));
        assert!(serde_json::from_str::<NonlinearitySpec>(r#"{"kind":"quartic"}"#).is_err());
        let bad = NonlinearitySpec::new(StateLaw::CustomTable {
            s: vec![1.0, 0.0],
            f: vec![0.0, 0.0],
        });
        assert!(bad.compile(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn periodic_and_lipschitz(t in 0.0f64..4.0, x in 0.0f64..PI, s1 in -3.0f64..3.0, s2 in -3.0f64..3.0) {
            let spec = NonlinearitySpec::new(StateLaw::LinearPlusBounded { slope: 0.5, amplitude: 1.0 })
                .modulated(TimeFactor::sine(1.0, 0.5))
                .forced(2.0, TimeFactor::cosine(0.0, 1.0), SpaceProfile::SineMode { k: 1 });
            let f = rule(&spec);
            prop_assert!((f.eval(t + 2.0, x, s1) - f.eval(t, x, s1)).abs() <= 1e-12);
            prop_assert!((f.eval(t, x, s1) - f.eval(t, x, s2)).abs()
                <= f.lipschitz_bound() * (s1 - s2).abs() + 1e-12);
        }
    }
}
