//! Built-in problem descriptions used by the experiments and the CLI.

use crate::nonlinearity::{ForcingTerm, NonlinearitySpec, SpaceProfile, StateLaw, TimeFactor};
use crate::problem::{BeamParams, DampingConfig, ProblemConfig, Variant};

/// Telegraph-type equation `u_tt + u_t − u_xx + 0.5u + arctan u + cos(t)·sin x = 0`:
/// asymptotically linear with `f_∞ = 0.5`, which is not an eigenvalue of `−Δ`.
pub fn telegraph() -> ProblemConfig {
    let nl = NonlinearitySpec::new(StateLaw::LinearPlusBounded { slope: 0.5, amplitude: 1.0 }).forced(
        1.0,
        TimeFactor::cosine(0.0, 1.0),
        SpaceProfile::SineMode { k: 1 },
    );
    let mut c = ProblemConfig::new(Variant::DampedWave, 8, nl);
    c.beta = Some(DampingConfig::Constant(1.0));
    c.steps_per_period = 256;
    c
}

/// Like [`telegraph`] but `f_∞ = −1` puts the first mode in resonance, and a
/// strong forcing at the mode's own frequency drives a large orbit.
pub fn resonant_growth() -> ProblemConfig {
    let nl = NonlinearitySpec::new(StateLaw::LinearPlusBounded { slope: -1.0, amplitude: 1.0 }).forced(
        5.0,
        TimeFactor::cosine(0.0, 1.0),
        SpaceProfile::SineMode { k: 1 },
    );
    let mut c = ProblemConfig::new(Variant::DampedWave, 4, nl);
    c.beta = Some(DampingConfig::Constant(0.2));
    c.steps_per_period = 256;
    c
}

/// `u_t = u_xx + (1 + cos t)·0.5·arctan u + cos t·sin x`.
pub fn forced_heat() -> ProblemConfig {
    let nl = NonlinearitySpec::new(StateLaw::Arctan { amplitude: 0.5 })
        .modulated(TimeFactor::cosine(1.0, 1.0))
        .forced(1.0, TimeFactor::cosine(0.0, 1.0), SpaceProfile::SineMode { k: 1 });
    let mut c = ProblemConfig::new(Variant::Heat, 8, nl);
    c.steps_per_period = 256;
    c
}

/// Time-independent heat problem `u_t = u_xx + 0.5·arctan u + 1`.
pub fn autonomous_heat() -> ProblemConfig {
    let nl = NonlinearitySpec::new(StateLaw::Arctan { amplitude: 0.5 }).forced(
        1.0,
        TimeFactor::constant(1.0),
        SpaceProfile::Constant,
    );
    let mut c = ProblemConfig::new(Variant::Heat, 8, nl);
    c.steps_per_period = 256;
    c
}

pub fn heat_law(law: StateLaw, modes: usize) -> ProblemConfig {
    let mut c = ProblemConfig::new(Variant::Heat, modes, NonlinearitySpec::new(law));
    c.steps_per_period = 256;
    c
}

pub const BEAM_PARAMS: BeamParams = BeamParams { alpha: 0.1, beta: 0.5, sigma: 0.2, a: 1.0, b: -2.5 };

/// Hinged beam on `(0, π)` with `a = 1`, `b = −2.5`, driven by `cos(ωt)·sin x`.
pub fn beam(modes: usize, omega: f64, forcing: f64) -> ProblemConfig {
    let mut c = ProblemConfig::new(Variant::Beam, modes, NonlinearitySpec::new(StateLaw::Zero));
    c.beam = Some(BEAM_PARAMS);
    c.omega = omega;
    c.steps_per_period = 256;
    if forcing != 0.0 {
        c.forcing = vec![ForcingTerm {
            amplitude: forcing,
            time: TimeFactor::cosine(0.0, 1.0),
            profile: SpaceProfile::SineMode { k: 1 },
        }];
    }
    c
}

/// `u_tt + u_t − u_xx − k*²u + ε(amplitude·arctan u + forcing·cos t·sin x) = 0`.
pub fn resonant(k_star: usize, modes: usize, amplitude: f64, forcing: f64) -> ProblemConfig {
    let mut nl = NonlinearitySpec::new(StateLaw::Arctan { amplitude });
    if forcing != 0.0 {
        nl = nl.forced(forcing, TimeFactor::cosine(0.0, 1.0), SpaceProfile::SineMode { k: 1 });
    }
    let mut c = ProblemConfig::new(Variant::ResonantWave, modes, nl);
    c.beta = Some(DampingConfig::Constant(1.0));
    c.resonant_mode = Some(k_star);
    c.steps_per_period = 256;
    c
}

/// `u_t = u_xx + 0.5 sin(t)·u + 1 + cos t` on the nonnegative cone.
pub fn cone() -> ProblemConfig {
    let nl = NonlinearitySpec::new(StateLaw::Linear { slope: 1.0 })
        .modulated(TimeFactor::sine(0.0, 0.5))
        .forced(1.0, TimeFactor::cosine(1.0, 1.0), SpaceProfile::Constant);
    let mut c = ProblemConfig::new(Variant::ConstrainedHeat, 16, nl);
    c.steps_per_period = 512;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_builds() {
        for c in [
            telegraph(),
            resonant_growth(),
            forced_heat(),
            autonomous_heat(),
            heat_law(StateLaw::Cubic { coefficient: -1.0 }, 4),
            beam(8, 16.0, 1.0),
            beam(4, 1.0, 0.0),
            resonant(2, 3, 1.0, 0.0),
            cone(),
        ] {
            let p = c.build().unwrap();
            let back: ProblemConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(p.modes(), c.modes);
        }
        assert!(autonomous_heat().build().unwrap().is_autonomous());
        assert!(!forced_heat().build().unwrap().is_autonomous());
        let b = beam(4, 16.0, 1.0).build().unwrap();
        assert!((b.period() - 2.0 * std::f64::consts::PI / 16.0).abs() < 1e-15);
    }
}
