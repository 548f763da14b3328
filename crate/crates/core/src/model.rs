//! Outcome models: who decides the two detection bits of a pulse.
//!
//! Every model implements the same sampling contract, [`sample_outcome`]. The
//! hidden-variable models are deterministic given their [`HiddenState`]; the
//! quantum model and the scenario generators draw from the caller's stream.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Polarizer angle in radians, kept normalized into `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct PolarizerAngle(f64);

impl PolarizerAngle {
    pub const ZERO: PolarizerAngle = PolarizerAngle(0.0);

    pub fn new(radians: f64) -> Self {
        let mut r = radians.rem_euclid(PI);
        // rem_euclid can round up to exactly π for tiny negative inputs
        if r >= PI {
            r = 0.0;
        }
        PolarizerAngle(r)
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Signed difference `self − other` in `(−π, π)`.
    pub fn minus(self, other: PolarizerAngle) -> f64 {
        self.0 - other.0
    }

    /// Equality modulo π within `tol` radians.
    pub fn approx_eq(self, other: PolarizerAngle, tol: f64) -> bool {
        let d = (self.0 - other.0).rem_euclid(PI);
        d < tol || PI - d < tol
    }
}

impl fmt::Display for PolarizerAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}°", self.0.to_degrees())
    }
}

impl Serialize for PolarizerAngle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for PolarizerAngle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(PolarizerAngle::new)
    }
}

/// Hidden-variable state for one emission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HiddenState {
    /// λ, one polarization-like phase in `[0, π)`.
    pub lambda: f64,
    /// Absolute time of the emission, seconds from run start.
    pub epoch_time_s: f64,
    /// Number of earlier emissions in the same pulse half. Drives the
    /// periodic generator of the scenario models.
    pub emission_index: u64,
}

impl HiddenState {
    pub fn new(lambda: f64, epoch_time_s: f64) -> Self {
        HiddenState {
            lambda,
            epoch_time_s,
            emission_index: 0,
        }
    }
}

/// Detection bits at both stations: 0 = transmitted port, 1 = reflected port.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointOutcome {
    pub bit_a: u8,
    pub bit_b: u8,
    pub detected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    QmNonlocal,
    LocalErgodic,
    Nonergodic,
    ScenarioLocalityFalse,
    ScenarioRealismFalse,
    ScenarioErgodicityFalse,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::QmNonlocal => "QM_NONLOCAL",
            ModelKind::LocalErgodic => "LOCAL_ERGODIC",
            ModelKind::Nonergodic => "NONERGODIC",
            ModelKind::ScenarioLocalityFalse => "SCENARIO_LOCALITY_FALSE",
            ModelKind::ScenarioRealismFalse => "SCENARIO_REALISM_FALSE",
            ModelKind::ScenarioErgodicityFalse => "SCENARIO_ERGODICITY_FALSE",
        };
        f.write_str(s)
    }
}

/// Model selection as it appears in the run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.to_string(), value);
        self
    }

    /// Builds the model. `rep_period_s` converts drift periods
    /// given in pulses into seconds.
    pub fn build(&self, rep_period_s: f64) -> Result<OutcomeModel> {
        let allowed: &[&str] = match self.kind {
            ModelKind::LocalErgodic => &["lambda"],
            ModelKind::Nonergodic => &["drift_period_pulses", "drift_period_s"],
            _ => &[],
        };
        for name in self.parameters.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::config(
                    format!("model.parameters.{name}"),
                    format!("unknown parameter for {}", self.kind),
                ));
            }
        }
        let model = match self.kind {
            ModelKind::QmNonlocal => OutcomeModel::QmNonlocal,
            ModelKind::LocalErgodic => OutcomeModel::LocalErgodic {
                fixed_lambda: self.parameters.get("lambda").map(|&l| l.rem_euclid(PI)),
            },
            ModelKind::Nonergodic => {
                let period = match (
                    self.parameters.get("drift_period_s"),
                    self.parameters.get("drift_period_pulses"),
                ) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config(
                            "model.parameters",
                            "give either drift_period_s or drift_period_pulses, not both",
                        ))
                    }
                    (Some(&s), None) => s,
                    (None, Some(&p)) => p * rep_period_s,
                    (None, None) => DEFAULT_DRIFT_PERIOD_PULSES * rep_period_s,
                };
                if !(period.is_finite() && period > 0.0) {
                    return Err(Error::config(
                        "model.parameters.drift_period",
                        "drift period must be positive",
                    ));
                }
                OutcomeModel::Nonergodic {
                    drift_period_s: period,
                }
            }
            ModelKind::ScenarioLocalityFalse => OutcomeModel::Scenario(Scenario::LocalityFalse),
            ModelKind::ScenarioRealismFalse => OutcomeModel::Scenario(Scenario::RealismFalse),
            ModelKind::ScenarioErgodicityFalse => {
                OutcomeModel::Scenario(Scenario::ErgodicityFalse)
            }
        };
        Ok(model)
    }
}

/// Default drift period of the non-ergodic model, in pulse periods.
pub const DEFAULT_DRIFT_PERIOD_PULSES: f64 = 1.0e4;

/// Period of the compressible generator used by the scenario models.
pub const PATTERN_PERIOD: u64 = 64;

/// Balanced (32 ones) 64-bit pattern read LSB first.
const PATTERN: u64 = 0xab9f_01dc_2cad_988e;

/// The `index`-th bit of the periodic scenario generator.
pub fn pattern_bit(index: u64) -> u8 {
    ((PATTERN >> (index % PATTERN_PERIOD)) & 1) as u8
}

/// The three randommeter signatures: which property the synthetic data
/// falsifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Full-entropy first half, compressible second half.
    LocalityFalse,
    /// Full entropy throughout.
    RealismFalse,
    /// Compressible first half, full-entropy second half.
    ErgodicityFalse,
}

impl Scenario {
    fn periodic_half(self) -> Option<usize> {
        match self {
            Scenario::LocalityFalse => Some(1),
            Scenario::RealismFalse => None,
            Scenario::ErgodicityFalse => Some(0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutcomeModel {
    /// |φ+⟩ statistics sampled directly.
    QmNonlocal,
    /// Deterministic sign model with λ ~ Uniform[0, π) drawn per pulse, or a
    /// fixed λ when given.
    LocalErgodic { fixed_lambda: Option<f64> },
    /// Same bit rule with λ(t) = (π t / T_drift) mod π.
    Nonergodic { drift_period_s: f64 },
    Scenario(Scenario),
}

impl OutcomeModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            OutcomeModel::QmNonlocal => ModelKind::QmNonlocal,
            OutcomeModel::LocalErgodic { .. } => ModelKind::LocalErgodic,
            OutcomeModel::Nonergodic { .. } => ModelKind::Nonergodic,
            OutcomeModel::Scenario(Scenario::LocalityFalse) => ModelKind::ScenarioLocalityFalse,
            OutcomeModel::Scenario(Scenario::RealismFalse) => ModelKind::ScenarioRealismFalse,
            OutcomeModel::Scenario(Scenario::ErgodicityFalse) => {
                ModelKind::ScenarioErgodicityFalse
            }
        }
    }

    pub fn is_hidden_variable(&self) -> bool {
        matches!(
            self,
            OutcomeModel::LocalErgodic { .. } | OutcomeModel::Nonergodic { .. }
        )
    }

    /// Builds the hidden state of one emission. Models without λ get a zero
    /// placeholder.
    pub fn hidden_state<R: Rng + ?Sized>(
        &self,
        epoch_time_s: f64,
        emission_index: u64,
        rng: &mut R,
    ) -> HiddenState {
        let lambda = match self {
            OutcomeModel::LocalErgodic { .. } | OutcomeModel::Nonergodic { .. } => {
                evolve_lambda(self, epoch_time_s, rng)
                    .expect("hidden-variable model")
                    .lambda
            }
            _ => 0.0,
        };
        HiddenState {
            lambda,
            epoch_time_s,
            emission_index,
        }
    }

    /// Draws λ from the stationary density ρ(λ).
    pub fn sample_stationary_lambda<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            OutcomeModel::LocalErgodic {
                fixed_lambda: Some(l),
            } => Ok(l),
            OutcomeModel::LocalErgodic { fixed_lambda: None } | OutcomeModel::Nonergodic { .. } => {
                Ok(rng.random::<f64>() * PI)
            }
            _ => Err(Error::UnsupportedModel {
                model: self.kind().to_string(),
                operation: "hidden-variable sampling",
            }),
        }
    }
}

/// |φ+⟩ joint probability of bits `(a, b)` at analyzer angles `(α, β)`.
pub fn qm_joint_probability(alpha: PolarizerAngle, beta: PolarizerAngle, a: u8, b: u8) -> f64 {
    let c = alpha.minus(beta).cos();
    let same = 0.5 * c * c;
    if a == b {
        same
    } else {
        0.5 - same
    }
}

/// |φ+⟩ correlation E(α, β) = cos 2(α − β).
pub fn qm_correlation(alpha: PolarizerAngle, beta: PolarizerAngle) -> f64 {
    (2.0 * alpha.minus(beta)).cos()
}

/// Reference local-realistic bit: transmitted (0) when cos 2(θ − λ) ≥ 0.
pub fn local_hv_bit(lambda: f64, theta: PolarizerAngle) -> u8 {
    if (2.0 * (theta.radians() - lambda)).cos() >= 0.0 {
        0
    } else {
        1
    }
}

/// Advances the hidden variable to `epoch_time_s`.
///
/// The ergodic model ignores time and draws a fresh λ; the non-ergodic model
/// returns the deterministic drift phase.
pub fn evolve_lambda<R: Rng + ?Sized>(
    model: &OutcomeModel,
    epoch_time_s: f64,
    rng: &mut R,
) -> Result<HiddenState> {
    let lambda = match *model {
        OutcomeModel::LocalErgodic { fixed_lambda } => {
            fixed_lambda.unwrap_or_else(|| rng.random::<f64>() * PI)
        }
        OutcomeModel::Nonergodic { drift_period_s } => {
            (PI * epoch_time_s / drift_period_s).rem_euclid(PI)
        }
        _ => {
            return Err(Error::UnsupportedModel {
                model: model.kind().to_string(),
                operation: "evolve_lambda",
            })
        }
    };
    Ok(HiddenState::new(lambda, epoch_time_s))
}

fn qm_pair<R: Rng + ?Sized>(alpha: PolarizerAngle, beta: PolarizerAngle, bit_a: u8, rng: &mut R) -> JointOutcome {
    let s = alpha.minus(beta).sin();
    let flip = rng.random::<f64>() < s * s;
    JointOutcome {
        bit_a,
        bit_b: bit_a ^ flip as u8,
        detected: true,
    }
}

/// Samples the joint outcome of one emitted pair.
///
/// Only the quantum and scenario models consume `rng`; the hidden-variable
/// models are pure functions of `state` and the local angle.
pub fn sample_outcome<R: Rng + ?Sized>(
    model: &OutcomeModel,
    state: &HiddenState,
    alpha: PolarizerAngle,
    beta: PolarizerAngle,
    within_pulse_time_s: f64,
    pulse_duration_s: f64,
    rng: &mut R,
) -> JointOutcome {
    debug_assert!(within_pulse_time_s >= 0.0 && within_pulse_time_s <= pulse_duration_s + 1e-12);
    match *model {
        OutcomeModel::QmNonlocal => {
            let a = rng.random::<bool>() as u8;
            qm_pair(alpha, beta, a, rng)
        }
        OutcomeModel::LocalErgodic { .. } | OutcomeModel::Nonergodic { .. } => JointOutcome {
            bit_a: local_hv_bit(state.lambda, alpha),
            bit_b: local_hv_bit(state.lambda, beta),
            detected: true,
        },
        OutcomeModel::Scenario(scenario) => {
            let half = pulse_half(within_pulse_time_s, pulse_duration_s);
            if scenario.periodic_half() == Some(half) {
                qm_pair(alpha, beta, pattern_bit(state.emission_index), rng)
            } else {
                let a = rng.random::<bool>() as u8;
                qm_pair(alpha, beta, a, rng)
            }
        }
    }
}

/// 0 for the first half of the pulse, 1 for the second.
pub fn pulse_half(within_pulse_time_s: f64, pulse_duration_s: f64) -> usize {
    if 2.0 * within_pulse_time_s < pulse_duration_s {
        0
    } else {
        1
    }
}

/// Sign-model correlation E(θ) = 1 − 4|θ|/π for |θ| ≤ π/2 (θ taken mod π).
pub fn sign_model_correlation(alpha: PolarizerAngle, beta: PolarizerAngle) -> f64 {
    let d = alpha.minus(beta).rem_euclid(PI);
    let d = if d > FRAC_PI_2 { PI - d } else { d };
    1.0 - 4.0 * d / PI
}
