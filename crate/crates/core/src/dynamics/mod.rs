//! Hybrid flight/stance dynamics of the linear (SLIP) and knee-spring (NSLIP)
//! spring-mass running models.
//!
//! During flight the point mass is ballistic. During stance the coordinates are
//! relative to the foot, which sits at the origin on the ground, and the leg
//! spring pushes along the foot-to-body direction.

mod integrator;
mod step;

use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::scalar::{lit, Scalar};

pub use integrator::{integrate, Crossing, EventFn, IntegratorConfig, Stop};
pub use step::{simulate_step, simulate_step_traced, EventKind, EventRecord, StepTrace};

/// Below this value of `sin(beta)` the knee-spring leg force is treated as singular.
pub const KNEE_SIN_EPSILON: f64 = 1e-9;

/// Fraction of the rest length at which a compressed leg counts as collapsed.
pub const COLLAPSE_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Slip,
    Nslip,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Slip => f.write_str("slip"),
            ModelKind::Nslip => f.write_str("nslip"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slip" => Ok(ModelKind::Slip),
            "nslip" => Ok(ModelKind::Nslip),
            other => Err(format!("unknown model `{other}` (expected slip or nslip)")),
        }
    }
}

/// Leg compliance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Spring<T> {
    /// Prismatic spring, `F = k (l0 - l)`.
    Slip { k: T },
    /// Two equal segments joined by a torsional knee spring with coefficient
    /// `c` [N m/rad] and resting knee angle `beta0` [rad].
    Nslip { c: T, beta0: T },
}

/// Physical constants of a spring-mass model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Body mass [kg].
    pub m: T,
    /// Gravitational acceleration [m/s^2].
    pub g: T,
    /// Prismatic rest length, or the summed segment length for the knee leg [m].
    pub l0: T,
    pub spring: Spring<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Linear-spring model with the human-like reference constants
    /// (m = 80 kg, l0 = 1 m, k = 8200 N/m, g = 9.81 m/s^2).
    pub fn slip_reference() -> Self {
        Self {
            m: lit(80.0),
            g: lit(9.81),
            l0: lit(1.0),
            spring: Spring::Slip { k: lit(8200.0) },
        }
    }

    /// Knee-spring model with the reference constants
    /// (m = 80 kg, l0 = 1 m, c = 704 N m/rad, beta0 = 170 deg, g = 9.81 m/s^2).
    pub fn nslip_reference() -> Self {
        Self {
            m: lit(80.0),
            g: lit(9.81),
            l0: lit(1.0),
            spring: Spring::Nslip {
                c: lit(704.0),
                beta0: lit::<T>(170.0).to_radians(),
            },
        }
    }

    pub fn reference(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Slip => Self::slip_reference(),
            ModelKind::Nslip => Self::nslip_reference(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.spring {
            Spring::Slip { .. } => ModelKind::Slip,
            Spring::Nslip { .. } => ModelKind::Nslip,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |msg: &str| Err(DynamicsError::InvalidParams(msg.to_owned()));
        let zero = T::zero();
        if !(self.m > zero) || !self.m.is_finite() {
            return bad("mass must be positive and finite");
        }
        if !(self.g > zero) || !self.g.is_finite() {
            return bad("gravity must be positive and finite");
        }
        if !(self.l0 > zero) || !self.l0.is_finite() {
            return bad("rest length must be positive and finite");
        }
        match self.spring {
            Spring::Slip { k } => {
                if !(k > zero) || !k.is_finite() {
                    return bad("spring coefficient k must be positive");
                }
            }
            Spring::Nslip { c, beta0 } => {
                if !(c > zero) || !c.is_finite() {
                    return bad("torsional coefficient c must be positive");
                }
                if !(beta0 > zero && beta0 < T::PI()) {
                    return bad("resting knee angle must lie in (0, pi)");
                }
            }
        }
        Ok(())
    }

    /// Leg length at which the spring is unloaded. Touchdown and liftoff happen here.
    pub fn rest_length(&self) -> T {
        match self.spring {
            Spring::Slip { .. } => self.l0,
            Spring::Nslip { beta0, .. } => self.l0 * (beta0 / lit(2.0)).sin(),
        }
    }

    /// Spring force along the leg; positive in compression.
    pub fn leg_force(&self, l: T) -> Result<T, DynamicsError> {
        match self.spring {
            Spring::Slip { .. } => Ok(leg_force_slip(l, self)),
            Spring::Nslip { .. } => leg_force_nslip(l, self),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Flight,
    Stance,
}

/// Planar body state. During stance `x`/`y` are measured from the foot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousState<T> {
    pub x: T,
    pub y: T,
    pub vx: T,
    pub vy: T,
    pub phase: Phase,
    pub t: T,
}

impl<T: Scalar> ContinuousState<T> {
    /// Flight apex at height `y` moving forward at `vx`.
    pub fn apex(y: T, vx: T) -> Self {
        Self {
            x: T::zero(),
            y,
            vx,
            vy: T::zero(),
            phase: Phase::Flight,
            t: T::zero(),
        }
    }

    pub(crate) fn vector(&self) -> [T; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub(crate) fn from_vector(v: [T; 4], phase: Phase, t: T) -> Self {
        Self {
            x: v[0],
            y: v[1],
            vx: v[2],
            vy: v[3],
            phase,
            t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    /// Body reached the ground, or the leg collapsed to almost zero length.
    BodyGround,
    /// Forward velocity became negative.
    DirectionReversal,
    /// No apex within the configured simulated time, or the integrator gave up.
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome<T> {
    Apex(ContinuousState<T>),
    Failure(FailureReason),
    /// The foot would start below ground at the initial apex.
    Infeasible,
}

/// Ballistic acceleration; independent of the state.
pub fn flight_accel<T: Scalar>(_state: &ContinuousState<T>, p: &ModelParams<T>) -> (T, T) {
    (T::zero(), -p.g)
}

pub fn leg_length<T: Scalar>(state: &ContinuousState<T>) -> T {
    state.x.hypot(state.y)
}

pub fn leg_force_slip<T: Scalar>(l: T, p: &ModelParams<T>) -> T {
    let k = match p.spring {
        Spring::Slip { k } => k,
        Spring::Nslip { .. } => panic!("leg_force_slip called with knee-spring parameters"),
    };
    k * (p.l0 - l)
}

/// Knee angle of the two-segment leg at length `l`, `acos(1 - 2 l^2 / l0^2)`.
pub fn knee_angle<T: Scalar>(l: T, p: &ModelParams<T>) -> Result<T, DynamicsError> {
    if l > p.l0 || l < T::zero() || !l.is_finite() {
        return Err(DynamicsError::KneeDomain {
            length: l.to_f64_lossy(),
            l0: p.l0.to_f64_lossy(),
        });
    }
    let r = l / p.l0;
    let arg = T::one() - lit::<T>(2.0) * r * r;
    Ok(arg.max(-T::one()).min(T::one()).acos())
}

/// Knee-spring leg force `4 l c (beta0 - beta) / (l0^2 sin(beta))`.
pub fn leg_force_nslip<T: Scalar>(l: T, p: &ModelParams<T>) -> Result<T, DynamicsError> {
    let (c, beta0) = match p.spring {
        Spring::Nslip { c, beta0 } => (c, beta0),
        Spring::Slip { .. } => panic!("leg_force_nslip called with linear-spring parameters"),
    };
    let beta = knee_angle(l, p)?;
    let sin_beta = beta.sin();
    if sin_beta.abs() < lit(KNEE_SIN_EPSILON) {
        return Err(DynamicsError::Singular {
            sin_beta: sin_beta.to_f64_lossy(),
        });
    }
    Ok(lit::<T>(4.0) * l * c * (beta0 - beta) / (p.l0 * p.l0 * sin_beta))
}

/// Stance acceleration: leg force along the foot-to-body unit vector plus gravity.
pub fn stance_accel<T: Scalar>(
    state: &ContinuousState<T>,
    p: &ModelParams<T>,
) -> Result<(T, T), DynamicsError> {
    let l = leg_length(state);
    let f = p.leg_force(l)?;
    Ok(stance_accel_with_force(state.x, state.y, l, f, p))
}

#[inline]
fn stance_accel_with_force<T: Scalar>(x: T, y: T, l: T, f: T, p: &ModelParams<T>) -> (T, T) {
    let scale = f / (p.m * l);
    (scale * x, scale * y - p.g)
}

/// Stance vector field used by the integrator. The leg cannot pull, so beyond
/// the rest length the spring is unloaded; this only matters for Runge-Kutta
/// stages that overshoot the liftoff event.
pub(crate) fn stance_rhs<T: Scalar>(
    s: &[T; 4],
    p: &ModelParams<T>,
    rest: T,
) -> Result<[T; 4], DynamicsError> {
    let l = s[0].hypot(s[1]);
    let f = if l < rest { p.leg_force(l)? } else { T::zero() };
    let (ax, ay) = stance_accel_with_force(s[0], s[1], l, f, p);
    Ok([s[2], s[3], ax, ay])
}

pub(crate) fn flight_rhs<T: Scalar>(s: &[T; 4], p: &ModelParams<T>) -> [T; 4] {
    [s[2], s[3], T::zero(), -p.g]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64, y: f64) -> ContinuousState<f64> {
        ContinuousState {
            x,
            y,
            vx: 0.0,
            vy: 0.0,
            phase: Phase::Stance,
            t: 0.0,
        }
    }

    #[test]
    fn flight_accel_is_constant_gravity() {
        let p = ModelParams::<f64>::slip_reference();
        assert_eq!(flight_accel(&state(0.0, 1.0), &p), (0.0, -9.81));
        assert_eq!(flight_accel(&state(3.0, -2.0), &p), (0.0, -9.81));
        let p0 = ModelParams { g: 0.0, ..p };
        assert_eq!(flight_accel(&state(0.0, 1.0), &p0), (0.0, -0.0));
    }

    #[test]
    fn leg_length_examples() {
        assert_eq!(leg_length(&state(0.0, 1.0)), 1.0);
        assert!((leg_length(&state(0.3, 0.4)) - 0.5).abs() < 1e-15);
        assert_eq!(leg_length(&state(0.0, 0.0)), 0.0);
    }

    #[test]
    fn slip_force_examples() {
        let p = ModelParams::<f64>::slip_reference();
        assert_eq!(leg_force_slip(1.0, &p), 0.0);
        assert!((leg_force_slip(0.9, &p) - 820.0).abs() < 1e-9);
        assert!((leg_force_slip(1.1, &p) + 820.0).abs() < 1e-9);
    }

    #[test]
    fn knee_angle_examples() {
        let p = ModelParams::<f64>::nslip_reference();
        assert!((knee_angle(1.0, &p).unwrap() - std::f64::consts::PI).abs() < 1e-12);
        let half = knee_angle(1.0 / 2f64.sqrt(), &p).unwrap();
        assert!((half - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let beta0 = 170f64.to_radians();
        let at_rest = knee_angle((beta0 / 2.0).sin(), &p).unwrap();
        assert!((at_rest - beta0).abs() < 1e-9);
        assert!(matches!(
            knee_angle(1.01, &p),
            Err(DynamicsError::KneeDomain { .. })
        ));
    }

    #[test]
    fn knee_angle_is_monotone() {
        let p = ModelParams::<f64>::nslip_reference();
        let mut prev = -1.0;
        for i in 0..=100 {
            let b = knee_angle(i as f64 / 100.0, &p).unwrap();
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn nslip_force_examples() {
        let p = ModelParams::<f64>::nslip_reference();
        let rest = p.rest_length();
        assert!(leg_force_nslip(rest, &p).unwrap().abs() < 1e-9);
        // independent evaluation at l = 0.9
        let beta = (1.0f64 - 2.0 * 0.81).acos();
        let expected = 4.0 * 0.9 * 704.0 * (170f64.to_radians() - beta) / beta.sin();
        let got = leg_force_nslip(0.9, &p).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected.abs());
        assert!(got > 0.0);
        // beyond rest towards l0 the force turns strongly negative
        assert!(leg_force_nslip(0.99999, &p).unwrap() < -1e4);
        assert!(matches!(
            leg_force_nslip(1.0, &p),
            Err(DynamicsError::Singular { .. })
        ));
    }

    #[test]
    fn stance_accel_examples() {
        let p = ModelParams::<f64>::slip_reference();
        let (ax, ay) = stance_accel(&state(0.0, 1.0), &p).unwrap();
        assert_eq!(ax, 0.0);
        assert!((ay + 9.81).abs() < 1e-15);

        let (ax, ay) = stance_accel(&state(0.0, 0.9), &p).unwrap();
        assert_eq!(ax, 0.0);
        assert!((ay - (820.0 / 80.0 - 9.81)).abs() < 1e-12);

        let (x, y): (f64, f64) = (-0.3, 0.8);
        let l = (x * x + y * y).sqrt();
        let f = 8200.0 * (1.0 - l);
        let (ax, ay) = stance_accel(&state(x, y), &p).unwrap();
        assert!((ax - f / 80.0 * x / l).abs() < 1e-12);
        assert!((ay - (f / 80.0 * y / l - 9.81)).abs() < 1e-12);
    }

    #[test]
    fn reference_params_validate() {
        assert!(ModelParams::<f64>::slip_reference().validate().is_ok());
        assert!(ModelParams::<f64>::nslip_reference().validate().is_ok());
        assert!(ModelParams::<f32>::nslip_reference().validate().is_ok());
        let mut p = ModelParams::<f64>::slip_reference();
        p.m = 0.0;
        assert!(p.validate().is_err());
        let p = ModelParams {
            spring: Spring::Nslip { c: 704.0, beta0: 3.2 },
            ..ModelParams::<f64>::slip_reference()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rest_lengths() {
        assert_eq!(ModelParams::<f64>::slip_reference().rest_length(), 1.0);
        let r = ModelParams::<f64>::nslip_reference().rest_length();
        assert!((r - 85f64.to_radians().sin()).abs() < 1e-15);
    }
}
