//! One apex-to-apex step: flight, touchdown, stance, liftoff, flight, apex.

use super::integrator::{integrate, Crossing, EventFn, IntegratorConfig};
use super::{
    flight_rhs, stance_rhs, ContinuousState, FailureReason, ModelParams, Phase, StepOutcome,
    COLLAPSE_FRACTION,
};
use crate::error::DynamicsError;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Touchdown,
    Liftoff,
    Apex,
    Failure(FailureReason),
}

/// An event reached during a step, with its event-function residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord<T> {
    pub kind: EventKind,
    /// State just before any frame reset.
    pub state: ContinuousState<T>,
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace<T> {
    pub outcome: StepOutcome<T>,
    pub events: Vec<EventRecord<T>>,
}

/// Simulate from a flight apex with angle of attack `alpha` (radians from
/// vertical, positive with the foot landing ahead of the body) to the next
/// apex or to failure.
pub fn simulate_step<T: Scalar>(
    apex: &ContinuousState<T>,
    alpha: T,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<StepOutcome<T>, DynamicsError> {
    run(apex, alpha, p, cfg, None)
}

/// Like [`simulate_step`] but also returns every event that was located.
pub fn simulate_step_traced<T: Scalar>(
    apex: &ContinuousState<T>,
    alpha: T,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<StepTrace<T>, DynamicsError> {
    let mut events = Vec::new();
    let outcome = run(apex, alpha, p, cfg, Some(&mut events))?;
    Ok(StepTrace { outcome, events })
}

fn record<T: Scalar>(
    log: &mut Option<&mut Vec<EventRecord<T>>>,
    kind: EventKind,
    state: ContinuousState<T>,
    residual: T,
) {
    if let Some(v) = log.as_deref_mut() {
        v.push(EventRecord {
            kind,
            state,
            residual,
        });
    }
}

fn run<T: Scalar>(
    apex: &ContinuousState<T>,
    alpha: T,
    p: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
    mut log: Option<&mut Vec<EventRecord<T>>>,
) -> Result<StepOutcome<T>, DynamicsError> {
    if apex.phase != Phase::Flight || apex.vy != T::zero() {
        return Err(DynamicsError::NotAnApex(format!(
            "phase {:?}, vy = {}",
            apex.phase, apex.vy
        )));
    }
    let zero = T::zero();
    let rest = p.rest_length();
    let (sin_a, cos_a) = alpha.sin_cos();
    let td_height = rest * cos_a;

    if apex.y < td_height {
        return Ok(StepOutcome::Infeasible);
    }
    if apex.y <= zero {
        return Ok(StepOutcome::Failure(FailureReason::BodyGround));
    }
    if apex.vx < zero {
        return Ok(StepOutcome::Failure(FailureReason::DirectionReversal));
    }

    let t_budget = apex.t + cfg.max_step_time;
    let flight = |s: &[T; 4]| Ok(flight_rhs(s, p));
    let ground = |s: &[T; 4]| s[1];

    // Descent to touchdown.
    let touchdown = |s: &[T; 4]| s[1] - td_height;
    let mut t = apex.t;
    let mut s = apex.vector();
    if touchdown(&s) != zero {
        let events = [
            EventFn {
                g: &ground,
                crossing: Crossing::Falling,
            },
            EventFn {
                g: &touchdown,
                crossing: Crossing::Falling,
            },
        ];
        let stop = integrate(flight, t, s, t_budget, &events, cfg)?;
        t = stop.t;
        s = stop.y;
        match stop.event {
            None => return Ok(StepOutcome::Failure(FailureReason::Timeout)),
            Some(0) => {
                let reason = FailureReason::BodyGround;
                record(
                    &mut log,
                    EventKind::Failure(reason),
                    ContinuousState::from_vector(s, Phase::Flight, t),
                    stop.residual,
                );
                return Ok(StepOutcome::Failure(reason));
            }
            Some(_) => record(
                &mut log,
                EventKind::Touchdown,
                ContinuousState::from_vector(s, Phase::Flight, t),
                stop.residual,
            ),
        }
    } else {
        record(&mut log, EventKind::Touchdown, *apex, zero);
    }

    // Stance, in the frame of the foot.
    s[0] = -rest * sin_a;
    s[1] = rest * cos_a;
    let leg_rate = s[0] * s[2] + s[1] * s[3];
    if leg_rate <= zero {
        let stance = |y: &[T; 4]| stance_rhs(y, p, rest);
        let collapse_len = rest * lit(COLLAPSE_FRACTION);
        let collapse = |y: &[T; 4]| y[0].hypot(y[1]) - collapse_len;
        let reversal = |y: &[T; 4]| y[2];
        let liftoff = |y: &[T; 4]| y[0].hypot(y[1]) - rest;
        let events = [
            EventFn {
                g: &ground,
                crossing: Crossing::Falling,
            },
            EventFn {
                g: &collapse,
                crossing: Crossing::Falling,
            },
            EventFn {
                g: &reversal,
                crossing: Crossing::FallingStrict,
            },
            EventFn {
                g: &liftoff,
                crossing: Crossing::Rising,
            },
        ];
        let stop = integrate(stance, t, s, t_budget, &events, cfg)?;
        t = stop.t;
        s = stop.y;
        let here = ContinuousState::from_vector(s, Phase::Stance, t);
        let reason = match stop.event {
            None => Some(FailureReason::Timeout),
            Some(0) | Some(1) => Some(FailureReason::BodyGround),
            Some(2) => Some(FailureReason::DirectionReversal),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            if stop.event.is_some() {
                record(&mut log, EventKind::Failure(reason), here, stop.residual);
            }
            return Ok(StepOutcome::Failure(reason));
        }
        record(&mut log, EventKind::Liftoff, here, stop.residual);
    } else {
        // Leg already extending at contact: it never loads.
        record(
            &mut log,
            EventKind::Liftoff,
            ContinuousState::from_vector(s, Phase::Stance, t),
            zero,
        );
    }

    // Ascent to apex.
    let apex_fn = |y: &[T; 4]| y[3];
    if s[3] != zero {
        let events = [
            EventFn {
                g: &ground,
                crossing: Crossing::Falling,
            },
            EventFn {
                g: &apex_fn,
                crossing: Crossing::Falling,
            },
        ];
        let stop = integrate(flight, t, s, t_budget, &events, cfg)?;
        t = stop.t;
        s = stop.y;
        match stop.event {
            None => return Ok(StepOutcome::Failure(FailureReason::Timeout)),
            Some(0) => {
                let reason = FailureReason::BodyGround;
                record(
                    &mut log,
                    EventKind::Failure(reason),
                    ContinuousState::from_vector(s, Phase::Flight, t),
                    stop.residual,
                );
                return Ok(StepOutcome::Failure(reason));
            }
            Some(_) => {}
        }
        record(
            &mut log,
            EventKind::Apex,
            ContinuousState::from_vector(s, Phase::Flight, t),
            stop.residual,
        );
    } else {
        record(
            &mut log,
            EventKind::Apex,
            ContinuousState::from_vector(s, Phase::Flight, t),
            zero,
        );
    }

    if s[1] <= zero {
        return Ok(StepOutcome::Failure(FailureReason::BodyGround));
    }
    if s[2] < zero {
        return Ok(StepOutcome::Failure(FailureReason::DirectionReversal));
    }
    let mut out = ContinuousState::from_vector(s, Phase::Flight, t);
    out.vy = zero;
    Ok(StepOutcome::Apex(out))
}
