//! Adaptive Dormand-Prince 5(4) integration of autonomous systems with
//! event localization.
//!
//! Events are located on the step size: once an accepted step brackets a sign
//! change of an event function, the step is retaken from its start with a
//! shorter step size chosen by Illinois regula falsi. The reported event state
//! is therefore a genuine integrator state, not an interpolant.

use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;
use crate::scalar::{lit, Scalar};

/// Missing fields take their defaults when deserialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    default,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct IntegratorConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Bound on `|g|` of an event function at a reported event.
    pub event_tol: T,
    /// Simulated time budget for one apex-to-apex step [s].
    pub max_step_time: T,
    pub initial_step: T,
    /// Upper bound on the integration step size [s].
    pub max_step: T,
}

impl<T: Scalar> Default for IntegratorConfig<T> {
    fn default() -> Self {
        let eps = T::epsilon();
        Self {
            rel_tol: lit::<T>(1e-8).max(eps * lit(100.0)),
            abs_tol: lit::<T>(1e-10).max(eps * lit(10.0)),
            event_tol: lit::<T>(1e-10).max(eps * lit(100.0)),
            max_step_time: lit(5.0),
            initial_step: lit(1e-3),
            max_step: lit(0.01),
        }
    }
}

impl<T: Scalar> IntegratorConfig<T> {
    /// Same configuration with every tolerance divided by `factor`.
    pub fn tightened(&self, factor: T) -> Self {
        Self {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            event_tol: self.event_tol / factor,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("event_tol", self.event_tol),
            ("max_step_time", self.max_step_time),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(DynamicsError::InvalidConfig(format!(
                    "{name} must be positive and finite"
                )));
            }
        }
        Ok(())
    }
}

/// Which sign change of an event function triggers it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    /// `g > 0` before, `g <= 0` after.
    Falling,
    /// `g >= 0` before, `g < 0` after.
    FallingStrict,
    /// `g < 0` before, `g >= 0` after.
    Rising,
}

impl Crossing {
    fn before<T: Scalar>(self, g: T) -> bool {
        match self {
            Crossing::Falling => g > T::zero(),
            Crossing::FallingStrict => g >= T::zero(),
            Crossing::Rising => g < T::zero(),
        }
    }

    fn after<T: Scalar>(self, g: T) -> bool {
        match self {
            Crossing::Falling => g <= T::zero(),
            Crossing::FallingStrict => g < T::zero(),
            Crossing::Rising => g >= T::zero(),
        }
    }
}

pub struct EventFn<'a, T, const N: usize> {
    pub g: &'a dyn Fn(&[T; N]) -> T,
    pub crossing: Crossing,
}

/// Where an integration stopped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stop<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    /// Index of the first event that fired, or `None` if `t_end` was reached.
    pub event: Option<usize>,
    /// Event function value at the stop state (zero when no event fired).
    pub residual: T,
}

const C2: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Tableau<T> {
    c2: T,
    a3: [T; 2],
    a4: [T; 3],
    a5: [T; 4],
    a6: [T; 5],
    b: [T; 5],
    e: [T; 6],
}

impl<T: Scalar> Tableau<T> {
    fn new() -> Self {
        Self {
            c2: lit(C2),
            a3: [lit(A31), lit(A32)],
            a4: [lit(A41), lit(A42), lit(A43)],
            a5: [lit(A51), lit(A52), lit(A53), lit(A54)],
            a6: [lit(A61), lit(A62), lit(A63), lit(A64), lit(A65)],
            b: [lit(B1), lit(B3), lit(B4), lit(B5), lit(B6)],
            e: [lit(E1), lit(E3), lit(E4), lit(E5), lit(E6), lit(E7)],
        }
    }
}

struct Trial<T, const N: usize> {
    y: [T; N],
    k7: [T; N],
    err: [T; N],
}

fn combine<T: Scalar, const N: usize>(y: &[T; N], h: T, terms: &[(T, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (w, k) in terms {
            acc = acc + *w * k[i];
        }
        *o = *o + h * acc;
    }
    out
}

fn dp_step<T, const N: usize, F>(
    f: &F,
    tab: &Tableau<T>,
    y: &[T; N],
    k1: &[T; N],
    h: T,
) -> Result<Trial<T, N>, DynamicsError>
where
    T: Scalar,
    F: Fn(&[T; N]) -> Result<[T; N], DynamicsError>,
{
    let k2 = f(&combine(y, h, &[(tab.c2, k1)]))?;
    let k3 = f(&combine(y, h, &[(tab.a3[0], k1), (tab.a3[1], &k2)]))?;
    let k4 = f(&combine(
        y,
        h,
        &[(tab.a4[0], k1), (tab.a4[1], &k2), (tab.a4[2], &k3)],
    ))?;
    let k5 = f(&combine(
        y,
        h,
        &[
            (tab.a5[0], k1),
            (tab.a5[1], &k2),
            (tab.a5[2], &k3),
            (tab.a5[3], &k4),
        ],
    ))?;
    let k6 = f(&combine(
        y,
        h,
        &[
            (tab.a6[0], k1),
            (tab.a6[1], &k2),
            (tab.a6[2], &k3),
            (tab.a6[3], &k4),
            (tab.a6[4], &k5),
        ],
    ))?;
    let y5 = combine(
        y,
        h,
        &[
            (tab.b[0], k1),
            (tab.b[1], &k3),
            (tab.b[2], &k4),
            (tab.b[3], &k5),
            (tab.b[4], &k6),
        ],
    );
    let k7 = f(&y5)?;
    let mut err = [T::zero(); N];
    for (i, e) in err.iter_mut().enumerate() {
        *e = h
            * (tab.e[0] * k1[i]
                + tab.e[1] * k3[i]
                + tab.e[2] * k4[i]
                + tab.e[3] * k5[i]
                + tab.e[4] * k6[i]
                + tab.e[5] * k7[i]);
    }
    Ok(Trial { y: y5, k7, err })
}

fn error_norm<T: Scalar, const N: usize>(
    y0: &[T; N],
    trial: &Trial<T, N>,
    cfg: &IntegratorConfig<T>,
) -> T {
    let mut worst = T::zero();
    for i in 0..N {
        let scale = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(trial.y[i].abs());
        worst = worst.max(trial.err[i].abs() / scale);
    }
    worst
}

/// Integrate `dy/dt = f(y)` from `(t0, y0)` until the first event fires or `t_end` is reached.
///
/// Event functions are not checked at `t0`; callers decide how to treat an
/// initial state that already sits on an event surface.
pub fn integrate<T, const N: usize, F>(
    f: F,
    t0: T,
    y0: [T; N],
    t_end: T,
    events: &[EventFn<'_, T, N>],
    cfg: &IntegratorConfig<T>,
) -> Result<Stop<T, N>, DynamicsError>
where
    T: Scalar,
    F: Fn(&[T; N]) -> Result<[T; N], DynamicsError>,
{
    let tab = Tableau::new();
    let safety: T = lit(0.9);
    let min_scale: T = lit(0.2);
    let max_scale: T = lit(5.0);
    let exponent: T = lit(-0.2);

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(&y)?;
    let mut g_prev: Vec<T> = events.iter().map(|e| (e.g)(&y)).collect();
    let mut h = cfg.initial_step.min(cfg.max_step);

    while t < t_end {
        let remaining = t_end - t;
        let h_try = h.min(remaining);
        let h_floor = T::epsilon() * lit(16.0) * (T::one() + t.abs());
        if h_try < h_floor && h_try < remaining {
            return Err(DynamicsError::StepUnderflow { t: t.to_f64_lossy() });
        }

        let trial = dp_step(&f, &tab, &y, &k1, h_try)?;
        if trial.y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t: t.to_f64_lossy() });
        }
        let err = error_norm(&y, &trial, cfg);
        if !(err <= T::one()) {
            let scale = if err.is_finite() {
                (safety * err.powf(exponent)).max(lit(0.1))
            } else {
                lit(0.1)
            };
            h = h_try * scale.min(T::one());
            continue;
        }

        // Accepted step: look for events.
        let g_new: Vec<T> = events.iter().map(|e| (e.g)(&trial.y)).collect();
        let mut first: Option<(T, [T; N], usize, T)> = None;
        for (idx, ev) in events.iter().enumerate() {
            if ev.crossing.before(g_prev[idx]) && ev.crossing.after(g_new[idx]) {
                let (h_ev, y_ev, res) =
                    locate(&f, &tab, &y, &k1, h_try, ev, g_prev[idx], g_new[idx], &trial.y, cfg)?;
                let earlier = match first {
                    Some((h_best, ..)) => h_ev < h_best,
                    None => true,
                };
                if earlier {
                    first = Some((h_ev, y_ev, idx, res));
                }
            }
        }
        if let Some((h_ev, y_ev, idx, res)) = first {
            return Ok(Stop {
                t: t + h_ev,
                y: y_ev,
                event: Some(idx),
                residual: res,
            });
        }

        t = if h_try == remaining { t_end } else { t + h_try };
        y = trial.y;
        k1 = trial.k7;
        g_prev = g_new;
        let scale = if err > T::zero() {
            (safety * err.powf(exponent)).max(min_scale).min(max_scale)
        } else {
            max_scale
        };
        h = (h_try * scale).min(cfg.max_step);
    }

    Ok(Stop {
        t,
        y,
        event: None,
        residual: T::zero(),
    })
}

/// Find the step size in `(0, h]` at which the event function crosses zero.
#[allow(clippy::too_many_arguments)]
fn locate<T, const N: usize, F>(
    f: &F,
    tab: &Tableau<T>,
    y0: &[T; N],
    k1: &[T; N],
    h: T,
    ev: &EventFn<'_, T, N>,
    g0: T,
    gh: T,
    yh: &[T; N],
    cfg: &IntegratorConfig<T>,
) -> Result<(T, [T; N], T), DynamicsError>
where
    T: Scalar,
    F: Fn(&[T; N]) -> Result<[T; N], DynamicsError>,
{
    if gh.abs() <= cfg.event_tol {
        return Ok((h, *yh, gh));
    }
    if g0.abs() <= cfg.event_tol {
        return Ok((T::zero(), *y0, g0));
    }
    // Bracket: `a` on the pre-event side, `b` on the post-event side.
    let (mut a, mut ga) = (T::zero(), g0);
    let (mut b, mut gb, mut yb) = (h, gh, *yh);
    let mut side = 0i8;
    let half: T = lit(0.5);
    for _ in 0..200 {
        let mut c = (a * gb - b * ga) / (gb - ga);
        let width = b - a;
        if !c.is_finite() || c <= a || c >= b {
            c = a + half * width;
        }
        let yc = if c == T::zero() {
            *y0
        } else {
            dp_step(f, tab, y0, k1, c)?.y
        };
        let gc = (ev.g)(&yc);
        if gc.abs() <= cfg.event_tol {
            return Ok((c, yc, gc));
        }
        if ev.crossing.after(gc) {
            b = c;
            gb = gc;
            yb = yc;
            if side == 1 {
                ga = ga * half;
            }
            side = 1;
        } else {
            a = c;
            ga = gc;
            if side == -1 {
                gb = gb * half;
            }
            side = -1;
        }
        if b - a <= T::epsilon() * lit(4.0) * h {
            break;
        }
    }
    // Bracket collapsed without meeting the residual bound; report the post-event side.
    let gb_true = (ev.g)(&yb);
    Ok((b, yb, gb_true))
}
