//! Viable and robust sets over a transition grid.
//!
//! `Q_N` holds the non-failing state-action cells, `Q_V` the cells from which
//! failure can be avoided forever, and `Q_R(eta)` the cells that stay viable
//! when every chosen action is perturbed by up to `eta`. State masks are the
//! projections of these sets onto the state axis.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::poincare::{GridSpec, TransitionGrid};
use crate::scalar::Scalar;

pub const SET_MASK_KIND: &str = "set-mask";
pub const STATE_MASK_KIND: &str = "state-mask";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "lowercase")]
pub enum SetKind {
    /// Non-failing pairs.
    Qn,
    /// Viable pairs.
    Qv,
    /// Robust pairs under action noise of half-width `eta_rad`.
    Qr { eta_rad: f64 },
}

/// Membership over state-action cells, row-major by state cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SetMask<T> {
    pub spec: GridSpec<T>,
    pub kind: SetKind,
    member: Vec<bool>,
}

/// Membership over state cells.
#[derive(Clone, Debug, PartialEq)]
pub struct StateMask<T> {
    pub spec: GridSpec<T>,
    member: Vec<bool>,
}

/// Bounded symmetric action noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    /// Half-width [rad].
    pub eta: T,
}

impl<T: Scalar> NoiseModel<T> {
    pub fn new(eta: T) -> Result<Self> {
        if !(eta >= T::zero()) || !eta.is_finite() {
            return Err(Error::Precondition(format!("noise half-width {eta} must be >= 0")));
        }
        Ok(Self { eta })
    }

    pub fn from_degrees(eta_deg: T) -> Result<Self> {
        Self::new(eta_deg.to_radians())
    }

    /// Noise half-width in whole action cells, rounded up.
    pub fn cells(&self, dalpha: T) -> usize {
        let ratio = (self.eta / dalpha).to_f64_lossy();
        // Absorb rounding so an exact multiple of the cell width is not bumped up.
        (ratio - 1e-9).ceil().max(0.0) as usize
    }
}

impl<T: Scalar> SetMask<T> {
    pub fn empty(spec: GridSpec<T>, kind: SetKind) -> Self {
        Self {
            spec,
            kind,
            member: vec![false; spec.n_cells()],
        }
    }

    pub fn from_fn(spec: GridSpec<T>, kind: SetKind, f: impl Fn(usize, usize) -> bool) -> Self {
        let member = (0..spec.n_cells())
            .map(|idx| f(idx / spec.n_alpha, idx % spec.n_alpha))
            .collect();
        Self { spec, kind, member }
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.member[i * self.spec.n_alpha + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.member[i * self.spec.n_alpha + j] = value;
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|m| *m)
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn row(&self, i: usize) -> &[bool] {
        let n = self.spec.n_alpha;
        &self.member[i * n..(i + 1) * n]
    }

    pub fn is_subset_of(&self, other: &SetMask<T>) -> bool {
        self.member.len() == other.member.len()
            && self.member.iter().zip(&other.member).all(|(a, b)| !*a || *b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_artifact()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_artifact(&Artifact::load(path)?)
    }

    pub fn to_artifact(&self) -> Result<Artifact> {
        let header = MaskHeader {
            set: self.kind,
            spec: self.spec.cast(),
        };
        let rows = self
            .member
            .chunks(self.spec.n_alpha)
            .map(|r| r.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
            .collect();
        Artifact::new(SET_MASK_KIND, &header, rows)
    }

    pub fn from_artifact(a: &Artifact) -> Result<Self> {
        a.expect_kind(SET_MASK_KIND)?;
        let h: MaskHeader = a.header_as()?;
        let spec: GridSpec<T> = h.spec.cast();
        let member = decode_bits(&a.rows, spec.n_s, spec.n_alpha)?;
        Ok(Self {
            spec,
            kind: h.set,
            member,
        })
    }
}

impl<T: Scalar> StateMask<T> {
    pub fn from_members(spec: GridSpec<T>, member: Vec<bool>) -> Self {
        assert_eq!(member.len(), spec.n_s);
        Self { spec, member }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|m| *m)
    }

    /// Fraction of state cells that are members.
    pub fn measure(&self) -> f64 {
        self.count() as f64 / self.member.len() as f64
    }

    pub fn is_subset_of(&self, other: &StateMask<T>) -> bool {
        self.member.len() == other.member.len()
            && self.member.iter().zip(&other.member).all(|(a, b)| !*a || *b)
    }

    pub fn save(&self, path: impl AsRef<Path>, source: SetKind) -> Result<()> {
        self.to_artifact(source)?.save(path)
    }

    pub fn to_artifact(&self, source: SetKind) -> Result<Artifact> {
        let header = MaskHeader {
            set: source,
            spec: self.spec.cast(),
        };
        let rows = self
            .member
            .iter()
            .map(|&m| vec![if m { 1.0 } else { 0.0 }])
            .collect();
        Artifact::new(STATE_MASK_KIND, &header, rows)
    }

    pub fn from_artifact(a: &Artifact) -> Result<(Self, SetKind)> {
        a.expect_kind(STATE_MASK_KIND)?;
        let h: MaskHeader = a.header_as()?;
        let spec: GridSpec<T> = h.spec.cast();
        let member = decode_bits(&a.rows, spec.n_s, 1)?;
        Ok((Self { spec, member }, h.set))
    }
}

fn decode_bits(rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<Vec<bool>> {
    if rows.len() != n_rows || rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Format("mask payload shape disagrees with spec".into()));
    }
    rows.iter()
        .flatten()
        .map(|&v| match v {
            1.0 => Ok(true),
            0.0 => Ok(false),
            v => Err(Error::Format(format!("mask value {v} is not 0 or 1"))),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskHeader {
    set: SetKind,
    spec: GridSpec<f64>,
}

/// `Q_N`: cells whose transition reaches a next apex.
pub fn non_failing_set<T: Scalar>(g: &TransitionGrid<T>) -> SetMask<T> {
    SetMask::from_fn(g.spec, SetKind::Qn, |i, j| g.get(i, j).next_s().is_some())
}

/// Orthogonal projection onto the state axis.
pub fn project<T: Scalar>(m: &SetMask<T>) -> StateMask<T> {
    let member = m
        .member
        .chunks(m.spec.n_alpha)
        .map(|row| row.iter().any(|x| *x))
        .collect();
    StateMask {
        spec: m.spec,
        member,
    }
}

/// Member-cell fraction of the whole state-action grid.
pub fn measure<T: Scalar>(m: &SetMask<T>) -> f64 {
    m.count() as f64 / m.member.len() as f64
}

/// Viable pairs `Q_V` and the viability kernel `S_V`.
///
/// Starting from `Q_N`, pairs whose successor state lies outside the current
/// projection are removed in synchronous sweeps until the projection stops
/// changing.
pub fn viable_sets<T: Scalar>(g: &TransitionGrid<T>) -> (SetMask<T>, StateMask<T>) {
    let mut q = non_failing_set(g);
    q.kind = SetKind::Qv;
    let mut s_v: Option<StateMask<T>> = None;
    loop {
        let proj = project(&q);
        if s_v.as_ref() == Some(&proj) {
            break;
        }
        let n_alpha = g.spec.n_alpha;
        q.member = q
            .member
            .par_iter()
            .enumerate()
            .map(|(idx, &m)| {
                m && g
                    .next_cell(idx / n_alpha, idx % n_alpha)
                    .is_some_and(|c| proj.contains(c))
            })
            .collect();
        s_v = Some(proj);
    }
    let s_v = s_v.expect("loop runs at least once");
    (q, s_v)
}

/// One synchronous robustness sweep against the frozen set `q` and its
/// projection. A pair of `q` survives iff every action within `n` cells of it
/// is a non-failing viable pair (member of `q_v`) whose successor lies in
/// `proj(q)`. Actions past the grid edge fail.
pub fn robust_sweep<T: Scalar>(
    g: &TransitionGrid<T>,
    q_v: &SetMask<T>,
    q: &SetMask<T>,
    n: usize,
) -> SetMask<T> {
    let proj = project(q);
    let n_alpha = g.spec.n_alpha;
    let member: Vec<bool> = (0..g.spec.n_s)
        .into_par_iter()
        .flat_map_iter(|i| {
            // prefix[j] = number of safe actions among 0..j in this row
            let mut prefix = Vec::with_capacity(n_alpha + 1);
            prefix.push(0usize);
            for j in 0..n_alpha {
                let ok = q_v.contains(i, j) && g.next_cell(i, j).is_some_and(|c| proj.contains(c));
                prefix.push(prefix[j] + ok as usize);
            }
            (0..n_alpha).map(move |j| {
                if !q.contains(i, j) || j < n || j + n >= n_alpha {
                    return false;
                }
                prefix[j + n + 1] - prefix[j - n] == 2 * n + 1
            })
        })
        .collect();
    SetMask {
        spec: q.spec,
        kind: q.kind,
        member,
    }
}

/// Robust pairs `Q_R` and robust states `S_R` under bounded action noise.
///
/// Sweeps repeat until the pair set itself stops changing, so the result is a
/// fixed point of [`robust_sweep`].
pub fn robust_sets<T: Scalar>(
    g: &TransitionGrid<T>,
    q_v: &SetMask<T>,
    noise: &NoiseModel<T>,
) -> (SetMask<T>, StateMask<T>) {
    let n = noise.cells(g.spec.dalpha());
    let mut q = q_v.clone();
    q.kind = SetKind::Qr {
        eta_rad: noise.eta.to_f64_lossy(),
    };
    loop {
        let next = robust_sweep(g, q_v, &q, n);
        if next.member == q.member {
            break;
        }
        q = next;
    }
    let s = project(&q);
    (q, s)
}
