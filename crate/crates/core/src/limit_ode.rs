//! Event-driven integration of the continuum limit laws: the homogeneous
//! rectangle system and the four-table column-periodic law.
//!
//! Side velocities are piecewise constant in the side lengths, so positions
//! are exactly linear between events and every event time is the solution of
//! a linear equation. The event loop runs in exact rational arithmetic while
//! the lengths are of order one; event spacings shrink like `L^3` near
//! extinction, so below `exact_floor` the integrator switches to a plain-f64
//! event loop under the floor law (the table velocity differs from the floor
//! law by at most one cell per step there, contributing an extinction-time
//! error below `floor^3 / gamma^2`, and integration stops at `tail_floor`
//! leaving a residual below `tail_floor^2 / (4 gamma)`).

use crate::effective::{
    build_table, is_singular_length, next_singular_below, EffectiveVelocityTable,
};
use crate::field::ColumnMeans;
use crate::flow::Trajectory;
use crate::lattice::SideKind;
use crate::rational::{exact, fmt_sig12, to_f64};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{ToPrimitive, Zero};

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Axis-aligned rectangle given by its four side positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumRect {
    pub p_left: f64,
    pub p_right: f64,
    pub p_bottom: f64,
    pub p_top: f64,
}

impl ContinuumRect {
    pub fn new(p_left: f64, p_right: f64, p_bottom: f64, p_top: f64) -> Result<Self> {
        if !(p_left < p_right && p_bottom < p_top) {
            return Err(Error::InvalidInput(
                "rectangle needs p_left < p_right and p_bottom < p_top".into(),
            ));
        }
        Ok(ContinuumRect { p_left, p_right, p_bottom, p_top })
    }

    pub fn len_horizontal(&self) -> f64 {
        self.p_right - self.p_left
    }

    pub fn len_vertical(&self) -> f64 {
        self.p_top - self.p_bottom
    }
}

/// Which one-sided effective velocity applies while a length sits exactly on
/// a singular value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularSelection {
    /// Limit from larger lengths (the slower branch); the default.
    RightLimit,
    /// Limit from smaller lengths (the faster branch).
    LeftLimit,
}

/// Effective velocity of a side at one length: a plain value on the open
/// intervals, one-sided limits at singular lengths.
#[derive(Debug, Clone)]
enum SideValue {
    Regular(BigRational),
    Singular { minus: BigRational, plus: BigRational },
}

/// The law driving the four sides.
#[derive(Debug, Clone)]
pub enum LimitLaw {
    /// Every side moves at `floor(2 gamma / L) / gamma` for its own length.
    Homogeneous { gamma: BigRational },
    /// Per-side effective-velocity tables `[left, bottom, right, top]`.
    Tables(Box<[EffectiveVelocityTable; 4]>),
}

impl LimitLaw {
    pub fn homogeneous(gamma: f64) -> Self {
        LimitLaw::Homogeneous { gamma: exact(gamma) }
    }

    /// Build the four tables from one set of column means.
    pub fn from_means(
        means: &ColumnMeans,
        gamma: &BigRational,
        l_lo: &BigRational,
        l_hi: &BigRational,
    ) -> Result<Self> {
        let t = |side| build_table(means, gamma, side, l_lo, l_hi);
        Ok(LimitLaw::Tables(Box::new([
            t(SideKind::LeftVertical)?,
            t(SideKind::BottomHorizontal)?,
            t(SideKind::RightVertical)?,
            t(SideKind::TopHorizontal)?,
        ])))
    }

    pub fn gamma(&self) -> BigRational {
        match self {
            LimitLaw::Homogeneous { gamma } => gamma.clone(),
            LimitLaw::Tables(ts) => ts[0].gamma.clone(),
        }
    }

    /// `v_eff` at a length: either the unambiguous value, or the one-sided
    /// limits `(minus, plus)` at a singular length.
    fn side_value(&self, side_index: usize, l: &BigRational) -> Result<SideValue> {
        match self {
            LimitLaw::Homogeneous { gamma } => {
                let q = int(2) * gamma / l;
                if q.is_integer() {
                    // floor(2 gamma / L) jumps from q - 1 (above) to q (below).
                    let q = q.to_integer();
                    Ok(SideValue::Singular {
                        minus: BigRational::from_integer(q.clone()),
                        plus: BigRational::from_integer(q - BigInt::from(1)),
                    })
                } else {
                    Ok(SideValue::Regular(q.floor()))
                }
            }
            LimitLaw::Tables(ts) => {
                let t = &ts[side_index];
                if t.is_singular(l) {
                    let (minus, plus) = t.one_sided(l)?;
                    Ok(SideValue::Singular { minus, plus })
                } else {
                    Ok(SideValue::Regular(t.velocity_at(l)?))
                }
            }
        }
    }

    /// Whether `l` is a singular length for the side.
    fn side_singular(&self, side_index: usize, l: &BigRational) -> bool {
        match self {
            LimitLaw::Homogeneous { gamma } => (int(2) * gamma / l).is_integer(),
            LimitLaw::Tables(ts) => {
                let t = &ts[side_index];
                is_singular_length(&t.means, &t.gamma, t.side, l)
            }
        }
    }

    /// Side velocities `[left, bottom, right, top]` consistent with the
    /// actual motion: a length that keeps shrinking passes through a
    /// singular value immediately, so its sides take the below-interval
    /// velocity; only a stationary length leaves the one-sided choice to the
    /// configured selection. The mutual dependence (a length's rate is set
    /// by the perpendicular pair) is resolved by a short fixed-point loop;
    /// upgrades only increase speeds, so it terminates after at most two
    /// passes.
    fn resolve_velocities(
        &self,
        lh: &BigRational,
        lv: &BigRational,
        sel: SingularSelection,
    ) -> Result<[BigRational; 4]> {
        let values = [
            self.side_value(0, lv)?,
            self.side_value(1, lh)?,
            self.side_value(2, lv)?,
            self.side_value(3, lh)?,
        ];
        let pick = |v: &SideValue| match v {
            SideValue::Regular(x) => x.clone(),
            SideValue::Singular { minus, plus } => match sel {
                SingularSelection::RightLimit => plus.clone(),
                SingularSelection::LeftLimit => minus.clone(),
            },
        };
        let below = |v: &SideValue| match v {
            SideValue::Regular(x) => x.clone(),
            SideValue::Singular { minus, .. } => minus.clone(),
        };
        let mut v: Vec<BigRational> = values.iter().map(pick).collect();
        for _ in 0..4 {
            let mut changed = false;
            // L_v shrinks iff bottom + top move; then left/right pass through.
            if !(&v[1] + &v[3]).is_zero() {
                for i in [0usize, 2] {
                    let b = below(&values[i]);
                    if v[i] != b {
                        v[i] = b;
                        changed = true;
                    }
                }
            }
            if !(&v[0] + &v[2]).is_zero() {
                for i in [1usize, 3] {
                    let b = below(&values[i]);
                    if v[i] != b {
                        v[i] = b;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        Ok([v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()])
    }

    /// Closest breakpoint strictly below `l` among the two sides the length
    /// governs (`side_a`, `side_b`).
    fn next_breakpoint_below(
        &self,
        side_a: usize,
        side_b: usize,
        l: &BigRational,
    ) -> Option<BigRational> {
        match self {
            LimitLaw::Homogeneous { gamma } => {
                let q = int(2) * gamma / l;
                let n = q.floor().to_integer().to_i64().unwrap() + 1;
                Some(int(2) * gamma / int(n))
            }
            LimitLaw::Tables(ts) => {
                let a = &ts[side_a];
                let b = &ts[side_b];
                let ba = next_singular_below(&a.means, &a.gamma, a.side, l);
                let bb = next_singular_below(&b.means, &b.gamma, b.side, l);
                match (ba, bb) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }
}

/// One node of the piecewise-linear limit trajectory; `velocities` are the
/// side speeds active on the segment starting here (inward positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEvent {
    pub t: f64,
    pub rect: ContinuumRect,
    /// `[left, bottom, right, top]` in continuum units (already / gamma).
    pub velocities: [f64; 4],
    /// True when a governing length sits exactly on a singular value here.
    pub inclusion: bool,
}

/// Event-driven limit trajectory.
#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    pub events: Vec<LimitEvent>,
    pub extinction_time: Option<f64>,
    pub inclusion_times: Vec<f64>,
    /// True when the event budget ran out before `t_max` or extinction.
    pub truncated: bool,
    pub t_max: f64,
}

impl LimitTrajectory {
    /// Positions at time `t` (linear interpolation between events; constant
    /// after the last event).
    pub fn rect_at(&self, t: f64) -> Option<ContinuumRect> {
        let first = self.events.first()?;
        if t <= first.t {
            return Some(first.rect);
        }
        for w in self.events.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if t <= b.t {
                let dt = t - a.t;
                return Some(ContinuumRect {
                    p_left: a.rect.p_left + a.velocities[0] * dt,
                    p_right: a.rect.p_right - a.velocities[2] * dt,
                    p_bottom: a.rect.p_bottom + a.velocities[1] * dt,
                    p_top: a.rect.p_top - a.velocities[3] * dt,
                });
            }
        }
        let last = self.events.last()?;
        let dt = (t.min(self.t_max) - last.t).max(0.0);
        Some(ContinuumRect {
            p_left: last.rect.p_left + last.velocities[0] * dt,
            p_right: last.rect.p_right - last.velocities[2] * dt,
            p_bottom: last.rect.p_bottom + last.velocities[1] * dt,
            p_top: last.rect.p_top - last.velocities[3] * dt,
        })
    }

    pub fn end_time(&self) -> f64 {
        self.extinction_time.unwrap_or(self.t_max)
    }

    /// CSV export (`t_event` rows of positions and active velocities).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("t_event,p_left,p_right,p_bottom,p_top,v_left,v_bottom,v_right,v_top\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt_sig12(e.t),
                fmt_sig12(e.rect.p_left),
                fmt_sig12(e.rect.p_right),
                fmt_sig12(e.rect.p_bottom),
                fmt_sig12(e.rect.p_top),
                fmt_sig12(e.velocities[0]),
                fmt_sig12(e.velocities[1]),
                fmt_sig12(e.velocities[2]),
                fmt_sig12(e.velocities[3]),
            ));
        }
        out
    }
}

/// Integrator controls; the floors are fractions of the larger initial
/// length.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub t_max: f64,
    pub selection: SingularSelection,
    pub max_events: usize,
    pub exact_floor_fraction: f64,
    pub tail_floor_fraction: f64,
}

impl IntegratorConfig {
    pub fn new(t_max: f64) -> Self {
        IntegratorConfig {
            t_max,
            selection: SingularSelection::RightLimit,
            max_events: 100_000,
            exact_floor_fraction: 1e-2,
            tail_floor_fraction: 1e-6,
        }
    }
}

struct ExactState {
    t: BigRational,
    p: [BigRational; 4], // left, bottom, right, top positions
}

impl ExactState {
    fn len_h(&self) -> BigRational {
        &self.p[2] - &self.p[0]
    }
    fn len_v(&self) -> BigRational {
        &self.p[3] - &self.p[1]
    }
    fn rect_f64(&self) -> ContinuumRect {
        ContinuumRect {
            p_left: to_f64(&self.p[0]),
            p_right: to_f64(&self.p[2]),
            p_bottom: to_f64(&self.p[1]),
            p_top: to_f64(&self.p[3]),
        }
    }
}

/// Integrate the limit law from `initial` until `t_max`, extinction, or the
/// event budget. `t_max <= 0` yields an empty trajectory.
pub fn integrate(
    initial: &ContinuumRect,
    law: &LimitLaw,
    config: &IntegratorConfig,
) -> Result<LimitTrajectory> {
    let mut traj = LimitTrajectory {
        events: Vec::new(),
        extinction_time: None,
        inclusion_times: Vec::new(),
        truncated: false,
        t_max: config.t_max,
    };
    if config.t_max <= 0.0 {
        return Ok(traj);
    }
    let gamma = law.gamma();
    let t_max = exact(config.t_max);
    let scale = initial.len_horizontal().max(initial.len_vertical());
    let exact_floor = exact(config.exact_floor_fraction * scale);
    let tail_floor = config.tail_floor_fraction * scale;

    let mut st = ExactState {
        t: BigRational::zero(),
        p: [
            exact(initial.p_left),
            exact(initial.p_bottom),
            exact(initial.p_right),
            exact(initial.p_top),
        ],
    };

    loop {
        let (lh, lv) = (st.len_h(), st.len_v());
        if lh <= BigRational::zero() || lv <= BigRational::zero() {
            return Err(Error::InvalidInput("initial lengths must be positive".into()));
        }
        // Effective velocities: vertical sides (left/right) are governed by
        // the vertical length, horizontal sides by the horizontal length.
        let [v_left, v_bottom, v_right, v_top] =
            law.resolve_velocities(&lh, &lv, config.selection)?;
        let vels = [&v_left, &v_bottom, &v_right, &v_top];
        let vel_f64: [f64; 4] = [
            to_f64(&(&v_left / &gamma)),
            to_f64(&(&v_bottom / &gamma)),
            to_f64(&(&v_right / &gamma)),
            to_f64(&(&v_top / &gamma)),
        ];
        let inclusion = law.side_singular(0, &lv)
            || law.side_singular(2, &lv)
            || law.side_singular(1, &lh)
            || law.side_singular(3, &lh);
        let t_now = to_f64(&st.t);
        traj.events.push(LimitEvent {
            t: t_now,
            rect: st.rect_f64(),
            velocities: vel_f64,
            inclusion,
        });
        if inclusion {
            traj.inclusion_times.push(t_now);
        }
        if traj.events.len() > config.max_events {
            traj.truncated = true;
            return Ok(traj);
        }

        // Length rates: d L_h / dt = -(v_left + v_right) / gamma.
        let rate_h = (&v_left + &v_right) / &gamma;
        let rate_v = (&v_bottom + &v_top) / &gamma;
        if rate_h.is_zero() && rate_v.is_zero() {
            // Pinned: constant for the rest of the horizon.
            return Ok(traj);
        }

        // Hand over to the tail loop once both lengths are small.
        if lh < exact_floor && lv < exact_floor {
            let (t_ext, rect) = tail_extinction(
                to_f64(&st.t),
                st.rect_f64(),
                to_f64(&gamma),
                tail_floor,
            );
            if t_ext <= config.t_max {
                traj.extinction_time = Some(t_ext);
                traj.events.push(LimitEvent {
                    t: t_ext,
                    rect,
                    velocities: [0.0; 4],
                    inclusion: false,
                });
            }
            return Ok(traj);
        }

        // Next event: a length reaching the closest breakpoint below it, or
        // the horizon.
        let mut dt = &t_max - &st.t;
        if !rate_h.is_zero() {
            let target = law
                .next_breakpoint_below(1, 3, &lh)
                .unwrap_or_else(BigRational::zero)
                .max(BigRational::zero());
            dt = dt.min((&lh - &target) / &rate_h);
        }
        if !rate_v.is_zero() {
            let target = law
                .next_breakpoint_below(0, 2, &lv)
                .unwrap_or_else(BigRational::zero)
                .max(BigRational::zero());
            dt = dt.min((&lv - &target) / &rate_v);
        }
        debug_assert!(dt >= BigRational::zero());

        st.p[0] = &st.p[0] + vels[0] / &gamma * &dt;
        st.p[1] = &st.p[1] + vels[1] / &gamma * &dt;
        st.p[2] = &st.p[2] - vels[2] / &gamma * &dt;
        st.p[3] = &st.p[3] - vels[3] / &gamma * &dt;
        st.t = &st.t + &dt;

        if st.t >= t_max {
            let (lh, lv) = (st.len_h(), st.len_v());
            debug_assert!(lh > BigRational::zero() && lv > BigRational::zero());
            traj.events.push(LimitEvent {
                t: config.t_max,
                rect: st.rect_f64(),
                velocities: [0.0; 4],
                inclusion: false,
            });
            return Ok(traj);
        }
    }
}

/// Plain-f64 event loop under the floor law, from small lengths down to the
/// tail floor; returns the extinction time and final rectangle.
fn tail_extinction(
    t0: f64,
    rect: ContinuumRect,
    gamma: f64,
    tail_floor: f64,
) -> (f64, ContinuumRect) {
    let mut t = t0;
    let (mut pl, mut pr, mut pb, mut pt) =
        (rect.p_left, rect.p_right, rect.p_bottom, rect.p_top);
    let mut guard = 0u64;
    loop {
        let lh = pr - pl;
        let lv = pt - pb;
        if lh <= tail_floor && lv <= tail_floor {
            // Shrink-to-point: neither length may linger while the other
            // vanishes.
            debug_assert!(lh.max(lv) <= 10.0 * tail_floor + 1e-300);
            return (t, ContinuumRect { p_left: pl, p_right: pr, p_bottom: pb, p_top: pt });
        }
        guard += 1;
        if guard > 100_000_000 {
            return (t, ContinuumRect { p_left: pl, p_right: pr, p_bottom: pb, p_top: pt });
        }
        let nv = (2.0 * gamma / lv).floor().max(1.0); // left/right speed * gamma
        let nh = (2.0 * gamma / lh).floor().max(1.0);
        let rate_h = 2.0 * nv / gamma;
        let rate_v = 2.0 * nh / gamma;
        // Next floor-law breakpoints strictly below.
        let bh = 2.0 * gamma / ((2.0 * gamma / lh).floor() + 1.0);
        let bv = 2.0 * gamma / ((2.0 * gamma / lv).floor() + 1.0);
        let dt = ((lh - bh.min(lh * 0.999_999)) / rate_h)
            .min((lv - bv.min(lv * 0.999_999)) / rate_v)
            .max(1e-300);
        pl += nv / gamma * dt;
        pr -= nv / gamma * dt;
        pb += nh / gamma * dt;
        pt -= nh / gamma * dt;
        t += dt;
    }
}

// ---------------------------------------------------------------------------
// Discrete-vs-limit comparison
// ---------------------------------------------------------------------------

/// Sup of side-position distances over the common time range.
#[derive(Debug, Clone, Copy)]
pub struct CompareReport {
    pub sup_distance: f64,
    pub ratio_to_eps: f64,
    pub t_end: f64,
    pub samples: usize,
}

/// Continuum positions of a lattice rectangle.
fn lattice_positions(b: &crate::lattice::LatticeRect) -> ContinuumRect {
    ContinuumRect {
        p_left: (b.x_lo as f64 - 0.5) * b.eps,
        p_right: (b.x_hi as f64 + 0.5) * b.eps,
        p_bottom: (b.y_lo as f64 - 0.5) * b.eps,
        p_top: (b.y_hi as f64 + 0.5) * b.eps,
    }
}

/// Max side-position distance over `[0, t_end]`, sampling the discrete
/// piecewise-constant states against the limit at both ends of each step.
pub fn sup_side_distance(traj: &Trajectory, limit: &LimitTrajectory, t_end: f64) -> (f64, usize) {
    let tau = traj.gamma * traj.eps;
    let mut sup: f64 = 0.0;
    let mut samples = 0;
    for p in &traj.points {
        let t0 = p.time;
        if t0 > t_end {
            break;
        }
        let t1 = (t0 + tau).min(t_end);
        let d = lattice_positions(&p.bounds);
        for t in [t0, t1] {
            if let Some(l) = limit.rect_at(t) {
                let dist = (d.p_left - l.p_left)
                    .abs()
                    .max((d.p_right - l.p_right).abs())
                    .max((d.p_bottom - l.p_bottom).abs())
                    .max((d.p_top - l.p_top).abs());
                sup = sup.max(dist);
                samples += 1;
            }
        }
    }
    (sup, samples)
}

/// Report the sup distance of side positions between a discrete trajectory
/// and a limit trajectory over their common time range.
pub fn compare_to_discrete(traj: &Trajectory, limit: &LimitTrajectory, eps: f64) -> CompareReport {
    let disc_end = traj
        .extinction_step
        .map(|k| k as f64 * traj.gamma * traj.eps)
        .unwrap_or_else(|| traj.points.last().map(|p| p.time).unwrap_or(0.0));
    let t_end = disc_end.min(limit.end_time());
    let (sup, samples) = sup_side_distance(traj, limit, t_end);
    CompareReport { sup_distance: sup, ratio_to_eps: sup / eps, t_end, samples }
}
