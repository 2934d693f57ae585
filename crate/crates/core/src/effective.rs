//! Effective side velocities for column-periodic mean structures, in exact
//! rational arithmetic.
//!
//! Everything here decides equalities (minimizer ties, singular-set
//! membership, interval breakpoints), so all lengths, means and `gamma`
//! enter as `BigRational`; floats are only produced for reporting.

use crate::field::ColumnMeans;
use crate::lattice::SideKind;
use crate::rational::{fmt_ratio, to_f64};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Means list relevant for a side: `mu` for vertical sides, `lambda` for
/// horizontal ones.
pub fn side_means(means: &ColumnMeans, side: SideKind) -> &[BigRational] {
    if side.is_vertical() {
        &means.mu
    } else {
        &means.lambda
    }
}

fn check_admissible(means: &ColumnMeans, gamma: &BigRational) -> Result<()> {
    if gamma <= &BigRational::zero() {
        return Err(Error::InvalidInput("gamma must be positive".into()));
    }
    let quarter = BigRational::new(BigInt::one(), BigInt::from(4)) / gamma;
    if means.max_abs() >= quarter {
        return Err(Error::InvalidInput(
            "means must satisfy |mean| < 1/(4 gamma)".into(),
        ));
    }
    Ok(())
}

/// The per-residue step functional
/// `v(N) = -2N + L a_k + (L / 2 gamma) (N + 1) N` with `k = n + sign * N`.
fn step_value(
    n_steps: i64,
    start_residue: i64,
    l: &BigRational,
    a: &[BigRational],
    gamma: &BigRational,
    sign: i64,
) -> BigRational {
    let m = a.len() as i64;
    let k = (start_residue + sign * n_steps).rem_euclid(m) as usize;
    let nq = int(n_steps);
    -int(2) * &nq + l * &a[k] + l * (&nq + int(1)) * &nq / (int(2) * gamma)
}

/// Integer minimizer of the per-residue functional over
/// `{N* - 1, N*, N* + 1} with N* = floor(2 gamma / L)`, clipped at zero.
///
/// Returns the smallest minimizer and whether it is unique. Candidates two
/// or more away from `N*` are strictly worse for admissible means, so the
/// triple decides uniqueness over all of `N >= 0`.
pub fn residue_minimizer(
    start_residue: u32,
    l: &BigRational,
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
) -> Result<(i64, bool)> {
    if l <= &BigRational::zero() {
        return Err(Error::InvalidInput("side length must be positive".into()));
    }
    check_admissible(means, gamma)?;
    let a = side_means(means, side);
    let sign = side.step_sign();
    let n_star = (int(2) * gamma / l).floor().to_integer().to_i64().unwrap();
    let lo = (n_star - 1).max(0);
    let mut best_n = lo;
    let mut best_v = step_value(lo, start_residue as i64, l, a, gamma, sign);
    let mut unique = true;
    for n in (lo + 1)..=(n_star + 1) {
        let v = step_value(n, start_residue as i64, l, a, gamma, sign);
        if v < best_v {
            best_v = v;
            best_n = n;
            unique = true;
        } else if v == best_v {
            unique = false;
        }
    }
    Ok((best_n, unique))
}

/// Eventually periodic orbit of one side's dual-line position.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitResult {
    /// Steps before the residue cycle is entered.
    pub pre_period: u32,
    /// Minimal cycle length `T >= 1`.
    pub period: u32,
    /// Absolute displacement over one cycle, a multiple `M * m` of the
    /// stationarity period.
    pub displacement: i64,
    /// `M m / T`, in lowest terms.
    pub velocity: BigRational,
}

/// Iterate the residue orbit from `start_residue` and detect its cycle.
///
/// The residue map is deterministic on `m` states, so the cycle is entered
/// within `m` steps and `pre_period + period <= m`. Errors with "singular
/// length" if a visited residue has a non-unique minimizer.
pub fn orbit(
    start_residue: u32,
    l: &BigRational,
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
) -> Result<OrbitResult> {
    let m = means.m as i64;
    let sign = side.step_sign();
    let mut position: i64 = start_residue as i64;
    let mut seen: Vec<Option<(u32, i64)>> = vec![None; m as usize];
    for step in 0..=(m as u32) {
        let residue = position.rem_euclid(m) as usize;
        if let Some((first_step, first_pos)) = seen[residue] {
            let period = step - first_step;
            let displacement = (position - first_pos).abs();
            debug_assert_eq!(displacement % m, 0);
            return Ok(OrbitResult {
                pre_period: first_step,
                period,
                displacement,
                velocity: BigRational::new(BigInt::from(displacement), BigInt::from(period)),
            });
        }
        seen[residue] = Some((step, position));
        let (n, unique) = residue_minimizer(residue as u32, l, means, gamma, side)?;
        if !unique {
            return Err(Error::SingularLength(format!(
                "non-unique minimizer at residue {residue} for L = {}",
                fmt_ratio(l)
            )));
        }
        position += sign * n;
    }
    unreachable!("cycle must appear within m + 1 visits");
}

/// Orbit positions themselves (for monotonicity checks): `count` steps of
/// the dual-line position starting at `start_position`.
pub fn orbit_positions(
    start_position: i64,
    count: usize,
    l: &BigRational,
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
) -> Result<Vec<i64>> {
    let m = means.m as i64;
    let sign = side.step_sign();
    let mut out = Vec::with_capacity(count + 1);
    let mut position = start_position;
    out.push(position);
    for _ in 0..count {
        let residue = position.rem_euclid(m) as u32;
        let (n, unique) = residue_minimizer(residue, l, means, gamma, side)?;
        if !unique {
            return Err(Error::SingularLength(format!(
                "non-unique minimizer at residue {residue} for L = {}",
                fmt_ratio(l)
            )));
        }
        position += sign * n;
        out.push(position);
    }
    Ok(out)
}

/// Mean differences that generate the singular set of a side:
/// `sign * gamma * (a_k - a_{k-1})` for each residue `k`.
fn singular_offsets(means: &ColumnMeans, gamma: &BigRational, side: SideKind) -> Vec<BigRational> {
    let a = side_means(means, side);
    let m = a.len();
    let mut offs: Vec<BigRational> = (0..m)
        .map(|k| {
            let prev = (k + m - 1) % m;
            let d = &a[k] - &a[prev];
            if side.step_sign() > 0 {
                gamma * d
            } else {
                -(gamma * d)
            }
        })
        .collect();
    offs.sort();
    offs.dedup();
    offs
}

/// All singular side lengths in `[lo, hi]`: the lengths where
/// `2 gamma / L` lands in `N_0 + offset` for one of the side's offsets.
pub fn singular_lengths(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
    lo: &BigRational,
    hi: &BigRational,
) -> Result<Vec<BigRational>> {
    check_admissible(means, gamma)?;
    if lo <= &BigRational::zero() || hi < lo {
        return Err(Error::InvalidInput(
            "length range must satisfy 0 < lo <= hi".into(),
        ));
    }
    let two_gamma = int(2) * gamma;
    let q_lo = &two_gamma / hi; // smallest 2 gamma / L in range
    let q_hi = &two_gamma / lo;
    let mut out: Vec<BigRational> = Vec::new();
    for d in singular_offsets(means, gamma, side) {
        let n_min = (&q_lo - &d).ceil().to_integer().to_i64().unwrap().max(0);
        let n_max = (&q_hi - &d).floor().to_integer().to_i64().unwrap();
        for n in n_min..=n_max {
            let q = int(n) + &d;
            if q <= BigRational::zero() {
                continue;
            }
            let l = &two_gamma / &q;
            if &l >= lo && &l <= hi {
                out.push(l);
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Exact membership test: is `l` one of the side's singular lengths?
pub fn is_singular_length(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
    l: &BigRational,
) -> bool {
    let q = int(2) * gamma / l;
    singular_offsets(means, gamma, side).into_iter().any(|d| {
        let n = &q - &d;
        n >= BigRational::zero() && n.is_integer()
    })
}

/// Closest singular length strictly below `l`, if any (they accumulate at
/// zero, so there always is one for positive `l`; `None` only if every
/// family sits entirely above `l`).
pub fn next_singular_below(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
    l: &BigRational,
) -> Option<BigRational> {
    let two_gamma = int(2) * gamma;
    let q = &two_gamma / l;
    singular_offsets(means, gamma, side)
        .into_iter()
        .filter_map(|d| {
            // Smallest n in N0 with n + d > q.
            let n = ((&q - &d).floor().to_integer().to_i64().unwrap() + 1).max(0);
            let qq = int(n) + &d;
            (qq > q).then(|| &two_gamma / qq)
        })
        .max()
}

/// Closest singular length strictly above `l`, if any.
pub fn next_singular_above(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
    l: &BigRational,
) -> Option<BigRational> {
    let two_gamma = int(2) * gamma;
    let q = &two_gamma / l;
    singular_offsets(means, gamma, side)
        .into_iter()
        .filter_map(|d| {
            // Largest n in N0 with 0 < n + d < q.
            let n = (&q - &d).ceil().to_integer().to_i64().unwrap() - 1;
            if n < 0 {
                return None;
            }
            let qq = int(n) + &d;
            (qq > BigRational::zero() && qq < q).then(|| &two_gamma / qq)
        })
        .min()
}

/// Pinning threshold
/// `min_k max(2 gamma / (1 + gamma D1(k)), 4 gamma / (3 + gamma D2(k)))`
/// with `D1(k) = a_{k+s} - a_k`, `D2(k) = a_{k+2s} - a_k`; always `> gamma`.
pub fn pinning_threshold(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
) -> Result<BigRational> {
    check_admissible(means, gamma)?;
    let a = side_means(means, side);
    let m = a.len() as i64;
    let s = side.step_sign();
    let idx = |k: i64| ((k % m + m) % m) as usize;
    let mut best: Option<BigRational> = None;
    for k in 0..m {
        let d1 = &a[idx(k + s)] - &a[idx(k)];
        let d2 = &a[idx(k + 2 * s)] - &a[idx(k)];
        let t1 = int(2) * gamma / (int(1) + gamma * d1);
        let t2 = int(4) * gamma / (int(3) + gamma * d2);
        let t = t1.max(t2);
        best = Some(match best {
            None => t,
            Some(b) => b.min(t),
        });
    }
    Ok(best.expect("m >= 1"))
}

/// One constancy interval of the effective velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityInterval {
    pub lo: BigRational,
    pub hi: BigRational,
    pub velocity: BigRational,
}

/// The piecewise-constant effective velocity of one side over a length
/// range: singular lengths, open intervals with their constant velocities,
/// and the pinning threshold.
#[derive(Debug, Clone)]
pub struct EffectiveVelocityTable {
    pub side: SideKind,
    pub gamma: BigRational,
    pub means: ColumnMeans,
    pub threshold: BigRational,
    pub singular: Vec<BigRational>,
    pub intervals: Vec<VelocityInterval>,
}

/// Build the table over `[lo, hi]`: compute the singular set, evaluate the
/// orbit velocity once per open interval (it is constant there), and attach
/// the pinning threshold.
pub fn build_table(
    means: &ColumnMeans,
    gamma: &BigRational,
    side: SideKind,
    lo: &BigRational,
    hi: &BigRational,
) -> Result<EffectiveVelocityTable> {
    let singular = singular_lengths(means, gamma, side, lo, hi)?;
    let mut cuts = Vec::with_capacity(singular.len() + 2);
    cuts.push(lo.clone());
    for s in &singular {
        if s > lo && s < hi {
            cuts.push(s.clone());
        }
    }
    cuts.push(hi.clone());
    let mut intervals = Vec::with_capacity(cuts.len().saturating_sub(1));
    for w in cuts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a >= b {
            continue;
        }
        let mid = (a + b) / int(2);
        let res = orbit(0, &mid, means, gamma, side)?;
        intervals.push(VelocityInterval { lo: a.clone(), hi: b.clone(), velocity: res.velocity });
    }
    Ok(EffectiveVelocityTable {
        side,
        gamma: gamma.clone(),
        means: means.clone(),
        threshold: pinning_threshold(means, gamma, side)?,
        singular,
        intervals,
    })
}

impl EffectiveVelocityTable {
    /// Velocity at a non-singular length, extending beyond the stored range
    /// by a direct orbit evaluation.
    pub fn velocity_at(&self, l: &BigRational) -> Result<BigRational> {
        for iv in &self.intervals {
            if l > &iv.lo && l < &iv.hi {
                return Ok(iv.velocity.clone());
            }
        }
        Ok(orbit(0, l, &self.means, &self.gamma, self.side)?.velocity)
    }

    /// One-sided limits at a singular length: value on the interval just
    /// below (`minus`) and just above (`plus`).
    pub fn one_sided(&self, l: &BigRational) -> Result<(BigRational, BigRational)> {
        let below = next_singular_below(&self.means, &self.gamma, self.side, l)
            .map(|s| (&s + l) / int(2))
            .unwrap_or_else(|| l / int(2));
        let above = match next_singular_above(&self.means, &self.gamma, self.side, l) {
            Some(s) => (&s + l) / int(2),
            None => l * int(2),
        };
        let minus = orbit(0, &below, &self.means, &self.gamma, self.side)?.velocity;
        let plus = orbit(0, &above, &self.means, &self.gamma, self.side)?.velocity;
        Ok((minus, plus))
    }

    /// Formula-based membership, valid also outside the stored range.
    pub fn is_singular(&self, l: &BigRational) -> bool {
        is_singular_length(&self.means, &self.gamma, self.side, l)
    }

    /// JSON export: rationals rendered as `"num/den"` strings, the interval
    /// velocity additionally split into integer `num`/`den`.
    pub fn to_json(&self) -> serde_json::Value {
        let a = side_means(&self.means, self.side);
        serde_json::json!({
            "side": self.side.name(),
            "m": self.means.m,
            "gamma": fmt_ratio(&self.gamma),
            "means": a.iter().map(fmt_ratio).collect::<Vec<_>>(),
            "threshold": fmt_ratio(&self.threshold),
            "intervals": self.intervals.iter().map(|iv| {
                serde_json::json!({
                    "lo": fmt_ratio(&iv.lo),
                    "hi": fmt_ratio(&iv.hi),
                    "num": iv.velocity.numer().to_i64(),
                    "den": iv.velocity.denom().to_i64(),
                    "value": to_f64(&iv.velocity),
                })
            }).collect::<Vec<_>>(),
            "singular": self.singular.iter().map(fmt_ratio).collect::<Vec<_>>(),
        })
    }
}
