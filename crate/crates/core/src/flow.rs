//! The discrete-in-time minimizing-movement scheme.
//!
//! `step_rect` minimizes the exact step energy over inward rectangle
//! candidates (plus the empty set), using prefix sums for the random
//! perimeter and a closed-form dissipation sum, so one step costs
//! `O(cap * perimeter)` instead of `O(candidates * area)`.
//! `step_bruteforce` enumerates every subset of a small window in Gray-code
//! order with incremental energy updates and is the correctness oracle.

use crate::energy::{random_perimeter_rect, total_energy_sets, EnergyBreakdown};
use crate::field::FieldSpec;
use crate::lattice::{d_inf_cells, CellSet, DualPoint, GridSet, LatticeRect};
use crate::rational::fmt_sig12;
use crate::{Error, Result};

/// Parameters shared by the steppers.
#[derive(Debug, Clone)]
pub struct FlowParams {
    pub gamma: f64,
    pub eps: f64,
    pub max_steps: usize,
    /// Candidate caps start at `floor(2 gamma / L_i) + candidate_cap_slack`
    /// per side and expand automatically if the minimizer hits a cap.
    pub candidate_cap_slack: i64,
    /// Maximum window cell count accepted by the brute-force stepper.
    pub bruteforce_cap: usize,
    /// Two candidates within `tie_tolerance_factor * H^1(boundary F)` of
    /// each other mark the step as non-unique.
    pub tie_tolerance_factor: f64,
}

impl FlowParams {
    pub fn new(gamma: f64, eps: f64, max_steps: usize) -> Result<Self> {
        if gamma <= 0.0 || eps <= 0.0 || !gamma.is_finite() || !eps.is_finite() {
            return Err(Error::InvalidInput(
                "gamma and eps must be positive and finite".into(),
            ));
        }
        Ok(FlowParams {
            gamma,
            eps,
            max_steps,
            candidate_cap_slack: 3,
            bruteforce_cap: 24,
            tie_tolerance_factor: 1e-12,
        })
    }

    /// Time step `tau = gamma * eps`.
    pub fn tau(&self) -> f64 {
        self.gamma * self.eps
    }
}

/// Outcome of one rectangle-mode step.
#[derive(Debug, Clone)]
pub struct RectStep {
    /// `None` when the minimizer is the empty set (extinction).
    pub next: Option<LatticeRect>,
    /// Inward cell counts `[left, bottom, right, top]` (zeros on collapse).
    pub side_steps: [i64; 4],
    pub unique: bool,
    /// Exact energy `E(next, rect)` of the chosen candidate.
    pub energy: EnergyBreakdown,
}

// ---------------------------------------------------------------------------
// Rectangle-mode stepping
// ---------------------------------------------------------------------------

/// Prefix sums of coefficients along candidate side lines, so the random
/// part of any candidate boundary is two lookups per side.
struct SidePrefixes {
    left: Vec<Vec<f64>>,
    bottom: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    top: Vec<Vec<f64>>,
}

impl SidePrefixes {
    fn build(f: &LatticeRect, caps: &[i64; 4], field: &FieldSpec) -> Self {
        let column = |line: i64| -> Vec<f64> {
            let mut pref = Vec::with_capacity((f.height_cells() + 1) as usize);
            let mut acc = 0.0;
            pref.push(0.0);
            for l in f.y_lo..=f.y_hi {
                acc += field.coefficient(DualPoint::new(2 * line + 1, 2 * l));
                pref.push(acc);
            }
            pref
        };
        let row = |line: i64| -> Vec<f64> {
            let mut pref = Vec::with_capacity((f.width_cells() + 1) as usize);
            let mut acc = 0.0;
            pref.push(0.0);
            for l in f.x_lo..=f.x_hi {
                acc += field.coefficient(DualPoint::new(2 * l, 2 * line + 1));
                pref.push(acc);
            }
            pref
        };
        SidePrefixes {
            left: (0..=caps[0]).map(|n| column(f.x_lo - 1 + n)).collect(),
            bottom: (0..=caps[1]).map(|n| row(f.y_lo - 1 + n)).collect(),
            right: (0..=caps[2]).map(|n| column(f.x_hi - n)).collect(),
            top: (0..=caps[3]).map(|n| row(f.y_hi - n)).collect(),
        }
    }
}

/// Closed-form sum over cells of `F \ A` of `(1 + min margin)`:
/// iterate the shrunk copies `F_j` and count `#(F_j \ A)`.
fn dissipation_cells(f: &LatticeRect, steps: Option<[i64; 4]>) -> i64 {
    let (w, h) = (f.width_cells(), f.height_cells());
    let mut total = 0i64;
    let mut j = 0i64;
    loop {
        let (wj, hj) = (w - 2 * j, h - 2 * j);
        if wj <= 0 || hj <= 0 {
            break;
        }
        let keep = match steps {
            None => 0,
            Some([n1, n2, n3, n4]) => {
                let kw = w - j.max(n1) - j.max(n3);
                let kh = h - j.max(n2) - j.max(n4);
                if kw > 0 && kh > 0 {
                    kw * kh
                } else {
                    0
                }
            }
        };
        let diff = wj * hj - keep;
        if diff == 0 {
            break;
        }
        total += diff;
        j += 1;
    }
    total
}

/// Exact energy of the inward candidate `steps` (or the empty set) against
/// `f`, assembled from prefix sums and the closed-form dissipation count.
fn candidate_energy(
    f: &LatticeRect,
    steps: Option<[i64; 4]>,
    pref: &SidePrefixes,
    params: &FlowParams,
) -> EnergyBreakdown {
    let eps = params.eps;
    let diss = dissipation_cells(f, steps) as f64 * eps * eps / params.gamma;
    match steps {
        None => EnergyBreakdown::assemble(0.0, 0.0, diss),
        Some([n1, n2, n3, n4]) => {
            let (w, h) = (f.width_cells(), f.height_cells());
            let h1 = 2.0 * ((w - n1 - n3) + (h - n2 - n4)) as f64 * eps;
            // Vertical sides span rows [y_lo + n2, y_hi - n4]; prefix index i
            // covers rows < y_lo + i.
            let row_a = n2 as usize;
            let row_b = (h - n4) as usize;
            let col_a = n1 as usize;
            let col_b = (w - n3) as usize;
            let csum = pref.left[n1 as usize][row_b] - pref.left[n1 as usize][row_a]
                + pref.right[n3 as usize][row_b]
                - pref.right[n3 as usize][row_a]
                + pref.bottom[n2 as usize][col_b]
                - pref.bottom[n2 as usize][col_a]
                + pref.top[n4 as usize][col_b]
                - pref.top[n4 as usize][col_a];
            EnergyBreakdown::assemble(h1, eps * eps * csum, diss)
        }
    }
}

/// One exact minimizing-movement step from a rectangle.
///
/// Enumerates inward rectangle candidates `N_i` in `[0, cap_i]` per side
/// together with the empty set, evaluates the exact step energy, and picks
/// the minimizer; exact energy ties are broken by smallest `sum N_i`, then
/// lexicographically smallest `(N_left, N_bottom, N_right, N_top)`, with the
/// empty set last. Caps expand and the search retries whenever the chosen
/// count touches a truncating cap.
pub fn step_rect(f: &LatticeRect, field: &FieldSpec, params: &FlowParams) -> Result<RectStep> {
    if f.eps != params.eps {
        return Err(Error::InvalidInput("rect eps differs from params.eps".into()));
    }
    let (w, h) = (f.width_cells(), f.height_cells());
    let n_star_vert = (2.0 * params.gamma / f.len_vertical()).floor() as i64;
    let n_star_horiz = (2.0 * params.gamma / f.len_horizontal()).floor() as i64;
    // Geometric maxima: one cell must survive on each axis for a rectangle
    // candidate; anything deeper is the empty set.
    let max_useful = [w - 1, h - 1, w - 1, h - 1];
    let slack = params.candidate_cap_slack.max(1);
    let mut caps = [
        (n_star_vert + slack).min(max_useful[0]),
        (n_star_horiz + slack).min(max_useful[1]),
        (n_star_vert + slack).min(max_useful[2]),
        (n_star_horiz + slack).min(max_useful[3]),
    ];

    loop {
        let pref = SidePrefixes::build(f, &caps, field);
        let tie_tol = params.tie_tolerance_factor * f.boundary_length();

        let mut best: Option<(EnergyBreakdown, Option<[i64; 4]>)> = None;
        let mut second_total = f64::INFINITY;
        let consider =
            |e: EnergyBreakdown,
             cand: Option<[i64; 4]>,
             best: &mut Option<(EnergyBreakdown, Option<[i64; 4]>)>,
             second_total: &mut f64| {
                match best {
                    None => *best = Some((e, cand)),
                    Some((be, bc)) => {
                        let better = e.total < be.total
                            || (e.total == be.total && tie_rank(&cand) < tie_rank(bc));
                        if better {
                            *second_total = second_total.min(be.total);
                            *best = Some((e, cand));
                        } else {
                            *second_total = second_total.min(e.total);
                        }
                    }
                }
            };

        for n1 in 0..=caps[0] {
            for n3 in 0..=caps[2].min(w - 1 - n1) {
                for n2 in 0..=caps[1] {
                    for n4 in 0..=caps[3].min(h - 1 - n2) {
                        let cand = [n1, n2, n3, n4];
                        let e = candidate_energy(f, Some(cand), &pref, params);
                        consider(e, Some(cand), &mut best, &mut second_total);
                    }
                }
            }
        }
        let empty_e = candidate_energy(f, None, &pref, params);
        consider(empty_e, None, &mut best, &mut second_total);

        let (energy, chosen) = best.expect("candidate set is never empty");
        let unique = second_total - energy.total > tie_tol;

        if let Some(ns) = chosen {
            // Retry with wider caps when the minimizer touches a cap that
            // actually truncated the search.
            let mut touched = false;
            for i in 0..4 {
                if ns[i] == caps[i] && caps[i] < max_useful[i] {
                    caps[i] = (caps[i] + 2).min(max_useful[i]);
                    touched = true;
                }
            }
            if touched {
                continue;
            }
            let next = f.shrunk(ns[0], ns[1], ns[2], ns[3]);
            debug_assert!(next.is_some());
            return Ok(RectStep { next, side_steps: ns, unique, energy });
        }
        return Ok(RectStep { next: None, side_steps: [0; 4], unique, energy });
    }
}

/// Tie rank: smallest sum, then lexicographic, empty set last.
fn tie_rank(cand: &Option<[i64; 4]>) -> (i64, [i64; 4]) {
    match cand {
        Some(ns) => (ns.iter().sum(), *ns),
        None => (i64::MAX, [i64::MAX; 4]),
    }
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

/// Outcome of one exhaustive step over all subsets of the window.
#[derive(Debug, Clone)]
pub struct BruteForceStep {
    pub next: GridSet,
    pub unique: bool,
    pub is_rectangle: bool,
    pub contained_in_previous: bool,
    pub energy: EnergyBreakdown,
}

/// Exhaustive minimization of `E(., prev)` over every subset of the window.
///
/// Enumerates masks in Gray-code order with O(1) incremental energy updates;
/// the returned energy is recomputed from scratch for the winning mask.
pub fn step_bruteforce(
    prev: &GridSet,
    field: &FieldSpec,
    params: &FlowParams,
) -> Result<BruteForceStep> {
    let window = prev.window;
    let n = window.cell_count() as usize;
    if n > params.bruteforce_cap {
        return Err(Error::BruteForceCapExceeded { cells: n, cap: params.bruteforce_cap });
    }
    if prev.is_empty() {
        return Err(Error::ReferenceSetEmpty);
    }
    let eps = window.eps;

    // Per-cell precomputation.
    let mut diss_cost = vec![0.0f64; n];
    let mut rim = vec![0.0f64; n];
    let mut in_f = vec![false; n];
    for i in 0..n {
        let c = window.cell_at(i);
        in_f[i] = prev.contains_cell(c);
        diss_cost[i] = d_inf_cells(c, prev)? as f64 * eps * eps / params.gamma;
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let nb = crate::lattice::Cell::new(c.ix + dx, c.iy + dy);
            if !window.contains(nb) {
                rim[i] += eps * (1.0 + eps * field.coefficient(DualPoint::between(c, nb)));
            }
        }
    }
    // Internal bonds, adjacency list form.
    let mut bonds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let c = window.cell_at(i);
        for (dx, dy) in [(1i64, 0i64), (0, 1)] {
            let nb = crate::lattice::Cell::new(c.ix + dx, c.iy + dy);
            if window.contains(nb) {
                let j = ((nb.iy - window.y_lo) * window.width_cells()
                    + (nb.ix - window.x_lo)) as usize;
                let w = eps * (1.0 + eps * field.coefficient(DualPoint::between(c, nb)));
                bonds[i].push((j, w));
                bonds[j].push((i, w));
            }
        }
    }

    // Start from the empty set: energy = dissipation of flipping all of F.
    let mut e = in_f
        .iter()
        .zip(&diss_cost)
        .filter(|(f, _)| **f)
        .map(|(_, d)| d)
        .sum::<f64>();
    let mut best_e = e;
    let mut best_mask = 0u64;
    let mut second_e = f64::INFINITY;
    let mut mask = 0u64;

    for k in 1u64..(1u64 << n) {
        let bit = k.trailing_zeros() as usize;
        let joining = mask >> bit & 1 == 0;
        mask ^= 1 << bit;
        let sign = if joining { 1.0 } else { -1.0 };
        e += sign * rim[bit];
        for (j, w) in &bonds[bit] {
            // A bond is on the boundary iff memberships differ.
            if mask >> *j & 1 == 1 {
                e -= sign * w;
            } else {
                e += sign * w;
            }
        }
        let differs_now = (mask >> bit & 1 == 1) != in_f[bit];
        e += if differs_now { diss_cost[bit] } else { -diss_cost[bit] };

        if e < best_e {
            second_e = best_e;
            best_e = e;
            best_mask = mask;
        } else if mask != best_mask {
            second_e = second_e.min(e);
        }
    }

    let next = GridSet::from_bits(window, best_mask);
    let energy = total_energy_sets(&next, prev, field, params.gamma)?;
    let tie_tol = params.tie_tolerance_factor * prev.boundary_length();
    Ok(BruteForceStep {
        is_rectangle: next.is_empty() || next.as_rect().is_some(),
        contained_in_previous: next.is_subset_of(prev),
        unique: second_e - best_e > tie_tol,
        next,
        energy,
    })
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Stepper selection for [`run_flow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    Rect,
    Oracle,
}

/// One recorded state of the flow.
#[derive(Debug, Clone)]
pub struct TrajectoryPoint {
    pub k: usize,
    pub time: f64,
    /// The state as a rectangle when it is one (always in rect mode).
    pub rect: Option<LatticeRect>,
    /// Bounding box of the state (equal to `rect` when rectangular).
    pub bounds: LatticeRect,
    /// `E(A_k, A_{k-1})`; for `k = 0` the self-energy `E(A_0, A_0)`.
    pub energy: EnergyBreakdown,
    /// Inward cell counts `[left, bottom, right, top]` taken at this step.
    pub side_steps: [i64; 4],
    pub tie: bool,
}

/// A full minimizing-movement trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Step index at which the set became empty, if it did.
    pub extinction_step: Option<usize>,
    pub gamma: f64,
    pub eps: f64,
}

impl Trajectory {
    pub fn last_bounds(&self) -> Option<&LatticeRect> {
        self.points.last().map(|p| &p.bounds)
    }

    /// Piecewise-constant interpolation: the recorded state at time `t`.
    pub fn state_at(&self, t: f64) -> Option<&TrajectoryPoint> {
        let tau = self.gamma * self.eps;
        let k = (t / tau).floor() as usize;
        let idx = k.min(self.points.len().saturating_sub(1));
        self.points.get(idx)
    }

    /// CSV export with the fixed column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,t,x_lo,x_hi,y_lo,y_hi,L1,L2,N_left,N_bottom,N_right,N_top,E_total,tie_flag\n",
        );
        for p in &self.points {
            let b = &p.bounds;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                p.k,
                fmt_sig12(p.time),
                b.x_lo,
                b.x_hi,
                b.y_lo,
                b.y_hi,
                fmt_sig12(b.len_horizontal()),
                fmt_sig12(b.len_vertical()),
                p.side_steps[0],
                p.side_steps[1],
                p.side_steps[2],
                p.side_steps[3],
                fmt_sig12(p.energy.total),
                u8::from(p.tie),
            ));
        }
        out
    }
}

/// Iterate the chosen stepper from a rectangle until `max_steps` or
/// extinction, recording every step.
pub fn run_flow(
    initial: &LatticeRect,
    field: &FieldSpec,
    params: &FlowParams,
    mode: FlowMode,
) -> Result<Trajectory> {
    let tau = params.tau();
    let mut points = Vec::with_capacity(params.max_steps.min(1 << 20) + 1);
    let p0 = random_perimeter_rect(initial, field);
    points.push(TrajectoryPoint {
        k: 0,
        time: 0.0,
        rect: Some(*initial),
        bounds: *initial,
        energy: EnergyBreakdown::assemble(
            initial.boundary_length(),
            p0 - initial.boundary_length(),
            0.0,
        ),
        side_steps: [0; 4],
        tie: false,
    });

    let mut extinction = None;
    match mode {
        FlowMode::Rect => {
            let mut current = *initial;
            for k in 1..=params.max_steps {
                let step = step_rect(&current, field, params)?;
                match step.next {
                    None => {
                        extinction = Some(k);
                        break;
                    }
                    Some(next) => {
                        debug_assert!(current.contains_rect(&next));
                        points.push(TrajectoryPoint {
                            k,
                            time: k as f64 * tau,
                            rect: Some(next),
                            bounds: next,
                            energy: step.energy,
                            side_steps: step.side_steps,
                            tie: !step.unique,
                        });
                        current = next;
                    }
                }
            }
        }
        FlowMode::Oracle => {
            let window = *initial;
            let mut current = GridSet::from_rect(window, initial)?;
            let mut prev_rect = Some(*initial);
            for k in 1..=params.max_steps {
                let step = step_bruteforce(&current, field, params)?;
                if step.next.is_empty() {
                    extinction = Some(k);
                    break;
                }
                let rect = step.next.as_rect();
                let bounds = bounding_rect(&step.next);
                let side_steps = match (prev_rect, rect) {
                    (Some(p), Some(r)) => [
                        r.x_lo - p.x_lo,
                        r.y_lo - p.y_lo,
                        p.x_hi - r.x_hi,
                        p.y_hi - r.y_hi,
                    ],
                    _ => [0; 4],
                };
                points.push(TrajectoryPoint {
                    k,
                    time: k as f64 * tau,
                    rect,
                    bounds,
                    energy: step.energy,
                    side_steps,
                    tie: !step.unique,
                });
                prev_rect = rect;
                current = step.next;
            }
        }
    }

    Ok(Trajectory { points, extinction_step: extinction, gamma: params.gamma, eps: params.eps })
}

fn bounding_rect(set: &GridSet) -> LatticeRect {
    let mut it = set.member_cells();
    let first = it.next().expect("non-empty set");
    let mut r = (first.ix, first.ix, first.iy, first.iy);
    for c in it {
        r = (r.0.min(c.ix), r.1.max(c.ix), r.2.min(c.iy), r.3.max(c.iy));
    }
    LatticeRect { x_lo: r.0, x_hi: r.1, y_lo: r.2, y_hi: r.3, eps: set.window.eps }
}
