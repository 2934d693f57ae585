//! The random perimeter, per-side random sums, the dissipation term and the
//! total minimizing-movement step energy.
//!
//! The stepper always minimizes the exact energy assembled here; the reduced
//! per-side functionals at the bottom of the module are analysis aids only.

use crate::field::FieldSpec;
use crate::lattice::{d_inf_cells, CellSet, GridSet, LatticeRect, Segment, SideKind};
use crate::{Error, Result};

/// Decomposition of one step energy `E(A, F)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// `H^1(boundary of A)`.
    pub deterministic_perimeter: f64,
    /// `eps * p_eps(boundary of A)`, the random part of the perimeter.
    pub random_perimeter_correction: f64,
    /// `(1/(gamma eps)) * integral over A symm-diff F of d_inf(., boundary F)`.
    pub dissipation: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub(crate) fn assemble(deterministic: f64, random: f64, dissipation: f64) -> Self {
        EnergyBreakdown {
            deterministic_perimeter: deterministic,
            random_perimeter_correction: random,
            dissipation,
            total: deterministic + random + dissipation,
        }
    }

    /// Random perimeter `P_eps(A) = H^1 + eps p_eps`.
    pub fn perimeter(&self) -> f64 {
        self.deterministic_perimeter + self.random_perimeter_correction
    }
}

/// `p_eps(segment) = sum over its dual points of eps * c_xi`.
pub fn side_sum(seg: &Segment, field: &FieldSpec, eps: f64) -> f64 {
    seg.points().map(|p| eps * field.coefficient(p)).sum()
}

/// `p_eps` of the full-length side translated `n` dual lines inward.
pub fn shifted_side_sum(
    seg: &Segment,
    kind: SideKind,
    n: i64,
    field: &FieldSpec,
    eps: f64,
) -> f64 {
    side_sum(&seg.shifted(n, kind.step_sign()), field, eps)
}

/// Random perimeter of a rectangle: `sum_boundary eps (1 + eps c)`.
pub fn random_perimeter_rect(rect: &LatticeRect, field: &FieldSpec) -> f64 {
    let eps = rect.eps;
    let mut total = rect.boundary_length();
    for (_, seg) in rect.sides() {
        total += eps * side_sum(&seg, field, eps);
    }
    total
}

/// Random perimeter of an arbitrary finite cell set; `0` for the empty set.
pub fn random_perimeter_set(set: &GridSet, field: &FieldSpec) -> f64 {
    let eps = set.window.eps;
    set.boundary_dual_points()
        .iter()
        .map(|p| eps * (1.0 + eps * field.coefficient(*p)))
        .sum()
}

/// Dissipation between two grid sets on a common window:
/// `(1/(gamma eps)) * sum over cells of A symm-diff F of eps^2 * d_inf(cell, boundary F)`.
///
/// Exactly `0` iff `A = F`; errors if `F` is empty.
pub fn dissipation_sets(a: &GridSet, f: &GridSet, gamma: f64) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::ReferenceSetEmpty);
    }
    if a.window != f.window {
        return Err(Error::InvalidInput(
            "dissipation needs both sets on the same window".into(),
        ));
    }
    let eps = f.window.eps;
    let mut sum_cells = 0i64;
    for c in f.window.cells() {
        if a.contains_cell(c) != f.contains_cell(c) {
            sum_cells += d_inf_cells(c, f)?;
        }
    }
    // Each cell contributes eps^2 * (k eps) / (gamma eps) = k eps^2 / gamma.
    Ok(sum_cells as f64 * eps * eps / gamma)
}

/// Dissipation for a rectangle step `A subset of F` (`A = None` is the empty
/// set). The dissipation integrand for an inner cell is `1 + min margin`,
/// summed in closed form over shrunk copies of `F`.
pub fn dissipation_rects(a: Option<&LatticeRect>, f: &LatticeRect, gamma: f64) -> Result<f64> {
    if let Some(a) = a {
        if !f.contains_rect(a) {
            return Err(Error::InvalidInput(
                "rectangle dissipation requires A inside F".into(),
            ));
        }
    }
    let eps = f.eps;
    let mut sum_cells = 0i64;
    let mut j = 0;
    // sum over cells of (1 + min margin) == sum over j >= 0 of #(F_j \ A),
    // where F_j is F shrunk by j on every side.
    while let Some(fj) = f.inset(j) {
        let keep = a
            .and_then(|a| fj.intersection(a))
            .map(|r| r.cell_count())
            .unwrap_or(0);
        let diff = fj.cell_count() - keep;
        if diff == 0 {
            break;
        }
        sum_cells += diff;
        j += 1;
    }
    Ok(sum_cells as f64 * eps * eps / gamma)
}

/// Total step energy for arbitrary sets on a common window.
pub fn total_energy_sets(
    a: &GridSet,
    f: &GridSet,
    field: &FieldSpec,
    gamma: f64,
) -> Result<EnergyBreakdown> {
    let eps = f.window.eps;
    let pts = a.boundary_dual_points();
    let deterministic = pts.len() as f64 * eps;
    let random = pts
        .iter()
        .map(|p| eps * eps * field.coefficient(*p))
        .sum::<f64>();
    let dissipation = dissipation_sets(a, f, gamma)?;
    Ok(EnergyBreakdown::assemble(deterministic, random, dissipation))
}

/// Total step energy for a rectangle candidate inside a rectangle.
pub fn total_energy_rects(
    a: Option<&LatticeRect>,
    f: &LatticeRect,
    field: &FieldSpec,
    gamma: f64,
) -> Result<EnergyBreakdown> {
    let (deterministic, random) = match a {
        None => (0.0, 0.0),
        Some(a) => {
            let eps = a.eps;
            let mut random = 0.0;
            for (_, seg) in a.sides() {
                random += eps * side_sum(&seg, field, eps);
            }
            (a.boundary_length(), random)
        }
    };
    let dissipation = dissipation_rects(a, f, gamma)?;
    Ok(EnergyBreakdown::assemble(deterministic, random, dissipation))
}

// ---------------------------------------------------------------------------
// Reduced per-side functionals (analysis / diagnostics only)
// ---------------------------------------------------------------------------

/// The one-dimensional per-side step functional
/// `v(N) = -2N + p_eps(s + N eps v) + (N+1) N l / (2 gamma)`,
/// with the random sum taken on the translated full-length segment.
pub fn reduced_side_value(
    seg: &Segment,
    kind: SideKind,
    n: i64,
    field: &FieldSpec,
    eps: f64,
    gamma: f64,
) -> f64 {
    let l = seg.length(eps);
    -2.0 * n as f64
        + shifted_side_sum(seg, kind, n, field, eps)
        + (n + 1) as f64 * n as f64 * l / (2.0 * gamma)
}

/// The four-side reduced step functional `f(N) = sum_i v_i(N_i)`.
///
/// The exact step energy satisfies
/// `E(A_N, F) = H^1(boundary F) + eps f(N) - eps^2 (e_per + e_bulk)` with
/// `|e_per| <= (2/gamma) max N` and `|e_bulk| <= (4/gamma) (max N)^3`.
pub fn reduced_step_value(
    f_rect: &LatticeRect,
    steps: [i64; 4],
    field: &FieldSpec,
    gamma: f64,
) -> f64 {
    let eps = f_rect.eps;
    SideKind::ALL
        .iter()
        .zip(steps)
        .map(|(kind, n)| reduced_side_value(&f_rect.side(*kind), *kind, n, field, eps, gamma))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Distribution, FieldKind};

    fn rect(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64, eps: f64) -> LatticeRect {
        LatticeRect::new(x_lo, x_hi, y_lo, y_hi, eps).unwrap()
    }

    fn constant_field(c0: f64, gamma: f64) -> FieldSpec {
        FieldSpec::new(FieldKind::Constant { c0 }, gamma, 0).unwrap()
    }

    fn iid_field(radius: f64, gamma: f64, seed: u64) -> FieldSpec {
        FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::Uniform { radius },
            },
            gamma,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_rect_perimeter() {
        let r = rect(0, 3, 0, 1, 0.25);
        let p = random_perimeter_rect(&r, &FieldSpec::zero(1.0));
        // 2 (w + h) eps = 2 * 6 * 0.25
        assert!((p - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_single_cell() {
        // Sum of 4 bonds: 4 eps (1 + eps c0).
        let eps = 0.5;
        let c0 = 0.2;
        let r = rect(0, 0, 0, 0, eps);
        let p = random_perimeter_rect(&r, &constant_field(c0, 1.0));
        assert!((p - 4.0 * eps * (1.0 + eps * c0)).abs() < 1e-12);
    }

    #[test]
    fn rect_perimeter_equals_h1_plus_side_sums() {
        // Partition identity: P = H^1 + eps * sum of the four side sums.
        let eps = 0.2;
        let r = rect(-1, 4, 2, 4, eps);
        let field = iid_field(0.2, 1.0, 9);
        let mut expected = r.boundary_length();
        for (_, seg) in r.sides() {
            expected += eps * side_sum(&seg, &field, eps);
        }
        assert!((random_perimeter_rect(&r, &field) - expected).abs() < 1e-12);
    }

    #[test]
    fn set_and_rect_perimeter_agree() {
        let eps = 0.2;
        let r = rect(0, 3, 0, 2, eps);
        let field = iid_field(0.2, 1.0, 3);
        let window = rect(-1, 4, -1, 3, eps);
        let g = GridSet::from_rect(window, &r).unwrap();
        let a = random_perimeter_rect(&r, &field);
        let b = random_perimeter_set(&g, &field);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn side_sum_zero_and_constant() {
        let seg = Segment { vertical: true, line: 2, lo: 0, hi: 5 };
        assert_eq!(side_sum(&seg, &FieldSpec::zero(1.0), 0.1), 0.0);
        let c = constant_field(0.2, 1.0);
        assert!((side_sum(&seg, &c, 0.1) - 6.0 * 0.1 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn side_sum_periodic_two_columns() {
        // Periodic m = 2 with column values a, b: a vertical segment of 2k
        // points in the residue-0 column sums to 2 k eps a.
        let (a, b) = (0.125, -0.0625);
        let field = FieldSpec::new(
            FieldKind::Periodic {
                m: 2,
                vertical: vec![vec![a; 2], vec![b; 2]],
                horizontal: vec![vec![0.0; 2]; 2],
            },
            1.0,
            0,
        )
        .unwrap();
        let eps = 0.1;
        let k = 4;
        let seg = Segment { vertical: true, line: 2, lo: 0, hi: 2 * k - 1 };
        assert_eq!(seg.residue(2), 0);
        assert!((side_sum(&seg, &field, eps) - 2.0 * k as f64 * eps * a).abs() < 1e-12);
    }

    #[test]
    fn dissipation_zero_iff_equal() {
        let f = rect(0, 5, 0, 4, 0.1);
        assert_eq!(dissipation_rects(Some(&f), &f, 1.4).unwrap(), 0.0);
        let window = rect(-1, 6, -1, 5, 0.1);
        let gf = GridSet::from_rect(window, &f).unwrap();
        assert_eq!(dissipation_sets(&gf, &gf, 1.4).unwrap(), 0.0);
    }

    #[test]
    fn dissipation_one_and_two_boundary_layers() {
        // One full layer of n cells on one side: each removed cell is at
        // distance eps, so the sum is n eps^2 / gamma; two layers add the
        // second layer at distance 2 eps.
        let eps = 0.1;
        let gamma = 0.8;
        let f = rect(0, 4, 0, 9, eps); // 5 x 10 cells, n = 10 per vertical layer
        let one = f.shrunk(1, 0, 0, 0).unwrap();
        let d1 = dissipation_rects(Some(&one), &f, gamma).unwrap();
        assert!((d1 - 10.0 * eps * eps / gamma).abs() < 1e-12);
        let two = f.shrunk(2, 0, 0, 0).unwrap();
        let d2 = dissipation_rects(Some(&two), &f, gamma).unwrap();
        // Second layer: n - 2 interior cells at 2 eps, but its two end
        // cells touch the bottom/top boundary and stay at distance eps.
        let expected = (10.0 + 2.0 * 8.0 + 2.0) * eps * eps / gamma;
        assert!((d2 - expected).abs() < 1e-12);
    }

    #[test]
    fn rect_and_set_dissipation_agree() {
        let eps = 0.25;
        let gamma = 1.3;
        let f = rect(0, 5, 0, 4, eps);
        let window = rect(-1, 6, -1, 5, eps);
        let gf = GridSet::from_rect(window, &f).unwrap();
        for (nl, nb, nr, nt) in [(0, 0, 0, 0), (1, 0, 2, 1), (2, 2, 1, 0)] {
            let a = f.shrunk(nl, nb, nr, nt).unwrap();
            let ga = GridSet::from_rect(window, &a).unwrap();
            let dr = dissipation_rects(Some(&a), &f, gamma).unwrap();
            let ds = dissipation_sets(&ga, &gf, gamma).unwrap();
            assert!((dr - ds).abs() < 1e-12, "mismatch at ({nl},{nb},{nr},{nt})");
        }
        // Empty candidate.
        let ga = GridSet::empty(window);
        let dr = dissipation_rects(None, &f, gamma).unwrap();
        let ds = dissipation_sets(&ga, &gf, gamma).unwrap();
        assert!((dr - ds).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_errors() {
        let w = rect(0, 3, 0, 3, 1.0);
        let a = GridSet::full(w);
        let f = GridSet::empty(w);
        assert!(matches!(
            dissipation_sets(&a, &f, 1.0),
            Err(Error::ReferenceSetEmpty)
        ));
    }

    #[test]
    fn total_energy_trivial_case() {
        // A = F rectangle under the zero field: total = H^1(boundary F).
        let f = rect(0, 6, 0, 3, 0.125);
        let e = total_energy_rects(Some(&f), &f, &FieldSpec::zero(1.0), 1.0).unwrap();
        assert_eq!(e.dissipation, 0.0);
        assert_eq!(e.random_perimeter_correction, 0.0);
        assert!((e.total - f.boundary_length()).abs() < 1e-12);
    }

    #[test]
    fn perturbation_is_below_quarter_gamma_fraction() {
        // |P - H^1| < (eps/(4 gamma)) H^1 for admissible fields.
        let eps = 0.1;
        let gamma = 0.7;
        let field = iid_field(0.9 / (4.0 * gamma), gamma, 17);
        for bits in [0x3fu64, 0x154, 0x2d7, 0xfff] {
            let w = rect(0, 3, 0, 2, eps);
            let g = GridSet::from_bits(w, bits);
            if g.is_empty() {
                continue;
            }
            let h1 = g.boundary_length();
            let p = random_perimeter_set(&g, &field);
            assert!((p - h1).abs() < eps / (4.0 * gamma) * h1);
        }
    }

    #[test]
    fn reduced_functional_parity() {
        // E(A_N, F) = H^1(bd F) + eps f(N) - eps^2 (e_per + e_bulk) with the
        // stated error bounds.
        let eps = 0.05;
        let gamma = 1.0;
        let field = iid_field(0.2, gamma, 41);
        let f = rect(0, 19, 0, 15, eps);
        for steps in [[0i64, 0, 0, 0], [1, 0, 2, 1], [2, 2, 2, 2], [3, 1, 0, 2]] {
            let a = f.shrunk(steps[0], steps[1], steps[2], steps[3]).unwrap();
            let exact = total_energy_rects(Some(&a), &f, &field, gamma).unwrap().total;
            let reduced = f.boundary_length() + eps * reduced_step_value(&f, steps, &field, gamma);
            let max_n = *steps.iter().max().unwrap() as f64;
            let bound = eps * eps * (2.0 / gamma * max_n + 4.0 / gamma * max_n.powi(3));
            assert!(
                (exact - reduced).abs() <= bound + 1e-12,
                "defect {} exceeds bound {bound} at {steps:?}",
                (exact - reduced).abs()
            );
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        /// Submodularity of the step energy and of the perimeter alone over
        /// random 4x4 grid-set triples.
        #[test]
        fn submodularity(a_bits in 0u64..65536, b_bits in 0u64..65536, f_bits in 1u64..65536) {
            let eps = 0.2;
            let gamma = 1.1;
            let w = rect(0, 3, 0, 3, eps);
            let a = GridSet::from_bits(w, a_bits);
            let b = GridSet::from_bits(w, b_bits);
            let f = GridSet::from_bits(w, f_bits);
            let field = iid_field(0.9 / (4.0 * gamma), gamma, 7);

            let cap = a.intersection(&b);
            let cup = a.union(&b);
            let e = |s: &GridSet| total_energy_sets(s, &f, &field, gamma).unwrap().total;
            proptest::prop_assert!(e(&cap) + e(&cup) <= e(&a) + e(&b) + 1e-9);

            let p = |s: &GridSet| random_perimeter_set(s, &field);
            proptest::prop_assert!(p(&cap) + p(&cup) <= p(&a) + p(&b) + 1e-9);
        }
    }
}
