//! Deterministic, seeded coefficient fields indexed by the dual lattice.
//!
//! All randomness flows through a counter-based pseudorandom function of
//! `(seed, doubled coordinates, stream tag)`. There is no mutable generator
//! state: an unbounded lattice can be queried sparsely, reproducibly and
//! from any number of threads.

use crate::lattice::DualPoint;
use crate::rational::{exact, to_f64};
use crate::{Error, Result};
use num::rational::BigRational;
use num::{BigInt, Zero};
use serde::{Deserialize, Serialize};

/// Margin enforced on the strict bound `|c| < 1/(4 gamma)`: specs must keep
/// their support radius at or below `(1 - BOUND_MARGIN) / (4 gamma)`.
pub const BOUND_MARGIN: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Counter-based pseudorandom function
// ---------------------------------------------------------------------------

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless PRF value for a keyed lattice counter, uniform on `[0, 1)`.
#[inline]
pub fn prf_unit(seed: u64, a: i64, b: i64, stream: u64) -> f64 {
    let mut h = seed ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h = splitmix64(h ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    h = splitmix64(h ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    // Top 53 bits to a double in [0, 1).
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// Marginal distribution of a single coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// Uniform on the symmetric interval `(-radius, radius)`.
    Uniform { radius: f64 },
    /// Uniform on `(lo, hi)`.
    ShiftedUniform { lo: f64, hi: f64 },
    /// Finitely many values with the given probabilities.
    FiniteDiscrete { values: Vec<f64>, probs: Vec<f64> },
}

impl Distribution {
    /// Largest possible absolute value.
    pub fn support_radius(&self) -> f64 {
        match self {
            Distribution::Uniform { radius } => radius.abs(),
            Distribution::ShiftedUniform { lo, hi } => lo.abs().max(hi.abs()),
            Distribution::FiniteDiscrete { values, .. } => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    }

    /// Exact mean; `f64` inputs are dyadic so the averages are exact.
    pub fn mean_exact(&self) -> BigRational {
        match self {
            Distribution::Uniform { .. } => BigRational::zero(),
            Distribution::ShiftedUniform { lo, hi } => {
                (exact(*lo) + exact(*hi)) / BigRational::from_integer(BigInt::from(2))
            }
            Distribution::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .map(|(v, p)| exact(*v) * exact(*p))
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        to_f64(&self.mean_exact())
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Uniform { radius } => radius * radius / 3.0,
            Distribution::ShiftedUniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Distribution::FiniteDiscrete { values, probs } => {
                let m = self.mean();
                values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Distribution::Uniform { radius } => *radius == 0.0,
            Distribution::ShiftedUniform { lo, hi } => lo == hi,
            Distribution::FiniteDiscrete { values, .. } => {
                values.windows(2).all(|w| w[0] == w[1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Distribution::FiniteDiscrete { values, probs } = self {
            if values.is_empty() || values.len() != probs.len() {
                return Err(Error::InvalidInput(
                    "finite discrete distribution needs matching value/probability lists".into(),
                ));
            }
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(
                    "finite discrete probabilities must be nonnegative and sum to 1".into(),
                ));
            }
        }
        if let Distribution::ShiftedUniform { lo, hi } = self {
            if lo > hi {
                return Err(Error::InvalidInput("shifted uniform needs lo <= hi".into()));
            }
        }
        Ok(())
    }

    /// Quantile transform of a uniform variate.
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Distribution::Uniform { radius } => (2.0 * u - 1.0) * radius,
            Distribution::ShiftedUniform { lo, hi } => lo + u * (hi - lo),
            Distribution::FiniteDiscrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Field specs
// ---------------------------------------------------------------------------

/// Distribution class of the coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldKind {
    /// `c = 0` everywhere.
    Zero,
    /// `c = c0` everywhere.
    Constant { c0: f64 },
    /// Periodic with period `m` in both directions. `vertical[k][j]` is the
    /// value on the dual column `k + 1/2` at height `j`; `horizontal[k][j]`
    /// the value on the dual row `k + 1/2` at abscissa `j` (indices mod m).
    Periodic {
        m: u32,
        vertical: Vec<Vec<f64>>,
        horizontal: Vec<Vec<f64>>,
    },
    /// Independent values per dual point.
    Iid { distribution: Distribution },
    /// Moving average of `2r + 1` independent values along the bond's line;
    /// mixing coefficients vanish beyond distance `2r`.
    FiniteRange { r: u32, base: Distribution },
    /// One value per unit column `floor(xi_x)`, constant in the vertical
    /// direction and across orientations.
    ColumnConstant { distribution: Distribution },
}

/// A complete coefficient-field specification: distribution class, the
/// time-step ratio `gamma` it must be admissible for, and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    #[serde(flatten)]
    pub kind: FieldKind,
    pub gamma: f64,
    pub seed: u64,
}

impl FieldSpec {
    /// Validates the strict bound `sup |c| < 1/(4 gamma)` at construction:
    /// the support radius must not exceed `(1 - 1e-9)/(4 gamma)`.
    pub fn new(kind: FieldKind, gamma: f64, seed: u64) -> Result<Self> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let limit = (1.0 - BOUND_MARGIN) / (4.0 * gamma);
        let radius = match &kind {
            FieldKind::Zero => 0.0,
            FieldKind::Constant { c0 } => c0.abs(),
            FieldKind::Periodic { m, vertical, horizontal } => {
                if *m == 0 {
                    return Err(Error::InvalidInput("periodic spec needs m >= 1".into()));
                }
                for table in [vertical, horizontal] {
                    if table.len() != *m as usize
                        || table.iter().any(|row| row.len() != *m as usize)
                    {
                        return Err(Error::InvalidInput(format!(
                            "periodic tables must be {m} x {m} per orientation"
                        )));
                    }
                }
                vertical
                    .iter()
                    .chain(horizontal)
                    .flatten()
                    .fold(0.0f64, |a, v| a.max(v.abs()))
            }
            FieldKind::Iid { distribution } | FieldKind::ColumnConstant { distribution } => {
                distribution.validate()?;
                distribution.support_radius()
            }
            FieldKind::FiniteRange { r, base } => {
                if *r < 1 {
                    return Err(Error::InvalidInput("finite_range needs r >= 1".into()));
                }
                base.validate()?;
                base.support_radius()
            }
        };
        if radius > limit {
            return Err(Error::PerturbationBound(format!(
                "support radius {radius} exceeds (1 - 1e-9)/(4 gamma) = {limit}"
            )));
        }
        Ok(FieldSpec { kind, gamma, seed })
    }

    pub fn zero(gamma: f64) -> Self {
        FieldSpec::new(FieldKind::Zero, gamma, 0).unwrap()
    }

    /// Coefficient at a dual point: a pure function of `(seed, point, kind)`.
    pub fn coefficient(&self, xi: DualPoint) -> f64 {
        match &self.kind {
            FieldKind::Zero => 0.0,
            FieldKind::Constant { c0 } => *c0,
            FieldKind::Periodic { m, vertical, horizontal } => {
                let m = *m as i64;
                let line = xi.line_index().rem_euclid(m) as usize;
                if xi.on_vertical_line() {
                    let j = (xi.dy / 2).rem_euclid(m) as usize;
                    vertical[line][j]
                } else {
                    let j = (xi.dx / 2).rem_euclid(m) as usize;
                    horizontal[line][j]
                }
            }
            FieldKind::Iid { distribution } => {
                distribution.sample(prf_unit(self.seed, xi.dx, xi.dy, 1))
            }
            FieldKind::FiniteRange { r, base } => {
                let r = *r as i64;
                let mut acc = 0.0;
                for j in -r..=r {
                    let (a, b) = if xi.on_vertical_line() {
                        // Horizontal bond: average along its horizontal line.
                        (xi.dx + 2 * j, xi.dy)
                    } else {
                        (xi.dx, xi.dy + 2 * j)
                    };
                    acc += base.sample(prf_unit(self.seed, a, b, 2));
                }
                acc / (2 * r + 1) as f64
            }
            FieldKind::ColumnConstant { distribution } => {
                let col = xi.dx.div_euclid(2);
                distribution.sample(prf_unit(self.seed, col, 0, 3))
            }
        }
    }

    /// True when the spec's column means are determined by residues mod some
    /// period (zero, constant, periodic, iid).
    pub fn is_column_periodic(&self) -> bool {
        !matches!(
            self.kind,
            FieldKind::FiniteRange { .. } | FieldKind::ColumnConstant { .. }
        )
    }
}

// ---------------------------------------------------------------------------
// Column means
// ---------------------------------------------------------------------------

/// Exact per-residue means of the column/row averages: `mu[k]` for dual
/// columns `k + 1/2`, `lambda[k]` for dual rows `k + 1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeans {
    pub m: u32,
    pub mu: Vec<BigRational>,
    pub lambda: Vec<BigRational>,
}

impl ColumnMeans {
    pub fn new(mu: Vec<BigRational>, lambda: Vec<BigRational>) -> Result<Self> {
        if mu.is_empty() || mu.len() != lambda.len() {
            return Err(Error::InvalidInput(
                "mu and lambda must be non-empty lists of equal length".into(),
            ));
        }
        Ok(ColumnMeans { m: mu.len() as u32, mu, lambda })
    }

    /// Same means for both orientations.
    pub fn symmetric(mu: Vec<BigRational>) -> Result<Self> {
        let lambda = mu.clone();
        ColumnMeans::new(mu, lambda)
    }

    pub fn zero(m: u32) -> Self {
        let zeros = vec![BigRational::zero(); m as usize];
        ColumnMeans { m, mu: zeros.clone(), lambda: zeros }
    }

    pub fn mu_f64(&self) -> Vec<f64> {
        self.mu.iter().map(to_f64).collect()
    }

    pub fn lambda_f64(&self) -> Vec<f64> {
        self.lambda.iter().map(to_f64).collect()
    }

    /// Largest absolute mean; admissibility requires this `< 1/(4 gamma)`.
    pub fn max_abs(&self) -> BigRational {
        self.mu
            .iter()
            .chain(&self.lambda)
            .map(|r| if r < &BigRational::zero() { -r.clone() } else { r.clone() })
            .max()
            .unwrap()
    }
}

/// Exact expectations of the residue-class column averages for specs whose
/// means are residue-determined.
///
/// Errors with "means not column-periodic" for `column_constant` and
/// `finite_range` specs, whose effective column averages are random or not
/// determined mod `m`.
pub fn column_means(spec: &FieldSpec, m: u32) -> Result<ColumnMeans> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be >= 1".into()));
    }
    let msz = m as usize;
    match &spec.kind {
        FieldKind::Zero => Ok(ColumnMeans::zero(m)),
        FieldKind::Constant { c0 } => {
            let v = vec![exact(*c0); msz];
            ColumnMeans::new(v.clone(), v)
        }
        FieldKind::Iid { distribution } => {
            let v = vec![distribution.mean_exact(); msz];
            ColumnMeans::new(v.clone(), v)
        }
        FieldKind::Periodic { m: p, vertical, horizontal } => {
            if !m.is_multiple_of(*p) {
                return Err(Error::InvalidInput(format!(
                    "period {p} does not divide requested m = {m}"
                )));
            }
            let p = *p as usize;
            let avg = |row: &Vec<f64>| -> BigRational {
                let sum: BigRational = row.iter().map(|v| exact(*v)).sum();
                sum / BigRational::from_integer(BigInt::from(p as i64))
            };
            let mu = (0..msz).map(|k| avg(&vertical[k % p])).collect();
            let lambda = (0..msz).map(|k| avg(&horizontal[k % p])).collect();
            ColumnMeans::new(mu, lambda)
        }
        FieldKind::ColumnConstant { .. } => Err(Error::MeansNotColumnPeriodic(
            "column-constant fields have random column averages".into(),
        )),
        FieldKind::FiniteRange { .. } => Err(Error::MeansNotColumnPeriodic(
            "finite-range averages are not determined by a residue class".into(),
        )),
    }
}

/// The asymmetric six-column example table: vertical means
/// `(-1/8, 1/8, 1/8, 0, 0, 1/8) / gamma`, zero horizontal means.
/// Realized as a deterministic periodic field constant along each column.
pub fn asymmetric_m6_field(gamma: f64, seed: u64) -> Result<FieldSpec> {
    let g = gamma;
    let mu = [-1.0 / (8.0 * g), 1.0 / (8.0 * g), 1.0 / (8.0 * g), 0.0, 0.0, 1.0 / (8.0 * g)];
    let vertical: Vec<Vec<f64>> = mu.iter().map(|v| vec![*v; 6]).collect();
    let horizontal = vec![vec![0.0; 6]; 6];
    FieldSpec::new(
        FieldKind::Periodic { m: 6, vertical, horizontal },
        gamma,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn pt(dx: i64, dy: i64) -> DualPoint {
        DualPoint::new(dx, dy)
    }

    #[test]
    fn zero_spec_is_zero_everywhere() {
        let spec = FieldSpec::zero(1.0);
        assert_eq!(spec.coefficient(pt(1, 0)), 0.0);
        assert_eq!(spec.coefficient(pt(-7, 4)), 0.0);
    }

    #[test]
    fn periodic_m1_is_constant() {
        let spec = FieldSpec::new(
            FieldKind::Periodic {
                m: 1,
                vertical: vec![vec![0.125]],
                horizontal: vec![vec![0.125]],
            },
            1.0,
            0,
        )
        .unwrap();
        for (dx, dy) in [(1, 0), (3, 2), (-5, 8), (0, 7)] {
            assert_eq!(spec.coefficient(pt(dx, dy)), 0.125);
        }
    }

    #[test]
    fn iid_is_deterministic_per_point() {
        let spec = FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::Uniform { radius: 0.125 },
            },
            1.0,
            42,
        )
        .unwrap();
        let a = spec.coefficient(pt(5, 2));
        let b = spec.coefficient(pt(5, 2));
        assert_eq!(a, b);
        // Different seeds give different values (overwhelmingly).
        let spec2 = FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::Uniform { radius: 0.125 },
            },
            1.0,
            43,
        )
        .unwrap();
        assert_ne!(a, spec2.coefficient(pt(5, 2)));
    }

    #[test]
    fn bound_enforced_at_construction() {
        let r = FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::Uniform { radius: 0.25 },
            },
            1.0,
            0,
        );
        assert!(matches!(r, Err(Error::PerturbationBound(_))));
        // Just inside the margin is accepted.
        assert!(FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::Uniform { radius: 0.25 * (1.0 - 2e-9) },
            },
            1.0,
            0,
        )
        .is_ok());
    }

    #[test]
    fn strict_bound_holds_on_samples() {
        let gamma = 0.8;
        let limit = 1.0 / (4.0 * gamma);
        let specs = [
            FieldSpec::new(
                FieldKind::Iid {
                    distribution: Distribution::Uniform { radius: 0.9 * limit },
                },
                gamma,
                7,
            )
            .unwrap(),
            FieldSpec::new(
                FieldKind::FiniteRange {
                    r: 2,
                    base: Distribution::ShiftedUniform { lo: -0.2 * limit, hi: 0.9 * limit },
                },
                gamma,
                8,
            )
            .unwrap(),
            FieldSpec::new(
                FieldKind::ColumnConstant {
                    distribution: Distribution::FiniteDiscrete {
                        values: vec![-0.9 * limit, 0.9 * limit],
                        probs: vec![0.5, 0.5],
                    },
                },
                gamma,
                9,
            )
            .unwrap(),
        ];
        // One million sampled points across the spec kinds.
        for spec in &specs {
            for k in 0..333_334 {
                let xi = if k % 2 == 0 { pt(2 * k + 1, 3 * k) } else { pt(4 * k, 2 * k + 1) };
                assert!(spec.coefficient(xi).abs() < limit);
            }
        }
    }

    #[test]
    fn periodic_field_is_m_stationary() {
        let spec = asymmetric_m6_field(1.0, 3).unwrap();
        for (dx, dy) in [(1, 0), (5, 4), (12, 3), (7, -2)] {
            let base = spec.coefficient(pt(dx, dy));
            for (zx, zy) in [(1i64, 0i64), (0, 1), (-2, 3)] {
                let shifted = spec.coefficient(pt(dx + 12 * zx, dy + 12 * zy));
                assert_eq!(base, shifted);
            }
        }
    }

    #[test]
    fn column_constant_varies_across_columns_only() {
        let spec = FieldSpec::new(
            FieldKind::ColumnConstant {
                distribution: Distribution::Uniform { radius: 0.2 },
            },
            1.0,
            11,
        )
        .unwrap();
        // Same column, any height or orientation: identical.
        let v = spec.coefficient(pt(7, 0));
        assert_eq!(v, spec.coefficient(pt(7, 100)));
        assert_eq!(v, spec.coefficient(pt(6, 1))); // floor(6/2) = floor(7/2) = 3
        // Across columns: differs.
        assert_ne!(v, spec.coefficient(pt(9, 0)));
    }

    #[test]
    fn column_means_zero_and_iid() {
        let zero = FieldSpec::zero(1.0);
        let cm = column_means(&zero, 3).unwrap();
        assert_eq!(cm.mu, vec![ratio(0, 1); 3]);
        assert_eq!(cm.lambda, vec![ratio(0, 1); 3]);

        // iid with mean 1/(16 gamma): all means equal by linearity.
        let gamma = 2.0;
        let mean = 1.0 / (16.0 * gamma);
        let spec = FieldSpec::new(
            FieldKind::Iid {
                distribution: Distribution::ShiftedUniform {
                    lo: mean - 0.01,
                    hi: mean + 0.01,
                },
            },
            gamma,
            0,
        )
        .unwrap();
        let cm = column_means(&spec, 2).unwrap();
        assert_eq!(cm.mu, vec![ratio(1, 32); 2]);
        assert_eq!(cm.lambda, vec![ratio(1, 32); 2]);
    }

    #[test]
    fn column_means_of_the_m6_example() {
        let spec = asymmetric_m6_field(1.0, 0).unwrap();
        let cm = column_means(&spec, 6).unwrap();
        let expect = [
            ratio(-1, 8),
            ratio(1, 8),
            ratio(1, 8),
            ratio(0, 1),
            ratio(0, 1),
            ratio(1, 8),
        ];
        assert_eq!(cm.mu, expect.to_vec());
        assert_eq!(cm.lambda, vec![ratio(0, 1); 6]);
    }

    #[test]
    fn column_means_reject_non_periodic_kinds() {
        let cc = FieldSpec::new(
            FieldKind::ColumnConstant {
                distribution: Distribution::Uniform { radius: 0.1 },
            },
            1.0,
            0,
        )
        .unwrap();
        assert!(matches!(
            column_means(&cc, 4),
            Err(Error::MeansNotColumnPeriodic(_))
        ));
        let fr = FieldSpec::new(
            FieldKind::FiniteRange {
                r: 1,
                base: Distribution::Uniform { radius: 0.1 },
            },
            1.0,
            0,
        )
        .unwrap();
        assert!(matches!(
            column_means(&fr, 4),
            Err(Error::MeansNotColumnPeriodic(_))
        ));
    }

    #[test]
    fn empirical_column_average_approaches_mean() {
        // Law-of-large-numbers smoke test: iid column average within
        // 4 sigma / sqrt(n) of the distribution mean.
        let dist = Distribution::ShiftedUniform { lo: -0.05, hi: 0.15 };
        let sigma = dist.variance().sqrt();
        let spec = FieldSpec::new(FieldKind::Iid { distribution: dist }, 1.0, 123).unwrap();
        let n = 40_000;
        let mut acc = 0.0;
        for l in 0..n {
            acc += spec.coefficient(pt(1, 2 * l));
        }
        let avg = acc / n as f64;
        assert!((avg - 0.05).abs() <= 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn finite_range_is_a_moving_average() {
        let base = Distribution::Uniform { radius: 0.2 };
        let spec = FieldSpec::new(
            FieldKind::FiniteRange { r: 1, base: base.clone() },
            1.0,
            5,
        )
        .unwrap();
        let iid = FieldSpec::new(FieldKind::Iid { distribution: base }, 1.0, 5).unwrap();
        // Values at distance > 2r along the line share no base samples, so
        // the PRF stream keys must differ from the iid stream.
        let a = spec.coefficient(pt(1, 0));
        assert!(a.abs() < 0.2);
        assert_ne!(a, iid.coefficient(pt(1, 0)));
    }
}
