//! Statistical experiments: convergence of side sums under mixing fields,
//! the column-constant non-convergence demonstration, and Monte Carlo
//! time-averaged orbit velocities.
//!
//! Seeds are independent PRF streams, so seed loops may run on worker
//! threads; results are collected by seed index and every aggregate is a
//! sum of commutative statistics, which keeps reports bit-identical for a
//! fixed seed list regardless of scheduling.

use crate::field::{column_means, prf_unit, Distribution, FieldKind, FieldSpec};
use crate::lattice::Segment;
use crate::rational::{exact, fmt_sig12, to_f64};
use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{ToPrimitive, Zero};

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

// ---------------------------------------------------------------------------
// Segment families
// ---------------------------------------------------------------------------

/// How the lattice position of the scaled side is chosen as `eps` varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftRule {
    /// Dual line closest to the fixed continuum position. The line index
    /// diverges in lattice units whenever the position is nonzero.
    FixedContinuum,
    /// Same, then snapped to the residue class `residue` mod `m`.
    ResidueConstrained { m: u32, residue: u32 },
    /// The same dual line index at every `eps`.
    FixedLatticeLine(i64),
}

/// A family of sides `S_eps` converging to a fixed limit segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentFamily {
    pub vertical: bool,
    /// Continuum coordinate of the carrying line (x for vertical sides).
    pub position: f64,
    /// Continuum center along the segment.
    pub center: f64,
    /// Limit length `H^1(S)`.
    pub length: f64,
    pub drift: DriftRule,
}

impl SegmentFamily {
    pub fn segment_at(&self, eps: f64) -> Segment {
        let line = match self.drift {
            DriftRule::FixedLatticeLine(n) => n,
            DriftRule::FixedContinuum => (self.position / eps - 0.5).round() as i64,
            DriftRule::ResidueConstrained { m, residue } => {
                let raw = (self.position / eps - 0.5).round() as i64;
                let m = m as i64;
                let diff = (residue as i64 - raw).rem_euclid(m);
                raw + diff
            }
        };
        let count = (self.length / eps).round().max(1.0) as i64;
        let lo = ((self.center - self.length / 2.0) / eps).round() as i64;
        Segment { vertical: self.vertical, line, lo, hi: lo + count - 1 }
    }
}

// ---------------------------------------------------------------------------
// Seed-parallel helper
// ---------------------------------------------------------------------------

/// Map `f` over `seeds`, optionally on `workers` threads; results come back
/// in seed order.
pub fn map_seeds<T, F>(seeds: &[u64], workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    let mut out: Vec<Option<T>> = Vec::new();
    out.resize_with(seeds.len(), || None);
    std::thread::scope(|scope| {
        for (slot_chunk, seed_chunk) in out.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, &seed) in slot_chunk.iter_mut().zip(seed_chunk) {
                    *slot = Some(f(seed));
                }
            });
        }
    });
    out.into_iter().map(|v| v.expect("filled")).collect()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Side-sum convergence
// ---------------------------------------------------------------------------

/// Convergence data of `p_eps(S_eps)` toward `H^1(S) * mean`.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub eps_list: Vec<f64>,
    /// `estimates[i][s]` = side sum at `eps_list[i]` for seed `s`.
    pub estimates: Vec<Vec<f64>>,
    pub target: f64,
    pub mean_estimate: Vec<f64>,
    pub median_abs_error: Vec<f64>,
    pub std_over_seeds: Vec<f64>,
    /// Median errors non-increasing along `eps_list` (sorted descending).
    pub verdict: bool,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps_list,
            "target": self.target,
            "mean_estimate": self.mean_estimate,
            "median_abs_error": self.median_abs_error,
            "std_over_seeds": self.std_over_seeds,
            "verdict": self.verdict,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,mean_estimate,median_abs_error,std_over_seeds\n");
        for (i, e) in self.eps_list.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig12(*e),
                fmt_sig12(self.mean_estimate[i]),
                fmt_sig12(self.median_abs_error[i]),
                fmt_sig12(self.std_over_seeds[i]),
            ));
        }
        out
    }
}

/// Expected limit of `p_eps(S_eps)` per unit length for a spec and family.
fn limit_mean(spec: &FieldSpec, family: &SegmentFamily) -> Result<f64> {
    match (&spec.kind, family.drift) {
        (FieldKind::Periodic { .. }, DriftRule::ResidueConstrained { m, residue }) => {
            let cm = column_means(spec, m)?;
            let a = if family.vertical { &cm.mu } else { &cm.lambda };
            Ok(to_f64(&a[residue as usize]))
        }
        (FieldKind::Periodic { m, .. }, _) => {
            // Without a residue constraint only the grand mean is canonical.
            let cm = column_means(spec, *m)?;
            let a = if family.vertical { &cm.mu } else { &cm.lambda };
            let sum: BigRational = a.iter().cloned().sum();
            Ok(to_f64(&(sum / int(*m as i64))))
        }
        (FieldKind::Zero, _) => Ok(0.0),
        (FieldKind::Constant { c0 }, _) => Ok(*c0),
        (FieldKind::Iid { distribution }, _)
        | (FieldKind::ColumnConstant { distribution }, _) => Ok(distribution.mean()),
        (FieldKind::FiniteRange { base, .. }, _) => Ok(base.mean()),
    }
}

/// `p_eps(S_eps)` for every `(eps, seed)` pair, compared against
/// `H^1(S) * mean`.
pub fn side_sum_experiment(
    spec: &FieldSpec,
    family: &SegmentFamily,
    eps_list: &[f64],
    n_seeds: u32,
    workers: usize,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() || n_seeds == 0 {
        return Err(Error::InvalidInput("need at least one eps and one seed".into()));
    }
    if family.length <= 0.0 {
        return Err(Error::InvalidInput(
            "segment family must have positive limit length".into(),
        ));
    }
    let target = family.length * limit_mean(spec, family)?;
    let seeds: Vec<u64> = (0..n_seeds).map(|s| spec.seed.wrapping_add(s as u64)).collect();
    let mut estimates = Vec::with_capacity(eps_list.len());
    let mut mean_estimate = Vec::new();
    let mut median_abs_error = Vec::new();
    let mut std_over_seeds = Vec::new();
    for &eps in eps_list {
        let seg = family.segment_at(eps);
        let per_seed = map_seeds(&seeds, workers, |seed| {
            let mut s = spec.clone();
            s.seed = seed;
            crate::energy::side_sum(&seg, &s, eps)
        });
        let (mean, std) = mean_std(&per_seed);
        let mut errs: Vec<f64> = per_seed.iter().map(|p| (p - target).abs()).collect();
        mean_estimate.push(mean);
        median_abs_error.push(median(&mut errs));
        std_over_seeds.push(std);
        estimates.push(per_seed);
    }
    let verdict = median_abs_error.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok(ConvergenceReport {
        eps_list: eps_list.to_vec(),
        estimates,
        target,
        mean_estimate,
        median_abs_error,
        std_over_seeds,
        verdict,
    })
}

// ---------------------------------------------------------------------------
// Non-convergence demonstration
// ---------------------------------------------------------------------------

/// Variance persistence of side sums for a column-constant field along a
/// family whose lattice column diverges, with an iid field as control.
#[derive(Debug, Clone)]
pub struct NonconvergenceReport {
    pub eps_list: Vec<f64>,
    /// Per-seed side sums of the column-constant field at each eps.
    pub column_constant: Vec<Vec<f64>>,
    /// Per-seed side sums of the iid control field at each eps.
    pub iid_control: Vec<Vec<f64>>,
    /// `Var(c) * H^1(S)^2`.
    pub analytic_variance: f64,
    pub cc_variance_at_smallest: f64,
    pub iid_variance_at_smallest: f64,
    /// Thresholds as fractions of the analytic variance.
    pub persist_fraction: f64,
    pub control_fraction: f64,
    /// Column-constant variance stays above `persist_fraction * analytic`.
    pub verdict_persists: bool,
    /// Control variance falls below `control_fraction * analytic`.
    pub verdict_control: bool,
}

impl NonconvergenceReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps_list,
            "analytic_variance": self.analytic_variance,
            "cc_variance_at_smallest": self.cc_variance_at_smallest,
            "iid_variance_at_smallest": self.iid_variance_at_smallest,
            "persist_fraction": self.persist_fraction,
            "control_fraction": self.control_fraction,
            "verdict_persists": self.verdict_persists,
            "verdict_control": self.verdict_control,
        })
    }
}

/// Compare variance decay of `p_eps` between a column-constant field and an
/// iid field with the same marginal, on a diverging-column side family.
#[allow(clippy::too_many_arguments)]
pub fn nonconvergence_demo(
    distribution: &Distribution,
    gamma: f64,
    base_seed: u64,
    family: &SegmentFamily,
    eps_list: &[f64],
    n_seeds: u32,
    persist_fraction: f64,
    control_fraction: f64,
    workers: usize,
) -> Result<NonconvergenceReport> {
    if distribution.is_constant() {
        return Err(Error::Degenerate(
            "non-convergence requires a non-constant distribution".into(),
        ));
    }
    if family.position == 0.0 || family.drift != DriftRule::FixedContinuum {
        return Err(Error::InvalidInput(
            "family must drift through diverging lattice columns".into(),
        ));
    }
    let cc = FieldSpec::new(
        FieldKind::ColumnConstant { distribution: distribution.clone() },
        gamma,
        base_seed,
    )?;
    let iid = FieldSpec::new(
        FieldKind::Iid { distribution: distribution.clone() },
        gamma,
        base_seed,
    )?;
    let seeds: Vec<u64> = (0..n_seeds).map(|s| base_seed.wrapping_add(s as u64)).collect();
    let run = |spec: &FieldSpec, eps: f64| -> Vec<f64> {
        let seg = family.segment_at(eps);
        map_seeds(&seeds, workers, |seed| {
            let mut s = spec.clone();
            s.seed = seed;
            crate::energy::side_sum(&seg, &s, eps)
        })
    };
    let column_constant: Vec<Vec<f64>> = eps_list.iter().map(|&e| run(&cc, e)).collect();
    let iid_control: Vec<Vec<f64>> = eps_list.iter().map(|&e| run(&iid, e)).collect();

    let variance = |vals: &[f64]| {
        let (_, s) = mean_std(vals);
        s * s
    };
    let analytic = distribution.variance() * family.length * family.length;
    let cc_var = variance(column_constant.last().unwrap());
    let iid_var = variance(iid_control.last().unwrap());
    Ok(NonconvergenceReport {
        eps_list: eps_list.to_vec(),
        column_constant,
        iid_control,
        analytic_variance: analytic,
        cc_variance_at_smallest: cc_var,
        iid_variance_at_smallest: iid_var,
        persist_fraction,
        control_fraction,
        verdict_persists: cc_var >= persist_fraction * analytic,
        verdict_control: iid_var <= control_fraction * analytic,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo time-averaged velocity
// ---------------------------------------------------------------------------

/// Positions of the random orbit
/// `P_{l+1} = P_l + argmin_N { -2N + (L / 2 gamma)(N+1)N + L X_{P_l + N} }`
/// for an arbitrary value source; comparisons are exact rationals.
pub fn random_orbit_positions<F>(
    value_at: F,
    l: &BigRational,
    gamma: &BigRational,
    start: i64,
    n_steps: usize,
) -> Result<Vec<i64>>
where
    F: Fn(i64) -> BigRational,
{
    if l <= &BigRational::zero() || gamma <= &BigRational::zero() {
        return Err(Error::InvalidInput("L and gamma must be positive".into()));
    }
    let n_star = (int(2) * gamma / l).floor().to_integer().to_i64().unwrap();
    let lo = (n_star - 1).max(0);
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut p = start;
    out.push(p);
    for _ in 0..n_steps {
        let mut best: Option<(BigRational, i64)> = None;
        let mut tie = false;
        for n in lo..=(n_star + 1) {
            let nq = int(n);
            let v = -int(2) * &nq
                + l * (&nq + int(1)) * &nq / (int(2) * gamma)
                + l * value_at(p + n);
            match &best {
                None => best = Some((v, n)),
                Some((bv, _)) => {
                    if &v < bv {
                        best = Some((v, n));
                        tie = false;
                    } else if &v == bv {
                        tie = true;
                    }
                }
            }
        }
        let (_, n) = best.expect("non-empty candidate set");
        if tie {
            return Err(Error::SingularLengthForValueSet(format!(
                "tie in the step minimizer at position {p}"
            )));
        }
        p += n;
        out.push(p);
    }
    Ok(out)
}

/// Estimate of the long-run average step count.
#[derive(Debug, Clone)]
pub struct McVelocityReport {
    /// `(start, mean over seeds, std over seeds)` per starting position.
    pub per_start: Vec<(i64, f64, f64)>,
    pub estimate: f64,
    /// Half width of the 99% confidence interval on the pooled estimate.
    pub ci_half_width: f64,
    /// All start positions agree within the 99% interval of the difference.
    pub starts_agree: bool,
    pub n_steps: usize,
    pub n_seeds: u32,
}

impl McVelocityReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "per_start": self.per_start.iter().map(|(s, m, sd)| {
                serde_json::json!({"start": s, "mean": m, "std": sd})
            }).collect::<Vec<_>>(),
            "estimate": self.estimate,
            "ci_half_width": self.ci_half_width,
            "starts_agree": self.starts_agree,
            "n_steps": self.n_steps,
            "n_seeds": self.n_seeds,
        })
    }
}

const Z_99: f64 = 2.575_829_303_549_f64;

/// Monte Carlo average of the random orbit's step count for an iid
/// finite-valued column field, across seeds and starting positions.
#[allow(clippy::too_many_arguments)]
pub fn mc_velocity(
    distribution: &Distribution,
    l: f64,
    gamma: f64,
    n_steps: usize,
    n_seeds: u32,
    starts: &[i64],
    base_seed: u64,
    workers: usize,
) -> Result<McVelocityReport> {
    let values = match distribution {
        Distribution::FiniteDiscrete { values, .. } => values.clone(),
        _ => {
            return Err(Error::InvalidInput(
                "mc velocity requires a finite discrete distribution".into(),
            ))
        }
    };
    if n_steps == 0 || n_seeds == 0 || starts.is_empty() {
        return Err(Error::InvalidInput("need steps, seeds and starts".into()));
    }
    // Admissibility as for any field spec.
    FieldSpec::new(
        FieldKind::ColumnConstant { distribution: distribution.clone() },
        gamma,
        base_seed,
    )?;
    let value_rats: Vec<BigRational> = values.iter().map(|v| exact(*v)).collect();
    let lq = exact(l);
    let gq = exact(gamma);
    let seeds: Vec<u64> = (0..n_seeds).map(|s| base_seed.wrapping_add(s as u64)).collect();

    let mut per_start = Vec::with_capacity(starts.len());
    for &start in starts {
        let dist = distribution.clone();
        let results = map_seeds(&seeds, workers, |seed| {
            let value_at = |k: i64| -> BigRational {
                let u = prf_unit(seed, k, 0, 3);
                // Index of the sampled value under the same quantile walk
                // the field spec uses.
                let sample = dist.sample(u);
                let idx = values
                    .iter()
                    .position(|v| *v == sample)
                    .expect("sampled value is from the list");
                value_rats[idx].clone()
            };
            random_orbit_positions(value_at, &lq, &gq, start, n_steps)
                .map(|pos| (pos[n_steps] - pos[0]) as f64 / n_steps as f64)
        });
        let mut avgs = Vec::with_capacity(results.len());
        for r in results {
            avgs.push(r?);
        }
        let (mean, std) = mean_std(&avgs);
        per_start.push((start, mean, std));
    }

    let n = n_seeds as f64;
    let pooled_mean =
        per_start.iter().map(|(_, m, _)| m).sum::<f64>() / per_start.len() as f64;
    let pooled_se = per_start
        .iter()
        .map(|(_, _, s)| s * s / n)
        .sum::<f64>()
        .sqrt()
        / per_start.len() as f64;
    let mut agree = true;
    for i in 0..per_start.len() {
        for j in (i + 1)..per_start.len() {
            let (_, mi, si) = per_start[i];
            let (_, mj, sj) = per_start[j];
            let se = ((si * si + sj * sj) / n).sqrt();
            if (mi - mj).abs() > Z_99 * se.max(1e-12) {
                agree = false;
            }
        }
    }
    Ok(McVelocityReport {
        per_start,
        estimate: pooled_mean,
        ci_half_width: Z_99 * pooled_se,
        starts_agree: agree,
        n_steps,
        n_seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{orbit, residue_minimizer};
    use crate::field::ColumnMeans;
    use crate::lattice::SideKind;
    use crate::rational::ratio;

    fn vertical_family(position: f64, length: f64) -> SegmentFamily {
        SegmentFamily {
            vertical: true,
            position,
            center: 0.0,
            length,
            drift: DriftRule::FixedContinuum,
        }
    }

    #[test]
    fn zero_field_has_zero_error_at_every_eps() {
        let spec = FieldSpec::zero(1.0);
        let fam = vertical_family(1.0, 1.0);
        let report =
            side_sum_experiment(&spec, &fam, &[0.1, 0.01, 0.001], 4, 1).unwrap();
        assert_eq!(report.target, 0.0);
        for errs in &report.median_abs_error {
            assert_eq!(*errs, 0.0);
        }
        assert!(report.verdict);
    }

    #[test]
    fn iid_side_sums_satisfy_clt_scaling() {
        // iid mean mu: error at eps = 1e-3 below 4 sigma sqrt(eps) for at
        // least 95% of seeds.
        let gamma = 1.0;
        let mu = 1.0 / 16.0;
        let dist = Distribution::ShiftedUniform { lo: mu - 0.125, hi: mu + 0.125 };
        let sigma = dist.variance().sqrt();
        let spec = FieldSpec::new(FieldKind::Iid { distribution: dist }, gamma, 7).unwrap();
        let fam = vertical_family(0.7, 1.0);
        let eps = 1e-3;
        let report = side_sum_experiment(&spec, &fam, &[eps], 64, 2).unwrap();
        assert!((report.target - mu).abs() < 1e-12);
        let bound = 4.0 * sigma * eps.sqrt();
        let ok = report.estimates[0]
            .iter()
            .filter(|p| (*p - report.target).abs() <= bound)
            .count();
        assert!(ok >= 61, "only {ok}/64 seeds within 4 sigma sqrt(eps)");
    }

    #[test]
    fn residue_constrained_family_converges_to_column_mean() {
        // Periodic m = 2 columns (a, b); constraining to residue 0 picks a.
        let (a, b) = (0.125, -0.0625);
        let spec = FieldSpec::new(
            FieldKind::Periodic {
                m: 2,
                vertical: vec![vec![a; 2], vec![b; 2]],
                horizontal: vec![vec![0.0; 2]; 2],
            },
            1.0,
            3,
        )
        .unwrap();
        let fam = SegmentFamily {
            vertical: true,
            position: 0.6,
            center: 0.0,
            length: 1.0,
            drift: DriftRule::ResidueConstrained { m: 2, residue: 0 },
        };
        let report = side_sum_experiment(&spec, &fam, &[1e-2, 1e-3], 2, 1).unwrap();
        assert!((report.target - a).abs() < 1e-12);
        for errs in &report.median_abs_error {
            // Deterministic field: only the length-rounding bias remains.
            assert!(*errs <= a * 2.0 * 1e-2);
        }
    }

    #[test]
    fn column_constant_variance_persists_and_iid_control_vanishes() {
        let dist = Distribution::FiniteDiscrete {
            values: vec![-0.125, 0.125],
            probs: vec![0.5, 0.5],
        };
        let fam = vertical_family(1.0, 1.0);
        let report = nonconvergence_demo(
            &dist,
            1.0,
            11,
            &fam,
            &[1e-1, 1e-2, 1e-3],
            64,
            0.5,
            0.1,
            2,
        )
        .unwrap();
        // Analytic: Var(c) H^1(S)^2 = (1/8)^2.
        assert!((report.analytic_variance - 0.015625).abs() < 1e-12);
        assert!(report.verdict_persists, "cc var {}", report.cc_variance_at_smallest);
        assert!(report.verdict_control, "iid var {}", report.iid_variance_at_smallest);
    }

    #[test]
    fn degenerate_distribution_is_rejected() {
        let dist = Distribution::FiniteDiscrete { values: vec![0.1], probs: vec![1.0] };
        let fam = vertical_family(1.0, 1.0);
        let r = nonconvergence_demo(&dist, 1.0, 0, &fam, &[0.1], 4, 0.5, 0.1, 1);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_variance_control_sanity() {
        // A two-valued distribution with equal values has variance zero and
        // must be rejected as degenerate (sanity inversion of the demo).
        let dist = Distribution::FiniteDiscrete {
            values: vec![0.05, 0.05],
            probs: vec![0.5, 0.5],
        };
        let fam = vertical_family(1.0, 1.0);
        assert!(nonconvergence_demo(&dist, 1.0, 0, &fam, &[0.1], 4, 0.5, 0.1, 1).is_err());
    }

    #[test]
    fn one_value_distribution_reduces_to_deterministic_minimizer() {
        // Single value c: the orbit steps the constant-mean minimizer.
        let c = 0.0625;
        let dist = Distribution::FiniteDiscrete { values: vec![c], probs: vec![1.0] };
        let l = 0.8; // 2/L = 2.5 -> N = 2
        let report = mc_velocity(&dist, l, 1.0, 500, 4, &[0, 3], 9, 1).unwrap();
        assert_eq!(report.estimate, 2.0);
        assert_eq!(report.ci_half_width, 0.0);
        assert!(report.starts_agree);
    }

    #[test]
    fn injected_periodic_values_reproduce_effective_velocity() {
        // Feed the orbit the periodic column means directly: the average
        // step count over whole cycles equals the effective velocity.
        let means = ColumnMeans::new(
            vec![
                ratio(-1, 8),
                ratio(1, 8),
                ratio(1, 8),
                ratio(0, 1),
                ratio(0, 1),
                ratio(1, 8),
            ],
            vec![ratio(0, 1); 6],
        )
        .unwrap();
        let gamma = ratio(1, 1);
        let l = ratio(2, 1) / ratio(47, 16);
        let truth = orbit(0, &l, &means, &gamma, SideKind::LeftVertical).unwrap();
        let mu = means.mu.clone();
        let value_at = |k: i64| mu[k.rem_euclid(6) as usize].clone();
        let t = truth.period as usize;
        let pre = truth.pre_period as usize;
        let n_steps = pre + 40 * t;
        let pos = random_orbit_positions(value_at, &l, &gamma, 0, n_steps).unwrap();
        let avg = BigRational::new(
            BigInt::from(pos[n_steps] - pos[pre]),
            BigInt::from((n_steps - pre) as i64),
        );
        assert_eq!(avg, truth.velocity);
    }

    #[test]
    fn two_starts_agree_within_ci() {
        let dist = Distribution::FiniteDiscrete {
            values: vec![-0.1, 0.0, 0.1],
            probs: vec![0.3, 0.4, 0.3],
        };
        let l = 0.77;
        let report = mc_velocity(&dist, l, 1.0, 2000, 32, &[0, 1], 21, 2).unwrap();
        assert!(report.starts_agree);
        // Candidate-set bound: estimate within [N* - 1, N* + 1].
        let n_star = (2.0 / l).floor();
        assert!(report.estimate >= n_star - 1.0 && report.estimate <= n_star + 1.0);
    }

    #[test]
    fn estimates_are_deterministic() {
        let dist = Distribution::FiniteDiscrete {
            values: vec![-0.1, 0.1],
            probs: vec![0.5, 0.5],
        };
        let a = mc_velocity(&dist, 0.77, 1.0, 400, 8, &[0], 5, 1).unwrap();
        let b = mc_velocity(&dist, 0.77, 1.0, 400, 8, &[0], 5, 4).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }

    #[test]
    fn residue_minimizer_consistency_with_random_orbit_candidates() {
        // For a one-value distribution the random orbit matches the m = 1
        // deterministic minimizer at every length tried.
        let c = -0.05;
        let means = ColumnMeans::symmetric(vec![exact(c)]).unwrap();
        let gq = ratio(1, 1);
        for l_num in [5i64, 7, 9, 11] {
            let l = ratio(l_num, 10);
            let (n, unique) =
                residue_minimizer(0, &l, &means, &gq, SideKind::LeftVertical).unwrap();
            if !unique {
                continue;
            }
            let pos =
                random_orbit_positions(|_| exact(c), &l, &gq, 0, 5).unwrap();
            assert_eq!(pos[1] - pos[0], n, "L = {l_num}/10");
        }
    }
}
