//! Config-driven experiment runner.
//!
//! Every subcommand reads its own section from one TOML config file;
//! unknown keys anywhere in the file are errors. All randomness is seeded
//! from the config (or the `CRYSTALMM_SEED` override), so outputs are
//! byte-identical across runs.
//!
//! Exit codes: 0 all configured assertions pass; 1 assertion failures
//! (a machine-readable failure list goes to stdout); 2 configuration or
//! usage errors.

use clap::Parser;
use crystalmm::effective::build_table;
use crystalmm::field::{FieldKind, FieldSpec};
use crystalmm::flow::{run_flow, step_bruteforce, step_rect, FlowMode, FlowParams};
use crystalmm::homog::{
    mc_velocity, nonconvergence_demo, side_sum_experiment, DriftRule, SegmentFamily,
};
use crystalmm::lattice::{GridSet, LatticeRect, SideKind};
use crystalmm::limit_ode::{
    compare_to_discrete, integrate, ContinuumRect, IntegratorConfig, LimitLaw, SingularSelection,
};
use crystalmm::rational::{fmt_sig12, rationalize};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "crystalmm",
    about = "Minimizing-movement lattice interface simulator and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file with one section per subcommand.
    #[arg(long, global = true, default_value = "crystalmm.toml")]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for seed-parallel experiments.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true, default_value_t = false)]
    verbose: bool,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Run the discrete minimizing-movement flow and export the trajectory.
    Flow,
    /// Export effective-velocity tables for all four sides.
    Veff,
    /// Compare the discrete flow against the event-driven limit trajectory.
    Compare,
    /// Side-sum convergence / non-convergence experiments.
    Homog,
    /// Brute-force oracle equivalence suite on randomized small instances.
    Oracle,
    /// Monte Carlo time-averaged orbit velocity.
    Mc,
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    flow: Option<FlowConfig>,
    veff: Option<VeffConfig>,
    compare: Option<CompareConfig>,
    homog: Option<HomogConfig>,
    oracle: Option<OracleConfig>,
    mc: Option<McConfig>,
}

/// Raw TOML block for a coefficient field; parsed manually so that unknown
/// keys anywhere inside it are errors.
type FieldConfig = toml::Table;

mod cfgkeys {
    use crystalmm::field::Distribution;

    pub fn check_keys(t: &toml::Table, allowed: &[&str], ctx: &str) -> Result<(), String> {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(format!(
                    "unknown key `{k}` in {ctx} (allowed: {})",
                    allowed.join(", ")
                ));
            }
        }
        Ok(())
    }

    pub fn f64_of(t: &toml::Table, key: &str, ctx: &str) -> Result<f64, String> {
        match t.get(key) {
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            _ => Err(format!("{ctx} needs a numeric `{key}`")),
        }
    }

    pub fn u64_of(t: &toml::Table, key: &str, ctx: &str) -> Result<u64, String> {
        match t.get(key) {
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
            _ => Err(format!("{ctx} needs a nonnegative integer `{key}`")),
        }
    }

    pub fn f64_list_of(t: &toml::Table, key: &str, ctx: &str) -> Result<Vec<f64>, String> {
        let arr = t
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| format!("{ctx} needs an array `{key}`"))?;
        arr.iter()
            .map(|v| {
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| format!("{ctx}: `{key}` entries must be numbers"))
            })
            .collect()
    }

    pub fn matrix_of(t: &toml::Table, key: &str, ctx: &str) -> Result<Vec<Vec<f64>>, String> {
        let arr = t
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| format!("{ctx} needs an array-of-arrays `{key}`"))?;
        arr.iter()
            .map(|row| {
                let row = row
                    .as_array()
                    .ok_or_else(|| format!("{ctx}: `{key}` rows must be arrays"))?;
                row.iter()
                    .map(|v| {
                        v.as_float()
                            .or_else(|| v.as_integer().map(|i| i as f64))
                            .ok_or_else(|| format!("{ctx}: `{key}` entries must be numbers"))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn table_of<'a>(
        t: &'a toml::Table,
        key: &str,
        ctx: &str,
    ) -> Result<&'a toml::Table, String> {
        t.get(key)
            .and_then(|v| v.as_table())
            .ok_or_else(|| format!("{ctx} needs a [{ctx}.{key}] table"))
    }

    pub fn distribution_from(t: &toml::Table, ctx: &str) -> Result<Distribution, String> {
        let name = t
            .get("name")
            .and_then(|v| v.as_str())
            .ok_or_else(|| format!("{ctx} needs a string `name`"))?;
        match name {
            "uniform" => {
                check_keys(t, &["name", "radius"], ctx)?;
                Ok(Distribution::Uniform { radius: f64_of(t, "radius", ctx)? })
            }
            "shifted_uniform" => {
                check_keys(t, &["name", "lo", "hi"], ctx)?;
                Ok(Distribution::ShiftedUniform {
                    lo: f64_of(t, "lo", ctx)?,
                    hi: f64_of(t, "hi", ctx)?,
                })
            }
            "finite_discrete" => {
                check_keys(t, &["name", "values", "probs"], ctx)?;
                Ok(Distribution::FiniteDiscrete {
                    values: f64_list_of(t, "values", ctx)?,
                    probs: f64_list_of(t, "probs", ctx)?,
                })
            }
            other => Err(format!(
                "{ctx}: unknown distribution `{other}` (uniform | shifted_uniform | finite_discrete)"
            )),
        }
    }
}

/// Build a validated field spec from its raw config block.
fn field_spec_from(
    t: &FieldConfig,
    gamma: f64,
    seed_override: Option<u64>,
    ctx: &str,
) -> Result<FieldSpec, String> {
    use cfgkeys::*;
    let kind_name = t
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| format!("{ctx} needs a string `kind`"))?;
    let kind = match kind_name {
        "zero" => {
            check_keys(t, &["kind", "seed"], ctx)?;
            FieldKind::Zero
        }
        "constant" => {
            check_keys(t, &["kind", "seed", "c0"], ctx)?;
            FieldKind::Constant { c0: f64_of(t, "c0", ctx)? }
        }
        "periodic" => {
            check_keys(t, &["kind", "seed", "m", "vertical", "horizontal"], ctx)?;
            FieldKind::Periodic {
                m: u64_of(t, "m", ctx)? as u32,
                vertical: matrix_of(t, "vertical", ctx)?,
                horizontal: matrix_of(t, "horizontal", ctx)?,
            }
        }
        "iid" => {
            check_keys(t, &["kind", "seed", "distribution"], ctx)?;
            FieldKind::Iid {
                distribution: distribution_from(table_of(t, "distribution", ctx)?, ctx)?,
            }
        }
        "finite_range" => {
            check_keys(t, &["kind", "seed", "r", "base"], ctx)?;
            FieldKind::FiniteRange {
                r: u64_of(t, "r", ctx)? as u32,
                base: distribution_from(table_of(t, "base", ctx)?, ctx)?,
            }
        }
        "column_constant" => {
            check_keys(t, &["kind", "seed", "distribution"], ctx)?;
            FieldKind::ColumnConstant {
                distribution: distribution_from(table_of(t, "distribution", ctx)?, ctx)?,
            }
        }
        other => {
            return Err(format!(
                "{ctx}: unknown field kind `{other}` (zero | constant | periodic | iid | finite_range | column_constant)"
            ))
        }
    };
    let seed = cfgkeys::u64_of(t, "seed", ctx)?;
    FieldSpec::new(kind, gamma, seed_override.unwrap_or(seed))
        .map_err(|e| format!("{ctx}: {e}"))
}

fn default_steps() -> usize {
    1000
}
fn default_mode() -> String {
    "rect".into()
}
fn default_cap_slack() -> i64 {
    3
}
fn default_bruteforce_cap() -> usize {
    24
}
fn default_tie_tolerance() -> f64 {
    1e-12
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowConfig {
    gamma: f64,
    eps: f64,
    /// Continuum corners [x0, x1, y0, y1], snapped to the lattice.
    rect: [f64; 4],
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default = "default_mode")]
    mode: String,
    field: FieldConfig,
    #[serde(default = "default_cap_slack")]
    cap_slack: i64,
    #[serde(default = "default_bruteforce_cap")]
    bruteforce_cap: usize,
    #[serde(default = "default_tie_tolerance")]
    tie_tolerance: f64,
    #[serde(default)]
    trajectory_csv: Option<String>,
    #[serde(default)]
    summary_json: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VeffConfig {
    gamma: f64,
    m: u32,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    l_lo: f64,
    l_hi: f64,
    #[serde(default)]
    tables_json: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareConfig {
    gamma: f64,
    eps_list: Vec<f64>,
    rect: [f64; 4],
    t_max: f64,
    field: FieldConfig,
    /// "homogeneous", or "tables" (means from `m`, `mu`, `lambda`).
    #[serde(default = "default_law")]
    law: String,
    #[serde(default)]
    m: Option<u32>,
    #[serde(default)]
    mu: Option<Vec<f64>>,
    #[serde(default)]
    lambda: Option<Vec<f64>>,
    /// Assert sup distance <= max_ratio * eps when set.
    #[serde(default)]
    max_ratio: Option<f64>,
    #[serde(default)]
    left_limit_selection: bool,
    #[serde(default)]
    report_json: Option<String>,
    #[serde(default)]
    limit_csv: Option<String>,
}

fn default_law() -> String {
    "homogeneous".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyConfig {
    #[serde(default = "default_true")]
    vertical: bool,
    position: f64,
    #[serde(default)]
    center: f64,
    length: f64,
    /// "fixed_continuum", "fixed_line", or "residue".
    #[serde(default = "default_drift")]
    drift: String,
    #[serde(default)]
    line: Option<i64>,
    #[serde(default)]
    m: Option<u32>,
    #[serde(default)]
    residue: Option<u32>,
}

fn default_true() -> bool {
    true
}
fn default_drift() -> String {
    "fixed_continuum".into()
}

impl FamilyConfig {
    fn build(&self) -> Result<SegmentFamily, String> {
        let drift = match self.drift.as_str() {
            "fixed_continuum" => DriftRule::FixedContinuum,
            "fixed_line" => DriftRule::FixedLatticeLine(
                self.line.ok_or("drift = fixed_line needs `line`")?,
            ),
            "residue" => DriftRule::ResidueConstrained {
                m: self.m.ok_or("drift = residue needs `m`")?,
                residue: self.residue.ok_or("drift = residue needs `residue`")?,
            },
            other => return Err(format!("unknown drift rule `{other}`")),
        };
        Ok(SegmentFamily {
            vertical: self.vertical,
            position: self.position,
            center: self.center,
            length: self.length,
            drift,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HomogConfig {
    /// "sidesum" or "nonconv".
    mode: String,
    gamma: f64,
    eps_list: Vec<f64>,
    n_seeds: u32,
    family: FamilyConfig,
    #[serde(default)]
    field: Option<FieldConfig>,
    /// Distribution for nonconv mode (column-constant vs iid control).
    #[serde(default)]
    distribution: Option<toml::Table>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_persist")]
    persist_fraction: f64,
    #[serde(default = "default_control")]
    control_fraction: f64,
    #[serde(default)]
    report_json: Option<String>,
    #[serde(default)]
    report_csv: Option<String>,
}

fn default_persist() -> f64 {
    0.5
}
fn default_control() -> f64 {
    0.1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleConfig {
    n_instances: u32,
    seed: u64,
    #[serde(default = "default_bruteforce_cap")]
    max_window_cells: usize,
    /// eps is drawn in (0, eps_fraction * gamma]; warn above 1/20.
    #[serde(default = "default_eps_fraction")]
    eps_fraction: f64,
    #[serde(default)]
    report_json: Option<String>,
}

fn default_eps_fraction() -> f64 {
    1.0 / 20.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McConfig {
    gamma: f64,
    l: f64,
    values: Vec<f64>,
    probs: Vec<f64>,
    n_steps: usize,
    n_seeds: u32,
    starts: Vec<i64>,
    seed: u64,
    #[serde(default)]
    report_json: Option<String>,
}

// ---------------------------------------------------------------------------
// Runner plumbing
// ---------------------------------------------------------------------------

struct Ctx {
    out: PathBuf,
    workers: usize,
    verbose: bool,
    seed_override: Option<u64>,
    failures: Vec<String>,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<(), String> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| format!("create {dir:?}: {e}"))?;
        }
        std::fs::write(&path, contents).map_err(|e| format!("write {path:?}: {e}"))?;
        if self.verbose {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn check(&mut self, ok: bool, what: &str) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }
}

fn load_section<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, String> {
    section
        .as_ref()
        .ok_or_else(|| format!("config has no [{name}] section"))
}

fn means_from(
    m: u32,
    mu: &[f64],
    lambda: &[f64],
) -> Result<crystalmm::field::ColumnMeans, String> {
    if mu.len() != m as usize || lambda.len() != m as usize {
        return Err(format!(
            "means lists must have length m = {m} (got {} and {})",
            mu.len(),
            lambda.len()
        ));
    }
    let rat = |v: &f64| rationalize(*v, 1_000_000);
    crystalmm::field::ColumnMeans::new(mu.iter().map(rat).collect(), lambda.iter().map(rat).collect())
        .map_err(|e| e.to_string())
}

fn snap_rect(corners: &[f64; 4], eps: f64) -> Result<LatticeRect, String> {
    LatticeRect::from_continuum(corners[0], corners[1], corners[2], corners[3], eps)
        .map_err(|e| format!("initial rectangle: {e}"))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_flow(cfg: &FlowConfig, ctx: &mut Ctx) -> Result<(), String> {
    let mut params =
        FlowParams::new(cfg.gamma, cfg.eps, cfg.steps).map_err(|e| e.to_string())?;
    params.candidate_cap_slack = cfg.cap_slack;
    params.bruteforce_cap = cfg.bruteforce_cap;
    params.tie_tolerance_factor = cfg.tie_tolerance;
    let field = field_spec_from(&cfg.field, cfg.gamma, ctx.seed_override, "field")?;
    let initial = snap_rect(&cfg.rect, cfg.eps)?;
    let mode = match cfg.mode.as_str() {
        "rect" => FlowMode::Rect,
        "oracle" => {
            let cells = initial.cell_count() as usize;
            if cells > params.bruteforce_cap {
                return Err(format!(
                    "oracle mode window has {cells} cells, above the brute-force cap {}",
                    params.bruteforce_cap
                ));
            }
            FlowMode::Oracle
        }
        other => return Err(format!("unknown mode `{other}` (rect | oracle)")),
    };
    // The small-eps regime is where rectangle steps and the oracle provably
    // agree; warn otherwise.
    if ctx.verbose && cfg.eps > cfg.gamma / 20.0 {
        eprintln!(
            "note: eps = {} above gamma/20 = {}; oracle agreement is only verified below it",
            cfg.eps,
            cfg.gamma / 20.0
        );
    }
    let traj = run_flow(&initial, &field, &params, mode).map_err(|e| e.to_string())?;
    let moved_cells: i64 = traj
        .points
        .iter()
        .map(|p| p.side_steps.iter().sum::<i64>())
        .sum();
    let tie_steps = traj.points.iter().filter(|p| p.tie).count();
    let extinction_time = traj.extinction_step.map(|k| k as f64 * params.tau());
    if let Some(t) = extinction_time {
        println!("extinction at step {} (t = {})", traj.extinction_step.unwrap(), fmt_sig12(t));
    }
    let summary = serde_json::json!({
        "mode": cfg.mode,
        "steps_recorded": traj.points.len(),
        "extinction_step": traj.extinction_step,
        "extinction_time": extinction_time,
        "pinned": moved_cells == 0 && traj.extinction_step.is_none(),
        "moved_cells": moved_cells,
        "tie_steps": tie_steps,
    });
    ctx.write(
        cfg.trajectory_csv.as_deref().unwrap_or("trajectory.csv"),
        &traj.to_csv(),
    )?;
    ctx.write(
        cfg.summary_json.as_deref().unwrap_or("flow_summary.json"),
        &format!("{:#}\n", summary),
    )?;
    Ok(())
}

fn cmd_veff(cfg: &VeffConfig, ctx: &mut Ctx) -> Result<(), String> {
    let means = means_from(cfg.m, &cfg.mu, &cfg.lambda)?;
    let gamma = rationalize(cfg.gamma, 1_000_000);
    if cfg.l_lo <= 0.0 || cfg.l_hi <= cfg.l_lo {
        return Err("need 0 < l_lo < l_hi".into());
    }
    let lo = rationalize(cfg.l_lo, 1_000_000);
    let hi = rationalize(cfg.l_hi, 1_000_000);
    let mut tables = serde_json::Map::new();
    for side in SideKind::ALL {
        let table =
            build_table(&means, &gamma, side, &lo, &hi).map_err(|e| e.to_string())?;
        tables.insert(side.name().to_string(), table.to_json());
    }
    ctx.write(
        cfg.tables_json.as_deref().unwrap_or("veff_tables.json"),
        &format!("{:#}\n", serde_json::Value::Object(tables)),
    )?;
    Ok(())
}

fn cmd_compare(cfg: &CompareConfig, ctx: &mut Ctx) -> Result<(), String> {
    let law = match cfg.law.as_str() {
        "homogeneous" => LimitLaw::homogeneous(cfg.gamma),
        "tables" => {
            let m = cfg.m.ok_or("law = tables needs `m`")?;
            let mu = cfg.mu.as_ref().ok_or("law = tables needs `mu`")?;
            let lambda = cfg.lambda.as_ref().ok_or("law = tables needs `lambda`")?;
            let means = means_from(m, mu, lambda)?;
            let gamma = rationalize(cfg.gamma, 1_000_000);
            let span = (cfg.rect[1] - cfg.rect[0]).max(cfg.rect[3] - cfg.rect[2]);
            let lo = rationalize(0.01 * span, 1_000_000);
            let hi = rationalize(1.5 * span, 1_000_000);
            LimitLaw::from_means(&means, &gamma, &lo, &hi).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown law `{other}` (homogeneous | tables)")),
    };
    let mut int_cfg = IntegratorConfig::new(cfg.t_max);
    if cfg.left_limit_selection {
        int_cfg.selection = SingularSelection::LeftLimit;
    }
    let initial = ContinuumRect::new(cfg.rect[0], cfg.rect[1], cfg.rect[2], cfg.rect[3])
        .map_err(|e| e.to_string())?;
    let limit = integrate(&initial, &law, &int_cfg).map_err(|e| e.to_string())?;
    ctx.write(
        cfg.limit_csv.as_deref().unwrap_or("limit_trajectory.csv"),
        &limit.to_csv(),
    )?;

    let mut rows = Vec::new();
    for &eps in &cfg.eps_list {
        let steps = (cfg.t_max / (cfg.gamma * eps)).ceil() as usize;
        let params = FlowParams::new(cfg.gamma, eps, steps).map_err(|e| e.to_string())?;
        let field = field_spec_from(&cfg.field, cfg.gamma, ctx.seed_override, "field")?;
        let rect = snap_rect(&cfg.rect, eps)?;
        let traj = run_flow(&rect, &field, &params, FlowMode::Rect).map_err(|e| e.to_string())?;
        let report = compare_to_discrete(&traj, &limit, eps);
        if let Some(max_ratio) = cfg.max_ratio {
            ctx.check(
                report.ratio_to_eps <= max_ratio,
                &format!(
                    "compare: sup distance {} = {} eps exceeds {} eps at eps = {}",
                    report.sup_distance, report.ratio_to_eps, max_ratio, eps
                ),
            );
        }
        rows.push(serde_json::json!({
            "eps": eps,
            "sup_distance": report.sup_distance,
            "ratio_to_eps": report.ratio_to_eps,
            "t_end": report.t_end,
        }));
    }
    let report = serde_json::json!({
        "law": cfg.law,
        "limit_extinction_time": limit.extinction_time,
        "per_eps": rows,
    });
    ctx.write(
        cfg.report_json.as_deref().unwrap_or("compare_report.json"),
        &format!("{:#}\n", report),
    )?;
    Ok(())
}

fn cmd_homog(cfg: &HomogConfig, ctx: &mut Ctx) -> Result<(), String> {
    let family = cfg.family.build()?;
    match cfg.mode.as_str() {
        "sidesum" => {
            let field_cfg = cfg
                .field
                .as_ref()
                .ok_or("homog mode = sidesum needs a [homog.field] block")?;
            let spec = field_spec_from(field_cfg, cfg.gamma, ctx.seed_override, "homog.field")?;
            let rep =
                side_sum_experiment(&spec, &family, &cfg.eps_list, cfg.n_seeds, ctx.workers)
                    .map_err(|e| e.to_string())?;
            ctx.check(rep.verdict, "homog: median errors not decreasing");
            ctx.write(
                cfg.report_json.as_deref().unwrap_or("homog_report.json"),
                &format!("{:#}\n", rep.to_json()),
            )?;
            ctx.write(
                cfg.report_csv.as_deref().unwrap_or("homog_report.csv"),
                &rep.to_csv(),
            )?;
        }
        "nonconv" => {
            let dist_table = cfg
                .distribution
                .as_ref()
                .ok_or("homog mode = nonconv needs a [homog.distribution] block")?;
            let dist = cfgkeys::distribution_from(dist_table, "homog.distribution")?;
            let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
            let rep = nonconvergence_demo(
                &dist,
                cfg.gamma,
                seed,
                &family,
                &cfg.eps_list,
                cfg.n_seeds,
                cfg.persist_fraction,
                cfg.control_fraction,
                ctx.workers,
            )
            .map_err(|e| e.to_string())?;
            ctx.check(
                rep.verdict_persists,
                "homog: column-constant variance did not persist",
            );
            ctx.check(rep.verdict_control, "homog: iid control variance did not vanish");
            ctx.write(
                cfg.report_json.as_deref().unwrap_or("nonconv_report.json"),
                &format!("{:#}\n", rep.to_json()),
            )?;
        }
        other => return Err(format!("unknown homog mode `{other}` (sidesum | nonconv)")),
    }
    Ok(())
}

fn cmd_oracle(cfg: &OracleConfig, ctx: &mut Ctx) -> Result<(), String> {
    let mut state = ctx.seed_override.unwrap_or(cfg.seed);
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    let mut unit = move || (next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);

    let total = cfg.n_instances;
    let mut agreements = 0u32;
    let mut rectangles = 0u32;
    let mut contained = 0u32;
    for i in 0..total {
        let w = 2 + (unit() * 7.0) as i64; // 2..8
        let h_max = (cfg.max_window_cells as i64 / w).clamp(2, 8);
        let h = 2 + (unit() * (h_max - 1) as f64) as i64;
        let rw = 2 + (unit() * (w - 1) as f64) as i64;
        let rh = 2 + (unit() * (h - 1) as f64) as i64;
        let (rw, rh) = (rw.min(w), rh.min(h));
        let ox = (unit() * (w - rw + 1) as f64) as i64;
        let oy = (unit() * (h - rh + 1) as f64) as i64;
        let gamma = 0.5 + 1.5 * unit();
        let eps = (0.3 + 0.7 * unit()) * gamma * cfg.eps_fraction;
        let seed = (unit() * 1e15) as u64;

        let window = LatticeRect::new(0, w - 1, 0, h - 1, eps).map_err(|e| e.to_string())?;
        let f_rect = LatticeRect::new(ox, ox + rw - 1, oy, oy + rh - 1, eps)
            .map_err(|e| e.to_string())?;
        let field = FieldSpec::new(
            FieldKind::Iid {
                distribution: crystalmm::field::Distribution::Uniform {
                    radius: 0.9 / (4.0 * gamma),
                },
            },
            gamma,
            seed,
        )
        .map_err(|e| e.to_string())?;
        let mut params = FlowParams::new(gamma, eps, 1).map_err(|e| e.to_string())?;
        params.bruteforce_cap = cfg.max_window_cells;
        let prev = GridSet::from_rect(window, &f_rect).map_err(|e| e.to_string())?;
        let bf = step_bruteforce(&prev, &field, &params).map_err(|e| e.to_string())?;
        let rs = step_rect(&f_rect, &field, &params).map_err(|e| e.to_string())?;
        if bf.is_rectangle {
            rectangles += 1;
        }
        if bf.contained_in_previous {
            contained += 1;
        }
        let equal = match rs.next {
            None => bf.next.is_empty(),
            Some(r) => bf.next.as_rect() == Some(r),
        };
        if equal {
            agreements += 1;
        } else if ctx.verbose {
            eprintln!("instance {i}: disagreement (window {w}x{h}, gamma {gamma:.3})");
        }
    }
    println!("oracle agreement: {agreements}/{total}");
    ctx.check(
        agreements == total && rectangles == total && contained == total,
        &format!("oracle: {agreements}/{total} agreements, {rectangles}/{total} rectangles, {contained}/{total} contained"),
    );
    let report = serde_json::json!({
        "instances": total,
        "agreements": agreements,
        "rectangles": rectangles,
        "contained": contained,
    });
    ctx.write(
        cfg.report_json.as_deref().unwrap_or("oracle_report.json"),
        &format!("{:#}\n", report),
    )?;
    Ok(())
}

fn cmd_mc(cfg: &McConfig, ctx: &mut Ctx) -> Result<(), String> {
    let dist = crystalmm::field::Distribution::FiniteDiscrete {
        values: cfg.values.clone(),
        probs: cfg.probs.clone(),
    };
    let rep = mc_velocity(
        &dist,
        cfg.l,
        cfg.gamma,
        cfg.n_steps,
        cfg.n_seeds,
        &cfg.starts,
        ctx.seed_override.unwrap_or(cfg.seed),
        ctx.workers,
    )
    .map_err(|e| e.to_string())?;
    ctx.check(rep.starts_agree, "mc: starting positions disagree beyond the 99% CI");
    println!(
        "mc velocity estimate: {} (99% CI half-width {})",
        fmt_sig12(rep.estimate),
        fmt_sig12(rep.ci_half_width)
    );
    ctx.write(
        cfg.report_json.as_deref().unwrap_or("mc_report.json"),
        &format!("{:#}\n", rep.to_json()),
    )?;
    Ok(())
}

fn run() -> Result<Vec<String>, (u8, String)> {
    let cli = Cli::parse();
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| (2, format!("cannot read config {:?}: {e}", cli.config)))?;
    let config: ConfigFile =
        toml::from_str(&text).map_err(|e| (2, format!("config parse error: {e}")))?;
    let seed_override = std::env::var("CRYSTALMM_SEED")
        .ok()
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| (2, format!("CRYSTALMM_SEED must be an integer, got `{s}`")))
        })
        .transpose()?;

    let mut ctx = Ctx {
        out: cli.out.clone(),
        workers: cli.workers.max(1),
        verbose: cli.verbose,
        seed_override,
        failures: Vec::new(),
    };
    let result = match cli.command {
        Command::Flow => load_section(&config.flow, "flow").and_then(|c| cmd_flow(c, &mut ctx)),
        Command::Veff => load_section(&config.veff, "veff").and_then(|c| cmd_veff(c, &mut ctx)),
        Command::Compare => {
            load_section(&config.compare, "compare").and_then(|c| cmd_compare(c, &mut ctx))
        }
        Command::Homog => {
            load_section(&config.homog, "homog").and_then(|c| cmd_homog(c, &mut ctx))
        }
        Command::Oracle => {
            load_section(&config.oracle, "oracle").and_then(|c| cmd_oracle(c, &mut ctx))
        }
        Command::Mc => load_section(&config.mc, "mc").and_then(|c| cmd_mc(c, &mut ctx)),
    };
    result.map_err(|e| (2, e))?;
    Ok(ctx.failures)
}

fn main() -> ExitCode {
    match run() {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            let list = serde_json::json!({ "failures": failures });
            println!("{list:#}");
            ExitCode::from(1)
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
