//! Python bindings for the crystalmm simulator: coefficient fields, the
//! minimizing-movement flow, effective-velocity tables and the limit
//! integrator.

use crystalmm::effective::{build_table, orbit, pinning_threshold, singular_lengths};
use crystalmm::field::{column_means, ColumnMeans, Distribution, FieldKind, FieldSpec};
use crystalmm::flow::{run_flow, FlowMode, FlowParams, Trajectory};
use crystalmm::homog::{mc_velocity, DriftRule, SegmentFamily};
use crystalmm::lattice::{DualPoint, LatticeRect, Segment, SideKind};
use crystalmm::limit_ode::{integrate, ContinuumRect, IntegratorConfig, LimitLaw};
use crystalmm::rational::{fmt_ratio, rationalize, to_f64};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::IntoPyObjectExt;
use pyo3::types::{PyDict, PyList};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn side_from_name(name: &str) -> PyResult<SideKind> {
    match name {
        "left" => Ok(SideKind::LeftVertical),
        "bottom" => Ok(SideKind::BottomHorizontal),
        "right" => Ok(SideKind::RightVertical),
        "top" => Ok(SideKind::TopHorizontal),
        _ => Err(PyValueError::new_err(
            "side must be one of: left, bottom, right, top",
        )),
    }
}

fn means_from(mu: Vec<f64>, lambda: Vec<f64>) -> PyResult<ColumnMeans> {
    let rat = |v: f64| rationalize(v, 1_000_000);
    ColumnMeans::new(
        mu.into_iter().map(rat).collect(),
        lambda.into_iter().map(rat).collect(),
    )
    .map_err(err)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> Py<PyAny> {
    match v {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py_any(py).unwrap(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py).unwrap()
            } else {
                n.as_f64().unwrap().into_py_any(py).unwrap()
            }
        }
        serde_json::Value::String(s) => s.into_py_any(py).unwrap(),
        serde_json::Value::Array(xs) => {
            let list = PyList::new(py, xs.iter().map(|x| json_to_py(py, x))).unwrap();
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)).unwrap();
            }
            dict.into_any().unbind()
        }
    }
}

/// A deterministic, seeded coefficient field on the dual lattice.
#[pyclass(frozen, name = "Field")]
struct PyField {
    spec: FieldSpec,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn zero(gamma: f64) -> PyResult<Self> {
        FieldSpec::new(FieldKind::Zero, gamma, 0)
            .map(|spec| PyField { spec })
            .map_err(err)
    }

    #[staticmethod]
    fn constant(c0: f64, gamma: f64) -> PyResult<Self> {
        FieldSpec::new(FieldKind::Constant { c0 }, gamma, 0)
            .map(|spec| PyField { spec })
            .map_err(err)
    }

    #[staticmethod]
    fn iid_uniform(radius: f64, gamma: f64, seed: u64) -> PyResult<Self> {
        FieldSpec::new(
            FieldKind::Iid { distribution: Distribution::Uniform { radius } },
            gamma,
            seed,
        )
        .map(|spec| PyField { spec })
        .map_err(err)
    }

    #[staticmethod]
    fn iid_shifted_uniform(lo: f64, hi: f64, gamma: f64, seed: u64) -> PyResult<Self> {
        FieldSpec::new(
            FieldKind::Iid { distribution: Distribution::ShiftedUniform { lo, hi } },
            gamma,
            seed,
        )
        .map(|spec| PyField { spec })
        .map_err(err)
    }

    /// Periodic field from per-orientation m x m value tables.
    #[staticmethod]
    fn periodic(
        vertical: Vec<Vec<f64>>,
        horizontal: Vec<Vec<f64>>,
        gamma: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let m = vertical.len() as u32;
        FieldSpec::new(FieldKind::Periodic { m, vertical, horizontal }, gamma, seed)
            .map(|spec| PyField { spec })
            .map_err(err)
    }

    #[staticmethod]
    fn column_constant(values: Vec<f64>, probs: Vec<f64>, gamma: f64, seed: u64) -> PyResult<Self> {
        FieldSpec::new(
            FieldKind::ColumnConstant {
                distribution: Distribution::FiniteDiscrete { values, probs },
            },
            gamma,
            seed,
        )
        .map(|spec| PyField { spec })
        .map_err(err)
    }

    #[staticmethod]
    fn finite_range(r: u32, radius: f64, gamma: f64, seed: u64) -> PyResult<Self> {
        FieldSpec::new(
            FieldKind::FiniteRange { r, base: Distribution::Uniform { radius } },
            gamma,
            seed,
        )
        .map(|spec| PyField { spec })
        .map_err(err)
    }

    /// Coefficient at the dual point with doubled coordinates `(dx, dy)`.
    fn coefficient(&self, dx: i64, dy: i64) -> PyResult<f64> {
        if (dx.rem_euclid(2) == 1) == (dy.rem_euclid(2) == 1) {
            return Err(PyValueError::new_err(
                "exactly one of dx, dy must be odd (doubled dual coordinates)",
            ));
        }
        Ok(self.spec.coefficient(DualPoint::new(dx, dy)))
    }

    /// `p_eps` of a straight dual segment.
    #[pyo3(signature = (vertical, line, lo, hi, eps))]
    fn side_sum(&self, vertical: bool, line: i64, lo: i64, hi: i64, eps: f64) -> f64 {
        let seg = Segment { vertical, line, lo, hi };
        crystalmm::energy::side_sum(&seg, &self.spec, eps)
    }

    /// Exact per-residue column means `(mu, lambda)` as floats.
    fn column_means(&self, m: u32) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let cm = column_means(&self.spec, m).map_err(err)?;
        Ok((cm.mu_f64(), cm.lambda_f64()))
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.spec.seed
    }
}

/// A coordinate rectangle on the scaled lattice.
#[pyclass(frozen, name = "Rect")]
struct PyRect {
    inner: LatticeRect,
}

#[pymethods]
impl PyRect {
    #[new]
    fn new(x_lo: i64, x_hi: i64, y_lo: i64, y_hi: i64, eps: f64) -> PyResult<Self> {
        LatticeRect::new(x_lo, x_hi, y_lo, y_hi, eps)
            .map(|inner| PyRect { inner })
            .map_err(err)
    }

    /// Snap continuum corner coordinates to the lattice.
    #[staticmethod]
    fn from_continuum(x0: f64, x1: f64, y0: f64, y1: f64, eps: f64) -> PyResult<Self> {
        LatticeRect::from_continuum(x0, x1, y0, y1, eps)
            .map(|inner| PyRect { inner })
            .map_err(err)
    }

    #[getter]
    fn bounds(&self) -> (i64, i64, i64, i64) {
        (self.inner.x_lo, self.inner.x_hi, self.inner.y_lo, self.inner.y_hi)
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    #[getter]
    fn len_horizontal(&self) -> f64 {
        self.inner.len_horizontal()
    }

    #[getter]
    fn len_vertical(&self) -> f64 {
        self.inner.len_vertical()
    }

    fn __repr__(&self) -> String {
        format!(
            "Rect([{}..{}] x [{}..{}], eps={})",
            self.inner.x_lo, self.inner.x_hi, self.inner.y_lo, self.inner.y_hi, self.inner.eps
        )
    }
}

/// A recorded minimizing-movement trajectory.
#[pyclass(frozen, name = "Trajectory")]
struct PyTrajectory {
    traj: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn extinction_step(&self) -> Option<usize> {
        self.traj.extinction_step
    }

    #[getter]
    fn extinction_time(&self) -> Option<f64> {
        self.traj
            .extinction_step
            .map(|k| k as f64 * self.traj.gamma * self.traj.eps)
    }

    fn __len__(&self) -> usize {
        self.traj.points.len()
    }

    /// One state as a dict: k, t, bounds, lengths, side steps, energy, tie.
    fn point(&self, py: Python<'_>, index: usize) -> PyResult<Py<PyAny>> {
        let p = self
            .traj
            .points
            .get(index)
            .ok_or_else(|| PyValueError::new_err("index out of range"))?;
        let d = PyDict::new(py);
        d.set_item("k", p.k)?;
        d.set_item("t", p.time)?;
        d.set_item("bounds", (p.bounds.x_lo, p.bounds.x_hi, p.bounds.y_lo, p.bounds.y_hi))?;
        d.set_item("L1", p.bounds.len_horizontal())?;
        d.set_item("L2", p.bounds.len_vertical())?;
        d.set_item("side_steps", p.side_steps)?;
        d.set_item("energy", p.energy.total)?;
        d.set_item("tie", p.tie)?;
        Ok(d.into_any().unbind())
    }

    fn side_steps(&self) -> Vec<[i64; 4]> {
        self.traj.points.iter().map(|p| p.side_steps).collect()
    }

    fn to_csv(&self) -> String {
        self.traj.to_csv()
    }
}

/// Run the discrete minimizing-movement flow from a rectangle.
#[pyfunction]
#[pyo3(signature = (rect, field, steps, mode = "rect"))]
fn flow(rect: &PyRect, field: &PyField, steps: usize, mode: &str) -> PyResult<PyTrajectory> {
    let mode = match mode {
        "rect" => FlowMode::Rect,
        "oracle" => FlowMode::Oracle,
        _ => return Err(PyValueError::new_err("mode must be `rect` or `oracle`")),
    };
    let params = FlowParams::new(field.spec.gamma, rect.inner.eps, steps).map_err(err)?;
    run_flow(&rect.inner, &field.spec, &params, mode)
        .map(|traj| PyTrajectory { traj })
        .map_err(err)
}

/// Effective-velocity table of one side as a dict (exact rationals are
/// rendered as `"num/den"` strings).
#[pyfunction]
fn veff_table(
    py: Python<'_>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    gamma: f64,
    side: &str,
    l_lo: f64,
    l_hi: f64,
) -> PyResult<Py<PyAny>> {
    let means = means_from(mu, lambda)?;
    let g = rationalize(gamma, 1_000_000);
    let table = build_table(
        &means,
        &g,
        side_from_name(side)?,
        &rationalize(l_lo, 1_000_000),
        &rationalize(l_hi, 1_000_000),
    )
    .map_err(err)?;
    Ok(json_to_py(py, &table.to_json()))
}

/// Pinning threshold of one side: `(float, "num/den")`.
#[pyfunction]
fn pinning_threshold_of(
    mu: Vec<f64>,
    lambda: Vec<f64>,
    gamma: f64,
    side: &str,
) -> PyResult<(f64, String)> {
    let means = means_from(mu, lambda)?;
    let g = rationalize(gamma, 1_000_000);
    let t = pinning_threshold(&means, &g, side_from_name(side)?).map_err(err)?;
    Ok((to_f64(&t), fmt_ratio(&t)))
}

/// Orbit of one side at a non-singular length.
#[pyfunction]
fn orbit_of(
    py: Python<'_>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    gamma: f64,
    side: &str,
    start_residue: u32,
    l: f64,
) -> PyResult<Py<PyAny>> {
    let means = means_from(mu, lambda)?;
    let g = rationalize(gamma, 1_000_000);
    let lq = rationalize(l, 1_000_000);
    let res = orbit(start_residue, &lq, &means, &g, side_from_name(side)?).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("pre_period", res.pre_period)?;
    d.set_item("period", res.period)?;
    d.set_item("displacement", res.displacement)?;
    d.set_item("velocity", to_f64(&res.velocity))?;
    d.set_item("velocity_exact", fmt_ratio(&res.velocity))?;
    Ok(d.into_any().unbind())
}

/// Singular side lengths in `[l_lo, l_hi]` as floats.
#[pyfunction]
fn singular_lengths_of(
    mu: Vec<f64>,
    lambda: Vec<f64>,
    gamma: f64,
    side: &str,
    l_lo: f64,
    l_hi: f64,
) -> PyResult<Vec<f64>> {
    let means = means_from(mu, lambda)?;
    let g = rationalize(gamma, 1_000_000);
    let s = singular_lengths(
        &means,
        &g,
        side_from_name(side)?,
        &rationalize(l_lo, 1_000_000),
        &rationalize(l_hi, 1_000_000),
    )
    .map_err(err)?;
    Ok(s.iter().map(to_f64).collect())
}

/// Event-driven limit trajectory; `mu`/`lambda` empty means the homogeneous
/// floor law.
#[pyfunction]
#[pyo3(signature = (x0, x1, y0, y1, gamma, t_max, mu = vec![], lambda = vec![]))]
#[allow(clippy::too_many_arguments)]
fn limit_trajectory(
    py: Python<'_>,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    gamma: f64,
    t_max: f64,
    mu: Vec<f64>,
    lambda: Vec<f64>,
) -> PyResult<Py<PyAny>> {
    let law = if mu.is_empty() && lambda.is_empty() {
        LimitLaw::homogeneous(gamma)
    } else {
        let means = means_from(mu, lambda)?;
        let g = rationalize(gamma, 1_000_000);
        let span = (x1 - x0).max(y1 - y0);
        LimitLaw::from_means(
            &means,
            &g,
            &rationalize(0.01 * span, 1_000_000),
            &rationalize(1.5 * span, 1_000_000),
        )
        .map_err(err)?
    };
    let initial = ContinuumRect::new(x0, x1, y0, y1).map_err(err)?;
    let traj = integrate(&initial, &law, &IntegratorConfig::new(t_max)).map_err(err)?;
    let events = PyList::empty(py);
    for e in &traj.events {
        let d = PyDict::new(py);
        d.set_item("t", e.t)?;
        d.set_item(
            "rect",
            (e.rect.p_left, e.rect.p_right, e.rect.p_bottom, e.rect.p_top),
        )?;
        d.set_item("velocities", e.velocities)?;
        d.set_item("inclusion", e.inclusion)?;
        events.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("events", events)?;
    out.set_item("extinction_time", traj.extinction_time)?;
    out.set_item("csv", traj.to_csv())?;
    Ok(out.into_any().unbind())
}

/// Monte Carlo time-averaged step count of the random orbit.
#[pyfunction]
#[pyo3(signature = (values, probs, l, gamma, n_steps, n_seeds, starts, seed, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn mc_orbit_velocity(
    py: Python<'_>,
    values: Vec<f64>,
    probs: Vec<f64>,
    l: f64,
    gamma: f64,
    n_steps: usize,
    n_seeds: u32,
    starts: Vec<i64>,
    seed: u64,
    workers: usize,
) -> PyResult<Py<PyAny>> {
    let dist = Distribution::FiniteDiscrete { values, probs };
    let rep = mc_velocity(&dist, l, gamma, n_steps, n_seeds, &starts, seed, workers)
        .map_err(err)?;
    Ok(json_to_py(py, &rep.to_json()))
}

/// Side sum of the scaled segment family at one eps (convergence studies).
#[pyfunction]
#[pyo3(signature = (field, position, length, eps, vertical = true))]
fn family_side_sum(
    field: &PyField,
    position: f64,
    length: f64,
    eps: f64,
    vertical: bool,
) -> f64 {
    let family = SegmentFamily {
        vertical,
        position,
        center: 0.0,
        length,
        drift: DriftRule::FixedContinuum,
    };
    let seg = family.segment_at(eps);
    crystalmm::energy::side_sum(&seg, &field.spec, eps)
}

#[pymodule]
fn crystalmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyRect>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(veff_table, m)?)?;
    m.add_function(wrap_pyfunction!(pinning_threshold_of, m)?)?;
    m.add_function(wrap_pyfunction!(orbit_of, m)?)?;
    m.add_function(wrap_pyfunction!(singular_lengths_of, m)?)?;
    m.add_function(wrap_pyfunction!(limit_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(mc_orbit_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(family_side_sum, m)?)?;
    Ok(())
}
