//! Segmentation runs: initial level set, obstacles from seeds, and the
//! assemble-then-PSOR time-stepping loop.

use serde::{Deserialize, Serialize};

use crate::assembler::assemble;
use crate::contour::{extract_contour, interior_components, Components, Polyline};
use crate::edgemap::{build_edge_map, EdgeMap, EdgeStopForm, EdgeStopParams, MollifierParams};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::ingest::{SeedLabel, SeedMask};
use crate::solver::{psor_solve, sor_solve, Bounds, SolveReport, SolverParams};

/// Horizon used when neither a final time nor a step count is given.
pub const DEFAULT_STEPS: usize = 100;

/// Lower obstacle `w` and upper obstacle `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFields {
    pub w: GridField,
    pub v: GridField,
}

impl ConstraintFields {
    pub fn to_bounds(&self) -> Bounds {
        Bounds::new(self.w.values().to_vec(), self.v.values().to_vec())
            .expect("constraint fields are validated on construction")
    }

    /// Clamps a field into `[w, v]` node by node.
    pub fn clamp(&self, u: &GridField) -> Result<GridField> {
        let values = u
            .values()
            .iter()
            .zip(self.w.values().iter().zip(self.v.values()))
            .map(|(&x, (&w, &v))| x.max(w).min(v))
            .collect();
        GridField::new(*u.spec(), values)
    }
}

/// `v = -delta` on inside seeds and `+big_m` elsewhere; `w = +delta` on
/// outside seeds and `-big_m` elsewhere.
pub fn build_constraints(mask: &SeedMask, delta: f64, big_m: f64) -> Result<ConstraintFields> {
    if !(delta > 0.0 && big_m > delta && big_m.is_finite()) {
        return Err(Error::Param(format!("need 0 < delta < big_m, got delta {delta}, big_m {big_m}")));
    }
    let spec = *mask.spec();
    let mut w = Vec::with_capacity(spec.node_count());
    let mut v = Vec::with_capacity(spec.node_count());
    for &label in mask.labels() {
        let (lo, hi) = match label {
            SeedLabel::Inside => (-big_m, -delta),
            SeedLabel::Outside => (delta, big_m),
            SeedLabel::Free => (-big_m, big_m),
        };
        w.push(lo);
        v.push(hi);
    }
    if let Some(k) = w.iter().zip(&v).position(|(lo, hi)| lo >= hi) {
        let (i, j) = spec.unflatten(k)?;
        return Err(Error::ConstraintConflict { i, j, w: w[k], v: v[k] });
    }
    Ok(ConstraintFields { w: GridField::new(spec, w)?, v: GridField::new(spec, v)? })
}

/// Signed distance to a circle, negative inside.
pub fn initial_circle(center: (f64, f64), radius: f64, spec: GridSpec) -> Result<GridField> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Param(format!("circle radius must be positive, got {radius}")));
    }
    GridField::from_fn(spec, |x, y| ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt() - radius)
}

/// Signed distance to the boundary of the inside-seed region, with the zero
/// crossing half a mesh step outside the outermost seeded nodes.
pub fn initial_from_inside_seeds(mask: &SeedMask) -> Result<GridField> {
    let spec = *mask.spec();
    let seeded: Vec<bool> = mask.labels().iter().map(|&l| l == SeedLabel::Inside).collect();
    if !seeded.contains(&true) {
        return Err(Error::Param("no inside seeds to build an initial level set from".into()));
    }
    let to_inside = distance_transform(&spec, &seeded);
    let outside: Vec<bool> = seeded.iter().map(|s| !s).collect();
    let to_outside = distance_transform(&spec, &outside);
    let half = 0.5 * spec.h1().min(spec.h2());
    let values = seeded
        .iter()
        .zip(to_inside.iter().zip(&to_outside))
        .map(|(&s, (&din, &dout))| if s { half - dout } else { din - half })
        .collect();
    GridField::new(spec, values)
}

/// Exact Euclidean distance from every node to the nearest `site` node,
/// separable lower-envelope algorithm on squared distances.
fn distance_transform(spec: &GridSpec, site: &[bool]) -> Vec<f64> {
    let (w, h) = (spec.width(), spec.height());
    let far = 1e30;
    let mut d: Vec<f64> = site.iter().map(|&s| if s { 0.0 } else { far }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for j in 0..h {
        line.clear();
        line.extend((0..w).map(|i| d[j * w + i]));
        lower_envelope(&line, spec.h1() * spec.h1(), &mut out);
        for i in 0..w {
            d[j * w + i] = out[i];
        }
    }
    for i in 0..w {
        line.clear();
        line.extend((0..h).map(|j| d[j * w + i]));
        lower_envelope(&line, spec.h2() * spec.h2(), &mut out);
        for j in 0..h {
            d[j * w + i] = out[j];
        }
    }
    d.into_iter().map(f64::sqrt).collect()
}

/// `out[p] = min_q scale * (p - q)^2 + f[q]`.
fn lower_envelope(f: &[f64], scale: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut hull = vec![0usize; n];
    let mut starts = vec![0.0f64; n + 1];
    let mut k = 0;
    starts[0] = f64::NEG_INFINITY;
    starts[1] = f64::INFINITY;
    let cross = |q: usize, r: usize| -> f64 {
        let (qf, rf) = (q as f64, r as f64);
        ((f[q] + scale * qf * qf) - (f[r] + scale * rf * rf)) / (2.0 * scale * (qf - rf))
    };
    for q in 1..n {
        let mut s = cross(q, hull[k]);
        while s <= starts[k] {
            k -= 1;
            s = cross(q, hull[k]);
        }
        k += 1;
        hull[k] = q;
        starts[k] = s;
        starts[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (p, slot) in out.iter_mut().enumerate() {
        while starts[k + 1] < p as f64 {
            k += 1;
        }
        let dq = p as f64 - hull[k] as f64;
        *slot = scale * dq * dq + f[hull[k]];
    }
}

/// All knobs of a run. Grid-dependent defaults (`sigma`, `tau`, `delta`) are
/// resolved against the grid when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    /// Regularization in `Q = sqrt(eps^2 + |grad u|^2)`.
    pub epsilon: f64,
    pub lambda: f64,
    pub g_form: EdgeStopForm,
    /// Mollifier width; defaults to `h1`.
    pub sigma: Option<f64>,
    pub truncation_radius: f64,
    /// Time step; defaults to `h1 * h2`.
    pub tau: Option<f64>,
    pub solver: SolverParams,
    pub final_time: Option<f64>,
    pub steps: Option<usize>,
    /// Early stop once a step changes `u` by less than this (infinity norm).
    pub steady_tol: f64,
    /// Obstacle magnitude on seeded nodes; defaults to `0.05 * min(L1, L2)`.
    pub delta: Option<f64>,
    pub big_m: f64,
    /// `[cx, cy, r]` of the initial circle.
    pub init_circle: Option<[f64; 3]>,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            lambda: EdgeStopParams::default().lambda,
            g_form: EdgeStopForm::InverseSqrt,
            sigma: None,
            truncation_radius: MollifierParams::DEFAULT_TRUNCATION,
            tau: None,
            solver: SolverParams::default(),
            final_time: None,
            steps: None,
            steady_tol: 1e-6,
            delta: None,
            big_m: 1e6,
            init_circle: None,
        }
    }
}

impl SegmentationParams {
    pub fn sigma_for(&self, spec: &GridSpec) -> f64 {
        self.sigma.unwrap_or(spec.h1())
    }

    pub fn tau_for(&self, spec: &GridSpec) -> f64 {
        self.tau.unwrap_or(spec.h1() * spec.h2())
    }

    pub fn delta_for(&self, spec: &GridSpec) -> f64 {
        self.delta.unwrap_or(0.05 * spec.l1().min(spec.l2()))
    }

    pub fn mollifier(&self, spec: &GridSpec) -> MollifierParams {
        MollifierParams { sigma: self.sigma_for(spec), truncation_radius: self.truncation_radius }
    }

    pub fn edge_stop(&self) -> EdgeStopParams {
        EdgeStopParams { lambda: self.lambda, form: self.g_form }
    }

    /// Number of steps to the horizon: the smaller of `steps` and the steps
    /// needed to reach `final_time`.
    pub fn step_count(&self, spec: &GridSpec) -> usize {
        let tau = self.tau_for(spec);
        let by_time = self.final_time.map(|t| ((t / tau) - 1e-9).ceil().max(0.0) as usize);
        match (self.steps, by_time) {
            (Some(s), Some(t)) => s.min(t),
            (Some(s), None) => s,
            (None, Some(t)) => t,
            (None, None) => DEFAULT_STEPS,
        }
    }

    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} must be positive, got {x}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("tau", self.tau_for(spec))?;
        positive("steady_tol", self.steady_tol)?;
        if let Some(t) = self.final_time {
            positive("final_time", t)?;
        }
        if self.steps == Some(0) {
            return Err(Error::Param("steps must be positive".into()));
        }
        let delta = self.delta_for(spec);
        positive("delta", delta)?;
        if !(self.big_m > delta && self.big_m.is_finite()) {
            return Err(Error::Param(format!("big_m {} must exceed delta {delta}", self.big_m)));
        }
        if let Some([_, _, r]) = self.init_circle {
            positive("init circle radius", r)?;
        }
        self.mollifier(spec).validate()?;
        self.edge_stop().validate()?;
        self.solver.validate()
    }
}

/// Linear solver used for each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMethod {
    /// Projected SOR honouring the obstacles.
    #[default]
    Projected,
    /// Plain SOR, ignoring the obstacles.
    Unconstrained,
}

/// Initial level set: the given circle, else the signed distance to the
/// inside seeds, else a circle of radius `sqrt(0.08) * min(L1, L2)` at the
/// domain centre.
pub fn initial_level_set(params: &SegmentationParams, mask: &SeedMask) -> Result<GridField> {
    let spec = *mask.spec();
    match params.init_circle {
        Some([cx, cy, r]) => initial_circle((cx, cy), r, spec),
        None if mask.count(SeedLabel::Inside) > 0 => initial_from_inside_seeds(mask),
        None => initial_circle(
            (spec.l1() / 2.0, spec.l2() / 2.0),
            0.08f64.sqrt() * spec.l1().min(spec.l2()),
            spec,
        ),
    }
}

/// Advances one step: assemble from the (clamped) previous level set and
/// solve the bounded problem.
pub fn time_step(
    u_prev: &GridField,
    em: &EdgeMap,
    cf: &ConstraintFields,
    params: &SegmentationParams,
) -> Result<(GridField, SolveReport)> {
    step_with(u_prev, em, cf, params, StepMethod::Projected)
}

fn step_with(
    u_prev: &GridField,
    em: &EdgeMap,
    cf: &ConstraintFields,
    params: &SegmentationParams,
    method: StepMethod,
) -> Result<(GridField, SolveReport)> {
    let spec = *u_prev.spec();
    if cf.w.spec() != &spec {
        return Err(Error::Shape("constraints and level set live on different grids".into()));
    }
    let u_prev = match method {
        StepMethod::Projected => cf.clamp(u_prev)?,
        StepMethod::Unconstrained => u_prev.clone(),
    };
    let sys = assemble(&u_prev, em, params.tau_for(&spec), params.epsilon)?;
    let (values, report) = match method {
        StepMethod::Projected => psor_solve(&sys, &cf.to_bounds(), u_prev.values(), &params.solver)?,
        StepMethod::Unconstrained => sor_solve(&sys, u_prev.values(), &params.solver)?,
    };
    Ok((GridField::new(spec, values)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    pub count: usize,
    pub areas: Vec<f64>,
}

impl From<&Components> for ComponentSummary {
    fn from(c: &Components) -> Self {
        Self { count: c.count(), areas: c.areas.clone() }
    }
}

/// State after step `step`, at time `step * tau`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub u: GridField,
    pub contour: Vec<Polyline>,
    pub components: ComponentSummary,
    /// `None` for the initial state.
    pub report: Option<SolveReport>,
    /// Infinity norm of the change made by this step.
    pub max_change: f64,
}

impl Snapshot {
    pub fn of(step: usize, time: f64, u: GridField, report: Option<SolveReport>, max_change: f64) -> Self {
        let contour = extract_contour(&u, 0.0);
        let components = ComponentSummary::from(&interior_components(&u));
        Self { step, time, u, contour, components, report, max_change }
    }
}

/// Per-step diagnostics kept for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub sweeps: usize,
    pub sweep_difference: f64,
    pub linear_residual: f64,
    pub complementarity_residual: f64,
    pub converged: bool,
    pub max_change: f64,
    pub components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    Steady,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub last: Snapshot,
    pub history: Vec<StepRecord>,
    pub stop: StopReason,
}

impl RunOutput {
    pub fn all_converged(&self) -> bool {
        self.history.iter().all(|r| r.converged)
    }
}

/// A failed run with whatever was computed before the failing step.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last: Snapshot,
    pub history: Vec<StepRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run failed after {} steps: {}", self.history.len(), self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// A prepared run: edge map, obstacles and initial level set.
#[derive(Debug, Clone)]
pub struct Segmentation {
    params: SegmentationParams,
    edge_map: EdgeMap,
    constraints: ConstraintFields,
    initial: GridField,
    method: StepMethod,
}

impl Segmentation {
    pub fn new(i0: &GridField, mask: &SeedMask, params: SegmentationParams) -> Result<Self> {
        let spec = *i0.spec();
        if mask.spec() != &spec {
            return Err(Error::Shape("seed mask and image live on different grids".into()));
        }
        params.validate(&spec)?;
        let edge_map = build_edge_map(i0, &params.mollifier(&spec), &params.edge_stop())?;
        Self::with_edge_map(edge_map, mask, params)
    }

    /// Uses a precomputed edge map instead of deriving one from an image.
    pub fn with_edge_map(edge_map: EdgeMap, mask: &SeedMask, params: SegmentationParams) -> Result<Self> {
        let spec = *edge_map.spec();
        if mask.spec() != &spec {
            return Err(Error::Shape("seed mask and edge map live on different grids".into()));
        }
        params.validate(&spec)?;
        let constraints = build_constraints(mask, params.delta_for(&spec), params.big_m)?;
        let initial = initial_level_set(&params, mask)?;
        Ok(Self { params, edge_map, constraints, initial, method: StepMethod::Projected })
    }

    pub fn with_initial(mut self, u: GridField) -> Result<Self> {
        if u.spec() != self.edge_map.spec() {
            return Err(Error::Shape("initial level set lives on a different grid".into()));
        }
        self.initial = u;
        Ok(self)
    }

    pub fn with_method(mut self, method: StepMethod) -> Self {
        self.method = method;
        self
    }

    pub fn params(&self) -> &SegmentationParams {
        &self.params
    }

    pub fn edge_map(&self) -> &EdgeMap {
        &self.edge_map
    }

    pub fn constraints(&self) -> &ConstraintFields {
        &self.constraints
    }

    pub fn initial(&self) -> &GridField {
        &self.initial
    }

    /// Runs to the horizon or steady state, calling `observer` after every step.
    pub fn run(&self, mut observer: impl FnMut(&Snapshot)) -> Result<RunOutput, Box<RunFailure>> {
        let spec = *self.edge_map.spec();
        let tau = self.params.tau_for(&spec);
        let steps = self.params.step_count(&spec);
        let start = match self.method {
            StepMethod::Projected => self.constraints.clamp(&self.initial),
            StepMethod::Unconstrained => Ok(self.initial.clone()),
        };
        let mut last = Snapshot::of(0, 0.0, start.unwrap_or_else(|_| self.initial.clone()), None, 0.0);
        let mut history = Vec::with_capacity(steps);
        for k in 1..=steps {
            let step = step_with(&last.u, &self.edge_map, &self.constraints, &self.params, self.method)
                .and_then(|(u, report)| Ok((last.u.max_abs_diff(&u)?, u, report)));
            let (change, u, report) = match step {
                Ok(s) => s,
                Err(error) => return Err(Box::new(RunFailure { error, last, history })),
            };
            let snap = Snapshot::of(k, k as f64 * tau, u, Some(report), change);
            history.push(StepRecord {
                step: k,
                time: snap.time,
                sweeps: report.sweeps,
                sweep_difference: report.sweep_difference,
                linear_residual: report.linear_residual,
                complementarity_residual: report.complementarity_residual,
                converged: report.converged,
                max_change: change,
                components: snap.components.count,
            });
            if !report.converged {
                log::warn!("step {k}: solver stopped after {} sweeps at difference {:e}", report.sweeps, report.sweep_difference);
            }
            observer(&snap);
            last = snap;
            if change < self.params.steady_tol {
                return Ok(RunOutput { last, history, stop: StopReason::Steady });
            }
        }
        Ok(RunOutput { last, history, stop: StopReason::Horizon })
    }
}

/// Convenience wrapper: prepare and run in one call.
pub fn run(
    i0: &GridField,
    mask: &SeedMask,
    params: SegmentationParams,
    observer: impl FnMut(&Snapshot),
) -> Result<RunOutput, Box<RunFailure>> {
    let seg = Segmentation::new(i0, mask, params).map_err(|error| {
        let u = GridField::constant(*i0.spec(), 0.0);
        Box::new(RunFailure { error, last: Snapshot::of(0, 0.0, u, None, 0.0), history: Vec::new() })
    })?;
    seg.run(observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::synth_bar_seed;

    fn spec(n: usize) -> GridSpec {
        GridSpec::unit_square(n).unwrap()
    }

    #[test]
    fn circle_values() {
        let s = spec(10);
        let r = 0.08f64.sqrt();
        let u = initial_circle((0.5, 0.5), r, s).unwrap();
        assert!((u.get(5, 5).unwrap() + 0.282843).abs() < 1e-6);
        let on = initial_circle((0.5, 0.5), 0.3, s).unwrap();
        assert!(on.get(8, 5).unwrap().abs() < 1e-15);
        let far = initial_circle((0.0, 0.0), 0.25, s).unwrap();
        assert!((far.get(5, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!(initial_circle((0.5, 0.5), 0.0, s).is_err());
    }

    #[test]
    fn constraint_values() {
        let s = spec(16);
        let out = synth_bar_seed((0.25, 0.5), 0.1, 0.5, SeedLabel::Outside, s).unwrap();
        let inn = synth_bar_seed((0.75, 0.5), 0.1, 0.5, SeedLabel::Inside, s).unwrap();
        let mask = out.union(&inn).unwrap();
        let cf = build_constraints(&mask, 0.05, 1e6).unwrap();
        assert_eq!((cf.w.get(12, 8).unwrap(), cf.v.get(12, 8).unwrap()), (-1e6, -0.05));
        assert_eq!((cf.w.get(4, 8).unwrap(), cf.v.get(4, 8).unwrap()), (0.05, 1e6));
        assert_eq!((cf.w.get(8, 8).unwrap(), cf.v.get(8, 8).unwrap()), (-1e6, 1e6));
        for ((w, v), l) in cf.w.values().iter().zip(cf.v.values()).zip(mask.labels()) {
            assert!(w < v);
            assert_eq!(*v < 0.0, *l == SeedLabel::Inside);
            assert_eq!(*w > 0.0, *l == SeedLabel::Outside);
        }
        assert!(build_constraints(&mask, 0.0, 1.0).is_err());
        assert!(build_constraints(&mask, 2.0, 1.0).is_err());
    }

    #[test]
    fn lower_envelope_matches_brute_force() {
        let f = [5.0, 1e30, 0.0, 1e30, 1e30, 1e30, 2.0, 1e30];
        let mut out = Vec::new();
        lower_envelope(&f, 0.5, &mut out);
        for (p, got) in out.iter().enumerate() {
            let brute = f.iter().enumerate().map(|(q, fq)| 0.5 * (p as f64 - q as f64).powi(2) + fq).fold(f64::INFINITY, f64::min);
            assert!((got - brute).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn distance_transform_is_euclidean() {
        let s = GridSpec::new(2.0, 1.0, 20, 10).unwrap();
        let mut site = vec![false; s.node_count()];
        for &(i, j) in &[(3usize, 2usize), (15, 8), (10, 5)] {
            site[s.idx(i, j)] = true;
        }
        let d = distance_transform(&s, &site);
        for j in 0..=10 {
            for i in 0..=20 {
                let (x, y) = s.position(i, j);
                let brute = [(3, 2), (15, 8), (10, 5)]
                    .iter()
                    .map(|&(a, b)| {
                        let (px, py) = s.position(a, b);
                        ((x - px).powi(2) + (y - py).powi(2)).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!((d[s.idx(i, j)] - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inside_seed_initialization() {
        let s = spec(32);
        let mask = synth_bar_seed((0.5, 0.5), 0.25, 0.25, SeedLabel::Inside, s).unwrap();
        let u = initial_from_inside_seeds(&mask).unwrap();
        for (k, &l) in mask.labels().iter().enumerate() {
            assert_eq!(u.values()[k] < 0.0, l == SeedLabel::Inside);
        }
        assert!(initial_from_inside_seeds(&SeedMask::free(s)).is_err());
        let params = SegmentationParams::default();
        assert_eq!(initial_level_set(&params, &mask).unwrap(), u);
        let circ = initial_level_set(&params, &SeedMask::free(s)).unwrap();
        assert!((circ.get(16, 16).unwrap() + 0.08f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn step_count_rules() {
        let s = spec(128);
        let mut p = SegmentationParams::default();
        assert_eq!(p.step_count(&s), DEFAULT_STEPS);
        p.final_time = Some(0.02);
        assert_eq!(p.step_count(&s), 328);
        p.steps = Some(10);
        assert_eq!(p.step_count(&s), 10);
        p.final_time = Some(3.0 * s.cell_volume());
        assert_eq!(p.step_count(&s), 3);
    }

    #[test]
    fn params_validation() {
        let s = spec(16);
        assert!(SegmentationParams::default().validate(&s).is_ok());
        let bad = [
            SegmentationParams { epsilon: 0.0, ..Default::default() },
            SegmentationParams { tau: Some(-1.0), ..Default::default() },
            SegmentationParams { delta: Some(2e6), ..Default::default() },
            SegmentationParams { steps: Some(0), ..Default::default() },
            SegmentationParams { sigma: Some(0.0), ..Default::default() },
            SegmentationParams { lambda: -1.0, ..Default::default() },
            SegmentationParams { init_circle: Some([0.5, 0.5, 0.0]), ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate(&s).is_err(), "{p:?}");
        }
        let json: SegmentationParams = serde_json::from_str(r#"{"epsilon": 0.5, "steps": 5}"#).unwrap();
        assert_eq!(json.epsilon, 0.5);
        assert_eq!(json.steps, Some(5));
        assert!(serde_json::from_str::<SegmentationParams>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn bounds_enforced_each_step() {
        let s = spec(24);
        let mask = synth_bar_seed((0.5, 0.5), 0.1, 0.6, SeedLabel::Outside, s)
            .unwrap()
            .union(&synth_bar_seed((0.25, 0.5), 0.05, 0.1, SeedLabel::Inside, s).unwrap())
            .unwrap();
        let solver = SolverParams { omega: 1.9, ..Default::default() };
        let params = SegmentationParams { steps: Some(5), solver, ..Default::default() };
        let seg = Segmentation::with_edge_map(EdgeMap::uniform(s), &mask, params).unwrap();
        let cf = seg.constraints().clone();
        let out = seg
            .run(|snap| {
                for k in 0..s.node_count() {
                    let x = snap.u.values()[k];
                    assert!(cf.w.values()[k] <= x && x <= cf.v.values()[k]);
                }
                for (i, j) in mask.nodes(SeedLabel::Inside) {
                    assert!(snap.u.get(i, j).unwrap() <= -0.05);
                }
                for (i, j) in mask.nodes(SeedLabel::Outside) {
                    assert!(snap.u.get(i, j).unwrap() >= 0.05);
                }
            })
            .unwrap();
        assert_eq!(out.history.len(), 5);
        assert!(out.all_converged(), "{:#?}", out.history);
    }

    #[test]
    fn tiny_tau_is_nearly_identity() {
        let s = spec(20);
        let u0 = initial_circle((0.5, 0.5), 0.3, s).unwrap();
        let cf = build_constraints(&SeedMask::free(s), 0.05, 1e6).unwrap();
        let params = SegmentationParams { tau: Some(1e-12), ..Default::default() };
        let (u, report) = time_step(&u0, &EdgeMap::uniform(s), &cf, &params).unwrap();
        assert!(report.converged);
        for j in 1..20 {
            for i in 1..20 {
                assert!((u.get(i, j).unwrap() - u0.get(i, j).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stationary_input_stops_after_one_step() {
        let s = spec(16);
        let i0 = GridField::constant(s, 0.5);
        let params = SegmentationParams { init_circle: None, steps: Some(50), ..Default::default() };
        let seg = Segmentation::new(&i0, &SeedMask::free(s), params)
            .unwrap()
            .with_initial(GridField::constant(s, 0.2))
            .unwrap();
        let out = seg.run(|_| {}).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.stop, StopReason::Steady);
    }

    #[test]
    fn unconstrained_step_moves_circle_inward() {
        let s = spec(64);
        let u0 = initial_circle((0.5, 0.5), 0.3, s).unwrap();
        let cf = build_constraints(&SeedMask::free(s), 0.05, 1e6).unwrap();
        let params = SegmentationParams { epsilon: 1e-6, ..Default::default() };
        let (u, _) = time_step(&u0, &EdgeMap::uniform(s), &cf, &params).unwrap();
        // nodes closest to the initial zero set rise by about tau / r
        let tau = params.tau_for(&s);
        let mut rises = Vec::new();
        for j in 1..64 {
            for i in 1..64 {
                if u0.get(i, j).unwrap().abs() < 0.5 * s.h1() {
                    rises.push(u.get(i, j).unwrap() - u0.get(i, j).unwrap());
                }
            }
        }
        let mean = rises.iter().sum::<f64>() / rises.len() as f64;
        assert!(mean > 0.0);
        assert!((mean - tau / 0.3).abs() < 0.1 * tau / 0.3, "mean rise {mean}, expected {}", tau / 0.3);
    }
}
