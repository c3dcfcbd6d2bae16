//! In-memory sessions. Each session holds one image, its seed mask and the
//! state of at most one run; live state is swapped whole under a short lock
//! so pollers never see a contour from one step and a count from another.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::Serialize;
use uuid::Uuid;

use seedseg_core::contour::Polyline;
use seedseg_core::edgemap::EdgeMap;
use seedseg_core::engine::{initial_level_set, RunOutput, SegmentationParams, Snapshot, StopReason};
use seedseg_core::grid::{GridField, GridSpec};
use seedseg_core::ingest::{SeedLabel, SeedMask};

/// One observed state of the level set, as served to pollers.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LiveState {
    pub step: usize,
    pub time: f64,
    pub contour: Vec<Polyline>,
    pub component_count: usize,
    pub component_areas: Vec<f64>,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostics {
    pub sweeps: usize,
    pub sweep_difference: f64,
    pub linear_residual: f64,
    pub complementarity_residual: f64,
    pub converged: bool,
    pub max_change: f64,
}

impl From<&Snapshot> for LiveState {
    fn from(s: &Snapshot) -> Self {
        Self {
            step: s.step,
            time: s.time,
            contour: s.contour.clone(),
            component_count: s.components.count,
            component_areas: s.components.areas.clone(),
            diagnostics: s.report.map(|r| Diagnostics {
                sweeps: r.sweeps,
                sweep_difference: r.sweep_difference,
                linear_residual: r.linear_residual,
                complementarity_residual: r.complementarity_residual,
                converged: r.converged,
                max_change: s.max_change,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl FieldStats {
    pub fn of(f: &GridField) -> Self {
        let v = f.values();
        Self {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Idle,
    Running { run_id: Uuid },
    Done { run_id: Uuid, stop: StopReason, all_converged: bool },
    Failed { run_id: Uuid, error: String },
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Idle => "idle",
            RunStatus::Running { .. } => "running",
            RunStatus::Done { .. } => "done",
            RunStatus::Failed { .. } => "failed",
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, RunStatus::Running { .. })
    }

    fn run_id(&self) -> Option<Uuid> {
        match self {
            RunStatus::Idle => None,
            RunStatus::Running { run_id } | RunStatus::Done { run_id, .. } | RunStatus::Failed { run_id, .. } => Some(*run_id),
        }
    }
}

/// Body of `GET /sessions/{id}/state`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StateView {
    pub id: Uuid,
    pub status: &'static str,
    pub run_id: Option<Uuid>,
    #[serde(flatten)]
    pub live: LiveState,
    pub stop: Option<StopReason>,
    pub all_converged: Option<bool>,
    pub error: Option<String>,
    pub g0: FieldStats,
    pub seeds: SeedCounts,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeedCounts {
    pub inside: usize,
    pub outside: usize,
}

struct Inner {
    mask: Arc<SeedMask>,
    status: RunStatus,
    live: Arc<LiveState>,
    ring: VecDeque<Arc<LiveState>>,
    g0: FieldStats,
    last_access: Instant,
}

pub struct Session {
    pub id: Uuid,
    pub width: usize,
    pub height: usize,
    /// Image sampled on the grid.
    pub image: Arc<GridField>,
    ring_capacity: usize,
    inner: Mutex<Inner>,
}

/// Contour of the default starting level set for `mask`.
fn initial_live(mask: &SeedMask) -> LiveState {
    match initial_level_set(&SegmentationParams::default(), mask) {
        Ok(u) => LiveState::from(&Snapshot::of(0, 0.0, u, None, 0.0)),
        Err(e) => {
            log::warn!("no initial level set: {e}");
            LiveState { step: 0, time: 0.0, contour: vec![], component_count: 0, component_areas: vec![], diagnostics: None }
        }
    }
}

impl Session {
    pub fn new(image: GridField, width: usize, height: usize, g0: &EdgeMap, ring_capacity: usize) -> Self {
        let mask = SeedMask::free(*image.spec());
        let live = Arc::new(initial_live(&mask));
        Self {
            id: Uuid::new_v4(),
            width,
            height,
            image: Arc::new(image),
            ring_capacity: ring_capacity.max(1),
            inner: Mutex::new(Inner {
                mask: Arc::new(mask),
                status: RunStatus::Idle,
                live,
                ring: VecDeque::new(),
                g0: FieldStats::of(g0.g0()),
                last_access: Instant::now(),
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // A panic while holding the lock leaves plain data behind; keep serving it.
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn spec(&self) -> GridSpec {
        *self.image.spec()
    }

    pub fn touch(&self) {
        self.lock().last_access = Instant::now();
    }

    pub fn last_access(&self) -> Instant {
        self.lock().last_access
    }

    pub fn is_active(&self) -> bool {
        self.lock().status.is_active()
    }

    pub fn mask(&self) -> Arc<SeedMask> {
        self.lock().mask.clone()
    }

    /// Replaces the mask unless a run is active; resets the session to idle.
    pub fn set_mask(&self, mask: SeedMask) -> Result<(), RunConflict> {
        let live = Arc::new(initial_live(&mask));
        let mut inner = self.lock();
        if inner.status.is_active() {
            return Err(RunConflict);
        }
        inner.mask = Arc::new(mask);
        inner.status = RunStatus::Idle;
        inner.live = live;
        inner.ring.clear();
        Ok(())
    }

    /// Claims the session for a new run. Returns the previous status so a
    /// failed start can be rolled back.
    pub fn begin_run(&self) -> Result<(Uuid, RunStatus), RunConflict> {
        let mut inner = self.lock();
        if inner.status.is_active() {
            return Err(RunConflict);
        }
        let run_id = Uuid::new_v4();
        let prev = std::mem::replace(&mut inner.status, RunStatus::Running { run_id });
        inner.ring.clear();
        Ok((run_id, prev))
    }

    pub fn abort_start(&self, run_id: Uuid, prev: RunStatus) {
        let mut inner = self.lock();
        if inner.status == (RunStatus::Running { run_id }) {
            inner.status = prev;
        }
    }

    pub fn set_g0(&self, em: &EdgeMap) {
        self.lock().g0 = FieldStats::of(em.g0());
    }

    /// Publishes one step.
    pub fn publish(&self, snap: &Snapshot) {
        let live = Arc::new(LiveState::from(snap));
        let mut inner = self.lock();
        if inner.ring.len() == self.ring_capacity {
            inner.ring.pop_front();
        }
        inner.ring.push_back(live.clone());
        inner.live = live;
    }

    pub fn finish(&self, run_id: Uuid, result: Result<&RunOutput, String>) {
        let mut inner = self.lock();
        inner.status = match result {
            Ok(out) => RunStatus::Done { run_id, stop: out.stop, all_converged: out.all_converged() },
            Err(error) => RunStatus::Failed { run_id, error },
        };
        inner.last_access = Instant::now();
    }

    pub fn view(&self) -> StateView {
        let inner = self.lock();
        let (stop, all_converged, error) = match &inner.status {
            RunStatus::Done { stop, all_converged, .. } => (Some(*stop), Some(*all_converged), None),
            RunStatus::Failed { error, .. } => (None, None, Some(error.clone())),
            _ => (None, None, None),
        };
        StateView {
            id: self.id,
            status: inner.status.name(),
            run_id: inner.status.run_id(),
            live: (*inner.live).clone(),
            stop,
            all_converged,
            error,
            g0: inner.g0,
            seeds: SeedCounts { inside: inner.mask.count(SeedLabel::Inside), outside: inner.mask.count(SeedLabel::Outside) },
        }
    }

    /// Recent snapshots of the current run, oldest first.
    pub fn snapshots(&self) -> Vec<Arc<LiveState>> {
        self.lock().ring.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConflict;
