//! Canned runs on the synthetic two-rectangles scene.
//!
//! Horizons are given in pixel time: a horizon `t` means `t * h1 * h2` in
//! domain units, so with the default step `tau = h1 * h2` it is `t` steps.

use serde::Serialize;

use crate::engine::SegmentationParams;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::ingest::{synth_bar_seed, synth_two_rectangles, SceneParams, SeedLabel, SeedMask};
use crate::solver::SolverParams;

pub const DEMO_GRID: usize = 128;

/// Over-relaxation used by the demos; the default converges too slowly on
/// the stiff rows produced by a small epsilon.
pub const DEMO_OMEGA: f64 = 1.9;

/// Outside bar between the rectangles: centre, width, height.
pub const OUTSIDE_BAR: ((f64, f64), f64, f64) = ((0.5, 0.5), 0.04, 0.6);
/// Inside bar within the left rectangle.
pub const INSIDE_BAR: ((f64, f64), f64, f64) = ((0.4, 0.5), 0.02, 0.2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demo {
    /// epsilon = 1, segments the outlines and respects the holes.
    NoObstacleEps1,
    /// epsilon = 1e-4, closes over both rectangles.
    NoObstacleEps4,
    /// epsilon = 1e-4 with an outside bar between the rectangles.
    OneObstacle,
    /// The outside bar plus an inside bar in the left rectangle.
    TwoObstacles,
}

impl Demo {
    pub const ALL: [Demo; 4] = [Demo::NoObstacleEps1, Demo::NoObstacleEps4, Demo::OneObstacle, Demo::TwoObstacles];

    pub fn name(self) -> &'static str {
        match self {
            Demo::NoObstacleEps1 => "no-obstacle-eps1",
            Demo::NoObstacleEps4 => "no-obstacle-eps4",
            Demo::OneObstacle => "one-obstacle",
            Demo::TwoObstacles => "two-obstacles",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| Error::Param(format!("unknown demo {name:?}")))
    }

    pub fn epsilon(self) -> f64 {
        match self {
            Demo::NoObstacleEps1 => 1.0,
            _ => 1e-4,
        }
    }

    /// Horizon in pixel time.
    pub fn pixel_time(self) -> f64 {
        match self {
            Demo::NoObstacleEps1 => 1.2,
            Demo::NoObstacleEps4 => 145.0,
            Demo::OneObstacle | Demo::TwoObstacles => 67.0,
        }
    }

    pub fn setup(self, n: usize) -> Result<DemoSetup> {
        let spec = GridSpec::unit_square(n)?;
        let image = synth_two_rectangles(&SceneParams::default(), spec)?;
        let bar = |((cx, cy), w, h): ((f64, f64), f64, f64), label| synth_bar_seed((cx, cy), w, h, label, spec);
        let mask = match self {
            Demo::NoObstacleEps1 | Demo::NoObstacleEps4 => SeedMask::free(spec),
            Demo::OneObstacle => bar(OUTSIDE_BAR, SeedLabel::Outside)?,
            Demo::TwoObstacles => bar(OUTSIDE_BAR, SeedLabel::Outside)?.union(&bar(INSIDE_BAR, SeedLabel::Inside)?)?,
        };
        let params = SegmentationParams {
            epsilon: self.epsilon(),
            final_time: Some(self.pixel_time() * spec.cell_volume()),
            init_circle: Some([0.5, 0.5, 0.08f64.sqrt()]),
            solver: SolverParams { omega: DEMO_OMEGA, ..SolverParams::default() },
            ..SegmentationParams::default()
        };
        Ok(DemoSetup { demo: self, image, mask, params })
    }
}

#[derive(Debug, Clone)]
pub struct DemoSetup {
    pub demo: Demo,
    pub image: GridField,
    pub mask: SeedMask,
    pub params: SegmentationParams,
}
