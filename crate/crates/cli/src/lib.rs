//! `seedseg` command line: scene synthesis, batch segmentation and the
//! canned two-rectangle demos.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{Rgb, RgbImage};
use serde::Serialize;

use seedseg_core::contour::Polyline;
use seedseg_core::edgemap::EdgeStopForm;
use seedseg_core::engine::{RunOutput, Segmentation, SegmentationParams, StepRecord, StopReason};
use seedseg_core::experiments::{Demo, DEMO_GRID};
use seedseg_core::grid::{GridField, GridSpec};
use seedseg_core::ingest::{
    image_grid, image_to_field, load_image, load_seed_mask, synth_bar_seed, synth_two_rectangles, Image, Sampling,
    SceneParams, SeedLabel, SeedMask,
};
use seedseg_core::io::{contour_to_json, save_level_set};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_TOPOLOGY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "seedseg", version, args_override_self = true, allow_negative_numbers = true, about = "Level-set segmentation with inside/outside seed constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the two-rectangle test scene as PGM, plus a seed mask PNG when bars are given.
    Synth(SynthArgs),
    /// Segment an image.
    Segment(SegmentArgs),
    /// Run one of the canned two-rectangle experiments.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Image width and height in pixels.
    #[arg(long, default_value_t = DEMO_GRID)]
    pub size: usize,
    #[arg(long, default_value_t = SceneParams::default().hole_height)]
    pub hole_height: f64,
    /// Seed bar: LABEL (inside|outside) CX CY WIDTH HEIGHT in domain units. Repeatable.
    #[arg(long, num_args = 5, value_names = ["LABEL", "CX", "CY", "W", "H"], action = clap::ArgAction::Append)]
    pub bar: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GForm {
    Rational,
    InverseSqrt,
}

impl From<GForm> for EdgeStopForm {
    fn from(g: GForm) -> Self {
        match g {
            GForm::Rational => EdgeStopForm::Rational,
            GForm::InverseSqrt => EdgeStopForm::InverseSqrt,
        }
    }
}

/// Numeric knobs; anything left unset keeps the engine default.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub g_form: Option<GForm>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub final_time: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub steady_tol: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub big_m: Option<f64>,
    #[arg(long, num_args = 3, value_names = ["CX", "CY", "R"], allow_negative_numbers = true)]
    pub init_circle: Option<Vec<f64>>,
}

impl ParamArgs {
    pub fn apply(&self, mut p: SegmentationParams) -> SegmentationParams {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { p.$field = v; } )* };
        }
        set!(epsilon, lambda, steady_tol, big_m);
        if let Some(g) = self.g_form {
            p.g_form = g.into();
        }
        if let Some(v) = self.omega {
            p.solver.omega = v;
        }
        if let Some(v) = self.tol {
            p.solver.tol = v;
        }
        if let Some(v) = self.max_sweeps {
            p.solver.max_sweeps = v;
        }
        p.sigma = self.sigma.or(p.sigma);
        p.tau = self.tau.or(p.tau);
        p.final_time = self.final_time.or(p.final_time);
        p.steps = self.steps.or(p.steps);
        p.delta = self.delta.or(p.delta);
        if let Some(c) = &self.init_circle {
            p.init_circle = Some([c[0], c[1], c[2]]);
        }
        p
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Grayscale PGM or PNG.
    pub image: PathBuf,
    /// Seed mask PNG: red = outside, blue = inside.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_parser = parse_demo)]
    pub demo: Demo,
    /// Grid size N (N x N cells on the unit square).
    #[arg(long, default_value_t = DEMO_GRID)]
    pub size: usize,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_demo(s: &str) -> std::result::Result<Demo, String> {
    Demo::from_name(s).map_err(|_| {
        let names: Vec<_> = Demo::ALL.iter().map(|d| d.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => synth(&a).map(|_| EXIT_OK),
        Command::Segment(a) => segment(&a),
        Command::Demo(a) => demo(&a),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    create_out(&a.out)?;
    let spec = GridSpec::unit_square(a.size)?;
    let scene = SceneParams { hole_height: a.hole_height, ..SceneParams::default() };
    let field = synth_two_rectangles(&scene, spec)?;
    let pgm = a.out.join("scene.pgm");
    Image::from_field(&field, a.size, a.size)?.save_pgm(&pgm).with_context(|| format!("writing {}", pgm.display()))?;
    log::info!("wrote {}", pgm.display());
    if a.bar.is_empty() {
        return Ok(());
    }
    let mut mask = SeedMask::free(spec);
    for bar in a.bar.chunks(5) {
        let label = match bar[0].to_ascii_lowercase().as_str() {
            "inside" => SeedLabel::Inside,
            "outside" => SeedLabel::Outside,
            other => bail!("bar label must be inside or outside, got {other:?}"),
        };
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("bad bar number {s:?}"));
        let seed = synth_bar_seed((num(&bar[1])?, num(&bar[2])?), num(&bar[3])?, num(&bar[4])?, label, spec)?;
        mask = mask.union(&seed)?;
    }
    let png = a.out.join("seeds.png");
    mask.save_png(&png, a.size, a.size).with_context(|| format!("writing {}", png.display()))?;
    log::info!("wrote {}", png.display());
    Ok(())
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GridReport {
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
}

impl From<&GridSpec> for GridReport {
    fn from(s: &GridSpec) -> Self {
        Self { n1: s.n1(), n2: s.n2(), l1: s.l1(), l2: s.l2() }
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub grid: GridReport,
    pub params: SegmentationParams,
    pub steps: usize,
    pub time: f64,
    pub stop: StopReason,
    pub converged: bool,
    pub total_sweeps: usize,
    pub max_linear_residual: f64,
    pub max_complementarity_residual: f64,
    pub interior_components: usize,
    pub component_areas: Vec<f64>,
    pub history: Vec<StepRecord>,
}

impl RunReport {
    pub fn new(spec: &GridSpec, params: &SegmentationParams, out: &RunOutput) -> Self {
        let fold = |f: fn(&StepRecord) -> f64| out.history.iter().map(f).fold(0.0, f64::max);
        Self {
            grid: spec.into(),
            params: params.clone(),
            steps: out.history.len(),
            time: out.last.time,
            stop: out.stop,
            converged: out.all_converged(),
            total_sweeps: out.history.iter().map(|r| r.sweeps).sum(),
            max_linear_residual: fold(|r| r.linear_residual),
            max_complementarity_residual: fold(|r| r.complementarity_residual),
            interior_components: out.last.components.count,
            component_areas: out.last.components.areas.clone(),
            history: out.history.clone(),
        }
    }
}

/// Writes `contour.json`, `levelset.bin`, `overlay.png` and `report.json`.
pub fn write_outputs(dir: &Path, image: &GridField, mask: &SeedMask, params: &SegmentationParams, out: &RunOutput) -> Result<RunReport> {
    create_out(dir)?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    };
    write("contour.json", contour_to_json(&out.last.contour).as_bytes())?;
    let ls = dir.join("levelset.bin");
    save_level_set(&ls, &out.last.u, out.last.time).with_context(|| format!("writing {}", ls.display()))?;
    let overlay = dir.join("overlay.png");
    render_overlay(image, mask, &out.last.contour)
        .save(&overlay)
        .with_context(|| format!("writing {}", overlay.display()))?;
    let report = RunReport::new(image.spec(), params, out);
    write("report.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

fn run_segmentation(image: &GridField, mask: &SeedMask, params: &SegmentationParams) -> Result<RunOutput> {
    let seg = Segmentation::new(image, mask, params.clone())?;
    let total = params.step_count(image.spec());
    seg.run(|snap| {
        log::debug!(
            "step {}/{total} t = {:.6} components {} change {:.3e}",
            snap.step,
            snap.time,
            snap.components.count,
            snap.max_change
        );
    })
    .map_err(|f| anyhow::anyhow!(f))
}

pub fn segment(a: &SegmentArgs) -> Result<i32> {
    let img = load_image(&a.image).with_context(|| format!("reading image {}", a.image.display()))?;
    let spec = image_grid(&img)?;
    let field = image_to_field(&img, spec, Sampling::Nearest)?;
    let mask = match &a.mask {
        Some(p) => load_seed_mask(p, spec).with_context(|| format!("reading seed mask {}", p.display()))?,
        None => SeedMask::free(spec),
    };
    let params = a.params.apply(SegmentationParams::default());
    let out = run_segmentation(&field, &mask, &params)?;
    let report = write_outputs(&a.out, &field, &mask, &params, &out)?;
    eprintln!(
        "{} steps to t = {:.6}, {} interior components, {} sweeps",
        report.steps, report.time, report.interior_components, report.total_sweeps
    );
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoSummary {
    pub demo: Demo,
    pub grid: GridReport,
    pub epsilon: f64,
    pub pixel_time: f64,
    pub steps: usize,
    pub time: f64,
    pub converged: bool,
    pub interior_components: usize,
    pub expected_components: Option<usize>,
    pub inside_seeds_negative: bool,
    pub outside_seeds_positive: bool,
    pub pass: bool,
}

pub fn expected_components(demo: Demo) -> Option<usize> {
    match demo {
        Demo::NoObstacleEps1 => None,
        Demo::NoObstacleEps4 => Some(1),
        Demo::OneObstacle => Some(2),
        Demo::TwoObstacles => None,
    }
}

pub fn demo(a: &DemoArgs) -> Result<i32> {
    let setup = a.demo.setup(a.size)?;
    let params = a.params.apply(setup.params.clone());
    let out = run_segmentation(&setup.image, &setup.mask, &params)?;
    let report = write_outputs(&a.out, &setup.image, &setup.mask, &params, &out)?;
    let u = &out.last.u;
    let signs = |label: SeedLabel, ok: fn(f64) -> bool| setup.mask.nodes(label).all(|(i, j)| ok(u.get(i, j).unwrap_or(f64::NAN)));
    let expected = expected_components(a.demo);
    let summary = DemoSummary {
        demo: a.demo,
        grid: setup.image.spec().into(),
        epsilon: params.epsilon,
        pixel_time: a.demo.pixel_time(),
        steps: report.steps,
        time: report.time,
        converged: report.converged,
        interior_components: report.interior_components,
        expected_components: expected,
        inside_seeds_negative: signs(SeedLabel::Inside, |x| x < 0.0),
        outside_seeds_positive: signs(SeedLabel::Outside, |x| x > 0.0),
        pass: false,
    };
    let pass = expected.is_none_or(|n| n == summary.interior_components)
        && summary.inside_seeds_negative
        && summary.outside_seeds_positive;
    let summary = DemoSummary { pass, ..summary };
    let path = a.out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;
    eprintln!(
        "{}: {} components (expected {}) after {} steps: {}",
        a.demo.name(),
        summary.interior_components,
        expected.map_or("any".to_string(), |n| n.to_string()),
        summary.steps,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if !pass {
        EXIT_TOPOLOGY
    } else if !summary.converged {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

/// Image in gray, seeds tinted, zero contour in green; one pixel per node.
pub fn render_overlay(image: &GridField, mask: &SeedMask, contour: &[Polyline]) -> RgbImage {
    let spec = image.spec();
    let (w, h) = (spec.width() as u32, spec.height() as u32);
    let mut canvas = RgbImage::from_fn(w, h, |x, y| {
        let g = (image.get(x as usize, y as usize).unwrap_or(0.0).clamp(0.0, 1.0) * 255.0).round() as u8;
        match mask.label(x as usize, y as usize) {
            SeedLabel::Free => Rgb([g, g, g]),
            SeedLabel::Outside => Rgb([255, g / 3, g / 3]),
            SeedLabel::Inside => Rgb([g / 3, g / 3, 255]),
        }
    });
    let to_px = |p: &[f64; 2]| ((p[0] / spec.h1()).round() as i64, (p[1] / spec.h2()).round() as i64);
    for line in contour {
        let mut pts: Vec<(i64, i64)> = line.points.iter().map(to_px).collect();
        if line.closed {
            if let Some(&first) = pts.first() {
                pts.push(first);
            }
        }
        if pts.len() == 1 {
            plot(&mut canvas, pts[0]);
        }
        for seg in pts.windows(2) {
            draw_line(&mut canvas, seg[0], seg[1]);
        }
    }
    canvas
}

fn plot(canvas: &mut RgbImage, (x, y): (i64, i64)) {
    if x >= 0 && y >= 0 && (x as u32) < canvas.width() && (y as u32) < canvas.height() {
        canvas.put_pixel(x as u32, y as u32, Rgb([0, 220, 0]));
    }
}

/// Bresenham.
fn draw_line(canvas: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(canvas, (x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
