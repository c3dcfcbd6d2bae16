use proptest::prelude::*;

use seedseg_core::assembler::assemble;
use seedseg_core::edgemap::{build_edge_map, EdgeMap, EdgeStopParams, MollifierParams};
use seedseg_core::engine::{build_constraints, initial_circle, time_step, SegmentationParams};
use seedseg_core::grid::{GridField, GridSpec};
use seedseg_core::ingest::{rasterize_strokes, SeedLabel, Stroke, StrokeLabel};
use seedseg_core::solver::{complementarity_residual, psor_solve, Bounds, SolverParams};

fn field(spec: GridSpec, seed: &[f64]) -> GridField {
    let n = seed.len();
    let values = (0..spec.node_count()).map(|k| seed[(k * 7 + k / 3) % n]).collect();
    GridField::new(spec, values).unwrap()
}

fn tight() -> SolverParams {
    SolverParams { omega: 1.5, tol: 1e-12, max_sweeps: 50_000 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Raising the right-hand side or the obstacles never lowers the solution.
    #[test]
    fn bounded_solve_is_monotone(
        n in 3usize..9,
        u_seed in proptest::collection::vec(-1.0f64..1.0, 16),
        lift in proptest::collection::vec(0.0f64..0.3, 16),
        eps_exp in -4.0f64..0.0,
    ) {
        let spec = GridSpec::unit_square(n).unwrap();
        let u = field(spec, &u_seed);
        let sys = assemble(&u, &EdgeMap::uniform(spec), spec.cell_volume(), 10f64.powf(eps_exp)).unwrap();
        let lower: Vec<f64> = (0..sys.dim()).map(|k| if k % 5 == 0 { -0.2 } else { -10.0 }).collect();
        let upper: Vec<f64> = (0..sys.dim()).map(|k| if k % 7 == 3 { 0.1 } else { 10.0 }).collect();
        let raised_lower: Vec<f64> = lower.iter().enumerate().map(|(k, w)| w + lift[k % 16]).collect();
        let low = Bounds::new(lower, upper.clone()).unwrap();
        let high = Bounds::new(raised_lower, upper.iter().map(|v| v + 0.05).collect()).unwrap();

        let (a, ra) = psor_solve(&sys, &low, u.values(), &tight()).unwrap();
        let (b, rb) = psor_solve(&sys, &high, u.values(), &tight()).unwrap();
        prop_assert!(ra.converged && rb.converged);
        for k in 0..a.len() {
            prop_assert!(a[k] <= b[k] + 1e-9, "node {}: {} > {}", k, a[k], b[k]);
        }
    }

    /// One engine step keeps every node inside its obstacles and satisfies
    /// the complementarity conditions of the system it assembled.
    #[test]
    fn step_honours_painted_seeds(
        n in 6usize..14,
        r in 0.15f64..0.35,
        inside in (1.0f64..5.0, 1.0f64..5.0),
        outside in (8.0f64..12.0, 8.0f64..12.0),
    ) {
        let n = n.max(13);
        let spec = GridSpec::unit_square(n).unwrap();
        let strokes = vec![
            Stroke { label: StrokeLabel::Inside, points: vec![[inside.0, inside.1]], radius: 1.0 },
            Stroke { label: StrokeLabel::Outside, points: vec![[outside.0, outside.1], [outside.0, 4.0]], radius: 0.8 },
        ];
        let mask = rasterize_strokes(&strokes, spec).unwrap();
        let params = SegmentationParams { solver: tight(), ..Default::default() };
        let cf = build_constraints(&mask, params.delta_for(&spec), params.big_m).unwrap();
        let u0 = initial_circle((0.5, 0.5), r, spec).unwrap();
        let image = GridField::from_fn(spec, |x, y| if (x - 0.5).abs() < 0.2 && (y - 0.5).abs() < 0.2 { 0.0 } else { 1.0 }).unwrap();
        let em = build_edge_map(&image, &MollifierParams::new(spec.h1()), &EdgeStopParams::default()).unwrap();
        let (u, report) = time_step(&u0, &em, &cf, &params).unwrap();
        prop_assert!(report.converged);
        for (k, &x) in u.values().iter().enumerate() {
            prop_assert!(cf.w.values()[k] <= x && x <= cf.v.values()[k]);
            match mask.labels()[k] {
                SeedLabel::Inside => prop_assert!(x < 0.0),
                SeedLabel::Outside => prop_assert!(x > 0.0),
                SeedLabel::Free => {}
            }
        }
        let sys = assemble(&cf.clamp(&u0).unwrap(), &em, params.tau_for(&spec), params.epsilon).unwrap();
        prop_assert!(complementarity_residual(&sys, &cf.to_bounds(), u.values()) <= 100.0 * params.solver.tol);
    }
}

#[test]
fn step_without_seeds_matches_unbounded_solve() {
    let spec = GridSpec::unit_square(16).unwrap();
    let u0 = initial_circle((0.4, 0.55), 0.3, spec).unwrap();
    let em = EdgeMap::uniform(spec);
    let mask = seedseg_core::ingest::SeedMask::free(spec);
    let params = SegmentationParams { solver: tight(), ..Default::default() };
    let cf = build_constraints(&mask, params.delta_for(&spec), params.big_m).unwrap();
    let (u, _) = time_step(&u0, &em, &cf, &params).unwrap();
    let sys = assemble(&u0, &em, params.tau_for(&spec), params.epsilon).unwrap();
    let (free, _) = seedseg_core::solver::sor_solve(&sys, u0.values(), &params.solver).unwrap();
    for (a, b) in u.values().iter().zip(&free) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
