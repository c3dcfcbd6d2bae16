//! Complementary finite-volume discretization of one semi-implicit step.
//!
//! For each interior dual volume `(i, j)` the diffusion coefficients are frozen
//! at the previous level: `g0` averaged onto the volume edges, the regularized
//! gradient norm `Q` evaluated at each edge midpoint (normal component by a
//! finite difference, tangential component by differencing corner averages),
//! and the capacity `Q_ij` taken as the mean of the four edge values. The row is
//!
//! ```text
//! A_nb = -tau * Q_ij * g0_edge / (h^2 * Q_edge)      for each neighbour nb
//! A_ij = 1 - sum(A_nb)                               rhs = u_prev_ij
//! ```
//!
//! Boundary nodes carry the homogeneous Neumann condition as a two-entry row
//! `u_b - u_inward = 0`. Corner nodes use the horizontal pairing.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::edgemap::EdgeMap;
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// towards `(i+1, j)`
    East,
    /// towards `(i-1, j)`
    West,
    /// towards `(i, j+1)`
    North,
    /// towards `(i, j-1)`
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::North, Direction::South];

    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }
}

/// Four-node average approximating `u` at the corner shared by nodes `(i, j)`,
/// `(p, j)`, `(i, q)` and `(p, q)`, where `p = i +- 1` and `q = j +- 1`.
pub fn corner_value(u: &GridField, i: usize, j: usize, p: usize, q: usize) -> Result<f64> {
    let spec = u.spec();
    if i.abs_diff(p) != 1 || j.abs_diff(q) != 1 {
        return Err(Error::Param(format!("({p}, {q}) is not a diagonal neighbour of ({i}, {j})")));
    }
    for (a, b) in [(i, j), (p, q)] {
        if !spec.contains(a, b) {
            return Err(Error::Index { i: a, j: b, n1: spec.n1(), n2: spec.n2() });
        }
    }
    Ok(corner(u, i, j, p, q))
}

#[inline]
fn corner(u: &GridField, i: usize, j: usize, p: usize, q: usize) -> f64 {
    0.25 * (u.at(i, j) + u.at(p, j) + u.at(i, q) + u.at(p, q))
}

/// Gradient `(du/dx1, du/dx2)` at the midpoint of the edge of volume `(i, j)`
/// facing `dir`. Requires an interior node.
pub fn edge_gradient(u: &GridField, i: usize, j: usize, dir: Direction) -> Result<(f64, f64)> {
    let spec = u.spec();
    if !spec.is_interior(i, j) {
        return Err(Error::Index { i, j, n1: spec.n1(), n2: spec.n2() });
    }
    Ok(gradient(u, i, j, dir))
}

#[inline]
fn gradient(u: &GridField, i: usize, j: usize, dir: Direction) -> (f64, f64) {
    let spec = u.spec();
    let (h1, h2) = (spec.h1(), spec.h2());
    match dir {
        Direction::East | Direction::West => {
            let p = if dir == Direction::East { i + 1 } else { i - 1 };
            let normal = (u.at(p, j) - u.at(i, j)) / h1;
            let tangential = (corner(u, i, j, p, j + 1) - corner(u, i, j, p, j - 1)) / h2;
            let sign = if dir == Direction::East { 1.0 } else { -1.0 };
            (sign * normal, tangential)
        }
        Direction::North | Direction::South => {
            let q = if dir == Direction::North { j + 1 } else { j - 1 };
            let normal = (u.at(i, q) - u.at(i, j)) / h2;
            let tangential = (corner(u, i, j, i + 1, q) - corner(u, i, j, i - 1, q)) / h1;
            let sign = if dir == Direction::North { 1.0 } else { -1.0 };
            (tangential, sign * normal)
        }
    }
}

/// Regularized gradient norms of one interior volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeQ {
    pub east: f64,
    pub west: f64,
    pub north: f64,
    pub south: f64,
    /// Mean of the four edge values.
    pub cell: f64,
}

impl VolumeQ {
    pub fn edge(&self, dir: Direction) -> f64 {
        match dir {
            Direction::East => self.east,
            Direction::West => self.west,
            Direction::North => self.north,
            Direction::South => self.south,
        }
    }
}

/// `Q = sqrt(eps^2 + |grad u|^2)` on every edge of every interior volume.
#[derive(Debug, Clone)]
pub struct QField {
    spec: GridSpec,
    /// Interior volumes, indexed `(j-1) * (N1-1) + (i-1)`.
    volumes: Vec<VolumeQ>,
}

impl QField {
    pub fn volume(&self, i: usize, j: usize) -> Result<VolumeQ> {
        if !self.spec.is_interior(i, j) {
            return Err(Error::Index { i, j, n1: self.spec.n1(), n2: self.spec.n2() });
        }
        Ok(self.volumes[(j - 1) * (self.spec.n1() - 1) + (i - 1)])
    }

    pub fn volumes(&self) -> &[VolumeQ] {
        &self.volumes
    }
}

fn volume_q(u: &GridField, i: usize, j: usize, eps2: f64) -> VolumeQ {
    let q = |dir| {
        let (a, b) = gradient(u, i, j, dir);
        (eps2 + a * a + b * b).sqrt()
    };
    let (east, west, north, south) = (q(Direction::East), q(Direction::West), q(Direction::North), q(Direction::South));
    VolumeQ { east, west, north, south, cell: 0.25 * (east + north + west + south) }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Param(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

pub fn build_q(u_prev: &GridField, epsilon: f64) -> Result<QField> {
    check_epsilon(epsilon)?;
    let spec = *u_prev.spec();
    let eps2 = epsilon * epsilon;
    let inner = spec.n1() - 1;
    let volumes = (0..inner * (spec.n2() - 1))
        .into_par_iter()
        .map(|k| volume_q(u_prev, k % inner + 1, k / inner + 1, eps2))
        .collect();
    Ok(QField { spec, volumes })
}

/// One row of the five-point system. Neighbours absent from the row are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stencil {
    pub center: f64,
    pub east: f64,
    pub west: f64,
    pub north: f64,
    pub south: f64,
}

impl Stencil {
    pub fn coefficient(&self, dir: Direction) -> f64 {
        match dir {
            Direction::East => self.east,
            Direction::West => self.west,
            Direction::North => self.north,
            Direction::South => self.south,
        }
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        self.east + self.west + self.north + self.south
    }
}

/// The linear system of one time step over all `(N1+1)(N2+1)` nodes.
#[derive(Debug, Clone)]
pub struct PentaSystem {
    spec: GridSpec,
    rows: Vec<Stencil>,
    rhs: Vec<f64>,
}

impl PentaSystem {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rows(&self) -> &[Stencil] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn stencil(&self, i: usize, j: usize) -> Result<Stencil> {
        Ok(self.rows[self.spec.flatten(i, j)?])
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Off-diagonal part of row `row` applied to `x`.
    #[inline]
    pub fn off_diagonal_dot(&self, row: usize, x: &[f64]) -> f64 {
        let west = if row > 0 { self.rows[row].west * x[row - 1] } else { 0.0 };
        self.dot_without_west(row, x) + west
    }

    /// East, south and north terms of row `row` applied to `x`. Rows on the
    /// `i = 0` and `i = N1` sides carry zero west and east coefficients, so
    /// only the ends of the flat vector need guarding.
    #[inline]
    pub fn dot_without_west(&self, row: usize, x: &[f64]) -> f64 {
        let w = self.spec.width();
        let s = &self.rows[row];
        let mut acc = 0.0;
        if row + 1 < x.len() {
            acc += s.east * x[row + 1];
        }
        if row >= w {
            acc += s.south * x[row - w];
        }
        if row + w < x.len() {
            acc += s.north * x[row + w];
        }
        acc
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|r| self.rows[r].center * x[r] + self.off_diagonal_dot(r, x)).collect()
    }

    /// Row-major dense copy; only sensible for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let w = self.spec.width();
        let mut dense = vec![vec![0.0; n]; n];
        for (r, s) in self.rows.iter().enumerate() {
            let i = r % w;
            dense[r][r] = s.center;
            if i > 0 {
                dense[r][r - 1] = s.west;
            }
            if i + 1 < w {
                dense[r][r + 1] = s.east;
            }
            if r >= w {
                dense[r][r - w] = s.south;
            }
            if r + w < n {
                dense[r][r + w] = s.north;
            }
        }
        dense
    }

    /// Plain-text dump, one row per line: `I center east west north south rhs`.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for (r, (s, b)) in self.rows.iter().zip(&self.rhs).enumerate() {
            writeln!(
                out,
                "{r} {:e} {:e} {:e} {:e} {:e} {:e}",
                s.center, s.east, s.west, s.north, s.south, b
            )
            .expect("string write");
        }
        out
    }
}

fn boundary_stencil(spec: &GridSpec, i: usize, j: usize) -> Stencil {
    let mut s = Stencil { center: 1.0, ..Stencil::default() };
    if i == 0 {
        s.east = -1.0;
    } else if i == spec.n1() {
        s.west = -1.0;
    } else if j == 0 {
        s.north = -1.0;
    } else {
        s.south = -1.0;
    }
    s
}

fn interior_stencil(u: &GridField, em: &EdgeMap, i: usize, j: usize, tau: f64, eps2: f64) -> Stencil {
    let spec = u.spec();
    let q = volume_q(u, i, j, eps2);
    let kx = tau * q.cell / (spec.h1() * spec.h1());
    let ky = tau * q.cell / (spec.h2() * spec.h2());
    let east = -kx * em.east(i, j) / q.east;
    let west = -kx * em.east(i - 1, j) / q.west;
    let north = -ky * em.north(i, j) / q.north;
    let south = -ky * em.north(i, j - 1) / q.south;
    Stencil { center: 1.0 - (east + north + west + south), east, west, north, south }
}

/// Builds the system for the step from `u_prev` with time step `tau`.
pub fn assemble(u_prev: &GridField, em: &EdgeMap, tau: f64, epsilon: f64) -> Result<PentaSystem> {
    check_epsilon(epsilon)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Param(format!("tau must be positive, got {tau}")));
    }
    let spec = *u_prev.spec();
    if em.spec() != &spec {
        return Err(Error::Shape("edge map and level set live on different grids".into()));
    }
    let eps2 = epsilon * epsilon;
    let w = spec.width();
    let rows: Vec<Stencil> = (0..spec.node_count())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % w, k / w);
            if spec.is_interior(i, j) {
                interior_stencil(u_prev, em, i, j, tau, eps2)
            } else {
                boundary_stencil(&spec, i, j)
            }
        })
        .collect();
    let rhs = (0..spec.node_count())
        .map(|k| if spec.is_interior(k % w, k / w) { u_prev.values()[k] } else { 0.0 })
        .collect();
    Ok(PentaSystem { spec, rows, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(spec: GridSpec, seed: u64) -> GridField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridField::new(spec, (0..spec.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn corner_values() {
        let spec = GridSpec::unit_square(4).unwrap();
        let c = GridField::constant(spec, 2.5);
        assert_eq!(corner_value(&c, 1, 1, 2, 0).unwrap(), 2.5);

        let ramp = GridField::from_fn(spec, |x, _| x / spec.h1()).unwrap();
        // nodes (1,1), (2,1), (1,2), (2,2) hold 1, 2, 1, 2 in units of h1
        assert_eq!(corner_value(&ramp, 1, 1, 2, 2).unwrap(), 1.5);
        let unit = GridField::new(spec, (0..25).map(|k| (k % 5 % 2) as f64).collect()).unwrap();
        assert_eq!(corner_value(&unit, 0, 0, 1, 1).unwrap(), 0.5);

        let r = random_field(spec, 3);
        for (i, j, p, q) in [(1, 1, 0, 0), (2, 3, 3, 4), (4, 4, 3, 3)] {
            let brute = (r.get(i, j).unwrap() + r.get(p, j).unwrap() + r.get(i, q).unwrap() + r.get(p, q).unwrap()) / 4.0;
            assert_eq!(corner_value(&r, i, j, p, q).unwrap(), brute);
        }
        assert!(matches!(corner_value(&r, 4, 4, 5, 5), Err(Error::Index { .. })));
        assert!(corner_value(&r, 1, 1, 3, 2).is_err());
    }

    #[test]
    fn edge_gradients_exact_on_linear_fields() {
        let spec = GridSpec::new(2.0, 1.0, 8, 5).unwrap();
        let x = GridField::from_fn(spec, |x, _| x).unwrap();
        let y = GridField::from_fn(spec, |_, y| y).unwrap();
        let mixed = GridField::from_fn(spec, |x, y| 0.3 - 2.0 * x + 0.5 * y).unwrap();
        let c = GridField::constant(spec, 4.0);
        for dir in Direction::ALL {
            for (i, j) in [(1, 1), (4, 2), (7, 4)] {
                let (a, b) = edge_gradient(&x, i, j, dir).unwrap();
                assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-12);
                let (a, b) = edge_gradient(&y, i, j, dir).unwrap();
                assert!(a.abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
                let (a, b) = edge_gradient(&mixed, i, j, dir).unwrap();
                assert!((a + 2.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
                assert_eq!(edge_gradient(&c, i, j, dir).unwrap(), (0.0, 0.0));
            }
        }
        assert!(edge_gradient(&x, 0, 2, Direction::East).is_err());
        assert!(edge_gradient(&x, 8, 2, Direction::West).is_err());
    }

    #[test]
    fn q_examples() {
        let spec = GridSpec::unit_square(10).unwrap();
        let q = build_q(&GridField::constant(spec, 0.3), 1e-4).unwrap();
        assert!(q.volumes().iter().all(|v| v.cell == 1e-4 && Direction::ALL.iter().all(|&d| v.edge(d) == 1e-4)));

        let ramp = GridField::from_fn(spec, |x, _| x).unwrap();
        let q = build_q(&ramp, 1.0).unwrap();
        for v in q.volumes() {
            for d in Direction::ALL {
                assert!((v.edge(d) - 2f64.sqrt()).abs() < 1e-12);
            }
        }
        assert!(matches!(build_q(&ramp, 0.0), Err(Error::Param(_))));
        assert!(q.volume(0, 3).is_err());
    }

    #[test]
    fn q_cell_is_mean_and_bounded_below() {
        let spec = GridSpec::unit_square(9).unwrap();
        let q = build_q(&random_field(spec, 11), 0.01).unwrap();
        for v in q.volumes() {
            assert_eq!(v.cell, 0.25 * (v.east + v.north + v.west + v.south));
            assert!(Direction::ALL.iter().all(|&d| v.edge(d) >= 0.01));
        }
    }

    #[test]
    fn uniform_data_gives_laplacian_stencil() {
        let spec = GridSpec::unit_square(8).unwrap();
        let h = spec.h1();
        let tau = 0.003;
        let em = EdgeMap::uniform(spec);
        let sys = assemble(&GridField::constant(spec, -0.2), &em, tau, 0.37).unwrap();
        let off = -tau / (h * h);
        for j in 1..8 {
            for i in 1..8 {
                let s = sys.stencil(i, j).unwrap();
                for d in Direction::ALL {
                    assert!((s.coefficient(d) - off).abs() < 1e-12 * off.abs());
                }
                assert!((s.center - (1.0 - 4.0 * off)).abs() < 1e-12);
            }
        }
        assert!(sys.rhs().iter().enumerate().all(|(k, &b)| {
            let (i, j) = spec.unflatten(k).unwrap();
            b == if spec.is_interior(i, j) { -0.2 } else { 0.0 }
        }));
    }

    #[test]
    fn vanishing_tau_gives_identity_interior() {
        let spec = GridSpec::unit_square(6).unwrap();
        let u = random_field(spec, 5);
        let sys = assemble(&u, &EdgeMap::uniform(spec), 1e-300, 1e-3).unwrap();
        for j in 1..6 {
            for i in 1..6 {
                let s = sys.stencil(i, j).unwrap();
                assert_eq!(s.center, 1.0);
                assert!(s.off_diagonal_sum().abs() < 1e-280);
            }
        }
    }

    #[test]
    fn boundary_rows_are_neumann_pairs() {
        let spec = GridSpec::new(1.0, 2.0, 4, 6).unwrap();
        let sys = assemble(&random_field(spec, 8), &EdgeMap::uniform(spec), 0.01, 0.1).unwrap();
        for j in 0..=6 {
            let s = sys.stencil(0, j).unwrap();
            assert_eq!(s, Stencil { center: 1.0, east: -1.0, ..Default::default() });
            let s = sys.stencil(4, j).unwrap();
            assert_eq!(s, Stencil { center: 1.0, west: -1.0, ..Default::default() });
        }
        for i in 1..4 {
            assert_eq!(sys.stencil(i, 0).unwrap(), Stencil { center: 1.0, north: -1.0, ..Default::default() });
            assert_eq!(sys.stencil(i, 6).unwrap(), Stencil { center: 1.0, south: -1.0, ..Default::default() });
        }
        for (k, &b) in sys.rhs().iter().enumerate() {
            let (i, j) = spec.unflatten(k).unwrap();
            if !spec.is_interior(i, j) {
                assert_eq!(b, 0.0);
            }
        }
    }

    #[test]
    fn interior_rows_are_m_matrix_rows() {
        let spec = GridSpec::unit_square(12).unwrap();
        let u = random_field(spec, 21);
        let g0 = GridField::new(spec, (0..169).map(|k| 0.05 + 0.9 * ((k * 37 % 101) as f64 / 100.0)).collect()).unwrap();
        let em = EdgeMap::from_node_values(g0).unwrap();
        let sys = assemble(&u, &em, 0.01, 1e-3).unwrap();
        for j in 1..12 {
            for i in 1..12 {
                let s = sys.stencil(i, j).unwrap();
                assert!(Direction::ALL.iter().all(|&d| s.coefficient(d) <= 0.0));
                assert!(s.center >= 1.0);
                let excess = s.center - 1.0 + s.off_diagonal_sum();
                assert!(excess.abs() <= 1e-13 * s.center);
            }
        }
    }

    #[test]
    fn mirrored_inputs_mirror_the_system() {
        let spec = GridSpec::unit_square(10).unwrap();
        let u = random_field(spec, 9);
        let g: Vec<f64> = (0..121).map(|k| 0.1 + 0.8 * ((k * 13 % 17) as f64 / 16.0)).collect();
        let mirror = |v: &[f64]| -> Vec<f64> {
            (0..121).map(|k| v[(k / 11) * 11 + (10 - k % 11)]).collect()
        };
        let em = EdgeMap::from_node_values(GridField::new(spec, g.clone()).unwrap()).unwrap();
        let em_m = EdgeMap::from_node_values(GridField::new(spec, mirror(&g)).unwrap()).unwrap();
        let u_m = GridField::new(spec, mirror(u.values())).unwrap();
        let a = assemble(&u, &em, 0.02, 0.05).unwrap();
        let b = assemble(&u_m, &em_m, 0.02, 0.05).unwrap();
        for j in 1..10 {
            for i in 1..10 {
                let s = a.stencil(i, j).unwrap();
                let t = b.stencil(10 - i, j).unwrap();
                let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
                assert!(close(s.center, t.center));
                assert!(close(s.east, t.west) && close(s.west, t.east));
                assert!(close(s.north, t.north) && close(s.south, t.south));
            }
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let spec = GridSpec::new(1.0, 1.0, 4, 3).unwrap();
        let sys = assemble(&random_field(spec, 2), &EdgeMap::uniform(spec), 0.05, 0.2).unwrap();
        let x = random_field(spec, 4);
        let dense = sys.to_dense();
        let y = sys.apply(x.values());
        for (r, row) in dense.iter().enumerate() {
            let expect: f64 = row.iter().zip(x.values()).map(|(a, b)| a * b).sum();
            assert!((expect - y[r]).abs() < 1e-12);
        }
        let dump = sys.dump_text();
        assert_eq!(dump.lines().count(), 20);
        assert!(dump.starts_with("0 1e0 -1e0 0e0 0e0 0e0 0e0"));
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = GridSpec::unit_square(4).unwrap();
        let u = GridField::constant(spec, 0.0);
        let em = EdgeMap::uniform(spec);
        assert!(assemble(&u, &em, 0.0, 1.0).is_err());
        assert!(assemble(&u, &em, 0.1, 0.0).is_err());
        let other = EdgeMap::uniform(GridSpec::unit_square(5).unwrap());
        assert!(matches!(assemble(&u, &other, 0.1, 1.0), Err(Error::Shape(_))));
    }
}
