//! Zero level-set extraction (marching squares) and interior component labelling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::GridField;

/// A chain of contour vertices in domain coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub closed: bool,
    pub points: Vec<[f64; 2]>,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let seg = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let open: f64 = self.points.windows(2).map(|w| seg(&w[0], &w[1])).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + seg(b, a),
            _ => open,
        }
    }
}

const NONE: usize = usize::MAX;

/// Marching squares over the node lattice. A node is "inside" when its value
/// is below `level`. Saddle cells are split according to the sign of the mean
/// of their four corners.
pub fn extract_contour(u: &GridField, level: f64) -> Vec<Polyline> {
    let spec = u.spec();
    let (n1, n2) = (spec.n1(), spec.n2());
    let h_edges = n1 * (n2 + 1);
    let v_edge = |i: usize, j: usize| h_edges + j * (n1 + 1) + i;
    let h_edge = |i: usize, j: usize| j * n1 + i;
    let total = h_edges + (n1 + 1) * n2;

    let inside = |i: usize, j: usize| u.at(i, j) < level;
    let crossing = |(i0, j0): (usize, usize), (i1, j1): (usize, usize)| -> [f64; 2] {
        let (a, b) = (u.at(i0, j0), u.at(i1, j1));
        let t = (level - a) / (b - a);
        let (x0, y0) = spec.position(i0, j0);
        let (x1, y1) = spec.position(i1, j1);
        [x0 + t * (x1 - x0), y0 + t * (y1 - y0)]
    };

    let mut points = vec![[0.0; 2]; total];
    let mut segments: Vec<[usize; 2]> = Vec::new();
    for j in 0..n2 {
        for i in 0..n1 {
            // corners counter-clockwise from (i, j); edge k joins corner k and k+1
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let edges = [h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)];
            let state: [bool; 4] = corners.map(|(a, b)| inside(a, b));
            let cut: Vec<usize> = (0..4).filter(|&k| state[k] != state[(k + 1) % 4]).collect();
            for &k in &cut {
                points[edges[k]] = crossing(corners[k], corners[(k + 1) % 4]);
            }
            match cut.len() {
                0 => {}
                2 => segments.push([edges[cut[0]], edges[cut[1]]]),
                4 => {
                    let mean = corners.iter().map(|&(a, b)| u.at(a, b)).sum::<f64>() / 4.0;
                    let center_inside = mean < level;
                    // isolate each corner whose state differs from the centre
                    for k in 0..4 {
                        if state[k] != center_inside {
                            segments.push([edges[(k + 3) % 4], edges[k]]);
                        }
                    }
                }
                _ => unreachable!("a cell boundary crosses the level an even number of times"),
            }
        }
    }

    // each crossing edge touches at most two segments
    let mut incident = vec![[NONE; 2]; total];
    for (s, seg) in segments.iter().enumerate() {
        for &e in seg {
            let slot = &mut incident[e];
            if slot[0] == NONE {
                slot[0] = s;
            } else {
                slot[1] = s;
            }
        }
    }

    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| -> Polyline {
        let mut pts = vec![points[start_edge]];
        let mut seg = start_seg;
        let mut edge = start_edge;
        loop {
            used[seg] = true;
            let next_edge = if segments[seg][0] == edge { segments[seg][1] } else { segments[seg][0] };
            let [a, b] = incident[next_edge];
            let next_seg = if a == seg { b } else { a };
            if next_edge == start_edge {
                return Polyline { closed: true, points: pts };
            }
            pts.push(points[next_edge]);
            if next_seg == NONE || used[next_seg] {
                return Polyline { closed: false, points: pts };
            }
            seg = next_seg;
            edge = next_edge;
        }
    };
    // open chains start at domain-boundary crossings
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        if let Some(&e) = segments[s].iter().find(|&&e| incident[e][1] == NONE) {
            lines.push(walk(s, e, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            lines.push(walk(s, segments[s][0], &mut used));
        }
    }
    lines
}

/// 4-connected components of `{u < 0}` on the node lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Components {
    /// Per node: component id (0-based) or `None` where `u >= 0`.
    pub labels: Vec<Option<u32>>,
    /// Node count times cell volume, per component.
    pub areas: Vec<f64>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }
}

pub fn interior_components(u: &GridField) -> Components {
    let spec = u.spec();
    let (w, h) = (spec.width(), spec.height());
    let mut labels: Vec<Option<u32>> = vec![None; spec.node_count()];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if labels[start].is_some() || u.values()[start] >= 0.0 {
            continue;
        }
        let id = areas.len() as u32;
        labels[start] = Some(id);
        queue.push_back(start);
        let mut count = 0usize;
        while let Some(k) = queue.pop_front() {
            count += 1;
            let (i, j) = (k % w, k / w);
            let mut visit = |n: usize| {
                if labels[n].is_none() && u.values()[n] < 0.0 {
                    labels[n] = Some(id);
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < w {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - w);
            }
            if j + 1 < h {
                visit(k + w);
            }
        }
        areas.push(count as f64 * spec.cell_volume());
    }
    Components { labels, areas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn straight_line_crossing() {
        let spec = GridSpec::unit_square(10).unwrap();
        let u = GridField::from_fn(spec, |x, _| x - 0.55).unwrap();
        let lines = extract_contour(&u, 0.0);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        assert_eq!(lines[0].points.len(), 11);
        assert!(lines[0].points.iter().all(|p| (p[0] - 0.55).abs() < 1e-12));
        assert!((lines[0].length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positive_field_has_no_contour() {
        let spec = GridSpec::unit_square(6).unwrap();
        assert!(extract_contour(&GridField::constant(spec, 0.3), 0.0).is_empty());
        assert_eq!(interior_components(&GridField::constant(spec, 0.3)).count(), 0);
    }

    #[test]
    fn circle_is_closed_with_right_length() {
        let spec = GridSpec::unit_square(128).unwrap();
        let u = GridField::from_fn(spec, |x, y| ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.3).unwrap();
        let lines = extract_contour(&u, 0.0);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let circumference = 2.0 * std::f64::consts::PI * 0.3;
        assert!((lines[0].length() - circumference).abs() < 0.02 * circumference);
        for p in &lines[0].points {
            let r = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
            assert!((r - 0.3).abs() < 1e-3);
        }
        let comps = interior_components(&u);
        assert_eq!(comps.count(), 1);
        let area = std::f64::consts::PI * 0.09;
        assert!((comps.areas[0] - area).abs() < 0.05 * area);
    }

    #[test]
    fn saddle_follows_centre_sign() {
        let spec = GridSpec::unit_square(2).unwrap();
        // checkerboard in the cell (0,0)-(1,1); (0,0) and (1,1) inside
        let mut v = vec![1.0; 9];
        v[0] = -1.0;
        v[4] = -1.0;
        let u = GridField::new(spec, v.clone()).unwrap();
        // mean of corners is 0 which is not below the level: corners (0,0) and (1,1) isolated
        let lines = extract_contour(&u, 0.0);
        let segs_in_cell: usize = lines.iter().map(|l| l.points.len()).sum();
        assert!(segs_in_cell >= 4);
        v[4] = -3.0;
        let joined = extract_contour(&GridField::new(spec, v).unwrap(), 0.0);
        assert!(joined.iter().all(|l| l.points.iter().all(|p| p[0] <= 1.0 && p[1] <= 1.0)));
    }

    #[test]
    fn vertices_interpolate_linearly() {
        let spec = GridSpec::unit_square(4).unwrap();
        let u = GridField::from_fn(spec, |x, y| x + 2.0 * y - 1.1).unwrap();
        for line in extract_contour(&u, 0.0) {
            for p in line.points {
                assert!((p[0] + 2.0 * p[1] - 1.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_blobs_two_components() {
        let spec = GridSpec::unit_square(40).unwrap();
        let u = GridField::from_fn(spec, |x, y| {
            let a = ((x - 0.3).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.1;
            let b = ((x - 0.7).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.1;
            a.min(b)
        })
        .unwrap();
        let comps = interior_components(&u);
        assert_eq!(comps.count(), 2);
        assert!((comps.areas[0] - comps.areas[1]).abs() < 1e-12);
        assert_eq!(extract_contour(&u, 0.0).iter().filter(|l| l.closed).count(), 2);
        let total: f64 = comps.areas.iter().sum();
        assert!(total <= 1.0);
    }
}
