//! Streakline reference frame.
//!
//! The streakline is the polyline traced by integrating the wind velocity
//! from the source: `v0 = source`, `v[k+1] = v[k] + wind[k] * dt`. Every
//! sample is projected onto its nearest segment. The first and last
//! segments are extended to rays, so points upwind of the source get a
//! negative along-streakline coordinate and points beyond the integrated
//! end still project linearly.
//!
//! Sign convention: `sy` is positive to the *left* of the direction of
//! travel along the streakline. With wind along +x, +y is positive; with
//! wind along +y, +x is negative.

use rstar::primitives::{GeomWithData, Line};
use rstar::RTree;

use crate::error::{CosmosError, Result};

type Segment = GeomWithData<Line<[f64; 2]>, usize>;

#[derive(Debug, Clone)]
pub struct Streakline {
    vertices: Vec<[f64; 2]>,
    /// Arc length from the source to each vertex.
    arc: Vec<f64>,
    tree: RTree<Segment>,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl Streakline {
    /// Integrates `wind` (m/s, one vector per sample) from `source` with
    /// sample spacing `dt`. Consecutive parallel increments are merged into
    /// one segment; zero increments are skipped.
    pub fn integrate(source: [f64; 2], wind: &[[f64; 2]], dt: f64) -> Result<Self> {
        if wind.is_empty() {
            return Err(CosmosError::InvalidInput(
                "streakline needs a non-empty wind series".into(),
            ));
        }
        let mut vertices = vec![source];
        for w in wind {
            if !(w[0].is_finite() && w[1].is_finite()) {
                return Err(CosmosError::InvalidInput("non-finite wind sample".into()));
            }
            let step = [w[0] * dt, w[1] * dt];
            let len2 = dot(step, step);
            if len2 == 0.0 {
                continue;
            }
            let n = vertices.len();
            let last = vertices[n - 1];
            if n >= 2 {
                let prev = sub(last, vertices[n - 2]);
                let parallel = cross(prev, step).abs() <= 1e-12 * dot(prev, prev).sqrt() * len2.sqrt()
                    && dot(prev, step) > 0.0;
                if parallel {
                    vertices[n - 1] = [last[0] + step[0], last[1] + step[1]];
                    continue;
                }
            }
            vertices.push([last[0] + step[0], last[1] + step[1]]);
        }
        if vertices.len() < 2 {
            return Err(CosmosError::InvalidInput(
                "wind series integrates to a zero-length streakline".into(),
            ));
        }
        let mut arc = Vec::with_capacity(vertices.len());
        arc.push(0.0);
        for k in 1..vertices.len() {
            let d = sub(vertices[k], vertices[k - 1]);
            arc.push(arc[k - 1] + dot(d, d).sqrt());
        }
        let segments: Vec<Segment> = vertices
            .windows(2)
            .enumerate()
            .map(|(i, w)| GeomWithData::new(Line::new(w[0], w[1]), i))
            .collect();
        Ok(Self {
            vertices,
            arc,
            tree: RTree::bulk_load(segments),
        })
    }

    pub fn n_segments(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Parameter `t` and squared distance of `p` against segment `i`;
    /// `t` is unclamped on the extended end segments.
    fn candidate(&self, i: usize, p: [f64; 2]) -> (f64, f64) {
        let a = self.vertices[i];
        let ab = sub(self.vertices[i + 1], a);
        let mut t = dot(sub(p, a), ab) / dot(ab, ab);
        let last = self.n_segments() - 1;
        if i != 0 {
            t = t.max(0.0);
        }
        if i != last {
            t = t.min(1.0);
        }
        let foot = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d = sub(p, foot);
        (t, dot(d, d))
    }

    /// Maps a point to `(sx, sy)`.
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let last = self.n_segments() - 1;
        let mut best = (usize::MAX, 0.0, f64::INFINITY);
        let mut consider = |i: usize| {
            let (t, d2) = self.candidate(i, p);
            if d2 < best.2 || (d2 == best.2 && i < best.0) {
                best = (i, t, d2);
            }
        };
        if let Some(nn) = self.tree.nearest_neighbor(&p) {
            consider(nn.data);
        }
        consider(0);
        consider(last);
        let (i, t, _) = best;
        let a = self.vertices[i];
        let ab = sub(self.vertices[i + 1], a);
        let len = dot(ab, ab).sqrt();
        let sx = self.arc[i] + t * len;
        let sy = cross(ab, sub(p, a)) / len;
        (sx, sy)
    }
}

/// Streakline coordinates for every point, integrating `wind` from `source`.
pub fn streakline_transform(
    points: &[[f64; 2]],
    source: [f64; 2],
    wind: &[[f64; 2]],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let line = Streakline::integrate(source, wind, dt)?;
    Ok(points.iter().map(|&p| line.project(p)).unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn straight_wind_along_x() {
        let wind = vec![[1.0, 0.0]; 5];
        let (sx, sy) = streakline_transform(&[[3.0, 2.0]], [0.0, 0.0], &wind, 0.005).unwrap();
        assert_abs_diff_eq!(sx[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sy[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn straight_wind_along_y_uses_left_positive() {
        let wind = vec![[0.0, 1.0]; 5];
        let (sx, sy) = streakline_transform(&[[2.0, 3.0]], [0.0, 0.0], &wind, 0.005).unwrap();
        assert_abs_diff_eq!(sx[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sy[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn source_maps_to_origin_and_upwind_is_negative() {
        let wind = vec![[2.0, 0.5]; 10];
        let (sx, sy) =
            streakline_transform(&[[1.0, 1.0], [0.0, 1.0]], [1.0, 1.0], &wind, 0.01).unwrap();
        assert_abs_diff_eq!(sx[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sy[0], 0.0, epsilon = 1e-12);
        assert!(sx[1] < 0.0);
    }

    #[test]
    fn parallel_steps_merge() {
        let wind = vec![[1.0, 1.0]; 1000];
        let line = Streakline::integrate([0.0, 0.0], &wind, 0.005).unwrap();
        assert_eq!(line.n_segments(), 1);
        assert_abs_diff_eq!(line.length(), 5.0 * 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn bent_streakline_projects_onto_second_leg() {
        // east for 10 m, then north for 10 m
        let mut wind = vec![[10.0, 0.0]; 100];
        wind.extend(vec![[0.0, 10.0]; 100]);
        let line = Streakline::integrate([0.0, 0.0], &wind, 0.01).unwrap();
        assert_eq!(line.n_segments(), 2);
        let (sx, sy) = line.project([11.0, 4.0]);
        assert_abs_diff_eq!(sx, 14.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sy, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_or_calm_wind_is_rejected() {
        assert!(streakline_transform(&[[0.0, 0.0]], [0.0, 0.0], &[], 0.01).is_err());
        assert!(streakline_transform(&[[0.0, 0.0]], [0.0, 0.0], &[[0.0, 0.0]; 4], 0.01).is_err());
    }

    proptest! {
        #[test]
        fn uniform_wind_is_a_rigid_rotation(
            angle in 0.0f64..std::f64::consts::TAU,
            speed in 0.5f64..8.0,
            sx0 in -20.0f64..60.0,
            sy0 in -30.0f64..30.0,
            src in prop::array::uniform2(-10.0f64..10.0),
        ) {
            let dir = [angle.cos(), angle.sin()];
            let wind = vec![[speed * dir[0], speed * dir[1]]; 50];
            let left = [-dir[1], dir[0]];
            let p = [src[0] + sx0 * dir[0] + sy0 * left[0], src[1] + sx0 * dir[1] + sy0 * left[1]];
            let (sx, sy) = streakline_transform(&[p, src], src, &wind, 0.005).unwrap();
            prop_assert!((sx[0] - sx0).abs() < 1e-8);
            prop_assert!((sy[0] - sy0).abs() < 1e-8);
            prop_assert!(sx[1].abs() < 1e-12 && sy[1].abs() < 1e-12);
        }

        #[test]
        fn source_is_origin_for_any_wind(
            wind in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..60),
        ) {
            if let Ok(line) = Streakline::integrate([3.0, -2.0], &wind, 0.1) {
                let (sx, sy) = line.project([3.0, -2.0]);
                prop_assert!(sx.abs() < 1e-9 && sy.abs() < 1e-9);
            }
        }
    }
}
