//! Vietoris–Rips 2-skeleton on the sparse cloud, triangle occurrence map and
//! the log confidence map.

use crate::error::{Error, Result};
use crate::frame_io::Field;
use crate::saliency::{Point, PointCloud};

pub type ConfidenceMap = Field;

pub const DEFAULT_MAX_TRIANGLES: usize = 2_000_000;

/// Vertices plus every vertex triple whose pairwise distances are all `<= epsilon`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Complex {
    pub vertices: PointCloud,
    /// Sorted index triples `i < j < k`, in lexicographic order.
    pub triangles: Vec<[u32; 3]>,
}

impl Complex {
    pub fn triangle_points(&self, t: &[u32; 3]) -> [Point; 3] {
        let v = &self.vertices.points;
        [v[t[0] as usize], v[t[1] as usize], v[t[2] as usize]]
    }

    pub fn iter_triangles(&self) -> impl Iterator<Item = [Point; 3]> + '_ {
        self.triangles.iter().map(|t| self.triangle_points(t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceMap {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

impl OccurrenceMap {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.width + col]
    }
}

pub fn rips_triangles(cloud: &PointCloud, epsilon: f64) -> Result<Complex> {
    rips_triangles_capped(cloud, epsilon, DEFAULT_MAX_TRIANGLES)
}

/// Enumerates the Rips triangles using a uniform grid of cell size `ceil(epsilon)`
/// for the edge search. Fails with [`Error::TriangleCap`] past `max_triangles`.
pub fn rips_triangles_capped(
    cloud: &PointCloud,
    epsilon: f64,
    max_triangles: usize,
) -> Result<Complex> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let pts = &cloud.points;
    let limit = epsilon * epsilon;
    let neighbours = forward_neighbours(pts, epsilon, limit);

    let mut triangles = Vec::new();
    for (i, ni) in neighbours.iter().enumerate() {
        for (a, &j) in ni.iter().enumerate() {
            // common forward neighbours of i and j, both lists sorted
            let rest = &ni[a + 1..];
            let nj = &neighbours[j as usize];
            let (mut x, mut y) = (0, 0);
            while x < rest.len() && y < nj.len() {
                match rest[x].cmp(&nj[y]) {
                    std::cmp::Ordering::Less => x += 1,
                    std::cmp::Ordering::Greater => y += 1,
                    std::cmp::Ordering::Equal => {
                        if triangles.len() == max_triangles {
                            return Err(Error::TriangleCap(max_triangles));
                        }
                        triangles.push([i as u32, j, rest[x]]);
                        x += 1;
                        y += 1;
                    }
                }
            }
        }
    }
    Ok(Complex {
        vertices: cloud.clone(),
        triangles,
    })
}

/// For each point, the sorted indices `j > i` within distance `epsilon`.
fn forward_neighbours(pts: &[Point], epsilon: f64, limit: f64) -> Vec<Vec<u32>> {
    let mut neighbours = vec![Vec::new(); pts.len()];
    if pts.is_empty() {
        return neighbours;
    }
    let cell = epsilon.ceil().max(1.0) as i64;
    let key = |p: &Point| ((p.row as i64).div_euclid(cell), (p.col as i64).div_euclid(cell));
    let mut cells: std::collections::HashMap<(i64, i64), Vec<u32>> = Default::default();
    for (i, p) in pts.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i as u32);
    }
    for (i, p) in pts.iter().enumerate() {
        let (gr, gc) = key(p);
        let out = &mut neighbours[i];
        for r in gr - 1..=gr + 1 {
            for c in gc - 1..=gc + 1 {
                if let Some(bucket) = cells.get(&(r, c)) {
                    out.extend(
                        bucket
                            .iter()
                            .copied()
                            .filter(|&j| j as usize > i && (p.dist2(pts[j as usize]) as f64) <= limit),
                    );
                }
            }
        }
        out.sort_unstable();
    }
    neighbours
}

#[inline]
fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.row - o.row) as i64 * (b.col - o.col) as i64 - (a.col - o.col) as i64 * (b.row - o.row) as i64
}

/// Calls `visit(row, col_lo, col_hi)` for every row span of integer points
/// inside or on the closed triangle. Collinear triangles yield the points of
/// their spanning segment.
pub fn for_each_covered_span(tri: [Point; 3], mut visit: impl FnMut(i64, i64, i64)) {
    let [a, b, c] = tri;
    let orient = cross(a, b, c);
    if orient == 0 {
        // endpoints of the segment: the farthest-apart pair
        let (p, q) = [(a, b), (b, c), (a, c)]
            .into_iter()
            .max_by_key(|(p, q)| p.dist2(*q))
            .unwrap();
        let dr = (q.row - p.row) as i64;
        let dc = (q.col - p.col) as i64;
        let g = gcd(dr.abs(), dc.abs());
        if g == 0 {
            visit(p.row as i64, p.col as i64, p.col as i64);
            return;
        }
        for t in 0..=g {
            let r = p.row as i64 + t * dr / g;
            let col = p.col as i64 + t * dc / g;
            visit(r, col, col);
        }
        return;
    }
    let sign = orient.signum();
    let edges = [(a, b), (b, c), (c, a)];
    let r0 = a.row.min(b.row).min(c.row) as i64;
    let r1 = a.row.max(b.row).max(c.row) as i64;
    let c0 = a.col.min(b.col).min(c.col) as i64;
    let c1 = a.col.max(b.col).max(c.col) as i64;
    for row in r0..=r1 {
        let (mut lo, mut hi) = (c0, c1);
        for &(p, q) in &edges {
            // sign * cross(p, q, (row, col)) >= 0, linear in col: coef*col + k >= 0
            let dr = (q.row - p.row) as i64;
            let dc = (q.col - p.col) as i64;
            let coef = sign * dr;
            let k = sign * (-dr * p.col as i64 - dc * (row - p.row as i64));
            if coef > 0 {
                lo = lo.max(div_ceil(-k, coef));
            } else if coef < 0 {
                hi = hi.min(div_floor(k, -coef));
            } else if k < 0 {
                lo = 1;
                hi = 0;
            }
        }
        if lo <= hi {
            visit(row, lo, hi);
        }
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn div_floor(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Counts, per pixel centre, the closed triangles covering it.
pub fn occurrence_map(cx: &Complex, width: usize, height: usize) -> OccurrenceMap {
    let mut counts = vec![0u32; width * height];
    let (w, h) = (width as i64, height as i64);
    for tri in cx.iter_triangles() {
        for_each_covered_span(tri, |row, lo, hi| {
            if row < 0 || row >= h {
                return;
            }
            let (lo, hi) = (lo.max(0), hi.min(w - 1));
            if lo > hi {
                return;
            }
            let base = (row * w) as usize;
            for v in &mut counts[base + lo as usize..=base + hi as usize] {
                *v += 1;
            }
        });
    }
    OccurrenceMap {
        width,
        height,
        counts,
    }
}

/// `ln(count + 1)` per pixel.
pub fn confidence_map(occ: &OccurrenceMap) -> ConfidenceMap {
    Field {
        width: occ.width,
        height: occ.height,
        data: occ.counts.iter().map(|&c| (c as f64 + 1.0).ln()).collect(),
    }
}

pub fn mean_confidence(map: &ConfidenceMap) -> f64 {
    map.mean()
}
