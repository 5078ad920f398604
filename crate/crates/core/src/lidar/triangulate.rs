//! Delaunay triangulation of integer lattice points.
//!
//! Sweep-hull construction followed by Lawson edge flips. Points are
//! inserted left to right behind a parabolic front, so each new point lies
//! outside the hull built so far and only sees a few edges on its
//! right-hand chain; range images are long thin strips, where a radial
//! sweep would keep fanning across the whole strip.
//! Both predicates are exact; the in-circle test only trusts its
//! floating-point value outside the rounding error bound and otherwise
//! falls back to integers. This matters here: range-image cells sit on a
//! grid, so cocircular quadruples are everywhere and an inexact in-circle
//! test can flip back and forth forever.

pub const EMPTY: usize = usize::MAX;

/// Coordinates must lie in `[-MAX_COORD, MAX_COORD]` for the exact
/// predicates to stay inside `i128`.
pub const MAX_COORD: i64 = 1 << 18;

pub type Point = (i64, i64);

#[derive(Debug, Clone, Default)]
pub struct Triangulation {
    /// Vertex indices, three per counterclockwise triangle.
    pub triangles: Vec<usize>,
    /// Twin of each half-edge, or [`EMPTY`] on the hull. Half-edge `h` runs
    /// from `triangles[h]` to `triangles[next(h)]`.
    pub halfedges: Vec<usize>,
    /// Input points that could not be inserted (duplicates).
    pub skipped: usize,
}

impl Triangulation {
    pub fn len(&self) -> usize {
        self.triangles.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

#[inline]
pub fn next_halfedge(h: usize) -> usize {
    if h % 3 == 2 {
        h - 2
    } else {
        h + 1
    }
}

/// Twice the signed area of `abc`; positive when counterclockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> i64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// True when `d` lies strictly inside the circumcircle of counterclockwise `abc`.
#[inline]
pub fn in_circle(a: Point, b: Point, c: Point, d: Point) -> bool {
    // Nearby lattice points: every term fits in i64. Cocircular grid quads
    // are the common case here and would defeat the float filter below.
    const SMALL: i64 = 1 << 14;
    let small = |p: Point| (p.0 - d.0).abs() < SMALL && (p.1 - d.1).abs() < SMALL;
    if small(a) && small(b) && small(c) {
        let f = |p: Point| (p.0 - d.0, p.1 - d.1);
        let ((adx, ady), (bdx, bdy), (cdx, cdy)) = (f(a), f(b), f(c));
        let (ad, bd, cd) = (adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy);
        return ad * (bdx * cdy - bdy * cdx) + bd * (cdx * ady - cdy * adx) + cd * (adx * bdy - ady * bdx) > 0;
    }
    // Coordinate differences are exact in f64; only the products round.
    let f = |p: Point| ((p.0 - d.0) as f64, (p.1 - d.1) as f64);
    let ((adx, ady), (bdx, bdy), (cdx, cdy)) = (f(a), f(b), f(c));
    let (ad, bd, cd) = (adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy);
    let (bc, ca, ab) = (bdx * cdy - bdy * cdx, cdx * ady - cdy * adx, adx * bdy - ady * bdx);
    let det = ad * bc + bd * ca + cd * ab;
    let permanent = ad * ((bdx * cdy).abs() + (bdy * cdx).abs())
        + bd * ((cdx * ady).abs() + (cdy * adx).abs())
        + cd * ((adx * bdy).abs() + (ady * bdx).abs());
    let bound = IN_CIRCLE_ERR * permanent;
    if det > bound {
        return true;
    }
    if -det > bound {
        return false;
    }
    in_circle_exact(a, b, c, d)
}

/// Relative error bound of the floating-point incircle determinant.
const IN_CIRCLE_ERR: f64 = (10.0 + 96.0 * HALF_EPS) * HALF_EPS;
const HALF_EPS: f64 = f64::EPSILON / 2.0;

fn in_circle_exact(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (adx, ady) = ((a.0 - d.0) as i128, (a.1 - d.1) as i128);
    let (bdx, bdy) = ((b.0 - d.0) as i128, (b.1 - d.1) as i128);
    let (cdx, cdy) = ((c.0 - d.0) as i128, (c.1 - d.1) as i128);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    let det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    det > 0
}

struct Builder<'a> {
    pts: &'a [Point],
    triangles: Vec<usize>,
    halfedges: Vec<usize>,
    hull_prev: Vec<usize>,
    hull_next: Vec<usize>,
    /// Hull half-edge leaving each hull vertex.
    hull_tri: Vec<usize>,
    /// Most recent hull vertex per band of `y`.
    hull_hash: Vec<usize>,
    y_range: (i64, i64),
    stack: Vec<usize>,
}

impl Builder<'_> {
    fn hash_key(&self, p: Point) -> usize {
        let (lo, hi) = self.y_range;
        ((p.1 - lo) as u128 * self.hull_hash.len() as u128 / (hi - lo + 1) as u128) as usize
    }

    /// A live hull vertex stored near the band of `p`.
    fn hull_vertex_near(&self, p: Point) -> Option<usize> {
        let n = self.hull_hash.len() as i64;
        let key = self.hash_key(p) as i64;
        (0..n).flat_map(|j| [key + j, key - j - 1]).filter(|k| (0..n).contains(k)).find_map(|k| {
            let s = self.hull_hash[k as usize];
            (s != EMPTY && self.hull_next[s] != s).then_some(s)
        })
    }

    /// Start of a hull edge that `p` sees strictly from outside, searching
    /// both ways around the hull from `s`.
    fn visible_edge(&self, s: usize, p: Point) -> Option<usize> {
        let pts = self.pts;
        let (mut f, mut b) = (s, s);
        for _ in 0..pts.len() {
            let q = self.hull_next[f];
            if orient(pts[f], pts[q], p) < 0 {
                return Some(f);
            }
            let r = self.hull_prev[b];
            if orient(pts[r], pts[b], p) < 0 {
                return Some(r);
            }
            if q == r || q == b {
                break;
            }
            (f, b) = (q, r);
        }
        None
    }

    fn link(&mut self, a: usize, b: usize) {
        self.halfedges[a] = b;
        if b != EMPTY {
            self.halfedges[b] = a;
        }
    }

    fn add_triangle(&mut self, a: usize, b: usize, c: usize, ha: usize, hb: usize, hc: usize) -> usize {
        let t = self.triangles.len();
        self.triangles.extend_from_slice(&[a, b, c]);
        self.halfedges.extend_from_slice(&[EMPTY, EMPTY, EMPTY]);
        self.link(t, ha);
        self.link(t + 1, hb);
        self.link(t + 2, hc);
        t
    }

    /// Flips edges until the triangles around half-edge `a` are locally
    /// Delaunay. Keeps `hull_tri` pointing at the moved hull half-edges.
    fn legalize(&mut self, mut a: usize) {
        // Previous and next half-edge within the same triangle.
        let prev = |h: usize| if h % 3 == 0 { h + 2 } else { h - 1 };
        loop {
            let b = self.halfedges[a];
            if b == EMPTY {
                match self.stack.pop() {
                    Some(x) => {
                        a = x;
                        continue;
                    }
                    None => break,
                }
            }
            let ar = prev(a);
            let al = next_halfedge(a);
            let bl = prev(b);
            let p0 = self.triangles[ar];
            let pr = self.triangles[a];
            let pl = self.triangles[al];
            let p1 = self.triangles[bl];
            let pts = self.pts;
            if in_circle(pts[p0], pts[pr], pts[pl], pts[p1]) {
                self.triangles[a] = p1;
                self.triangles[b] = p0;
                let hbl = self.halfedges[bl];
                let har = self.halfedges[ar];
                // Hull half-edges p1->pl and p0->pr move to slots a and b.
                if hbl == EMPTY {
                    self.hull_tri[p1] = a;
                }
                if har == EMPTY {
                    self.hull_tri[p0] = b;
                }
                self.link(a, hbl);
                self.link(b, har);
                self.link(ar, bl);
                self.stack.push(next_halfedge(b));
            } else {
                match self.stack.pop() {
                    Some(x) => a = x,
                    None => break,
                }
            }
        }
    }
}

/// Triangulates `pts`. Returns `None` when fewer than three points are given
/// or all of them are collinear.
pub fn triangulate(pts: &[Point]) -> Option<Triangulation> {
    let n = pts.len();
    if n < 3 {
        return None;
    }
    debug_assert!(pts.iter().all(|p| p.0.abs() <= MAX_COORD && p.1.abs() <= MAX_COORD));

    let miny = pts.iter().map(|p| p.1).min()?;
    let maxy = pts.iter().map(|p| p.1).max()?;
    // Sweep key x + (h/4)(dy/h)^2 with dy measured from the middle of the
    // y range: convex, so each point lands outside the hull built so far,
    // and the front is a parabola that never lines up with a lattice row
    // or column.
    let h = (maxy - miny) as i128;
    let key = |p: Point| {
        let dy = (2 * p.1 - miny - maxy) as i128;
        p.0 as i128 * 4 * h * h + h * dy * dy
    };
    let mut ids: Vec<(i128, usize)> = (0..n).map(|i| (key(pts[i]), i)).collect();
    ids.sort_unstable();

    // Seed: the two smallest distinct points and the next point off their
    // line. Points skipped on that line lie beyond the second one.
    let i0 = ids[0].1;
    let p0 = pts[i0];
    let mut i1 = ids.iter().map(|e| e.1).find(|&i| pts[i] != p0)?;
    let mut i2 = ids.iter().map(|e| e.1).find(|&i| orient(p0, pts[i1], pts[i]) != 0)?;
    if orient(p0, pts[i1], pts[i2]) < 0 {
        std::mem::swap(&mut i1, &mut i2);
    }

    let hash_size = ((n as f64).sqrt().ceil() as usize).max(1);
    let mut bld = Builder {
        pts,
        triangles: Vec::with_capacity(6 * n),
        halfedges: Vec::with_capacity(6 * n),
        hull_prev: vec![EMPTY; n],
        hull_next: vec![EMPTY; n],
        hull_tri: vec![EMPTY; n],
        hull_hash: vec![EMPTY; hash_size],
        y_range: (miny, maxy),
        stack: Vec::new(),
    };

    bld.hull_next[i0] = i1;
    bld.hull_prev[i2] = i1;
    bld.hull_next[i1] = i2;
    bld.hull_prev[i0] = i2;
    bld.hull_next[i2] = i0;
    bld.hull_prev[i1] = i0;
    bld.hull_tri[i0] = 0;
    bld.hull_tri[i1] = 1;
    bld.hull_tri[i2] = 2;
    for i in [i0, i1, i2] {
        let k = bld.hash_key(pts[i]);
        bld.hull_hash[k] = i;
    }
    bld.add_triangle(i0, i1, i2, EMPTY, EMPTY, EMPTY);

    let mut skipped = 0;
    let mut prev: Option<Point> = None;
    for &(_, i) in &ids {
        if i == i0 || i == i1 || i == i2 {
            continue;
        }
        let p = pts[i];
        if prev == Some(p) || p == pts[i0] || p == pts[i1] || p == pts[i2] {
            skipped += 1;
            continue;
        }
        prev = Some(p);

        // Only exact duplicates can fail to see the hull.
        let Some(mut e) = bld.hull_vertex_near(p).and_then(|s| bld.visible_edge(s, p)) else {
            skipped += 1;
            continue;
        };

        let first_next = bld.hull_next[e];
        let t = bld.add_triangle(e, i, first_next, EMPTY, EMPTY, bld.hull_tri[e]);
        bld.hull_tri[e] = t;
        bld.hull_tri[i] = t + 1;
        bld.legalize(t + 2);

        let mut nn = first_next;
        loop {
            let q = bld.hull_next[nn];
            if orient(pts[nn], pts[q], p) >= 0 {
                break;
            }
            let t = bld.add_triangle(nn, i, q, bld.hull_tri[i], EMPTY, bld.hull_tri[nn]);
            bld.hull_tri[i] = t + 1;
            bld.legalize(t + 2);
            bld.hull_next[nn] = nn;
            nn = q;
        }
        loop {
            let q = bld.hull_prev[e];
            if orient(pts[q], pts[e], p) >= 0 {
                break;
            }
            let t = bld.add_triangle(q, i, e, EMPTY, bld.hull_tri[e], bld.hull_tri[q]);
            bld.hull_tri[q] = t;
            bld.legalize(t + 2);
            bld.hull_next[e] = e;
            e = q;
        }

        bld.hull_prev[i] = e;
        bld.hull_next[i] = nn;
        bld.hull_prev[nn] = i;
        bld.hull_next[e] = i;
        let k = bld.hash_key(p);
        bld.hull_hash[k] = i;
        let k = bld.hash_key(pts[e]);
        bld.hull_hash[k] = e;
    }

    Some(Triangulation { triangles: bld.triangles, halfedges: bld.halfedges, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Convex hull area (twice) by the monotone chain, exact.
    fn hull_area2(pts: &[Point]) -> i64 {
        let mut p: Vec<Point> = pts.to_vec();
        p.sort();
        p.dedup();
        let mut lower: Vec<Point> = Vec::new();
        for &q in &p {
            while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0 {
                lower.pop();
            }
            lower.push(q);
        }
        let mut upper: Vec<Point> = Vec::new();
        for &q in p.iter().rev() {
            while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0 {
                upper.pop();
            }
            upper.push(q);
        }
        lower.pop();
        upper.pop();
        let h: Vec<Point> = lower.into_iter().chain(upper).collect();
        (0..h.len()).map(|i| {
            let (a, b) = (h[i], h[(i + 1) % h.len()]);
            a.0 * b.1 - a.1 * b.0
        }).sum()
    }

    /// Brute-force checks: positive orientation, empty circumcircles,
    /// consistent twins, full coverage of the convex hull, every point used.
    fn check_delaunay(pts: &[Point], t: &Triangulation) {
        let mut area = 0;
        for tri in t.triangles.chunks_exact(3) {
            let (a, b, c) = (pts[tri[0]], pts[tri[1]], pts[tri[2]]);
            let o = orient(a, b, c);
            assert!(o > 0, "triangle not counterclockwise");
            area += o;
            for &d in pts {
                assert!(!in_circle(a, b, c, d), "circumcircle of {a:?} {b:?} {c:?} contains {d:?}");
            }
        }
        assert_eq!(area, hull_area2(pts));
        for (h, &tw) in t.halfedges.iter().enumerate() {
            if tw != EMPTY {
                assert_eq!(t.halfedges[tw], h);
                assert_eq!(t.triangles[h], t.triangles[next_halfedge(tw)]);
                assert_eq!(t.triangles[next_halfedge(h)], t.triangles[tw]);
            }
        }
        let used: BTreeSet<usize> = t.triangles.iter().copied().collect();
        assert_eq!(used.len() + t.skipped, pts.len());
    }

    #[test]
    fn square_grid_is_fully_covered() {
        let pts: Vec<Point> = (0..12).flat_map(|y| (0..17).map(move |x| (x, y))).collect();
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.skipped, 0);
        assert_eq!(t.len(), 2 * 11 * 16);
        check_delaunay(&pts, &t);
    }

    #[test]
    fn collinear_input_is_rejected() {
        let pts: Vec<Point> = (0..10).map(|i| (i, 2 * i)).collect();
        assert!(triangulate(&pts).is_none());
        assert!(triangulate(&[(0, 0), (1, 1)]).is_none());
    }

    #[test]
    fn duplicates_are_skipped() {
        let pts = vec![(0, 0), (4, 0), (0, 4), (4, 4), (4, 4), (2, 1)];
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.skipped, 1);
        check_delaunay(&pts, &t);
    }

    proptest! {
        #[test]
        fn filtered_in_circle_matches_exact(
            pts in prop::collection::vec((-MAX_COORD..=MAX_COORD, -MAX_COORD..=MAX_COORD), 4),
            lattice in prop::collection::vec((-6i64..6, -6i64..6), 4),
            scale in (1i64..20000, 1i64..20000),
        ) {
            let q = |v: &[(i64, i64)], i: usize| v[i];
            prop_assert_eq!(in_circle(q(&pts, 0), q(&pts, 1), q(&pts, 2), q(&pts, 3)), in_circle_exact(q(&pts, 0), q(&pts, 1), q(&pts, 2), q(&pts, 3)));
            // Scaled small lattices are full of cocircular quadruples; the
            // scales straddle the small-coordinate fast path.
            let l: Vec<Point> = lattice.iter().map(|&(x, y)| (x * scale.0 / 2, y * scale.1 / 2)).collect();
            prop_assert_eq!(in_circle(l[0], l[1], l[2], l[3]), in_circle_exact(l[0], l[1], l[2], l[3]));
        }

        #[test]
        fn random_points_match_brute_force(raw in prop::collection::btree_set((0i64..40, 0i64..25), 3..120)) {
            let pts: Vec<Point> = raw.into_iter().collect();
            match triangulate(&pts) {
                Some(t) => {
                    prop_assert_eq!(t.skipped, 0);
                    check_delaunay(&pts, &t);
                }
                None => {
                    let (a, b) = (pts[0], pts[1]);
                    prop_assert!(pts.iter().all(|&c| orient(a, b, c) == 0));
                }
            }
        }

        #[test]
        fn sparse_wide_points(raw in prop::collection::btree_set((-3000i64..3000, -200i64..200), 3..60)) {
            let pts: Vec<Point> = raw.into_iter().collect();
            if let Some(t) = triangulate(&pts) {
                check_delaunay(&pts, &t);
            }
        }
    }
}
