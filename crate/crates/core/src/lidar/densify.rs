use rayon::prelude::*;

use super::triangulate::{orient, triangulate, Point, MAX_COORD};
use super::PolarImage;
use crate::error::{Error, Result};

/// Integer scale factors making one lattice step roughly isotropic in
/// angle, so the Delaunay triangles are well shaped in (yaw, pitch).
fn lattice_scale(d_alpha: f64, d_beta: f64, cols: usize, rows: usize) -> (i64, i64) {
    let ratio = d_alpha / d_beta;
    let (sx, sy) = if ratio >= 1.0 {
        ((32.0 * ratio).round().max(1.0) as i64, 32)
    } else {
        (32, (32.0 / ratio).round().max(1.0) as i64)
    };
    let fits = 2 * cols as i64 * sx <= MAX_COORD && rows as i64 * sy <= MAX_COORD;
    if fits {
        (sx, sy)
    } else {
        (1, 1)
    }
}

/// Fills invalid cells inside the convex support of the valid ones by
/// piecewise-linear interpolation over a Delaunay triangulation of the
/// valid cell centers. Yaw is cyclic: columns near the seam are duplicated
/// one full turn to either side before triangulating. Valid cells are
/// never modified; cells outside the support stay invalid.
pub fn densify(polar: &PolarImage) -> Result<PolarImage> {
    densify_with(polar, true)
}

fn densify_with(polar: &PolarImage, reduce: bool) -> Result<PolarImage> {
    let g = polar.grid;
    let (h, w) = (g.rows, g.cols);
    let valid = polar.valid_count();
    if valid < 3 {
        return Err(Error::InsufficientSupport(valid));
    }
    if valid == polar.valid.len() {
        return Ok(polar.clone());
    }

    let (sx, sy) = lattice_scale(g.d_alpha(), g.d_beta(), w, h);
    let margin = if w <= 16 { w } else { (w / 16).max(4) };

    // A triangle covering an invalid cell has an empty circumcircle holding
    // that cell, so each of its vertices lies within one lattice diagonal
    // of an invalid cell or of the domain boundary. Valid cells farther
    // inside never bound such a triangle and are left out.
    let diag = ((sx * sx + sy * sy) as f64).sqrt();
    let (kc, kr) = ((diag / sx as f64) as i64, (diag / sy as f64) as i64);
    let mut across = vec![false; h * w];
    for row in 0..h {
        let (src, dst) = (&polar.valid[row * w..(row + 1) * w], &mut across[row * w..(row + 1) * w]);
        for (col, d) in dst.iter_mut().enumerate() {
            *d = (-kc..=kc).any(|dc| !src[(col as i64 + dc).rem_euclid(w as i64) as usize]);
        }
    }
    let mut near_hole = vec![false; h * w];
    for row in 0..h {
        let (r0, r1) = (row as i64 - kr, row as i64 + kr);
        let dst = &mut near_hole[row * w..(row + 1) * w];
        if r0 < 0 || r1 >= h as i64 {
            dst.fill(true);
            continue;
        }
        for r in r0 as usize..=r1 as usize {
            for (d, &a) in dst.iter_mut().zip(&across[r * w..(r + 1) * w]) {
                *d |= a;
            }
        }
    }
    let (lo, hi) = (-(margin as i64), (w + margin) as i64);
    let keep = |col: i64, k: usize| !reduce || near_hole[k] || col - kc < lo || col + kc >= hi;

    // Unwrapped column, row and source cell of every vertex.
    let mut verts: Vec<(i64, i64, usize)> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let k = row * w + col;
            if !polar.valid[k] {
                continue;
            }
            let c = col as i64;
            for cu in [c, c + w as i64, c - w as i64] {
                let inside = cu == c || (cu >= w as i64 && col < margin) || (cu < 0 && col + margin >= w);
                if inside && keep(cu, k) {
                    verts.push((cu, row as i64, k));
                }
            }
        }
    }
    let pts: Vec<Point> = verts.iter().map(|&(c, r, _)| (c * sx, r * sy)).collect();
    let tri = triangulate(&pts).ok_or(Error::InsufficientSupport(valid))?;

    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (t, v) in tri.triangles.chunks_exact(3).enumerate() {
        let rows = v.iter().map(|&i| verts[i].1);
        let (r0, r1) = (rows.clone().min().unwrap(), rows.max().unwrap());
        let cols = v.iter().map(|&i| verts[i].0);
        let (c0, c1) = (cols.clone().min().unwrap(), cols.max().unwrap());
        if c1 < 0 || c0 >= w as i64 {
            continue;
        }
        // Triangles spanning a single row or column cover no interior cells
        // other than their own vertices, which are valid already.
        if r0 == r1 || c0 == c1 {
            continue;
        }
        for r in r0..=r1 {
            buckets[r as usize].push(t as u32);
        }
    }

    let mut out = polar.clone();
    out.depth
        .par_chunks_mut(w)
        .zip(out.intensity.par_chunks_mut(w))
        .zip(out.valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(row, ((depth, inten), ok))| {
            let py = row as i64 * sy;
            let holes: Vec<usize> = (0..w).filter(|&c| !ok[c]).collect();
            for &t in &buckets[row] {
                let v = &tri.triangles[3 * t as usize..3 * t as usize + 3];
                let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
                let cs = [verts[v[0]].0, verts[v[1]].0, verts[v[2]].0];
                let c0 = (*cs.iter().min().unwrap()).max(0) as usize;
                let c1 = (*cs.iter().max().unwrap()).min(w as i64 - 1) as usize;
                let first = holes.partition_point(|&h| h < c0);
                for &cu in holes[first..].iter().take_while(|&&h| h <= c1) {
                    if ok[cu] {
                        continue;
                    }
                    let p = (cu as i64 * sx, py);
                    let wa = orient(b, c, p);
                    let wb = orient(c, a, p);
                    let wc = orient(a, b, p);
                    if wa < 0 || wb < 0 || wc < 0 {
                        continue;
                    }
                    let sum = (wa + wb + wc) as f64;
                    let (ka, kb, kc) = (verts[v[0]].2, verts[v[1]].2, verts[v[2]].2);
                    let (fa, fb, fc) = (wa as f64 / sum, wb as f64 / sum, wc as f64 / sum);
                    depth[cu] = fa * polar.depth[ka] + fb * polar.depth[kb] + fc * polar.depth[kc];
                    inten[cu] = fa * polar.intensity[ka] + fb * polar.intensity[kb] + fc * polar.intensity[kc];
                    ok[cu] = true;
                }
            }
        });
    Ok(out)
}
