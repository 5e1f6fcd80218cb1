//! Exact volume and centroid of small H-polytopes by vertex enumeration and
//! a pulling triangulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `a . x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    #[inline]
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.b - self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }
}

/// Vertices of `{x : a_k . x <= b_k}` together with the set of tight
/// constraints at each vertex (bit `k` set when constraint `k` is active).
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub points: Vec<Vec<f64>>,
    pub tight: Vec<u64>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Enumerates vertices of a bounded polytope in `dim` dimensions whose data
/// is scaled to order one; `tol` is an absolute feasibility tolerance.
pub fn enumerate_vertices(halfspaces: &[Halfspace], dim: usize, tol: f64) -> VertexSet {
    assert!(halfspaces.len() <= 64, "at most 64 constraints are supported");
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut tight: Vec<u64> = Vec::new();
    for combo in combinations(halfspaces.len(), dim) {
        let a = DMatrix::from_fn(dim, dim, |r, c| halfspaces[combo[r]].a[c]);
        let b = DVector::from_iterator(dim, combo.iter().map(|&k| halfspaces[k].b));
        let lu = a.lu();
        let Some(x) = lu.solve(&b) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let slacks: Vec<f64> = halfspaces.iter().map(|h| h.slack(&x)).collect();
        if slacks.iter().any(|&s| s < -tol) {
            continue;
        }
        let mask = slacks
            .iter()
            .enumerate()
            .filter(|(_, s)| s.abs() <= tol)
            .fold(0u64, |m, (k, _)| m | (1 << k));
        match points
            .iter()
            .position(|p| p.iter().zip(&x).all(|(p, x)| (p - x).abs() <= 10.0 * tol))
        {
            Some(idx) => tight[idx] |= mask,
            None => {
                points.push(x);
                tight.push(mask);
            }
        }
    }
    VertexSet { points, tight }
}

/// Affine dimension of the points selected by `mask`.
fn affine_rank(points: &[Vec<f64>], mask: u64, tol: f64) -> usize {
    let idx: Vec<usize> = (0..points.len()).filter(|&i| mask >> i & 1 == 1).collect();
    if idx.len() <= 1 {
        return 0;
    }
    let dim = points[0].len();
    let p0 = &points[idx[0]];
    let m = DMatrix::from_fn(idx.len() - 1, dim, |r, c| points[idx[r + 1]][c] - p0[c]);
    m.rank(tol)
}

/// Simplices (as vertex index lists) of a pulling triangulation.
pub fn triangulate(vs: &VertexSet, dim: usize, tol: f64) -> Result<Vec<Vec<usize>>> {
    let nv = vs.points.len();
    if nv == 0 || nv > 64 {
        return Err(Error::DegeneratePolytope);
    }
    let all = if nv == 64 { u64::MAX } else { (1u64 << nv) - 1 };
    if affine_rank(&vs.points, all, tol) != dim {
        return Err(Error::DegeneratePolytope);
    }
    let n_constraints = 64 - vs.tight.iter().fold(0u64, |m, t| m | t).leading_zeros() as usize;
    // vertices on each constraint
    let on: Vec<u64> = (0..n_constraints)
        .map(|k| {
            vs.tight
                .iter()
                .enumerate()
                .filter(|(_, t)| *t >> k & 1 == 1)
                .fold(0u64, |m, (i, _)| m | (1 << i))
        })
        .collect();
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(dim + 1);
    pull(vs, &on, all, dim, tol, &mut prefix, &mut out);
    Ok(out)
}

fn pull(
    vs: &VertexSet,
    on: &[u64],
    face: u64,
    k: usize,
    tol: f64,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let apex = face.trailing_zeros() as usize;
    if k == 0 {
        let mut simplex = prefix.clone();
        simplex.push(apex);
        out.push(simplex);
        return;
    }
    let mut seen: Vec<u64> = Vec::new();
    for &c in on {
        let sub = face & c;
        if sub == face || sub >> apex & 1 == 1 || seen.contains(&sub) {
            continue;
        }
        if sub.count_ones() as usize >= k && affine_rank(&vs.points, sub, tol) == k - 1 {
            seen.push(sub);
            prefix.push(apex);
            pull(vs, on, sub, k - 1, tol, prefix, out);
            prefix.pop();
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Volume and centroid of the polytope with the given vertices.
pub fn volume_and_centroid(vs: &VertexSet, dim: usize, tol: f64) -> Result<(f64, Vec<f64>)> {
    let simplices = triangulate(vs, dim, tol)?;
    let norm = factorial(dim);
    let mut volume = 0.0;
    let mut moment = vec![0.0; dim];
    for simplex in &simplices {
        let p0 = &vs.points[simplex[0]];
        let edges =
            DMatrix::from_fn(dim, dim, |r, c| vs.points[simplex[r + 1]][c] - p0[c]);
        let vol = edges.determinant().abs() / norm;
        volume += vol;
        for c in 0..dim {
            let mean = simplex.iter().map(|&i| vs.points[i][c]).sum::<f64>() / (dim + 1) as f64;
            moment[c] += vol * mean;
        }
    }
    if volume <= 0.0 {
        return Err(Error::DegeneratePolytope);
    }
    Ok((volume, moment.into_iter().map(|m| m / volume).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(dim: usize) -> Vec<Halfspace> {
        let mut h = Vec::new();
        for i in 0..dim {
            let mut a = vec![0.0; dim];
            a[i] = 1.0;
            h.push(Halfspace { a: a.clone(), b: 1.0 });
            a[i] = -1.0;
            h.push(Halfspace { a, b: 0.0 });
        }
        h
    }

    #[test]
    fn unit_cube_volume_and_centroid() {
        for dim in 1..=4 {
            let vs = enumerate_vertices(&cube(dim), dim, 1e-12);
            assert_eq!(vs.points.len(), 1 << dim);
            let (vol, c) = volume_and_centroid(&vs, dim, 1e-10).unwrap();
            assert!((vol - 1.0).abs() < 1e-12);
            assert!(c.iter().all(|x| (x - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn truncated_simplex_with_degenerate_vertex() {
        // unit triangle cut by x + y >= 0: the origin is tight on three constraints
        let h = vec![
            Halfspace { a: vec![-1.0, 0.0], b: 0.0 },
            Halfspace { a: vec![0.0, -1.0], b: 0.0 },
            Halfspace { a: vec![1.0, 1.0], b: 1.0 },
            Halfspace { a: vec![-1.0, -1.0], b: 0.0 },
        ];
        let vs = enumerate_vertices(&h, 2, 1e-12);
        assert_eq!(vs.points.len(), 3);
        let (vol, c) = volume_and_centroid(&vs, 2, 1e-10).unwrap();
        assert!((vol - 0.5).abs() < 1e-14);
        assert!(c.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn flat_polytope_is_degenerate() {
        let h = vec![
            Halfspace { a: vec![-1.0, 0.0], b: 0.0 },
            Halfspace { a: vec![0.0, -1.0], b: 0.0 },
            Halfspace { a: vec![0.0, 1.0], b: 0.0 },
            Halfspace { a: vec![1.0, 0.0], b: 1.0 },
        ];
        let vs = enumerate_vertices(&h, 2, 1e-12);
        assert_eq!(volume_and_centroid(&vs, 2, 1e-10), Err(Error::DegeneratePolytope));
    }
}
