//! Radius neighbourhoods over `(x, y, t̂)`.

use std::cmp::Ordering;
use std::collections::HashMap;

/// `(src, dst)`: information flows from `src` into `dst`.
pub type Edge = [u32; 2];

#[inline]
pub(crate) fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    let dx = f64::from(a[0]) - f64::from(b[0]);
    let dy = f64::from(a[1]) - f64::from(b[1]);
    let dz = f64::from(a[2]) - f64::from(b[2]);
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn closer(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Directed radius graph with an in-degree cap.
///
/// For every vertex `i`, all `j != i` with `‖p_j − p_i‖ ≤ radius` are found
/// through a uniform grid of cell side `radius`; when more than
/// `max_neighbors` qualify, the nearest are kept (ties to the smaller `j`).
/// Edges `j → i` come out sorted by `(dst, src)`. Pass `usize::MAX` for no
/// cap.
pub fn radius_neighbors(positions: &[[f32; 3]], radius: f64, max_neighbors: usize) -> Vec<Edge> {
    assert!(radius > 0.0, "radius must be positive");
    let n = positions.len();
    if n < 2 || max_neighbors == 0 {
        return Vec::new();
    }
    let inv = 1.0 / radius;
    let cell_of = |p: &[f32; 3]| -> [i64; 3] {
        [
            (f64::from(p[0]) * inv).floor() as i64,
            (f64::from(p[1]) * inv).floor() as i64,
            (f64::from(p[2]) * inv).floor() as i64,
        ]
    };
    let cells: Vec<[i64; 3]> = positions.iter().map(cell_of).collect();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by_key(|&i| (cells[i as usize], i));
    let mut buckets: HashMap<[i64; 3], (usize, usize)> = HashMap::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || cells[order[k] as usize] != cells[order[start] as usize] {
            buckets.insert(cells[order[start] as usize], (start, k));
            start = k;
        }
    }

    let r2 = radius * radius;
    let mut edges = Vec::new();
    let mut found: Vec<(f64, u32)> = Vec::new();
    for i in 0..n {
        found.clear();
        let c = cells[i];
        let p = &positions[i];
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(&(a, b)) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in &order[a..b] {
                        if j as usize == i {
                            continue;
                        }
                        let d = dist2(p, &positions[j as usize]);
                        if d <= r2 {
                            found.push((d, j));
                        }
                    }
                }
            }
        }
        if found.len() > max_neighbors {
            found.select_nth_unstable_by(max_neighbors - 1, closer);
            found.truncate(max_neighbors);
        }
        found.sort_unstable_by_key(|&(_, j)| j);
        edges.extend(found.iter().map(|&(_, j)| [j, i as u32]));
    }
    edges
}

/// All-pairs radius graph with no cap, sorted by `(dst, src)`. O(N²); the
/// reference for [`radius_neighbors`].
pub fn brute_force_neighbors(positions: &[[f32; 3]], radius: f64) -> Vec<Edge> {
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for (i, pi) in positions.iter().enumerate() {
        for (j, pj) in positions.iter().enumerate() {
            if i != j && dist2(pi, pj) <= r2 {
                edges.push([j as u32, i as u32]);
            }
        }
    }
    edges
}

/// Keeps, per destination, the `max_neighbors` nearest sources (ties to the
/// smaller source index). Output sorted by `(dst, src)`.
pub fn cap_in_degree(edges: &[Edge], positions: &[[f32; 3]], max_neighbors: usize) -> Vec<Edge> {
    let mut by_dst: Vec<Vec<(f64, u32)>> = vec![Vec::new(); positions.len()];
    for &[s, d] in edges {
        by_dst[d as usize].push((dist2(&positions[s as usize], &positions[d as usize]), s));
    }
    let mut out = Vec::new();
    for (d, mut list) in by_dst.into_iter().enumerate() {
        list.sort_by(closer);
        list.truncate(max_neighbors);
        list.sort_by_key(|&(_, s)| s);
        out.extend(list.into_iter().map(|(_, s)| [s, d as u32]));
    }
    out
}
