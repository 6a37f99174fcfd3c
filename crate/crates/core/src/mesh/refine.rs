//! Newest-vertex bisection with conforming closure.

use std::collections::{HashMap, HashSet};

use super::{BoundaryEdge, Mesh};

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Refines `mesh` so that every element in `marked` is bisected at least once.
///
/// Marked elements flag their refinement edge; any element with a flagged
/// edge then flags its own refinement edge until the set is closed. Each
/// element is bisected recursively until none of its edges is flagged, which
/// yields a conforming mesh.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Mesh {
    if marked.is_empty() {
        return mesh.clone();
    }
    let ref_edge = |t: usize| {
        let tri = mesh.triangles[t];
        let r = mesh.refinement_edge[t] as usize;
        key(tri[(r + 1) % 3], tri[(r + 2) % 3])
    };

    let mut flagged: HashSet<[usize; 2]> = marked.iter().map(|&t| ref_edge(t)).collect();
    loop {
        let mut changed = false;
        for t in 0..mesh.n_elements() {
            let tri = mesh.triangles[t];
            let any = (0..3).any(|i| flagged.contains(&key(tri[(i + 1) % 3], tri[(i + 2) % 3])));
            if any && flagged.insert(ref_edge(t)) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(mesh.n_elements() * 2);
    let mut refinement = Vec::with_capacity(mesh.n_elements() * 2);

    // Stack of (vertices, refinement edge) still to process.
    for t in 0..mesh.n_elements() {
        let mut stack = vec![(mesh.triangles[t], mesh.refinement_edge[t] as usize)];
        while let Some((tri, r)) = stack.pop() {
            let (b, c) = (tri[(r + 1) % 3], tri[(r + 2) % 3]);
            if !flagged.contains(&key(b, c)) {
                triangles.push(tri);
                refinement.push(r as u8);
                continue;
            }
            let apex = tri[r];
            let m = *midpoints.entry(key(b, c)).or_insert_with(|| {
                let (pb, pc) = (vertices[b], vertices[c]);
                vertices.push([0.5 * (pb[0] + pc[0]), 0.5 * (pb[1] + pc[1])]);
                vertices.len() - 1
            });
            // Children keep orientation; the new vertex is opposite their refinement edge.
            stack.push(([apex, m, c], 1));
            stack.push(([apex, b, m], 2));
        }
    }

    let mut boundary = Vec::with_capacity(mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.vertices;
        split_boundary(a, b, e.tag, &midpoints, &mut boundary);
    }

    Mesh::new(vertices, triangles, boundary, Some(refinement)).expect("bisection preserves conformity")
}

fn split_boundary(
    a: usize,
    b: usize,
    tag: super::BoundaryTag,
    midpoints: &HashMap<[usize; 2], usize>,
    out: &mut Vec<BoundaryEdge>,
) {
    match midpoints.get(&key(a, b)) {
        Some(&m) => {
            split_boundary(a, m, tag, midpoints, out);
            split_boundary(m, b, tag, midpoints, out);
        }
        None => out.push(BoundaryEdge { vertices: [a, b], tag }),
    }
}
