//! Ring perception: simple cycles from an improved fundamental-cycle basis,
//! plus fused ring systems (edge-connected unions of rings).

use super::MolecularGraph;
use std::collections::{BTreeMap, BTreeSet};

/// A simple cycle, stored as the vertex walk and the normalised edge set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ring {
    pub atoms: Vec<usize>,
    pub edges: BTreeSet<(usize, usize)>,
}

/// Edge-connected union of rings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingSystem {
    /// Indices into [`RingPerception::rings`].
    pub rings: Vec<usize>,
    pub atoms: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct RingPerception {
    pub rings: Vec<Ring>,
    pub systems: Vec<RingSystem>,
}

impl RingPerception {
    /// Union of all ring edges, the "preserved" set for fragmentation.
    pub fn ring_edges(&self) -> BTreeSet<(usize, usize)> {
        self.rings.iter().flat_map(|r| r.edges.iter().cloned()).collect()
    }
}

fn edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Reconstructs the vertex walk of an edge set that forms one simple cycle;
/// `None` when it does not.
fn cycle_from_edges(edges: &BTreeSet<(usize, usize)>) -> Option<Vec<usize>> {
    if edges.len() < 3 {
        return None;
    }
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    if adj.values().any(|n| n.len() != 2) || adj.len() != edges.len() {
        return None;
    }
    let start = *adj.keys().next()?;
    let mut walk = vec![start];
    let mut prev = start;
    let mut cur = adj[&start][0];
    while cur != start {
        walk.push(cur);
        let ns = &adj[&cur];
        let next = if ns[0] == prev { ns[1] } else { ns[0] };
        prev = cur;
        cur = next;
        if walk.len() > edges.len() {
            return None;
        }
    }
    if walk.len() == edges.len() {
        Some(walk)
    } else {
        None
    }
}

fn symmetric_difference(
    a: &BTreeSet<(usize, usize)>,
    b: &BTreeSet<(usize, usize)>,
) -> BTreeSet<(usize, usize)> {
    a.symmetric_difference(b).cloned().collect()
}

/// All rings of length ≤ `max_len` obtained from a BFS fundamental-cycle
/// basis, improved by pairwise merging: whenever the symmetric difference of
/// two basis cycles is a shorter simple cycle, it replaces the longer one.
/// Fused systems are the connected components of the ring-edge graph.
pub fn perceive_rings(g: &MolecularGraph, max_len: usize) -> RingPerception {
    let n = g.atoms.len();
    let adj = g.adjacency();

    // BFS forest; non-tree edges close fundamental cycles.
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut seen = vec![false; n];
    let mut tree_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut chords: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = v;
                    depth[w] = depth[v] + 1;
                    tree_edges.insert(edge(v, w));
                    queue.push_back(w);
                } else if w > v && !tree_edges.contains(&edge(v, w)) {
                    chords.push((v, w));
                }
            }
        }
    }

    let mut basis: Vec<BTreeSet<(usize, usize)>> = Vec::new();
    for (v, w) in chords {
        let mut edges = BTreeSet::new();
        edges.insert(edge(v, w));
        let (mut a, mut b) = (v, w);
        while depth[a] > depth[b] {
            edges.insert(edge(a, parent[a]));
            a = parent[a];
        }
        while depth[b] > depth[a] {
            edges.insert(edge(b, parent[b]));
            b = parent[b];
        }
        while a != b {
            edges.insert(edge(a, parent[a]));
            a = parent[a];
            edges.insert(edge(b, parent[b]));
            b = parent[b];
        }
        basis.push(edges);
    }

    // Merge improvement toward a minimum cycle basis.
    let mut changed = true;
    let mut guard = 0;
    while changed && guard < 100 {
        changed = false;
        guard += 1;
        'outer: for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                let merged = symmetric_difference(&basis[i], &basis[j]);
                if merged.is_empty() {
                    continue;
                }
                let longer = basis[i].len().max(basis[j].len());
                if merged.len() < longer && cycle_from_edges(&merged).is_some() {
                    let victim = if basis[i].len() >= basis[j].len() { i } else { j };
                    basis[victim] = merged;
                    changed = true;
                    break 'outer;
                }
            }
        }
    }

    let mut rings: Vec<Ring> = Vec::new();
    let mut seen_sets: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    for edges in basis {
        if edges.len() > max_len {
            continue;
        }
        if let Some(atoms) = cycle_from_edges(&edges) {
            let id: Vec<_> = edges.iter().cloned().collect();
            if seen_sets.insert(id) {
                rings.push(Ring { atoms, edges });
            }
        }
    }
    rings.sort_by(|a, b| a.atoms.len().cmp(&b.atoms.len()).then(a.atoms.cmp(&b.atoms)));

    // Fused systems: union-find over rings sharing an edge.
    let mut system_id: Vec<usize> = (0..rings.len()).collect();
    fn find(ids: &mut [usize], x: usize) -> usize {
        if ids[x] != x {
            ids[x] = find(ids, ids[x]);
        }
        ids[x]
    }
    for i in 0..rings.len() {
        for j in (i + 1)..rings.len() {
            if rings[i].edges.intersection(&rings[j].edges).next().is_some() {
                let (a, b) = (find(&mut system_id, i), find(&mut system_id, j));
                if a != b {
                    system_id[a] = b;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..rings.len() {
        let root = find(&mut system_id, i);
        groups.entry(root).or_default().push(i);
    }
    let systems = groups
        .into_values()
        .map(|members| {
            let mut atoms = BTreeSet::new();
            let mut edges = BTreeSet::new();
            for &m in &members {
                atoms.extend(rings[m].atoms.iter().cloned());
                edges.extend(rings[m].edges.iter().cloned());
            }
            RingSystem {
                rings: members,
                atoms,
                edges,
            }
        })
        .collect();

    RingPerception { rings, systems }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{Atom, Bond, BondOrder};

    fn skeleton(n: usize, edges: &[(usize, usize)]) -> MolecularGraph {
        let atoms = (0..n)
            .map(|i| Atom::new("C", [i as f64, 0.0, 0.0]))
            .collect();
        let bonds = edges
            .iter()
            .map(|&(i, j)| Bond::new(i, j, BondOrder::Single))
            .collect();
        MolecularGraph::new(atoms, bonds).unwrap()
    }

    #[test]
    fn acyclic_chain_has_no_rings() {
        let g = skeleton(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let p = perceive_rings(&g, 10);
        assert!(p.rings.is_empty());
        assert!(p.systems.is_empty());
    }

    #[test]
    fn benzene_skeleton() {
        let g = skeleton(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        let p = perceive_rings(&g, 10);
        assert_eq!(p.rings.len(), 1);
        assert_eq!(p.rings[0].atoms.len(), 6);
        assert_eq!(p.systems.len(), 1);
    }

    #[test]
    fn naphthalene_skeleton() {
        // Two fused six-rings sharing edge (0, 5).
        let g = skeleton(
            10,
            &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 0),
                (5, 6),
                (6, 7),
                (7, 8),
                (8, 9),
                (9, 0),
            ],
        );
        let p = perceive_rings(&g, 10);
        assert_eq!(p.rings.len(), 2, "{:?}", p.rings);
        assert!(p.rings.iter().all(|r| r.atoms.len() == 6));
        assert_eq!(p.systems.len(), 1);
        assert_eq!(p.systems[0].atoms.len(), 10);
    }

    #[test]
    fn every_ring_edge_exists_in_graph() {
        let g = skeleton(
            9,
            &[
                (0, 1),
                (1, 2),
                (2, 0),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 3),
                (6, 7),
                (7, 8),
            ],
        );
        let p = perceive_rings(&g, 10);
        assert_eq!(p.rings.len(), 2);
        assert_eq!(p.systems.len(), 2);
        let graph_edges: BTreeSet<(usize, usize)> = g.bonds.iter().map(|b| b.key()).collect();
        for r in &p.rings {
            for e in &r.edges {
                assert!(graph_edges.contains(e));
            }
        }
    }

    #[test]
    fn macrocycle_beyond_max_len_is_dropped() {
        let edges: Vec<(usize, usize)> = (0..12).map(|i| (i, (i + 1) % 12)).collect();
        let g = skeleton(12, &edges);
        let p = perceive_rings(&g, 10);
        assert!(p.rings.is_empty());
    }
}
