//! Canonical labeling of element- and bond-order-labelled graphs.
//!
//! Iterative neighbourhood-refinement colouring with backtracking
//! individualisation when the colouring stabilises non-discretely. The
//! canonical form is the lexicographically smallest serialisation over all
//! search leaves; leaves that tie with the minimum yield the complete
//! automorphism group. Exact and dependency-free; intended for motif-sized
//! graphs (a few dozen nodes).

use super::{CanonicalKey, GraphError, MolecularGraph};
use sha2::{Digest, Sha256};

struct Engine<'a> {
    labels: Vec<&'a str>,
    dummy: Vec<bool>,
    adj: Vec<Vec<(usize, u8)>>,
    n: usize,
    best: Option<(Vec<u8>, Vec<usize>)>,
    tied_orders: Vec<Vec<usize>>,
}

impl<'a> Engine<'a> {
    fn new(g: &'a MolecularGraph) -> Self {
        let n = g.atoms.len();
        let labels = g.atoms.iter().map(|a| a.element.as_str()).collect();
        let dummy = g.atoms.iter().map(|a| a.is_dummy).collect();
        let mut adj = vec![Vec::new(); n];
        for b in &g.bonds {
            let o = b.order.sdf_code() as u8;
            adj[b.i].push((b.j, o));
            adj[b.j].push((b.i, o));
        }
        Engine {
            labels,
            dummy,
            adj,
            n,
            best: None,
            tied_orders: Vec::new(),
        }
    }

    fn initial_colors(&self) -> Vec<u32> {
        let mut keys: Vec<(&str, bool)> = (0..self.n)
            .map(|v| (self.labels[v], self.dummy[v]))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        (0..self.n)
            .map(|v| {
                keys.binary_search(&(self.labels[v], self.dummy[v]))
                    .expect("own key present") as u32
            })
            .collect()
    }

    /// Refines until the number of colour classes stops growing.
    fn refine(&self, colors: &mut Vec<u32>) {
        loop {
            let before = distinct(colors);
            let mut sigs: Vec<(u32, Vec<(u8, u32)>)> = (0..self.n)
                .map(|v| {
                    let mut ns: Vec<(u8, u32)> =
                        self.adj[v].iter().map(|&(w, o)| (o, colors[w])).collect();
                    ns.sort_unstable();
                    (colors[v], ns)
                })
                .collect();
            let mut sorted = sigs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            for (v, sig) in sigs.drain(..).enumerate() {
                colors[v] = sorted.binary_search(&sig).expect("own signature") as u32;
            }
            if distinct(colors) == before {
                return;
            }
        }
    }

    fn search(&mut self, mut colors: Vec<u32>) {
        self.refine(&mut colors);
        // First non-singleton colour class, by colour value.
        let mut cell: Option<(u32, Vec<usize>)> = None;
        {
            let mut counts = std::collections::BTreeMap::new();
            for &c in &colors {
                *counts.entry(c).or_insert(0usize) += 1;
            }
            for (&c, &k) in &counts {
                if k > 1 {
                    let members = (0..self.n).filter(|&v| colors[v] == c).collect();
                    cell = Some((c, members));
                    break;
                }
            }
        }
        match cell {
            None => {
                // Discrete colouring: order nodes by colour and serialise.
                let mut order: Vec<usize> = (0..self.n).collect();
                order.sort_unstable_by_key(|&v| colors[v]);
                let ser = self.serialize(&order);
                match &self.best {
                    Some((best_ser, _)) if *best_ser < ser => {}
                    Some((best_ser, _)) if *best_ser == ser => {
                        self.tied_orders.push(order);
                    }
                    _ => {
                        self.best = Some((ser, order.clone()));
                        self.tied_orders = vec![order];
                    }
                }
            }
            Some((_, members)) => {
                for &m in &members {
                    // Push the chosen node below its cellmates, preserving the
                    // relative order of every other colour.
                    let branched: Vec<u32> = (0..self.n)
                        .map(|v| 2 * colors[v] + u32::from(v != m))
                        .collect();
                    self.search(branched);
                }
            }
        }
    }

    /// Canonical byte serialisation for the given position→node order.
    fn serialize(&self, order: &[usize]) -> Vec<u8> {
        let mut inv = vec![0usize; self.n];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let mut out = Vec::new();
        out.extend_from_slice(&(self.n as u32).to_be_bytes());
        for &v in order {
            out.extend_from_slice(self.labels[v].as_bytes());
            out.push(if self.dummy[v] { 1 } else { 0 });
            out.push(b'|');
        }
        let mut edges: Vec<(usize, usize, u8)> = Vec::new();
        for v in 0..self.n {
            for &(w, o) in &self.adj[v] {
                if v < w {
                    let (p, q) = (inv[v].min(inv[w]), inv[v].max(inv[w]));
                    edges.push((p, q, o));
                }
            }
        }
        edges.sort_unstable();
        for (p, q, o) in edges {
            out.extend_from_slice(&(p as u32).to_be_bytes());
            out.extend_from_slice(&(q as u32).to_be_bytes());
            out.push(o);
        }
        out
    }

    fn run(mut self) -> (Vec<u8>, Vec<usize>, Vec<Vec<usize>>) {
        let colors = self.initial_colors();
        self.search(colors);
        let (ser, order) = self.best.expect("nonempty graph");
        // Automorphisms: node maps between tied canonical orders.
        let mut inv = vec![0usize; self.n];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let mut autos: Vec<Vec<usize>> = self
            .tied_orders
            .iter()
            .map(|other| {
                let mut perm = vec![0usize; self.n];
                for v in 0..self.n {
                    perm[v] = other[inv[v]];
                }
                perm
            })
            .collect();
        autos.sort_unstable();
        autos.dedup();
        (ser, order, autos)
    }
}

fn distinct(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Canonical digest of a connected labelled graph: equal keys iff the graphs
/// are isomorphic with matching element, dummy and bond-order labels.
pub fn canonical_key(g: &MolecularGraph) -> Result<CanonicalKey, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let (ser, _, _) = Engine::new(g).run();
    let digest = Sha256::digest(&ser);
    Ok(CanonicalKey(digest.into()))
}

/// Canonical position→node order of a connected labelled graph. Isomorphic
/// graphs list corresponding nodes at equal positions.
pub fn canonical_order(g: &MolecularGraph) -> Result<Vec<usize>, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let (_, order, _) = Engine::new(g).run();
    Ok(order)
}

/// Complete automorphism group of a connected labelled graph, as node→node
/// permutations in lexicographic order. Contains the identity.
pub fn enumerate_automorphisms(g: &MolecularGraph) -> Result<Vec<Vec<usize>>, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let (_, _, autos) = Engine::new(g).run();
    Ok(autos)
}

/// Brute-force labelled-graph isomorphism by backtracking over node maps.
/// Exponential; usable as an independent oracle on small graphs.
pub fn brute_force_isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    if a.atoms.len() != b.atoms.len() || a.bonds.len() != b.bonds.len() {
        return false;
    }
    let n = a.atoms.len();
    let adj_a = labelled_adj(a);
    let adj_b = labelled_adj(b);
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];

    fn compatible(
        a: &MolecularGraph,
        b: &MolecularGraph,
        adj_a: &[Vec<(usize, u8)>],
        adj_b: &[Vec<(usize, u8)>],
        map: &[usize],
        v: usize,
        w: usize,
    ) -> bool {
        if a.atoms[v].element != b.atoms[w].element || a.atoms[v].is_dummy != b.atoms[w].is_dummy {
            return false;
        }
        if adj_a[v].len() != adj_b[w].len() {
            return false;
        }
        for &(nv, o) in &adj_a[v] {
            if map[nv] != usize::MAX && !adj_b[w].iter().any(|&(nw, ow)| nw == map[nv] && ow == o) {
                return false;
            }
        }
        true
    }

    fn extend(
        a: &MolecularGraph,
        b: &MolecularGraph,
        adj_a: &[Vec<(usize, u8)>],
        adj_b: &[Vec<(usize, u8)>],
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        v: usize,
    ) -> bool {
        if v == map.len() {
            return true;
        }
        for w in 0..map.len() {
            if used[w] {
                continue;
            }
            if compatible(a, b, adj_a, adj_b, map, v, w) {
                map[v] = w;
                used[w] = true;
                // Reverse check: mapped neighbours of w must map back.
                let back_ok = adj_b[w].iter().all(|&(nw, o)| {
                    let pre = map.iter().position(|&m| m == nw);
                    match pre {
                        Some(nv) => adj_a[nv].iter().any(|&(x, ox)| x == v && ox == o),
                        None => true,
                    }
                });
                if back_ok && extend(a, b, adj_a, adj_b, map, used, v + 1) {
                    return true;
                }
                map[v] = usize::MAX;
                used[w] = false;
            }
        }
        false
    }

    extend(a, b, &adj_a, &adj_b, &mut map, &mut used, 0)
}

fn labelled_adj(g: &MolecularGraph) -> Vec<Vec<(usize, u8)>> {
    let mut adj = vec![Vec::new(); g.atoms.len()];
    for b in &g.bonds {
        adj[b.i].push((b.j, b.order.sdf_code() as u8));
        adj[b.j].push((b.i, b.order.sdf_code() as u8));
    }
    adj
}
