//! Molecular data model: atoms, bonds, conformer-file ingestion, ring
//! perception and canonical graph hashing.

mod canon;
mod rings;
mod sdf;

pub use canon::{brute_force_isomorphic, canonical_key, canonical_order, enumerate_automorphisms};
pub use rings::{perceive_rings, Ring, RingPerception, RingSystem};
pub use sdf::{parse_sdf, write_sdf, write_sdf_record};

use nalgebra::Vector3;
use std::collections::BTreeSet;
use thiserror::Error;

/// Element tag of dummy atoms inserted to lock degenerate frames.
pub const DUMMY_ELEMENT: &str = "DU";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("bond ({i}, {j}) is invalid: {reason}")]
    BadBond { i: usize, j: usize, reason: String },
}

impl GraphError {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        GraphError::Parse {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn from_sdf_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            4 => Some(BondOrder::Aromatic),
            _ => None,
        }
    }

    pub fn sdf_code(&self) -> u32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    /// Label used in canonical serialisations and reports.
    pub fn label(&self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub element: String,
    pub pos: Vector3<f64>,
    pub is_dummy: bool,
}

impl Atom {
    pub fn new(element: impl Into<String>, pos: [f64; 3]) -> Self {
        let element = element.into();
        let is_dummy = element == DUMMY_ELEMENT;
        Atom {
            element,
            pos: Vector3::new(pos[0], pos[1], pos[2]),
            is_dummy,
        }
    }

    pub fn dummy(pos: Vector3<f64>) -> Self {
        Atom {
            element: DUMMY_ELEMENT.to_string(),
            pos,
            is_dummy: true,
        }
    }

    /// Heavy means a real atom that is not hydrogen.
    pub fn is_heavy(&self) -> bool {
        !self.is_dummy && self.element != "H"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(i: usize, j: usize, order: BondOrder) -> Self {
        Bond { i, j, order }
    }

    /// Endpoints in (min, max) order, the canonical edge identity.
    pub fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let g = MolecularGraph { atoms, bonds };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for b in &self.bonds {
            if b.i == b.j {
                return Err(GraphError::BadBond {
                    i: b.i,
                    j: b.j,
                    reason: "self loop".into(),
                });
            }
            if b.i >= self.atoms.len() || b.j >= self.atoms.len() {
                return Err(GraphError::BadBond {
                    i: b.i,
                    j: b.j,
                    reason: "index out of range".into(),
                });
            }
            if !seen.insert(b.key()) {
                return Err(GraphError::BadBond {
                    i: b.i,
                    j: b.j,
                    reason: "duplicate bond".into(),
                });
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_heavy_atoms(&self) -> usize {
        self.atoms.iter().filter(|a| a.is_heavy()).count()
    }

    /// Adjacency lists as (neighbor, bond order).
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, o)| (n, o));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(n, _) in &adj[v] {
                if !seen[n] {
                    seen[n] = true;
                    count += 1;
                    stack.push(n);
                }
            }
        }
        count == self.atoms.len()
    }

    /// Connected components as sorted atom-index lists, ordered by smallest
    /// member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(n, _) in &adj[v] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                        stack.push(n);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph on `indices` (need not be sorted); returns the
    /// subgraph together with the map from new index to parent index.
    pub fn subgraph(&self, indices: &[usize]) -> (MolecularGraph, Vec<usize>) {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_unstable();
        order.dedup();
        let mut inv = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let atoms = order.iter().map(|&i| self.atoms[i].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| inv[b.i] != usize::MAX && inv[b.j] != usize::MAX)
            .map(|b| Bond::new(inv[b.i], inv[b.j], b.order))
            .collect();
        (MolecularGraph { atoms, bonds }, order)
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.atoms.iter().map(|a| a.pos).collect()
    }
}

/// Opaque digest identifying a labelled graph up to isomorphism.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(pub [u8; 32]);

impl CanonicalKey {
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Some(CanonicalKey(out))
    }
}

impl std::fmt::Debug for CanonicalKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CanonicalKey({}..)", &self.to_hex()[..12])
    }
}

/// Element vocabulary accepted by the parser.
#[derive(Clone, Debug)]
pub struct ElementVocabulary {
    symbols: BTreeSet<String>,
}

impl Default for ElementVocabulary {
    fn default() -> Self {
        let symbols = ["H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        ElementVocabulary { symbols }
    }
}

impl ElementVocabulary {
    /// One symbol per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        let symbols = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        ElementVocabulary { symbols }
    }

    pub fn contains(&self, symbol: &str) -> bool {
        symbol == DUMMY_ELEMENT || self.symbols.contains(symbol)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(String::as_str)
    }
}

/// RMS distance of the given atoms from their SVD best-fit plane.
pub fn plane_rms(points: &[Vector3<f64>]) -> f64 {
    if points.len() <= 3 {
        return 0.0;
    }
    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut scatter = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (min_ev.max(0.0) / points.len() as f64).sqrt()
}

/// True when the atoms of a ring system deviate from their best-fit plane by
/// at most `tol` (Å, RMS).
pub fn is_planar_ring_system(g: &MolecularGraph, system: &[usize], tol: f64) -> bool {
    let points: Vec<Vector3<f64>> = system.iter().map(|&i| g.atoms[i].pos).collect();
    plane_rms(&points) <= tol
}
