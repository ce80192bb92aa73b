//! Rigid-motif decomposition: bond-cutting rules, frequency pruning at a
//! threshold α, and dummy-atom insertion for degenerate frames.
//!
//! Cutting keeps double/triple/aromatic bonds, bonds to hydrogens, and — in
//! the `PlanarRings` strategy — single bonds inside approximately planar ring
//! systems. Motif classes rarer than `ceil(α/100 · records)` are recursively
//! re-fragmented through a relaxation ladder: (1) planarity judged per ring
//! instead of per fused system, (2) no ring preservation at all, (3) every
//! heavy–heavy bond cut. Motifs left collinear (alkynes, isolated atoms) get
//! dummy atoms at unit distance toward their nearest non-collinear
//! neighbours until the frame is locked.

use crate::molgraph::{
    canonical_key, is_planar_ring_system, perceive_rings, Atom, Bond, BondOrder, CanonicalKey,
    GraphError, MolecularGraph,
};
use nalgebra::Vector3;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FragmentError {
    #[error("molecule is globally collinear; frame cannot be locked")]
    FrameUnlockable,
    #[error("pruning failed to reduce motif below threshold at terminal granularity")]
    PruningDiverged,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Strategy {
    NoRings,
    PlanarRings,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FragmentationConfig {
    /// Pruning threshold as a percentage of the record count.
    pub alpha: f64,
    pub strategy: Strategy,
    /// RMS planarity tolerance for ring systems (Å).
    pub planarity_tol: f64,
    /// Distance at which dummy atoms are placed (Å).
    pub dummy_bond_len: f64,
    /// Rings longer than this are treated as flexible.
    pub ring_max: usize,
}

impl Default for FragmentationConfig {
    fn default() -> Self {
        FragmentationConfig {
            alpha: 0.1,
            strategy: Strategy::PlanarRings,
            planarity_tol: 0.1,
            dummy_bond_len: 1.0,
            ring_max: 10,
        }
    }
}

impl FragmentationConfig {
    /// Absolute occurrence count required for a motif class to survive.
    pub fn cutoff(&self, n_records: usize) -> usize {
        (self.alpha / 100.0 * n_records as f64).ceil() as usize
    }
}

/// One rigid motif inside a parent molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct MotifInstance {
    /// Sorted indices into the parent molecule.
    pub atom_indices: Vec<usize>,
    /// Dummy atom positions (Å) in parent coordinates.
    pub dummy_positions: Vec<Vector3<f64>>,
    /// Parallel to `dummy_positions`: the motif atom each dummy anchors to.
    pub dummy_anchors: Vec<usize>,
    /// Canonical key of the motif graph (including dummies once inserted).
    pub key: CanonicalKey,
    /// Relaxation-ladder level this motif was produced at.
    pub level: u8,
}

impl MotifInstance {
    /// Motif graph: induced subgraph plus dummy atoms bonded to their
    /// anchors. Also returns the map new-index → parent atom index (dummies
    /// map to `usize::MAX`).
    pub fn graph(&self, parent: &MolecularGraph) -> (MolecularGraph, Vec<usize>) {
        let (mut g, mut map) = parent.subgraph(&self.atom_indices);
        for (d, &anchor) in self.dummy_anchors.iter().enumerate() {
            let anchor_new = map
                .iter()
                .position(|&p| p == anchor)
                .expect("dummy anchor inside motif");
            g.atoms.push(Atom::dummy(self.dummy_positions[d]));
            let di = g.atoms.len() - 1;
            g.bonds.push(Bond::new(anchor_new, di, BondOrder::Single));
            map.push(usize::MAX);
        }
        (g, map)
    }

    /// All motif points: real atoms then dummies, in `graph()` order.
    pub fn points(&self, parent: &MolecularGraph) -> Vec<Vector3<f64>> {
        let mut pts: Vec<Vector3<f64>> = self
            .atom_indices
            .iter()
            .map(|&i| parent.atoms[i].pos)
            .collect();
        pts.extend(self.dummy_positions.iter().cloned());
        pts
    }
}

#[derive(Clone, Debug)]
pub struct FragmentedMolecule {
    pub source: MolecularGraph,
    pub motifs: Vec<MotifInstance>,
    pub cut_bonds: Vec<Bond>,
}

impl FragmentedMolecule {
    pub fn n_fragments(&self) -> usize {
        self.motifs.len()
    }
}

/// Caches the planarity verdict per ring-system class so fragmentation is
/// consistent dataset-wide (first occurrence decides).
#[derive(Debug, Default)]
pub struct PlanarityCache {
    verdicts: BTreeMap<CanonicalKey, bool>,
}

impl PlanarityCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn is_planar(
        &mut self,
        g: &MolecularGraph,
        atoms: &BTreeSet<usize>,
        tol: f64,
    ) -> Result<bool, GraphError> {
        let list: Vec<usize> = atoms.iter().cloned().collect();
        let (sub, _) = g.subgraph(&list);
        let key = canonical_key(&sub)?;
        if let Some(&v) = self.verdicts.get(&key) {
            return Ok(v);
        }
        let verdict = is_planar_ring_system(g, &list, tol);
        self.verdicts.insert(key, verdict);
        Ok(verdict)
    }
}

/// Which single heavy–heavy bonds survive, per strategy/relaxation level.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Preservation {
    /// Planarity judged on whole fused systems.
    PlanarSystems,
    /// Planarity judged ring by ring (relaxation level 1).
    PlanarRingsOnly,
    /// No ring preservation (NoRings rules; relaxation level 2).
    None,
    /// Cut every heavy–heavy bond regardless of order (level 3).
    Isolate,
}

fn preserved_ring_edges(
    g: &MolecularGraph,
    mode: Preservation,
    tol: f64,
    ring_max: usize,
    cache: &mut PlanarityCache,
) -> Result<BTreeSet<(usize, usize)>, GraphError> {
    let mut preserved = BTreeSet::new();
    match mode {
        Preservation::None | Preservation::Isolate => {}
        Preservation::PlanarSystems => {
            let perception = perceive_rings(g, ring_max);
            for system in &perception.systems {
                if cache.is_planar(g, &system.atoms, tol)? {
                    preserved.extend(system.edges.iter().cloned());
                }
            }
        }
        Preservation::PlanarRingsOnly => {
            let perception = perceive_rings(g, ring_max);
            for ring in &perception.rings {
                let atoms: BTreeSet<usize> = ring.atoms.iter().cloned().collect();
                if cache.is_planar(g, &atoms, tol)? {
                    preserved.extend(ring.edges.iter().cloned());
                }
            }
        }
    }
    Ok(preserved)
}

fn should_cut(
    g: &MolecularGraph,
    bond: &Bond,
    mode: Preservation,
    preserved: &BTreeSet<(usize, usize)>,
) -> bool {
    let heavy = g.atoms[bond.i].is_heavy() && g.atoms[bond.j].is_heavy();
    if !heavy {
        return false;
    }
    match mode {
        Preservation::Isolate => true,
        _ => bond.order == BondOrder::Single && !preserved.contains(&bond.key()),
    }
}

fn split(
    g: &MolecularGraph,
    mode: Preservation,
    tol: f64,
    ring_max: usize,
    level: u8,
    cache: &mut PlanarityCache,
) -> Result<(Vec<MotifInstance>, Vec<Bond>), FragmentError> {
    let preserved = preserved_ring_edges(g, mode, tol, ring_max, cache)?;
    // Bonds evaluated in canonical (min, max) order for determinism.
    let mut bonds: Vec<Bond> = g.bonds.clone();
    bonds.sort_unstable_by_key(|b| b.key());
    let mut cut = Vec::new();
    let mut kept = MolecularGraph {
        atoms: g.atoms.clone(),
        bonds: Vec::new(),
    };
    for b in bonds {
        if should_cut(g, &b, mode, &preserved) {
            cut.push(b);
        } else {
            kept.bonds.push(b);
        }
    }
    let mut motifs = Vec::new();
    for comp in kept.components() {
        let (sub, _) = g.subgraph(&comp);
        let key = canonical_key(&sub)?;
        motifs.push(MotifInstance {
            atom_indices: comp,
            dummy_positions: Vec::new(),
            dummy_anchors: Vec::new(),
            key,
            level,
        });
    }
    Ok((motifs, cut))
}

/// Cuts a molecule into rigid motifs (pre-pruning, no dummies).
pub fn cut_bonds(
    g: &MolecularGraph,
    cfg: &FragmentationConfig,
    cache: &mut PlanarityCache,
) -> Result<FragmentedMolecule, FragmentError> {
    let mode = match cfg.strategy {
        Strategy::NoRings => Preservation::None,
        Strategy::PlanarRings => Preservation::PlanarSystems,
    };
    let (motifs, cut_bonds) = split(g, mode, cfg.planarity_tol, cfg.ring_max, 0, cache)?;
    Ok(FragmentedMolecule {
        source: g.clone(),
        motifs,
        cut_bonds,
    })
}

fn relaxation_mode(level: u8) -> Preservation {
    match level {
        1 => Preservation::PlanarRingsOnly,
        2 => Preservation::None,
        _ => Preservation::Isolate,
    }
}

const TERMINAL_LEVEL: u8 = 3;

/// Recursively re-fragments motif classes rarer than the α cutoff until a
/// fixpoint. Classes already at terminal (single-heavy-atom) granularity
/// cannot be reduced further and survive regardless of count.
pub fn prune_vocabulary(
    mut dataset: Vec<FragmentedMolecule>,
    cfg: &FragmentationConfig,
    cache: &mut PlanarityCache,
) -> Result<Vec<FragmentedMolecule>, FragmentError> {
    let cutoff = cfg.cutoff(dataset.len());
    if cutoff <= 1 {
        return Ok(dataset);
    }
    loop {
        let mut counts: BTreeMap<CanonicalKey, usize> = BTreeMap::new();
        for fm in &dataset {
            for m in &fm.motifs {
                *counts.entry(m.key).or_insert(0) += 1;
            }
        }
        let rare: BTreeSet<CanonicalKey> = counts
            .iter()
            .filter(|&(_, &c)| c < cutoff)
            .map(|(&k, _)| k)
            .collect();
        if rare.is_empty() {
            return Ok(dataset);
        }
        let mut progressed = false;
        for fm in &mut dataset {
            let mut new_motifs = Vec::new();
            for motif in std::mem::take(&mut fm.motifs) {
                if !rare.contains(&motif.key) || motif.level >= TERMINAL_LEVEL {
                    new_motifs.push(motif);
                    continue;
                }
                let next_level = motif.level + 1;
                let (sub, map) = fm.source.subgraph(&motif.atom_indices);
                let (pieces, cuts) = split(
                    &sub,
                    relaxation_mode(next_level),
                    cfg.planarity_tol,
                    cfg.ring_max,
                    next_level,
                    cache,
                )?;
                progressed = true;
                for b in cuts {
                    fm.cut_bonds.push(Bond::new(map[b.i], map[b.j], b.order));
                }
                for piece in pieces {
                    let atom_indices: Vec<usize> =
                        piece.atom_indices.iter().map(|&i| map[i]).collect();
                    new_motifs.push(MotifInstance {
                        atom_indices,
                        key: piece.key,
                        level: next_level,
                        dummy_positions: Vec::new(),
                        dummy_anchors: Vec::new(),
                    });
                }
            }
            new_motifs.sort_by(|a, b| a.atom_indices.cmp(&b.atom_indices));
            fm.motifs = new_motifs;
        }
        if !progressed {
            // Every rare class is terminal; nothing left to reduce.
            return Ok(dataset);
        }
    }
}

/// Singular values of the centred point matrix, descending.
fn spread_singular_values(points: &[Vector3<f64>]) -> [f64; 3] {
    if points.is_empty() {
        return [0.0; 3];
    }
    let centroid: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut scatter = nalgebra::Matrix3::<f64>::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let mut ev: Vec<f64> = scatter
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    [ev[0], ev[1], ev[2]]
}

/// Rank of the centred point set: 0 (point), 1 (line) or 2 (spread).
fn spread_rank(points: &[Vector3<f64>]) -> usize {
    let sv = spread_singular_values(points);
    if sv[0] < 1e-9 {
        return 0;
    }
    if sv[1] < 1e-6 * sv[0] {
        return 1;
    }
    2
}

/// Collinear means fewer than three non-collinear points: the second
/// singular value of the centred point matrix vanishes relative to the
/// first.
pub fn is_collinear(points: &[Vector3<f64>]) -> bool {
    spread_rank(points) < 2
}

/// Inserts dummy atoms at `dummy_bond_len` toward the nearest non-collinear
/// neighbours outside the motif until the point set has rank-2 spread.
/// Already well-spread motifs are returned unchanged.
pub fn add_dummy_atoms(
    mol: &MolecularGraph,
    inst: &mut MotifInstance,
    cfg: &FragmentationConfig,
) -> Result<(), FragmentError> {
    let mut points = inst.points(mol);
    if !is_collinear(&points) {
        return Ok(());
    }
    let inside: BTreeSet<usize> = inst.atom_indices.iter().cloned().collect();
    // Candidates outside the motif, nearest first.
    let mut candidates: Vec<(f64, usize)> = (0..mol.atoms.len())
        .filter(|i| !inside.contains(i))
        .map(|i| {
            let d = inst
                .atom_indices
                .iter()
                .map(|&a| (mol.atoms[i].pos - mol.atoms[a].pos).norm())
                .fold(f64::INFINITY, f64::min);
            (d, i)
        })
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for (_, cand) in candidates {
        let anchor = *inst
            .atom_indices
            .iter()
            .min_by(|&&a, &&b| {
                let da = (mol.atoms[cand].pos - mol.atoms[a].pos).norm();
                let db = (mol.atoms[cand].pos - mol.atoms[b].pos).norm();
                da.partial_cmp(&db).unwrap()
            })
            .expect("motif is nonempty");
        let dir = mol.atoms[cand].pos - mol.atoms[anchor].pos;
        let norm = dir.norm();
        if norm < 1e-9 {
            continue;
        }
        let dummy = mol.atoms[anchor].pos + dir / norm * cfg.dummy_bond_len;
        let before = spread_rank(&points);
        points.push(dummy);
        if spread_rank(&points) > before {
            inst.dummy_positions.push(dummy);
            inst.dummy_anchors.push(anchor);
            if !is_collinear(&points) {
                let (g, _) = inst.graph(mol);
                inst.key = canonical_key(&g)?;
                return Ok(());
            }
        } else {
            points.pop();
        }
    }
    Err(FragmentError::FrameUnlockable)
}

/// Result of fragmenting a record set end to end (cut, prune, dummies).
pub struct FragmentationOutcome {
    pub molecules: Vec<FragmentedMolecule>,
    /// Record indices (into the input) that were skipped, with the reason.
    pub skipped: Vec<(usize, FragmentError)>,
}

/// Full fragmentation of a record set. Molecules whose frames cannot be
/// locked are reported and skipped.
pub fn fragment_dataset(
    mols: &[MolecularGraph],
    cfg: &FragmentationConfig,
) -> Result<FragmentationOutcome, FragmentError> {
    let mut cache = PlanarityCache::new();
    let mut fragmented = Vec::with_capacity(mols.len());
    for g in mols {
        fragmented.push(cut_bonds(g, cfg, &mut cache)?);
    }
    let pruned = prune_vocabulary(fragmented, cfg, &mut cache)?;
    let mut molecules = Vec::with_capacity(pruned.len());
    let mut skipped = Vec::new();
    'mols: for (idx, mut fm) in pruned.into_iter().enumerate() {
        for motif in &mut fm.motifs {
            match add_dummy_atoms(&fm.source, motif, cfg) {
                Ok(()) => {}
                Err(e @ FragmentError::FrameUnlockable) => {
                    skipped.push((idx, e));
                    continue 'mols;
                }
                Err(e) => return Err(e),
            }
        }
        molecules.push(fm);
    }
    Ok(FragmentationOutcome { molecules, skipped })
}

/// Fragments-per-molecule and motif-size statistics for a fragmented set.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FragmentStats {
    pub records: usize,
    pub mean_fragments: f64,
    pub median_fragments: f64,
    pub max_fragments: usize,
    /// Largest motif size, dummies included.
    pub max_motif_size: usize,
    pub n_classes: usize,
}

pub fn fragment_stats(dataset: &[FragmentedMolecule]) -> FragmentStats {
    let mut counts: Vec<usize> = dataset.iter().map(|fm| fm.motifs.len()).collect();
    counts.sort_unstable();
    let records = counts.len();
    let mean = counts.iter().sum::<usize>() as f64 / records.max(1) as f64;
    let median = if records == 0 {
        0.0
    } else if records % 2 == 1 {
        counts[records / 2] as f64
    } else {
        (counts[records / 2 - 1] + counts[records / 2]) as f64 / 2.0
    };
    let max_size = dataset
        .iter()
        .flat_map(|fm| fm.motifs.iter())
        .map(|m| m.atom_indices.len() + m.dummy_positions.len())
        .max()
        .unwrap_or(0);
    let classes: BTreeSet<CanonicalKey> = dataset
        .iter()
        .flat_map(|fm| fm.motifs.iter().map(|m| m.key))
        .collect();
    FragmentStats {
        records,
        mean_fragments: mean,
        median_fragments: median,
        max_fragments: counts.last().cloned().unwrap_or(0),
        max_motif_size: max_size,
        n_classes: classes.len(),
    }
}

/// Partition invariant: motif atom sets partition the molecule and every
/// bond is intra-motif or cut.
pub fn check_partition(fm: &FragmentedMolecule) -> bool {
    let mut seen = vec![false; fm.source.atoms.len()];
    for m in &fm.motifs {
        for &i in &m.atom_indices {
            if seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    if !seen.iter().all(|&s| s) {
        return false;
    }
    let cut: BTreeSet<(usize, usize)> = fm.cut_bonds.iter().map(|b| b.key()).collect();
    let motif_of: BTreeMap<usize, usize> = fm
        .motifs
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| m.atom_indices.iter().map(move |&a| (a, mi)))
        .collect();
    fm.source
        .bonds
        .iter()
        .all(|b| motif_of[&b.i] == motif_of[&b.j] || cut.contains(&b.key()))
}
