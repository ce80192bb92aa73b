//! Canonical motif vocabulary: exemplar poses, symmetry rotation groups
//! derived from graph automorphisms, Kabsch alignment and per-instance frame
//! assignment.
//!
//! Each motif class is described by the centred pose of its first occurrence
//! in the dataset (atoms listed in canonical graph order, dummies included),
//! its atom types, and the finite set of rotations mapping the pose onto an
//! indistinguishable copy of itself. Token id 0 is reserved for the mask
//! state, whose symmetry group is `{I}`; vocabulary entry `j` is token
//! `j + 1`.

use crate::fragment::FragmentedMolecule;
use crate::molgraph::{
    canonical_order, enumerate_automorphisms, BondOrder, CanonicalKey, GraphError, MolecularGraph,
};
use crate::rot3::{geodesic_dist, Rotation as GenericRotation};
use crate::{RigidFrame, Rotation};
use nalgebra::{Matrix3, Vector3};
use std::collections::BTreeMap;
use thiserror::Error;

/// Reserved token id for the mask state.
pub const MASK_TOKEN: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocabError {
    #[error("point set is degenerate (rank < 2); no unique rotation exists")]
    Degenerate,
    #[error("point sets have mismatched sizes: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("rotations selected from automorphisms do not close under composition")]
    NotAGroup,
    #[error("no automorphism aligns the instance to the exemplar within {tol} Å (best {best:.4})")]
    NoValidAutomorphism { tol: f64, best: f64 },
    #[error("instance key not present in vocabulary")]
    UnknownMotif,
    #[error("vocabulary file is malformed: {0}")]
    BadFile(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Proper rotation minimising `Σ‖pᵢ·R − qᵢ‖²` over corresponded, centred
/// point rows (SVD of the cross-covariance with determinant sign
/// correction).
pub fn kabsch(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<Rotation, VocabError> {
    if p.len() != q.len() {
        return Err(VocabError::SizeMismatch(p.len(), q.len()));
    }
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in p.iter().zip(q) {
        h += a * b.transpose();
    }
    let svd_p = {
        let mut s = Matrix3::<f64>::zeros();
        for a in p {
            s += a * a.transpose();
        }
        let mut ev: Vec<f64> = s
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&l| l.max(0.0).sqrt())
            .collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        ev
    };
    if p.len() < 3 || svd_p[1] < 1e-9 * svd_p[0].max(1e-12) {
        return Err(VocabError::Degenerate);
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    Ok(GenericRotation::from_matrix_unchecked(u * d * v_t))
}

pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

pub fn centered(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let c = centroid(points);
    points.iter().map(|p| p - c).collect()
}

pub fn rmsd(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let n = a.len().max(1) as f64;
    (a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Applies a row-convention rotation to every point.
fn rotate_all(points: &[Vector3<f64>], r: &Rotation) -> Vec<Vector3<f64>> {
    points.iter().map(|p| r.apply_row(p)).collect()
}

fn permute<Q: Clone>(items: &[Q], perm: &[usize]) -> Vec<Q> {
    // Row a of the result is items[perm[a]].
    perm.iter().map(|&i| items[i].clone()).collect()
}

/// Rotations mapping the centred pose onto a permuted copy of itself:
/// for each automorphism π, the Kabsch solution of `π(pose) · R ≈ pose`,
/// kept when the residual is within `rmsd_tol`, deduplicated within 1e-3
/// rad. The result must contain the identity and close under composition.
pub fn symmetry_group(
    pose: &[Vector3<f64>],
    automorphisms: &[Vec<usize>],
    rmsd_tol: f64,
) -> Result<Vec<Rotation>, VocabError> {
    const DEDUP_TOL: f64 = 1e-3;
    let mut rotations: Vec<Rotation> = Vec::new();
    for perm in automorphisms {
        let permuted = permute(pose, perm);
        let r = match kabsch(&permuted, pose) {
            Ok(r) => r,
            Err(VocabError::Degenerate) => return Err(VocabError::Degenerate),
            Err(e) => return Err(e),
        };
        let moved = rotate_all(&permuted, &r);
        if rmsd(&moved, pose) > rmsd_tol {
            continue;
        }
        if !rotations
            .iter()
            .any(|s| geodesic_dist(s, &r) < DEDUP_TOL)
        {
            rotations.push(r);
        }
    }
    let has_identity = rotations
        .iter()
        .any(|s| geodesic_dist(s, &Rotation::identity()) < DEDUP_TOL);
    if !has_identity {
        return Err(VocabError::NotAGroup);
    }
    for a in &rotations {
        for b in &rotations {
            let ab = a.compose(b);
            if !rotations.iter().any(|s| geodesic_dist(s, &ab) < DEDUP_TOL) {
                return Err(VocabError::NotAGroup);
            }
        }
    }
    Ok(rotations)
}

/// One vocabulary entry: canonical pose, atom types, intra-motif bonds and
/// the symmetry rotation group.
#[derive(Clone, Debug)]
pub struct MotifDescriptor {
    pub key: CanonicalKey,
    /// Centred pose, canonical atom order, dummies included (Å).
    pub pose: Vec<Vector3<f64>>,
    /// Element symbols parallel to `pose` (`DU` marks dummies).
    pub types: Vec<String>,
    /// Intra-motif bonds in pose indexing (dummy anchor bonds included).
    pub bonds: Vec<(usize, usize, BondOrder)>,
    /// Finite symmetry rotation group; always contains the identity.
    pub sym: Vec<Rotation>,
    /// Graph automorphisms of the motif, lexicographically ordered.
    pub automorphisms: Vec<Vec<usize>>,
    /// Occurrence count accumulated over the dataset.
    pub count: usize,
}

impl MotifDescriptor {
    pub fn n_points(&self) -> usize {
        self.pose.len()
    }

    pub fn n_real_atoms(&self) -> usize {
        self.types.iter().filter(|t| *t != "DU").count()
    }

    /// Pose transformed by a frame: `pose·R + 1xᵀ`.
    pub fn place(&self, frame: &RigidFrame) -> Vec<Vector3<f64>> {
        self.pose.iter().map(|p| frame.apply(p)).collect()
    }
}

/// Ordered motif vocabulary. Entry `j` is token `j + 1`; token 0 is the
/// mask state with symmetry `{I}`.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    pub entries: Vec<MotifDescriptor>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn token_of(&self, key: &CanonicalKey) -> Option<usize> {
        self.entries.iter().position(|e| e.key == *key).map(|i| i + 1)
    }

    pub fn entry(&self, token: usize) -> Option<&MotifDescriptor> {
        if token == MASK_TOKEN {
            return None;
        }
        self.entries.get(token - 1)
    }

    /// Symmetry group of a token; the mask token has `{I}`.
    pub fn sym_of(&self, token: usize) -> Vec<Rotation> {
        match self.entry(token) {
            Some(e) => e.sym.clone(),
            None => vec![Rotation::identity()],
        }
    }
}

/// Frame assigned to one motif instance.
#[derive(Clone, Debug)]
pub struct FrameAssignment {
    pub token: usize,
    pub frame: RigidFrame,
    /// Automorphism of the descriptor graph used for the correspondence.
    pub automorphism: Vec<usize>,
    /// RMSD between the placed pose and the instance points.
    pub residual: f64,
}

/// Instance points in canonical graph order (the order used by poses).
fn instance_points_canonical(
    inst: &crate::fragment::MotifInstance,
    parent: &MolecularGraph,
) -> Result<(Vec<Vector3<f64>>, Vec<String>, MolecularGraph), VocabError> {
    let (graph, _) = inst.graph(parent);
    let order = canonical_order(&graph)?;
    let points: Vec<Vector3<f64>> = order.iter().map(|&i| graph.atoms[i].pos).collect();
    let types: Vec<String> = order.iter().map(|&i| graph.atoms[i].element.clone()).collect();
    Ok((points, types, graph))
}

/// Assigns a rigid frame to an instance of `desc`: the translation is the
/// centroid of the instance points (dummies included), the rotation is the
/// Kabsch solution for the first automorphism (in lexicographic order) whose
/// residual passes `rmsd_tol`.
pub fn assign_frame(
    desc: &MotifDescriptor,
    instance_points: &[Vector3<f64>],
    rmsd_tol: f64,
) -> Result<FrameAssignment, VocabError> {
    if instance_points.len() != desc.pose.len() {
        return Err(VocabError::SizeMismatch(
            instance_points.len(),
            desc.pose.len(),
        ));
    }
    let x = centroid(instance_points);
    let inst_centred = centered(instance_points);
    let mut best = f64::INFINITY;
    for perm in &desc.automorphisms {
        let target = permute(&inst_centred, perm);
        let r = kabsch(&desc.pose, &target)?;
        let placed = rotate_all(&desc.pose, &r);
        let residual = rmsd(&placed, &target);
        if residual <= rmsd_tol {
            return Ok(FrameAssignment {
                token: 0,
                frame: RigidFrame::new(r, x),
                automorphism: perm.clone(),
                residual,
            });
        }
        best = best.min(residual);
    }
    Err(VocabError::NoValidAutomorphism {
        tol: rmsd_tol,
        best,
    })
}

/// Per-molecule frame assignments plus summary statistics.
#[derive(Clone, Debug)]
pub struct VocabularyBuild {
    pub vocabulary: Vocabulary,
    /// One entry per input molecule, parallel to the dataset.
    pub assignments: Vec<Vec<FrameAssignment>>,
    pub stats: VocabStats,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct VocabStats {
    pub n_classes: usize,
    pub mean_atoms_per_molecule: f64,
    pub mean_heavy_atoms_per_molecule: f64,
    pub mean_motifs_per_molecule: f64,
    /// atoms/molecule ÷ motifs/molecule.
    pub compression_all_atom: f64,
    /// heavy atoms/molecule ÷ motifs/molecule.
    pub compression_heavy_atom: f64,
    pub max_symmetry_order: usize,
    /// Histogram of motifs-per-molecule, index = K.
    pub k_histogram: Vec<usize>,
}

/// Builds the vocabulary over a fragmented dataset: the exemplar pose of a
/// class is the centred first occurrence in input order; every instance then
/// receives a frame. `rmsd_tol` bounds the accepted alignment residual.
pub fn build_vocabulary(
    dataset: &[FragmentedMolecule],
    rmsd_tol: f64,
) -> Result<VocabularyBuild, VocabError> {
    let mut vocabulary = Vocabulary::default();
    let mut index: BTreeMap<CanonicalKey, usize> = BTreeMap::new();
    let mut assignments = Vec::with_capacity(dataset.len());

    for fm in dataset {
        let mut per_mol = Vec::with_capacity(fm.motifs.len());
        for inst in &fm.motifs {
            let (points, types, graph) = instance_points_canonical(inst, &fm.source)?;
            let token = match index.get(&inst.key) {
                Some(&tok) => tok,
                None => {
                    let pose = centered(&points);
                    let order = canonical_order(&graph)?;
                    let mut inv = vec![0usize; order.len()];
                    for (p, &v) in order.iter().enumerate() {
                        inv[v] = p;
                    }
                    let bonds = graph
                        .bonds
                        .iter()
                        .map(|b| {
                            let (p, q) = (inv[b.i].min(inv[b.j]), inv[b.i].max(inv[b.j]));
                            (p, q, b.order)
                        })
                        .collect();
                    // Automorphisms of the canonical-order graph: conjugate
                    // the graph automorphisms into pose indexing.
                    let autos_graph = enumerate_automorphisms(&graph)?;
                    let mut automorphisms: Vec<Vec<usize>> = autos_graph
                        .iter()
                        .map(|perm| {
                            (0..order.len())
                                .map(|p| inv[perm[order[p]]])
                                .collect::<Vec<usize>>()
                        })
                        .collect();
                    automorphisms.sort_unstable();
                    let sym = symmetry_group(&pose, &automorphisms, rmsd_tol)?;
                    vocabulary.entries.push(MotifDescriptor {
                        key: inst.key,
                        pose,
                        types,
                        bonds,
                        sym,
                        automorphisms,
                        count: 0,
                    });
                    let tok = vocabulary.entries.len();
                    index.insert(inst.key, tok);
                    tok
                }
            };
            let desc = &vocabulary.entries[token - 1];
            let mut assignment = assign_frame(desc, &points, rmsd_tol)?;
            assignment.token = token;
            per_mol.push(assignment);
            vocabulary.entries[token - 1].count += 1;
        }
        assignments.push(per_mol);
    }

    let stats = compute_stats(dataset, &vocabulary);
    Ok(VocabularyBuild {
        vocabulary,
        assignments,
        stats,
    })
}

fn compute_stats(dataset: &[FragmentedMolecule], vocab: &Vocabulary) -> VocabStats {
    let n = dataset.len().max(1) as f64;
    let atoms: usize = dataset.iter().map(|fm| fm.source.n_atoms()).sum();
    let heavy: usize = dataset.iter().map(|fm| fm.source.n_heavy_atoms()).sum();
    let motifs: usize = dataset.iter().map(|fm| fm.motifs.len()).sum();
    let max_k = dataset.iter().map(|fm| fm.motifs.len()).max().unwrap_or(0);
    let mut k_histogram = vec![0usize; max_k + 1];
    for fm in dataset {
        k_histogram[fm.motifs.len()] += 1;
    }
    let mean_atoms = atoms as f64 / n;
    let mean_heavy = heavy as f64 / n;
    let mean_motifs = motifs as f64 / n;
    VocabStats {
        n_classes: vocab.len(),
        mean_atoms_per_molecule: mean_atoms,
        mean_heavy_atoms_per_molecule: mean_heavy,
        mean_motifs_per_molecule: mean_motifs,
        compression_all_atom: mean_atoms / mean_motifs.max(f64::MIN_POSITIVE),
        compression_heavy_atom: mean_heavy / mean_motifs.max(f64::MIN_POSITIVE),
        max_symmetry_order: vocab.entries.iter().map(|e| e.sym.len()).max().unwrap_or(0),
        k_histogram,
    }
}

// ---------------------------------------------------------------------------
// Vocabulary file format (versioned JSON).

#[derive(serde::Serialize, serde::Deserialize)]
struct VocabFile {
    format: String,
    version: u32,
    entries: Vec<EntryDto>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EntryDto {
    key: String,
    types: Vec<String>,
    pose: Vec<[f64; 3]>,
    bonds: Vec<(usize, usize, u32)>,
    sym: Vec<[[f64; 3]; 3]>,
    count: usize,
    automorphisms: Vec<Vec<usize>>,
}

const VOCAB_FORMAT: &str = "rigidflow-vocab";
const VOCAB_VERSION: u32 = 1;

pub fn vocabulary_to_json(vocab: &Vocabulary) -> String {
    let entries = vocab
        .entries
        .iter()
        .map(|e| EntryDto {
            key: e.key.to_hex(),
            types: e.types.clone(),
            pose: e.pose.iter().map(|p| [p.x, p.y, p.z]).collect(),
            bonds: e
                .bonds
                .iter()
                .map(|&(i, j, o)| (i, j, o.sdf_code()))
                .collect(),
            sym: e
                .sym
                .iter()
                .map(|r| {
                    let m = r.matrix();
                    [
                        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
                    ]
                })
                .collect(),
            count: e.count,
            automorphisms: e.automorphisms.clone(),
        })
        .collect();
    let file = VocabFile {
        format: VOCAB_FORMAT.to_string(),
        version: VOCAB_VERSION,
        entries,
    };
    serde_json::to_string_pretty(&file).expect("vocabulary serialises")
}

pub fn vocabulary_from_json(text: &str) -> Result<Vocabulary, VocabError> {
    let file: VocabFile =
        serde_json::from_str(text).map_err(|e| VocabError::BadFile(e.to_string()))?;
    if file.format != VOCAB_FORMAT {
        return Err(VocabError::BadFile(format!("format '{}'", file.format)));
    }
    if file.version != VOCAB_VERSION {
        return Err(VocabError::BadFile(format!("version {}", file.version)));
    }
    let mut entries = Vec::with_capacity(file.entries.len());
    for e in file.entries {
        let key = CanonicalKey::from_hex(&e.key)
            .ok_or_else(|| VocabError::BadFile(format!("bad key '{}'", e.key)))?;
        let pose = e.pose.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        let mut bonds = Vec::with_capacity(e.bonds.len());
        for (i, j, code) in e.bonds {
            let order = BondOrder::from_sdf_code(code)
                .ok_or_else(|| VocabError::BadFile(format!("bond order code {code}")))?;
            bonds.push((i, j, order));
        }
        let mut sym = Vec::with_capacity(e.sym.len());
        for rows in e.sym {
            let m = Matrix3::new(
                rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2],
                rows[2][0], rows[2][1], rows[2][2],
            );
            sym.push(
                GenericRotation::from_matrix(m)
                    .map_err(|e| VocabError::BadFile(e.to_string()))?,
            );
        }
        entries.push(MotifDescriptor {
            key,
            pose,
            types: e.types,
            bonds,
            sym,
            automorphisms: e.automorphisms,
            count: e.count,
        });
    }
    Ok(Vocabulary { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::{fragment_dataset, FragmentationConfig};
    use crate::molgraph::{Atom, Bond};
    use crate::rot3::sample_uniform_so3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn kabsch_identity_on_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let p = centered(&random_points(&mut rng, 6));
        let r = kabsch(&p, &p).unwrap();
        assert!(geodesic_dist(&r, &Rotation::identity()) < 1e-9);
    }

    #[test]
    fn kabsch_recovers_random_rotations_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let p = centered(&random_points(&mut rng, 5));
            let r_true: Rotation = sample_uniform_so3(&mut rng);
            let q = rotate_all(&p, &r_true);
            let r = kabsch(&p, &q).unwrap();
            assert!(geodesic_dist(&r, &r_true) < 1e-9);
        }
    }

    #[test]
    fn kabsch_is_a_local_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = centered(&random_points(&mut rng, 7));
        // Noisy correspondence keeps the optimum interior.
        let r_true: Rotation = sample_uniform_so3(&mut rng);
        let q: Vec<Vector3<f64>> = rotate_all(&p, &r_true)
            .into_iter()
            .map(|v| v + Vector3::new(rng.gen_range(-0.05..0.05), 0.0, 0.0))
            .collect();
        let r = kabsch(&p, &q).unwrap();
        let objective = |rot: &Rotation| -> f64 {
            rotate_all(&p, rot)
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b).norm_squared())
                .sum()
        };
        let at_opt = objective(&r);
        for _ in 0..100 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let nudge = crate::rot3::exp_at(
                &r,
                &crate::rot3::TangentVec::new(axis * 1e-3, r),
            );
            assert!(objective(&nudge) >= at_opt - 1e-12);
        }
    }

    #[test]
    fn kabsch_rejects_collinear_input() {
        let p: Vec<Vector3<f64>> = (0..4)
            .map(|i| Vector3::new(i as f64 - 1.5, 0.0, 0.0))
            .collect();
        assert!(matches!(kabsch(&p, &p), Err(VocabError::Degenerate)));
    }

    fn equilateral_ch2_pose() -> (Vec<Vector3<f64>>, MolecularGraph) {
        // Cyclopropane-like (CH2)3 with D3h geometry.
        let mut atoms = Vec::new();
        let mut bonds = Vec::new();
        let rc = 1.51 / 3.0f64.sqrt();
        for k in 0..3 {
            let a = 2.0 * std::f64::consts::PI / 3.0 * k as f64;
            atoms.push(Atom::new("C", [rc * a.cos(), rc * a.sin(), 0.0]));
        }
        for k in 0..3 {
            bonds.push(Bond::new(k, (k + 1) % 3, BondOrder::Single));
        }
        for k in 0..3 {
            let a = 2.0 * std::f64::consts::PI / 3.0 * k as f64;
            let rh = rc + 0.52;
            for z in [0.92, -0.92] {
                atoms.push(Atom::new("H", [rh * a.cos(), rh * a.sin(), z]));
                bonds.push(Bond::new(k, atoms.len() - 1, BondOrder::Single));
            }
        }
        let g = MolecularGraph::new(atoms, bonds).unwrap();
        let pose = centered(&g.positions());
        (pose, g)
    }

    fn benzene_pose() -> (Vec<Vector3<f64>>, MolecularGraph) {
        let mut atoms = Vec::new();
        let mut bonds = Vec::new();
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            atoms.push(Atom::new("C", [1.39 * a.cos(), 1.39 * a.sin(), 0.0]));
        }
        for k in 0..6 {
            bonds.push(Bond::new(k, (k + 1) % 6, BondOrder::Aromatic));
        }
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            atoms.push(Atom::new("H", [2.48 * a.cos(), 2.48 * a.sin(), 0.0]));
            bonds.push(Bond::new(k, atoms.len() - 1, BondOrder::Single));
        }
        let g = MolecularGraph::new(atoms, bonds).unwrap();
        let pose = centered(&g.positions());
        (pose, g)
    }

    #[test]
    fn asymmetric_motif_has_trivial_symmetry() {
        let g = MolecularGraph::new(
            vec![
                Atom::new("C", [0.0, 0.0, 0.0]),
                Atom::new("H", [1.09, 0.0, 0.0]),
                Atom::new("F", [-0.44, 1.28, 0.0]),
                Atom::new("Cl", [-0.51, -0.74, 1.43]),
                Atom::new("Br", [-0.57, -0.8, -1.59]),
            ],
            vec![
                Bond::new(0, 1, BondOrder::Single),
                Bond::new(0, 2, BondOrder::Single),
                Bond::new(0, 3, BondOrder::Single),
                Bond::new(0, 4, BondOrder::Single),
            ],
        )
        .unwrap();
        let autos = enumerate_automorphisms(&g).unwrap();
        assert_eq!(autos.len(), 1);
        let sym = symmetry_group(&centered(&g.positions()), &autos, 0.25).unwrap();
        assert_eq!(sym.len(), 1);
    }

    #[test]
    fn cyclopropane_symmetry_is_d3() {
        let (pose, g) = equilateral_ch2_pose();
        let order = canonical_order(&g).unwrap();
        let pose: Vec<Vector3<f64>> = order.iter().map(|&i| pose[i]).collect();
        let autos_graph = enumerate_automorphisms(&g).unwrap();
        assert_eq!(autos_graph.len(), 48);
        let mut inv = vec![0usize; order.len()];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let autos: Vec<Vec<usize>> = autos_graph
            .iter()
            .map(|perm| (0..order.len()).map(|p| inv[perm[order[p]]]).collect())
            .collect();
        let sym = symmetry_group(&pose, &autos, 0.25).unwrap();
        assert_eq!(sym.len(), 6);
    }

    #[test]
    fn benzene_symmetry_has_order_12() {
        let (pose, g) = benzene_pose();
        let order = canonical_order(&g).unwrap();
        let pose: Vec<Vector3<f64>> = order.iter().map(|&i| pose[i]).collect();
        let autos_graph = enumerate_automorphisms(&g).unwrap();
        assert_eq!(autos_graph.len(), 12);
        let mut inv = vec![0usize; order.len()];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let autos: Vec<Vec<usize>> = autos_graph
            .iter()
            .map(|perm| (0..order.len()).map(|p| inv[perm[order[p]]]).collect())
            .collect();
        let sym = symmetry_group(&pose, &autos, 0.25).unwrap();
        assert_eq!(sym.len(), 12);
    }

    fn toy_dataset() -> Vec<FragmentedMolecule> {
        // Ethane has two congruent methyl motifs.
        let mut atoms = vec![
            Atom::new("C", [0.0, 0.0, 0.0]),
            Atom::new("C", [1.54, 0.0, 0.0]),
        ];
        let mut bonds = vec![Bond::new(0, 1, BondOrder::Single)];
        for (c, sign) in [(0usize, -1.0), (1usize, 1.0)] {
            for k in 0..3 {
                let a = 2.0 * std::f64::consts::PI / 3.0 * k as f64 + 0.3;
                atoms.push(Atom::new(
                    "H",
                    [
                        atoms[c].pos.x + sign * 0.36,
                        1.03 * a.cos(),
                        sign * 1.03 * a.sin(),
                    ],
                ));
                bonds.push(Bond::new(c, atoms.len() - 1, BondOrder::Single));
            }
        }
        let g = MolecularGraph::new(atoms, bonds).unwrap();
        fragment_dataset(&[g], &FragmentationConfig::default())
            .unwrap()
            .molecules
    }

    #[test]
    fn single_molecule_with_two_identical_motifs() {
        let dataset = toy_dataset();
        let build = build_vocabulary(&dataset, 0.25).unwrap();
        assert_eq!(build.vocabulary.len(), 1);
        assert_eq!(build.vocabulary.entries[0].count, 2);
        assert_eq!(build.assignments[0].len(), 2);
        for a in &build.assignments[0] {
            assert!(a.residual < 1e-9, "residual {}", a.residual);
        }
    }

    #[test]
    fn assign_frame_identity_translation_case() {
        let dataset = toy_dataset();
        let build = build_vocabulary(&dataset, 0.25).unwrap();
        let desc = &build.vocabulary.entries[0];
        let shift = Vector3::new(1.0, 2.0, 3.0);
        let instance: Vec<Vector3<f64>> = desc.pose.iter().map(|p| p + shift).collect();
        let a = assign_frame(desc, &instance, 0.25).unwrap();
        assert!((a.frame.trans - shift).norm() < 1e-9);
        assert!(geodesic_dist(&a.frame.rot, &Rotation::identity()) < 1e-9);
    }

    #[test]
    fn assign_frame_recovers_rigid_motion_up_to_symmetry() {
        let (pose, g) = equilateral_ch2_pose();
        let order = canonical_order(&g).unwrap();
        let pose: Vec<Vector3<f64>> = centered(&order.iter().map(|&i| pose[i]).collect::<Vec<_>>());
        let autos_graph = enumerate_automorphisms(&g).unwrap();
        let mut inv = vec![0usize; order.len()];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let mut autos: Vec<Vec<usize>> = autos_graph
            .iter()
            .map(|perm| (0..order.len()).map(|p| inv[perm[order[p]]]).collect())
            .collect();
        autos.sort_unstable();
        let sym = symmetry_group(&pose, &autos, 0.25).unwrap();
        let desc = MotifDescriptor {
            key: CanonicalKey([0u8; 32]),
            pose: pose.clone(),
            types: g.atoms.iter().map(|a| a.element.clone()).collect(),
            bonds: Vec::new(),
            sym: sym.clone(),
            automorphisms: autos,
            count: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let r_true: Rotation = sample_uniform_so3(&mut rng);
            let x_true = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let instance: Vec<Vector3<f64>> = pose
                .iter()
                .map(|p| r_true.apply_row(p) + x_true)
                .collect();
            let a = assign_frame(&desc, &instance, 1e-6).unwrap();
            assert!((a.frame.trans - x_true).norm() < 1e-9);
            assert!(a.residual < 1e-9);
            // Recovered rotation is S·R* for some symmetry element S.
            let slop = sym.iter().any(|s| {
                geodesic_dist(&a.frame.rot, &s.compose(&r_true)) < 1e-6
            });
            assert!(slop, "rotation not in the symmetry orbit");
        }
    }

    #[test]
    fn vocabulary_json_roundtrips_bit_exactly() {
        let dataset = toy_dataset();
        let build = build_vocabulary(&dataset, 0.25).unwrap();
        let text = vocabulary_to_json(&build.vocabulary);
        let back = vocabulary_from_json(&text).unwrap();
        let again = vocabulary_to_json(&back);
        assert_eq!(text, again);
    }

    #[test]
    fn symmetry_groups_conjugate_across_seeding_instances() {
        // Whichever congruent instance seeds the exemplar, the group is the
        // same set after conjugating by the aligning rotation.
        let (pose, g) = equilateral_ch2_pose();
        let order = canonical_order(&g).unwrap();
        let pose_a: Vec<Vector3<f64>> =
            centered(&order.iter().map(|&i| pose[i]).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let r: Rotation = sample_uniform_so3(&mut rng);
        let pose_b = rotate_all(&pose_a, &r);

        let autos_graph = enumerate_automorphisms(&g).unwrap();
        let mut inv = vec![0usize; order.len()];
        for (p, &v) in order.iter().enumerate() {
            inv[v] = p;
        }
        let autos: Vec<Vec<usize>> = autos_graph
            .iter()
            .map(|perm| (0..order.len()).map(|p| inv[perm[order[p]]]).collect())
            .collect();
        let sym_a = symmetry_group(&pose_a, &autos, 0.25).unwrap();
        let sym_b = symmetry_group(&pose_b, &autos, 0.25).unwrap();
        assert_eq!(sym_a.len(), sym_b.len());
        // sym_b = Rᵀ · sym_a · R as a set.
        for s in &sym_a {
            let conj = r.inverse().compose(s).compose(&r);
            assert!(
                sym_b.iter().any(|t| geodesic_dist(t, &conj) < 1e-3),
                "conjugated element missing"
            );
        }
    }
}
