//! V2000 structure-data file reader and writer.
//!
//! Coordinates are fixed-width `%10.4f` fields; bond orders map
//! `{1, 2, 3, 4} → {single, double, triple, aromatic}`. V3000 records are
//! rejected.

use super::{Atom, Bond, BondOrder, ElementVocabulary, GraphError, MolecularGraph};

/// Parses a multi-record V2000 SDF. Elements must be in `vocab`.
pub fn parse_sdf(text: &str, vocab: &ElementVocabulary) -> Result<Vec<MolecularGraph>, GraphError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut mols = Vec::new();
    let mut pos = 0usize;

    while pos < lines.len() {
        // Skip blank padding between records.
        while pos < lines.len() && lines[pos].trim().is_empty() {
            pos += 1;
        }
        if pos >= lines.len() {
            break;
        }
        let record_start = pos;
        if lines.len() - record_start < 4 {
            return Err(GraphError::parse(record_start + 1, "truncated record header"));
        }
        let counts_idx = record_start + 3;
        let counts = lines[counts_idx];
        if counts.len() >= 39 && counts[33..39].trim() == "V3000" {
            return Err(GraphError::parse(counts_idx + 1, "V3000 records are not supported"));
        }
        let n_atoms = fixed_usize(counts, 0, 3)
            .ok_or_else(|| GraphError::parse(counts_idx + 1, "malformed atom count"))?;
        let n_bonds = fixed_usize(counts, 3, 6)
            .ok_or_else(|| GraphError::parse(counts_idx + 1, "malformed bond count"))?;

        let atom_start = counts_idx + 1;
        let bond_start = atom_start + n_atoms;
        if bond_start + n_bonds > lines.len() {
            return Err(GraphError::parse(counts_idx + 1, "atom/bond block truncated"));
        }

        let mut atoms = Vec::with_capacity(n_atoms);
        for (k, &line) in lines[atom_start..bond_start].iter().enumerate() {
            let lineno = atom_start + k + 1;
            if line.len() < 34 {
                return Err(GraphError::parse(lineno, "atom line too short"));
            }
            let x = fixed_f64(line, 0, 10)
                .ok_or_else(|| GraphError::parse(lineno, "malformed x coordinate"))?;
            let y = fixed_f64(line, 10, 20)
                .ok_or_else(|| GraphError::parse(lineno, "malformed y coordinate"))?;
            let z = fixed_f64(line, 20, 30)
                .ok_or_else(|| GraphError::parse(lineno, "malformed z coordinate"))?;
            let symbol = line[31..line.len().min(34)].trim();
            if symbol.is_empty() {
                return Err(GraphError::parse(lineno, "missing element symbol"));
            }
            if !vocab.contains(symbol) {
                return Err(GraphError::parse(
                    lineno,
                    format!("unknown element '{symbol}'"),
                ));
            }
            atoms.push(Atom::new(symbol, [x, y, z]));
        }

        let mut bonds = Vec::with_capacity(n_bonds);
        for (k, &line) in lines[bond_start..bond_start + n_bonds].iter().enumerate() {
            let lineno = bond_start + k + 1;
            let i = fixed_usize(line, 0, 3)
                .ok_or_else(|| GraphError::parse(lineno, "malformed bond atom index"))?;
            let j = fixed_usize(line, 3, 6)
                .ok_or_else(|| GraphError::parse(lineno, "malformed bond atom index"))?;
            let code = fixed_usize(line, 6, 9)
                .ok_or_else(|| GraphError::parse(lineno, "malformed bond order"))?;
            if i == 0 || j == 0 || i > n_atoms || j > n_atoms {
                return Err(GraphError::parse(
                    lineno,
                    format!("bond index out of range: {i} {j}"),
                ));
            }
            let order = BondOrder::from_sdf_code(code as u32)
                .ok_or_else(|| GraphError::parse(lineno, format!("bond order code {code}")))?;
            bonds.push(Bond::new(i - 1, j - 1, order));
        }

        let mol = MolecularGraph::new(atoms, bonds)
            .map_err(|e| GraphError::parse(counts_idx + 1, e.to_string()))?;
        mols.push(mol);

        // Advance past properties and data items to the record terminator.
        pos = bond_start + n_bonds;
        let mut terminated = false;
        while pos < lines.len() {
            let l = lines[pos];
            pos += 1;
            if l.trim_end() == "$$$$" {
                terminated = true;
                break;
            }
        }
        if !terminated {
            // Last record may omit the terminator.
            break;
        }
    }

    if mols.is_empty() {
        return Err(GraphError::parse(1, "no records"));
    }
    Ok(mols)
}

/// Writes one molecule as a V2000 record, including the `$$$$` terminator.
pub fn write_sdf_record(g: &MolecularGraph, title: &str, out: &mut String) {
    out.push_str(title);
    out.push('\n');
    out.push_str("  rigidflow\n\n");
    out.push_str(&format!(
        "{:3}{:3}  0  0  0  0  0  0  0  0999 V2000\n",
        g.atoms.len(),
        g.bonds.len()
    ));
    for a in &g.atoms {
        out.push_str(&format!(
            "{:10.4}{:10.4}{:10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0\n",
            a.pos.x, a.pos.y, a.pos.z, a.element
        ));
    }
    for b in &g.bonds {
        out.push_str(&format!(
            "{:3}{:3}{:3}  0\n",
            b.i + 1,
            b.j + 1,
            b.order.sdf_code()
        ));
    }
    out.push_str("M  END\n$$$$\n");
}

/// Serialises molecules as a multi-record V2000 SDF.
pub fn write_sdf(mols: &[(String, &MolecularGraph)]) -> String {
    let mut out = String::new();
    for (title, g) in mols {
        write_sdf_record(g, title, &mut out);
    }
    out
}

fn fixed_f64(line: &str, from: usize, to: usize) -> Option<f64> {
    line.get(from..to.min(line.len()))?.trim().parse().ok()
}

fn fixed_usize(line: &str, from: usize, to: usize) -> Option<usize> {
    line.get(from..to.min(line.len()))?.trim().parse().ok()
}
