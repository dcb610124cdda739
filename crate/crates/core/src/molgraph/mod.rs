//! Molecular graphs parsed from SMILES.
//!
//! The parser covers the organic subset, bracket atoms (isotope, H count,
//! charge, atom class), ring closures including `%nn`, branches, dot
//! separated components and lowercase aromatic atoms. Stereo markers are
//! accepted and dropped; [`MolGraph::had_stereo`] records that they were
//! present. Aromatic flags are kept exactly as written, so an aromatic and
//! a Kekulé writing of the same ring are different graphs.

mod canon;
mod element;
mod parse;
mod variants;
mod write;

pub use canon::{canonical_ranks, canonical_smiles};
pub use element::Element;
pub use parse::parse_smiles;
pub use variants::{enumerate_variants, VariantList};
pub use write::{write_smiles, write_smiles_rooted, NeighborOrder};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("ring closure error at offset {position}: {message}")]
    RingClosure { position: usize, message: String },
    #[error("valence error: atom {atom} ({element}) has bond order sum {bond_sum}, above its maximum valence")]
    Valence {
        atom: usize,
        element: Element,
        bond_sum: u8,
    },
    #[error("invalid bond between atoms {a} and {b}: {message}")]
    InvalidBond { a: usize, b: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum. Aromatic bonds count as one; the
    /// extra pi electron is accounted for per atom in [`MolGraph`].
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable small-integer code used by hashing and ranking.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    /// Hydrogen count written inside brackets. `Some` iff the atom was bracketed.
    pub explicit_h: Option<u8>,
    pub aromatic: bool,
    pub isotope: Option<u16>,
}

impl Atom {
    pub fn organic(element: Element, aromatic: bool) -> Atom {
        Atom {
            element,
            charge: 0,
            explicit_h: None,
            aromatic,
            isotope: None,
        }
    }

    pub fn is_bracket(&self) -> bool {
        self.explicit_h.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// An immutable molecular graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source_text: String,
    had_stereo: bool,
    /// (neighbor, bond index) per atom, in bond creation order.
    adjacency: Vec<Vec<(usize, usize)>>,
    hydrogens: Vec<u8>,
    components: Vec<usize>,
    component_count: usize,
}

impl MolGraph {
    /// Builds a graph from atoms and bonds, checking bond sanity and the
    /// organic-subset valence rules.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_text: impl Into<String>,
        had_stereo: bool,
    ) -> Result<MolGraph, SmilesError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (idx, bond) in bonds.iter().enumerate() {
            if bond.a >= n || bond.b >= n {
                return Err(SmilesError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    message: "endpoint out of range".into(),
                });
            }
            if bond.a == bond.b {
                return Err(SmilesError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    message: "bond to itself".into(),
                });
            }
            if adjacency[bond.a].iter().any(|&(nb, _)| nb == bond.b) {
                return Err(SmilesError::InvalidBond {
                    a: bond.a,
                    b: bond.b,
                    message: "duplicate bond".into(),
                });
            }
            adjacency[bond.a].push((bond.b, idx));
            adjacency[bond.b].push((bond.a, idx));
        }

        let mut hydrogens = Vec::with_capacity(n);
        for (i, atom) in atoms.iter().enumerate() {
            let bond_sum: u8 = adjacency[i]
                .iter()
                .map(|&(_, b)| bonds[b].order.valence_contribution())
                .sum();
            let h = match atom.explicit_h {
                Some(h) => h,
                None => implicit_hydrogens(atom, bond_sum).ok_or(SmilesError::Valence {
                    atom: i,
                    element: atom.element,
                    bond_sum,
                })?,
            };
            hydrogens.push(h);
        }

        let (components, component_count) = connected_components(n, &adjacency);
        Ok(MolGraph {
            atoms,
            bonds,
            source_text: source_text.into(),
            had_stereo,
            adjacency,
            hydrogens,
            components,
            component_count,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    /// True when stereo markers were present in the source and discarded.
    pub fn had_stereo(&self) -> bool {
        self.had_stereo
    }

    /// `(neighbor, bond index)` pairs of `atom`.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    /// Total hydrogens on `atom`: the bracket count, or the implicit count
    /// derived from the valence table.
    pub fn hydrogen_count(&self, atom: usize) -> u8 {
        self.hydrogens[atom]
    }

    /// Implicit hydrogens; zero for bracket atoms.
    pub fn implicit_hydrogens(&self, atom: usize) -> u8 {
        if self.atoms[atom].is_bracket() {
            0
        } else {
            self.hydrogens[atom]
        }
    }

    pub fn component_of(&self, atom: usize) -> usize {
        self.components[atom]
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn aromatic_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.aromatic).count()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, idx)| &self.bonds[idx])
    }
}

fn implicit_hydrogens(atom: &Atom, bond_sum: u8) -> Option<u8> {
    let valences = atom.element.organic_valences()?;
    let max = *valences.last()?;
    if bond_sum > max {
        return None;
    }
    let target = valences.iter().copied().find(|&v| v >= bond_sum)?;
    // Aromatic atoms give one valence to the pi system when they can spare
    // it; pyrrole-type n, furan o and thiophene s end up with none.
    let used = if atom.aromatic { bond_sum + 1 } else { bond_sum };
    Some(target.saturating_sub(used))
}

fn connected_components(n: usize, adjacency: &[Vec<(usize, usize)>]) -> (Vec<usize>, usize) {
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for &(nb, _) in &adjacency[a] {
                if comp[nb] == usize::MAX {
                    comp[nb] = count;
                    stack.push(nb);
                }
            }
        }
        count += 1;
    }
    (comp, count)
}
