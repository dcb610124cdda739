use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Atom, BondOrder, MolGraph};

/// The order in which the writer visits each atom's neighbors.
///
/// Each entry is a permutation of that atom's neighbor indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborOrder(Vec<Vec<usize>>);

impl NeighborOrder {
    /// Neighbors in bond creation order.
    pub fn natural(mol: &MolGraph) -> Self {
        NeighborOrder(
            (0..mol.atom_count())
                .map(|a| mol.neighbors(a).iter().map(|&(nb, _)| nb).collect())
                .collect(),
        )
    }

    /// Neighbors sorted by ascending rank.
    pub fn by_rank(mol: &MolGraph, ranks: &[usize]) -> Self {
        let mut order = Self::natural(mol);
        for list in &mut order.0 {
            list.sort_by_key(|&nb| ranks[nb]);
        }
        order
    }

    pub fn shuffled<R: Rng + ?Sized>(mol: &MolGraph, rng: &mut R) -> Self {
        let mut order = Self::natural(mol);
        for list in &mut order.0 {
            list.shuffle(rng);
        }
        order
    }

    /// Validates that every list is a permutation of the atom's neighbors.
    pub fn from_lists(mol: &MolGraph, lists: Vec<Vec<usize>>) -> Option<Self> {
        if lists.len() != mol.atom_count() {
            return None;
        }
        for (atom, list) in lists.iter().enumerate() {
            let mut given = list.clone();
            let mut expected: Vec<usize> = mol.neighbors(atom).iter().map(|&(nb, _)| nb).collect();
            given.sort_unstable();
            expected.sort_unstable();
            if given != expected {
                return None;
            }
        }
        Some(NeighborOrder(lists))
    }

    pub fn of(&self, atom: usize) -> &[usize] {
        &self.0[atom]
    }
}

/// Writes `mol` as SMILES, starting the DFS at `start_atom`.
///
/// Remaining components follow in order of their lowest atom index.
///
/// # Panics
/// If `start_atom` is out of range or `order` belongs to another graph.
pub fn write_smiles(mol: &MolGraph, start_atom: usize, order: &NeighborOrder) -> String {
    assert!(start_atom < mol.atom_count(), "start atom out of range");
    write_smiles_rooted(mol, &[start_atom], order)
}

/// Writes `mol` with one DFS per entry in `roots`, in that order. Atoms not
/// reached from any root are written afterwards as extra components.
pub fn write_smiles_rooted(mol: &MolGraph, roots: &[usize], order: &NeighborOrder) -> String {
    let n = mol.atom_count();
    assert_eq!(order.0.len(), n, "neighbor order does not match the graph");
    let mut all_roots: Vec<usize> = roots.to_vec();
    all_roots.extend(0..n);

    let plan = plan_traversal(mol, &all_roots, order);

    let mut out = String::new();
    let mut ring_digit: Vec<Option<usize>> = vec![None; mol.bond_count()];
    let mut digit_in_use: Vec<bool> = Vec::new();
    for (i, &root) in plan.roots.iter().enumerate() {
        if i > 0 {
            out.push('.');
        }
        write_component(mol, &plan, root, &mut out, &mut ring_digit, &mut digit_in_use);
    }
    out
}

struct Plan {
    roots: Vec<usize>,
    /// Tree children as (child, bond index), in visiting order.
    children: Vec<Vec<(usize, usize)>>,
    /// Ring-closure bonds per atom as (other atom, bond index), in neighbor order.
    ring_bonds: Vec<Vec<(usize, usize)>>,
}

fn plan_traversal(mol: &MolGraph, candidate_roots: &[usize], order: &NeighborOrder) -> Plan {
    let n = mol.atom_count();
    let mut visited = vec![false; n];
    let mut is_tree = vec![false; mol.bond_count()];
    let mut children = vec![Vec::new(); n];
    let mut roots = Vec::new();

    // (atom, bond to parent, next neighbor position)
    let mut stack: Vec<(usize, Option<usize>, usize)> = Vec::new();
    for &root in candidate_roots {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        stack.push((root, None, 0));
        while let Some(frame) = stack.last_mut() {
            let (atom, parent_bond, next) = *frame;
            let list = order.of(atom);
            if next == list.len() {
                stack.pop();
                continue;
            }
            frame.2 += 1;
            let nb = list[next];
            let bond = bond_index(mol, atom, nb);
            if Some(bond) == parent_bond || visited[nb] {
                continue;
            }
            visited[nb] = true;
            is_tree[bond] = true;
            children[atom].push((nb, bond));
            stack.push((nb, Some(bond), 0));
        }
    }

    let ring_bonds = (0..n)
        .map(|atom| {
            order
                .of(atom)
                .iter()
                .map(|&nb| (nb, bond_index(mol, atom, nb)))
                .filter(|&(_, bond)| !is_tree[bond])
                .collect()
        })
        .collect();

    Plan {
        roots,
        children,
        ring_bonds,
    }
}

fn bond_index(mol: &MolGraph, a: usize, b: usize) -> usize {
    mol.neighbors(a)
        .iter()
        .find(|&&(nb, _)| nb == b)
        .map(|&(_, idx)| idx)
        .expect("neighbor order names a non-neighbor")
}

enum Step {
    Atom(usize, Option<usize>),
    Open,
    Close,
}

fn write_component(
    mol: &MolGraph,
    plan: &Plan,
    root: usize,
    out: &mut String,
    ring_digit: &mut [Option<usize>],
    digit_in_use: &mut Vec<bool>,
) {
    let mut steps = vec![Step::Atom(root, None)];
    let mut freed = Vec::new();
    while let Some(step) = steps.pop() {
        let (atom, via) = match step {
            Step::Open => {
                out.push('(');
                continue;
            }
            Step::Close => {
                out.push(')');
                continue;
            }
            Step::Atom(atom, via) => (atom, via),
        };
        let atoms = mol.atoms();
        if let Some(bond) = via {
            let b = &mol.bonds()[bond];
            out.push_str(bond_symbol(b.order, &atoms[b.a], &atoms[b.b]));
        }
        write_atom(&atoms[atom], out);

        for &(_, bond) in &plan.ring_bonds[atom] {
            match ring_digit[bond] {
                Some(d) => {
                    push_ring_number(out, d);
                    freed.push(d);
                }
                None => {
                    let d = (1..)
                        .find(|&d| !digit_in_use.get(d).copied().unwrap_or(false))
                        .unwrap();
                    if digit_in_use.len() <= d {
                        digit_in_use.resize(d + 1, false);
                    }
                    digit_in_use[d] = true;
                    ring_digit[bond] = Some(d);
                    let b = &mol.bonds()[bond];
                    out.push_str(bond_symbol(b.order, &atoms[b.a], &atoms[b.b]));
                    push_ring_number(out, d);
                }
            }
        }
        for d in freed.drain(..) {
            digit_in_use[d] = false;
        }

        let kids = &plan.children[atom];
        if let Some((&(last, last_bond), rest)) = kids.split_last() {
            steps.push(Step::Atom(last, Some(last_bond)));
            for &(child, bond) in rest.iter().rev() {
                steps.push(Step::Close);
                steps.push(Step::Atom(child, Some(bond)));
                steps.push(Step::Open);
            }
        }
    }
}

fn push_ring_number(out: &mut String, d: usize) {
    match d {
        1..=9 => {
            let _ = write!(out, "{d}");
        }
        10..=99 => {
            let _ = write!(out, "%{d}");
        }
        _ => {
            let _ = write!(out, "%({d})");
        }
    }
}

fn bond_symbol(order: BondOrder, a: &Atom, b: &Atom) -> &'static str {
    let both_aromatic = a.aromatic && b.aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

pub(super) fn write_atom(atom: &Atom, out: &mut String) {
    let symbol = atom.element.symbol();
    let Some(h) = atom.explicit_h else {
        if atom.aromatic {
            out.push_str(&symbol.to_ascii_lowercase());
        } else {
            out.push_str(symbol);
        }
        return;
    };
    out.push('[');
    if let Some(iso) = atom.isotope {
        let _ = write!(out, "{iso}");
    }
    if atom.aromatic {
        out.push_str(&symbol.to_ascii_lowercase());
    } else {
        out.push_str(symbol);
    }
    match h {
        0 => {}
        1 => out.push('H'),
        _ => {
            let _ = write!(out, "H{h}");
        }
    }
    match atom.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => {
            let _ = write!(out, "+{c}");
        }
        c => {
            let _ = write!(out, "-{}", -c);
        }
    }
    out.push(']');
}
