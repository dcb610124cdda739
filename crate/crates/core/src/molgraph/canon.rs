use super::write::{write_smiles_rooted, NeighborOrder};
use super::MolGraph;

/// Canonical atom ranks: a permutation of `0..atom_count`.
///
/// Atoms start from an invariant tuple (degree, element, isotope, charge,
/// hydrogen count, aromatic flag, bracket flag). Ranks are refined from the
/// sorted (bond order, neighbor rank) lists until the partition is stable.
/// Remaining ties are broken by promoting the lowest-index atom of the
/// lowest tied class, then refinement resumes.
pub fn canonical_ranks(mol: &MolGraph) -> Vec<usize> {
    let n = mol.atom_count();
    let initial: Vec<_> = (0..n)
        .map(|i| {
            let a = &mol.atoms()[i];
            (
                mol.degree(i),
                a.element.atomic_number(),
                a.isotope.unwrap_or(0),
                a.charge,
                mol.hydrogen_count(i),
                a.aromatic,
                a.is_bracket(),
            )
        })
        .collect();
    let mut ranks = dense_ranks(&initial);
    loop {
        ranks = refine(mol, ranks);
        let classes = ranks.iter().max().map_or(0, |&r| r + 1);
        if classes == n {
            return ranks;
        }
        ranks = break_tie(&ranks);
    }
}

/// Canonical SMILES: DFS from the lowest-ranked atom of each component,
/// components ordered by their lowest rank, neighbors visited in rank order.
pub fn canonical_smiles(mol: &MolGraph) -> String {
    if mol.atom_count() == 0 {
        return String::new();
    }
    let ranks = canonical_ranks(mol);
    let mut roots: Vec<Option<usize>> = vec![None; mol.component_count()];
    for atom in 0..mol.atom_count() {
        let slot = &mut roots[mol.component_of(atom)];
        if slot.is_none_or(|r| ranks[atom] < ranks[r]) {
            *slot = Some(atom);
        }
    }
    let mut roots: Vec<usize> = roots.into_iter().flatten().collect();
    roots.sort_by_key(|&r| ranks[r]);
    write_smiles_rooted(mol, &roots, &NeighborOrder::by_rank(mol, &ranks))
}

fn dense_ranks<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    let mut current = 0;
    for w in 0..idx.len() {
        if w > 0 && keys[idx[w]] != keys[idx[w - 1]] {
            current += 1;
        }
        ranks[idx[w]] = current;
    }
    ranks
}

fn refine(mol: &MolGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = ranks.iter().max().map_or(0, |&r| r + 1);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut env: Vec<(usize, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(nb, b)| (ranks[nb], mol.bonds()[b].order.code()))
                    .collect();
                env.sort_unstable();
                (ranks[i], env)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = next.iter().max().map_or(0, |&r| r + 1);
        if next_classes == classes {
            return ranks;
        }
        classes = next_classes;
        ranks = next;
    }
}

fn break_tie(ranks: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; ranks.len()];
    for &r in ranks {
        counts[r] += 1;
    }
    let tied = counts.iter().position(|&c| c > 1).expect("a tied class exists");
    let chosen = ranks.iter().position(|&r| r == tied).unwrap();
    let keys: Vec<(usize, bool)> = ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, i != chosen))
        .collect();
    dense_ranks(&keys)
}
