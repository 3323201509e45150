//! Small-graph utilities for test oracles: union-find connectivity and an
//! exhaustive enumeration of labeled graphs up to isomorphism (canonical
//! form by minimizing the edge bitmask over all vertex permutations — cheap
//! for n <= 5 where 5! = 120).

/// Connected components by union-find, each component sorted, components
/// ordered by smallest member.
pub fn connected_components_union_find(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let ra = find(parent.as_mut_slice(), a);
        let rb = find(parent.as_mut_slice(), b);
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut root_index = vec![usize::MAX; n];
    for v in 0..n {
        let r = find(parent.as_mut_slice(), v);
        if root_index[r] == usize::MAX {
            root_index[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[root_index[r]].push(v);
    }
    comps
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    // Index of unordered pair (i, j), i < j, in lexicographic order.
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut result = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &result {
            for v in 0..n {
                if !p.contains(&v) {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
        }
        result = next;
    }
    result
}

/// All simple graphs on exactly `n` labeled vertices, one representative per
/// isomorphism class, as edge lists. For n = 5 this yields the classic 34.
pub fn labeled_graphs_up_to_iso(n: usize) -> Vec<Vec<(usize, usize)>> {
    assert!(
        (1..=6).contains(&n),
        "enumeration is exponential; keep n small"
    );
    let n_pairs = n * (n - 1) / 2;
    let perms = permutations(n);
    let mut seen = std::collections::BTreeSet::new();
    let mut reps = Vec::new();
    for mask in 0u64..(1u64 << n_pairs) {
        let mut canon = u64::MAX;
        for perm in &perms {
            let mut remapped = 0u64;
            for i in 0..n {
                for j in i + 1..n {
                    if mask >> pair_index(n, i, j) & 1 == 1 {
                        let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
                        remapped |= 1 << pair_index(n, a, b);
                    }
                }
            }
            canon = canon.min(remapped);
        }
        if seen.insert(canon) {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if canon >> pair_index(n, i, j) & 1 == 1 {
                        edges.push((i, j));
                    }
                }
            }
            reps.push(edges);
        }
    }
    reps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_counts() {
        assert_eq!(
            connected_components_union_find(3, &[(0, 1), (1, 2)]).len(),
            1
        );
        assert_eq!(connected_components_union_find(5, &[]).len(), 5);
        assert_eq!(
            connected_components_union_find(4, &[(0, 1), (2, 3)]),
            vec![vec![0, 1], vec![2, 3]]
        );
    }

    #[test]
    fn iso_class_counts_match_oeis() {
        // Number of graphs on n unlabeled nodes: 1, 2, 4, 11, 34.
        assert_eq!(labeled_graphs_up_to_iso(1).len(), 1);
        assert_eq!(labeled_graphs_up_to_iso(2).len(), 2);
        assert_eq!(labeled_graphs_up_to_iso(3).len(), 4);
        assert_eq!(labeled_graphs_up_to_iso(4).len(), 11);
        assert_eq!(labeled_graphs_up_to_iso(5).len(), 34);
    }
}
