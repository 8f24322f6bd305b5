//! Minimum-degree fill-reducing ordering on an explicit elimination graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Returns `perm` with `perm[new] = old`. Ties go to the lowest node index,
/// so the ordering is deterministic.
pub(crate) fn minimum_degree(n: usize, row_ptr: &[usize], cols: &[usize]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            cols[row_ptr[i]..row_ptr[i + 1]]
                .iter()
                .copied()
                .filter(|&j| j != i)
                .collect()
        })
        .collect();
    // patterns are symmetric by construction, but make sure
    for i in 0..n {
        for p in 0..adj[i].len() {
            let j = adj[i][p];
            if adj[j].binary_search(&i).is_err() {
                let pos = adj[j].binary_search(&i).unwrap_err();
                adj[j].insert(pos, i);
            }
        }
    }

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] := (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    debug_assert_eq!(perm.len(), n);
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation_and_prefers_leaves() {
        // star graph: center 0 connected to 1..5; leaves go first
        let n = 6;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        cols.extend(0..6);
        row_ptr.push(cols.len());
        for i in 1..n {
            cols.extend([0, i]);
            row_ptr.push(cols.len());
        }
        let perm = minimum_degree(n, &row_ptr, &cols);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        assert_eq!(perm[0], 1);
        assert!(perm.iter().position(|&v| v == 0).unwrap() >= 4);
    }
}
