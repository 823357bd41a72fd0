//! Maximum bipartite matching (augmenting paths).

/// Computes a maximum matching of a bipartite graph with `left` vertices on
/// one side. `adj[u]` lists the right-side vertices adjacent to left vertex
/// `u`, in preference order. Returns, for each left vertex, its partner.
///
/// The result is deterministic for a given adjacency order.
pub fn max_bipartite_matching(left: usize, right: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    debug_assert_eq!(adj.len(), left);
    let mut match_left = vec![None; left];
    let mut match_right: Vec<Option<usize>> = vec![None; right];
    for u in 0..left {
        let mut seen = vec![false; right];
        augment(u, adj, &mut seen, &mut match_left, &mut match_right);
    }
    match_left
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    seen: &mut [bool],
    match_left: &mut [Option<usize>],
    match_right: &mut [Option<usize>],
) -> bool {
    for &v in &adj[u] {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        let free = match match_right[v] {
            None => true,
            Some(w) => augment(w, adj, seen, match_left, match_right),
        };
        if free {
            match_left[u] = Some(v);
            match_right[v] = Some(u);
            return true;
        }
    }
    false
}

/// True when every left vertex can be matched.
pub fn saturates_left(left: usize, right: usize, adj: &[Vec<usize>]) -> bool {
    if left > right {
        return false;
    }
    max_bipartite_matching(left, right, adj).iter().all(Option::is_some)
}
