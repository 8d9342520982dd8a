//! Qualitative path queries on the support graph of a concrete model.

use std::collections::VecDeque;

use crate::model::{Choice, StateSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportGraph {
    /// Sorted, deduplicated successors per state.
    succ: Vec<Vec<usize>>,
    /// (from, action, to) for every positive-probability entry.
    labeled: Vec<(usize, usize, usize)>,
}

impl SupportGraph {
    pub fn from_choices<P>(choices: &[Vec<Choice<P>>]) -> Self {
        let mut succ = vec![Vec::new(); choices.len()];
        let mut labeled = Vec::new();
        for (s, cs) in choices.iter().enumerate() {
            for c in cs {
                for (t, _) in &c.succ {
                    succ[s].push(*t);
                    labeled.push((s, c.action, *t));
                }
            }
            succ[s].sort_unstable();
            succ[s].dedup();
        }
        Self { succ, labeled }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut succ = vec![Vec::new(); n];
        for &(s, t) in edges {
            succ[s].push(t);
        }
        for v in &mut succ {
            v.sort_unstable();
            v.dedup();
        }
        let labeled = edges.iter().map(|&(s, t)| (s, 0, t)).collect();
        Self { succ, labeled }
    }

    pub fn num_states(&self) -> usize {
        self.succ.len()
    }

    pub fn successors(&self, s: usize) -> &[usize] {
        &self.succ[s]
    }

    pub fn has_edge(&self, s: usize, t: usize) -> bool {
        self.succ[s].binary_search(&t).is_ok()
    }

    pub fn labeled_edges(&self) -> &[(usize, usize, usize)] {
        &self.labeled
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(s, ts)| ts.iter().map(move |&t| (s, t)))
    }

    /// States `s` for which some path `from = x0 x1 ... xk = s` has every
    /// `x0..x(k-1)` outside `avoid` (the until formula `!avoid U s`).
    /// States of `avoid` are reported when hit but not expanded; if `from`
    /// itself lies in `avoid`, only `from` is reported.
    pub fn reachable_avoiding(&self, from: usize, avoid: &StateSet) -> StateSet {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(s) = queue.pop_front() {
            if avoid.contains(&s) {
                continue;
            }
            for &t in &self.succ[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Nodes reachable from `from` in the graph with `avoid` removed.
    fn forward_within(&self, from: &[usize], avoid: &StateSet) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::new();
        for &f in from {
            if !avoid.contains(&f) && !seen[f] {
                seen[f] = true;
                queue.push_back(f);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &t in &self.succ[s] {
                if !seen[t] && !avoid.contains(&t) {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// Whether a path from `from` visits some state of `via` and then some
    /// state of `target`, never touching `avoid`.
    pub fn exists_path_via(
        &self,
        from: usize,
        via: &StateSet,
        target: &StateSet,
        avoid: &StateSet,
    ) -> bool {
        let reach = self.forward_within(&[from], avoid);
        let hit: Vec<usize> = via.iter().copied().filter(|&v| reach[v]).collect();
        if hit.is_empty() {
            return false;
        }
        let reach = self.forward_within(&hit, avoid);
        target.iter().any(|&t| reach[t])
    }

    /// States from which some state of `target` is reachable.
    pub fn backward_reachable(&self, target: &StateSet) -> Vec<bool> {
        let mut pred = vec![Vec::new(); self.num_states()];
        for (s, t) in self.edges() {
            pred[t].push(s);
        }
        let mut seen = vec![false; self.num_states()];
        let mut queue: VecDeque<usize> = target.iter().copied().collect();
        for &t in target {
            seen[t] = true;
        }
        while let Some(s) = queue.pop_front() {
            for &p in &pred[s] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[usize]) -> StateSet {
        xs.iter().copied().collect()
    }

    // 0 -> 1 -> 2 -> 3, 0 -> 4 -> 3
    fn diamond() -> SupportGraph {
        SupportGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (0, 4), (4, 3)])
    }

    #[test]
    fn plain_reachability() {
        let g = diamond();
        assert_eq!(g.reachable_avoiding(0, &set(&[])), set(&[0, 1, 2, 3, 4]));
        assert_eq!(g.reachable_avoiding(2, &set(&[])), set(&[2, 3]));
    }

    #[test]
    fn until_semantics() {
        let g = diamond();
        assert_eq!(g.reachable_avoiding(0, &set(&[1, 4])), set(&[0, 1, 4]));
        assert_eq!(g.reachable_avoiding(0, &set(&[0])), set(&[0]));
    }

    #[test]
    fn path_via() {
        let g = diamond();
        assert!(g.exists_path_via(0, &set(&[0]), &set(&[3]), &set(&[])));
        assert!(!g.exists_path_via(0, &set(&[1]), &set(&[3]), &set(&[1])));
        assert!(g.exists_path_via(0, &set(&[1]), &set(&[3]), &set(&[4])));
        assert!(!g.exists_path_via(0, &set(&[1]), &set(&[3]), &set(&[2])));
        assert!(!g.exists_path_via(0, &set(&[1]), &set(&[4]), &set(&[])));
    }

    fn brute_via(g: &SupportGraph, from: usize, via: &StateSet, target: &StateSet, avoid: &StateSet) -> bool {
        // walks of length < 2n cover any shortest via-then-target witness
        let n = g.num_states();
        if avoid.contains(&from) {
            return false;
        }
        let mut frontier: Vec<(usize, bool)> = vec![(from, via.contains(&from))];
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..=2 * n {
            let mut next = Vec::new();
            for (s, passed) in frontier {
                if passed && target.contains(&s) {
                    return true;
                }
                if !seen.insert((s, passed)) {
                    continue;
                }
                for &t in g.successors(s) {
                    if !avoid.contains(&t) {
                        next.push((t, passed || via.contains(&t)));
                    }
                }
            }
            frontier = next;
        }
        false
    }

    proptest! {
        #[test]
        fn via_matches_brute_force(
            edges in prop::collection::vec((0usize..7, 0usize..7), 0..20),
            via in prop::collection::btree_set(0usize..7, 0..3),
            target in prop::collection::btree_set(0usize..7, 0..3),
            avoid in prop::collection::btree_set(0usize..7, 0..3),
        ) {
            let g = SupportGraph::from_edges(7, &edges);
            prop_assert_eq!(g.exists_path_via(0, &via, &target, &avoid), brute_via(&g, 0, &via, &target, &avoid));
        }

        #[test]
        fn avoid_empty_is_closure(edges in prop::collection::vec((0usize..6, 0usize..6), 0..15)) {
            let g = SupportGraph::from_edges(6, &edges);
            let r = g.reachable_avoiding(0, &StateSet::new());
            for (s, t) in g.edges() {
                if r.contains(&s) {
                    prop_assert!(r.contains(&t));
                }
            }
        }
    }
}
