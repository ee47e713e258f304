use std::collections::BTreeSet;

use crate::scm::template::VarId;

/// Single-slice causal diagram: directed edges plus bidirected (latent
/// confounding) edges. Bidirected pairs are stored with the smaller id first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalDiagram {
    names: Vec<String>,
    directed: BTreeSet<(VarId, VarId)>,
    bidirected: BTreeSet<(VarId, VarId)>,
}

impl CausalDiagram {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        Self {
            names: names.into_iter().collect(),
            directed: BTreeSet::new(),
            bidirected: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.names.iter().position(|n| n == name).map(VarId)
    }

    pub fn add_directed(&mut self, from: VarId, to: VarId) {
        self.directed.insert((from, to));
    }

    pub fn add_bidirected(&mut self, a: VarId, b: VarId) {
        if a != b {
            self.bidirected.insert((a.min(b), a.max(b)));
        }
    }

    pub fn directed(&self) -> impl Iterator<Item = (VarId, VarId)> + '_ {
        self.directed.iter().copied()
    }

    pub fn bidirected(&self) -> impl Iterator<Item = (VarId, VarId)> + '_ {
        self.bidirected.iter().copied()
    }

    pub fn parents(&self, v: VarId) -> impl Iterator<Item = VarId> + '_ {
        self.directed.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }

    pub fn children(&self, v: VarId) -> impl Iterator<Item = VarId> + '_ {
        self.directed.iter().filter(move |e| e.0 == v).map(|e| e.1)
    }

    pub fn ancestors(&self, v: VarId) -> BTreeSet<VarId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for p in self.parents(x) {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// True if a directed path leads from `from` to `to` without visiting `avoid`.
    pub fn has_path_avoiding(&self, from: VarId, to: VarId, avoid: &BTreeSet<VarId>) -> bool {
        let mut seen = BTreeSet::from([from]);
        let mut stack = vec![from];
        while let Some(x) = stack.pop() {
            if x == to {
                return true;
            }
            for c in self.children(x) {
                if !avoid.contains(&c) && seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        false
    }

    /// Confounded component of `v` restricted to `within`.
    pub fn c_component(&self, v: VarId, within: &BTreeSet<VarId>) -> BTreeSet<VarId> {
        let mut comp = BTreeSet::from([v]);
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &(a, b) in &self.bidirected {
                let other = if a == x {
                    b
                } else if b == x {
                    a
                } else {
                    continue;
                };
                if within.contains(&other) && comp.insert(other) {
                    stack.push(other);
                }
            }
        }
        comp
    }

    /// Kahn order, lowest id first among ready nodes; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<VarId>> {
        let n = self.names.len();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.directed {
            indegree[to.0] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(VarId(v));
            for c in self.children(VarId(v)) {
                indegree[c.0] -= 1;
                if indegree[c.0] == 0 {
                    ready.insert(c.0);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bow() -> CausalDiagram {
        // Z -> X -> Y, X <-> Y
        let mut g = CausalDiagram::new(["Z", "X", "Y"].map(String::from));
        g.add_directed(VarId(0), VarId(1));
        g.add_directed(VarId(1), VarId(2));
        g.add_bidirected(VarId(2), VarId(1));
        g
    }

    #[test]
    fn ancestors_and_paths() {
        let g = bow();
        assert_eq!(g.ancestors(VarId(2)), BTreeSet::from([VarId(0), VarId(1)]));
        assert!(g.has_path_avoiding(VarId(0), VarId(2), &BTreeSet::new()));
        assert!(!g.has_path_avoiding(VarId(0), VarId(2), &BTreeSet::from([VarId(1)])));
    }

    #[test]
    fn c_components_follow_bidirected_edges() {
        let g = bow();
        let all: BTreeSet<_> = (0..3).map(VarId).collect();
        assert_eq!(g.c_component(VarId(2), &all), BTreeSet::from([VarId(1), VarId(2)]));
        assert_eq!(g.c_component(VarId(0), &all), BTreeSet::from([VarId(0)]));
        let prefix = BTreeSet::from([VarId(0), VarId(2)]);
        assert_eq!(g.c_component(VarId(2), &prefix), BTreeSet::from([VarId(2)]));
    }

    #[test]
    fn topological_order_detects_cycles() {
        let mut g = bow();
        assert_eq!(g.topological_order().unwrap(), vec![VarId(0), VarId(1), VarId(2)]);
        g.add_directed(VarId(2), VarId(0));
        assert!(g.topological_order().is_none());
    }
}
