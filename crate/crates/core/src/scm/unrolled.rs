use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scm::template::{
    validate_template, ExoId, Intervention, Lag, Parent, Regime, ScmTemplate, Value, VarId,
};

#[derive(Clone, Copy, Debug)]
enum Slot {
    Current(usize),
    Previous(usize),
    Exo(usize),
}

/// Dense lookup table over parent domain indices.
#[derive(Clone, Debug)]
struct Mechanism {
    slots: Vec<Slot>,
    strides: Vec<usize>,
    outputs: Vec<usize>,
}

#[derive(Clone, Debug)]
struct CompiledRegime {
    order: Vec<usize>,
    mechanisms: Vec<Mechanism>,
}

/// A validated template compiled to index-based lookup tables.
///
/// Immutable; share it behind an `Arc`.
#[derive(Debug)]
pub struct Scm {
    template: ScmTemplate,
    regimes: [CompiledRegime; 2],
    /// Cumulative PMF per exogenous variable, for sampling.
    exo_cdf: Vec<Vec<f64>>,
    /// Every joint exogenous assignment of one slice with non-zero probability.
    exo_support: Vec<(f64, Vec<usize>)>,
}

impl Scm {
    pub fn compile(template: ScmTemplate) -> Result<Arc<Scm>> {
        validate_template(&template).into_result()?;
        let regimes = [
            compile_regime(&template, Regime::Initial),
            compile_regime(&template, Regime::Transition),
        ];
        let exo_cdf = template
            .exogenous
            .iter()
            .map(|u| {
                u.pmf
                    .iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        let mut exo_support = vec![(1.0, Vec::new())];
        for u in &template.exogenous {
            exo_support = exo_support
                .into_iter()
                .flat_map(|(p, idx)| {
                    u.pmf.iter().enumerate().filter(|(_, &q)| q > 0.0).map(move |(k, &q)| {
                        let mut idx = idx.clone();
                        idx.push(k);
                        (p * q, idx)
                    })
                })
                .collect();
        }
        Ok(Arc::new(Scm {
            template,
            regimes,
            exo_cdf,
            exo_support,
        }))
    }

    pub fn template(&self) -> &ScmTemplate {
        &self.template
    }

    pub fn num_vars(&self) -> usize {
        self.template.variables.len()
    }

    pub(crate) fn exo_support(&self) -> &[(f64, Vec<usize>)] {
        &self.exo_support
    }

    pub(crate) fn domain_size(&self, var: usize) -> usize {
        self.template.variables[var].domain.len()
    }

    pub(crate) fn reward_value(&self, index: usize) -> Value {
        self.template.variables[self.template.reward.0].domain.value(index)
    }

    /// Evaluates one slice. `pinned[v]` holds the domain index of an intervened
    /// variable; `prev` is the previous slice's endogenous indices.
    pub(crate) fn eval_slice(
        &self,
        slice: usize,
        prev: Option<&[usize]>,
        exo: &[usize],
        pinned: &[Option<usize>],
        out: &mut [usize],
    ) {
        let regime = &self.regimes[usize::from(slice > 0)];
        for &v in &regime.order {
            if let Some(k) = pinned[v] {
                out[v] = k;
                continue;
            }
            let m = &regime.mechanisms[v];
            let mut row = 0;
            for (slot, stride) in m.slots.iter().zip(&m.strides) {
                let k = match *slot {
                    Slot::Current(p) => out[p],
                    Slot::Previous(p) => prev.expect("validated: no lag parents at slice 0")[p],
                    Slot::Exo(u) => exo[u],
                };
                row += k * stride;
            }
            out[v] = m.outputs[row];
        }
    }

    pub(crate) fn sample_exogenous<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        for (slot, cdf) in out.iter_mut().zip(&self.exo_cdf) {
            let r: f64 = rng.random();
            *slot = cdf.iter().position(|&c| r < c).unwrap_or(cdf.len() - 1);
        }
    }
}

fn compile_regime(t: &ScmTemplate, regime: Regime) -> CompiledRegime {
    let diagram = t.slice_diagram(regime);
    let order = diagram
        .topological_order()
        .expect("validated: acyclic")
        .into_iter()
        .map(|v| v.0)
        .collect();
    let mut mechanisms = Vec::with_capacity(t.variables.len());
    for v in 0..t.variables.len() {
        let f = t.function(regime, VarId(v)).expect("validated: one per variable");
        let sizes: Vec<usize> = f
            .parents
            .iter()
            .map(|p| match *p {
                Parent::Endogenous(w, _) => t.variables[w.0].domain.len(),
                Parent::Exogenous(u) => t.exogenous[u.0].domain.len(),
            })
            .collect();
        let mut strides = vec![1; sizes.len()];
        for k in (0..sizes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let total: usize = sizes.iter().product();
        let mut outputs = vec![0; total];
        let out_domain = &t.variables[v].domain;
        for (inputs, output) in &f.rows {
            let row: usize = f
                .parents
                .iter()
                .zip(inputs)
                .zip(&strides)
                .map(|((p, &x), s)| {
                    let d = match *p {
                        Parent::Endogenous(w, _) => &t.variables[w.0].domain,
                        Parent::Exogenous(u) => &t.exogenous[u.0].domain,
                    };
                    d.index_of(x).expect("validated domain") * s
                })
                .sum();
            outputs[row] = out_domain.index_of(*output).expect("validated output");
        }
        let slots = f
            .parents
            .iter()
            .map(|p| match *p {
                Parent::Endogenous(w, Lag::Current) => Slot::Current(w.0),
                Parent::Endogenous(w, Lag::Previous) => Slot::Previous(w.0),
                Parent::Exogenous(ExoId(u)) => Slot::Exo(u),
            })
            .collect();
        mechanisms.push(Mechanism {
            slots,
            strides,
            outputs,
        });
    }
    CompiledRegime { order, mechanisms }
}

/// Node of the unrolled graph: variable `var` at time slice `slice`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub var: VarId,
    pub slice: usize,
}

/// Edge list of an unrolled (and possibly mutilated) model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnrolledGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<(Node, Node)>,
    pub exogenous_edges: Vec<((ExoId, usize), Node)>,
}

impl UnrolledGraph {
    pub fn is_acyclic(&self) -> bool {
        let index = |n: &Node| self.nodes.iter().position(|m| m == n).expect("node exists");
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut children = vec![Vec::new(); self.nodes.len()];
        for (a, b) in &self.edges {
            children[index(a)].push(index(b));
            indegree[index(b)] += 1;
        }
        let mut stack: Vec<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == self.nodes.len()
    }

    pub fn incoming(&self, node: Node) -> usize {
        self.edges.iter().filter(|e| e.1 == node).count()
            + self.exogenous_edges.iter().filter(|e| e.1 == node).count()
    }
}

/// A model unrolled over a fixed number of slices with one intervention per slice.
#[derive(Clone, Debug)]
pub struct UnrolledScm {
    scm: Arc<Scm>,
    interventions: Vec<Intervention>,
    pinned: Vec<Vec<Option<usize>>>,
}

impl PartialEq for UnrolledScm {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.scm, &other.scm) && self.interventions == other.interventions
    }
}

/// Full assignment of one sampled run, as domain values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub exogenous: Vec<Vec<Value>>,
    pub endogenous: Vec<Vec<Value>>,
}

/// Validates `template` and unrolls it over `slices` slices, un-intervened.
pub fn unroll(template: &ScmTemplate, slices: usize) -> Result<UnrolledScm> {
    UnrolledScm::new(Scm::compile(template.clone())?, slices)
}

impl UnrolledScm {
    pub fn new(scm: Arc<Scm>, slices: usize) -> Result<Self> {
        if slices == 0 {
            return Err(Error::EmptyHorizon);
        }
        let n = scm.num_vars();
        Ok(Self {
            scm,
            interventions: vec![Intervention::empty(); slices],
            pinned: vec![vec![None; n]; slices],
        })
    }

    pub fn scm(&self) -> &Arc<Scm> {
        &self.scm
    }

    pub fn template(&self) -> &ScmTemplate {
        &self.scm.template
    }

    pub fn slices(&self) -> usize {
        self.interventions.len()
    }

    pub fn interventions(&self) -> &[Intervention] {
        &self.interventions
    }

    pub fn is_intervened(&self) -> bool {
        self.interventions.iter().any(|i| !i.is_empty())
    }

    pub(crate) fn pinned(&self, slice: usize) -> &[Option<usize>] {
        &self.pinned[slice]
    }

    /// Applies `do(intervention)` at `slice`: each target's mechanism becomes a
    /// constant and loses all incoming edges. Earlier assignments to the same
    /// targets at that slice are overwritten.
    pub fn mutilate(&self, slice: usize, intervention: &Intervention) -> Result<Self> {
        if slice >= self.slices() {
            return Err(Error::SliceOutOfRange {
                slice,
                horizon: self.slices(),
            });
        }
        intervention.check(self.template())?;
        let mut out = self.clone();
        out.interventions[slice] = out.interventions[slice].merged(intervention);
        for (var, value) in intervention.iter() {
            let k = self.template().variable(var).domain.index_of(value);
            out.pinned[slice][var.0] = k;
        }
        Ok(out)
    }

    pub fn graph(&self) -> UnrolledGraph {
        let t = self.template();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut exogenous_edges = Vec::new();
        for slice in 0..self.slices() {
            let regime = Regime::of_slice(slice);
            for v in 0..t.variables.len() {
                let node = Node {
                    var: VarId(v),
                    slice,
                };
                nodes.push(node);
                if self.pinned[slice][v].is_some() {
                    continue;
                }
                let f = t.function(regime, VarId(v)).expect("validated");
                for p in &f.parents {
                    match *p {
                        Parent::Endogenous(w, Lag::Current) => {
                            edges.push((Node { var: w, slice }, node))
                        }
                        Parent::Endogenous(w, Lag::Previous) => edges.push((
                            Node {
                                var: w,
                                slice: slice - 1,
                            },
                            node,
                        )),
                        Parent::Exogenous(u) => exogenous_edges.push(((u, slice), node)),
                    }
                }
            }
        }
        UnrolledGraph {
            nodes,
            edges,
            exogenous_edges,
        }
    }

    fn run_slices(&self, exo: &[Vec<usize>], out: &mut [Vec<usize>]) {
        for s in 0..self.slices() {
            let (before, rest) = out.split_at_mut(s);
            let prev = before.last().map(|p| p.as_slice());
            self.scm
                .eval_slice(s, prev, &exo[s], &self.pinned[s], &mut rest[0]);
        }
    }

    /// Deterministically evaluates every slice for the given exogenous values.
    pub fn evaluate(&self, exogenous: &[Vec<Value>]) -> Result<Vec<Vec<Value>>> {
        let t = self.template();
        if exogenous.len() != self.slices() {
            return Err(Error::SliceOutOfRange {
                slice: exogenous.len(),
                horizon: self.slices(),
            });
        }
        let mut exo_idx = Vec::with_capacity(exogenous.len());
        for row in exogenous {
            if row.len() != t.exogenous.len() {
                return Err(Error::Config(format!(
                    "expected {} exogenous values per slice, got {}",
                    t.exogenous.len(),
                    row.len()
                )));
            }
            let idx = row
                .iter()
                .zip(&t.exogenous)
                .map(|(&x, u)| {
                    u.domain.index_of(x).ok_or(Error::DomainViolation {
                        variable: u.name.clone(),
                        value: x,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            exo_idx.push(idx);
        }
        let mut out = vec![vec![0; t.variables.len()]; self.slices()];
        self.run_slices(&exo_idx, &mut out);
        Ok(self.to_values(&out))
    }

    fn to_values(&self, idx: &[Vec<usize>]) -> Vec<Vec<Value>> {
        let t = self.template();
        idx.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(v, &k)| t.variables[v].domain.value(k))
                    .collect()
            })
            .collect()
    }

    /// Draws exogenous values independently per slice, then evaluates the
    /// mechanisms in topological order.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let t = self.template();
        let mut exo = vec![vec![0; t.exogenous.len()]; self.slices()];
        for row in exo.iter_mut() {
            self.scm.sample_exogenous(rng, row);
        }
        let mut out = vec![vec![0; t.variables.len()]; self.slices()];
        self.run_slices(&exo, &mut out);
        let exogenous = exo
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&t.exogenous)
                    .map(|(&k, u)| u.domain.value(k))
                    .collect()
            })
            .collect();
        Trajectory {
            exogenous,
            endogenous: self.to_values(&out),
        }
    }

    /// Samples one run and returns the reward value at the last slice.
    pub(crate) fn sample_final_reward<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut SampleScratch,
    ) -> Value {
        let slices = self.slices();
        scratch.ensure(self);
        for s in 0..slices {
            self.scm.sample_exogenous(rng, &mut scratch.exo);
            let (prev, cur) = if s % 2 == 0 {
                (&scratch.b, &mut scratch.a)
            } else {
                (&scratch.a, &mut scratch.b)
            };
            let prev = (s > 0).then_some(prev.as_slice());
            self.scm
                .eval_slice(s, prev, &scratch.exo, &self.pinned[s], cur);
        }
        let last = if (slices - 1) % 2 == 0 { &scratch.a } else { &scratch.b };
        self.scm.reward_value(last[self.template().reward.0])
    }
}

/// Reusable buffers for repeated sampling.
#[derive(Debug, Default)]
pub struct SampleScratch {
    exo: Vec<usize>,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl SampleScratch {
    fn ensure(&mut self, scm: &UnrolledScm) {
        let t = scm.template();
        self.exo.resize(t.exogenous.len(), 0);
        self.a.resize(t.variables.len(), 0);
        self.b.resize(t.variables.len(), 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(t: &ScmTemplate, name: &str, slice: usize) -> Node {
        Node {
            var: t.var_id(name).unwrap(),
            slice,
        }
    }

    #[test]
    fn single_slice_has_no_lag_edges() {
        let t = toy::template();
        let g = unroll(&t, 1).unwrap().graph();
        assert_eq!(g.nodes.len(), 3);
        assert!(g.edges.iter().all(|(a, b)| a.slice == b.slice));
        assert!(g.edges.contains(&(node(&t, "Z", 0), node(&t, "X", 0))));
        assert!(g.edges.contains(&(node(&t, "X", 0), node(&t, "Y", 0))));
        assert!(g.is_acyclic());
    }

    #[test]
    fn three_slices_carry_lag_edges() {
        let t = toy::template();
        let g = unroll(&t, 3).unwrap().graph();
        assert_eq!(g.nodes.len(), 9);
        for s in 1..3 {
            for v in ["Z", "X", "Y"] {
                assert!(g.edges.contains(&(node(&t, v, s - 1), node(&t, v, s))), "{v}{s}");
            }
        }
        let lag: Vec<_> = g.edges.iter().filter(|(a, b)| a.slice != b.slice).collect();
        assert_eq!(lag.len(), 6);
        assert!(g.is_acyclic());
    }

    #[test]
    fn zero_slices_is_an_error() {
        assert!(matches!(unroll(&toy::template(), 0), Err(Error::EmptyHorizon)));
    }

    #[test]
    fn mutilation_severs_incoming_edges_only() {
        let t = toy::template();
        let base = unroll(&t, 1).unwrap();
        let m = base
            .mutilate(0, &Intervention::named(&t, &[("Z", 0)]).unwrap())
            .unwrap();
        let g = m.graph();
        assert_eq!(g.incoming(node(&t, "Z", 0)), 0);
        // X_0 keeps U_X, U_XY and Z_0.
        assert_eq!(g.incoming(node(&t, "X", 0)), 3);

        let both = base
            .mutilate(0, &Intervention::named(&t, &[("X", 1), ("Z", 1)]).unwrap())
            .unwrap();
        let g = both.graph();
        assert_eq!(g.incoming(node(&t, "X", 0)), 0);
        assert_eq!(g.incoming(node(&t, "Z", 0)), 0);
        assert_eq!(g.incoming(node(&t, "Y", 0)), 3);
    }

    #[test]
    fn empty_intervention_is_identity_and_mutilation_is_idempotent() {
        let t = toy::template();
        let base = unroll(&t, 2).unwrap();
        assert_eq!(base.mutilate(1, &Intervention::empty()).unwrap(), base);
        let iv = Intervention::named(&t, &[("X", 1)]).unwrap();
        let once = base.mutilate(1, &iv).unwrap();
        assert_eq!(once.mutilate(1, &iv).unwrap(), once);
        assert_ne!(once, base);
    }

    #[test]
    fn mutilate_checks_slice_and_domain() {
        let t = toy::template();
        let base = unroll(&t, 2).unwrap();
        assert!(matches!(
            base.mutilate(2, &Intervention::empty()),
            Err(Error::SliceOutOfRange { .. })
        ));
        let bad = Intervention::new([(t.var_id("X").unwrap(), 5)]).unwrap();
        assert!(matches!(
            base.mutilate(0, &bad),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn evaluates_hand_computed_slice_zero() {
        // U_Z=1, U_X=0, U_XY=1, U_Y=0: Z=1, X=0^1^1=0, Y=1^0^1^0=0.
        let t = toy::template();
        let scm = unroll(&t, 1).unwrap();
        let out = scm.evaluate(&[vec![1, 0, 1, 0]]).unwrap();
        assert_eq!(out, vec![vec![1, 0, 0]]);

        let z0 = scm
            .mutilate(0, &Intervention::named(&t, &[("Z", 0)]).unwrap())
            .unwrap();
        assert_eq!(z0.evaluate(&[vec![0, 0, 0, 0]]).unwrap(), vec![vec![0, 0, 1]]);
    }

    #[test]
    fn transition_tables_match_truth_tables() {
        // Slice-1 mechanisms against the boolean forms, over every input.
        let t = toy::template();
        let scm = unroll(&t, 2).unwrap();
        for bits in 0..(1u32 << 8) {
            let b = |k: u32| i64::from((bits >> k) & 1);
            let u0 = vec![b(0), b(1), b(2), b(3)];
            let u1 = vec![b(4), b(5), b(6), b(7)];
            let out = scm.evaluate(&[u0.clone(), u1.clone()]).unwrap();
            let (z0, x0, y0) = (out[0][0], out[0][1], out[0][2]);
            let z1 = u1[0] & z0;
            let x1 = u1[1] ^ u1[2] ^ z1 ^ x0;
            let y1 = 1 ^ u1[3] ^ u1[2] ^ (x1 & y0);
            assert_eq!(out[1], vec![z1, x1, y1]);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic_and_pins_interventions() {
        let t = toy::template();
        let scm = unroll(&t, 4)
            .unwrap()
            .mutilate(2, &Intervention::named(&t, &[("X", 1)]).unwrap())
            .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| scm.sample_trajectory(&mut rng)).collect::<Vec<_>>()
        };
        let a = draw(9);
        assert_eq!(a, draw(9));
        assert!(a.iter().all(|tr| tr.endogenous[2][1] == 1));
    }
}
