//! Arm catalogues: the full intervention powerset, minimal intervention sets,
//! and user-configured POMIS checked against MIS membership.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{exact_reward_table, Window};
use crate::scm::{unroll, CausalDiagram, Intervention, Regime, Scm, ScmTemplate, Value, VarId};

/// A set of intervened variables, without values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterventionSet(BTreeSet<VarId>);

impl InterventionSet {
    pub fn new(vars: impl IntoIterator<Item = VarId>) -> Self {
        Self(vars.into_iter().collect())
    }

    pub fn named(template: &ScmTemplate, names: &[&str]) -> Result<Self> {
        let mut set = BTreeSet::new();
        for name in names {
            let v = template.var_id(name)?;
            if v == template.reward {
                return Err(Error::RewardIntervened(name.to_string()));
            }
            if !set.insert(v) {
                return Err(Error::DuplicateTarget(name.to_string()));
            }
        }
        Ok(Self(set))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.contains(&v)
    }

    /// `{X, Z}` using diagram or template names.
    pub fn describe(&self, names: &[String]) -> String {
        let parts: Vec<&str> = self.0.iter().map(|v| names[v.0].as_str()).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmMode {
    All,
    Mis,
    #[default]
    Pomis,
}

impl std::fmt::Display for ArmMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ArmMode::All => "all",
            ArmMode::Mis => "mis",
            ArmMode::Pomis => "pomis",
        })
    }
}

impl std::str::FromStr for ArmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ArmMode::All),
            "mis" => Ok(ArmMode::Mis),
            "pomis" => Ok(ArmMode::Pomis),
            _ => Err(Error::Config(format!("unknown arm mode `{s}` (all|mis|pomis)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arm {
    pub id: usize,
    pub intervention: Intervention,
    /// The arm's variable set is a configured POMIS.
    pub pomis: bool,
}

impl Arm {
    pub fn set(&self) -> InterventionSet {
        InterventionSet(self.intervention.targets())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArmTable {
    mode: ArmMode,
    order: Vec<VarId>,
    arms: Vec<Arm>,
}

impl ArmTable {
    pub fn empty(mode: ArmMode, order: Vec<VarId>) -> Self {
        Self {
            mode,
            order,
            arms: Vec::new(),
        }
    }

    pub fn mode(&self) -> ArmMode {
        self.mode
    }

    /// Variable order used for enumeration and display.
    pub fn order(&self) -> &[VarId] {
        &self.order
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Arm> {
        self.arms.get(id)
    }

    pub fn find(&self, intervention: &Intervention) -> Option<usize> {
        self.arms.iter().position(|a| &a.intervention == intervention)
    }

    /// Marks arms whose variable set appears in `sets`.
    pub fn with_pomis_flags(mut self, sets: &[InterventionSet]) -> Self {
        for arm in &mut self.arms {
            arm.pomis = sets.contains(&arm.set());
        }
        self
    }

    fn position(&self, v: VarId) -> usize {
        self.order
            .iter()
            .position(|&o| o == v)
            .unwrap_or(self.order.len() + v.0)
    }

    fn sorted_vars(&self, set: &InterventionSet) -> Vec<VarId> {
        let mut vars: Vec<VarId> = set.vars().collect();
        vars.sort_by_key(|&v| self.position(v));
        vars
    }

    /// Adds one arm per value combination of `set`, first variable most significant.
    fn push_set(&mut self, template: &ScmTemplate, set: &InterventionSet, pomis: bool) {
        let vars = self.sorted_vars(set);
        let domains: Vec<_> = vars.iter().map(|&v| &template.variable(v).domain).collect();
        crate::scm::for_each_assignment(&domains, |values| {
            let intervention =
                Intervention::new(vars.iter().copied().zip(values.iter().copied()))
                    .expect("distinct variables");
            let id = self.arms.len();
            self.arms.push(Arm {
                id,
                intervention,
                pomis,
            });
            Ok(())
        })
        .expect("closure is infallible");
    }

    /// Variables and values of an arm in table order.
    pub fn columns(&self, arm: &Arm) -> (Vec<VarId>, Vec<Value>) {
        let vars = self.sorted_vars(&arm.set());
        let values = vars
            .iter()
            .map(|&v| arm.intervention.get(v).expect("target"))
            .collect();
        (vars, values)
    }

    /// CSV `arm_id,variables,values,pomis_flag`; multi-variable cells are `;`-joined.
    pub fn write_csv<W: Write>(&self, template: &ScmTemplate, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["arm_id", "variables", "values", "pomis_flag"])?;
        for arm in &self.arms {
            let (vars, values) = self.columns(arm);
            let names: Vec<&str> = vars.iter().map(|&v| template.name(v)).collect();
            let values: Vec<String> = values.iter().map(|x| x.to_string()).collect();
            out.write_record([
                arm.id.to_string(),
                names.join(";"),
                values.join(";"),
                u8::from(arm.pomis).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct ArmRow {
    arm_id: usize,
    variables: String,
    values: String,
    pomis_flag: u8,
}

/// Parses the arm CSV back into arms, checking ids are dense and values valid.
pub fn read_arms_csv<R: Read>(r: R, template: &ScmTemplate) -> Result<Vec<Arm>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut arms = Vec::new();
    for row in rdr.deserialize() {
        let row: ArmRow = row?;
        if row.arm_id != arms.len() {
            return Err(Error::Config(format!(
                "arm ids must be dense from 0, found {} at row {}",
                row.arm_id,
                arms.len()
            )));
        }
        let split = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(';').map(str::to_string).collect()
            }
        };
        let names = split(&row.variables);
        let values = split(&row.values);
        if names.len() != values.len() {
            return Err(Error::Config(format!("arm {}: variables and values differ in length", row.arm_id)));
        }
        let mut pairs = Vec::with_capacity(names.len());
        for (n, x) in names.iter().zip(&values) {
            let x: Value = x
                .parse()
                .map_err(|_| Error::Config(format!("arm {}: bad value `{x}`", row.arm_id)))?;
            pairs.push((n.as_str(), x));
        }
        arms.push(Arm {
            id: row.arm_id,
            intervention: Intervention::named(template, &pairs)?,
            pomis: row.pomis_flag != 0,
        });
    }
    Ok(arms)
}

fn check_order(template: &ScmTemplate, order: &[VarId]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in order {
        let var = template
            .variables
            .get(v.0)
            .ok_or_else(|| Error::UnknownVariable(format!("#{}", v.0)))?;
        if v == template.reward {
            return Err(Error::RewardIntervened(var.name.clone()));
        }
        if !seen.insert(v) {
            return Err(Error::DuplicateTarget(var.name.clone()));
        }
    }
    Ok(())
}

/// Every k-subset of `items` in lexicographic position order, for k = 0..=n.
fn subsets_by_size<T: Copy>(items: &[T]) -> Vec<Vec<T>> {
    fn rec<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 0..=items.len() {
        rec(items, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// All interventions over `order`: do(∅) first, then subsets by size, each
/// expanded over its value combinations.
pub fn enumerate_all_arms(template: &ScmTemplate, order: &[VarId]) -> Result<ArmTable> {
    check_order(template, order)?;
    let mut table = ArmTable::empty(ArmMode::All, order.to_vec());
    for subset in subsets_by_size(order) {
        table.push_set(template, &InterventionSet::new(subset), false);
    }
    Ok(table)
}

/// Minimal intervention sets: subsets of the reward's ancestors in which every
/// member keeps a directed path to the reward that avoids the other members.
pub fn enumerate_mis(diagram: &CausalDiagram, reward: VarId) -> Result<Vec<InterventionSet>> {
    if reward.0 >= diagram.len() {
        return Err(Error::MissingReward(format!("#{}", reward.0)));
    }
    let ancestors: Vec<VarId> = diagram.ancestors(reward).into_iter().collect();
    Ok(subsets_by_size(&ancestors)
        .into_iter()
        .map(InterventionSet::new)
        .filter(|s| {
            s.vars().all(|x| {
                let others: BTreeSet<VarId> = s.vars().filter(|&o| o != x).collect();
                diagram.has_path_avoiding(x, reward, &others)
            })
        })
        .collect())
}

/// Arm table over the configured sets, each of which must be a MIS of the
/// slice-0 diagram. do(∅) appears only if the empty set is configured.
pub fn pomis_from_config(
    template: &ScmTemplate,
    sets: &[InterventionSet],
    order: &[VarId],
) -> Result<ArmTable> {
    check_order(template, order)?;
    let mis = enumerate_mis(&template.slice_diagram(Regime::Initial), template.reward)?;
    pomis_arms(template, sets, &mis, order)
}

pub fn pomis_arms(
    template: &ScmTemplate,
    sets: &[InterventionSet],
    mis: &[InterventionSet],
    order: &[VarId],
) -> Result<ArmTable> {
    let names: Vec<String> = template.variables.iter().map(|v| v.name.clone()).collect();
    let mut table = ArmTable::empty(ArmMode::Pomis, order.to_vec());
    let mut seen = BTreeSet::new();
    for set in sets {
        if !mis.contains(set) {
            return Err(Error::NotMis(set.describe(&names).trim_matches(['{', '}']).to_string()));
        }
        if seen.insert(set.clone()) {
            table.push_set(template, set, true);
        }
    }
    Ok(table)
}

/// Arm table over every MIS of the slice-0 diagram.
pub fn mis_arms(template: &ScmTemplate, order: &[VarId]) -> Result<ArmTable> {
    check_order(template, order)?;
    let mut table = ArmTable::empty(ArmMode::Mis, order.to_vec());
    let mut mis = enumerate_mis(&template.slice_diagram(Regime::Initial), template.reward)?;
    mis.sort_by_key(|s| {
        let mut pos: Vec<usize> = s.vars().map(|v| table.position(v)).collect();
        pos.sort_unstable();
        (s.len(), pos)
    });
    for set in &mis {
        table.push_set(template, set, false);
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvarianceReport {
    /// MIS of each slice's subgraph, slice 0 first.
    pub per_slice: Vec<Vec<InterventionSet>>,
    /// Slices whose MIS differ from slice 0.
    pub mismatched: Vec<usize>,
}

impl InvarianceReport {
    pub fn invariant(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Compares the MIS of every slice's induced subgraph against slice 0. Lag
/// parents enter a slice only as fixed context, so they contribute no edges.
pub fn check_mis_time_invariance(template: &ScmTemplate, slices: usize) -> Result<InvarianceReport> {
    let graph = unroll(template, slices)?.graph();
    let names: Vec<String> = template.variables.iter().map(|v| v.name.clone()).collect();
    let mut per_slice = Vec::with_capacity(slices);
    for s in 0..slices {
        let mut diagram = CausalDiagram::new(names.iter().cloned());
        for (a, b) in &graph.edges {
            if a.slice == s && b.slice == s {
                diagram.add_directed(a.var, b.var);
            }
        }
        for (i, ((u, us), a)) in graph.exogenous_edges.iter().enumerate() {
            if *us != s {
                continue;
            }
            for ((w, ws), b) in &graph.exogenous_edges[i + 1..] {
                if w == u && ws == us {
                    diagram.add_bidirected(a.var, b.var);
                }
            }
        }
        per_slice.push(enumerate_mis(&diagram, template.reward)?);
    }
    let mismatched = (1..slices).filter(|&s| per_slice[s] != per_slice[0]).collect();
    Ok(InvarianceReport {
        per_slice,
        mismatched,
    })
}

/// Best arm under the exact conditional reward table, lowest id on ties.
pub fn empirical_optimal_arm(
    scm: &Arc<Scm>,
    arms: &ArmTable,
    history: &[Intervention],
    window: Window,
) -> Result<usize> {
    exact_reward_table(scm, arms, history, window)?
        .argmax()
        .ok_or(Error::NoArms)
}
