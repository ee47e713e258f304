use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::scm::graph::CausalDiagram;

/// Values taken by discrete variables.
pub type Value = i64;

/// Ordered, finite set of admissible values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    values: Vec<Value>,
}

impl Domain {
    pub fn new(values: Vec<Value>) -> Result<Self> {
        let unique: HashSet<_> = values.iter().collect();
        if values.is_empty() || unique.len() != values.len() {
            return Err(Error::InvalidDomain);
        }
        Ok(Self { values })
    }

    pub fn binary() -> Self {
        Self { values: vec![0, 1] }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: Value) -> Option<usize> {
        self.values.iter().position(|&v| v == value)
    }

    pub fn contains(&self, value: Value) -> bool {
        self.index_of(value).is_some()
    }

    pub fn value(&self, index: usize) -> Value {
        self.values[index]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExoId(pub usize);

/// Which slice an endogenous parent is read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lag {
    Current,
    Previous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parent {
    Endogenous(VarId, Lag),
    Exogenous(ExoId),
}

/// The two mechanism sets of a time-propagated model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    /// Slice 0, no past.
    Initial,
    /// Every slice t > 0.
    Transition,
}

impl Regime {
    pub fn of_slice(slice: usize) -> Self {
        if slice == 0 {
            Regime::Initial
        } else {
            Regime::Transition
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Initial => f.write_str("t0"),
            Regime::Transition => f.write_str("t"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousSpec {
    pub name: String,
    pub domain: Domain,
    /// Probability of each domain value, in domain order.
    pub pmf: Vec<f64>,
    /// A separately declared PMF for slices t > 0. Only accepted when equal to `pmf`.
    pub pmf_t: Option<Vec<f64>>,
}

/// A structural mechanism stored as an explicit lookup table.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralTable {
    pub output: VarId,
    pub parents: Vec<Parent>,
    /// Rows of (parent values in `parents` order, output value).
    pub rows: Vec<(Vec<Value>, Value)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScmTemplate {
    pub variables: Vec<Variable>,
    pub reward: VarId,
    pub exogenous: Vec<ExogenousSpec>,
    pub functions_t0: Vec<StructuralTable>,
    pub functions_t: Vec<StructuralTable>,
}

impl ScmTemplate {
    pub fn var_id(&self, name: &str) -> Result<VarId> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .map(VarId)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn exo_id(&self, name: &str) -> Option<ExoId> {
        self.exogenous.iter().position(|u| u.name == name).map(ExoId)
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.variables[id.0].name
    }

    pub fn functions(&self, regime: Regime) -> &[StructuralTable] {
        match regime {
            Regime::Initial => &self.functions_t0,
            Regime::Transition => &self.functions_t,
        }
    }

    pub fn function(&self, regime: Regime, var: VarId) -> Option<&StructuralTable> {
        self.functions(regime).iter().find(|f| f.output == var)
    }

    /// Every endogenous variable except the reward, in declaration order.
    pub fn manipulable(&self) -> Vec<VarId> {
        (0..self.variables.len())
            .map(VarId)
            .filter(|&v| v != self.reward)
            .collect()
    }

    /// Intra-slice causal diagram of one regime. Lag parents are dropped; two
    /// variables sharing an exogenous parent get a bidirected edge.
    pub fn slice_diagram(&self, regime: Regime) -> CausalDiagram {
        let mut diagram = CausalDiagram::new(self.variables.iter().map(|v| v.name.clone()));
        let mut exo_children: BTreeMap<ExoId, BTreeSet<VarId>> = BTreeMap::new();
        for f in self.functions(regime) {
            for p in &f.parents {
                match *p {
                    Parent::Endogenous(v, Lag::Current) => diagram.add_directed(v, f.output),
                    Parent::Endogenous(_, Lag::Previous) => {}
                    Parent::Exogenous(u) => {
                        exo_children.entry(u).or_default().insert(f.output);
                    }
                }
            }
        }
        for children in exo_children.values() {
            let children: Vec<_> = children.iter().copied().collect();
            for (i, &a) in children.iter().enumerate() {
                for &b in &children[i + 1..] {
                    diagram.add_bidirected(a, b);
                }
            }
        }
        diagram
    }
}

/// A hard intervention: each target is pinned to a constant.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Intervention {
    assignments: BTreeMap<VarId, Value>,
}

impl Intervention {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(pairs: impl IntoIterator<Item = (VarId, Value)>) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (var, value) in pairs {
            if assignments.insert(var, value).is_some() {
                return Err(Error::DuplicateTarget(format!("#{}", var.0)));
            }
        }
        Ok(Self { assignments })
    }

    /// Builds an intervention from variable names, checking it against `template`.
    pub fn named(template: &ScmTemplate, pairs: &[(&str, Value)]) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for &(name, value) in pairs {
            let var = template.var_id(name)?;
            if assignments.insert(var, value).is_some() {
                return Err(Error::DuplicateTarget(name.to_string()));
            }
        }
        let iv = Self { assignments };
        iv.check(template)?;
        Ok(iv)
    }

    pub fn check(&self, template: &ScmTemplate) -> Result<()> {
        for (&var, &value) in &self.assignments {
            let variable = template
                .variables
                .get(var.0)
                .ok_or_else(|| Error::UnknownVariable(format!("#{}", var.0)))?;
            if var == template.reward {
                return Err(Error::RewardIntervened(variable.name.clone()));
            }
            if !variable.domain.contains(value) {
                return Err(Error::DomainViolation {
                    variable: variable.name.clone(),
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn get(&self, var: VarId) -> Option<Value> {
        self.assignments.get(&var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, Value)> + '_ {
        self.assignments.iter().map(|(&k, &v)| (k, v))
    }

    pub fn targets(&self) -> BTreeSet<VarId> {
        self.assignments.keys().copied().collect()
    }

    /// Later assignments win on shared targets.
    pub fn merged(&self, other: &Intervention) -> Intervention {
        let mut assignments = self.assignments.clone();
        assignments.extend(other.iter());
        Intervention { assignments }
    }

    /// `do(X=1, Z=0)`, or `do(∅)`.
    pub fn describe(&self, template: &ScmTemplate) -> String {
        if self.is_empty() {
            return "do(∅)".to_string();
        }
        let parts: Vec<_> = self
            .iter()
            .map(|(v, x)| format!("{}={}", template.name(v), x))
            .collect();
        format!("do({})", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    RewardOutOfRange,
    RewardNotBinary { variable: String },
    BadPmf { exogenous: String, reason: String },
    TimeVaryingExogenous { exogenous: String },
    MissingFunction { regime: Regime, variable: String },
    DuplicateFunction { regime: Regime, variable: String },
    UnknownParent { regime: Regime, variable: String },
    DuplicateParent { regime: Regime, variable: String },
    LagInInitialRegime { variable: String },
    Cycle { regime: Regime, variables: Vec<String> },
    ArityMismatch { regime: Regime, variable: String, row: usize },
    DomainMismatch { regime: Regime, variable: String, detail: String },
    ConflictingRows { regime: Regime, variable: String },
    PartialTable { regime: Regime, variable: String, missing: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::RewardOutOfRange => write!(f, "reward variable id does not exist"),
            Issue::RewardNotBinary { variable } => {
                write!(f, "reward `{variable}` must have a domain within {{0, 1}}")
            }
            Issue::BadPmf { exogenous, reason } => write!(f, "pmf of `{exogenous}`: {reason}"),
            Issue::TimeVaryingExogenous { exogenous } => {
                write!(f, "`{exogenous}` declares a different pmf for t > 0; exogenous pmfs must be time-invariant")
            }
            Issue::MissingFunction { regime, variable } => {
                write!(f, "[{regime}] no function for `{variable}`")
            }
            Issue::DuplicateFunction { regime, variable } => {
                write!(f, "[{regime}] more than one function for `{variable}`")
            }
            Issue::UnknownParent { regime, variable } => {
                write!(f, "[{regime}] `{variable}` references an unknown parent")
            }
            Issue::DuplicateParent { regime, variable } => {
                write!(f, "[{regime}] `{variable}` lists a parent twice")
            }
            Issue::LagInInitialRegime { variable } => {
                write!(f, "[t0] `{variable}` reads from slice t-1, which does not exist at t=0")
            }
            Issue::Cycle { regime, variables } => {
                write!(f, "[{regime}] intra-slice cycle through {}", variables.join(", "))
            }
            Issue::ArityMismatch { regime, variable, row } => {
                write!(f, "[{regime}] `{variable}` row {row} has the wrong number of parent values")
            }
            Issue::DomainMismatch { regime, variable, detail } => {
                write!(f, "[{regime}] `{variable}`: {detail}")
            }
            Issue::ConflictingRows { regime, variable } => {
                write!(f, "[{regime}] `{variable}` maps one parent assignment to two outputs")
            }
            Issue::PartialTable { regime, variable, missing } => {
                write!(f, "[{regime}] `{variable}` table is missing {missing} parent assignment(s)")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidTemplate(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("ok");
        }
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

const PMF_TOLERANCE: f64 = 1e-12;

fn check_pmf(u: &ExogenousSpec, pmf: &[f64]) -> Option<String> {
    if pmf.len() != u.domain.len() {
        return Some(format!(
            "{} probabilities for {} domain values",
            pmf.len(),
            u.domain.len()
        ));
    }
    if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Some("probabilities must lie in [0, 1]".into());
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > PMF_TOLERANCE {
        return Some(format!("probabilities sum to {total}"));
    }
    None
}

/// Checks every structural invariant and collects all violations.
pub fn validate_template(template: &ScmTemplate) -> ValidationReport {
    let mut issues = Vec::new();
    let n = template.variables.len();

    match template.variables.get(template.reward.0) {
        None => issues.push(Issue::RewardOutOfRange),
        Some(y) => {
            if y.domain.values().iter().any(|v| !(0..=1).contains(v)) {
                issues.push(Issue::RewardNotBinary {
                    variable: y.name.clone(),
                });
            }
        }
    }

    for u in &template.exogenous {
        if let Some(reason) = check_pmf(u, &u.pmf) {
            issues.push(Issue::BadPmf {
                exogenous: u.name.clone(),
                reason,
            });
        }
        if let Some(later) = &u.pmf_t {
            let same = later.len() == u.pmf.len()
                && later.iter().zip(&u.pmf).all(|(a, b)| (a - b).abs() <= PMF_TOLERANCE);
            if !same {
                issues.push(Issue::TimeVaryingExogenous {
                    exogenous: u.name.clone(),
                });
            }
        }
    }

    for regime in [Regime::Initial, Regime::Transition] {
        let functions = template.functions(regime);
        let mut seen = vec![0usize; n];
        for f in functions {
            if f.output.0 >= n {
                issues.push(Issue::UnknownParent {
                    regime,
                    variable: format!("#{}", f.output.0),
                });
                continue;
            }
            seen[f.output.0] += 1;
            check_table(template, regime, f, &mut issues);
        }
        for (i, count) in seen.iter().enumerate() {
            let variable = template.variables[i].name.clone();
            match count {
                0 => issues.push(Issue::MissingFunction { regime, variable }),
                1 => {}
                _ => issues.push(Issue::DuplicateFunction { regime, variable }),
            }
        }
        if let Some(cycle) = intra_slice_cycle(template, regime) {
            issues.push(Issue::Cycle {
                regime,
                variables: cycle.iter().map(|&v| template.name(v).to_string()).collect(),
            });
        }
    }

    ValidationReport { issues }
}

fn parent_domain<'a>(template: &'a ScmTemplate, p: &Parent) -> Option<&'a Domain> {
    match *p {
        Parent::Endogenous(v, _) => template.variables.get(v.0).map(|v| &v.domain),
        Parent::Exogenous(u) => template.exogenous.get(u.0).map(|u| &u.domain),
    }
}

fn check_table(
    template: &ScmTemplate,
    regime: Regime,
    f: &StructuralTable,
    issues: &mut Vec<Issue>,
) {
    let out = template.variable(f.output);
    let variable = out.name.clone();

    let distinct: HashSet<_> = f.parents.iter().collect();
    if distinct.len() != f.parents.len() {
        issues.push(Issue::DuplicateParent {
            regime,
            variable: variable.clone(),
        });
    }
    let mut domains = Vec::with_capacity(f.parents.len());
    for p in &f.parents {
        match parent_domain(template, p) {
            Some(d) => domains.push(d),
            None => {
                issues.push(Issue::UnknownParent {
                    regime,
                    variable: variable.clone(),
                });
                return;
            }
        }
        if regime == Regime::Initial && matches!(p, Parent::Endogenous(_, Lag::Previous)) {
            issues.push(Issue::LagInInitialRegime {
                variable: variable.clone(),
            });
        }
    }

    let mut mapping: BTreeMap<&[Value], Value> = BTreeMap::new();
    let mut bad_rows = false;
    for (i, (inputs, output)) in f.rows.iter().enumerate() {
        if inputs.len() != domains.len() {
            issues.push(Issue::ArityMismatch {
                regime,
                variable: variable.clone(),
                row: i,
            });
            bad_rows = true;
            continue;
        }
        if let Some((k, _)) = inputs
            .iter()
            .zip(&domains)
            .enumerate()
            .find(|(_, (v, d))| !d.contains(**v))
        {
            issues.push(Issue::DomainMismatch {
                regime,
                variable: variable.clone(),
                detail: format!("row {i}: parent value {} outside its domain", inputs[k]),
            });
            bad_rows = true;
            continue;
        }
        if !out.domain.contains(*output) {
            issues.push(Issue::DomainMismatch {
                regime,
                variable: variable.clone(),
                detail: format!("row {i}: output {output} outside the domain"),
            });
            bad_rows = true;
        }
        if let Some(prev) = mapping.insert(inputs, *output) {
            if prev != *output {
                issues.push(Issue::ConflictingRows {
                    regime,
                    variable: variable.clone(),
                });
            }
        }
    }
    if bad_rows {
        return;
    }
    let total: usize = domains.iter().map(|d| d.len()).product();
    if mapping.len() < total {
        issues.push(Issue::PartialTable {
            regime,
            variable,
            missing: total - mapping.len(),
        });
    }
}

/// Variables left over by Kahn's algorithm on the intra-slice edges, if any.
fn intra_slice_cycle(template: &ScmTemplate, regime: Regime) -> Option<Vec<VarId>> {
    let n = template.variables.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for f in template.functions(regime) {
        if f.output.0 >= n {
            continue;
        }
        for p in &f.parents {
            if let Parent::Endogenous(v, Lag::Current) = *p {
                if v.0 < n {
                    children[v.0].push(f.output.0);
                    indegree[f.output.0] += 1;
                }
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut removed = 0;
    while let Some(v) = stack.pop() {
        removed += 1;
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                stack.push(c);
            }
        }
    }
    (removed < n).then(|| (0..n).filter(|&i| indegree[i] > 0).map(VarId).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    #[test]
    fn toy_template_is_valid() {
        let report = validate_template(&toy::template());
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn in_slice_self_loop_is_a_cycle() {
        let mut t = toy::template();
        let x = t.var_id("X").unwrap();
        let f = t.functions_t0.iter_mut().find(|f| f.output == x).unwrap();
        f.parents.push(Parent::Endogenous(x, Lag::Current));
        for (inputs, _) in f.rows.iter_mut() {
            inputs.push(0);
        }
        let extra: Vec<_> = f
            .rows
            .iter()
            .map(|(i, o)| {
                let mut i = i.clone();
                *i.last_mut().unwrap() = 1;
                (i, *o)
            })
            .collect();
        f.rows.extend(extra);
        let report = validate_template(&t);
        assert!(
            report
                .issues
                .iter()
                .any(|i| matches!(i, Issue::Cycle { regime: Regime::Initial, .. })),
            "{report}"
        );
    }

    #[test]
    fn missing_row_is_a_partial_table() {
        let mut t = toy::template();
        let y = t.var_id("Y").unwrap();
        let f = t.functions_t.iter_mut().find(|f| f.output == y).unwrap();
        f.rows.pop();
        let report = validate_template(&t);
        assert_eq!(
            report.issues,
            vec![Issue::PartialTable {
                regime: Regime::Transition,
                variable: "Y".into(),
                missing: 1
            }]
        );
    }

    #[test]
    fn output_outside_domain_is_reported() {
        let mut t = toy::template();
        t.functions_t0[0].rows[0].1 = 7;
        let report = validate_template(&t);
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::DomainMismatch { .. })));
    }

    #[test]
    fn lag_parent_at_slice_zero_is_rejected() {
        let mut t = toy::template();
        let z = t.var_id("Z").unwrap();
        let ft = t.function(Regime::Transition, z).unwrap().clone();
        let f0 = t.functions_t0.iter_mut().find(|f| f.output == z).unwrap();
        *f0 = ft;
        let report = validate_template(&t);
        assert!(report
            .issues
            .contains(&Issue::LagInInitialRegime { variable: "Z".into() }));
    }

    #[test]
    fn time_varying_exogenous_is_rejected() {
        let mut t = toy::template();
        t.exogenous[0].pmf_t = Some(vec![0.5, 0.5]);
        let report = validate_template(&t);
        assert_eq!(
            report.issues,
            vec![Issue::TimeVaryingExogenous {
                exogenous: t.exogenous[0].name.clone()
            }]
        );
        t.exogenous[0].pmf_t = Some(t.exogenous[0].pmf.clone());
        assert!(validate_template(&t).is_ok());
    }

    #[test]
    fn pmf_must_sum_to_one() {
        let mut t = toy::template();
        t.exogenous[1].pmf = vec![0.5, 0.6];
        assert!(matches!(
            validate_template(&t).issues[..],
            [Issue::BadPmf { .. }]
        ));
    }

    #[test]
    fn domain_rejects_duplicates_and_empty() {
        assert!(Domain::new(vec![]).is_err());
        assert!(Domain::new(vec![0, 1, 0]).is_err());
        assert_eq!(Domain::new(vec![3, 1]).unwrap().index_of(1), Some(1));
    }

    #[test]
    fn intervention_checks_targets() {
        let t = toy::template();
        assert!(matches!(
            Intervention::named(&t, &[("Y", 1)]),
            Err(Error::RewardIntervened(_))
        ));
        assert!(matches!(
            Intervention::named(&t, &[("X", 2)]),
            Err(Error::DomainViolation { .. })
        ));
        assert!(matches!(
            Intervention::named(&t, &[("X", 0), ("X", 1)]),
            Err(Error::DuplicateTarget(_))
        ));
        let iv = Intervention::named(&t, &[("X", 1), ("Z", 0)]).unwrap();
        assert_eq!(iv.describe(&t), "do(Z=0, X=1)");
        assert_eq!(Intervention::empty().describe(&t), "do(∅)");
    }
}
