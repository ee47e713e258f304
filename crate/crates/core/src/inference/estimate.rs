//! Transfer model fitted from observational data.
//!
//! Every endogenous mechanism becomes a conditional PMF estimated by counting.
//! An unconfounded variable is conditioned on its parents. A variable that
//! shares latent noise with earlier variables of its slice is conditioned on
//! its confounded component within the topological prefix plus that
//! component's parents, which keeps the product of PMFs equal to the
//! observational joint and makes truncation exact for interventions outside
//! the reward's confounded component.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::arms::ArmTable;
use crate::error::{Error, Result};
use crate::inference::{exact_interventional_mean, windowed_interventions, RewardTable, Window};
use crate::scm::{
    Intervention, Lag, Parent, Regime, Scm, ScmTemplate, Value, VarId,
};
use crate::inference::ObservationalDataset;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalPmf {
    pub variable: VarId,
    /// Conditioning variables, sorted by (lag, id).
    pub conditioning: Vec<(VarId, Lag)>,
    sizes: Vec<usize>,
    strides: Vec<usize>,
    arity: usize,
    /// `rows x arity`, row-major.
    probs: Vec<f64>,
    row_counts: Vec<u64>,
}

impl ConditionalPmf {
    pub fn rows(&self) -> usize {
        self.row_counts.len()
    }

    /// PMF over the variable's domain for one conditioning row.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.probs[row * self.arity..(row + 1) * self.arity]
    }

    pub fn row_count(&self, row: usize) -> u64 {
        self.row_counts[row]
    }

    /// Row index for domain indices of the conditioning variables.
    pub fn row_index(&self, cond: &[usize]) -> usize {
        cond.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    fn row_of(&self, cur: &[usize], prev: Option<&[usize]>) -> usize {
        self.conditioning
            .iter()
            .zip(&self.strides)
            .map(|(&(v, lag), s)| {
                let k = match lag {
                    Lag::Current => cur[v.0],
                    Lag::Previous => prev.expect("lag parents only after slice 0")[v.0],
                };
                k * s
            })
            .sum()
    }

    /// `P̂(V = value | conditioning = cond)` with values, not indices.
    pub fn prob(&self, template: &ScmTemplate, cond: &[Value], value: Value) -> Option<f64> {
        let mut idx = Vec::with_capacity(cond.len());
        for (&(v, _), &x) in self.conditioning.iter().zip(cond) {
            idx.push(template.variable(v).domain.index_of(x)?);
        }
        let k = template.variable(self.variable).domain.index_of(value)?;
        Some(self.row(self.row_index(&idx))[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
struct FittedRegime {
    order: Vec<VarId>,
    pmfs: Vec<ConditionalPmf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExogenousEstimate {
    pub name: String,
    /// Recovered marginal when the exogenous variable is the sole, private,
    /// bijective source of one endogenous variable.
    pub pmf: Option<Vec<f64>>,
}

/// Fitted stand-in for the true mechanisms.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedSem {
    template: ScmTemplate,
    smoothing: f64,
    samples: usize,
    initial: FittedRegime,
    transition: Option<FittedRegime>,
    exogenous: Vec<ExogenousEstimate>,
}

/// Conditioning set of each variable in one regime.
pub(crate) fn conditioning_sets(template: &ScmTemplate, regime: Regime) -> (Vec<VarId>, Vec<Vec<(VarId, Lag)>>) {
    let diagram = template.slice_diagram(regime);
    let order = diagram.topological_order().expect("validated template is acyclic");
    let mut sets = vec![Vec::new(); template.variables.len()];
    let mut prefix = BTreeSet::new();
    for &v in &order {
        prefix.insert(v);
        let component = diagram.c_component(v, &prefix);
        let mut cond: BTreeSet<(Lag, VarId)> =
            component.iter().map(|&w| (Lag::Current, w)).collect();
        for &w in &component {
            let f = template.function(regime, w).expect("validated");
            for p in &f.parents {
                if let Parent::Endogenous(x, lag) = *p {
                    cond.insert((lag, x));
                }
            }
        }
        cond.remove(&(Lag::Current, v));
        sets[v.0] = cond.into_iter().map(|(lag, x)| (x, lag)).collect();
    }
    (order, sets)
}

fn fit_regime(
    data: &ObservationalDataset,
    template: &ScmTemplate,
    regime: Regime,
    smoothing: f64,
) -> FittedRegime {
    let (order, sets) = conditioning_sets(template, regime);
    let n = template.variables.len();
    let slices: Vec<usize> = match regime {
        Regime::Initial => vec![0],
        Regime::Transition => (1..data.slices()).collect(),
    };
    let idx = |v: usize, x: Value| {
        template.variables[v]
            .domain
            .index_of(x)
            .expect("dataset values are domain-checked")
    };
    let mut pmfs = Vec::with_capacity(n);
    for (v, cond) in sets.into_iter().enumerate() {
        let sizes: Vec<usize> = cond
            .iter()
            .map(|(x, _)| template.variables[x.0].domain.len())
            .collect();
        let mut strides = vec![1; sizes.len()];
        for k in (0..sizes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * sizes[k + 1];
        }
        let rows: usize = sizes.iter().product();
        let arity = template.variables[v].domain.len();
        let mut counts = vec![0u64; rows * arity];
        let mut cur = vec![0usize; n];
        let mut prev = vec![0usize; n];
        for sample in 0..data.samples() {
            for &s in &slices {
                for (w, &x) in data.slice_row(sample, s).iter().enumerate() {
                    cur[w] = idx(w, x);
                }
                if s > 0 {
                    for (w, &x) in data.slice_row(sample, s - 1).iter().enumerate() {
                        prev[w] = idx(w, x);
                    }
                }
                let row: usize = cond
                    .iter()
                    .zip(&strides)
                    .map(|(&(x, lag), st)| match lag {
                        Lag::Current => cur[x.0] * st,
                        Lag::Previous => prev[x.0] * st,
                    })
                    .sum();
                counts[row * arity + cur[v]] += 1;
            }
        }
        let mut probs = vec![0.0; rows * arity];
        let mut row_counts = vec![0u64; rows];
        for r in 0..rows {
            let c = &counts[r * arity..(r + 1) * arity];
            let total: u64 = c.iter().sum();
            row_counts[r] = total;
            let denom = total as f64 + smoothing * arity as f64;
            for k in 0..arity {
                probs[r * arity + k] = if denom > 0.0 {
                    (c[k] as f64 + smoothing) / denom
                } else {
                    1.0 / arity as f64
                };
            }
        }
        pmfs.push(ConditionalPmf {
            variable: VarId(v),
            conditioning: cond,
            sizes,
            strides,
            arity,
            probs,
            row_counts,
        });
    }
    FittedRegime { order, pmfs }
}

fn exogenous_estimates(template: &ScmTemplate, initial: &FittedRegime) -> Vec<ExogenousEstimate> {
    template
        .exogenous
        .iter()
        .enumerate()
        .map(|(u, spec)| {
            let users: Vec<_> = template
                .functions_t0
                .iter()
                .filter(|f| f.parents.contains(&Parent::Exogenous(crate::scm::ExoId(u))))
                .collect();
            let pmf = match users.as_slice() {
                [f] if f.parents.len() == 1 => {
                    let out = &template.variable(f.output).domain;
                    let images: Vec<usize> = spec
                        .domain
                        .values()
                        .iter()
                        .filter_map(|&x| {
                            f.rows
                                .iter()
                                .find(|(i, _)| i[0] == x)
                                .and_then(|(_, o)| out.index_of(*o))
                        })
                        .collect();
                    let distinct: BTreeSet<_> = images.iter().collect();
                    let pmf = &initial.pmfs[f.output.0];
                    (images.len() == spec.domain.len()
                        && distinct.len() == out.len()
                        && pmf.conditioning.is_empty())
                    .then(|| images.iter().map(|&k| pmf.row(0)[k]).collect())
                }
                _ => None,
            };
            ExogenousEstimate {
                name: spec.name.clone(),
                pmf,
            }
        })
        .collect()
}

/// Fits one conditional PMF per endogenous variable and regime with additive
/// smoothing; rows never observed fall back to uniform.
pub fn fit_structural_pmfs(
    data: &ObservationalDataset,
    template: &ScmTemplate,
    smoothing: f64,
) -> Result<EstimatedSem> {
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::InvalidSmoothing(smoothing));
    }
    let names: Vec<&str> = template.variables.iter().map(|v| v.name.as_str()).collect();
    if data.variables().iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(Error::DatasetMismatch(format!(
            "dataset variables {:?} differ from template variables {:?}",
            data.variables(),
            names
        )));
    }
    crate::scm::validate_template(template).into_result()?;
    let initial = fit_regime(data, template, Regime::Initial, smoothing);
    let transition =
        (data.slices() > 1).then(|| fit_regime(data, template, Regime::Transition, smoothing));
    let exogenous = exogenous_estimates(template, &initial);
    Ok(EstimatedSem {
        template: template.clone(),
        smoothing,
        samples: data.samples(),
        initial,
        transition,
        exogenous,
    })
}

impl EstimatedSem {
    pub fn template(&self) -> &ScmTemplate {
        &self.template
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn exogenous(&self) -> &[ExogenousEstimate] {
        &self.exogenous
    }

    pub fn pmf(&self, regime: Regime, var: VarId) -> Option<&ConditionalPmf> {
        match regime {
            Regime::Initial => Some(&self.initial.pmfs[var.0]),
            Regime::Transition => self.transition.as_ref().map(|r| &r.pmfs[var.0]),
        }
    }

    fn regime(&self, slice: usize) -> Result<&FittedRegime> {
        if slice == 0 {
            Ok(&self.initial)
        } else {
            self.transition.as_ref().ok_or(Error::IncompleteEstimate)
        }
    }

    fn pinned(&self, per_slice: &[Intervention]) -> Result<Vec<Vec<Option<usize>>>> {
        per_slice
            .iter()
            .map(|iv| {
                iv.check(&self.template)?;
                let mut p = vec![None; self.template.variables.len()];
                for (v, x) in iv.iter() {
                    p[v.0] = self.template.variable(v).domain.index_of(x);
                }
                Ok(p)
            })
            .collect()
    }

    /// Human-readable dump of every conditional table.
    pub fn to_text(&self) -> String {
        let t = &self.template;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# fitted conditional tables: samples={} smoothing={}",
            self.samples, self.smoothing
        );
        let mut regimes = vec![(Regime::Initial, &self.initial)];
        if let Some(r) = &self.transition {
            regimes.push((Regime::Transition, r));
        }
        for (regime, fitted) in regimes {
            for &v in &fitted.order {
                let pmf = &fitted.pmfs[v.0];
                let cond_names: Vec<String> = pmf
                    .conditioning
                    .iter()
                    .map(|&(x, lag)| match lag {
                        Lag::Current => t.name(x).to_string(),
                        Lag::Previous => format!("{}[t-1]", t.name(x)),
                    })
                    .collect();
                let _ = writeln!(s, "\n[{regime}] P({} | {})", t.name(v), cond_names.join(", "));
                let dom = &t.variable(v).domain;
                for r in 0..pmf.rows() {
                    let mut rem = r;
                    let mut parts = Vec::new();
                    for (k, &(x, _)) in pmf.conditioning.iter().enumerate() {
                        let i = rem / pmf.strides[k];
                        rem %= pmf.strides[k];
                        parts.push(format!("{}={}", cond_names[k], t.variable(x).domain.value(i)));
                    }
                    let probs: Vec<String> = pmf
                        .row(r)
                        .iter()
                        .enumerate()
                        .map(|(k, p)| format!("{}:{p:.6}", dom.value(k)))
                        .collect();
                    let _ = writeln!(
                        s,
                        "  ({}) -> {}  n={}",
                        parts.join(", "),
                        probs.join(" "),
                        pmf.row_count(r)
                    );
                }
            }
        }
        let _ = writeln!(s);
        for u in &self.exogenous {
            match &u.pmf {
                Some(p) => {
                    let probs: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
                    let _ = writeln!(s, "exogenous {}: {}", u.name, probs.join(" "));
                }
                None => {
                    let _ = writeln!(s, "exogenous {}: not identifiable", u.name);
                }
            }
        }
        s
    }
}

/// Exact mean reward under the fitted model, by enumerating slice states.
pub fn fitted_interventional_mean(
    fhat: &EstimatedSem,
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
) -> Result<f64> {
    let per_slice = windowed_interventions(arm, history, window);
    let pinned = fhat.pinned(&per_slice)?;
    let t = &fhat.template;
    let sizes: Vec<usize> = t.variables.iter().map(|v| v.domain.len()).collect();
    let count: usize = sizes.iter().product();
    let encode = |s: &[usize]| s.iter().zip(&sizes).fold(0, |acc, (&k, &n)| acc * n + k);
    let decode = |mut code: usize, out: &mut [usize]| {
        for (slot, &n) in out.iter_mut().zip(&sizes).rev() {
            *slot = code % n;
            code /= n;
        }
    };

    fn expand(
        regime: &FittedRegime,
        pos: usize,
        pinned: &[Option<usize>],
        prev: Option<&[usize]>,
        cur: &mut Vec<usize>,
        p: f64,
        emit: &mut dyn FnMut(&[usize], f64),
    ) {
        if p == 0.0 {
            return;
        }
        let Some(&v) = regime.order.get(pos) else {
            emit(cur, p);
            return;
        };
        if let Some(k) = pinned[v.0] {
            cur[v.0] = k;
            expand(regime, pos + 1, pinned, prev, cur, p, emit);
            return;
        }
        let pmf = &regime.pmfs[v.0];
        let row = pmf.row_of(cur, prev);
        for k in 0..pmf.arity {
            cur[v.0] = k;
            let q = pmf.row(row)[k];
            expand(regime, pos + 1, pinned, prev, cur, p * q, emit);
        }
    }

    let n = t.variables.len();
    let mut dist = vec![0.0; count];
    let mut cur = vec![0usize; n];
    {
        let regime = fhat.regime(0)?;
        let mut emit = |s: &[usize], p: f64| dist[encode(s)] += p;
        expand(regime, 0, &pinned[0], None, &mut cur, 1.0, &mut emit);
    }
    let mut prev = vec![0usize; n];
    for (s, pin) in pinned.iter().enumerate().skip(1) {
        let regime = fhat.regime(s)?;
        let mut next = vec![0.0; count];
        for (code, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            decode(code, &mut prev);
            let mut emit = |st: &[usize], q: f64| next[encode(st)] += q;
            expand(regime, 0, pin, Some(&prev), &mut cur, p, &mut emit);
        }
        dist = next;
    }
    let y = t.reward.0;
    let ydom = &t.variable(t.reward).domain;
    let mut state = vec![0usize; n];
    Ok(dist
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(code, &p)| {
            decode(code, &mut state);
            p * ydom.value(state[y]) as f64
        })
        .sum())
}

pub fn fitted_reward_table(
    fhat: &EstimatedSem,
    arms: &ArmTable,
    history: &[Intervention],
    window: Window,
) -> Result<RewardTable> {
    let means = arms
        .arms()
        .iter()
        .map(|a| fitted_interventional_mean(fhat, &a.intervention, history, window))
        .collect::<Result<_>>()?;
    Ok(RewardTable {
        slice: history.len(),
        context: history.to_vec(),
        means,
    })
}

/// Ancestral sampling through the fitted PMFs with intervened variables pinned.
pub fn simulate_from_fitted<R: Rng + ?Sized>(
    fhat: &EstimatedSem,
    arm: &Intervention,
    history: &[Intervention],
    window: Window,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let per_slice = windowed_interventions(arm, history, window);
    let pinned = fhat.pinned(&per_slice)?;
    let regimes: Vec<&FittedRegime> = (0..per_slice.len())
        .map(|s| fhat.regime(s))
        .collect::<Result<_>>()?;
    let t = &fhat.template;
    let nv = t.variables.len();
    let y = t.reward.0;
    let ydom = &t.variable(t.reward).domain;
    let mut cur = vec![0usize; nv];
    let mut prev = vec![0usize; nv];
    let mut sum = 0.0;
    for _ in 0..n {
        for (s, regime) in regimes.iter().enumerate() {
            for &v in &regime.order {
                if let Some(k) = pinned[s][v.0] {
                    cur[v.0] = k;
                    continue;
                }
                let pmf = &regime.pmfs[v.0];
                let row = pmf.row(pmf.row_of(&cur, (s > 0).then_some(prev.as_slice())));
                let r: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = row.len() - 1;
                for (k, p) in row.iter().enumerate() {
                    acc += p;
                    if r < acc {
                        pick = k;
                        break;
                    }
                }
                cur[v.0] = pick;
            }
            std::mem::swap(&mut cur, &mut prev);
        }
        sum += ydom.value(prev[y]) as f64;
    }
    Ok(sum / n as f64)
}

/// Per-arm comparison of the fitted model against the true one.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasRow {
    pub arm_id: usize,
    pub arm: String,
    pub exact: f64,
    pub fitted: f64,
    pub bias: f64,
    /// The arm targets a variable sharing latent noise with the reward, so its
    /// effect is not recoverable from observational data alone.
    pub confounded: bool,
}

pub fn estimation_report(
    scm: &Arc<Scm>,
    fhat: &EstimatedSem,
    arms: &ArmTable,
    history: &[Intervention],
    window: Window,
) -> Result<Vec<BiasRow>> {
    let t = scm.template();
    let diagram = t.slice_diagram(Regime::of_slice(history.len()));
    let all: BTreeSet<VarId> = (0..t.variables.len()).map(VarId).collect();
    let reward_component = diagram.c_component(t.reward, &all);
    arms.arms()
        .iter()
        .map(|a| {
            let exact = exact_interventional_mean(scm, &a.intervention, history, window)?;
            let fitted = fitted_interventional_mean(fhat, &a.intervention, history, window)?;
            Ok(BiasRow {
                arm_id: a.id,
                arm: a.intervention.describe(t),
                exact,
                fitted,
                bias: fitted - exact,
                confounded: a
                    .intervention
                    .targets()
                    .iter()
                    .any(|v| reward_component.contains(v)),
            })
        })
        .collect()
}
