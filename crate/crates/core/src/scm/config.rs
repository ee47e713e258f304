//! TOML form of an [`ScmTemplate`].
//!
//! ```toml
//! reward = "Y"
//!
//! [[variables]]
//! name = "X"
//! domain = [0, 1]
//!
//! [[exogenous]]
//! name = "U_X"
//! pmf = [0.89, 0.11]          # domain defaults to [0, 1]
//!
//! [functions_t0]
//! X = { expr = "xor(U_X, Z)" }
//!
//! [functions_t]
//! X = { parents = ["U_X", "X[t-1]"], rows = [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]] }
//! ```
//!
//! Table rows list the parent values in `parents` order followed by the output.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scm::expr::Expr;
use crate::scm::template::{
    Domain, ExoId, ExogenousSpec, Lag, Parent, ScmTemplate, StructuralTable, Value, VarId, Variable,
};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    reward: String,
    variables: Vec<VariableEntry>,
    #[serde(default)]
    exogenous: Vec<ExogenousEntry>,
    functions_t0: BTreeMap<String, FunctionEntry>,
    functions_t: BTreeMap<String, FunctionEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableEntry {
    name: String,
    #[serde(default = "binary")]
    domain: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExogenousEntry {
    name: String,
    #[serde(default = "binary")]
    domain: Vec<Value>,
    pmf: Vec<f64>,
    pmf_t: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionEntry {
    parents: Option<Vec<String>>,
    expr: Option<String>,
    rows: Option<Vec<Vec<Value>>>,
}

fn binary() -> Vec<Value> {
    vec![0, 1]
}

impl ScmTemplate {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: TemplateFile =
            toml::from_str(src).map_err(|e| Error::Config(format!("scm template: {e}")))?;
        build(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }
}

fn build(file: TemplateFile) -> Result<ScmTemplate> {
    let mut names = HashSet::new();
    let mut variables = Vec::new();
    for v in file.variables {
        if !names.insert(v.name.clone()) {
            return Err(Error::Config(format!("name `{}` declared twice", v.name)));
        }
        variables.push(Variable {
            domain: Domain::new(v.domain)?,
            name: v.name,
        });
    }
    let mut exogenous = Vec::new();
    for u in file.exogenous {
        if !names.insert(u.name.clone()) {
            return Err(Error::Config(format!("name `{}` declared twice", u.name)));
        }
        exogenous.push(ExogenousSpec {
            domain: Domain::new(u.domain)?,
            name: u.name,
            pmf: u.pmf,
            pmf_t: u.pmf_t,
        });
    }
    let mut template = ScmTemplate {
        variables,
        reward: VarId(0),
        exogenous,
        functions_t0: Vec::new(),
        functions_t: Vec::new(),
    };
    template.reward = template.var_id(&file.reward)?;
    template.functions_t0 = build_functions(&template, file.functions_t0)?;
    template.functions_t = build_functions(&template, file.functions_t)?;
    Ok(template)
}

fn build_functions(
    template: &ScmTemplate,
    entries: BTreeMap<String, FunctionEntry>,
) -> Result<Vec<StructuralTable>> {
    let mut out: Vec<StructuralTable> = entries
        .into_iter()
        .map(|(name, entry)| build_function(template, &name, entry))
        .collect::<Result<_>>()?;
    out.sort_by_key(|f| f.output);
    Ok(out)
}

fn resolve(template: &ScmTemplate, name: &str, lagged: bool) -> Result<Parent> {
    if let Ok(v) = template.var_id(name) {
        let lag = if lagged { Lag::Previous } else { Lag::Current };
        return Ok(Parent::Endogenous(v, lag));
    }
    match template.exo_id(name) {
        Some(u) if !lagged => Ok(Parent::Exogenous(u)),
        Some(_) => Err(Error::Config(format!(
            "exogenous `{name}` cannot be lagged; exogenous draws are per slice"
        ))),
        None => Err(Error::UnknownVariable(name.to_string())),
    }
}

fn parse_parent(template: &ScmTemplate, s: &str) -> Result<Parent> {
    let s = s.trim();
    match s.strip_suffix("[t-1]") {
        Some(base) => resolve(template, base.trim(), true),
        None => resolve(template, s, false),
    }
}

fn parent_name(template: &ScmTemplate, p: Parent) -> (String, bool) {
    match p {
        Parent::Endogenous(v, lag) => (template.name(v).to_string(), lag == Lag::Previous),
        Parent::Exogenous(ExoId(u)) => (template.exogenous[u].name.clone(), false),
    }
}

fn parent_domain(template: &ScmTemplate, p: Parent) -> &Domain {
    match p {
        Parent::Endogenous(v, _) => &template.variable(v).domain,
        Parent::Exogenous(u) => &template.exogenous[u.0].domain,
    }
}

fn build_function(template: &ScmTemplate, name: &str, entry: FunctionEntry) -> Result<StructuralTable> {
    let output = template.var_id(name)?;
    match (entry.expr, entry.rows) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "`{name}`: give either `expr` or `rows`, not both"
        ))),
        (None, None) => Err(Error::Config(format!("`{name}`: missing `expr` or `rows`"))),
        (None, Some(rows)) => {
            let parents = entry
                .parents
                .ok_or_else(|| Error::Config(format!("`{name}`: table rows need `parents`")))?
                .iter()
                .map(|p| parse_parent(template, p))
                .collect::<Result<Vec<_>>>()?;
            let rows = rows
                .into_iter()
                .map(|mut r| {
                    let out = r.pop().ok_or_else(|| {
                        Error::Config(format!("`{name}`: empty table row"))
                    })?;
                    Ok((r, out))
                })
                .collect::<Result<_>>()?;
            Ok(StructuralTable {
                output,
                parents,
                rows,
            })
        }
        (Some(src), None) => {
            let expr = Expr::parse(&src)?;
            let parents: Vec<Parent> = match entry.parents {
                Some(ps) => ps
                    .iter()
                    .map(|p| parse_parent(template, p))
                    .collect::<Result<_>>()?,
                None => expr
                    .references()
                    .iter()
                    .map(|(n, lagged)| resolve(template, n, *lagged))
                    .collect::<Result<_>>()?,
            };
            let keys: Vec<(String, bool)> =
                parents.iter().map(|&p| parent_name(template, p)).collect();
            for r in expr.references() {
                if !keys.contains(&r) {
                    return Err(Error::Config(format!(
                        "`{name}`: expression uses `{}` which is not a listed parent",
                        r.0
                    )));
                }
            }
            let domains: Vec<&Domain> = parents.iter().map(|&p| parent_domain(template, p)).collect();
            let mut rows = Vec::new();
            for_each_assignment(&domains, |values| {
                let lookup = |n: &str, lagged: bool| {
                    let k = keys.iter().position(|(kn, kl)| kn == n && *kl == lagged);
                    values[k.expect("reference checked above")]
                };
                let out = expr.eval(&lookup)?;
                rows.push((values.to_vec(), out));
                Ok(())
            })?;
            Ok(StructuralTable {
                output,
                parents,
                rows,
            })
        }
    }
}

/// Calls `f` for every assignment of the cross product, last domain varying fastest.
pub(crate) fn for_each_assignment(
    domains: &[&Domain],
    mut f: impl FnMut(&[Value]) -> Result<()>,
) -> Result<()> {
    if domains.iter().any(|d| d.is_empty()) {
        return Ok(());
    }
    let mut idx = vec![0usize; domains.len()];
    let mut values: Vec<Value> = domains.iter().map(|d| d.value(0)).collect();
    loop {
        f(&values)?;
        let mut k = domains.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                values[k] = domains[k].value(idx[k]);
                break;
            }
            idx[k] = 0;
            values[k] = domains[k].value(0);
        }
    }
}
