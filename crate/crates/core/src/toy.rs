//! The five-slice toy model used throughout the tests, benches and examples.

use crate::arms::{pomis_from_config, ArmTable, InterventionSet};
use crate::error::Result;
use crate::scm::ScmTemplate;

pub const TOY_SCM: &str = include_str!("../../../configs/toy_scm.toml");

pub fn template() -> ScmTemplate {
    ScmTemplate::from_toml_str(TOY_SCM).expect("bundled toy template parses")
}

/// Arm enumeration order used by the toy arm table: X before Z.
pub fn arm_order(template: &ScmTemplate) -> Vec<crate::scm::VarId> {
    ["X", "Z"]
        .iter()
        .map(|n| template.var_id(n).expect("toy variable"))
        .collect()
}

/// `{do(X=0), do(X=1), do(Z=0), do(Z=1)}`.
pub fn pomis_arms(template: &ScmTemplate) -> Result<ArmTable> {
    let sets: Vec<InterventionSet> = [["X"], ["Z"]]
        .iter()
        .map(|s| InterventionSet::named(template, s))
        .collect::<Result<_>>()?;
    pomis_from_config(template, &sets, &arm_order(template))
}
