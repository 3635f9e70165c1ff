//! Scripts shipped with the library.

use super::{ScenarioError, ScenarioScript};

/// `(name, TOML)` pairs.
pub const REFERENCE_SCRIPTS: &[(&str, &str)] = &[
    ("outage", include_str!("../../scenarios/outage.toml")),
    ("outage_no_waiver", include_str!("../../scenarios/outage_no_waiver.toml")),
    ("reconciliation", include_str!("../../scenarios/reconciliation.toml")),
    ("nominal", include_str!("../../scenarios/nominal.toml")),
];

pub fn reference_script(name: &str) -> Result<ScenarioScript, ScenarioError> {
    let (_, text) = REFERENCE_SCRIPTS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::ScriptInvalid(format!("no reference script named {name:?}")))?;
    ScenarioScript::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_parse() {
        for (name, _) in REFERENCE_SCRIPTS {
            reference_script(name).unwrap();
        }
        assert!(reference_script("missing").is_err());
    }
}
