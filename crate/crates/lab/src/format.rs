//! The MDP JSON document:
//!
//! ```json
//! {
//!   "num_states": 2,
//!   "num_actions": 1,
//!   "reward": [[0.5], [1.0]],
//!   "transition": [[[0.0, 1.0]], [[1.0, 0.0]]]
//! }
//! ```
//!
//! `reward[s][a]` and `transition[s][a][s']`. Emission is canonical: a
//! document emitted from a parsed document is byte-identical to the first
//! emission.

use std::fmt::Write as _;

use regal_core::Mdp;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed MDP document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{what} has {found} entries, expected {expected}")]
    Shape { what: String, expected: usize, found: usize },
    #[error("invalid MDP: {0}")]
    Invalid(#[from] regal_core::Error),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    num_states: usize,
    num_actions: usize,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

fn expect_len(what: impl FnOnce() -> String, expected: usize, found: usize) -> Result<(), FormatError> {
    if expected != found {
        return Err(FormatError::Shape { what: what(), expected, found });
    }
    Ok(())
}

pub fn parse_mdp(text: &str) -> Result<Mdp, FormatError> {
    let doc: Document = serde_json::from_str(text)?;
    let (ns, na) = (doc.num_states, doc.num_actions);
    expect_len(|| "reward".into(), ns, doc.reward.len())?;
    expect_len(|| "transition".into(), ns, doc.transition.len())?;
    for s in 0..ns {
        expect_len(|| format!("reward[{s}]"), na, doc.reward[s].len())?;
        expect_len(|| format!("transition[{s}]"), na, doc.transition[s].len())?;
        for a in 0..na {
            expect_len(|| format!("transition[{s}][{a}]"), ns, doc.transition[s][a].len())?;
        }
    }
    Ok(Mdp::from_nested(&doc.reward, &doc.transition)?)
}

fn number(x: f64) -> String {
    serde_json::to_string(&x).expect("finite entries")
}

fn row(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, &x) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&number(x));
    }
    out.push(']');
}

pub fn emit_mdp(m: &Mdp) -> String {
    let (ns, na) = (m.num_states(), m.num_actions());
    let mut out = String::new();
    let _ = writeln!(out, "{{\n  \"num_states\": {ns},\n  \"num_actions\": {na},\n  \"reward\": [");
    for s in 0..ns {
        out.push_str("    ");
        row(&mut out, &m.rewards()[s * na..(s + 1) * na]);
        out.push_str(if s + 1 < ns { ",\n" } else { "\n" });
    }
    out.push_str("  ],\n  \"transition\": [\n");
    for s in 0..ns {
        out.push_str("    [\n");
        for a in 0..na {
            out.push_str("      ");
            row(&mut out, m.row(s, a));
            out.push_str(if a + 1 < na { ",\n" } else { "\n" });
        }
        out.push_str(if s + 1 < ns { "    ],\n" } else { "    ]\n" });
    }
    out.push_str("  ]\n}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use regal_core::envs::make_two_state;

    #[test]
    fn round_trip_is_canonical() {
        let m = make_two_state(0.5, 0.1).unwrap();
        let first = emit_mdp(&m);
        let parsed = parse_mdp(&first).unwrap();
        assert_eq!(parsed, m);
        assert_eq!(emit_mdp(&parsed), first);
    }

    #[test]
    fn one_state_document() {
        let m = parse_mdp(r#"{"num_states": 1, "num_actions": 1, "reward": [[0.25]], "transition": [[[1.0]]]}"#).unwrap();
        assert_eq!(m.num_states(), 1);
        assert_eq!(m.reward(0, 0), 0.25);
    }

    #[test]
    fn bad_row_names_the_pair() {
        let text = r#"{"num_states": 2, "num_actions": 1, "reward": [[0.0], [0.0]],
            "transition": [[[0.5, 0.5]], [[0.5, 0.4]]]}"#;
        let err = parse_mdp(text).unwrap_err();
        assert!(matches!(err, FormatError::Invalid(regal_core::Error::InvalidRow { state: 1, action: 0, .. })), "{err}");
        let msg = err.to_string();
        assert!(msg.contains("s=1, a=0"), "{msg}");
    }

    #[test]
    fn shape_errors() {
        let text = r#"{"num_states": 2, "num_actions": 1, "reward": [[0.0]], "transition": []}"#;
        assert!(matches!(parse_mdp(text), Err(FormatError::Shape { .. })));
        let text = r#"{"num_states": 1, "num_actions": 1, "reward": [[2.0]], "transition": [[[1.0]]]}"#;
        assert!(matches!(parse_mdp(text), Err(FormatError::Invalid(_))));
        assert!(matches!(parse_mdp("{"), Err(FormatError::Json(_))));
    }
}
