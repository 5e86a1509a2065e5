use std::path::Path;

use super::ArchitectureSpec;
use crate::Result;

/// Parses and validates a JSON architecture description.
pub fn parse_architecture(text: &str) -> Result<ArchitectureSpec> {
    let arch: ArchitectureSpec = serde_json::from_str(text)?;
    arch.validate()?;
    Ok(arch)
}

pub fn load_architecture(path: impl AsRef<Path>) -> Result<ArchitectureSpec> {
    parse_architecture(&std::fs::read_to_string(path)?)
}

pub fn to_json(arch: &ArchitectureSpec) -> String {
    serde_json::to_string_pretty(arch).expect("architecture specs always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const MINIMAL: &str = r#"{
        "name": "m",
        "input_shape": [4, 8, 8, 3],
        "layers": [
            {"name": "c", "kind": "conv", "kernel": [1, 3, 3], "stride": [1, 1, 1], "out_channels": 4}
        ],
        "head": {"kind": "classifier", "inputs": ["c"], "kernel": [1, 1, 1], "out_channels": 2}
    }"#;

    #[test]
    fn minimal_round_trip() {
        let a = parse_architecture(MINIMAL).unwrap();
        let b = parse_architecture(&to_json(&a)).unwrap();
        assert_eq!(a, b);
        assert_eq!(to_json(&a), to_json(&b));
    }

    #[test]
    fn syntax_errors_carry_a_position() {
        let err = parse_architecture("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_names_the_field() {
        let text = MINIMAL.replace("\"out_channels\": 4", "\"out_channel\": 4");
        let msg = parse_architecture(&text).unwrap_err().to_string();
        assert!(msg.contains("out_channel"), "{msg}");
    }

    #[test]
    fn structural_errors() {
        let zero = MINIMAL.replace("\"out_channels\": 4", "\"out_channels\": 0");
        assert!(matches!(parse_architecture(&zero), Err(Error::Validation(_))));
        let empty = r#"{"name":"e","input_shape":[1,2,2,1],"layers":[],
            "head":{"kind":"classifier","inputs":["x"],"kernel":[1,1,1],"out_channels":2}}"#;
        assert!(matches!(parse_architecture(empty), Err(Error::Validation(_))));
        let dangling = MINIMAL.replace("\"head\"", "\"skip_edges\": [[\"c\", \"nope\"]], \"head\"");
        assert!(matches!(parse_architecture(&dangling), Err(Error::Validation(_))));
    }
}
