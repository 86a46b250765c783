//! Canonical JSON: object keys sorted, two-space indentation, trailing newline.
//!
//! Numbers use serde_json's shortest round-trip formatting, which is stable
//! for a given `f64`. Output does not depend on map insertion order or on
//! whether serde_json was built with `preserve_order`.

use serde::Serialize;
use serde_json::Value;

pub fn to_canonical_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&value, 0, &mut out);
    out.push('\n');
    Ok(out)
}

pub fn to_canonical_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    to_canonical_string(value).map(String::into_bytes)
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(value: &Value, level: usize, out: &mut String) {
    match value {
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(level + 1, out);
                write_value(item, level + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(level + 1, out);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*key], level + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push('}');
        }
        Value::Array(_) => out.push_str("[]"),
        Value::Object(_) => out.push_str("{}"),
        scalar => out.push_str(&scalar.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_at_every_level() {
        let v = json!({"b": 1, "a": {"z": [1, 2.5, "x"], "m": null}, "c": []});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": {\n    \"m\": null,\n    \"z\": [\n      1,\n      2.5,\n      \"x\"\n    ]\n  },\n  \"b\": 1,\n  \"c\": []\n}\n"
        );
    }

    #[test]
    fn parses_back_to_same_value() {
        let v = json!({"t": 0.7, "s": "quote \" and \n newline", "n": -3});
        let s = to_canonical_string(&v).unwrap();
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
