//! Normalized Hamming similarity between canonicalized responses.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub percent: f64,
    pub mismatches: usize,
    pub length: usize,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("cannot compare empty responses")]
pub struct EmptyResponse;

/// Positional comparison over characters; the shorter string is padded
/// with a sentinel that matches nothing.
pub fn hamming_similarity(x: &str, y: &str) -> Result<SimilarityScore, EmptyResponse> {
    if x.is_empty() || y.is_empty() {
        return Err(EmptyResponse);
    }
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    let m = a.len().max(b.len());
    let mismatches = (0..m).filter(|&i| a.get(i).is_none() || b.get(i).is_none() || a[i] != b[i]).count();
    Ok(SimilarityScore {
        percent: (1.0 - mismatches as f64 / m as f64) * 100.0,
        mismatches,
        length: m,
    })
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        out.push_str(&i.to_string());
    } else if let Some(u) = n.as_u64() {
        out.push_str(&u.to_string());
    } else {
        let f = n.as_f64().unwrap_or(f64::NAN);
        if f.fract() == 0.0 && f.abs() < 9.007_199_254_740_992e15 {
            out.push_str(&(f as i64).to_string());
        } else {
            out.push_str(&format!("{f}"));
        }
    }
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}

/// `<status> <body>` with sorted keys and integral floats printed as
/// integers.
pub fn canonical_response(status: u16, body: &Value) -> String {
    let mut s = format!("{status} ");
    write_canonical(body, &mut s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn worked_examples() {
        assert_eq!(hamming_similarity("abcd", "abcd").unwrap().percent, 100.0);
        assert_eq!(hamming_similarity("abcd", "abce").unwrap().percent, 75.0);
        let s = hamming_similarity("ab", "abc").unwrap();
        assert_eq!((s.mismatches, s.length), (1, 3));
        assert!((s.percent - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(hamming_similarity("", "a").unwrap_err(), EmptyResponse);
    }

    #[test]
    fn canonical_form_ignores_key_order_and_float_noise() {
        let a = json!({"b": 1, "a": 2.0});
        let b = json!({"a": 2, "b": 1.0});
        assert_eq!(canonical_response(200, &a), canonical_response(200, &b));
        assert_eq!(canonical_response(200, &a), "200 {\"a\":2,\"b\":1}");
    }
}
