#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("cliff's delta needs two non-empty samples")]
pub struct EmptySample;

/// `(#(a > b) - #(a < b)) / (|a| |b|)` over all pairs, counted by binary
/// search on a sorted copy of `b`.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64, EmptySample> {
    if a.is_empty() || b.is_empty() {
        return Err(EmptySample);
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&y| y < x);
        let not_above = sorted.partition_point(|&y| y <= x);
        let above = sorted.len() - not_above;
        dominance += below as i64 - above as i64;
    }
    Ok(dominance as f64 / (a.len() as f64 * b.len() as f64))
}

/// Conventional magnitude labels.
pub fn magnitude(delta: f64) -> &'static str {
    let d = delta.abs();
    if d < 0.147 {
        "negligible"
    } else if d < 0.33 {
        "small"
    } else if d < 0.474 {
        "medium"
    } else {
        "large"
    }
}
