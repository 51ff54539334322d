//! Largest-remainder apportionment.

use crate::dialogue_model::FlowCategory;

/// Splits `total` proportionally to `weights` so the parts sum to `total`
/// exactly. Leftover units go to the largest fractional parts; equal
/// fractions favour the earlier weight.
pub fn largest_remainder(total: u64, weights: &[u64]) -> Vec<u64> {
    let denom: u64 = weights.iter().sum();
    if denom == 0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<u128> = weights.iter().map(|&w| total as u128 * w as u128).collect();
    let mut parts: Vec<u64> = quotas.iter().map(|q| (q / denom as u128) as u64).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] % denom as u128;
        let rb = quotas[b] % denom as u128;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let leftover = total - parts.iter().sum::<u64>();
    for &i in order.iter().take(leftover as usize) {
        parts[i] += 1;
    }
    parts
}

/// Category counts for a domain with `total` samples, in
/// [`FlowCategory::ALL`] order.
pub fn category_counts(total: u64) -> Vec<(FlowCategory, u64)> {
    let weights: Vec<u64> = FlowCategory::ALL.iter().map(|c| c.percent()).collect();
    FlowCategory::ALL
        .iter()
        .copied()
        .zip(largest_remainder(total, &weights))
        .collect()
}
