use crate::trace::LabelScheme;

const BINOMIAL_8: [u64; 9] = [1, 8, 28, 56, 70, 56, 28, 8, 1];

/// Per-class generation counts summing to `total`.
///
/// Hamming-weight counts follow the binomial law of a uniform byte, rounded
/// by largest remainder with ties going to the lower class. Every other
/// scheme is split evenly, extra units going to the lower classes.
pub fn allocate_class_counts(scheme: LabelScheme, total: usize) -> Vec<usize> {
    match scheme {
        LabelScheme::HammingWeight => largest_remainder(&BINOMIAL_8, total),
        _ => {
            let k = scheme.n_classes();
            (0..k)
                .map(|c| total / k + usize::from(c < total % k))
                .collect()
        }
    }
}

/// Apportions `total` proportionally to integer `weights`.
fn largest_remainder(weights: &[u64], total: usize) -> Vec<usize> {
    let denom: u64 = weights.iter().sum();
    let t = total as u64;
    let mut counts: Vec<usize> = weights.iter().map(|&w| (t * w / denom) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // exact remainders as integers; stable sort keeps lower index first on ties
    order.sort_by_key(|&i| std::cmp::Reverse(t * weights[i] % denom));
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}
