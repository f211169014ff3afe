use super::MetricsError;

/// Kendall's τ-b in O(n log n) by Knight's method: sort by `(x, y)`, then
/// count the inversions of `y` with a merge sort.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooFewInputs { needed: 2, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("rank input"));
    }

    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n * (n - 1) / 2) as i64;
    let tied_pairs = |groups: &mut dyn Iterator<Item = usize>| -> i64 { groups.map(|g| (g * (g - 1) / 2) as i64).sum() };

    let n1 = tied_pairs(&mut run_lengths(&pairs, |a, b| a.0 == b.0));
    let n3 = tied_pairs(&mut run_lengths(&pairs, |a, b| a == b));

    let mut y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut y) as i64;
    let n2 = tied_pairs(&mut run_lengths(&y, |a, b| a == b));

    let numerator = n0 - n1 - n2 + n3 - 2 * swaps;
    let denominator = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denominator == 0.0 {
        return Err(MetricsError::AllTied);
    }
    Ok(numerator as f64 / denominator)
}

fn run_lengths<T>(v: &[T], same: impl Fn(&T, &T) -> bool) -> impl Iterator<Item = usize> + '_ {
    let mut runs = Vec::new();
    let mut len = 1;
    for i in 1..=v.len() {
        if i < v.len() && same(&v[i - 1], &v[i]) {
            len += 1;
        } else {
            runs.push(len);
            len = 1;
        }
    }
    if v.is_empty() {
        runs.clear();
    }
    runs.into_iter()
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            count += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricsError::AllTied));
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }
}
