use super::MetricsError;

/// Unbiased pass@k for `c` correct samples out of `n`: `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as a running product so large `n` never overflows. `k == 1` returns `c / n`
/// exactly.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if n == 0 || k == 0 || k > n || c > n {
        return Err(MetricsError::InvalidCounts { n, c, k });
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i = n-c+1}^{n} (1 - k / i)
    let mut miss = 1.0f64;
    for i in (n - c + 1)..=n {
        miss *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - miss)
}
