//! Log-combinatorics used by the description length.

use std::f64::consts::PI;
use std::sync::OnceLock;

const FACT_TABLE: usize = 1 << 16;

fn fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..FACT_TABLE).map(|k| libm::lgamma(k as f64 + 1.0)).collect())
}

/// `ln k!`
pub fn ln_fact(k: u64) -> f64 {
    if (k as usize) < FACT_TABLE {
        fact_table()[k as usize]
    } else {
        libm::lgamma(k as f64 + 1.0)
    }
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binom(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

/// `ln ((n, k))`, the number of multisets of size `k` drawn from `n` kinds.
pub fn ln_multiset(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    ln_binom(n + k - 1, k)
}

/// Largest `m` for which `q(m, n)` is tabulated exactly.
pub const EXACT_PARTITIONS: usize = 1000;

fn partition_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let size = EXACT_PARTITIONS + 1;
        // q[m * size + n]: partitions of m into at most n parts
        let mut q = vec![0.0f64; size * size];
        for n in 0..size {
            q[n] = 1.0;
        }
        for m in 1..size {
            for n in 1..size {
                let fewer = q[m * size + n - 1];
                let with_n = if n <= m { q[(m - n) * size + n] } else { 0.0 };
                q[m * size + n] = fewer + with_n;
            }
        }
        q.iter().map(|v| v.ln()).collect()
    })
}

/// Dilogarithm `Li2(x)` for `x` in `[0, 1]`.
pub fn dilog(x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return PI * PI / 6.0;
    }
    if x > 0.5 {
        return PI * PI / 6.0 - x.ln() * (1.0 - x).ln() - dilog(1.0 - x);
    }
    let mut sum = 0.0;
    let mut power = x;
    for k in 1..200u32 {
        let term = power / (k as f64 * k as f64);
        sum += term;
        if term < 1e-18 {
            break;
        }
        power *= x;
    }
    sum
}

fn solve_v(u: f64) -> f64 {
    let mut v = u;
    for _ in 0..10_000 {
        let next = u * dilog(1.0 - (-v).exp()).sqrt();
        let delta = (next - v).abs();
        v = next;
        if delta < 1e-10 {
            break;
        }
    }
    v
}

/// Asymptotic `ln q(m, n)` (Szekeres), used above the exact table.
pub fn ln_partitions_approx(m: u64, n: u64) -> f64 {
    let n = n.min(m);
    let mf = m as f64;
    if (n as f64) < mf.powf(0.25) {
        return ln_binom(m - 1, n - 1) - ln_fact(n);
    }
    let u = n as f64 / mf.sqrt();
    let v = solve_v(u);
    let lf = v.ln() - (-(-v).exp() * (1.0 + u * u / 2.0)).ln_1p() / 2.0 - 1.5 * 2f64.ln() - u.ln() - PI.ln();
    let g = 2.0 * v / u - u * (-(-v).exp()).ln_1p();
    lf - mf.ln() + mf.sqrt() * g
}

/// `ln q(m, n)`: log of the number of partitions of `m` into at most `n` parts.
pub fn ln_partitions(m: u64, n: u64) -> f64 {
    let n = n.min(m);
    if m == 0 || n == 1 {
        return 0.0;
    }
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    if (m as usize) <= EXACT_PARTITIONS {
        partition_table()[m as usize * (EXACT_PARTITIONS + 1) + n as usize]
    } else {
        ln_partitions_approx(m, n)
    }
}
