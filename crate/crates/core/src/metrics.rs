//! Partition agreement scores.

use std::collections::BTreeMap;

/// Normalized mutual information of two labelings, `I / sqrt(H_a H_b)`.
/// Two single-cluster labelings score 1; one single cluster against a
/// non-trivial labeling scores 0.
pub fn nmi(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    if a.is_empty() {
        return 1.0;
    }
    let mut joint: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut ca: BTreeMap<u32, usize> = BTreeMap::new();
    let mut cb: BTreeMap<u32, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    if ca.len() == 1 && cb.len() == 1 {
        return 1.0;
    }
    if ca.len() == 1 || cb.len() == 1 {
        return 0.0;
    }
    let n = a.len() as f64;
    let entropy = |c: &BTreeMap<u32, usize>| -c.values().map(|&k| k as f64 / n * (k as f64 / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &k)| {
            let p = k as f64 / n;
            p * (p * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_up_to_relabeling() {
        assert!((nmi(&[0, 0, 1, 1], &[5, 5, 2, 2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_labelings() {
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).abs() < 1e-12);
    }

    #[test]
    fn partial_agreement() {
        // H(a) = ln 2, H(b) = 1.5 ln 2, I = ln 2
        let v = nmi(&[0, 0, 1, 1], &[0, 1, 2, 2]);
        let expected = 2f64.ln() / (2f64.ln() * 1.5 * 2f64.ln()).sqrt();
        assert!((v - expected).abs() < 1e-12);
    }
}
