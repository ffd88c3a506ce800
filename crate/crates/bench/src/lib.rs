//! Benchmark fixtures shared by the criterion targets.

use std::f64::consts::PI;

use sphereflow_core::{make_domain, normalized, Domain, Field};

/// Unit-norm smooth field on `(0, π)^d` with `n` interior nodes per axis.
pub fn fixture(d: usize, n: usize) -> (Domain, Field) {
    let domain = make_domain(d, &vec![PI; d], &vec![n; d]).expect("valid benchmark domain");
    let u = Field::from_fn(&domain, |x| x.iter().map(|&xi| xi.sin() + 0.3 * (3.0 * xi).sin()).product());
    let u = normalized(&domain, &u).expect("nonzero fixture");
    (domain, u)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_is_unit() {
        let (d, u) = super::fixture(2, 15);
        assert!((sphereflow_core::l2_norm(&d, &u).unwrap() - 1.0).abs() < 1e-12);
    }
}
