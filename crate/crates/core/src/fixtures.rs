//! Canonical example networks and a randomized generator, shared by the test
//! suites and handy for demos.

use crate::linalg::Mat;
use crate::model::NetworkSpec;
use crate::rng::SplitMix64;

/// Two-resource, three-class network: classes 1 and 2 each use one resource,
/// class 3 uses both. With unit rates the capacity is (2, 2) and the drift
/// comes out to (-2, -2).
pub fn two_link(h: [f64; 3]) -> NetworkSpec {
    NetworkSpec::new(
        Mat::from_rows(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]),
        vec![2.0, 2.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, 1.0],
        h.to_vec(),
    )
    .unwrap()
}

/// Smallest possible network: one class on one resource.
pub fn single_class() -> NetworkSpec {
    NetworkSpec::new(
        Mat::from_rows(vec![vec![1.0]]),
        vec![1.0],
        vec![1.0],
        vec![1.0],
        vec![0.0],
        vec![1.0],
        vec![1.0],
        vec![1.0],
        vec![1.0],
    )
    .unwrap()
}

/// Deterministic random valid network with `n_resources <= max_resources`
/// and `n_classes <= max_classes`. The incidence matrix starts from an
/// identity block (so local traffic holds), capacities are set to `K rho`
/// exactly, and the perturbations keep `theta < 0`, so `validate()` always
/// passes on the output.
pub fn random_valid(seed: u64, max_resources: usize, max_classes: usize) -> NetworkSpec {
    let mut rng = SplitMix64::new(seed);
    let n_res = 1 + (rng.next_u64() as usize) % max_resources;
    let extra_max = max_classes.saturating_sub(n_res);
    let n_extra = if extra_max == 0 { 0 } else { (rng.next_u64() as usize) % (extra_max + 1) };
    let n_cls = n_res + n_extra;

    let mut rows = vec![vec![0.0; n_cls]; n_res];
    for i in 0..n_res {
        rows[i][i] = 1.0;
    }
    for j in n_res..n_cls {
        loop {
            let mut any = false;
            for (i, row) in rows.iter_mut().enumerate() {
                let bit = rng.uniform01() < 0.5;
                row[j] = if bit { 1.0 } else { 0.0 };
                let _ = i;
                any |= bit;
            }
            if any {
                break;
            }
        }
    }

    let unif = |rng: &mut SplitMix64, lo: f64, hi: f64| lo + (hi - lo) * rng.uniform01();
    let alpha: Vec<f64> = (0..n_cls).map(|_| unif(&mut rng, 0.5, 1.5)).collect();
    let beta: Vec<f64> = (0..n_cls).map(|_| unif(&mut rng, 0.8, 1.5)).collect();
    let alpha_bar = vec![0.0; n_cls];
    // positive beta_bar with alpha_bar = 0 gives eta < 0, hence theta < 0
    let beta_bar: Vec<f64> = (0..n_cls).map(|_| unif(&mut rng, 0.1, 0.3)).collect();
    let sigma_u: Vec<f64> = alpha.iter().map(|a| 1.0 / a).collect();
    let sigma_v: Vec<f64> = beta.iter().map(|b| 1.0 / b).collect();
    let holding_cost: Vec<f64> = (0..n_cls).map(|_| unif(&mut rng, 0.5, 2.0)).collect();

    let k = Mat::from_rows(rows);
    let rho: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a / b).collect();
    let capacity = k.matvec(&rho);
    NetworkSpec::new(k, capacity, alpha, beta, alpha_bar, beta_bar, sigma_u, sigma_v, holding_cost)
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_are_valid() {
        for seed in 0..50 {
            let spec = random_valid(seed, 4, 8);
            let report = spec.validate();
            assert!(report.is_valid(), "seed {seed}: {}", report.render());
        }
    }
}
