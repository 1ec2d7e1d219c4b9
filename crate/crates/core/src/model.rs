//! Network topology and heavy-traffic parameterization.
//!
//! A network couples `J` job classes to `I` resources through a 0/1
//! incidence matrix `K`: class `j` is processed simultaneously by every
//! resource `i` with `K[i][j] = 1`. The heavy-traffic family indexed by the
//! traffic parameter `r` is realized exactly as
//! `alpha^r = alpha + alpha_bar / r` and `beta^r = beta + beta_bar / r`,
//! which makes `r (alpha^r - alpha) = alpha_bar` hold without tolerance.

use crate::linalg::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the capacity balance `C = K rho`.
pub const CAPACITY_BALANCE_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("traffic parameter r = {0} must be >= 1")]
    TrafficParameter(f64),
    #[error("perturbed rate {name}[{index}] = {value} is not positive at r = {r}")]
    PerturbedRate { name: &'static str, index: usize, value: f64, r: f64 },
    #[error("distribution family cannot match moments: {0}")]
    Distribution(String),
}

/// Static description of a resource-sharing network and its limiting
/// heavy-traffic parameters. Immutable after construction; shared read-only
/// by concurrent simulation workers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Resource-by-class incidence matrix (entries 0 or 1).
    pub k: Mat,
    /// Per-resource capacity, work per unit time.
    pub capacity: Vec<f64>,
    /// Limiting arrival rates, jobs per unit time.
    pub alpha: Vec<f64>,
    /// Limiting reciprocal mean job sizes, 1/work.
    pub beta: Vec<f64>,
    /// First-order arrival-rate perturbations.
    pub alpha_bar: Vec<f64>,
    /// First-order service-rate perturbations.
    pub beta_bar: Vec<f64>,
    /// Limiting interarrival-time standard deviations.
    pub sigma_u: Vec<f64>,
    /// Limiting job-size standard deviations.
    pub sigma_v: Vec<f64>,
    /// Holding cost per job per unit time.
    pub holding_cost: Vec<f64>,
}

/// One failed standing condition, naming the condition and offending index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionViolation {
    pub condition: String,
    pub index: Option<usize>,
    pub message: String,
}

/// Outcome of [`NetworkSpec::validate`]. `theta` is reported for downstream
/// use whenever it is computable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<ConditionViolation>,
    pub theta: Vec<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        if self.is_valid() {
            return "all standing conditions hold".to_string();
        }
        self.violations
            .iter()
            .map(|v| v.message.clone())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl NetworkSpec {
    /// Builds a spec, checking shape consistency only. Standing conditions
    /// are checked by [`NetworkSpec::validate`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: Mat,
        capacity: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        alpha_bar: Vec<f64>,
        beta_bar: Vec<f64>,
        sigma_u: Vec<f64>,
        sigma_v: Vec<f64>,
        holding_cost: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let (i, j) = (k.rows(), k.cols());
        if i == 0 || j == 0 {
            return Err(ModelError::Dimension("incidence matrix is empty".into()));
        }
        let check = |name: &str, len: usize, expected: usize| {
            if len != expected {
                Err(ModelError::Dimension(format!(
                    "{name} has length {len}, expected {expected}"
                )))
            } else {
                Ok(())
            }
        };
        check("capacity", capacity.len(), i)?;
        check("alpha", alpha.len(), j)?;
        check("beta", beta.len(), j)?;
        check("alpha_bar", alpha_bar.len(), j)?;
        check("beta_bar", beta_bar.len(), j)?;
        check("sigma_u", sigma_u.len(), j)?;
        check("sigma_v", sigma_v.len(), j)?;
        check("holding_cost", holding_cost.len(), j)?;
        Ok(NetworkSpec {
            k,
            capacity,
            alpha,
            beta,
            alpha_bar,
            beta_bar,
            sigma_u,
            sigma_v,
            holding_cost,
        })
    }

    pub fn n_resources(&self) -> usize {
        self.k.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.k.cols()
    }

    /// Limiting load vector `rho = alpha / beta` (componentwise).
    pub fn rho(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a / b).collect()
    }

    pub fn rho_star(&self) -> f64 {
        self.rho().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `eta = beta^{-2}(alpha_bar * beta - alpha * beta_bar)` componentwise.
    pub fn eta(&self) -> Vec<f64> {
        (0..self.n_classes())
            .map(|j| {
                (self.alpha_bar[j] * self.beta[j] - self.alpha[j] * self.beta_bar[j])
                    / (self.beta[j] * self.beta[j])
            })
            .collect()
    }

    /// Limit drift of the workload process, `theta = K eta`.
    pub fn theta(&self) -> Vec<f64> {
        self.k.matvec(&self.eta())
    }

    /// Diagonal of the limiting mean-job-size matrix `M` (entries `1/beta`).
    pub fn m_diag(&self) -> Vec<f64> {
        self.beta.iter().map(|b| 1.0 / b).collect()
    }

    /// For each resource, the lowest-index class served by that resource
    /// alone, when one exists.
    pub fn local_class(&self, resource: usize) -> Option<usize> {
        (0..self.n_classes()).find(|&j| {
            self.k.get(resource, j) == 1.0
                && (0..self.n_resources()).all(|l| l == resource || self.k.get(l, j) == 0.0)
        })
    }

    /// Checks the standing conditions: binary incidence with no empty
    /// column, exact capacity balance `C = K rho`, negative drift
    /// `theta < 0`, local traffic, and positivity of all rate, deviation,
    /// and cost parameters. An empty report means the spec is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (n_res, n_cls) = (self.n_resources(), self.n_classes());

        for i in 0..n_res {
            for j in 0..n_cls {
                let v = self.k.get(i, j);
                if v != 0.0 && v != 1.0 {
                    violations.push(ConditionViolation {
                        condition: "incidence-binary".into(),
                        index: Some(j),
                        message: format!("K[{i}][{j}] = {v} is not 0 or 1"),
                    });
                }
            }
        }
        for j in 0..n_cls {
            if (0..n_res).all(|i| self.k.get(i, j) == 0.0) {
                violations.push(ConditionViolation {
                    condition: "incidence-column-nonzero".into(),
                    index: Some(j),
                    message: format!("column {j} of K is zero: class {j} uses no resource"),
                });
            }
        }

        let mut check_positive = |name: &str, v: &[f64]| {
            for (idx, &x) in v.iter().enumerate() {
                if x <= 0.0 {
                    violations.push(ConditionViolation {
                        condition: format!("{name}-positive"),
                        index: Some(idx),
                        message: format!("{name}[{idx}] = {x} must be positive"),
                    });
                }
            }
        };
        check_positive("capacity", &self.capacity);
        check_positive("alpha", &self.alpha);
        check_positive("beta", &self.beta);
        check_positive("sigma_u", &self.sigma_u);
        check_positive("sigma_v", &self.sigma_v);
        check_positive("holding_cost", &self.holding_cost);

        let positivity_ok = violations.is_empty();
        if positivity_ok {
            let k_rho = self.k.matvec(&self.rho());
            for i in 0..n_res {
                let scale = self.capacity[i].abs().max(1.0);
                if (k_rho[i] - self.capacity[i]).abs() > CAPACITY_BALANCE_RTOL * scale {
                    violations.push(ConditionViolation {
                        condition: "heavy-traffic-capacity".into(),
                        index: Some(i),
                        message: format!(
                            "C != K rho at resource {i}: C[{i}] = {} but (K rho)[{i}] = {}",
                            self.capacity[i], k_rho[i]
                        ),
                    });
                }
            }
            let theta = self.theta();
            for (i, &t) in theta.iter().enumerate() {
                if t >= 0.0 {
                    violations.push(ConditionViolation {
                        condition: "heavy-traffic-drift".into(),
                        index: Some(i),
                        message: format!("theta not < 0 at resource {i}: theta[{i}] = {t}"),
                    });
                }
            }
        }

        for i in 0..n_res {
            if self.local_class(i).is_none() {
                violations.push(ConditionViolation {
                    condition: "local-traffic".into(),
                    index: Some(i),
                    message: format!("resource {i} has no class served by it alone"),
                });
            }
        }

        ValidationReport { violations, theta: self.theta() }
    }
}

/// Parameters of the `r`-th system in the heavy-traffic family.
#[derive(Clone, Debug)]
pub struct TrafficInstance {
    pub r: f64,
    pub alpha_r: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub rho_r: Vec<f64>,
    /// Diagonal of `M^r` (entries `1/beta^r`).
    pub m_r_diag: Vec<f64>,
}

impl TrafficInstance {
    pub fn new(spec: &NetworkSpec, r: f64) -> Result<Self, ModelError> {
        if !(r >= 1.0) {
            return Err(ModelError::TrafficParameter(r));
        }
        let alpha_r: Vec<f64> = spec
            .alpha
            .iter()
            .zip(&spec.alpha_bar)
            .map(|(a, ab)| a + ab / r)
            .collect();
        let beta_r: Vec<f64> = spec
            .beta
            .iter()
            .zip(&spec.beta_bar)
            .map(|(b, bb)| b + bb / r)
            .collect();
        for (j, &a) in alpha_r.iter().enumerate() {
            if a <= 0.0 {
                return Err(ModelError::PerturbedRate { name: "alpha^r", index: j, value: a, r });
            }
        }
        for (j, &b) in beta_r.iter().enumerate() {
            if b <= 0.0 {
                return Err(ModelError::PerturbedRate { name: "beta^r", index: j, value: b, r });
            }
        }
        let rho_r: Vec<f64> = alpha_r.iter().zip(&beta_r).map(|(a, b)| a / b).collect();
        let m_r_diag: Vec<f64> = beta_r.iter().map(|b| 1.0 / b).collect();
        Ok(TrafficInstance { r, alpha_r, beta_r, rho_r, m_r_diag })
    }
}

/// Primitive distribution families. Every member has strictly positive
/// support and a moment-generating function finite near the origin, which is
/// what the heavy-traffic estimates require; heavy-tailed families are
/// deliberately not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionFamily {
    Exponential,
    Erlang,
    Uniform,
}

/// A family fitted to the limiting `(mean, sd)` pair of one primitive
/// sequence. The shape (Erlang stage count, uniform relative width) is fixed
/// by the limit; per-`r` sampling rescales to the exact mean `1/alpha^r` (or
/// `1/beta^r`), so the standard deviation tracks the limit like `O(1/r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FittedDistribution {
    Exponential,
    /// `k` independent exponential stages.
    Erlang { k: u32 },
    /// Uniform on `mean * [lo_rel, hi_rel]` with `lo_rel > 0`.
    Uniform { lo_rel: f64, hi_rel: f64 },
}

impl DistributionFamily {
    /// Fits the family shape to a limiting mean and standard deviation.
    pub fn fit(self, mean: f64, sd: f64) -> Result<FittedDistribution, ModelError> {
        if mean <= 0.0 || sd <= 0.0 {
            return Err(ModelError::Distribution(format!(
                "mean {mean} and sd {sd} must be positive"
            )));
        }
        let cv = sd / mean;
        match self {
            DistributionFamily::Exponential => {
                if (cv - 1.0).abs() > 1e-6 {
                    return Err(ModelError::Distribution(format!(
                        "exponential requires sd = mean, got coefficient of variation {cv}"
                    )));
                }
                Ok(FittedDistribution::Exponential)
            }
            DistributionFamily::Erlang => {
                let k_real = 1.0 / (cv * cv);
                let k = k_real.round();
                if k < 1.0 || (k_real - k).abs() > 1e-6 * k {
                    return Err(ModelError::Distribution(format!(
                        "erlang requires (mean/sd)^2 to be a positive integer, got {k_real}"
                    )));
                }
                Ok(FittedDistribution::Erlang { k: k as u32 })
            }
            DistributionFamily::Uniform => {
                let half_width = 3f64.sqrt() * cv;
                let lo_rel = 1.0 - half_width;
                if lo_rel <= 0.0 {
                    return Err(ModelError::Distribution(format!(
                        "uniform support would reach zero: need sd/mean < 1/sqrt(3), got {cv}"
                    )));
                }
                Ok(FittedDistribution::Uniform { lo_rel, hi_rel: 1.0 + half_width })
            }
        }
    }
}

impl FittedDistribution {
    /// Mean-`m` standard deviation implied by the fitted shape.
    pub fn sd_at_mean(&self, mean: f64) -> f64 {
        match self {
            FittedDistribution::Exponential => mean,
            FittedDistribution::Erlang { k } => mean / (*k as f64).sqrt(),
            FittedDistribution::Uniform { lo_rel, hi_rel } => {
                mean * (hi_rel - lo_rel) / 12f64.sqrt()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_link;
    use crate::linalg::Mat;

    #[test]
    fn two_link_network_is_valid_with_expected_drift() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let report = spec.validate();
        assert!(report.is_valid(), "{}", report.render());
        assert_eq!(report.theta, vec![-2.0, -2.0]);
    }

    #[test]
    fn capacity_mismatch_is_reported_with_resource_index() {
        let mut spec = two_link([1.0, 1.0, 1.0]);
        spec.capacity = vec![2.0, 3.0];
        let report = spec.validate();
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| v.condition == "heavy-traffic-capacity" && v.index == Some(1)));
        assert!(report.render().contains("C != K rho at resource 1"));
    }

    #[test]
    fn positive_drift_is_reported() {
        let mut spec = two_link([1.0, 1.0, 1.0]);
        spec.beta_bar = vec![-1.0, -1.0, -1.0];
        let report = spec.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.condition == "heavy-traffic-drift"));
        assert!(report.render().contains("theta not < 0"));
        assert_eq!(report.theta, vec![2.0, 2.0]);
    }

    #[test]
    fn missing_local_traffic_is_reported() {
        // class 2 is the only class of resource 2 but uses both resources
        let spec = NetworkSpec::new(
            Mat::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]),
            vec![2.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let report = spec.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.condition == "local-traffic" && v.index == Some(1)));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let err = NetworkSpec::new(
            Mat::from_rows(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]),
            vec![2.0],
            vec![1.0; 3],
            vec![1.0; 3],
            vec![0.0; 3],
            vec![1.0; 3],
            vec![1.0; 3],
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::Dimension(_)));
    }

    #[test]
    fn instance_at_r_ten() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let inst = TrafficInstance::new(&spec, 10.0).unwrap();
        for j in 0..3 {
            assert!((inst.beta_r[j] - 1.1).abs() < 1e-15);
            assert!((inst.rho_r[j] - 1.0 / 1.1).abs() < 1e-15);
            assert!((inst.alpha_r[j] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_r_converges_to_rho() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let inst = TrafficInstance::new(&spec, 1e9).unwrap();
        let rho = spec.rho();
        for j in 0..3 {
            assert!((inst.rho_r[j] - rho[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn small_r_rejected_when_rates_turn_nonpositive() {
        assert!(matches!(
            TrafficInstance::new(&two_link([1.0; 3]), 0.5),
            Err(ModelError::TrafficParameter(_))
        ));
        let mut spec = two_link([1.0, 1.0, 1.0]);
        spec.alpha_bar = vec![-1.0, 0.0, 0.0];
        // r = 1 makes alpha^r_1 = 0, which is rejected
        assert!(matches!(
            TrafficInstance::new(&spec, 1.0),
            Err(ModelError::PerturbedRate { .. })
        ));
    }

    #[test]
    fn distribution_fitting() {
        assert_eq!(
            DistributionFamily::Exponential.fit(2.0, 2.0).unwrap(),
            FittedDistribution::Exponential
        );
        assert!(DistributionFamily::Exponential.fit(2.0, 1.0).is_err());
        assert_eq!(
            DistributionFamily::Erlang.fit(1.0, 0.5).unwrap(),
            FittedDistribution::Erlang { k: 4 }
        );
        assert!(DistributionFamily::Erlang.fit(1.0, 0.7).is_err());
        let FittedDistribution::Uniform { lo_rel, hi_rel } =
            DistributionFamily::Uniform.fit(1.0, 0.25).unwrap()
        else {
            panic!("expected uniform fit");
        };
        assert!(lo_rel > 0.0 && hi_rel > lo_rel);
        // cv = 1/sqrt(3) puts the lower endpoint at zero: rejected
        assert!(DistributionFamily::Uniform.fit(1.0, 1.0 / 3f64.sqrt()).is_err());
    }
}
