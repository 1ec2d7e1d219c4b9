//! Offline policy synthesis.
//!
//! From a validated network this module derives everything the runtime
//! policy needs:
//!
//! * an orthonormal basis of `ker(K)` whose last column `u` is the
//!   cost-reducing direction (`h beta . u < 0`), or a `trivial` marker when
//!   every kernel direction is cost-neutral;
//! * the set `M` of empty/nonempty queue patterns `z` from which holding
//!   cost can be reduced at fixed workload;
//! * for `z` in `M`, the workload-neutral cost-reduction vector `vc(z)`;
//! * for every `z`, the boundary-repulsion vector `vb(z)` that pushes
//!   near-empty queues up while keeping busy resources at full capacity.
//!
//! All tables are finite (indexed by the `2^J` patterns), computed once, and
//! shared read-only by simulation workers.

use crate::linalg::{self, dot, norm2, scale};
use crate::lp::{self, Bound, Constraint, Problem, Relation, Solution};
use crate::model::NetworkSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tables are dense in `2^J`, so cap the class count at something a desk
/// machine can hold comfortably.
pub const MAX_CLASSES_FOR_TABLES: usize = 16;

/// Margin used to realize strict LP inequalities.
pub const STRICT_MARGIN: f64 = 1e-6;

const ORTHO_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("network has {0} classes; policy tables support at most {MAX_CLASSES_FOR_TABLES}")]
    TooManyClasses(usize),
    #[error("resource {0} has no local class; synthesize requires a validated spec")]
    NoLocalClass(usize),
    #[error("pattern {0:#b} is in M but its direction LP failed: {1}")]
    VcInconsistent(u32, String),
    #[error("LP solver failed: {0}")]
    Lp(#[from] lp::LpError),
}

/// Queue-emptiness pattern, bit `j` set when class `j` counts as near-empty.
pub type ZMask = u32;

pub fn zmask_to_vec(mask: ZMask, n_classes: usize) -> Vec<u8> {
    (0..n_classes).map(|j| ((mask >> j) & 1) as u8).collect()
}

pub fn zmask_from_bits(bits: &[u8]) -> ZMask {
    bits.iter()
        .enumerate()
        .fold(0, |m, (j, &b)| if b != 0 { m | (1 << j) } else { m })
}

/// Orthonormal basis of `ker(K)` split into the cost-neutral part and the
/// cost-reducing direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelBasis {
    columns: Vec<Vec<f64>>,
    trivial: bool,
    lambda: f64,
}

impl KernelBasis {
    /// Dimension of `ker(K)`.
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Orthonormal kernel basis columns; when nontrivial the last column is
    /// the cost direction and all earlier columns are cost-neutral.
    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// True when `h beta` is orthogonal to all of `ker(K)`, i.e. every queue
    /// vector is already cost-minimal for its workload.
    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// `h beta . u` for the cost direction `u`; zero in the trivial case.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The cost-reducing direction, present only in the nontrivial case.
    pub fn cost_direction(&self) -> Option<&[f64]> {
        if self.trivial {
            None
        } else {
            self.columns.last().map(Vec::as_slice)
        }
    }
}

/// Computes the kernel basis. Deterministic: the null-space seed vectors come
/// from Gaussian elimination in fixed column order and are orthonormalized by
/// Gram-Schmidt; the cost direction's sign is normalized so `lambda < 0`.
pub fn compute_basis(spec: &NetworkSpec) -> KernelBasis {
    let seed = linalg::nullspace_basis(&spec.k, ORTHO_TOL);
    let ortho = linalg::gram_schmidt(&seed, ORTHO_TOL);
    let h_beta: Vec<f64> = spec
        .holding_cost
        .iter()
        .zip(&spec.beta)
        .map(|(h, b)| h * b)
        .collect();

    // projection of h*beta onto ker(K)
    let mut proj = vec![0.0; spec.n_classes()];
    for u in &ortho {
        linalg::axpy(&mut proj, dot(&h_beta, u), u);
    }
    let pnorm = norm2(&proj);
    if pnorm <= ORTHO_TOL * norm2(&h_beta).max(1.0) {
        return KernelBasis { columns: ortho, trivial: true, lambda: 0.0 };
    }

    let u_last = scale(&proj, -1.0 / pnorm);
    // rebuild the cost-neutral columns orthogonal to u_last
    let mut stack = vec![u_last.clone()];
    stack.extend(ortho.iter().cloned());
    let rebuilt = linalg::gram_schmidt(&stack, ORTHO_TOL);
    debug_assert_eq!(rebuilt.len(), ortho.len());
    let mut columns: Vec<Vec<f64>> = rebuilt.into_iter().skip(1).collect();
    columns.push(u_last.clone());
    let lambda = dot(&h_beta, &u_last);
    debug_assert!(lambda < 0.0);
    KernelBasis { columns, trivial: false, lambda }
}

/// Resources that serve at least one class marked nonempty by `z`.
pub fn active_resources(spec: &NetworkSpec, z: ZMask) -> Vec<usize> {
    (0..spec.n_resources())
        .filter(|&i| {
            (0..spec.n_classes())
                .any(|j| spec.k.get(i, j) == 1.0 && (z >> j) & 1 == 0)
        })
        .collect()
}

/// Solves `max v . u` over `v` in `ker(K)` with `v_j >= 0` where `z_j = 1`
/// and a unit box `|v|_inf <= 1`. The optimum decides membership of `z` in
/// `M` (positive value within margin) and doubles as the canonical direction
/// for `vc(z)`.
fn direction_lp(spec: &NetworkSpec, basis: &KernelBasis, z: ZMask) -> Result<Option<Vec<f64>>, KernelError> {
    let n = spec.n_classes();
    let u = basis
        .cost_direction()
        .expect("direction_lp requires a nontrivial basis");
    let mut p = Problem::maximize(u.to_vec());
    p.bounds = (0..n)
        .map(|j| if (z >> j) & 1 == 1 { Bound::NonNegative } else { Bound::Free })
        .collect();
    for i in 0..spec.n_resources() {
        p.constraints.push(Constraint::new(spec.k.row(i).to_vec(), Relation::Eq, 0.0));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        p.constraints.push(Constraint::new(e.clone(), Relation::Le, 1.0));
        if (z >> j) & 1 == 0 {
            p.constraints.push(Constraint::new(e, Relation::Ge, -1.0));
        }
    }
    match lp::solve(&p)? {
        Solution::Optimal { x, value } if value >= STRICT_MARGIN => Ok(Some(x)),
        Solution::Optimal { .. } => Ok(None),
        Solution::Infeasible => Err(KernelError::VcInconsistent(z, "infeasible".into())),
        Solution::Unbounded => Err(KernelError::VcInconsistent(z, "unbounded".into())),
    }
}

/// The configuration set `M`: patterns from which cost can be reduced while
/// keeping the workload fixed. Empty in the trivial case.
pub fn build_m_set(spec: &NetworkSpec, basis: &KernelBasis) -> Result<Vec<ZMask>, KernelError> {
    if basis.is_trivial() {
        return Ok(Vec::new());
    }
    let n = spec.n_classes();
    if n > MAX_CLASSES_FOR_TABLES {
        return Err(KernelError::TooManyClasses(n));
    }
    let mut m_set = Vec::new();
    for z in 0..(1u32 << n) {
        if direction_lp(spec, basis, z)?.is_some() {
            m_set.push(z);
        }
    }
    Ok(m_set)
}

/// Canonical `vc(z)`: the direction LP optimum shrunk so that
/// `rho - vc > rho*/2` holds componentwise with margin. Returns `None` when
/// `z` is not in `M`.
pub fn compute_vc(spec: &NetworkSpec, basis: &KernelBasis, z: ZMask) -> Result<Option<Vec<f64>>, KernelError> {
    if basis.is_trivial() {
        return Ok(None);
    }
    let Some(v) = direction_lp(spec, basis, z)? else {
        return Ok(None);
    };
    let rho = spec.rho();
    let rho_star = spec.rho_star();
    let mut t = 1.0f64;
    for (j, &vj) in v.iter().enumerate() {
        if vj > ORTHO_TOL {
            t = t.min((rho[j] - rho_star / 2.0 - STRICT_MARGIN) / vj);
        }
    }
    assert!(t > 0.0, "vc shrink factor must stay positive");
    Ok(Some(scale(&v, t)))
}

/// Constructive `vb(z)`: pick a local class for every active resource,
/// assign -J to the remaining nonempty classes and +1 to the remaining
/// near-empty ones, balance the local classes so active resources see zero
/// net adjustment, then rescale to the policy magnitude bound.
pub fn compute_vb(
    spec: &NetworkSpec,
    lambda_tilde: Option<f64>,
    z: ZMask,
) -> Result<Vec<f64>, KernelError> {
    let n = spec.n_classes();
    let nf = n as f64;
    let active = active_resources(spec, z);
    let mut local_of = vec![None; spec.n_resources()];
    for &i in &active {
        local_of[i] = Some(spec.local_class(i).ok_or(KernelError::NoLocalClass(i))?);
    }
    let mut role = vec![0i8; n]; // 0 = plain, 1 = balancing local class
    for &i in &active {
        role[local_of[i].unwrap()] = 1;
    }
    let mut v = vec![0.0; n];
    for j in 0..n {
        if role[j] == 1 {
            continue;
        }
        v[j] = if (z >> j) & 1 == 1 { 1.0 } else { -nf };
    }
    for &i in &active {
        let s = local_of[i].unwrap();
        let mut balance = 0.0;
        for j in 0..n {
            if j != s && spec.k.get(i, j) == 1.0 {
                balance += v[j];
            }
        }
        v[s] = -balance;
    }

    let raw_norm = norm2(&v);
    if raw_norm == 0.0 {
        return Ok(v);
    }
    let bound = vb_bound(spec, lambda_tilde);
    Ok(scale(&v, bound / raw_norm))
}

/// Magnitude bound for `vb`: `rho*/4`, tightened by `|lambda_tilde| / (4
/// |beta| |h|)` when cost reduction is in play, so the boundary push never
/// overwhelms the cost-reducing adjustment.
pub fn vb_bound(spec: &NetworkSpec, lambda_tilde: Option<f64>) -> f64 {
    let base = spec.rho_star() / 4.0;
    match lambda_tilde {
        Some(lt) => {
            base.min(lt.abs() / (4.0 * norm2(&spec.beta) * norm2(&spec.holding_cost)))
        }
        None => base,
    }
}

/// Immutable policy tables, shared read-only by all simulation workers.
#[derive(Clone, Debug)]
pub struct PolicyTables {
    pub basis: KernelBasis,
    n_classes: usize,
    m_set: Vec<ZMask>,
    vc: Vec<Option<Vec<f64>>>,
    vb: Vec<Vec<f64>>,
    lambda_c: Vec<Option<f64>>,
    lambda_tilde: Option<f64>,
    rho_star: f64,
}

impl PolicyTables {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Patterns in `M`, ascending by mask.
    pub fn m_set(&self) -> &[ZMask] {
        &self.m_set
    }

    pub fn in_m(&self, z: ZMask) -> bool {
        self.vc[z as usize].is_some()
    }

    pub fn vc(&self, z: ZMask) -> Option<&[f64]> {
        self.vc[z as usize].as_deref()
    }

    pub fn vb(&self, z: ZMask) -> &[f64] {
        &self.vb[z as usize]
    }

    pub fn lambda_c(&self, z: ZMask) -> Option<f64> {
        self.lambda_c[z as usize]
    }

    /// `max { lambda_c(z) : z in M }`; `None` when `M` is empty.
    pub fn lambda_tilde(&self) -> Option<f64> {
        self.lambda_tilde
    }

    pub fn rho_star(&self) -> f64 {
        self.rho_star
    }

    /// Checks every table invariant numerically; returns human-readable
    /// violations (empty means all hold).
    pub fn verify(&self, spec: &NetworkSpec) -> Vec<String> {
        let mut bad = Vec::new();
        let rho = spec.rho();
        let h_beta: Vec<f64> = spec
            .holding_cost
            .iter()
            .zip(&spec.beta)
            .map(|(h, b)| h * b)
            .collect();
        let bound = vb_bound(spec, self.lambda_tilde) + 1e-12;
        for z in 0..(1u32 << self.n_classes) {
            if let Some(vc) = self.vc(z) {
                let kvc = spec.k.matvec(vc);
                if kvc.iter().any(|x| x.abs() > 1e-10) {
                    bad.push(format!("K vc != 0 at z={z:#b}"));
                }
                for j in 0..self.n_classes {
                    if (z >> j) & 1 == 1 && vc[j] < -1e-12 {
                        bad.push(format!("vc_{j} < 0 on support of z={z:#b}"));
                    }
                }
                let u = self.basis.cost_direction().expect("vc implies nontrivial");
                if dot(vc, u) <= 0.0 {
                    bad.push(format!("vc . u <= 0 at z={z:#b}"));
                }
                for j in 0..self.n_classes {
                    if rho[j] - vc[j] <= self.rho_star / 2.0 {
                        bad.push(format!("rho - vc <= rho*/2 at z={z:#b}, class {j}"));
                    }
                }
                let lc = self.lambda_c(z).unwrap();
                if lc >= 0.0 {
                    bad.push(format!("lambda_c >= 0 at z={z:#b}"));
                }
                // workload-neutral exchange: h beta . vc equals lambda_c
                if (dot(&h_beta, vc) - lc).abs() > 1e-9 {
                    bad.push(format!("h beta . vc != lambda_c at z={z:#b}"));
                }
            }
            let vb = self.vb(z);
            if norm2(vb) > bound {
                bad.push(format!("|vb| exceeds bound at z={z:#b}"));
            }
            let kvb = spec.k.matvec(vb);
            for i in active_resources(spec, z) {
                if kvb[i].abs() > 1e-10 {
                    bad.push(format!("(K vb)_{i} != 0 at z={z:#b}"));
                }
            }
            for j in 0..self.n_classes {
                if (z >> j) & 1 == 1 && vb[j] <= 0.0 {
                    bad.push(format!("vb_{j} <= 0 on support of z={z:#b}"));
                }
            }
        }
        if let Some(lt) = self.lambda_tilde {
            if lt >= 0.0 {
                bad.push("lambda_tilde >= 0".into());
            }
            let max_lc = self
                .m_set
                .iter()
                .filter_map(|&z| self.lambda_c(z))
                .fold(f64::NEG_INFINITY, f64::max);
            if (max_lc - lt).abs() > 1e-12 {
                bad.push("lambda_tilde != max lambda_c".into());
            }
        }
        bad
    }
}

/// Runs the full offline synthesis for a validated spec.
pub fn synthesize(spec: &NetworkSpec) -> Result<PolicyTables, KernelError> {
    let n = spec.n_classes();
    if n > MAX_CLASSES_FOR_TABLES {
        return Err(KernelError::TooManyClasses(n));
    }
    let basis = compute_basis(spec);
    let size = 1usize << n;
    let mut vc = vec![None; size];
    let mut lambda_c = vec![None; size];
    let mut m_set = Vec::new();
    if !basis.is_trivial() {
        let u = basis.cost_direction().unwrap().to_vec();
        for z in 0..(size as u32) {
            if let Some(v) = compute_vc(spec, &basis, z)? {
                lambda_c[z as usize] = Some(basis.lambda() * dot(&v, &u));
                vc[z as usize] = Some(v);
                m_set.push(z);
            }
        }
    }
    let lambda_tilde = m_set
        .iter()
        .filter_map(|&z| lambda_c[z as usize])
        .fold(None, |acc: Option<f64>, lc| Some(acc.map_or(lc, |a| a.max(lc))));
    let mut vb = Vec::with_capacity(size);
    for z in 0..(size as u32) {
        vb.push(compute_vb(spec, lambda_tilde, z)?);
    }
    Ok(PolicyTables {
        basis,
        n_classes: n,
        m_set,
        vc,
        vb,
        lambda_c,
        lambda_tilde,
        rho_star: spec.rho_star(),
    })
}

/// Serialized form of [`PolicyTables`], stable across versions of the
/// in-memory layout.
#[derive(Serialize, Deserialize)]
pub struct PolicyTablesFile {
    pub format_version: u32,
    pub n_classes: usize,
    pub trivial: bool,
    pub lambda: f64,
    pub basis_columns: Vec<Vec<f64>>,
    pub m_set: Vec<Vec<u8>>,
    pub vc: Vec<PatternVector>,
    pub vb: Vec<PatternVector>,
    pub lambda_tilde: Option<f64>,
    pub rho_star: f64,
}

#[derive(Serialize, Deserialize)]
pub struct PatternVector {
    pub z: Vec<u8>,
    pub v: Vec<f64>,
}

pub const POLICY_TABLES_FORMAT_VERSION: u32 = 1;

impl PolicyTables {
    pub fn to_file(&self) -> PolicyTablesFile {
        PolicyTablesFile {
            format_version: POLICY_TABLES_FORMAT_VERSION,
            n_classes: self.n_classes,
            trivial: self.basis.is_trivial(),
            lambda: self.basis.lambda(),
            basis_columns: self.basis.columns().to_vec(),
            m_set: self.m_set.iter().map(|&z| zmask_to_vec(z, self.n_classes)).collect(),
            vc: self
                .m_set
                .iter()
                .map(|&z| PatternVector {
                    z: zmask_to_vec(z, self.n_classes),
                    v: self.vc(z).unwrap().to_vec(),
                })
                .collect(),
            vb: (0..(1u32 << self.n_classes))
                .map(|z| PatternVector { z: zmask_to_vec(z, self.n_classes), v: self.vb(z).to_vec() })
                .collect(),
            lambda_tilde: self.lambda_tilde,
            rho_star: self.rho_star,
        }
    }

    pub fn from_file(file: &PolicyTablesFile) -> Result<Self, String> {
        if file.format_version != POLICY_TABLES_FORMAT_VERSION {
            return Err(format!(
                "unsupported policy tables format version {}",
                file.format_version
            ));
        }
        let n = file.n_classes;
        let size = 1usize << n;
        if file.vb.len() != size {
            return Err(format!("expected {size} vb entries, found {}", file.vb.len()));
        }
        let basis = KernelBasis {
            columns: file.basis_columns.clone(),
            trivial: file.trivial,
            lambda: file.lambda,
        };
        let mut vc = vec![None; size];
        let mut lambda_c = vec![None; size];
        let u = basis.cost_direction().map(<[f64]>::to_vec);
        for pv in &file.vc {
            let z = zmask_from_bits(&pv.z) as usize;
            if z >= size {
                return Err("vc pattern out of range".into());
            }
            if let Some(u) = &u {
                lambda_c[z] = Some(basis.lambda() * dot(&pv.v, u));
            }
            vc[z] = Some(pv.v.clone());
        }
        let mut vb = vec![Vec::new(); size];
        for pv in &file.vb {
            let z = zmask_from_bits(&pv.z) as usize;
            if z >= size {
                return Err("vb pattern out of range".into());
            }
            vb[z] = pv.v.clone();
        }
        let m_set: Vec<ZMask> = file.m_set.iter().map(|bits| zmask_from_bits(bits)).collect();
        Ok(PolicyTables {
            basis,
            n_classes: n,
            m_set,
            vc,
            vb,
            lambda_c,
            lambda_tilde: file.lambda_tilde,
            rho_star: file.rho_star,
        })
    }
}

/// Builds tables from explicit vectors. Intended for loading cached tables
/// and for exercising the runtime policy against hand-picked adjustment
/// vectors; no invariant checking is performed here (see
/// [`PolicyTables::verify`]).
#[allow(clippy::too_many_arguments)]
pub fn tables_from_parts(
    spec: &NetworkSpec,
    basis: KernelBasis,
    vc_entries: Vec<(ZMask, Vec<f64>)>,
    vb_entries: Vec<(ZMask, Vec<f64>)>,
) -> PolicyTables {
    let n = spec.n_classes();
    let size = 1usize << n;
    let mut vc = vec![None; size];
    let mut lambda_c = vec![None; size];
    let mut m_set = Vec::new();
    for (z, v) in vc_entries {
        if let Some(u) = basis.cost_direction() {
            lambda_c[z as usize] = Some(basis.lambda() * dot(&v, u));
        }
        vc[z as usize] = Some(v);
        m_set.push(z);
    }
    m_set.sort_unstable();
    let lambda_tilde = m_set
        .iter()
        .filter_map(|&z| lambda_c[z as usize])
        .fold(None, |acc: Option<f64>, lc| Some(acc.map_or(lc, |a| a.max(lc))));
    let mut vb = vec![vec![0.0; n]; size];
    for (z, v) in vb_entries {
        vb[z as usize] = v;
    }
    PolicyTables {
        basis,
        n_classes: n,
        m_set,
        vc,
        vb,
        lambda_c,
        lambda_tilde,
        rho_star: spec.rho_star(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_valid, single_class, two_link};

    const SQ3: f64 = 1.732050807568877293527446341505872367_f64;

    #[test]
    fn two_link_basis_matches_hand_computation() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let basis = compute_basis(&spec);
        assert!(!basis.is_trivial());
        assert_eq!(basis.dim(), 1);
        assert!((basis.lambda() + 1.0 / SQ3).abs() < 1e-12);
        let u = basis.cost_direction().unwrap();
        assert!((u[0] + 1.0 / SQ3).abs() < 1e-12);
        assert!((u[1] + 1.0 / SQ3).abs() < 1e-12);
        assert!((u[2] - 1.0 / SQ3).abs() < 1e-12);
    }

    #[test]
    fn two_link_trivial_variant() {
        let spec = two_link([1.0, 1.0, 2.0]);
        let basis = compute_basis(&spec);
        assert!(basis.is_trivial());
        assert_eq!(basis.lambda(), 0.0);
        assert_eq!(basis.dim(), 1);
        assert!(build_m_set(&spec, &basis).unwrap().is_empty());
    }

    #[test]
    fn square_invertible_incidence_gives_empty_basis() {
        let spec = single_class();
        let basis = compute_basis(&spec);
        assert_eq!(basis.dim(), 0);
        assert!(basis.is_trivial());
        assert_eq!(basis.lambda(), 0.0);
    }

    #[test]
    fn two_link_m_set_is_exactly_the_two_patterns() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let basis = compute_basis(&spec);
        let m = build_m_set(&spec, &basis).unwrap();
        // (0,0,0) and (0,0,1): bit 2 set means class 3 near-empty
        assert_eq!(m, vec![0b000, 0b100]);
    }

    #[test]
    fn all_ones_pattern_is_not_in_m_on_two_link() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let basis = compute_basis(&spec);
        assert!(compute_vc(&spec, &basis, 0b111).unwrap().is_none());
    }

    #[test]
    fn paper_style_vc_choice_passes_the_invariant_checks() {
        // 1/sqrt(3) u has entries (-1/3, -1/3, 1/3); it satisfies the same
        // constraints the canonical LP answer does
        let spec = two_link([1.0, 1.0, 1.0]);
        let basis = compute_basis(&spec);
        let u = basis.cost_direction().unwrap().to_vec();
        let v = scale(&u, 1.0 / SQ3);
        assert!((v[0] + 1.0 / 3.0).abs() < 1e-12);
        let kv = spec.k.matvec(&v);
        assert!(kv.iter().all(|x| x.abs() < 1e-12));
        assert!(dot(&v, &u) > 0.0);
        let rho = spec.rho();
        for j in 0..3 {
            assert!(rho[j] - v[j] > spec.rho_star() / 2.0);
        }
    }

    #[test]
    fn vb_recipe_on_two_link_single_empty_class() {
        let spec = two_link([1.0, 1.0, 1.0]);
        // z = (1,0,0): class 1 near-empty
        let z = 0b001;
        let v = compute_vb(&spec, None, z).unwrap();
        // raw construction is (3, 3, -3); check direction and constraints
        assert!(v[0] > 0.0 && v[1] > 0.0 && v[2] < 0.0);
        assert!((v[0] - v[1]).abs() < 1e-12);
        assert!((v[0] + v[2]).abs() < 1e-12);
        let kv = spec.k.matvec(&v);
        assert!(kv[0].abs() < 1e-12 && kv[1].abs() < 1e-12);
        assert!((norm2(&v) - vb_bound(&spec, None)).abs() < 1e-12);
    }

    #[test]
    fn vb_all_zero_pattern_keeps_active_resources_balanced() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let v = compute_vb(&spec, None, 0b000).unwrap();
        let kv = spec.k.matvec(&v);
        assert!(kv[0].abs() < 1e-12 && kv[1].abs() < 1e-12);
    }

    #[test]
    fn vb_all_ones_pattern_is_positive() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let v = compute_vb(&spec, None, 0b111).unwrap();
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn synthesized_tables_verify_on_random_networks() {
        for seed in 0..40 {
            let spec = random_valid(seed, 4, 8);
            let tables = synthesize(&spec).unwrap();
            let bad = tables.verify(&spec);
            assert!(bad.is_empty(), "seed {seed}: {bad:?}");
        }
    }

    #[test]
    fn exchange_property_on_random_networks() {
        // moving q along beta * vc keeps K M q fixed and lowers h . q
        for seed in 0..20 {
            let spec = random_valid(seed, 4, 8);
            let tables = synthesize(&spec).unwrap();
            let km = spec.k.scale_cols(&spec.m_diag());
            for &z in tables.m_set() {
                let vc = tables.vc(z).unwrap();
                let delta: Vec<f64> = spec.beta.iter().zip(vc).map(|(b, v)| b * v).collect();
                let w_shift = km.matvec(&delta);
                assert!(w_shift.iter().all(|x| x.abs() < 1e-9));
                let dcost = dot(&spec.holding_cost, &delta);
                assert!((dcost - tables.lambda_c(z).unwrap()).abs() < 1e-9);
                assert!(dcost < 0.0);
            }
        }
    }

    #[test]
    fn tables_roundtrip_through_file_form() {
        let spec = two_link([1.0, 1.0, 1.0]);
        let tables = synthesize(&spec).unwrap();
        let text = toml::to_string(&tables.to_file()).unwrap();
        let parsed: PolicyTablesFile = toml::from_str(&text).unwrap();
        let back = PolicyTables::from_file(&parsed).unwrap();
        assert_eq!(back.m_set(), tables.m_set());
        assert_eq!(back.vb(0b010), tables.vb(0b010));
        assert_eq!(back.vc(0b100).unwrap(), tables.vc(0b100).unwrap());
        assert!(back.verify(&spec).is_empty());
    }
}
