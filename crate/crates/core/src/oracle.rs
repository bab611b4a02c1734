//! Exact optima over mixtures of finitely many pure policies.
//!
//! A mixture `p` over the pure policies is feasible when
//! `Σ p_i (y_{l,i} - c_l t_i) <= 0` for every constraint `l`. The feasible set
//! is a polytope; its vertices have at most `L + 1` non-zero weights and are
//! enumerated exactly. Ratio objectives are linear-fractional, so they are
//! handled by bisection on `θ` with the linear inner problem solved over the
//! same vertices.

use crate::error::{check_len, Error, Result};
use crate::finite::FinitePoint;
use crate::ratio::{bisect, BisectionConfig, FractionalInstance};
use crate::types::ConstraintTargets;
use crate::utility::UtilityFunction;

/// Largest number of pure policies the oracle accepts.
pub const MAX_POLICIES: usize = 6;
/// Largest simplex grid the oracle evaluates.
pub const MAX_GRID_POINTS: u64 = 1_000_000;
/// Vertex enumeration is used up to this many constraints; beyond it the
/// simplex grid is used.
pub const MAX_VERTEX_CONSTRAINTS: usize = 3;

const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FinitePolicySystem {
    pub points: Vec<FinitePoint>,
    pub targets: ConstraintTargets,
}

impl FinitePolicySystem {
    pub fn new(points: Vec<FinitePoint>, targets: Vec<f64>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Config("policy system needs at least one policy".into()))?;
        if points.len() > MAX_POLICIES {
            return Err(Error::Config(format!(
                "oracle supports at most {MAX_POLICIES} policies, got {}",
                points.len()
            )));
        }
        if first.y.is_empty() {
            return Err(Error::Config("each policy needs at least y0".into()));
        }
        check_len("constraint targets", first.y.len() - 1, targets.len())?;
        for p in &points {
            check_len("policy penalties", first.y.len(), p.y.len())?;
            check_len("policy attributes", first.x.len(), p.x.len())?;
            if !(p.t > 0.0 && p.t.is_finite()) {
                return Err(Error::Config(format!(
                    "policy frame length must be positive, got {}",
                    p.t
                )));
            }
        }
        Ok(Self {
            points,
            targets: ConstraintTargets::new(targets),
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.targets.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.points[0].x.len()
    }

    /// `y_{l,i} - c_l t_i` for constraint `l` (0-based) and policy `i`.
    fn slack(&self, l: usize, i: usize) -> f64 {
        let p = &self.points[i];
        p.y[l + 1] - self.targets.as_slice()[l] * p.t
    }

    pub fn is_feasible(&self, p: &[f64]) -> bool {
        (0..self.num_constraints()).all(|l| {
            let (s, scale) = p.iter().enumerate().fold((0.0, 0.0), |(s, a), (i, w)| {
                let v = w * self.slack(l, i);
                (s + v, a + v.abs())
            });
            s <= FEAS_TOL * (1.0 + scale)
        })
    }

    /// Mixture expectations `(Σ p y, Σ p x, Σ p t)`.
    pub fn mix(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let mut y = vec![0.0; self.points[0].y.len()];
        let mut x = vec![0.0; self.num_attributes()];
        let mut t = 0.0;
        for (w, pt) in p.iter().zip(&self.points) {
            for (a, b) in y.iter_mut().zip(&pt.y) {
                *a += w * b;
            }
            for (a, b) in x.iter_mut().zip(&pt.x) {
                *a += w * b;
            }
            t += w * pt.t;
        }
        (y, x, t)
    }

    /// Vertices of the feasible polytope: every support set `S` with
    /// `|S| - 1` constraints active, solved exactly.
    pub fn feasible_vertices(&self) -> Vec<Vec<f64>> {
        let n = self.points.len();
        let l = self.num_constraints();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for mask in 1u32..(1 << n) {
            let support: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let k = support.len();
            if k > l + 1 {
                continue;
            }
            for active in combinations(l, k - 1) {
                let mut a = vec![vec![0.0; k]; k];
                let mut b = vec![0.0; k];
                a[0].iter_mut().for_each(|v| *v = 1.0);
                b[0] = 1.0;
                for (row, &cl) in active.iter().enumerate() {
                    for (col, &i) in support.iter().enumerate() {
                        a[row + 1][col] = self.slack(cl, i);
                    }
                }
                let Some(sol) = solve(a, b) else { continue };
                if sol.iter().any(|w| *w < -1e-12) {
                    continue;
                }
                let mut p = vec![0.0; n];
                for (col, &i) in support.iter().enumerate() {
                    p[i] = sol[col].max(0.0);
                }
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|w| *w /= total);
                if self.is_feasible(&p) && !out.iter().any(|q| close(q, &p)) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Feasible mixtures on the simplex grid of resolution `grid`.
    pub fn feasible_grid(&self, grid: u32) -> Result<Vec<Vec<f64>>> {
        let n = self.points.len();
        let count = binomial(grid as u64 + n as u64 - 1, n as u64 - 1);
        if grid == 0 || count > MAX_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid resolution {grid} gives {count} simplex points (limit {MAX_GRID_POINTS})"
            )));
        }
        let mut out = Vec::new();
        let mut counts = vec![0u32; n];
        compositions(grid, 0, &mut counts, &mut |c| {
            let p: Vec<f64> = c.iter().map(|k| *k as f64 / grid as f64).collect();
            if self.is_feasible(&p) {
                out.push(p);
            }
        });
        Ok(out)
    }

    fn candidates(&self, grid: u32) -> Result<Vec<Vec<f64>>> {
        let cands = if self.num_constraints() <= MAX_VERTEX_CONSTRAINTS {
            self.feasible_vertices()
        } else {
            self.feasible_grid(grid)?
        };
        if cands.is_empty() {
            return Err(Error::Infeasible(
                "no mixture of the pure policies satisfies the constraints".into(),
            ));
        }
        Ok(cands)
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn compositions(remaining: u32, idx: usize, counts: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if idx + 1 == counts.len() {
        counts[idx] = remaining;
        f(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        compositions(remaining - k, idx + 1, counts, f);
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        let scale = a.iter().map(|r| r[col].abs()).fold(0.0, f64::max);
        if a[piv][col].abs() <= 1e-12 * scale.max(1.0) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (k, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// `min_p Σ p_i (y0_i - θ t_i)` over a candidate set of mixtures.
struct MixtureRatio<'a> {
    sys: &'a FinitePolicySystem,
    cands: Vec<Vec<f64>>,
}

impl FractionalInstance for MixtureRatio<'_> {
    type Action = usize;

    fn evaluate_inf(&self, theta: f64) -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for (k, p) in self.cands.iter().enumerate() {
            let v: f64 = p
                .iter()
                .zip(&self.sys.points)
                .map(|(w, pt)| w * (pt.y[0] - theta * pt.t))
                .sum();
            if v < best.0 {
                best = (v, k);
            }
        }
        Ok(best)
    }

    fn denominator_bounds(&self) -> (f64, f64) {
        self.sys
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.t), hi.max(p.t))
            })
    }
}

/// `min Σ p y0 / Σ p t` over feasible mixtures.
pub fn oracle_ratio_opt(sys: &FinitePolicySystem, grid: u32) -> Result<f64> {
    let cands = sys.candidates(grid)?;
    let (lo, hi) = sys
        .points
        .iter()
        .map(|p| p.y[0] / p.t)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    let inst = MixtureRatio { sys, cands };
    let mut cfg = BisectionConfig::new(lo - 1.0, hi + 1.0, 1e-11)?;
    cfg.max_iterations = 1000;
    let res = bisect(&inst, &cfg)?;
    // The exact ratio of the minimizing candidate removes the bisection residual.
    let p = &inst.cands[res.argmin_action];
    let (y, _, t) = sys.mix(p);
    let exact = y[0] / t;
    Ok(if (exact - res.theta_star).abs() <= 1e-9 {
        exact
    } else {
        res.theta_star
    })
}

/// `min Σ p y0` over feasible mixtures.
pub fn oracle_y0_opt(sys: &FinitePolicySystem, grid: u32) -> Result<f64> {
    let cands = sys.candidates(grid)?;
    Ok(cands
        .iter()
        .map(|p| sys.mix(p).0[0])
        .fold(f64::INFINITY, f64::min))
}

/// `max φ(Σ p x / Σ p t)` over feasible mixtures on the simplex grid, plus the
/// feasible vertices when those are enumerable.
pub fn oracle_util_opt(sys: &FinitePolicySystem, util: &UtilityFunction, grid: u32) -> Result<f64> {
    if sys.num_attributes() == 0 {
        return Err(Error::Capability(
            "utility oracle needs at least one attribute".into(),
        ));
    }
    let mut cands = sys.feasible_grid(grid)?;
    if sys.num_constraints() <= MAX_VERTEX_CONSTRAINTS {
        cands.extend(sys.feasible_vertices());
    }
    if cands.is_empty() {
        return Err(Error::Infeasible(
            "no mixture of the pure policies satisfies the constraints".into(),
        ));
    }
    Ok(cands
        .iter()
        .map(|p| {
            let (_, x, t) = sys.mix(p);
            let ratio: Vec<f64> = x.iter().map(|v| v / t).collect();
            util.value(&ratio)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::pure_policy_ratio_opt;
    use crate::utility::ScalarConcave;
    use proptest::prelude::*;

    fn pt(y: Vec<f64>, x: Vec<f64>, t: f64) -> FinitePoint {
        FinitePoint { y, x, t }
    }

    fn ab() -> FinitePolicySystem {
        FinitePolicySystem::new(
            vec![
                pt(vec![1.0, 1.0], vec![], 1.0),
                pt(vec![4.0, 0.0], vec![], 2.0),
            ],
            vec![0.5],
        )
        .unwrap()
    }

    /// Direct 1-D scan over `p_A` for the A/B system.
    fn ab_scan(f: impl Fn(f64) -> f64, feasible: impl Fn(f64) -> bool) -> f64 {
        (0..=100_000)
            .map(|k| k as f64 / 100_000.0)
            .filter(|p| feasible(*p))
            .map(f)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn ab_ratio_opt() {
        let feasible = |p: f64| p * 1.0 + (1.0 - p) * 0.0 <= 0.5 * (p + 2.0 * (1.0 - p)) + 1e-12;
        let scan = ab_scan(|p| (4.0 - 3.0 * p) / (2.0 - p), feasible);
        let got = oracle_ratio_opt(&ab(), 100).unwrap();
        assert!((got - 1.5).abs() < 1e-9);
        assert!((got - scan).abs() < 1e-4);
    }

    #[test]
    fn ab_y0_opt() {
        let feasible = |p: f64| p <= 0.5 * (2.0 - p) + 1e-12;
        let scan = ab_scan(|p| 4.0 - 3.0 * p, feasible);
        let got = oracle_y0_opt(&ab(), 100).unwrap();
        assert!((got - 2.0).abs() < 1e-12);
        assert!((got - scan).abs() < 1e-4);
    }

    #[test]
    fn single_point() {
        let sys =
            FinitePolicySystem::new(vec![pt(vec![2.0, 0.0], vec![3.0], 1.0)], vec![1.0]).unwrap();
        assert_eq!(oracle_ratio_opt(&sys, 10).unwrap(), 2.0);
        assert_eq!(oracle_y0_opt(&sys, 10).unwrap(), 2.0);
        let id = UtilityFunction::separable(vec![ScalarConcave::Linear(1.0)]);
        assert_eq!(oracle_util_opt(&sys, &id, 10).unwrap(), 3.0);
        let flat = UtilityFunction::separable(vec![ScalarConcave::Constant(7.0)]);
        assert_eq!(oracle_util_opt(&sys, &flat, 10).unwrap(), 7.0);
    }

    #[test]
    fn two_point_utility_matches_fine_grid() {
        // x/T for A = 2/1, for B = 1/2, constraint pushes weight to B.
        let sys = FinitePolicySystem::new(
            vec![
                pt(vec![0.0, 1.0], vec![2.0], 1.0),
                pt(vec![0.0, 0.0], vec![1.0], 2.0),
            ],
            vec![0.5],
        )
        .unwrap();
        let id = UtilityFunction::separable(vec![ScalarConcave::Linear(1.0)]);
        let got = oracle_util_opt(&sys, &id, 1000).unwrap();
        let scan = -ab_scan(
            |p| -(2.0 * p + (1.0 - p)) / (p + 2.0 * (1.0 - p)),
            |p| p <= 0.5 * (p + 2.0 * (1.0 - p)) + 1e-12,
        );
        // Vertex p_A = 2/3 gives (4/3 + 1/3) / (4/3) = 1.25.
        assert!((got - 1.25).abs() < 1e-12);
        assert!((got - scan).abs() < 1e-4);
    }

    #[test]
    fn infeasible_certificate() {
        let sys = FinitePolicySystem::new(
            vec![
                pt(vec![0.0, 2.0], vec![], 1.0),
                pt(vec![0.0, 3.0], vec![], 2.0),
            ],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(
            oracle_ratio_opt(&sys, 50),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(oracle_y0_opt(&sys, 50), Err(Error::Infeasible(_))));
        assert!(sys.feasible_grid(1000).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(FinitePolicySystem::new(vec![], vec![]).is_err());
        let many = vec![pt(vec![1.0], vec![], 1.0); MAX_POLICIES + 1];
        assert!(FinitePolicySystem::new(many, vec![]).is_err());
        assert!(FinitePolicySystem::new(vec![pt(vec![1.0], vec![], 0.0)], vec![]).is_err());
        let sys = FinitePolicySystem::new(vec![pt(vec![1.0], vec![], 1.0); 6], vec![]).unwrap();
        assert!(sys.feasible_grid(200).is_err());
    }

    #[test]
    fn grid_path_for_many_constraints() {
        let sys = FinitePolicySystem::new(
            vec![
                pt(vec![1.0, 1.0, 1.0, 1.0, 1.0], vec![], 1.0),
                pt(vec![4.0, 0.0, 0.0, 0.0, 0.0], vec![], 2.0),
            ],
            vec![0.5; 4],
        )
        .unwrap();
        let got = oracle_ratio_opt(&sys, 3000).unwrap();
        // Grid spacing 1/3000 around the optimal p_A = 2/3 (a grid point).
        assert!((got - 1.5).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn unconstrained_matches_pure_reduction(
            pts in prop::collection::vec((-10.0f64..10.0, 0.1f64..5.0), 1..=6)
        ) {
            let sys = FinitePolicySystem::new(
                pts.iter().map(|(a, t)| pt(vec![*a], vec![], *t)).collect(),
                vec![],
            ).unwrap();
            let oracle = oracle_ratio_opt(&sys, 10).unwrap();
            let pure = pure_policy_ratio_opt(&pts).unwrap();
            prop_assert!((oracle - pure).abs() < 1e-9);
        }

        #[test]
        fn vertices_beat_grid(
            pts in prop::collection::vec((0.0f64..5.0, 0.0f64..2.0, 0.5f64..3.0), 2..=4),
            c in 0.2f64..1.0,
        ) {
            let sys = FinitePolicySystem::new(
                pts.iter().map(|(a, y, t)| pt(vec![*a, *y], vec![], *t)).collect(),
                vec![c],
            ).unwrap();
            let grid = sys.feasible_grid(40).unwrap();
            match oracle_y0_opt(&sys, 40) {
                Ok(v) => {
                    for p in &grid {
                        prop_assert!(v <= sys.mix(p).0[0] + 1e-9);
                    }
                }
                Err(Error::Infeasible(_)) => prop_assert!(grid.is_empty()),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
