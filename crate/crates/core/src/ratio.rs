//! Minimizing a ratio of expectations `E[a] / E[b]` with `b > 0`.
//!
//! The optimal ratio `θ*` is the unique root of `θ ↦ inf E[a - θ b]`, which is
//! non-increasing in `θ`: positive below `θ*`, negative above it. Bisection on
//! the sign of that infimum therefore brackets `θ*` and halves the bracket on
//! every evaluation.

use crate::error::{Error, Result};

/// A fractional problem `min E[a(π)] / E[b(π)]` seen through its parametric
/// infimum `inf_π E[a(π) - θ b(π)]`.
pub trait FractionalInstance {
    type Action: Clone;

    /// The infimum of `E[a - θ b]` and a policy attaining it.
    fn evaluate_inf(&self, theta: f64) -> Result<(f64, Self::Action)>;

    /// `(b_min, b_max)` with `0 < b_min <= b_max`.
    fn denominator_bounds(&self) -> (f64, f64);
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionConfig {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub tolerance: f64,
    pub max_expansions: u32,
    pub max_iterations: usize,
}

impl BisectionConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-3;
    pub const DEFAULT_MAX_EXPANSIONS: u32 = 32;
    pub const DEFAULT_MAX_ITERATIONS: usize = 256;

    pub fn new(theta_lo: f64, theta_hi: f64, tolerance: f64) -> Result<Self> {
        let cfg = Self {
            theta_lo,
            theta_hi,
            tolerance,
            max_expansions: Self::DEFAULT_MAX_EXPANSIONS,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_lo.is_finite()
            && self.theta_hi.is_finite()
            && self.theta_lo < self.theta_hi)
        {
            return Err(Error::Config(format!(
                "bisection bracket must satisfy lo < hi, got [{}, {}]",
                self.theta_lo, self.theta_hi
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "bisection tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult<A> {
    pub theta_star: f64,
    pub final_value: f64,
    pub iterations: usize,
    pub expansions: u32,
    pub argmin_action: A,
    pub bracket_valid: bool,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

/// Bisection on the sign of `inf E[a - θ b]`.
///
/// The bracket is valid when `val(lo) >= 0 >= val(hi)`. An invalid side is
/// pushed outward by the current width, at most `max_expansions` times. A zero
/// value counts as `θ >= θ*`.
pub fn bisect<I: FractionalInstance>(
    instance: &I,
    cfg: &BisectionConfig,
) -> Result<BisectionResult<I::Action>> {
    cfg.validate()?;
    let mut lo = cfg.theta_lo;
    let mut hi = cfg.theta_hi;
    let mut val_lo = instance.evaluate_inf(lo)?.0;
    let mut val_hi = instance.evaluate_inf(hi)?.0;
    let mut expansions = 0u32;
    while val_lo < 0.0 || val_hi > 0.0 {
        if expansions >= cfg.max_expansions || !val_lo.is_finite() || !val_hi.is_finite() {
            return Err(Error::Bracket {
                lo,
                hi,
                val_lo,
                val_hi,
            });
        }
        let width = hi - lo;
        if val_lo < 0.0 {
            lo -= width;
            val_lo = instance.evaluate_inf(lo)?.0;
        } else {
            hi += width;
            val_hi = instance.evaluate_inf(hi)?.0;
        }
        expansions += 1;
    }

    let mut iterations = 0usize;
    while hi - lo >= cfg.tolerance {
        if iterations >= cfg.max_iterations {
            return Err(Error::Convergence(iterations));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Bracket narrower than float resolution.
            break;
        }
        let (v, _) = instance.evaluate_inf(mid)?;
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let theta_star = 0.5 * (lo + hi);
    let (final_value, argmin_action) = instance.evaluate_inf(theta_star)?;
    Ok(BisectionResult {
        theta_star,
        final_value,
        iterations,
        expansions,
        argmin_action,
        bracket_valid: true,
        theta_lo: lo,
        theta_hi: hi,
    })
}

/// Sample average of per-sample infima:
/// `val(θ) = (1/W) Σ_w inf_{π'} E[a(π') - θ b(π') | η_w]`.
///
/// The sum runs in sample order so results are bit-reproducible.
pub fn sampled_val<E, A, F>(theta: f64, samples: &[E], mut per_eta_inf: F) -> Result<(f64, Vec<A>)>
where
    F: FnMut(&E, f64) -> (f64, A),
{
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut total = 0.0;
    let mut actions = Vec::with_capacity(samples.len());
    for eta in samples {
        let (v, a) = per_eta_inf(eta, theta);
        total += v;
        actions.push(a);
    }
    Ok((total / samples.len() as f64, actions))
}

/// A finite set of pure policies given by their `(E a, E b)` pairs. Mixtures of
/// these trace the convex hull, whose parametric infimum is attained at a
/// vertex, so evaluating pure points suffices.
#[derive(Debug, Clone, PartialEq)]
pub struct PurePoints {
    points: Vec<(f64, f64)>,
    b_min: f64,
    b_max: f64,
}

impl PurePoints {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("need at least one pure policy".into()));
        }
        if let Some((_, b)) = points
            .iter()
            .find(|(a, b)| !(*b > 0.0) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Domain(format!(
                "pure policy denominators must be positive and finite, got {b}"
            )));
        }
        let b_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let b_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            points,
            b_min,
            b_max,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Bracket guaranteed to contain the optimal ratio.
    pub fn ratio_range(&self) -> (f64, f64) {
        let ratios = self.points.iter().map(|(a, b)| a / b);
        let lo = ratios.clone().fold(f64::INFINITY, f64::min);
        let hi = ratios.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

impl FractionalInstance for PurePoints {
    type Action = usize;

    fn evaluate_inf(&self, theta: f64) -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for (i, (a, b)) in self.points.iter().enumerate() {
            let v = a - theta * b;
            if v < best.0 {
                best = (v, i);
            }
        }
        Ok(best)
    }

    fn denominator_bounds(&self) -> (f64, f64) {
        (self.b_min, self.b_max)
    }
}

/// Minimum ratio `E a / E b` over pure policies; mixtures cannot do better
/// when the ratio is unconstrained.
pub fn pure_policy_ratio_opt(points: &[(f64, f64)]) -> Result<f64> {
    let pure = PurePoints::new(points.to_vec())?;
    Ok(pure.ratio_range().0)
}
