//! Concave utility maximization of the attribute ratio `x̄ / T̄`.
//!
//! Each frame the engine picks auxiliary values `γ ∈ R` maximizing
//! `V φ(γ) - Σ G_m γ_m`, then a policy minimizing
//! `E[Σ Z_l y_l - Σ G_m x_m] / E[T]`, and finally updates both the constraint
//! queues `Z` and the auxiliary queues `G_m <- max(G_m + T γ_m - x_m, 0)`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dpp::drift_constant;
use crate::engine::{
    replication_rng, FrameEngine, FrameRecord, SampleBuffer, SampledRatio, SolverSettings,
};
use crate::error::{check_len, Error, Result};
use crate::ledger::{CompensatedSum, MetricsLedger};
use crate::queues::QueueBank;
use crate::ratio::bisect;
use crate::scenario::{LinearWeights, Scenario};
use crate::types::{BoundsConfig, ConstraintTargets, Rectangle};

const GOLDEN_TOL: f64 = 1e-9;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One coordinate of a separable utility `φ(γ) = Σ φ_m(γ_m)`.
#[derive(Clone)]
pub enum ScalarConcave {
    /// `slope · γ`
    Linear(f64),
    /// `weight · ln(1 + γ)`, defined for `γ > -1`.
    Log1p(f64),
    /// `-γ²`; concave but not monotone.
    NegSquare,
    Constant(f64),
    /// Any concave function; maximized by golden-section search.
    Custom(ScalarFn),
}

impl fmt::Debug for ScalarConcave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(s) => write!(f, "Linear({s})"),
            Self::Log1p(w) => write!(f, "Log1p({w})"),
            Self::NegSquare => write!(f, "NegSquare"),
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarConcave {
    pub fn value(&self, g: f64) -> f64 {
        match self {
            Self::Linear(s) => s * g,
            Self::Log1p(w) => w * g.ln_1p(),
            Self::NegSquare => -g * g,
            Self::Constant(c) => *c,
            Self::Custom(f) => f(g),
        }
    }

    /// Maximizer of `v φ(γ) - price γ` over `[lo, hi]`; the largest maximizer
    /// when there are several.
    pub fn maximize(&self, v: f64, price: f64, lo: f64, hi: f64) -> f64 {
        let increasing_if = |slope: f64| if slope >= 0.0 { hi } else { lo };
        match self {
            Self::Linear(s) => increasing_if(v * s - price),
            Self::Constant(_) => increasing_if(-price),
            Self::Log1p(w) => {
                let scale = v * w;
                if price <= 0.0 || scale <= 0.0 {
                    // Objective is monotone on the interval.
                    if scale >= 0.0 && price <= 0.0 {
                        hi
                    } else if scale <= 0.0 && price >= 0.0 {
                        lo
                    } else {
                        golden_max(|g| scale * g.ln_1p() - price * g, lo, hi)
                    }
                } else {
                    (scale / price - 1.0).clamp(lo, hi)
                }
            }
            Self::NegSquare => {
                if v > 0.0 {
                    (-price / (2.0 * v)).clamp(lo, hi)
                } else {
                    increasing_if(-price)
                }
            }
            Self::Custom(f) => {
                let f = f.clone();
                golden_max(move |g| v * f(g) - price * g, lo, hi)
            }
        }
    }
}

/// Golden-section maximization of a concave function on `[lo, hi]`, preferring
/// the upper end of a flat top.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL * (1.0 + a.abs().max(b.abs())) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let mut best = (mid, fm);
    for x in [lo, hi] {
        let fx = f(x);
        if fx >= best.1 - 1e-12 * (1.0 + fx.abs()) && (fx > best.1 || x > best.0) {
            best = (x, fx);
        }
    }
    best.0
}

/// A utility `φ(γ)` over the attribute rectangle.
#[derive(Clone)]
pub struct UtilityFunction {
    evaluate: VectorFn,
    separable_parts: Option<Vec<ScalarConcave>>,
    monotone_nondecreasing: bool,
}

impl fmt::Debug for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityFunction")
            .field("separable_parts", &self.separable_parts)
            .field("monotone_nondecreasing", &self.monotone_nondecreasing)
            .finish()
    }
}

impl UtilityFunction {
    pub fn separable(parts: Vec<ScalarConcave>) -> Self {
        let monotone = parts.iter().all(|p| match p {
            ScalarConcave::Linear(s) => *s >= 0.0,
            ScalarConcave::Log1p(w) => *w >= 0.0,
            ScalarConcave::NegSquare => false,
            ScalarConcave::Constant(_) | ScalarConcave::Custom(_) => true,
        });
        let eval_parts = parts.clone();
        Self {
            evaluate: Arc::new(move |g: &[f64]| {
                eval_parts.iter().zip(g).map(|(p, x)| p.value(*x)).sum()
            }),
            separable_parts: Some(parts),
            monotone_nondecreasing: monotone,
        }
    }

    pub fn general(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        monotone_nondecreasing: bool,
    ) -> Self {
        Self {
            evaluate: Arc::new(f),
            separable_parts: None,
            monotone_nondecreasing,
        }
    }

    /// `min_m w_m γ_m`: concave, non-decreasing for `w >= 0`, not separable.
    pub fn min_linear(weights: Vec<f64>) -> Self {
        let monotone = weights.iter().all(|w| *w >= 0.0);
        Self::general(
            move |g| {
                weights
                    .iter()
                    .zip(g)
                    .map(|(w, x)| w * x)
                    .fold(f64::INFINITY, f64::min)
            },
            monotone,
        )
    }

    pub fn value(&self, gamma: &[f64]) -> f64 {
        (self.evaluate)(gamma)
    }

    pub fn separable_parts(&self) -> Option<&[ScalarConcave]> {
        self.separable_parts.as_deref()
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone_nondecreasing
    }

    /// Randomized check of concavity and entrywise monotonicity on `rect`.
    pub fn validate(&self, rect: &Rectangle) -> Result<()> {
        if !self.monotone_nondecreasing {
            return Err(Error::Domain(
                "utility must be entrywise non-decreasing".into(),
            ));
        }
        let dim = rect.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim)
                .map(|m| rect.lo[m] + (rect.hi[m] - rect.lo[m]) * rng.random::<f64>())
                .collect()
        };
        for _ in 0..64 {
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let lambda: f64 = rng.random();
            let mix: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect();
            let (fa, fb, fm) = (self.value(&a), self.value(&b), self.value(&mix));
            if fm < lambda * fa + (1.0 - lambda) * fb - 1e-9 * (1.0 + fa.abs() + fb.abs()) {
                return Err(Error::Domain(
                    "utility is not concave on the rectangle".into(),
                ));
            }
            let up: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
            if self.value(&up) < fa - 1e-9 * (1.0 + fa.abs()) {
                return Err(Error::Domain("utility decreases along a coordinate".into()));
            }
        }
        Ok(())
    }
}

fn aux_objective(util: &UtilityFunction, g: &[f64], v: f64, gamma: &[f64]) -> f64 {
    v * util.value(gamma) - g.iter().zip(gamma).map(|(q, x)| q * x).sum::<f64>()
}

/// Maximizer of `V φ(γ) - Σ G_m γ_m` over `rect`.
pub fn choose_aux(g: &[f64], v: f64, util: &UtilityFunction, rect: &Rectangle) -> Result<Vec<f64>> {
    check_len("auxiliary queues", rect.dim(), g.len())?;
    util.validate(rect)?;
    Ok(maximize_aux(g, v, util, rect))
}

fn maximize_aux(g: &[f64], v: f64, util: &UtilityFunction, rect: &Rectangle) -> Vec<f64> {
    if let Some(parts) = util.separable_parts() {
        return parts
            .iter()
            .enumerate()
            .map(|(m, p)| p.maximize(v, g[m], rect.lo[m], rect.hi[m]))
            .collect();
    }
    let dim = rect.dim();
    let mut starts = vec![rect.center()];
    let corners = 1usize << dim.min(16);
    for mask in (0..corners).rev().take(7) {
        starts.push(
            (0..dim)
                .map(|m| {
                    if mask >> m & 1 == 1 {
                        rect.hi[m]
                    } else {
                        rect.lo[m]
                    }
                })
                .collect(),
        );
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let cand = coordinate_ascent(g, v, util, rect, start);
        let val = aux_objective(util, g, v, &cand);
        let better = match &best {
            None => true,
            Some((bv, bg)) => {
                val > bv + 1e-12 * (1.0 + bv.abs())
                    || (val >= bv - 1e-12 * (1.0 + bv.abs())
                        && cand.iter().sum::<f64>() > bg.iter().sum::<f64>())
            }
        };
        if better {
            best = Some((val, cand));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Projected coordinate ascent with an extra step along the all-ones
/// direction, which escapes the kinks of `min`-type utilities.
fn coordinate_ascent(
    g: &[f64],
    v: f64,
    util: &UtilityFunction,
    rect: &Rectangle,
    mut x: Vec<f64>,
) -> Vec<f64> {
    let dim = rect.dim();
    let mut current = aux_objective(util, g, v, &x);
    for _ in 0..10_000 {
        let before = current;
        for m in 0..dim {
            let mut probe = x.clone();
            let best = golden_max(
                |t| {
                    probe[m] = t;
                    aux_objective(util, g, v, &probe)
                },
                rect.lo[m],
                rect.hi[m],
            );
            x[m] = best;
        }
        // Move along (1, .., 1) within the box.
        let down = (0..dim)
            .map(|m| x[m] - rect.lo[m])
            .fold(f64::INFINITY, f64::min);
        let up = (0..dim)
            .map(|m| rect.hi[m] - x[m])
            .fold(f64::INFINITY, f64::min);
        if dim > 1 && down.is_finite() && up.is_finite() {
            let base = x.clone();
            let mut probe = x.clone();
            let step = golden_max(
                |s| {
                    for m in 0..dim {
                        probe[m] = base[m] + s;
                    }
                    aux_objective(util, g, v, &probe)
                },
                -down,
                up,
            );
            for m in 0..dim {
                x[m] = rect.clamp(m, base[m] + step);
            }
        }
        current = aux_objective(util, g, v, &x);
        if current - before <= GOLDEN_TOL * (1.0 + before.abs()) {
            break;
        }
    }
    x
}

/// Numerator weights `Σ Z_l y_l - Σ G_m x_m`.
pub fn utility_numerator(z: &[f64], g: &[f64]) -> LinearWeights {
    let mut y = vec![0.0];
    y.extend_from_slice(z);
    LinearWeights {
        y,
        x: g.iter().map(|q| -q).collect(),
        t: 0.0,
    }
}

/// The fractional instance `min E[Σ Z_l y_l - Σ G_m x_m] / E[T]`.
pub fn utility_policy_instance<'a, S: Scenario>(
    scenario: &'a S,
    samples: &'a [S::Info],
    z: &[f64],
    g: &[f64],
) -> Result<SampledRatio<'a, S>> {
    if scenario.num_attributes() == 0 {
        return Err(Error::Capability(
            "utility maximization needs at least one attribute".into(),
        ));
    }
    check_len("constraint queues", scenario.num_constraints(), z.len())?;
    check_len("auxiliary queues", scenario.num_attributes(), g.len())?;
    SampledRatio::new(scenario, samples, utility_numerator(z, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityConfig {
    pub v: f64,
    pub c_approx: f64,
    pub seed: u64,
    pub sample_window: usize,
}

pub struct UtilityEngine<S: Scenario> {
    scenario: S,
    cfg: UtilityConfig,
    util: UtilityFunction,
    solver: SolverSettings,
    bank: QueueBank,
    ledger: MetricsLedger,
    buffer: SampleBuffer<S::Info>,
    sum_t_gamma: Vec<CompensatedSum>,
    sum_t_phi: CompensatedSum,
    frame: u64,
    rng: ChaCha8Rng,
}

impl<S: Scenario> UtilityEngine<S> {
    pub fn new(
        scenario: S,
        util: UtilityFunction,
        cfg: UtilityConfig,
        solver: SolverSettings,
    ) -> Result<Self> {
        let rng = replication_rng(cfg.seed, 0);
        Self::with_rng(scenario, util, cfg, solver, rng)
    }

    pub fn with_rng(
        scenario: S,
        util: UtilityFunction,
        cfg: UtilityConfig,
        solver: SolverSettings,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let m = scenario.num_attributes();
        if m == 0 {
            return Err(Error::Capability(
                "utility maximization needs at least one attribute".into(),
            ));
        }
        if !(cfg.v >= 0.0 && cfg.v.is_finite()) {
            return Err(Error::Config(format!(
                "V must be non-negative, got {}",
                cfg.v
            )));
        }
        util.validate(scenario.bounds().rectangle())?;
        Ok(Self {
            bank: QueueBank::new(scenario.targets().clone(), m),
            ledger: MetricsLedger::new(scenario.num_constraints(), m),
            buffer: SampleBuffer::new(cfg.sample_window)?,
            sum_t_gamma: vec![CompensatedSum::default(); m],
            sum_t_phi: CompensatedSum::default(),
            scenario,
            cfg,
            util,
            solver,
            frame: 0,
            rng,
        })
    }

    pub fn utility(&self) -> &UtilityFunction {
        &self.util
    }

    pub fn scenario(&self) -> &S {
        &self.scenario
    }

    /// Achieved `φ(x̄ / T̄)`.
    pub fn achieved_utility(&self) -> Result<f64> {
        Ok(self.util.value(&self.ledger.ratio_estimates()?.attributes))
    }

    /// `(1/R) Σ T γ_m` per attribute.
    pub fn mean_t_gamma(&self) -> Vec<f64> {
        let r = self.frame.max(1) as f64;
        self.sum_t_gamma.iter().map(|s| s.value() / r).collect()
    }

    /// `Σ T φ(γ) / Σ T`, the surrogate utility.
    pub fn surrogate_utility(&self) -> Option<f64> {
        (self.frame > 0).then(|| self.sum_t_phi.value() / self.ledger.sum_t())
    }

    pub fn run_utility_frame(&mut self) -> Result<FrameRecord<S::Action>> {
        let rect = self.scenario.bounds().rectangle().clone();
        let gamma = maximize_aux(&self.bank.g, self.cfg.v, &self.util, &rect);

        let rng: &mut dyn RngCore = &mut self.rng;
        let info = self.scenario.sample_info(rng);
        let samples = self.buffer.samples(&info);
        let instance =
            utility_policy_instance(&self.scenario, &samples, &self.bank.z, &self.bank.g)?;
        let numerator = instance.numerator();
        let bcfg = self.solver.bracket_for(&self.scenario, &numerator)?;
        let solved = bisect(&instance, &bcfg)?;
        let theta = solved.theta_star;
        let (_, action) = self
            .scenario
            .best_response(&info, &numerator.with_t(-theta));

        let outcome = self
            .scenario
            .realize(&info, &action, &mut self.rng)?
            .with_index(self.frame);
        self.bank.apply_z(&outcome)?;
        self.bank.apply_g(&outcome, &gamma, &rect)?;
        self.ledger.record(&outcome)?;
        let t = outcome.frame_length;
        for (s, gm) in self.sum_t_gamma.iter_mut().zip(&gamma) {
            s.add(t * gm);
        }
        self.sum_t_phi.add(t * self.util.value(&gamma));
        self.buffer.push(info);

        let record = FrameRecord {
            frame: self.frame,
            theta: Some(theta),
            action,
            outcome,
            z: self.bank.z.clone(),
            g: self.bank.g.clone(),
            gamma,
            solver_iterations: solved.iterations,
        };
        self.frame += 1;
        Ok(record)
    }
}

impl<S: Scenario> FrameEngine for UtilityEngine<S> {
    type Action = S::Action;

    fn step(&mut self) -> Result<FrameRecord<S::Action>> {
        self.run_utility_frame()
    }

    fn queues(&self) -> &QueueBank {
        &self.bank
    }

    fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    fn frame(&self) -> u64 {
        self.frame
    }
}

/// Envelope for the utility drift constant: the constraint part of the drift
/// constant plus `½ Σ_m max (T γ_m - x_m)²` over the corners of the bounds.
pub fn utility_drift_constant(bounds: &BoundsConfig, targets: &ConstraintTargets) -> f64 {
    let rect = bounds.rectangle();
    let mut aux = 0.0;
    for m in 0..bounds.num_attributes() {
        let mut worst: f64 = 0.0;
        for t in [bounds.t_min, bounds.t_max] {
            for gm in [rect.lo[m], rect.hi[m]] {
                for x in [bounds.x_min[m], bounds.x_max[m]] {
                    worst = worst.max((t * gm - x).powi(2));
                }
            }
        }
        aux += worst;
    }
    drift_constant(bounds, targets) + 0.5 * aux
}

/// Lower bound `util_opt - D/(V T_min) - C/V` on the long-run utility.
pub fn utility_lower_bound(util_opt: f64, d_const: f64, v: f64, c_approx: f64, t_min: f64) -> f64 {
    if v > 0.0 {
        util_opt - d_const / (v * t_min) - c_approx / v
    } else {
        f64::NEG_INFINITY
    }
}

/// `(Σ T φ(γ) / Σ T, φ(Σ T γ / Σ T))`; concavity makes the first no larger.
pub fn jensen_gap(
    t_samples: &[f64],
    gamma_samples: &[Vec<f64>],
    util: &UtilityFunction,
) -> Result<(f64, f64)> {
    check_len("gamma samples", t_samples.len(), gamma_samples.len())?;
    if t_samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(t) = t_samples.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Domain(format!(
            "frame lengths must be positive, got {t}"
        )));
    }
    let dim = gamma_samples[0].len();
    let mut sum_t = 0.0;
    let mut sum_t_phi = 0.0;
    let mut sum_t_gamma = vec![0.0; dim];
    for (t, g) in t_samples.iter().zip(gamma_samples) {
        check_len("gamma sample", dim, g.len())?;
        sum_t += t;
        sum_t_phi += t * util.value(g);
        for (acc, x) in sum_t_gamma.iter_mut().zip(g) {
            *acc += t * x;
        }
    }
    let mean: Vec<f64> = sum_t_gamma.iter().map(|s| s / sum_t).collect();
    Ok((sum_t_phi / sum_t, util.value(&mean)))
}
