//! A renewal system with finitely many pure policies and no initial
//! information. Each frame realizes the chosen policy's mean outcome, optionally
//! perturbed by independent multiplicative noise with zero mean.

use rand::{Rng, RngCore};

use crate::error::{check_len, Error, Result};
use crate::scenario::{Expectation, LinearWeights, Scenario};
use crate::types::{BoundsConfig, ConstraintTargets, PolicyOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct FinitePoint {
    /// `E y0, E y1, .., E yL`.
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct FiniteScenario {
    points: Vec<FinitePoint>,
    targets: ConstraintTargets,
    bounds: BoundsConfig,
    noise: f64,
}

impl FiniteScenario {
    pub fn new(points: Vec<FinitePoint>, targets: Vec<f64>, noise: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Config("finite scenario needs at least one policy".into()))?;
        let (ly, mx) = (first.y.len(), first.x.len());
        check_len("constraint targets", ly.saturating_sub(1), targets.len())?;
        if ly == 0 {
            return Err(Error::Config("each policy needs at least y0".into()));
        }
        for p in &points {
            check_len("policy penalties", ly, p.y.len())?;
            check_len("policy attributes", mx, p.x.len())?;
            if !(p.t > 0.0 && p.t.is_finite()) {
                return Err(Error::Config(format!(
                    "policy frame length must be positive, got {}",
                    p.t
                )));
            }
            if p.y.iter().chain(&p.x).any(|v| !v.is_finite()) {
                return Err(Error::Config("policy values must be finite".into()));
            }
        }
        if targets.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("constraint targets must be finite".into()));
        }
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::Config(format!(
                "noise must lie in [0, 1), got {noise}"
            )));
        }
        let fold = |f: &dyn Fn(&FinitePoint) -> f64| {
            points
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (t_min, t_max) = fold(&|p| p.t);
        let y: Vec<(f64, f64)> = (0..ly).map(|l| fold(&|p| p.y[l])).collect();
        let x: Vec<(f64, f64)> = (0..mx).map(|m| fold(&|p| p.x[m])).collect();
        let bounds = BoundsConfig::new(
            t_min,
            t_max,
            y.iter().map(|b| b.0).collect(),
            y.iter().map(|b| b.1).collect(),
            x.iter().map(|b| b.0).collect(),
            x.iter().map(|b| b.1).collect(),
        )?;
        Ok(Self {
            points,
            targets: ConstraintTargets::new(targets),
            bounds,
            noise,
        })
    }

    pub fn points(&self) -> &[FinitePoint] {
        &self.points
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Bounds on realized (not just expected) values, for second-moment
    /// envelopes such as the drift constant.
    pub fn realization_bounds(&self) -> Result<BoundsConfig> {
        let n = self.noise;
        let widen = |lo: &[f64], hi: &[f64]| -> (Vec<f64>, Vec<f64>) {
            lo.iter()
                .zip(hi)
                .map(|(a, b)| {
                    let c = [a * (1.0 - n), a * (1.0 + n), b * (1.0 - n), b * (1.0 + n)];
                    (
                        c.iter().copied().fold(f64::INFINITY, f64::min),
                        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    )
                })
                .unzip()
        };
        let b = &self.bounds;
        let (y_min, y_max) = widen(&b.y_min, &b.y_max);
        let (x_min, x_max) = widen(&b.x_min, &b.x_max);
        BoundsConfig::new(
            b.t_min * (1.0 - n),
            b.t_max * (1.0 + n),
            y_min,
            y_max,
            x_min,
            x_max,
        )
    }

    fn jitter(&self, value: f64, rng: &mut dyn RngCore) -> f64 {
        if self.noise == 0.0 {
            value
        } else {
            value * (1.0 + self.noise * rng.random_range(-1.0..=1.0))
        }
    }
}

impl Scenario for FiniteScenario {
    type Info = ();
    type Action = usize;

    fn targets(&self) -> &ConstraintTargets {
        &self.targets
    }

    fn bounds(&self) -> &BoundsConfig {
        &self.bounds
    }

    fn sample_info(&self, _rng: &mut dyn RngCore) {}

    fn candidate_actions(&self, _info: &()) -> Vec<usize> {
        (0..self.points.len()).collect()
    }

    fn conditional_mean(&self, _info: &(), action: &usize) -> Expectation {
        let p = &self.points[*action];
        Expectation {
            t: p.t,
            y: p.y.clone(),
            x: p.x.clone(),
        }
    }

    fn best_response(&self, _info: &(), w: &LinearWeights) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let y: f64 = w.y.iter().zip(&p.y).map(|(a, b)| a * b).sum();
            let x: f64 = w.x.iter().zip(&p.x).map(|(a, b)| a * b).sum();
            let v = y + x + w.t * p.t;
            if v < best.0 {
                best = (v, i);
            }
        }
        best
    }

    fn realize(&self, _info: &(), action: &usize, rng: &mut dyn RngCore) -> Result<PolicyOutcome> {
        let p = &self.points[*action];
        let t = self.jitter(p.t, rng);
        let y = p.y.iter().map(|v| self.jitter(*v, rng)).collect();
        let x = p.x.iter().map(|v| self.jitter(*v, rng)).collect();
        PolicyOutcome::new(t, y, x)
    }

    fn action_columns(&self) -> Vec<String> {
        vec!["policy".into()]
    }

    fn describe_action(&self, action: &usize) -> Vec<String> {
        vec![action.to_string()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::enumerate_best;

    fn scenario(noise: f64) -> FiniteScenario {
        FiniteScenario::new(
            vec![
                FinitePoint {
                    y: vec![1.0, 1.0],
                    x: vec![2.0],
                    t: 1.0,
                },
                FinitePoint {
                    y: vec![4.0, 0.0],
                    x: vec![1.0],
                    t: 2.0,
                },
            ],
            vec![0.5],
            noise,
        )
        .unwrap()
    }

    #[test]
    fn bounds_from_points() {
        let s = scenario(0.0);
        let b = s.bounds();
        assert_eq!((b.t_min, b.t_max), (1.0, 2.0));
        assert_eq!(b.y_min, vec![1.0, 0.0]);
        assert_eq!(b.y_max, vec![4.0, 1.0]);
        assert_eq!(b.rectangle().lo, vec![0.5]);
        assert_eq!(b.rectangle().hi, vec![2.0]);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let s = scenario(0.0);
        for t in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let w = LinearWeights {
                y: vec![1.0, 2.0],
                x: vec![-1.0],
                t,
            };
            assert_eq!(s.best_response(&(), &w), enumerate_best(&s, &(), &w));
        }
    }

    #[test]
    fn noisy_realizations_stay_in_realization_bounds() {
        let s = scenario(0.3);
        let rb = s.realization_bounds().unwrap();
        let mut rng = crate::engine::replication_rng(3, 0);
        for a in [0, 1] {
            for _ in 0..200 {
                let o = s.realize(&(), &a, &mut rng).unwrap();
                assert!(o.frame_length >= rb.t_min && o.frame_length <= rb.t_max);
                for (l, y) in o.penalties.iter().enumerate() {
                    assert!(*y >= rb.y_min[l] && *y <= rb.y_max[l]);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(FiniteScenario::new(vec![], vec![], 0.0).is_err());
        let p = FinitePoint {
            y: vec![1.0],
            x: vec![],
            t: 0.0,
        };
        assert!(FiniteScenario::new(vec![p], vec![], 0.0).is_err());
        let p = FinitePoint {
            y: vec![1.0, 0.0],
            x: vec![],
            t: 1.0,
        };
        assert!(FiniteScenario::new(vec![p.clone()], vec![], 0.0).is_err());
        assert!(FiniteScenario::new(vec![p], vec![0.1], 1.0).is_err());
    }
}
