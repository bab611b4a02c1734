//! Virtual queues and the quadratic Lyapunov function.

use crate::error::{check_len, Error, Result};
use crate::types::{ConstraintTargets, PolicyOutcome, Rectangle};

/// Constraint queues `Z` (one per constrained penalty) and auxiliary queues
/// `G` (one per attribute). Both start empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueBank {
    pub z: Vec<f64>,
    pub g: Vec<f64>,
    pub targets: ConstraintTargets,
}

impl QueueBank {
    pub fn new(targets: ConstraintTargets, num_attributes: usize) -> Self {
        Self {
            z: vec![0.0; targets.len()],
            g: vec![0.0; num_attributes],
            targets,
        }
    }

    /// `Z_l <- max(Z_l + y_l - c_l T, 0)` for every constraint.
    pub fn apply_z(&mut self, outcome: &PolicyOutcome) -> Result<()> {
        check_len("penalty vector", self.z.len() + 1, outcome.penalties.len())?;
        let t = outcome.frame_length;
        for ((z, y), c) in self
            .z
            .iter_mut()
            .zip(outcome.constrained())
            .zip(self.targets.as_slice())
        {
            *z = (*z + y - c * t).max(0.0);
        }
        Ok(())
    }

    /// `G_m <- max(G_m + T gamma_m - x_m, 0)`; `gamma` must lie in `rect`.
    pub fn apply_g(
        &mut self,
        outcome: &PolicyOutcome,
        gamma: &[f64],
        rect: &Rectangle,
    ) -> Result<()> {
        check_len("attribute vector", self.g.len(), outcome.attributes.len())?;
        check_len("auxiliary vector", self.g.len(), gamma.len())?;
        if !rect.contains(gamma, 1e-12) {
            return Err(Error::Domain(format!(
                "auxiliary vector {gamma:?} lies outside the attribute rectangle"
            )));
        }
        let t = outcome.frame_length;
        for ((g, x), gm) in self.g.iter_mut().zip(&outcome.attributes).zip(gamma) {
            *g = (*g + t * gm - x).max(0.0);
        }
        Ok(())
    }

    pub fn sum_z(&self) -> f64 {
        self.z.iter().sum()
    }
}

pub fn update_z(bank: &QueueBank, outcome: &PolicyOutcome) -> Result<QueueBank> {
    let mut next = bank.clone();
    next.apply_z(outcome)?;
    Ok(next)
}

pub fn update_g(
    bank: &QueueBank,
    outcome: &PolicyOutcome,
    gamma: &[f64],
    rect: &Rectangle,
) -> Result<QueueBank> {
    let mut next = bank.clone();
    next.apply_g(outcome, gamma, rect)?;
    Ok(next)
}

/// `½ (Σ Z_l² + Σ G_m²)`.
pub fn lyapunov_value(bank: &QueueBank) -> f64 {
    0.5 * bank.z.iter().chain(&bank.g).map(|q| q * q).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank(z: Vec<f64>, g: Vec<f64>, c: Vec<f64>) -> QueueBank {
        QueueBank {
            z,
            g,
            targets: ConstraintTargets::new(c),
        }
    }

    fn outcome(t: f64, y: Vec<f64>, x: Vec<f64>) -> PolicyOutcome {
        PolicyOutcome::new(t, y, x).unwrap()
    }

    #[test]
    fn z_update_examples() {
        let cases = [
            (0.0, 0.5, 1.0, 0.25),
            (5.0, 0.0, 30.0, 0.0),
            (2.0, 1.0, 2.0, 2.5),
        ];
        for (z0, y1, t, expected) in cases {
            let b = bank(vec![z0], vec![], vec![0.25]);
            let next = update_z(&b, &outcome(t, vec![0.0, y1], vec![])).unwrap();
            assert_eq!(next.z, vec![expected]);
        }
    }

    #[test]
    fn g_update_examples() {
        let rect = Rectangle::new(vec![0.0], vec![1.0]).unwrap();
        let cases = [
            (0.0, 2.0, 1.0, 3.0, 0.0),
            (1.0, 2.0, 1.0, 1.0, 2.0),
            (0.5, 1.0, 0.0, 0.0, 0.5),
        ];
        for (g0, t, gamma, x, expected) in cases {
            let b = bank(vec![], vec![g0], vec![]);
            let next = update_g(&b, &outcome(t, vec![0.0], vec![x]), &[gamma], &rect).unwrap();
            assert_eq!(next.g, vec![expected]);
            assert!(next.z.is_empty());
        }
    }

    #[test]
    fn g_update_rejects_gamma_outside_rectangle() {
        let rect = Rectangle::new(vec![0.0], vec![1.0]).unwrap();
        let b = bank(vec![], vec![0.0], vec![]);
        let err = update_g(&b, &outcome(1.0, vec![0.0], vec![0.0]), &[1.5], &rect);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn z_update_dimension_mismatch() {
        let b = bank(vec![0.0, 0.0], vec![], vec![0.25, 0.25]);
        let err = update_z(&b, &outcome(1.0, vec![0.0, 1.0], vec![]));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(
            lyapunov_value(&bank(vec![0.0, 0.0], vec![], vec![0.0, 0.0])),
            0.0
        );
        assert_eq!(
            lyapunov_value(&bank(vec![3.0, 4.0], vec![], vec![0.0, 0.0])),
            12.5
        );
        assert_eq!(lyapunov_value(&bank(vec![1.0], vec![2.0], vec![0.0])), 2.5);
    }

    proptest! {
        #[test]
        fn queues_stay_nonnegative_and_telescope(
            c in -1.0f64..1.0,
            steps in prop::collection::vec((0.1f64..5.0, -3.0f64..3.0), 1..200),
        ) {
            let mut b = bank(vec![0.0], vec![], vec![c]);
            let mut drift = 0.0;
            for (t, y) in steps {
                let before = b.z[0];
                b.apply_z(&outcome(t, vec![0.0, y], vec![])).unwrap();
                prop_assert!(b.z[0] >= 0.0);
                prop_assert!(b.z[0] >= before + y - c * t - 1e-12);
                drift += y - c * t;
                prop_assert!(b.z[0] >= drift - 1e-9);
            }
        }

        #[test]
        fn lyapunov_permutation_invariant(mut qs in prop::collection::vec(0.0f64..100.0, 0..8)) {
            let v1 = lyapunov_value(&bank(qs.clone(), vec![], vec![0.0; qs.len()]));
            qs.reverse();
            let v2 = lyapunov_value(&bank(qs.clone(), vec![], vec![0.0; qs.len()]));
            prop_assert!((v1 - v2).abs() <= 1e-9 * (1.0 + v1));
            prop_assert_eq!(v1 == 0.0, qs.iter().all(|q| *q == 0.0));
        }
    }
}
