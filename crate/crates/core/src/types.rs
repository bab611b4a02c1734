//! Shared domain types for renewal systems.
//!
//! Penalty vectors are laid out as `[y0, y1, .., yL]`: index 0 is always the
//! objective penalty and indices `1..=L` are the constrained penalties.

use crate::error::{check_len, Error, Result};

/// Realized `(T, y, x)` of one renewal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub frame_length: f64,
    pub penalties: Vec<f64>,
    pub attributes: Vec<f64>,
    pub frame_index: u64,
}

impl PolicyOutcome {
    pub fn new(frame_length: f64, penalties: Vec<f64>, attributes: Vec<f64>) -> Result<Self> {
        if !(frame_length > 0.0) || !frame_length.is_finite() {
            return Err(Error::Domain(format!(
                "frame length must be positive and finite, got {frame_length}"
            )));
        }
        if penalties.is_empty() {
            return Err(Error::Domain("penalty vector must contain y0".into()));
        }
        Ok(Self {
            frame_length,
            penalties,
            attributes,
            frame_index: 0,
        })
    }

    pub fn with_index(mut self, frame_index: u64) -> Self {
        self.frame_index = frame_index;
        self
    }

    /// Number of constrained penalties `L`.
    pub fn num_constraints(&self) -> usize {
        self.penalties.len() - 1
    }

    pub fn objective(&self) -> f64 {
        self.penalties[0]
    }

    /// Constrained penalties `y1..yL`.
    pub fn constrained(&self) -> &[f64] {
        &self.penalties[1..]
    }
}

/// Time-average targets `c_l`; the constraint reads `sum y_l / sum T <= c_l`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintTargets(pub Vec<f64>);

impl ConstraintTargets {
    pub fn new(targets: Vec<f64>) -> Self {
        Self(targets)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Closed interval `[lo, hi]` per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_len("rectangle", lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::Domain("rectangle has an empty side".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, point: &[f64], slack: f64) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(p, (lo, hi))| *p >= lo - slack && *p <= hi + slack)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn clamp(&self, m: usize, value: f64) -> f64 {
        value.clamp(self.lo[m], self.hi[m])
    }
}

/// Bounds on the conditional expectations of frame outcomes.
///
/// `y_min`/`y_max` cover the whole penalty vector (index 0 is `y0`), so the
/// drift constants can be enveloped without knowing the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    rectangle: Rectangle,
}

impl BoundsConfig {
    pub fn new(
        t_min: f64,
        t_max: f64,
        y_min: Vec<f64>,
        y_max: Vec<f64>,
        x_min: Vec<f64>,
        x_max: Vec<f64>,
    ) -> Result<Self> {
        if !(t_min > 0.0 && t_min <= t_max && t_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < t_min <= t_max < inf, got [{t_min}, {t_max}]"
            )));
        }
        check_len("penalty bounds", y_min.len(), y_max.len())?;
        check_len("attribute bounds", x_min.len(), x_max.len())?;
        if y_min.is_empty() {
            return Err(Error::Config("penalty bounds must include y0".into()));
        }
        let ordered = |lo: &[f64], hi: &[f64]| {
            lo.iter()
                .zip(hi)
                .all(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
        };
        if !ordered(&y_min, &y_max) || !ordered(&x_min, &x_max) {
            return Err(Error::Config(
                "lower bounds must not exceed upper bounds".into(),
            ));
        }
        // x/T over any mixture lies between the extreme per-frame ratios.
        let lo = x_min.iter().map(|&x| (x / t_min).min(x / t_max)).collect();
        let hi = x_max.iter().map(|&x| (x / t_min).max(x / t_max)).collect();
        let rectangle = Rectangle::new(lo, hi)?;
        Ok(Self {
            t_min,
            t_max,
            y_min,
            y_max,
            x_min,
            x_max,
            rectangle,
        })
    }

    pub fn num_constraints(&self) -> usize {
        self.y_min.len() - 1
    }

    pub fn num_attributes(&self) -> usize {
        self.x_min.len()
    }

    pub fn y0_min(&self) -> f64 {
        self.y_min[0]
    }

    pub fn y0_max(&self) -> f64 {
        self.y_max[0]
    }

    /// The box `R` that always contains the attribute ratio `x/T`.
    pub fn rectangle(&self) -> &Rectangle {
        &self.rectangle
    }
}
