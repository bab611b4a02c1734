//! Running frame sums and the time-average ratios derived from them.

use crate::error::{check_len, Error, Result};
use crate::types::PolicyOutcome;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimates {
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub attributes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLedger {
    sum_t: CompensatedSum,
    sum_y: Vec<CompensatedSum>,
    sum_x: Vec<CompensatedSum>,
    frames: u64,
}

impl MetricsLedger {
    pub fn new(num_constraints: usize, num_attributes: usize) -> Self {
        Self {
            sum_t: CompensatedSum::default(),
            sum_y: vec![CompensatedSum::default(); num_constraints + 1],
            sum_x: vec![CompensatedSum::default(); num_attributes],
            frames: 0,
        }
    }

    pub fn record(&mut self, outcome: &PolicyOutcome) -> Result<()> {
        check_len("penalty vector", self.sum_y.len(), outcome.penalties.len())?;
        check_len(
            "attribute vector",
            self.sum_x.len(),
            outcome.attributes.len(),
        )?;
        self.sum_t.add(outcome.frame_length);
        for (s, y) in self.sum_y.iter_mut().zip(&outcome.penalties) {
            s.add(*y);
        }
        for (s, x) in self.sum_x.iter_mut().zip(&outcome.attributes) {
            s.add(*x);
        }
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn sum_t(&self) -> f64 {
        self.sum_t.value()
    }

    pub fn sum_y(&self, l: usize) -> f64 {
        self.sum_y[l].value()
    }

    pub fn sum_x(&self, m: usize) -> f64 {
        self.sum_x[m].value()
    }

    /// Frame average of `T`.
    pub fn mean_t(&self) -> Option<f64> {
        (self.frames > 0).then(|| self.sum_t() / self.frames as f64)
    }

    /// Frame average of `y_l`.
    pub fn mean_y(&self, l: usize) -> Option<f64> {
        (self.frames > 0).then(|| self.sum_y(l) / self.frames as f64)
    }

    pub fn ratio_estimates(&self) -> Result<RatioEstimates> {
        if self.frames == 0 {
            return Err(Error::EmptyLedger);
        }
        let t = self.sum_t();
        Ok(RatioEstimates {
            objective: self.sum_y[0].value() / t,
            constraints: self.sum_y[1..].iter().map(|s| s.value() / t).collect(),
            attributes: self.sum_x.iter().map(|s| s.value() / t).collect(),
        })
    }
}

pub fn ratio_estimates(ledger: &MetricsLedger) -> Result<RatioEstimates> {
    ledger.ratio_estimates()
}
