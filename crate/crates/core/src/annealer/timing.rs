//! Simulated wall-clock cost of using an annealer: one programming plus a
//! fixed anneal and readout time per read. Nothing sleeps.

use std::time::Duration;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub programming: Duration,
    pub anneal_per_read: Duration,
    pub readout_per_read: Duration,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            programming: Duration::from_millis(10),
            anneal_per_read: Duration::from_micros(20),
            readout_per_read: Duration::from_micros(100),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingReport {
    pub num_reads: usize,
    pub programming_s: f64,
    pub reads_s: f64,
    pub total_s: f64,
}

impl TimingModel {
    pub fn report(&self, num_reads: usize) -> TimingReport {
        let per_read = self.anneal_per_read + self.readout_per_read;
        let reads = per_read.as_secs_f64() * num_reads as f64;
        let programming = self.programming.as_secs_f64();
        TimingReport {
            num_reads,
            programming_s: programming,
            reads_s: reads,
            total_s: programming + reads,
        }
    }
}

/// Report under the default timings.
pub fn timing_model(num_reads: usize) -> TimingReport {
    TimingModel::default().report(num_reads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn programming_only_for_zero_reads() {
        let r = timing_model(0);
        assert!((r.total_s - 0.010).abs() < 1e-15);
        assert_eq!(r.reads_s, 0.0);
    }

    #[test]
    fn thousand_reads() {
        assert!((timing_model(1000).total_s - 0.130).abs() < 1e-12);
    }

    #[test]
    fn read_component_is_linear() {
        let a = timing_model(777).reads_s;
        let b = timing_model(1554).reads_s;
        assert_eq!(2.0 * a, b);
    }
}
