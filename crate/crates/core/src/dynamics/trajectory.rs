use std::io::Write;

use num_complex::Complex64;

use super::engine::{Frame, Observer};
use super::state::{DensitySnapshot, SubspaceDensity, WaveFunction};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Pure(Vec<WaveFunction>),
    Mixed(Vec<DensitySnapshot>),
}

/// Recorded time series of a propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Samples,
    /// `C_{A,n}` for `n = 1..=N` at each sample; empty rows in state-transfer
    /// mode, where index 0 is not Alice's qubit.
    pub concurrences: Vec<Vec<f64>>,
    /// Norm or trace drift at each sample.
    pub drift: Vec<f64>,
    pub final_pure: Option<WaveFunction>,
    pub final_density: Option<SubspaceDensity>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        match &self.samples {
            Samples::Pure(s) => s.first().map_or(0, |psi| psi.dim()),
            Samples::Mixed(s) => s.first().map_or(0, |snap| snap.populations.len()),
        }
    }

    pub fn t_final(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn population(&self, sample: usize, k: usize) -> f64 {
        match &self.samples {
            Samples::Pure(s) => s[sample].population(k),
            Samples::Mixed(s) => s[sample].populations[k],
        }
    }

    /// `rho_{k0}` at `sample` (`c_k c_0^*` for pure states).
    pub fn coherence(&self, sample: usize, k: usize) -> Complex64 {
        match &self.samples {
            Samples::Pure(s) => s[sample].amplitudes[k] * s[sample].amplitudes[0].conj(),
            Samples::Mixed(s) => s[sample].coherences[k],
        }
    }

    pub fn amplitude(&self, sample: usize, k: usize) -> Option<Complex64> {
        match &self.samples {
            Samples::Pure(s) => Some(s[sample].amplitudes[k]),
            Samples::Mixed(_) => None,
        }
    }

    pub fn concurrence_series(&self, site: usize) -> Vec<f64> {
        self.concurrences.iter().map(|row| row[site - 1]).collect()
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |acc, d| acc.max(d.abs()))
    }

    pub fn final_drift(&self) -> f64 {
        self.drift.last().map_or(0.0, |d| d.abs())
    }

    /// Long-format CSV: one row per (sample, basis index).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t[1/J]", "site", "population", "concurrence"])?;
        for (s, &t) in self.times.iter().enumerate() {
            for k in 0..self.dim() {
                let concurrence = if k == 0 || self.concurrences[s].is_empty() {
                    String::new()
                } else {
                    format!("{:.12e}", self.concurrences[s][k - 1])
                };
                out.write_record([
                    format!("{t:.12e}"),
                    k.to_string(),
                    format!("{:.12e}", self.population(s, k)),
                    concurrence,
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Observer that stores sample frames.
pub(crate) struct Recorder {
    routing: bool,
    times: Vec<f64>,
    pure: Vec<WaveFunction>,
    mixed: Vec<DensitySnapshot>,
    concurrences: Vec<Vec<f64>>,
    drift: Vec<f64>,
}

impl Recorder {
    pub fn new(routing: bool) -> Self {
        Self {
            routing,
            times: Vec::new(),
            pure: Vec::new(),
            mixed: Vec::new(),
            concurrences: Vec::new(),
            drift: Vec::new(),
        }
    }

    fn parts(self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<WaveFunction>, Vec<DensitySnapshot>) {
        (self.times, self.concurrences, self.drift, self.pure, self.mixed)
    }

    pub fn finish_pure(self, final_state: WaveFunction) -> Trajectory {
        let (times, concurrences, drift, pure, _) = self.parts();
        Trajectory {
            times,
            samples: Samples::Pure(pure),
            concurrences,
            drift,
            final_pure: Some(final_state),
            final_density: None,
        }
    }

    pub fn finish_mixed(self, final_state: SubspaceDensity) -> Trajectory {
        let (times, concurrences, drift, _, mixed) = self.parts();
        Trajectory {
            times,
            samples: Samples::Mixed(mixed),
            concurrences,
            drift,
            final_pure: None,
            final_density: Some(final_state),
        }
    }
}

impl Observer for Recorder {
    fn observe(&mut self, frame: &Frame<'_>) {
        if !frame.sample {
            return;
        }
        self.times.push(frame.t);
        self.drift.push(frame.drift);
        let row = if self.routing {
            (1..frame.dim()).map(|n| 2.0 * frame.coherence(n).norm()).collect()
        } else {
            Vec::new()
        };
        self.concurrences.push(row);
        match frame.wavefunction() {
            Some(psi) => self.pure.push(psi),
            None => self.mixed.push(frame.snapshot()),
        }
    }
}
