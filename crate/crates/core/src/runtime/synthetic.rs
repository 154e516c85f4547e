//! Pipelines with prescribed phase costs, for checking the latency algebra
//! and the sweep machinery independently of learning code.

use std::time::{Duration, Instant};

use super::driver::IterationDriver;
use crate::error::Result;
use crate::profiler::{Category, Phase, Recorder, TimingBreakdown};

/// Sleeps `sg` in sample generation and `mu` in model update, either one after
/// the other or concurrently on two threads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SleepPipeline {
    pub sg: Duration,
    pub mu: Duration,
    pub overlapped: bool,
}

fn timed_sleep(phase: Phase, category: Category, d: Duration) -> (Recorder, f64) {
    let mut rec = Recorder::new(phase);
    let start = Instant::now();
    rec.span(category, || std::thread::sleep(d));
    (rec, start.elapsed().as_secs_f64())
}

impl IterationDriver for SleepPipeline {
    fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
        let start = Instant::now();
        let ((sg, t_sg), (mu, t_mu)) = if self.overlapped {
            std::thread::scope(|s| {
                let h = s.spawn(|| timed_sleep(Phase::SampleGeneration, Category::EnvStep, self.sg));
                let mu = timed_sleep(Phase::ModelUpdate, Category::GradientUpdate, self.mu);
                (h.join().expect("sleep thread"), mu)
            })
        } else {
            let sg = timed_sleep(Phase::SampleGeneration, Category::EnvStep, self.sg);
            (sg, timed_sleep(Phase::ModelUpdate, Category::GradientUpdate, self.mu))
        };
        let mut b = TimingBreakdown::new(iteration);
        b.absorb(&sg);
        b.absorb(&mu);
        b.t_sg = t_sg;
        b.t_mu = t_mu;
        b.wallclock = start.elapsed().as_secs_f64();
        b.samples = 1;
        Ok(b)
    }
}

/// Sequential pipeline whose phases cost `base · n^exponent` each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledPipeline {
    pub base: Duration,
    pub exponent: f64,
    pub n: usize,
}

impl ScaledPipeline {
    pub fn cost(&self) -> Duration {
        self.base.mul_f64((self.n as f64).powf(self.exponent))
    }
}

impl IterationDriver for ScaledPipeline {
    fn iterate(&mut self, iteration: usize) -> Result<TimingBreakdown> {
        SleepPipeline {
            sg: self.cost(),
            mu: self.cost(),
            overlapped: false,
        }
        .iterate(iteration)
    }
}
