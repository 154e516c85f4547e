use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timing categories. Every stamped span lands in exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    PolicyInference,
    Communication,
    EnvStep,
    GradientUpdate,
    BufferOps,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::PolicyInference,
        Category::Communication,
        Category::EnvStep,
        Category::GradientUpdate,
        Category::BufferOps,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::PolicyInference => "policy_inference",
            Category::Communication => "communication",
            Category::EnvStep => "env_step",
            Category::GradientUpdate => "gradient_update",
            Category::BufferOps => "buffer_ops",
        }
    }
}

/// Which side of the iteration a span belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SampleGeneration,
    ModelUpdate,
}

/// Accumulated seconds per category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryTimes {
    pub secs: [f64; 5],
}

impl CategoryTimes {
    pub fn get(&self, c: Category) -> f64 {
        self.secs[c.index()]
    }

    pub fn add(&mut self, c: Category, secs: f64) {
        self.secs[c.index()] += secs;
    }

    pub fn total(&self) -> f64 {
        self.secs.iter().sum()
    }

    pub fn merge(&mut self, other: &CategoryTimes) {
        for (a, b) in self.secs.iter_mut().zip(other.secs) {
            *a += b;
        }
    }
}

/// Per-thread span log. Owned by one thread, merged after the thread quiesces.
#[derive(Clone, Debug)]
pub struct Recorder {
    enabled: bool,
    phase: Phase,
    times: [[Duration; 5]; 2],
    comm_bytes: u64,
}

impl Recorder {
    pub fn new(phase: Phase) -> Self {
        Self {
            enabled: true,
            phase,
            times: [[Duration::ZERO; 5]; 2],
            comm_bytes: 0,
        }
    }

    /// Recorder whose stamps are no-ops; byte counts are still kept.
    pub fn disabled(phase: Phase) -> Self {
        Self {
            enabled: false,
            ..Self::new(phase)
        }
    }

    pub fn with_enabled(phase: Phase, enabled: bool) -> Self {
        if enabled {
            Self::new(phase)
        } else {
            Self::disabled(phase)
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Fresh recorder with the same phase and enablement.
    pub fn fresh(&self) -> Self {
        Self::with_enabled(self.phase, self.enabled)
    }

    pub fn stamp(&mut self, category: Category, start: Instant, end: Instant) -> Result<()> {
        let d = end
            .checked_duration_since(start)
            .ok_or_else(|| Error::Timing(format!("span for {} ends before it starts", category.name())))?;
        if self.enabled {
            self.add(category, d);
        }
        Ok(())
    }

    #[inline]
    pub fn add(&mut self, category: Category, d: Duration) {
        let p = self.phase as usize;
        self.times[p][category.index()] += d;
    }

    /// Runs `f`, charging its wall time to `category`.
    #[inline]
    pub fn span<R>(&mut self, category: Category, f: impl FnOnce() -> R) -> R {
        if !self.enabled {
            return f();
        }
        let start = Instant::now();
        let out = f();
        self.add(category, start.elapsed());
        out
    }

    pub fn add_comm_bytes(&mut self, bytes: u64) {
        self.comm_bytes += bytes;
    }

    pub fn comm_bytes(&self) -> u64 {
        self.comm_bytes
    }

    pub fn get(&self, phase: Phase, category: Category) -> Duration {
        self.times[phase as usize][category.index()]
    }

    pub fn phase_times(&self, phase: Phase) -> CategoryTimes {
        let row = &self.times[phase as usize];
        CategoryTimes {
            secs: std::array::from_fn(|i| row[i].as_secs_f64()),
        }
    }

    pub fn merge(&mut self, other: &Recorder) {
        for p in 0..2 {
            for c in 0..5 {
                self.times[p][c] += other.times[p][c];
            }
        }
        self.comm_bytes += other.comm_bytes;
    }
}
