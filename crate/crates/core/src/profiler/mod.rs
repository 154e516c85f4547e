//! Category-stamped timing, per-iteration breakdowns, IPS reports and sweeps.

mod breakdown;
mod ips;
mod recorder;
mod sweep;

pub use breakdown::{aggregate, breakdown_pct, category_pct, PhaseFilter, TimingBreakdown};
pub use ips::{compute_ips, IpsFragment, IpsReport};
pub use recorder::{Category, CategoryTimes, Phase, Recorder};
pub use sweep::{loglog_slope, sweep, SweepParameter, SweepReport};
