//! Single-intersection traffic-signal control: a point-queue simulator,
//! movement-level features, a PPO agent with a hand-written network, and
//! classical baselines, wired together by an evaluation harness.

pub mod baselines;
pub mod features;
pub mod harness;
pub mod microsim;
pub mod nn;
pub mod ppo;
pub mod topology;
