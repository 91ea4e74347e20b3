//! Size-aware knapsack flow scheduling on fat-tree data centre networks.

pub mod bpso;
pub mod knapsack;
pub mod schedulers;
pub mod sim;
pub mod topology;
pub mod tos;
pub mod traffic;

pub use bpso::{BpsoConfig, PenaltyFactor, SwarmResult};
pub use knapsack::{KnapsackInstance, KnapsackItem, KnapsackSolution};
pub use schedulers::{KpPsoParams, PathPolicy, ScheduleDecision, SchedulerKind};
pub use sim::{FlowRecord, RunReport, RunSummary, SimConfig};
pub use topology::{build_fat_tree, Hop, LayerCapacities, Topology};
pub use tos::TosTable;
pub use traffic::{Arrival, Flow, FlowClass, TrafficPattern, WorkloadSpec};
