//! Delay-compensating boundary control for a first-order transport PIDE with
//! spatially-varying recirculation delay: exact two-branch backstepping
//! feedback, a successive-approximation kernel solver, closed-loop transport
//! simulation, a branch/trunk neural operator trained to replace the exact
//! feedback, and the numerical certificates (Lipschitz probes, stability
//! envelope, benchmarks) that back it all up.

pub mod coefficients;
pub mod analysis;
pub mod artifacts;
pub mod cli;
pub mod controller;
pub mod kernel;
pub mod operator;
pub mod grid;
pub mod simulator;

pub use analysis::{bench_controllers, lipschitz_probe, norms, stability_constants, verify_envelope, LipschitzBudget, ProbeKind, StabilityConstants, StabilityInputs};
pub use controller::{AnalyticFeedback, BoundaryController, ControlLaw, ControllerInput, TargetSnapshot, ZeroController};
pub use simulator::{simulate, simulate_delayed_reference, DelayNoise, PlantState, SimConfig, Trace};
pub use operator::{generate_dataset, load_model, save_model, train, Dataset, DeepONetModel, GenerationConfig, ModelConfig, NeuralController};
pub use kernel::{branch_boundary_gap, kernel_bound, solve_kernel, KernelBound, KernelConfig, KernelGrid};
pub use coefficients::{
    classify_delay, delayed_time_inverse, make_delay, CoefficientSet, DelayFamily, DelayFunction,
    DelayedTimeMap, InitialCondition, Region, Scenario, ScenarioSampler,
};
