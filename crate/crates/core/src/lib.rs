//! Delay-compensating backstepping control and observer design for a hyperbolic
//! PIDE with a recycle loop and a delayed boundary measurement.

pub mod container;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod neuralop;
pub mod observer;
pub mod plant;
pub mod quad;
pub mod simulator;
pub mod suites;
pub mod verify;

pub use container::{Container, Tensor};
pub use dataset::{gen_dataset, DatasetKind, DatasetSpec};
pub use error::{Error, Result};
pub use kernel::{
    kernel_residual, solve_control_kernels, solve_inverse, solve_k, ControlKernels, InverseKernels,
    KernelResidual, SolverOptions,
};
pub use neuralop::{gains_from_network, DeepONetConfig, DeepONetWeights, NetworkSet};
pub use observer::{
    gains_from_kernels, observer_gains, solve_inverse_observer, solve_observer_kernels,
    InverseObserverKernels, ObserverGains, ObserverKernels,
};
pub use plant::{
    eval_coefficients, eval_model, sample_plant, CoefficientField, CoefficientModel, PlantConfig,
    SamplingRanges, SpatialGrid,
};
pub use simulator::{
    control_full_state, control_output_feedback, run, CascadeState, ControlGains, GainKind,
    GainProvider, InputSignal, MeasurementMode, ObserverState, Scenario, SimulationConfig,
    Trajectory,
};
pub use verify::{
    check_plant_bounds, decay_rate, lipschitz_probe, transform_forward, transform_inverse,
    Direction,
};
