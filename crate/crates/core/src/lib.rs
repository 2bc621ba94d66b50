//! Joint VNF placement and routing over a substrate network.
//!
//! The crate holds the network and request model, a literal C1–C18 validator
//! with the cost/delay objective, the placement and routing environments, a
//! multi-agent DDPG trainer, greedy baselines, an exhaustive oracle and the
//! experiment harness.

pub mod baselines;
pub mod catalog;
pub mod env;
pub mod experiments;
pub mod learning;
pub mod nn;
pub mod error;
pub mod rng;
pub mod solution;
pub mod topology;

pub use baselines::{exact_solve, greedy_bestfit, greedy_nearest, ExactLimits, ExactSolution, HeuristicResult};
pub use catalog::{generate_requests, pad_to_batches, CatalogSpec, RequestSpec, ServiceRequest, VnfCatalog};
pub use error::{
    CatalogError, EnvError, ExperimentError, LearnError, NetError, SolveError, StructuralError, TopologyError,
};
pub use solution::{
    evaluate_cost, evaluate_delay, evaluate_objective, validate, ConstraintReport, Deployment, DeploymentRecord,
    ObjectiveBreakdown, Scales, SolutionFile,
};
pub use topology::{
    generate_instance, mutate_topology, parse_topology, DistributionSpec, ResourceLedger, SubstrateNetwork,
    TopologyChange,
};
pub use experiments::{
    emit_cdf, migration_studies, migration_study, run_experiment, ExperimentConfig, MetricsRecord, MigrationConfig, MigrationOutcome, Method,
};
pub use learning::{deploy_all, migrate, train, HyperParams, TrainedModel, TrainingLog};
pub use env::TraceEvent;
