use thiserror::Error;

/// Errors raised while reading or building a substrate network.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid range for {field}: lo {lo} > hi {hi}")]
    InvalidRange { field: &'static str, lo: f64, hi: f64 },
    #[error("link ({u}, {v}) already exists")]
    DuplicateLink { u: usize, v: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range for {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },
    #[error("attribute {field} has length {got}, expected {expected}")]
    AttributeShape { field: &'static str, got: usize, expected: usize },
    #[error("attribute {0} must be nonnegative")]
    NegativeAttribute(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("catalog has {available} categories but chains may need {required}")]
    InsufficientCategories { available: usize, required: usize },
    #[error("invalid request parameter: {0}")]
    InvalidParameter(String),
}

/// A deployment whose matrices do not fit the instance. Distinct from infeasibility.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("{deployments} deployments for {requests} requests")]
    CountMismatch { deployments: usize, requests: usize },
    #[error("request {request}: {matrix} is {rows}x{cols}, expected {exp_rows}x{exp_cols}")]
    Dimension {
        request: usize,
        matrix: &'static str,
        rows: usize,
        cols: usize,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error("request {request}: category {category} not in catalog")]
    UnknownCategory { request: usize, category: usize },
    #[error("path node {node} out of range")]
    PathNode { node: usize },
    #[error("request {request}: {matrix} has a non-binary entry")]
    NonBinary { request: usize, matrix: &'static str },
    #[error("deployment for request {deployment} paired with request {request}")]
    IdMismatch { deployment: usize, request: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("episode already finished")]
    EpisodeDone,
    #[error("action must be one-hot over {expected} nodes")]
    BadAction { expected: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("degenerate objective: agent {agent} has weighted objective {value}")]
    DegenerateObjective { agent: usize, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input has {got} features, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("gradient has {got} entries, network output has {expected}")]
    GradDim { expected: usize, got: usize },
    #[error("layer {layer}: fan-in {got} does not match previous width {expected}")]
    LayerChain { layer: usize, expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("replay holds {available} transitions, need {required}")]
    InsufficientReplay { available: usize, required: usize },
    #[error("hyper-parameter {name} out of range: {value}")]
    HyperParam { name: &'static str, value: f64 },
    #[error("node removal is not supported by migration")]
    NodeRemoval,
    #[error("model was built for {expected} agents, batch has {got}")]
    AgentCount { expected: usize, got: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("instance exceeds exhaustive budget: {0}")]
    Budget(String),
    #[error(transparent)]
    Structural(#[from] StructuralError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("seed {seed}: accepted deployments violate {violated:?}")]
    InvalidResult { seed: u64, violated: Vec<String> },
    #[error("migration base never earned a joint reward (seed {seed})")]
    NoBaseline { seed: u64 },
}

impl ExperimentError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ExperimentError::Config { field: field.into(), message: message.into() }
    }
}
