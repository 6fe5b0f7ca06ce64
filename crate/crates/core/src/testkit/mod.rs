//! Brute-force oracles and instance generators.

pub mod generate;
pub mod oracle;

pub use generate::{
    cell_tracking, generate, graph_matching, mrf, random_constraint, random_ilp, rng_from_seed, tomography,
    CellTrackingParams, GeneratorError, GeneratorSpec, GraphMatchingParams, MrfModel, MrfParams, RandomIlpParams,
    TomographyParams, Topology,
};
pub use oracle::{
    brute_force_marginals, brute_force_solve, soft_min, subproblem_counts, MarginalOracle, OracleError, OracleResult,
};
