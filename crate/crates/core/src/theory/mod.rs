//! Population-level analysis of logistic estimators under label noise.

pub mod estimators;
pub mod quadrature;
pub mod scan;

pub use estimators::{
    bstar_ratio, clean_estimator_1d, default_starts, find_bstar_1d, g, general_mv_estimator, m_function,
    mv_gaussian_case, noisy_estimator_1d, weighted_estimator_1d, BStar, Estimate, Evaluation, Landscape,
    MvGaussianCase, PopulationProblem, RatioReport,
};
pub use quadrature::{expect, Cloud, CovariateDist, QuadratureRule};
pub use scan::{discontinuity_scan, two_branch_example, Jump, LocalMax, ScanGrid, ScanPoint, ScanReport};
