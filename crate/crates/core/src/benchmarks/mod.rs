//! Optimal-procurement benchmarks: virtual costs, ironing, the optimal BIC
//! buyer's payment rule, and the approximation-ratio experiments comparing
//! the posted-price mechanism against them.

mod ironing;
mod procurement;

pub use ironing::{
    build_ironed_curve, build_ironed_curve_with_resolution, canonical_ironing_dist, virtual_cost,
    BenchError, IronedCurve, IronedInterval, VirtualCostCurve, GRID_RESOLUTION,
};
pub use procurement::{
    approx_ratio_experiment, binomial_median_check, envy_free_benchmark,
    mechanism_expected_payment, myerson_expected_payment, myerson_procure,
    virtual_cost_payment_identity_check, Allocation, ApproxRatioReport, BenchmarkKind,
    IdentityReport, PaymentSchedule,
};
