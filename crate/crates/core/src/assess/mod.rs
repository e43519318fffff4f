//! Map agreement battery: point metrics with bootstrap and analytic SEs,
//! GMFR lines, multi-scale hexagon assessment, per-hexagon residual
//! summaries, inventory hexagon comparison and Moran's I.

mod menlove;
mod metrics;
mod moran;
mod riemann;

pub use menlove::{menlove_compare, menlove_compare_with, HexComparison, HexComparisonSummary, HexEstimate, MIN_MAPPED_FRACTION};
pub use metrics::{
    accuracy_metrics, analytic_se, bootstrap_se, gmfr, metric_bundle, BootstrapSe, GmfrLine, MetricBundle, PointMetrics,
    SeOptions,
};
pub use moran::{moran_profile, morans_i, MoranResult};
pub use riemann::{
    choropleth_residuals, density_filtered_me, extract_plot_pixels, meets_density, riemann_assessment, riemann_from_pairs,
    DensityFilteredMe, HexResidual, PlotPixelPair, Scale, ScaleResult, Unit, MIN_PLOT_DENSITY_PER_HA,
};
