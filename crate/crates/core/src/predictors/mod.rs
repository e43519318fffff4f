//! Predictor computation: LiDAR metrics at plot and pixel support, auxiliary
//! raster sampling and parcel-code indicators.

mod metrics;
mod pixel;
mod tax;
mod vector;

pub use metrics::{l_moments, lidar_metrics, metrics_from_sorted, LidarMetrics, CANOPY_HEIGHT_M, LIDAR_NAMES, N_LIDAR};
pub use pixel::{pixel_predictors, predictor_stack};
pub use tax::{
    category_of, encode_tax, fit_tax_encoding, fit_tax_encoding_with, normalize_tax_code, TaxEncoding,
    DEFAULT_CODE, MIN_CATEGORY_SHARE, MIN_CODE_SHARE, NYC_CODE,
};
pub use vector::{plot_predictors, pool_footprint, AuxRasters, PredictorSchema, PredictorVector, AUX_NAMES};
