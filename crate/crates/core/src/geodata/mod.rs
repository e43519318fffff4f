//! Planar geometry primitives: grids and rasters, plot footprints, hexagon
//! tessellations and zonal extraction. Everything lives in one Cartesian
//! CRS measured in meters.

mod footprint;
mod geometry;
mod grid;
mod hex;
mod zonal;

pub use footprint::{build_plot_footprint, PlotFootprint, SUBPLOT_AZIMUTHS_DEG, SUBPLOT_OFFSET_M, SUBPLOT_RADIUS_M};
pub use geometry::{circle_polygon, Point, Polygon, Rect, CIRCLE_VERTICES};
pub use grid::{parse_asc, format_asc, read_asc, write_asc, GridSpec, Raster, DEFAULT_NODATA};
pub use hex::{hex_area_for_spacing, hexagon_polygon, spacing_for_hex_area, HexCell, HexTessellation};
pub use zonal::{area_weighted_mean, footprint_touches, resample_nearest, zonal_weights};
