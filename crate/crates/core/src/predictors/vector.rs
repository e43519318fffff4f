use super::metrics::{lidar_metrics, LIDAR_NAMES};
use super::tax::{normalize_tax_code, TaxEncoding};
use crate::geodata::{PlotFootprint, Raster};
use crate::pointcloud::{CloudIndex, PointCloud};
use crate::{Error, Result};

/// Climate and terrain predictors, in canonical order.
pub const AUX_NAMES: [&str; 7] = ["TMIN", "TMAX", "PRECIP", "ELEV", "SLOPE", "ASPECT", "TWI"];

/// Auxiliary rasters on the working grid, ordered as [`AUX_NAMES`].
#[derive(Debug, Clone)]
pub struct AuxRasters {
    pub bands: Vec<Raster>,
}

impl AuxRasters {
    pub fn new(bands: Vec<Raster>) -> Result<Self> {
        if bands.len() != AUX_NAMES.len() {
            return Err(Error::invalid(format!(
                "expected {} auxiliary rasters, got {}",
                AUX_NAMES.len(),
                bands.len()
            )));
        }
        for (b, name) in bands.iter().zip(AUX_NAMES) {
            if b.band_name != name {
                return Err(Error::invalid(format!(
                    "auxiliary band `{}` out of order, expected `{name}`",
                    b.band_name
                )));
            }
            if !b.spec.aligned_with(&bands[0].spec) {
                return Err(Error::invalid(format!("auxiliary band `{name}` is not pixel-aligned")));
            }
        }
        Ok(AuxRasters { bands })
    }
}

/// Ordered predictor names shared by every vector in a dataset:
/// LiDAR metrics, auxiliary values, then parcel indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorSchema {
    pub names: Vec<String>,
}

impl PredictorSchema {
    pub fn new(tax: &TaxEncoding) -> Self {
        let names = LIDAR_NAMES
            .iter()
            .chain(AUX_NAMES.iter())
            .map(|s| s.to_string())
            .chain(tax.indicator_names())
            .collect();
        PredictorSchema { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorVector {
    pub values: Vec<f64>,
}

/// Returns inside the four subplot circles, concatenated subplot by subplot.
pub fn pool_footprint(cloud: &PointCloud, index: &CloudIndex, footprint: &PlotFootprint) -> PointCloud {
    let parts: Vec<PointCloud> = footprint
        .subplot_centers()
        .iter()
        .map(|c| index.clip_circle(cloud, *c, footprint.subplot_radius))
        .collect();
    PointCloud::pooled(&parts)
}

/// Plot-support predictors: metrics on the pooled subplot returns, and
/// auxiliary/parcel values at the pixel holding the plot center.
pub fn plot_predictors(
    cloud: &PointCloud,
    index: &CloudIndex,
    footprint: &PlotFootprint,
    aux: &AuxRasters,
    tax: &TaxEncoding,
    parcels: &Raster,
) -> Result<PredictorVector> {
    if !cloud.height_normalized {
        return Err(Error::invalid("plot predictors need a height-normalized cloud"));
    }
    let pooled = pool_footprint(cloud, index, footprint);
    if pooled.is_empty() {
        return Err(Error::Empty(format!(
            "no returns inside the footprint at ({}, {})",
            footprint.center.x, footprint.center.y
        )));
    }
    let m = lidar_metrics(&pooled)?;
    let c = footprint.center;
    let mut values = m.values.to_vec();
    for band in &aux.bands {
        let v = band.value_at(c.x, c.y).ok_or_else(|| {
            Error::Empty(format!("auxiliary `{}` has no value at ({}, {})", band.band_name, c.x, c.y))
        })?;
        values.push(v);
    }
    values.extend(tax.encode(normalize_tax_code(parcels.value_at(c.x, c.y))));
    Ok(PredictorVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{GridSpec, Point};
    use crate::pointcloud::PointRecord;
    use crate::predictors::fit_tax_encoding;

    fn rec(x: f64, y: f64, z: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            z,
            return_number: 1,
            num_returns: 1,
            classification: 1,
        }
    }

    fn aux() -> AuxRasters {
        let spec = GridSpec::new(-100.0, -100.0, 30.0, 7, 7).unwrap();
        AuxRasters::new(
            AUX_NAMES
                .iter()
                .enumerate()
                .map(|(i, n)| Raster::filled(spec, i as f64, *n))
                .collect(),
        )
        .unwrap()
    }

    fn parcels() -> Raster {
        Raster::filled(GridSpec::new(-100.0, -100.0, 30.0, 7, 7).unwrap(), 910.0, "parcels")
    }

    #[test]
    fn pooling_counts_and_outside_points() {
        let f = PlotFootprint::new(Point::new(0.0, 0.0));
        let centers = f.subplot_centers();
        let mut recs = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for j in 0..=k {
                recs.push(rec(c.x + j as f64, c.y, 5.0));
            }
        }
        recs.push(rec(20.0, 20.0, 100.0)); // between subplots
        let cloud = PointCloud::normalized(recs);
        let idx = CloudIndex::new(&cloud, 10.0);
        let pooled = pool_footprint(&cloud, &idx, &f);
        assert_eq!(pooled.len(), 1 + 2 + 3 + 4);
        assert!(pooled.records.iter().all(|r| r.z == 5.0));
    }

    #[test]
    fn plot_vector_layout() {
        let enc = fit_tax_encoding(&[910, 910]).unwrap();
        let schema = PredictorSchema::new(&enc);
        let f = PlotFootprint::new(Point::new(0.0, 0.0));
        let cloud = PointCloud::normalized(vec![rec(0.0, 0.0, 10.0), rec(1.0, 0.0, 20.0)]);
        let idx = CloudIndex::new(&cloud, 10.0);
        let v = plot_predictors(&cloud, &idx, &f, &aux(), &enc, &parcels()).unwrap();
        assert_eq!(v.values.len(), schema.len());
        assert_eq!(v.values[schema.index_of("ZMEAN").unwrap()], 15.0);
        assert_eq!(v.values[schema.index_of("TWI").unwrap()], 6.0);
        assert_eq!(v.values[schema.index_of("TAX_CODE_910").unwrap()], 1.0);
    }

    #[test]
    fn duplicated_returns_are_kept() {
        // A return sitting inside two overlapping circles would be counted twice;
        // emulate with a footprint whose subplots coincide.
        let mut f = PlotFootprint::new(Point::new(0.0, 0.0));
        f.subplot_offset = 0.0;
        let cloud = PointCloud::normalized(vec![rec(0.0, 0.0, 3.0)]);
        let idx = CloudIndex::new(&cloud, 10.0);
        assert_eq!(pool_footprint(&cloud, &idx, &f).len(), 4);
    }

    #[test]
    fn empty_pool_is_an_error() {
        let enc = fit_tax_encoding(&[910]).unwrap();
        let f = PlotFootprint::new(Point::new(0.0, 0.0));
        let cloud = PointCloud::normalized(vec![rec(90.0, 90.0, 1.0)]);
        let idx = CloudIndex::new(&cloud, 10.0);
        assert!(plot_predictors(&cloud, &idx, &f, &aux(), &enc, &parcels()).is_err());
    }
}
