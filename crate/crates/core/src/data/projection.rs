use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Point;

/// Mean earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Equirectangular projection around a reference origin. Longitude and
/// latitude are in degrees, projected coordinates in kilometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    /// `[lon, lat]` of the origin.
    pub origin: Point,
    #[serde(default = "default_radius")]
    pub radius_km: f64,
}

fn default_radius() -> f64 {
    EARTH_RADIUS_KM
}

fn check_lon_lat(p: Point) -> Result<()> {
    let [lon, lat] = p;
    if !(lon.abs() <= 180.0 && lat.abs() <= 90.0) {
        return Err(Error::Data(format!("coordinate ({lon}, {lat}) is out of range")));
    }
    Ok(())
}

impl ProjectionSpec {
    pub fn new(origin: Point) -> Result<Self> {
        check_lon_lat(origin)?;
        if origin[1].abs() >= 90.0 {
            return Err(Error::Data("projection origin cannot be a pole".into()));
        }
        Ok(Self {
            origin,
            radius_km: EARTH_RADIUS_KM,
        })
    }

    /// Origin at the mean of all points.
    pub fn centered<'a>(points: impl IntoIterator<Item = &'a Point>) -> Result<Self> {
        let (mut sum, mut n) = ([0.0, 0.0], 0usize);
        for p in points {
            sum[0] += p[0];
            sum[1] += p[1];
            n += 1;
        }
        if n == 0 {
            return Err(Error::Data("cannot centre a projection on zero points".into()));
        }
        Self::new([sum[0] / n as f64, sum[1] / n as f64])
    }

    pub fn project(&self, lon_lat: Point) -> Result<Point> {
        check_lon_lat(lon_lat)?;
        let k = self.radius_km * std::f64::consts::PI / 180.0;
        Ok([
            k * (lon_lat[0] - self.origin[0]) * self.origin[1].to_radians().cos(),
            k * (lon_lat[1] - self.origin[1]),
        ])
    }

    pub fn unproject(&self, xy: Point) -> Point {
        let k = self.radius_km * std::f64::consts::PI / 180.0;
        [
            self.origin[0] + xy[0] / (k * self.origin[1].to_radians().cos()),
            self.origin[1] + xy[1] / k,
        ]
    }

    pub fn project_all(&self, lon_lat: &[Point]) -> Result<Vec<Point>> {
        lon_lat.iter().map(|&p| self.project(p)).collect()
    }
}

/// Great-circle distance in kilometres between two `[lon, lat]` points.
pub fn haversine_km(a: Point, b: Point) -> f64 {
    let (lat1, lat2) = (a[1].to_radians(), b[1].to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b[0] - a[0]).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}
