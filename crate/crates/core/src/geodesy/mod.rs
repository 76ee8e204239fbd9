//! Coordinates, distances, gridding and map products.

pub mod grid;
pub mod tsmap;
pub mod utm;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tessellation::Sector;

pub use grid::{interpolate_grid, read_raster_asc, write_raster_asc, Extent, Raster, TinInterpolator};
pub use tsmap::{time_space_map, TimeSpaceMap};
pub use utm::{latlon_to_utm, utm_to_latlon, UtmPoint};

/// WGS84 mean radius (IUGG R1), km.
pub const EARTH_MEAN_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance in km on the mean-radius sphere.
///
/// Same metric as the haversine formula, evaluated in the atan2 form that
/// stays well conditioned for near-antipodal points.
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    // Canonical argument order makes the result exactly symmetric.
    let ((lat1, lon1), (lat2, lon2)) = if (lat1, lon1) <= (lat2, lon2) {
        ((lat1, lon1), (lat2, lon2))
    } else {
        ((lat2, lon2), (lat1, lon1))
    };
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dlam = (lon2 - lon1).to_radians();
    let (s1, c1) = p1.sin_cos();
    let (s2, c2) = p2.sin_cos();
    let (sl, cl) = dlam.sin_cos();
    let a = c2 * sl;
    let b = c1 * s2 - s1 * c2 * cl;
    let num = (a * a + b * b).sqrt();
    let den = s1 * s2 + c1 * c2 * cl;
    EARTH_MEAN_RADIUS_KM * num.atan2(den)
}

/// Volume per km² for each sector id.
pub fn density_values(sector_ids: &[String], volumes: &[f64], sectors: &[Sector]) -> Result<Vec<f64>> {
    if sector_ids.len() != volumes.len() {
        return Err(Error::input("sector id and volume lists differ in length"));
    }
    let by_id: HashMap<&str, &Sector> = sectors.iter().map(|s| (s.sector_id.as_str(), s)).collect();
    sector_ids
        .iter()
        .zip(volumes)
        .map(|(id, v)| {
            let s = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::input(format!("no geometry for sector {id}")))?;
            if !(s.area_km2 > 0.0) {
                return Err(Error::input(format!("sector {id} has non-positive area")));
            }
            Ok(v / s.area_km2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_antipodal_distance() {
        assert_eq!(great_circle_km(40.0, -74.0, 40.0, -74.0), 0.0);
        let d = great_circle_km(10.0, 20.0, -10.0, -160.0);
        assert!((d - std::f64::consts::PI * EARTH_MEAN_RADIUS_KM).abs() < 1e-6);
        assert!((d - 20015.09).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in -89.0f64..89.0, b in -179.0f64..179.0, c in -89.0f64..89.0, d in -179.0f64..179.0) {
            prop_assert_eq!(great_circle_km(a, b, c, d), great_circle_km(c, d, a, b));
        }
    }

    fn sector(id: &str, area: f64) -> Sector {
        Sector {
            sector_id: id.into(),
            tower_id: id.into(),
            azimuth_deg: None,
            polygon: vec![],
            centroid_latlon: (0.0, 0.0),
            centroid_utm: UtmPoint::new(0.0, 0.0),
            area_km2: area,
            site: UtmPoint::new(0.0, 0.0),
        }
    }

    #[test]
    fn density_divides_by_area() {
        let s = [sector("a", 2.0), sector("b", 4.0)];
        let d = density_values(&["a".into(), "b".into()], &[10.0, 0.0], &s).unwrap();
        assert_eq!(d, vec![5.0, 0.0]);
        assert!(density_values(&["zz".into()], &[1.0], &s).is_err());
    }
}
