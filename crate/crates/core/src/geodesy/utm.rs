//! Transverse Mercator for UTM zone 18N on WGS84.
//!
//! Uses the Krüger series carried to sixth order in the third flattening,
//! which keeps forward and inverse errors at the nanometre level inside the
//! zone.

use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

pub const UTM_ZONE: u8 = 18;
pub const CENTRAL_MERIDIAN_DEG: f64 = -75.0;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;

/// Easting/northing in metres, zone 18N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtmPoint {
    pub easting: f64,
    pub northing: f64,
}

impl UtmPoint {
    pub fn new(easting: f64, northing: f64) -> Self {
        UtmPoint { easting, northing }
    }

    pub fn distance(&self, other: &UtmPoint) -> f64 {
        (self.easting - other.easting).hypot(self.northing - other.northing)
    }
}

struct Series {
    e: f64,
    rect_radius: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> &'static Series {
    use std::sync::OnceLock;
    static S: OnceLock<Series> = OnceLock::new();
    S.get_or_init(|| {
        let f = WGS84_F;
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let rect_radius = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0 + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        Series {
            e: (f * (2.0 - f)).sqrt(),
            rect_radius,
            alpha,
            beta,
        }
    })
}

fn conformal_tan(tau: f64, e: f64) -> f64 {
    let sigma = (e * (e * tau / (1.0 + tau * tau).sqrt()).atanh()).sinh();
    tau * (1.0 + sigma * sigma).sqrt() - sigma * (1.0 + tau * tau).sqrt()
}

fn check_inputs(lat: f64, lon: f64) -> Result<()> {
    if !lat.is_finite() || !lon.is_finite() {
        return Err(Error::input(format!("non-finite coordinate ({lat}, {lon})")));
    }
    if !(lat > -80.0 && lat < 84.0) {
        return Err(Error::input(format!("latitude {lat} outside UTM range (-80, 84)")));
    }
    if (lon - CENTRAL_MERIDIAN_DEG).abs() > 6.0 {
        return Err(Error::input(format!(
            "longitude {lon} more than 6 degrees from the zone {UTM_ZONE} central meridian"
        )));
    }
    Ok(())
}

/// Project WGS84 degrees to zone 18N.
pub fn latlon_to_utm(lat: f64, lon: f64) -> Result<UtmPoint> {
    check_inputs(lat, lon)?;
    let s = series();
    let phi = lat.to_radians();
    let lam = (lon - CENTRAL_MERIDIAN_DEG).to_radians();

    let tau_p = conformal_tan(phi.tan(), s.e);
    let xi_p = tau_p.atan2(lam.cos());
    let eta_p = (lam.sin() / (tau_p * tau_p + lam.cos() * lam.cos()).sqrt()).asinh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    Ok(UtmPoint {
        easting: FALSE_EASTING + K0 * s.rect_radius * eta,
        northing: K0 * s.rect_radius * xi,
    })
}

/// Inverse of [`latlon_to_utm`]; returns `(lat, lon)` in degrees.
pub fn utm_to_latlon(p: UtmPoint) -> Result<(f64, f64)> {
    if !p.easting.is_finite() || !p.northing.is_finite() {
        return Err(Error::input("non-finite UTM coordinate"));
    }
    let s = series();
    let xi = p.northing / (K0 * s.rect_radius);
    let eta = (p.easting - FALSE_EASTING) / (K0 * s.rect_radius);

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let sinh_eta = eta_p.sinh();
    let tau_p = xi_p.sin() / (sinh_eta * sinh_eta + xi_p.cos() * xi_p.cos()).sqrt();
    let lam = sinh_eta.atan2(xi_p.cos());

    // Newton iteration for tau given the conformal tau'.
    let e2 = s.e * s.e;
    let mut tau = tau_p;
    for _ in 0..8 {
        let tp_i = conformal_tan(tau, s.e);
        let dtau = (tau_p - tp_i) / (1.0 + tp_i * tp_i).sqrt() * (1.0 + (1.0 - e2) * tau * tau)
            / ((1.0 - e2) * (1.0 + tau * tau).sqrt());
        tau += dtau;
        if dtau.abs() < 1e-15 * tau.abs().max(1.0) {
            break;
        }
    }
    let lat = tau.atan().to_degrees();
    let lon = CENTRAL_MERIDIAN_DEG + lam.to_degrees();
    if !(lat > -80.0 && lat < 84.0) {
        return Err(Error::input(format!("UTM point maps to latitude {lat}")));
    }
    Ok((lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn central_meridian_equator() {
        let p = latlon_to_utm(0.0, -75.0).unwrap();
        assert!((p.easting - 500_000.0).abs() < 1e-9);
        assert!(p.northing.abs() < 1e-9);
    }

    // Reference values from PROJ (EPSG:4326 -> EPSG:32618).
    #[test]
    fn matches_proj_reference_points() {
        let cases = [
            ((40.7580, -73.9855), (585_632.974_474_591_9, 4_512_388.312_994_388)),
            ((41.2, -74.5), (541_923.469_676_967_1, 4_561_079.838_577_482)),
            ((40.3, -73.2), (652_977.117_374_270_5, 4_462_609.637_252_158)),
            ((37.936, -77.933), (242_239.068_156_497_4, 4_202_772.120_610_325)),
        ];
        for ((lat, lon), (e, n)) in cases {
            let p = latlon_to_utm(lat, lon).unwrap();
            assert!((p.easting - e).abs() < 0.01, "easting {} vs {}", p.easting, e);
            assert!((p.northing - n).abs() < 0.01, "northing {} vs {}", p.northing, n);
        }
    }

    #[test]
    fn rejects_polar_latitude() {
        assert!(latlon_to_utm(85.0, -75.0).is_err());
        assert!(latlon_to_utm(-81.0, -75.0).is_err());
        assert!(latlon_to_utm(40.0, -90.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_nano_degree(lat in 38.0f64..43.5, lon in -78.5f64..-71.5) {
            let p = latlon_to_utm(lat, lon).unwrap();
            let (lat2, lon2) = utm_to_latlon(p).unwrap();
            prop_assert!((lat - lat2).abs() < 1e-9);
            prop_assert!((lon - lon2).abs() < 1e-9);
        }
    }
}
