//! WGS84 longitude/latitude to UTM, using the Krüger series to fourth
//! order in the third flattening (sub-millimetre inside a zone).

use crate::error::{Error, Result};
use crate::geo::Point2;

const A: f64 = 6_378_137.0;
const F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utm {
    pub zone: u8,
    pub north: bool,
}

impl Utm {
    pub fn new(zone: u8, north: bool) -> Result<Self> {
        if !(1..=60).contains(&zone) {
            return Err(Error::invalid(format!("UTM zone {zone} outside 1..=60")));
        }
        Ok(Self { zone, north })
    }

    pub fn central_meridian(&self) -> f64 {
        f64::from(self.zone) * 6.0 - 183.0
    }

    /// Projects degrees of longitude and latitude to easting/northing meters.
    pub fn forward(&self, lon: f64, lat: f64) -> Result<Point2> {
        if !lon.is_finite() || !lat.is_finite() || lat.abs() > 84.0 {
            return Err(Error::invalid(format!("lon/lat ({lon}, {lat}) outside the UTM domain")));
        }
        let mut dlon = lon - self.central_meridian();
        dlon = (dlon + 540.0).rem_euclid(360.0) - 180.0;
        if dlon.abs() > 30.0 {
            return Err(Error::invalid(format!(
                "longitude {lon} is too far from zone {} for a transverse Mercator projection",
                self.zone
            )));
        }

        let n = F / (2.0 - F);
        let e = (F * (2.0 - F)).sqrt();
        let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
        let big_a = A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);
        let alpha = [
            n / 2.0 - 2.0 / 3.0 * n2 + 5.0 / 16.0 * n3 + 41.0 / 180.0 * n4,
            13.0 / 48.0 * n2 - 3.0 / 5.0 * n3 + 557.0 / 1440.0 * n4,
            61.0 / 240.0 * n3 - 103.0 / 140.0 * n4,
            49561.0 / 161_280.0 * n4,
        ];

        let (phi, lam) = (lat.to_radians(), dlon.to_radians());
        let s = phi.sin();
        let t = (s.atanh() - e * (e * s).atanh()).sinh();
        let xi = t.atan2(lam.cos());
        let eta = (lam.sin() / (1.0 + t * t).sqrt()).atanh();

        let mut x = eta;
        let mut y = xi;
        for (j, a) in alpha.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            x += a * (k * xi).cos() * (k * eta).sinh();
            y += a * (k * xi).sin() * (k * eta).cosh();
        }
        let northing = K0 * big_a * y + if self.north { 0.0 } else { FALSE_NORTHING_SOUTH };
        Ok(Point2::new(FALSE_EASTING + K0 * big_a * x, northing))
    }
}
