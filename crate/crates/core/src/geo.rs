//! Image-space localization of a landmark inside an equirectangular panorama.
//!
//! Coordinates are planar meters in a local projected CRS with `x` pointing
//! east and `y` pointing north. Headings and azimuths are degrees clockwise
//! from north.
//!
//! **atan2 convention:** the azimuth is `atan2(east_offset, north_offset)`,
//! i.e. the arguments are swapped relative to the usual `atan2(y, x)`. This
//! is what makes 0° point north and 90° point east.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full vertical field of view of an equirectangular frame, in degrees.
pub const FULL_VERTICAL_FOV: f64 = 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_to(&self, other: &Point2) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

/// A geotagged equirectangular frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaMeta {
    pub pano_id: String,
    pub location: Point2,
    /// Degrees clockwise from north, in `[0, 360)`.
    pub heading: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_vfov")]
    pub vertical_fov: f64,
}

fn default_vfov() -> f64 {
    FULL_VERTICAL_FOV
}

impl PanoramaMeta {
    pub fn new(pano_id: impl Into<String>, location: Point2, heading: f64, width: u32, height: u32) -> Self {
        Self {
            pano_id: pano_id.into(),
            location,
            heading,
            width,
            height,
            vertical_fov: FULL_VERTICAL_FOV,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() {
            return Err(Error::invalid(format!("pano {}: non-finite location", self.pano_id)));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::invalid(format!(
                "pano {}: dimensions {}x{} below 2x2",
                self.pano_id, self.width, self.height
            )));
        }
        if !(0.0..360.0).contains(&self.heading) {
            return Err(Error::invalid(format!(
                "pano {}: heading {} outside [0, 360)",
                self.pano_id, self.heading
            )));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov <= FULL_VERTICAL_FOV) {
            return Err(Error::invalid(format!(
                "pano {}: vertical fov {} outside (0, 180]",
                self.pano_id, self.vertical_fov
            )));
        }
        if self.width != 2 * self.height {
            log::warn!(
                "pano {}: {}x{} is not a 2:1 equirectangular frame",
                self.pano_id,
                self.width,
                self.height
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub landmark_id: String,
    pub name: String,
    pub location: Point2,
    /// Physical height above local ground, meters.
    pub height: f64,
    /// Opaque reference to the detector's query image.
    #[serde(default)]
    pub query_image_ref: String,
}

impl Landmark {
    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() {
            return Err(Error::invalid(format!("landmark {}: non-finite location", self.landmark_id)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::invalid(format!(
                "landmark {}: height {} must be positive",
                self.landmark_id, self.height
            )));
        }
        Ok(())
    }
}

/// Where a landmark falls in one panorama.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewGeometry {
    pub distance: f64,
    pub azimuth: f64,
    pub relative_bearing: f64,
    pub x_pix: f64,
    pub elevation: f64,
    pub h_pix: f64,
}

/// Zoom-in crop window. When `wrapped` is set the window crosses the
/// panorama seam and `x_left > x_right`: the crop is `[x_left, W)` followed
/// by `[0, x_right)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomBox {
    pub x_left: f64,
    pub x_right: f64,
    pub y_top: f64,
    pub y_bottom: f64,
    pub wrapped: bool,
    pub clamped: bool,
}

impl ZoomBox {
    /// Horizontal extent in pixels, accounting for the seam.
    pub fn width(&self, image_width: u32) -> f64 {
        if self.wrapped {
            self.x_right + f64::from(image_width) - self.x_left
        } else {
            self.x_right - self.x_left
        }
    }

    pub fn height(&self) -> f64 {
        self.y_bottom - self.y_top
    }
}

fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

fn ensure_finite(what: &str, p: &Point2) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite coordinates")))
    }
}

pub fn distance(observer: Point2, target: Point2) -> Result<f64> {
    ensure_finite("observer", &observer)?;
    ensure_finite("target", &target)?;
    Ok(observer.distance_to(&target))
}

/// Azimuth of `target` seen from `observer`, degrees clockwise from north in `[0, 360)`.
pub fn azimuth(observer: Point2, target: Point2) -> Result<f64> {
    ensure_finite("observer", &observer)?;
    ensure_finite("target", &target)?;
    let dx = target.x - observer.x;
    let dy = target.y - observer.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::degenerate("observer and target coincide; bearing undefined"));
    }
    Ok(wrap_360(dx.atan2(dy).to_degrees()))
}

/// `(azimuth - heading) mod 360`. Values in (0, 180) lie right of the heading.
pub fn relative_bearing(azimuth: f64, heading: f64) -> Result<f64> {
    for (name, v) in [("azimuth", azimuth), ("heading", heading)] {
        if !(0.0..360.0).contains(&v) {
            return Err(Error::invalid(format!("{name} {v} outside [0, 360)")));
        }
    }
    Ok(wrap_360(azimuth - heading))
}

/// Fractional pixel column of a relative bearing; bearing 0 is the centre column.
pub fn pixel_column(relative_bearing: f64, width: u32) -> Result<f64> {
    if width < 2 {
        return Err(Error::invalid(format!("panorama width {width} below 2")));
    }
    if !relative_bearing.is_finite() {
        return Err(Error::invalid("relative bearing is not finite"));
    }
    let w = f64::from(width);
    let col = (w / 2.0 + relative_bearing / 360.0 * w).rem_euclid(w);
    Ok(if col >= w { 0.0 } else { col })
}

/// Elevation angle in degrees of a target `height` meters tall at `distance` meters.
pub fn elevation_angle(height: f64, distance: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::degenerate(format!("distance {distance} must be positive")));
    }
    if !(height > 0.0) || !height.is_finite() {
        return Err(Error::degenerate(format!("height {height} must be positive")));
    }
    Ok((height / distance).atan().to_degrees())
}

pub fn pixel_height(elevation: f64, image_height: u32, vertical_fov: f64) -> Result<f64> {
    if !(vertical_fov > 0.0) {
        return Err(Error::invalid(format!("vertical fov {vertical_fov} must be positive")));
    }
    if !(elevation > 0.0 && elevation < vertical_fov) {
        return Err(Error::invalid(format!(
            "elevation {elevation} outside (0, {vertical_fov})"
        )));
    }
    Ok(elevation * f64::from(image_height) / vertical_fov)
}

/// Crop window over the upper half of the landmark, square before clamping.
///
/// `padding` extends the top edge upward by `padding * h_pix`; the width
/// follows the padded height so the box stays square.
pub fn zoom_box(x_pix: f64, h_pix: f64, width: u32, image_height: u32, padding: f64) -> Result<ZoomBox> {
    if !(h_pix > 0.0) || !h_pix.is_finite() {
        return Err(Error::degenerate(format!("pixel height {h_pix} must be positive")));
    }
    if !(padding >= 0.0) || !padding.is_finite() {
        return Err(Error::invalid(format!("padding {padding} must be >= 0")));
    }
    if width < 2 || image_height < 2 {
        return Err(Error::invalid(format!("frame {width}x{image_height} below 2x2")));
    }
    let w = f64::from(width);
    let mid = f64::from(image_height) / 2.0;
    let y_bottom = mid - 0.50 * h_pix;
    let y_top = mid - (1.00 + padding) * h_pix;
    let half = (y_bottom - y_top) / 2.0;

    let (mut x_left, mut x_right) = (x_pix - half, x_pix + half);
    let mut wrapped = false;
    if 2.0 * half >= w {
        // wider than the whole frame: take every column once
        x_left = 0.0;
        x_right = w;
    } else {
        if x_left < 0.0 {
            x_left += w;
            wrapped = true;
        }
        if x_right >= w {
            x_right -= w;
            wrapped = true;
        }
    }

    let clamped = y_top < 0.0;
    Ok(ZoomBox {
        x_left,
        x_right,
        y_top: y_top.max(0.0),
        y_bottom: y_bottom.max(0.0),
        wrapped,
        clamped,
    })
}

/// Knobs for [`view_geometry_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryOptions {
    /// Camera height subtracted from the landmark height. The image-space
    /// method ignores it, so the default is 0.
    pub observer_height: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self { observer_height: 0.0 }
    }
}

pub fn view_geometry(pano: &PanoramaMeta, landmark: &Landmark) -> Result<ViewGeometry> {
    view_geometry_with(pano, landmark, &GeometryOptions::default())
}

pub fn view_geometry_with(
    pano: &PanoramaMeta,
    landmark: &Landmark,
    opts: &GeometryOptions,
) -> Result<ViewGeometry> {
    let d = distance(pano.location, landmark.location)?;
    let az = azimuth(pano.location, landmark.location)?;
    let rel = relative_bearing(az, pano.heading)?;
    let x_pix = pixel_column(rel, pano.width)?;
    let eps = elevation_angle(landmark.height - opts.observer_height, d)?;
    let h_pix = pixel_height(eps, pano.height, pano.vertical_fov)?;
    Ok(ViewGeometry {
        distance: d,
        azimuth: az,
        relative_bearing: rel,
        x_pix,
        elevation: eps,
        h_pix,
    })
}
