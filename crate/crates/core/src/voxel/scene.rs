//! Scene inputs for voxelization: building footprints (GeoJSON-style) and
//! ESRI ASCII-grid rasters for canopy and terrain.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::Point2;

/// Axis-aligned planar rectangle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn is_empty(&self) -> bool {
        !(self.max_x > self.min_x && self.max_y > self.min_y)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Bounding box of `points` grown by `margin` on every side.
    pub fn around(points: impl IntoIterator<Item = Point2>, margin: f64) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for p in it {
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        Some(Rect::new(r.min_x - margin, r.min_y - margin, r.max_x + margin, r.max_y + margin))
    }
}

/// A building polygon (exterior ring followed by holes) with a height above ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub rings: Vec<Vec<Point2>>,
    pub height: f64,
}

impl Footprint {
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64, height: f64) -> Self {
        Self {
            rings: vec![vec![
                Point2::new(min_x, min_y),
                Point2::new(max_x, min_y),
                Point2::new(max_x, max_y),
                Point2::new(min_x, max_y),
            ]],
            height,
        }
    }

    /// Even-odd test over every ring, so holes punch out correctly.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            let mut j = n - 1;
            for i in 0..n {
                let (a, b) = (ring[i], ring[j]);
                if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                    inside = !inside;
                }
                j = i;
            }
        }
        inside
    }
}

/// ESRI ASCII grid. Rows are stored top (north) first.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner of the lower-left cell.
    pub xll: f64,
    pub yll: f64,
    pub cell_size: f64,
    pub nodata: Option<f64>,
    pub values: Vec<f64>,
    pub crs: Option<String>,
}

impl AsciiGrid {
    pub fn constant(bounds: Rect, cell_size: f64, value: f64) -> Self {
        let ncols = ((bounds.max_x - bounds.min_x) / cell_size).ceil().max(1.0) as usize;
        let nrows = ((bounds.max_y - bounds.min_y) / cell_size).ceil().max(1.0) as usize;
        Self {
            ncols,
            nrows,
            xll: bounds.min_x,
            yll: bounds.min_y,
            cell_size,
            nodata: None,
            values: vec![value; ncols * nrows],
            crs: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let src = std::path::Path::new("<ascii grid>");
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut centered = false;
        let mut cell_size = None;
        let mut nodata = None;
        let mut values = Vec::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let first = line.split_whitespace().next().unwrap_or_default();
            let key = first.to_ascii_lowercase();
            let header_val = || -> Result<f64> {
                line.split_whitespace()
                    .nth(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(src, lineno + 1, format!("bad header value for {first}")))
            };
            match key.as_str() {
                "ncols" => ncols = Some(header_val()? as usize),
                "nrows" => nrows = Some(header_val()? as usize),
                "xllcorner" => xll = Some(header_val()?),
                "yllcorner" => yll = Some(header_val()?),
                "xllcenter" => {
                    xll = Some(header_val()?);
                    centered = true;
                }
                "yllcenter" => {
                    yll = Some(header_val()?);
                    centered = true;
                }
                "cellsize" => cell_size = Some(header_val()?),
                "nodata_value" => nodata = Some(header_val()?),
                _ => {
                    for tok in line.split_whitespace() {
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| Error::parse(src, lineno + 1, format!("bad raster value {tok:?}")))?;
                        values.push(v);
                    }
                }
            }
        }

        let missing = |name: &str| Error::parse(src, 1, format!("missing header {name}"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let cell_size = cell_size.ok_or_else(|| missing("cellsize"))?;
        let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
        let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
        if centered {
            xll -= cell_size / 2.0;
            yll -= cell_size / 2.0;
        }
        if values.len() != ncols * nrows {
            return Err(Error::parse(
                src,
                1,
                format!("expected {} values, found {}", ncols * nrows, values.len()),
            ));
        }
        if !(cell_size > 0.0) {
            return Err(Error::parse(src, 1, "cellsize must be positive"));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cell_size,
            nodata,
            values,
            crs: None,
        })
    }

    /// Nearest-cell lookup; `None` outside the raster or on nodata.
    pub fn sample(&self, p: Point2) -> Option<f64> {
        let col = ((p.x - self.xll) / self.cell_size).floor();
        let row_from_bottom = ((p.y - self.yll) / self.cell_size).floor();
        if col < 0.0 || row_from_bottom < 0.0 {
            return None;
        }
        let (col, rfb) = (col as usize, row_from_bottom as usize);
        if col >= self.ncols || rfb >= self.nrows {
            return None;
        }
        let row = self.nrows - 1 - rfb;
        let v = self.values[row * self.ncols + col];
        match self.nodata {
            Some(nd) if v == nd => None,
            _ => Some(v),
        }
    }
}

/// Everything that gets voxelized. Only buildings are required.
#[derive(Debug, Clone, Default)]
pub struct SceneInputs {
    pub crs: Option<String>,
    pub buildings: Vec<Footprint>,
    /// Canopy height above terrain, meters.
    pub canopy: Option<AsciiGrid>,
    /// Ground elevation, meters.
    pub terrain: Option<AsciiGrid>,
}

impl SceneInputs {
    pub fn check_crs(&self) -> Result<()> {
        let Some(crs) = &self.crs else { return Ok(()) };
        for (name, raster) in [("canopy", &self.canopy), ("terrain", &self.terrain)] {
            if let Some(other) = raster.as_ref().and_then(|r| r.crs.as_ref()) {
                if other != crs {
                    return Err(Error::invalid(format!(
                        "{name} raster CRS {other:?} differs from footprint CRS {crs:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_ring(v: &Value) -> Result<Vec<Point2>> {
    let coords = v
        .as_array()
        .ok_or_else(|| Error::invalid("polygon ring is not an array"))?;
    coords
        .iter()
        .map(|c| {
            let x = c.get(0).and_then(Value::as_f64);
            let y = c.get(1).and_then(Value::as_f64);
            match (x, y) {
                (Some(x), Some(y)) => Ok(Point2::new(x, y)),
                _ => Err(Error::invalid("polygon vertex is not [x, y]")),
            }
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Result<Vec<Vec<Point2>>> {
    v.as_array()
        .ok_or_else(|| Error::invalid("polygon coordinates are not an array"))?
        .iter()
        .map(parse_ring)
        .collect()
}

/// Parses a GeoJSON `FeatureCollection` of `Polygon`/`MultiPolygon` features,
/// each carrying a numeric `height` (or `height_m`) property in meters.
/// Returns the collection's `crs.properties.name`, if any.
pub fn parse_footprints(text: &str) -> Result<(Option<String>, Vec<Footprint>)> {
    let doc: Value = serde_json::from_str(text)?;
    let crs = doc
        .pointer("/crs/properties/name")
        .and_then(Value::as_str)
        .map(str::to_owned);
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("footprints: expected a FeatureCollection with `features`"))?;

    let mut out = Vec::new();
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let height = props
            .and_then(|p| p.get("height").or_else(|| p.get("height_m")))
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::invalid(format!("footprint feature {i}: missing numeric height")))?;
        if !(height >= 0.0) {
            return Err(Error::invalid(format!("footprint feature {i}: negative height {height}")));
        }
        let geom = f
            .get("geometry")
            .ok_or_else(|| Error::invalid(format!("footprint feature {i}: missing geometry")))?;
        let coords = geom.get("coordinates").unwrap_or(&Value::Null);
        match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => out.push(Footprint {
                rings: parse_polygon(coords)?,
                height,
            }),
            Some("MultiPolygon") => {
                for poly in coords.as_array().into_iter().flatten() {
                    out.push(Footprint {
                        rings: parse_polygon(poly)?,
                        height,
                    });
                }
            }
            other => {
                return Err(Error::invalid(format!(
                    "footprint feature {i}: unsupported geometry type {other:?}"
                )))
            }
        }
    }
    Ok((crs, out))
}
