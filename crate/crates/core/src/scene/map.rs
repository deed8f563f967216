use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Polygon};

/// Union of polygons where a vehicle may be. Containment is tested per
/// polygon with the even-odd rule, boundaries included.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DrivableArea {
    polygons: Vec<Polygon>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    polygons: Vec<Vec<[f64; 2]>>,
}

impl DrivableArea {
    /// Validates each polygon (at least 3 vertices, simple) and orients it
    /// counter-clockwise.
    pub fn new(polygons: Vec<Polygon>) -> Result<Self> {
        let mut out = Vec::with_capacity(polygons.len());
        for (i, p) in polygons.into_iter().enumerate() {
            if p.vertices().len() < 3 {
                return Err(Error::InvalidMap(format!("polygon {i} has {} vertices", p.vertices().len())));
            }
            if !p.is_simple() {
                return Err(Error::InvalidMap(format!("polygon {i} self-intersects")));
            }
            out.push(if p.signed_area() < 0.0 { p.reversed() } else { p });
        }
        Ok(Self { polygons: out })
    }

    /// Skips validation; used for clipped or transformed copies of a valid map.
    pub(crate) fn from_polygons_unchecked(polygons: Vec<Polygon>) -> Self {
        Self { polygons }
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    /// `p` itself when drivable, otherwise the closest boundary point.
    pub fn nearest_drivable(&self, p: Point) -> Option<Point> {
        if self.contains(p) {
            return Some(p);
        }
        self.polygons
            .iter()
            .map(|poly| poly.nearest_boundary_point(p))
            .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
    }

    pub fn total_area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    /// Polygons clipped to the axis-aligned square of half-width `half_width`.
    pub fn crop(&self, center: Point, half_width: f64) -> DrivableArea {
        let window = BBox {
            min: Point::new(center.x - half_width, center.y - half_width),
            max: Point::new(center.x + half_width, center.y + half_width),
        };
        Self::from_polygons_unchecked(self.polygons.iter().filter_map(|p| p.clip_to_box(&window)).collect())
    }

    pub fn transformed(&self, f: impl Fn(Point) -> Point + Copy) -> DrivableArea {
        Self::from_polygons_unchecked(self.polygons.iter().map(|p| p.transformed(f)).collect())
    }

    pub fn merged(areas: impl IntoIterator<Item = DrivableArea>) -> DrivableArea {
        Self::from_polygons_unchecked(areas.into_iter().flat_map(|a| a.polygons).collect())
    }

    pub fn to_json(&self) -> String {
        let file = MapFile {
            polygons: self.polygons.iter().map(|p| p.vertices().iter().map(|v| [v.x, v.y]).collect()).collect(),
        };
        serde_json::to_string(&file).expect("plain numeric data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("map json: {e}")))?;
        if file.polygons.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMap("non-finite vertex".into()));
        }
        Self::new(file.polygons.into_iter().map(|p| Polygon::new(p.into_iter().map(|[x, y]| Point::new(x, y)).collect())).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::InvalidMap(m) => Error::InvalidMap(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// True iff `p` lies inside or on the boundary of any polygon of `area`.
pub fn point_in_drivable(area: &DrivableArea, p: Point) -> bool {
    area.contains(p)
}
