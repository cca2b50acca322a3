//! Projection from WGS84 degrees to a metric grid and tile assignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const TILE_SIZE_M: i64 = 100;

pub trait Projection: Send + Sync {
    /// (easting, northing) in meters.
    fn project(&self, lat: f64, lon: f64) -> (f64, f64);
}

impl<F> Projection for F
where
    F: Fn(f64, f64) -> (f64, f64) + Send + Sync,
{
    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        self(lat, lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub e0: f64,
    pub n0: f64,
    pub e_per_lon: f64,
    pub e_per_lat: f64,
    pub n_per_lon: f64,
    pub n_per_lat: f64,
}

impl Projection for Affine {
    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            self.e0 + self.e_per_lon * lon + self.e_per_lat * lat,
            self.n0 + self.n_per_lon * lon + self.n_per_lat * lat,
        )
    }
}

/// Ellipsoidal transverse Mercator, series to sixth order in longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseMercator {
    pub semi_major: f64,
    pub inverse_flattening: f64,
    pub lat0_deg: f64,
    pub lon0_deg: f64,
    pub scale: f64,
    pub false_easting: f64,
    pub false_northing: f64,
}

impl TransverseMercator {
    pub const WGS84_A: f64 = 6_378_137.0;
    pub const WGS84_INV_F: f64 = 298.257_223_563;

    pub fn utm_north(zone: u8) -> Self {
        TransverseMercator {
            semi_major: Self::WGS84_A,
            inverse_flattening: Self::WGS84_INV_F,
            lat0_deg: 0.0,
            lon0_deg: -183.0 + 6.0 * f64::from(zone),
            scale: 0.9996,
            false_easting: 500_000.0,
            false_northing: 0.0,
        }
    }

    fn e2(&self) -> f64 {
        let f = 1.0 / self.inverse_flattening;
        f * (2.0 - f)
    }

    pub fn meridian_arc(&self, phi: f64) -> f64 {
        let e2 = self.e2();
        let e4 = e2 * e2;
        let e6 = e4 * e2;
        self.semi_major
            * ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * phi
                - (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * (2.0 * phi).sin()
                + (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * (4.0 * phi).sin()
                - (35.0 * e6 / 3072.0) * (6.0 * phi).sin())
    }
}

impl Projection for TransverseMercator {
    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let e2 = self.e2();
        let ep2 = e2 / (1.0 - e2);
        let phi = lat.to_radians();
        let (s, c) = phi.sin_cos();
        let n = self.semi_major / (1.0 - e2 * s * s).sqrt();
        let t = (s / c).powi(2);
        let cc = ep2 * c * c;
        let a = (lon - self.lon0_deg).to_radians() * c;
        let m = self.meridian_arc(phi) - self.meridian_arc(self.lat0_deg.to_radians());
        let x = n
            * (a + (1.0 - t + cc) * a.powi(3) / 6.0
                + (5.0 - 18.0 * t + t * t + 72.0 * cc - 58.0 * ep2) * a.powi(5) / 120.0);
        let y = m
            + n * (s / c)
                * (a * a / 2.0
                    + (5.0 - t + 9.0 * cc + 4.0 * cc * cc) * a.powi(4) / 24.0
                    + (61.0 - 58.0 * t + t * t + 600.0 * cc - 330.0 * ep2) * a.powi(6) / 720.0);
        (
            self.false_easting + self.scale * x,
            self.false_northing + self.scale * y,
        )
    }
}

/// Swiss LV95 grid via the published polynomial approximation (about 1 m).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lv95;

impl Projection for Lv95 {
    fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        let phi = (lat * 3600.0 - 169_028.66) / 10_000.0;
        let lam = (lon * 3600.0 - 26_782.5) / 10_000.0;
        let e = 2_600_072.37 + 211_455.93 * lam
            - 10_938.51 * lam * phi
            - 0.36 * lam * phi * phi
            - 44.54 * lam.powi(3);
        let n = 1_200_147.07 + 308_807.95 * phi + 3_745.25 * lam * lam + 76.63 * phi * phi
            - 194.56 * lam * lam * phi
            + 119.79 * phi.powi(3);
        (e, n)
    }
}

/// Serializable choice of projection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionSpec {
    #[default]
    Lv95,
    Utm { zone: u8 },
    TransverseMercator(TransverseMercator),
    Affine(Affine),
}

impl ProjectionSpec {
    pub fn build(&self) -> Box<dyn Projection> {
        match *self {
            ProjectionSpec::Lv95 => Box::new(Lv95),
            ProjectionSpec::Utm { zone } => Box::new(TransverseMercator::utm_north(zone)),
            ProjectionSpec::TransverseMercator(tm) => Box::new(tm),
            ProjectionSpec::Affine(a) => Box::new(a),
        }
    }
}

impl fmt::Display for ProjectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionSpec::Lv95 => f.write_str("lv95"),
            ProjectionSpec::Utm { zone } => write!(f, "utm{zone}"),
            other => write!(f, "{}", serde_json::to_string(other).map_err(|_| fmt::Error)?),
        }
    }
}

impl FromStr for ProjectionSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "lv95" {
            return Ok(ProjectionSpec::Lv95);
        }
        if let Some(zone) = s.strip_prefix("utm") {
            return match zone.parse::<u8>() {
                Ok(z @ 1..=60) => Ok(ProjectionSpec::Utm { zone: z }),
                _ => Err(format!("invalid UTM zone in {s:?}")),
            };
        }
        serde_json::from_str(s).map_err(|e| format!("unknown projection {s:?}: {e}"))
    }
}

/// Regular 100 m grid anchored at `origin`, optionally bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub origin: [i64; 2],
    pub cell_m: i64,
    /// Width and height in meters; unbounded when absent.
    pub extent_m: Option<[i64; 2]>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            origin: [2_480_000, 1_070_000],
            cell_m: TILE_SIZE_M,
            extent_m: Some([360_000, 230_000]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileIndex {
    pub col: i64,
    pub row: i64,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.cell_m <= 0 {
            return Err(DataError::InvalidConfig("cell size must be positive".into()));
        }
        if self.origin.iter().any(|o| o % self.cell_m != 0) {
            return Err(DataError::InvalidConfig(format!(
                "grid origin {:?} is not a multiple of the cell size {}",
                self.origin, self.cell_m
            )));
        }
        if self.extent_m.is_some_and(|e| e.iter().any(|&x| x <= 0)) {
            return Err(DataError::InvalidConfig("grid extent must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, easting: f64, northing: f64) -> bool {
        self.index(easting, northing).is_ok()
    }

    /// Half-open cells: a point on a cell corner belongs to the cell whose
    /// lower-left corner it is.
    pub fn index(&self, easting: f64, northing: f64) -> Result<TileIndex> {
        let out = || DataError::OutOfExtent { easting, northing };
        if !easting.is_finite() || !northing.is_finite() {
            return Err(out());
        }
        let de = easting - self.origin[0] as f64;
        let dn = northing - self.origin[1] as f64;
        if de < 0.0 || dn < 0.0 {
            return Err(out());
        }
        if let Some([w, h]) = self.extent_m {
            if de >= w as f64 || dn >= h as f64 {
                return Err(out());
            }
        }
        let cell = self.cell_m as f64;
        Ok(TileIndex {
            col: (de / cell).floor() as i64,
            row: (dn / cell).floor() as i64,
        })
    }

    pub fn lower_left(&self, idx: TileIndex) -> (i64, i64) {
        (
            self.origin[0] + idx.col * self.cell_m,
            self.origin[1] + idx.row * self.cell_m,
        )
    }
}

pub fn tile_id(easting: i64, northing: i64) -> String {
    format!("E{easting}_N{northing}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub tile_id: String,
    pub easting: i64,
    pub northing: i64,
    pub species: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedOccurrence {
    pub species: String,
    pub easting: f64,
    pub northing: f64,
}

/// Groups occurrences into tiles keyed and ordered by tile id.
pub fn assign_tiles(occurrences: &[ProjectedOccurrence], grid: &Grid) -> Result<BTreeMap<String, Tile>> {
    grid.validate()?;
    let mut tiles: BTreeMap<String, Tile> = BTreeMap::new();
    for o in occurrences {
        let (e, n) = grid.lower_left(grid.index(o.easting, o.northing)?);
        let id = tile_id(e, n);
        tiles
            .entry(id.clone())
            .or_insert_with(|| Tile {
                tile_id: id,
                easting: e,
                northing: n,
                species: BTreeSet::new(),
            })
            .species
            .insert(o.species.clone());
    }
    Ok(tiles)
}
