//! Prompt-similarity rasters over gridded image embeddings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::interchange;
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRaster {
    pub width: usize,
    pub height: usize,
    pub origin: (f64, f64),
    pub cell_size_m: f64,
    /// Row-major; `None` marks a missing cell.
    pub cells: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRaster {
    pub width: usize,
    pub height: usize,
    pub origin: (f64, f64),
    pub cell_size_m: f64,
    pub values: Vec<Option<f64>>,
}

/// JSON descriptor of a raster whose cell embeddings live in an interchange
/// file; the sidecar source of each row is `"row,col"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSpec {
    pub width: usize,
    pub height: usize,
    pub origin: [f64; 2],
    pub cell_size_m: f64,
    pub embeddings: String,
}

impl EmbeddingRaster {
    pub fn new(width: usize, height: usize, origin: (f64, f64), cell_size_m: f64, cells: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(CoreError::ShapeMismatch {
                expected: width * height,
                actual: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            origin,
            cell_size_m,
            cells,
        })
    }

    /// Loads a raster from its JSON descriptor; the embeddings path is
    /// resolved relative to the descriptor.
    pub fn load(spec_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(spec_path).map_err(|e| CoreError::io(spec_path, e))?;
        let spec: RasterSpec = serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: spec_path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let emb_path = spec_path.parent().unwrap_or(Path::new(".")).join(&spec.embeddings);
        let file = interchange::read(&emb_path)?;
        let sources = interchange::read_meta(&interchange::meta_path(&emb_path))?;
        if sources.len() != file.rows {
            return Err(CoreError::corrupt(&emb_path, "sidecar row count differs from file"));
        }
        let mut cells = vec![None; spec.width * spec.height];
        for (r, src) in sources.iter().enumerate() {
            let parse = || -> Option<(usize, usize)> {
                let (a, b) = src.split_once(',')?;
                Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
            };
            let (row, col) = parse().ok_or_else(|| CoreError::Parse {
                path: interchange::meta_path(&emb_path),
                line: r + 1,
                reason: format!("source {src:?} is not \"row,col\""),
            })?;
            if row >= spec.height || col >= spec.width {
                return Err(CoreError::IndexOutOfRange {
                    index: row * spec.width + col,
                    len: spec.width * spec.height,
                });
            }
            cells[row * spec.width + col] = Some(file.row_f64(r));
        }
        Self::new(spec.width, spec.height, (spec.origin[0], spec.origin[1]), spec.cell_size_m, cells)
    }
}

/// Per-cell cosine against `prompt`; missing cells stay missing.
pub fn grid_similarity(raster: &EmbeddingRaster, prompt: &[f64]) -> Result<ScoreRaster> {
    let values = raster
        .cells
        .iter()
        .map(|c| match c {
            None => Ok(None),
            Some(e) if e.len() != prompt.len() => Err(CoreError::DimMismatch {
                left: e.len(),
                right: prompt.len(),
            }),
            Some(e) => Ok(Some(dot(e, prompt))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreRaster {
        width: raster.width,
        height: raster.height,
        origin: raster.origin,
        cell_size_m: raster.cell_size_m,
        values,
    })
}

/// Rescales present cells to `[0, 1]`; a constant raster maps to 0.5.
pub fn minmax_scale(scores: &ScoreRaster) -> Result<ScoreRaster> {
    let present: Vec<f64> = scores.values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(CoreError::EmptyRaster);
    }
    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
    let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let values = scores
        .values
        .iter()
        .map(|v| v.map(|x| if range == 0.0 { 0.5 } else { (x - min) / range }))
        .collect();
    Ok(ScoreRaster {
        values,
        ..scores.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterFormat {
    Csv,
    Pgm,
}

pub fn to_csv(scores: &ScoreRaster) -> Result<String> {
    if scores.values.iter().all(Option::is_none) {
        return Err(CoreError::EmptyRaster);
    }
    let mut out = String::from("row,col,value\n");
    for (i, v) in scores.values.iter().enumerate() {
        if let Some(x) = v {
            writeln!(out, "{},{},{}", i / scores.width, i % scores.width, x).unwrap();
        }
    }
    Ok(out)
}

/// Plain-text PGM; values are clamped to `[0, 1]` and quantised to 0–255.
pub fn to_pgm(scores: &ScoreRaster) -> Result<String> {
    if scores.values.iter().all(Option::is_none) {
        return Err(CoreError::EmptyRaster);
    }
    let mut out = String::from("P2\n");
    writeln!(
        out,
        "# origin {} {} cell_size_m {}",
        scores.origin.0, scores.origin.1, scores.cell_size_m
    )
    .unwrap();
    writeln!(out, "{} {}\n255", scores.width, scores.height).unwrap();
    for r in 0..scores.height {
        let row: Vec<String> = (0..scores.width)
            .map(|c| {
                let v = scores.values[r * scores.width + c];
                v.map_or(0, |x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_raster(scores: &ScoreRaster, path: &Path, format: RasterFormat) -> Result<()> {
    let text = match format {
        RasterFormat::Csv => to_csv(scores)?,
        RasterFormat::Pgm => to_pgm(scores)?,
    };
    fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

/// Reads a `row,col,value` file back into a raster of the given geometry.
pub fn read_csv(path: &Path, width: usize, height: usize) -> Result<Vec<Option<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let mut values = vec![None; width * height];
    for (i, line) in text.lines().enumerate().skip(1) {
        let err = |reason: String| CoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(err("expected row,col,value".into()));
        }
        let r: usize = parts[0].parse().map_err(|e| err(format!("{e}")))?;
        let c: usize = parts[1].parse().map_err(|e| err(format!("{e}")))?;
        let v: f64 = parts[2].parse().map_err(|e| err(format!("{e}")))?;
        if r >= height || c >= width {
            return Err(err("cell outside raster".into()));
        }
        values[r * width + c] = Some(v);
    }
    Ok(values)
}

/// Green (low) through white to magenta (high) for a scaled value.
pub fn green_magenta(value: f64) -> [u8; 3] {
    let v = value.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, t: f64| (a + (b - a) * t).round() as u8;
    let green = [0.0, 158.0, 115.0];
    let white = [247.0, 247.0, 247.0];
    let magenta = [197.0, 27.0, 125.0];
    let (from, to, t) = if v < 0.5 { (green, white, v * 2.0) } else { (white, magenta, v * 2.0 - 1.0) };
    [lerp(from[0], to[0], t), lerp(from[1], to[1], t), lerp(from[2], to[2], t)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(width: usize, height: usize, values: Vec<Option<f64>>) -> ScoreRaster {
        ScoreRaster {
            width,
            height,
            origin: (2_600_000.0, 1_200_000.0),
            cell_size_m: 1000.0,
            values,
        }
    }

    #[test]
    fn similarity_examples() {
        let p = vec![0.6, 0.8];
        let r = EmbeddingRaster::new(2, 1, (0.0, 0.0), 100.0, vec![Some(p.clone()), Some(vec![0.8, -0.6])]).unwrap();
        let s = grid_similarity(&r, &p).unwrap();
        assert!((s.values[0].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.values[1], Some(0.0));
        let r = EmbeddingRaster::new(2, 1, (0.0, 0.0), 100.0, vec![None, Some(vec![1.0])]).unwrap();
        assert!(grid_similarity(&r, &p).is_err());
    }

    #[test]
    fn minmax_examples() {
        let s = minmax_scale(&scores(3, 1, vec![Some(0.2), Some(0.6), Some(1.0)])).unwrap();
        let v: Vec<f64> = s.values.iter().map(|x| x.unwrap()).collect();
        assert!((v[0] - 0.0).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12);
        let s = minmax_scale(&scores(2, 1, vec![Some(0.3), Some(0.3)])).unwrap();
        assert_eq!(s.values, vec![Some(0.5), Some(0.5)]);
        let s = minmax_scale(&scores(3, 1, vec![Some(-1.0), None, Some(1.0)])).unwrap();
        assert_eq!(s.values, vec![Some(0.0), None, Some(1.0)]);
        assert!(matches!(minmax_scale(&scores(1, 1, vec![None])), Err(CoreError::EmptyRaster)));
    }

    #[test]
    fn pgm_and_csv_output() {
        let one = scores(1, 1, vec![Some(1.0)]);
        assert_eq!(to_pgm(&one).unwrap(), "P2\n# origin 2600000 1200000 cell_size_m 1000\n1 1\n255\n255\n");
        let s = scores(2, 2, vec![Some(0.0), None, Some(0.25), Some(0.5)]);
        assert_eq!(to_pgm(&s).unwrap().lines().skip(4).collect::<Vec<_>>(), vec!["0 0", "64 128"]);
        assert_eq!(to_csv(&s).unwrap(), "row,col,value\n0,0,0\n1,0,0.25\n1,1,0.5\n");
        assert!(matches!(to_csv(&scores(1, 1, vec![None])), Err(CoreError::EmptyRaster)));
    }

    #[test]
    fn palette_endpoints() {
        assert_eq!(green_magenta(0.0), [0, 158, 115]);
        assert_eq!(green_magenta(0.5), [247, 247, 247]);
        assert_eq!(green_magenta(1.0), [197, 27, 125]);
    }
}
