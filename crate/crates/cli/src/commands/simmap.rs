use std::path::PathBuf;

use serde::Serialize;
use wincel_core::embed::TextEncoder;
use wincel_core::linalg::l2_normalize;
use wincel_core::simmap::{grid_similarity, minmax_scale, write_raster, EmbeddingRaster, RasterFormat};
use wincel_core::train::Checkpoint;
use wincel_core::Matrix;

use crate::args::{GlobalArgs, SimmapArgs};
use crate::failure::{require_file, CmdResult};
use crate::provider;
use crate::settings::{output_dir, set, write_effective, FileConfig, ProviderSettings, SimmapSettings};

#[derive(Debug, Serialize)]
struct Inputs<'a> {
    raster: &'a PathBuf,
    prompt: &'a str,
    checkpoint: &'a Option<PathBuf>,
    raw: bool,
}

#[derive(Debug, Serialize)]
struct Effective<'a> {
    provider: &'a ProviderSettings,
    simmap: &'a SimmapSettings,
}

pub fn file_name(format: RasterFormat) -> &'static str {
    match format {
        RasterFormat::Csv => "simmap.csv",
        RasterFormat::Pgm => "simmap.pgm",
    }
}

/// Cells become unit vectors, projected through the head when one is given.
fn prepare_cells(raster: &mut EmbeddingRaster, head: Option<&Checkpoint>) -> CmdResult {
    let present: Vec<usize> = (0..raster.cells.len()).filter(|&i| raster.cells[i].is_some()).collect();
    if present.is_empty() {
        return Ok(());
    }
    let rows: Vec<Vec<f64>> = present.iter().map(|&i| raster.cells[i].clone().expect("present")).collect();
    let dim = rows[0].len();
    let x = Matrix::from_rows(&rows, dim)?;
    let v = match head {
        Some(c) => c.head.project(&x)?,
        None => {
            let unit = x.iter_rows().map(|r| l2_normalize(r).unit()).collect::<wincel_core::Result<Vec<_>>>()?;
            Matrix::from_rows(&unit, dim)?
        }
    };
    for (row, &i) in present.iter().enumerate() {
        raster.cells[i] = Some(v.row(row).to_vec());
    }
    Ok(())
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &SimmapArgs) -> CmdResult {
    let mut config = file.simmap.clone();
    set(&mut config.format, args.format);
    let providers = provider::resolve(file.provider_settings(), &args.provider);
    require_file(&args.raster, "raster descriptor")?;
    let checkpoint = match &args.checkpoint {
        Some(p) => {
            require_file(p, "checkpoint")?;
            Some(Checkpoint::load(p)?)
        }
        None => None,
    };
    let encoder = provider::open(&providers)?;
    let out = output_dir(global.out.as_ref())?;
    let mut raster = EmbeddingRaster::load(&args.raster)?;
    prepare_cells(&mut raster, checkpoint.as_ref())?;
    let prompt = encoder.embed(&args.prompt)?;
    let scores = grid_similarity(&raster, &prompt)?;
    let scores = if args.raw { scores } else { minmax_scale(&scores)? };
    write_raster(&scores, &out.join(file_name(config.format)), config.format)?;
    write_effective(
        &out,
        "simmap",
        Inputs {
            raster: &args.raster,
            prompt: &args.prompt,
            checkpoint: &args.checkpoint,
            raw: args.raw,
        },
        Effective {
            provider: &providers,
            simmap: &config,
        },
    )
}
