use std::path::PathBuf;

use serde::Serialize;
use wincel_datapipe::geo::Grid;
use wincel_datapipe::pipeline::{run, write_outputs, PipelineInputs};
use wincel_datapipe::PipelineConfig;

use crate::args::{BuildDatasetArgs, GlobalArgs};
use crate::failure::{require_file, CmdResult, Failure};
use crate::settings::{output_dir, set, write_effective, FileConfig};

#[derive(Debug, Serialize)]
struct Inputs<'a> {
    gbif: &'a PathBuf,
    wiki: &'a PathBuf,
    eunis: &'a PathBuf,
    keywords: &'a PathBuf,
    merge_map: &'a Option<PathBuf>,
}

pub fn settings(file: &FileConfig, global: &GlobalArgs, args: &BuildDatasetArgs) -> CmdResult<PipelineConfig> {
    let mut c = file.build_dataset.clone();
    set(&mut c.seed, file.seed);
    set(&mut c.seed, global.seed);
    set(&mut c.text_type, args.text_type);
    set(&mut c.projection, args.projection);
    set(&mut c.grid.origin[0], args.origin_e);
    set(&mut c.grid.origin[1], args.origin_n);
    match (args.extent_e, args.extent_n, c.grid.extent_m) {
        (None, None, _) => {}
        (Some(w), Some(h), _) => c.grid.extent_m = Some([w, h]),
        (w, h, Some([cw, ch])) => c.grid.extent_m = Some([w.unwrap_or(cw), h.unwrap_or(ch)]),
        (_, _, None) => {
            return Err(Failure::validation("--extent-e and --extent-n must be given together for an unbounded grid"));
        }
    }
    set(&mut c.min_count, args.min_count);
    set(&mut c.cap, args.cap);
    set(&mut c.block_size_m, args.block_size);
    if let Some(f) = &args.fractions {
        c.fractions = [f[0], f[1], f[2]];
    }
    if args.target_classes.is_some() {
        c.target_classes = args.target_classes;
    }
    let Grid { cell_m, .. } = c.grid;
    if cell_m != wincel_datapipe::geo::TILE_SIZE_M {
        log::warn!("using a {cell_m} m grid instead of 100 m tiles");
    }
    Ok(c)
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &BuildDatasetArgs) -> CmdResult {
    let config = settings(file, global, args)?;
    require_file(&args.gbif, "GBIF table")?;
    require_file(&args.wiki, "Wikipedia input")?;
    require_file(&args.eunis, "EUNIS labels")?;
    require_file(&args.keywords, "keywords file")?;
    if let Some(m) = &args.merge_map {
        require_file(m, "merge map")?;
    }
    let out = output_dir(global.out.as_ref())?;
    let inputs = PipelineInputs {
        gbif: args.gbif.clone(),
        wiki: args.wiki.clone(),
        eunis: args.eunis.clone(),
        merge_map: args.merge_map.clone(),
        keywords: args.keywords.clone(),
    };
    let output = run(&inputs, &config)?;
    for w in &output.warnings {
        log::warn!("{w}");
    }
    write_outputs(&output, &out)?;
    log::info!(
        "{} tiles, {} sentences, {} classes written to {}",
        output.records.len(),
        output.bank.len(),
        output.classes.len(),
        out.display()
    );
    write_effective(
        &out,
        "build-dataset",
        Inputs {
            gbif: &args.gbif,
            wiki: &args.wiki,
            eunis: &args.eunis,
            keywords: &args.keywords,
            merge_map: &args.merge_map,
        },
        &config,
    )
}
