use wincel_core::synth::{self, SynthConfig};

use crate::args::{GlobalArgs, SynthArgs};
use crate::failure::CmdResult;
use crate::settings::{output_dir, set, write_effective, FileConfig};

pub fn settings(file: &FileConfig, global: &GlobalArgs, args: &SynthArgs) -> SynthConfig {
    let mut c = file.synth.clone();
    set(&mut c.seed, file.seed);
    set(&mut c.seed, global.seed);
    set(&mut c.classes, args.classes);
    set(&mut c.n_train, args.n_train);
    set(&mut c.n_test, args.n_test);
    set(&mut c.k, args.k);
    set(&mut c.dim, args.dim);
    set(&mut c.informative_fraction, args.informative_fraction);
    set(&mut c.noise, args.noise);
    set(&mut c.informative_spread, args.informative_spread);
    set(&mut c.distractor_spread, args.distractor_spread);
    c
}

pub fn run_cmd(file: &FileConfig, global: &GlobalArgs, args: &SynthArgs) -> CmdResult {
    let config = settings(file, global, args);
    config.validate()?;
    let out = output_dir(global.out.as_ref())?;
    let data = synth::generate(&config)?;
    synth::write(&data, &out)?;
    write_effective(&out, "synth", serde_json::json!({}), &config)
}
