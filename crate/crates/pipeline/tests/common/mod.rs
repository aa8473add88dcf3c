#![allow(dead_code)]

use std::path::Path;

use cgt_pipeline::config::RunConfig;

/// A run small enough for the test suite: 12/4/6 synthetic samples and a
/// one-block model with d = 16.
pub fn toy_config(seed: u64, run_dir: &Path) -> RunConfig {
    let text = format!(
        "name = toy\nseed = {seed}\nrounds = 3\nrun_dir = {}\n\
         data.train = 12\ndata.dev = 4\ndata.test = 6\ndata.seed = {seed}\n\
         model.preset = tiny\nmodel.d = 16\nmodel.heads = 2\nmodel.blocks = 1\nmodel.ff_first = 32\nmodel.char_dim = 4\n\
         train.epochs = 10\ntrain.batch_size = 1\ndecode.max_actions = 120\nharness.time_limit = 2\n",
        run_dir.display()
    );
    RunConfig::from_text(&text).unwrap()
}
