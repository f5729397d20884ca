use std::path::Path;

use clap::Args;

use kgx_core::synth::{generate_dataset, save_dataset, DatasetManifest, GradeMix};

use crate::config::PipelineConfig;
use crate::manifest::Run;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<u32>,
    /// Grade weights for grades 0..4, comma separated.
    #[arg(long, value_parser = parse_mix)]
    pub mix: Option<GradeMix>,
    #[arg(long)]
    pub noise_free: bool,
}

fn parse_mix(s: &str) -> Result<GradeMix, String> {
    let w: Vec<f64> = s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))).collect::<Result<_, _>>()?;
    let w: [f64; 5] = w.try_into().map_err(|w: Vec<f64>| format!("need 5 weights, got {}", w.len()))?;
    Ok(GradeMix(w))
}

impl GenDataArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(n) = self.n {
            cfg.data.n = n;
        }
        if let Some(s) = self.size {
            cfg.data.size = s;
        }
        if let Some(m) = self.mix {
            cfg.data.grade_mix = m;
        }
        if self.noise_free {
            cfg.data.noise_sigma_milli = 0;
        }
    }
}

pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("gen-data", out, cfg)?;
    let d = &cfg.data;
    let samples = generate_dataset(d.n, cfg.seed, d.grade_mix, d.size, d.noise_sigma_milli)?;
    let manifest = DatasetManifest::new(&samples, cfg.seed, d.grade_mix, d.size, d.noise_sigma_milli);
    save_dataset(out, &samples, &manifest)?;
    for rel in ["dataset.json", "labels.csv", "demographics.csv", "images", "truth"] {
        run.artifact(rel);
    }
    log::info!("wrote {} images", samples.len());
    run.finish()?;
    Ok(())
}
