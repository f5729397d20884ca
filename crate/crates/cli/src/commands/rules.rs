use std::path::{Path, PathBuf};

use clap::Args;

use kgx_core::assets;
use kgx_core::llm::RefinePolicy;
use kgx_core::plan::serialize_plan;
use kgx_core::rules::Corpus;

use super::{bridge, write_transcript};
use crate::config::PipelineConfig;
use crate::manifest::Run;

#[derive(Debug, Args)]
pub struct BuildRulesArgs {
    /// Directory of plain-text documents; defaults to the bundled corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<String>,
}

impl BuildRulesArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(c) = &self.corpus {
            cfg.paths.corpus = Some(c.clone());
        }
        if let Some(q) = &self.query {
            cfg.rules.query = q.clone();
        }
    }
}

/// Rule base plus one generated plan per visual rule.
pub fn run(cfg: &PipelineConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("build-rules", out, cfg)?;
    let corpus = match &cfg.paths.corpus {
        Some(dir) => {
            run.input("corpus", dir)?;
            Corpus::from_dir(dir)?
        }
        None => Corpus::new(assets::CORPUS)?,
    };
    let passages = corpus.retrieve(&cfg.rules.query, cfg.rules.top_k)?;
    log::info!("retrieved {} passages", passages.len());
    let bridge = bridge(cfg, RefinePolicy::Monotone)?;
    let outcome = (|| -> anyhow::Result<()> {
        let rb = bridge.consolidate_rules(&cfg.rules.disease, &passages)?;
        run.write("rulebase.json", rb.to_json())?;
        for rule in rb.visual() {
            let plan = bridge.generate_plan(rule)?;
            run.write(&format!("plans/{}.json", rule.rule_id), serialize_plan(&plan))?;
        }
        Ok(())
    })();
    // The transcript is kept even when the backend gives up.
    write_transcript(&mut run, &bridge)?;
    outcome?;
    run.finish()?;
    Ok(())
}
