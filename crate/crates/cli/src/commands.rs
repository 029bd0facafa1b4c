//! One function per subcommand. Each reads its inputs, writes its outputs and
//! a manifest, and never touches its inputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use visperf_core::classical::cm_pipeline;
use visperf_core::domain::{apply_exclusions, retain_included, ResponseRecord, VisType};
use visperf_core::fit::{fit, ChainSummary};
use visperf_core::model::{
    default_population, flatten, param_names, simulate_responses, ModelConfig, PopulationParams, StudyData,
};
use visperf_core::posterior::Posterior;
use visperf_core::records::{load_responses, save_responses, write_exclusions};
use visperf_core::sampler::{PosteriorDraws, SamplerConfig};
use visperf_core::stimulus::{generate_design, StudyDesign};
use visperf_service::{ServeConfig, Store, StoreOptions};

use crate::manifest::{beside, Recorder};
use crate::{ClassicalArgs, Cli, Command, DesignArgs, ExportArgs, FitArgs, ServeArgs, SimulateArgs};

pub const DRAWS_FILE: &str = "draws.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const FIT_FILE: &str = "fit.json";
pub const EXCLUSIONS_FILE: &str = "exclusions.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx { seed: cli.seed, threads: cli.threads };
    match cli.command {
        Command::Design(a) => design(&ctx, &a),
        Command::Simulate(a) => simulate(&ctx, &a),
        Command::Serve(a) => serve(&ctx, &a),
        Command::AnalyzeClassical(a) => classical(&ctx, &a),
        Command::Fit(a) => fit_cmd(&ctx, &a),
        Command::AnalyzePosterior(a) => crate::posterior_cmd::analyze(&ctx, &a),
        Command::Score(a) => crate::posterior_cmd::score(&ctx, &a),
        Command::Export(a) => export(&ctx, &a),
    }
}

pub struct Ctx {
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Ctx {
    pub fn recorder(&self, command: &str) -> Recorder {
        Recorder::new(command, self.seed, self.threads)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> visperf_core::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn load_design(path: &Path) -> Result<StudyDesign> {
    StudyDesign::load(path).with_context(|| format!("loading design {}", path.display()))
}

fn load_records(path: &Path) -> Result<Vec<ResponseRecord>> {
    load_responses(path).with_context(|| format!("loading responses {}", path.display()))
}

fn design(ctx: &Ctx, a: &DesignArgs) -> Result<()> {
    let mut rec = ctx.recorder("design");
    let d = generate_design(ctx.seed);
    let mut out = create(&a.out)?;
    out.write_all(d.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    rec.output(&a.out);
    tracing::info!(trials = d.trials.len(), out = %a.out.display(), "design written");
    rec.finish(a, &beside(&a.out))
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    if a.participants == 0 {
        bail!("--participants must be at least 1");
    }
    let mut rec = ctx.recorder("simulate");
    let design = load_design(&a.design)?;
    rec.input(&a.design);
    let population = match &a.params {
        Some(p) => {
            rec.input(p);
            PopulationParams::load(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => default_population(VisType::ALL.len()),
    };
    let (records, truth) = simulate_responses(&population, &design, a.participants, ctx.seed)?;
    save_responses(&records, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    rec.output(&a.out);
    if let Some(path) = &a.truth {
        let config = ModelConfig::final_model(VisType::ALL.len(), a.participants);
        let mut w = create(path)?;
        writeln!(w, "parameter,value")?;
        for (name, v) in param_names(&config).iter().zip(flatten(&truth, &config)) {
            writeln!(w, "\"{name}\",{v}")?;
        }
        w.flush()?;
        rec.output(path);
    }
    tracing::info!(responses = records.len(), out = %a.out.display(), "responses simulated");
    rec.finish(&serde_json::json!({ "args": a, "population": population }), &beside(&a.out))
}

fn serve(ctx: &Ctx, a: &ServeArgs) -> Result<()> {
    let mut config = ServeConfig::new(&a.data_dir, ctx.seed);
    config.port = a.port;
    config.ui_dir = a.ui_dir.clone();
    config.store = StoreOptions { durable: !a.no_fsync, ..StoreOptions::default() };
    if a.public {
        config.host = [0, 0, 0, 0];
    }
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(visperf_service::serve(config))?;
    Ok(())
}

/// Applies the attention-check exclusions unless `keep` is set.
fn exclusions(
    records: Vec<ResponseRecord>,
    design: &StudyDesign,
    keep: bool,
    report_to: Option<&Path>,
    rec: &mut Recorder,
) -> Result<Vec<ResponseRecord>> {
    let reports = apply_exclusions(&records, design);
    if let Some(path) = report_to {
        write_with(path, |w| write_exclusions(&reports, w))?;
        rec.output(path);
    }
    let excluded = reports.iter().filter(|r| r.excluded).count();
    let incomplete = reports.iter().filter(|r| r.incomplete).count();
    if incomplete > 0 {
        tracing::warn!(incomplete, "participants with incomplete attention checks were kept");
    }
    if keep {
        return Ok(records);
    }
    tracing::info!(excluded, of = reports.len(), "attention-check exclusions applied");
    Ok(retain_included(records, &reports))
}

fn classical(ctx: &Ctx, a: &ClassicalArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze-classical");
    let design = load_design(&a.design)?;
    let records = load_records(&a.responses)?;
    rec.input(&a.design);
    rec.input(&a.responses);
    let records = exclusions(records, &design, a.keep_excluded, a.exclusions.as_deref(), &mut rec)?;
    let result = cm_pipeline(&records, &design, a.bootstrap, ctx.seed)?;
    write_with(&a.out, |w| result.write_csv(w))?;
    rec.output(&a.out);
    rec.finish(a, &beside(&a.out))
}

/// Everything about a fit except the draws themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub config: ModelConfig,
    pub participants: Vec<String>,
    pub n_observations: usize,
    pub sampler: SamplerConfig,
    pub chains: Vec<ChainSummary>,
    pub divergence_rate: f64,
    pub max_rhat: Option<f64>,
    pub min_ess_bulk: Option<f64>,
    pub warnings: Vec<String>,
}

fn fit_cmd(ctx: &Ctx, a: &FitArgs) -> Result<()> {
    let mut rec = ctx.recorder("fit");
    let design = load_design(&a.design)?;
    let records = load_records(&a.responses)?;
    rec.input(&a.design);
    rec.input(&a.responses);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let records = exclusions(records, &design, a.keep_excluded, Some(&a.out.join(EXCLUSIONS_FILE)), &mut rec)?;
    let data = StudyData::from_responses(&records, &design)?;
    if data.participants.is_empty() {
        bail!("no main-phase responses to fit");
    }
    let base = ModelConfig::final_model(data.n_vis(), data.participants.len());
    let config = match &a.model {
        Some(path) => {
            rec.input(path);
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let c = ModelConfig::from_text(&text, Some(&base))?;
            if c.n_vis != base.n_vis || c.n_participants != base.n_participants {
                bail!(
                    "model config has V={} P={} but the data have V={} P={}",
                    c.n_vis,
                    c.n_participants,
                    base.n_vis,
                    base.n_participants
                );
            }
            c
        }
        None => base,
    };
    let sampler = SamplerConfig {
        n_chains: a.chains,
        warmup: a.warmup,
        samples: a.samples,
        thin: a.thin,
        target_accept: a.target_accept,
        max_tree_depth: a.max_tree_depth,
        seed: ctx.seed,
        ..SamplerConfig::default()
    };
    tracing::info!(
        participants = data.participants.len(),
        observations = data.observations.len(),
        chains = a.chains,
        "fitting"
    );
    let out = fit(&config, &data.observations, &sampler)?;
    for w in &out.diagnostics.warnings {
        tracing::warn!("{w}");
    }
    let max_rhat = out.diagnostics.max_rhat();
    if max_rhat.is_some_and(|r| r > 1.01) {
        tracing::warn!(max_rhat, "some R-hat values exceed 1.01");
    }

    let draws_path = a.out.join(DRAWS_FILE);
    write_with(&draws_path, |w| out.draws.write_csv(w))?;
    let diag_path = a.out.join(DIAGNOSTICS_FILE);
    fs::write(&diag_path, out.diagnostics.params_json()? + "\n")?;
    let record = FitRecord {
        config,
        participants: data.participants.clone(),
        n_observations: data.observations.len(),
        sampler,
        chains: out.chains.clone(),
        divergence_rate: out.diagnostics.divergence_rate,
        max_rhat,
        min_ess_bulk: out.diagnostics.min_ess_bulk(),
        warnings: out.diagnostics.warnings.clone(),
    };
    let fit_path = a.out.join(FIT_FILE);
    fs::write(&fit_path, serde_json::to_string_pretty(&record)? + "\n")?;
    for p in [&draws_path, &diag_path, &fit_path] {
        rec.output(p);
    }
    tracing::info!(max_rhat, min_ess_bulk = record.min_ess_bulk, out = %a.out.display(), "fit written");
    rec.finish(a, &a.out.join(MANIFEST_FILE))
}

/// Reads a directory written by `fit`.
pub fn load_fit(dir: &Path, rec: &mut Recorder) -> Result<(FitRecord, Posterior)> {
    let fit_path = dir.join(FIT_FILE);
    let draws_path = dir.join(DRAWS_FILE);
    let text = fs::read_to_string(&fit_path).with_context(|| format!("reading {}", fit_path.display()))?;
    let record: FitRecord = serde_json::from_str(&text).with_context(|| format!("parsing {}", fit_path.display()))?;
    let file = File::open(&draws_path).with_context(|| format!("opening {}", draws_path.display()))?;
    let draws = PosteriorDraws::read_csv(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", draws_path.display()))?;
    let post = Posterior::from_draws(record.config.clone(), record.participants.clone(), &draws)?;
    rec.input(fit_path);
    rec.input(draws_path);
    Ok((record, post))
}

fn export(ctx: &Ctx, a: &ExportArgs) -> Result<()> {
    let mut rec = ctx.recorder("export");
    // Read-only: skip fsync, and snapshots are never written without events.
    let store = Store::open(&a.data_dir, StoreOptions { durable: false, snapshot_every: 0 })?;
    let export = store.export(visperf_service::ExportFilter {
        include_training: a.include_training,
        include_partial: a.include_partial,
    });
    let mut out = create(&a.out)?;
    out.write_all(export.csv.as_bytes())?;
    out.flush()?;
    rec.output(&a.out);
    if !export.partial_sessions.is_empty() {
        tracing::warn!(sessions = ?export.partial_sessions, "incomplete sessions included");
    }
    rec.finish(a, &beside(&a.out))
}

pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}{ext}"))
}
