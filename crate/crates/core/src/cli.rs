//! Command-line front end: JSON configs with flag overrides, one subcommand per pipeline stage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::glm::{
    build_design, masked_series, two_pass_fit, Ar1Choice, BetaDataset, FitProvenance, HrfParams,
    Label, NoiseModel,
};
use crate::inference::{
    fisher_z, label_permutation_diagnostic, permutation_maxt, smooth_gaussian, RsaMap, Summary,
};
use crate::io::{read_events_csv, read_matrix_csv, write_json, write_matrix_csv, write_text};
use crate::rsa::{
    searchlight_rsa_multi, stimulus_similarity, BrainSimilarity, ConfounderSpec, CorrelationMethod,
    RsaAnalysis, RsaOptions, VectorizationRule,
};
use crate::simulate::{
    make_fig1_events, run_fig1_experiment_to, ExperimentConfig, Fig1Design, LabelPattern,
    PatternName,
};
use crate::volumes::{read_volume, write_volume, Mask, SearchlightSpec, Volume};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";

#[derive(Debug, Parser)]
#[command(
    name = "searchlight-rsa",
    version,
    about = "Searchlight RSA with design-covariance bias correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate white-noise subjects under the block design and report bias diagnostics.
    Simulate(CommonArgs),
    /// Fit the first-level model to a 4D volume.
    GlmFit(CommonArgs),
    /// Searchlight RSA maps from first-level coefficients.
    Rsa(CommonArgs),
    /// One-sample group test with max-t permutation correction.
    Group(CommonArgs),
    /// Correlation of stimulus similarity with the coefficient covariance under label shuffling.
    PermLabels(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. `--set experiment.n_subjects=10`. The value is parsed as JSON
    /// when possible, otherwise taken as a string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty key segment"));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(key, "parent is not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    unreachable!("split yields at least one segment")
}

fn config_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
        .unwrap_or("config")
        .to_string();
    Error::config(field, msg)
}

/// Reads the config document, applies flag overrides and deserializes it.
fn load_config<T: DeserializeOwned>(args: &CommonArgs, seed_key: Option<&str>) -> Result<T> {
    let mut value = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(config_error)?
        }
        None => json!({}),
    };
    if !value.is_object() {
        return Err(Error::config("config", "top level must be a JSON object"));
    }
    for o in &args.overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::config(o.as_str(), "expected KEY=VALUE"))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key.trim(), v)?;
    }
    if let Some(seed) = args.seed {
        let key = seed_key.ok_or_else(|| Error::config("seed", "this command takes no seed"))?;
        set_path(&mut value, key, json!(seed))?;
    }
    if let Some(t) = args.threads {
        set_path(&mut value, "threads", json!(t))?;
    }
    if let Some(out) = &args.out {
        set_path(&mut value, "out_dir", json!(out))?;
    }
    serde_json::from_value(value).map_err(config_error)
}

fn prepare_out(dir: &Path, resolved: &impl Serialize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(dir.join(RESOLVED_CONFIG), resolved)
}

fn require(path: &Path, field: &str) -> Result<()> {
    if path.as_os_str().is_empty() {
        return Err(Error::config(field, "is required"));
    }
    Ok(())
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        Some(0) => Err(Error::config("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(f),
        None => f(),
    }
}

// ---------------------------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Also write each subject's coefficient volume.
    pub save_betas: bool,
    pub experiment: ExperimentConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            out_dir: "simulate_out".into(),
            threads: None,
            save_betas: false,
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Writes `diagnostics.csv`, `summary.json` and, when label permutations are requested,
/// `permutation_distribution.csv`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<()> {
    cfg.experiment.validate()?;
    prepare_out(&cfg.out_dir, cfg)?;
    let beta_dir = cfg.out_dir.join("betas");
    if cfg.save_betas {
        fs::create_dir_all(&beta_dir).map_err(|e| Error::io(&beta_dir, e))?;
    }
    let report = with_threads(cfg.threads, || {
        run_fig1_experiment_to(
            &cfg.experiment,
            cfg.save_betas.then_some(beta_dir.as_path()),
        )
    })?;
    write_text(
        cfg.out_dir.join("diagnostics.csv"),
        &report.diagnostics_csv(),
    )?;
    if let Some(text) = report.permutation_csv(&cfg.experiment.patterns) {
        write_text(cfg.out_dir.join("permutation_distribution.csv"), &text)?;
    }
    let perm = report.label_permutation.as_ref().map(|lp| {
        json!({
            "n_permutations": lp.distribution.len(),
            "n_resampled": lp.n_resampled,
            "degenerate_bcov": lp.degenerate_bcov,
            "observed": cfg.experiment.patterns.iter().enumerate().map(|(i, p)| json!({
                "pattern": p,
                "correlation": lp.observed[i],
                "more_extreme_than_all_permutations": lp.observed_is_extreme(i),
            })).collect::<Vec<_>>(),
        })
    });
    write_json(
        cfg.out_dir.join("summary.json"),
        &json!({ "cells": report.cells, "label_permutation": perm }),
    )
}

// ---------------------------------------------------------------------------------------------
// glm-fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlmFitConfig {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// 4D NIfTI time series.
    pub data: PathBuf,
    /// CSV with columns `onset,duration,label`.
    pub events: PathBuf,
    pub mask: Option<PathBuf>,
    /// Optional nuisance regressors, one column per regressor, with a header row.
    pub nuisance: Option<PathBuf>,
    pub tr: f64,
    pub hrf: HrfParams,
    pub highpass_cutoff: Option<f64>,
    /// Fixed AR(1) coefficient; `null` estimates it from first-pass residuals.
    pub ar1_rho: Option<f64>,
}

impl Default for GlmFitConfig {
    fn default() -> Self {
        Self {
            out_dir: "glm_out".into(),
            threads: None,
            data: PathBuf::new(),
            events: PathBuf::new(),
            mask: None,
            nuisance: None,
            tr: 2.26,
            hrf: HrfParams::default(),
            highpass_cutoff: None,
            ar1_rho: None,
        }
    }
}

/// Metadata written next to first-level outputs and read back by `rsa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmReport {
    pub labels: Vec<Label>,
    pub tr: f64,
    pub n_voxels: usize,
    pub provenance: FitProvenance,
}

pub fn cmd_glm_fit(cfg: &GlmFitConfig) -> Result<()> {
    require(&cfg.data, "data")?;
    require(&cfg.events, "events")?;
    let data = read_volume(&cfg.data)?;
    let mask = match &cfg.mask {
        Some(p) => {
            let m = Mask::from_volume(&read_volume(p)?);
            if !m.geometry().matches(&data.geometry) {
                return Err(Error::Dimension(format!(
                    "mask geometry {:?} does not match data geometry {:?}",
                    m.geometry().dims,
                    data.geometry.dims
                )));
            }
            m
        }
        None => Mask::full(data.geometry),
    };
    let events = read_events_csv(&cfg.events, data.n_frames, cfg.tr)?;
    let nuisance = cfg.nuisance.as_ref().map(read_matrix_csv).transpose()?;
    let design = build_design(&events, &cfg.hrf, nuisance.as_ref())?;
    prepare_out(&cfg.out_dir, cfg)?;

    let ar1 = cfg.ar1_rho.map_or(Ar1Choice::Estimate, Ar1Choice::Fixed);
    let dataset = with_threads(cfg.threads, || {
        let y = masked_series(&data, &mask)?;
        let (fit, noise) = two_pass_fit(&y, &design, cfg.highpass_cutoff, ar1)?;
        BetaDataset::from_fit(mask.clone(), fit, &noise, &design)
    })?;

    write_volume(cfg.out_dir.join("betas.nii"), &dataset.beta_volume())?;
    write_volume(cfg.out_dir.join("sigma2.nii"), &dataset.sigma2_volume())?;
    write_volume(cfg.out_dir.join("mask.nii"), &mask.to_volume())?;
    write_matrix_csv(cfg.out_dir.join("bcov.csv"), &dataset.bcov)?;
    write_matrix_csv(cfg.out_dir.join("design.csv"), &design.values)?;
    let report = GlmReport {
        labels: events.labels(),
        tr: cfg.tr,
        n_voxels: mask.voxel_count(),
        provenance: dataset.provenance.clone(),
    };
    write_json(cfg.out_dir.join("glm.json"), &report)
}

/// Loads the outputs of `glm-fit` from a directory.
pub fn load_glm_dir(dir: &Path) -> Result<(BetaDataset, GlmReport)> {
    let text =
        fs::read_to_string(dir.join("glm.json")).map_err(|e| Error::io(dir.join("glm.json"), e))?;
    let report: GlmReport = serde_json::from_str(&text).map_err(config_error)?;
    let betas = read_volume(dir.join("betas.nii"))?;
    let mask_path = dir.join("mask.nii");
    let mask = if mask_path.exists() {
        Mask::from_volume(&read_volume(&mask_path)?)
    } else {
        Mask::full(betas.geometry)
    };
    let sigma_path = dir.join("sigma2.nii");
    let sigma2 = if sigma_path.exists() {
        Some(read_volume(&sigma_path)?)
    } else {
        None
    };
    let bcov: DMatrix<f64> = read_matrix_csv(dir.join("bcov.csv"))?;
    let data = BetaDataset::from_volumes(
        &betas,
        sigma2.as_ref(),
        mask,
        bcov,
        report.provenance.clone(),
    )?;
    Ok((data, report))
}

// ---------------------------------------------------------------------------------------------
// rsa

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RsaConfig {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// Output directory of `glm-fit`.
    pub glm_dir: PathBuf,
    /// Stimulus categories in trial order; defaults to the labels recorded by `glm-fit`.
    pub labels: Option<Vec<Label>>,
    pub subject_id: String,
    pub confounder_sets: Vec<ConfounderSpec>,
    pub searchlight: SearchlightSpec,
    pub offset: usize,
    pub method: CorrelationMethod,
    pub brain_similarity: BrainSimilarity,
}

impl Default for RsaConfig {
    fn default() -> Self {
        Self {
            out_dir: "rsa_out".into(),
            threads: None,
            glm_dir: PathBuf::new(),
            labels: None,
            subject_id: "subject".into(),
            confounder_sets: vec![ConfounderSpec::none()],
            searchlight: SearchlightSpec::default(),
            offset: 1,
            method: CorrelationMethod::Pearson,
            brain_similarity: BrainSimilarity::Sscp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDiagnostics {
    pub confounder_set: ConfounderSpec,
    pub file: String,
    pub mean: f64,
    pub sd: f64,
    pub n_searchlights: usize,
    pub n_degenerate: usize,
    pub n_pairs: usize,
}

/// Writes `rsa_<set>.nii` (+ `.json` sidecar) per confounder set and `diagnostics.json`.
pub fn cmd_rsa(cfg: &RsaConfig) -> Result<()> {
    require(&cfg.glm_dir, "glm_dir")?;
    if cfg.confounder_sets.is_empty() {
        return Err(Error::config(
            "confounder_sets",
            "at least one set is required (use \"none\")",
        ));
    }
    let (data, report) = load_glm_dir(&cfg.glm_dir)?;
    let labels = cfg.labels.clone().unwrap_or(report.labels);
    let model = stimulus_similarity(&labels)?;
    let rule = VectorizationRule::new(cfg.offset)?;
    let analyses = cfg
        .confounder_sets
        .iter()
        .map(|set| {
            Ok(RsaAnalysis {
                name: set.to_string(),
                model: model.clone(),
                confounders: set.build(&data)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = RsaOptions {
        searchlight: cfg.searchlight,
        rule,
        method: cfg.method,
        brain: cfg.brain_similarity,
    };
    prepare_out(&cfg.out_dir, cfg)?;
    let outcomes = with_threads(cfg.threads, || {
        searchlight_rsa_multi(&data, &data.mask, &opts, &analyses)
    })?;

    let mut diagnostics = Vec::new();
    for (set, mut outcome) in cfg.confounder_sets.iter().zip(outcomes) {
        let file = format!("rsa_{}.nii", set.to_string().replace('+', "_"));
        outcome.map.subject_id = cfg.subject_id.clone();
        if let Value::Object(o) = &mut outcome.map.provenance {
            o.insert("subject_id".into(), json!(cfg.subject_id));
            o.insert("confounder_set".into(), json!(set));
            o.insert("n_pairs".into(), json!(rule.pair_count(labels.len())));
        }
        outcome.map.write(cfg.out_dir.join(&file))?;
        let values: Vec<f64> = outcome.map.present().collect();
        let summary = if values.is_empty() {
            None
        } else {
            Some(Summary::of(&values))
        };
        diagnostics.push(MapDiagnostics {
            confounder_set: set.clone(),
            file,
            mean: summary.map_or(f64::NAN, |s| s.mean),
            sd: summary.map_or(f64::NAN, |s| s.sd),
            n_searchlights: outcome.n_searchlights,
            n_degenerate: outcome.n_degenerate,
            n_pairs: rule.pair_count(labels.len()),
        });
    }
    write_json(cfg.out_dir.join("diagnostics.json"), &diagnostics)
}

// ---------------------------------------------------------------------------------------------
// group

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupConfig {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    /// One RSA map per subject.
    pub maps: Vec<PathBuf>,
    pub fwhm_mm: f64,
    pub fisher_z: bool,
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            out_dir: "group_out".into(),
            threads: None,
            maps: Vec::new(),
            fwhm_mm: 4.0,
            fisher_z: false,
            n_perm: 2000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Writes `t.nii`, `rejected.nii`, `maxt.csv` and `threshold.json`.
pub fn cmd_group(cfg: &GroupConfig) -> Result<()> {
    if cfg.maps.len() < 3 {
        return Err(Error::config(
            "maps",
            format!("need at least 3 subject maps, got {}", cfg.maps.len()),
        ));
    }
    let maps = cfg
        .maps
        .iter()
        .map(|p| {
            let m = RsaMap::read(p)?;
            let m = if cfg.fisher_z { fisher_z(&m) } else { m };
            smooth_gaussian(&m, cfg.fwhm_mm)
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_out(&cfg.out_dir, cfg)?;
    let result = with_threads(cfg.threads, || {
        permutation_maxt(&maps, cfg.n_perm, cfg.alpha, cfg.seed)
    })?;
    let g = result.geometry;
    write_volume(
        cfg.out_dir.join("t.nii"),
        &Volume {
            geometry: g,
            n_frames: 1,
            data: result.t_map.clone(),
        },
    )?;
    let rejected = result
        .rejected
        .iter()
        .map(|&r| if r { 1.0 } else { 0.0 })
        .collect();
    write_volume(
        cfg.out_dir.join("rejected.nii"),
        &Volume {
            geometry: g,
            n_frames: 1,
            data: rejected,
        },
    )?;
    let mut csv = String::from("permutation,max_abs_t\n");
    for (i, m) in result.maxt_distribution.iter().enumerate() {
        csv.push_str(&format!("{i},{m}\n"));
    }
    write_text(cfg.out_dir.join("maxt.csv"), &csv)?;
    write_json(
        cfg.out_dir.join("threshold.json"),
        &json!({
            "threshold": result.corrected_threshold,
            "alpha": cfg.alpha,
            "n_perm": cfg.n_perm,
            "df": result.df,
            "n_subjects": maps.len(),
            "n_rejected": result.n_rejected(),
        }),
    )
}

// ---------------------------------------------------------------------------------------------
// perm-labels

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PermLabelsConfig {
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub design: Fig1Design,
    pub hrf: HrfParams,
    /// Events CSV replacing the block design; its scan count and TR come from `design`.
    pub events: Option<PathBuf>,
    pub patterns: Vec<PatternName>,
    pub custom_labels: Option<Vec<Label>>,
    pub ar1_rho: f64,
    pub highpass_cutoff: Option<f64>,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for PermLabelsConfig {
    fn default() -> Self {
        Self {
            out_dir: "perm_labels_out".into(),
            threads: None,
            design: Fig1Design::default(),
            hrf: HrfParams::default(),
            events: None,
            patterns: vec![PatternName::A, PatternName::B],
            custom_labels: None,
            ar1_rho: 0.0,
            highpass_cutoff: None,
            n_perm: 2000,
            seed: 0,
        }
    }
}

/// Writes `permutation_distribution.csv` and `observed.json`.
pub fn cmd_perm_labels(cfg: &PermLabelsConfig) -> Result<()> {
    let patterns = cfg
        .patterns
        .iter()
        .map(|&p| match p {
            PatternName::Custom => cfg
                .custom_labels
                .clone()
                .map(LabelPattern::custom)
                .ok_or_else(|| Error::config("custom_labels", "required by the `custom` pattern")),
            named => LabelPattern::named(named, &cfg.design),
        })
        .collect::<Result<Vec<_>>>()?;
    if patterns.is_empty() {
        return Err(Error::config(
            "patterns",
            "at least one pattern is required",
        ));
    }
    let events = match &cfg.events {
        Some(p) => read_events_csv(p, cfg.design.n_scans, cfg.design.tr)?,
        None => make_fig1_events(&cfg.design, &patterns[0])?,
    };
    let noise = NoiseModel::new(
        cfg.design.n_scans,
        cfg.design.tr,
        cfg.ar1_rho,
        cfg.highpass_cutoff,
    )?;
    prepare_out(&cfg.out_dir, cfg)?;
    let labels: Vec<Vec<Label>> = patterns.iter().map(|p| p.labels.clone()).collect();
    let result = with_threads(cfg.threads, || {
        label_permutation_diagnostic(&events, &cfg.hrf, &noise, &labels, cfg.n_perm, cfg.seed)
    })?;
    let mut csv = String::from("permutation,correlation\n");
    for (i, r) in result.distribution.iter().enumerate() {
        csv.push_str(&format!("{i},{r}\n"));
    }
    write_text(cfg.out_dir.join("permutation_distribution.csv"), &csv)?;
    let observed: Vec<Value> = cfg
        .patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({
                "pattern": p,
                "correlation": result.observed[i],
                "more_extreme_than_all_permutations": result.observed_is_extreme(i),
            })
        })
        .collect();
    write_json(
        cfg.out_dir.join("observed.json"),
        &json!({
            "observed": observed,
            "n_permutations": result.distribution.len(),
            "n_resampled": result.n_resampled,
            "degenerate_bcov": result.degenerate_bcov,
        }),
    )
}

// ---------------------------------------------------------------------------------------------

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&load_config(&a, Some("experiment.seed"))?),
        Command::GlmFit(a) => cmd_glm_fit(&load_config(&a, None)?),
        Command::Rsa(a) => cmd_rsa(&load_config(&a, None)?),
        Command::Group(a) => cmd_group(&load_config(&a, Some("seed"))?),
        Command::PermLabels(a) => cmd_perm_labels(&load_config(&a, Some("seed"))?),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}
