//! The synthetic block-design experiment: white-noise subjects analysed with and without
//! confounder adjustment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{build_design, BetaDataset, EventTable, HrfParams, Label, NoiseModel};
use crate::inference::{
    average_volume_correlation, label_permutation_diagnostic, LabelPermutationResult, Summary,
};
use crate::rsa::{
    searchlight_rsa_multi, stimulus_similarity, BrainSimilarity, ConfounderSpec, CorrelationMethod,
    RsaAnalysis, RsaOptions, VectorizationRule,
};
use crate::volumes::{write_volume, Mask, SearchlightSpec, Volume, VolumeGeometry};

/// Block paradigm: `n_blocks` blocks of `trials_per_block` back-to-back trials, separated by
/// unmodelled baseline periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Design {
    pub n_blocks: usize,
    pub trials_per_block: usize,
    pub stimulus_duration: f64,
    pub block_duration: f64,
    pub baseline_duration: f64,
    pub tr: f64,
    pub n_scans: usize,
}

impl Default for Fig1Design {
    fn default() -> Self {
        Self {
            n_blocks: 6,
            trials_per_block: 4,
            stimulus_duration: 3.0,
            block_duration: 12.0,
            baseline_duration: 12.0,
            tr: 2.26,
            n_scans: 65,
        }
    }
}

impl Fig1Design {
    pub fn q(&self) -> usize {
        self.n_blocks * self.trials_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.trials_per_block == 0 || self.n_scans == 0 {
            return Err(Error::Design(
                "block, trial and scan counts must be positive".into(),
            ));
        }
        for (name, v) in [
            ("stimulus_duration", self.stimulus_duration),
            ("block_duration", self.block_duration),
            ("tr", self.tr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Design(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.baseline_duration >= 0.0 && self.baseline_duration.is_finite()) {
            return Err(Error::Design(format!(
                "baseline_duration must be non-negative, got {}",
                self.baseline_duration
            )));
        }
        if self.trials_per_block as f64 * self.stimulus_duration > self.block_duration + 1e-9 {
            return Err(Error::Design("trials do not fit inside a block".into()));
        }
        Ok(())
    }

    /// Onset of trial `k` in block `b`, both 0-based.
    pub fn onset(&self, b: usize, k: usize) -> f64 {
        b as f64 * (self.block_duration + self.baseline_duration)
            + k as f64 * self.stimulus_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternName {
    A,
    B,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for PatternName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternName::A => "A",
            PatternName::B => "B",
            PatternName::Custom => "custom",
        })
    }
}

impl FromStr for PatternName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(PatternName::A),
            "B" | "b" => Ok(PatternName::B),
            "custom" => Ok(PatternName::Custom),
            other => Err(Error::config(
                "patterns",
                format!("unknown pattern `{other}`"),
            )),
        }
    }
}

/// Category assignment of the trials, in trial order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPattern {
    pub name: PatternName,
    pub labels: Vec<Label>,
}

impl LabelPattern {
    /// Categories alternate between trials within each block.
    pub fn a(design: &Fig1Design) -> Self {
        let labels = (0..design.n_blocks)
            .flat_map(|_| (0..design.trials_per_block).map(|k| (k % 2 + 1) as Label))
            .collect();
        Self {
            name: PatternName::A,
            labels,
        }
    }

    /// Every trial of a block shares a category; categories alternate between blocks.
    pub fn b(design: &Fig1Design) -> Self {
        let labels = (0..design.n_blocks)
            .flat_map(|b| std::iter::repeat_n((b % 2 + 1) as Label, design.trials_per_block))
            .collect();
        Self {
            name: PatternName::B,
            labels,
        }
    }

    pub fn custom(labels: Vec<Label>) -> Self {
        Self {
            name: PatternName::Custom,
            labels,
        }
    }

    pub fn named(name: PatternName, design: &Fig1Design) -> Result<Self> {
        match name {
            PatternName::A => Ok(Self::a(design)),
            PatternName::B => Ok(Self::b(design)),
            PatternName::Custom => Err(Error::config(
                "patterns",
                "custom patterns need explicit labels",
            )),
        }
    }
}

/// One event per trial, labelled by `pattern`.
pub fn make_fig1_events(design: &Fig1Design, pattern: &LabelPattern) -> Result<EventTable> {
    design.validate()?;
    if pattern.labels.len() != design.q() {
        return Err(Error::Design(format!(
            "pattern has {} labels for {} trials",
            pattern.labels.len(),
            design.q()
        )));
    }
    let mut onsets = Vec::with_capacity(design.q());
    for b in 0..design.n_blocks {
        for k in 0..design.trials_per_block {
            let i = b * design.trials_per_block + k;
            onsets.push((
                design.onset(b, k),
                design.stimulus_duration,
                pattern.labels[i],
            ));
        }
    }
    EventTable::from_onsets(&onsets, design.n_scans, design.tr)
}

/// Standard-normal 4D data for one subject; the stream depends only on `(seed, subject)`.
pub fn noise_volume(geometry: VolumeGeometry, n_scans: usize, seed: u64, subject: usize) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    let data = (0..geometry.n_voxels() * n_scans)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Volume {
        geometry,
        n_frames: n_scans,
        data,
    }
}

pub fn generate_noise_volumes(
    n_subjects: usize,
    geometry: VolumeGeometry,
    n_scans: usize,
    seed: u64,
) -> Result<Vec<Volume>> {
    if n_subjects == 0 || n_scans == 0 {
        return Err(Error::parameter(
            "n_subjects",
            "subject and scan counts must be positive",
        ));
    }
    Ok((0..n_subjects)
        .map(|s| noise_volume(geometry, n_scans, seed, s))
        .collect())
}

/// Parameters of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub design: Fig1Design,
    pub hrf: HrfParams,
    pub patterns: Vec<PatternName>,
    /// Labels for the `custom` pattern, in trial order.
    pub custom_labels: Option<Vec<Label>>,
    pub confounder_sets: Vec<ConfounderSpec>,
    pub dims: [usize; 3],
    pub voxel_size_mm: f64,
    pub n_subjects: usize,
    pub seed: u64,
    pub method: CorrelationMethod,
    pub brain_similarity: BrainSimilarity,
    pub searchlight: SearchlightSpec,
    pub offset: usize,
    /// Relabelings for the design-level diagnostic; 0 skips it.
    pub label_permutations: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            design: Fig1Design::default(),
            hrf: HrfParams::default(),
            patterns: vec![PatternName::A, PatternName::B],
            custom_labels: None,
            confounder_sets: vec![ConfounderSpec::none(), "bcov".parse().expect("valid spec")],
            dims: [16, 16, 16],
            voxel_size_mm: 2.0,
            n_subjects: 30,
            seed: 0,
            method: CorrelationMethod::Pearson,
            brain_similarity: BrainSimilarity::Sscp,
            searchlight: SearchlightSpec::default(),
            offset: 1,
            label_permutations: 2000,
        }
    }
}

impl ExperimentConfig {
    pub fn geometry(&self) -> Result<VolumeGeometry> {
        VolumeGeometry::new(self.dims, [self.voxel_size_mm; 3])
    }

    pub fn label_patterns(&self) -> Result<Vec<LabelPattern>> {
        if self.patterns.is_empty() {
            return Err(Error::config(
                "patterns",
                "at least one pattern is required",
            ));
        }
        self.patterns
            .iter()
            .map(|&p| match p {
                PatternName::Custom => match &self.custom_labels {
                    Some(l) => Ok(LabelPattern::custom(l.clone())),
                    None => Err(Error::config(
                        "custom_labels",
                        "required by the `custom` pattern",
                    )),
                },
                named => LabelPattern::named(named, &self.design),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.hrf.validate()?;
        self.searchlight.validate()?;
        self.geometry()?;
        VectorizationRule::new(self.offset)?;
        if self.n_subjects == 0 {
            return Err(Error::config("n_subjects", "must be positive"));
        }
        if self.confounder_sets.is_empty() {
            return Err(Error::config(
                "confounder_sets",
                "at least one set is required (use \"none\")",
            ));
        }
        for p in self.label_patterns()? {
            if p.labels.len() != self.design.q() {
                return Err(Error::config(
                    "custom_labels",
                    format!("need {} labels", self.design.q()),
                ));
            }
        }
        Ok(())
    }
}

/// Average-volume correlation of one subject in one analysis cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub subject: usize,
    pub pattern: PatternName,
    pub confounder_set: ConfounderSpec,
    pub average_volume_correlation: f64,
    pub n_searchlights: usize,
    pub n_degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub pattern: PatternName,
    pub confounder_set: ConfounderSpec,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<DiagnosticRow>,
    pub cells: Vec<CellSummary>,
    pub label_permutation: Option<LabelPermutationResult>,
}

impl ExperimentReport {
    pub fn cell(&self, pattern: PatternName, set: &ConfounderSpec) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.pattern == pattern && &c.confounder_set == set)
    }

    /// `subject,pattern,confounder_set,average_volume_correlation`
    pub fn diagnostics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "subject",
            "pattern",
            "confounder_set",
            "average_volume_correlation",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.subject.to_string(),
                r.pattern.to_string(),
                r.confounder_set.to_string(),
                r.average_volume_correlation.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
    }

    /// Permuted correlations, then one row per observed pattern.
    pub fn permutation_csv(&self, patterns: &[PatternName]) -> Option<String> {
        let lp = self.label_permutation.as_ref()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "index", "correlation"])
            .expect("in-memory write");
        for (i, r) in lp.distribution.iter().enumerate() {
            w.write_record(["permuted".to_string(), i.to_string(), r.to_string()])
                .expect("in-memory write");
        }
        for (p, r) in patterns.iter().zip(&lp.observed) {
            w.write_record([format!("observed_{p}"), "0".to_string(), r.to_string()])
                .expect("in-memory write");
        }
        Some(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output"))
    }
}

struct SubjectOutcome {
    rows: Vec<DiagnosticRow>,
}

fn run_subject(
    config: &ExperimentConfig,
    patterns: &[LabelPattern],
    geometry: VolumeGeometry,
    subject: usize,
    beta_dir: Option<&Path>,
) -> Result<SubjectOutcome> {
    let events = make_fig1_events(&config.design, &patterns[0])?;
    let design = build_design(&events, &config.hrf, None)?;
    let noise = NoiseModel::white(config.design.n_scans);
    let data = noise_volume(geometry, config.design.n_scans, config.seed, subject);
    let mask = Mask::full(geometry);
    let betas = BetaDataset::fit(&data, &mask, &design, &noise)?;
    if let Some(dir) = beta_dir {
        write_volume(
            dir.join(format!("sub-{subject:03}_betas.nii")),
            &betas.beta_volume(),
        )?;
    }

    let mut analyses = Vec::new();
    let mut cells = Vec::new();
    for p in patterns {
        let model = stimulus_similarity(&p.labels)?;
        for set in &config.confounder_sets {
            analyses.push(RsaAnalysis {
                name: format!("{}_{set}", p.name),
                model: model.clone(),
                confounders: set.build(&betas)?,
            });
            cells.push((p.name, set.clone()));
        }
    }
    let opts = RsaOptions {
        searchlight: config.searchlight,
        rule: VectorizationRule::new(config.offset)?,
        method: config.method,
        brain: config.brain_similarity,
    };
    let outcomes = searchlight_rsa_multi(&betas, &mask, &opts, &analyses)?;
    let rows = outcomes
        .iter()
        .zip(cells)
        .map(|(o, (pattern, confounder_set))| {
            Ok(DiagnosticRow {
                subject,
                pattern,
                confounder_set,
                average_volume_correlation: average_volume_correlation(&o.map)?,
                n_searchlights: o.n_searchlights,
                n_degenerate: o.n_degenerate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SubjectOutcome { rows })
}

pub fn run_fig1_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_fig1_experiment_to(config, None)
}

/// As [`run_fig1_experiment`], also writing each subject's coefficient volume into `beta_dir`.
pub fn run_fig1_experiment_to(
    config: &ExperimentConfig,
    beta_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let geometry = config.geometry()?;
    let patterns = config.label_patterns()?;

    let subjects: Vec<SubjectOutcome> = (0..config.n_subjects)
        .into_par_iter()
        .map(|s| run_subject(config, &patterns, geometry, s, beta_dir))
        .collect::<Result<_>>()?;
    // Rows ordered cell-major, subjects ascending inside each cell.
    let n_cells = subjects[0].rows.len();
    let rows: Vec<DiagnosticRow> = (0..n_cells)
        .flat_map(|c| subjects.iter().map(move |s| s.rows[c].clone()))
        .collect();
    let cells = rows
        .chunks(config.n_subjects)
        .map(|chunk| {
            let values: Vec<f64> = chunk.iter().map(|r| r.average_volume_correlation).collect();
            CellSummary {
                pattern: chunk[0].pattern,
                confounder_set: chunk[0].confounder_set.clone(),
                summary: Summary::of(&values),
            }
        })
        .collect();

    let label_permutation = if config.label_permutations > 0 {
        let events = make_fig1_events(&config.design, &patterns[0])?;
        let noise = NoiseModel::white(config.design.n_scans);
        let labels: Vec<Vec<Label>> = patterns.iter().map(|p| p.labels.clone()).collect();
        Some(label_permutation_diagnostic(
            &events,
            &config.hrf,
            &noise,
            &labels,
            config.label_permutations,
            config.seed,
        )?)
    } else {
        None
    };
    Ok(ExperimentReport {
        rows,
        cells,
        label_permutation,
    })
}
