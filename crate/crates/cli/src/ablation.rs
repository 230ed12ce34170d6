//! Cumulative matcher ablation: each level adds one feature on top of the
//! previous one, ending at the full configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use lidarloc_core::evaluation::Trajectory;
use lidarloc_core::matching::MatchParams;

use crate::config::Settings;
use crate::manifest::RunManifest;
use crate::{compute_metrics, fmt_metric, localize_stream, read_trajectory, write_localize_outputs, CliError, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Variant {
    ClosestOnly,
    NoiseFilter,
    Interpolation,
    Imrp,
    Weighting,
    Frmsd,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Self::ClosestOnly, Self::NoiseFilter, Self::Interpolation, Self::Imrp, Self::Weighting, Self::Frmsd];

    pub fn name(self) -> &'static str {
        match self {
            Self::ClosestOnly => "closest-only",
            Self::NoiseFilter => "+noise-filter",
            Self::Interpolation => "+interpolation",
            Self::Imrp => "+imrp",
            Self::Weighting => "+weighting",
            Self::Frmsd => "+frmsd",
        }
    }

    /// Matcher features for this level, built from `full` so that all other
    /// tuning is shared with the full configuration.
    pub fn match_params(self, full: &MatchParams) -> MatchParams {
        let mut m = full.clone();
        m.interpolate = self >= Self::Interpolation;
        m.imrp = self >= Self::Imrp;
        m.weighting = self >= Self::Weighting;
        m.outlier_rejection = self >= Self::Frmsd;
        m
    }

    pub fn apply(self, settings: &Settings) -> Settings {
        let mut s = settings.clone();
        s.processing.noise_filter = settings.processing.noise_filter && self >= Self::NoiseFilter;
        s.sequential = self.match_params(&settings.sequential);
        s.global_match = self.match_params(&settings.global_match);
        s
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CliError;

    /// Accepts the table name with or without the leading `+`.
    fn from_str(s: &str) -> Result<Self, CliError> {
        let key = s.trim().trim_start_matches('+');
        Self::ALL
            .into_iter()
            .find(|v| v.name().trim_start_matches('+') == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                CliError::Usage(format!("unknown variant '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seq_ate: Option<f64>,
    pub seq_heading: Option<f64>,
    pub global_ate: Option<f64>,
    pub global_heading: Option<f64>,
    pub fused_ate: Option<f64>,
    pub fused_heading: Option<f64>,
    pub mme: Option<f64>,
    pub global_matches: usize,
}

pub const CSV_HEADER: &str = "variant,seq_ate,seq_hdg,global_ate,global_hdg,fused_ate,fused_hdg,mme,global_matches";

impl AblationRow {
    pub fn to_csv(&self) -> String {
        let m = |v| fmt_metric(v);
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.variant,
            m(self.seq_ate),
            m(self.seq_heading),
            m(self.global_ate),
            m(self.global_heading),
            m(self.fused_ate),
            m(self.fused_heading),
            m(self.mme),
            self.global_matches
        )
    }
}

/// Evaluates one variant on an in-memory log. The pipeline starts at the
/// first truth pose so heading errors are absolute.
pub fn evaluate_variant(
    variant: Variant,
    settings: &Settings,
    log: &Path,
    truth: &Trajectory,
    artifacts: Option<&Path>,
) -> Result<AblationRow, CliError> {
    let mut s = variant.apply(settings);
    if let Some(first) = truth.samples().first() {
        s.pipeline.origin = [first.x, first.y, first.heading];
    }
    let out = localize_stream(log, &s, None)?;
    if let Some(dir) = artifacts {
        write_localize_outputs(&out, dir)?;
    }
    let radius = s.evaluation.mme_radius;
    let seq = compute_metrics(&out.sequential, truth, None, radius);
    let global = compute_metrics(&out.global, truth, None, radius);
    let dense = out.map.export_dense();
    let fused = compute_metrics(&out.fused, truth, Some(&dense), radius);
    Ok(AblationRow {
        variant,
        seq_ate: seq.ate,
        seq_heading: seq.heading_rmse,
        global_ate: global.ate,
        global_heading: global.heading_rmse,
        fused_ate: fused.ate,
        fused_heading: fused.heading_rmse,
        mme: fused.mme.map(|m| m.entropy),
        global_matches: out.global.len(),
    })
}

/// Writes `<out>/ablation.csv` plus per-variant artifacts in `<out>/<variant>/`.
pub fn cmd_ablate(
    common: &Common,
    settings: &Settings,
    log: &Path,
    truth: &Path,
    variants: &[Variant],
) -> Result<(RunManifest, Vec<AblationRow>), CliError> {
    let started = Instant::now();
    let truth_traj = read_trajectory(truth)?;
    let variants = if variants.is_empty() { &Variant::ALL[..] } else { variants };
    let mut rows = Vec::with_capacity(variants.len());
    let mut outputs = Vec::new();
    for &v in variants {
        let dir = common.out.join(v.name().trim_start_matches('+'));
        rows.push(evaluate_variant(v, settings, log, &truth_traj, Some(&dir))?);
        outputs.push(dir.display().to_string());
    }

    let table = common.out.join("ablation.csv");
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", common.out.display())))?;
    std::fs::write(&table, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", table.display())))?;
    outputs.insert(0, table.display().to_string());

    let mut m = RunManifest::new("ablate", settings, common.seed);
    m.inputs = vec![log.display().to_string(), truth.display().to_string()];
    m.inputs.extend(common.config.iter().map(|p| p.display().to_string()));
    m.outputs = outputs;
    m.counts.insert("variants".into(), rows.len() as u64);
    m.timing.insert("total_ms".into(), started.elapsed().as_secs_f64() * 1e3);
    m.write_atomic(&common.out.join("manifest.json"))?;
    Ok((m, rows))
}
