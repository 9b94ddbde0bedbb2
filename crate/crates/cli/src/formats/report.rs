//! Experiment reports: a JSON document embedding the run manifest,
//! config echo, split context, and per-depth grid results, plus a
//! rendered text view with one MR/MF/MO/MF+MO table per aggregate.
//! The JSON is the machine record; the text view rounds to two
//! decimals for reading.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::protocol::{
    AggregateReport, CellOutcome, DepthSection, RateSummary, SplitSummary,
};

use crate::error::{io_err, parse_err, CliError};
use crate::formats::config::ConfigFile;
use crate::manifest::RunManifest;

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDocument {
    pub manifest: RunManifest,
    pub config: ConfigFile,
    pub split: SplitDoc,
    pub sections: Vec<SectionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitDoc {
    pub seed: u64,
    pub family_size: usize,
    pub num_family_sets: usize,
    pub min_images: usize,
    pub n_train_identities: usize,
    pub n_family_identities: usize,
    pub stranger_overlaps_training: bool,
    pub leave_one_out: bool,
    pub plan_digest: Option<String>,
}

impl From<&SplitSummary> for SplitDoc {
    fn from(s: &SplitSummary) -> Self {
        Self {
            seed: s.seed,
            family_size: s.family_size,
            num_family_sets: s.num_family_sets,
            min_images: s.min_images,
            n_train_identities: s.n_train_identities,
            n_family_identities: s.n_family_identities,
            stranger_overlaps_training: s.stranger_overlaps_training,
            leave_one_out: s.leave_one_out,
            plan_digest: s.plan_digest.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SectionDoc {
    pub depth: Option<usize>,
    pub dim: usize,
    pub cells: Vec<CellDoc>,
    pub best_mean: Option<BestDoc>,
    pub best_max: Option<BestDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellDoc {
    pub alpha: f64,
    pub n: usize,
    pub outcome: OutcomeDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OutcomeDoc {
    Evaluated {
        mean: RatesDoc,
        max: RatesDoc,
        nonpositive_components: usize,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BestDoc {
    pub alpha: f64,
    pub n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineDoc {
    pub mean: RatesDoc,
    pub max: RatesDoc,
}

/// The four error percentages of one aggregate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RatesDoc {
    pub mf: f64,
    pub mr: f64,
    pub mo: f64,
    pub mfmo: f64,
}

impl From<&RateSummary> for RatesDoc {
    fn from(r: &RateSummary) -> Self {
        Self {
            mf: r.mf,
            mr: r.mr,
            mo: r.mo,
            mfmo: r.mfmo,
        }
    }
}

fn section_doc(
    section: &DepthSection,
    baseline: Option<&(RateSummary, RateSummary)>,
) -> SectionDoc {
    SectionDoc {
        depth: section.depth,
        dim: section.dim,
        cells: section
            .cells
            .iter()
            .map(|c| CellDoc {
                alpha: c.alpha,
                n: c.n,
                outcome: match &c.outcome {
                    CellOutcome::Evaluated {
                        mean,
                        max,
                        nonpositive_components,
                    } => OutcomeDoc::Evaluated {
                        mean: mean.into(),
                        max: max.into(),
                        nonpositive_components: *nonpositive_components,
                    },
                    CellOutcome::Skipped { reason } => OutcomeDoc::Skipped {
                        reason: reason.clone(),
                    },
                },
            })
            .collect(),
        best_mean: section.best_mean.map(|(alpha, n)| BestDoc { alpha, n }),
        best_max: section.best_max.map(|(alpha, n)| BestDoc { alpha, n }),
        baseline: baseline.map(|(mean, max)| BaselineDoc {
            mean: mean.into(),
            max: max.into(),
        }),
    }
}

impl ReportDocument {
    /// Assembles the document. `baselines` aligns with
    /// `report.sections`; entries are `None` when the baseline was not
    /// requested for that section.
    pub fn new(
        manifest: RunManifest,
        report: &AggregateReport,
        baselines: &[Option<(RateSummary, RateSummary)>],
    ) -> Self {
        assert_eq!(baselines.len(), report.sections.len());
        Self {
            manifest,
            config: ConfigFile::from_config(&report.config),
            split: (&report.split).into(),
            sections: report
                .sections
                .iter()
                .zip(baselines)
                .map(|(s, b)| section_doc(s, b.as_ref()))
                .collect(),
        }
    }
}

pub fn save_report(path: &Path, doc: &ReportDocument) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(doc).expect("report serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

pub fn load_report(path: &Path) -> Result<ReportDocument, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))
}

fn rate_row(label: &str, n: String, rates: &RatesDoc, note: &str) -> String {
    format!(
        "{label:>9} {n:>5} {:>8.2} {:>8.2} {:>8.2} {:>8.2}{note}\n",
        rates.mr, rates.mf, rates.mo, rates.mfmo
    )
}

fn render_table(
    out: &mut String,
    title: &str,
    cells: &[CellDoc],
    pick: impl Fn(&RatesDoc, &RatesDoc) -> RatesDoc,
) {
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!(
        "{:>9} {:>5} {:>8} {:>8} {:>8} {:>8}\n",
        "alpha", "n", "MR", "MF", "MO", "MF+MO"
    ));
    for cell in cells {
        if let OutcomeDoc::Evaluated {
            mean,
            max,
            nonpositive_components,
        } = &cell.outcome
        {
            let rates = pick(mean, max);
            let note = if *nonpositive_components > 0 { " *" } else { "" };
            out.push_str(&rate_row(
                &format!("{}", cell.alpha),
                cell.n.to_string(),
                &rates,
                note,
            ));
        }
    }
}

fn best_line(kind: &str, best: Option<&BestDoc>, cells: &[CellDoc]) -> String {
    match best {
        None => format!("best {kind} MF+MO: none (all grid cells skipped)\n"),
        Some(b) => {
            let value = cells
                .iter()
                .find(|c| c.alpha == b.alpha && c.n == b.n)
                .and_then(|c| match &c.outcome {
                    OutcomeDoc::Evaluated { mean, max, .. } => Some(match kind {
                        "mean" => mean.mfmo,
                        _ => max.mfmo,
                    }),
                    OutcomeDoc::Skipped { .. } => None,
                });
            match value {
                Some(v) => format!(
                    "best {kind} MF+MO: alpha = {}, n = {} ({v:.2}%)\n",
                    b.alpha, b.n
                ),
                None => format!("best {kind} MF+MO: alpha = {}, n = {}\n", b.alpha, b.n),
            }
        }
    }
}

/// Renders the human-readable view of a report document.
pub fn render_text(doc: &ReportDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} report (seed {})\n",
        doc.manifest.command, doc.split.seed
    ));
    out.push_str(&format!(
        "split: {} family sets of {} identities, min {} images; {} training identities, {} family identities\n",
        doc.split.num_family_sets,
        doc.split.family_size,
        doc.split.min_images,
        doc.split.n_train_identities,
        doc.split.n_family_identities,
    ));
    if doc.split.stranger_overlaps_training {
        out.push_str("strangers: training-pool images (overlap with fitting data)\n");
    } else {
        out.push_str("strangers: held out from fitting\n");
    }

    for section in &doc.sections {
        out.push('\n');
        match section.depth {
            Some(d) => out.push_str(&format!(
                "== features at depth {d} (dim {}) ==\n",
                section.dim
            )),
            None => out.push_str(&format!("== features (dim {}) ==\n", section.dim)),
        }

        render_table(
            &mut out,
            "\nmean over family sets (%)",
            &section.cells,
            |mean, _| *mean,
        );
        render_table(
            &mut out,
            "\nmax over family sets (%)",
            &section.cells,
            |_, max| *max,
        );
        if section
            .cells
            .iter()
            .any(|c| matches!(&c.outcome, OutcomeDoc::Evaluated { nonpositive_components, .. } if *nonpositive_components > 0))
        {
            out.push_str("* includes components with non-positive eigenvalues\n");
        }

        let skipped: Vec<&CellDoc> = section
            .cells
            .iter()
            .filter(|c| matches!(c.outcome, OutcomeDoc::Skipped { .. }))
            .collect();
        if !skipped.is_empty() {
            out.push('\n');
            for cell in skipped {
                if let OutcomeDoc::Skipped { reason } = &cell.outcome {
                    out.push_str(&format!(
                        "skipped: alpha = {}, n = {} ({reason})\n",
                        cell.alpha, cell.n
                    ));
                }
            }
        }

        out.push('\n');
        out.push_str(&best_line("mean", section.best_mean.as_ref(), &section.cells));
        out.push_str(&best_line("max", section.best_max.as_ref(), &section.cells));
        if let Some(b) = &section.baseline {
            out.push_str(&format!(
                "baseline (no projection): mean MF+MO {:.2}%, max MF+MO {:.2}%\n",
                b.mean.mfmo, b.max.mfmo
            ));
        }
    }
    out
}
