//! The randomized evaluation harness: fit on the training pool, run a
//! leave-one-out verification trial per family set with a per-set
//! optimized threshold, aggregate across sets, and grid-search the
//! projection hyperparameters.
//!
//! Protocol choices that shape the numbers:
//!
//! * Family-member queries are scored leave-one-out: each family image
//!   queries the gallery with its own embedding excluded. Without
//!   exclusion every query would trivially match itself at distance 0.
//! * Stranger queries reuse the images of the training pool unless
//!   [`ExperimentConfig::stranger_holdout`] reserves a fraction of the
//!   pool for strangers only. Reports carry an overlap flag either way.
//! * Each family set gets its own optimized threshold, which is an
//!   optimistic protocol; thresholds are not transferred across sets.
//!
//! All iteration orders are fixed (sorted identities, dataset row
//! order, grid order, set order), so results are bit-identical across
//! runs and across serial or concurrent execution.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dataset::{DatasetError, FeatureDataset, FeatureRecord, SplitPlan};
use crate::embed::{self, EmbedError, ProjectionModel};
use crate::matcher::{self, ErrorReport, Gallery, GalleryMember, MatchError, Scored};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("identity {identity:?} from the split has no rows in the feature dataset")]
    UnknownIdentity { identity: String },
    #[error("identity {identity:?} appears in both the family and the stranger pool")]
    OverlappingPools { identity: String },
    #[error("family set is empty")]
    EmptyFamily,
    #[error("stranger holdout fraction {fraction} leaves an empty {side} pool")]
    DegenerateHoldout { fraction: f64, side: &'static str },
    #[error("no reports to aggregate")]
    EmptyReports,
    #[error("no grid cell could be evaluated (every n exceeds the feature dimension)")]
    EmptyGrid,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Which aggregate a consumer should optimize for when picking one
/// operating point out of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MeanMfmo,
    MaxMfmo,
}

/// Full description of one experiment: split parameters, the
/// hyperparameter grid, and protocol options.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub family_size: usize,
    pub num_family_sets: usize,
    pub min_images: usize,
    pub alpha_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    /// Truncation depths the features were extracted at, when known.
    /// Echoed into reports; one report section per depth.
    pub truncation_depths: Option<Vec<usize>>,
    pub objective: Objective,
    /// Fraction of the training pool reserved for stranger queries
    /// only. `None` reuses the whole pool for both fitting and
    /// strangers.
    pub stranger_holdout: Option<f64>,
}

impl ExperimentConfig {
    /// Defaults: 100 sets of 10 identities, min 10 images each.
    pub fn new(seed: u64, alpha_grid: Vec<f64>, n_grid: Vec<usize>) -> Self {
        Self {
            seed,
            family_size: 10,
            num_family_sets: 100,
            min_images: 10,
            alpha_grid,
            n_grid,
            truncation_depths: None,
            objective: Objective::MeanMfmo,
            stranger_holdout: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.alpha_grid.is_empty() {
            return Err(ProtocolError::BadConfig(String::from("alpha grid is empty")));
        }
        if let Some(alpha) = self.alpha_grid.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(ProtocolError::BadConfig(format!(
                "alpha grid entries must be positive and finite, got {alpha}"
            )));
        }
        if self.n_grid.is_empty() {
            return Err(ProtocolError::BadConfig(String::from("n grid is empty")));
        }
        if self.n_grid.contains(&0) {
            return Err(ProtocolError::BadConfig(String::from(
                "n grid entries must be positive",
            )));
        }
        if self.family_size < 2 {
            return Err(ProtocolError::BadConfig(format!(
                "family size must be at least 2, got {}",
                self.family_size
            )));
        }
        if self.num_family_sets == 0 {
            return Err(ProtocolError::BadConfig(String::from(
                "need at least one family set",
            )));
        }
        if let Some(f) = self.stranger_holdout {
            if !(f > 0.0 && f < 1.0) {
                return Err(ProtocolError::BadConfig(format!(
                    "stranger holdout must lie in (0, 1), got {f}"
                )));
            }
        }
        if let Some(depths) = &self.truncation_depths {
            if depths.is_empty() {
                return Err(ProtocolError::BadConfig(String::from(
                    "truncation depth list is empty",
                )));
            }
        }
        Ok(())
    }
}

/// Order-preserving batch executor. [`Serial`] runs jobs in place; the
/// command-line crate provides a thread-pool implementation. Output
/// index `i` always corresponds to input index `i`, so results are
/// independent of execution order.
pub trait JobMap {
    fn run<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync;
}

/// In-place executor: runs every job on the calling thread.
pub struct Serial;

impl JobMap for Serial {
    fn run<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        items.into_iter().map(f).collect()
    }
}

/// The four error metrics aggregated over family sets. Unlike a single
/// trial's report, `mfmo` here is the aggregate of the per-set sums:
/// for the max aggregate in particular, `mfmo` is the largest per-set
/// MF+MO, which is generally smaller than `mf + mo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummary {
    pub mf: f64,
    pub mr: f64,
    pub mo: f64,
    pub mfmo: f64,
}

/// Mean and per-metric max over a non-empty list of trial reports.
pub fn aggregate(reports: &[ErrorReport]) -> Result<(RateSummary, RateSummary), ProtocolError> {
    if reports.is_empty() {
        return Err(ProtocolError::EmptyReports);
    }
    let n = reports.len() as f64;
    let mut mean = RateSummary {
        mf: 0.0,
        mr: 0.0,
        mo: 0.0,
        mfmo: 0.0,
    };
    let mut max = RateSummary {
        mf: f64::NEG_INFINITY,
        mr: f64::NEG_INFINITY,
        mo: f64::NEG_INFINITY,
        mfmo: f64::NEG_INFINITY,
    };
    for r in reports {
        mean.mf += r.mf_rate;
        mean.mr += r.mr_rate;
        mean.mo += r.mo_rate;
        mean.mfmo += r.mfmo_rate;
        if r.mf_rate > max.mf {
            max.mf = r.mf_rate;
        }
        if r.mr_rate > max.mr {
            max.mr = r.mr_rate;
        }
        if r.mo_rate > max.mo {
            max.mo = r.mo_rate;
        }
        if r.mfmo_rate > max.mfmo {
            max.mfmo = r.mfmo_rate;
        }
    }
    mean.mf /= n;
    mean.mr /= n;
    mean.mo /= n;
    mean.mfmo /= n;
    Ok((mean, max))
}

/// Embedding stage used by a trial: either a fitted model or, for the
/// baseline, the identity map on centralized unit vectors.
enum Head<'a> {
    Model(&'a ProjectionModel),
    Identity { mean: Vec<f64> },
}

impl Head<'_> {
    fn embed(&self, v: &[f64]) -> Result<Vec<f64>, EmbedError> {
        match self {
            Head::Model(m) => m.embed(v),
            Head::Identity { mean } => {
                let centered = embed::centralize(v, mean)?;
                embed::spherical_project(&centered)
            }
        }
    }
}

fn check_identities<'a>(
    data: &FeatureDataset,
    ids: impl Iterator<Item = &'a String>,
) -> Result<(), ProtocolError> {
    for id in ids {
        if data.rows_of(id).is_empty() {
            return Err(ProtocolError::UnknownIdentity {
                identity: id.clone(),
            });
        }
    }
    Ok(())
}

/// Runs one verification trial and optimizes its threshold.
fn run_trial(
    head: &Head,
    data: &FeatureDataset,
    family: &[String],
    strangers: &[String],
) -> Result<ErrorReport, ProtocolError> {
    if family.is_empty() {
        return Err(ProtocolError::EmptyFamily);
    }
    check_identities(data, family.iter().chain(strangers))?;
    for id in family {
        if strangers.contains(id) {
            return Err(ProtocolError::OverlappingPools {
                identity: id.clone(),
            });
        }
    }

    let mut members = Vec::with_capacity(family.len());
    for id in family {
        let embeddings = data
            .rows_of(id)
            .iter()
            .map(|&row| {
                let rec = &data.records()[row];
                Ok((rec.image.clone(), head.embed(&rec.features)?))
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        members.push(GalleryMember {
            member_id: id.clone(),
            embeddings,
        });
    }
    let gallery = Gallery::new(members)?;

    // Leave-one-out: each family embedding queries the gallery with
    // itself excluded.
    let mut fm_queries: Vec<(String, Scored)> = Vec::new();
    for member in gallery.members() {
        for (image, embedding) in &member.embeddings {
            let scored = matcher::score(
                embedding,
                &gallery,
                Some((&member.member_id, image)),
            )?;
            fm_queries.push((member.member_id.clone(), scored));
        }
    }

    let mut stranger_queries: Vec<Scored> = Vec::new();
    for id in strangers {
        for &row in data.rows_of(id) {
            let out = head.embed(&data.records()[row].features)?;
            stranger_queries.push(matcher::score(&out, &gallery, None)?);
        }
    }

    let (_, report) = matcher::optimize_threshold(&fm_queries, &stranger_queries)?;
    Ok(report)
}

/// Evaluates one family set against the stranger pool under a fitted
/// model, with leave-one-out queries and a per-set optimized threshold.
pub fn run_family_trial(
    model: &ProjectionModel,
    data: &FeatureDataset,
    family: &[String],
    strangers: &[String],
) -> Result<ErrorReport, ProtocolError> {
    run_trial(&Head::Model(model), data, family, strangers)
}

/// Split of the training pool into the identities used for fitting and
/// the identities providing stranger queries.
#[derive(Debug)]
struct Pools {
    fit_ids: Vec<String>,
    stranger_ids: Vec<String>,
    overlap: bool,
}

/// Resolves the fit/stranger pools from the plan. With a holdout
/// fraction, a dedicated shuffle (seed stream 1, independent of the
/// split's own stream) reserves that share of the pool for strangers.
fn resolve_pools(
    split: &SplitPlan,
    seed: u64,
    stranger_holdout: Option<f64>,
) -> Result<Pools, ProtocolError> {
    match stranger_holdout {
        None => Ok(Pools {
            fit_ids: split.train_identities.clone(),
            stranger_ids: split.train_identities.clone(),
            overlap: true,
        }),
        Some(fraction) => {
            let mut pool = split.train_identities.clone();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(1);
            pool.shuffle(&mut rng);
            let held = crate::math::ceil(pool.len() as f64 * fraction) as usize;
            if held == 0 {
                return Err(ProtocolError::DegenerateHoldout {
                    fraction,
                    side: "stranger",
                });
            }
            if held >= pool.len() {
                return Err(ProtocolError::DegenerateHoldout {
                    fraction,
                    side: "fit",
                });
            }
            let mut stranger_ids: Vec<String> = pool[..held].to_vec();
            let mut fit_ids: Vec<String> = pool[held..].to_vec();
            stranger_ids.sort_unstable();
            fit_ids.sort_unstable();
            Ok(Pools {
                fit_ids,
                stranger_ids,
                overlap: false,
            })
        }
    }
}

fn subset_dataset(
    data: &FeatureDataset,
    ids: &[String],
) -> Result<FeatureDataset, ProtocolError> {
    check_identities(data, ids.iter())?;
    let mut records: Vec<FeatureRecord> = Vec::new();
    for id in ids {
        for &row in data.rows_of(id) {
            records.push(data.records()[row].clone());
        }
    }
    Ok(FeatureDataset::new(records)?)
}

/// Split context echoed into every report.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSummary {
    pub seed: u64,
    pub family_size: usize,
    pub num_family_sets: usize,
    pub min_images: usize,
    pub n_train_identities: usize,
    pub n_family_identities: usize,
    /// True when stranger queries come from the same images the
    /// projection was fitted on.
    pub stranger_overlaps_training: bool,
    /// Family queries always exclude their own gallery embedding.
    pub leave_one_out: bool,
    /// Content digest of the serialized split plan, filled in by
    /// writers that know the plan's file form.
    pub plan_digest: Option<String>,
}

impl SplitSummary {
    fn new(split: &SplitPlan, overlap: bool) -> Self {
        Self {
            seed: split.seed,
            family_size: split.family_size,
            num_family_sets: split.num_family_sets,
            min_images: split.min_images,
            n_train_identities: split.train_identities.len(),
            n_family_identities: split.family_identities().len(),
            stranger_overlaps_training: overlap,
            leave_one_out: true,
            plan_digest: None,
        }
    }
}

/// One (alpha, n) grid point's outcome within a depth section.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub n: usize,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Evaluated {
        mean: RateSummary,
        max: RateSummary,
        /// Retained components with non-positive eigenvalues; nonzero
        /// means the objective ran out of ascending directions.
        nonpositive_components: usize,
    },
    Skipped { reason: String },
}

/// Grid results over one feature set (one truncation depth).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSection {
    /// Truncation depth the features came from, when known.
    pub depth: Option<usize>,
    /// Feature dimension of this section's dataset.
    pub dim: usize,
    pub cells: Vec<GridCell>,
    /// (alpha, n) minimizing mean MF+MO; ties prefer smaller n, then
    /// smaller alpha. `None` when every cell was skipped.
    pub best_mean: Option<(f64, usize)>,
    /// (alpha, n) minimizing max MF+MO, same tie-break.
    pub best_max: Option<(f64, usize)>,
}

impl DepthSection {
    /// The cell selected by `objective`, if any cell was evaluated.
    pub fn best_for(&self, objective: Objective) -> Option<(f64, usize)> {
        match objective {
            Objective::MeanMfmo => self.best_mean,
            Objective::MaxMfmo => self.best_max,
        }
    }

    pub fn cell(&self, alpha: f64, n: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.alpha == alpha && c.n == n)
    }
}

/// Everything a grid search produces: config echo, split context, and
/// one section per feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub config: ExperimentConfig,
    pub split: SplitSummary,
    pub sections: Vec<DepthSection>,
}

fn check_split_matches(
    config: &ExperimentConfig,
    split: &SplitPlan,
) -> Result<(), ProtocolError> {
    if split.seed != config.seed
        || split.family_size != config.family_size
        || split.num_family_sets != config.num_family_sets
        || split.min_images != config.min_images
        || split.family_sets.len() != config.num_family_sets
    {
        return Err(ProtocolError::BadConfig(format!(
            "split plan (seed {}, {} sets of {}, min images {}) does not match config (seed {}, {} sets of {}, min images {})",
            split.seed,
            split.family_sets.len(),
            split.family_size,
            split.min_images,
            config.seed,
            config.num_family_sets,
            config.family_size,
            config.min_images,
        )));
    }
    Ok(())
}

/// Selects the best evaluated cell by an MF+MO key, preferring smaller
/// n and then smaller alpha on ties.
fn select_best<K: Fn(&RateSummary, &RateSummary) -> f64>(
    cells: &[GridCell],
    key: K,
) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize, f64)> = None;
    for cell in cells {
        let CellOutcome::Evaluated { mean, max, .. } = &cell.outcome else {
            continue;
        };
        let value = key(mean, max);
        let better = match &best {
            None => true,
            Some((balpha, bn, bvalue)) => match value.total_cmp(bvalue) {
                core::cmp::Ordering::Less => true,
                core::cmp::Ordering::Greater => false,
                core::cmp::Ordering::Equal => {
                    cell.n < *bn
                        || (cell.n == *bn
                            && cell.alpha.total_cmp(balpha) == core::cmp::Ordering::Less)
                }
            },
        };
        if better {
            best = Some((cell.alpha, cell.n, value));
        }
    }
    best.map(|(alpha, n, _)| (alpha, n))
}

/// Runs the full grid over one feature set.
fn run_section<J: JobMap>(
    jobs: &J,
    config: &ExperimentConfig,
    split: &SplitPlan,
    pools: &Pools,
    depth: Option<usize>,
    data: &FeatureDataset,
) -> Result<DepthSection, ProtocolError> {
    check_identities(data, pools.stranger_ids.iter())?;
    for set in &split.family_sets {
        check_identities(data, set.iter())?;
    }
    let fit_data = subset_dataset(data, &pools.fit_ids)?;
    let dim = data.dim();

    // Phase 1: fit one model per evaluable grid cell, in grid order.
    let mut grid: Vec<(f64, usize)> = Vec::new();
    for &alpha in &config.alpha_grid {
        for &n in &config.n_grid {
            grid.push((alpha, n));
        }
    }
    let fit_results: Vec<Result<Option<ProjectionModel>, ProtocolError>> = jobs.run(
        grid.clone(),
        |(alpha, n): (f64, usize)| {
            if n > dim {
                return Ok(None);
            }
            Ok(Some(embed::fit(&fit_data, alpha, n)?))
        },
    );
    let mut models: Vec<Option<ProjectionModel>> = Vec::with_capacity(fit_results.len());
    for r in fit_results {
        models.push(r?);
    }

    // Phase 2: one job per (evaluable cell, family set).
    let mut trial_jobs: Vec<(usize, usize)> = Vec::new();
    for (ci, model) in models.iter().enumerate() {
        if model.is_some() {
            for si in 0..split.family_sets.len() {
                trial_jobs.push((ci, si));
            }
        }
    }
    let trial_results: Vec<Result<ErrorReport, ProtocolError>> =
        jobs.run(trial_jobs.clone(), |(ci, si): (usize, usize)| {
            let model = models[ci].as_ref().expect("only evaluable cells enqueued");
            run_trial(
                &Head::Model(model),
                data,
                &split.family_sets[si],
                &pools.stranger_ids,
            )
        });

    let mut per_cell: Vec<Vec<ErrorReport>> = vec![Vec::new(); grid.len()];
    for ((ci, _), result) in trial_jobs.into_iter().zip(trial_results) {
        per_cell[ci].push(result?);
    }

    let mut cells = Vec::with_capacity(grid.len());
    for (ci, (alpha, n)) in grid.into_iter().enumerate() {
        let outcome = match &models[ci] {
            None => CellOutcome::Skipped {
                reason: format!("n = {n} exceeds feature dimension {dim}"),
            },
            Some(model) => {
                let (mean, max) = aggregate(&per_cell[ci])?;
                CellOutcome::Evaluated {
                    mean,
                    max,
                    nonpositive_components: model.nonpositive_components(),
                }
            }
        };
        cells.push(GridCell { alpha, n, outcome });
    }
    if cells
        .iter()
        .all(|c| matches!(c.outcome, CellOutcome::Skipped { .. }))
    {
        return Err(ProtocolError::EmptyGrid);
    }

    let best_mean = select_best(&cells, |mean, _| mean.mfmo);
    let best_max = select_best(&cells, |_, max| max.mfmo);
    Ok(DepthSection {
        depth,
        dim,
        cells,
        best_mean,
        best_max,
    })
}

/// Grid-searches (alpha, n) over one or more feature sets. Each entry
/// of `features` pairs an optional truncation depth with the feature
/// dataset extracted at that depth; depth-agnostic callers pass a
/// single `(None, data)` entry.
pub fn grid_search<J: JobMap>(
    jobs: &J,
    config: &ExperimentConfig,
    split: &SplitPlan,
    features: &[(Option<usize>, &FeatureDataset)],
) -> Result<AggregateReport, ProtocolError> {
    config.validate()?;
    check_split_matches(config, split)?;
    if features.is_empty() {
        return Err(ProtocolError::BadConfig(String::from(
            "no feature datasets supplied",
        )));
    }
    let pools = resolve_pools(split, config.seed, config.stranger_holdout)?;
    let mut sections = Vec::with_capacity(features.len());
    for (depth, data) in features {
        sections.push(run_section(jobs, config, split, &pools, *depth, data)?);
    }
    Ok(AggregateReport {
        config: config.clone(),
        split: SplitSummary::new(split, pools.overlap),
        sections,
    })
}

/// Runs the protocol with no projection at all: queries are compared
/// on their centralized, unit-normalized features. The mean is still
/// computed from the fit pool, so the baseline sees exactly the data a
/// fitted model would.
pub fn run_baseline<J: JobMap>(
    jobs: &J,
    config: &ExperimentConfig,
    split: &SplitPlan,
    data: &FeatureDataset,
) -> Result<(RateSummary, RateSummary), ProtocolError> {
    config.validate()?;
    check_split_matches(config, split)?;
    let pools = resolve_pools(split, config.seed, config.stranger_holdout)?;
    let fit_data = subset_dataset(data, &pools.fit_ids)?;
    let rows: Vec<&[f64]> = fit_data
        .records()
        .iter()
        .map(|r| r.features.as_slice())
        .collect();
    let mean = embed::compute_mean(&rows)?;

    let sets: Vec<usize> = (0..split.family_sets.len()).collect();
    let results: Vec<Result<ErrorReport, ProtocolError>> = jobs.run(sets, |si: usize| {
        run_trial(
            &Head::Identity { mean: mean.clone() },
            data,
            &split.family_sets[si],
            &pools.stranger_ids,
        )
    });
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        reports.push(r?);
    }
    aggregate(&reports)
}
