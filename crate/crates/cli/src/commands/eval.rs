//! `eval`: run the full grid-search protocol over one or more feature
//! files and write the report as JSON (with embedded manifest) plus a
//! rendered text view. When no split plan is supplied, one is derived
//! from the config seed and written next to the report.

use std::path::{Path, PathBuf};

use shallowface_core::dataset::{make_split, FeatureDataset, SplitPlan};
use shallowface_core::protocol::{self, ProtocolError, RateSummary};

use crate::error::CliError;
use crate::formats::config::ConfigFile;
use crate::formats::report::ReportDocument;
use crate::formats::{config as config_format, features, report, split as split_format};
use crate::manifest::{sha256_hex, RunManifest};
use crate::parallel::Threads;

pub struct EvalArgs<'a> {
    /// Feature files, each `PATH` or `DEPTH=PATH`.
    pub features: &'a [String],
    pub config_path: &'a Path,
    pub out_path: &'a Path,
    pub split_path: Option<&'a Path>,
    /// Overrides the config seed.
    pub seed: Option<u64>,
    pub baseline: bool,
    pub threads: &'a Threads,
}

#[derive(Debug)]
pub struct EvalOutputs {
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    /// Split plan file, when the plan was derived rather than loaded.
    pub split_written: Option<PathBuf>,
}

/// Splits `DEPTH=PATH` arguments; anything whose prefix is not an
/// integer is a plain path.
fn parse_feature_arg(arg: &str) -> (Option<usize>, PathBuf) {
    if let Some((prefix, rest)) = arg.split_once('=') {
        if let Ok(depth) = prefix.parse::<usize>() {
            return (Some(depth), PathBuf::from(rest));
        }
    }
    (None, PathBuf::from(arg))
}

fn resolve_depths(
    parsed: &[(Option<usize>, PathBuf)],
    config_depths: Option<&Vec<usize>>,
) -> Result<Vec<Option<usize>>, CliError> {
    let depths: Vec<Option<usize>> = match config_depths {
        None => parsed.iter().map(|(d, _)| *d).collect(),
        Some(depths) => {
            if depths.len() != parsed.len() {
                return Err(CliError::Usage(format!(
                    "config lists {} truncation depths but {} feature files were given",
                    depths.len(),
                    parsed.len()
                )));
            }
            for ((given, path), expected) in parsed.iter().zip(depths) {
                if let Some(given) = given {
                    if given != expected {
                        return Err(CliError::Usage(format!(
                            "feature file {} is labeled depth {given} but the config expects depth {expected} at this position",
                            path.display()
                        )));
                    }
                }
            }
            depths.iter().map(|&d| Some(d)).collect()
        }
    };
    let mut seen = std::collections::BTreeSet::new();
    for d in depths.iter().flatten() {
        if !seen.insert(*d) {
            return Err(CliError::Usage(format!(
                "depth {d} appears twice in the feature list"
            )));
        }
    }
    Ok(depths)
}

/// All sections must describe the same images, or the split and the
/// per-depth results would not be comparable.
fn check_same_labels(datasets: &[(Option<usize>, FeatureDataset)]) -> Result<(), CliError> {
    let labels = |ds: &FeatureDataset| -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = ds
            .records()
            .iter()
            .map(|r| (r.identity.clone(), r.image.clone()))
            .collect();
        v.sort();
        v
    };
    let first = labels(&datasets[0].1);
    for (_, ds) in &datasets[1..] {
        if labels(ds) != first {
            return Err(CliError::Protocol(ProtocolError::BadConfig(String::from(
                "feature files disagree on their (identity, image) labels",
            ))));
        }
    }
    Ok(())
}

pub fn run(args: &EvalArgs) -> Result<EvalOutputs, CliError> {
    let mut config = config_format::load_config(args.config_path)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;

    if args.features.is_empty() {
        return Err(CliError::Usage(String::from(
            "eval needs at least one --features file",
        )));
    }
    let parsed: Vec<(Option<usize>, PathBuf)> = args
        .features
        .iter()
        .map(|arg| parse_feature_arg(arg))
        .collect();
    let depths = resolve_depths(&parsed, config.truncation_depths.as_ref())?;
    if config.truncation_depths.is_none() && depths.iter().all(Option::is_some) {
        config.truncation_depths = Some(depths.iter().map(|d| d.unwrap()).collect());
    }

    let mut datasets: Vec<(Option<usize>, FeatureDataset)> = Vec::new();
    for ((_, path), depth) in parsed.iter().zip(&depths) {
        datasets.push((*depth, features::load_features(path)?));
    }
    check_same_labels(&datasets)?;

    let text_path = args.out_path.with_extension("txt");
    let (plan, split_written, plan_digest): (SplitPlan, Option<PathBuf>, String) =
        match args.split_path {
            Some(path) => {
                let plan = split_format::load_split(path)?;
                let bytes = std::fs::read(path).map_err(crate::error::io_err(path))?;
                (plan, None, sha256_hex(&bytes))
            }
            None => {
                let plan = make_split(
                    &datasets[0].1,
                    config.seed,
                    config.family_size,
                    config.num_family_sets,
                    config.min_images,
                )?;
                let path = args.out_path.with_extension("split.json");
                split_format::save_split(&path, &plan)?;
                let bytes = std::fs::read(&path).map_err(crate::error::io_err(&path))?;
                let digest = sha256_hex(&bytes);
                (plan, Some(path), digest)
            }
        };

    let refs: Vec<(Option<usize>, &FeatureDataset)> =
        datasets.iter().map(|(d, ds)| (*d, ds)).collect();
    let mut result = protocol::grid_search(args.threads, &config, &plan, &refs)?;
    result.split.plan_digest = Some(plan_digest);

    let baselines: Vec<Option<(RateSummary, RateSummary)>> = if args.baseline {
        let mut out = Vec::with_capacity(datasets.len());
        for (_, ds) in &datasets {
            out.push(Some(protocol::run_baseline(
                args.threads,
                &config,
                &plan,
                ds,
            )?));
        }
        out
    } else {
        vec![None; datasets.len()]
    };

    let mut manifest = RunManifest::new(
        "eval",
        Some(config.seed),
        serde_json::to_value(ConfigFile::from_config(&config)).expect("config serializes"),
    );
    manifest.add_input("config", args.config_path)?;
    for ((_, path), depth) in parsed.iter().zip(&depths) {
        let role = match depth {
            Some(d) => format!("features[depth={d}]"),
            None => String::from("features"),
        };
        manifest.add_input(&role, path)?;
    }
    if let Some(path) = args.split_path {
        manifest.add_input("split", path)?;
    }
    manifest.add_output(args.out_path);
    manifest.add_output(&text_path);
    if let Some(path) = &split_written {
        manifest.add_output(path);
    }

    let doc = ReportDocument::new(manifest, &result, &baselines);
    report::save_report(args.out_path, &doc)?;
    std::fs::write(&text_path, report::render_text(&doc))
        .map_err(crate::error::io_err(&text_path))?;

    Ok(EvalOutputs {
        report_json: args.out_path.to_path_buf(),
        report_text: text_path,
        split_written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use shallowface_core::dataset::FeatureRecord;

    fn write_clustered_features(dir: &Path, name: &str, scale: f64) -> PathBuf {
        let mut rng = StdRng::seed_from_u64(5);
        let mut records = Vec::new();
        for i in 0..12 {
            let center: Vec<f64> = (0..6).map(|_| rng.gen_range(-8.0..8.0)).collect();
            for j in 0..5 {
                let features = center
                    .iter()
                    .map(|c| scale * (c + rng.gen_range(-0.05..0.05)))
                    .collect();
                records.push(FeatureRecord {
                    identity: format!("id{i:02}"),
                    image: format!("{j}"),
                    features,
                });
            }
        }
        let ds = FeatureDataset::new(records).unwrap();
        let path = dir.join(name);
        features::save_features(&path, &ds).unwrap();
        path
    }

    fn config_file(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("c.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn eval_writes_report_split_and_text() {
        let dir = tempfile::tempdir().unwrap();
        let features_path = write_clustered_features(dir.path(), "f.csv", 1.0);
        let config_path = config_file(
            dir.path(),
            r#"{"seed":3,"family_size":3,"num_family_sets":4,"min_images":3,
                "alpha_grid":[1.0],"n_grid":[2,4]}"#,
        );
        let threads = Threads::from_flag(Some(1)).unwrap();
        let out = dir.path().join("report.json");
        let outputs = run(&EvalArgs {
            features: &[features_path.display().to_string()],
            config_path: &config_path,
            out_path: &out,
            split_path: None,
            seed: None,
            baseline: true,
            threads: &threads,
        })
        .unwrap();

        let doc = report::load_report(&outputs.report_json).unwrap();
        assert_eq!(doc.sections.len(), 1);
        assert_eq!(doc.sections[0].cells.len(), 2);
        assert!(doc.sections[0].baseline.is_some());
        assert!(doc.split.plan_digest.is_some());
        assert_eq!(doc.manifest.command, "eval");
        assert!(outputs.split_written.as_ref().unwrap().exists());
        let text = std::fs::read_to_string(&outputs.report_text).unwrap();
        assert!(text.contains("MF+MO"), "{text}");

        let plan = split_format::load_split(outputs.split_written.as_ref().unwrap()).unwrap();
        assert_eq!(plan.seed, 3);
        assert_eq!(plan.family_sets.len(), 4);
    }

    #[test]
    fn mismatched_labels_across_depths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_clustered_features(dir.path(), "a.csv", 1.0);
        let b = dir.path().join("b.csv");
        let mut ds = features::load_features(&a).unwrap();
        ds = FeatureDataset::new(
            ds.records()
                .iter()
                .skip(1)
                .cloned()
                .collect::<Vec<FeatureRecord>>(),
        )
        .unwrap();
        features::save_features(&b, &ds).unwrap();
        let config_path = config_file(
            dir.path(),
            r#"{"seed":3,"family_size":3,"num_family_sets":4,"min_images":3,
                "alpha_grid":[1.0],"n_grid":[2],"truncation_depths":[1,2]}"#,
        );
        let threads = Threads::from_flag(Some(1)).unwrap();
        let out = dir.path().join("report.json");
        let err = run(&EvalArgs {
            features: &[a.display().to_string(), b.display().to_string()],
            config_path: &config_path,
            out_path: &out,
            split_path: None,
            seed: None,
            baseline: false,
            threads: &threads,
        })
        .unwrap_err();
        assert_eq!(err.class(), "config");
    }

    #[test]
    fn depth_label_conflicting_with_config_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_clustered_features(dir.path(), "a.csv", 1.0);
        let config_path = config_file(
            dir.path(),
            r#"{"seed":3,"family_size":3,"num_family_sets":4,"min_images":3,
                "alpha_grid":[1.0],"n_grid":[2],"truncation_depths":[4]}"#,
        );
        let threads = Threads::from_flag(Some(1)).unwrap();
        let out = dir.path().join("report.json");
        let err = run(&EvalArgs {
            features: &[format!("7={}", a.display())],
            config_path: &config_path,
            out_path: &out,
            split_path: None,
            seed: None,
            baseline: false,
            threads: &threads,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_alpha_grid_fails_with_config_class() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_clustered_features(dir.path(), "a.csv", 1.0);
        let config_path = config_file(
            dir.path(),
            r#"{"seed":3,"family_size":3,"num_family_sets":4,"min_images":3,
                "alpha_grid":[],"n_grid":[2]}"#,
        );
        let threads = Threads::from_flag(Some(1)).unwrap();
        let out = dir.path().join("report.json");
        let err = run(&EvalArgs {
            features: &[a.display().to_string()],
            config_path: &config_path,
            out_path: &out,
            split_path: None,
            seed: None,
            baseline: false,
            threads: &threads,
        })
        .unwrap_err();
        assert_eq!(err.class(), "config");
    }

    #[test]
    fn seed_flag_overrides_config_seed() {
        let dir = tempfile::tempdir().unwrap();
        let features_path = write_clustered_features(dir.path(), "f.csv", 1.0);
        let config_path = config_file(
            dir.path(),
            r#"{"seed":3,"family_size":3,"num_family_sets":4,"min_images":3,
                "alpha_grid":[1.0],"n_grid":[2]}"#,
        );
        let threads = Threads::from_flag(Some(1)).unwrap();
        let out = dir.path().join("report.json");
        let outputs = run(&EvalArgs {
            features: &[features_path.display().to_string()],
            config_path: &config_path,
            out_path: &out,
            split_path: None,
            seed: Some(99),
            baseline: false,
            threads: &threads,
        })
        .unwrap();
        let doc = report::load_report(&outputs.report_json).unwrap();
        assert_eq!(doc.split.seed, 99);
        assert_eq!(doc.config.seed, 99);
    }
}
