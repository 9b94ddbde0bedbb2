//! `fit`: fit the centralize/normalize/project head on the training
//! pool of a split and write the projection model.

use std::path::{Path, PathBuf};

use shallowface_core::dataset::{make_split, FeatureDataset, SplitPlan};
use shallowface_core::embed;

use crate::error::CliError;
use crate::formats::{config as config_format, features, projection, split as split_format};
use crate::manifest::RunManifest;

pub struct FitArgs<'a> {
    pub features_path: &'a Path,
    /// Existing split plan; otherwise one is derived from `seed`.
    pub split_path: Option<&'a Path>,
    pub seed: Option<u64>,
    /// Config supplying split parameters when deriving from `seed`.
    pub config_path: Option<&'a Path>,
    pub alpha: f64,
    pub components: usize,
    pub out_path: &'a Path,
}

fn training_subset(
    data: &FeatureDataset,
    plan: &SplitPlan,
) -> Result<FeatureDataset, CliError> {
    let mut records = Vec::new();
    for id in &plan.train_identities {
        for &row in data.rows_of(id) {
            records.push(data.records()[row].clone());
        }
    }
    Ok(FeatureDataset::new(records)?)
}

pub fn run(args: &FitArgs) -> Result<PathBuf, CliError> {
    let data = features::load_features(args.features_path)?;

    let (plan, plan_source): (SplitPlan, Option<&Path>) = match (args.split_path, args.seed) {
        (Some(path), _) => (split_format::load_split(path)?, Some(path)),
        (None, Some(seed)) => {
            let (family_size, num_family_sets, min_images) = match args.config_path {
                Some(path) => {
                    let c = config_format::load_config(path)?;
                    (c.family_size, c.num_family_sets, c.min_images)
                }
                None => (10, 100, 10),
            };
            (
                make_split(&data, seed, family_size, num_family_sets, min_images)?,
                None,
            )
        }
        (None, None) => {
            return Err(CliError::Usage(String::from(
                "fit needs either --split or --seed",
            )))
        }
    };

    let train = training_subset(&data, &plan)?;
    let model = embed::fit(&train, args.alpha, args.components)?;
    projection::save_projection(args.out_path, &model)?;

    let mut manifest = RunManifest::new(
        "fit",
        Some(plan.seed),
        serde_json::json!({
            "alpha": args.alpha,
            "components": args.components,
            "train_identities": plan.train_identities.len(),
        }),
    );
    manifest.add_input("features", args.features_path)?;
    if let Some(path) = plan_source {
        manifest.add_input("split", path)?;
    }
    if let Some(path) = args.config_path {
        manifest.add_input("config", path)?;
    }
    manifest.add_output(args.out_path);
    manifest.write_sidecar(args.out_path)?;
    Ok(args.out_path.to_path_buf())
}
