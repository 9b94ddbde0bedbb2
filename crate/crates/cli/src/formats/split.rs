//! Split plan files: JSON recording the sampled training pool and family
//! sets so a run can be repeated or audited without re-deriving them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::dataset::SplitPlan;

use crate::error::{io_err, parse_err, CliError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitFile {
    seed: u64,
    family_size: usize,
    num_family_sets: usize,
    min_images: usize,
    train_identities: Vec<String>,
    family_sets: Vec<Vec<String>>,
}

pub fn load_split(path: &Path) -> Result<SplitPlan, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file: SplitFile = serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))?;
    if file.family_sets.is_empty() {
        return Err(parse_err(path, "split has no family sets"));
    }
    if file.family_sets.iter().any(|s| s.len() != file.family_size) {
        return Err(parse_err(
            path,
            format!("family set size differs from declared {}", file.family_size),
        ));
    }
    Ok(SplitPlan {
        seed: file.seed,
        family_size: file.family_size,
        num_family_sets: file.num_family_sets,
        min_images: file.min_images,
        train_identities: file.train_identities,
        family_sets: file.family_sets,
    })
}

pub fn save_split(path: &Path, plan: &SplitPlan) -> Result<(), CliError> {
    let file = SplitFile {
        seed: plan.seed,
        family_size: plan.family_size,
        num_family_sets: plan.num_family_sets,
        min_images: plan.min_images,
        train_identities: plan.train_identities.clone(),
        family_sets: plan.family_sets.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("split serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shallowface_core::dataset::{make_split, FeatureDataset, FeatureRecord};

    fn dataset() -> FeatureDataset {
        let mut records = Vec::new();
        for i in 0..12 {
            for j in 0..3 {
                records.push(FeatureRecord {
                    identity: format!("id{i:02}"),
                    image: format!("{j}"),
                    features: vec![i as f64, j as f64],
                });
            }
        }
        FeatureDataset::new(records).unwrap()
    }

    #[test]
    fn round_trip_preserves_plan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let plan = make_split(&dataset(), 7, 3, 4, 2).unwrap();
        save_split(&path, &plan).unwrap();
        let loaded = load_split(&path).unwrap();
        assert_eq!(loaded.seed, plan.seed);
        assert_eq!(loaded.train_identities, plan.train_identities);
        assert_eq!(loaded.family_sets, plan.family_sets);
    }

    #[test]
    fn inconsistent_set_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(
            &path,
            r#"{"seed":1,"family_size":3,"num_family_sets":1,"min_images":2,
                "train_identities":["a"],"family_sets":[["b","c"]]}"#,
        )
        .unwrap();
        let err = load_split(&path).unwrap_err();
        assert_eq!(err.class(), "parse");
    }
}
