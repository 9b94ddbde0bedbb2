//! Projection model files: JSON with the fitted mean, eigenvalues, and
//! the row-major component matrix. Loading re-validates orthonormality
//! and ordering, so a corrupted file cannot silently skew distances.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::embed::ProjectionModel;

use crate::error::{io_err, parse_err, CliError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionFile {
    dim: usize,
    n_components: usize,
    alpha: f64,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Row-major n_components x dim.
    components: Vec<f64>,
}

pub fn load_projection(path: &Path) -> Result<ProjectionModel, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file: ProjectionFile =
        serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))?;
    Ok(ProjectionModel::from_parts(
        file.dim,
        file.n_components,
        file.alpha,
        file.mean,
        file.eigenvalues,
        file.components,
    )?)
}

pub fn save_projection(path: &Path, model: &ProjectionModel) -> Result<(), CliError> {
    let file = ProjectionFile {
        dim: model.dim(),
        n_components: model.n_components(),
        alpha: model.alpha(),
        mean: model.mean().to_vec(),
        eigenvalues: model.eigenvalues().to_vec(),
        components: model.components().to_vec(),
    };
    let json = serde_json::to_string_pretty(&file).expect("projection serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shallowface_core::dataset::{FeatureDataset, FeatureRecord};

    fn fitted_model() -> ProjectionModel {
        let mut records = Vec::new();
        for (c, base) in [5.0f64, -5.0, 0.0].iter().enumerate() {
            for j in 0..4 {
                records.push(FeatureRecord {
                    identity: format!("id{c}"),
                    image: format!("{j}"),
                    features: vec![
                        base + 0.01 * j as f64,
                        -base + 0.02 * j as f64,
                        0.1 * j as f64,
                        1.0,
                    ],
                });
            }
        }
        let ds = FeatureDataset::new(records).unwrap();
        shallowface_core::embed::fit(&ds, 0.7, 3).unwrap()
    }

    #[test]
    fn round_trip_reproduces_embeddings_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let model = fitted_model();
        save_projection(&path, &model).unwrap();
        let loaded = load_projection(&path).unwrap();

        let queries = [
            vec![1.0, 2.0, 3.0, 4.0],
            vec![-0.5, 0.25, 1e-8, 9.0],
            vec![100.0, -3.0, 0.7, 2.2],
        ];
        for q in &queries {
            let a = model.embed(q).unwrap();
            let b = loaded.embed(q).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.to_bits(), y.to_bits(), "round trip shifted a value");
            }
        }
    }

    #[test]
    fn corrupted_components_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let model = fitted_model();
        save_projection(&path, &model).unwrap();
        let mut file: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        file["components"][0] = serde_json::json!(3.5);
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        let err = load_projection(&path).unwrap_err();
        assert_eq!(err.class(), "numeric");
        assert!(err.to_string().contains("orthonormal"), "{err}");
    }
}
