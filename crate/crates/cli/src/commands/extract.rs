//! `extract`: truncate a network at a depth and run every archived
//! image through the prefix, writing one feature row per image.

use std::path::Path;

use shallowface_core::dataset::FeatureRecord;
use shallowface_core::protocol::JobMap;

use crate::error::CliError;
use crate::formats::{features, images, model};
use crate::manifest::RunManifest;
use crate::parallel::Threads;

pub fn run(
    model_path: &Path,
    depth: usize,
    images_path: &Path,
    out_path: &Path,
    threads: &Threads,
) -> Result<usize, CliError> {
    let graph = model::load_model(model_path)?;
    let truncated = graph.truncate(depth)?;
    let dim = truncated.output_len();
    let tensors = images::load_images(images_path)?;

    let outputs: Vec<Result<Vec<f64>, _>> =
        threads.run(tensors.clone(), move |t: images::LabeledTensor| {
            truncated.forward(&t.tensor)
        });
    let mut rows = Vec::with_capacity(tensors.len());
    for (t, out) in tensors.into_iter().zip(outputs) {
        rows.push(FeatureRecord {
            identity: t.identity,
            image: t.image,
            features: out?,
        });
    }
    let n = rows.len();
    features::save_feature_rows(out_path, dim, &rows)?;

    let mut manifest = RunManifest::new(
        "extract",
        None,
        serde_json::json!({ "depth": depth }),
    );
    manifest.add_input("model", model_path)?;
    manifest.add_input("images", images_path)?;
    manifest.add_output(out_path);
    manifest.write_sidecar(out_path)?;
    Ok(n)
}
