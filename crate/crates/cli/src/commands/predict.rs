//! `predict`: embed queries, match each against a gallery, and print
//! one JSON line per query. Queries come either from a feature CSV or
//! from a model/depth/image-archive triple.

use std::path::Path;

use serde::Serialize;
use shallowface_core::matcher::{self, Gallery, GalleryMember, Label};

use crate::error::CliError;
use crate::formats::{features, images, model, projection};

pub struct PredictArgs<'a> {
    pub projection_path: &'a Path,
    /// Feature CSV providing the gallery members (raw features, one
    /// member per identity, embeddings in row order).
    pub gallery_path: &'a Path,
    pub threshold: f64,
    /// Query source: a feature CSV...
    pub features_path: Option<&'a Path>,
    /// ...or raw images pushed through a truncated network.
    pub model_path: Option<&'a Path>,
    pub depth: Option<usize>,
    pub images_path: Option<&'a Path>,
}

/// One decision, serialized as a single JSON line. `accepted`
/// disambiguates a hypothetical member named "STRANGER".
#[derive(Debug, Serialize)]
struct PredictLine<'a> {
    identity: &'a str,
    image: &'a str,
    accepted: bool,
    label: &'a str,
    distance: f64,
    best_member: &'a str,
    best_image: &'a str,
}

fn load_queries(args: &PredictArgs) -> Result<Vec<(String, String, Vec<f64>)>, CliError> {
    match (args.features_path, args.model_path) {
        (Some(_), Some(_)) => Err(CliError::Usage(String::from(
            "give either --features or --model/--depth/--images, not both",
        ))),
        (Some(path), None) => {
            let ds = features::load_features(path)?;
            Ok(ds
                .records()
                .iter()
                .map(|r| (r.identity.clone(), r.image.clone(), r.features.clone()))
                .collect())
        }
        (None, Some(model_path)) => {
            let (Some(depth), Some(images_path)) = (args.depth, args.images_path) else {
                return Err(CliError::Usage(String::from(
                    "--model queries need --depth and --images",
                )));
            };
            let graph = model::load_model(model_path)?;
            let truncated = graph.truncate(depth)?;
            let mut out = Vec::new();
            for t in images::load_images(images_path)? {
                let features = truncated.forward(&t.tensor)?;
                out.push((t.identity, t.image, features));
            }
            Ok(out)
        }
        (None, None) => Err(CliError::Usage(String::from(
            "predict needs a query source: --features or --model/--depth/--images",
        ))),
    }
}

pub fn run(args: &PredictArgs) -> Result<Vec<String>, CliError> {
    let head = projection::load_projection(args.projection_path)?;
    let gallery_data = features::load_features(args.gallery_path)?;

    // Members in first-appearance order, embeddings in row order, so
    // tie-breaking follows the gallery file.
    let mut member_order: Vec<String> = Vec::new();
    let mut embeddings: std::collections::BTreeMap<String, Vec<(String, Vec<f64>)>> =
        std::collections::BTreeMap::new();
    for rec in gallery_data.records() {
        if !embeddings.contains_key(&rec.identity) {
            member_order.push(rec.identity.clone());
        }
        embeddings
            .entry(rec.identity.clone())
            .or_default()
            .push((rec.image.clone(), head.embed(&rec.features)?));
    }
    let members: Vec<GalleryMember> = member_order
        .into_iter()
        .map(|id| {
            let embeddings = embeddings.remove(&id).expect("collected above");
            GalleryMember {
                member_id: id,
                embeddings,
            }
        })
        .collect();
    let gallery = Gallery::new(members)?;

    let queries = load_queries(args)?;
    let mut lines = Vec::with_capacity(queries.len());
    for (identity, image, raw) in &queries {
        let embedded = head.embed(raw)?;
        let scored = matcher::score(&embedded, &gallery, None)?;
        let decision = matcher::decide(&scored, args.threshold)?;
        let (accepted, label) = match &decision.label {
            Label::Member(id) => (true, id.as_str()),
            Label::Stranger => (false, "STRANGER"),
        };
        let line = PredictLine {
            identity,
            image,
            accepted,
            label,
            distance: decision.distance,
            best_member: &decision.best_member,
            best_image: &decision.best_image,
        };
        lines.push(serde_json::to_string(&line).expect("line serializes"));
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use shallowface_core::dataset::{FeatureDataset, FeatureRecord};

    fn write_fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut records = Vec::new();
        for i in 0..6 {
            for j in 0..4 {
                records.push(FeatureRecord {
                    identity: format!("m{i}"),
                    image: format!("{j}"),
                    features: vec![
                        10.0 * i as f64 + 0.01 * j as f64,
                        -5.0 * i as f64 + 0.02 * j as f64,
                        1.0 + 0.001 * (i * j) as f64,
                    ],
                });
            }
        }
        let ds = FeatureDataset::new(records).unwrap();
        let gallery_path = dir.join("gallery.csv");
        features::save_features(&gallery_path, &ds).unwrap();

        let model = shallowface_core::embed::fit(&ds, 1.0, 2).unwrap();
        let projection_path = dir.join("proj.json");
        projection::save_projection(&projection_path, &model).unwrap();
        (projection_path, gallery_path)
    }

    #[test]
    fn gallery_image_matches_itself_at_distance_zero() {
        let dir = tempfile::tempdir().unwrap();
        let (projection_path, gallery_path) = write_fixture(dir.path());

        let queries_path = dir.path().join("q.csv");
        let gallery = features::load_features(&gallery_path).unwrap();
        let one = FeatureDataset::new(vec![gallery.records()[5].clone()]).unwrap();
        features::save_features(&queries_path, &one).unwrap();

        let lines = run(&PredictArgs {
            projection_path: &projection_path,
            gallery_path: &gallery_path,
            threshold: 0.5,
            features_path: Some(&queries_path),
            model_path: None,
            depth: None,
            images_path: None,
        })
        .unwrap();
        assert_eq!(lines.len(), 1);
        let v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(v["accepted"], serde_json::json!(true));
        assert_eq!(v["label"], v["best_member"]);
        assert_eq!(v["distance"], serde_json::json!(0.0));
        assert_eq!(v["label"], serde_json::json!("m1"));
    }

    #[test]
    fn distant_query_is_a_stranger() {
        let dir = tempfile::tempdir().unwrap();
        let (projection_path, gallery_path) = write_fixture(dir.path());

        let queries_path = dir.path().join("q.csv");
        let one = FeatureDataset::new(vec![FeatureRecord {
            identity: String::from("who"),
            image: String::from("0"),
            features: vec![-300.0, 222.0, -17.0],
        }])
        .unwrap();
        features::save_features(&queries_path, &one).unwrap();

        let lines = run(&PredictArgs {
            projection_path: &projection_path,
            gallery_path: &gallery_path,
            threshold: 1e-6,
            features_path: Some(&queries_path),
            model_path: None,
            depth: None,
            images_path: None,
        })
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(v["label"], serde_json::json!("STRANGER"));
        assert_eq!(v["accepted"], serde_json::json!(false));
    }

    #[test]
    fn output_agrees_with_direct_matcher_calls() {
        let dir = tempfile::tempdir().unwrap();
        let (projection_path, gallery_path) = write_fixture(dir.path());

        let queries_path = dir.path().join("q.csv");
        let queries = FeatureDataset::new(vec![
            FeatureRecord {
                identity: String::from("q"),
                image: String::from("0"),
                features: vec![9.5, -4.5, 1.0],
            },
            FeatureRecord {
                identity: String::from("q"),
                image: String::from("1"),
                features: vec![41.0, -20.0, 1.0],
            },
        ])
        .unwrap();
        features::save_features(&queries_path, &queries).unwrap();

        let threshold = 0.2;
        let lines = run(&PredictArgs {
            projection_path: &projection_path,
            gallery_path: &gallery_path,
            threshold,
            features_path: Some(&queries_path),
            model_path: None,
            depth: None,
            images_path: None,
        })
        .unwrap();

        let head = projection::load_projection(&projection_path).unwrap();
        let gallery_data = features::load_features(&gallery_path).unwrap();
        let members: Vec<GalleryMember> = gallery_data
            .identities()
            .map(|id| GalleryMember {
                member_id: id.to_string(),
                embeddings: gallery_data
                    .rows_of(id)
                    .iter()
                    .map(|&row| {
                        let r = &gallery_data.records()[row];
                        (r.image.clone(), head.embed(&r.features).unwrap())
                    })
                    .collect(),
            })
            .collect();
        let gallery = Gallery::new(members).unwrap();

        for (line, rec) in lines.iter().zip(queries.records()) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let scored =
                matcher::score(&head.embed(&rec.features).unwrap(), &gallery, None).unwrap();
            let decision = matcher::decide(&scored, threshold).unwrap();
            assert_eq!(v["distance"].as_f64().unwrap(), decision.distance);
            assert_eq!(v["best_member"].as_str().unwrap(), decision.best_member);
            assert_eq!(v["best_image"].as_str().unwrap(), decision.best_image);
            let expect_label = match &decision.label {
                Label::Member(id) => id.clone(),
                Label::Stranger => String::from("STRANGER"),
            };
            assert_eq!(v["label"].as_str().unwrap(), expect_label);
        }
    }

    #[test]
    fn negative_threshold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (projection_path, gallery_path) = write_fixture(dir.path());
        let err = run(&PredictArgs {
            projection_path: &projection_path,
            gallery_path: &gallery_path,
            threshold: -1.0,
            features_path: Some(&gallery_path),
            model_path: None,
            depth: None,
            images_path: None,
        })
        .unwrap_err();
        assert_eq!(err.class(), "data");
    }

    #[test]
    fn both_query_sources_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let (projection_path, gallery_path) = write_fixture(dir.path());
        let err = run(&PredictArgs {
            projection_path: &projection_path,
            gallery_path: &gallery_path,
            threshold: 0.5,
            features_path: Some(&gallery_path),
            model_path: Some(&gallery_path),
            depth: Some(1),
            images_path: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
