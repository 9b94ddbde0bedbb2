//! Raw image archives: JSON holding labeled tensors already decoded to
//! floats. The toolkit does no image decoding; whatever produced the
//! pixels (or any upstream representation) writes this archive. Layout
//! per image is row-major height x width x channels, matching the
//! network input layout.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::nn::Tensor3;

use crate::error::{io_err, parse_err, CliError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveFile {
    height: usize,
    width: usize,
    channels: usize,
    images: Vec<ArchiveImage>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchiveImage {
    identity: String,
    image: String,
    data: Vec<f64>,
}

/// One labeled input tensor.
#[derive(Debug, Clone)]
pub struct LabeledTensor {
    pub identity: String,
    pub image: String,
    pub tensor: Tensor3,
}

pub fn load_images(path: &Path) -> Result<Vec<LabeledTensor>, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file: ArchiveFile = serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))?;
    if file.images.is_empty() {
        return Err(parse_err(path, "archive contains no images"));
    }
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut out = Vec::with_capacity(file.images.len());
    for (index, img) in file.images.iter().enumerate() {
        if img.identity.is_empty() || img.image.is_empty() {
            return Err(parse_err(path, format!("image {index} has an empty label")));
        }
        if !seen.insert((&img.identity, &img.image)) {
            return Err(parse_err(
                path,
                format!("duplicate image label ({:?}, {:?})", img.identity, img.image),
            ));
        }
        let tensor = Tensor3::new(file.height, file.width, file.channels, img.data.clone())
            .map_err(|e| {
                parse_err(
                    path,
                    format!("image {index} ({:?}, {:?}): {e}", img.identity, img.image),
                )
            })?;
        out.push(LabeledTensor {
            identity: img.identity.clone(),
            image: img.image.clone(),
            tensor,
        });
    }
    Ok(out)
}

pub fn save_images(path: &Path, tensors: &[LabeledTensor]) -> Result<(), CliError> {
    let first = tensors
        .first()
        .ok_or_else(|| parse_err(path, "archive contains no images"))?;
    let file = ArchiveFile {
        height: first.tensor.height(),
        width: first.tensor.width(),
        channels: first.tensor.channels(),
        images: tensors
            .iter()
            .map(|t| ArchiveImage {
                identity: t.identity.clone(),
                image: t.image.clone(),
                data: t.tensor.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("archive serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive_json(images: &str) -> String {
        format!(r#"{{"height":2,"width":2,"channels":1,"images":[{images}]}}"#)
    }

    #[test]
    fn loads_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        std::fs::write(
            &path,
            archive_json(
                r#"{"identity":"a","image":"1","data":[1,2,3,4]},
                   {"identity":"a","image":"2","data":[5,6,7,8]}"#,
            ),
        )
        .unwrap();
        let tensors = load_images(&path).unwrap();
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].tensor.data(), &[1.0, 2.0, 3.0, 4.0]);

        let out = dir.path().join("b.json");
        save_images(&out, &tensors).unwrap();
        let again = load_images(&out).unwrap();
        assert_eq!(again[1].tensor.data(), tensors[1].tensor.data());
        assert_eq!(again[1].identity, "a");
        assert_eq!(again[1].image, "2");
    }

    #[test]
    fn wrong_length_names_the_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        std::fs::write(
            &path,
            archive_json(r#"{"identity":"a","image":"1","data":[1,2,3]}"#),
        )
        .unwrap();
        let err = load_images(&path).unwrap_err();
        assert_eq!(err.class(), "parse");
        assert!(err.to_string().contains("\"a\""), "{err}");
    }

    #[test]
    fn duplicate_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        std::fs::write(
            &path,
            archive_json(
                r#"{"identity":"a","image":"1","data":[1,2,3,4]},
                   {"identity":"a","image":"1","data":[5,6,7,8]}"#,
            ),
        )
        .unwrap();
        let err = load_images(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn non_finite_pixel_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        std::fs::write(
            &path,
            archive_json(r#"{"identity":"a","image":"1","data":[1,2,3,1e999]}"#),
        )
        .unwrap();
        assert_eq!(load_images(&path).unwrap_err().class(), "parse");
    }
}
