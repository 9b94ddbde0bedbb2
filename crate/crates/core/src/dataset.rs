//! Labeled feature vectors and the seeded identity split.
//!
//! A [`FeatureDataset`] holds one row per image: an identity label, an
//! image label unique within that identity, and a fixed-width feature
//! vector. [`make_split`] partitions identities into a stranger pool `T`
//! and a list of family sets `T_1..T_s` using a stream-keyed ChaCha20
//! generator, so the same seed always yields the same split on any
//! machine.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset has no records")]
    Empty,
    #[error("record {row}: feature width {got} differs from first record's width {want}")]
    RaggedRow { row: usize, want: usize, got: usize },
    #[error("record {row}: non-finite feature at column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("record {row}: duplicate image label {image:?} under identity {identity:?}")]
    DuplicateImage {
        row: usize,
        identity: String,
        image: String,
    },
    #[error("record {row}: empty identity or image label")]
    EmptyLabel { row: usize },
    #[error("family size must be at least 2, got {0}")]
    FamilyTooSmall(usize),
    #[error("need at least {want} identities with {min_images}+ images to form families, found {got}")]
    InsufficientIdentities {
        want: usize,
        got: usize,
        min_images: usize,
    },
    #[error("split requests {sets} family sets but 0 were asked for")]
    NoFamilySets { sets: usize },
}

/// One labeled image: identity, image label, feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub identity: String,
    pub image: String,
    pub features: Vec<f64>,
}

/// A validated collection of [`FeatureRecord`]s with uniform width.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    records: Vec<FeatureRecord>,
    dim: usize,
    /// Record indices per identity, in insertion order.
    by_identity: BTreeMap<String, Vec<usize>>,
}

impl FeatureDataset {
    /// Validates width uniformity, finiteness, non-empty labels, and
    /// image-label uniqueness within each identity. Row numbers in
    /// errors are 0-based over `records`.
    pub fn new(records: Vec<FeatureRecord>) -> Result<Self, DatasetError> {
        let dim = match records.first() {
            Some(r) => r.features.len(),
            None => return Err(DatasetError::Empty),
        };
        let mut by_identity: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for (row, rec) in records.iter().enumerate() {
            if rec.identity.is_empty() || rec.image.is_empty() {
                return Err(DatasetError::EmptyLabel { row });
            }
            if rec.features.len() != dim {
                return Err(DatasetError::RaggedRow {
                    row,
                    want: dim,
                    got: rec.features.len(),
                });
            }
            if let Some(column) = rec.features.iter().position(|x| !x.is_finite()) {
                return Err(DatasetError::NonFinite { row, column });
            }
            if !seen.insert((&rec.identity, &rec.image)) {
                return Err(DatasetError::DuplicateImage {
                    row,
                    identity: rec.identity.clone(),
                    image: rec.image.clone(),
                });
            }
        }
        for (row, rec) in records.iter().enumerate() {
            by_identity.entry(rec.identity.clone()).or_default().push(row);
        }
        Ok(Self {
            records,
            dim,
            by_identity,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    /// Feature width shared by every record.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Identities in lexicographic order.
    pub fn identities(&self) -> impl Iterator<Item = &str> {
        self.by_identity.keys().map(String::as_str)
    }

    pub fn identity_count(&self) -> usize {
        self.by_identity.len()
    }

    /// Record indices belonging to `identity`, in dataset order.
    pub fn rows_of(&self, identity: &str) -> &[usize] {
        self.by_identity
            .get(identity)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Class sizes keyed by identity, for scatter computations.
    pub fn class_sizes(&self) -> impl Iterator<Item = (&str, usize)> {
        self.by_identity.iter().map(|(k, v)| (k.as_str(), v.len()))
    }

    /// Applies `f` to every feature vector, producing a new dataset with
    /// the same labels. The closure must return uniform-width finite
    /// vectors or the result fails validation.
    pub fn map_features<F>(&self, mut f: F) -> Result<FeatureDataset, DatasetError>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let records = self
            .records
            .iter()
            .map(|r| FeatureRecord {
                identity: r.identity.clone(),
                image: r.image.clone(),
                features: f(&r.features),
            })
            .collect();
        FeatureDataset::new(records)
    }
}

/// Deterministic identity split: a training pool `T` and `s` family sets.
///
/// Images of `train_identities` serve double duty: they train the
/// projection and act as strangers during evaluation. Identities in
/// `train_identities` never appear in any family set; a given identity
/// may appear in several family sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub family_size: usize,
    pub num_family_sets: usize,
    pub min_images: usize,
    /// The pool `T`, sorted.
    pub train_identities: Vec<String>,
    /// Family sets `T_1..T_s`, each sorted internally; set order follows
    /// sampling order.
    pub family_sets: Vec<Vec<String>>,
}

impl SplitPlan {
    /// Identities eligible for families (union of all family sets),
    /// sorted and deduplicated.
    pub fn family_identities(&self) -> Vec<String> {
        let mut all: BTreeSet<String> = BTreeSet::new();
        for set in &self.family_sets {
            all.extend(set.iter().cloned());
        }
        all.into_iter().collect()
    }
}

/// Splits identities into a stranger pool and family sets.
///
/// Procedure, fully determined by `seed`:
/// 1. Sort identities lexicographically, shuffle with ChaCha20
///    (`seed_from_u64(seed)`, stream 0), and send the first
///    ceil(n/2) to the stranger pool.
/// 2. Move remaining identities with fewer than `min_images` images to
///    the stranger pool; the rest form the family candidate pool.
/// 3. For each of `num_family_sets` sets, shuffle a copy of the
///    candidate pool and take the first `family_size` identities.
///    Candidates drawn into no set still stay out of the stranger pool
///    only if they were drawn at least once; unused candidates join the
///    strangers.
pub fn make_split(
    dataset: &FeatureDataset,
    seed: u64,
    family_size: usize,
    num_family_sets: usize,
    min_images: usize,
) -> Result<SplitPlan, DatasetError> {
    if family_size < 2 {
        return Err(DatasetError::FamilyTooSmall(family_size));
    }
    if num_family_sets == 0 {
        return Err(DatasetError::NoFamilySets { sets: 0 });
    }
    let eligible_total = dataset
        .class_sizes()
        .filter(|(_, m)| *m >= min_images)
        .count();
    // Half the identities go to the stranger pool up front, so forming
    // even one family needs twice `family_size` eligible identities.
    if eligible_total < 2 * family_size {
        return Err(DatasetError::InsufficientIdentities {
            want: 2 * family_size,
            got: eligible_total,
            min_images,
        });
    }

    let mut identities: Vec<String> = dataset.identities().map(String::from).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0);
    identities.shuffle(&mut rng);

    let stranger_count = identities.len().div_ceil(2);
    let mut strangers: Vec<String> = identities[..stranger_count].to_vec();
    let mut candidates: Vec<String> = Vec::new();
    for id in &identities[stranger_count..] {
        if dataset.rows_of(id).len() >= min_images {
            candidates.push(id.clone());
        } else {
            strangers.push(id.clone());
        }
    }
    if candidates.len() < family_size {
        return Err(DatasetError::InsufficientIdentities {
            want: family_size,
            got: candidates.len(),
            min_images,
        });
    }

    let mut family_sets = Vec::with_capacity(num_family_sets);
    let mut drawn: BTreeSet<String> = BTreeSet::new();
    for _ in 0..num_family_sets {
        let mut pool = candidates.clone();
        pool.shuffle(&mut rng);
        let mut set: Vec<String> = pool[..family_size].to_vec();
        drawn.extend(set.iter().cloned());
        set.sort_unstable();
        family_sets.push(set);
    }
    for id in &candidates {
        if !drawn.contains(id) {
            strangers.push(id.clone());
        }
    }
    strangers.sort_unstable();

    Ok(SplitPlan {
        seed,
        family_size,
        num_family_sets,
        min_images,
        train_identities: strangers,
        family_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn rec(identity: &str, image: &str, features: Vec<f64>) -> FeatureRecord {
        FeatureRecord {
            identity: identity.into(),
            image: image.into(),
            features,
        }
    }

    /// `count` identities named id00.., each with `images` images of
    /// width 3.
    fn toy(count: usize, images: usize) -> FeatureDataset {
        let mut records = Vec::new();
        for i in 0..count {
            for j in 0..images {
                records.push(rec(
                    &format!("id{i:02}"),
                    &format!("img{j}"),
                    vec![i as f64, j as f64, 0.5],
                ));
            }
        }
        FeatureDataset::new(records).unwrap()
    }

    #[test]
    fn validation_catches_ragged_rows() {
        let err = FeatureDataset::new(vec![
            rec("a", "1", vec![1.0, 2.0]),
            rec("a", "2", vec![1.0]),
        ])
        .unwrap_err();
        assert_eq!(err, DatasetError::RaggedRow { row: 1, want: 2, got: 1 });
    }

    #[test]
    fn validation_catches_non_finite() {
        let err = FeatureDataset::new(vec![rec("a", "1", vec![1.0, f64::NAN])]).unwrap_err();
        assert_eq!(err, DatasetError::NonFinite { row: 0, column: 1 });
    }

    #[test]
    fn validation_catches_duplicate_image_labels() {
        let err = FeatureDataset::new(vec![
            rec("a", "1", vec![1.0]),
            rec("b", "1", vec![2.0]),
            rec("a", "1", vec![3.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateImage { row: 2, .. }));
    }

    #[test]
    fn same_image_label_under_different_identities_is_fine() {
        let ds = FeatureDataset::new(vec![
            rec("a", "1", vec![1.0]),
            rec("b", "1", vec![2.0]),
        ])
        .unwrap();
        assert_eq!(ds.identity_count(), 2);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(FeatureDataset::new(vec![]).unwrap_err(), DatasetError::Empty);
    }

    #[test]
    fn identities_iterate_sorted() {
        let ds = FeatureDataset::new(vec![
            rec("zeta", "1", vec![0.0]),
            rec("alpha", "1", vec![0.0]),
            rec("mid", "1", vec![0.0]),
        ])
        .unwrap();
        let ids: Vec<&str> = ds.identities().collect();
        assert_eq!(ids, vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = toy(20, 4);
        let a = make_split(&ds, 17, 4, 6, 2).unwrap();
        let b = make_split(&ds, 17, 4, 6, 2).unwrap();
        assert_eq!(a, b);

        let strangers: BTreeSet<&String> = a.train_identities.iter().collect();
        for set in &a.family_sets {
            assert_eq!(set.len(), 4);
            for id in set {
                assert!(!strangers.contains(id), "{id} in both pools");
            }
        }
        // Every identity lands somewhere.
        let mut all: BTreeSet<String> = strangers.iter().map(|s| (*s).clone()).collect();
        for set in &a.family_sets {
            all.extend(set.iter().cloned());
        }
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn different_seeds_differ() {
        let ds = toy(20, 4);
        let a = make_split(&ds, 1, 4, 6, 2).unwrap();
        let b = make_split(&ds, 2, 4, 6, 2).unwrap();
        assert_ne!(a.train_identities, b.train_identities);
    }

    #[test]
    fn thin_identities_are_pushed_to_strangers() {
        // 10 identities with 4 images, 10 with a single image.
        let mut records = Vec::new();
        for i in 0..10 {
            for j in 0..4 {
                records.push(rec(&format!("rich{i}"), &format!("{j}"), vec![0.0]));
            }
        }
        for i in 0..10 {
            records.push(rec(&format!("thin{i}"), "0", vec![0.0]));
        }
        let ds = FeatureDataset::new(records).unwrap();
        let plan = make_split(&ds, 5, 2, 3, 2).unwrap();
        for set in &plan.family_sets {
            for id in set {
                assert!(id.starts_with("rich"), "{id} has too few images for a family");
            }
        }
    }

    #[test]
    fn unused_candidates_become_strangers() {
        let ds = toy(20, 4);
        let plan = make_split(&ds, 99, 2, 1, 2).unwrap();
        // One set of two: the other candidates must all be strangers.
        assert_eq!(plan.family_sets.len(), 1);
        let mut covered: BTreeSet<String> = plan.train_identities.iter().cloned().collect();
        covered.extend(plan.family_sets[0].iter().cloned());
        assert_eq!(covered.len(), 20);
    }

    #[test]
    fn insufficient_identities_error() {
        let ds = toy(5, 4);
        let err = make_split(&ds, 0, 4, 2, 2).unwrap_err();
        assert!(matches!(err, DatasetError::InsufficientIdentities { want: 8, got: 5, .. }));
    }

    #[test]
    fn family_size_one_rejected() {
        let ds = toy(10, 4);
        assert_eq!(
            make_split(&ds, 0, 1, 2, 2).unwrap_err(),
            DatasetError::FamilyTooSmall(1)
        );
    }
}
