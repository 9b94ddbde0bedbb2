//! Open-set nearest-gallery matching and its error taxonomy.
//!
//! A query is scored against a [`Gallery`] by the minimum Euclidean
//! distance to any enrolled embedding. With threshold `t`, a distance
//! at or below `t` claims the nearest member; above `t` the query is
//! labeled a stranger. Three error kinds follow:
//!
//! * MF: a family member's query lands above the threshold.
//! * MR: a family member is accepted but matched to the wrong member.
//! * MO: a stranger's query lands at or below the threshold.
//!
//! MF and MR are percentages of family-member queries; MO is a
//! percentage of stranger queries. A family query that is both
//! over-threshold and nearest to the wrong member counts as MF only.
//! [`optimize_threshold`] picks the `t` minimizing MF + MO.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("gallery has no members")]
    EmptyGallery,
    #[error("gallery member {member:?} has no embeddings")]
    EmptyMember { member: String },
    #[error("gallery embedding dimensions disagree: expected {want}, got {got} for member {member:?}")]
    RaggedGallery {
        member: String,
        want: usize,
        got: usize,
    },
    #[error("query dimension {got} does not match gallery dimension {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("no gallery embeddings remain after exclusion")]
    EmptyAfterExclusion,
    #[error("threshold must be finite and non-negative, got {t}")]
    BadThreshold { t: f64 },
    #[error("evaluation needs at least one family-member query and one stranger query")]
    EmptyQueries,
}

/// One enrolled identity: an id plus its (image id, embedding) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryMember {
    pub member_id: String,
    pub embeddings: Vec<(String, Vec<f64>)>,
}

/// An ordered set of enrolled members with uniform embedding width.
/// Member and image order is meaningful: score ties resolve to the
/// earliest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    members: Vec<GalleryMember>,
    dim: usize,
}

impl Gallery {
    pub fn new(members: Vec<GalleryMember>) -> Result<Self, MatchError> {
        let first = members.first().ok_or(MatchError::EmptyGallery)?;
        let dim = first
            .embeddings
            .first()
            .ok_or_else(|| MatchError::EmptyMember {
                member: first.member_id.clone(),
            })?
            .1
            .len();
        for m in &members {
            if m.embeddings.is_empty() {
                return Err(MatchError::EmptyMember {
                    member: m.member_id.clone(),
                });
            }
            for (_, e) in &m.embeddings {
                if e.len() != dim {
                    return Err(MatchError::RaggedGallery {
                        member: m.member_id.clone(),
                        want: dim,
                        got: e.len(),
                    });
                }
            }
        }
        Ok(Self { members, dim })
    }

    pub fn members(&self) -> &[GalleryMember] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Result of nearest-gallery scoring, before any threshold is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub distance: f64,
    pub best_member: String,
    pub best_image: String,
}

/// Thresholded decision label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Member(String),
    Stranger,
}

/// A [`Scored`] result combined with the threshold verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub distance: f64,
    pub best_member: String,
    pub best_image: String,
    pub label: Label,
}

/// Error counts and rates for one evaluated gallery at one threshold.
/// `mf_rate`, `mr_rate`, and `mfmo_rate` are percentages of
/// `n_fm_queries`; `mo_rate` is a percentage of `n_stranger_queries`;
/// `mfmo_rate = mf_rate + mo_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub threshold: f64,
    pub n_fm_queries: usize,
    pub n_stranger_queries: usize,
    pub n_mf: usize,
    pub n_mr: usize,
    pub n_mo: usize,
    pub mf_rate: f64,
    pub mr_rate: f64,
    pub mo_rate: f64,
    pub mfmo_rate: f64,
}

/// Finds the gallery embedding nearest to `query`, skipping the
/// `exclude`d (member id, image id) pair if given. Ties go to the
/// earliest member, then the earliest image.
pub fn score(
    query: &[f64],
    gallery: &Gallery,
    exclude: Option<(&str, &str)>,
) -> Result<Scored, MatchError> {
    if query.len() != gallery.dim {
        return Err(MatchError::DimensionMismatch {
            want: gallery.dim,
            got: query.len(),
        });
    }
    let mut best: Option<(f64, &GalleryMember, &str)> = None;
    for member in &gallery.members {
        for (image_id, embedding) in &member.embeddings {
            if let Some((em, ei)) = exclude {
                if member.member_id == em && image_id == ei {
                    continue;
                }
            }
            let d = math::distance(query, embedding);
            match best {
                Some((bd, _, _)) if d >= bd => {}
                _ => best = Some((d, member, image_id)),
            }
        }
    }
    match best {
        Some((distance, member, image)) => Ok(Scored {
            distance,
            best_member: member.member_id.clone(),
            best_image: image.into(),
        }),
        None => Err(MatchError::EmptyAfterExclusion),
    }
}

/// Applies threshold `t`: distances at or below `t` keep the nearest
/// member, strictly greater distances become [`Label::Stranger`].
pub fn decide(scored: &Scored, t: f64) -> Result<Decision, MatchError> {
    if !t.is_finite() || t < 0.0 {
        return Err(MatchError::BadThreshold { t });
    }
    let label = if scored.distance > t {
        Label::Stranger
    } else {
        Label::Member(scored.best_member.clone())
    };
    Ok(Decision {
        distance: scored.distance,
        best_member: scored.best_member.clone(),
        best_image: scored.best_image.clone(),
        label,
    })
}

/// Counts MF/MR/MO outcomes at threshold `t` over pre-scored queries.
/// `fm_queries` pairs each scored family query with its true member id.
pub fn evaluate(
    fm_queries: &[(String, Scored)],
    stranger_queries: &[Scored],
    t: f64,
) -> Result<ErrorReport, MatchError> {
    if !t.is_finite() || t < 0.0 {
        return Err(MatchError::BadThreshold { t });
    }
    if fm_queries.is_empty() || stranger_queries.is_empty() {
        return Err(MatchError::EmptyQueries);
    }
    let mut n_mf = 0usize;
    let mut n_mr = 0usize;
    for (true_member, scored) in fm_queries {
        if scored.distance > t {
            n_mf += 1;
        } else if scored.best_member != *true_member {
            n_mr += 1;
        }
    }
    let n_mo = stranger_queries.iter().filter(|s| s.distance <= t).count();
    let n_fm = fm_queries.len();
    let n_s = stranger_queries.len();
    let mf_rate = 100.0 * n_mf as f64 / n_fm as f64;
    let mr_rate = 100.0 * n_mr as f64 / n_fm as f64;
    let mo_rate = 100.0 * n_mo as f64 / n_s as f64;
    Ok(ErrorReport {
        threshold: t,
        n_fm_queries: n_fm,
        n_stranger_queries: n_s,
        n_mf,
        n_mr,
        n_mo,
        mf_rate,
        mr_rate,
        mo_rate,
        mfmo_rate: mf_rate + mo_rate,
    })
}

/// Picks the threshold minimizing MF + MO over the candidate set
/// {0} ∪ {midpoints of consecutive distinct pooled distances} ∪
/// {max distance + 1}. MF + MO is piecewise constant between observed
/// distances, so these candidates realize every achievable value.
/// Among minimizers the smallest candidate wins. Returns the chosen
/// `t` and the full report at that `t`.
pub fn optimize_threshold(
    fm_queries: &[(String, Scored)],
    stranger_queries: &[Scored],
) -> Result<(f64, ErrorReport), MatchError> {
    if fm_queries.is_empty() || stranger_queries.is_empty() {
        return Err(MatchError::EmptyQueries);
    }
    let mut fm_dist: Vec<f64> = fm_queries.iter().map(|(_, s)| s.distance).collect();
    let mut s_dist: Vec<f64> = stranger_queries.iter().map(|s| s.distance).collect();
    fm_dist.sort_unstable_by(f64::total_cmp);
    s_dist.sort_unstable_by(f64::total_cmp);

    let mut pooled: Vec<f64> = fm_dist.iter().chain(&s_dist).copied().collect();
    pooled.sort_unstable_by(f64::total_cmp);
    pooled.dedup();
    let max = *pooled.last().expect("non-empty");

    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(0.0);
    for w in pooled.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(max + 1.0);

    // Compare MF + MO as an exact integer over the common denominator
    // n_fm * n_s, so ties resolve identically on every platform.
    let n_fm = fm_dist.len() as u64;
    let n_s = s_dist.len() as u64;
    let mut best_t = candidates[0];
    let mut best_obj = u64::MAX;
    for &t in &candidates {
        let mf = (fm_dist.len() - fm_dist.partition_point(|d| *d <= t)) as u64;
        let mo = s_dist.partition_point(|d| *d <= t) as u64;
        let obj = mf * n_s + mo * n_fm;
        if obj < best_obj {
            best_obj = obj;
            best_t = t;
        }
    }
    let report = evaluate(fm_queries, stranger_queries, best_t)?;
    Ok((best_t, report))
}
