//! Global place descriptors and the similarity machinery built on them.
//!
//! A [`GlobalDescriptor`] is a unit-norm vector summarizing the appearance of
//! one image (or one horizontal segment of it). Everything downstream, node
//! addition, loop closure, localization and steering, reduces to cosine
//! similarity between descriptors and threshold comparisons on the result.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as a degenerate frontend output.
pub const MIN_NORM: f64 = 1e-12;

/// Accepted deviation from unit norm for descriptors read from disk.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// Unit-norm appearance descriptor.
///
/// The Euclidean norm of the stored values is cached so that similarity can
/// divide it out exactly; a descriptor loaded from a file keeps its bits
/// untouched even when the writer's normalization differed in the last ulp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GlobalDescriptor {
    values: Vec<f64>,
    norm: f64,
}

impl GlobalDescriptor {
    /// Scales `raw` to unit length.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        check_shape(raw)?;
        let norm = l2_norm(raw);
        if norm <= MIN_NORM {
            return Err(Error::ZeroNorm);
        }
        let values: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let norm = l2_norm(&values);
        Ok(Self { values, norm })
    }

    /// Wraps values that are already unit length, keeping them bit-for-bit.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        check_shape(&values)?;
        let norm = l2_norm(&values);
        if norm <= MIN_NORM {
            return Err(Error::ZeroNorm);
        }
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidDescriptor(format!(
                "expected unit norm, found {norm:.8}"
            )));
        }
        Ok(Self { values, norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Cosine similarity against `other`. See [`cosine_similarity`].
    pub fn similarity(&self, other: &GlobalDescriptor) -> Result<SimilarityScore> {
        cosine_similarity(self, other)
    }
}

impl TryFrom<Vec<f64>> for GlobalDescriptor {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::from_unit(values)
    }
}

impl From<GlobalDescriptor> for Vec<f64> {
    fn from(d: GlobalDescriptor) -> Self {
        d.values
    }
}

fn check_shape(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidDescriptor(format!(
            "dimension {} is below the minimum of 2",
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidDescriptor(format!(
            "component {i} is not finite"
        )));
    }
    Ok(())
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Similarity score clamped to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const MIN: SimilarityScore = SimilarityScore(-1.0);
    pub const MAX: SimilarityScore = SimilarityScore(1.0);

    /// Clamps `value` into `[-1, 1]`. NaN maps to -1 so comparisons stay total.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return Self::MIN;
        }
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for SimilarityScore {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl fmt::Display for SimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Cosine similarity of two descriptors of equal dimension.
///
/// For unit descriptors this is their dot product; the cached norms are
/// divided out so `sim(a, a)` is 1 up to rounding of a single division.
pub fn cosine_similarity(a: &GlobalDescriptor, b: &GlobalDescriptor) -> Result<SimilarityScore> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(SimilarityScore::new(dot / (a.norm * b.norm)))
}

/// Highest-similarity candidate over `(index, descriptor)` pairs.
///
/// Ties resolve to the lowest index regardless of iteration order.
pub fn best_match_by<'a, I>(query: &GlobalDescriptor, candidates: I) -> Result<(usize, SimilarityScore)>
where
    I: IntoIterator<Item = (usize, &'a GlobalDescriptor)>,
{
    let mut best: Option<(usize, SimilarityScore)> = None;
    for (index, candidate) in candidates {
        let score = cosine_similarity(query, candidate)?;
        best = match best {
            Some((bi, bs)) if bs > score || (bs == score && bi < index) => Some((bi, bs)),
            _ => Some((index, score)),
        };
    }
    best.ok_or(Error::EmptyCandidates)
}

/// Best match of `query` among `candidates`, optionally restricted to the
/// given indices.
pub fn best_match(
    query: &GlobalDescriptor,
    candidates: &[GlobalDescriptor],
    restrict: Option<&[usize]>,
) -> Result<(usize, SimilarityScore)> {
    match restrict {
        None => best_match_by(query, candidates.iter().enumerate()),
        Some(indices) => {
            if let Some(&bad) = indices.iter().find(|&&i| i >= candidates.len()) {
                return Err(Error::IndexOutOfRange(bad));
            }
            best_match_by(query, indices.iter().map(|&i| (i, &candidates[i])))
        }
    }
}

/// Left, middle and right thirds of an observation, used for steering.
#[derive(Clone, Debug, PartialEq)]
pub struct Segments {
    pub left: GlobalDescriptor,
    pub middle: GlobalDescriptor,
    pub right: GlobalDescriptor,
}

/// Everything observed in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationDescriptors {
    pub frame_index: u64,
    pub full: GlobalDescriptor,
    /// Absent in map-building-only streams.
    pub segments: Option<Segments>,
}

impl ObservationDescriptors {
    pub fn new(frame_index: u64, full: GlobalDescriptor) -> Self {
        Self {
            frame_index,
            full,
            segments: None,
        }
    }

    pub fn with_segments(mut self, segments: Segments) -> Self {
        self.segments = Some(segments);
        self
    }

    pub fn dim(&self) -> usize {
        self.full.dim()
    }

    pub fn segments(&self) -> Result<&Segments> {
        self.segments.as_ref().ok_or(Error::MissingSegments)
    }
}

/// Every threshold the mapper and navigator consult.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// A frame founds a new node when its similarity to the last node drops below this.
    pub t_add_new_node: SimilarityScore,
    /// Consecutive frames less similar than this count as one unit of motion.
    pub t_add_distance: SimilarityScore,
    /// A node candidate matching an older node above this closes a loop.
    pub t_loop_closure: SimilarityScore,
    /// Minimum frames between node events.
    pub t_interval: u32,
    /// Localization is accepted only above this.
    pub t_milestone: SimilarityScore,
    /// The navigator moves on to the next planned node below this.
    pub t_change_node: SimilarityScore,
    /// Steering requires some segment to exceed this.
    pub t_limited_control: SimilarityScore,
    pub match_window_behind: usize,
    pub match_window_ahead: usize,
    /// Most recently added nodes skipped by the loop-closure scan.
    pub loop_exclusion: usize,
    /// Low-confidence steps tolerated before relocalizing.
    pub low_confidence_limit: u32,
    /// Consecutive failed relocalizations before giving up.
    pub relocalization_limit: u32,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            t_add_new_node: SimilarityScore(0.60),
            t_add_distance: SimilarityScore(0.995),
            t_loop_closure: SimilarityScore(0.85),
            t_interval: 5,
            t_milestone: SimilarityScore(0.70),
            t_change_node: SimilarityScore(0.60),
            t_limited_control: SimilarityScore(0.50),
            match_window_behind: 1,
            match_window_ahead: 2,
            loop_exclusion: 2,
            low_confidence_limit: 10,
            relocalization_limit: 8,
        }
    }
}

impl ThresholdConfig {
    /// Config for a given node density, with the navigation thresholds tied
    /// to `t_add_new_node` the same way [`calibrate_thresholds`] ties them.
    ///
    /// `for_density(0.60, 5)` reproduces the defaults.
    pub fn for_density(t_add_new_node: f64, t_interval: u32) -> Self {
        let t_add = t_add_new_node.clamp(-0.99, 0.99);
        let defaults = Self::default();
        let mut cfg = Self {
            t_add_new_node: SimilarityScore(t_add),
            t_interval,
            t_milestone: SimilarityScore((t_add + 0.10).min(0.99)),
            t_change_node: SimilarityScore(t_add),
            t_limited_control: SimilarityScore((t_add - 0.10).max(-0.99)),
            t_loop_closure: SimilarityScore(
                defaults.t_loop_closure.0.max(0.5 * (t_add + 1.0)).min(0.99),
            ),
            ..defaults
        };
        cfg.enforce_invariants();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let open = [
            ("t_add_new_node", self.t_add_new_node),
            ("t_add_distance", self.t_add_distance),
            ("t_loop_closure", self.t_loop_closure),
            ("t_milestone", self.t_milestone),
            ("t_change_node", self.t_change_node),
            ("t_limited_control", self.t_limited_control),
        ];
        for (name, t) in open {
            if !(t.0 > -1.0 && t.0 < 1.0) {
                return Err(Error::Config(format!("{name} = {} must lie in (-1, 1)", t.0)));
            }
        }
        if self.t_interval < 1 {
            return Err(Error::Config("t_interval must be at least 1".into()));
        }
        if self.t_change_node > self.t_milestone {
            return Err(Error::Config(format!(
                "t_change_node ({}) must not exceed t_milestone ({})",
                self.t_change_node, self.t_milestone
            )));
        }
        if self.t_add_new_node >= self.t_loop_closure {
            return Err(Error::Config(format!(
                "t_add_new_node ({}) must be below t_loop_closure ({})",
                self.t_add_new_node, self.t_loop_closure
            )));
        }
        Ok(())
    }

    /// Repairs the ordering invariants, raising the loop threshold first and
    /// lowering the node threshold only when the loop threshold is saturated.
    fn enforce_invariants(&mut self) {
        if self.t_add_new_node >= self.t_loop_closure {
            self.t_loop_closure.0 = (self.t_add_new_node.0 + 0.01).min(0.99);
            if self.t_add_new_node >= self.t_loop_closure {
                self.t_add_new_node.0 = self.t_loop_closure.0 - 0.01;
            }
        }
        if self.t_change_node > self.t_milestone {
            self.t_change_node = self.t_milestone;
        }
        self.t_interval = self.t_interval.max(1);
    }
}

/// Linear-interpolated percentile of an ascending slice, `q` in [0, 100].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Derives a threshold set from the similarity statistics of a recorded stream.
///
/// Consecutive-frame similarities set the motion threshold (median) and the
/// loop threshold (midpoint of the node threshold and their 90th percentile);
/// similarities `gap` frames apart set the node threshold (25th percentile).
pub fn calibrate_thresholds(stream: &[ObservationDescriptors], gap: usize) -> Result<ThresholdConfig> {
    let gap = gap.max(1);
    if stream.len() < gap + 2 {
        return Err(Error::StreamTooShort {
            len: stream.len(),
            needed: gap + 2,
        });
    }
    let mut consecutive = stream
        .windows(2)
        .map(|w| cosine_similarity(&w[1].full, &w[0].full).map(SimilarityScore::value))
        .collect::<Result<Vec<_>>>()?;
    let mut gapped = (gap..stream.len())
        .map(|i| cosine_similarity(&stream[i].full, &stream[i - gap].full).map(SimilarityScore::value))
        .collect::<Result<Vec<_>>>()?;
    consecutive.sort_by(f64::total_cmp);
    gapped.sort_by(f64::total_cmp);

    let clamp = |v: f64| v.clamp(-0.99, 0.99);
    let t_add = clamp(percentile(&gapped, 25.0));
    let t_dist = clamp(percentile(&consecutive, 50.0));
    let t_loop = clamp(0.5 * (t_add + clamp(percentile(&consecutive, 90.0))));

    let mut cfg = ThresholdConfig {
        t_add_new_node: SimilarityScore(t_add),
        t_add_distance: SimilarityScore(t_dist),
        t_loop_closure: SimilarityScore(t_loop),
        t_milestone: SimilarityScore(clamp(t_add + 0.10)),
        t_change_node: SimilarityScore(t_add),
        t_limited_control: SimilarityScore(clamp(t_add - 0.10)),
        ..ThresholdConfig::default()
    };
    cfg.enforce_invariants();
    Ok(cfg)
}
