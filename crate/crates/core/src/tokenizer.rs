//! K-disk motion vocabulary.
//!
//! A token is a short sequence of `H` per-step relative poses: step `h` is
//! expressed in the frame of the pose reached after step `h - 1` (the first in
//! the frame of the segment start). Distances compare the cumulative poses in
//! the start frame, so a token within `radius` of a segment reproduces every
//! intermediate position of that segment to within `radius`.
//!
//! Fitting is greedy: after inserting the zero-motion token, candidates are
//! visited in a seeded random order and a candidate joins the vocabulary only
//! if it is farther than `radius` from every token already present.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2, RelPose};
use crate::rng::rng_from;
use crate::scenario::{AgentTrack, DT};

pub const VOCAB_SCHEMA_VERSION: u64 = 1;
/// Default tokens per segment (two 0.1 s steps).
pub const DEFAULT_TOKEN_HORIZON: usize = 2;
/// Heading weight in the token distance, meters per radian.
pub const DEFAULT_DISTANCE_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub rel_poses: Vec<RelPose>,
}

impl MotionSegment {
    pub fn zero(horizon: usize) -> Self {
        Self { rel_poses: vec![RelPose::ZERO; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.rel_poses.len()
    }

    /// Cuts `poses[0..=H]` into per-step increments.
    pub fn from_poses(poses: &[Pose2]) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::InvalidArgument("segment needs at least two poses".into()));
        }
        let rel_poses = poses.windows(2).map(|w| w[0].relative(&w[1])).collect();
        let seg = Self { rel_poses };
        seg.check()?;
        Ok(seg)
    }

    /// Poses after each step, all in the frame of the segment start.
    pub fn cumulative(&self) -> Vec<Pose2> {
        let mut p = Pose2::default();
        self.rel_poses
            .iter()
            .map(|r| {
                p = p.compose(r);
                p
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.rel_poses.is_empty() {
            return Err(Error::InvalidArgument("segment horizon must be at least 1".into()));
        }
        if self.rel_poses.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("motion segment"));
        }
        Ok(())
    }
}

/// Index into a [`TokenVocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub usize);

impl TokenId {
    pub const STOP: TokenId = TokenId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

/// Max over steps of position error plus weighted heading error, on cumulative poses.
pub fn segment_distance(a: &MotionSegment, b: &MotionSegment, lambda: f64) -> f64 {
    cumulative_distance(&a.cumulative(), &b.cumulative(), lambda)
}

fn cumulative_distance(a: &[Pose2], b: &[Pose2], lambda: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| {
            let dp = (u.x - v.x).hypot(u.y - v.y);
            dp + lambda * normalize_angle(u.heading - v.heading).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub tokens: Vec<MotionSegment>,
    pub radius: f64,
    pub distance_lambda: f64,
}

/// Outcome of a fit: the vocabulary plus how well it covers its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub vocab: TokenVocab,
    /// Fraction of input segments within `radius` of some token.
    pub coverage: f64,
    /// True when fitting stopped because `k_max` was reached.
    pub full: bool,
}

impl TokenVocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.tokens[0].horizon()
    }

    pub fn token(&self, id: TokenId) -> Result<&MotionSegment> {
        self.tokens.get(id.0).ok_or_else(|| Error::Action(format!("token {} out of range (K = {})", id.0, self.len())))
    }

    pub fn distance(&self, a: &MotionSegment, b: &MotionSegment) -> f64 {
        segment_distance(a, b, self.distance_lambda)
    }

    /// Nearest token by linear scan; ties resolve to the lowest index.
    pub fn encode(&self, seg: &MotionSegment) -> Result<TokenId> {
        if seg.horizon() != self.horizon() {
            return Err(Error::Shape(format!(
                "segment horizon {} does not match vocabulary horizon {}",
                seg.horizon(),
                self.horizon()
            )));
        }
        let c = seg.cumulative();
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, t) in self.tokens.iter().enumerate() {
            let d = cumulative_distance(&c, &t.cumulative(), self.distance_lambda);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        Ok(TokenId(best))
    }

    /// Distance from a segment to its nearest token.
    pub fn nearest_distance(&self, seg: &MotionSegment) -> f64 {
        self.tokens.iter().map(|t| self.distance(seg, t)).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Invariant("vocabulary is empty".into()));
        }
        if !(self.radius > 0.0) || !self.distance_lambda.is_finite() || self.distance_lambda < 0.0 {
            return Err(Error::Invariant("vocabulary radius/lambda out of range".into()));
        }
        let h = self.horizon();
        for t in &self.tokens {
            t.check()?;
            if t.horizon() != h {
                return Err(Error::Invariant("tokens have mixed horizons".into()));
            }
        }
        if self.tokens[0] != MotionSegment::zero(h) {
            return Err(Error::Invariant("token 0 must be the zero-motion segment".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        #[derive(Serialize)]
        struct File<'a> {
            schema_version: u64,
            #[serde(flatten)]
            vocab: &'a TokenVocab,
        }
        let text = serde_json::to_string_pretty(&File { schema_version: VOCAB_SCHEMA_VERSION, vocab: self })
            .map_err(|e| Error::malformed(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e))?;
        let found = v
            .as_object_mut()
            .and_then(|o| o.remove("schema_version"))
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::malformed(path, "missing schema_version"))?;
        if found != VOCAB_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found, expected: VOCAB_SCHEMA_VERSION });
        }
        let vocab: TokenVocab = serde_json::from_value(v).map_err(|e| Error::malformed(path, e))?;
        vocab.validate()?;
        Ok(vocab)
    }
}

/// Greedy K-disk fit.
pub fn fit_kdisk(segments: &[MotionSegment], radius: f64, k_max: usize, lambda: f64, seed: u64) -> Result<FitReport> {
    if segments.is_empty() {
        return Err(Error::InvalidArgument("no segments to fit".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let h = segments[0].horizon();
    for s in segments {
        s.check()?;
        if s.horizon() != h {
            return Err(Error::Shape("segments have mixed horizons".into()));
        }
    }
    let cums: Vec<Vec<Pose2>> = segments.iter().map(|s| s.cumulative()).collect();
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.shuffle(&mut rng_from(seed));

    let zero = MotionSegment::zero(h);
    let mut chosen_cums = vec![zero.cumulative()];
    let mut tokens = vec![zero];
    let mut full = tokens.len() >= k_max;
    for &i in &order {
        if full {
            break;
        }
        if chosen_cums.iter().all(|t| cumulative_distance(&cums[i], t, lambda) > radius) {
            tokens.push(segments[i].clone());
            chosen_cums.push(cums[i].clone());
            full = tokens.len() >= k_max;
        }
    }
    let covered =
        cums.iter().filter(|c| chosen_cums.iter().any(|t| cumulative_distance(c, t, lambda) <= radius)).count();
    let vocab = TokenVocab { tokens, radius, distance_lambda: lambda };
    Ok(FitReport { coverage: covered as f64 / segments.len() as f64, vocab, full })
}

/// Bisects for the smallest radius whose greedy fit covers every segment
/// with at most `k_target` tokens.
pub fn fit_kdisk_target_k(segments: &[MotionSegment], k_target: usize, lambda: f64, seed: u64) -> Result<FitReport> {
    if k_target < 2 {
        return Err(Error::InvalidArgument("target K must be at least 2".into()));
    }
    let fits = |r: f64| -> Result<bool> {
        let rep = fit_kdisk(segments, r, k_target + 1, lambda, seed)?;
        Ok(rep.vocab.len() <= k_target)
    };
    let mut lo = 1e-4;
    let mut hi = 1.0;
    while !fits(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::InvalidArgument("could not bracket a radius for target K".into()));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    fit_kdisk(segments, hi, k_target, lambda, seed)
}

/// World poses after each step of `token` starting from `pose`.
pub fn token_poses(pose: &Pose2, token: &MotionSegment) -> Vec<Pose2> {
    let mut p = *pose;
    token
        .rel_poses
        .iter()
        .map(|r| {
            p = p.compose(r);
            p
        })
        .collect()
}

/// End pose after executing `token`, with speed = end displacement / (H·dt).
pub fn apply_token(pose: &Pose2, _speed: f64, token: &MotionSegment) -> (Pose2, f64) {
    let end = token_poses(pose, token).last().copied().unwrap_or(*pose);
    let speed = end.position().dist(&pose.position()) / (token.horizon().max(1) as f64 * DT);
    (end, speed)
}

/// Segment starting at `start` on a track, or `None` if any step is invalid.
pub fn track_segment(track: &AgentTrack, start: usize, horizon: usize) -> Option<MotionSegment> {
    if start + horizon >= track.len() || !(start..=start + horizon).all(|t| track.is_valid(t)) {
        return None;
    }
    let poses: Vec<Pose2> = track.states[start..=start + horizon].iter().map(|s| s.pose).collect();
    MotionSegment::from_poses(&poses).ok()
}

/// Tokenizes the valid run of a track beginning at `start` with stride `H`.
pub fn tokenize_track_from(track: &AgentTrack, vocab: &TokenVocab, start: usize) -> Result<Vec<TokenId>> {
    let h = vocab.horizon();
    let mut out = Vec::new();
    let mut t = start;
    while let Some(seg) = track_segment(track, t, h) {
        out.push(vocab.encode(&seg)?);
        t += h;
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("track needs {} consecutive valid steps from step {start}", h + 1)));
    }
    Ok(out)
}

/// Tokenizes from the first valid step.
pub fn tokenize_track(track: &AgentTrack, vocab: &TokenVocab) -> Result<Vec<TokenId>> {
    let first = (0..track.len())
        .find(|&t| track.is_valid(t))
        .ok_or_else(|| Error::InvalidArgument("track has no valid steps".into()))?;
    tokenize_track_from(track, vocab, first)
}

/// Every stride-1 segment from the valid parts of the given tracks.
pub fn collect_segments<'a>(tracks: impl IntoIterator<Item = &'a AgentTrack>, horizon: usize) -> Vec<MotionSegment> {
    let mut out = Vec::new();
    for track in tracks {
        for t in 0..track.len() {
            if let Some(seg) = track_segment(track, t, horizon) {
                out.push(seg);
            }
        }
    }
    out
}
