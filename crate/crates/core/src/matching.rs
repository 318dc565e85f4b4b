//! Symbolic sequence matching and gallery retrieval.
//!
//! The cyclic distance is the minimum edit distance between `a` and any
//! rotation of `b`. Cutting an optimal alignment of two rotated sequences at
//! the column holding `a`'s first token and rotating its columns yields an
//! alignment of `a` itself with some rotation of `b` at the same cost, so
//! rotating one side covers every pair of rotations. The distance is therefore
//! symmetric and invariant under rotating either argument.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::{AceSequence, AceToken, BUCKET_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("query id {0} is not enrolled in the gallery")]
    UnknownQueryId(String),
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub kind_mismatch: f64,
    pub ridge_count: f64,
    pub bucket: f64,
    pub region_mismatch: f64,
    pub indel: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            kind_mismatch: 1.0,
            ridge_count: 0.1,
            bucket: 0.05,
            region_mismatch: 0.25,
            indel: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), MatchError> {
        let all = [self.kind_mismatch, self.ridge_count, self.bucket, self.region_mismatch, self.indel];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(MatchError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if self.indel <= 0.0 {
            return Err(MatchError::InvalidWeights("indel cost must be positive".into()));
        }
        Ok(())
    }

    pub fn substitution(&self, a: &AceToken, b: &AceToken) -> f64 {
        let mut c = 0.0;
        if a.kind != b.kind {
            c += self.kind_mismatch;
        }
        if a.region != b.region {
            c += self.region_mismatch;
        }
        c += self.ridge_count * a.ridge_count.abs_diff(b.ridge_count) as f64;
        let d = a.bucket.abs_diff(b.bucket);
        c += self.bucket * d.min(BUCKET_COUNT - d) as f64;
        c
    }
}

/// Whether alignment may start anywhere on the cycle or only at the anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Cyclic,
    Anchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub weights: CostWeights,
    pub mode: MatchMode,
}

/// One column of an alignment, with indices into `a` and rotated `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlignOp {
    Pair { a: usize, b: usize, cost: f64 },
    Delete { a: usize },
    Insert { b: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDistance {
    pub cost: f64,
    /// Rotation of `b`'s anchored tokens used by the best alignment.
    pub rotation: usize,
    pub trace: Vec<AlignOp>,
}

/// Edit distance with an optional bound: returns `None` once every cell of a
/// row exceeds `bound`.
fn edit_distance(a: &[AceToken], b: &[AceToken], w: &CostWeights, bound: f64, row: &mut Vec<f64>) -> Option<f64> {
    let m = b.len();
    row.clear();
    row.extend((0..=m).map(|j| j as f64 * w.indel));
    for (i, ta) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = (i + 1) as f64 * w.indel;
        let mut best = row[0];
        for (j, tb) in b.iter().enumerate() {
            let up = row[j + 1];
            let v = (diag + w.substitution(ta, tb)).min(up + w.indel).min(row[j] + w.indel);
            diag = up;
            row[j + 1] = v;
            best = best.min(v);
        }
        if best > bound {
            return None;
        }
    }
    let v = row[m];
    (v <= bound).then_some(v)
}

fn rotated(tokens: &[AceToken], k: usize) -> Vec<AceToken> {
    tokens[k..].iter().chain(&tokens[..k]).copied().collect()
}

/// Rotation-free lower bound on the distance. Every unit of kind (or region)
/// histogram imbalance costs at least one indel, and a substitution repairs at
/// most two units.
pub fn histogram_lower_bound(a: &[AceToken], b: &[AceToken], w: &CostWeights) -> f64 {
    let mut kinds = [0i64; 4];
    let mut regions = [0i64; 3];
    for t in a {
        kinds[t.kind as usize] += 1;
        regions[t.region as usize] += 1;
    }
    for t in b {
        kinds[t.kind as usize] -= 1;
        regions[t.region as usize] -= 1;
    }
    let l1 = |h: &[i64]| h.iter().map(|v| v.unsigned_abs()).sum::<u64>() as f64;
    let by_kind = l1(&kinds) * (w.kind_mismatch / 2.0).min(w.indel);
    let by_region = l1(&regions) * (w.region_mismatch / 2.0).min(w.indel);
    by_kind.max(by_region)
}

/// Distance between token lists, or `None` when it exceeds `bound`.
pub fn token_distance_bounded(a: &[AceToken], b: &[AceToken], cfg: &MatchConfig, bound: f64) -> Option<(f64, usize)> {
    if histogram_lower_bound(a, b, &cfg.weights) > bound {
        return None;
    }
    let mut row = Vec::with_capacity(b.len() + 1);
    match cfg.mode {
        MatchMode::Anchored => edit_distance(a, b, &cfg.weights, bound, &mut row).map(|d| (d, 0)),
        MatchMode::Cyclic => {
            let mut best: Option<(f64, usize)> = None;
            let mut limit = bound;
            let mut buf = b.to_vec();
            for k in 0..b.len() {
                if k > 0 {
                    buf.rotate_left(1);
                }
                if let Some(d) = edit_distance(a, &buf, &cfg.weights, limit, &mut row) {
                    if best.is_none_or(|(c, _)| d < c) {
                        best = Some((d, k));
                        limit = d;
                        if d == 0.0 {
                            break;
                        }
                    }
                }
            }
            best
        }
    }
}

pub fn token_distance(a: &[AceToken], b: &[AceToken], cfg: &MatchConfig) -> f64 {
    token_distance_bounded(a, b, cfg, f64::INFINITY)
        .expect("unbounded distance always resolves")
        .0
}

fn trace_of(a: &[AceToken], b: &[AceToken], w: &CostWeights) -> Vec<AlignOp> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0.0; m + 1]; n + 1];
    for (i, r) in dp.iter_mut().enumerate() {
        r[0] = i as f64 * w.indel;
    }
    for j in 0..=m {
        dp[0][j] = j as f64 * w.indel;
    }
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = (dp[i - 1][j - 1] + w.substitution(&a[i - 1], &b[j - 1]))
                .min(dp[i - 1][j] + w.indel)
                .min(dp[i][j - 1] + w.indel);
        }
    }
    let (mut i, mut j) = (n, m);
    let mut ops = Vec::new();
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let c = w.substitution(&a[i - 1], &b[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + c {
                ops.push(AlignOp::Pair { a: i - 1, b: j - 1, cost: c });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + w.indel {
            ops.push(AlignOp::Delete { a: i - 1 });
            i -= 1;
        } else {
            ops.push(AlignOp::Insert { b: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Distance with the aligned-pair trace, over anchored token lists.
pub fn sequence_distance(a: &AceSequence, b: &AceSequence, cfg: &MatchConfig) -> Result<SequenceDistance, MatchError> {
    if a.is_empty() || b.is_empty() {
        return Err(MatchError::EmptySequence);
    }
    let (ta, tb) = (a.anchored_tokens(), b.anchored_tokens());
    let (cost, rotation) = token_distance_bounded(&ta, &tb, cfg, f64::INFINITY).expect("unbounded");
    let trace = trace_of(&ta, &rotated(&tb, rotation), &cfg.weights);
    Ok(SequenceDistance { cost, rotation, trace })
}

/// Enrolled identities, each with one or more token lists (e.g. several
/// anchorings of the same sequence). An identity's distance is its best entry.
#[derive(Debug, Clone, Default)]
pub struct Gallery {
    ids: Vec<String>,
    entries: Vec<Vec<Vec<AceToken>>>,
    index: HashMap<String, usize>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sequences<'a>(items: impl IntoIterator<Item = (&'a str, &'a AceSequence)>) -> Self {
        let mut g = Self::new();
        for (id, seq) in items {
            g.enroll(id, seq);
        }
        g
    }

    /// Adds an anchoring of `seq` under `id`.
    pub fn enroll(&mut self, id: &str, seq: &AceSequence) {
        let tokens = seq.anchored_tokens();
        match self.index.get(id) {
            Some(&i) => self.entries[i].push(tokens),
            None => {
                self.index.insert(id.to_string(), self.ids.len());
                self.ids.push(id.to_string());
                self.entries.push(vec![tokens]);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn id_distance(&self, i: usize, q: &[AceToken], cfg: &MatchConfig, bound: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut limit = bound;
        for t in &self.entries[i] {
            if let Some((d, _)) = token_distance_bounded(q, t, cfg, limit) {
                if best.is_none_or(|b| d < b) {
                    best = Some(d);
                    limit = d;
                }
            }
        }
        best
    }

    /// Every identity with its distance, ascending; ties by id.
    pub fn rank(&self, query: &AceSequence, cfg: &MatchConfig) -> Result<Vec<(String, f64)>, MatchError> {
        if self.is_empty() {
            return Err(MatchError::EmptyGallery);
        }
        if query.is_empty() {
            return Err(MatchError::EmptySequence);
        }
        let q = query.anchored_tokens();
        let mut out: Vec<(String, f64)> = (0..self.len())
            .map(|i| (self.ids[i].clone(), self.id_distance(i, &q, cfg, f64::INFINITY).expect("unbounded")))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    /// 1-based rank of `true_id` for `query`, counting only identities that
    /// beat it; stops counting at `cap` when given.
    pub fn rank_of(&self, query: &AceSequence, true_id: &str, cfg: &MatchConfig, cap: Option<usize>) -> Result<usize, MatchError> {
        let t = self
            .position(true_id)
            .ok_or_else(|| MatchError::UnknownQueryId(true_id.to_string()))?;
        if query.is_empty() {
            return Err(MatchError::EmptySequence);
        }
        let q = query.anchored_tokens();
        let dt = self.id_distance(t, &q, cfg, f64::INFINITY).expect("unbounded");
        let mut better = 0;
        for i in 0..self.len() {
            if i == t {
                continue;
            }
            if let Some(d) = self.id_distance(i, &q, cfg, dt) {
                let beats = match d.total_cmp(&dt) {
                    Ordering::Less => true,
                    Ordering::Equal => self.ids[i] < self.ids[t],
                    Ordering::Greater => false,
                };
                if beats {
                    better += 1;
                    if cap.is_some_and(|c| better >= c) {
                        break;
                    }
                }
            }
        }
        Ok(better + 1)
    }
}

/// Top-`k` identities for `query`, ascending by distance, ties by id.
pub fn retrieve(query: &AceSequence, gallery: &Gallery, k: usize, cfg: &MatchConfig) -> Result<Vec<(String, f64)>, MatchError> {
    let mut ranked = gallery.rank(query, cfg)?;
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcResult {
    pub queries: usize,
    pub top1: f64,
    pub top5: f64,
    /// `cmc[k]` is the fraction of queries whose true id ranks within `k + 1`.
    pub cmc: Vec<f64>,
}

/// Cumulative match characteristic up to `max_rank` (the gallery size when
/// `None`). Queries run in parallel.
pub fn evaluate_cmc(
    queries: &[(String, AceSequence)],
    gallery: &Gallery,
    cfg: &MatchConfig,
    max_rank: Option<usize>,
) -> Result<CmcResult, MatchError> {
    if gallery.is_empty() {
        return Err(MatchError::EmptyGallery);
    }
    if let Some((id, _)) = queries.iter().find(|(id, _)| gallery.position(id).is_none()) {
        return Err(MatchError::UnknownQueryId(id.clone()));
    }
    let depth = max_rank.unwrap_or(gallery.len()).clamp(1, gallery.len());
    let cap = depth.max(5).min(gallery.len());
    let ranks: Vec<usize> = queries
        .par_iter()
        .map(|(id, q)| gallery.rank_of(q, id, cfg, Some(cap)))
        .collect::<Result<_, _>>()?;
    let n = queries.len().max(1) as f64;
    let within = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(CmcResult {
        queries: queries.len(),
        top1: within(1),
        top5: within(5),
        cmc: (1..=depth).map(within).collect(),
    })
}

/// One line of a ranking trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub query_id: String,
    pub ranked_ids: Vec<String>,
    pub distances: Vec<f64>,
}

impl RankingRecord {
    pub fn new(query_id: &str, ranked: Vec<(String, f64)>) -> Self {
        let (ranked_ids, distances) = ranked.into_iter().unzip();
        Self {
            query_id: query_id.to_string(),
            ranked_ids,
            distances,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ace::decode;

    fn s(text: &str) -> AceSequence {
        decode(text).unwrap()
    }

    fn d(a: &str, b: &str) -> f64 {
        sequence_distance(&s(a), &s(b), &MatchConfig::default()).unwrap().cost
    }

    #[test]
    fn identical_and_rotated_are_zero() {
        assert_eq!(d("R0a1F;B2a3M;E1a8H", "R0a1F;B2a3M;E1a8H"), 0.0);
        assert_eq!(d("R0a1F;B2a3M;E1a8H", "E1a8H;R0a1F;B2a3M"), 0.0);
    }

    #[test]
    fn histogram_bound_is_below_distance() {
        let pairs = [
            ("R0a1F;B2a3M;E1a8H", "C0a5F;C2a6M"),
            ("R0a1F;R0a1F;R0a1F", "E4a5H"),
            ("B1a2M;E0a4H", "E0a4H;B1a2M"),
        ];
        let cfg = MatchConfig::default();
        for (a, b) in pairs {
            let (ta, tb) = (s(a).anchored_tokens(), s(b).anchored_tokens());
            assert!(histogram_lower_bound(&ta, &tb, &cfg.weights) <= d(a, b) + 1e-12, "{a} vs {b}");
        }
        let (ta, tb) = (s("R0a1F;R0a1F;R0a1F").anchored_tokens(), s("E4a5H").anchored_tokens());
        assert_eq!(histogram_lower_bound(&ta, &tb, &cfg.weights), 2.0);
    }

    #[test]
    fn kind_substitution_costs_one() {
        assert_eq!(d("R0a1F;B2a6M;R1a2H", "R0a1F;C2a6M;R1a2H"), 1.0);
    }

    #[test]
    fn cost_components() {
        // ridge count 1 → 3, bucket a1 → a8 (circular 1), region F → M
        let w = CostWeights::default();
        let expect = 2.0 * w.ridge_count + w.bucket + w.region_mismatch;
        assert!((d("R1a1F", "R3a8M") - expect).abs() < 1e-15);
        assert_eq!(d("R0a1F", "R0a1F;R0a1F"), 1.0);
    }

    #[test]
    fn anchored_mode_sees_rotation() {
        let cfg = MatchConfig {
            mode: MatchMode::Anchored,
            ..MatchConfig::default()
        };
        let a = s("R0a1F;B2a3M;E1a8H");
        let b = s("E1a8H;R0a1F;B2a3M");
        assert!(sequence_distance(&a, &b, &cfg).unwrap().cost > 0.0);
    }

    #[test]
    fn trace_cost_matches() {
        let a = s("R0a1F;B2a3M;E1a8H;R4a2H");
        let b = s("B2a3M;C0a6H;R0a1F");
        let r = sequence_distance(&a, &b, &MatchConfig::default()).unwrap();
        let w = CostWeights::default();
        let total: f64 = r
            .trace
            .iter()
            .map(|op| match op {
                AlignOp::Pair { cost, .. } => *cost,
                _ => w.indel,
            })
            .sum();
        assert!((total - r.cost).abs() < 1e-12);
    }

    #[test]
    fn retrieval_ranks_exact_match_first() {
        let seqs = [s("R0a1F;B2a3M"), s("R1a1F;B2a3M"), s("E0a1F;R2a3M")];
        let ids = ["a", "b", "c"];
        let g = Gallery::from_sequences(ids.iter().copied().zip(seqs.iter()));
        let top = retrieve(&seqs[1], &g, 2, &MatchConfig::default()).unwrap();
        assert_eq!(top[0].0, "b");
        assert_eq!(top.len(), 2);
        let single = Gallery::from_sequences([("only", &seqs[2])]);
        assert_eq!(retrieve(&seqs[0], &single, 1, &MatchConfig::default()).unwrap()[0].0, "only");
    }

    #[test]
    fn ties_break_by_id() {
        let x = s("R0a1F");
        let g = Gallery::from_sequences([("z", &x), ("m", &x)]);
        assert_eq!(retrieve(&x, &g, 2, &MatchConfig::default()).unwrap()[0].0, "m");
        assert_eq!(g.rank_of(&x, "z", &MatchConfig::default(), None).unwrap(), 2);
    }

    #[test]
    fn cmc_of_perfect_matcher_is_one() {
        let seqs = [s("R0a1F;B2a3M"), s("R1a1F;B2a3M"), s("E0a1F;R2a3M")];
        let ids = ["a", "b", "c"];
        let g = Gallery::from_sequences(ids.iter().copied().zip(seqs.iter()));
        let q: Vec<_> = ids.iter().map(|i| i.to_string()).zip(seqs.iter().cloned()).collect();
        let r = evaluate_cmc(&q, &g, &MatchConfig::default(), None).unwrap();
        assert_eq!(r.cmc, vec![1.0; 3]);
        assert_eq!((r.top1, r.top5), (1.0, 1.0));
    }

    #[test]
    fn unknown_query_and_empty_gallery() {
        let x = s("R0a1F");
        let g = Gallery::from_sequences([("a", &x)]);
        assert!(matches!(
            evaluate_cmc(&[("b".into(), x.clone())], &g, &MatchConfig::default(), None),
            Err(MatchError::UnknownQueryId(_))
        ));
        assert_eq!(
            retrieve(&x, &Gallery::new(), 1, &MatchConfig::default()).unwrap_err(),
            MatchError::EmptyGallery
        );
    }

    #[test]
    fn multiple_anchorings_take_the_best() {
        let cfg = MatchConfig {
            mode: MatchMode::Anchored,
            ..MatchConfig::default()
        };
        let base = s("R0a1F;B2a3M;E1a8H");
        let mut shifted = base.clone();
        shifted.anchor_index = 1;
        let mut g = Gallery::new();
        g.enroll("x", &base);
        assert!(g.rank(&shifted, &cfg).unwrap()[0].1 > 0.0);
        g.enroll("x", &shifted);
        assert_eq!(g.rank(&shifted, &cfg).unwrap()[0].1, 0.0);
        assert_eq!(g.len(), 1);
    }
}
