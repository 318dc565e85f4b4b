//! ACE sequences: minutiae ordered along the scan path with ridge counts, and
//! their compact descriptor text.
//!
//! Descriptor grammar (the wire format of manifest `text` fields):
//!
//! ```text
//! descriptor := token (";" token)*
//! token      := KIND COUNT "a" BUCKET REGION
//! KIND       := "R" | "B" | "C" | "E"
//! COUNT      := "0" | [1-9][0-9]*
//! BUCKET     := [1-8]            orientation in 45° buckets, a1 = [0°, 45°)
//! REGION     := "F" | "M" | "H"
//! ```
//!
//! A convergence must use buckets 5..8. At most [`TOKEN_BUDGET`] tokens.

use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minutiae::{Minutia, MinutiaError, MinutiaKind, RegionId, RegionLabels};
use crate::rng;

/// Longest descriptor the text encoder accepts.
pub const TOKEN_BUDGET: usize = 77;
pub const BUCKET_COUNT: u8 = 8;
pub const BUCKET_WIDTH_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: expected one of {}", self.offset, self.expected.join(", "))
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AceError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("descriptor needs {tokens} tokens, budget is {limit}")]
    TokenBudgetExceeded { tokens: usize, limit: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("{minutiae} minutiae but {counts} ridge counts")]
    LengthMismatch { minutiae: usize, counts: usize },
    #[error("anchor {anchor} out of range for length {len}")]
    AnchorOutOfRange { anchor: usize, len: usize },
    #[error("minutia {index}: {source}")]
    InvalidMinutia { index: usize, source: MinutiaError },
    #[error("region order breaks the scan path at minutia {index}")]
    ScanOrder { index: usize },
    #[error("window {window} must be smaller than the sequence length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("number of anchor permutations must be positive")]
    ZeroPermutations,
    #[error("cull fraction {0} outside [0, 1)")]
    InvalidFraction(f64),
    #[error("culling would leave no minutiae")]
    WouldEmptySequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Orientation bucket index in `0..8`.
pub fn orientation_bucket(deg: f64) -> u8 {
    let b = (crate::minutiae::normalize_deg(deg) / BUCKET_WIDTH_DEG).floor() as u8;
    b.min(BUCKET_COUNT - 1)
}

/// Centre angle of a bucket.
pub fn bucket_center_deg(bucket: u8) -> f64 {
    f64::from(bucket) * BUCKET_WIDTH_DEG + BUCKET_WIDTH_DEG / 2.0
}

/// The symbolic content of one minutia in a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AceToken {
    pub kind: MinutiaKind,
    pub ridge_count: u32,
    pub bucket: u8,
    pub region: RegionId,
}

impl fmt::Display for AceToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}a{}{}",
            self.kind.letter(),
            self.ridge_count,
            self.bucket + 1,
            self.region.letter()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AceSequence {
    pub minutiae: Vec<Minutia>,
    pub ridge_counts: Vec<u32>,
    #[serde(default)]
    pub anchor_index: usize,
    pub side: Side,
}

/// Canonical descriptor text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptorText(String);

impl DescriptorText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn token_count(&self) -> usize {
        if self.0.is_empty() {
            0
        } else {
            self.0.split(';').count()
        }
    }
}

impl fmt::Display for DescriptorText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for DescriptorText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// True when the cyclic region sequence rises at most once and falls at most
/// once: out along the body, then back.
fn scan_order_break(regions: &[RegionId]) -> Option<usize> {
    let n = regions.len();
    if n < 3 {
        return None;
    }
    let steps: Vec<(usize, i8)> = (0..n)
        .filter_map(|i| {
            let a = regions[i].index() as i8;
            let b = regions[(i + 1) % n].index() as i8;
            (a != b).then_some(((i + 1) % n, (b - a).signum()))
        })
        .collect();
    let mut changes = 0;
    for (j, &(idx, s)) in steps.iter().enumerate() {
        let prev = steps[(j + steps.len() - 1) % steps.len()].1;
        if s != prev {
            changes += 1;
            if changes > 2 {
                return Some(idx);
            }
        }
    }
    None
}

impl AceSequence {
    pub fn new(minutiae: Vec<Minutia>, ridge_counts: Vec<u32>, anchor_index: usize, side: Side) -> Result<Self, AceError> {
        let s = Self {
            minutiae,
            ridge_counts,
            anchor_index,
            side,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn validate(&self) -> Result<(), AceError> {
        let n = self.minutiae.len();
        if n == 0 {
            return Err(AceError::EmptySequence);
        }
        if self.ridge_counts.len() != n {
            return Err(AceError::LengthMismatch {
                minutiae: n,
                counts: self.ridge_counts.len(),
            });
        }
        if self.anchor_index >= n {
            return Err(AceError::AnchorOutOfRange {
                anchor: self.anchor_index,
                len: n,
            });
        }
        for (index, m) in self.minutiae.iter().enumerate() {
            m.validate().map_err(|source| AceError::InvalidMinutia { index, source })?;
        }
        let regions: Vec<RegionId> = self.minutiae.iter().map(|m| m.region).collect();
        if let Some(index) = scan_order_break(&regions) {
            return Err(AceError::ScanOrder { index });
        }
        Ok(())
    }

    pub fn token(&self, i: usize) -> AceToken {
        let m = &self.minutiae[i];
        AceToken {
            kind: m.kind,
            ridge_count: self.ridge_counts[i],
            bucket: orientation_bucket(m.angles.orientation),
            region: m.region,
        }
    }

    /// Tokens in stored (scan) order.
    pub fn tokens(&self) -> Vec<AceToken> {
        (0..self.len()).map(|i| self.token(i)).collect()
    }

    /// Tokens starting at the anchor, wrapping cyclically.
    pub fn anchored_tokens(&self) -> Vec<AceToken> {
        let n = self.len();
        (0..n).map(|i| self.token((self.anchor_index + i) % n)).collect()
    }

    /// Same minutiae, rotated so the anchor is stored first.
    pub fn rotated_to_anchor(&self) -> Self {
        let n = self.len();
        let a = self.anchor_index;
        let order = (0..n).map(|i| (a + i) % n);
        Self {
            minutiae: order.clone().map(|i| self.minutiae[i].clone()).collect(),
            ridge_counts: order.map(|i| self.ridge_counts[i]).collect(),
            anchor_index: 0,
            side: self.side,
        }
    }

    /// Lexicographically smallest rotation of the token list; two sequences are
    /// cyclically equivalent iff these agree.
    pub fn canonical_tokens(&self) -> Vec<AceToken> {
        let t = self.tokens();
        (0..t.len())
            .map(|r| t[r..].iter().chain(&t[..r]).copied().collect::<Vec<_>>())
            .min()
            .unwrap_or_default()
    }

    pub fn cyclically_equivalent(&self, other: &Self) -> bool {
        self.len() == other.len() && self.canonical_tokens() == other.canonical_tokens()
    }

    /// Sum of ridge counts plus the number of plain ridges: the quantity a
    /// single cull removal preserves.
    pub fn ridge_mass(&self) -> u64 {
        self.ridge_counts.iter().map(|&c| u64::from(c)).sum::<u64>()
            + self.minutiae.iter().filter(|m| m.kind == MinutiaKind::Ridge).count() as u64
    }
}

/// Renders the canonical descriptor, starting at the anchor.
pub fn encode(seq: &AceSequence) -> Result<DescriptorText, AceError> {
    seq.validate()?;
    if seq.len() > TOKEN_BUDGET {
        return Err(AceError::TokenBudgetExceeded {
            tokens: seq.len(),
            limit: TOKEN_BUDGET,
        });
    }
    let text = seq
        .anchored_tokens()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";");
    Ok(DescriptorText(text))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn fail<T>(&self, expected: &[&'static str]) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            expected: expected.to_vec(),
        })
    }

    fn token(&mut self) -> Result<AceToken, ParseError> {
        const KINDS: &[&str] = &["R", "B", "C", "E"];
        let kind = match self.peek().and_then(|b| MinutiaKind::from_letter(b as char)) {
            Some(k) => k,
            None => return self.fail(KINDS),
        };
        self.pos += 1;

        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail(&["digit"]);
        }
        let digits = &self.bytes[start..self.pos];
        if digits.len() > 1 && digits[0] == b'0' {
            self.pos = start + 1;
            return self.fail(&["a"]);
        }
        let ridge_count: u32 = match std::str::from_utf8(digits).ok().and_then(|s| s.parse().ok()) {
            Some(v) => v,
            None => {
                self.pos = start;
                return self.fail(&["ridge count within u32"]);
            }
        };

        if self.peek() != Some(b'a') {
            return self.fail(&["a"]);
        }
        self.pos += 1;

        const ALL_BUCKETS: &[&str] = &["1", "2", "3", "4", "5", "6", "7", "8"];
        const CONV_BUCKETS: &[&str] = &["5", "6", "7", "8"];
        let allowed = if kind == MinutiaKind::Convergence { CONV_BUCKETS } else { ALL_BUCKETS };
        let bucket = match self.peek() {
            Some(b) if allowed.iter().any(|a| a.as_bytes()[0] == b) => b - b'1',
            _ => return self.fail(allowed),
        };
        self.pos += 1;

        let region = match self.peek().and_then(|b| RegionId::from_letter(b as char)) {
            Some(r) => r,
            None => return self.fail(&["F", "M", "H"]),
        };
        self.pos += 1;
        Ok(AceToken {
            kind,
            ridge_count,
            bucket,
            region,
        })
    }
}

/// Parses descriptor text into tokens without building minutiae.
pub fn parse_tokens(text: &str) -> Result<Vec<AceToken>, ParseError> {
    let mut cur = Cursor {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let mut tokens = vec![cur.token()?];
    loop {
        match cur.peek() {
            None => return Ok(tokens),
            Some(b';') => {
                cur.pos += 1;
                tokens.push(cur.token()?);
            }
            Some(_) => return cur.fail(&[";", "end of input"]),
        }
    }
}

/// Builds a sequence from tokens, using canonical keypoint layouts and the
/// bucket centre as orientation. Anchor is the first token.
pub fn sequence_from_tokens(tokens: &[AceToken], side: Side) -> Result<AceSequence, AceError> {
    if tokens.len() > TOKEN_BUDGET {
        return Err(AceError::TokenBudgetExceeded {
            tokens: tokens.len(),
            limit: TOKEN_BUDGET,
        });
    }
    let minutiae = tokens
        .iter()
        .enumerate()
        .map(|(index, t)| {
            Minutia::canonical(t.kind, bucket_center_deg(t.bucket), t.region)
                .map_err(|source| AceError::InvalidMinutia { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ridge_counts = tokens.iter().map(|t| t.ridge_count).collect();
    AceSequence::new(minutiae, ridge_counts, 0, side)
}

pub fn decode(text: &str) -> Result<AceSequence, AceError> {
    decode_with_side(text, Side::Left)
}

/// Descriptor text does not carry the body side; the caller supplies it.
pub fn decode_with_side(text: &str, side: Side) -> Result<AceSequence, AceError> {
    let tokens = parse_tokens(text)?;
    sequence_from_tokens(&tokens, side)
}

/// One clause per minutia, from the anchor, joined by semicolons.
pub fn render_prose(seq: &AceSequence) -> String {
    render_prose_with(seq, &RegionLabels::default())
}

pub fn render_prose_with(seq: &AceSequence, labels: &RegionLabels) -> String {
    seq.anchored_tokens()
        .iter()
        .map(|t| {
            let article = if t.kind == MinutiaKind::Enclosure { "an" } else { "a" };
            let body = format!("{article} {} in the {} region", t.kind.name(), labels.label(t.region));
            match t.ridge_count {
                0 => body,
                1 => format!("after 1 ridge, {body}"),
                n => format!("after {n} ridges, {body}"),
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Anchor indices reachable within `window` steps of the current anchor,
/// nearest first, without duplicates.
pub fn anchor_candidates(seq: &AceSequence, window: usize) -> Vec<usize> {
    let n = seq.len() as isize;
    let a = seq.anchor_index as isize;
    let mut out = vec![seq.anchor_index];
    for d in 1..=window as isize {
        for idx in [(a + d).rem_euclid(n), (a - d).rem_euclid(n)] {
            let idx = idx as usize;
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
    }
    out
}

/// Re-anchored copies of `seq`. The first is always the original anchoring; the
/// remaining anchors are drawn without replacement from the cyclic window.
pub fn permute_anchor(seq: &AceSequence, k: usize, window: usize, seed: u64) -> Result<Vec<AceSequence>, AceError> {
    if seq.is_empty() {
        return Err(AceError::EmptySequence);
    }
    if k == 0 {
        return Err(AceError::ZeroPermutations);
    }
    if window >= seq.len() {
        return Err(AceError::WindowTooLarge { window, len: seq.len() });
    }
    let candidates = anchor_candidates(seq, window);
    let take = k.min(candidates.len());
    let mut r = rng::rng(seed);
    let others = &candidates[1..];
    let picked = index::sample(&mut r, others.len(), take - 1);
    let mut out = Vec::with_capacity(take);
    out.push(seq.clone());
    for i in picked.iter() {
        let mut s = seq.clone();
        s.anchor_index = others[i];
        out.push(s);
    }
    Ok(out)
}

/// Removes `⌊fraction·len⌋` minutiae chosen uniformly at random. Each removed
/// minutia's ridge count, plus one if it was itself a plain ridge, is added to
/// the next surviving minutia along the scan path.
pub fn cull(seq: &AceSequence, fraction: f64, seed: u64) -> Result<AceSequence, AceError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(AceError::InvalidFraction(fraction));
    }
    let n = seq.len();
    if n == 0 {
        return Err(AceError::EmptySequence);
    }
    let remove = (fraction * n as f64).floor() as usize;
    if remove == 0 {
        return Ok(seq.clone());
    }
    if remove >= n {
        return Err(AceError::WouldEmptySequence);
    }
    let mut r = rng::rng(seed);
    let mut removed = vec![false; n];
    for i in index::sample(&mut r, n, remove).iter() {
        removed[i] = true;
    }
    remove_indices(seq, &removed)
}

/// Removes the flagged minutiae with the ridge-count fold rule of [`cull`].
pub fn remove_indices(seq: &AceSequence, removed: &[bool]) -> Result<AceSequence, AceError> {
    let n = seq.len();
    let first = removed
        .iter()
        .position(|&r| !r)
        .ok_or(AceError::WouldEmptySequence)?;
    let mut counts = seq.ridge_counts.clone();
    let mut carry = 0u32;
    for step in 1..=n {
        let i = (first + step) % n;
        if removed[i] {
            carry += seq.ridge_counts[i] + u32::from(seq.minutiae[i].kind == MinutiaKind::Ridge);
        } else {
            counts[i] += carry;
            carry = 0;
        }
    }
    let anchor = nearest_survivor(seq.anchor_index, removed);
    let survivors: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    Ok(AceSequence {
        minutiae: survivors.iter().map(|&i| seq.minutiae[i].clone()).collect(),
        ridge_counts: survivors.iter().map(|&i| counts[i]).collect(),
        anchor_index: survivors.iter().position(|&i| i == anchor).expect("anchor survives"),
        side: seq.side,
    })
}

/// Closest surviving index by cyclic distance; ties go forward along the path.
fn nearest_survivor(anchor: usize, removed: &[bool]) -> usize {
    let n = removed.len();
    (0..n)
        .flat_map(|d| [(anchor + d) % n, (anchor + n - d % n) % n])
        .find(|&i| !removed[i])
        .expect("at least one survivor")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::MinutiaKind::*;
    use crate::minutiae::RegionId::*;

    fn seq(spec: &[(MinutiaKind, u32, f64, RegionId)]) -> AceSequence {
        let minutiae = spec
            .iter()
            .map(|&(k, _, o, r)| Minutia::canonical(k, o, r).unwrap())
            .collect();
        let rcs = spec.iter().map(|s| s.1).collect();
        AceSequence::new(minutiae, rcs, 0, Side::Left).unwrap()
    }

    #[test]
    fn single_ridge_token() {
        let s = seq(&[(Ridge, 0, 30.0, Fore)]);
        assert_eq!(encode(&s).unwrap().as_str(), "R0a1F");
    }

    #[test]
    fn decode_single_token() {
        let s = decode("R0a1F").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.anchor_index, 0);
        assert_eq!(
            s.token(0),
            AceToken {
                kind: Ridge,
                ridge_count: 0,
                bucket: 0,
                region: Fore
            }
        );
    }

    #[test]
    fn malformed_token_reports_offset() {
        let e = parse_tokens("X9").unwrap_err();
        assert_eq!(e.offset, 0);
        assert_eq!(e.expected, vec!["R", "B", "C", "E"]);
        let e = parse_tokens("R0a1F;B2a9M").unwrap_err();
        assert_eq!(e.offset, 9);
        let e = parse_tokens("R0a1F;").unwrap_err();
        assert_eq!(e.offset, 6);
        assert!(parse_tokens("").is_err());
        assert_eq!(parse_tokens("R01a1F").unwrap_err().offset, 2);
        assert_eq!(parse_tokens("C0a2F").unwrap_err().expected, vec!["5", "6", "7", "8"]);
        assert_eq!(parse_tokens("R0a1Fx").unwrap_err().offset, 5);
        assert!(parse_tokens("R99999999999a1F").is_err());
    }

    #[test]
    fn budget_enforced_at_78() {
        let ok = vec![(Ridge, 0, 10.0, Mid); TOKEN_BUDGET];
        assert_eq!(encode(&seq(&ok)).unwrap().token_count(), TOKEN_BUDGET);
        let long = vec![(Ridge, 0, 10.0, Mid); 80];
        assert_eq!(
            encode(&seq(&long)),
            Err(AceError::TokenBudgetExceeded { tokens: 80, limit: 77 })
        );
        let text = vec!["R0a1M"; 78].join(";");
        assert!(matches!(decode(&text), Err(AceError::TokenBudgetExceeded { .. })));
    }

    #[test]
    fn encode_starts_at_anchor() {
        let mut s = seq(&[(Ridge, 0, 10.0, Fore), (Bifurcation, 2, 100.0, Mid), (Enclosure, 1, 300.0, Hind)]);
        s.anchor_index = 1;
        assert_eq!(encode(&s).unwrap().as_str(), "B2a3M;E1a7H;R0a1F");
    }

    #[test]
    fn scan_order_rejects_zigzag() {
        let minutiae = [Fore, Hind, Fore, Hind]
            .iter()
            .map(|&r| Minutia::canonical(Ridge, 0.0, r).unwrap())
            .collect();
        let s = AceSequence {
            minutiae,
            ridge_counts: vec![0; 4],
            anchor_index: 0,
            side: Side::Left,
        };
        assert!(matches!(s.validate(), Err(AceError::ScanOrder { .. })));
        assert!(decode("R0a1F;R0a1M;R0a1H;R0a1H;R0a1M;R0a1F").is_ok());
        assert!(decode("R0a1H;R0a1F;R0a1M").is_ok());
    }

    #[test]
    fn prose_rendering() {
        let s = seq(&[(Bifurcation, 2, 0.0, Mid)]);
        assert_eq!(render_prose(&s), "after 2 ridges, a bifurcation in the mid region");
        let s = seq(&[(Ridge, 0, 0.0, Fore), (Enclosure, 1, 0.0, Mid), (Convergence, 3, 200.0, Hind)]);
        assert_eq!(
            render_prose(&s),
            "a ridge in the fore region; after 1 ridge, an enclosure in the mid region; \
             after 3 ridges, a convergence in the hind region"
        );
        let labels = RegionLabels {
            fore: "shoulder".into(),
            mid: "flank".into(),
            hind: "haunch".into(),
        };
        assert_eq!(
            render_prose_with(&seq(&[(Ridge, 0, 0.0, Hind)]), &labels),
            "a ridge in the haunch region"
        );
    }

    fn twenty() -> AceSequence {
        let spec: Vec<_> = (0..20)
            .map(|i| {
                let region = RegionId::from_index(i * 3 / 20).unwrap();
                (MinutiaKind::ALL[i % 4], (i % 3) as u32, if i % 4 == 2 { 200.0 } else { 10.0 }, region)
            })
            .collect();
        seq(&spec)
    }

    #[test]
    fn ap1_is_original() {
        let s = twenty();
        let out = permute_anchor(&s, 1, 5, 9).unwrap();
        assert_eq!(out, vec![s]);
    }

    #[test]
    fn ap6_draws_distinct_nearby_anchors() {
        let mut s = twenty();
        s.anchor_index = 2;
        let out = permute_anchor(&s, 6, 5, 42).unwrap();
        assert_eq!(out.len(), 6);
        let mut anchors: Vec<usize> = out.iter().map(|o| o.anchor_index).collect();
        for &a in &anchors {
            let d = (a as isize - 2).rem_euclid(20).min((2 - a as isize).rem_euclid(20));
            assert!(d <= 5, "anchor {a} too far");
        }
        anchors.sort_unstable();
        anchors.dedup();
        assert_eq!(anchors.len(), 6);
        assert_eq!(out, permute_anchor(&s, 6, 5, 42).unwrap());
    }

    #[test]
    fn window_exhausts() {
        let out = permute_anchor(&twenty(), 10, 3, 1).unwrap();
        assert_eq!(out.len(), 7);
    }

    #[test]
    fn permute_errors() {
        let s = seq(&[(Ridge, 0, 0.0, Fore), (Ridge, 0, 0.0, Fore)]);
        assert_eq!(permute_anchor(&s, 0, 1, 0), Err(AceError::ZeroPermutations));
        assert_eq!(permute_anchor(&s, 1, 2, 0), Err(AceError::WindowTooLarge { window: 2, len: 2 }));
        // small cycle: the window covers every index once
        assert_eq!(permute_anchor(&s, 5, 1, 0).unwrap().len(), 2);
    }

    #[test]
    fn cull_zero_is_identity() {
        let s = twenty();
        assert_eq!(cull(&s, 0.0, 3).unwrap(), s);
        assert!(matches!(cull(&s, 1.0, 3), Err(AceError::InvalidFraction(_))));
    }

    #[test]
    fn cull_fold_rule() {
        let s = seq(&[(Ridge, 1, 0.0, Fore), (Bifurcation, 2, 0.0, Fore), (Enclosure, 0, 0.0, Mid)]);
        let out = remove_indices(&s, &[true, false, false]).unwrap();
        assert_eq!(out.ridge_counts, vec![4, 0]);
        assert_eq!(out.ridge_mass(), s.ridge_mass());
        // removing the last minutia folds into the first
        let out = remove_indices(&s, &[false, false, true]).unwrap();
        assert_eq!(out.ridge_counts, vec![1, 2]);
        // a run of removals wrapping around
        let out = remove_indices(&s, &[true, false, true]).unwrap();
        assert_eq!(out.ridge_counts, vec![4]);
        assert_eq!(out.anchor_index, 0);
    }

    #[test]
    fn cull_length_and_anchor() {
        let mut s = twenty();
        s.anchor_index = 7;
        for (f, expect) in [(0.1, 18), (0.25, 15), (0.5, 10), (0.95, 1)] {
            let out = cull(&s, f, 11).unwrap();
            assert_eq!(out.len(), expect);
            assert!(out.anchor_index < out.len());
            assert_eq!(out.ridge_mass(), s.ridge_mass());
            out.validate().unwrap();
        }
    }

    #[test]
    fn nearest_survivor_prefers_successor_on_tie() {
        assert_eq!(nearest_survivor(2, &[false, false, true, false, false]), 3);
        assert_eq!(nearest_survivor(2, &[false, true, true, true, false]), 4);
        assert_eq!(nearest_survivor(3, &[false, true, true, true, true]), 0);
    }
}
