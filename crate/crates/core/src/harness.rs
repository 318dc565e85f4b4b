//! Scripted evaluation sweeps: synthetic-identity injection, anchor
//! permutation grids and minutiae culling, plus dataset splitting.
//!
//! Every cell is evaluated once per seed; seeds only drive query
//! perturbations, so a cell's numbers are a pure function of the plan.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::{anchor_candidates, cull, decode_with_side, permute_anchor, AceError, AceSequence};
use crate::capture::degrade_visibility;
use crate::manifest::{read_manifest, unique_ids, ManifestError, ManifestRow};
use crate::matching::{evaluate_cmc, Gallery, MatchConfig, MatchError, MatchMode, RankingRecord};
use crate::rng;
use crate::synthesis::{plan_identities, RegionStats, SynthesisConfig, SynthesisError};

const POOL_STREAM: u64 = 0x706f_6f6c;
const QUERY_STREAM: u64 = 0x7175_6572;
const AP_STREAM: u64 = 0x6170;
const SPLIT_STREAM: u64 = 0x7370_6c74;

/// Ids that the synthetic pool is generated under.
pub const POOL_PREFIX: &str = "syn";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("synthetic pool holds {available} ids but a step needs {needed}")]
    InsufficientSyntheticPool { needed: usize, available: usize },
    #[error("ids assigned to both splits: {0:?}")]
    OverlappingSplits(Vec<String>),
    #[error("asked for {requested} ids but the manifest has {available}")]
    TooManyIds { requested: usize, available: usize },
    #[error("id {0} is not in the manifest")]
    UnknownId(String),
    #[error("id {0} appears in both the base set and the synthetic pool")]
    IdCollision(String),
    #[error("no rows in split {0:?}")]
    EmptySplit(String),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Ace(#[from] AceError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Where the base gallery and the fixed test queries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BaseSource {
    /// `ids` generated identities; every one of them is also a test id.
    Symbolic { ids: usize },
    /// Every id of the manifest is enrolled; rows of `test_split` are queries.
    Manifest { path: PathBuf, test_split: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QueryPerturbation {
    /// Chance that a minutia is read as a plainer kind.
    pub demotion_probability: f64,
    /// The query anchor moves uniformly within this many positions.
    pub anchor_jitter: usize,
}

impl Default for QueryPerturbation {
    fn default() -> Self {
        Self {
            demotion_probability: 0.1,
            anchor_jitter: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Injection,
    ApGrid,
    Cull,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Injection => "injection",
            Self::ApGrid => "ap_grid",
            Self::Cull => "cull",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub base: BaseSource,
    /// Size of the synthetic pool injections are drawn from, in order.
    pub pool_ids: usize,
    /// Synthetic ids added to the gallery at each step.
    pub injection_steps: Vec<usize>,
    pub ap_settings: Vec<usize>,
    /// Cyclic window the gallery anchorings are drawn from.
    pub ap_window: usize,
    pub cull_fractions: Vec<f64>,
    pub seeds: usize,
    pub seed: u64,
    pub queries_per_id: usize,
    pub perturbation: QueryPerturbation,
    pub matcher: MatchConfig,
    pub stats: RegionStats,
    pub synthesis: SynthesisConfig,
    pub sweeps: Vec<SweepKind>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            base: BaseSource::Symbolic { ids: 20 },
            pool_ids: 2000,
            injection_steps: (1..=10).map(|i| i * 200).collect(),
            ap_settings: (1..=8).collect(),
            ap_window: 4,
            cull_fractions: (0..10).map(|i| i as f64 / 10.0).collect(),
            seeds: 20,
            seed: 0,
            queries_per_id: 1,
            perturbation: QueryPerturbation::default(),
            matcher: MatchConfig {
                mode: MatchMode::Anchored,
                ..MatchConfig::default()
            },
            stats: RegionStats::default(),
            synthesis: SynthesisConfig::default(),
            sweeps: vec![SweepKind::Injection, SweepKind::ApGrid, SweepKind::Cull],
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidPlan(m));
        if self.injection_steps.is_empty() {
            return bad("no injection steps".into());
        }
        // A leading 0 is the base-only evaluation; every other step is positive.
        if self.injection_steps.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("injection steps must increase: {:?}", self.injection_steps));
        }
        if let Some(&max) = self.injection_steps.last() {
            if max > self.pool_ids {
                return Err(HarnessError::InsufficientSyntheticPool {
                    needed: max,
                    available: self.pool_ids,
                });
            }
        }
        let capacity = 2 * self.ap_window + 1;
        if self.ap_settings.is_empty() || self.ap_settings.iter().any(|&a| a == 0 || a > capacity) {
            return bad(format!("anchor settings must lie in 1..={capacity}: {:?}", self.ap_settings));
        }
        if self.cull_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return bad(format!("cull fractions must lie in [0, 1): {:?}", self.cull_fractions));
        }
        if self.seeds == 0 || self.queries_per_id == 0 {
            return bad("seeds and queries_per_id must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.perturbation.demotion_probability) {
            return bad("demotion probability must lie in [0, 1]".into());
        }
        if let BaseSource::Symbolic { ids: 0 } = self.base {
            return bad("symbolic base needs at least one id".into());
        }
        self.matcher.weights.validate()?;
        self.stats.validate()?;
        self.synthesis.validate()?;
        Ok(())
    }

    fn has(&self, s: SweepKind) -> bool {
        self.sweeps.contains(&s)
    }
}

/// One unit of sweep work, as listed by a dry run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub sweep: SweepKind,
    pub knobs: Vec<(String, String)>,
    pub seeds: usize,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.sweep.name())?;
        for (k, v) in &self.knobs {
            write!(f, " {k}={v}")?;
        }
        write!(f, " seeds={}", self.seeds)
    }
}

/// The cell grid the plan would run.
pub fn cells(plan: &ExperimentPlan) -> Vec<Cell> {
    let cell = |sweep, knobs: Vec<(&str, String)>| Cell {
        sweep,
        knobs: knobs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        seeds: plan.seeds,
    };
    let mut out = Vec::new();
    if plan.has(SweepKind::Injection) {
        for &s in &plan.injection_steps {
            out.push(cell(SweepKind::Injection, vec![("injected_ids", s.to_string())]));
        }
    }
    if plan.has(SweepKind::ApGrid) {
        for &a in &plan.ap_settings {
            for &s in &plan.injection_steps {
                out.push(cell(
                    SweepKind::ApGrid,
                    vec![("anchor_permutations", a.to_string()), ("injected_ids", s.to_string())],
                ));
            }
        }
    }
    if plan.has(SweepKind::Cull) {
        for &f in &plan.cull_fractions {
            out.push(cell(SweepKind::Cull, vec![("cull_fraction", format!("{f}"))]));
        }
    }
    out
}

/// Base identities, fixed test queries and the ordered synthetic pool.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub base: Vec<(String, AceSequence)>,
    pub queries: Vec<(String, AceSequence)>,
    pub pool: Vec<(String, AceSequence)>,
}

impl EvalData {
    pub fn load(plan: &ExperimentPlan) -> Result<Self, HarnessError> {
        plan.validate()?;
        let (base, queries) = match &plan.base {
            BaseSource::Symbolic { ids } => {
                let specs = plan_identities(*ids, &plan.stats, &plan.synthesis, plan.seed)?;
                let base: Vec<_> = specs.into_iter().map(|s| (s.id, s.sequence)).collect();
                let queries = base
                    .iter()
                    .flat_map(|e| std::iter::repeat_n(e.clone(), plan.queries_per_id))
                    .collect();
                (base, queries)
            }
            BaseSource::Manifest { path, test_split } => {
                let rows = read_manifest(path)?;
                let mut base = Vec::new();
                let mut seen = HashSet::new();
                let mut queries = Vec::new();
                for r in &rows {
                    let seq = decode_with_side(&r.text, r.side)?;
                    if seen.insert(r.id.clone()) {
                        base.push((r.id.clone(), seq.clone()));
                    }
                    if &r.split == test_split {
                        queries.push((r.id.clone(), seq));
                    }
                }
                if queries.is_empty() {
                    return Err(HarnessError::EmptySplit(test_split.clone()));
                }
                (base, queries)
            }
        };
        let pool = if plan.pool_ids == 0 {
            Vec::new()
        } else {
            let cfg = SynthesisConfig {
                id_prefix: POOL_PREFIX.into(),
                ..plan.synthesis.clone()
            };
            plan_identities(plan.pool_ids, &plan.stats, &cfg, rng::derive(plan.seed, POOL_STREAM))?
                .into_iter()
                .map(|s| (s.id, s.sequence))
                .collect()
        };
        let base_ids: HashSet<&str> = base.iter().map(|(id, _)| id.as_str()).collect();
        if let Some((id, _)) = pool.iter().find(|(id, _)| base_ids.contains(id.as_str())) {
            return Err(HarnessError::IdCollision(id.clone()));
        }
        Ok(Self { base, queries, pool })
    }

    /// Base identities plus the first `step` pool identities, each enrolled
    /// under `ap` anchorings.
    pub fn gallery(&self, step: usize, ap: usize, window: usize, seed: u64) -> Result<Gallery, HarnessError> {
        if step > self.pool.len() {
            return Err(HarnessError::InsufficientSyntheticPool {
                needed: step,
                available: self.pool.len(),
            });
        }
        let mut g = Gallery::new();
        for (i, (id, seq)) in self.base.iter().chain(&self.pool[..step]).enumerate() {
            if ap == 1 {
                g.enroll(id, seq);
                continue;
            }
            let w = window.min(seq.len().saturating_sub(1));
            let s = rng::derive(rng::derive(seed, AP_STREAM), i as u64);
            for variant in permute_anchor(seq, ap, w, s)? {
                g.enroll(id, &variant);
            }
        }
        Ok(g)
    }
}

fn query_seed(plan_seed: u64, seed_index: usize, query_index: usize) -> u64 {
    rng::derive(rng::derive(rng::derive(plan_seed, QUERY_STREAM), seed_index as u64), query_index as u64)
}

/// A query as seen under seed `seed`: demoted, re-anchored, then culled.
pub fn perturb_query(seq: &AceSequence, p: &QueryPerturbation, cull_fraction: f64, seed: u64) -> Result<AceSequence, AceError> {
    let mut q = if p.demotion_probability > 0.0 {
        degrade_visibility(seq, p.demotion_probability, rng::derive(seed, 1))?
    } else {
        seq.clone()
    };
    if p.anchor_jitter > 0 && q.len() > 1 {
        let cands = anchor_candidates(&q, p.anchor_jitter.min(q.len() - 1));
        q.anchor_index = cands[rng::rng_for(seed, 2).random_range(0..cands.len())];
    }
    cull(&q, cull_fraction, rng::derive(seed, 3))
}

fn queries_for(plan: &ExperimentPlan, data: &EvalData, seed_index: usize, fraction: f64) -> Result<Vec<(String, AceSequence)>, HarnessError> {
    data.queries
        .iter()
        .enumerate()
        .map(|(i, (id, seq))| {
            let q = perturb_query(seq, &plan.perturbation, fraction, query_seed(plan.seed, seed_index, i))?;
            Ok((id.clone(), q))
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub knobs: Vec<String>,
    pub gallery_size: usize,
    pub queries: usize,
    pub top1: Vec<f64>,
    pub top5: Vec<f64>,
}

impl TableRow {
    pub fn top1_mean_std(&self) -> (f64, f64) {
        mean_std(&self.top1)
    }

    pub fn top5_mean_std(&self) -> (f64, f64) {
        mean_std(&self.top5)
    }
}

/// A sweep's results, one row per cell with per-seed accuracies kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub knob_names: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut s = self.knob_names.join(",");
        s.push_str(",gallery_size,queries,seeds,top1_mean,top1_std,top5_mean,top5_std\n");
        for r in &self.rows {
            let (m1, s1) = r.top1_mean_std();
            let (m5, s5) = r.top5_mean_std();
            let _ = writeln!(
                s,
                "{},{},{},{},{m1:.6},{s1:.6},{m5:.6},{s5:.6}",
                r.knobs.join(","),
                r.gallery_size,
                r.queries,
                r.top1.len()
            );
        }
        s
    }
}

fn evaluate_cell(
    plan: &ExperimentPlan,
    data: &EvalData,
    gallery: &Gallery,
    fraction: f64,
) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let per_seed: Vec<(f64, f64)> = (0..plan.seeds)
        .into_par_iter()
        .map(|s| {
            let q = queries_for(plan, data, s, fraction)?;
            let r = evaluate_cmc(&q, gallery, &plan.matcher, Some(5))?;
            Ok((r.top1, r.top5))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(per_seed.into_iter().unzip())
}

/// Top-1/Top-5 as synthetic ids join the gallery, test queries fixed.
pub fn run_injection_sweep(plan: &ExperimentPlan, data: &EvalData) -> Result<ResultTable, HarnessError> {
    plan.validate()?;
    let jobs = &plan.injection_steps;
    let rows = jobs
        .par_iter()
        .map(|&step| {
            let g = data.gallery(step, 1, plan.ap_window, plan.seed)?;
            let (top1, top5) = evaluate_cell(plan, data, &g, 0.0)?;
            Ok(TableRow {
                knobs: vec![step.to_string()],
                gallery_size: g.len(),
                queries: data.queries.len(),
                top1,
                top5,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(ResultTable {
        name: SweepKind::Injection.name().into(),
        knob_names: vec!["injected_ids".into()],
        rows,
    })
}

/// Every (anchor permutation count, injection step) pair; gallery ids are
/// enrolled under that many anchorings.
pub fn run_ap_grid(plan: &ExperimentPlan, data: &EvalData) -> Result<ResultTable, HarnessError> {
    plan.validate()?;
    let jobs: Vec<(usize, usize)> = plan
        .ap_settings
        .iter()
        .flat_map(|&a| plan.injection_steps.iter().map(move |&s| (a, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(a, step)| {
            let g = data.gallery(step, a, plan.ap_window, plan.seed)?;
            let (top1, top5) = evaluate_cell(plan, data, &g, 0.0)?;
            Ok(TableRow {
                knobs: vec![a.to_string(), step.to_string()],
                gallery_size: g.len(),
                queries: data.queries.len(),
                top1,
                top5,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(ResultTable {
        name: SweepKind::ApGrid.name().into(),
        knob_names: vec!["anchor_permutations".into(), "injected_ids".into()],
        rows,
    })
}

/// Queries culled at each fraction against the intact base gallery.
pub fn run_cull_sweep(plan: &ExperimentPlan, data: &EvalData) -> Result<ResultTable, HarnessError> {
    plan.validate()?;
    let g = data.gallery(0, 1, plan.ap_window, plan.seed)?;
    let rows = plan
        .cull_fractions
        .par_iter()
        .map(|&f| {
            let (top1, top5) = evaluate_cell(plan, data, &g, f)?;
            Ok(TableRow {
                knobs: vec![format!("{f}")],
                gallery_size: g.len(),
                queries: data.queries.len(),
                top1,
                top5,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(ResultTable {
        name: SweepKind::Cull.name().into(),
        knob_names: vec!["cull_fraction".into()],
        rows,
    })
}

/// Published cross-modal accuracies of a trained dual encoder, kept for plot
/// overlays. Nothing here is compared against the symbolic matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMetadata {
    pub note: String,
    pub reference_injection_baseline_top1: f64,
    pub reference_injection_peak_top1: f64,
    pub reference_injection_peak_ids: usize,
    pub reference_ap_top1: Vec<(usize, f64)>,
    pub reference_cull_top1_start: f64,
    pub reference_cull_top1_end: f64,
}

impl Default for ReferenceMetadata {
    fn default() -> Self {
        Self {
            note: "Top-1 text-to-image retrieval of a trained dual encoder on camera-trap data; overlay only".into(),
            reference_injection_baseline_top1: 0.216,
            reference_injection_peak_top1: 0.418,
            reference_injection_peak_ids: 1000,
            reference_ap_top1: vec![(1, 0.418), (6, 0.488)],
            reference_cull_top1_start: 0.418,
            reference_cull_top1_end: 0.044,
        }
    }
}

/// Runs the plan's sweeps and writes `<sweep>.csv`, `reference.json` and a
/// base-gallery ranking trace (`rankings.jsonl`, seed 0) under `out`.
pub fn run_plan(plan: &ExperimentPlan, out: &Path) -> Result<Vec<ResultTable>, HarnessError> {
    plan.validate()?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let data = EvalData::load(plan)?;
    let mut tables = Vec::new();
    if plan.has(SweepKind::Injection) {
        tables.push(run_injection_sweep(plan, &data)?);
    }
    if plan.has(SweepKind::ApGrid) {
        tables.push(run_ap_grid(plan, &data)?);
    }
    if plan.has(SweepKind::Cull) {
        tables.push(run_cull_sweep(plan, &data)?);
    }
    for t in &tables {
        let p = out.join(format!("{}.csv", t.name));
        fs::write(&p, t.to_csv()).map_err(io(&p))?;
    }
    let p = out.join("reference.json");
    let meta = serde_json::to_string_pretty(&ReferenceMetadata::default()).expect("metadata serializes");
    fs::write(&p, meta + "\n").map_err(io(&p))?;

    let g = data.gallery(0, 1, plan.ap_window, plan.seed)?;
    let queries = queries_for(plan, &data, 0, 0.0)?;
    let lines = queries
        .par_iter()
        .map(|(id, q)| {
            let mut ranked = g.rank(q, &plan.matcher)?;
            ranked.truncate(10);
            Ok(serde_json::to_string(&RankingRecord::new(id, ranked)).expect("record serializes"))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let p = out.join("rankings.jsonl");
    fs::write(&p, lines.join("\n") + "\n").map_err(io(&p))?;
    Ok(tables)
}

/// How to partition a manifest by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSpec {
    /// Random assignment of this many ids to each split.
    Counts { train: usize, test: usize },
    Ids { train: Vec<String>, test: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifests {
    pub train: Vec<ManifestRow>,
    pub test: Vec<ManifestRow>,
    /// Rows of ids assigned to neither split, left untouched.
    pub unassigned: Vec<ManifestRow>,
}

/// Partitions rows by id; each row's `split` field is rewritten to `train`
/// or `test`.
pub fn split_dataset(rows: &[ManifestRow], spec: &SplitSpec, seed: u64) -> Result<SplitManifests, HarnessError> {
    let ids = unique_ids(rows);
    let (train, test): (HashSet<String>, HashSet<String>) = match spec {
        SplitSpec::Counts { train, test } => {
            let requested = train + test;
            if requested > ids.len() {
                return Err(HarnessError::TooManyIds {
                    requested,
                    available: ids.len(),
                });
            }
            let mut order = ids.clone();
            order.shuffle(&mut rng::rng_for(seed, SPLIT_STREAM));
            let test_ids = order[..*test].iter().cloned().collect();
            let train_ids = order[*test..requested].iter().cloned().collect();
            (train_ids, test_ids)
        }
        SplitSpec::Ids { train, test } => {
            let known: HashSet<&String> = ids.iter().collect();
            if let Some(u) = train.iter().chain(test).find(|i| !known.contains(i)) {
                return Err(HarnessError::UnknownId(u.clone()));
            }
            let tr: HashSet<String> = train.iter().cloned().collect();
            let te: HashSet<String> = test.iter().cloned().collect();
            let overlap: BTreeSet<String> = tr.intersection(&te).cloned().collect();
            if !overlap.is_empty() {
                return Err(HarnessError::OverlappingSplits(overlap.into_iter().collect()));
            }
            (tr, te)
        }
    };
    let mut out = SplitManifests {
        train: Vec::new(),
        test: Vec::new(),
        unassigned: Vec::new(),
    };
    for r in rows {
        if train.contains(&r.id) {
            out.train.push(ManifestRow {
                split: "train".into(),
                ..r.clone()
            });
        } else if test.contains(&r.id) {
            out.test.push(ManifestRow {
                split: "test".into(),
                ..r.clone()
            });
        } else {
            out.unassigned.push(r.clone());
        }
    }
    Ok(out)
}

/// Per-id row counts; handy for checking a split.
pub fn rows_per_id(rows: &[ManifestRow]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for r in rows {
        *m.entry(r.id.clone()).or_insert(0) += 1;
    }
    m
}
