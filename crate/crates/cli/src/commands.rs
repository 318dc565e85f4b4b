use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use coatprint::ace::{decode_with_side, encode, render_prose, AceSequence, Side};
use coatprint::augment::{augment_minutia, build_library, canonical_seed_patches, load_patch_dir, AnnotatedPatch, MinutiaeLibrary};
use coatprint::config::RunConfig;
use coatprint::harness::{cells, run_plan, ExperimentPlan};
use coatprint::linalg::Matrix;
use coatprint::loss::{id_loss, itc_loss, total_retrieval_loss, triplet_hard_loss, FeatureBatch, LogitBatch};
use coatprint::manifest::{read_manifest, ManifestRow};
use coatprint::matching::{evaluate_cmc, Gallery, RankingRecord};
use coatprint::population::write_population;
use coatprint::rng;
use coatprint::synthesis::plan_identities;
use rayon::prelude::*;
use serde::Deserialize;

use crate::{
    AugmentArgs, Cli, Command, DecodeArgs, EncodeArgs, EvalArgs, GlobalArgs, LossArgs, LossKind, MatchArgs,
    SeedLibraryArgs, SideArg, SynthArgs,
};

/// Variants per seed patch when `synth` has to build its own library.
const DEFAULT_PER_SEED: usize = 8;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, configuration or input file: exit 2.
    Usage(String),
    /// The pipeline failed: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(runtime)?;
    }
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::SeedLibrary(a) => seed_library(&cfg, a),
        Command::Augment(a) => augment(&cfg, a),
        Command::Synth(a) => synth(cfg, a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Match(a) => cmd_match(&cfg, a),
        Command::Eval(a) => eval(&cfg, cli.global.seed, a),
        Command::Loss(a) => loss(&cfg, a),
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn require_dir(p: &Path, what: &str) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} not found: {}", p.display())))
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} not found: {}", p.display())))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path, what: &str) -> Result<T> {
    require_file(p, what)?;
    let text = fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn seed_library(cfg: &RunConfig, a: SeedLibraryArgs) -> Result<()> {
    let seeds = match &a.seeds {
        Some(dir) => {
            require_dir(dir, "seed patch directory")?;
            load_patch_dir(dir).map_err(usage)?
        }
        None => canonical_seed_patches(cfg.synthesis.patch_size),
    };
    let lib = build_library(&seeds, a.per_seed, &cfg.augment, cfg.seed).map_err(runtime)?;
    lib.save_dir(&a.out).map_err(runtime)?;
    println!("{} patches from {} seeds -> {}", lib.len(), seeds.len(), a.out.display());
    Ok(())
}

fn augment(cfg: &RunConfig, a: AugmentArgs) -> Result<()> {
    require_file(&a.input, "patch image")?;
    let patch = AnnotatedPatch::load(&a.input).map_err(usage)?;
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("patch").to_string();
    (0..a.count)
        .into_par_iter()
        .try_for_each(|i| -> Result<()> {
            let p = augment_minutia(&patch, &cfg.augment, rng::derive(cfg.seed, i as u64)).map_err(runtime)?;
            p.save(&a.out, &format!("{stem}_{i:03}")).map_err(runtime)
        })?;
    println!("{} variants -> {}", a.count, a.out.display());
    Ok(())
}

fn synth(mut cfg: RunConfig, a: SynthArgs) -> Result<()> {
    if let Some(l) = a.library {
        cfg.paths.library_dir = Some(l);
    }
    if let Some(o) = a.out {
        cfg.paths.output_dir = Some(o);
    }
    let out = cfg
        .paths
        .output_dir
        .clone()
        .ok_or_else(|| usage("no output directory: pass --out or set paths.output_dir"))?;
    let library = match &cfg.paths.library_dir {
        Some(dir) => {
            require_dir(dir, "library directory")?;
            MinutiaeLibrary::load_dir(dir).map_err(usage)?
        }
        None => {
            eprintln!("no library directory given; augmenting the built-in seed patches");
            let seeds = canonical_seed_patches(cfg.synthesis.patch_size);
            build_library(&seeds, DEFAULT_PER_SEED, &cfg.augment, cfg.seed).map_err(runtime)?
        }
    };
    cfg.validate().map_err(usage)?;
    let views = a.views.unwrap_or(cfg.capture.views_per_id);
    if a.ids == 0 || views == 0 {
        return Err(usage("--ids and --views must be positive"));
    }
    let specs = plan_identities(a.ids, &cfg.stats, &cfg.synthesis, cfg.seed).map_err(runtime)?;
    let rows = write_population(&specs, &library, &cfg.synthesis, &cfg.capture, views, &out).map_err(runtime)?;
    cfg.write_snapshot(&out).map_err(runtime)?;
    println!("{} rows ({} ids x {views} views) -> {}", rows.len(), specs.len(), out.join("manifest.jsonl").display());
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let seq: AceSequence = read_json(&a.annotation, "annotation file")?;
    seq.validate().map_err(|e| usage(format!("{}: {e}", a.annotation.display())))?;
    let text = encode(&seq).map_err(runtime)?;
    println!("{text}");
    println!("{}", render_prose(&seq));
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let side = match a.side {
        SideArg::Left => Side::Left,
        SideArg::Right => Side::Right,
    };
    let seq = decode_with_side(&a.text, side).map_err(usage)?;
    println!("{}", serde_json::to_string_pretty(&seq).map_err(runtime)?);
    Ok(())
}

fn load_manifest(p: &Path, what: &str) -> Result<Vec<ManifestRow>> {
    require_file(p, what)?;
    read_manifest(p).map_err(usage)
}

fn cmd_match(cfg: &RunConfig, a: MatchArgs) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be positive"));
    }
    let gallery_rows = load_manifest(&a.gallery, "gallery manifest")?;
    let mut gallery = Gallery::new();
    let mut seen = HashSet::new();
    for r in &gallery_rows {
        if seen.insert((r.id.clone(), r.text.clone())) {
            let seq = decode_with_side(&r.text, r.side).map_err(|e| usage(format!("gallery id {}: {e}", r.id)))?;
            gallery.enroll(&r.id, &seq);
        }
    }
    let queries: Vec<(String, AceSequence)> = match (&a.queries, &a.text) {
        (Some(q), _) => load_manifest(q, "query manifest")?
            .iter()
            .map(|r| {
                decode_with_side(&r.text, r.side)
                    .map(|s| (r.id.clone(), s))
                    .map_err(|e| usage(format!("query {}: {e}", r.image_path)))
            })
            .collect::<Result<_>>()?,
        (None, Some(t)) => vec![("query".into(), decode_with_side(t, Side::Left).map_err(usage)?)],
        (None, None) => return Err(usage("pass --queries or --text")),
    };
    let lines = queries
        .par_iter()
        .map(|(id, q)| {
            let mut ranked = gallery.rank(q, &cfg.matcher).map_err(runtime)?;
            ranked.truncate(a.k);
            serde_json::to_string(&RankingRecord::new(id, ranked)).map_err(runtime)
        })
        .collect::<Result<Vec<_>>>()?;
    let body = lines.join("\n") + "\n";
    match &a.out {
        Some(p) => fs::write(p, body).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(body.as_bytes()).map_err(runtime)?,
    }
    if a.queries.is_some() && queries.iter().all(|(id, _)| gallery.position(id).is_some()) {
        let r = evaluate_cmc(&queries, &gallery, &cfg.matcher, Some(5)).map_err(runtime)?;
        eprintln!("queries={} top1={:.4} top5={:.4}", r.queries, r.top1, r.top5);
    }
    Ok(())
}

fn eval(cfg: &RunConfig, seed: Option<u64>, a: EvalArgs) -> Result<()> {
    require_file(&a.plan, "plan file")?;
    let text = fs::read_to_string(&a.plan).map_err(|e| runtime(format!("{}: {e}", a.plan.display())))?;
    let mut plan: ExperimentPlan = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", a.plan.display())))?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    plan.validate().map_err(usage)?;
    if a.dry_run {
        let grid = cells(&plan);
        for c in &grid {
            println!("{c}");
        }
        println!("{} cells", grid.len());
        return Ok(());
    }
    let out: PathBuf = a
        .out
        .or_else(|| cfg.paths.output_dir.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set paths.output_dir"))?;
    fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    let snap = out.join("plan.toml");
    let body = toml::to_string(&plan).map_err(runtime)?;
    fs::write(&snap, body).map_err(|e| runtime(format!("{}: {e}", snap.display())))?;
    cfg.write_snapshot(&out).map_err(runtime)?;
    let tables = run_plan(&plan, &out).map_err(runtime)?;
    for t in &tables {
        println!("{} rows -> {}", t.rows.len(), out.join(format!("{}.csv", t.name)).display());
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairInput {
    image: Matrix<f64>,
    text: Matrix<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TotalInput {
    image: Matrix<f64>,
    text: Matrix<f64>,
    logits: LogitBatch<f64>,
}

fn loss(cfg: &RunConfig, a: LossArgs) -> Result<()> {
    let l = &cfg.loss;
    let (name, value) = match a.kind {
        LossKind::Triplet => {
            let b: FeatureBatch<f64> = read_json(&a.input, "batch file")?;
            b.validate().map_err(usage)?;
            ("triplet", triplet_hard_loss(&b, l.gamma, l.margin).map_err(runtime)?.loss)
        }
        LossKind::Itc => {
            let b: PairInput = read_json(&a.input, "batch file")?;
            ("itc", itc_loss(&b.image, &b.text, l.logit_scale).map_err(runtime)?)
        }
        LossKind::Id => {
            let b: LogitBatch<f64> = read_json(&a.input, "batch file")?;
            ("id", id_loss(&b).map_err(runtime)?)
        }
        LossKind::Total => {
            let b: TotalInput = read_json(&a.input, "batch file")?;
            ("total", total_retrieval_loss(&b.image, &b.text, l.logit_scale, &b.logits).map_err(runtime)?)
        }
    };
    println!("{}", serde_json::json!({ "kind": name, "loss": value }));
    Ok(())
}
