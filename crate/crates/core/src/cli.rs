//! `sface` command line: TOML run configuration plus flag overrides, CSV
//! artifacts in an output directory.
//!
//! Exit codes: 0 success, 1 tolerance violation, 2 configuration error,
//! 3 I/O error, 4 numerical divergence.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{angle_stats, best_tradeoff, noise_sweep, SweepEntry, SweepRow};
use crate::csvio;
use crate::error::Error;
use crate::gradcheck::{check_margin, check_sface, random_instance, DEFAULT_STEP};
use crate::margin::{equivalence_report, margin_v_curves, EquivalenceRecord, MarginSpec, MarginVariant};
use crate::rescale::{v_curves, RescaleFamily, RescaleSpec, DEFAULT_SCALE, DEFAULT_SLOPE};
use crate::synthetic::{generate, DatasetSpec};
use crate::trainer::{default_decay_steps, Backbone, LossConfig, TrainConfig};

/// Fallback output directory when neither `--out-dir`, `out_dir` nor the
/// environment variable is set.
pub const DEFAULT_OUT_DIR: &str = "sface-out";
pub const OUT_DIR_ENV: &str = "SFACE_OUT_DIR";
pub const DEFAULT_GRADCHECK_TOLERANCE: f64 = 1e-5;

const CONFIG_KEYS: &str = "\
CONFIG FILE (TOML, --config; unknown keys are rejected, flags win over file values)
  out_dir = \"dir\"          output directory (else $SFACE_OUT_DIR, else ./sface-out)

  [dataset]  num_classes=10  per_class=100  dim=16  concentration=40.0
             flip_rate=0.0  outlier_rate=0.0  seed=1
  [loss]     kind=\"sface\" | softmax | nsoftmax | cosface | arcface | combined
             family=\"sigmoid\" | piecewise | constant   (sface only)
             s=64  k=80  a=0.9  b=1.2                   (sface)
             m=0.35 (cosface) / 0.5 (arcface)  m1=1.0  m2=0.3  m3=0.2 (combined)
  [train]    backbone=\"free-embedding\" | linear  batch_size=64  total_steps=2000
             lr=0.1  lr_decay_steps=[50%, 75% of total_steps]  lr_decay_factor=0.1
             seed=<dataset.seed>  snapshot_every=0 (0 = once per epoch)
  [curves]   points=1001  num_classes=10  reference_angle=pi/2  output=<out_dir>/curves.csv
  [check]    n=8  c=5  d=16  seed=11  instances=10  step=1e-6
             tolerance=<1e-5 gradcheck; 1e-10 nsoftmax/cosface, 1e-9 otherwise for equivalence>
             margins=[\"nsoftmax\", \"cosface\", \"arcface\"]   (gradcheck)
  [sweep]    a_values=[0.80, 0.82, 0.84]  b=1.28  seeds=[1]
             noise_levels=[[0.0, 0.0], [0.1, 0.0], [0.1, 0.1]]   ([flip_rate, outlier_rate])
             baselines=[{ kind=\"cosface\", m=0.35 }, ...]   (same keys as [loss])
             clean_ceiling_deg=72.81                      (trade-off selection)
  [stats]    embeddings=<out_dir>/embeddings.csv  centers=<out_dir>/centers.csv

OUTPUTS
  curves       curves.csv
  gradcheck    gradcheck.csv
  equivalence  equivalence.csv (one record: variant,N,C,d,seed,max_relative_deviation)
  train        dataset.csv embeddings.csv centers.csv trace.csv diagnostics.csv
  sweep        sweep-<seed>.csv per seed
  stats        stats.csv

EXIT CODES  0 ok, 1 tolerance violation, 2 config error, 3 I/O error, 4 divergence";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("tolerance violated: {0}")]
    Tolerance(String),
    #[error("numerical divergence: {0}")]
    Diverged(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Tolerance(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => CliError::Io(e.to_string()),
            Error::NonFiniteLoss(_) | Error::DivergedLoss { .. } => CliError::Diverged(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sface", version, about = "Hypersphere loss experiments with CSV output", after_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tangent-speed curves v(theta) of a re-scale family or margin loss.
    #[command(after_help = CONFIG_KEYS)]
    Curves {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        #[arg(long)]
        points: Option<usize>,
        /// Output file (default `<out_dir>/curves.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Analytic gradients vs. central finite differences.
    #[command(after_help = CONFIG_KEYS)]
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        #[command(flatten)]
        check: CheckFlags,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Chain-rule vs. metric-form gradients of a margin loss.
    #[command(after_help = CONFIG_KEYS)]
    Equivalence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        #[command(flatten)]
        check: CheckFlags,
    },
    /// Train on a synthetic noisy dataset.
    #[command(after_help = CONFIG_KEYS)]
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Noise-level x cutoff sweep with angle statistics.
    #[command(after_help = CONFIG_KEYS)]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Angle statistics of saved embeddings and centers.
    #[command(after_help = CONFIG_KEYS)]
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        centers: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for every random stream of the command.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct LossFlags {
    /// sface, softmax, nsoftmax, cosface, arcface or combined.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    family: Option<RescaleFamily>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
}

#[derive(Debug, Args)]
struct CheckFlags {
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    flip_rate: Option<f64>,
    #[arg(long)]
    outlier_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    out_dir: Option<PathBuf>,
    dataset: DatasetSpec,
    loss: LossSection,
    train: TrainSection,
    curves: CurvesSection,
    check: CheckSection,
    sweep: SweepSection,
    stats: StatsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LossSection {
    kind: String,
    family: RescaleFamily,
    s: f64,
    k: f64,
    a: f64,
    b: f64,
    m: Option<f64>,
    m1: f64,
    m2: f64,
    m3: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            kind: "sface".into(),
            family: RescaleFamily::Sigmoid,
            s: DEFAULT_SCALE,
            k: DEFAULT_SLOPE,
            a: 0.9,
            b: 1.2,
            m: None,
            m1: 1.0,
            m2: 0.3,
            m3: 0.2,
        }
    }
}

impl LossSection {
    fn to_loss(&self) -> CliResult<LossConfig> {
        let loss = if self.kind == "sface" {
            LossConfig::SFace(RescaleSpec {
                family: self.family,
                s: self.s,
                k: self.k,
                a: self.a,
                b: self.b,
            })
        } else {
            LossConfig::Margin(margin_spec(
                self.kind.parse()?,
                self.s,
                self.m,
                (self.m1, self.m2, self.m3),
            ))
        };
        loss.validate()?;
        Ok(loss)
    }

    fn apply(&mut self, f: &LossFlags) {
        if let Some(v) = &f.loss {
            self.kind.clone_from(v);
        }
        set(&mut self.family, f.family);
        set(&mut self.s, f.s);
        set(&mut self.k, f.k);
        set(&mut self.a, f.a);
        set(&mut self.b, f.b);
        if f.m.is_some() {
            self.m = f.m;
        }
    }
}

fn margin_spec(variant: MarginVariant, s: f64, m: Option<f64>, combined: (f64, f64, f64)) -> MarginSpec {
    match variant {
        MarginVariant::Softmax => MarginSpec::softmax(),
        MarginVariant::NSoftmax => MarginSpec::nsoftmax(s),
        MarginVariant::CosFace => MarginSpec::cosface(s, m.unwrap_or(0.35)),
        MarginVariant::ArcFace => MarginSpec::arcface(s, m.unwrap_or(0.5)),
        MarginVariant::Combined => MarginSpec::combined(s, combined.0, combined.1, combined.2),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    backbone: Backbone,
    batch_size: usize,
    total_steps: usize,
    lr: f64,
    lr_decay_steps: Option<Vec<usize>>,
    lr_decay_factor: f64,
    seed: Option<u64>,
    snapshot_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            backbone: Backbone::FreeEmbedding,
            batch_size: 64,
            total_steps: 2000,
            lr: 0.1,
            lr_decay_steps: None,
            lr_decay_factor: 0.1,
            seed: None,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CurvesSection {
    points: usize,
    num_classes: usize,
    reference_angle: f64,
    output: Option<PathBuf>,
}

impl Default for CurvesSection {
    fn default() -> Self {
        CurvesSection {
            points: 1001,
            num_classes: 10,
            reference_angle: std::f64::consts::FRAC_PI_2,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CheckSection {
    n: usize,
    c: usize,
    d: usize,
    seed: u64,
    instances: usize,
    step: f64,
    tolerance: Option<f64>,
    margins: Vec<MarginVariant>,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            n: 8,
            c: 5,
            d: 16,
            seed: 11,
            instances: 10,
            step: DEFAULT_STEP,
            tolerance: None,
            margins: vec![MarginVariant::NSoftmax, MarginVariant::CosFace, MarginVariant::ArcFace],
        }
    }
}

impl CheckSection {
    fn apply(&mut self, f: &CheckFlags) {
        set(&mut self.instances, f.instances);
        if f.tolerance.is_some() {
            self.tolerance = f.tolerance;
        }
    }

    fn validate(&self) -> CliResult<()> {
        if self.instances == 0 {
            return Err(CliError::Config("check.instances must be positive".into()));
        }
        if let Some(t) = self.tolerance {
            if t.is_nan() || t <= 0.0 {
                return Err(CliError::Config("check.tolerance must be positive".into()));
            }
        }
        Ok(())
    }

    /// Seed of instance `i`.
    fn instance_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepSection {
    a_values: Vec<f64>,
    b: f64,
    noise_levels: Vec<[f64; 2]>,
    seeds: Vec<u64>,
    baselines: Vec<LossSection>,
    clean_ceiling_deg: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            a_values: vec![0.80, 0.82, 0.84],
            b: 1.28,
            noise_levels: vec![[0.0, 0.0], [0.1, 0.0], [0.1, 0.1]],
            seeds: vec![1],
            baselines: Vec::new(),
            clean_ceiling_deg: (std::f64::consts::FRAC_PI_2 - 0.3).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StatsSection {
    embeddings: Option<PathBuf>,
    centers: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = common.seed {
        cfg.dataset.seed = seed;
        cfg.train.seed = Some(seed);
        cfg.check.seed = seed;
        cfg.sweep.seeds = vec![seed];
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(std::env::var_os(OUT_DIR_ENV).map_or_else(|| DEFAULT_OUT_DIR.into(), PathBuf::from));
    }
    Ok(cfg)
}

impl RunConfig {
    fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().expect("resolved in load_config")
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    fn apply_train_flags(&mut self, f: &TrainFlags) {
        set(&mut self.train.total_steps, f.steps);
        set(&mut self.train.lr, f.lr);
        set(&mut self.train.batch_size, f.batch_size);
        set(&mut self.dataset.flip_rate, f.flip_rate);
        set(&mut self.dataset.outlier_rate, f.outlier_rate);
    }

    fn train_config(&self, loss: LossConfig) -> CliResult<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            loss,
            backbone: t.backbone,
            batch_size: t.batch_size,
            total_steps: t.total_steps,
            lr: t.lr,
            lr_decay_steps: t
                .lr_decay_steps
                .clone()
                .unwrap_or_else(|| default_decay_steps(t.total_steps)),
            lr_decay_factor: t.lr_decay_factor,
            seed: t.seed.unwrap_or(self.dataset.seed),
            snapshot_every: t.snapshot_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Open `path` for writing (creating parent directories), run `body`, flush.
fn write_file<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> crate::Result<()>,
{
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).map_err(|e| match e {
        Error::Io(e) => io_err(e),
        other => CliError::Io(format!("{}: {other}", path.display())),
    })?;
    w.flush().map_err(io_err)
}

fn cmd_curves(common: &Common, flags: &LossFlags, points: Option<usize>, output: Option<&Path>) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    cfg.loss.apply(flags);
    set(&mut cfg.curves.points, points);
    let curve = match cfg.loss.to_loss()? {
        LossConfig::SFace(spec) => v_curves(&spec, cfg.curves.points)?,
        LossConfig::Margin(spec) => margin_v_curves(
            &spec,
            cfg.curves.num_classes,
            cfg.curves.reference_angle,
            cfg.curves.points,
        )?,
    };
    let path = output
        .map(Path::to_path_buf)
        .or(cfg.curves.output.clone())
        .unwrap_or_else(|| cfg.out_path("curves.csv"));
    write_file(&path, |w| csvio::write_curves(w, &curve))?;
    println!("wrote {} points to {}", curve.len(), path.display());
    Ok(())
}

fn cmd_gradcheck(common: &Common, flags: &LossFlags, check: &CheckFlags, step: Option<f64>) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    cfg.loss.apply(flags);
    cfg.check.apply(check);
    set(&mut cfg.check.step, step);
    cfg.check.validate()?;
    let tolerance = cfg.check.tolerance.unwrap_or(DEFAULT_GRADCHECK_TOLERANCE);
    let sface = match cfg.loss.to_loss()? {
        LossConfig::SFace(spec) => spec,
        LossConfig::Margin(_) => LossSection::default()
            .to_loss()?
            .rescale()
            .copied()
            .expect("sface default"),
    };
    let margins: Vec<MarginSpec> = cfg
        .check
        .margins
        .iter()
        .map(|&v| margin_spec(v, cfg.loss.s, None, (cfg.loss.m1, cfg.loss.m2, cfg.loss.m3)))
        .collect();

    let ck = &cfg.check;
    let mut rows = Vec::new();
    for i in 0..ck.instances {
        let (batch, centers) = random_instance(ck.n, ck.c, ck.d, ck.instance_seed(i))?;
        let r = check_sface(&batch, &centers, &sface, ck.step)?;
        rows.push((format!("sface-{}", sface.family.name()), i, r));
        for m in &margins {
            let r = check_margin(&batch, &centers, m, ck.step)?;
            rows.push((m.variant.name().to_string(), i, r));
        }
    }
    let path = cfg.out_path("gradcheck.csv");
    write_file(&path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["loss", "instance", "grad_x_deviation", "grad_w_deviation"])?;
        for (name, i, r) in &rows {
            out.write_record([
                name.clone(),
                i.to_string(),
                csvio::fmt_f64(r.grad_x),
                csvio::fmt_f64(r.grad_w),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let worst = rows.iter().map(|(_, _, r)| r.max()).fold(0.0, f64::max);
    println!(
        "max relative error: {worst:.3e} (tolerance {tolerance:e}, {} checks)",
        rows.len()
    );
    if worst > tolerance {
        return Err(CliError::Tolerance(format!("{worst:e} > {tolerance:e}")));
    }
    Ok(())
}

/// Default equivalence tolerance for a variant.
pub fn equivalence_tolerance(variant: MarginVariant) -> f64 {
    match variant {
        MarginVariant::NSoftmax | MarginVariant::CosFace => 1e-10,
        _ => 1e-9,
    }
}

fn cmd_equivalence(common: &Common, flags: &LossFlags, check: &CheckFlags) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    cfg.loss.apply(flags);
    cfg.check.apply(check);
    cfg.check.validate()?;
    let spec = match cfg.loss.to_loss()? {
        LossConfig::Margin(m) => m,
        LossConfig::SFace(_) => {
            return Err(CliError::Config(
                "equivalence needs a margin loss (set loss.kind or --loss)".into(),
            ))
        }
    };
    let ck = &cfg.check;
    let mut worst: f64 = 0.0;
    for i in 0..ck.instances {
        let (batch, centers) = random_instance(ck.n, ck.c, ck.d, ck.instance_seed(i))?;
        worst = worst.max(equivalence_report(&batch, &centers, &spec)?);
    }
    let record = EquivalenceRecord {
        variant: spec.variant,
        n: ck.n,
        c: ck.c,
        d: ck.d,
        seed: ck.seed,
        max_relative_deviation: worst,
    };
    let path = cfg.out_path("equivalence.csv");
    write_file(&path, |w| csvio::write_equivalence(w, &record))?;
    let tolerance = ck.tolerance.unwrap_or_else(|| equivalence_tolerance(spec.variant));
    println!(
        "{}: max relative deviation {worst:.3e} over {} instances (tolerance {tolerance:e})",
        spec.variant.name(),
        ck.instances
    );
    if worst > tolerance {
        return Err(CliError::Tolerance(format!("{worst:e} > {tolerance:e}")));
    }
    Ok(())
}

fn cmd_train(common: &Common, flags: &LossFlags, tflags: &TrainFlags) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    cfg.loss.apply(flags);
    cfg.apply_train_flags(tflags);
    let loss = cfg.loss.to_loss()?;
    let train_cfg = cfg.train_config(loss)?;
    let data = generate(&cfg.dataset)?;
    let out = crate::trainer::train(&data, &train_cfg)?;
    let report = loss.backward(&out.embeddings, &out.centers)?;

    write_file(&cfg.out_path("dataset.csv"), |w| csvio::write_dataset(w, &data))?;
    write_file(&cfg.out_path("embeddings.csv"), |w| {
        csvio::write_samples(w, &out.embeddings, &data.true_labels, &data.noise_mask)
    })?;
    write_file(&cfg.out_path("centers.csv"), |w| csvio::write_centers(w, &out.centers))?;
    write_file(&cfg.out_path("trace.csv"), |w| csvio::write_trace(w, &out.trace))?;
    write_file(&cfg.out_path("diagnostics.csv"), |w| {
        csvio::write_diagnostics(w, &out.embeddings, &report)
    })?;
    let last = out.final_snapshot();
    println!(
        "{} steps={} loss={:.6} clean_intra={:.3} deg inter={:.3} deg max_norm_drift={:.3e}",
        loss.label(),
        last.step,
        last.loss,
        last.clean_intra_deg,
        last.inter_deg,
        last.max_norm_drift
    );
    Ok(())
}

fn cmd_sweep(common: &Common, tflags: &TrainFlags) -> CliResult<()> {
    let mut cfg = load_config(common)?;
    cfg.apply_train_flags(tflags);
    let sw = cfg.sweep.clone();
    if sw.seeds.is_empty() || sw.noise_levels.is_empty() || sw.a_values.is_empty() {
        return Err(CliError::Config("sweep needs seeds, noise_levels and a_values".into()));
    }
    let base = cfg.loss.to_loss()?;
    let base = base.rescale().copied().unwrap_or_default();
    let baselines = sw
        .baselines
        .iter()
        .map(LossSection::to_loss)
        .collect::<CliResult<Vec<_>>>()?;

    let mut per_seed = Vec::new();
    for &seed in &sw.seeds {
        let mut entries = Vec::new();
        for &[flip_rate, outlier_rate] in &sw.noise_levels {
            let dataset = DatasetSpec {
                flip_rate,
                outlier_rate,
                seed,
                ..cfg.dataset
            };
            dataset.validate()?;
            let losses = sw
                .a_values
                .iter()
                .map(|&a| LossConfig::SFace(RescaleSpec { a, b: sw.b, ..base }))
                .chain(baselines.iter().copied());
            for loss in losses {
                let mut train = cfg.train_config(loss)?;
                train.seed = seed;
                entries.push(SweepEntry { dataset, train });
            }
        }
        per_seed.push((seed, entries));
    }

    let mut results: Vec<(u64, Vec<SweepRow>)> = Vec::new();
    for (seed, entries) in &per_seed {
        results.push((*seed, noise_sweep(entries)?));
    }
    for (seed, rows) in &results {
        write_file(&cfg.out_path(&format!("sweep-{seed}.csv")), |w| {
            csvio::write_sweep(w, rows)
        })?;
        let picks: Vec<String> = best_tradeoff(rows, sw.clean_ceiling_deg)
            .into_iter()
            .map(|(level, a)| format!("{level}:{}", a.map_or("-".into(), |a| format!("{a}"))))
            .collect();
        println!("seed {seed}: best a per noise level {}", picks.join(" "));
    }
    Ok(())
}

fn cmd_stats(common: &Common, embeddings: Option<&Path>, centers: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let emb_path = embeddings
        .map(Path::to_path_buf)
        .or(cfg.stats.embeddings.clone())
        .unwrap_or_else(|| cfg.out_path("embeddings.csv"));
    let ctr_path = centers
        .map(Path::to_path_buf)
        .or(cfg.stats.centers.clone())
        .unwrap_or_else(|| cfg.out_path("centers.csv"));
    let open = |p: &Path| File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())));
    let samples = csvio::read_dataset(open(&emb_path)?)?;
    let ctrs = csvio::read_centers(open(&ctr_path)?)?;
    let stats = angle_stats(&samples.inputs, &ctrs, &samples.noise_mask)?;
    write_file(&cfg.out_path("stats.csv"), |w| csvio::write_stats(w, &stats))?;
    println!(
        "clean_intra={:.3} noisy_intra={} inter={:.3}±{:.3} deg",
        stats.clean_intra_mean,
        stats.noise_intra_mean.map_or("-".into(), |v| format!("{v:.3}")),
        stats.inter_mean,
        stats.inter_std
    );
    Ok(())
}

/// Parse `args` (including the program name), run the command, and return
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Curves {
            common,
            loss,
            points,
            output,
        } => cmd_curves(common, loss, *points, output.as_deref()),
        Command::Gradcheck {
            common,
            loss,
            check,
            step,
        } => cmd_gradcheck(common, loss, check, *step),
        Command::Equivalence { common, loss, check } => cmd_equivalence(common, loss, check),
        Command::Train { common, loss, train } => cmd_train(common, loss, train),
        Command::Sweep { common, train } => cmd_sweep(common, train),
        Command::Stats {
            common,
            embeddings,
            centers,
        } => cmd_stats(common, embeddings.as_deref(), centers.as_deref()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sface: {e}");
            e.exit_code()
        }
    }
}
