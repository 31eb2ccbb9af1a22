//! Command-line front end: `gen-data`, `train`, `eval` and `compare`.
//!
//! Configuration is a flat `key = value` file layered under command-line
//! overrides. Every output directory receives `config.txt`, the effective
//! configuration, which reproduces the run when passed back via `--config`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
//! 4 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evalbench::{ab_compare, evaluate, AbReport, EvalReport, EvalSettings, Experiment};
use crate::losses::{LossSpec, LossVariant};
use crate::memory::PrototypeMemory;
use crate::protogen::Estimator;
use crate::synthdata::{make_dataset, make_world, Dataset, WorldConfig};
use crate::trainer::{run_training, write_log, Encoder, LrSchedule, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const DATASET_FILE: &str = "dataset.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train.log.jsonl";
pub const ENCODER_FILE: &str = "encoder.bin";
pub const MEMORY_FILE: &str = "memory.bin";
pub const REPORT_FILE: &str = "report.json";
pub const COMPARE_FILE: &str = "compare.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_ECHO_FILE: &str = "config.txt";

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        Error::NumericFailure { .. } | Error::NonFinite(_) | Error::DegenerateVector { .. } => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Hard selection applies to the recognizability estimator only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Soft,
    Hard,
}

/// Every setting of every subcommand. Loss hyperparameters left as `None`
/// take the standard values of the selected variant; a `None` learning-rate
/// schedule is `LrSchedule::step_decay(train.lr, train.steps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub images_per_identity: usize,
    pub unrecognizable_pool: usize,
    pub estimator: Estimator,
    pub selection: Selection,
    pub loss: LossVariant,
    pub margin: Option<f64>,
    pub scale: Option<f64>,
    pub sigma: Option<f64>,
    pub batch_classes: usize,
    pub images_per_class: usize,
    pub steps: u64,
    pub lr: f64,
    pub lr_schedule: Option<LrSchedule>,
    pub train_prototypes: bool,
    pub ui_class_images: usize,
    pub memory_capacity: usize,
    pub refresh_ratio: f64,
    pub ui_period: u64,
    pub ui_pool_batch: usize,
    pub eval_pairs: usize,
    pub eval_images_per_identity: usize,
    pub eval_corruption_rate: Option<f64>,
    pub compare_seeds: usize,
    pub compare_base: Estimator,
    pub compare_variant: Estimator,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = Experiment::default();
        let train = exp.train;
        Self {
            seed: 0,
            world: exp.world,
            images_per_identity: exp.images_per_identity,
            unrecognizable_pool: exp.unrecognizable_pool,
            estimator: train.estimator,
            selection: Selection::Soft,
            loss: train.loss.variant,
            margin: None,
            scale: None,
            sigma: None,
            batch_classes: train.batch_classes,
            images_per_class: train.images_per_class,
            steps: train.total_steps,
            lr: 0.1,
            lr_schedule: None,
            train_prototypes: train.train_prototypes,
            ui_class_images: train.ui_class_images,
            memory_capacity: train.memory_capacity,
            refresh_ratio: train.refresh_ratio,
            ui_period: train.ui_period,
            ui_pool_batch: train.ui_pool_batch,
            eval_pairs: exp.eval.num_pairs,
            eval_images_per_identity: exp.eval.test_images_per_identity,
            eval_corruption_rate: exp.eval.test_corruption_rate,
            compare_seeds: 10,
            compare_base: Estimator::Plain,
            compare_variant: Estimator::RecogSoft,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_estimator(key: &str, value: &str) -> Result<Estimator> {
    value.parse().map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::config(format!("{key}: {msg}")),
        other => other,
    })
}

/// `step:lr` pairs separated by commas, e.g. `0:0.1,1000:0.01`.
pub fn parse_lr_schedule(value: &str) -> Result<LrSchedule> {
    let key = "train.lr_schedule";
    let entries = value
        .split(',')
        .map(|part| {
            let (step, lr) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::config(format!("{key}: expected step:lr, got {part:?}")))?;
            Ok((parse_num(key, step.trim())?, parse_num(key, lr.trim())?))
        })
        .collect::<Result<Vec<_>>>()?;
    LrSchedule::new(entries)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "world.num_identities" => self.world.num_identities = parse_num(key, v)?,
            "world.dim" => self.world.dim = parse_num(key, v)?,
            "world.obs_dim" => self.world.obs_dim = parse_num(key, v)?,
            "world.noise_kappa" => self.world.noise_kappa = parse_num(key, v)?,
            "world.nuisance_scale" => self.world.nuisance_scale = parse_num(key, v)?,
            "world.obs_noise" => self.world.obs_noise = parse_num(key, v)?,
            "world.corruption_rate" => self.world.corruption_rate = parse_num(key, v)?,
            "world.strength_min" => self.world.strength_min = parse_num(key, v)?,
            "world.strength_max" => self.world.strength_max = parse_num(key, v)?,
            "data.images_per_identity" => self.images_per_identity = parse_num(key, v)?,
            "data.unrecognizable_pool" => self.unrecognizable_pool = parse_num(key, v)?,
            "train.estimator" => self.estimator = parse_estimator(key, v)?,
            "train.selection" => {
                self.selection = match v {
                    "soft" => Selection::Soft,
                    "hard" => Selection::Hard,
                    _ => return Err(Error::config(format!("{key}: expected soft or hard, got {v:?}"))),
                }
            }
            "train.batch_classes" => self.batch_classes = parse_num(key, v)?,
            "train.images_per_class" => self.images_per_class = parse_num(key, v)?,
            "train.steps" => self.steps = parse_num(key, v)?,
            "train.lr" => self.lr = parse_num(key, v)?,
            "train.lr_schedule" => {
                self.lr_schedule = if v == "auto" { None } else { Some(parse_lr_schedule(v)?) }
            }
            "train.train_prototypes" => self.train_prototypes = parse_bool(key, v)?,
            "train.ui_class_images" => self.ui_class_images = parse_num(key, v)?,
            "loss.variant" => {
                self.loss = v.parse().map_err(|_| Error::config(format!("{key}: unknown loss {v:?}")))?
            }
            "loss.margin" => self.margin = parse_opt_f64(key, v)?,
            "loss.scale" => self.scale = parse_opt_f64(key, v)?,
            "loss.sigma" => self.sigma = parse_opt_f64(key, v)?,
            "memory.capacity" => self.memory_capacity = parse_num(key, v)?,
            "memory.refresh_ratio" => self.refresh_ratio = parse_num(key, v)?,
            "memory.ui_period" => self.ui_period = parse_num(key, v)?,
            "memory.ui_pool_batch" => self.ui_pool_batch = parse_num(key, v)?,
            "eval.num_pairs" => self.eval_pairs = parse_num(key, v)?,
            "eval.images_per_identity" => self.eval_images_per_identity = parse_num(key, v)?,
            "eval.corruption_rate" => {
                self.eval_corruption_rate = if v == "world" { None } else { Some(parse_num(key, v)?) }
            }
            "compare.seeds" => self.compare_seeds = parse_num(key, v)?,
            "compare.base_estimator" => self.compare_base = parse_estimator(key, v)?,
            "compare.variant_estimator" => self.compare_variant = parse_estimator(key, v)?,
            _ => return Err(Error::config(format!("{key}: unknown configuration key"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment, later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let w = &self.world;
        let est = |e: Estimator| e.name().to_string();
        vec![
            ("seed", self.seed.to_string()),
            ("world.num_identities", w.num_identities.to_string()),
            ("world.dim", w.dim.to_string()),
            ("world.obs_dim", w.obs_dim.to_string()),
            ("world.noise_kappa", w.noise_kappa.to_string()),
            ("world.nuisance_scale", w.nuisance_scale.to_string()),
            ("world.obs_noise", w.obs_noise.to_string()),
            ("world.corruption_rate", w.corruption_rate.to_string()),
            ("world.strength_min", w.strength_min.to_string()),
            ("world.strength_max", w.strength_max.to_string()),
            ("data.images_per_identity", self.images_per_identity.to_string()),
            ("data.unrecognizable_pool", self.unrecognizable_pool.to_string()),
            ("train.estimator", est(self.estimator)),
            (
                "train.selection",
                match self.selection {
                    Selection::Soft => "soft".into(),
                    Selection::Hard => "hard".into(),
                },
            ),
            ("train.batch_classes", self.batch_classes.to_string()),
            ("train.images_per_class", self.images_per_class.to_string()),
            ("train.steps", self.steps.to_string()),
            ("train.lr", self.lr.to_string()),
            (
                "train.lr_schedule",
                self.lr_schedule.as_ref().map_or_else(
                    || "auto".to_string(),
                    |s| s.entries().iter().map(|(t, lr)| format!("{t}:{lr}")).collect::<Vec<_>>().join(","),
                ),
            ),
            ("train.train_prototypes", self.train_prototypes.to_string()),
            ("train.ui_class_images", self.ui_class_images.to_string()),
            ("loss.variant", self.loss.name().to_string()),
            ("loss.margin", fmt_opt(self.margin)),
            ("loss.scale", fmt_opt(self.scale)),
            ("loss.sigma", fmt_opt(self.sigma)),
            ("memory.capacity", self.memory_capacity.to_string()),
            ("memory.refresh_ratio", self.refresh_ratio.to_string()),
            ("memory.ui_period", self.ui_period.to_string()),
            ("memory.ui_pool_batch", self.ui_pool_batch.to_string()),
            ("eval.num_pairs", self.eval_pairs.to_string()),
            ("eval.images_per_identity", self.eval_images_per_identity.to_string()),
            ("eval.corruption_rate", self.eval_corruption_rate.map_or_else(|| "world".into(), |r| r.to_string())),
            ("compare.seeds", self.compare_seeds.to_string()),
            ("compare.base_estimator", est(self.compare_base)),
            ("compare.variant_estimator", est(self.compare_variant)),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# effective qapm configuration\n");
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Estimator after folding in `train.selection`.
    pub fn resolved_estimator(&self) -> Result<Estimator> {
        resolve_selection(self.estimator, self.selection)
    }

    pub fn loss_spec(&self) -> LossSpec {
        let mut spec = LossSpec::standard(self.loss);
        if let Some(m) = self.margin {
            spec.margin = m;
        }
        if let Some(s) = self.scale {
            spec.scale = s;
        }
        if let Some(s) = self.sigma {
            spec.sigma = s;
        }
        spec
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig { seed: self.seed, ..self.world.clone() }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            estimator: self.resolved_estimator()?,
            loss: self.loss_spec(),
            batch_classes: self.batch_classes,
            images_per_class: self.images_per_class,
            memory_capacity: self.memory_capacity,
            refresh_ratio: self.refresh_ratio,
            ui_period: self.ui_period,
            ui_pool_batch: self.ui_pool_batch,
            lr_schedule: self
                .lr_schedule
                .clone()
                .unwrap_or_else(|| LrSchedule::step_decay(self.lr, self.steps)),
            total_steps: self.steps,
            seed: self.seed,
            train_prototypes: self.train_prototypes,
            ui_class_images: self.ui_class_images,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            num_pairs: self.eval_pairs,
            test_images_per_identity: self.eval_images_per_identity,
            test_corruption_rate: self.eval_corruption_rate,
            seed: self.seed,
        }
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let world = self.world_config();
        world.validate()?;
        Ok(Experiment {
            world,
            images_per_identity: self.images_per_identity,
            unrecognizable_pool: self.unrecognizable_pool,
            train: self.train_config()?,
            eval: self.eval_settings(),
        })
    }
}

fn resolve_selection(estimator: Estimator, selection: Selection) -> Result<Estimator> {
    match (estimator, selection) {
        (e, Selection::Soft) => Ok(e),
        (Estimator::RecogSoft | Estimator::RecogHard, Selection::Hard) => Ok(Estimator::RecogHard),
        (e, Selection::Hard) => Err(Error::config(format!(
            "train.selection: hard selection is not defined for estimator {e}"
        ))),
    }
}

#[derive(Debug, Parser)]
#[command(name = "qapm", version, about = "Prototype Memory experiments on a synthetic identity world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and its manifest.
    GenData(CommonArgs),
    /// Train an encoder on a generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file; defaults to <out>/dataset.txt.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate trained checkpoints on a held-out set.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding encoder.bin and memory.bin; defaults to <out>.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Paired comparison of two estimators over shared seeds.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Variant configuration file; must differ from the base only in
        /// train.estimator.
        #[arg(long)]
        variant_config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Repeat the comparison for every loss variant.
        #[arg(long)]
        loss_grid: bool,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Override any configuration key, e.g. `--set world.corruption_rate=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn io_context(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_context(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_context(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_context(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

impl CommonArgs {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    pub fn resolve(&self, file: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_text(&read_text(path)?)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(e) = &self.estimator {
            cfg.set("train.estimator", e)?;
        }
        if let Some(l) = &self.loss {
            cfg.set("loss.variant", l)?;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        Ok(cfg)
    }

    fn prepare_out(&self, cfg: &RunConfig) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| io_context(&self.out, e))?;
        write_bytes(&self.out.join(CONFIG_ECHO_FILE), cfg.to_text().as_bytes())
    }
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let exp = cfg.experiment()?;
    let world = make_world(&exp.world)?;
    let (dataset, manifest) = make_dataset(&world, &exp.dataset_spec())?;
    let mut w = create(&out.join(DATASET_FILE))?;
    dataset.write_to(&mut w)?;
    w.flush()?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "identities {} samples {} corrupted {} unrecognizable {}",
        manifest.num_identities, manifest.num_samples, manifest.num_corrupted, manifest.num_unrecognizable
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).map_err(|e| io_context(path, e))?;
    Dataset::read_from(BufReader::new(f))
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let exp = cfg.experiment()?;
    let dataset = load_dataset(data)?;
    let outcome = run_training(&exp.train, &dataset)?;
    let mut log = create(&out.join(TRAIN_LOG_FILE))?;
    write_log(&outcome.log, &mut log)?;
    log.flush()?;
    write_bytes(&out.join(ENCODER_FILE), &outcome.encoder.to_bytes())?;
    write_bytes(&out.join(MEMORY_FILE), &outcome.memory.to_bytes())?;
    match (outcome.log.first(), outcome.log.last()) {
        (Some(first), Some(last)) => println!(
            "steps {} loss {:.4} -> {:.4} memory {}",
            outcome.log.len(),
            first.loss,
            last.loss,
            last.memory_size
        ),
        _ => println!("steps 0"),
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> Result<EvalReport> {
    let exp = cfg.experiment()?;
    let enc_path = checkpoint.join(ENCODER_FILE);
    let mem_path = checkpoint.join(MEMORY_FILE);
    let encoder = Encoder::read_from(File::open(&enc_path).map_err(|e| io_context(&enc_path, e))?)?;
    let memory = PrototypeMemory::read_from(File::open(&mem_path).map_err(|e| io_context(&mem_path, e))?)?;
    let dataset = load_dataset(data)?;
    let h = &dataset.header;
    let w = &exp.world;
    for (key, have, want) in [
        ("world.dim", h.dim as u64, w.dim as u64),
        ("world.obs_dim", h.obs_dim as u64, w.obs_dim as u64),
        ("world.num_identities", h.num_identities as u64, w.num_identities as u64),
        ("seed", h.seed, w.seed),
    ] {
        if have != want {
            return Err(Error::config(format!("{key}: dataset has {have}, configuration has {want}")));
        }
    }
    let world = make_world(w)?;
    let report = evaluate(&encoder, &memory, &world, &exp.eval, &cfg.to_text())?;
    write_json(&out.join(REPORT_FILE), &report)?;
    println!(
        "verification {:.4} top1 {:.4} placement {:.3} deg auc {:.4}",
        report.verification_accuracy,
        report.identification_top1,
        report.mean_prototype_angle_deg,
        report.estimator_auc
    );
    Ok(report)
}

fn write_compare(report: &AbReport, dir: &Path) -> Result<()> {
    let mut w = create(&dir.join(COMPARE_FILE))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&dir.join(SUMMARY_FILE), report)
}

/// Runs the comparison; with `loss_grid`, once per loss variant into
/// `<out>/<loss>/` plus a combined summary.
pub fn cmd_compare(
    base: &Experiment,
    variant: &Experiment,
    seeds: &[u64],
    loss_grid: bool,
    out: &Path,
) -> Result<()> {
    if !loss_grid {
        let report = ab_compare(base, variant, seeds)?;
        write_compare(&report, out)?;
        print_compare(&report);
        return Ok(());
    }
    let mut combined = BTreeMap::new();
    for variant_loss in LossVariant::ALL {
        let spec = LossSpec::standard(variant_loss);
        let (mut b, mut v) = (base.clone(), variant.clone());
        b.train.loss = spec;
        v.train.loss = spec;
        let report = ab_compare(&b, &v, seeds)?;
        let dir = out.join(variant_loss.name());
        fs::create_dir_all(&dir).map_err(|e| io_context(&dir, e))?;
        write_compare(&report, &dir)?;
        println!("[{}]", variant_loss.name());
        print_compare(&report);
        combined.insert(variant_loss.name().to_string(), report.summary);
    }
    write_json(&out.join(SUMMARY_FILE), &combined)
}

fn print_compare(report: &AbReport) {
    for (metric, s) in &report.summary {
        println!(
            "{metric}: mean delta {:+.5} wins {} ties {} losses {}",
            s.mean_delta, s.wins, s.ties, s.losses
        );
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = common.resolve(common.config.as_deref())?;
            cfg.experiment()?;
            common.prepare_out(&cfg)?;
            cmd_gen_data(&cfg, &common.out)
        }
        Command::Train { common, data } => {
            let cfg = common.resolve(common.config.as_deref())?;
            cfg.experiment()?;
            common.prepare_out(&cfg)?;
            let data = data.unwrap_or_else(|| common.out.join(DATASET_FILE));
            cmd_train(&cfg, &data, &common.out)
        }
        Command::Eval { common, data, checkpoint } => {
            let cfg = common.resolve(common.config.as_deref())?;
            cfg.experiment()?;
            common.prepare_out(&cfg)?;
            let data = data.unwrap_or_else(|| common.out.join(DATASET_FILE));
            let checkpoint = checkpoint.unwrap_or_else(|| common.out.clone());
            cmd_eval(&cfg, &data, &checkpoint, &common.out).map(|_| ())
        }
        Command::Compare { common, variant_config, seeds, loss_grid } => {
            let mut cfg = common.resolve(common.config.as_deref())?;
            if let Some(n) = seeds {
                cfg.compare_seeds = n;
            }
            let (base, variant) = match &variant_config {
                Some(path) => {
                    let mut vcfg = common.resolve(Some(path))?;
                    vcfg.compare_seeds = cfg.compare_seeds;
                    let (b, v) = (cfg.experiment()?, vcfg.experiment()?);
                    let mut probe = v.clone();
                    probe.train.estimator = b.train.estimator;
                    if probe != b {
                        return Err(Error::config(
                            "compare: base and variant configurations may differ only in train.estimator",
                        ));
                    }
                    (b, v)
                }
                None => {
                    let mut b = cfg.clone();
                    b.estimator = cfg.compare_base;
                    let mut v = cfg.clone();
                    v.estimator = cfg.compare_variant;
                    (b.experiment()?, v.experiment()?)
                }
            };
            common.prepare_out(&cfg)?;
            let seeds: Vec<u64> = (0..cfg.compare_seeds as u64).map(|i| cfg.seed + i).collect();
            cmd_compare(&base, &variant, &seeds, loss_grid, &common.out)
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("world.corruption_rate", "0.3").unwrap();
        cfg.set("loss.margin", "0.35").unwrap();
        cfg.set("train.lr_schedule", "0:0.2, 10:0.02").unwrap();
        cfg.set("eval.corruption_rate", "0").unwrap();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(RunConfig::from_text(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn later_values_win_and_comments_are_ignored() {
        let cfg = RunConfig::from_text("seed = 3\n# seed = 9\nseed = 5 # trailing\n\n").unwrap();
        assert_eq!(cfg.seed, 5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_text("world.colour = 3").unwrap_err();
        assert!(err.to_string().contains("world.colour"));
        let err = RunConfig::from_text("world.dim").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn aliases_and_forbidden_pairing() {
        let mut cfg = RunConfig::default();
        for (name, want) in [
            ("none", Estimator::Plain),
            ("uniform", Estimator::Uniform),
            ("norm", Estimator::FeatureNorm),
            ("recog-soft", Estimator::RecogSoft),
            ("recog-hard", Estimator::RecogHard),
        ] {
            cfg.set("train.estimator", name).unwrap();
            assert_eq!(cfg.resolved_estimator().unwrap(), want);
        }
        cfg.set("train.estimator", "recog-soft").unwrap();
        cfg.set("train.selection", "hard").unwrap();
        assert_eq!(cfg.resolved_estimator().unwrap(), Estimator::RecogHard);
        cfg.set("train.estimator", "norm").unwrap();
        let err = cfg.train_config().unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG);
        assert!(err.to_string().contains("train.selection"));
        assert!(cfg.set("train.estimator", "norm-hard").is_err());
    }

    #[test]
    fn loss_overrides() {
        let mut cfg = RunConfig::default();
        cfg.set("loss.variant", "arcface").unwrap();
        assert_eq!(cfg.loss_spec(), LossSpec::arcface());
        cfg.set("loss.margin", "0.3").unwrap();
        assert_eq!(cfg.loss_spec().margin, 0.3);
        cfg.set("loss.margin", "auto").unwrap();
        assert_eq!(cfg.loss_spec().margin, 0.5);
    }

    #[test]
    fn default_schedule_follows_steps() {
        let cfg = RunConfig { steps: 500, ..RunConfig::default() };
        let t = cfg.train_config().unwrap();
        assert_eq!(t.lr_schedule.entries(), &[(0, 0.1), (250, 0.1 * 0.1), (375, 0.1 * 0.01)]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("x")), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NumericFailure { step: 3 }), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Io(io::Error::other("x"))), EXIT_IO);
    }
}
