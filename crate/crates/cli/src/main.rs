//! `pve`: collect datasets, train encoders, evaluate learned states and run
//! fitted-Q control from the command line.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pve_core::encoder::{Encoder, POSITION_DIM};
use pve_core::envs::{collect, Camera, Dataset, EnvConfig, Environment, Task, DATASET_MAGIC};
use pve_core::eval::{effective_dim, embed, pca, probe_embedding, write_probe_csv};
use pve_core::rl::{run_learning_curve, EncoderSource};
use pve_core::tensor::checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC};
use pve_core::trainer::{gradient_magnitude_report, train};

use config::{KvConfig, UsageError};
use manifest::RunManifest;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "pve", version, about = "Position-velocity encoders from pixels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file with a `version` key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set phase1_epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<KvConfig> {
        let base = match &self.config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        base.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate random-action trajectories and save them as a dataset.
    Collect {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "static")]
        camera: Camera,
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
        #[arg(long = "len", default_value_t = 20)]
        traj_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train an encoder on a dataset with the two-phase curriculum.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Must match the dataset's task when given.
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        seed: Option<u64>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write position and velocity states of every frame as CSV.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA of position states and regression probes to true features.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Fitted-Q learning curves on encoded states.
    Rl {
        #[arg(long, conflicts_with = "random_encoder", required_unless_present = "random_encoder")]
        ckpt: Option<PathBuf>,
        /// Use freshly initialized encoders as a baseline.
        #[arg(long)]
        random_encoder: bool,
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "static")]
        camera: Camera,
        /// Frame size for the random-encoder baseline.
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Velocity scale for the random-encoder baseline.
        #[arg(long, default_value_t = 10.0)]
        alpha: f32,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Per-prior encoder gradient norms on one batch.
    Gradreport {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the header of a dataset or the tensors of a checkpoint.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(pe) = cause.downcast_ref::<pve_core::Error>() {
            return match pe {
                pve_core::Error::Numeric(_) | pve_core::Error::Degenerate(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    1
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_encoder(path: &Path) -> anyhow::Result<(Encoder, f32)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Encoder::from_checkpoint(&ck).with_context(|| format!("rebuilding encoder from {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Collect {
            task,
            camera,
            n_traj,
            traj_len,
            seed,
            resolution,
            out,
            config,
        } => {
            let kv = config.load()?;
            let mut env_cfg = EnvConfig::default();
            if let Some(r) = kv.get("resolution")? {
                env_cfg.resolution = r;
            }
            if let Some(r) = resolution {
                env_cfg.resolution = r;
            }
            if let Some(dt) = kv.get("dt")? {
                env_cfg.dt = dt;
            }
            if let Some(s) = kv.get("substeps")? {
                env_cfg.substeps = s;
            }
            if env_cfg.resolution == 0 || env_cfg.substeps == 0 || !(env_cfg.dt > 0.0) {
                return Err(UsageError("resolution, substeps and dt must be positive".into()).into());
            }
            let mut m = RunManifest::start("collect");
            m.config = kv.entries().clone();
            m.config.insert("task".into(), task.to_string());
            m.config.insert("camera".into(), camera.name().into());
            m.config.insert("resolution".into(), env_cfg.resolution.to_string());
            m.seeds.insert("collect".into(), seed);
            let env = Environment::with_config(task, camera, env_cfg);
            let ds = m.time("collect", || collect(&env, n_traj, traj_len, seed))?;
            ds.save(&out).with_context(|| format!("writing {}", out.display()))?;
            m.output(&out);
            m.write(&sibling_manifest(&out))?;
            info!("wrote {} trajectories to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Train {
            dataset,
            out_dir,
            task,
            seed,
            init,
            config,
        } => {
            let mut kv = config.load()?;
            if let Some(s) = seed {
                kv.set("seed", s);
            }
            // all inputs are validated before anything is written
            let ds = load_dataset(&dataset)?;
            if let Some(t) = task {
                if t != ds.meta.task {
                    return Err(pve_core::Error::InvalidArgument(format!(
                        "dataset holds {} data, --task says {t}",
                        ds.meta.task
                    ))
                    .into());
                }
            }
            let cfg = kv.train_config(ds.meta.task)?;
            let encoder = match &init {
                Some(p) => load_encoder(p)?.0,
                None => Encoder::new(ds.meta.height, ds.meta.width, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?,
            };
            let mut m = RunManifest::start("train");
            m.config = kv.entries().clone();
            m.seeds.insert("train".into(), cfg.seed);
            m.input(&dataset)?;
            if let Some(p) = &init {
                m.input(p)?;
            }
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let outcome = m.time("train", || train(&ds, &cfg, encoder, Some(&out_dir)))?;
            let epochs_path = out_dir.join("epochs.csv");
            let mut w = create(&epochs_path)?;
            writeln!(w, "epoch,phase,alpha,mean_total,smoothed_total,skipped")?;
            for e in &outcome.epochs {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    e.epoch,
                    e.phase.name(),
                    e.alpha,
                    e.mean_total,
                    e.smoothed_total,
                    e.skipped
                )?;
            }
            w.flush()?;
            m.output(&out_dir.join("metrics.csv"));
            m.output(&epochs_path);
            for c in &outcome.checkpoints {
                m.output(c);
            }
            m.write(&out_dir.join("manifest.json"))?;
            if outcome.diverged {
                return Err(pve_core::Error::Numeric(
                    "training diverged; last finite parameters saved as last_good.pve".into(),
                )
                .into());
            }
            info!("trained {} epochs, final alpha {}", outcome.epochs.len(), outcome.alpha);
            Ok(())
        }
        Command::Embed { ckpt, data, out } => {
            let (encoder, alpha) = load_encoder(&ckpt)?;
            let ds = load_dataset(&data)?;
            let mut m = RunManifest::start("embed");
            m.input(&ckpt)?;
            m.input(&data)?;
            let e = m.time("embed", || embed(&encoder, alpha, &ds))?;
            let mut w = create(&out)?;
            e.write_csv(&mut w)?;
            w.flush()?;
            m.output(&out);
            m.write(&sibling_manifest(&out))?;
            Ok(())
        }
        Command::Eval {
            ckpt,
            train_data,
            test_data,
            out_dir,
            config,
        } => {
            let kv = config.load()?;
            let spec = kv.probe_spec()?;
            let threshold = kv.pca_threshold()?;
            let (encoder, alpha) = load_encoder(&ckpt)?;
            let train_ds = load_dataset(&train_data)?;
            let test_ds = load_dataset(&test_data)?;
            if !train_ds.has_states() || !test_ds.has_states() {
                return Err(pve_core::Error::InvalidArgument(
                    "probe datasets must carry ground-truth states".into(),
                )
                .into());
            }
            let mut m = RunManifest::start("eval");
            m.config = kv.entries().clone();
            m.seeds.insert("probe".into(), spec.seed);
            for p in [&ckpt, &train_data, &test_data] {
                m.input(p)?;
            }
            let test_e = m.time("embed", || embed(&encoder, alpha, &test_ds))?;
            let train_e = embed(&encoder, alpha, &train_ds)?;
            let p = pca(&test_e.positions(), POSITION_DIM)?;
            let k = effective_dim(&p.ratios, threshold)?;
            let mse = m.time("probe", || probe_embedding(&train_e, &test_e, &spec))?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let rewards: Vec<f32> = test_e.rows.iter().map(|r| r.reward).collect();
            let mut write = |name: &str, f: &mut dyn FnMut(&mut BufWriter<File>) -> pve_core::Result<()>| {
                let path = out_dir.join(name);
                let mut w = create(&path)?;
                f(&mut w)?;
                w.flush()?;
                m.output(&path);
                anyhow::Ok(())
            };
            write("embeddings.csv", &mut |w| test_e.write_csv(w))?;
            write("pca.csv", &mut |w| p.write_ratios_csv(w))?;
            write("projection.csv", &mut |w| p.write_projection_csv(&rewards, w))?;
            write("probe.csv", &mut |w| write_probe_csv(&test_e.feature_names, &mse, w))?;
            m.write(&out_dir.join("manifest.json"))?;
            println!("effective_dim({threshold}) = {k}");
            println!("pca_ratios = {:?}", p.ratios);
            for (n, v) in test_e.feature_names.iter().zip(&mse) {
                println!("probe_mse[{n}] = {v}");
            }
            if mse.iter().any(|v| !v.is_finite()) {
                warn!("probe failed for at least one feature");
            }
            Ok(())
        }
        Command::Rl {
            ckpt,
            random_encoder,
            task,
            camera,
            resolution,
            alpha,
            trials,
            epochs,
            out,
            config,
        } => {
            let kv = config.load()?;
            let cfg = kv.rl_config(task)?;
            if trials == 0 {
                return Err(UsageError("--trials must be at least 1".into()).into());
            }
            let mut m = RunManifest::start("rl");
            m.config = kv.entries().clone();
            m.seeds.insert("rl".into(), cfg.seed);
            let trained = match (&ckpt, random_encoder) {
                (Some(p), false) => {
                    m.input(p)?;
                    Some(load_encoder(p)?)
                }
                (None, true) => None,
                _ => return Err(UsageError("give exactly one of --ckpt and --random-encoder".into()).into()),
            };
            let res = trained.as_ref().map(|(e, _)| e.width()).unwrap_or(resolution);
            let env = Environment::with_config(
                task,
                camera,
                EnvConfig {
                    resolution: res,
                    ..EnvConfig::default()
                },
            );
            let source = match &trained {
                Some((encoder, a)) => EncoderSource::Trained { encoder, alpha: *a },
                None => EncoderSource::Random { resolution: res, alpha },
            };
            let curve = m.time("rl", || run_learning_curve(&env, source, &cfg, trials, epochs))?;
            let mut w = create(&out)?;
            curve.write_csv(&mut w)?;
            w.flush()?;
            m.output(&out);
            m.write(&sibling_manifest(&out))?;
            Ok(())
        }
        Command::Gradreport {
            ckpt,
            dataset,
            out,
            config,
        } => {
            let kv = config.load()?;
            let (encoder, alpha) = load_encoder(&ckpt)?;
            let ds = load_dataset(&dataset)?;
            let cfg = kv.train_config(ds.meta.task)?;
            let report = gradient_magnitude_report(&ds, &encoder, alpha, &cfg)?;
            let mut text = String::from("prior,gradient_norm\n");
            for (name, n) in &report {
                text.push_str(&format!("{name},{n}\n"));
            }
            match out {
                Some(path) => {
                    let mut m = RunManifest::start("gradreport");
                    m.config = kv.entries().clone();
                    m.input(&ckpt)?;
                    m.input(&dataset)?;
                    std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
                    m.output(&path);
                    m.write(&sibling_manifest(&path))?;
                }
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Inspect { path } => inspect(&path),
    }
}

fn inspect(path: &Path) -> anyhow::Result<()> {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .with_context(|| format!("reading {}", path.display()))?;
    if &magic == DATASET_MAGIC {
        let ds = load_dataset(path)?;
        let m = &ds.meta;
        println!("format PVED");
        println!("task {}", m.task);
        println!("camera {}", m.camera.name());
        println!("n_traj {}", m.n_traj);
        println!("traj_len {}", m.traj_len);
        println!("height {}", m.height);
        println!("width {}", m.width);
        println!("channels {}", m.channels);
        println!("action_dim {}", m.action_dim);
        println!("seed {}", m.seed);
        println!("ground_truth {}", if ds.has_states() { "yes" } else { "no" });
    } else if &magic == CHECKPOINT_MAGIC {
        let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        println!("format PVE1");
        println!("tensors {}", ck.tensors.len());
        for (name, t) in &ck.tensors {
            println!("{name} {:?}", t.shape());
        }
        match &ck.adam {
            Some(a) => println!("adam steps {} skipped {}", a.step_count(), a.skipped()),
            None => println!("adam none"),
        }
    } else {
        return Err(pve_core::Error::Format(format!(
            "{}: unknown magic {:?}",
            path.display(),
            String::from_utf8_lossy(&magic)
        ))
        .into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&UsageError("x".into()).into()), EXIT_USAGE);
        let e: anyhow::Error = pve_core::Error::Numeric("nan".into()).into();
        assert_eq!(exit_code(&e.context("training")), EXIT_NUMERIC);
        let e: anyhow::Error = pve_core::Error::Format("bad".into()).into();
        assert_eq!(exit_code(&e), EXIT_DATA);
        let e: anyhow::Error = std::io::Error::from(std::io::ErrorKind::NotFound).into();
        assert_eq!(exit_code(&e), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }

    #[test]
    fn manifest_name_sits_beside_output() {
        assert_eq!(sibling_manifest(Path::new("a/b.pved")), Path::new("a/b.pved.manifest.json"));
    }
}
