//! Flat `key = value` run configuration with a mandatory `version` key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use pve_core::envs::Task;
use pve_core::eval::ProbeSpec;
use pve_core::rl::RLConfig;
use pve_core::trainer::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Bad flags, config keys or values; maps to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const TRAIN_KEYS: &[&str] = &[
    "seed",
    "sequences",
    "steps",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_epsilon",
    "noise_sigma",
    "checkpoint_every",
    "alpha_max",
    "phase1_epochs",
    "ramp_epochs",
    "phase2_epochs",
    "ema",
    "window",
    "min_improvement",
    "w_variation",
    "w_slowness",
    "w_inertia",
    "w_inertia_abs",
    "w_conservation",
    "w_controlability",
];

const PROBE_KEYS: &[&str] = &["probe_steps", "probe_batch", "probe_learning_rate", "probe_seed", "pca_threshold"];

const RL_KEYS: &[&str] = &[
    "rl_seed",
    "action_repeat",
    "episodes_per_epoch",
    "passes_per_epoch",
    "episode_steps",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_epochs",
    "fit_steps",
    "fit_batch",
    "rl_learning_rate",
    "q_hidden",
];

const COLLECT_KEYS: &[&str] = &["resolution", "dt", "substeps"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(usage(format!("config line {}: duplicate key {k}", n + 1)));
            }
        }
        match entries.remove("version") {
            Some(v) if v == CONFIG_VERSION.to_string() => {}
            Some(v) => return Err(usage(format!("unsupported config version {v}"))),
            None => return Err(usage("config file lacks a version key")),
        }
        let cfg = KvConfig { entries };
        cfg.check_known()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::Error::new(e).context(format!("reading config {}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides on top of the file values.
    pub fn with_overrides(mut self, overrides: &[String]) -> anyhow::Result<Self> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("override {o:?} is not key=value")))?;
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        self.check_known()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    fn check_known(&self) -> anyhow::Result<()> {
        for k in self.entries.keys() {
            let known = [TRAIN_KEYS, PROBE_KEYS, RL_KEYS, COLLECT_KEYS].iter().any(|ks| ks.contains(&k.as_str()));
            if !known {
                return Err(usage(format!("unknown config key {k}")));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    fn read<T: FromStr>(&self, key: &str, slot: &mut T) -> anyhow::Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn train_config(&self, task: Task) -> anyhow::Result<TrainConfig> {
        let mut c = TrainConfig::for_task(task);
        self.read("seed", &mut c.seed)?;
        self.read("sequences", &mut c.sequences)?;
        self.read("steps", &mut c.steps)?;
        self.read("learning_rate", &mut c.adam.learning_rate)?;
        self.read("beta1", &mut c.adam.beta1)?;
        self.read("beta2", &mut c.adam.beta2)?;
        self.read("adam_epsilon", &mut c.adam.epsilon)?;
        self.read("noise_sigma", &mut c.noise_sigma)?;
        self.read("checkpoint_every", &mut c.checkpoint_every)?;
        let cu = &mut c.curriculum;
        self.read("alpha_max", &mut cu.alpha_max)?;
        self.read("phase1_epochs", &mut cu.phase1_epochs)?;
        self.read("ramp_epochs", &mut cu.ramp_epochs)?;
        self.read("phase2_epochs", &mut cu.phase2_epochs)?;
        self.read("ema", &mut cu.ema)?;
        self.read("window", &mut cu.window)?;
        self.read("min_improvement", &mut cu.min_improvement)?;
        let w = &mut c.weights;
        self.read("w_variation", &mut w.variation)?;
        self.read("w_slowness", &mut w.slowness)?;
        self.read("w_inertia", &mut w.inertia)?;
        self.read("w_inertia_abs", &mut w.inertia_abs)?;
        self.read("w_conservation", &mut w.conservation)?;
        self.read("w_controlability", &mut w.controlability)?;
        c.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }

    pub fn probe_spec(&self) -> anyhow::Result<ProbeSpec> {
        let mut p = ProbeSpec::default();
        self.read("probe_steps", &mut p.steps)?;
        self.read("probe_batch", &mut p.batch)?;
        self.read("probe_learning_rate", &mut p.learning_rate)?;
        self.read("probe_seed", &mut p.seed)?;
        Ok(p)
    }

    pub fn pca_threshold(&self) -> anyhow::Result<f64> {
        Ok(self.get("pca_threshold")?.unwrap_or(0.95))
    }

    pub fn rl_config(&self, task: Task) -> anyhow::Result<RLConfig> {
        let mut c = RLConfig::for_task(task);
        self.read("rl_seed", &mut c.seed)?;
        self.read("action_repeat", &mut c.action_repeat)?;
        self.read("episodes_per_epoch", &mut c.episodes_per_epoch)?;
        self.read("passes_per_epoch", &mut c.passes_per_epoch)?;
        self.read("episode_steps", &mut c.episode_steps)?;
        self.read("epsilon_start", &mut c.epsilon_start)?;
        self.read("epsilon_end", &mut c.epsilon_end)?;
        self.read("epsilon_decay_epochs", &mut c.epsilon_decay_epochs)?;
        self.read("fit_steps", &mut c.fit_steps)?;
        self.read("fit_batch", &mut c.fit_batch)?;
        self.read("rl_learning_rate", &mut c.adam.learning_rate)?;
        if let Some(h) = self.get::<usize>("q_hidden")? {
            c.qnet.hidden = vec![h, h];
        }
        if c.action_repeat == 0 || c.episode_steps == 0 || c.fit_batch == 0 || c.episodes_per_epoch == 0 {
            return Err(usage("action_repeat, episode_steps, fit_batch and episodes_per_epoch must be positive"));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies() {
        let cfg = KvConfig::parse("version = 1\n# comment\nseed = 7\nphase1_epochs=3 # trailing\nw_inertia = 0.5\n").unwrap();
        let t = cfg.train_config(Task::Pendulum).unwrap();
        assert_eq!(t.seed, 7);
        assert_eq!(t.curriculum.phase1_epochs, 3);
        assert_eq!(t.weights.inertia, 0.5);
        assert_eq!(t.weights.slowness, 1.0);
        let over = cfg.with_overrides(&["seed=9".to_string()]).unwrap();
        assert_eq!(over.train_config(Task::Pendulum).unwrap().seed, 9);
    }

    #[test]
    fn rejects_bad_files() {
        for text in ["seed = 1", "version = 2", "version = 1\nbogus = 3", "version = 1\nseed", "version = 1\nseed=1\nseed=2"] {
            let e = KvConfig::parse(text).unwrap_err();
            assert!(e.downcast_ref::<UsageError>().is_some(), "{text}");
        }
        let cfg = KvConfig::parse("version = 1\nseed = x").unwrap();
        assert!(cfg.train_config(Task::Pendulum).is_err());
        let cfg = KvConfig::parse("version = 1\nsequences = 1").unwrap();
        assert!(cfg.train_config(Task::Pendulum).is_err());
    }

    #[test]
    fn rl_and_probe_keys() {
        let cfg = KvConfig::parse("version=1\nq_hidden=32\naction_repeat=2\nprobe_steps=10").unwrap();
        let r = cfg.rl_config(Task::BallInCup).unwrap();
        assert_eq!((r.qnet.hidden.clone(), r.action_repeat), (vec![32, 32], 2));
        assert_eq!(cfg.probe_spec().unwrap().steps, 10);
        assert_eq!(KvConfig::default().rl_config(Task::BallInCup).unwrap().action_repeat, 6);
    }
}
