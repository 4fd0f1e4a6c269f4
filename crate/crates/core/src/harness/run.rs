//! One seed of one experiment: the two-phase AEP protocol or a single-phase baseline.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Agent, Collection, ExperimentConfig};
use super::log::{LogRow, RunLog};
use super::{tune_allocator, write_provenance};
use crate::clustering::freeze_event_classes;
use crate::envs::{VecEnv, FRAME_LEN};
use crate::error::Result;
use crate::intrinsic::{
    build_module, minibatches, AepModule, ClusterModule, Method, ModuleStats, RewardModule, RewardNormalizer,
    Transitions,
};
use crate::ppo::{collect_rollout, gae, ppo_update, ActionSource, PolicyNet, PpoConfig, PpoStats, RolloutBatch, Runner};
use crate::seeding::{derive_seed, stream_rng, Stream};

/// Headline metrics of one seed, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub env: String,
    pub method: Method,
    pub agent: Agent,
    pub total_steps: u64,
    /// Interactions spent in phase 1 (0 without one).
    pub phase1_steps: u64,
    /// Interaction index of the first positive extrinsic reward.
    pub first_reward_step: Option<u64>,
    /// Mean return of episodes ending in the last 10% of interactions.
    pub final_mean_return: Option<f64>,
    pub final_episodes: usize,
    /// Collisions per 1000 interactions over the last quarter.
    pub final_collisions_per_1k: f64,
    /// Mean raw intrinsic reward over the last 10% of the rewarded phase
    /// divided by the mean over its first 10%.
    pub decay_ratio: Option<f64>,
    /// Number of frozen event classes (AEP only).
    pub event_classes: Option<usize>,
    pub mean_pairwise_center_distance: Option<f64>,
    pub iterations: usize,
}

/// Optional side outputs of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write each sounding clip as a WAV file here.
    pub dump_audio: Option<PathBuf>,
}

/// Per-transition record kept for the summary metrics.
#[derive(Debug, Clone, Copy)]
struct StepRecord {
    step: u64,
    phase: u8,
    r_int_raw: f64,
    collisions: u64,
}

/// Phase-1 corpus kept for warm-starting the predictor; frames stored as f32.
#[derive(Default)]
struct Corpus {
    frames: Vec<f32>,
    actions: Vec<usize>,
    textures: Vec<Vec<f64>>,
    silent: Vec<bool>,
    steps: Vec<u64>,
}

impl Corpus {
    fn push(&mut self, batch: &RolloutBatch, budget: u64) {
        for i in 0..batch.len() {
            if batch.steps[i] >= budget {
                continue;
            }
            self.frames
                .extend(batch.frames[i * FRAME_LEN..(i + 1) * FRAME_LEN].iter().map(|&p| p as f32));
            self.actions.push(batch.actions[i]);
            self.textures.push(batch.textures[i].clone());
            self.silent.push(batch.silent[i]);
            self.steps.push(batch.steps[i]);
        }
    }

    fn sounding_textures(&self) -> Vec<Vec<f64>> {
        self.textures
            .iter()
            .zip(&self.silent)
            .filter(|(_, &s)| !s)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

struct Trainer<'a> {
    config: &'a ExperimentConfig,
    dir: &'a Path,
    options: &'a RunOptions,
    runner: Runner,
    policy: PolicyNet,
    policy_rng: ChaCha8Rng,
    minibatch_rng: ChaCha8Rng,
    intrinsic_rng: ChaCha8Rng,
    log: RunLog,
    started: Instant,
    iteration: usize,
    records: Vec<StepRecord>,
    first_reward_step: Option<u64>,
    episodes: Vec<(u64, f64)>,
}

impl<'a> Trainer<'a> {
    fn new(config: &'a ExperimentConfig, seed: u64, dir: &'a Path, options: &'a RunOptions) -> Result<Self> {
        let envs = VecEnv::from_config(&config.env_config()?, config.n_envs, seed)?;
        let runner = Runner::new(envs);
        let policy = PolicyNet::new(&config.ppo, runner.num_actions(), &mut stream_rng(seed, Stream::Init))?;
        Ok(Self {
            config,
            dir,
            options,
            runner,
            policy,
            policy_rng: stream_rng(seed, Stream::Policy),
            minibatch_rng: stream_rng(seed, Stream::Minibatch),
            intrinsic_rng: stream_rng(seed, Stream::Intrinsic),
            log: RunLog::create(dir)?,
            started: Instant::now(),
            iteration: 0,
            records: Vec::new(),
            first_reward_step: None,
            episodes: Vec::new(),
        })
    }

    /// Rollout length that does not overshoot `limit` interactions.
    fn rollout_len(&self, limit: u64) -> usize {
        let remaining = limit.saturating_sub(self.runner.steps());
        let n = self.config.n_envs as u64;
        (self.config.ppo.rollout_len as u64).min(remaining.div_ceil(n)) as usize
    }

    /// Collect, score, train the policy (when `ppo` is given), then train the module.
    fn iterate(
        &mut self,
        phase: u8,
        len: usize,
        uniform: bool,
        module: &mut dyn RewardModule,
        normalizer: &mut RewardNormalizer,
        ppo: Option<&PpoConfig>,
    ) -> Result<RolloutBatch> {
        let source = if uniform {
            ActionSource::Uniform
        } else {
            ActionSource::Policy(&self.policy)
        };
        let keep_audio = self.options.dump_audio.is_some();
        let mut batch = collect_rollout(&mut self.runner, source, len, &mut self.policy_rng, keep_audio)?;
        batch.score_intrinsic(module, normalizer)?;
        let stats = match ppo {
            Some(cfg) => Some(self.train_policy(&batch, cfg)?),
            None => None,
        };
        let module_stats = if module.has_predictor() {
            Some(module.update(&batch.transitions(), &mut self.intrinsic_rng)?)
        } else {
            None
        };
        self.record(phase, &batch, module, stats, module_stats)?;
        Ok(batch)
    }

    fn train_policy(&mut self, batch: &RolloutBatch, cfg: &PpoConfig) -> Result<PpoStats> {
        let ext = gae(&batch.r_ext, &batch.v_ext, &batch.dones, &batch.last_v_ext, cfg.gamma, cfg.lambda, true)?;
        let int = gae(
            &batch.r_int,
            &batch.v_int,
            &batch.dones,
            &batch.last_v_int,
            cfg.gamma_int,
            cfg.lambda,
            cfg.int_episodic,
        )?;
        ppo_update(&mut self.policy, batch, &ext, &int, cfg, &mut self.minibatch_rng)
    }

    fn record(
        &mut self,
        phase: u8,
        batch: &RolloutBatch,
        module: &dyn RewardModule,
        stats: Option<PpoStats>,
        module_stats: Option<ModuleStats>,
    ) -> Result<()> {
        let n = batch.len();
        for i in 0..n {
            if self.first_reward_step.is_none() && batch.r_ext[i] > 0.0 {
                self.first_reward_step = Some(batch.steps[i]);
            }
            self.records.push(StepRecord {
                step: batch.steps[i],
                phase,
                r_int_raw: batch.r_int_raw[i],
                collisions: batch.new_collisions[i],
            });
        }
        if let (Some(dir), Some(audio)) = (&self.options.dump_audio, &batch.audio) {
            std::fs::create_dir_all(dir)?;
            for (i, clip) in audio.iter().enumerate() {
                if !batch.silent[i] {
                    clip.write_wav(&dir.join(format!("step_{:08}.wav", batch.steps[i])))?;
                }
            }
        }
        let returns: Vec<f64> = batch.episodes.iter().map(|(_, e)| e.extrinsic_return).collect();
        self.episodes
            .extend(batch.episodes.iter().map(|(s, e)| (*s, e.extrinsic_return)));
        let collisions: u64 = batch.new_collisions.iter().sum();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.iteration += 1;
        let row = LogRow {
            iteration: self.iteration,
            phase,
            steps: self.runner.steps(),
            batch_steps: n,
            mean_ext_return: (!returns.is_empty()).then(|| mean(&returns)),
            episodes: returns.len(),
            mean_int_raw: mean(&batch.r_int_raw),
            mean_int: mean(&batch.r_int),
            collisions_per_1k: 1000.0 * collisions as f64 / n as f64,
            cluster_count: module.cluster_count(),
            predictor_loss: module_stats.map(|s| s.loss),
            predictor_accuracy: module_stats.and_then(|s| s.accuracy),
            policy_loss: stats.map(|s| s.policy_loss),
            v_ext_loss: stats.map(|s| s.v_ext_loss),
            v_int_loss: stats.map(|s| s.v_int_loss),
            entropy: stats.map(|s| s.entropy),
            clip_frac: stats.map(|s| s.clip_frac),
            approx_kl: stats.map(|s| s.approx_kl),
        };
        self.log.append(&row, self.started.elapsed().as_secs_f64())?;
        let every = self.config.checkpoint_every;
        if every > 0 && self.iteration % every == 0 {
            self.checkpoint(module, None)?;
        }
        Ok(())
    }

    fn checkpoint(&self, module: &dyn RewardModule, normalizer: Option<&RewardNormalizer>) -> Result<()> {
        let dir = self.dir.join("checkpoint");
        std::fs::create_dir_all(&dir)?;
        self.policy.net.save(&dir.join("policy"))?;
        module.save(&dir.join(format!("{}_", module.method())))?;
        if let Some(norm) = normalizer {
            std::fs::write(dir.join("normalizer.json"), serde_json::to_string_pretty(norm)?)?;
        }
        std::fs::write(dir.join("iteration"), self.iteration.to_string())?;
        Ok(())
    }

    /// Trains `module` until `limit` interactions.
    fn run_phase(
        &mut self,
        phase: u8,
        limit: u64,
        module: &mut dyn RewardModule,
        ppo: &PpoConfig,
    ) -> Result<RewardNormalizer> {
        let mut normalizer = RewardNormalizer::new(ppo.gamma_int, self.config.n_envs)?;
        let train = self.config.agent == Agent::Ppo;
        while self.runner.steps() < limit {
            let len = self.rollout_len(limit);
            self.iterate(phase, len, !train, module, &mut normalizer, train.then_some(ppo))?;
        }
        self.checkpoint(module, Some(&normalizer))?;
        Ok(normalizer)
    }

    /// Phase 1: novelty-clustering collection until saturation or budget.
    fn collect_sounds(&mut self) -> Result<(ClusterModule, Corpus)> {
        let cluster_cfg = &self.config.phase1.cluster;
        let budget = cluster_cfg.budget;
        let mut module = ClusterModule::new(cluster_cfg.clone())?;
        let mut normalizer = RewardNormalizer::new(self.config.ppo.gamma_int, self.config.n_envs)?;
        let mut ppo = self.config.ppo.clone();
        ppo.c_ext = 0.0;
        let active = self.config.phase1.collection == Collection::Active && self.config.agent == Agent::Ppo;
        let mut corpus = Corpus::default();
        while !module.clusters().saturated(self.runner.steps()) {
            let len = self.rollout_len(budget);
            let batch = self.iterate(1, len, !active, &mut module, &mut normalizer, active.then_some(&ppo))?;
            corpus.push(&batch, budget);
        }
        log::info!(
            "phase 1 ended at step {} with {} clusters and {} sounding clips",
            self.runner.steps(),
            module.clusters().len(),
            corpus.silent.iter().filter(|s| !**s).count()
        );
        Ok((module, corpus))
    }

    /// Supervised epochs of the predictor on the labelled phase-1 corpus.
    fn warm_start(&mut self, module: &mut AepModule, corpus: &Corpus) -> Result<()> {
        let n = corpus.actions.len();
        if n == 0 {
            return Ok(());
        }
        let labels: Vec<usize> = (0..n)
            .map(|i| module.classes().label(&corpus.textures[i], corpus.silent[i]))
            .collect();
        let cfg = &self.config.intrinsic;
        for _ in 0..cfg.epochs {
            for idx in minibatches(n, cfg.minibatch, &mut self.intrinsic_rng) {
                let mut frames = Vec::with_capacity(idx.len() * FRAME_LEN);
                for &i in &idx {
                    frames.extend(corpus.frames[i * FRAME_LEN..(i + 1) * FRAME_LEN].iter().map(|&p| f64::from(p)));
                }
                let actions: Vec<usize> = idx.iter().map(|&i| corpus.actions[i]).collect();
                let textures: Vec<Vec<f64>> = idx.iter().map(|&i| corpus.textures[i].clone()).collect();
                let silent: Vec<bool> = idx.iter().map(|&i| corpus.silent[i]).collect();
                let steps: Vec<u64> = idx.iter().map(|&i| corpus.steps[i]).collect();
                let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let local: Vec<usize> = (0..idx.len()).collect();
                let batch = Transitions {
                    frames: &frames,
                    next_frames: &frames,
                    actions: &actions,
                    textures: &textures,
                    silent: &silent,
                    steps: &steps,
                    num_actions: self.runner.num_actions(),
                };
                module.train_step(&batch, &local, &y)?;
            }
        }
        Ok(())
    }

    fn summary(&self, seed: u64, phase1_steps: u64, classes: Option<(usize, f64)>) -> RunSummary {
        let total = self.runner.steps();
        let last_tenth = total - total / 10;
        let final_returns: Vec<f64> = self
            .episodes
            .iter()
            .filter(|(s, _)| *s >= last_tenth)
            .map(|(_, r)| *r)
            .collect();
        let quarter_start = total - total / 4;
        let tail: Vec<&StepRecord> = self.records.iter().filter(|r| r.step >= quarter_start).collect();
        let tail_collisions: u64 = tail.iter().map(|r| r.collisions).sum();
        let rewarded_phase = if self.config.method == Method::Aep { 2 } else { 1 };
        let phase: Vec<&StepRecord> = self.records.iter().filter(|r| r.phase == rewarded_phase).collect();
        RunSummary {
            seed,
            env: self.config.env.clone(),
            method: self.config.method,
            agent: self.config.agent,
            total_steps: total,
            phase1_steps,
            first_reward_step: self.first_reward_step,
            final_mean_return: (!final_returns.is_empty())
                .then(|| final_returns.iter().sum::<f64>() / final_returns.len() as f64),
            final_episodes: final_returns.len(),
            final_collisions_per_1k: 1000.0 * tail_collisions as f64 / tail.len().max(1) as f64,
            decay_ratio: decay_ratio(&phase),
            event_classes: classes.map(|c| c.0),
            mean_pairwise_center_distance: classes.map(|c| c.1),
            iterations: self.iteration,
        }
    }
}

/// Last-10% over first-10% mean raw intrinsic reward, by interaction index.
fn decay_ratio(records: &[&StepRecord]) -> Option<f64> {
    let lo = records.iter().map(|r| r.step).min()?;
    let hi = records.iter().map(|r| r.step).max()? + 1;
    let span = (hi - lo) / 10;
    if span == 0 {
        return None;
    }
    let mean_over = |from: u64, to: u64| {
        let v: Vec<f64> = records
            .iter()
            .filter(|r| r.step >= from && r.step < to)
            .map(|r| r.r_int_raw)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let first = mean_over(lo, lo + span);
    let last = mean_over(hi - span, hi);
    (first > 0.0).then(|| last / first)
}

/// Runs one seed into `dir` with default options.
pub fn run_seed(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunSummary> {
    run_seed_with(config, seed, dir, &RunOptions::default())
}

/// Runs one seed into `dir`: `log.csv`, `timing.csv`, `summary.json`,
/// the resolved config, provenance and checkpoints.
pub fn run_seed_with(config: &ExperimentConfig, seed: u64, dir: &Path, options: &RunOptions) -> Result<RunSummary> {
    tune_allocator();
    config.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut resolved = config.clone();
    resolved.seeds = vec![seed];
    resolved.out_dir = dir.to_path_buf();
    write_provenance(&resolved, dir)?;
    let mut trainer = Trainer::new(config, seed, dir, options)?;
    let num_actions = trainer.runner.num_actions();
    let ppo = config.effective_ppo();
    let mut phase1_steps = 0;
    let mut classes_info = None;
    if config.method == Method::Aep {
        let (clusters, corpus) = trainer.collect_sounds()?;
        phase1_steps = trainer.runner.steps();
        let set = clusters.clusters();
        let tau = set.tau().unwrap_or(0.0);
        let classes = freeze_event_classes(
            &corpus.sounding_textures(),
            set.len(),
            tau,
            derive_seed(seed, Stream::KMeans as u64, 0),
        )?;
        classes.save(&dir.join("event_classes.json"))?;
        clusters.save(&dir.join("phase1_"))?;
        classes_info = Some((classes.k_events(), classes.mean_pairwise_distance()));
        let mut module = AepModule::new(&config.intrinsic, classes, num_actions, &mut trainer.intrinsic_rng)?;
        if config.phase1.warm_start {
            trainer.warm_start(&mut module, &corpus)?;
        }
        drop(corpus);
        trainer.run_phase(2, config.total_steps, &mut module, &ppo)?;
    } else {
        let mut module = build_module(
            config.method,
            &config.intrinsic,
            &config.phase1.cluster,
            num_actions,
            None,
            &mut trainer.intrinsic_rng,
        )?;
        trainer.run_phase(1, config.total_steps, module.as_mut(), &ppo)?;
    }
    let summary = trainer.summary(seed, phase1_steps, classes_info);
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
