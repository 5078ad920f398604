use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::balance::LabelBalancer;
use super::buffer::ShuffleBuffer;
use super::config::{EpisodeConfig, ObserveMode};
use super::derive_seed;
use super::env::{DoneCause, Env, Observation, SimContext};
use crate::error::{Error, Result};
use crate::geometry::AgentState;

/// A labeled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Option<Observation>,
    /// Curvature label, 1/m.
    pub label: f64,
    pub sim_time: f64,
    pub state: AgentState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub accepted: u64,
    pub rejected: u64,
    pub crashes: u64,
    pub episodes: u64,
}

/// One pass through the data-generation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub label: f64,
    pub accepted: bool,
    pub sample: Option<Sample>,
}

/// Drives the sample loop: reset when done, label (optionally via a branch
/// step), balance, observe, then step with the label.
#[derive(Debug)]
pub struct Generator {
    env: Env,
    balancer: Option<LabelBalancer>,
    branch_rng: ChaCha8Rng,
    pub stats: GenerationStats,
}

impl Generator {
    pub fn new(ctx: SimContext, config: EpisodeConfig) -> Result<Self> {
        let seed = config.seed;
        let balance = config.balance;
        let mut env = Env::new(ctx, config)?;
        env.reset()?;
        Ok(Self {
            env,
            balancer: balance.then(|| LabelBalancer::new(derive_seed(seed, 0, 2))),
            branch_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 3)),
            stats: GenerationStats { episodes: 1, ..Default::default() },
        })
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn balancer(&self) -> Option<&LabelBalancer> {
        self.balancer.as_ref()
    }

    /// Produces one candidate. With `render` false, accepted samples carry
    /// no observation.
    pub fn propose(&mut self, render: bool) -> Result<Proposal> {
        if self.env.is_done() {
            self.env.reset()?;
            self.stats.episodes += 1;
        }
        let cfg = self.env.config().clone();
        let (label, branch) = if cfg.branching {
            let (label, kappa) = self.env.branch_step(&cfg.pursuit, &mut self.branch_rng)?;
            (label, Some(kappa))
        } else {
            (self.env.privileged_control(&cfg.pursuit), None)
        };
        let accepted = match &mut self.balancer {
            Some(b) => !b.reject(label),
            None => true,
        };
        let sample = if accepted {
            let observation = if render {
                Some(match (cfg.observe, branch) {
                    (ObserveMode::AfterBranch, Some(k)) => self.env.observe_branch(k)?,
                    _ => self.env.observe()?,
                })
            } else {
                None
            };
            let state = *self.env.agent();
            Some(Sample { observation, label, sim_time: state.time, state })
        } else {
            None
        };
        let info = self.env.step(label)?;
        if info.cause == Some(DoneCause::Crash) {
            self.stats.crashes += 1;
        }
        if accepted {
            self.stats.accepted += 1;
        } else {
            self.stats.rejected += 1;
        }
        Ok(Proposal { label, accepted, sample })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub trace_id: String,
    pub sensor: crate::trace::SensorKind,
    pub samples: u64,
    pub counts: GenerationStats,
    pub config: EpisodeConfig,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the generation loop until `n_samples` are accepted and writes
/// `labels.csv`, `obs_<id>.bin` and `manifest.json` into `out_dir`.
/// Samples pass through a shuffle buffer; ids follow drain order.
pub fn generate_dataset(ctx: SimContext, config: &EpisodeConfig, n_samples: u64, out_dir: &Path) -> Result<DatasetSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let trace_id = ctx.trace.id.clone();
    let mut gen = Generator::new(ctx, config.clone())?;
    let mut buffer = ShuffleBuffer::new(config.buffer_capacity, derive_seed(config.seed, 0, 4))?;
    let mut labels = String::from("sample_id,curvature,trace_id,sim_time\n");
    let mut next_id = 0u64;
    let mut flush = |buffer: &mut ShuffleBuffer<Sample>, labels: &mut String| -> Result<()> {
        for s in buffer.drain_shuffled() {
            let obs = s.observation.as_ref().map(Observation::encode).unwrap_or_default();
            write(&out_dir.join(format!("obs_{next_id}.bin")), &obs)?;
            writeln!(labels, "{next_id},{},{trace_id},{}", s.label, s.sim_time).expect("string write");
            next_id += 1;
        }
        Ok(())
    };
    while gen.stats.accepted < n_samples {
        if let Some(sample) = gen.propose(true)?.sample {
            buffer.push(sample)?;
            if buffer.is_full() {
                flush(&mut buffer, &mut labels)?;
            }
        }
    }
    flush(&mut buffer, &mut labels)?;
    write(&out_dir.join("labels.csv"), labels.as_bytes())?;
    let summary = DatasetSummary {
        trace_id: gen.env().trace().id.clone(),
        sensor: config.sensor,
        samples: n_samples,
        counts: gen.stats,
        config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out_dir.join("manifest.json"), json.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::InitRange;
    use crate::synthetic::{CurvatureProfile, SyntheticTrace};

    fn ctx(profile: CurvatureProfile) -> SimContext {
        let mut spec = SyntheticTrace::bare(profile, 150.0);
        let mut rgb = SyntheticTrace::default().rgb.unwrap();
        rgb.camera = crate::camera::CameraModel { fx: 16.0, fy: 16.0, cx: 11.5, cy: 6.0, width: 24, height: 16 };
        rgb.rate = 2.0;
        spec.rgb = Some(rgb);
        SimContext::new(spec.build().unwrap()).unwrap()
    }

    #[test]
    fn zero_samples_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_dataset(ctx(CurvatureProfile::Straight), &EpisodeConfig::default(), 0, dir.path()).unwrap();
        assert_eq!(s.counts, GenerationStats { episodes: 1, ..Default::default() });
        let labels = fs::read_to_string(dir.path().join("labels.csv")).unwrap();
        assert_eq!(labels.lines().count(), 1);
    }

    #[test]
    fn straight_without_branching_labels_zero() {
        let cfg = EpisodeConfig { branching: false, balance: false, init: InitRange::ZERO, ..Default::default() };
        let mut g = Generator::new(ctx(CurvatureProfile::Straight), cfg).unwrap();
        for _ in 0..300 {
            let p = g.propose(false).unwrap();
            assert!(p.accepted);
            assert!(p.label.abs() < 1e-12);
        }
    }

    #[test]
    fn datasets_are_byte_identical() {
        let cfg = EpisodeConfig { buffer_capacity: 7, seed: 11, ..Default::default() };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_dataset(ctx(CurvatureProfile::Straight), &cfg, 20, a.path()).unwrap();
        generate_dataset(ctx(CurvatureProfile::Straight), &cfg, 20, b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 22);
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
        }
        let labels = fs::read_to_string(a.path().join("labels.csv")).unwrap();
        assert_eq!(labels.lines().count(), 21);
        assert_eq!(fs::read(a.path().join("obs_3.bin")).unwrap().len(), 24 * 16 * 3);
    }

    #[test]
    fn after_branch_mode_renders() {
        let cfg = EpisodeConfig { observe: ObserveMode::AfterBranch, balance: false, ..Default::default() };
        let mut g = Generator::new(ctx(CurvatureProfile::Straight), cfg).unwrap();
        let p = g.propose(true).unwrap();
        assert!(matches!(p.sample.unwrap().observation, Some(Observation::Rgb(_))));
    }
}
