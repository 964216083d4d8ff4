//! Subcommands. Each writes its outputs plus a `summary.json` into `--out`.

use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use phasemotion::eval::{self, FrequencyReport, OnsetReport, TrackingReport, TransitionReport};
use phasemotion::motiondata::{
    augment_frequencies, generate_corpus, load_clip, load_dataset, save_clip, save_dataset,
    write_clip_csv,
};
use phasemotion::runtime::{Command, Frame, Player};
use phasemotion::train::Trainer;
use phasemotion::{Checkpoint, Matrix, Model, MotionClip, RunConfig};
use serde::{Deserialize, Serialize};

use crate::service::{self, ServiceOptions};

#[derive(Debug, Parser)]
#[command(
    name = "phasemotion",
    version,
    about = "Phase-latent motion pipeline and playback service"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Cmd,
}

/// Options every subcommand accepts.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for corpus generation and training (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate the synthetic base corpus.
    Gen {
        #[arg(long)]
        base: Option<usize>,
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        bump_fraction: Option<f64>,
        #[arg(long)]
        velocities: bool,
    },
    /// Time-warp every clip of a dataset by each factor.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',')]
        factors: Option<Vec<f64>>,
    },
    /// Train a model; without --dataset the corpus is generated from the config.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        pred_steps: Option<usize>,
    },
    /// Write per-frame latents of a clip.
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: PathBuf,
    },
    /// Reconstruct a clip through the model, re-encoding at every frame.
    Decode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        clip: PathBuf,
    },
    /// Offline roll-out of a command script.
    Play {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// JSON lines `{"tick": n, "command": {...}}`; default plays the first motion.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        ticks: u64,
        /// Drive the tracker and report metrics per frame.
        #[arg(long)]
        track: bool,
    },
    /// Run the evaluation experiments.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Second checkpoint the tracking error is compared against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        mae: bool,
        #[arg(long)]
        onset: bool,
        #[arg(long)]
        freq: bool,
        #[arg(long)]
        transition: bool,
    },
    /// Stream playback to clients over TCP.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        track: bool,
    },
}

/// Machine-readable record of one invocation.
#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
}

/// One scripted command, applied before frame number `tick` is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub command: Command,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_summary(out: &Path, summary: &Summary) -> Result<()> {
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Dataset clips, or the configured corpus generated and augmented in memory.
fn corpus(dataset: Option<&Path>, cfg: &RunConfig) -> Result<Vec<MotionClip>> {
    let clips = match dataset {
        Some(p) => load_dataset(p)?.1,
        None => augment_frequencies(&generate_corpus(&cfg.corpus)?, &cfg.augment.factors)?,
    };
    if clips.is_empty() {
        bail!("dataset has no clips");
    }
    Ok(clips)
}

fn load_model(path: &Path) -> Result<Model> {
    Ok(Model::new(Checkpoint::load(path)?)?)
}

fn check_window(model: &Model, clip: &MotionClip) -> Result<()> {
    if clip.frames() < model.config().window {
        bail!(
            "clip shorter than window ({} < {} frames)",
            clip.frames(),
            model.config().window
        );
    }
    Ok(())
}

/// Reads a play script, ordered by tick (stable for equal ticks).
pub fn read_script(path: &Path) -> Result<Vec<ScriptEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str::<ScriptEntry>(line)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    entries.sort_by_key(|e| e.tick);
    Ok(entries)
}

/// Runs `script` until `ticks` frames exist or playback stops for good.
pub fn roll_out(player: &mut Player, script: &[ScriptEntry], ticks: u64) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    let mut next = 0;
    while (frames.len() as u64) < ticks {
        let at = frames.len() as u64;
        while next < script.len() && script[next].tick <= at {
            if let Err(e) = player.apply(&script[next].command) {
                log::warn!("script command at tick {}: {e}", script[next].tick);
            }
            next += 1;
        }
        match player.tick()? {
            Some(f) => frames.push(f),
            None if next >= script.len() => break,
            // stopped until the next scripted command
            None => {
                let t = script[next].tick;
                while next < script.len() && script[next].tick == t {
                    if let Err(e) = player.apply(&script[next].command) {
                        log::warn!("script command at tick {t}: {e}");
                    }
                    next += 1;
                }
            }
        }
    }
    Ok(frames)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    let cfg = load_config(&common)?;
    let out = common.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let (name, outputs, details) = match cli.command {
        Cmd::Gen {
            base,
            joints,
            duration,
            bump_fraction,
            velocities,
        } => {
            let mut c = cfg.corpus.clone();
            c.n_base = base.unwrap_or(c.n_base);
            c.n_joints = joints.unwrap_or(c.n_joints);
            c.duration_s = duration.unwrap_or(c.duration_s);
            c.bump_fraction = bump_fraction.unwrap_or(c.bump_fraction);
            c.with_velocities |= velocities;
            let clips = generate_corpus(&c)?;
            save_dataset(&clips, &out)?;
            let files: Vec<String> = clips
                .iter()
                .map(|c| format!("{}.clip", c.name))
                .chain(["manifest.json".into()])
                .collect();
            (
                "gen",
                files,
                serde_json::json!({ "clips": clips.len(), "frames": clips[0].frames(), "corpus": c }),
            )
        }
        Cmd::Augment { dataset, factors } => {
            let factors = factors.unwrap_or_else(|| cfg.augment.factors.clone());
            let (_, clips) = load_dataset(&dataset)?;
            let aug = augment_frequencies(&clips, &factors)?;
            save_dataset(&aug, &out)?;
            let files = aug
                .iter()
                .map(|c| format!("{}.clip", c.name))
                .chain(["manifest.json".into()])
                .collect();
            (
                "augment",
                files,
                serde_json::json!({ "clips": aug.len(), "factors": factors }),
            )
        }
        Cmd::Train {
            dataset,
            iters,
            pred_steps,
        } => {
            let mut cfg = cfg.clone();
            cfg.train.max_iters = iters.unwrap_or(cfg.train.max_iters);
            cfg.model.pred_steps = pred_steps.unwrap_or(cfg.model.pred_steps);
            cfg.validate()?;
            let clips = corpus(dataset.as_deref(), &cfg)?;
            // input width follows the data, whatever the config default says
            cfg.model.d = clips[0].model_states(cfg.model.use_velocities)?.rows();
            fs::write(out.join("config.toml"), cfg.to_toml())?;
            let mut trainer = Trainer::new(&clips, &cfg.train, &cfg.model)?;
            trainer.run(Some(&out))?;
            let last = trainer.losses().last().map(|l| l.1);
            let mut files = vec![
                "config.toml".to_string(),
                "loss.csv".into(),
                "model.ckpt".into(),
            ];
            if cfg.train.eval_every > 0 {
                files.extend(
                    (1..=cfg.train.max_iters / cfg.train.eval_every)
                        .map(|k| format!("ckpt_{:05}.ckpt", k * cfg.train.eval_every)),
                );
            }
            let details = serde_json::json!({
                "clips": clips.len(),
                "segments": trainer.sample_index().len(),
                "iterations": trainer.iteration(),
                "parameters": trainer.params().num_params(),
                "final_loss": last,
            });
            ("train", files, details)
        }
        Cmd::Encode { ckpt, clip } => {
            let model = load_model(&ckpt)?;
            let clip = load_clip(&clip)?;
            check_window(&model, &clip)?;
            let c = model.config().c;
            let mut csv = String::from("frame,t");
            for p in ["phi", "f", "a", "b"] {
                for i in 0..c {
                    csv.push_str(&format!(",{p}{i}"));
                }
            }
            csv.push('\n');
            for end in model.config().window - 1..clip.frames() {
                let z = model.fresh_reencode(&clip, end)?;
                csv.push_str(&format!("{end},{}", end as f64 * clip.dt));
                for v in z
                    .phi
                    .iter()
                    .chain(&z.frequencies())
                    .chain(&z.amplitudes())
                    .chain(&z.offsets())
                {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
            fs::write(out.join("latents.csv"), csv)?;
            (
                "encode",
                vec!["latents.csv".into()],
                serde_json::json!({ "clip": clip.name, "windows": clip.frames() + 1 - model.config().window }),
            )
        }
        Cmd::Decode { ckpt, clip } => {
            let model = load_model(&ckpt)?;
            let clip = load_clip(&clip)?;
            check_window(&model, &clip)?;
            let h = model.config().window;
            let cols = clip.frames() + 1 - h;
            let mut states = Matrix::zeros(model.config().d, cols);
            for (k, end) in (h - 1..clip.frames()).enumerate() {
                for (r, v) in model
                    .decode_frame(&model.fresh_reencode(&clip, end)?)?
                    .into_iter()
                    .enumerate()
                {
                    states.set(r, k, v);
                }
            }
            let reference = clip
                .model_states(model.config().use_velocities)?
                .columns(h - 1, cols);
            let err = reference
                .as_slice()
                .iter()
                .zip(states.as_slice())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / states.as_slice().len() as f64;
            let decoded = MotionClip {
                name: format!("{}_decoded", clip.name),
                states,
                events: Vec::new(),
                ..clip.clone()
            };
            save_clip(&decoded, &out.join("decoded.clip"))?;
            write_clip_csv(&decoded, &out.join("decoded.csv"))?;
            (
                "decode",
                vec!["decoded.clip".into(), "decoded.csv".into()],
                serde_json::json!({ "clip": clip.name, "frames": cols, "mae": err }),
            )
        }
        Cmd::Play {
            ckpt,
            dataset,
            script,
            ticks,
            track,
        } => {
            let model = load_model(&ckpt)?;
            let clips = corpus(dataset.as_deref(), &cfg)?;
            let first = clips
                .first()
                .map(|c| c.name.clone())
                .context("no motions")?;
            let mut player = Player::new(model, clips)?;
            if track {
                player = player.with_tracker(cfg.tracker.clone())?;
            }
            let script = match script {
                Some(p) => read_script(&p)?,
                None => vec![ScriptEntry {
                    tick: 0,
                    command: Command::Play {
                        motion: first,
                        cursor: None,
                    },
                }],
            };
            let frames = roll_out(&mut player, &script, ticks)?;
            let mut f = fs::File::create(out.join("frames.jsonl"))?;
            for fr in &frames {
                writeln!(f, "{}", serde_json::to_string(fr)?)?;
            }
            let mut files = vec!["frames.jsonl".to_string()];
            if let Some(fr) = frames.first() {
                let d = fr.q.len();
                let states = Matrix::from_fn(d, frames.len(), |r, c| frames[c].q[r]);
                let clip = MotionClip {
                    name: "playback".into(),
                    base_motion_id: "playback".into(),
                    freq_factor: 1.0,
                    dt: player.model().dt(),
                    n_joints: d,
                    with_velocities: false,
                    states,
                    events: Vec::new(),
                };
                save_clip(&clip, &out.join("playback.clip"))?;
                write_clip_csv(&clip, &out.join("playback.csv"))?;
                files.extend(["playback.clip".into(), "playback.csv".into()]);
            }
            (
                "play",
                files,
                serde_json::json!({ "frames": frames.len(), "commands": script.len() }),
            )
        }
        Cmd::Eval {
            ckpt,
            baseline,
            dataset,
            mae,
            onset,
            freq,
            transition,
        } => {
            let all = !(mae || onset || freq || transition);
            let model = load_model(&ckpt)?;
            let clips = corpus(dataset.as_deref(), &cfg)?;
            let report = evaluate(
                &model,
                baseline.as_deref().map(load_model).transpose()?.as_ref(),
                &clips,
                &cfg,
                Selection {
                    mae: all || mae,
                    onset: all || onset,
                    freq: all || freq,
                    transition: all || transition,
                },
            )?;
            fs::write(
                out.join("report.json"),
                serde_json::to_string_pretty(&report)? + "\n",
            )?;
            print_report(&report);
            (
                "eval",
                vec!["report.json".into()],
                serde_json::to_value(&report)?,
            )
        }
        Cmd::Serve {
            ckpt,
            dataset,
            host,
            port,
            track,
        } => {
            let model = load_model(&ckpt)?;
            let clips = corpus(dataset.as_deref(), &cfg)?;
            let mut player = Player::new(model, clips)?;
            if track {
                player = player.with_tracker(cfg.tracker.clone())?;
            }
            let listener = TcpListener::bind((host.as_str(), port))
                .with_context(|| format!("binding {host}:{port}"))?;
            let handle = service::start(player, listener, ServiceOptions::default())?;
            println!("listening on {}", handle.addr());
            write_summary(
                &out,
                &Summary {
                    command: "serve".into(),
                    seed: common.seed,
                    outputs: vec![],
                    details: serde_json::json!({ "addr": handle.addr().to_string() }),
                },
            )?;
            handle.wait();
            return Ok(());
        }
    };
    write_summary(
        &out,
        &Summary {
            command: name.into(),
            seed: common.seed,
            outputs,
            details,
        },
    )
}

/// Which experiments `eval` runs.
#[derive(Clone, Copy, Debug)]
pub struct Selection {
    pub mae: bool,
    pub onset: bool,
    pub freq: bool,
    pub transition: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackingComparison {
    pub model: TrackingReport,
    pub baseline: Option<TrackingReport>,
    /// Model error over baseline error.
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub tracking: Option<TrackingComparison>,
    pub onset: Option<Vec<OnsetReport>>,
    pub frequency: Option<FrequencyReport>,
    pub transition: Option<TransitionReport>,
}

/// Runs the selected experiments. Tracking uses the unwarped clips (those
/// carry the aperiodic bumps); onset uses the bumps of the probe clip.
pub fn evaluate(
    model: &Model,
    baseline: Option<&Model>,
    clips: &[MotionClip],
    cfg: &RunConfig,
    sel: Selection,
) -> Result<EvalReport> {
    let find = |name: &str| {
        clips
            .iter()
            .find(|c| c.name == name)
            .with_context(|| format!("motion {name:?} not in dataset"))
    };
    let bump_clips: Vec<MotionClip> = clips
        .iter()
        .filter(|c| c.freq_factor == 1.0 && !c.events.is_empty())
        .cloned()
        .collect();
    let tracking = if sel.mae {
        if bump_clips.is_empty() {
            bail!("no unwarped clips with bumps to track");
        }
        let m = eval::tracking_report(model, &bump_clips, &cfg.eval.tracker, cfg.eval.mode)?;
        let b = baseline
            .map(|b| {
                eval::tracking_report(b, &bump_clips, &cfg.eval.tracker, cfg.eval.baseline_mode)
            })
            .transpose()?;
        let ratio = b.as_ref().map(|b| m.mae / b.mae);
        Some(TrackingComparison {
            model: m,
            baseline: b,
            ratio,
        })
    } else {
        None
    };
    let onset = if sel.onset {
        let probe = find(&cfg.eval.probe_clip)?;
        let h = model.config().window as f64 * probe.dt;
        Some(
            probe
                .events
                .iter()
                .filter(|e| e.support().0 >= h && e.support().1 <= probe.duration_s())
                .map(|e| eval::onset_response(model, probe, e))
                .collect::<phasemotion::Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let frequency = if sel.freq {
        let probe = find(&cfg.eval.probe_clip)?;
        let (lo, hi) = cfg.eval.bracket;
        Some(eval::frequency_response(
            model,
            probe,
            &[lo, cfg.eval.probe_factor, hi],
        )?)
    } else {
        None
    };
    let transition = if sel.transition {
        let (a, b) = &cfg.eval.transition;
        Some(eval::transition_smoothness(
            model,
            find(a)?,
            find(b)?,
            1.0,
            cfg.eval.transition_s,
            1.0,
        )?)
    } else {
        None
    };
    Ok(EvalReport {
        tracking,
        onset,
        frequency,
        transition,
    })
}

fn print_report(r: &EvalReport) {
    if let Some(t) = &r.tracking {
        println!(
            "tracking MAE {:.4} rad (decoded {:.4}, imitation {:.4})",
            t.model.mae, t.model.decode_mae, t.model.imitation
        );
        if let (Some(b), Some(ratio)) = (&t.baseline, t.ratio) {
            println!("baseline MAE {:.4} rad, ratio {ratio:.3}", b.mae);
        }
    }
    if let Some(o) = &r.onset {
        for e in o {
            println!(
                "bump on {} joint {}: responsive channels {:?}",
                e.clip,
                e.joint,
                e.responsive_channels(3.0, 1e-3)
            );
        }
    }
    if let Some(f) = &r.frequency {
        println!("mean latent f on channel {}: {:?}", f.channel, f.mean_f);
    }
    if let Some(t) = &r.transition {
        println!(
            "peak joint speed: hard {:.3}, blended {:.3} (x{:.2})",
            t.hard_peak,
            t.blend_peak,
            t.reduction()
        );
    }
}
