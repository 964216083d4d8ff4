//! Exit gate. Prints one `criterion N: PASS|FAIL` line per criterion and exits
//! non-zero when any fails.
//!
//! Criteria 3 to 7 share two checkpoints trained on the standard 170-clip
//! corpus, which dominates the runtime (roughly a quarter of an hour).

#[path = "../../core/tests/support/reference.rs"]
mod reference;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use phasemotion::eval::{self, TrackingReport};
use phasemotion::motiondata::{augment_frequencies, generate_corpus, MotionClip};
use phasemotion::pae::{ModelConfig, ModelParams, Pae};
use phasemotion::runtime::{rewards, MetricFrame, MetricName, Phase};
use phasemotion::spectral::{extract_params, rfft};
use phasemotion::train::{train, TrainConfig};
use phasemotion::{Matrix, Model, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.5..1.5))
}

/// `O(H²)` DFT of a real signal, bins `0..=H/2` as `(re, im)`.
fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let h = x.len();
    (0..=h / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, &v)| {
                let w = -2.0 * PI * ((k * j) % h) as f64 / h as f64;
                (re + v * w.cos(), im + v * w.sin())
            })
        })
        .collect()
}

fn numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fft_err: f64 = 0.0;
    let mut parseval_err: f64 = 0.0;
    for &h in &[8usize, 30, 64, 100, 128, 250] {
        let x: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = rfft(&x).expect("rfft");
        for (c, (re, im)) in spec.coeffs.iter().zip(direct_dft(&x)) {
            fft_err = fft_err.max((c.re - re).abs()).max((c.im - im).abs());
        }
        let c = &spec.coeffs;
        let interior: f64 = c[1..h / 2].iter().map(|z| z.norm_sqr()).sum();
        let rhs = (c[0].norm_sqr() + 2.0 * interior + c[h / 2].norm_sqr()) / h as f64;
        let lhs: f64 = x.iter().map(|v| v * v).sum();
        parseval_err = parseval_err.max((lhs - rhs).abs() / lhs);
    }

    let (h, dt) = (100usize, 0.01);
    let mut recovery_err: f64 = 0.0;
    // the Nyquist bin has no mirror image, so recovery is checked on interior bins
    for bin in 1..h / 2 {
        let (a, b, phase) = (
            rng.gen_range(0.2..2.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.0..2.0 * PI),
        );
        let x: Vec<f64> = (0..h)
            .map(|j| a * (2.0 * PI * (bin * j) as f64 / h as f64 + phase).sin() + b)
            .collect();
        let p = extract_params(&x, dt).expect("extract");
        let f = bin as f64 / (h as f64 * dt);
        recovery_err = recovery_err
            .max((p.f - f).abs() / f)
            .max((p.a - a).abs() / a)
            .max((p.b - b).abs() / b.abs().max(1e-3));
    }

    let mut net_err: f64 = 0.0;
    for seed in 0..4 {
        let cfg = ModelConfig {
            d: 14,
            c: 8,
            window: 100,
            hidden: 16,
            kernel: 15 + 2 * seed as usize,
            ..Default::default()
        };
        let params = ModelParams::<f64>::init(&cfg, seed);
        let net = Pae::new(&cfg).expect("network");
        let x = random_matrix(&mut rng, cfg.d, cfg.window);
        let (z, _) = net.encode(&params, &x).expect("encode");
        let r = reference::encode(&params, &cfg, &x);
        for ch in 0..cfg.c {
            let dphi = (z.phi[ch] - r.phi[ch]).abs();
            net_err = net_err
                .max(dphi.min(1.0 - dphi))
                .max((z.theta[ch].f - r.f[ch]).abs())
                .max((z.theta[ch].a - r.a[ch]).abs())
                .max((z.theta[ch].b - r.b[ch]).abs());
        }
        let y = net.decode(&params, &z).expect("decode");
        let ry = reference::decode(&params, &cfg, &r, 0);
        for i in 0..cfg.d {
            for (a, b) in y.row(i).iter().zip(&ry[i]) {
                net_err = net_err.max((a - b).abs());
            }
        }
    }
    Outcome::new(
        fft_err <= 1e-10 && recovery_err <= 1e-9 && parseval_err <= 1e-9 && net_err <= 1e-9,
        format!("fft {fft_err:.1e}, recovery {recovery_err:.1e}, parseval {parseval_err:.1e}, network {net_err:.1e}"),
    )
}

/// Worst relative error of the analytic gradient against central differences
/// of the reference loss, over every parameter of `seeds` instances.
fn gradient_audit(pred_steps: usize, seeds: std::ops::Range<u64>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let cfg = ModelConfig {
            d: 2,
            c: 2,
            window: 8,
            hidden: 3,
            kernel: 3,
            pred_steps,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::<f64>::init(&cfg, seed);
        let batch: Vec<_> = (0..2)
            .map(|_| random_matrix(&mut rng, cfg.d, cfg.window + pred_steps))
            .collect();
        let net = Pae::new(&cfg).expect("network");
        let (_, grads) = net.loss_and_grad(&params, &batch).expect("gradient");
        let loss = |p: &ModelParams<f64>| {
            batch
                .iter()
                .map(|c| reference::loss(p, &cfg, c))
                .sum::<f64>()
                / 2.0
        };
        let analytic = grads.to_flat();
        let base = params.to_flat();
        let eps = 1e-6;
        let mut probe = params.clone();
        for k in 0..base.len() {
            let mut flat = base.clone();
            flat[k] = base[k] + eps;
            probe.load_flat(&flat).expect("load");
            let plus = loss(&probe);
            flat[k] = base[k] - eps;
            probe.load_flat(&flat).expect("load");
            let minus = loss(&probe);
            let fd = (plus - minus) / (2.0 * eps);
            worst = worst.max((fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-4));
        }
    }
    worst
}

fn gradients() -> Outcome {
    let n0 = gradient_audit(0, 0..20);
    let n3 = gradient_audit(3, 100..120);
    Outcome::new(
        n0 <= 1e-4 && n3 <= 1e-4,
        format!("max relative error N=0 {n0:.1e}, N=3 {n3:.1e} over 20 seeds each"),
    )
}

/// Desk-scale setup shared by the trained-model criteria.
fn desk_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model.hidden = 32;
    cfg.model.kernel = 25;
    cfg
}

struct Trained {
    dfm: Model,
    fld: Model,
    base: Vec<MotionClip>,
    train_s: f64,
}

fn train_pair(cfg: &RunConfig) -> Trained {
    let started = Instant::now();
    let base = generate_corpus(&cfg.corpus).expect("corpus");
    let clips = augment_frequencies(&base, &cfg.augment.factors).expect("augment");
    assert_eq!(clips.len(), 170);
    let fit = |pred_steps: usize, pred_samples: Option<usize>| {
        let mcfg = ModelConfig {
            pred_steps,
            ..cfg.model.clone()
        };
        let tcfg = TrainConfig {
            pred_samples,
            eval_every: 0,
            ..cfg.train.clone()
        };
        let (ck, losses) = train(&clips, &tcfg, &mcfg, None).expect("training");
        println!(
            "  trained N={pred_steps}: final loss {:.4}",
            losses.last().map_or(f64::NAN, |l| l.1)
        );
        Model::new(ck).expect("model")
    };
    let dfm = fit(0, None);
    let fld = fit(100, Some(2));
    Trained {
        dfm,
        fld,
        base,
        train_s: started.elapsed().as_secs_f64(),
    }
}

fn bump_clips(t: &Trained) -> Vec<MotionClip> {
    t.base
        .iter()
        .filter(|c| !c.events.is_empty())
        .cloned()
        .collect()
}

fn tracking_order(t: &Trained, cfg: &RunConfig) -> (Outcome, TrackingReport) {
    let started = Instant::now();
    let clips = bump_clips(t);
    let dfm =
        eval::tracking_report(&t.dfm, &clips, &cfg.eval.tracker, cfg.eval.mode).expect("tracking");
    let fld = eval::tracking_report(&t.fld, &clips, &cfg.eval.tracker, cfg.eval.baseline_mode)
        .expect("tracking");
    let total_s = t.train_s + started.elapsed().as_secs_f64();
    let ratio = dfm.mae / fld.mae;
    let outcome = Outcome::new(
        ratio <= 0.85 && total_s <= 1800.0,
        format!(
            "MAE N=0 {:.4} rad vs N=100 {:.4} rad on {} bump clips, ratio {ratio:.3}; {total_s:.0} s",
            dfm.mae,
            fld.mae,
            clips.len()
        ),
    );
    (outcome, dfm)
}

fn onset(t: &Trained, cfg: &RunConfig) -> Outcome {
    let clip = t
        .base
        .iter()
        .find(|c| c.name == cfg.eval.probe_clip)
        .expect("probe clip");
    let h = t.dfm.config().window as f64 * clip.dt;
    let reports: Vec<_> = clip
        .events
        .iter()
        .filter(|e| e.support().0 >= h && e.support().1 <= clip.duration_s())
        .map(|e| eval::onset_response(&t.dfm, clip, e).expect("onset"))
        .collect();
    let responsive: Vec<usize> = reports
        .iter()
        .map(|r| r.responsive_channels(3.0, 1e-3).len())
        .collect();
    let pass = !reports.is_empty() && responsive.iter().all(|&n| n > 0);
    Outcome::new(
        pass,
        format!(
            "{} bumps on {}, channels responding per bump {responsive:?}",
            reports.len(),
            clip.name
        ),
    )
}

fn frequency(t: &Trained, cfg: &RunConfig) -> Outcome {
    let (lo, hi) = cfg.eval.bracket;
    let factors = [lo, cfg.eval.probe_factor, hi];
    let clip = t
        .base
        .iter()
        .find(|c| c.name == cfg.eval.probe_clip)
        .expect("probe clip");
    let r = eval::frequency_response(&t.dfm, clip, &factors).expect("frequency");
    let corpus_wide = t
        .base
        .iter()
        .filter(|c| {
            eval::frequency_response(&t.dfm, c, &factors)
                .expect("frequency")
                .interpolates(factors[1], lo, hi)
        })
        .count();
    let f: Vec<String> = r
        .mean_f
        .iter()
        .map(|(k, f)| format!("{k}x {f:.3} Hz"))
        .collect();
    Outcome::new(
        r.interpolates(factors[1], lo, hi),
        format!(
            "{} channel {}: {}; {corpus_wide}/{} clips interpolate",
            clip.name,
            r.channel,
            f.join(", "),
            t.base.len()
        ),
    )
}

fn transition(t: &Trained, cfg: &RunConfig) -> Outcome {
    let (a, b) = &cfg.eval.transition;
    let find = |n: &str| {
        t.base
            .iter()
            .find(|c| c.name == n)
            .expect("transition clip")
    };
    let r = eval::transition_smoothness(&t.dfm, find(a), find(b), 1.0, cfg.eval.transition_s, 1.0)
        .expect("transition");
    Outcome::new(
        r.reduction() >= 2.0 && r.endpoints_exact,
        format!(
            "peak |dq|/dt hard {:.2} vs blended {:.2} rad/s ({:.2}x), endpoints exact {}",
            r.hard_peak,
            r.blend_peak,
            r.reduction(),
            r.endpoints_exact
        ),
    )
}

fn reward_metrics(tracked: &TrackingReport) -> Outcome {
    let raw = |f: &MetricFrame, phase: Phase, m: MetricName| rewards(f, phase).raw[&m];
    let scaled = |f: &MetricFrame, phase: Phase, m: MetricName| rewards(f, phase).scaled[&m];
    let e1 = (-1.0f64).exp();
    let close = |v: Option<f64>, want: f64| {
        v.is_some_and(|v| (v - want).abs() <= 1e-12 * want.abs().max(1.0))
    };
    let checks = [
        close(
            raw(
                &MetricFrame {
                    q_ref: Some(vec![0.3, -0.2]),
                    q: Some(vec![0.3, -0.2]),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::JointImitation,
            ),
            1.0,
        ),
        close(
            raw(
                &MetricFrame {
                    q_ref: Some(vec![1.0, 0.0]),
                    q: Some(vec![0.0, 0.0]),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::JointImitation,
            ),
            e1,
        ),
        close(
            raw(
                &MetricFrame {
                    base_rate_ref: Some(0.06f64.sqrt()),
                    base_rate: Some(0.0),
                    ..Default::default()
                },
                Phase::Locomotion,
                MetricName::BaseAngularVelocity,
            ),
            e1,
        ),
        close(
            raw(
                &MetricFrame {
                    head_ref: Some(vec![0.5]),
                    head: Some(vec![0.0]),
                    ..Default::default()
                },
                Phase::Gaze,
                MetricName::EndEffectorOrientation,
            ),
            e1,
        ),
        close(
            scaled(
                &MetricFrame {
                    tau: Some(vec![3.0, 4.0]),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::JointTorque,
            ),
            -0.025,
        ),
        close(
            scaled(
                &MetricFrame {
                    qddot: Some(vec![100.0]),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::JointAcceleration,
            ),
            -2e-3,
        ),
        close(
            scaled(
                &MetricFrame {
                    target_prev: Some(vec![0.0, 1.0]),
                    target: Some(vec![0.1, 1.0]),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::TargetDifference,
            ),
            -1e-4,
        ),
        close(
            scaled(
                &MetricFrame {
                    collisions: Some(2),
                    ..Default::default()
                },
                Phase::DanceImitation,
                MetricName::SelfCollisions,
            ),
            -20.0,
        ),
        close(
            scaled(
                &MetricFrame {
                    foot_velocity: Some(vec![0.3, 0.4]),
                    ..Default::default()
                },
                Phase::Locomotion,
                MetricName::FootSlippage,
            ),
            -0.0375,
        ),
        close(
            raw(
                &MetricFrame {
                    foot_air_time: Some(vec![0.5, 0.1]),
                    ..Default::default()
                },
                Phase::Locomotion,
                MetricName::FootAirTime,
            ),
            0.2,
        ),
    ];
    let passed = checks.iter().filter(|&&c| c).count();
    let best = tracked
        .clips
        .iter()
        .map(|c| c.imitation)
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        passed == checks.len() && tracked.imitation > 0.9,
        format!(
            "{passed}/{} formula examples; imitation mean {:.4}, best clip {best:.4}",
            checks.len(),
            tracked.imitation
        ),
    )
}

const TINY_CONFIG: &str = r#"
[corpus]
n_base = 2
n_joints = 3
duration_s = 2.0

[model]
hidden = 4
kernel = 5
c = 2

[train]
batch = 4
max_iters = 30
eval_every = 10
"#;

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Process::new(env!("CARGO_BIN_EXE_phasemotion"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// Runs train, play and eval in `dir`; returns every produced file, sorted.
fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    std::fs::write(dir.join("tiny.toml"), TINY_CONFIG).map_err(|e| e.to_string())?;
    let common = ["--seed", "11", "--config", "tiny.toml"];
    let with = |rest: &[&'static str]| {
        common
            .iter()
            .copied()
            .chain(rest.iter().copied())
            .collect::<Vec<_>>()
    };
    run_cli(dir, &with(&["--out", "train", "train"]))?;
    run_cli(
        dir,
        &with(&[
            "--out",
            "play",
            "play",
            "--ckpt",
            "train/model.ckpt",
            "--ticks",
            "120",
            "--track",
        ]),
    )?;
    run_cli(
        dir,
        &with(&[
            "--out",
            "eval",
            "eval",
            "--ckpt",
            "train/model.ckpt",
            "--baseline",
            "train/model.ckpt",
            "--mae",
            "--freq",
            "--transition",
        ]),
    )?;
    let mut files = Vec::new();
    for sub in ["train", "play", "eval"] {
        for entry in std::fs::read_dir(dir.join(sub)).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            files.push((
                format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()),
                bytes,
            ));
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (
        tempfile::tempdir().expect("tempdir"),
        tempfile::tempdir().expect("tempdir"),
    );
    match (pipeline(a.path()), pipeline(b.path())) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&str> = x
                .iter()
                .zip(&y)
                .filter(|(p, q)| p != q)
                .map(|(p, _)| p.0.as_str())
                .collect();
            let names: Vec<&str> = x.iter().map(|f| f.0.as_str()).collect();
            Outcome::new(
                x.len() == y.len() && differing.is_empty() && names.contains(&"train/loss.csv"),
                format!("{} files compared, differing {differing:?}", x.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => Outcome::new(false, e),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n} ({name}): {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    record(1, "numerics", numerics());
    record(2, "gradient audit", gradients());
    record(8, "determinism", determinism());

    let cfg = desk_config();
    let trained = train_pair(&cfg);
    let (c3, tracked) = tracking_order(&trained, &cfg);
    record(3, "tracking order", c3);
    record(4, "bump response", onset(&trained, &cfg));
    record(5, "frequency interpolation", frequency(&trained, &cfg));
    record(6, "transition smoothness", transition(&trained, &cfg));
    record(7, "reward metrics", reward_metrics(&tracked));

    results.sort_by_key(|r| r.0);
    println!();
    for (n, name, o) in &results {
        println!(
            "criterion {n} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" }
        );
    }
    if results.iter().any(|r| !r.2.pass) {
        std::process::exit(1);
    }
}
