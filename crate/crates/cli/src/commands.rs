use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rfd_sketch::data::{load_libsvm, normalize_labels, split, SHUFFLE_ALGORITHM};
use rfd_sketch::linalg::{singular_values, spectral_norm};
use rfd_sketch::online::{
    accuracy, batch_comparator, empirical_regret, regret_bound_rhs, run_online, run_online_with_diagnostics,
    synthetic_stream,
};
use rfd_sketch::sketch::{
    counterexample_stream, error_bound_from_spectrum, low_rank_stream, relative_error_with_gram, sketch_rows,
};
use rfd_sketch::{Algorithm, Dataset, DenseMatrix, OnsConfig, SketchConfig};
use serde::Serialize;

use crate::output::{
    create_out_dir, median, thin_indices, write_csv, write_csv_with_header, PhaseTimer, RunManifest,
    MAX_TRACE_ROWS,
};
use crate::{
    Command, CounterexampleArgs, OnlineBenchArgs, RegretCheckArgs, ReplayArgs, SketchBenchArgs, Source,
};

/// Largest stream accepted by `regret-check`.
pub const MAX_REGRET_ROUNDS: usize = 100_000;

fn absolute(path: &mut Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        *p = fs::canonicalize(&*p).with_context(|| format!("dataset {}", p.display()))?;
    }
    Ok(())
}

fn load(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    let ds = load_libsvm(path).with_context(|| format!("loading {}", path.display()))?;
    match dim {
        Some(d) => ds.with_dim(d).with_context(|| format!("--dim for {}", path.display())),
        None => Ok(ds),
    }
}

fn finish(
    run: Command,
    out: &Path,
    summary_outputs: Vec<String>,
    other_outputs: Vec<String>,
    timer: PhaseTimer,
) -> Result<PathBuf> {
    RunManifest {
        run,
        version: rfd_sketch::VERSION.to_string(),
        summary_outputs,
        other_outputs,
        phases: timer.finish(),
        shuffle_algorithm: SHUFFLE_ALGORITHM.to_string(),
    }
    .write(out)
}

fn timed<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut result = None;
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let value = f()?;
        times.push(start.elapsed().as_secs_f64());
        result.get_or_insert(value);
    }
    Ok((result.expect("at least one repeat"), median(times)))
}

#[derive(Serialize)]
struct SketchRow {
    m: usize,
    error_fd: f64,
    error_rfd: f64,
    /// `k = 0`.
    bound_fd_k0: f64,
    bound_rfd_k0: f64,
    k_half: usize,
    bound_fd_khalf: f64,
    bound_rfd_khalf: f64,
    ata_norm: f64,
}

#[derive(Serialize)]
struct SketchTimingRow {
    m: usize,
    wall_ms_fd: f64,
    wall_ms_rfd: f64,
}

fn sketch_source(source: &Source, seed: u64) -> Result<DenseMatrix> {
    match (&source.dataset, source.synthetic) {
        (Some(path), _) => Ok(load(path, source.dim)?.to_dense().0),
        (None, Some(s)) => {
            let d = source.dim.unwrap_or(s.d);
            ensure!(d == s.d, "--dim {d} disagrees with the synthetic dimension {}", s.d);
            Ok(low_rank_stream(s.t, s.d, s.rank.unwrap_or(s.d), seed)?)
        }
        (None, None) => bail!("one of --dataset or --synthetic is required"),
    }
}

/// Relative covariance error of FD and RFD with the bounds at `k = 0` and
/// `k = m/2` for each sketch size.
pub fn cmd_sketch_bench(mut args: SketchBenchArgs) -> Result<PathBuf> {
    ensure!(!args.m.is_empty(), "--m needs at least one value");
    absolute(&mut args.source.dataset)?;
    create_out_dir(&args.out)?;
    let mut timer = PhaseTimer::new();
    timer.start("load");
    let a = sketch_source(&args.source, args.seed)?;
    timer.start("spectrum");
    let ata = a.gram();
    let ata_norm = spectral_norm(&ata)?;
    let sv = singular_values(&a)?;
    timer.start("sketch");
    let fast = args.fast.enabled();
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    for &m in &args.m {
        let fd_cfg = SketchConfig::frequent(m).with_alpha0(args.alpha0).with_fast_mode(fast);
        let rfd_cfg = SketchConfig::robust(m).with_alpha0(args.alpha0).with_fast_mode(fast);
        let (fd, fd_secs) = timed(args.repeats, || Ok(sketch_rows(fd_cfg, &a)?))?;
        let (rfd, rfd_secs) = timed(args.repeats, || Ok(sketch_rows(rfd_cfg, &a)?))?;
        let k_half = m / 2;
        rows.push(SketchRow {
            m,
            error_fd: relative_error_with_gram(&ata, &fd)?,
            error_rfd: relative_error_with_gram(&ata, &rfd)?,
            bound_fd_k0: error_bound_from_spectrum(&sv, m, 0, false)?,
            bound_rfd_k0: error_bound_from_spectrum(&sv, m, 0, true)?,
            k_half,
            bound_fd_khalf: error_bound_from_spectrum(&sv, m, k_half, false)?,
            bound_rfd_khalf: error_bound_from_spectrum(&sv, m, k_half, true)?,
            ata_norm,
        });
        timing.push(SketchTimingRow { m, wall_ms_fd: fd_secs * 1e3, wall_ms_rfd: rfd_secs * 1e3 });
    }
    timer.start("write");
    write_csv(&args.out.join("sketch-bench.csv"), &rows)?;
    write_csv(&args.out.join("sketch-bench-timing.csv"), &timing)?;
    let out = args.out.clone();
    finish(
        Command::SketchBench(args),
        &out,
        vec!["sketch-bench.csv".into()],
        vec!["sketch-bench-timing.csv".into()],
        timer,
    )
}

#[derive(Serialize)]
struct OnlineRow {
    algorithm: &'static str,
    m: Option<usize>,
    alpha0: f64,
    train_rounds: usize,
    online_error_rate: f64,
    test_accuracy: f64,
    final_alpha: f64,
}

#[derive(Serialize)]
struct OnlineTimingRow {
    algorithm: &'static str,
    m: Option<usize>,
    alpha0: f64,
    avg_iter_cost_seconds: f64,
}

#[derive(Serialize)]
struct TraceRow {
    round: usize,
    online_error_rate: f64,
    loss: f64,
    alpha_t: f64,
    sigma_m_sq: f64,
}

struct Split {
    x: DenseMatrix,
    y: Vec<f64>,
    xt: DenseMatrix,
    yt: Vec<f64>,
}

fn online_source(args: &OnlineBenchArgs) -> Result<Split> {
    let frac = args.train_fraction;
    ensure!(frac > 0.0 && frac < 1.0 || args.test_dataset.is_some(), "--train-fraction must lie in (0, 1), got {frac}");
    match (&args.source.dataset, args.source.synthetic) {
        (Some(path), _) => {
            let train = normalize_labels(load(path, None)?).with_context(|| format!("labels of {}", path.display()))?;
            let (train, test) = match &args.test_dataset {
                Some(test_path) => {
                    let test = normalize_labels(load(test_path, None)?)
                        .with_context(|| format!("labels of {}", test_path.display()))?;
                    let d = args.source.dim.unwrap_or(train.dim().max(test.dim()));
                    (train.with_dim(d)?, test.with_dim(d)?)
                }
                None => {
                    let train = match args.source.dim {
                        Some(d) => train.with_dim(d)?,
                        None => train,
                    };
                    split(&train, frac, args.seed)?
                }
            };
            let (x, y) = train.to_dense();
            let (xt, yt) = test.to_dense();
            Ok(Split { x, y, xt, yt })
        }
        (None, Some(s)) => {
            ensure!(s.rank.is_none(), "online-bench synthetic streams take T:D, not T:D:RANK");
            ensure!(args.source.dim.is_none_or(|d| d == s.d), "--dim disagrees with the synthetic dimension {}", s.d);
            let (x, y) = synthetic_stream(s.t, s.d, args.seed)?;
            let n_train = (frac * s.t as f64).floor() as usize;
            ensure!(n_train > 0 && n_train < s.t, "--train-fraction {frac} leaves an empty side of {} rows", s.t);
            let rows = x.to_rows();
            Ok(Split {
                x: DenseMatrix::from_rows(&rows[..n_train])?,
                y: y[..n_train].to_vec(),
                xt: DenseMatrix::from_rows(&rows[n_train..])?,
                yt: y[n_train..].to_vec(),
            })
        }
        (None, None) => bail!("one of --dataset or --synthetic is required"),
    }
}

fn alpha_tag(alpha0: f64) -> String {
    format!("{alpha0}")
}

/// One pass per `(m, α₀)` with a thinned trace and the test accuracy of the
/// final weights.
pub fn cmd_online_bench(mut args: OnlineBenchArgs) -> Result<PathBuf> {
    let algorithm: Algorithm = args.algorithm.parse()?;
    args.algorithm = algorithm.name().to_string();
    ensure!(!args.alpha0.is_empty(), "--alpha0 needs at least one value");
    ensure!(!args.m.is_empty() || !algorithm.is_sketched(), "--m needs at least one value");
    absolute(&mut args.source.dataset)?;
    absolute(&mut args.test_dataset)?;
    create_out_dir(&args.out)?;
    let mut timer = PhaseTimer::new();
    timer.start("load");
    let data = online_source(&args)?;
    let d = data.x.ncols();
    if algorithm == Algorithm::FullOn && d > args.full_on_cap {
        bail!(
            "full_on keeps a dense {d}x{d} matrix and its inverse; d = {d} exceeds --full-on-cap {}",
            args.full_on_cap
        );
    }
    let ms: Vec<Option<usize>> = if algorithm.is_sketched() {
        args.m.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    timer.start("online");
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let mut traces = Vec::new();
    for &m in &ms {
        for &alpha0 in &args.alpha0 {
            let config = OnsConfig::new(algorithm, m.unwrap_or(2), alpha0)
                .with_radius(args.c)
                .with_eta0(args.eta0)
                .with_fast_mode(args.fast.enabled());
            config.validate()?;
            let (run, secs) = timed(args.repeats, || Ok(run_online(&data.x, &data.y, &config)?))?;
            let telemetry = run.telemetry();
            let trace: Vec<TraceRow> = thin_indices(telemetry.len(), MAX_TRACE_ROWS)
                .into_iter()
                .map(|i| TraceRow {
                    round: telemetry[i].t,
                    online_error_rate: run.error_trace[i],
                    loss: telemetry[i].loss,
                    alpha_t: telemetry[i].alpha_t,
                    sigma_m_sq: telemetry[i].sigma_m_sq,
                })
                .collect();
            let name = match m {
                Some(m) => format!("online-bench-trace-{}-m{m}-alpha0-{}.csv", algorithm.name(), alpha_tag(alpha0)),
                None => format!("online-bench-trace-{}-alpha0-{}.csv", algorithm.name(), alpha_tag(alpha0)),
            };
            write_csv(&args.out.join(&name), &trace)?;
            traces.push(name);
            rows.push(OnlineRow {
                algorithm: algorithm.name(),
                m,
                alpha0,
                train_rounds: telemetry.len(),
                online_error_rate: run.final_error_rate(),
                test_accuracy: accuracy(&run.weights(), &data.xt, &data.yt)?,
                final_alpha: run.state.alpha(),
            });
            timing.push(OnlineTimingRow {
                algorithm: algorithm.name(),
                m,
                alpha0,
                avg_iter_cost_seconds: secs / telemetry.len() as f64,
            });
        }
    }
    timer.start("write");
    write_csv(&args.out.join("online-bench.csv"), &rows)?;
    write_csv(&args.out.join("online-bench-timing.csv"), &timing)?;
    let out = args.out.clone();
    let mut summary = vec!["online-bench.csv".to_string()];
    summary.extend(traces);
    finish(Command::OnlineBench(args), &out, summary, vec!["online-bench-timing.csv".into()], timer)
}

#[derive(Serialize)]
struct RegretRow {
    #[serde(rename = "T")]
    t: usize,
    d: usize,
    m: usize,
    alpha0: f64,
    t_prime: Option<usize>,
    regret: f64,
    bound_rhs: f64,
    start_term: f64,
    eta_term: f64,
    log_term: f64,
    phase_one: Option<f64>,
    omega_term1: f64,
    omega_term2: f64,
    omega_term3: f64,
    holds: bool,
}

/// Empirical regret of RFD-SON against the batch comparator on a synthetic
/// stream, next to the assembled bound.
pub fn cmd_regret_check(args: RegretCheckArgs) -> Result<PathBuf> {
    ensure!(args.t <= MAX_REGRET_ROUNDS, "--t {} exceeds {MAX_REGRET_ROUNDS}", args.t);
    ensure!(!args.alpha0.is_empty(), "--alpha0 needs at least one value");
    create_out_dir(&args.out)?;
    let mut timer = PhaseTimer::new();
    timer.start("comparator");
    let (x, y) = synthetic_stream(args.t, args.d, args.seed)?;
    let w_star = batch_comparator(&x, &y, args.c)?;
    timer.start("online");
    let mut rows = Vec::new();
    for &alpha0 in &args.alpha0 {
        let config = OnsConfig::rfd_son(args.m, alpha0)
            .with_radius(args.c)
            .with_eta0(args.eta0)
            .with_fast_mode(args.fast.enabled());
        config.validate()?;
        let (run, diag) = run_online_with_diagnostics(&x, &y, &config)?;
        let regret = empirical_regret(run.telemetry(), &x, &y, &w_star, args.c)?;
        let bound = regret_bound_rhs(run.telemetry(), &diag, &config, &w_star)?;
        rows.push(RegretRow {
            t: args.t,
            d: args.d,
            m: args.m,
            alpha0,
            t_prime: bound.phase_one.as_ref().and_then(|p| p.inputs.t_prime),
            regret,
            bound_rhs: bound.total,
            start_term: bound.start_term,
            eta_term: bound.eta_term,
            log_term: bound.log_term,
            phase_one: bound.phase_one.as_ref().map(|p| p.value),
            omega_term1: bound.omega_log,
            omega_term2: bound.omega_ratio,
            omega_term3: bound.omega_shrink,
            holds: regret <= bound.total,
        });
    }
    timer.start("write");
    write_csv(&args.out.join("regret-check.csv"), &rows)?;
    let out = args.out.clone();
    finish(Command::RegretCheck(args), &out, vec!["regret-check.csv".into()], vec![], timer)
}

#[derive(Serialize)]
struct CounterexampleRow {
    method: &'static str,
    relative_error: f64,
    /// Smallest relative bound over `k < m`; empty for greedy.
    relative_bound: Option<f64>,
}

/// FD, RFD and greedy truncation on the adversarial stream.
pub fn cmd_counterexample(args: CounterexampleArgs) -> Result<PathBuf> {
    create_out_dir(&args.out)?;
    let mut timer = PhaseTimer::new();
    timer.start("sketch");
    let a = counterexample_stream(args.m, args.s, args.lambda, args.epsilon)?;
    let ata = a.gram();
    let ata_norm = spectral_norm(&ata)?;
    let sv = singular_values(&a)?;
    let best_bound = |robust: bool| -> Result<f64> {
        let mut best = f64::INFINITY;
        for k in 0..args.m {
            best = best.min(error_bound_from_spectrum(&sv, args.m, k, robust)?);
        }
        Ok(best / ata_norm)
    };
    let mut rows = Vec::new();
    for (method, config, bound) in [
        ("fd", SketchConfig::frequent(args.m), Some(best_bound(false)?)),
        ("rfd", SketchConfig::robust(args.m), Some(best_bound(true)?)),
        ("greedy", SketchConfig::greedy(args.m), None),
    ] {
        let sketch = sketch_rows(config, &a)?;
        rows.push(CounterexampleRow {
            method,
            relative_error: relative_error_with_gram(&ata, &sketch)?,
            relative_bound: bound,
        });
    }
    timer.start("write");
    write_csv_with_header(&args.out.join("counterexample.csv"), &["method", "relative_error", "relative_bound"], &rows)?;
    let out = args.out.clone();
    finish(Command::Counterexample(args), &out, vec!["counterexample.csv".into()], vec![], timer)
}

/// Re-runs a recorded command, optionally into another directory.
pub fn cmd_replay(args: ReplayArgs) -> Result<PathBuf> {
    let manifest = RunManifest::read(&args.manifest)?;
    if manifest.version != rfd_sketch::VERSION {
        eprintln!(
            "rfd-bench: manifest was written by version {}, replaying with {}",
            manifest.version,
            rfd_sketch::VERSION
        );
    }
    let mut run = manifest.run;
    if let Some(out) = args.out {
        match &mut run {
            Command::SketchBench(a) => a.out = out,
            Command::OnlineBench(a) => a.out = out,
            Command::RegretCheck(a) => a.out = out,
            Command::Counterexample(a) => a.out = out,
            Command::Replay(_) => bail!("a manifest cannot record a replay"),
        }
    }
    crate::run(run)
}
