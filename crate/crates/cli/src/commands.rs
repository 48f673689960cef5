use std::path::{Path, PathBuf};

use ivae_core::analysis::{self, fit_power_law, robustness_grid, run_sweep, sample_prior, SweepKind, SWEEP_HEADER};
use ivae_core::dataio::{
    self, atomic_write, load_checkpoint, load_mnist, read_csv, save_checkpoint, write_csv, write_grid, ImageBatch,
    Split,
};
use ivae_core::deen::{train_deen, EnergyModel};
use ivae_core::equivalence::{check_theorem1, check_theorem2, EquivalenceReport};
use ivae_core::gradsuite::{gradcheck_suite, TOLERANCE};
use ivae_core::noise::{corrupt, CorruptorSpec, RngStream};
use ivae_core::vae::{train, DecoderSpec, ModelShape, Schedule};

use crate::args::*;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags; nothing has been read or written.
    Usage(String),
    Runtime(ivae_core::Error),
}

impl From<ivae_core::Error> for Failure {
    fn from(e: ivae_core::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// Maps a core validation error to a usage error naming `flag`.
fn check(flag: &str, r: ivae_core::Result<()>) -> Outcome {
    r.map_err(|e| Failure::Usage(format!("{flag}: {e}")))
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Denoise(a) => denoise_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::FitPowerlaw(a) => fit_cmd(a),
        Command::CheckEquivalence(a) => equivalence_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::SynthData(a) => synth_cmd(a),
    }
}

fn shape(arch: &Architecture) -> Result<ModelShape, Failure> {
    let mut shape = if arch.paper_arch { ModelShape::full_size() } else { ModelShape::desk() };
    if let Some(dz) = arch.dz {
        shape.d_z = dz;
    }
    check("--dz", shape.validate())?;
    Ok(shape)
}

fn schedule(opt: &Optimization) -> Result<Schedule, Failure> {
    let s = Schedule { epochs: opt.epochs, batch_size: opt.batch_size, lr: opt.lr, seed: opt.seed };
    check("--batch-size/--lr/--epochs", s.validate())?;
    Ok(s)
}

fn positive_limit(flag: &str, limit: Option<usize>) -> Outcome {
    if limit == Some(0) {
        return usage(format!("{flag} must be at least 1"));
    }
    Ok(())
}

fn load(dir: &Path, split: Split, limit: Option<usize>) -> Result<(ImageBatch, dataio::LabelBatch), Failure> {
    let (images, labels) = load_mnist(dir, split)?;
    match limit {
        Some(n) if n < images.n() => {
            let idx: Vec<usize> = (0..n).collect();
            Ok((images.head(n)?, dataio::LabelBatch::new(idx.iter().map(|&i| labels.labels()[i]).collect())?))
        }
        _ => Ok((images, labels)),
    }
}

fn decoder_spec(a: &TrainArgs) -> Result<DecoderSpec, Failure> {
    let need = |v: Option<f64>, flag: &str| match v {
        Some(v) => Ok(v),
        None => usage(format!("--model {} requires {flag}", model_name(a.model))),
    };
    let forbid = |v: Option<f64>, flag: &str| match v {
        Some(_) => usage(format!("{flag} is not used by --model {}", model_name(a.model))),
        None => Ok(()),
    };
    let spec = match a.model {
        ModelChoice::Sigma => {
            forbid(a.alpha, "--alpha")?;
            if a.beta != 1.0 {
                return usage("--beta must be 1 for --model sigma; use --model beta");
            }
            DecoderSpec::gaussian(need(a.sigma, "--sigma")?)
        }
        ModelChoice::Beta => {
            forbid(a.alpha, "--alpha")?;
            DecoderSpec::gaussian(need(a.sigma, "--sigma")?).with_beta(a.beta)
        }
        ModelChoice::Alpha => {
            forbid(a.sigma, "--sigma")?;
            DecoderSpec::laplace(need(a.alpha, "--alpha")?).with_beta(a.beta)
        }
        ModelChoice::Bernoulli => {
            forbid(a.sigma, "--sigma")?;
            forbid(a.alpha, "--alpha")?;
            DecoderSpec::bernoulli().with_beta(a.beta)
        }
        ModelChoice::Deen => unreachable!("DEEN has no decoder"),
    };
    check("--sigma/--alpha/--beta", spec.validate())?;
    Ok(spec)
}

fn model_name(m: ModelChoice) -> &'static str {
    match m {
        ModelChoice::Sigma => "sigma",
        ModelChoice::Alpha => "alpha",
        ModelChoice::Beta => "beta",
        ModelChoice::Bernoulli => "bernoulli",
        ModelChoice::Deen => "deen",
    }
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let sched = schedule(&a.opt)?;
    let shape = shape(&a.arch)?;
    positive_limit("--limit", a.limit)?;
    if a.model == ModelChoice::Deen {
        let sigma = match a.sigma {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return usage(format!("--sigma must be > 0, got {s}")),
            None => return usage("--model deen requires --sigma"),
        };
        if a.alpha.is_some() || a.beta != 1.0 || a.arch.dz.is_some() {
            return usage("--alpha, --beta and --dz are not used by --model deen");
        }
        let hidden = if a.arch.paper_arch {
            ModelShape::full_size().encoder_hidden
        } else {
            EnergyModel::<f32>::DESK_HIDDEN.to_vec()
        };
        let (data, _) = load(&a.data, Split::Train, a.limit)?;
        let ckpt = train_deen(&data, sigma, &hidden, &sched)?;
        save_checkpoint(&ckpt, &a.out)?;
    } else {
        let spec = decoder_spec(&a)?;
        let (data, _) = load(&a.data, Split::Train, a.limit)?;
        let ckpt = train(&data, &spec, &shape, &sched)?;
        save_checkpoint(&ckpt, &a.out)?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Outcome {
    if a.mc_samples == 0 {
        return usage("--mc-samples must be at least 1");
    }
    positive_limit("--limit", a.limit)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let (test, _) = load(&a.data, Split::Test, a.limit)?;
    let row = analysis::metrics(&ckpt, test.data(), &mut RngStream::new(a.seed, "metrics"), a.mc_samples)?;
    write_csv(&SWEEP_HEADER, &[(ckpt.kind.name().to_string(), row.values())], &a.out)?;
    println!("kl={} mse={} elbo={} ratio={}", row.kl, row.mse, row.elbo, row.ratio);
    Ok(())
}

pub fn parse_indices(list: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("--indices: {part:?} is not an index or range a-b");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if b < a {
                    return Err(format!("--indices: empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("--indices selects no images".into());
    }
    Ok(out)
}

pub fn parse_reals(flag: &str, list: &str) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = list.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("{flag}: {list:?} is not a comma-separated list of numbers")),
    }
}

fn corruptor(c: &Corruption) -> Result<CorruptorSpec, Failure> {
    let spec = match c.kind {
        NoiseKind::Gaussian => CorruptorSpec::Gaussian { sigma: c.param },
        NoiseKind::Laplace => CorruptorSpec::Laplace { alpha: c.param },
        NoiseKind::Saltpepper => CorruptorSpec::SaltPepper { p: c.param },
    };
    check("--param", spec.validate())?;
    if c.cols == 0 {
        return usage("--cols must be at least 1");
    }
    Ok(spec)
}

fn selected(c: &Corruption) -> Result<ImageBatch, Failure> {
    let indices = parse_indices(&c.indices).map_err(Failure::Usage)?;
    let (test, _) = load(&c.data, Split::Test, None)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= test.n()) {
        return usage(format!("--indices: {bad} is beyond the {} test images", test.n()));
    }
    Ok(test.select(&indices)?)
}

fn corrupt_cmd(a: CorruptArgs) -> Outcome {
    let spec = corruptor(&a.noise)?;
    parse_indices(&a.noise.indices).map_err(Failure::Usage)?;
    let clean = selected(&a.noise)?;
    let noisy = corrupt(&clean, &spec, &mut RngStream::new(a.noise.seed, "corrupt"))?;
    write_grid(&noisy, a.noise.cols, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn denoise_cmd(a: DenoiseArgs) -> Outcome {
    let spec = corruptor(&a.noise)?;
    parse_indices(&a.noise.indices).map_err(Failure::Usage)?;
    if let Some(s) = a.deen_sigma {
        if !(s > 0.0 && s.is_finite()) {
            return usage(format!("--deen-sigma must be > 0, got {s}"));
        }
    }
    let paths: Vec<PathBuf> = a.ckpt.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect();
    if paths.is_empty() {
        return usage("--ckpt lists no checkpoints");
    }
    let mut models = Vec::new();
    for p in &paths {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
        models.push((name, load_checkpoint(p)?));
    }
    let clean = selected(&a.noise)?;
    let out = robustness_grid(
        &models,
        &clean,
        &spec,
        &RngStream::new(a.noise.seed, "denoise"),
        &a.out,
        a.noise.cols,
        a.deen_sigma,
    )?;
    for row in &out.rows {
        println!("{} mse_to_clean={}", row.model, row.mse_to_clean);
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Outcome {
    let grid = parse_reals("--grid", &a.grid).map_err(Failure::Usage)?;
    let kind = match a.kind {
        SweepChoice::Gaussian => SweepKind::Gaussian,
        SweepChoice::Laplace => SweepKind::Laplace,
    };
    for &p in &grid {
        check("--grid", kind.spec(p).validate())?;
    }
    if a.mc_samples == 0 {
        return usage("--mc-samples must be at least 1");
    }
    positive_limit("--limit", a.limit)?;
    positive_limit("--test-limit", a.test_limit)?;
    let sched = schedule(&a.opt)?;
    let shape = shape(&a.arch)?;
    let (train_data, _) = load(&a.data, Split::Train, a.limit)?;
    let (test, _) = load(&a.data, Split::Test, a.test_limit)?;
    let out = run_sweep(&grid, kind, &train_data, &test, &shape, &sched, a.mc_samples, &a.out)?;
    println!("wrote {}", out.table.display());
    let fit = out.fit?;
    print!("{fit}");
    Ok(())
}

fn fit_cmd(a: FitArgs) -> Outcome {
    let table = read_csv(&a.input)?;
    let col = |name: &str| {
        table.column(name).ok_or_else(|| {
            Failure::Runtime(ivae_core::Error::InvalidParameter(format!(
                "{} has no {name:?} column",
                a.input.display()
            )))
        })
    };
    let params = table.reals(col("param")?)?;
    let kls = table.reals(col("kl")?)?;
    let fit = fit_power_law(&params.into_iter().zip(kls).collect::<Vec<_>>())?;
    let report = fit.to_string();
    atomic_write(&a.out, report.as_bytes())?;
    print!("{report}");
    Ok(())
}

fn equivalence_cmd(a: EquivalenceArgs) -> Outcome {
    let shape = shape(&a.arch)?;
    for (flag, v) in [("--p1", a.p1), ("--p2", a.p2)] {
        if !(v > 0.0 && v.is_finite()) {
            return usage(format!("{flag} must be > 0, got {v}"));
        }
    }
    if a.trials == 0 {
        return usage("--trials must be at least 1");
    }
    let stream = RngStream::new(a.seed, "equivalence");
    let report = if a.theorem == 1 {
        check_theorem1(a.p1, a.p2, &shape, a.trials, &stream)?
    } else {
        check_theorem2(a.p1, a.p2, &shape, a.trials, &stream)?
    };
    println!("{report}");
    if let Some(out) = &a.out {
        let text = format!("{}\n{}\n", EquivalenceReport::CSV_HEADER, report.csv_row());
        atomic_write(out, text.as_bytes())?;
    }
    Ok(())
}

fn sample_cmd(a: SampleArgs) -> Outcome {
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    if a.cols == 0 {
        return usage("--cols must be at least 1");
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    sample_prior(&ckpt, a.n, &mut RngStream::new(a.seed, "prior"), &a.out, a.cols)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Outcome {
    let entries = gradcheck_suite(a.full)?;
    let mut failed = Vec::new();
    for e in &entries {
        let verdict = if e.passes() { "PASS" } else { "FAIL" };
        println!(
            "{:<28} max_rel_err={:.3e} max_abs_err_small={:.3e} checked={} {verdict}",
            e.name, e.report.max_rel_err, e.report.max_abs_err_small, e.report.checked
        );
        if !e.passes() {
            failed.push(e.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(ivae_core::Error::InvalidParameter(format!(
            "gradient checks above tolerance {TOLERANCE:e}: {}",
            failed.join(", ")
        ))))
    }
}

fn synth_cmd(a: SynthArgs) -> Outcome {
    if a.n_train == 0 || a.n_test == 0 {
        return usage("--n-train and --n-test must be at least 1");
    }
    dataio::synthetic::write_synthetic_mnist(&a.out, a.n_train, a.n_test, a.seed)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
