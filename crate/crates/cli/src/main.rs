use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Axis;

use hear::eval::{build_contamination_mask, detect_outlier_trials, evaluate_subject, EvaluationOptions, OutlierCriteria};
use hear::io::{
    load_model, metric_records, read_events, read_recording, run_stream, save_model, write_events, write_recording,
    Recording,
};
use hear::sim::{simulate_subject_seeded, PopDecay, SimulationSpec};
use hear::{calibrate, CalibrationModel, Corrector, ElectrodeMontage, Exec, HearConfig, InterpolationMatrix, Mode};

#[derive(Parser)]
#[command(name = "hear", version, about = "Remove electrode pops and drifts from multichannel EEG")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated subjects with clean references and ground-truth events.
    Simulate(SimulateArgs),
    /// Learn reference variances from resting data.
    Calibrate(CalibrateArgs),
    /// Correct a recording, or a framed stream on stdin/stdout.
    Correct(CorrectArgs),
    /// Score a corrected recording against its clean reference.
    Evaluate(EvaluateArgs),
    /// List outlier trials.
    Detect(DetectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DecayArg {
    Rate,
    TimeConstant,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    subjects: usize,
    #[arg(long, default_value_t = 12)]
    rest_trials: usize,
    #[arg(long, default_value_t = 60)]
    reach_trials: usize,
    /// How the pop decay range is read.
    #[arg(long, value_enum, default_value = "rate")]
    pop_decay: DecayArg,
    #[arg(long)]
    out: PathBuf,
}

/// Corrector hyper-parameters; unset values keep the model's (or the defaults).
#[derive(Args, Clone, Copy)]
struct HearArgs {
    /// Variance estimation window (s).
    #[arg(long)]
    t_est: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    /// Number of interpolation neighbors.
    #[arg(long)]
    k: Option<usize>,
}

impl HearArgs {
    fn apply(&self, mut config: HearConfig) -> HearConfig {
        if let Some(v) = self.t_est {
            config.t_est = v;
        }
        if let Some(v) = self.phi {
            config.phi = v;
        }
        if let Some(v) = self.xi {
            config.xi = v;
        }
        if let Some(v) = self.k {
            config.k_neighbors = v;
        }
        config
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    montage: PathBuf,
    /// Resting recording.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep outlier trials in the calibration set.
    #[arg(long)]
    no_screen: bool,
    #[command(flatten)]
    hear: HearArgs,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    montage: PathBuf,
    #[arg(long, value_enum, default_value = "online")]
    mode: ModeArg,
    /// Recording to correct (ignored with --stream).
    #[arg(long, required_unless_present = "stream")]
    input: Option<PathBuf>,
    #[arg(long, required_unless_present = "stream")]
    out: Option<PathBuf>,
    /// Also write the artifact probabilities as a recording.
    #[arg(long)]
    p_art: Option<PathBuf>,
    /// Correct framed samples from stdin to stdout (online only).
    #[arg(long)]
    stream: bool,
    /// With --stream: write per-frame probabilities to this file.
    #[arg(long, requires = "stream")]
    side_channel: Option<PathBuf>,
    #[command(flatten)]
    hear: HearArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Online,
    Offline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Online => Mode::Online,
            ModeArg::Offline => Mode::Offline,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    corrected: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value = "sub-01")]
    subject: String,
    #[arg(long, default_value = "hear")]
    algorithm: String,
    /// Contamination threshold (µV).
    #[arg(long, default_value_t = hear::eval::DEFAULT_MASK_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    criteria: CriteriaArgs,
}

#[derive(Args, Clone, Copy)]
struct CriteriaArgs {
    /// Amplitude limit (µV).
    #[arg(long, default_value_t = 200.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 6.0)]
    z_probability: f64,
    #[arg(long, default_value_t = 4.0)]
    z_variance: f64,
    #[arg(long, default_value_t = 6.0)]
    z_kurtosis: f64,
}

impl From<CriteriaArgs> for OutlierCriteria {
    fn from(a: CriteriaArgs) -> Self {
        OutlierCriteria {
            amplitude_threshold: a.amplitude,
            probability_z: a.z_probability,
            variance_z: a.z_variance,
            kurtosis_z: a.z_kurtosis,
            ..OutlierCriteria::default()
        }
    }
}

fn load_montage(path: &Path) -> anyhow::Result<ElectrodeMontage> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ElectrodeMontage::parse(&text)?)
}

fn open_recording(path: &Path) -> anyhow::Result<Recording> {
    read_recording(path).with_context(|| format!("reading {}", path.display()))
}

fn simulate(args: &SimulateArgs, exec: Exec) -> anyhow::Result<()> {
    let spec = SimulationSpec {
        seed: args.seed,
        n_subjects: args.subjects,
        n_rest_trials: args.rest_trials,
        n_reach_trials: args.reach_trials,
        pop_decay: match args.pop_decay {
            DecayArg::Rate => PopDecay::Rate,
            DecayArg::TimeConstant => PopDecay::TimeConstant,
        },
        ..SimulationSpec::default()
    };
    spec.validate()?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("simulation.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    for s in 0..spec.n_subjects {
        let dir = args.out.join(format!("sub-{:02}", s + 1));
        std::fs::create_dir_all(&dir)?;
        let data = simulate_subject_seeded(&spec, spec.subject_seed(s), exec)?;
        let labels = data.montage.labels();
        std::fs::write(dir.join("montage.txt"), data.montage.to_text())?;
        for (name, trials) in [
            ("rest.hrec", &data.rest),
            ("reach.hrec", &data.reach),
            ("reach_clean.hrec", &data.reach_clean),
        ] {
            let rec = Recording::from_trials(data.f_s, labels.clone(), trials.view())?;
            write_recording(dir.join(name), &rec)?;
        }
        write_events(BufWriter::new(File::create(dir.join("events.jsonl"))?), &data.events)?;
        log::info!("wrote {} ({} events)", dir.display(), data.events.len());
    }
    Ok(())
}

fn calibrate_cmd(args: &CalibrateArgs) -> anyhow::Result<()> {
    let montage = load_montage(&args.montage)?;
    let rec = open_recording(&args.input)?;
    check_labels(&rec, &montage)?;
    let config = args.hear.apply(HearConfig::with_f_s(rec.header.f_s));
    let mut trials = rec.trials()?;
    if !args.no_screen {
        let report = detect_outlier_trials(trials.view(), &OutlierCriteria::default())?;
        let keep: Vec<usize> = (0..report.n_trials()).filter(|&t| !report.is_flagged(t)).collect();
        if keep.is_empty() {
            bail!("every calibration trial was flagged as an outlier; rerun with --no-screen");
        }
        if keep.len() < report.n_trials() {
            log::info!("screening dropped trials {:?}", report.flagged());
            trials = trials.select(Axis(0), &keep);
        }
    }
    let model = calibrate(trials.view(), &config, &montage)?;
    save_model(&model, &args.out)?;
    Ok(())
}

fn check_labels(rec: &Recording, montage: &ElectrodeMontage) -> anyhow::Result<()> {
    if rec.header.labels != montage.labels() {
        bail!(hear::Error::Inconsistency(
            "recording channel labels differ from the montage".into()
        ));
    }
    Ok(())
}

fn build_corrector(model: CalibrationModel, montage: &ElectrodeMontage, hear: &HearArgs) -> anyhow::Result<Corrector> {
    model.check_montage(montage)?;
    let config = hear.apply(model.config);
    let d = InterpolationMatrix::build(montage, config.k_neighbors)?;
    Ok(Corrector::new(Arc::new(model), Arc::new(d), &config)?)
}

fn correct_cmd(args: &CorrectArgs, exec: Exec) -> anyhow::Result<()> {
    let montage = load_montage(&args.montage)?;
    let model = load_model(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let mut corrector = build_corrector(model, &montage, &args.hear)?;
    let mode = Mode::from(args.mode);

    if args.stream {
        if mode != Mode::Online {
            bail!(hear::Error::InvalidConfig("streaming correction is online only".into()));
        }
        let stdin = io::stdin().lock();
        let stdout = io::stdout().lock();
        let summary = match &args.side_channel {
            Some(path) => {
                let mut side = BufWriter::new(File::create(path)?);
                run_stream(stdin, stdout, Some(&mut side), &mut corrector)?
            }
            None => run_stream(stdin, stdout, None, &mut corrector)?,
        };
        log::info!("corrected {} frames", summary.frames);
        return Ok(());
    }

    let (Some(input), Some(out)) = (&args.input, &args.out) else {
        bail!("--input and --out are required without --stream");
    };
    let rec = open_recording(input)?;
    check_labels(&rec, &montage)?;
    // every trial starts from the calibration reference
    let spans = rec.spans();
    let results = exec.try_map_indexed(spans.len(), |i| {
        let mut c = corrector.clone();
        c.correct(rec.trial(spans[i]), mode)
    })?;
    let mut corrected = rec.data.clone();
    let mut p_art = rec.data.clone();
    for (span, r) in spans.iter().zip(results) {
        let range = ndarray::s![.., span.start_sample..span.start_sample + span.length];
        corrected.slice_mut(range).assign(&r.corrected);
        p_art.slice_mut(range).assign(&r.p_art);
    }
    write_recording(out, &Recording::from_parts(rec.header.clone(), corrected)?)?;
    if let Some(path) = &args.p_art {
        let mut header = rec.header.clone();
        header.labels = header.labels.iter().map(|l| format!("p_{l}")).collect();
        write_recording(path, &Recording::from_parts(header, p_art)?)?;
    }
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs, exec: Exec) -> anyhow::Result<()> {
    let clean = open_recording(&args.clean)?;
    let corrected = open_recording(&args.corrected)?;
    if clean.header.labels != corrected.header.labels || clean.header.trials != corrected.header.trials {
        bail!(hear::Error::Inconsistency("clean and corrected recordings differ in layout".into()));
    }
    let events = read_events(BufReader::new(
        File::open(&args.events).with_context(|| format!("reading {}", args.events.display()))?,
    ))?;
    let clean = clean.trials()?;
    let f_s = corrected.header.f_s;
    let corrected = corrected.trials()?;
    let mask = build_contamination_mask(&events, clean.dim(), f_s, args.epsilon)?;
    let metrics = evaluate_subject(
        clean.view(),
        corrected.view(),
        &mask,
        f_s,
        &EvaluationOptions::default(),
        exec,
    )?;
    let mut out = io::stdout().lock();
    for r in metric_records(&args.subject, &args.algorithm, &metrics) {
        writeln!(out, "{r}")?;
    }
    Ok(())
}

fn detect_cmd(args: &DetectArgs, exec: Exec) -> anyhow::Result<()> {
    let rec = open_recording(&args.input)?;
    let trials = rec.trials()?;
    let report = hear::eval::detect_outlier_trials_with(trials.view(), &args.criteria.into(), exec)?;
    let mut out = io::stdout().lock();
    for t in report.flagged() {
        let names: Vec<String> = report
            .criteria_for(t)
            .iter()
            .map(|c| serde_json::to_value(c).map(|v| v.as_str().unwrap_or_default().to_string()))
            .collect::<Result<_, _>>()?;
        writeln!(out, "trial={t} criteria={}", names.join(","))?;
    }
    Ok(())
}

fn error_name(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<hear::Error>() {
        e.name()
    } else if err.downcast_ref::<io::Error>().is_some() {
        "IoError"
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        "JsonError"
    } else {
        "Error"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, exec),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Correct(a) => correct_cmd(a, exec),
        Command::Evaluate(a) => evaluate_cmd(a, exec),
        Command::Detect(a) => detect_cmd(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e:#}", error_name(&e));
            ExitCode::FAILURE
        }
    }
}
