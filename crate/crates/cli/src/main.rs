use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use liftml::controller::{score_to_percent, KeywordScores, PERSON_CLASS};
use liftml::dsp::{build_spectrogram, quantize_features, AudioBuffer, SPECTROGRAM_SAMPLES};
use liftml::nn::{inspect_report, parse_model, Arena, ModelGraph, DEFAULT_ARENA_BYTES};
use liftml::sim::fixtures::write_fixtures;
use liftml::sim::{bench_report, bench_runs, load_scenario, read_wav, simulate, SimConfig};
use liftml::vision::{preprocess, read_pgm, ResizeMethod};
use liftml::QuantTensor;

#[derive(Parser)]
#[command(
    name = "liftml",
    version,
    about = "Floor-unit tinyML stack: frontends, int8 engine and scenario simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 49x43 log-mel spectrogram of the last second of a WAV file
    Features {
        wav: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run an image model on a PGM frame
    InferImage {
        pgm: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ARENA_BYTES)]
        arena: usize,
    },
    /// Run a keyword model on the last second of a WAV file
    InferAudio {
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ARENA_BYTES)]
        arena: usize,
    },
    /// Layer table, flash size and arena plan of a model file
    Inspect {
        tmlf: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ARENA_BYTES)]
        arena: usize,
    },
    /// Replay a scenario and print its transcript
    Run {
        scenario: PathBuf,
        #[arg(long)]
        pd: PathBuf,
        #[arg(long)]
        kws: PathBuf,
        /// key=value settings file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the transcript here instead of stdout
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Replay a scenario N times and report phase latencies and budgets
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        pd: PathBuf,
        #[arg(long)]
        kws: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write stub models, synthetic media and demo scenarios into a directory
    Fixtures { dir: PathBuf },
}

type Res<T> = Result<T, String>;

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> Res<ModelGraph> {
    parse_model(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Res<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            SimConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

/// Clips shorter than a second are preceded by silence.
fn load_audio(path: &Path) -> Res<AudioBuffer> {
    let audio = read_wav(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    let short = SPECTROGRAM_SAMPLES.saturating_sub(audio.len());
    if short == 0 {
        return Ok(audio);
    }
    let mut samples = vec![0; short];
    samples.extend_from_slice(audio.samples());
    Ok(AudioBuffer::from_samples(samples))
}

fn invoke(model: &ModelGraph, input: &QuantTensor, arena: usize) -> Res<QuantTensor> {
    if input.shape != *model.input_shape() {
        return Err(format!(
            "model {} expects input {}, got {}",
            model.name(),
            model.input_shape(),
            input.shape
        ));
    }
    let mut arena = Arena::new(arena);
    let token = arena.activate_tenant(model).map_err(|e| e.to_string())?;
    arena.invoke(token, model, input).map_err(|e| e.to_string())
}

fn print_scores(out: &QuantTensor) {
    let cfg = liftml::ControllerConfig::default();
    println!("scores {:?}", out.data);
    match out.data.len() {
        2 => {
            let s = out.data[PERSON_CLASS];
            let pct = score_to_percent(s);
            let verdict = if pct >= cfg.detect_threshold_pct {
                "person"
            } else {
                "no person"
            };
            println!("person score={s} pct={pct} -> {verdict}");
        }
        6 => {
            let k = KeywordScores::from_output(out).expect("six scores");
            let top = k.top();
            let pct = score_to_percent(k.0[top]);
            let decision = liftml::controller::decide_keyword(&k, &cfg)
                .map_or("none".to_string(), |f| format!("floor {f}"));
            println!(
                "top={} pct={pct} -> {decision}",
                KeywordScores::CLASSES[top]
            );
        }
        _ => {}
    }
}

fn execute(cmd: Command) -> Res<ExitCode> {
    match cmd {
        Command::Features { wav, csv } => {
            let spec = build_spectrogram(&load_audio(&wav)?).map_err(|e| e.to_string())?;
            match csv {
                Some(p) => write(&p, spec.to_csv().as_bytes())?,
                None => print!("{}", spec.to_csv()),
            }
        }
        Command::InferImage { pgm, model, arena } => {
            let model = load_model(&model)?;
            let img = read_pgm(&read(&pgm)?).map_err(|e| format!("{}: {e}", pgm.display()))?;
            print_scores(&invoke(
                &model,
                &preprocess(&img, ResizeMethod::Bilinear),
                arena,
            )?);
        }
        Command::InferAudio { wav, model, arena } => {
            let model = load_model(&model)?;
            let spec = build_spectrogram(&load_audio(&wav)?).map_err(|e| e.to_string())?;
            let input = quantize_features(&spec, model.input_params());
            print_scores(&invoke(&model, &input, arena)?);
        }
        Command::Inspect { tmlf, arena } => {
            print!("{}", inspect_report(&load_model(&tmlf)?, arena));
        }
        Command::Run {
            scenario,
            pd,
            kws,
            config,
            transcript,
        } => {
            let (pd, kws) = (load_model(&pd)?, load_model(&kws)?);
            let cfg = load_config(config.as_deref())?;
            let scn = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let out = simulate(&scn, &pd, &kws, &cfg).map_err(|e| e.to_string())?;
            match transcript {
                Some(p) => write(&p, out.transcript.to_string().as_bytes())?,
                None => print!("{}", out.transcript),
            }
            let failed = out.stats.expectations.iter().filter(|e| !e.passed).count();
            println!(
                "expectations {} passed, {failed} failed",
                out.stats.expectations.len() - failed
            );
            if let Some(f) = out.first_failure() {
                eprintln!(
                    "line {}: expected {}, got {}",
                    f.line, f.expectation, f.actual
                );
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench {
            scenario,
            runs,
            pd,
            kws,
            config,
        } => {
            if runs == 0 {
                return Err("--runs must be at least 1".into());
            }
            let (pd, kws) = (load_model(&pd)?, load_model(&kws)?);
            let cfg = load_config(config.as_deref())?;
            let scn = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let stats = bench_runs(&scn, &pd, &kws, &cfg, runs).map_err(|e| e.to_string())?;
            print!("{}", bench_report(&stats, &pd, &kws));
            if stats
                .iter()
                .any(|s| s.expectations.iter().any(|e| !e.passed))
            {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Fixtures { dir } => {
            let fx = write_fixtures(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            for p in [
                &fx.person_model,
                &fx.keyword_model,
                &fx.happy,
                &fx.silence,
                &fx.nobody,
                &fx.two_units,
                &fx.config,
            ] {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
