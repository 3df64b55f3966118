use std::fs;
use std::io::{self, Write};
use std::path::Path;

use jnf_core::acoustics::RenderedSample;
use jnf_core::dataset::{simulate_dataset, snr_summary, Corpus, Dataset, ManifestRecord, Split, SAMPLE_RATE};
use jnf_core::evaluation::{
    evaluate as evaluate_pipelines, format_table, mean_ci95, run_pipeline, write_reports, EvalReport,
    ExternalMetric, PipelineSpec,
};
use jnf_core::neural::{build_model, ModelConfig, Variant};
use jnf_core::signal::{read_wav, stft, write_magnitude_csv, write_wav, StftParams, WavFormat, Waveform};
use jnf_core::training::{train as train_model, ExampleSource, TrainingExample};

use crate::config::{snapshot, EvaluateSection, LoadedConfig, ModelSection, SimulateSection};
use crate::error::CliError;
use crate::{EnhanceArgs, EvaluateArgs, ExportArgs, SimulateArgs, TrainArgs};

/// Samples held in memory at once during evaluation.
const EVAL_CHUNK: usize = 64;

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn print_snr(split: &str, records: &[ManifestRecord]) {
    let snrs: Vec<f64> = records.iter().map(|r| r.snr_db).collect();
    let s = snr_summary(&snrs);
    println!(
        "{split:<6} n={:<6} snr mean {:>6.2} dB  std {:>5.2} dB  in [-9, 2] dB {:>5.1}%",
        s.count,
        s.mean_db,
        s.std_db,
        100.0 * s.in_band
    );
}

pub fn simulate(loaded: &LoadedConfig, seed: Option<u64>, args: SimulateArgs) -> Result<(), CliError> {
    let mut effective = loaded.config.clone();
    if let Some(seed) = seed {
        effective.seed = seed;
    }
    let mut section = effective.simulate.clone().unwrap_or_default();
    if let Some(out) = args.out {
        section.out_dir = out;
    }
    if let Some(n) = args.train {
        section.train = n;
    }
    if let Some(n) = args.val {
        section.validation = n;
    }
    if let Some(n) = args.test {
        section.test = n;
    }
    if let Some(dir) = args.corpus {
        section.corpus = Some(dir);
        section.synthetic = false;
    }
    if args.synthetic {
        section.synthetic = true;
        section.corpus = None;
    }
    if let Some(s) = args.seconds {
        section.utterance_seconds = s;
    }
    effective.simulate = Some(section.clone());

    let corpus = corpus_of(&section, effective.seed)?;
    snapshot(&section.out_dir, loaded, &effective)?;
    let dataset = simulate_dataset(&section.out_dir, &corpus, section.counts(), effective.seed)?;
    println!("dataset written to {}", section.out_dir.display());
    let mut all = Vec::new();
    for split in Split::ALL {
        if let Ok(records) = dataset.records(split) {
            print_snr(split.name(), records);
            all.extend_from_slice(records);
        }
    }
    print_snr("all", &all);
    Ok(())
}

fn corpus_of(section: &SimulateSection, seed: u64) -> Result<Corpus, CliError> {
    match (&section.corpus, section.synthetic) {
        (_, true) => {
            if !(section.utterance_seconds > 0.0) {
                return Err(CliError::Config("utterance_seconds must be positive".into()));
            }
            Ok(Corpus::synthetic(section.utterance_seconds))
        }
        (Some(dir), false) => {
            if !dir.is_dir() {
                return Err(CliError::MissingFile(format!("corpus directory {}", dir.display())));
            }
            Ok(Corpus::directory(dir, section.counts(), seed)?)
        }
        (None, false) => Err(CliError::Config("either a corpus directory or --synthetic is required".into())),
    }
}

/// Training examples loaded from disk on demand, optionally passed through
/// an input pipeline whose output the network refines.
struct DatasetSource<'a> {
    dataset: &'a Dataset,
    records: &'a [ManifestRecord],
    input: Option<PipelineSpec>,
    stft: StftParams,
}

impl DatasetSource<'_> {
    fn sample(&self, index: usize) -> jnf_core::Result<RenderedSample> {
        self.dataset.load(&self.records[index])
    }
}

impl ExampleSource for DatasetSource<'_> {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn example(&self, index: usize) -> jnf_core::Result<TrainingExample> {
        let sample = self.sample(index)?;
        match &self.input {
            None => Ok(TrainingExample::from_rendered(&sample)),
            Some(spec) => Ok(TrainingExample {
                noisy: run_pipeline(spec, &sample, &self.stft)?,
                speech: sample.target_aligned.channel_vec(0),
                noise: None,
            }),
        }
    }
}

fn parse_hidden(text: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(CliError::Config(format!("invalid --hidden {text:?}"))),
        },
        _ => Err(CliError::Config(format!("--hidden takes two sizes, got {text:?}"))),
    }
}

pub fn train(loaded: &LoadedConfig, seed: Option<u64>, args: TrainArgs) -> Result<(), CliError> {
    let mut effective = loaded.config.clone();
    if let Some(seed) = seed {
        effective.seed = seed;
    }
    let mut model_section = effective.model.clone().unwrap_or_default();
    if let Some(v) = &args.variant {
        model_section.variant = v.parse::<Variant>().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(h) = &args.hidden {
        model_section.hidden = Some(parse_hidden(h)?);
    }
    let mut section = effective.train.clone().unwrap_or_default();
    if let Some(d) = args.dataset {
        section.dataset = d;
    }
    if let Some(d) = args.run_dir {
        section.run_dir = d;
    }
    if let Some(i) = args.input {
        section.input = Some(i);
    }
    if let Some(n) = args.epochs {
        section.max_epochs = n;
    }
    if let Some(n) = args.patience {
        section.patience = n;
    }
    if let Some(n) = args.batch_size {
        section.batch_size = n;
    }
    if let Some(s) = args.crop_seconds {
        section.crop_seconds = s;
    }
    if let Some(lr) = args.learning_rate {
        section.learning_rate = lr;
    }
    effective.model = Some(model_section.clone());
    effective.train = Some(section.clone());

    let model_config = resolve_model(&model_section, effective.seed);
    let input = section.input.as_deref().map(PipelineSpec::parse).transpose()?;
    check_input(&model_config, input.as_ref())?;
    let model = build_model(&model_config)?;
    let dataset = Dataset::open(&section.dataset)?;
    let stft = StftParams::new(512, SAMPLE_RATE);
    let source = |split| -> Result<DatasetSource<'_>, CliError> {
        Ok(DatasetSource {
            dataset: &dataset,
            records: dataset.records(split)?,
            input: input.clone(),
            stft,
        })
    };
    let train_set = source(Split::Train)?;
    let val_set = source(Split::Validation)?;
    snapshot(&section.run_dir, loaded, &effective)?;
    log::info!(
        "training {} ({} parameters) on {} samples, validating on {}",
        model_config.variant,
        model.num_parameters(),
        train_set.len(),
        val_set.len()
    );
    let state = train_model(
        model,
        &train_set,
        &val_set,
        &section.train_config(effective.seed),
        stft,
        Some(&section.run_dir),
    )?;
    println!(
        "best epoch {} validation loss {:.6} checkpoint {}",
        state.best_epoch,
        state.best_validation_loss,
        section.run_dir.join("best.json").display()
    );
    Ok(())
}

fn resolve_model(section: &ModelSection, seed: u64) -> ModelConfig {
    let cfg = ModelConfig::new(section.variant).with_seed(seed);
    match section.hidden {
        Some(h) => cfg.with_hidden(h),
        None => cfg,
    }
}

/// A pipeline in front of the network yields one channel, which only the
/// post-filter accepts; a post-filter on raw input sees channel 0.
fn check_input(cfg: &ModelConfig, input: Option<&PipelineSpec>) -> Result<(), CliError> {
    if input.is_some() && cfg.variant.is_spatial() {
        return Err(CliError::Model(format!(
            "variant {} needs the multichannel mixture, but an input pipeline produces one channel",
            cfg.variant
        )));
    }
    Ok(())
}

pub fn enhance(args: EnhanceArgs) -> Result<(), CliError> {
    let spec = PipelineSpec::parse(&args.filter)?;
    let noisy = read_wav(&args.input)?;
    let noise = match &args.noise {
        Some(path) => {
            let noise = read_wav(path)?;
            if noise.data.dim() != noisy.data.dim() || noise.sample_rate != noisy.sample_rate {
                return Err(CliError::Input(format!(
                    "noise file {} does not match the input shape",
                    path.display()
                )));
            }
            noise
        }
        None if args.filter.split('+').any(|s| s.trim() == "mvdr-oracle") => {
            return Err(CliError::Config("mvdr-oracle needs --noise".into()));
        }
        None => Waveform::zeros(noisy.num_channels(), noisy.len(), noisy.sample_rate),
    };
    let sample = RenderedSample {
        target_aligned: Waveform::zeros(1, noisy.len(), noisy.sample_rate),
        noisy,
        noise,
        snr_db: f64::NAN,
        scene: None,
    };
    let out = run_pipeline(&spec, &sample, &StftParams::new(512, sample.noisy.sample_rate))?;
    write_wav(&args.output, &out, WavFormat::Float32)?;
    Ok(())
}

pub fn evaluate(loaded: &LoadedConfig, seed: Option<u64>, args: EvaluateArgs) -> Result<(), CliError> {
    let mut effective = loaded.config.clone();
    if let Some(seed) = seed {
        effective.seed = seed;
    }
    let mut section: EvaluateSection = effective.evaluate.clone().unwrap_or_default();
    if let Some(d) = args.dataset {
        section.dataset = d;
    }
    if let Some(p) = args.pipelines {
        section.pipelines = p.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(s) = args.split {
        section.split = s;
    }
    if let Some(o) = args.out {
        section.out_dir = o;
    }
    if let Some(m) = args.external_metric {
        section.external_metric = Some(m);
    }
    effective.evaluate = Some(section.clone());

    let split: Split = section
        .split
        .parse()
        .map_err(|e: jnf_core::Error| CliError::Config(e.to_string()))?;
    if section.pipelines.is_empty() {
        return Err(CliError::Config("no pipelines to evaluate".into()));
    }
    let specs = section
        .pipelines
        .iter()
        .map(|p| Ok(PipelineSpec::parse(p)?.with_tag(p.clone())))
        .collect::<Result<Vec<_>, CliError>>()?;
    let external = section
        .external_metric
        .as_deref()
        .map(|cmd| ExternalMetric::from_command(cmd, section.out_dir.join("scratch")))
        .transpose()?;
    let dataset = Dataset::open(&section.dataset)?;
    let records = dataset.records(split)?;
    snapshot(&section.out_dir, loaded, &effective)?;

    let stft = StftParams::new(512, SAMPLE_RATE);
    let mut reports: Vec<EvalReport> = Vec::new();
    for chunk in records.chunks(EVAL_CHUNK) {
        let samples = chunk
            .iter()
            .map(|r| Ok((r.id.clone(), dataset.load(r)?)))
            .collect::<jnf_core::Result<Vec<_>>>()?;
        let part = evaluate_pipelines(&specs, &samples, split.name(), &stft, external.as_ref())?;
        if reports.is_empty() {
            reports = part;
        } else {
            for (acc, p) in reports.iter_mut().zip(part) {
                acc.samples.extend(p.samples);
            }
        }
    }
    for r in &mut reports {
        let deltas: Vec<f64> = r.samples.iter().map(|s| s.delta).collect();
        (r.mean_delta, r.ci95) = mean_ci95(&deltas);
        r.count = r.samples.len();
    }
    write_reports(&section.out_dir, &reports)?;
    if external.is_some() {
        let _ = fs::remove_dir(section.out_dir.join("scratch"));
    }
    print!("{}", format_table(&reports));
    Ok(())
}

pub fn export_spectrogram(args: ExportArgs) -> Result<(), CliError> {
    let wave = read_wav(&args.input)?;
    if args.channel >= wave.num_channels() {
        return Err(CliError::Input(format!(
            "channel {} out of range for {} channels",
            args.channel,
            wave.num_channels()
        )));
    }
    let spec = stft(&wave, &StftParams::new(512, wave.sample_rate))?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            write_magnitude_csv(&spec, args.channel, file)?;
        }
        None => {
            let stdout = io::stdout();
            write_magnitude_csv(&spec, args.channel, stdout.lock())?;
            io::stdout().flush().map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_sizes_parse() {
        assert_eq!(parse_hidden("64, 32").unwrap(), (64, 32));
        assert!(parse_hidden("64").is_err());
        assert!(parse_hidden("a,b").is_err());
    }

    #[test]
    fn input_pipeline_requires_post_filter() {
        let spec = PipelineSpec::parse("mvdr-oracle").unwrap();
        assert!(check_input(&ModelConfig::new(Variant::Pf), Some(&spec)).is_ok());
        let err = check_input(&ModelConfig::new(Variant::FtJnf), Some(&spec)).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }
}
