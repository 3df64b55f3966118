use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::Serialize;

use crate::acoustics::RenderedSample;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{mean_ci95, si_sdr};
use crate::evaluation::pipeline::{run_pipeline, PipelineSpec};
use crate::signal::{write_wav, StftParams, WavFormat, Waveform};

/// Scores of one pipeline on one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub pipeline: String,
    pub si_sdr_in: f64,
    pub si_sdr_out: f64,
    pub delta: f64,
    /// Score of the external metric, if one is attached.
    pub external: Option<f64>,
}

/// Per-sample and aggregate ΔSI-SDR of one pipeline on one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pipeline: String,
    pub split: String,
    pub count: usize,
    pub mean_delta: f64,
    pub ci95: f64,
    pub samples: Vec<SampleResult>,
}

/// External scoring program invoked as `<program> <args...> ref.wav est.wav`;
/// the last whitespace-separated token of its stdout is the score.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMetric {
    pub program: String,
    pub args: Vec<String>,
    /// Directory for the temporary WAV pair.
    pub scratch: PathBuf,
}

impl ExternalMetric {
    /// Splits a command line on whitespace.
    pub fn from_command(command: &str, scratch: PathBuf) -> Result<Self> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::ExternalMetric("empty metric command".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
            scratch,
        })
    }

    pub fn score(&self, reference: &Waveform, estimate: &Waveform, tag: &str) -> Result<f64> {
        fs::create_dir_all(&self.scratch).map_err(|e| Error::io(&self.scratch, e))?;
        let ref_path = self.scratch.join(format!("{tag}_ref.wav"));
        let est_path = self.scratch.join(format!("{tag}_est.wav"));
        write_wav(&ref_path, reference, WavFormat::Float32)?;
        write_wav(&est_path, estimate, WavFormat::Float32)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&ref_path)
            .arg(&est_path)
            .output()
            .map_err(|e| Error::ExternalMetric(format!("cannot run {}: {e}", self.program)))?;
        let _ = fs::remove_file(&ref_path);
        let _ = fs::remove_file(&est_path);
        if !out.status.success() {
            return Err(Error::ExternalMetric(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        stdout
            .split_whitespace()
            .last()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::ExternalMetric(format!("no numeric score in output {:?}", stdout.trim())))
    }
}

fn sanitize(tag: &str) -> String {
    tag.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Scores one pipeline output against the aligned target.
pub fn score_sample(
    spec: &PipelineSpec,
    id: &str,
    sample: &RenderedSample,
    params: &StftParams,
    external: Option<&ExternalMetric>,
) -> Result<SampleResult> {
    let target = sample.target_aligned.channel_vec(0);
    let reference = sample.noisy.channel_vec(0);
    let out = run_pipeline(spec, sample, params)?;
    let est = out.channel_vec(0);
    let si_sdr_in = si_sdr(&reference, &target)?;
    let si_sdr_out = si_sdr(&est, &target)?;
    let external = external
        .map(|m| {
            m.score(
                &sample.target_aligned.select_channel(0),
                &out,
                &sanitize(&format!("{}_{id}", spec.tag)),
            )
        })
        .transpose()?;
    Ok(SampleResult {
        sample_id: id.to_string(),
        pipeline: spec.tag.clone(),
        si_sdr_in,
        si_sdr_out,
        delta: si_sdr_out - si_sdr_in,
        external,
    })
}

/// Evaluates every pipeline on the same samples.
pub fn evaluate(
    pipelines: &[PipelineSpec],
    samples: &[(String, RenderedSample)],
    split: &str,
    params: &StftParams,
    external: Option<&ExternalMetric>,
) -> Result<Vec<EvalReport>> {
    if samples.is_empty() {
        return Err(Error::Dataset(format!("split {split} is empty")));
    }
    pipelines
        .iter()
        .map(|spec| {
            let results: Vec<SampleResult> = samples
                .par_iter()
                .map(|(id, s)| score_sample(spec, id, s, params, external))
                .collect::<Result<_>>()?;
            let deltas: Vec<f64> = results.iter().map(|r| r.delta).collect();
            let (mean_delta, ci95) = mean_ci95(&deltas);
            Ok(EvalReport {
                pipeline: spec.tag.clone(),
                split: split.to_string(),
                count: results.len(),
                mean_delta,
                ci95,
                samples: results,
            })
        })
        .collect()
}

/// Per-sample CSV: sample_id, pipeline, si_sdr_in, si_sdr_out, delta[, external].
pub fn write_results_csv<W: Write>(reports: &[EvalReport], mut out: W) -> Result<()> {
    let external = reports.iter().any(|r| r.samples.iter().any(|s| s.external.is_some()));
    let mut text = String::from("sample_id,pipeline,si_sdr_in,si_sdr_out,delta");
    if external {
        text.push_str(",external");
    }
    text.push('\n');
    for r in reports {
        for s in &r.samples {
            text.push_str(&format!(
                "{},{},{},{},{}",
                s.sample_id, s.pipeline, s.si_sdr_in, s.si_sdr_out, s.delta
            ));
            if external {
                text.push_str(&format!(",{}", s.external.map_or(String::new(), |v| v.to_string())));
            }
            text.push('\n');
        }
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<results csv>", e))
}

/// Summary CSV: pipeline, split, count, mean_delta_si_sdr, ci95.
pub fn write_summary_csv<W: Write>(reports: &[EvalReport], mut out: W) -> Result<()> {
    let mut text = String::from("pipeline,split,count,mean_delta_si_sdr,ci95\n");
    for r in reports {
        text.push_str(&format!("{},{},{},{},{}\n", r.pipeline, r.split, r.count, r.mean_delta, r.ci95));
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<summary csv>", e))
}

/// Aligned text table of the summary.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.pipeline.len()).max().unwrap_or(0).max("pipeline".len());
    let mut s = format!("{:<width$}  {:>6}  {:>16}\n", "pipeline", "n", "ΔSI-SDR [dB]");
    for r in reports {
        s.push_str(&format!(
            "{:<width$}  {:>6}  {:>8.2} ± {:<5.2}\n",
            r.pipeline, r.count, r.mean_delta, r.ci95
        ));
    }
    s
}

/// Writes `results.csv`, `summary.csv` and `summary.txt` into `dir`.
pub fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map_err(|e| Error::io(&path, e))
    };
    write_results_csv(reports, create("results.csv")?)?;
    write_summary_csv(reports, create("summary.csv")?)?;
    create("summary.txt")?
        .write_all(format_table(reports).as_bytes())
        .map_err(|e| Error::io(dir.join("summary.txt"), e))
}
