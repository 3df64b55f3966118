use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use jnf_core::dataset::{read_manifest, Dataset, Split};
use jnf_core::signal::{read_wav, write_wav, WavFormat, Waveform};
use ndarray::Array2;
use tempfile::TempDir;

fn jnf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jnf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jnf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code plus the single stderr error line.
fn fails(args: &[&str]) -> (i32, String) {
    let out = jnf(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    (out.status.code().unwrap(), lines[0].to_string())
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic dataset shared by the tests that need one.
fn dataset() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        ok(&[
            "simulate", "--out", path_str(&data), "--train", "20", "--val", "5", "--test", "5", "--synthetic",
            "--seconds", "1.0", "--seed", "7",
        ]);
        dir
    })
    .path()
}

fn data_dir() -> PathBuf {
    dataset().join("data")
}

fn noisy_file(dir: &Path) -> (PathBuf, Waveform) {
    let data = Array2::from_shape_fn((3, 4000), |(c, t)| ((t * (c + 3)) as f64 * 0.013).sin() * 0.3);
    let wave = Waveform::new(data, 16_000);
    let path = dir.join("noisy.wav");
    write_wav(&path, &wave, WavFormat::Float32).unwrap();
    let wave = read_wav(&path).unwrap();
    (path, wave)
}

#[test]
fn simulate_writes_valid_disjoint_manifests() {
    let data = data_dir();
    let ds = Dataset::open(&data).unwrap();
    assert_eq!(ds.records(Split::Train).unwrap().len(), 20);
    assert_eq!(ds.records(Split::Validation).unwrap().len(), 5);
    assert_eq!(ds.records(Split::Test).unwrap().len(), 5);
    for split in Split::ALL {
        for r in ds.records(split).unwrap() {
            assert!(data.join(&r.noisy).is_file());
            assert_eq!(r.split, split);
        }
    }
    assert!(data.join("config.resolved.toml").is_file());
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let out = ok(&[
            "simulate", "--out", path_str(out), "--train", "3", "--val", "1", "--test", "1", "--synthetic",
            "--seconds", "0.5", "--seed", "11",
        ]);
        assert!(out.contains("snr mean"));
    }
    for split in Split::ALL {
        let name = format!("{}.jsonl", split.name());
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let records = read_manifest(&a.join("train.jsonl")).unwrap();
    assert_eq!(
        fs::read(a.join(&records[0].noisy)).unwrap(),
        fs::read(b.join(&records[0].noisy)).unwrap()
    );
}

#[test]
fn simulate_defaults_follow_protocol_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n").unwrap();
    // An empty corpus fails before rendering; the snapshot is not written.
    let (code, line) = fails(&["--config", path_str(&cfg), "simulate", "--out", path_str(&dir.path().join("d"))]);
    assert_eq!(code, 2);
    assert!(line.starts_with("error kind=config code=2 "), "{line}");
    let counts = jnf_core::dataset::SplitCounts::default();
    assert_eq!((counts.train, counts.validation, counts.test), (6000, 1000, 600));
}

#[test]
fn enhance_identity_copies_reference_channel() {
    let dir = TempDir::new().unwrap();
    let (input, wave) = noisy_file(dir.path());
    let out = dir.path().join("out.wav");
    ok(&["enhance", "--filter", "identity", path_str(&input), path_str(&out)]);
    let got = read_wav(&out).unwrap();
    assert_eq!(got.num_channels(), 1);
    assert_eq!(got.channel_vec(0), wave.channel_vec(0));
}

#[test]
fn enhance_oracle_mvdr_with_noise_stem() {
    let dir = TempDir::new().unwrap();
    let (input, wave) = noisy_file(dir.path());
    let noise = dir.path().join("noise.wav");
    write_wav(&noise, &Waveform::new(wave.data.mapv(|v| 0.5 * v), 16_000), WavFormat::Float32).unwrap();
    let out = dir.path().join("out.wav");
    ok(&["enhance", "--filter", "mvdr-oracle", "--noise", path_str(&noise), path_str(&input), path_str(&out)]);
    let got = read_wav(&out).unwrap();
    assert_eq!(got.len(), wave.len());
    assert!(got.channel(0).iter().all(|v| v.is_finite()));

    let (code, _) = fails(&["enhance", "--filter", "mvdr-oracle", path_str(&input), path_str(&out)]);
    assert_eq!(code, 2);
}

#[test]
fn export_spectrogram_has_one_row_per_bin() {
    let dir = TempDir::new().unwrap();
    let (input, wave) = noisy_file(dir.path());
    let csv = ok(&["export-spectrogram", path_str(&input)]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 257);
    let frames = (wave.len() - 1) / 256 + 2;
    assert!(rows.iter().all(|r| r.split(',').count() == frames));
    assert!(rows.iter().flat_map(|r| r.split(',')).all(|v| v.parse::<f64>().unwrap() >= 0.0));

    let out = dir.path().join("spec.csv");
    ok(&["export-spectrogram", "--channel", "2", "--out", path_str(&out), path_str(&input)]);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 257);
}

#[test]
fn errors_have_distinct_codes_and_one_line() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.wav");
    let out = dir.path().join("out.wav");

    let (code, line) = fails(&["enhance", "--filter", "identity", path_str(&missing), path_str(&out)]);
    assert_eq!(code, 3);
    assert!(line.starts_with("error kind=missing-file code=3 message="), "{line}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nbatch = 3\n").unwrap();
    let (code, line) = fails(&["--config", path_str(&bad), "export-spectrogram", path_str(&missing)]);
    assert_eq!(code, 2);
    assert!(line.contains("kind=config"), "{line}");

    let ckpt = dir.path().join("broken.json");
    fs::write(&ckpt, "{\"body\": 1}").unwrap();
    let (input, _) = noisy_file(dir.path());
    let (code, line) = fails(&["enhance", "--filter", path_str(&ckpt), path_str(&input), path_str(&out)]);
    assert_eq!(code, 5);
    assert!(line.contains("kind=model-mismatch"), "{line}");

    let (code, _) = fails(&["evaluate", "--dataset", path_str(&missing), "--out", path_str(&dir.path().join("r"))]);
    assert_eq!(code, 6);

    let (code, line) = fails(&[
        "train", "--dataset", path_str(&data_dir()), "--run-dir", path_str(&dir.path().join("run")),
        "--variant", "ft-jnf", "--input", "mvdr-oracle",
    ]);
    assert_eq!(code, 5, "{line}");

    let (code, _) = fails(&["train", "--variant", "xl-jnf"]);
    assert_eq!(code, 2);
}

#[test]
fn train_then_evaluate_produces_run_dir_and_reports() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("run");
    let train_args = |run: &Path| -> Vec<String> {
        [
            "train", "--dataset", path_str(&data_dir()), "--run-dir", path_str(run), "--variant", "ft-jnf",
            "--hidden", "4,4", "--epochs", "2", "--batch-size", "4", "--crop-seconds", "0.25", "--seed", "5",
        ]
        .map(String::from)
        .to_vec()
    };
    let args = train_args(&run);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    for f in ["config.toml", "config.resolved.toml", "train_log.csv", "best.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 5") && resolved.contains("hidden = [") && resolved.contains("max_epochs = 2"));

    let again = dir.path().join("again");
    let args = train_args(&again);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        fs::read(run.join("best.json")).unwrap(),
        fs::read(again.join("best.json")).unwrap()
    );

    let ckpt = run.join("best.json");
    let pipelines = format!("identity,mvdr-oracle,{}", ckpt.display());
    let reports = dir.path().join("reports");
    let table = ok(&[
        "evaluate", "--dataset", path_str(&data_dir()), "--pipelines", &pipelines, "--split", "test", "--out",
        path_str(&reports),
    ]);
    assert!(table.contains("ΔSI-SDR"));
    let summary = fs::read_to_string(reports.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "pipeline,split,count,mean_delta_si_sdr,ci95");
    assert_eq!(lines.len(), 4);
    let identity: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(identity[0], "identity");
    assert_eq!(identity[2], "5");
    assert_eq!(identity[3].parse::<f64>().unwrap(), 0.0);

    let results = fs::read_to_string(reports.join("results.csv")).unwrap();
    let oracle: Vec<f64> = results
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("mvdr-oracle"))
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(oracle.len(), 5);
    let mean: f64 = oracle.iter().sum::<f64>() / 5.0;
    let reported: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
    assert!((mean - reported).abs() < 1e-9);
}

#[test]
fn post_filter_trains_on_beamformer_output() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("pf");
    ok(&[
        "train", "--dataset", path_str(&data_dir()), "--run-dir", path_str(&run), "--variant", "pf", "--hidden",
        "4,4", "--epochs", "1", "--batch-size", "4", "--crop-seconds", "0.25", "--input", "mvdr-oracle",
    ]);
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("input = \"mvdr-oracle\""));
    let pipeline = format!("mvdr-oracle+{}", run.join("best.json").display());
    let reports = dir.path().join("r");
    ok(&["evaluate", "--dataset", path_str(&data_dir()), "--pipelines", &pipeline, "--out", path_str(&reports)]);
    assert!(reports.join("summary.txt").is_file());
}
