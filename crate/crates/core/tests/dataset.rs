use std::collections::HashSet;
use std::fs;

use jnf_core::acoustics::speech::synthetic_utterance;
use jnf_core::dataset::{
    check_disjoint, generate_sample, manifest_path, read_manifest, simulate_dataset, snr_summary, write_manifest,
    Corpus, Dataset, Split, SplitCounts, SAMPLE_RATE, SOURCES_PER_SAMPLE,
};
use jnf_core::signal::{write_wav, WavFormat, Waveform};
use jnf_core::Error;

fn tiny_counts() -> SplitCounts {
    SplitCounts {
        train: 2,
        validation: 1,
        test: 1,
    }
}

#[test]
fn split_names_parse() {
    for s in Split::ALL {
        assert_eq!(s.name().parse::<Split>().unwrap(), s);
    }
    assert_eq!("val".parse::<Split>().unwrap(), Split::Validation);
    assert!("dev".parse::<Split>().is_err());
    assert_eq!(SplitCounts::default().total(), 7600);
}

#[test]
fn generated_samples_are_seeded_and_independent() {
    let corpus = Corpus::synthetic(0.5);
    let a = generate_sample(&corpus, Split::Train, 3, 9).unwrap();
    let b = generate_sample(&corpus, Split::Train, 3, 9).unwrap();
    let c = generate_sample(&corpus, Split::Train, 4, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.sample.noisy, c.sample.noisy);
    assert_eq!(a.id, "train-00003");
    assert_eq!(a.sources.len(), SOURCES_PER_SAMPLE);
    assert_eq!(a.sample.noisy.num_channels(), 3);
    assert_eq!(a.sample.noisy.len(), SAMPLE_RATE as usize / 2);
    let residual = &a.sample.noisy.data - &a.sample.noise.data - &a.sample.reverberant_target().data;
    assert!(residual.iter().all(|v| *v == 0.0));
}

#[test]
fn simulated_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = Corpus::synthetic(0.5);
    let ds = simulate_dataset(dir.path(), &corpus, tiny_counts(), 4).unwrap();
    let train = ds.records(Split::Train).unwrap();
    assert_eq!(train.len(), 2);
    let loaded = ds.load(&train[1]).unwrap();
    let fresh = generate_sample(&corpus, Split::Train, 1, 4).unwrap();
    assert_eq!(train[1].sources, fresh.sources);
    assert_eq!(train[1].seed, fresh.seed);
    assert_eq!(train[1].snr_db, fresh.sample.snr_db);
    let worst = (&loaded.noisy.data - &fresh.sample.noisy.data)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let peak = fresh.sample.noisy.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= peak * 1e-7, "{worst} vs peak {peak}");

    let reopened = Dataset::open(dir.path()).unwrap();
    assert_eq!(reopened.splits, ds.splits);
    assert_eq!(reopened.load_split(Split::Test).unwrap().len(), 1);

    let ids: HashSet<&str> = Split::ALL
        .iter()
        .flat_map(|s| ds.records(*s).unwrap())
        .flat_map(|r| r.sources.iter().map(String::as_str))
        .collect();
    assert_eq!(ids.len(), 4 * SOURCES_PER_SAMPLE);
}

#[test]
fn manifests_are_validated_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let ds = simulate_dataset(dir.path(), &Corpus::synthetic(0.5), tiny_counts(), 5).unwrap();
    let train = ds.records(Split::Train).unwrap().to_vec();
    let test = ds.records(Split::Test).unwrap().to_vec();

    let mut leaked = test.clone();
    leaked[0].sources[2] = train[0].sources[0].clone();
    write_manifest(&manifest_path(dir.path(), Split::Test), &leaked).unwrap();
    assert!(matches!(Dataset::open(dir.path()), Err(Error::Dataset(_))));
    assert!(check_disjoint(&[(Split::Train, &train), (Split::Test, &leaked)]).is_err());
    assert!(check_disjoint(&[(Split::Train, &train), (Split::Test, &test)]).is_ok());

    let mut mislabeled = test.clone();
    mislabeled[0].split = Split::Train;
    assert!(check_disjoint(&[(Split::Test, &mislabeled)]).is_err());

    let dup = vec![train[0].clone(), train[0].clone()];
    let path = dir.path().join("dup.jsonl");
    write_manifest(&path, &dup).unwrap();
    assert!(matches!(read_manifest(&path), Err(Error::Dataset(_))));

    fs::remove_file(dir.path().join(&train[1].noise)).unwrap();
    assert!(matches!(
        read_manifest(&manifest_path(dir.path(), Split::Train)),
        Err(Error::Dataset(_))
    ));

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(Dataset::open(empty.path()), Err(Error::Dataset(_))));
}

#[test]
fn directory_corpus_partitions_utterances() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    fs::create_dir_all(corpus_dir.join("speaker")).unwrap();
    for n in 0..24 {
        let seconds = if n % 2 == 0 { 0.4 } else { 0.25 };
        let wave = Waveform::mono(synthetic_utterance(n, seconds, SAMPLE_RATE), SAMPLE_RATE);
        let sub = if n < 12 { corpus_dir.clone() } else { corpus_dir.join("speaker") };
        write_wav(sub.join(format!("utt{n:02}.wav")), &wave, WavFormat::Pcm16).unwrap();
    }
    fs::write(corpus_dir.join("notes.txt"), "ignored").unwrap();

    let corpus = Corpus::directory(&corpus_dir, tiny_counts(), 1).unwrap();
    let Corpus::Directory { files, pools } = &corpus else {
        panic!("expected a directory corpus");
    };
    assert_eq!(files.len(), 24);
    let mut seen = HashSet::new();
    for pool in pools.values() {
        assert!(pool.len() >= SOURCES_PER_SAMPLE);
        for i in pool {
            assert!(seen.insert(*i));
        }
    }
    assert_eq!(seen.len(), 24);

    let ds = simulate_dataset(&dir.path().join("data"), &corpus, tiny_counts(), 1).unwrap();
    for split in Split::ALL {
        for r in ds.records(split).unwrap() {
            let unique: HashSet<&String> = r.sources.iter().collect();
            assert_eq!(unique.len(), SOURCES_PER_SAMPLE);
        }
    }

    let err = Corpus::directory(&corpus_dir.join("speaker"), tiny_counts(), 1).unwrap_err();
    assert!(err.to_string().contains("at least 18"), "{err}");
}

#[test]
fn snr_summary_statistics() {
    let s = snr_summary(&[-10.0, -4.0, 0.0, 2.0, 3.0]);
    assert_eq!(s.count, 5);
    assert!((s.mean_db - (-1.8)).abs() < 1e-12);
    let var = [(-8.2f64), -2.2, 1.8, 3.8, 4.8].iter().map(|d| d * d).sum::<f64>() / 5.0;
    assert!((s.std_db - var.sqrt()).abs() < 1e-12);
    assert!((s.in_band - 0.6).abs() < 1e-12);
}
