//! End-to-end tests of the `corpusforge` binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corpusforge"))
}

fn write_tone_wav(path: &Path, freq: f64, seconds: f64) {
    let sr = 16000u32;
    let n = (seconds * sr as f64) as usize;
    let spec = hound_spec(sr);
    let mut writer = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..n {
        let t = i as f64 / sr as f64;
        let s = 0.5 * (2.0 * std::f64::consts::PI * freq * t).sin();
        writer.write_sample((s * 32767.0) as i16).unwrap();
    }
    writer.finalize().unwrap();
}

fn hound_spec(sr: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: sr,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

#[test]
fn ingest_then_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    for i in 0..3 {
        write_tone_wav(&corpus.join(format!("utt{i}.wav")), 220.0 + 110.0 * i as f64, 1.0);
        std::fs::write(corpus.join(format!("utt{i}.txt")), format!("utterance {i}")).unwrap();
    }
    std::fs::write(corpus.join("metadata.txt"), "speaker: Test Reader\n").unwrap();

    let manifest = dir.path().join("manifest.jsonl");
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{
  "paths": {{
    "corpus_root": {root:?},
    "manifest": {manifest:?},
    "output_dir": {out:?}
  }},
  "selection": {{ "scorer_name": null }},
  "split": {{ "n_dev": 1, "n_test": 1 }}
}}"#,
            root = corpus,
            manifest = manifest,
            out = dir.path().join("out")
        ),
    )
    .unwrap();

    let status = bin()
        .args(["--config"])
        .arg(&config_path)
        .args(["ingest", "--source", "test", "--out"])
        .arg(&manifest)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(manifest.is_file());

    let output = bin()
        .args(["--config"])
        .arg(&config_path)
        .arg("pipeline")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("config_hash="), "{stdout}");
    assert!(dir.path().join("out/selected.jsonl").is_file());
    assert!(dir.path().join("out/class_summary.csv").is_file());
}

#[test]
fn config_env_var_fallback_and_bad_config_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, r#"{"bogus_key": 1}"#).unwrap();
    let output = bin()
        .env("CORPUSFORGE_CONFIG", &config_path)
        .arg("pipeline")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "bad config is an input error");
}

#[test]
fn missing_manifest_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{"paths": {{"manifest": {:?}}}}}"#,
            dir.path().join("nope.jsonl")
        ),
    )
    .unwrap();
    let output = bin()
        .args(["--config"])
        .arg(&config_path)
        .arg("pipeline")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn synth_gl_empty_dir_succeeds_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let mels = dir.path().join("mels");
    std::fs::create_dir_all(&mels).unwrap();
    let output = bin()
        .args(["synth-gl", "--mel-dir"])
        .arg(&mels)
        .arg("--out")
        .arg(dir.path().join("wavs"))
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("nothing to synthesize"));
}

#[test]
fn speakers_links_variants() {
    let dir = tempfile::tempdir().unwrap();
    let entries = dir.path().join("entries.txt");
    std::fs::write(
        &entries,
        "Barack Obama\nBarack Obama/the US President\nBarack  Obama\nJohn Doe\n",
    )
    .unwrap();
    let out = dir.path().join("speakers.csv");
    let status = bin()
        .args(["speakers", "--entries"])
        .arg(&entries)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.contains("Barack Obama,3,3"), "{csv}");
    assert!(csv.contains("John Doe,1,1"), "{csv}");
}

#[test]
fn eval_self_comparison_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ref_dir = dir.path().join("ref");
    let syn_dir = dir.path().join("syn");
    std::fs::create_dir_all(&ref_dir).unwrap();
    std::fs::create_dir_all(&syn_dir).unwrap();
    write_tone_wav(&ref_dir.join("a.wav"), 440.0, 1.0);
    std::fs::copy(ref_dir.join("a.wav"), syn_dir.join("a.wav")).unwrap();

    // Manifest with one segment referencing the audio.
    let manifest = dir.path().join("manifest.jsonl");
    std::fs::write(
        &manifest,
        format!(
            "{}\n{}\n",
            r#"{"source_name":"t","created_at":"2026-01-01T00:00:00Z","tool_version":"0.1.0"}"#,
            format!(
                r#"{{"id":"a","audio_path":{:?},"start_s":0.0,"end_s":1.0,"speaker_id":"s","transcript_raw":"hello broadcast world","sample_rate_hz":16000}}"#,
                ref_dir.join("a.wav")
            )
        ),
    )
    .unwrap();
    let hyps = dir.path().join("hyps.jsonl");
    std::fs::write(
        &hyps,
        r#"{"segment_id":"a","hypothesis_text":"hello broadcast world"}"#,
    )
    .unwrap();

    let out = dir.path().join("report");
    let output = bin()
        .args(["eval", "--ref-dir"])
        .arg(&ref_dir)
        .arg("--syn-dir")
        .arg(&syn_dir)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--hyps")
        .arg(&hyps)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.contains("a,synth-gl,N/A,no,0.0,0.0,0.0 ± 0.0"), "{csv}");
    assert!(csv.lines().last().unwrap().starts_with("# tool_version="), "{csv}");

    // report command re-renders the table from the CSV.
    let rerender = bin()
        .args(["report", "--csv"])
        .arg(out.join("report.csv"))
        .output()
        .unwrap();
    assert!(rerender.status.success());
    assert!(String::from_utf8_lossy(&rerender.stdout).contains("WER"));
}
