use std::path::Path;
use std::process::Command;

const SMALL: &[&str] = &[
    "synth.streams=4",
    "synth.pages=12",
    "lda.k=4",
    "lda.iterations=20",
    "lda.fold_in=5",
    "text_cnn.embed_dim=8",
    "text_cnn.filters=6",
    "text_cnn.dense=5",
    "text_cnn.max_seq_len=40",
    "image_cnn.channels=2,2",
    "image_cnn.dense=4",
    "fusion.hidden=6",
    "train.max_epochs=2",
];

fn pss(args: &[&str], dir: &Path) -> String {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pss"));
    cmd.current_dir(dir).args(args);
    if !matches!(args[0], "segment" | "evaluate") {
        for kv in SMALL {
            cmd.args(["--set", kv]);
        }
    }
    let out = cmd.output().expect("spawn pss");
    assert!(
        out.status.success(),
        "pss {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn staged_commands_chain_through_model_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = pss(&["synth", "--out", "data", "--seed", "3"], dir);
    assert!(manifest.trim().ends_with("manifest.csv"), "{manifest}");
    let m = "data/manifest.csv";

    pss(&["prepare", "--manifest", m, "--out", "prep"], dir);
    assert!(dir.join("prep/vocab.tsv").is_file());
    let tokens = std::fs::read_to_string(dir.join("prep/tokens.tsv")).unwrap();
    assert_eq!(tokens.lines().count(), 48);
    assert_eq!(std::fs::read_dir(dir.join("prep/pages")).unwrap().count(), 48);

    let v = "prep/vocab.tsv";
    pss(&["train-lda", "--manifest", m, "--vocab", v, "--out", "lda.bin"], dir);
    pss(
        &[
            "train-svm", "--manifest", m, "--vocab", v, "--lda", "lda.bin", "--features",
            "unigrams,topics,topicdiff,prev", "--out", "svm.txt",
        ],
        dir,
    );
    let svm = std::fs::read_to_string(dir.join("svm.txt")).unwrap();
    assert!(svm.starts_with("#bias\t"));
    assert!(svm.lines().any(|l| l.starts_with("PREV#")));

    pss(&["train-cnn-text", "--manifest", m, "--vocab", v, "--out", "text.pssnn"], dir);
    pss(&["train-cnn-image", "--manifest", m, "--out", "image.pssnn"], dir);
    pss(
        &[
            "train-fusion", "--manifest", m, "--vocab", v, "--lda", "lda.bin", "--text-model",
            "text.pssnn", "--image-model", "image.pssnn", "--out", "fusion.pssnn",
        ],
        dir,
    );

    let csv = pss(
        &[
            "segment", "--manifest", m, "--classifier", "fusion", "--model", "fusion.pssnn",
            "--vocab", v, "--lda", "lda.bin", "--text-model", "text.pssnn", "--image-model",
            "image.pssnn",
        ],
        dir,
    );
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("stream_id,doc_id,first_page,last_page"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert!(!rows.is_empty());
    for stream in rows.iter().map(|r| r[0].clone()).collect::<std::collections::BTreeSet<_>>() {
        let docs: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == stream).collect();
        assert_eq!(docs[0][2], "0");
        assert_eq!(docs.last().unwrap()[3], "11");
        for pair in docs.windows(2) {
            let end: usize = pair[0][3].parse().unwrap();
            let start: usize = pair[1][2].parse().unwrap();
            assert_eq!(start, end + 1);
        }
    }

    std::fs::write(dir.join("seg.csv"), &csv).unwrap();
    let report = pss(&["evaluate", "--manifest", m, "--segments", "seg.csv"], dir);
    assert!(report.contains("all pages: accuracy"), "{report}");
    assert!(report.contains("excluding first pages"), "{report}");

    let svm_csv = pss(
        &[
            "segment", "--manifest", m, "--classifier", "svm", "--model", "svm.txt", "--vocab", v,
            "--lda", "lda.bin", "--features", "unigrams,topics,topicdiff,prev",
        ],
        dir,
    );
    assert!(svm_csv.starts_with("stream_id,doc_id,first_page,last_page\n"));
}

#[test]
fn gold_segmentation_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pss(&["synth", "--out", "data"], dir);
    let manifest = std::fs::read_to_string(dir.join("data/manifest.csv")).unwrap();
    let mut streams: std::collections::BTreeMap<String, Vec<(usize, bool)>> = Default::default();
    for line in manifest.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        streams
            .entry(f[0].to_string())
            .or_default()
            .push((f[1].parse().unwrap(), f[4] == "ND"));
    }
    let mut csv = String::from("stream_id,doc_id,first_page,last_page\n");
    for (id, mut pages) in streams {
        pages.sort();
        let starts: Vec<usize> = pages.iter().filter(|(p, nd)| *nd || *p == 0).map(|x| x.0).collect();
        for (doc, &start) in starts.iter().enumerate() {
            let end = starts.get(doc + 1).map_or(pages.len(), |&n| n) - 1;
            csv.push_str(&format!("{id},{doc},{start},{end}\n"));
        }
    }
    std::fs::write(dir.join("gold.csv"), csv).unwrap();
    let report = pss(&["evaluate", "--manifest", "data/manifest.csv", "--segments", "gold.csv"], dir);
    assert!(report.contains("all pages: accuracy 1.0000  kappa 1.0000"), "{report}");
}

#[test]
fn rejects_unknown_override() {
    let out = Command::new(env!("CARGO_BIN_EXE_pss"))
        .args(["synth", "--out", "x", "--set", "svm.gamma=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("svm.gamma"));
}
