//! End-to-end tests of the binary: pipeline wiring, exit codes, manifest
//! replay and output determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn groupsift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groupsift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, content: &str) {
    fs::write(path, content).unwrap();
}

/// Three users, three objects: u1 and u2 co-review m1 and m2, u3 links
/// m2 to m3. Weights from the similarity definition: (m1,m2) = 2/3,
/// (m2,m3) = 1/3.
fn tiny_edges() -> &'static str {
    "u1\tm1\nu1\tm2\nu2\tm1\nu2\tm2\nu3\tm2\nu3\tm3\n"
}

#[test]
fn detect_on_tiny_fixture_matches_hand_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    write(&edges, tiny_edges());
    let out = tmp.path().join("run");

    let result = groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--criterion",
        "topk",
        "--k",
        "3",
        "--min-outdeg",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--dump-osg",
    ]);
    assert!(result.status.success(), "{:?}", result);

    let osg = fs::read_to_string(out.join("osg.tsv")).unwrap();
    let lines: Vec<&str> = osg.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("m1\tm2\t2\t0\t"));
    assert!(lines[0].contains("0.6666666666666666"));
    assert!(lines[1].starts_with("m2\tm3\t1\t0\t"));
    assert!(lines[1].contains("0.3333333333333333"));

    // All three objects end in one group (the chain merges), whose users
    // with out-degree >= 2 are u1, u2 and u3.
    let partition = fs::read_to_string(out.join("partition.tsv")).unwrap();
    let groups: std::collections::HashSet<&str> = partition
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(groups.len(), 1);

    let reports = fs::read_to_string(out.join("reports.jsonl")).unwrap();
    let report: serde_json::Value = serde_json::from_str(reports.lines().next().unwrap()).unwrap();
    assert_eq!(report["size"], 3);
    let f1 = report["f1"].as_f64().unwrap();
    // Ordered-pair mean of {2/3, 2/3, 1/3, 1/3} over 3 * 2 pairs.
    assert!((f1 - 2.0 / 6.0).abs() < 1e-12);
    assert_eq!(report["users"].as_array().unwrap().len(), 3);
}

#[test]
fn empty_label_file_equals_no_label_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    write(&edges, tiny_edges());
    let labels = tmp.path().join("labels.txt");
    write(&labels, "# nobody labeled\n");

    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ])
    .status
    .success());

    for name in ["partition.tsv", "reports.jsonl", "summary.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn labels_shift_scores_through_the_labeled_component() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    write(&edges, tiny_edges());
    let labels = tmp.path().join("labels.txt");
    write(&labels, "u1\nu2\n");
    let out = tmp.path().join("run");

    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dump-osg",
    ])
    .status
    .success());

    // Labeled pass: only the (m1, m2) pair shares labeled users, overlap
    // 2, so the mean positive labeled overlap is 2 and s_l = 1.
    let osg = fs::read_to_string(out.join("osg.tsv")).unwrap();
    let first = osg.lines().next().unwrap();
    let cols: Vec<&str> = first.split('\t').collect();
    assert_eq!(cols[..4], ["m1", "m2", "2", "2"]);
    let s_l: f64 = cols[5].parse().unwrap();
    assert_eq!(s_l, 1.0);
    let c: f64 = cols[6].parse().unwrap();
    assert!((c - (2.0 / 3.0 + 1.0)).abs() < 1e-12);
}

#[test]
fn inject_is_seed_deterministic_and_eval_closes_the_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let inj_a = tmp.path().join("inj_a");
    let inj_b = tmp.path().join("inj_b");
    let inject_args = |out: &Path| {
        vec![
            "inject".to_string(),
            "--bg-users".into(),
            "400".into(),
            "--bg-objects".into(),
            "150".into(),
            "--bg-edges".into(),
            "2000".into(),
            "--bg-skew".into(),
            "0.3".into(),
            "--bg-seed".into(),
            "3".into(),
            "--group".into(),
            "users=60,objects=20,rho=0.6,theta=2,camo=random,seed=9".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let args_a = inject_args(&inj_a);
    assert!(
        groupsift(&args_a.iter().map(String::as_str).collect::<Vec<_>>())
            .status
            .success()
    );
    let args_b = inject_args(&inj_b);
    assert!(
        groupsift(&args_b.iter().map(String::as_str).collect::<Vec<_>>())
            .status
            .success()
    );
    for name in ["edges.tsv", "truth_users.txt", "truth_objects.txt"] {
        assert_eq!(
            fs::read(inj_a.join(name)).unwrap(),
            fs::read(inj_b.join(name)).unwrap(),
            "{name}"
        );
    }

    let run = tmp.path().join("run");
    assert!(groupsift(&[
        "detect",
        "--edges",
        inj_a.join("edges.tsv").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ])
    .status
    .success());

    let eval = groupsift(&[
        "eval",
        "--run",
        run.to_str().unwrap(),
        "--truth-users",
        inj_a.join("truth_users.txt").to_str().unwrap(),
        "--truth-objects",
        inj_a.join("truth_objects.txt").to_str().unwrap(),
    ]);
    assert!(eval.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&eval.stdout).expect("eval prints JSON");
    let auc = parsed["auc_objects"].as_f64().unwrap();
    assert!(auc > 0.99, "strong synchrony should be caught, got {auc}");
    assert!(run.join("eval.json").exists());
    assert!(run.join("sweep_objects.csv").exists());
}

#[test]
fn manifest_replay_reproduces_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    write(&edges, tiny_edges());
    let out_a = tmp.path().join("a");
    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ])
    .status
    .success());

    let out_b = tmp.path().join("b");
    assert!(groupsift(&[
        "detect",
        "--from-manifest",
        out_a.join("manifest.json").to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ])
    .status
    .success());
    for name in ["partition.tsv", "reports.jsonl", "summary.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn sweep_writes_aggregated_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let result = groupsift(&[
        "sweep",
        "--bg-users",
        "1000",
        "--bg-objects",
        "300",
        "--bg-edges",
        "5000",
        "--group-users",
        "50",
        "--group-objects",
        "20",
        "--rhos",
        "0.3,0.5",
        "--criteria",
        "lpa,topk",
        "--seeds",
        "0,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 2 * 2); // header + rho x criterion x seed
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
}

#[test]
fn exit_codes_reflect_error_classes() {
    let tmp = tempfile::tempdir().unwrap();

    // Usage error: unknown flag.
    let usage = groupsift(&["detect", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(1));

    // Usage error: missing required input.
    let usage = groupsift(&["detect"]);
    assert_eq!(usage.status.code(), Some(1));

    // Data error: nonexistent edge file.
    let missing = groupsift(&[
        "detect",
        "--edges",
        tmp.path().join("nope.tsv").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    // Data error: malformed row, diagnostic names the line.
    let bad = tmp.path().join("bad.tsv");
    write(&bad, "u1\tm1\t12\nu2\tm2\toops\n");
    let malformed = groupsift(&[
        "detect",
        "--edges",
        bad.to_str().unwrap(),
        "--attr-widths",
        "10",
        "--out",
        tmp.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(malformed.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&malformed.stderr);
    assert!(
        stderr.contains(":2:"),
        "diagnostic should name line 2: {stderr}"
    );

    // Data error: eval on a run with no positives in the truth files.
    let edges = tmp.path().join("edges.tsv");
    write(&edges, tiny_edges());
    let run = tmp.path().join("run");
    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ])
    .status
    .success());
    let empty_truth = tmp.path().join("truth.txt");
    write(&empty_truth, "");
    let eval = groupsift(&[
        "eval",
        "--run",
        run.to_str().unwrap(),
        "--truth-users",
        empty_truth.to_str().unwrap(),
        "--truth-objects",
        empty_truth.to_str().unwrap(),
    ]);
    assert_eq!(eval.status.code(), Some(2));
}

#[test]
fn workers_env_override_keeps_output_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = tmp.path().join("edges.tsv");
    // Big enough that the parallel paths actually engage.
    let mut content = String::new();
    let mut state = 5u64;
    for _ in 0..4000 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let u = state % 300;
        let m = (state >> 8) % 120;
        content.push_str(&format!("u{u}\tm{m}\n"));
    }
    write(&edges, &content);

    let out_a = tmp.path().join("a");
    assert!(groupsift(&[
        "detect",
        "--edges",
        edges.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ])
    .status
    .success());

    let out_b = tmp.path().join("b");
    let result = Command::new(env!("CARGO_BIN_EXE_groupsift"))
        .env("GROUPSIFT_WORKERS", "4")
        .args([
            "detect",
            "--edges",
            edges.to_str().unwrap(),
            "--out",
            out_b.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(result.status.success());

    for name in ["partition.tsv", "reports.jsonl", "summary.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name}"
        );
    }
}
