//! Command-level behavior: exit codes, report and table formats, fixture
//! counts, and the end-to-end closure of simulate -> fit -> train -> evaluate
//! on the shipped fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU32, Ordering};

use banditkit::sparse::{cross_id, hash_token};

static DIR_SEQ: AtomicU32 = AtomicU32::new(0);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_banditkit")
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "banditkit-pipe-{}-{}",
        std::process::id(),
        DIR_SEQ.fetch_add(1, Ordering::SeqCst)
    ));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn assert_code(output: &Output, expected: i32) {
    assert_eq!(
        output.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn fit_counts_the_small_fixture() {
    let dir = scratch_dir();
    let out = dir.join("table.tsv");
    let output = run(&["fit", "--events", &fixture("events_small.txt"), "--out", out.to_str().unwrap()]);
    assert_code(&output, 0);
    let table = fs::read_to_string(&out).unwrap();
    assert!(table.contains("x1\ta1\t3\t4"), "table:\n{table}");
    assert!(table.contains("x1\ta2\t1\t4"));
    assert!(out.with_extension("tsv.manifest").exists());

    // Refitting the same input writes the same bytes.
    let out2 = dir.join("table2.tsv");
    let output = run(&["fit", "--events", &fixture("events_small.txt"), "--out", out2.to_str().unwrap()]);
    assert_code(&output, 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn usage_errors_exit_with_code_two() {
    let dir = scratch_dir();
    let out = dir.join("x");
    let o = out.to_str().unwrap();

    // Unmarked file cannot be fit with a segmented scope.
    for scope in ["split", "train"] {
        let output = run(&["fit", "--events", &fixture("events_small.txt"), "--scope", scope, "--out", o]);
        assert_code(&output, 2);
        assert!(String::from_utf8_lossy(&output.stderr).contains("#split"));
    }
    let output = run(&["fit", "--events", &fixture("events_small.txt"), "--scope", "bogus", "--out", o]);
    assert_code(&output, 2);

    // Zero simulated rounds.
    let output = run(&[
        "simulate",
        "--world", &fixture("warmstart_world.txt"),
        "--seq", &fixture("warmstart_seq.txt"),
        "--seed", "1",
        "--rounds", "0",
        "--out", o,
    ]);
    assert_code(&output, 2);

    // tau outside (0, 1].
    let table = dir.join("table.tsv");
    assert_code(
        &run(&["fit", "--events", &fixture("events_small.txt"), "--out", table.to_str().unwrap()]),
        0,
    );
    for tau in ["1.5", "0"] {
        let output = run(&[
            "evaluate",
            "--events", &fixture("events_small.txt"),
            "--table", table.to_str().unwrap(),
            "--tau", tau,
            "--policy", "random",
        ]);
        assert_code(&output, 2);
    }
}

#[test]
fn format_errors_exit_with_code_three_and_name_the_line() {
    let dir = scratch_dir();
    let bad = dir.join("bad.tsv");
    fs::write(&bad, "x1\ta1\t1\t-\t-\nx2\ta1\tnot-a-number\t-\t-\n").unwrap();
    let out = dir.join("table.tsv");
    let output = run(&["fit", "--events", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_code(&output, 3);
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));

    let empty = dir.join("empty.tsv");
    fs::write(&empty, "# nothing but comments\n").unwrap();
    let output = run(&["fit", "--events", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_code(&output, 3);
}

#[test]
fn evaluate_labels_rows_and_reports_the_zero_closed_form() {
    let dir = scratch_dir();
    let table = dir.join("table.tsv");
    assert_code(
        &run(&["fit", "--events", &fixture("events_small.txt"), "--out", table.to_str().unwrap()]),
        0,
    );

    // Random row carries the method label and the configured tau.
    let output = run(&[
        "evaluate",
        "--events", &fixture("events_small.txt"),
        "--table", table.to_str().unwrap(),
        "--tau", "0.05",
        "--policy", "random",
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.starts_with("method\ttau\tdelta\tT\testimate\tci_low\tci_high\n"));
    assert!(stdout.contains("Random\t0.05\t0.05\t4\t"), "report:\n{stdout}");

    // A policy that never matches the log scores exactly zero with the
    // closed-form upper endpoint (1 - (delta/2)^(1/T)) / tau.
    let catalog = dir.join("catalog.tsv");
    fs::write(&catalog, "a3\t999:1\n").unwrap();
    let model = dir.join("model.txt");
    let loved = cross_id(hash_token("sports"), 999);
    fs::write(
        &model,
        format!("intercept\t0\ntau\t0.05\nlearning_rate\t0.1\npasses\t1\n{loved}\t5.0\n"),
    )
    .unwrap();
    let output = run(&[
        "evaluate",
        "--events", &fixture("events_small.txt"),
        "--table", table.to_str().unwrap(),
        "--catalog", catalog.to_str().unwrap(),
        "--tau", "0.05",
        "--policy", &format!("naive:{}", model.to_str().unwrap()),
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "Naive");
    let estimate: f64 = row[4].parse().unwrap();
    let lo: f64 = row[5].parse().unwrap();
    let hi: f64 = row[6].parse().unwrap();
    assert_eq!(estimate, 0.0);
    assert_eq!(lo, 0.0);
    let closed_form = (1.0 - (0.025f64).powf(1.0 / 4.0)) / 0.05;
    assert!((hi - closed_form).abs() < 1e-6, "hi {hi} vs {closed_form}");
}

#[test]
fn train_emits_candidate_summaries_and_a_loadable_model() {
    let dir = scratch_dir();
    let events = dir.join("events.tsv");
    let table = dir.join("table.tsv");
    let model = dir.join("model.txt");
    assert_code(
        &run(&[
            "simulate",
            "--world", &fixture("warmstart_world.txt"),
            "--seq", &fixture("warmstart_seq.txt"),
            "--seed", "5",
            "--rounds", "2000",
            "--out", events.to_str().unwrap(),
        ]),
        0,
    );
    assert_code(&run(&["fit", "--events", events.to_str().unwrap(), "--out", table.to_str().unwrap()]), 0);
    let output = run(&[
        "train",
        "--events", events.to_str().unwrap(),
        "--table", table.to_str().unwrap(),
        "--tau", "0.05",
        "--out", model.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.matches("candidate\t").count(), 5, "stdout:\n{stdout}");
    assert_eq!(stdout.matches("selected\t").count(), 1);
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.contains("tau\t0.05"));
    banditkit::learner::parse_model(&text).unwrap();

    // The naive trainer warns that the weighted flag is ignored.
    let naive = dir.join("naive.txt");
    let output = run(&[
        "train",
        "--events", events.to_str().unwrap(),
        "--table", table.to_str().unwrap(),
        "--tau", "0.05",
        "--naive",
        "--out", naive.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    assert!(String::from_utf8_lossy(&output.stderr).contains("unweighted"));
}

#[test]
fn report_matches_the_golden_file() {
    let dir = scratch_dir();
    let events = dir.join("events.tsv");
    let actions = dir.join("actions.tsv");
    let table = dir.join("table.tsv");
    let model = dir.join("model.txt");
    let naive = dir.join("naive.txt");
    let report = dir.join("report.tsv");
    assert_code(
        &run(&[
            "simulate",
            "--world", &fixture("warmstart_world.txt"),
            "--seq", &fixture("warmstart_seq.txt"),
            "--seed", "42",
            "--rounds", "4000",
            "--out", events.to_str().unwrap(),
            "--catalog-out", actions.to_str().unwrap(),
        ]),
        0,
    );
    assert_code(&run(&["fit", "--events", events.to_str().unwrap(), "--out", table.to_str().unwrap()]), 0);
    for (flags, out) in [(vec![], &model), (vec!["--naive"], &naive)] {
        let mut args = vec![
            "train",
            "--events", events.to_str().unwrap(),
            "--table", table.to_str().unwrap(),
            "--tau", "0.05",
            "--seed", "7",
        ];
        args.extend(flags);
        args.extend(["--out", out.to_str().unwrap()]);
        assert_code(&run(&args), 0);
    }
    assert_code(
        &run(&[
            "evaluate",
            "--events", events.to_str().unwrap(),
            "--table", table.to_str().unwrap(),
            "--catalog", actions.to_str().unwrap(),
            "--tau", "0.05",
            "--policy", &format!("model:{}", model.to_str().unwrap()),
            "--policy", "random",
            "--policy", &format!("naive:{}", naive.to_str().unwrap()),
            "--out", report.to_str().unwrap(),
        ]),
        0,
    );
    let produced = fs::read_to_string(&report).unwrap();
    let golden = fs::read_to_string(fixture("golden_report.tsv")).unwrap();
    assert_eq!(produced, golden, "report drifted from the golden fixture");
}

#[test]
fn split_marker_separates_fit_scopes() {
    let dir = scratch_dir();
    let events = dir.join("events.tsv");
    assert_code(
        &run(&[
            "simulate",
            "--world", &fixture("warmstart_world.txt"),
            "--seq", &fixture("warmstart_seq.txt"),
            "--seed", "6",
            "--rounds", "1000",
            "--split-at", "600",
            "--out", events.to_str().unwrap(),
        ]),
        0,
    );
    let text = fs::read_to_string(&events).unwrap();
    assert!(text.contains("\n#split\n"));

    let counts = |scope: &str| -> u64 {
        let out = dir.join(format!("table-{scope}.tsv"));
        assert_code(
            &run(&[
                "fit",
                "--events", events.to_str().unwrap(),
                "--scope", scope,
                "--out", out.to_str().unwrap(),
            ]),
            0,
        );
        fs::read_to_string(out)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split('\t').nth(2).unwrap().parse::<u64>().unwrap())
            .sum()
    };
    assert_eq!(counts("all"), 1000);
    assert_eq!(counts("train"), 600);
    assert_eq!(counts("split"), 400);
}

#[test]
fn act_scores_candidates_and_picks_the_argmax() {
    let dir = scratch_dir();
    let catalog = dir.join("catalog.tsv");
    fs::write(&catalog, "up\t7:1\ndown\t8:1\n").unwrap();
    let model = dir.join("model.txt");
    let up = cross_id(3, 7);
    let down = cross_id(3, 8);
    fs::write(
        &model,
        format!("intercept\t0\ntau\t0.05\nlearning_rate\t0.1\npasses\t1\n{up}\t0.25\n{down}\t0.75\n"),
    )
    .unwrap();
    let output = run(&[
        "act",
        "--model", model.to_str().unwrap(),
        "--catalog", catalog.to_str().unwrap(),
        "--context", "3:1",
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("score\tup\t0.25"), "stdout:\n{stdout}");
    assert!(stdout.trim_end().ends_with("chosen\tdown"));

    // Restricting the candidate list flips the choice.
    let output = run(&[
        "act",
        "--model", model.to_str().unwrap(),
        "--catalog", catalog.to_str().unwrap(),
        "--context", "3:1",
        "--candidates", "up",
    ]);
    assert_code(&output, 0);
    assert!(String::from_utf8_lossy(&output.stdout).trim_end().ends_with("chosen\tup"));

    // Unknown candidate ids are data errors.
    let output = run(&[
        "act",
        "--model", model.to_str().unwrap(),
        "--catalog", catalog.to_str().unwrap(),
        "--context", "3:1",
        "--candidates", "sideways",
    ]);
    assert_code(&output, 3);
}
