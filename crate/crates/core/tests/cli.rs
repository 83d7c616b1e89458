use std::path::{Path, PathBuf};

use armm::output::{FitOutput, IcReportOutput};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("armm").chain(args.iter().copied());
    let code = armm::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulated(dir: &Path, case: &str, seed: &str) -> PathBuf {
    let path = dir.join(format!("case{case}_{seed}.csv"));
    let (code, _, err) = run(&["simulate", "--case", case, "--seed", seed, "--out", p(&path)]);
    assert_eq!(code, 0, "{err}");
    path
}

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("select"));
    let (code, out, _) = run(&["--version"]);
    assert_eq!(code, 0);
    assert!(out.contains(armm::VERSION));
    assert_eq!(run(&["fit", "--help"]).0, 0);
}

#[test]
fn bad_arguments_exit_3() {
    assert_eq!(run(&[]).0, 3);
    assert_eq!(run(&["frobnicate"]).0, 3);
    assert_eq!(run(&["fit", "x.csv"]).0, 3);
    assert_eq!(run(&["fit", "x.csv", "--groups", "two"]).0, 3);
    assert_eq!(run(&["simulate", "--out", "x.csv"]).0, 3);
    assert_eq!(run(&["simulate", "--case", "7", "--out", "/tmp/never-written.csv"]).0, 3);
    assert_eq!(run(&["bench", "--cases", "1", "--reps", "1", "--methods", "hsm"]).0, 3);
}

#[test]
fn empty_group_range_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let panel = simulated(dir.path(), "1", "1");
    let (code, _, err) = run(&["select", p(&panel), "--gmin", "3", "--gmax", "2"]);
    assert_eq!(code, 3);
    assert!(err.contains("group range"), "{err}");
}

#[test]
fn malformed_row_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "id,t,value\na,1,0.5\na,2,oops\n").unwrap();
    let (code, _, err) = run(&["fit", p(&path), "-g", "1"]);
    assert_eq!(code, 3);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_file_exits_2() {
    let (code, _, err) = run(&["fit", "/definitely/not/here.csv", "-g", "2"]);
    assert_eq!(code, 2);
    assert!(err.contains("/definitely/not/here.csv"));
}

#[test]
fn fit_is_deterministic_and_labels_reingest() {
    let dir = tempfile::tempdir().unwrap();
    let panel = simulated(dir.path(), "3", "5");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let labels = dir.path().join("labels.csv");
    for out in [&a, &b] {
        let (code, _, err) = run(&[
            "fit",
            p(&panel),
            "-g",
            "2",
            "--seed",
            "9",
            "--restarts",
            "4",
            "-o",
            p(out),
            "--labels-out",
            p(&labels),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let first: FitOutput = serde_json::from_slice(&ta).unwrap();
    assert!(first.converged);
    assert_eq!(first.groups.len(), 2);
    assert_eq!(first.labels.len(), 200);

    // Restarting from the saved responsibilities reproduces the fit in one sweep.
    let again = dir.path().join("again.json");
    let (code, _, err) =
        run(&["fit", p(&panel), "-g", "2", "--init-labels", p(&a), "--max-iter", "1", "-o", p(&again)]);
    assert_eq!(code, 0, "{err}");
    let second: FitOutput = serde_json::from_slice(&std::fs::read(&again).unwrap()).unwrap();
    assert_eq!(second.settings.init, "responsibilities");
    assert_eq!(second.iterations, 1);
    assert_eq!(second.zero_based_labels(), first.zero_based_labels());
    assert!((second.loglik - first.loglik).abs() <= 1e-8 * first.loglik.abs());

    let (code, _, err) = run(&["fit", p(&panel), "-g", "2", "--init-labels", p(&labels), "-o", p(&again)]);
    assert_eq!(code, 0, "{err}");
    let third: FitOutput = serde_json::from_slice(&std::fs::read(&again).unwrap()).unwrap();
    assert_eq!(third.settings.init, "labels");
    assert!(third.converged);
}

#[test]
fn select_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let panel = simulated(dir.path(), "5", "2");
    let table = dir.path().join("ic.csv");
    let (code, out, err) =
        run(&["select", p(&panel), "--gmin", "1", "--gmax", "3", "--restarts", "3", "--table", p(&table)]);
    assert_eq!(code, 0, "{err}");
    let report: IcReportOutput = serde_json::from_str(&out).unwrap();
    assert_eq!(report.candidates.len(), 3);
    assert!(report.selected_bic.unwrap() <= report.selected_aic.unwrap());
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("G,BIC,AIC"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn bench_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (meta_a, meta_b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let args = |meta: &Path| {
        vec![
            "bench",
            "--cases",
            "1,5",
            "--methods",
            "em1,acf,gmm",
            "--reps",
            "2",
            "--restarts",
            "2",
            "--seed",
            "4",
            "--meta",
        ]
        .into_iter()
        .map(String::from)
        .chain([p(meta).to_string()])
        .collect::<Vec<_>>()
    };
    let run_owned = |a: Vec<String>| run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let (code, table_a, err) = run_owned(args(&meta_a));
    assert_eq!(code, 0, "{err}");
    let (_, table_b, _) = run_owned(args(&meta_b));
    assert_eq!(table_a, table_b);
    assert_eq!(std::fs::read(&meta_a).unwrap(), std::fs::read(&meta_b).unwrap());
    assert!(table_a.starts_with("case,em1_mean,em1_sd,acf_mean,acf_sd,gmm_mean,gmm_sd\n"));
    assert_eq!(table_a.lines().count(), 3);
}

#[test]
fn simulate_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"[{"phi":[0.5],"sigma2":1.0,"n":60,"count":3,"group":0},
            {"theta":[0.4],"sigma2":2.0,"n":40,"count":2,"group":1}]"#,
    )
    .unwrap();
    let (out, labels) = (dir.path().join("p.csv"), dir.path().join("l.csv"));
    let (code, _, err) =
        run(&["simulate", "--spec", p(&spec), "--seed", "3", "--out", p(&out), "--labels", p(&labels)]);
    assert_eq!(code, 0, "{err}");
    let panel = armm::panel::read_panel(&out).unwrap();
    assert_eq!(panel.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![60, 60, 60, 40, 40]);
    assert_eq!(std::fs::read_to_string(&labels).unwrap(), "id,group\ns1,1\ns2,1\ns3,1\ns4,2\ns5,2\n");

    std::fs::write(&spec, r#"[{"phi":[1.5],"sigma2":1.0,"n":60,"count":3,"group":0}]"#).unwrap();
    assert_eq!(run(&["simulate", "--spec", p(&spec), "--out", p(&out)]).0, 3);
}
