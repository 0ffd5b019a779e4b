use std::path::Path;
use std::process::{Command, Output};

fn geotrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geotrack"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("GEOTRACK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn smoke_run_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let o = geotrack(&["--T", "100", "--runs", "2", "run"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("summary: tail mean e"));
    for name in ["zeroth_order.csv", "first_order.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "k,e_mean,e_stderr,ebar_mean,reg_track,reg_est,alpha_k,eta_k,VT_cum"
        );
        let rows = data_rows(&dir.path().join(name));
        assert_eq!(rows.len(), 101);
        assert!(rows
            .iter()
            .enumerate()
            .all(|(k, r)| r[0] == k as f64 && r.len() == 9));
        // cumulative regret never decreases
        assert!(rows.windows(2).all(|w| w[1][4] >= w[0][4]));
    }
    let first = data_rows(&dir.path().join("first_order.csv"));
    assert!(first.iter().all(|r| r[7] == 0.0));
    assert!(dir.path().join("runs.csv").exists());
}

#[test]
fn static_problem_first_order_arm_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = geotrack(
        &[
            "--T",
            "1500",
            "--runs",
            "1",
            "--N",
            "5",
            "--omega",
            "0",
            "--schedule",
            "constant",
            "--alpha",
            "0.014",
            "--eta",
            "0.001",
            "run",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&dir.path().join("first_order.csv"));
    let tail = &rows[rows.len() - 150..];
    let mean = tail.iter().map(|r| r[1]).sum::<f64>() / tail.len() as f64;
    assert!(mean <= 1e-6, "tail mean {mean}");
}

#[test]
fn plot_renders_two_labeled_series() {
    let dir = tempfile::tempdir().unwrap();
    assert!(geotrack(&["--T", "30", "--runs", "1", "run"], dir.path())
        .status
        .success());
    let svg = dir.path().join("fig.svg");
    let o = geotrack(
        &[
            "plot",
            dir.path().join("zeroth_order.csv").to_str().unwrap(),
            dir.path().join("first_order.csv").to_str().unwrap(),
            "--svg",
            svg.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let labels: Vec<_> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| n.attribute("data-label").unwrap().to_string())
        .collect();
    assert_eq!(labels, ["zeroth_order", "first_order"]);
}

#[test]
fn plot_rejects_bad_data_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(
        &empty,
        "k,e_mean,e_stderr,ebar_mean,reg_track,reg_est,alpha_k,eta_k,VT_cum\n",
    )
    .unwrap();
    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "k,e_mean\n0,abc\n").unwrap();
    for p in [&empty, &garbled] {
        let o = geotrack(&["plot", p.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(4));
    }
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[constants]\nsmoothness = 2.0\n").unwrap();
    let cases: [&[&str]; 4] = [
        &["--config", cfg.to_str().unwrap(), "params"],
        &["--sigma", "5", "params"],
        &[
            "--schedule",
            "constant",
            "--alpha",
            "1.0",
            "--eta",
            "0.01",
            "bounds",
        ],
        &["--manifold", "euclidean", "run"],
    ];
    for args in cases {
        let o = geotrack(args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = Command::new(env!("CARGO_BIN_EXE_geotrack"))
        .args(["params"])
        .env("GEOTRACK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_values_are_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m9.toml");
    std::fs::write(
        &cfg,
        "[experiment]\nm = 9\n\n[constants]\nL = 1.5\nsigma = 1.0\n",
    )
    .unwrap();
    let o = geotrack(&["--config", cfg.to_str().unwrap(), "params"], dir.path());
    assert!(stdout(&o).contains("d=45"), "{}", stdout(&o));
    assert!(stdout(&o).contains("eta_bar   = 0.0049"));
    let o = geotrack(
        &["--config", cfg.to_str().unwrap(), "--m", "3", "params"],
        dir.path(),
    );
    assert!(stdout(&o).contains("d=6"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = geotrack(&["--T", "10", "--runs", "1", "run"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_delta_params_only_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = geotrack(&["--delta", "0", "params"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn verify_passes_by_default_and_fails_on_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let quick = ["verify", "--samples", "5000", "--trials", "300"];
    let o = geotrack(&quick, dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("all suites PASS"));

    let mut neg = quick.to_vec();
    neg.push("--negative-control");
    let o = geotrack(&neg, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL oracle negative control"));

    let o = geotrack(
        &[
            "--manifold",
            "euclidean",
            "--m",
            "5",
            "verify",
            "--samples",
            "5000",
            "--trials",
            "300",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS comparison triangle"));
}

#[test]
fn bounds_reports_delta_and_doubling_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = geotrack(&["bounds", "--e0", "1000"], dir.path());
    let s = stdout(&o);
    assert!(s.contains("Delta = 543.30"), "{s}");
    assert!(s.contains("K(e0=1000"));
    let o = geotrack(
        &["--schedule", "doubling", "bounds", "--horizon", "500"],
        dir.path(),
    );
    let s = stdout(&o);
    assert!(s.contains("regret bounds at T=500"));
    assert_eq!(
        s.lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .count(),
        13
    );
}
