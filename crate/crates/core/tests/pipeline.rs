use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use portopt::pipeline::{self, artifact_names, RunConfig, PERFORMANCE_FILE};
use portopt::Method;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn energy_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(fixtures().join("run_energy.json")).unwrap();
    cfg.output_dir = out.to_path_buf();
    // a shorter schedule keeps the suite quick; the acceptance target runs the full one
    cfg.autoencoder.epochs = 40;
    cfg.mvp_samples = 2000;
    cfg
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn weight_sum(csv: &[u8]) -> (Vec<String>, f64) {
    let text = std::str::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ticker,weight"));
    let mut tickers = Vec::new();
    let mut sum = 0.0;
    for l in lines {
        let (t, w) = l.split_once(',').unwrap();
        tickers.push(t.to_string());
        sum += w.parse::<f64>().unwrap();
    }
    (tickers, sum)
}

#[test]
fn hrp_only_on_four_stocks_writes_exactly_its_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = energy_config(out.path());
    cfg.tickers.truncate(4);
    cfg.methods = vec!["HRP".into()];
    let summary = pipeline::run(&cfg).unwrap();
    assert!(summary.failures.is_empty());
    let mut expected = artifact_names(Method::Hrp);
    expected.push(PERFORMANCE_FILE.into());
    expected.sort();
    let files: Vec<String> = read_dir(out.path()).into_keys().collect();
    assert_eq!(files, expected);
    let linkage = std::fs::read_to_string(out.path().join("linkage_hrp.csv")).unwrap();
    assert_eq!(linkage.lines().count(), 1 + 3);
}

#[test]
fn full_run_shapes_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = pipeline::run(&energy_config(a.path())).unwrap();
    assert_eq!(s.exit_code(), 0);
    pipeline::run(&energy_config(b.path())).unwrap();
    let fa = read_dir(a.path());
    assert_eq!(fa, read_dir(b.path()));
    assert_eq!(fa.len(), 16);

    let perf = std::str::from_utf8(&fa["performance.csv"]).unwrap();
    let rows: Vec<&str> = perf.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].starts_with("Energy,MVP,train,"));
    assert!(rows[5].starts_with("Energy,ENC,test,"));

    let cfg = energy_config(a.path());
    for m in Method::ALL {
        let (tickers, sum) = weight_sum(&fa[&format!("weights_{}.csv", m.file_tag())]);
        assert_eq!(tickers, cfg.tickers);
        assert!((sum - 1.0).abs() < 1e-9, "{m}: {sum}");
    }
    assert_eq!(
        std::str::from_utf8(&fa["frontier_mvp.csv"]).unwrap().lines().count(),
        2001
    );
    assert_eq!(std::str::from_utf8(&fa["trace_enc.csv"]).unwrap().lines().count(), 41);
    let cum = std::str::from_utf8(&fa["cumulative_hrp_test.csv"]).unwrap();
    assert_eq!(cum.lines().nth(1).unwrap(), "2022-01-03,1");
    assert_eq!(cum.lines().count(), 1 + 248);
}

#[test]
fn test_window_prices_never_reach_weights() {
    let text = std::fs::read_to_string(fixtures().join("synthetic_energy.csv")).unwrap();
    // scale every 2022 price by a row-dependent factor
    let perturbed: String = text
        .lines()
        .enumerate()
        .map(|(k, line)| {
            if !line.starts_with("2022") {
                return format!("{line}\n");
            }
            let mut cells = line.split(',');
            let mut row = cells.next().unwrap().to_string();
            for (j, c) in cells.enumerate() {
                row.push(',');
                if !c.is_empty() {
                    let f = 1.0 + 0.1 * (((k * 7 + j * 3) % 11) as f64 - 5.0) / 5.0;
                    row.push_str(&format!("{:.2}", c.parse::<f64>().unwrap() * f));
                }
            }
            format!("{row}\n")
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("perturbed.csv");
    std::fs::write(&csv, &perturbed).unwrap();

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    pipeline::run(&energy_config(&a)).unwrap();
    let mut cfg = energy_config(&b);
    cfg.data = pipeline::DataSource::Csv(csv);
    pipeline::run(&cfg).unwrap();
    let (fa, fb) = (read_dir(&a), read_dir(&b));
    for name in fa.keys().filter(|n| !n.contains("test") && *n != "performance.csv") {
        assert_eq!(fa[name], fb[name], "{name} depends on test-window prices");
    }
    assert_ne!(fa["cumulative_mvp_test.csv"], fb["cumulative_mvp_test.csv"]);
}

#[test]
fn seed_moves_mvp_and_enc_but_not_hrp() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline::run(&energy_config(a.path())).unwrap();
    let mut cfg = energy_config(b.path());
    cfg.seed += 1;
    pipeline::run(&cfg).unwrap();
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    for name in artifact_names(Method::Hrp) {
        assert_eq!(fa[&name], fb[&name], "{name}");
    }
    assert_ne!(fa["frontier_mvp.csv"], fb["frontier_mvp.csv"]);
    assert_ne!(fa["model_enc.txt"], fb["model_enc.txt"]);
}

#[test]
fn failing_method_leaves_no_artifacts() {
    let out = tempfile::tempdir().unwrap();
    // a stale file from an earlier run must also disappear
    std::fs::write(out.path().join("trace_enc.csv"), "stale").unwrap();
    let mut cfg = energy_config(out.path());
    cfg.methods = vec!["HRP".into(), "ENC".into()];
    cfg.autoencoder.learning_rate = 1e300;
    let summary = pipeline::run(&cfg).unwrap();
    assert_eq!(summary.failures.len(), 1);
    assert_eq!(summary.failures[0].method, Method::Enc);
    assert_eq!(summary.exit_code(), 3);
    let files = read_dir(out.path());
    assert!(artifact_names(Method::Enc).iter().all(|n| !files.contains_key(n)));
    assert!(artifact_names(Method::Hrp).iter().all(|n| files.contains_key(n)));
    let perf = std::str::from_utf8(&files["performance.csv"]).unwrap();
    assert_eq!(perf.lines().count(), 3);
}

#[test]
fn data_errors_map_to_exit_code_two() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = energy_config(out.path());
    cfg.tickers[0] = "NOPE.NS".into();
    assert_eq!(pipeline::run(&cfg).unwrap_err().exit_code(), 2);

    let mut cfg = energy_config(out.path());
    cfg.test_start = "2023-01-01".into();
    cfg.test_end = "2023-06-30".into();
    assert_eq!(pipeline::run(&cfg).unwrap_err().exit_code(), 2);

    let mut cfg = energy_config(out.path());
    cfg.methods.clear();
    assert_eq!(pipeline::run(&cfg).unwrap_err().exit_code(), 1);
}

#[test]
fn checked_in_sector_configs_validate() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        assert!(pipeline::validate_config(&cfg).is_empty(), "{}", path.display());
        assert_eq!(cfg.tickers.len(), 10);
        n += 1;
    }
    assert_eq!(n, 11);
}
