use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailrisk::composite::{CompositeModel, PMode};
use tailrisk::distributions::DistributionSpec;

fn tailrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailrisk")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 2000 claims from a gamma/Pareto composite with the threshold at the 92% quantile.
fn claim_file(dir: &Path) -> PathBuf {
    let g = DistributionSpec::gamma(10.0, 1.0).unwrap();
    let b = g.quantile(0.92).unwrap();
    let m = CompositeModel::new(g, DistributionSpec::pareto2(2.5, 75.0).unwrap(), b, 0.92, PMode::Empirical).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::from("id,size\n");
    for (i, z) in m.sampler().sample(&mut rng, 2000).into_iter().enumerate() {
        text.push_str(&format!("{},{z}\n", i + 1));
    }
    let path = dir.join("claims.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn select_prints_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());
    let csv = dir.path().join("sel.csv");
    let o = tailrisk(&["select", "--input", s(&input), "--column", "size", "--out", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for m in ["m1", "m2", "m3", "m4", "m5", "m6", "m7"] {
        assert!(text.lines().any(|l| l.starts_with(m)), "{m} missing:\n{text}");
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 8);
    assert!(table.starts_with("digest,method,k,index,b_hat"));
    // n = 2000: square root rule keeps round(sqrt(n)) = 45 exceedances
    let m2 = table.lines().find(|l| l.contains(",m2,")).unwrap();
    assert_eq!(m2.split(',').nth(3), Some("1955"));
}

#[test]
fn reserve_is_byte_identical_for_a_seed_and_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());
    let run = |workers: &str| {
        let o = tailrisk(&[
            "reserve",
            "--input",
            s(&input),
            "--method",
            "m2",
            "--bulk",
            "gamma",
            "--lambda",
            "50",
            "--sims",
            "20000",
            "--seed",
            "11",
            "--workers",
            workers,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
    let other = tailrisk(&[
        "reserve",
        "--input",
        s(&input),
        "--method",
        "m2",
        "--bulk",
        "gamma",
        "--lambda",
        "50",
        "--sims",
        "20000",
        "--seed",
        "12",
    ]);
    assert_ne!(a, stdout(&other));
}

#[test]
fn fitted_records_round_trip_through_reserve() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());
    let records = dir.path().join("models");
    let o = tailrisk(&["fit", "--input", s(&input), "--method", "m2,m7", "--bulk", "gamma,weibull", "--records", s(&records)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> =
        std::fs::read_dir(&records).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["m2-gamma.model", "m2-weibull.model", "m7-lognormal.model"]);

    let model_path = records.join("m2-gamma.model");
    let out_csv = dir.path().join("r.csv");
    let args = ["reserve", "--model", s(&model_path), "--lambda", "50", "--sims", "20000", "--seed", "4", "--out", s(&out_csv)];
    let o = tailrisk(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let record = std::fs::read_to_string(&model_path).unwrap();
    let model = CompositeModel::from_record(&record).unwrap();
    assert!(stdout(&o).contains(&model.digest()));

    let csv = std::fs::read_to_string(out_csv).unwrap();
    assert_eq!(csv.lines().count(), 4);

    // a tampered record is rejected as a data error
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, record.replace("tail.alpha=", "tail.alpha=1")).unwrap();
    let o = tailrisk(&["reserve", "--model", s(&bad), "--lambda", "50", "--sims", "20000", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn saved_model_and_fresh_fit_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());
    let records = dir.path().join("models");
    assert!(tailrisk(&["fit", "--input", s(&input), "--method", "m2", "--bulk", "gamma", "--records", s(&records)])
        .status
        .success());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let model = records.join("m2-gamma.model");
    let o = tailrisk(&["reserve", "--model", s(&model), "--lambda", "50", "--sims", "20000", "--seed", "4", "--out", s(&a)]);
    assert!(o.status.success());
    let o = tailrisk(&[
        "reserve",
        "--input",
        s(&input),
        "--method",
        "m2",
        "--bulk",
        "gamma",
        "--lambda",
        "50",
        "--sims",
        "20000",
        "--seed",
        "4",
        "--out",
        s(&b),
    ]);
    assert!(o.status.success());
    let q = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p).unwrap().lines().skip(1).map(|l| l.split(',').nth(10).unwrap().to_string()).collect()
    };
    // different cell seeds, same model: reserves agree to Monte Carlo accuracy
    for (x, y) in q(&a).iter().zip(q(&b)) {
        let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
        assert!((x / y - 1.0).abs() < 0.05, "{x} vs {y}");
    }
}

#[test]
fn exit_codes_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());

    let o = tailrisk(&["select"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=usage exit=2 message=\""), "{}", stderr(&o));

    let o = tailrisk(&["select", "--input", s(&input), "--method", "m9"]);
    assert_eq!(o.status.code(), Some(2));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "size\n").unwrap();
    let o = tailrisk(&["select", "--input", s(&empty)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind=insufficient_data"), "{}", stderr(&o));

    let o = tailrisk(&["select", "--input", s(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind=io"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1.5\n2.5\n-3\n").unwrap();
    let o = tailrisk(&["select", "--input", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    // m * eps < 1 cannot resolve the quantile
    let o = tailrisk(&["reserve", "--input", s(&input), "--lambda", "50", "--sims", "100", "--eps", "0.005", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=resolution"));
    assert!(stdout(&o).is_empty());

    let o = tailrisk(&["fit", "--input", s(&input), "--p-mode", "mixing"]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(tailrisk(&["--help"]).status.code(), Some(0));
    assert_eq!(tailrisk(&["--version"]).status.code(), Some(0));
}

#[test]
fn a_failing_cell_keeps_the_table_and_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // 30 evenly spaced claims: the Gertensgarbe selector finds no change point
    let path = dir.path().join("flat.txt");
    let text: String = (1..=30).map(|i| format!("{}\n", 2.0 + 0.5 * i as f64)).collect();
    std::fs::write(&path, text).unwrap();
    let o = tailrisk(&["select", "--input", s(&path), "--method", "m6,m2"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("m2") && !l.contains(" - ")));
    assert!(stderr(&o).contains("kind=no_threshold_found"), "{}", stderr(&o));
}

#[test]
fn study_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    std::fs::write(
        &config,
        r#"
schema = 1
true_family = "gamma"
gamma = 0.08
n = 500
lambda = 50.0
eps = 0.01
N = 4
m = 2000
truth_sims = 20000
p_mode = "empirical"
selectors = ["m2", "m7"]
bulk_families = ["gamma"]
seed = 3
"#,
    )
    .unwrap();
    let csv = dir.path().join("study.csv");
    let o = tailrisk(&["study", "--config", s(&config), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("config_digest,true_family,selector,bulk,p_mode,eps,true_reserve,bias,rmse"));
    assert_eq!(table.lines().count(), 3);
    let again = tailrisk(&["study", "--config", s(&config), "--workers", "2"]);
    assert_eq!(stdout(&o), stdout(&again));

    std::fs::write(&config, "schema = 1\ntrue_family = \"gamma\"\nbogus = 1\n").unwrap();
    let o = tailrisk(&["study", "--config", s(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=config"), "{}", stderr(&o));
}

#[test]
fn danish_reports_three_tables_in_billions() {
    let dir = tempfile::tempdir().unwrap();
    let input = claim_file(dir.path());
    let o = tailrisk(&["danish", "--input", s(&input), "--method", "m1,m2", "--bulk", "gamma", "--sims", "20000", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for header in ["Thresholds", "Parameter estimates", "Reserves (billions of DKK)"] {
        assert!(text.contains(header), "{header} missing:\n{text}");
    }
    // claims are in millions: the reserve of 227 claims a year is reported divided by 1000
    let row = text.lines().find(|l| l.starts_with("m1      gamma")).unwrap();
    let q99: f64 = row.split_whitespace().nth(5).unwrap().parse().unwrap();
    assert!(q99 > 1.0 && q99 < 20.0, "{row}");
}
