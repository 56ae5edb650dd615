use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffusion_cli::output::fmt_num;
use diffusion_core::fitter::{self, FitOptions};
use diffusion_core::growth_models::{GrowthParams, ModelKind};
use diffusion_core::series::{self, Measure, RowErrorPolicy, Scope};
use serde_json::Value;
use tempfile::TempDir;

fn diffusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffusion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario-2014.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_example(dir: &TempDir) -> PathBuf {
    let csv = dir.path().join("pleas.csv");
    let out = diffusion(&["simulate", "--config", s(&example_config()), "--out", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    csv
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const HEADER: &str = "date,entity_id,parent_state,value,status\n";

#[test]
fn auto_fit_reports_both_models() {
    let dir = TempDir::new().unwrap();
    let csv = simulate_example(&dir);
    let out_dir = dir.path().join("fit");
    let out = diffusion(&["fit", s(&csv), "--year", "2014", "--model", "auto", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let fit = read_json(&out_dir.join("fit.json"));
    let candidates = fit["candidates"].as_array().unwrap();
    let models: Vec<&str> = candidates.iter().map(|c| c["model"].as_str().unwrap()).collect();
    assert_eq!(models, ["logistic", "gompertz_free"]);
    for c in candidates {
        assert!(c["r_squared"].is_f64());
        assert!(c["rss"].is_f64() && c["iterations"].is_u64() && c["converged"].is_boolean());
    }
    assert_eq!(fit["chosen"], "gompertz_free");
    assert!(candidates[1]["r_squared"].as_f64().unwrap() >= 0.98);
    for f in ["fit.json", "curve.csv", "fit.svg", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["outputs"], serde_json::json!(["curve.csv", "fit.json", "fit.svg"]));
}

#[test]
fn curve_csv_matches_the_evaluator_to_printed_precision() {
    let dir = TempDir::new().unwrap();
    let csv = simulate_example(&dir);
    let out_dir = dir.path().join("fit");
    let out = diffusion(&["fit", s(&csv), "--year", "2014", "--model", "gompertz", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let records = series::parse_records(fs::File::open(&csv).unwrap(), RowErrorPolicy::FailFast)
        .unwrap()
        .records;
    let s = series::aggregate(&records, 2014, Measure::Count, Scope::AllPleas).unwrap();
    let fit = fitter::fit(&s, ModelKind::GompertzFree, &FitOptions::default()).unwrap();

    let text = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,observed,fitted"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 365);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let day: f64 = cols[0].parse().unwrap();
        assert_eq!(cols[2], fmt_num(fit.params.eval(day).unwrap()), "day {day}");
    }
}

#[test]
fn missing_year_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let csv = simulate_example(&dir);
    let out = diffusion(&["fit", s(&csv), "--year", "1999", "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("empty selection"), "{}", stderr(&out));
}

#[test]
fn volume_fit_reports_r_squared() {
    let dir = TempDir::new().unwrap();
    let csv = simulate_example(&dir);
    let out_dir = dir.path().join("vol");
    let out = diffusion(&["fit", s(&csv), "--year", "2014", "--kind", "volume", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit = read_json(&out_dir.join("fit.json"));
    assert_eq!(fit["kind"], "volume");
    for c in fit["candidates"].as_array().unwrap() {
        let r2 = c["r_squared"].as_f64().unwrap();
        assert!(r2 > 0.5 && r2 <= 1.0, "{r2}");
    }
}

#[test]
fn all_years_write_one_directory_each() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("two.csv");
    let mut text = String::from(HEADER);
    for year in [2013, 2014] {
        let p = GrowthParams::GompertzStrict { m: 60.0, w: 0.03 };
        let mut prev = 0;
        for day in 1..=365u32 {
            let level = p.eval(f64::from(day)).unwrap().round() as u32;
            for _ in prev..level {
                let date = chrono_free_date(year, day);
                let _ = writeln!(text, "{date},E1,,10.00,assented");
            }
            prev = prev.max(level);
        }
    }
    fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("fits");
    let out = diffusion(&["fit", s(&csv), "--year", "all", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for year in ["2013", "2014"] {
        assert_eq!(
            read_json(&out_dir.join(year).join("fit.json"))["year"],
            year.parse::<i64>().unwrap()
        );
    }
    let outputs = read_json(&out_dir.join("manifest.json"))["outputs"].clone();
    assert_eq!(outputs.as_array().unwrap().len(), 6);
    assert_eq!(outputs[0], "2013/curve.csv");
}

/// ISO date for a day of year in a non-leap year.
fn chrono_free_date(year: i32, day: u32) -> String {
    const MONTHS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut d = day;
    for (i, len) in MONTHS.iter().enumerate() {
        if d <= *len {
            return format!("{year}-{:02}-{d:02}", i + 1);
        }
        d -= len;
    }
    unreachable!("day {day} past year end")
}

#[test]
fn derived_peak_near_analytic_inflection() {
    // the curve encoded exactly as daily volumes, one record per day
    let p = GrowthParams::GompertzStrict { m: 1e6, w: 0.04 };
    let mut text = String::from(HEADER);
    let mut prev = 0.0;
    for day in 1..=365u32 {
        let level = p.eval(f64::from(day)).unwrap();
        let _ = writeln!(text, "{},E1,,{:.2},assented", chrono_free_date(2014, day), level - prev);
        prev = level;
    }
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("dense.csv");
    fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("der");
    let out = diffusion(&["derive", s(&csv), "--year", "2014", "--kind", "volume", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let peak = read_json(&out_dir.join("peak.json"))["peak_day"].as_f64().unwrap();
    let analytic = p.inflection_time().unwrap();
    assert!((peak - analytic).abs() <= 2.0, "peak {peak} vs {analytic}");
    let svg = fs::read_to_string(out_dir.join("derivative.svg")).unwrap();
    assert!(svg.contains(&format!("peak day {}", fmt_num(peak))));
    assert!(out_dir.join("derivative.csv").is_file());
}

#[test]
fn derive_needs_three_points() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("short.csv");
    fs::write(
        &csv,
        format!("{HEADER}2014-01-01,E1,,1.00,assented\n2014-01-05,E1,,1.00,assented\n"),
    )
    .unwrap();
    let out = diffusion(&["derive", s(&csv), "--year", "2014", "--out", s(&dir.path().join("d"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("insufficient data"), "{}", stderr(&out));
}

#[test]
fn linear_series_peaks_at_earliest_day() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("linear.csv");
    let mut text = String::from(HEADER);
    for day in 1..=50 {
        let _ = writeln!(text, "{},E1,,5.00,assented", chrono_free_date(2014, day));
    }
    fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("d");
    let out = diffusion(&["derive", s(&csv), "--year", "2014", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let peak = read_json(&out_dir.join("peak.json"));
    assert_eq!(peak["peak_day"].as_f64(), Some(1.0));
    assert_eq!(peak["peak_rate"].as_f64(), Some(1.0));
    let rates: Vec<String> = fs::read_to_string(out_dir.join("derivative.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    assert!(rates.iter().all(|r| r == "1"));
}

fn toy_file(dir: &TempDir, name: &str, totals: &[u32], per_unit: bool) -> PathBuf {
    let mut text = String::from(HEADER);
    for (i, &v) in totals.iter().enumerate() {
        if per_unit {
            for _ in 0..v {
                let _ = writeln!(text, "2014-03-01,S{i},,1.00,assented");
            }
        } else {
            let _ = writeln!(text, "2014-03-01,S{i},,{v}.00,assented");
        }
    }
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn concentration_toy_shares() {
    let dir = TempDir::new().unwrap();
    let counts = toy_file(&dir, "counts.csv", &[80, 5, 5, 5, 5], true);
    let out_dir = dir.path().join("c");
    let out = diffusion(&[
        "concentration",
        s(&counts),
        "--basis",
        "count",
        "--top-q",
        "0.2",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["top_share"].as_f64(), Some(0.8));
    assert_eq!(summary["top_count"], 1);
    for f in ["lorenz.csv", "ccdf.csv", "lorenz.svg", "ccdf.svg", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let lorenz = fs::read_to_string(out_dir.join("lorenz.csv")).unwrap();
    assert!(lorenz.contains("\n0.8,0.2\n"), "{lorenz}");

    let volumes = toy_file(&dir, "volumes.csv", &[40, 15, 15, 15, 15], false);
    let out_dir = dir.path().join("v");
    let out = diffusion(&["concentration", s(&volumes), "--basis", "volume", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&out_dir.join("summary.json"))["top_share"].as_f64(), Some(0.4));
    let ccdf = fs::read_to_string(out_dir.join("ccdf.csv")).unwrap();
    assert_eq!(ccdf, "value,survival\n15,1\n40,0.2\n");
}

#[test]
fn concentration_of_nothing_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, HEADER).unwrap();
    let out = diffusion(&["concentration", s(&empty), "--out", s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = diffusion(&["simulate", "--config", s(&example_config()), "--out", s(p)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let manifest = read_json(&dir.path().join("a.csv.manifest.json"));
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["outputs"], serde_json::json!(["a.csv"]));

    let c = dir.path().join("c.csv");
    let out = diffusion(&["simulate", "--config", s(&example_config()), "--seed", "7", "--out", s(&c)]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn half_rejected_scenario_halves_the_assented_series() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("half.toml");
    let text = fs::read_to_string(example_config())
        .unwrap()
        .replace("rejection_rate = 0.1", "rejection_rate = 0.5");
    fs::write(&config, text).unwrap();
    let csv = dir.path().join("half.csv");
    let out = diffusion(&["simulate", "--config", s(&config), "--out", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let records = series::parse_records(fs::File::open(&csv).unwrap(), RowErrorPolicy::FailFast)
        .unwrap()
        .records;
    let last = |scope| {
        *series::aggregate(&records, 2014, Measure::Count, scope)
            .unwrap()
            .values()
            .last()
            .unwrap()
    };
    let (assented, all) = (last(Scope::AssentedOnly), last(Scope::AllPleas));
    assert_eq!(all, 1000.0);
    // binomial(1000, 0.5): four standard deviations is about 63
    assert!((assented - 500.0).abs() < 64.0, "{assented}");
}

#[test]
fn invalid_config_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.toml");
    let text = fs::read_to_string(example_config())
        .unwrap()
        .replace("rejection_rate = 0.1", "rejection_rate = 1.0");
    fs::write(&config, text).unwrap();
    let out = diffusion(&["simulate", "--config", s(&config), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);

    fs::write(&config, "year = \"soon\"\n").unwrap();
    let out = diffusion(&["simulate", "--config", s(&config), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&out), 2);

    let out = diffusion(&[
        "simulate",
        "--config",
        s(&dir.path().join("missing.toml")),
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_row_reports_file_and_line() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("broken.csv");
    fs::write(&csv, format!("{HEADER}2014-01-01,E1,,1.00,assented\n2014-01-02,E1,,abc,assented\n")).unwrap();
    let out = diffusion(&["fit", s(&csv), "--out", s(&dir.path().join("f"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("broken.csv:3:"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&diffusion(&[])), 1);
    assert_eq!(code(&diffusion(&["fit"])), 1);
    assert_eq!(code(&diffusion(&["fit", "x.csv", "--model", "cubic", "--out", "o"])), 1);
    assert_eq!(code(&diffusion(&["concentration", "x.csv", "--top-q", "1.5", "--out", "o"])), 1);
    assert_eq!(code(&diffusion(&["--help"])), 0);
    assert_eq!(code(&diffusion(&["--version"])), 0);
}

#[test]
fn replay_reproduces_every_command() {
    let dir = TempDir::new().unwrap();
    let csv = simulate_example(&dir);
    let runs: [(&str, Vec<&str>); 3] = [
        ("fit", vec!["--year", "2014", "--model", "auto"]),
        ("derive", vec!["--year", "2014"]),
        ("concentration", vec!["--basis", "volume"]),
    ];
    for (command, extra) in runs {
        let first = dir.path().join(format!("{command}-1"));
        let again = dir.path().join(format!("{command}-2"));
        let mut args = vec![command, s(&csv)];
        args.extend(extra);
        args.extend(["--out", s(&first)]);
        let out = diffusion(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let out = diffusion(&["replay", s(&first.join("manifest.json")), "--out", s(&again)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        for entry in fs::read_dir(&first).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                fs::read(first.join(&name)).unwrap(),
                fs::read(again.join(&name)).unwrap(),
                "{command}: {name:?}"
            );
        }
    }
    let out = diffusion(&["replay", s(&csv), "--out", s(&dir.path().join("z"))]);
    assert_eq!(code(&out), 2);
}
