use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use diffusion_core::concentration::{self, ccdf, record_values, top_count};
use diffusion_core::fitter::{self, FitOptions, FitResult, ModelSelection};
use diffusion_core::series::{self, days_in_year, CumulativeSeries, Measure, OperationRecord, RowErrorPolicy, Scope};
use diffusion_core::synth::{generate_events, ScenarioConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::args::{Command, ConcentrationArgs, DeriveArgs, FitArgs, ReplayArgs, SimulateArgs, YearSel};
use crate::error::CliError;
use crate::manifest::{absolute, RunManifest, MANIFEST_FILE, TOOL_VERSION};
use crate::output::{fmt_num, json_num, write_atomic, write_json};
use crate::plot::{Axis, Chart, Mark, Note, Series, PALETTE};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => fit(&a),
        Command::Derive(a) => derive(&a),
        Command::Concentration(a) => concentration(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn load_records(path: &Path) -> Result<Vec<OperationRecord>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let report = series::parse_records(file, RowErrorPolicy::FailFast).map_err(|e| CliError::core(&path.display().to_string(), e))?;
    Ok(report.records)
}

/// Years to process and the directory each one writes to.
fn year_dirs(records: &[OperationRecord], sel: YearSel, out: &Path) -> Result<Vec<(i32, PathBuf, String)>, CliError> {
    match sel {
        YearSel::One(y) => Ok(vec![(y, out.to_path_buf(), String::new())]),
        YearSel::All => {
            let years = series::years(records);
            if years.is_empty() {
                return Err(CliError::Data("no records in input".into()));
            }
            Ok(years.into_iter().map(|y| (y, out.join(y.to_string()), format!("{y}/"))).collect())
        }
    }
}

/// Runs `job` for every year concurrently; the first failure in year order wins.
fn per_year<F>(jobs: &[(i32, PathBuf, String)], job: F) -> Result<Vec<String>, CliError>
where
    F: Fn(i32, &Path) -> Result<Vec<&'static str>, CliError> + Sync,
{
    let results: Vec<Result<Vec<&'static str>, CliError>> = thread::scope(|s| {
        let handles: Vec<_> = jobs.iter().map(|(y, dir, _)| s.spawn(|| job(*y, dir))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Numerical("worker panicked".into()))))
            .collect()
    });
    let mut outputs = Vec::new();
    for ((_, _, prefix), r) in jobs.iter().zip(results) {
        outputs.extend(r?.into_iter().map(|f| format!("{prefix}{f}")));
    }
    outputs.sort();
    Ok(outputs)
}

fn year_context(input: &Path, year: i32) -> String {
    format!("{} (year {year})", input.display())
}

fn measure_label(kind: Measure) -> &'static str {
    match kind {
        Measure::Count => "cumulative pleas",
        Measure::Volume => "cumulative value",
    }
}

// ---------------------------------------------------------------- fit

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let input = absolute(&args.input)?;
    let resolved = FitArgs {
        input: input.clone(),
        ..args.clone()
    };
    let records = load_records(&input)?;
    let jobs = year_dirs(&records, args.year, &args.out)?;
    let outputs = per_year(&jobs, |year, dir| fit_year(&records, year, &resolved, dir))?;
    RunManifest::new("fit", vec![input.display().to_string()], &resolved, None, outputs)?.write(&args.out.join(MANIFEST_FILE))
}

fn fit_year(records: &[OperationRecord], year: i32, args: &FitArgs, dir: &Path) -> Result<Vec<&'static str>, CliError> {
    let ctx = year_context(&args.input, year);
    let (kind, scope) = (Measure::from(args.kind), Scope::from(args.scope));
    let series = series::aggregate(records, year, kind, scope).map_err(|e| CliError::core(&ctx, e))?;
    let opts = FitOptions {
        time_axis: args.time_axis.into(),
        ..FitOptions::default()
    };
    let selection = fitter::select_among(&series, &args.model.candidates(), &opts).map_err(|e| CliError::core(&ctx, e))?;

    write_json(&dir.join("fit.json"), &fit_json(year, kind, scope, &series, &selection))?;
    write_atomic(&dir.join("curve.csv"), curve_csv(year, &series, selection.chosen_fit()).as_bytes())?;
    write_atomic(
        &dir.join("fit.svg"),
        fit_chart(year, kind, scope, &series, &selection).render().as_bytes(),
    )?;
    Ok(vec!["curve.csv", "fit.json", "fit.svg"])
}

fn candidate_json(fit: &FitResult) -> Value {
    let kind = fit.model();
    let names = kind.parameter_names();
    let params: Map<String, Value> = names
        .iter()
        .zip(fit.params.values())
        .map(|(n, v)| (n.to_string(), json_num(v)))
        .collect();
    let covariance = fit.covariance_diag.as_ref().map_or(Value::Null, |c| {
        Value::Object(names.iter().zip(c).map(|(n, v)| (n.to_string(), json_num(*v))).collect())
    });
    // inflection in calendar days, whatever the model's own time origin
    let offset = 1.0 - fit.time_axis.model_time(kind, 1.0);
    let inflection = fit.params.inflection_time().map_or(Value::Null, |t| json_num(t + offset));
    json!({
        "model": kind.as_str(),
        "params": params,
        "r_squared": json_num(fit.r_squared),
        "rss": json_num(fit.residual_sum_squares),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "covariance_diag": covariance,
        "inflection_day": inflection,
    })
}

fn fit_json(year: i32, kind: Measure, scope: Scope, series: &CumulativeSeries, sel: &ModelSelection) -> Value {
    let failures: Vec<Value> = sel
        .failures
        .iter()
        .map(|(m, e)| json!({"model": m.as_str(), "error": e.to_string()}))
        .collect();
    json!({
        "year": year,
        "kind": kind.as_str(),
        "scope": scope.as_str(),
        "time_axis": sel.chosen_fit().time_axis.as_str(),
        "points": series.len(),
        "candidates": sel.candidates.iter().map(candidate_json).collect::<Vec<_>>(),
        "failures": failures,
        "chosen": sel.chosen.as_str(),
    })
}

fn curve_csv(year: i32, series: &CumulativeSeries, chosen: &FitResult) -> String {
    let mut out = String::from("t,observed,fitted\n");
    for (day, observed) in series.daily(days_in_year(year)) {
        let obs = observed.map(fmt_num).unwrap_or_default();
        let _ = writeln!(out, "{day},{obs},{}", fmt_num(chosen.predict(f64::from(day))));
    }
    out
}

fn fit_chart(year: i32, kind: Measure, scope: Scope, series: &CumulativeSeries, sel: &ModelSelection) -> Chart {
    let last = days_in_year(year);
    let mut plotted = vec![Series {
        label: "observed".into(),
        points: series.times().iter().copied().zip(series.values().iter().copied()).collect(),
        mark: Mark::Dots,
        color: PALETTE[0],
    }];
    for (i, fit) in sel.candidates.iter().enumerate() {
        let chosen = fit.model() == sel.chosen;
        plotted.push(Series {
            label: format!("{} (R² {:.4}){}", fit.model(), fit.r_squared, if chosen { ", chosen" } else { "" }),
            points: (1..=last).map(|d| (f64::from(d), fit.predict(f64::from(d)))).collect(),
            mark: if chosen { Mark::Line } else { Mark::DashedLine },
            color: PALETTE[1 + i % (PALETTE.len() - 1)],
        });
    }
    Chart {
        title: format!("{year}: {} ({})", measure_label(kind), scope),
        x: Axis::linear("day of year"),
        y: Axis::linear(measure_label(kind)),
        series: plotted,
        notes: vec![],
    }
}

// ---------------------------------------------------------------- derive

pub fn derive(args: &DeriveArgs) -> Result<(), CliError> {
    let input = absolute(&args.input)?;
    let resolved = DeriveArgs {
        input: input.clone(),
        ..args.clone()
    };
    let records = load_records(&input)?;
    let jobs = year_dirs(&records, args.year, &args.out)?;
    let outputs = per_year(&jobs, |year, dir| derive_year(&records, year, &resolved, dir))?;
    RunManifest::new("derive", vec![input.display().to_string()], &resolved, None, outputs)?.write(&args.out.join(MANIFEST_FILE))
}

fn derive_year(records: &[OperationRecord], year: i32, args: &DeriveArgs, dir: &Path) -> Result<Vec<&'static str>, CliError> {
    let ctx = year_context(&args.input, year);
    let (kind, scope) = (Measure::from(args.kind), Scope::from(args.scope));
    let series = series::aggregate(records, year, kind, scope).map_err(|e| CliError::core(&ctx, e))?;
    let deriv = series::central_difference(&series).map_err(|e| CliError::core(&ctx, e))?;
    let peak = series::find_peak(&deriv).map_err(|e| CliError::core(&ctx, e))?;

    let mut csv = String::from("t,cumulative,rate\n");
    for ((t, v), r) in series.times().iter().zip(series.values()).zip(&deriv.rates) {
        let _ = writeln!(csv, "{},{},{}", fmt_num(*t), fmt_num(*v), fmt_num(*r));
    }
    write_atomic(&dir.join("derivative.csv"), csv.as_bytes())?;
    write_json(
        &dir.join("peak.json"),
        &json!({
            "year": year,
            "kind": kind.as_str(),
            "scope": scope.as_str(),
            "points": series.len(),
            "peak_day": json_num(peak.time),
            "peak_rate": json_num(peak.rate),
        }),
    )?;
    let chart = Chart {
        title: format!("{year}: daily rate of {} ({})", kind, scope),
        x: Axis::linear("day of year"),
        y: Axis::linear("rate per day"),
        series: vec![Series {
            label: "central difference".into(),
            points: deriv.times.iter().copied().zip(deriv.rates.iter().copied()).collect(),
            mark: Mark::Line,
            color: PALETTE[0],
        }],
        notes: vec![Note {
            x: peak.time,
            y: peak.rate,
            text: format!("peak day {}", fmt_num(peak.time)),
        }],
    };
    write_atomic(&dir.join("derivative.svg"), chart.render().as_bytes())?;
    Ok(vec!["derivative.csv", "derivative.svg", "peak.json"])
}

// ---------------------------------------------------------------- concentration

pub fn concentration(args: &ConcentrationArgs) -> Result<(), CliError> {
    if !(args.top_q > 0.0 && args.top_q <= 1.0) {
        return Err(CliError::Usage(format!("--top-q must be in (0, 1], got {}", args.top_q)));
    }
    let input = absolute(&args.input)?;
    let resolved = ConcentrationArgs {
        input: input.clone(),
        ..args.clone()
    };
    let ctx = input.display().to_string();
    let scope = Scope::from(args.scope);
    let records: Vec<OperationRecord> = load_records(&input)?
        .into_iter()
        .filter(|r| scope.admits(r.status))
        .filter(|r| match args.year {
            YearSel::One(y) => r.year() == y,
            YearSel::All => true,
        })
        .collect();

    let basis = Measure::from(args.basis);
    let summary = concentration::lorenz(&records, basis).map_err(|e| CliError::core(&ctx, e))?;
    let share = summary.share_of_top(args.top_q).map_err(|e| CliError::core(&ctx, e))?;
    let k = top_count(args.top_q, summary.entity_count()).map_err(|e| CliError::core(&ctx, e))?;
    let tail = ccdf(&record_values(&records)).map_err(|e| CliError::core(&ctx, e))?;

    let mut lorenz_csv = String::from("population_share,cumulative_share\n");
    for (p, l) in &summary.lorenz_points {
        let _ = writeln!(lorenz_csv, "{},{}", fmt_num(*p), fmt_num(*l));
    }
    let mut ccdf_csv = String::from("value,survival\n");
    for (x, s) in tail.points.iter() {
        let _ = writeln!(ccdf_csv, "{},{}", fmt_num(x), fmt_num(s));
    }
    let out = &args.out;
    write_atomic(&out.join("lorenz.csv"), lorenz_csv.as_bytes())?;
    write_atomic(&out.join("ccdf.csv"), ccdf_csv.as_bytes())?;

    let lorenz_chart = Chart {
        title: format!("Lorenz curve of {} by entity", basis),
        x: Axis::linear("share of entities (smallest first)"),
        y: Axis::linear(&format!("cumulative share of {basis}")),
        series: vec![
            Series {
                label: "equality".into(),
                points: vec![(0.0, 0.0), (1.0, 1.0)],
                mark: Mark::DashedLine,
                color: PALETTE[3],
            },
            Series {
                label: "Lorenz".into(),
                points: summary.lorenz_points.clone(),
                mark: Mark::Line,
                color: PALETTE[0],
            },
        ],
        notes: vec![Note {
            x: 1.0 - k as f64 / summary.entity_count() as f64,
            y: 1.0 - share,
            text: format!("top {k} hold {}", fmt_num(share)),
        }],
    };
    let ccdf_chart = Chart {
        title: "Complementary CDF of operation values".into(),
        x: Axis::log("value"),
        y: Axis::log("P(V ≥ value)"),
        series: vec![Series {
            label: "empirical".into(),
            points: tail.points.iter().collect(),
            mark: Mark::Dots,
            color: PALETTE[1],
        }],
        notes: vec![],
    };
    write_atomic(&out.join("lorenz.svg"), lorenz_chart.render().as_bytes())?;
    write_atomic(&out.join("ccdf.svg"), ccdf_chart.render().as_bytes())?;

    let shares: Vec<Value> = summary
        .top_shares
        .iter()
        .map(|(q, s)| json!({"q": json_num(*q), "share": json_num(*s)}))
        .collect();
    let entities: Vec<Value> = summary
        .entities
        .iter()
        .map(|(id, total)| json!({"entity": id, "total": total.to_string()}))
        .collect();
    write_json(
        &out.join("summary.json"),
        &json!({
            "basis": basis.as_str(),
            "scope": scope.as_str(),
            "year": args.year,
            "records": records.len(),
            "entity_count": summary.entity_count(),
            "top_q": json_num(args.top_q),
            "top_count": k,
            "top_share": json_num(share),
            "gini": json_num(summary.gini()),
            "excluded_zero_values": tail.excluded_zero,
            "share_of_top": shares,
            "entities": entities,
        }),
    )?;

    let outputs = ["ccdf.csv", "ccdf.svg", "lorenz.csv", "lorenz.svg", "summary.json"]
        .map(String::from)
        .to_vec();
    RunManifest::new("concentration", vec![ctx], &resolved, None, outputs)?.write(&out.join(MANIFEST_FILE))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Serialize, Deserialize)]
struct SimulateOptions {
    scenario: ScenarioConfig,
}

fn manifest_path_for(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    csv.with_file_name(name)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = absolute(&args.config)?;
    let text = fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
    let mut scenario: ScenarioConfig = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", config.display())))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    write_simulation(&scenario, vec![config.display().to_string()], &args.out)
}

fn write_simulation(scenario: &ScenarioConfig, inputs: Vec<String>, out: &Path) -> Result<(), CliError> {
    let records = generate_events(scenario).map_err(|e| CliError::core("scenario", e))?;
    let mut buf = Vec::new();
    series::write_records(&mut buf, &records).map_err(|e| CliError::core(&out.display().to_string(), e))?;
    write_atomic(out, &buf)?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let options = SimulateOptions {
        scenario: scenario.clone(),
    };
    RunManifest::new("simulate", inputs, &options, Some(scenario.seed), vec![name])?.write(&manifest_path_for(out))
}

// ---------------------------------------------------------------- replay

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::read(&args.manifest)?;
    if manifest.tool_version != TOOL_VERSION {
        eprintln!(
            "warning: manifest written by version {}, replaying with {}",
            manifest.tool_version, TOOL_VERSION
        );
    }
    let out = args.out.clone();
    match manifest.command.as_str() {
        "fit" => fit(&FitArgs {
            out,
            ..manifest.options_as()?
        }),
        "derive" => derive(&DeriveArgs {
            out,
            ..manifest.options_as()?
        }),
        "concentration" => concentration(&ConcentrationArgs {
            out,
            ..manifest.options_as()?
        }),
        "simulate" => {
            let options: SimulateOptions = manifest.options_as()?;
            write_simulation(&options.scenario, manifest.inputs.clone(), &out)
        }
        other => Err(CliError::Data(format!("{}: unknown command {other:?}", args.manifest.display()))),
    }
}
