use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use revpref::analytics::{
    self, Basis, Grouping, MiddleChooserRule,
};
use revpref::estimation::{estimate_ces, EstimationResult, ModelKind};
use revpref::etl::{self, AggregateOptions, HolidayCalendar, MonthWindow, PriceBasis, Scenario};
use revpref::format::{self, Format};
use revpref::indices::{index_report_with, SearchLimits};
use revpref::power::{
    self, bronars_discrete, bronars_shares, permutation_test, BudgetDesign, PermutationConfig,
    RegressionDirection,
};
use revpref::restrictions::{fosd_ccei, gapp_efficiency, harp_efficiency, quasilinear_efficiency};
use revpref::{ccei, ChoiceDataset};

use crate::manifest;
use crate::{
    AnalyzeArgs, CliError, CorrelateArgs, EstimateArgs, EtlArgs, IndicesArgs, ModelArg,
    OutputFormat, PermtestArgs, PowerArgs, PowerMode, PriceBasisArg, ScenarioArg, TestArg,
};

type Rows = Vec<Vec<String>>;

fn is_dataset_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let ext_ok = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("json")
    );
    ext_ok && !name.ends_with(".manifest.json") && name != "manifest.json" && name != "etl_report.json"
}

/// Files named directly plus dataset files inside named directories,
/// sorted and deduplicated.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = BTreeSet::new();
    for path in inputs {
        if path.is_dir() {
            for entry in fs::read_dir(path).map_err(|e| CliError::io(path, e))? {
                let p = entry.map_err(|e| CliError::io(path, e))?.path();
                if p.is_file() && is_dataset_file(&p) {
                    files.insert(p);
                }
            }
        } else if path.is_file() {
            files.insert(path.clone());
        } else {
            return Err(CliError::io(path, "no such file or directory"));
        }
    }
    Ok(files.into_iter().collect())
}

/// Datasets ordered by label.
fn load_datasets(files: &[PathBuf]) -> Result<Vec<ChoiceDataset>, CliError> {
    let mut out: Vec<ChoiceDataset> = files
        .par_iter()
        .map(|f| {
            format::read_path(f).map_err(|e| match e {
                revpref::Error::Io(m) => CliError::Io(m),
                other => CliError::Data(tag(f, other)),
            })
        })
        .collect::<Result<_, _>>()?;
    out.sort_by(|a, b| a.label().cmp(b.label()));
    for pair in out.windows(2) {
        if pair[0].label() == pair[1].label() {
            return Err(CliError::Usage(format!(
                "two inputs share the label {:?}",
                pair[0].label()
            )));
        }
    }
    Ok(out)
}

/// Prefixes an error message with the file it came from.
fn tag(file: &Path, err: revpref::Error) -> revpref::Error {
    match err {
        revpref::Error::SearchBudgetExceeded { .. } => err,
        other => revpref::Error::InvalidArgument(format!("{}: {other}", file.display())),
    }
}

fn labelled<T>(ds: &ChoiceDataset, r: revpref::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        revpref::Error::SearchBudgetExceeded { .. } => CliError::Data(e),
        other => CliError::Data(revpref::Error::InvalidArgument(format!("{}: {other}", ds.label()))),
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &Rows) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn finish(
    output: &Path,
    command: &str,
    seed: Option<u64>,
    inputs: &[PathBuf],
    flags: &impl serde::Serialize,
) -> Result<(), CliError> {
    manifest::write(&manifest::path_for(output, false), command, seed, inputs, flags)
}

pub fn indices(args: &IndicesArgs) -> Result<(), CliError> {
    let files = expand_inputs(&args.io.input)?;
    let datasets = load_datasets(&files)?;
    let limits = SearchLimits {
        node_cap: args.node_cap,
    };
    let reports = datasets
        .par_iter()
        .map(|ds| labelled(ds, index_report_with(ds, limits)))
        .collect::<Result<Vec<_>, _>>()?;
    let extra: Vec<Option<[Option<f64>; 4]>> = datasets
        .par_iter()
        .map(|ds| {
            args.restrictions.then(|| {
                [
                    Some(harp_efficiency(ds)),
                    Some(quasilinear_efficiency(ds)),
                    fosd_ccei(ds).ok(),
                    Some(gapp_efficiency(ds)),
                ]
            })
        })
        .collect();
    match args.format {
        OutputFormat::Csv => {
            let mut header: Vec<&str> = revpref::IndexReport::CSV_HEADER.split(',').collect();
            if args.restrictions {
                header.extend(["homothetic", "quasilinear", "fosd", "gapp"]);
            }
            let rows = reports
                .iter()
                .zip(&extra)
                .map(|(r, x)| {
                    let mut row: Vec<String> = r.csv_row().split(',').map(str::to_string).collect();
                    row[0] = r.label.clone();
                    if let Some(x) = x {
                        row.extend(x.iter().map(|v| opt(*v)));
                    }
                    row
                })
                .collect();
            write_csv(&args.io.output, &header, &rows)?;
        }
        OutputFormat::Json => {
            let values: Vec<serde_json::Value> = reports
                .iter()
                .zip(&extra)
                .map(|(r, x)| {
                    let mut v = serde_json::to_value(r).expect("report serializes");
                    if let Some([h, q, f, g]) = x {
                        v["restrictions"] = serde_json::json!({
                            "homothetic": h, "quasilinear": q, "fosd": f, "gapp": g,
                        });
                    }
                    v
                })
                .collect();
            write_json(&args.io.output, &values)?;
        }
    }
    finish(&args.io.output, "indices", None, &files, args)
}

pub fn power(args: &PowerArgs) -> Result<(), CliError> {
    if args.sims == 0 {
        return Err(CliError::Usage("--sims must be at least 1".into()));
    }
    let files = expand_inputs(&args.io.input)?;
    let datasets = load_datasets(&files)?;
    let results = datasets
        .par_iter()
        .map(|ds| {
            let summary = match args.mode {
                PowerMode::Discrete => {
                    bronars_discrete(&BudgetDesign::from_dataset(ds), args.options, args.sims, args.seed)
                }
                PowerMode::Shares => bronars_shares(ds, args.sims, args.seed),
            };
            Ok((ccei(ds), labelled(ds, summary)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let observed: Vec<f64> = results.iter().map(|r| r.0).collect();
    let means: Vec<f64> = results.iter().map(|r| r.1.mean).collect();
    let direction = if args.reverse_regression {
        RegressionDirection::ObservedOnSimulated
    } else {
        RegressionDirection::SimulatedOnObserved
    };
    // undefined for fewer than three consumers or no spread
    let adjusted = power::power_adjusted_ccei(&observed, &means, direction).ok();
    let rows = datasets
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(i, (ds, (obs, s)))| {
            vec![
                ds.label().to_string(),
                num(*obs),
                num(s.mean),
                num(s.sd),
                num(s.min),
                num(s.median),
                num(s.max),
                num(power::selten_score(*obs, s)),
                opt(adjusted.as_ref().map(|a| a[i])),
            ]
        })
        .collect();
    let header = [
        "label", "ccei", "sim_mean", "sim_sd", "sim_min", "sim_median", "sim_max", "selten",
        "power_adjusted",
    ];
    write_csv(&args.io.output, &header, &rows)?;
    finish(&args.io.output, "power", Some(args.seed), &files, args)
}

pub fn permtest(args: &PermtestArgs) -> Result<(), CliError> {
    if args.perms == 0 {
        return Err(CliError::Usage("--perms must be at least 1".into()));
    }
    let files = expand_inputs(&args.io.input)?;
    let datasets = load_datasets(&files)?;
    let config = PermutationConfig {
        n_perm: args.perms,
        abort_threshold: args.abort_threshold,
        abort_check_at: args.abort_check_at,
        alpha: args.alpha,
        seed: args.seed,
    };
    let outcomes = datasets
        .par_iter()
        .map(|ds| labelled(ds, permutation_test(ds, &config)))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = datasets
        .iter()
        .zip(&outcomes)
        .map(|(ds, o)| {
            vec![
                ds.label().to_string(),
                num(o.observed_ccei),
                num(o.p_value),
                o.aborted.to_string(),
                o.draws.to_string(),
                o.approximate_maximizer.to_string(),
            ]
        })
        .collect();
    let header = ["label", "ccei", "p_value", "aborted", "draws", "approximate_maximizer"];
    write_csv(&args.io.output, &header, &rows)?;
    finish(&args.io.output, "permtest", Some(args.seed), &files, args)
}

/// File name for a consumer id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn write_datasets(
    dir: &Path,
    datasets: &BTreeMap<String, ChoiceDataset>,
    fmt: Format,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut seen = BTreeSet::new();
    for (id, ds) in datasets {
        let stem = file_stem(id);
        if !seen.insert(stem.clone()) {
            return Err(CliError::Usage(format!("consumer ids collide as file name {stem:?}")));
        }
        let path = dir.join(format!("{stem}.{}", fmt.extension()));
        format::write_path(ds, &path).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn etl(args: &EtlArgs) -> Result<(), CliError> {
    let window: MonthWindow = args.window.parse().map_err(|e: revpref::Error| CliError::Usage(e.to_string()))?;
    let file = fs::File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let parsed = etl::parse_transactions(std::io::BufReader::new(file), args.lenient)?;
    let options = AggregateOptions {
        categories: args.categories.clone(),
        window,
        price_basis: match args.price_basis {
            PriceBasisArg::Final => PriceBasis::Final,
            PriceBasisArg::Shelf => PriceBasis::Shelf,
        },
        subcategories: args.subcategory.clone(),
    };
    let fmt = match args.format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };
    let mut inputs = vec![args.input.clone()];
    let report = match args.scenario {
        None => {
            let (datasets, report) = etl::build_datasets(&parsed, &options, args.require_consecutive)?;
            write_datasets(&args.output, &datasets, fmt)?;
            serde_json::to_value(&report).expect("report serializes")
        }
        Some(scenario) => {
            let calendar = match &args.calendar {
                Some(path) => {
                    inputs.push(path.clone());
                    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
                    Some(HolidayCalendar::from_csv(f)?)
                }
                None => None,
            };
            let scenario = match scenario {
                ScenarioArg::Season => Scenario::Season,
                ScenarioArg::Year => Scenario::Year,
                ScenarioArg::WorkingDay => Scenario::WorkingDay,
                ScenarioArg::MealTime => Scenario::MealTime,
                ScenarioArg::Discount => Scenario::Discount,
            };
            let parts = etl::split_scenario(&parsed.records, scenario, calendar.as_ref())?;
            let mut reports = serde_json::Map::new();
            for (label, records) in parts {
                let part = etl::ParsedTransactions {
                    records,
                    ..parsed.clone()
                };
                let (datasets, report) = etl::build_datasets(&part, &options, args.require_consecutive)?;
                write_datasets(&args.output.join(&label), &datasets, fmt)?;
                reports.insert(label, serde_json::to_value(&report).expect("report serializes"));
            }
            serde_json::Value::Object(reports)
        }
    };
    fs::create_dir_all(&args.output).map_err(|e| CliError::io(&args.output, e))?;
    write_json(&args.output.join("etl_report.json"), &report)?;
    manifest::write(
        &manifest::path_for(&args.output, true),
        "etl",
        None,
        &inputs,
        args,
    )
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let files = expand_inputs(&args.io.input)?;
    let datasets = load_datasets(&files)?;
    let kind = match args.model {
        ModelArg::Ces => ModelKind::Ces,
        ModelArg::Da => ModelKind::DisappointmentAversion,
    };
    let results = datasets
        .par_iter()
        .map(|ds| labelled(ds, estimate_ces(ds, kind)))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = results
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.csv_row().split(',').map(str::to_string).collect();
            row[0] = r.label.clone();
            row
        })
        .collect();
    let header: Vec<&str> = EstimationResult::CSV_HEADER.split(',').collect();
    write_csv(&args.io.output, &header, &rows)?;
    finish(&args.io.output, "estimate", None, &files, args)
}

fn choice_metrics(ds: &ChoiceDataset, rule: &MiddleChooserRule) -> Vec<String> {
    let down = analytics::downward_sloping_score(ds).ok();
    let middle = analytics::middle_chooser(ds, rule).ok();
    let half = ds.len() / 2;
    let (first, second) = if half >= 1 {
        let a: Vec<usize> = (0..half).collect();
        let b: Vec<usize> = (half..ds.len()).collect();
        (Some(ccei(&ds.subset(&a))), Some(ccei(&ds.subset(&b))))
    } else {
        (None, None)
    };
    vec![
        ds.label().to_string(),
        ds.len().to_string(),
        num(ccei(ds)),
        opt(down.map(|d| d.r)),
        opt(down.map(|d| d.p_value)),
        middle.map(|m| m.is_middle.to_string()).unwrap_or_default(),
        middle.map(|m| m.qualifying_rounds.to_string()).unwrap_or_default(),
        opt(first),
        opt(second),
    ]
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    if let Some(path) = &args.transactions {
        let year = args.year.expect("clap enforces --year");
        let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let parsed = etl::parse_transactions(std::io::BufReader::new(file), false)?;
        let consumers: BTreeSet<&str> = parsed.records.iter().map(|r| r.membership_id.as_str()).collect();
        let rows = consumers
            .par_iter()
            .filter_map(|&c| {
                let disc = analytics::discount_metrics(&parsed.records, c, year).ok()?;
                let mut row = vec![c.to_string()];
                for grouping in [Grouping::HoursOfDay, Grouping::DaysOfWeek, Grouping::TenDayPeriods] {
                    for basis in [Basis::Amount, Basis::Count] {
                        let v = analytics::volatility(&parsed.records, c, year, grouping, basis).ok();
                        row.push(opt(v.map(|v| v.v)));
                    }
                }
                row.extend([
                    num(disc.prop_discounted),
                    num(disc.aggregate_rate),
                    num(disc.mean_txn_rate),
                    disc.transactions.to_string(),
                ]);
                Some(row)
            })
            .collect();
        let header = [
            "label", "v_hours_amount", "v_hours_count", "v_days_amount", "v_days_count",
            "v_tenday_amount", "v_tenday_count", "prop_discounted", "aggregate_rate",
            "mean_txn_rate", "transactions",
        ];
        write_csv(&args.output, &header, &rows)?;
        return finish(&args.output, "analyze", None, &[path.clone()], args);
    }
    if let (Some(s1), Some(s2)) = (&args.s1, &args.s2) {
        let files1 = expand_inputs(std::slice::from_ref(s1))?;
        let files2 = expand_inputs(std::slice::from_ref(s2))?;
        let a = load_datasets(&files1)?;
        let b: BTreeMap<String, ChoiceDataset> = load_datasets(&files2)?
            .into_iter()
            .map(|d| (d.label().to_string(), d))
            .collect();
        let pairs: Vec<(&ChoiceDataset, &ChoiceDataset)> =
            a.iter().filter_map(|d| Some((d, b.get(d.label())?))).collect();
        let rows = pairs
            .par_iter()
            .map(|(x, y)| {
                let d = labelled(x, analytics::ccei_diff(x, y, args.splits, args.seed))?;
                Ok(vec![
                    x.label().to_string(),
                    num(d.ccei_s1),
                    num(d.ccei_s2),
                    num(d.ccei_combined),
                    num(d.diff),
                    num(d.benchmark_mean),
                ])
            })
            .collect::<Result<Rows, CliError>>()?;
        let header = ["label", "ccei_s1", "ccei_s2", "ccei_combined", "diff", "benchmark_mean"];
        write_csv(&args.output, &header, &rows)?;
        let inputs: Vec<PathBuf> = files1.into_iter().chain(files2).collect();
        return finish(&args.output, "analyze", Some(args.seed), &inputs, args);
    }
    let files = expand_inputs(&args.input)?;
    let datasets = load_datasets(&files)?;
    let rule = MiddleChooserRule {
        majority: args.majority,
        ..MiddleChooserRule::default()
    };
    let rows: Rows = datasets.par_iter().map(|ds| choice_metrics(ds, &rule)).collect();
    let header = [
        "label", "t", "ccei", "downward_r", "downward_p", "middle_chooser", "qualifying_rounds",
        "ccei_first_half", "ccei_second_half",
    ];
    write_csv(&args.output, &header, &rows)?;
    finish(&args.output, "analyze", None, &files, args)
}

/// `label → value` from one column of a metric CSV; blank cells are skipped.
fn read_column(path: &Path, column: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Usage(format!("{}: no column {name:?}", path.display()))
        })
    };
    let (label, col) = (find("label")?, find(column)?);
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let cell = record.get(col).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let value = match cell {
            "true" => 1.0,
            "false" => 0.0,
            _ => cell.parse().map_err(|_| {
                CliError::Data(revpref::Error::Parse {
                    line: record.position().map_or(0, |p| p.line() as usize),
                    message: format!("{}: not a number: {cell:?}", path.display()),
                })
            })?,
        };
        out.insert(record.get(label).unwrap_or("").to_string(), value);
    }
    Ok(out)
}

pub fn correlate(args: &CorrelateArgs) -> Result<(), CliError> {
    let left = read_column(&args.left, &args.left_column)?;
    let right = read_column(&args.right, &args.right_column)?;
    let (x, y): (Vec<f64>, Vec<f64>) = left
        .iter()
        .filter_map(|(k, a)| Some((*a, *right.get(k)?)))
        .unzip();
    let (statistic, p_value, n) = match args.test {
        TestArg::Spearman => {
            let r = analytics::spearman(&x, &y)?;
            (r.r, r.p_value, r.n)
        }
        TestArg::PairedT => {
            let t = analytics::paired_ttest(&x, &y)?;
            (t.t, t.p_value, x.len())
        }
    };
    let test = match args.test {
        TestArg::Spearman => "spearman",
        TestArg::PairedT => "paired_t",
    };
    let rows = vec![vec![
        args.left_column.clone(),
        args.right_column.clone(),
        test.to_string(),
        n.to_string(),
        num(statistic),
        num(p_value),
    ]];
    write_csv(&args.output, &["left", "right", "test", "n", "statistic", "p_value"], &rows)?;
    finish(
        &args.output,
        "correlate",
        None,
        &[args.left.clone(), args.right.clone()],
        args,
    )
}
