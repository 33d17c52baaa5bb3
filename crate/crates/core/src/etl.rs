//! Monthly budget datasets from supermarket transaction logs.
//!
//! Each consumer-month becomes one observation: for every requested
//! category the quantity is the total kilograms bought and the price is
//! expenditure over quantity. A month enters a consumer's dataset only if
//! every category was bought in it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::Serialize;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};

/// One purchased line item.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub membership_id: String,
    pub store_id: String,
    pub timestamp: NaiveDateTime,
    pub category: String,
    pub subcategory: Option<String>,
    pub quantity_kg: f64,
    /// Amount paid, after discounts.
    pub expenditure: f64,
    pub shelf_expenditure: Option<f64>,
    pub discount_flag: bool,
}

impl TransactionRecord {
    /// Shelf expenditure, or the amount paid when the shelf amount is missing.
    pub fn shelf_or_final(&self) -> f64 {
        self.shelf_expenditure.unwrap_or(self.expenditure)
    }

    pub fn month(&self) -> YearMonth {
        YearMonth::of(self.timestamp.date())
    }
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1 to 12.
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!("month {month} outside 1..12")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    /// Months since year 0, for arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(n: i64) -> Self {
        YearMonth {
            year: n.div_euclid(12) as i32,
            month: n.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn next(self) -> Self {
        YearMonth::from_ordinal(self.ordinal() + 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected YYYY-MM, found {s:?}"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        YearMonth::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

/// Inclusive range of months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonthWindow {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl MonthWindow {
    pub fn new(start: YearMonth, end: YearMonth) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!("empty window {start}:{end}")));
        }
        Ok(MonthWindow { start, end })
    }

    pub fn contains(&self, m: YearMonth) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn months(&self) -> usize {
        (self.end.ordinal() - self.start.ordinal() + 1) as usize
    }
}

impl FromStr for MonthWindow {
    type Err = Error;

    /// `YYYY-MM:YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("expected START:END window, found {s:?}"))
        })?;
        MonthWindow::new(a.parse()?, b.parse()?)
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// Result of reading a transaction file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTransactions {
    pub records: Vec<TransactionRecord>,
    /// Rows rejected in lenient mode.
    pub errors: Vec<RowError>,
    /// Valid rows with zero quantity or zero expenditure, left out.
    pub dropped_zero: usize,
    pub warnings: Vec<String>,
}

const REQUIRED: [&str; 6] = [
    "membership_id",
    "store_id",
    "timestamp",
    "category",
    "quantity_kg",
    "expenditure",
];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            // fractional seconds or a trailing zone designator
            let head = s.get(..19)?;
            NaiveDateTime::parse_from_str(&head.replace('T', " "), FORMATS[0]).ok()
        })
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

struct Columns {
    required: [usize; 6],
    shelf: Option<usize>,
    flag: Option<usize>,
    subcategory: Option<usize>,
}

fn parse_row(record: &csv::StringRecord, cols: &Columns) -> std::result::Result<TransactionRecord, String> {
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let [member, store, ts, category, qty, spent] = cols.required;
    let number = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = field(i)
            .parse()
            .map_err(|_| format!("{name}: not a number: {:?}", field(i)))?;
        if !v.is_finite() {
            return Err(format!("{name}: non-finite value"));
        }
        Ok(v)
    };
    let timestamp =
        parse_timestamp(field(ts)).ok_or_else(|| format!("unparsable timestamp {:?}", field(ts)))?;
    let quantity_kg = number(qty, "quantity_kg")?;
    if quantity_kg < 0.0 {
        return Err("negative quantity".into());
    }
    let expenditure = number(spent, "expenditure")?;
    if expenditure < 0.0 {
        return Err("negative expenditure".into());
    }
    let shelf_expenditure = match cols.shelf.map(field) {
        None | Some("") => None,
        Some(_) => Some(number(cols.shelf.unwrap(), "shelf_expenditure")?),
    };
    if let Some(shelf) = shelf_expenditure {
        if shelf < expenditure - 1e-9 {
            return Err("shelf expenditure below amount paid".into());
        }
    }
    let discount_flag = match cols.flag.map(field) {
        None | Some("") => shelf_expenditure.is_some_and(|s| s > expenditure + 1e-9),
        Some(v) => parse_flag(v).ok_or_else(|| format!("discount_flag: unrecognised value {v:?}"))?,
    };
    let subcategory = cols
        .subcategory
        .map(field)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(TransactionRecord {
        membership_id: field(member).to_string(),
        store_id: field(store).to_string(),
        timestamp,
        category: field(category).to_string(),
        subcategory,
        quantity_kg,
        expenditure,
        shelf_expenditure,
        discount_flag,
    })
}

/// Reads transaction CSV.
///
/// Required columns are `membership_id, store_id, timestamp, category,
/// quantity_kg, expenditure`; `shelf_expenditure`, `discount_flag` and
/// `subcategory` are optional. A missing or empty discount flag is inferred
/// from a shelf amount above the amount paid. Without `lenient` the first
/// bad row is an error; with it bad rows are listed and skipped.
pub fn parse_transactions<R: Read>(reader: R, lenient: bool) -> Result<ParsedTransactions> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut out = ParsedTransactions::default();
    if header.is_empty() {
        out.warnings.push("empty transaction file".into());
        return Ok(out);
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let mut required = [0; 6];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name}"),
        })?;
    }
    let cols = Columns {
        required,
        shelf: find("shelf_expenditure"),
        flag: find("discount_flag"),
        subcategory: find("subcategory"),
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        match parse_row(&record, &cols) {
            Ok(r) if r.quantity_kg == 0.0 || r.expenditure == 0.0 => out.dropped_zero += 1,
            Ok(r) => out.records.push(r),
            Err(message) if lenient => out.errors.push(RowError { line, message }),
            Err(message) => return Err(Error::Parse { line, message }),
        }
    }
    if out.records.is_empty() && out.errors.is_empty() {
        out.warnings.push("no transactions".into());
    }
    Ok(out)
}

/// Expenditure used for prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PriceBasis {
    /// Amount paid.
    #[default]
    Final,
    /// Shelf amount before discounts (falls back to the amount paid).
    Shelf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOptions {
    pub categories: Vec<String>,
    pub window: MonthWindow,
    pub price_basis: PriceBasis,
    /// Keep only records whose subcategory is listed.
    pub subcategories: Option<Vec<String>>,
}

impl AggregateOptions {
    pub fn new(categories: Vec<String>, window: MonthWindow) -> Self {
        AggregateOptions {
            categories,
            window,
            price_basis: PriceBasis::Final,
            subcategories: None,
        }
    }

    fn admits(&self, r: &TransactionRecord) -> bool {
        self.window.contains(r.month())
            && self.subcategories.as_ref().is_none_or(|subs| {
                r.subcategory.as_ref().is_some_and(|s| subs.contains(s))
            })
    }
}

/// Quantity and expenditure totals of one consumer-category-month.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MonthlyCell {
    pub quantity: f64,
    pub expenditure: f64,
}

impl MonthlyCell {
    /// Quantity-weighted average price.
    pub fn price(&self) -> f64 {
        self.expenditure / self.quantity
    }
}

/// Totals per consumer, month and category index.
pub fn monthly_cells(
    records: &[TransactionRecord],
    options: &AggregateOptions,
) -> BTreeMap<String, BTreeMap<YearMonth, Vec<MonthlyCell>>> {
    let k = options.categories.len();
    let index: HashMap<&str, usize> = options
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut cells: BTreeMap<String, BTreeMap<YearMonth, Vec<MonthlyCell>>> = BTreeMap::new();
    for r in records.iter().filter(|r| options.admits(r)) {
        let Some(&c) = index.get(r.category.as_str()) else {
            continue;
        };
        let spent = match options.price_basis {
            PriceBasis::Final => r.expenditure,
            PriceBasis::Shelf => r.shelf_or_final(),
        };
        let cell = &mut cells
            .entry(r.membership_id.clone())
            .or_default()
            .entry(r.month())
            .or_insert_with(|| vec![MonthlyCell::default(); k])[c];
        cell.quantity += r.quantity_kg;
        cell.expenditure += spent;
    }
    cells
}

/// Budget dataset per consumer, observations ordered by month with ids
/// `YYYY-MM`. Consumers with no month covering every category are absent.
pub fn monthly_aggregate(
    records: &[TransactionRecord],
    options: &AggregateOptions,
) -> Result<BTreeMap<String, ChoiceDataset>> {
    if options.categories.is_empty() {
        return Err(Error::InvalidArgument("at least one category is required".into()));
    }
    let mut out = BTreeMap::new();
    for (consumer, months) in monthly_cells(records, options) {
        let rows: Vec<_> = months
            .into_iter()
            .filter(|(_, cells)| cells.iter().all(|c| c.quantity > 0.0 && c.expenditure > 0.0))
            .map(|(month, cells)| {
                (
                    month.to_string(),
                    cells.iter().map(MonthlyCell::price).collect(),
                    cells.iter().map(|c| c.quantity).collect(),
                )
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let ds = ChoiceDataset::new(consumer.clone(), rows)?;
        out.insert(consumer, ds);
    }
    Ok(out)
}

fn month_of_obs(id: &str) -> Option<YearMonth> {
    id.parse().ok()
}

/// Keeps consumers with `months_required` consecutive calendar months and
/// truncates each to the earliest such run.
pub fn filter_consecutive(
    datasets: &BTreeMap<String, ChoiceDataset>,
    months_required: usize,
) -> Result<BTreeMap<String, ChoiceDataset>> {
    if months_required == 0 {
        return Err(Error::InvalidArgument("months_required must be at least 1".into()));
    }
    let mut out = BTreeMap::new();
    for (consumer, ds) in datasets {
        let months: Vec<Option<YearMonth>> =
            ds.observations().iter().map(|o| month_of_obs(o.obs_id())).collect();
        let mut run_start = 0;
        for i in 0..months.len() {
            let continues = i > 0
                && matches!((months[i - 1], months[i]), (Some(a), Some(b)) if b.ordinal() == a.ordinal() + 1);
            if !continues {
                run_start = i;
            }
            if months[i].is_some() && i + 1 - run_start == months_required {
                let keep: Vec<usize> = (run_start..=i).collect();
                out.insert(consumer.clone(), ds.subset(&keep));
                break;
            }
        }
    }
    Ok(out)
}

/// Population price of a category in a month: all expenditure over all
/// quantity, pooled across consumers.
pub fn aggregate_price_index(records: &[TransactionRecord], category: &str, month: YearMonth) -> Result<f64> {
    let (q, e) = records
        .iter()
        .filter(|r| r.category == category && r.month() == month)
        .fold((0.0, 0.0), |(q, e), r| (q + r.quantity_kg, e + r.expenditure));
    if q <= 0.0 {
        return Err(Error::Degenerate(format!("no quantity for {category} in {month}")));
    }
    Ok(e / q)
}

/// Dated labels from a `date,label` CSV. A label of `workday` marks a
/// weekend date worked in lieu; any other label marks a holiday.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HolidayCalendar {
    days: BTreeMap<NaiveDate, String>,
}

impl HolidayCalendar {
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut days = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(record.get(0).unwrap_or(""), "%Y-%m-%d")
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("bad date: {e}"),
                })?;
            days.insert(date, record.get(1).unwrap_or("holiday").to_string());
        }
        Ok(HolidayCalendar { days })
    }

    pub fn insert(&mut self, date: NaiveDate, label: impl Into<String>) {
        self.days.insert(date, label.into());
    }

    pub fn is_working_day(&self, date: NaiveDate) -> bool {
        match self.days.get(&date) {
            Some(label) => label.eq_ignore_ascii_case("workday"),
            None => !matches!(date.weekday(), Weekday::Sat | Weekday::Sun),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Season,
    Year,
    WorkingDay,
    MealTime,
    Discount,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "season" => Scenario::Season,
            "year" => Scenario::Year,
            "working_day" => Scenario::WorkingDay,
            "meal_time" => Scenario::MealTime,
            "discount" => Scenario::Discount,
            _ => return Err(Error::InvalidArgument(format!("unknown scenario {s:?}"))),
        })
    }
}

/// Meteorological season; December belongs to the following winter.
pub fn season_of(month: u32) -> &'static str {
    match month {
        3..=5 => "spring",
        6..=8 => "summer",
        9..=11 => "autumn",
        _ => "winter",
    }
}

/// Within 10:00-14:00 or 16:00-19:00, end points excluded.
pub fn is_meal_time(ts: &NaiveDateTime) -> bool {
    let minute = ts.hour() * 60 + ts.minute();
    (600..840).contains(&minute) || (960..1140).contains(&minute)
}

fn part_label(r: &TransactionRecord, scenario: Scenario, calendar: Option<&HolidayCalendar>) -> String {
    match scenario {
        Scenario::Season => season_of(r.timestamp.month()).into(),
        Scenario::Year => r.timestamp.year().to_string(),
        Scenario::WorkingDay => {
            let working = calendar.is_some_and(|c| c.is_working_day(r.timestamp.date()));
            if working { "working" } else { "non_working" }.into()
        }
        Scenario::MealTime => if is_meal_time(&r.timestamp) { "meal" } else { "non_meal" }.into(),
        Scenario::Discount => if r.discount_flag { "discounted" } else { "non_discounted" }.into(),
    }
}

fn part_order(scenario: Scenario) -> &'static [&'static str] {
    match scenario {
        Scenario::Season => &["spring", "summer", "autumn", "winter"],
        Scenario::WorkingDay => &["working", "non_working"],
        Scenario::MealTime => &["meal", "non_meal"],
        Scenario::Discount => &["discounted", "non_discounted"],
        Scenario::Year => &[],
    }
}

/// Partitions records by a scenario rule. Parts come in a fixed order with
/// the first scenario part (`s1`) first; years are ascending. Every record
/// lands in exactly one part and record order is kept within parts.
pub fn split_scenario(
    records: &[TransactionRecord],
    scenario: Scenario,
    calendar: Option<&HolidayCalendar>,
) -> Result<Vec<(String, Vec<TransactionRecord>)>> {
    if scenario == Scenario::WorkingDay && calendar.is_none() {
        return Err(Error::InvalidArgument(
            "the working_day split needs a holiday calendar".into(),
        ));
    }
    let mut parts: BTreeMap<String, Vec<TransactionRecord>> = BTreeMap::new();
    for label in part_order(scenario) {
        parts.insert(label.to_string(), Vec::new());
    }
    for r in records {
        parts
            .entry(part_label(r, scenario, calendar))
            .or_default()
            .push(r.clone());
    }
    let order = part_order(scenario);
    let mut out: Vec<_> = parts.into_iter().collect();
    if !order.is_empty() {
        out.sort_by_key(|(label, _)| order.iter().position(|o| o == label));
    }
    Ok(out)
}

/// Summary written next to ETL output.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EtlReport {
    pub records_read: usize,
    pub rows_rejected: usize,
    pub rejected: Vec<RowError>,
    pub dropped_zero_rows: usize,
    pub consumers_in: usize,
    pub consumers_out: usize,
    /// Consumers dropped by coverage rules.
    pub excluded: Vec<String>,
    /// Months kept per emitted consumer.
    pub months_covered: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Aggregation plus the optional consecutive-month filter, with a report.
pub fn build_datasets(
    parsed: &ParsedTransactions,
    options: &AggregateOptions,
    require_consecutive: Option<usize>,
) -> Result<(BTreeMap<String, ChoiceDataset>, EtlReport)> {
    let consumers: BTreeSet<&str> = parsed.records.iter().map(|r| r.membership_id.as_str()).collect();
    let mut datasets = monthly_aggregate(&parsed.records, options)?;
    if let Some(n) = require_consecutive {
        datasets = filter_consecutive(&datasets, n)?;
    }
    let report = EtlReport {
        records_read: parsed.records.len(),
        rows_rejected: parsed.errors.len(),
        rejected: parsed.errors.clone(),
        dropped_zero_rows: parsed.dropped_zero,
        consumers_in: consumers.len(),
        consumers_out: datasets.len(),
        excluded: consumers
            .iter()
            .filter(|c| !datasets.contains_key(**c))
            .map(|c| c.to_string())
            .collect(),
        months_covered: datasets.iter().map(|(c, d)| (c.clone(), d.len())).collect(),
        warnings: parsed.warnings.clone(),
    };
    Ok((datasets, report))
}
