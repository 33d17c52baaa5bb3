//! Dataset files.
//!
//! CSV has the header `obs_id,p1,..,pK,x1,..,xK` with `K` taken from the
//! header. JSON is an array of `{"obs_id", "prices", "bundle"}` objects.
//! Numbers are written in shortest round-trip form, so reading a written
//! file gives back the same dataset bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Format implied by a file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn goods_from_header(header: &csv::StringRecord) -> Result<usize> {
    let parse_err = |message: String| Error::Parse { line: 1, message };
    let n = header.len();
    if n < 3 || n % 2 == 0 || &header[0] != "obs_id" {
        return Err(parse_err(
            "expected header obs_id,p1..pK,x1..xK".into(),
        ));
    }
    let k = (n - 1) / 2;
    for i in 0..k {
        let (p, x) = (format!("p{}", i + 1), format!("x{}", i + 1));
        if header[1 + i] != p || header[1 + k + i] != x {
            return Err(parse_err(format!(
                "expected columns {p} and {x} in header"
            )));
        }
    }
    Ok(k)
}

/// Reads a CSV dataset.
pub fn read_csv<R: Read>(reader: R, label: &str) -> Result<ChoiceDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let k = goods_from_header(rdr.headers()?)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 1 + 2 * k {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", 1 + 2 * k, record.len()),
            });
        }
        let number = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {s:?}"),
            })
        };
        let prices = (1..=k).map(|c| number(&record[c])).collect::<Result<Vec<_>>>()?;
        let bundle = (k + 1..=2 * k)
            .map(|c| number(&record[c]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((record[0].to_string(), prices, bundle));
    }
    ChoiceDataset::new(label, rows)
}

/// Writes a CSV dataset.
pub fn write_csv<W: Write>(ds: &ChoiceDataset, writer: W) -> Result<()> {
    let k = ds.goods();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["obs_id".to_string()];
    header.extend((1..=k).map(|i| format!("p{i}")));
    header.extend((1..=k).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for obs in ds.observations() {
        let mut row = vec![obs.obs_id().to_string()];
        row.extend(obs.prices().iter().map(f64::to_string));
        row.extend(obs.bundle().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    obs_id: String,
    prices: Vec<f64>,
    bundle: Vec<f64>,
}

/// Reads a JSON dataset.
pub fn read_json<R: Read>(reader: R, label: &str) -> Result<ChoiceDataset> {
    let rows: Vec<JsonRow> = serde_json::from_reader(reader)?;
    ChoiceDataset::new(label, rows.into_iter().map(|r| (r.obs_id, r.prices, r.bundle)))
}

/// Writes a JSON dataset, one observation per line.
pub fn write_json<W: Write>(ds: &ChoiceDataset, mut writer: W) -> Result<()> {
    writeln!(writer, "[")?;
    let n = ds.len();
    for (i, obs) in ds.observations().iter().enumerate() {
        let row = JsonRow {
            obs_id: obs.obs_id().to_string(),
            prices: obs.prices().to_vec(),
            bundle: obs.bundle().to_vec(),
        };
        let sep = if i + 1 < n { "," } else { "" };
        writeln!(writer, "  {}{sep}", serde_json::to_string(&row)?)?;
    }
    writeln!(writer, "]")?;
    writer.flush()?;
    Ok(())
}

/// Label of a dataset read from `path`: the file stem.
pub fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a dataset file, choosing the format by extension.
pub fn read_path(path: &Path) -> Result<ChoiceDataset> {
    let file = BufReader::new(File::open(path).map_err(|e| {
        Error::Io(format!("{}: {e}", path.display()))
    })?);
    let label = label_of(path);
    match Format::from_path(path) {
        Format::Csv => read_csv(file, &label),
        Format::Json => read_json(file, &label),
    }
}

/// Writes a dataset file, choosing the format by extension.
pub fn write_path(ds: &ChoiceDataset, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match Format::from_path(path) {
        Format::Csv => write_csv(ds, file),
        Format::Json => write_json(ds, file),
    }
}
