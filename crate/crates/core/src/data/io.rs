use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Gas, SampleRecord, FEATURE_NAMES, N_FEATURES, N_OFFSETS};
use crate::error::{CsvError, Error, Result};

/// The exact, ordered dataset header.
pub const CSV_HEADER: &str = "sample_id,temp_mean_c,rain_monthly_mm,solar_monthly_tj_ha,soil_ph,soil_whc_mm,soil_p_mg_l,soil_k_mg_l,soil_mg_mg_l,n_applied_kg_ha,seeds_per_m2,co2_dm7,co2_dm3,co2_d0,co2_d1,co2_d2,co2_d4,co2_d8,co2_d16,co2_d26,n2o_dm7,n2o_dm3,n2o_d0,n2o_d1,n2o_d2,n2o_d4,n2o_d8,n2o_d16,n2o_d26";

fn full_columns() -> Vec<&'static str> {
    CSV_HEADER.split(',').collect()
}

fn push_f64(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    line.push(',');
    // `{:?}` is the shortest representation that parses back to the same bits
    let _ = write!(line, "{v:?}");
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn csv_write(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    let mut line = String::new();
    for rec in records {
        line.clear();
        line.push_str(&rec.sample_id.to_string());
        for v in rec.features() {
            push_f64(&mut line, v);
        }
        for v in rec.co2_flux.iter().chain(&rec.n2o_flux) {
            push_f64(&mut line, *v);
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Predicted series, one row per sample: `sample_id,<gas>_dm7,…,<gas>_d26`.
pub fn predictions_write(
    path: impl AsRef<Path>,
    gas: Gas,
    ids: &[u64],
    predictions: &[[f64; N_OFFSETS]],
) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != predictions.len() {
        return Err(Error::usage("prediction count does not match id count"));
    }
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "sample_id,{}", gas.column_names().join(",")).map_err(io)?;
    let mut line = String::new();
    for (id, row) in ids.iter().zip(predictions) {
        line.clear();
        line.push_str(&id.to_string());
        for v in row {
            push_f64(&mut line, *v);
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn check_header(found: &[String], expected: &[&str]) -> Result<(), CsvError> {
    for col in expected {
        if !found.iter().any(|f| f == col) {
            return Err(CsvError::MissingColumn {
                column: (*col).to_string(),
            });
        }
    }
    for (position, name) in found.iter().enumerate() {
        let exp = expected.get(position).copied().unwrap_or("<end of header>");
        if name != exp {
            return Err(CsvError::UnexpectedColumn {
                position,
                found: name.clone(),
                expected: exp.to_string(),
            });
        }
    }
    Ok(())
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, CsvError> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CsvError::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn parse_id(raw: &str, row: usize) -> Result<u64, CsvError> {
    raw.trim().parse::<u64>().map_err(|_| CsvError::NonNumeric {
        row,
        column: "sample_id".into(),
        value: raw.to_string(),
    })
}

fn check_range(v: f64, row: usize, column: &str, max: f64) -> Result<f64, CsvError> {
    if (0.0..=max).contains(&v) {
        Ok(v)
    } else {
        Err(CsvError::OutOfRange {
            row,
            column: column.to_string(),
            value: v,
            min: 0.0,
            max,
        })
    }
}

fn open_reader(path: &Path) -> Result<(csv::Reader<File>, Vec<String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| CsvError::Malformed(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    Ok((reader, header))
}

/// Strict dataset reader. Rows are numbered from 1 (the header is row 0).
pub fn csv_read(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let (mut reader, header) = open_reader(path)?;
    let columns = full_columns();
    check_header(&header, &columns)?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CsvError::Malformed(e.to_string()))?;
        if row.len() != columns.len() {
            return Err(CsvError::FieldCount {
                row: row_no,
                expected: columns.len(),
                found: row.len(),
            }
            .into());
        }
        let mut rec = parse_features(&row, row_no)?;
        for k in 0..N_OFFSETS {
            let c = 1 + N_FEATURES + k;
            let v = parse_cell(&row[c], row_no, columns[c])?;
            rec.co2_flux[k] = check_range(v, row_no, columns[c], Gas::Co2.max_flux())?;
            let c = 1 + N_FEATURES + N_OFFSETS + k;
            let v = parse_cell(&row[c], row_no, columns[c])?;
            rec.n2o_flux[k] = check_range(v, row_no, columns[c], Gas::N2o.max_flux())?;
        }
        records.push(rec);
    }
    Ok(records)
}

fn parse_features(row: &csv::StringRecord, row_no: usize) -> Result<SampleRecord, CsvError> {
    let id = parse_id(&row[0], row_no)?;
    let mut f = [0.0; N_FEATURES];
    for (j, v) in f.iter_mut().enumerate() {
        *v = parse_cell(&row[1 + j], row_no, FEATURE_NAMES[j])?;
    }
    Ok(SampleRecord::from_features(id, f))
}

/// Reads either a full dataset file or a features-only file
/// (`sample_id` plus the ten feature columns). Target fields of the
/// returned records are populated only in the first case.
pub fn csv_read_features(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let columns = full_columns();
    let (mut reader, header) = open_reader(path)?;
    if header.len() == columns.len() {
        drop(reader);
        return csv_read(path);
    }
    check_header(&header, &columns[..1 + N_FEATURES])?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CsvError::Malformed(e.to_string()))?;
        if row.len() != 1 + N_FEATURES {
            return Err(CsvError::FieldCount {
                row: row_no,
                expected: 1 + N_FEATURES,
                found: row.len(),
            }
            .into());
        }
        records.push(parse_features(&row, row_no)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, GeneratorConfig};

    fn write_text(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn csv_error(r: Result<Vec<SampleRecord>>) -> CsvError {
        match r {
            Err(Error::Csv(e)) => e,
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn header_matches_schema_names() {
        let mut names = vec!["sample_id".to_string()];
        names.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        names.extend(Gas::Co2.column_names());
        names.extend(Gas::N2o.column_names());
        assert_eq!(names.join(","), CSV_HEADER);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = generate(&GeneratorConfig::new(100, 4, 0.3)).unwrap();
        let p = dir.path().join("d.csv");
        csv_write(&recs, &p).unwrap();
        assert_eq!(csv_read(&p).unwrap(), recs);
        assert_eq!(csv_read_features(&p).unwrap(), recs);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let header = CSV_HEADER.replace("soil_ph,", "");
        let p = write_text(&dir, "m.csv", &format!("{header}\n"));
        assert_eq!(
            csv_error(csv_read(&p)),
            CsvError::MissingColumn { column: "soil_ph".into() }
        );
    }

    #[test]
    fn reordered_and_unknown_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let swapped = CSV_HEADER.replace("soil_ph,soil_whc_mm", "soil_whc_mm,soil_ph");
        let p = write_text(&dir, "r.csv", &format!("{swapped}\n"));
        assert!(matches!(csv_error(csv_read(&p)), CsvError::UnexpectedColumn { position: 4, .. }));
        let extra = format!("{CSV_HEADER},notes\n");
        let p = write_text(&dir, "u.csv", &extra);
        assert!(matches!(csv_error(csv_read(&p)), CsvError::UnexpectedColumn { .. }));
    }

    #[test]
    fn negative_flux_is_range_error_with_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let recs = generate(&GeneratorConfig::new(3, 4, 0.0)).unwrap();
        let p = dir.path().join("g.csv");
        csv_write(&recs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
        let col = full_columns().iter().position(|c| *c == "n2o_d4").unwrap();
        cells[col] = "-1".into();
        lines[2] = cells.join(",");
        let p = write_text(&dir, "bad.csv", &(lines.join("\n") + "\n"));
        match csv_error(csv_read(&p)) {
            CsvError::OutOfRange { row, column, value, .. } => {
                assert_eq!((row, column.as_str(), value), (2, "n2o_d4", -1.0));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn non_numeric_and_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut row = vec!["0".to_string()];
        row.extend(std::iter::repeat("1".to_string()).take(28));
        row[3] = "abc".into();
        let p = write_text(&dir, "n.csv", &format!("{CSV_HEADER}\n{}\n", row.join(",")));
        assert_eq!(
            csv_error(csv_read(&p)),
            CsvError::NonNumeric { row: 1, column: "solar_monthly_tj_ha".into(), value: "abc".into() }
        );
        let p = write_text(&dir, "s.csv", &format!("{CSV_HEADER}\n0,1,2\n"));
        assert!(matches!(csv_error(csv_read(&p)), CsvError::FieldCount { row: 1, found: 3, .. }));
        row[3] = "NaN".into();
        let p = write_text(&dir, "nan.csv", &format!("{CSV_HEADER}\n{}\n", row.join(",")));
        assert!(matches!(csv_error(csv_read(&p)), CsvError::NonNumeric { .. }));
    }

    #[test]
    fn features_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let header = full_columns()[..11].join(",");
        let p = write_text(&dir, "f.csv", &format!("{header}\n7,1,2,3,4,5,6,7,8,9,10\n"));
        let recs = csv_read_features(&p).unwrap();
        assert_eq!(recs[0].sample_id, 7);
        assert_eq!(recs[0].features()[9], 10.0);
        assert!(csv_read(&p).is_err());
    }
}
