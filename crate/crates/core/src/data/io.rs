//! CSV reader and writer for the dataset schema.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Dataset, ImpressionOpportunity};
use crate::error::{ArenaError, Result};

pub const DATASET_HEADER: [&str; 6] = ["period", "timestep", "seller_id", "auction_id", "p_value", "winning_price"];

/// Reads a dataset file and derives CTR/CVR from `seed`.
pub fn load_dataset(path: impl AsRef<Path>, seed: u64) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ArenaError::io(path, e))?;
    read_dataset(file, seed)
}

pub fn read_dataset<R: Read>(reader: R, seed: u64) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(h) => h?,
        None => return Err(ArenaError::Data { line: 1, message: "missing header".into() }),
    };
    if header.iter().ne(DATASET_HEADER.iter().copied()) {
        return Err(ArenaError::Data { line: 1, message: format!("expected header `{}`", DATASET_HEADER.join(",")) });
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != DATASET_HEADER.len() {
            return Err(ArenaError::Data { line, message: format!("expected {} columns, found {}", DATASET_HEADER.len(), record.len()) });
        }
        rows.push(parse_row(&record, line)?);
    }
    let mut dataset = Dataset::from_rows(rows)?;
    dataset.decompose(seed)?;
    Ok(dataset)
}

fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let raw = &record[idx];
    raw.parse().map_err(|_| ArenaError::Data { line, message: format!("column `{}`: cannot parse `{raw}`", DATASET_HEADER[idx]) })
}

fn parse_row(record: &csv::StringRecord, line: u64) -> Result<ImpressionOpportunity> {
    let bad = |message: String| ArenaError::Data { line, message };
    let period: u8 = field(record, 0, line)?;
    let timestep: u32 = field(record, 1, line)?;
    let seller_id: u32 = field(record, 2, line)?;
    let auction_id: u32 = field(record, 3, line)?;
    let p_value: f64 = field(record, 4, line)?;
    let winning_price: f64 = field(record, 5, line)?;

    if !(1..=2).contains(&period) {
        return Err(bad(format!("period must be 1 or 2, got {period}")));
    }
    if timestep == 0 {
        return Err(bad("timestep must be >= 1".into()));
    }
    if seller_id == 0 {
        return Err(bad("seller_id must be >= 1".into()));
    }
    if !(p_value > 0.0 && p_value < 1.0) {
        return Err(bad(format!("p_value must lie in (0, 1), got {p_value}")));
    }
    if !(winning_price >= 0.0 && winning_price.is_finite()) {
        return Err(bad(format!("winning_price must be finite and >= 0, got {winning_price}")));
    }
    Ok(ImpressionOpportunity { period, timestep, seller_id, auction_id, p_value, winning_price, ctr: f64::NAN, cvr: f64::NAN })
}

/// Writes rows in the dataset schema. Floats use the shortest representation
/// that reads back to the same value.
pub fn write_dataset<W: Write>(writer: W, rows: &[ImpressionOpportunity]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DATASET_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.period.to_string(),
            r.timestep.to_string(),
            r.seller_id.to_string(),
            r.auction_id.to_string(),
            r.p_value.to_string(),
            r.winning_price.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| ArenaError::io("<dataset writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "period,timestep,seller_id,auction_id,p_value,winning_price\n";

    #[test]
    fn header_only_is_empty() {
        let ds = read_dataset(HEADER.as_bytes(), 0).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn rows_come_back_canonical() {
        let text = format!("{HEADER}1,2,1,0,0.01,0.3\n1,1,2,5,0.02,0.1\n1,1,1,3,0.03,0.2\n");
        let ds = read_dataset(text.as_bytes(), 0).unwrap();
        let keys: Vec<_> = ds.rows().iter().map(|r| (r.seller_id, r.timestep, r.auction_id)).collect();
        assert_eq!(keys, vec![(1, 1, 3), (1, 2, 0), (2, 1, 5)]);
        assert!(ds.rows().iter().all(|r| r.ctr > 0.0 && r.cvr > 0.0));
    }

    #[test]
    fn out_of_range_pvalue_names_line() {
        let text = format!("{HEADER}1,1,1,0,0.01,0.3\n1,1,1,1,1.5,0.3\n");
        match read_dataset(text.as_bytes(), 0) {
            Err(ArenaError::Data { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("p_value"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        let short = format!("{HEADER}1,1,1,0,0.01\n");
        assert!(matches!(read_dataset(short.as_bytes(), 0), Err(ArenaError::Data { line: 2, .. })));
        let text = format!("{HEADER}1,1,1,x,0.01,0.2\n");
        assert!(matches!(read_dataset(text.as_bytes(), 0), Err(ArenaError::Data { line: 2, .. })));
        let neg = format!("{HEADER}1,1,1,0,0.01,-0.2\n");
        assert!(read_dataset(neg.as_bytes(), 0).is_err());
        let bad_header = "period,timestep,seller,auction_id,p_value,winning_price\n";
        assert!(matches!(read_dataset(bad_header.as_bytes(), 0), Err(ArenaError::Data { line: 1, .. })));
        assert!(read_dataset("".as_bytes(), 0).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_dataset("/nonexistent/data.csv", 0), Err(ArenaError::Io { .. })));
    }

    #[test]
    fn write_then_read_preserves_logged_columns() {
        let text = format!("{HEADER}1,1,1,0,0.0123456789,0.30000000000000004\n2,3,4,5,0.5,0\n");
        let ds = read_dataset(text.as_bytes(), 3).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, ds.rows()).unwrap();
        let again = read_dataset(buf.as_slice(), 3).unwrap();
        assert_eq!(ds, again);
    }
}
