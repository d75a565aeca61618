//! Writing output tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use wxverify::table::Table;

use crate::error::{CliError, CliResult};

/// Writes `table` as `<dir>/<table.name>.csv` and returns the path.
pub fn write_table(dir: &Path, table: &Table) -> CliResult<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_table_to(table, BufWriter::new(file))?;
    Ok(path)
}

pub fn write_table_to<W: Write>(table: &Table, writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(ToString::to_string))?;
    }
    w.flush().map_err(|e| CliError::Data(format!("writing table {}: {e}", table.name)))?;
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CliError::Data(format!("serialising {}: {e}", path.display())))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use wxverify::row;

    #[test]
    fn csv_has_header_and_exact_floats() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(row![0.1 + 0.2, None::<f64>]);
        let mut buf = Vec::new();
        write_table_to(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n0.30000000000000004,\n");
    }
}
