use std::collections::HashSet;
use std::path::Path;

use super::{DataError, RawTable, Schema};

/// Reads a comma-separated UTF-8 file with a header row.
///
/// The header must name exactly the schema's columns (in any order); rows are
/// reordered to schema order. Cells are kept as trimmed strings.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawTable, DataError> {
    let path = path.as_ref();
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let header_set: HashSet<&str> = header.iter().map(String::as_str).collect();
    let declared: HashSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    let missing: Vec<String> = schema
        .columns
        .iter()
        .filter(|c| !header_set.contains(c.name.as_str()))
        .map(|c| c.name.clone())
        .collect();
    let unexpected: Vec<String> = header
        .iter()
        .filter(|h| !declared.contains(h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(DataError::SchemaMismatch {
            missing,
            unexpected,
        });
    }

    // positions[j] = header position of schema column j
    let positions: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| header.iter().position(|h| *h == c.name).expect("checked above"))
        .collect();

    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(positions.iter().map(|&p| rec[p].to_string()).collect());
    }
    RawTable::new(schema.clone(), rows)
}
