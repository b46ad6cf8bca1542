//! Readers for the small numeric files taken by `frontier`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

fn parse_cell(cell: &str, line: usize) -> CliResult<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("line {line}: '{}' is not a number", cell.trim())))?;
    if !v.is_finite() {
        return Err(CliError::usage(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .filter(|c| !c.is_empty())
            .map(|c| parse_cell(c, line))
            .collect::<CliResult<Vec<f64>>>()
            .map_err(|e| e.context(path.display()))?;
        if !row.is_empty() {
            rows.push((line, row));
        }
    }
    let width = rows.first().map_or(0, |(_, r)| r.len());
    if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(CliError::usage(format!(
            "{}: line {line}: expected {width} values, found {}",
            path.display(),
            r.len()
        )));
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// A vector stored as one row or one column.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let rows = read_rows(path)?;
    match rows.as_slice() {
        [] => Err(CliError::usage(format!("{}: no values", path.display()))),
        [row] => Ok(row.clone()),
        _ if rows[0].len() == 1 => Ok(rows.into_iter().flatten().collect()),
        _ => Err(CliError::usage(format!("{}: expected a single row or column", path.display()))),
    }
}

pub fn read_matrix(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no values", path.display())));
    }
    Ok(rows)
}

pub fn to_matrix(rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    let p = rows.len();
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(CliError::usage(format!(
            "covariance must be square: row {} has {} entries for {p} rows",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// `"1,0;0,2"`, rows separated by semicolons.
pub fn parse_rows(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(parse_list)
        .collect()
}

pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .filter(|c| !c.trim().is_empty())
        .map(|c| {
            c.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("'{}' is not a number", c.trim())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn vectors_as_row_or_column() {
        assert_eq!(read_vector(file("0,0.3\n").path()).unwrap(), vec![0.0, 0.3]);
        assert_eq!(read_vector(file("0\n0.3\n").path()).unwrap(), vec![0.0, 0.3]);
    }

    #[test]
    fn bad_cells_report_lines() {
        let err = read_matrix(file("1,0\n0,x\n").path()).unwrap_err();
        assert!(err.message.contains("line 2"), "{}", err.message);
        let err = read_matrix(file("1,0\n0\n").path()).unwrap_err();
        assert!(err.message.contains("line 2"), "{}", err.message);
    }

    #[test]
    fn inline_rows() {
        assert_eq!(parse_rows("1,0;0,2").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert!(to_matrix(&[vec![1.0, 0.0]]).is_err());
    }
}
