use std::io::Write;
use std::path::Path;

use gpsobol_core::inputs::Design;

use crate::error::{CliError, CliResult};

/// Reads `d` input columns followed by one response column. The header row is
/// required; its names are not interpreted.
pub fn read_design(path: &Path, d: usize) -> CliResult<Design> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::schema(format!("cannot read design {}: {e}", path.display())))?;
    let width = reader.headers().map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?.len();
    if width != d + 1 {
        let what = if width == d { "missing response column" } else { "wrong number of columns" };
        return Err(CliError::schema(format!(
            "{}: {what}: expected {} input columns and 1 response column, found {width} columns",
            path.display(),
            d
        )));
    }
    let mut points = Vec::new();
    let mut responses = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        let mut values = Vec::with_capacity(width);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::schema(format!("{}: row {}, column {}: not a number: {field:?}", path.display(), row + 2, col + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::schema(format!("{}: row {}, column {}: not finite", path.display(), row + 2, col + 1)));
            }
            values.push(v);
        }
        responses.push(values.pop().expect("width checked"));
        points.push(values);
    }
    Design::new(points, Some(responses)).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
}

pub fn write_design<W: Write>(design: &Design, mut out: W) -> std::io::Result<()> {
    let d = design.points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=d).map(|l| format!("x{l}")).collect();
    if design.responses.is_some() {
        header.push("y".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (j, x) in design.points.iter().enumerate() {
        let mut fields: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
        if let Some(y) = &design.responses {
            fields.push(format!("{:.16e}", y[j]));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
