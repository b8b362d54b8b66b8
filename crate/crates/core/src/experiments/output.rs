use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::model::DiscreteField;
use crate::sampler::FiberSet;

/// First line of every CSV file written by this crate.
pub const CSV_VERSION_LINE: &str = "# fiberlat-v1";

/// Shortest round-trip decimal, in exponent form for very small or large values.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// A rectangular table of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_VERSION_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

/// Pretty JSON followed by a newline.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `i, j, weight` per fiber.
pub fn fibers_table(fibers: &FiberSet) -> Table {
    let mut t = Table::new(["i", "j", "weight"]);
    for e in fibers.edges() {
        t.push(vec![e.i.to_string(), e.j.to_string(), fmt_f64(e.weight)]);
    }
    t
}

/// Node index, position and values of a grid field.
pub fn field_table(u: &DiscreteField) -> Table {
    let grid = u.grid();
    let d = grid.dim();
    let m = u.components();
    let columns = std::iter::once("node".to_string())
        .chain((0..d).map(|k| format!("x{k}")))
        .chain((0..m).map(|k| format!("u{k}")));
    let mut t = Table::new(columns);
    let mut x = vec![0.0; d];
    for i in 0..grid.len() {
        grid.position_into(i, &mut x);
        let row = std::iter::once(i.to_string())
            .chain(x.iter().map(|&v| fmt_f64(v)))
            .chain(u.node(i).iter().map(|&v| fmt_f64(v)))
            .collect();
        t.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_version_line() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), fmt_f64(0.5)]);
        let s = t.to_csv_string();
        assert_eq!(s, "# fiberlat-v1\na,b\n1,0.5\n");
        assert_eq!(t.column("b").unwrap(), vec!["0.5"]);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-20, 3.0e17, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1e-20), "1e-20");
    }
}
