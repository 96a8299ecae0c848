//! CSV export of curves: a header row, an integer index column, then float
//! columns in shortest round-trip scientific notation.

use std::path::Path;

use crate::error::{Error, Result};

/// Named float columns over a shared integer index.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub index_name: String,
    pub index: Vec<usize>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl Curve {
    pub fn new(index_name: &str, index: Vec<usize>) -> Self {
        Self {
            index_name: index_name.into(),
            index,
            columns: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.index.len() {
            return Err(Error::Shape(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.index.len()
            )));
        }
        self.columns.push((name.into(), values));
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec![self.index_name.clone()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for (row, idx) in self.index.iter().enumerate() {
            let mut rec = vec![idx.to_string()];
            rec.extend(self.columns.iter().map(|(_, v)| format!("{:e}", v[row])));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii"))
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(s.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        let (index_name, names) = header
            .split_first()
            .ok_or_else(|| Error::Malformed("CSV without header".into()))?;
        let mut index = Vec::new();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for rec in r.records() {
            let rec = rec?;
            let bad = |f: &str| Error::Malformed(format!("unparsable CSV field `{f}`"));
            index.push(rec[0].parse().map_err(|_| bad(&rec[0]))?);
            for (col, field) in values.iter_mut().zip(rec.iter().skip(1)) {
                col.push(field.parse().map_err(|_| bad(field))?);
            }
        }
        Ok(Self {
            index_name: index_name.clone(),
            index,
            columns: names.iter().cloned().zip(values).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_every_bit() {
        let vals = vec![0.1 + 0.2, -1e-300, 127.5, f64::MIN_POSITIVE, 1.0 / 3.0];
        let c = Curve::new("trace_count", (1..=5).collect()).with("mean_rank", vals.clone()).unwrap();
        let s = c.to_csv_string().unwrap();
        assert!(s.starts_with("trace_count,mean_rank\n1,"));
        assert!(!s.contains('\r'));
        let back = Curve::from_csv_str(&s).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.column("mean_rank").unwrap().iter().zip(&vals) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(Curve::new("i", vec![0, 1]).with("x", vec![1.0]).is_err());
    }
}
