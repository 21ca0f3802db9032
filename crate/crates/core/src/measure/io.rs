//! CSV persistence: header `weight,x1,...,xn`, one atom per row.

use super::{DiscreteMeasure, MeasureError};
use std::io::{Read, Write};
use std::path::Path;

impl DiscreteMeasure {
    pub fn load(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Self, MeasureError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, expected_dim)
    }

    pub fn read_csv<R: Read>(reader: R, expected_dim: Option<usize>) -> Result<Self, MeasureError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "weight" {
            return Err(MeasureError::Format("first column must be `weight`".into()));
        }
        let dim = headers.len() - 1;
        if dim == 0 {
            return Err(MeasureError::ZeroDimension);
        }
        for (k, h) in headers.iter().skip(1).enumerate() {
            if h != format!("x{}", k + 1) {
                return Err(MeasureError::Format(format!("unexpected column `{h}`")));
            }
        }
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(MeasureError::DimensionMismatch { expected, found: dim });
            }
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != dim + 1 {
                return Err(MeasureError::DimensionMismatch { expected: dim, found: record.len().saturating_sub(1) });
            }
            let parse = |s: &str| -> Result<f64, MeasureError> {
                s.parse::<f64>()
                    .map_err(|e| MeasureError::Format(format!("row {}: `{s}`: {e}", row + 1)))
            };
            weights.push(parse(&record[0])?);
            for v in record.iter().skip(1) {
                atoms.push(parse(v)?);
            }
        }
        Self::new(dim, atoms, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeasureError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Floats use the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MeasureError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["weight".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for (i, atom) in self.atoms().enumerate() {
            record.clear();
            record.push(format!("{:?}", self.weight(i)));
            record.extend(atom.iter().map(|v| format!("{v:?}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_atom_file_loads() {
        let text = "weight,x1,x2\n0.5,1,0\n0.5,-1,0\n";
        let m = DiscreteMeasure::read_csv(text.as_bytes(), Some(2)).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 2);
        assert!(matches!(
            DiscreteMeasure::read_csv(text.as_bytes(), Some(3)),
            Err(MeasureError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_weight_sum_rejected() {
        let text = "weight,x1,x2\n0.45,1,0\n0.45,-1,0\n";
        assert!(matches!(
            DiscreteMeasure::read_csv(text.as_bytes(), None),
            Err(MeasureError::WeightSum { .. })
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let atoms = vec![0.1, 1.0 / 3.0, -2.5e-300, 7.0, 1e17 + 3.0, -0.2];
        let m = DiscreteMeasure::new(3, atoms, vec![0.3, 0.7]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.save(&path).unwrap();
        let back = DiscreteMeasure::load(&path, Some(3)).unwrap();
        assert_eq!(back, m);
    }
}
