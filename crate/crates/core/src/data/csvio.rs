use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CycleRecord, DataTable, FeatureId, Source};
use crate::error::{Error, Result};

/// Column mapping from an arbitrary per-cycle CSV onto the unified table.
///
/// `source` names either a column holding source tags or, when no such
/// column exists, a literal source tag applied to every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    pub target: String,
    pub features: Vec<String>,
    pub source: String,
    pub cell_id: String,
    pub cycle: String,
}

impl Mapping {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Mapping for files produced by [`write_table_csv`]:
    /// `source,cell_id,cycle,<features...>,target`.
    pub fn for_table_header(header: &[&str]) -> Result<Self> {
        let n = header.len();
        if n < 6 || header[..3] != ["source", "cell_id", "cycle"] || header[n - 1] != "target" {
            return Err(Error::Parse(
                "header is not `source,cell_id,cycle,<features...>,target`".into(),
            ));
        }
        Ok(Mapping {
            target: "target".into(),
            features: header[3..n - 1].iter().map(|s| s.to_string()).collect(),
            source: "source".into(),
            cell_id: "cell_id".into(),
            cycle: "cycle".into(),
        })
    }
}

/// A loaded table plus the number of rows discarded by the drop rule.
#[derive(Debug, Clone)]
pub struct LoadReport {
    pub table: DataTable,
    pub dropped: usize,
}

enum SourceField {
    Column(usize),
    Literal(Source),
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Loads a per-cycle CSV through `mapping`.
///
/// Rows with a missing, unparseable, non-finite or negative-capacity mapped
/// cell are dropped and counted.
pub fn load_csv(path: &Path, mapping: &Mapping) -> Result<LoadReport> {
    if mapping.features.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "mapping needs at least 2 feature columns, got {}",
            mapping.features.len()
        )));
    }
    let mut reader = open_reader(path)?;
    let header = reader.headers()?.clone();
    let lookup: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| {
        lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let target_col = col(&mapping.target)?;
    let feature_cols = mapping
        .features
        .iter()
        .map(|f| col(f))
        .collect::<Result<Vec<_>>>()?;
    let cell_col = col(&mapping.cell_id)?;
    let cycle_col = col(&mapping.cycle)?;
    let source = match lookup.get(mapping.source.as_str()) {
        Some(&i) => SourceField::Column(i),
        None => match mapping.source.parse::<Source>() {
            Ok(s) => SourceField::Literal(s),
            Err(_) => return Err(Error::MissingColumn(mapping.source.clone())),
        },
    };

    let mut rows = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let parsed = (|| -> Option<CycleRecord> {
            let num = |i: usize| -> Option<f64> {
                record.get(i)?.parse::<f64>().ok().filter(|v| v.is_finite())
            };
            let source = match source {
                SourceField::Column(i) => record.get(i)?.parse().ok()?,
                SourceField::Literal(s) => s,
            };
            let cell_id = record.get(cell_col).filter(|s| !s.is_empty())?.to_owned();
            let cycle = record.get(cycle_col)?.parse::<u64>().ok()?;
            let target = num(target_col).filter(|&t| t >= 0.0)?;
            let features = feature_cols.iter().map(|&i| num(i)).collect::<Option<Vec<_>>>()?;
            Some(CycleRecord {
                source,
                cell_id,
                cycle,
                features,
                target,
            })
        })();
        match parsed {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let schema = mapping.features.iter().map(|f| FeatureId::new(f.as_str())).collect();
    Ok(LoadReport {
        table: DataTable::new(schema, rows)?,
        dropped,
    })
}

/// Reads a table previously written by [`write_table_csv`].
pub fn read_table_csv(path: &Path) -> Result<LoadReport> {
    let mut reader = open_reader(path)?;
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let mapping = Mapping::for_table_header(&names)?;
    load_csv(path, &mapping)
}

/// Writes `source,cell_id,cycle,<schema...>,target` with shortest round-trip
/// float formatting.
pub fn write_table_csv(table: &DataTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("source,cell_id,cycle");
    for f in table.schema() {
        out.push(',');
        out.push_str(f.as_str());
    }
    out.push_str(",target\n");
    for r in table.rows() {
        out.push_str(&format!("{},{},{}", r.source, r.cell_id, r.cycle));
        for v in &r.features {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", r.target));
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> Mapping {
        Mapping {
            target: "cap".into(),
            features: vec!["Qdlin".into(), "Temp_m".into()],
            source: "NASA".into(),
            cell_id: "cell".into(),
            cycle: "cyc".into(),
        }
    }

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("in.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_mapped_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "cell,cyc,Qdlin,Temp_m,cap,extra\nA,1,0.1,25,1.9,x\nA,2,0.2,26,1.8,y\nB,1,0.3,27,1.7,z\n",
        );
        let rep = load_csv(&p, &mapping()).unwrap();
        assert_eq!(rep.table.len(), 3);
        assert_eq!(rep.table.n_features(), 2);
        assert_eq!(rep.dropped, 0);
        assert_eq!(rep.table.rows()[2].source, Source::Nasa);
    }

    #[test]
    fn nan_cells_are_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "cell,cyc,Qdlin,Temp_m,cap\nA,1,0.1,25,1.9\nA,2,NaN,26,1.8\nB,1,0.3,27,1.7\n",
        );
        let rep = load_csv(&p, &mapping()).unwrap();
        assert_eq!(rep.table.len(), 2);
        assert_eq!(rep.dropped, 1);
    }

    #[test]
    fn absent_mapped_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "cell,cyc,Qdlin,Temp_m,cap\nA,1,0.1,25,1.9\n");
        let mut m = mapping();
        m.features[0] = "Qd_lin".into();
        assert!(matches!(load_csv(&p, &m), Err(Error::MissingColumn(c)) if c == "Qd_lin"));
    }

    #[test]
    fn all_rows_invalid_is_empty_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "cell,cyc,Qdlin,Temp_m,cap\nA,1,x,25,1.9\n");
        assert!(matches!(load_csv(&p, &mapping()), Err(Error::EmptyTable)));
    }

    #[test]
    fn duplicate_key_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "cell,cyc,Qdlin,Temp_m,cap\nA,1,0.1,25,1.9\nA,1,0.2,25,1.8\n");
        assert!(matches!(load_csv(&p, &mapping()), Err(Error::DuplicateKey { .. })));
    }

    #[test]
    fn source_column_is_parsed_per_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "src,cell,cyc,Qdlin,Temp_m,cap\nCALCE,A,1,0.1,25,1.9\nNCA,A,1,0.1,25,1.9\nbogus,A,2,0.1,25,1.9\n",
        );
        let mut m = mapping();
        m.source = "src".into();
        let rep = load_csv(&p, &m).unwrap();
        assert_eq!(rep.table.len(), 2);
        assert_eq!(rep.dropped, 1);
        assert_eq!(rep.table.rows()[1].source, Source::Nca);
    }

    #[test]
    fn written_tables_read_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let t = DataTable::from_matrix(
            &["a", "b"],
            &[vec![0.1, 1.0 / 3.0], vec![2.5e-7, -4.0]],
            &[1.7, std::f64::consts::PI],
        )
        .unwrap();
        let p = dir.path().join("t.csv");
        write_table_csv(&t, &p).unwrap();
        let back = read_table_csv(&p).unwrap();
        assert_eq!(back.table, t);
    }
}
