use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::bt500::kept_set;
use super::{ScreeningReport, SubjectiveError, ZScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosCell {
    pub mos: Option<f64>,
    pub n_raters_used: usize,
}

/// Per-case, per-dimension mean opinion scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MosTable {
    dims: Vec<String>,
    rows: BTreeMap<String, Vec<MosCell>>,
    /// Screening outcome that produced this table, when known.
    pub screening: Option<ScreeningReport>,
    /// Total raters in the source matrix (kept or not).
    pub total_raters: usize,
}

/// `y = scale · x + offset`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap { scale: 1.0, offset: 0.0 };

    pub fn apply(&self, x: f64) -> f64 {
        if *self == Self::IDENTITY {
            x
        } else {
            self.scale * x + self.offset
        }
    }
}

/// One `case_id,dim,mos,n_raters_used` export row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosRow {
    pub case_id: String,
    pub dim: String,
    pub mos: f64,
    pub n_raters_used: usize,
}

impl MosTable {
    pub fn new(dims: Vec<String>) -> Self {
        MosTable { dims, rows: BTreeMap::new(), screening: None, total_raters: 0 }
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    pub fn case_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn dim_index(&self, dim: &str) -> Result<usize, SubjectiveError> {
        self.dims.iter().position(|d| d == dim).ok_or_else(|| SubjectiveError::UnknownDim(dim.to_string()))
    }

    pub fn cell(&self, case_id: &str, dim: &str) -> Option<MosCell> {
        let d = self.dims.iter().position(|x| x == dim)?;
        self.rows.get(case_id).map(|cells| cells[d])
    }

    pub fn get(&self, case_id: &str, dim: &str) -> Option<f64> {
        self.cell(case_id, dim).and_then(|c| c.mos)
    }

    pub fn set(&mut self, case_id: &str, dim: &str, cell: MosCell) -> Result<(), SubjectiveError> {
        let d = self.dim_index(dim)?;
        let n = self.dims.len();
        self.rows.entry(case_id.to_string()).or_insert_with(|| vec![MosCell { mos: None, n_raters_used: 0 }; n])[d] =
            cell;
        Ok(())
    }

    /// Defined MOS values of one dimension keyed by case id.
    pub fn column(&self, dim: &str) -> Result<BTreeMap<String, f64>, SubjectiveError> {
        let d = self.dim_index(dim)?;
        Ok(self.rows.iter().filter_map(|(k, cells)| cells[d].mos.map(|m| (k.clone(), m))).collect())
    }

    /// (case_id, dim) cells with no kept rater.
    pub fn undefined(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (case, cells) in &self.rows {
            for (d, cell) in cells.iter().enumerate() {
                if cell.mos.is_none() {
                    out.push((case.clone(), self.dims[d].clone()));
                }
            }
        }
        out
    }

    /// Affine map sending the dimension's min to `lo` and max to `hi`.
    pub fn rescale_map(&self, dim: &str, lo: f64, hi: f64) -> Result<AffineMap, SubjectiveError> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(SubjectiveError::InvalidRange { lo, hi });
        }
        let col = self.column(dim)?;
        let min = col.values().copied().fold(f64::INFINITY, f64::min);
        let max = col.values().copied().fold(f64::NEG_INFINITY, f64::max);
        if col.is_empty() || max <= min {
            return Err(SubjectiveError::ConstantColumn(dim.to_string()));
        }
        if min == lo && max == hi {
            return Ok(AffineMap::IDENTITY);
        }
        let scale = (hi - lo) / (max - min);
        Ok(AffineMap { scale, offset: lo - min * scale })
    }

    pub fn to_rows(&self) -> Vec<MosRow> {
        let mut out = Vec::new();
        for (case, cells) in &self.rows {
            for (d, cell) in cells.iter().enumerate() {
                if let Some(mos) = cell.mos {
                    out.push(MosRow {
                        case_id: case.clone(),
                        dim: self.dims[d].clone(),
                        mos,
                        n_raters_used: cell.n_raters_used,
                    });
                }
            }
        }
        out
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), SubjectiveError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let rows = self.to_rows();
        if rows.is_empty() {
            w.write_record(["case_id", "dim", "mos", "n_raters_used"])?;
        }
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a table from export rows. Dims keep first-appearance order.
    pub fn from_rows(rows: &[MosRow]) -> Result<MosTable, SubjectiveError> {
        let mut dims: Vec<String> = Vec::new();
        for r in rows {
            if !dims.contains(&r.dim) {
                dims.push(r.dim.clone());
            }
        }
        let mut t = MosTable::new(dims);
        for (i, r) in rows.iter().enumerate() {
            if !r.mos.is_finite() {
                return Err(SubjectiveError::Parse { line: i as u64 + 2, message: "non-finite mos".into() });
            }
            if t.get(&r.case_id, &r.dim).is_some() {
                return Err(SubjectiveError::Parse {
                    line: i as u64 + 2,
                    message: format!("duplicate row for {} / {}", r.case_id, r.dim),
                });
            }
            t.set(&r.case_id, &r.dim, MosCell { mos: Some(r.mos), n_raters_used: r.n_raters_used })?;
            t.total_raters = t.total_raters.max(r.n_raters_used);
        }
        Ok(t)
    }
}

pub fn parse_mos_rows(reader: impl Read) -> Result<Vec<MosRow>, SubjectiveError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["case_id", "dim", "mos", "n_raters_used"] {
        return Err(SubjectiveError::Parse { line: 1, message: "expected header case_id,dim,mos,n_raters_used".into() });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_mos_table(path: impl AsRef<std::path::Path>) -> Result<MosTable, SubjectiveError> {
    MosTable::from_rows(&parse_mos_rows(std::fs::File::open(path)?)?)
}

/// Averages kept raters' z-scores per case and dimension.
///
/// Cells no kept rater scored stay undefined (see [`MosTable::undefined`]).
pub fn aggregate_mos(zm: &ZScoreMatrix, kept: &[String]) -> Result<MosTable, SubjectiveError> {
    let kept = kept_set(zm, kept)?;
    let kept_idx: Vec<usize> =
        (0..zm.raters().len()).filter(|&r| kept.contains(zm.raters()[r].as_str())).collect();
    let mut table = MosTable::new(zm.dims().to_vec());
    table.total_raters = zm.raters().len();
    for (c, case) in zm.cases().iter().enumerate() {
        let mut cells = Vec::with_capacity(zm.dims().len());
        for d in 0..zm.dims().len() {
            let vals: Vec<f64> = kept_idx.iter().filter_map(|&r| zm.get(r, c, d)).collect();
            let mos = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            cells.push(MosCell { mos, n_raters_used: vals.len() });
        }
        table.rows.insert(case.clone(), cells);
    }
    for (case, dim) in table.undefined() {
        log::warn!("MOS undefined for case {case} on {dim}: no kept rater scored it");
    }
    Ok(table)
}

/// Affinely maps every dimension so its min goes to `lo` and max to `hi`.
pub fn rescale_mos(mt: &MosTable, lo: f64, hi: f64) -> Result<MosTable, SubjectiveError> {
    let maps: Vec<AffineMap> = mt.dims.iter().map(|d| mt.rescale_map(d, lo, hi)).collect::<Result<_, _>>()?;
    let mut out = mt.clone();
    for cells in out.rows.values_mut() {
        for (cell, map) in cells.iter_mut().zip(&maps) {
            cell.mos = cell.mos.map(|v| map.apply(v));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zm_one_case(vals: &[f64]) -> ZScoreMatrix {
        let raters = (0..vals.len()).map(|i| format!("r{i}")).collect();
        ZScoreMatrix::from_values(raters, vec!["c".into()], vec!["overall_quality".into()], vals.iter().map(|v| Some(*v)).collect())
    }

    fn column_table(vals: &[f64]) -> MosTable {
        let mut t = MosTable::new(vec!["overall_quality".into()]);
        for (i, v) in vals.iter().enumerate() {
            t.set(&format!("c{i}"), "overall_quality", MosCell { mos: Some(*v), n_raters_used: 1 }).unwrap();
        }
        t
    }

    #[test]
    fn mean_of_three() {
        let t = aggregate_mos(&zm_one_case(&[-1.0, 0.0, 1.0]), &["r0".into(), "r1".into(), "r2".into()]).unwrap();
        assert_eq!(t.get("c", "overall_quality"), Some(0.0));
        assert_eq!(t.cell("c", "overall_quality").unwrap().n_raters_used, 3);
    }

    #[test]
    fn single_and_duplicate_raters() {
        let zm = ZScoreMatrix::from_values(
            vec!["a".into(), "b".into()],
            vec!["c1".into(), "c2".into()],
            vec!["overall_quality".into()],
            vec![Some(0.5), Some(-0.5), Some(0.5), Some(-0.5)],
        );
        let one = aggregate_mos(&zm, &["a".into()]).unwrap();
        assert_eq!(one.get("c1", "overall_quality"), Some(0.5));
        let both = aggregate_mos(&zm, &["b".into(), "a".into()]).unwrap();
        assert_eq!(both.get("c2", "overall_quality"), Some(-0.5));
    }

    #[test]
    fn undefined_cells_listed() {
        let zm = ZScoreMatrix::from_values(
            vec!["a".into(), "b".into()],
            vec!["c1".into(), "c2".into()],
            vec!["overall_quality".into()],
            vec![Some(1.0), None, Some(2.0), Some(3.0)],
        );
        let t = aggregate_mos(&zm, &["a".into()]).unwrap();
        assert_eq!(t.undefined(), vec![("c2".to_string(), "overall_quality".to_string())]);
        assert!(aggregate_mos(&zm, &[]).is_err());
        assert!(aggregate_mos(&zm, &["zz".into()]).is_err());
    }

    #[test]
    fn rescale_examples() {
        let t = rescale_mos(&column_table(&[-1.0, 0.0, 1.0]), 0.0, 10.0).unwrap();
        assert_eq!(t.column("overall_quality").unwrap().values().copied().collect::<Vec<_>>(), [0.0, 5.0, 10.0]);
        let spanning = column_table(&[0.0, 3.3, 10.0]);
        assert_eq!(rescale_mos(&spanning, 0.0, 10.0).unwrap(), spanning);
        assert!(matches!(rescale_mos(&column_table(&[2.0, 2.0]), 0.0, 10.0), Err(SubjectiveError::ConstantColumn(_))));
        assert!(matches!(rescale_mos(&column_table(&[1.0, 2.0]), 1.0, 1.0), Err(SubjectiveError::InvalidRange { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let t = column_table(&[-0.25, 1.5]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("case_id,dim,mos,n_raters_used\n"));
        let back = MosTable::from_rows(&parse_mos_rows(&buf[..]).unwrap()).unwrap();
        assert_eq!(back.to_rows(), t.to_rows());
    }

    #[test]
    fn permutation_invariant_over_kept() {
        let vals = [0.1, -0.7, 0.33, 1.9];
        let zm = zm_one_case(&vals);
        let a = aggregate_mos(&zm, &["r0".into(), "r1".into(), "r3".into()]).unwrap();
        let b = aggregate_mos(&zm, &["r3".into(), "r0".into(), "r1".into()]).unwrap();
        assert_eq!(a, b);
    }
}
