use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SubjectiveError;

pub const DIM_TEXT_IMAGE: &str = "text_image_consistency";
pub const DIM_SOURCE_TARGET: &str = "source_target_fidelity";
pub const DIM_OVERALL: &str = "overall_quality";
pub const DEFAULT_DIMS: [&str; 3] = [DIM_TEXT_IMAGE, DIM_SOURCE_TARGET, DIM_OVERALL];

pub const SCORE_MIN: u8 = 1;
pub const SCORE_MAX: u8 = 10;

/// One rating row as exchanged between the rating service and the MOS pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub rater_id: String,
    pub case_id: String,
    pub dim: String,
    pub score: i64,
    /// Submission time, milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Dense raters × cases × dims table of raw integer scores with a presence mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMatrix {
    raters: Vec<String>,
    cases: Vec<String>,
    dims: Vec<String>,
    scores: Vec<u8>,
    present: Vec<bool>,
}

fn check_unique(axis: &'static str, ids: &[String]) -> Result<(), SubjectiveError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(SubjectiveError::DuplicateId { axis, id: id.clone() });
        }
    }
    Ok(())
}

/// Known dims first in their default order, then any others sorted.
fn order_dims(dims: BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> =
        DEFAULT_DIMS.iter().filter(|d| dims.contains(**d)).map(|d| d.to_string()).collect();
    out.extend(dims.into_iter().filter(|d| !DEFAULT_DIMS.contains(&d.as_str())));
    out
}

impl ScoreMatrix {
    /// Creates an all-missing matrix over the given axes.
    pub fn new(raters: Vec<String>, cases: Vec<String>, dims: Vec<String>) -> Result<Self, SubjectiveError> {
        check_unique("rater", &raters)?;
        check_unique("case", &cases)?;
        check_unique("dim", &dims)?;
        let n = raters.len() * cases.len() * dims.len();
        Ok(ScoreMatrix { raters, cases, dims, scores: vec![0; n], present: vec![false; n] })
    }

    /// Builds a matrix from rows. Axes come out sorted (dims: defaults first).
    pub fn from_rows(rows: &[ScoreRow]) -> Result<Self, SubjectiveError> {
        let raters: BTreeSet<String> = rows.iter().map(|r| r.rater_id.clone()).collect();
        let cases: BTreeSet<String> = rows.iter().map(|r| r.case_id.clone()).collect();
        let dims: BTreeSet<String> = rows.iter().map(|r| r.dim.clone()).collect();
        let mut m = ScoreMatrix::new(raters.into_iter().collect(), cases.into_iter().collect(), order_dims(dims))?;
        let ri: HashMap<String, usize> = m.raters.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        let ci: HashMap<String, usize> = m.cases.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        let di: HashMap<String, usize> = m.dims.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        for row in rows {
            let (r, c, d) = (ri[&row.rater_id], ci[&row.case_id], di[&row.dim]);
            if m.get(r, c, d).is_some() {
                return Err(SubjectiveError::DuplicateEntry {
                    rater_id: row.rater_id.clone(),
                    case_id: row.case_id.clone(),
                    dim: row.dim.clone(),
                });
            }
            m.set(r, c, d, row.score)?;
        }
        Ok(m)
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn dims(&self) -> &[String] {
        &self.dims
    }

    #[inline]
    pub(crate) fn index(&self, rater: usize, case: usize, dim: usize) -> usize {
        (rater * self.cases.len() + case) * self.dims.len() + dim
    }

    pub fn get(&self, rater: usize, case: usize, dim: usize) -> Option<u8> {
        let i = self.index(rater, case, dim);
        self.present[i].then_some(self.scores[i])
    }

    /// Stores a score; values outside `[1, 10]` are rejected.
    pub fn set(&mut self, rater: usize, case: usize, dim: usize, score: i64) -> Result<(), SubjectiveError> {
        if !(SCORE_MIN as i64..=SCORE_MAX as i64).contains(&score) {
            return Err(SubjectiveError::ScoreOutOfRange {
                rater_id: self.raters[rater].clone(),
                case_id: self.cases[case].clone(),
                dim: self.dims[dim].clone(),
                score,
            });
        }
        let i = self.index(rater, case, dim);
        self.scores[i] = score as u8;
        self.present[i] = true;
        Ok(())
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    /// Rows in (rater, case, dim) axis order; `timestamp` is zero.
    pub fn to_rows(&self) -> Vec<ScoreRow> {
        let mut out = Vec::with_capacity(self.present_count());
        for (r, rater) in self.raters.iter().enumerate() {
            for (c, case) in self.cases.iter().enumerate() {
                for (d, dim) in self.dims.iter().enumerate() {
                    if let Some(s) = self.get(r, c, d) {
                        out.push(ScoreRow {
                            rater_id: rater.clone(),
                            case_id: case.clone(),
                            dim: dim.clone(),
                            score: s as i64,
                            timestamp: 0,
                        });
                    }
                }
            }
        }
        out
    }

    /// Keeps only the listed dimensions, in the given order.
    pub fn select_dims(&self, dims: &[&str]) -> Result<ScoreMatrix, SubjectiveError> {
        let idx: Vec<usize> = dims
            .iter()
            .map(|d| {
                self.dims.iter().position(|x| x == d).ok_or_else(|| SubjectiveError::UnknownDim(d.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut out = ScoreMatrix::new(
            self.raters.clone(),
            self.cases.clone(),
            dims.iter().map(|d| d.to_string()).collect(),
        )?;
        for r in 0..self.raters.len() {
            for c in 0..self.cases.len() {
                for (nd, &od) in idx.iter().enumerate() {
                    if let Some(s) = self.get(r, c, od) {
                        out.set(r, c, nd, s as i64)?;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Parses the `rater_id,case_id,dim,score,timestamp` CSV table.
pub fn parse_score_rows(reader: impl Read) -> Result<Vec<ScoreRow>, SubjectiveError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["rater_id", "case_id", "dim", "score", "timestamp"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(SubjectiveError::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn read_score_rows(path: impl AsRef<std::path::Path>) -> Result<Vec<ScoreRow>, SubjectiveError> {
    parse_score_rows(std::fs::File::open(path)?)
}

pub fn write_score_rows(rows: &[ScoreRow], writer: impl Write) -> Result<(), SubjectiveError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    if rows.is_empty() {
        w.write_record(["rater_id", "case_id", "dim", "score", "timestamp"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(r: &str, c: &str, d: &str, s: i64) -> ScoreRow {
        ScoreRow { rater_id: r.into(), case_id: c.into(), dim: d.into(), score: s, timestamp: 1 }
    }

    #[test]
    fn rows_build_sorted_axes() {
        let rows = vec![
            row("r2", "c1", DIM_OVERALL, 5),
            row("r1", "c2", DIM_TEXT_IMAGE, 7),
            row("r1", "c1", "aesthetics", 3),
        ];
        let m = ScoreMatrix::from_rows(&rows).unwrap();
        assert_eq!(m.raters(), ["r1", "r2"]);
        assert_eq!(m.cases(), ["c1", "c2"]);
        assert_eq!(m.dims(), [DIM_TEXT_IMAGE, DIM_OVERALL, "aesthetics"]);
        assert_eq!(m.get(1, 0, 1), Some(5));
        assert_eq!(m.get(0, 0, 1), None);
        assert_eq!(m.present_count(), 3);
    }

    #[test]
    fn out_of_range_and_duplicates_rejected() {
        assert!(matches!(
            ScoreMatrix::from_rows(&[row("r", "c", DIM_OVERALL, 11)]),
            Err(SubjectiveError::ScoreOutOfRange { score: 11, .. })
        ));
        assert!(ScoreMatrix::from_rows(&[row("r", "c", DIM_OVERALL, 0)]).is_err());
        assert!(matches!(
            ScoreMatrix::from_rows(&[row("r", "c", DIM_OVERALL, 3), row("r", "c", DIM_OVERALL, 4)]),
            Err(SubjectiveError::DuplicateEntry { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(vec!["a".into(), "a".into()], vec![], vec![]),
            Err(SubjectiveError::DuplicateId { axis: "rater", .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("r1", "c1", DIM_OVERALL, 4), row("r1", "c,2", DIM_TEXT_IMAGE, 9)];
        let mut buf = Vec::new();
        write_score_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rater_id,case_id,dim,score,timestamp\n"));
        assert_eq!(parse_score_rows(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_wrong_header_and_bad_score() {
        assert!(parse_score_rows("a,b,c\n1,2,3\n".as_bytes()).is_err());
        let bad = "rater_id,case_id,dim,score,timestamp\nr,c,d,x,0\n";
        assert!(matches!(parse_score_rows(bad.as_bytes()), Err(SubjectiveError::Parse { .. })));
    }

    #[test]
    fn select_dims_keeps_scores() {
        let rows = vec![row("r1", "c1", DIM_OVERALL, 4), row("r1", "c1", DIM_TEXT_IMAGE, 9)];
        let m = ScoreMatrix::from_rows(&rows).unwrap();
        let only = m.select_dims(&[DIM_OVERALL]).unwrap();
        assert_eq!(only.dims(), [DIM_OVERALL]);
        assert_eq!(only.get(0, 0, 0), Some(4));
        assert!(m.select_dims(&["nope"]).is_err());
    }
}
