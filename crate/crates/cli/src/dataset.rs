//! CSV input: `arm,time,responders,n`, optionally with a leading `study_id` column.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use funcmetric::TrialSeries;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const REQUIRED: [&str; 4] = ["arm", "time", "responders", "n"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub study_id: Option<String>,
    pub arm: String,
    pub time: f64,
    pub responders: u32,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDataset {
    pub rows: Vec<DataRow>,
    pub source: PathBuf,
    pub warnings: Vec<String>,
}

fn schema(path: &Path, line: u64, column: Option<&str>, message: impl Into<String>) -> CliError {
    CliError::Schema {
        path: path.to_path_buf(),
        line,
        column: column.map(str::to_string),
        message: message.into(),
    }
}

/// Reads and validates a dataset file.
pub fn parse_dataset(path: &Path) -> Result<InputDataset, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset_str(&text, path)
}

/// Parses dataset text; `source` is only used in diagnostics.
pub fn parse_dataset_str(text: &str, source: &Path) -> Result<InputDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| schema(source, 1, None, e.to_string()))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    for name in REQUIRED {
        if !index.contains_key(name) {
            return Err(schema(source, 1, Some(name), "missing required column"));
        }
    }
    if let Some(unknown) = headers
        .iter()
        .find(|h| !REQUIRED.contains(h) && *h != "study_id")
    {
        return Err(schema(source, 1, Some(unknown), "unknown column"));
    }
    let study_col = index.get("study_id").copied();

    let mut rows = Vec::new();
    let mut seen: HashMap<(Option<String>, String), (u32, Vec<f64>)> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            schema(source, line, None, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| record.get(index[name]).unwrap_or("");
        let arm = field("arm").to_string();
        if arm.is_empty() {
            return Err(schema(source, line, Some("arm"), "empty arm label"));
        }
        let time: f64 = field("time")
            .parse()
            .map_err(|_| schema(source, line, Some("time"), format!("`{}` is not a number", field("time"))))?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(schema(source, line, Some("time"), "time must be finite and non-negative"));
        }
        let parse_count = |name: &str| -> Result<u32, CliError> {
            field(name).parse().map_err(|_| {
                schema(source, line, Some(name), format!("`{}` is not a non-negative integer", field(name)))
            })
        };
        let responders = parse_count("responders")?;
        let n = parse_count("n")?;
        if n == 0 {
            return Err(schema(source, line, Some("n"), "arm size must be positive"));
        }
        if responders > n {
            return Err(schema(
                source,
                line,
                Some("responders"),
                format!("responders ({responders}) exceed arm size ({n})"),
            ));
        }
        let study_id = match study_col {
            Some(c) => {
                let s = record.get(c).unwrap_or("").to_string();
                if s.is_empty() {
                    return Err(schema(source, line, Some("study_id"), "empty study_id"));
                }
                Some(s)
            }
            None => None,
        };

        let entry = seen
            .entry((study_id.clone(), arm.clone()))
            .or_insert_with(|| (n, Vec::new()));
        if entry.0 != n {
            return Err(schema(
                source,
                line,
                Some("n"),
                format!("arm `{arm}` changes size from {} to {n}; a fixed arm size is required", entry.0),
            ));
        }
        if entry.1.contains(&time) {
            return Err(schema(
                source,
                line,
                Some("time"),
                format!("duplicate time point {time} for arm `{arm}`"),
            ));
        }
        entry.1.push(time);
        rows.push(DataRow {
            study_id,
            arm,
            time,
            responders,
            n,
        });
    }
    if rows.is_empty() {
        return Err(schema(source, 1, None, "no data rows"));
    }

    let mut warnings = Vec::new();
    for ((study, arm), (_, times)) in &seen {
        if times.len() < 3 {
            let label = match study {
                Some(s) => format!("study `{s}`, arm `{arm}`"),
                None => format!("arm `{arm}`"),
            };
            warnings.push(format!("{label} has only {} time points", times.len()));
        }
    }
    warnings.sort();
    Ok(InputDataset {
        rows,
        source: source.to_path_buf(),
        warnings,
    })
}

impl InputDataset {
    pub fn has_studies(&self) -> bool {
        self.rows.iter().any(|r| r.study_id.is_some())
    }

    /// Arm labels in order of first appearance.
    pub fn arms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.arm) {
                out.push(r.arm.clone());
            }
        }
        out
    }

    /// Time-sorted series for one arm (pooled over a study column only if there is a single study).
    pub fn series(&self, arm: &str) -> Result<TrialSeries, CliError> {
        let rows: Vec<&DataRow> = self.rows.iter().filter(|r| r.arm == arm).collect();
        if rows.is_empty() {
            return Err(CliError::Usage(format!(
                "arm `{arm}` not found; available arms: {}",
                self.arms().join(", ")
            )));
        }
        let studies: Vec<&Option<String>> = {
            let mut s: Vec<&Option<String>> = rows.iter().map(|r| &r.study_id).collect();
            s.dedup();
            s
        };
        if studies.len() > 1 {
            return Err(CliError::Usage(format!(
                "arm `{arm}` appears in several studies; use the random-effects command"
            )));
        }
        build_series(arm, &rows)
    }

    /// One series per study for `arm` (or for all rows when `arm` is None).
    pub fn studies(&self, arm: Option<&str>) -> Result<Vec<TrialSeries>, CliError> {
        if !self.has_studies() {
            return Err(CliError::Usage(
                "random-effects input needs a leading study_id column".into(),
            ));
        }
        let mut groups: BTreeMap<(String, String), Vec<&DataRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| arm.is_none_or(|a| r.arm == a)) {
            let study = r.study_id.clone().unwrap_or_default();
            groups.entry((study, r.arm.clone())).or_default().push(r);
        }
        if arm.is_none() {
            let arms: std::collections::BTreeSet<&String> = groups.keys().map(|k| &k.1).collect();
            if arms.len() > 1 {
                return Err(CliError::Usage(
                    "dataset has several arms; choose one with --arm".into(),
                ));
            }
        }
        groups
            .iter()
            .map(|((study, arm), rows)| build_series(&format!("{study}/{arm}"), rows))
            .collect()
    }

    /// Canonical CSV rendering; parsing it reproduces the same rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let with_study = self.has_studies();
        if with_study {
            w.write_record(["study_id", "arm", "time", "responders", "n"])
        } else {
            w.write_record(REQUIRED)
        }
        .expect("writing to memory");
        for r in &self.rows {
            let mut rec = Vec::with_capacity(5);
            if with_study {
                rec.push(r.study_id.clone().unwrap_or_default());
            }
            rec.extend([
                r.arm.clone(),
                format!("{}", r.time),
                r.responders.to_string(),
                r.n.to_string(),
            ]);
            w.write_record(&rec).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
    }
}

fn build_series(label: &str, rows: &[&DataRow]) -> Result<TrialSeries, CliError> {
    let mut sorted: Vec<&&DataRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let times: Vec<f64> = sorted.iter().map(|r| r.time).collect();
    let counts: Vec<u32> = sorted.iter().map(|r| r.responders).collect();
    Ok(TrialSeries::from_counts(label, sorted[0].n, &times, &counts)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<InputDataset, CliError> {
        parse_dataset_str(text, Path::new("test.csv"))
    }

    #[test]
    fn valid_file() {
        let d = parse("arm,time,responders,n\nA,2,10,100\nA,0,0,100\nA,4,20,100\nB,2,5,50\nB,4,9,50\nB,8,12,50\n").unwrap();
        assert_eq!(d.arms(), vec!["A", "B"]);
        let s = d.series("A").unwrap();
        assert_eq!(s.times(), vec![0.0, 2.0, 4.0]);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn responders_above_n() {
        let err = parse("arm,time,responders,n\nA,2,10,100\nA,4,120,100\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("responders"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_time() {
        let err = parse("arm,time,responders,n\nA,2,10,100\nA,2,12,100\n").unwrap_err();
        assert!(err.to_string().contains("duplicate time"), "{err}");
    }

    #[test]
    fn varying_arm_size() {
        let err = parse("arm,time,responders,n\nA,2,10,100\nA,4,12,90\n").unwrap_err();
        assert!(err.to_string().contains("fixed arm size"), "{err}");
    }

    #[test]
    fn bad_values_and_headers() {
        assert!(parse("arm,time,responders\nA,1,2\n").is_err());
        assert!(parse("arm,time,responders,n,extra\nA,1,2,3,4\n").is_err());
        assert!(parse("arm,time,responders,n\nA,-1,2,3\n").is_err());
        assert!(parse("arm,time,responders,n\nA,x,2,3\n").is_err());
        assert!(parse("arm,time,responders,n\nA,1,2.5,3\n").is_err());
        assert!(parse("arm,time,responders,n\n").is_err());
    }

    #[test]
    fn short_arm_warns() {
        let d = parse("arm,time,responders,n\nA,2,10,100\nA,4,12,100\n").unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn studies_group_by_id() {
        let d = parse(
            "study_id,arm,time,responders,n\ns1,MTX,2,10,100\ns1,MTX,4,15,100\ns1,MTX,8,20,100\ns2,MTX,2,30,200\ns2,MTX,4,41,200\ns2,MTX,8,50,200\n",
        )
        .unwrap();
        let studies = d.studies(Some("MTX")).unwrap();
        assert_eq!(studies.len(), 2);
        assert_eq!(studies[1].n(), 200);
        assert!(d.series("MTX").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let d = parse("arm,time,responders,n\nB,2.5,5,50\nA,0,0,100\nA,4,20,100\n").unwrap();
        let again = parse(&d.to_csv()).unwrap();
        assert_eq!(d.rows, again.rows);
    }
}
