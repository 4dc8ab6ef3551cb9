//! File formats: design and dataset CSV, ensemble and PSO-config JSON.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled;
use crate::criteria::{CriteriaError, Scenario, ScenarioEnsemble};
use crate::estimation::{DataError, Dataset};
use crate::information::Design;
use crate::model::{Day, Factor, ModelError, ModelSpec, ParamPoint, Run};

pub const DESIGN_HEADER: [&str; 6] = ["run", "L", "K", "D", "FDV", "day"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header: expected columns {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("row {row}, field `{field}`: {message}")]
    Field {
        row: usize,
        field: String,
        message: String,
    },
    #[error("row {row}: {source}")]
    Run { row: usize, source: ModelError },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("unknown bundled model `{0}`")]
    UnknownModel(String),
    #[error("scenario {index}: {message}")]
    Scenario { index: usize, message: String },
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
}

fn parse_field(row: usize, field: &str, raw: &str) -> Result<f64, IoError> {
    raw.trim().parse::<f64>().map_err(|e| IoError::Field {
        row,
        field: field.to_string(),
        message: format!("cannot parse `{raw}` as a number ({e})"),
    })
}

fn parse_day(row: usize, raw: &str) -> Result<Day, IoError> {
    let flag: i64 = raw.trim().parse().map_err(|_| IoError::Field {
        row,
        field: "day".into(),
        message: format!("expected 0 or 1, got `{raw}`"),
    })?;
    Day::from_flag(flag).map_err(|source| IoError::Run { row, source })
}

fn check_prefix(headers: &csv::StringRecord, expected: &[&str]) -> Result<(), IoError> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found.len() < expected.len() || found[..expected.len()] != *expected {
        return Err(IoError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn read_run(record: &csv::StringRecord, row: usize, day: Day) -> Result<Run, IoError> {
    let mut coords = [0.0; Factor::COUNT];
    for (j, f) in Factor::ALL.iter().enumerate() {
        coords[j] = parse_field(row, f.name(), &record[j + 1])?;
    }
    Run::new(coords, day).map_err(|source| IoError::Run { row, source })
}

/// Reads a design with header `run,L,K,D,FDV,day`.
pub fn read_design<R: Read>(input: R, label: &str) -> Result<Design, IoError> {
    let mut rdr = reader(input);
    check_prefix(rdr.headers()?, &DESIGN_HEADER)?;
    let mut runs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let day = parse_day(row, &rec[5])?;
        runs.push(read_run(&rec, row, day)?);
    }
    Ok(Design::new(label, runs))
}

pub fn write_design<W: Write>(design: &Design, output: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(DESIGN_HEADER)?;
    for (i, run) in design.runs.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(run.coords.iter().map(|c| c.to_string()));
        rec.push(run.day.flag().to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a dataset with header `run,L,K,D,FDV[,day],<responses...>`. A
/// missing `day` column means every run is on the initial day.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, IoError> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    check_prefix(&headers, &DESIGN_HEADER[..5])?;
    let has_day = headers.get(5).map(str::trim) == Some("day");
    let first_response = if has_day { 6 } else { 5 };
    let names: Vec<String> = headers
        .iter()
        .skip(first_response)
        .map(|h| h.trim().to_string())
        .collect();
    let mut runs = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let day = if has_day {
            parse_day(row, &rec[5])?
        } else {
            Day::Initial
        };
        runs.push(read_run(&rec, row, day)?);
        for (j, name) in names.iter().enumerate() {
            let raw = rec.get(first_response + j).ok_or_else(|| IoError::Field {
                row,
                field: name.clone(),
                message: "missing value".into(),
            })?;
            let v = parse_field(row, name, raw)?;
            if !(v > 0.0) {
                return Err(IoError::Field {
                    row,
                    field: name.clone(),
                    message: format!("response must be positive, got {v}"),
                });
            }
            columns[j].push(v);
        }
    }
    let responses: BTreeMap<String, Vec<f64>> = names.into_iter().zip(columns).collect();
    Ok(Dataset::new(runs, responses)?)
}

pub fn write_dataset<W: Write>(data: &Dataset, output: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(output);
    let names: Vec<&str> = data.response_names().collect();
    let mut header: Vec<&str> = DESIGN_HEADER.to_vec();
    header.extend(&names);
    wtr.write_record(&header)?;
    let columns: Vec<&[f64]> = names
        .iter()
        .map(|n| data.response(n).expect("name taken from the dataset"))
        .collect();
    for (i, run) in data.runs().iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(run.coords.iter().map(|c| c.to_string()));
        rec.push(run.day.flag().to_string());
        rec.extend(columns.iter().map(|c| c[i].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// A model given inline or by bundled response name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Named(String),
    Inline(ModelSpec),
}

impl ModelRef {
    pub fn resolve(&self) -> Result<ModelSpec, IoError> {
        match self {
            ModelRef::Named(name) => {
                bundled::model(name).ok_or_else(|| IoError::UnknownModel(name.clone()))
            }
            ModelRef::Inline(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub model: ModelRef,
    /// Defaults to the bundled estimates for a named model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    pub gamma: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// `{"scenarios": [...], "m": 4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub scenarios: Vec<ScenarioEntry>,
    pub m: usize,
}

impl EnsembleFile {
    pub fn scenarios(&self) -> Result<Vec<Scenario>, IoError> {
        self.scenarios
            .iter()
            .enumerate()
            .map(|(index, e)| {
                let spec = e.model.resolve()?;
                let beta = match (&e.beta, &e.model) {
                    (Some(b), _) => b.clone(),
                    (None, ModelRef::Named(name)) => bundled::ESTIMATES
                        [bundled::model_index(name).expect("resolved above")]
                    .to_vec(),
                    (None, ModelRef::Inline(_)) => {
                        return Err(IoError::Scenario {
                            index,
                            message: "inline models need an explicit beta".into(),
                        })
                    }
                };
                Scenario::new(spec, ParamPoint::new(beta, Some(e.gamma)), e.weight).map_err(|err| {
                    IoError::Scenario {
                        index,
                        message: err.to_string(),
                    }
                })
            })
            .collect()
    }

    pub fn into_ensemble(&self, initial: Design) -> Result<ScenarioEnsemble, IoError> {
        Ok(ScenarioEnsemble::new(self.scenarios()?, initial, self.m)?)
    }

    pub fn from_scenarios(scenarios: &[Scenario], m: usize) -> Self {
        Self {
            scenarios: scenarios
                .iter()
                .map(|s| ScenarioEntry {
                    model: ModelRef::Inline(s.spec.clone()),
                    beta: Some(s.params.beta.clone()),
                    gamma: s.gamma(),
                    weight: s.weight,
                })
                .collect(),
            m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_csv_round_trip() {
        let d = bundled::bayes_design_pm10pm20();
        let mut buf = Vec::new();
        write_design(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run,L,K,D,FDV,day\n1,2,2,2,-0.53,1\n"));
        let back = read_design(buf.as_slice(), &d.label).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn design_csv_errors_name_the_row() {
        let bad = "run,L,K,D,FDV,day\n1,0,0,0,0,1\n2,0,x,0,0,1\n";
        let err = read_design(bad.as_bytes(), "d").unwrap_err();
        assert!(matches!(err, IoError::Field { row: 2, ref field, .. } if field == "K"), "{err}");
        let out = "run,L,K,D,FDV,day\n1,0,0,3,0,1\n";
        assert!(matches!(read_design(out.as_bytes(), "d"), Err(IoError::Run { row: 1, .. })));
        let day = "run,L,K,D,FDV,day\n1,0,0,0,0,2\n";
        assert!(read_design(day.as_bytes(), "d").is_err());
        let header = "run,L,K,FDV,D,day\n";
        assert!(matches!(read_design(header.as_bytes(), "d"), Err(IoError::Header { .. })));
    }

    #[test]
    fn dataset_without_day_column() {
        let text = "run,L,K,D,FDV,temperature\n1,0,0,0,0,1500.5\n2,1,1,1,1,1490\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.runs().iter().all(|r| r.day == Day::Initial));
        assert_eq!(d.response("temperature").unwrap(), &[1500.5, 1490.0]);
    }

    #[test]
    fn dataset_rejects_nonpositive() {
        let text = "run,L,K,D,FDV,day,temperature\n1,0,0,0,0,0,1500\n2,0,0,0,0,0,-3\n";
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::Field { row: 2, .. }), "{err}");
    }

    #[test]
    fn dataset_round_trip() {
        let d = bundled::validation14();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn ensemble_json_named_and_inline() {
        let json = r#"{"scenarios":[
            {"model":"temperature","gamma":-16},
            {"model":{"name":"w","link":"inverse","factors":["L"],"terms":[["intercept"],["main","L"]]},
             "beta":[0.08,0.001],"gamma":0.002,"weight":3}
        ],"m":4}"#;
        let file: EnsembleFile = serde_json::from_str(json).unwrap();
        let s = file.scenarios().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].params.beta, bundled::ESTIMATES[0].to_vec());
        assert_eq!(s[1].weight, 3.0);
        let ens = file.into_ensemble(bundled::initial_design()).unwrap();
        assert!((ens.weights()[1] - 0.75).abs() < 1e-15);

        let missing: EnsembleFile =
            serde_json::from_str(r#"{"scenarios":[{"model":"pressure","gamma":1}],"m":4}"#).unwrap();
        assert!(matches!(missing.scenarios(), Err(IoError::UnknownModel(_))));
    }
}
