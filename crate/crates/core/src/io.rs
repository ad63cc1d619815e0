//! Model JSON, dataset CSV and history CSV formats.
//!
//! CSV files start with a `# format_version=<v> ...` line followed by a header.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance, TrainingSample};
use crate::error::{Error, Result};
use crate::network::{DmnParams, ImnParams, Model, ModelType, Topology};
use crate::training::TrainHistory;
use crate::voigt::{check_stiffness, from_upper_triangle, upper_triangle, EulerAngles};

pub const FORMAT_VERSION: u32 = 1;
pub const VOIGT_ORDER: &str = "11,22,33,23,13,12";
pub const EULER_CONVENTION: &str = "zxz-intrinsic";

/// Parameters without the descriptive header fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
}

/// On-disk model. The top-level parameters are the ones used for prediction;
/// `final` optionally carries the last-epoch parameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model_type: ModelType,
    pub depth: usize,
    pub voigt_order: String,
    pub euler_convention: String,
    #[serde(flatten)]
    pub params: ParamsFile,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_params: Option<ParamsFile>,
}

fn params_of(model: &Model) -> ParamsFile {
    match model {
        Model::Dmn(p) => ParamsFile {
            z: p.z.clone(),
            angles: Some(p.angles.iter().map(EulerAngles::as_array).collect()),
            theta: None,
            phi: None,
        },
        Model::Imn(p) => {
            ParamsFile { z: p.z.clone(), angles: None, theta: Some(p.theta.clone()), phi: Some(p.phi.clone()) }
        }
    }
}

fn model_of(model_type: ModelType, topology: Topology, p: &ParamsFile) -> Result<Model> {
    let missing = |f: &str| Error::Config(format!("model file lacks `{f}`"));
    let model = match model_type {
        ModelType::Dmn => {
            let angles = p.angles.as_ref().ok_or_else(|| missing("angles"))?;
            Model::Dmn(DmnParams {
                topology,
                z: p.z.clone(),
                angles: angles.iter().map(|a| EulerAngles::new(a[0], a[1], a[2])).collect(),
            })
        }
        ModelType::Imn => Model::Imn(ImnParams {
            topology,
            z: p.z.clone(),
            theta: p.theta.clone().ok_or_else(|| missing("theta"))?,
            phi: p.phi.clone().ok_or_else(|| missing("phi"))?,
        }),
    };
    model.validate()?;
    Ok(model)
}

impl ModelFile {
    pub fn new(model: &Model, last: Option<&Model>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_type: model.model_type(),
            depth: model.topology().depth(),
            voigt_order: VOIGT_ORDER.into(),
            euler_convention: EULER_CONVENTION.into(),
            params: params_of(model),
            final_params: last.map(params_of),
        }
    }

    fn check_header(&self) -> Result<Topology> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: self.format_version.to_string(), expected: FORMAT_VERSION });
        }
        if self.voigt_order != VOIGT_ORDER {
            return Err(Error::Config(format!("unsupported voigt_order `{}`", self.voigt_order)));
        }
        if self.euler_convention != EULER_CONVENTION {
            return Err(Error::Config(format!("unsupported euler_convention `{}`", self.euler_convention)));
        }
        Topology::new(self.depth)
    }

    pub fn model(&self) -> Result<Model> {
        let t = self.check_header()?;
        model_of(self.model_type, t, &self.params)
    }

    pub fn final_model(&self) -> Result<Option<Model>> {
        let t = self.check_header()?;
        self.final_params.as_ref().map(|p| model_of(self.model_type, t, p)).transpose()
    }
}

pub fn model_to_json(model: &Model, last: Option<&Model>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::new(model, last))?)
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::UnsupportedVersion { found: v.to_string(), expected: FORMAT_VERSION }),
        None => return Err(Error::UnsupportedVersion { found: "missing".into(), expected: FORMAT_VERSION }),
    }
    serde_json::from_value::<ModelFile>(raw)?.model()
}

pub fn save_model(path: &Path, model: &Model, last: Option<&Model>) -> Result<()> {
    fs::write(path, model_to_json(model, last)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_json(&fs::read_to_string(path)?)
}

/// Parses `# format_version=<v> key=value ...`.
fn parse_version_line(line: &str) -> Result<Vec<(String, String)>> {
    let body = line.trim().strip_prefix('#').map(str::trim);
    let fields: Vec<(String, String)> = body
        .unwrap_or("")
        .split_whitespace()
        .filter_map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    match fields.iter().find(|(k, _)| k == "format_version") {
        Some((_, v)) if v == &FORMAT_VERSION.to_string() => Ok(fields),
        Some((_, v)) => Err(Error::UnsupportedVersion { found: v.clone(), expected: FORMAT_VERSION }),
        None => Err(Error::UnsupportedVersion { found: "missing".into(), expected: FORMAT_VERSION }),
    }
}

fn matrix_columns(prefix: &str) -> impl Iterator<Item = String> + '_ {
    (0..6).flat_map(move |i| (i..6).map(move |j| format!("{prefix}_c{}{}", i + 1, j + 1)))
}

fn dataset_header() -> Vec<String> {
    std::iter::once("sample_id".to_string())
        .chain(matrix_columns("p1"))
        .chain(matrix_columns("p2"))
        .chain(matrix_columns("c"))
        .collect()
}

pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut out = out;
    writeln!(out, "# format_version={FORMAT_VERSION} oracle={} seed={}", data.provenance.oracle, data.provenance.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header())?;
    for (i, s) in data.samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        for m in [&s.c_p1, &s.c_p2, &s.target] {
            row.extend(upper_triangle(m).iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let fields = parse_version_line(&first)?;
    let get = |k: &str| fields.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
    let provenance = Provenance {
        oracle: get("oracle").unwrap_or_default(),
        seed: get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
    };

    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != dataset_header() {
        return Err(Error::Parse { row: 0, message: "unexpected dataset header".into() });
    }
    let mut samples = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let row = row + 1;
        let rec = rec?;
        if rec.len() != 64 {
            return Err(Error::Parse { row, message: format!("expected 64 fields, found {}", rec.len()) });
        }
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let mats: Vec<_> = vals.chunks_exact(21).map(from_upper_triangle).collect();
        for (m, name) in mats.iter().zip(["p1", "p2", "target"]) {
            check_stiffness(m, &format!("row {row} {name}"))?;
        }
        samples.push(TrainingSample { c_p1: mats[0], c_p2: mats[1], target: mats[2] });
    }
    Ok(Dataset { samples, provenance })
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(fs::File::create(path)?, data)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(fs::File::open(path)?)
}

const HISTORY_HEADER: [&str; 6] = ["epoch", "train_loss", "val_loss", "train_e_c", "val_e_c", "lr"];

pub fn write_history<W: Write>(out: W, h: &TrainHistory) -> Result<()> {
    let mut out = out;
    writeln!(out, "# format_version={FORMAT_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for i in 0..h.len() {
        w.write_record([
            (i + 1).to_string(),
            h.train_loss[i].to_string(),
            h.val_loss[i].to_string(),
            h.train_e_c[i].to_string(),
            h.val_e_c[i].to_string(),
            h.lr[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history<R: Read>(input: R) -> Result<TrainHistory> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    parse_version_line(&first)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    if r.headers()?.iter().ne(HISTORY_HEADER) {
        return Err(Error::Parse { row: 0, message: "unexpected history header".into() });
    }
    let mut h = TrainHistory::default();
    for (row, rec) in r.records().enumerate() {
        let row = row + 1;
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if vals.len() != HISTORY_HEADER.len() {
            return Err(Error::Parse { row, message: "wrong field count".into() });
        }
        h.train_loss.push(vals[1]);
        h.val_loss.push(vals[2]);
        h.train_e_c.push(vals[3]);
        h.val_e_c.push(vals[4]);
        h.lr.push(vals[5]);
    }
    Ok(h)
}

pub fn save_history(path: &Path, h: &TrainHistory) -> Result<()> {
    write_history(fs::File::create(path)?, h)
}

pub fn load_history(path: &Path) -> Result<TrainHistory> {
    read_history(fs::File::open(path)?)
}
