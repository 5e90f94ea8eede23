//! File formats: per-environment sample CSVs and JSON moment sets.
//!
//! Sample CSVs carry a header `x1,...,xp,y` followed by one observation per row.
//! Moment files are JSON with `G` as a list of rows, `Z`, `g_Y` and `n`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::{EnvLabel, EnvironmentMoments, EnvironmentSample, MomentsError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.to_path_buf(), source }
    }
}

pub(crate) mod row_major {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
    }
}

pub(crate) mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::deserialize(d)?))
    }
}

/// Writes `x1,...,xp,y` rows. Floats use the shortest round-trip representation.
pub fn write_sample_csv<W: Write>(w: W, sample: &EnvironmentSample) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    let p = sample.p();
    let mut header: Vec<String> = (1..=p).map(|l| format!("x{l}")).collect();
    header.push("y".into());
    wr.write_record(&header)?;
    let mut rec = Vec::with_capacity(p + 1);
    for u in 0..sample.n() {
        rec.clear();
        rec.extend(sample.x.row(u).iter().map(|v| v.to_string()));
        rec.push(sample.y[u].to_string());
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| IoError::Format(e.to_string()))?;
    Ok(())
}

pub fn read_sample_csv<R: Read>(r: R, env: EnvLabel) -> Result<EnvironmentSample, IoError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    let cols = header.len();
    if cols < 2 {
        return Err(IoError::Format("sample header needs at least x1,y".into()));
    }
    for (l, h) in header.iter().take(cols - 1).enumerate() {
        if h != format!("x{}", l + 1) {
            return Err(IoError::Format(format!("header column {} is '{h}', expected 'x{}'", l + 1, l + 1)));
        }
    }
    if &header[cols - 1] != "y" {
        return Err(IoError::Format(format!("last header column is '{}', expected 'y'", &header[cols - 1])));
    }
    let p = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(IoError::Format(format!("row {} has {} fields, expected {cols}", line + 2, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| IoError::Format(format!("row {}: cannot parse '{field}' as a number", line + 2)))?;
            if c < p {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = ys.len();
    Ok(EnvironmentSample::new(DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys), env)?)
}

/// File name used for an environment's samples: `env_O.csv`, `env_A1.csv`, ...
pub fn sample_file_name(env: EnvLabel) -> String {
    format!("env_{env}.csv")
}

pub fn write_sample_file(dir: &Path, sample: &EnvironmentSample) -> Result<PathBuf, IoError> {
    let path = dir.join(sample_file_name(sample.env));
    let f = fs::File::create(&path).map_err(|e| IoError::file(&path, e))?;
    write_sample_csv(std::io::BufWriter::new(f), sample)?;
    Ok(path)
}

/// Loads `env_O.csv` and `env_A1.csv`, `env_A2.csv`, ... (consecutive, at least one).
pub fn read_sample_dir(dir: &Path) -> Result<(EnvironmentSample, Vec<EnvironmentSample>), IoError> {
    let open = |env: EnvLabel| -> Result<Option<EnvironmentSample>, IoError> {
        let path = dir.join(sample_file_name(env));
        if !path.exists() {
            return Ok(None);
        }
        let f = fs::File::open(&path).map_err(|e| IoError::file(&path, e))?;
        read_sample_csv(std::io::BufReader::new(f), env)
            .map(Some)
            .map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
    };
    let obs = open(EnvLabel::Observational)?
        .ok_or_else(|| IoError::Format(format!("{} has no env_O.csv", dir.display())))?;
    let mut shifted = Vec::new();
    while let Some(s) = open(EnvLabel::Shifted(shifted.len() + 1))? {
        shifted.push(s);
    }
    if shifted.is_empty() {
        return Err(IoError::Format(format!("{} has no env_A1.csv", dir.display())));
    }
    if let Some(bad) = shifted.iter().find(|s| s.p() != obs.p()) {
        return Err(IoError::Format(format!("{} has {} covariates, env_O has {}", bad.env, bad.p(), obs.p())));
    }
    Ok((obs, shifted))
}

/// Observational plus shifted moments, as exchanged on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub format_version: u32,
    pub observational: EnvironmentMoments,
    pub shifted: Vec<EnvironmentMoments>,
}

impl MomentSet {
    pub fn new(observational: EnvironmentMoments, shifted: Vec<EnvironmentMoments>) -> Self {
        MomentSet { format_version: FORMAT_VERSION, observational, shifted }
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        let set: MomentSet = serde_json::from_str(&text)?;
        if set.format_version != FORMAT_VERSION {
            return Err(IoError::Format(format!("unsupported format_version {}", set.format_version)));
        }
        // re-run validation on everything read from disk
        let check = |m: &EnvironmentMoments| EnvironmentMoments::new(m.g.clone(), m.z.clone(), m.g_y, m.n);
        Ok(MomentSet {
            format_version: set.format_version,
            observational: check(&set.observational)?,
            shifted: set.shifted.iter().map(check).collect::<Result<_, _>>()?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| IoError::file(path, e))
}
