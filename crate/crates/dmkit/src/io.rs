//! JSON and CSV file formats.
//!
//! Matrices are `{"dim": d, "re": [[...]], "im": [[...]]}` with row-major
//! nested arrays; `dim` is the row count. Channels are
//! `{"dim": d, "kraus": [matrix, ...]}`. Pulse-train states are
//! `{"re": [...], "im": [...], "period_ps": T, "width_ps": w}` with the
//! geometry optional. Waveforms are CSV with `# dt_ps=` and `# t0_ps=`
//! header lines and one sample per line.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dmkit_core::linalg::ComplexMatrix;
use dmkit_core::pulselab::{
    IntensityWaveform, PulseTrainState, DEFAULT_PERIOD_PS, DEFAULT_WIDTH_PS,
};
use dmkit_core::qmodel::KrausChannel;
use dmkit_core::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let rows = |f: fn(&Complex64) -> f64| {
            (0..m.rows())
                .map(|r| m.row(r).iter().map(f).collect())
                .collect()
        };
        Self {
            dim: m.rows(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        ensure!(
            self.re.len() == self.dim,
            "\"re\" has {} rows, \"dim\" is {}",
            self.re.len(),
            self.dim
        );
        ensure!(
            self.im.len() == self.dim,
            "\"im\" has {} rows, \"dim\" is {}",
            self.im.len(),
            self.dim
        );
        let rows = self
            .re
            .iter()
            .zip(&self.im)
            .enumerate()
            .map(|(r, (re, im))| {
                ensure!(
                    re.len() == im.len(),
                    "row {r}: \"re\" has {} entries, \"im\" has {}",
                    re.len(),
                    im.len()
                );
                Ok(re
                    .iter()
                    .zip(im)
                    .map(|(&a, &b)| Complex64::new(a, b))
                    .collect())
            })
            .collect::<Result<Vec<Vec<Complex64>>>>()?;
        Ok(ComplexMatrix::from_rows(&rows)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub dim: usize,
    pub kraus: Vec<MatrixJson>,
}

impl ChannelJson {
    pub fn from_channel(ch: &KrausChannel) -> Self {
        Self {
            dim: ch.dim(),
            kraus: ch.kraus_ops().iter().map(MatrixJson::from_matrix).collect(),
        }
    }

    pub fn to_channel(&self) -> Result<KrausChannel> {
        let ops = self
            .kraus
            .iter()
            .map(MatrixJson::to_matrix)
            .collect::<Result<Vec<_>>>()?;
        ensure!(
            ops.iter().all(|k| k.shape() == (self.dim, self.dim)),
            "Kraus operators must be {0}x{0}",
            self.dim
        );
        Ok(KrausChannel::new(ops)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_ps: Option<f64>,
}

impl StateJson {
    pub fn from_state(s: &PulseTrainState) -> Self {
        Self {
            re: s.amplitudes().iter().map(|z| z.re).collect(),
            im: s.amplitudes().iter().map(|z| z.im).collect(),
            period_ps: Some(s.period_ps()),
            width_ps: Some(s.width_ps()),
        }
    }

    /// Amplitudes are normalized on load.
    pub fn to_state(&self) -> Result<PulseTrainState> {
        ensure!(
            self.re.len() == self.im.len(),
            "\"re\" and \"im\" differ in length"
        );
        let amps: Vec<Complex64> = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        let ket = dmkit_core::linalg::Ket::normalized(amps)?;
        Ok(PulseTrainState::new(
            ket.amplitudes().to_vec(),
            self.period_ps.unwrap_or(DEFAULT_PERIOD_PS),
            self.width_ps.unwrap_or(DEFAULT_WIDTH_PS),
        )?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    read_json::<MatrixJson>(path)?
        .to_matrix()
        .with_context(|| format!("in {}", path.display()))
}

pub fn write_waveform(out: &mut impl Write, w: &IntensityWaveform) -> Result<()> {
    writeln!(out, "# dt_ps={}", w.dt)?;
    writeln!(out, "# t0_ps={}", w.t0)?;
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for v in &w.samples {
        csv.write_record([v.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_waveform(input: impl Read) -> Result<IntensityWaveform> {
    let mut reader = BufReader::new(input);
    let (mut dt, mut t0) = (None, 0.0);
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        if let Some(comment) = line.trim().strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let parsed: f64 = value
                    .trim()
                    .parse()
                    .with_context(|| format!("header {}: not a number", key.trim()))?;
                match key.trim() {
                    "dt_ps" => dt = Some(parsed),
                    "t0_ps" => t0 = parsed,
                    _ => {}
                }
            }
        } else {
            body.push_str(&line);
        }
        line.clear();
    }
    let Some(dt) = dt else {
        bail!("missing `# dt_ps=` header")
    };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let samples = csv
        .records()
        .enumerate()
        .map(|(n, rec)| {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("");
            field
                .parse::<f64>()
                .with_context(|| format!("sample {}: {field:?} is not a number", n + 1))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IntensityWaveform::new(dt, t0, samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let m = ComplexMatrix::from_rows(&[
            vec![Complex64::new(0.5, 0.0), Complex64::new(0.1, -0.2)],
            vec![Complex64::new(0.1, 0.2), Complex64::new(0.5, 0.0)],
        ])
        .unwrap();
        let json = serde_json::to_string(&MatrixJson::from_matrix(&m)).unwrap();
        let back: MatrixJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_matrix().unwrap(), m);
    }

    #[test]
    fn ragged_matrix_rejected() {
        let bad = MatrixJson {
            dim: 2,
            re: vec![vec![1.0, 0.0], vec![0.0]],
            im: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert!(bad.to_matrix().is_err());
        let wrong_dim = MatrixJson {
            dim: 3,
            re: vec![vec![1.0]],
            im: vec![vec![0.0]],
        };
        assert!(wrong_dim.to_matrix().is_err());
    }

    #[test]
    fn waveform_round_trip_keeps_origin() {
        let w = IntensityWaveform::new(0.5, -132.0, vec![0.0, 0.25, -1e-3, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_waveform(&mut buf, &w).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dt_ps=0.5\n# t0_ps=-132\n"));
        assert_eq!(read_waveform(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn waveform_without_origin_starts_at_zero() {
        let w = read_waveform("# dt_ps=2\n1\n2\n".as_bytes()).unwrap();
        assert_eq!((w.dt, w.t0, w.samples.clone()), (2.0, 0.0, vec![1.0, 2.0]));
        assert!(read_waveform("1\n2\n".as_bytes()).is_err());
        assert!(read_waveform("# dt_ps=1\n1\nx\n".as_bytes()).is_err());
    }

    #[test]
    fn state_is_normalized_on_load() {
        let s = StateJson {
            re: vec![1.0, 1.0],
            im: vec![0.0, 0.0],
            period_ps: None,
            width_ps: None,
        };
        let state = s.to_state().unwrap();
        assert!((state.amplitudes()[0].re - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(state.period_ps(), DEFAULT_PERIOD_PS);
    }
}
