//! Dataset CSV files and JSON model documents.
//!
//! Datasets are comma-separated with a header `w1,..,wn,r1,..,rm`. Lines
//! starting with `#` are comments. Models are JSON documents carrying the
//! architecture, every basis, the normalization statistics and the flat
//! weight vector in Jacobian column order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::apc::OrthonormalBasis1D;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::network::{BasisMode, LayerSpec, NetworkState, NormStats};

pub const SCHEMA_VERSION: u32 = 1;

fn column_kind(name: &str) -> Option<(char, usize)> {
    let name = name.trim();
    let (kind, rest) = name.split_at(name.char_indices().nth(1).map(|(i, _)| i)?);
    let k: usize = rest.parse().ok()?;
    match kind {
        "w" | "r" if k >= 1 => Some((kind.chars().next()?, k)),
        _ => None,
    }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let mut n_in = 0;
    let mut n_out = 0;
    for (c, name) in header.iter().enumerate() {
        match column_kind(name) {
            Some(('w', k)) if n_out == 0 && k == n_in + 1 => n_in += 1,
            Some(('r', k)) if n_in > 0 && k == n_out + 1 => n_out += 1,
            _ => {
                return Err(Error::Parse(format!(
                    "header column {} is '{name}', expected w1..wn followed by r1..rm",
                    c + 1
                )))
            }
        }
    }
    if n_in == 0 || n_out == 0 {
        return Err(Error::Parse("header needs at least one w and one r column".into()));
    }
    let width = n_in + n_out;
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let row = i + 1;
        if record.len() != width {
            return Err(Error::Parse(format!("row {row} has {} cells, expected {width}", record.len())));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("row {row} column {} ('{}'): not a finite number '{cell}'", c + 1, &header[c])))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let all = DMatrix::from_row_slice(rows, width, &values);
    Dataset::new(all.columns(0, n_in).into_owned(), all.columns(n_in, n_out).into_owned())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Writes `inputs` and `responses` side by side. `comments` become leading
/// `# ` lines. Floats use the shortest representation that parses back exactly.
pub fn write_dataset<W: Write>(mut out: W, inputs: &DMatrix<f64>, responses: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    if inputs.nrows() != responses.nrows() {
        return Err(Error::DimensionMismatch {
            expected: inputs.nrows(),
            got: responses.nrows(),
        });
    }
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut header: Vec<String> = (1..=inputs.ncols()).map(|k| format!("w{k}")).collect();
    header.extend((1..=responses.ncols()).map(|k| format!("r{k}")));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..inputs.nrows() {
        let cells: Vec<String> = inputs
            .row(t)
            .iter()
            .chain(responses.row(t).iter())
            .map(|v| v.to_string())
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset, comments: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_dataset(&mut f, data.inputs(), data.responses(), comments)?;
    f.flush()?;
    Ok(())
}

/// Stored form of one univariate basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisRecord {
    pub shift: f64,
    pub scale: f64,
    /// Row `k`: coefficients of polynomial `k` in `(x − shift) / scale`.
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(flatten)]
    pub spec: LayerSpec,
    pub bases: Vec<BasisRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<Vec<NormStats>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Hex digest of the training configuration.
    pub config_digest: String,
    pub final_loss: Option<f64>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub n_inputs: usize,
    pub basis_mode: BasisMode,
    pub layers: Vec<LayerRecord>,
    /// Flat weights: layer-major, node-major, term order of the multi-index set.
    pub weights: Vec<f64>,
    pub provenance: Provenance,
}

impl ModelDocument {
    pub fn from_state(state: &NetworkState, provenance: Provenance) -> Result<Self> {
        if !state.is_refreshed() {
            return Err(Error::BasesNotRefreshed);
        }
        let layers = state
            .layers()
            .iter()
            .map(|l| LayerRecord {
                spec: *l.spec(),
                bases: l
                    .bases()
                    .expect("refreshed")
                    .iter()
                    .map(|b| BasisRecord {
                        shift: b.shift(),
                        scale: b.scale(),
                        coeffs: b.standardized_coeffs().to_vec(),
                    })
                    .collect(),
                norm_stats: l.norm_stats().map(|s| s.to_vec()),
            })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            n_inputs: state.n_inputs(),
            basis_mode: state.basis_mode(),
            layers,
            weights: state.flat_weights(),
            provenance,
        })
    }

    /// Rebuilds the network, validating every stored invariant.
    pub fn to_state(&self) -> Result<NetworkState> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedSchema(self.schema_version));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArchitecture("model document has no layers".into()));
        }
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec).collect();
        let mut cursor = 0usize;
        let mut n_in = self.n_inputs;
        let mut weights = Vec::with_capacity(specs.len());
        for (l, spec) in specs.iter().enumerate() {
            let m = crate::network::terms_per_node(n_in, spec.degree)?;
            let mut layer = Vec::with_capacity(spec.n_nodes);
            for node in 0..spec.n_nodes {
                let end = cursor + m;
                if end > self.weights.len() {
                    return Err(Error::WeightCountMismatch {
                        layer: l + 1,
                        node,
                        expected: m,
                        found: self.weights.len().saturating_sub(cursor),
                    });
                }
                layer.push(self.weights[cursor..end].to_vec());
                cursor = end;
            }
            weights.push(layer);
            n_in = spec.n_nodes;
        }
        if cursor != self.weights.len() {
            let last = specs.last().expect("checked non-empty");
            let m = weights.last().and_then(|l| l.last()).map_or(0, Vec::len);
            return Err(Error::WeightCountMismatch {
                layer: specs.len(),
                node: last.n_nodes - 1,
                expected: m,
                found: m + self.weights.len() - cursor,
            });
        }
        let bases = self
            .layers
            .iter()
            .map(|l| {
                l.bases
                    .iter()
                    .map(|b| OrthonormalBasis1D::from_parts(b.shift, b.scale, b.coeffs.clone()))
                    .collect::<Result<Vec<_>>>()
                    .map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        let stats = self.layers.iter().map(|l| l.norm_stats.clone()).collect();
        NetworkState::from_parts(self.n_inputs, &specs, self.basis_mode, weights, bases, stats)
    }
}

pub fn write_model<W: Write>(out: W, doc: &ModelDocument) -> Result<()> {
    serde_json::to_writer_pretty(out, doc)?;
    Ok(())
}

pub fn read_model<R: BufRead>(reader: R) -> Result<ModelDocument> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    // check the version before the shape so future documents fail clearly
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse("model document has no schema_version".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::UnsupportedSchema(version as u32));
    }
    Ok(serde_json::from_value(value)?)
}

pub fn save_model(path: impl AsRef<Path>, state: &NetworkState, provenance: Provenance) -> Result<()> {
    let doc = ModelDocument::from_state(state, provenance)?;
    let mut f = std::io::BufWriter::new(File::create(path)?);
    write_model(&mut f, &doc)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkState> {
    load_model_document(path)?.to_state()
}

pub fn load_model_document(path: impl AsRef<Path>) -> Result<ModelDocument> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;

    #[test]
    fn reads_header_and_rows() {
        let text = "# comment\nw1,w2,w3,r1\n1,2,3,4\n5,6,7,8\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!((d.n_points(), d.n_inputs(), d.n_outputs()), (2, 3, 1));
        assert_eq!(d.input_row(1), vec![5.0, 6.0, 7.0]);
    }

    #[test]
    fn reports_bad_cells() {
        let err = read_dataset("w1,r1\n1,2\n3,NaN\n".as_bytes()).unwrap_err();
        assert_eq!(err.code(), "parse-error");
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
        let err = read_dataset("w1,r1\n1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 1 column 2"));
        assert_eq!(read_dataset("w1,r1\n".as_bytes()).unwrap_err().code(), "empty-dataset");
        assert!(read_dataset("w1,r1\n1,2,3\n".as_bytes()).is_err());
        assert!(read_dataset("w1,w3,r1\n1,2,3\n".as_bytes()).is_err());
        assert!(read_dataset("r1,w1\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, -2.5e-300, 7.0]);
        let y = DMatrix::from_row_slice(2, 1, &[std::f64::consts::PI, -0.0]);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &x, &y, &["seed 3".into()]).unwrap();
        let d = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(d.inputs(), &x);
        assert_eq!(d.responses(), &y);
    }

    #[test]
    fn model_schema_checks() {
        let x = DMatrix::from_fn(40, 2, |t, j| ((t * 7 + j * 3) % 11) as f64 / 11.0);
        let specs = [LayerSpec::new(2, 2, Activation::Normalized), LayerSpec::new(1, 1, Activation::Normalized)];
        let net = NetworkState::build(2, &specs, BasisMode::Adaptive, 4).unwrap().refresh_bases(&x).unwrap();
        let doc = ModelDocument::from_state(&net, Provenance::default()).unwrap();
        let mut text = Vec::new();
        write_model(&mut text, &doc).unwrap();
        let back = read_model(text.as_slice()).unwrap();
        assert_eq!(back, doc);

        let mut future = doc.clone();
        future.schema_version = 2;
        assert_eq!(future.to_state().unwrap_err().code(), "unsupported-schema");
        let mut text = Vec::new();
        write_model(&mut text, &future).unwrap();
        assert_eq!(read_model(text.as_slice()).unwrap_err().code(), "unsupported-schema");

        let mut short = doc.clone();
        short.weights.pop();
        assert_eq!(short.to_state().unwrap_err().code(), "weight-count-mismatch");
        let mut long = doc.clone();
        long.weights.push(0.5);
        assert_eq!(long.to_state().unwrap_err().code(), "weight-count-mismatch");

        let unrefreshed = NetworkState::build(2, &specs, BasisMode::Adaptive, 4).unwrap();
        assert!(ModelDocument::from_state(&unrefreshed, Provenance::default()).is_err());
    }
}
