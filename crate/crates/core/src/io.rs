//! The `locflow-field-v1` file format: a JSON header plus a row-major
//! little-endian `f64` payload, either in a sibling `.bin` file or inline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{MetricField, ScalarField, TensorField};
use crate::grid::{sym_len, Boundary, ChartGrid};
use crate::tensor::{Symmetry, TensorLayout, Valence};

pub const FORMAT_VERSION: &str = "locflow-field-v1";

/// Payloads up to this many values are written inline by default.
pub const INLINE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Metric,
    Scalar,
    Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub version: String,
    pub dimension: usize,
    pub extents: Vec<usize>,
    pub spacing: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
    pub boundary: Boundary,
    pub field_kind: FieldKind,
    pub component_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<Vec<Valence>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<Symmetry>,
    /// Sibling binary file name, relative to the header.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub enum Field {
    Metric(MetricField),
    Scalar(ScalarField),
    Tensor(TensorField),
}

impl From<MetricField> for Field {
    fn from(g: MetricField) -> Self {
        Field::Metric(g)
    }
}

impl From<ScalarField> for Field {
    fn from(f: ScalarField) -> Self {
        Field::Scalar(f)
    }
}

impl From<TensorField> for Field {
    fn from(t: TensorField) -> Self {
        Field::Tensor(t)
    }
}

impl Field {
    pub fn grid(&self) -> &ChartGrid {
        match self {
            Field::Metric(g) => g.grid(),
            Field::Scalar(f) => f.grid(),
            Field::Tensor(t) => t.grid(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Field::Metric(g) => g.data(),
            Field::Scalar(f) => f.values(),
            Field::Tensor(t) => t.data(),
        }
    }

    fn header(&self) -> FieldHeader {
        let grid = self.grid();
        let (kind, ncomp, valence, symmetry) = match self {
            Field::Metric(g) => (FieldKind::Metric, g.ncomp(), None, None),
            Field::Scalar(_) => (FieldKind::Scalar, 1, None, None),
            Field::Tensor(t) => (
                FieldKind::Tensor,
                t.ncomp(),
                Some(t.valence().to_vec()),
                Some(t.symmetry().clone()),
            ),
        };
        FieldHeader {
            version: FORMAT_VERSION.into(),
            dimension: grid.dim(),
            extents: grid.extents().to_vec(),
            spacing: grid.spacing().to_vec(),
            origin: Some(grid.origin().to_vec()),
            boundary: grid.boundary(),
            field_kind: kind,
            component_count: ncomp,
            valence,
            symmetry,
            payload: None,
            data: None,
        }
    }
}

fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

/// Write `field` with its header at `path`; the payload goes inline when
/// `inline` is set, otherwise to `path` with extension `.bin`.
pub fn write_field_with(path: &Path, field: &Field, inline: bool) -> Result<()> {
    let mut header = field.header();
    let values = field.values();
    if inline {
        header.data = Some(values.to_vec());
    } else {
        let bin = payload_path(path);
        let name = bin
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Format(format!("bad payload path {}", bin.display())))?;
        header.payload = Some(name.into());
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes)?;
    }
    let mut text = serde_json::to_string_pretty(&header)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write inline for small fields and with a sibling payload otherwise.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_field_with(path, field, field.values().len() <= INLINE_LIMIT)
}

pub fn read_header(path: &Path) -> Result<FieldHeader> {
    let text = fs::read_to_string(path)?;
    let header: FieldHeader = serde_json::from_str(&text)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version `{}`",
            header.version
        )));
    }
    if header.dimension != header.extents.len() || header.dimension != header.spacing.len() {
        return Err(Error::Format(
            "dimension does not match extents/spacing".into(),
        ));
    }
    Ok(header)
}

pub fn read_field(path: &Path) -> Result<Field> {
    let header = read_header(path)?;
    let origin = header
        .origin
        .clone()
        .unwrap_or_else(|| vec![0.0; header.dimension]);
    let grid = ChartGrid::new(&header.extents, &header.spacing, &origin, header.boundary)?;
    let expected = grid.len() * header.component_count;
    let values = match (&header.data, &header.payload) {
        (Some(d), None) => d.clone(),
        (None, Some(name)) => {
            let bin = path.parent().unwrap_or(Path::new(".")).join(name);
            let bytes = fs::read(&bin)?;
            if bytes.len() != expected * 8 {
                return Err(Error::Format(format!(
                    "payload has {} bytes, expected {}",
                    bytes.len(),
                    expected * 8
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        _ => {
            return Err(Error::Format(
                "exactly one of `data` and `payload` is required".into(),
            ))
        }
    };
    if values.len() != expected {
        return Err(Error::Format(format!(
            "{} values, expected {expected}",
            values.len()
        )));
    }
    match header.field_kind {
        FieldKind::Metric => {
            if header.component_count != sym_len(grid.dim()) {
                return Err(Error::Format(format!(
                    "metric needs {} components",
                    sym_len(grid.dim())
                )));
            }
            Ok(Field::Metric(MetricField::new(grid, values)?))
        }
        FieldKind::Scalar => {
            if header.component_count != 1 {
                return Err(Error::Format("scalar field needs one component".into()));
            }
            Ok(Field::Scalar(ScalarField::new(grid, values)?))
        }
        FieldKind::Tensor => {
            let valence = header
                .valence
                .clone()
                .ok_or_else(|| Error::Format("tensor field needs `valence`".into()))?;
            let symmetry = header.symmetry.clone().unwrap_or(Symmetry::None);
            let layout = TensorLayout::new(grid.dim(), valence.len(), symmetry);
            if layout.ncomp() != header.component_count {
                return Err(Error::Format(format!(
                    "layout has {} components",
                    layout.ncomp()
                )));
            }
            Ok(Field::Tensor(TensorField::new(
                grid, valence, layout, values,
            )?))
        }
    }
}

pub fn read_metric(path: &Path) -> Result<MetricField> {
    match read_field(path)? {
        Field::Metric(g) => Ok(g),
        _ => Err(Error::Format(format!(
            "{} does not hold a metric",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::CurvaturePack;

    #[test]
    fn round_trips_are_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = ChartGrid::frozen_cube(3, 10, -1.0, 1.0).unwrap();
        let g = MetricField::conformal(grid, |x| 0.1 * x[0].sin() + x[1] * x[2] / 7.0);
        for inline in [false, true] {
            let p = dir.path().join(format!("g{inline}.json"));
            write_field_with(&p, &g.clone().into(), inline).unwrap();
            let back = read_metric(&p).unwrap();
            assert_eq!(back.data(), g.data());
            assert!(back.grid().same_shape(&grid));
            assert_eq!(back.grid().origin(), grid.origin());
        }
        let pack = CurvaturePack::compute(&g).unwrap();
        let p = dir.path().join("rm.json");
        write_field(&p, &pack.riemann.clone().into()).unwrap();
        assert!(dir.path().join("rm.bin").exists());
        match read_field(&p).unwrap() {
            Field::Tensor(t) => {
                assert_eq!(t.data(), pack.riemann.data());
                assert_eq!(t.symmetry(), pack.riemann.symmetry());
            }
            other => panic!("{other:?}"),
        }
        let header = read_header(&p).unwrap();
        assert_eq!(header.version, FORMAT_VERSION);
        assert_eq!(header.component_count, pack.riemann.ncomp());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = ChartGrid::periodic_cube(2, 8, 1.0).unwrap();
        let p = dir.path().join("f.json");
        write_field(&p, &ScalarField::constant(grid, 1.0).into()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replace(FORMAT_VERSION, "locflow-field-v0")).unwrap();
        assert!(matches!(read_field(&p), Err(Error::Format(_))));
        fs::write(
            &p,
            text.replace("\"boundary\"", "\"colour\": 1, \"boundary\""),
        )
        .unwrap();
        assert!(matches!(read_field(&p), Err(Error::Json(_))));
        fs::write(&p, &text).unwrap();
        assert!(matches!(read_metric(&p), Err(Error::Format(_))));
    }
}
