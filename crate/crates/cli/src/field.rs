use losscurv::fields::{make_quadratic_field, make_saddle_field, paraboloid, QuadraticFieldParams, SaddleFieldParams, ScalarField, TrigField};
use losscurv::linalg::SymMatrix;
use losscurv::nn::ModelSnapshot;
use losscurv::{Error, Result};

use crate::args::{FieldKind, PointArgs};

pub type DynField = Box<dyn ScalarField>;

/// Parses `"a,b;c,d"` into a symmetric matrix.
pub fn parse_matrix(text: &str) -> Result<SymMatrix> {
    let rows = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad matrix entry {v:?}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let m = SymMatrix::from_rows(&rows)?;
    let asym = (0..m.dim())
        .flat_map(|i| (0..m.dim()).map(move |j| (i, j)))
        .map(|(i, j)| (rows[i][j] - rows[j][i]).abs())
        .fold(0.0, f64::max);
    if asym > 0.0 {
        return Err(Error::InvalidInput("matrix must be symmetric".into()));
    }
    Ok(m)
}

/// The selected field and the point to evaluate at.
pub fn resolve(args: &PointArgs, seed: u64) -> Result<(DynField, Vec<f64>)> {
    let f = &args.field;
    let (field, default_point): (DynField, Vec<f64>) = match f.field {
        FieldKind::Quadratic => {
            let a = match (&f.matrix, &f.diag) {
                (Some(m), _) => parse_matrix(m)?,
                (None, Some(d)) => SymMatrix::from_diag(d),
                (None, None) => SymMatrix::identity(f.dim),
            };
            let center = f.center.clone().unwrap_or_else(|| vec![0.0; a.dim()]);
            let field = make_quadratic_field(QuadraticFieldParams { a, center: center.clone() })?;
            (Box::new(field), center)
        }
        FieldKind::Paraboloid => (Box::new(paraboloid(f.dim)), vec![0.0; f.dim]),
        FieldKind::Saddle => {
            let pi = std::f64::consts::PI;
            (Box::new(make_saddle_field(SaddleFieldParams { c: f.c })?), vec![pi, pi])
        }
        FieldKind::Trig => (Box::new(TrigField::random(f.dim, f.terms, seed)), vec![0.0; f.dim]),
        FieldKind::Model => {
            let path = f.model.as_ref().ok_or_else(|| Error::InvalidInput("--field model needs --model".into()))?;
            let snap = ModelSnapshot::load(path)?;
            (Box::new(snap.loss_field()?), snap.params)
        }
    };
    let point = args.at.clone().unwrap_or(default_point);
    if point.len() != field.dim() {
        return Err(Error::InvalidInput(format!("point has {} coordinates, field has {}", point.len(), field.dim())));
    }
    Ok((field, point))
}
