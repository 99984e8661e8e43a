//! Two-dimensional views of an embedding matrix for separability plots.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    Pca,
    /// Coordinates computed outside this crate (e.g. UMAP).
    External,
}

impl fmt::Display for ProjectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub coordinates: Vec<[f64; 2]>,
    /// Variance share of each axis; `None` for external coordinates.
    pub explained_variance_fractions: Option<[f64; 2]>,
    pub method: ProjectionMethod,
    /// Unit principal directions (length D each) for PCA.
    #[serde(skip)]
    pub components: Option<[Vec<f64>; 2]>,
}

/// Projects onto the top two principal directions of the column-centered
/// data. Each direction is oriented so its largest-magnitude loading is
/// positive.
pub fn pca_project(x: &Matrix) -> Result<Projection2D> {
    let (n, d) = (x.nrows(), x.ncols());
    if n < 3 || d < 2 {
        return Err(Error::invalid(format!(
            "PCA needs at least 3 rows and 2 columns, got {n}x{d}"
        )));
    }
    let mut means = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - means[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut fractions = [0.0; 2];
    for (slot, &k) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .reduce(|a, b| if b.abs() > a.abs() { b } else { a })
            .unwrap_or(0.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        fractions[slot] = if trace > 0.0 {
            (eig.eigenvalues[k] / trace).clamp(0.0, 1.0)
        } else {
            0.0
        };
        components[slot] = v;
    }
    let coordinates = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect();
    Ok(Projection2D {
        coordinates,
        explained_variance_fractions: Some(fractions),
        method: ProjectionMethod::Pca,
        components: Some(components),
    })
}

/// Reads externally computed coordinates: `record_id,x,y[,...]`, rows
/// matched to `ids` by record id.
pub fn load_external(path: &Path, ids: &[String]) -> Result<Projection2D> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::row(path, 0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::row(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::row(path, 1, format!("missing column `{name}`")))
    };
    let (id_c, x_c, y_c) = (col("record_id")?, col("x")?, col("y")?);
    let mut by_id = std::collections::HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::row(path, line, e.to_string()))?;
        let parse = |c: usize| -> Result<f64> {
            row.get(c)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::row(path, line, "non-numeric coordinate"))
        };
        let id = row.get(id_c).unwrap_or("").trim().to_string();
        if by_id
            .insert(id.clone(), [parse(x_c)?, parse(y_c)?])
            .is_some()
        {
            return Err(Error::row(
                path,
                line,
                format!("duplicate record_id `{id}`"),
            ));
        }
    }
    let coordinates = ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no coordinates for record {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Projection2D {
        coordinates,
        explained_variance_fractions: None,
        method: ProjectionMethod::External,
        components: None,
    })
}

/// Writes `record_id,x,y,label,method`.
pub fn write_projection_csv(
    path: &Path,
    ids: &[String],
    labels: &[u8],
    projection: &Projection2D,
) -> Result<()> {
    if ids.len() != projection.coordinates.len() || labels.len() != ids.len() {
        return Err(Error::invalid(
            "projection, ids and labels differ in length",
        ));
    }
    let mut out = String::from("record_id,x,y,label,method\n");
    for ((id, [px, py]), l) in ids.iter().zip(&projection.coordinates).zip(labels) {
        out.push_str(&format!("{id},{px:?},{py:?},{l},{}\n", projection.method));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
