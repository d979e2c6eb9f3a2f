//! First principal component of the ordered explicit features.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::table::ErrorTable;
use super::ErrorTableError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub column: String,
    pub loading: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    /// Divide each centred column by its standard deviation before the SVD.
    pub normalize: bool,
}

/// Columns ranked by descending absolute loading on the first right
/// singular vector of the centred rows x ordered-columns matrix. The sign is
/// chosen so that the largest-magnitude entry is positive.
pub fn pca_ordered(table: &ErrorTable, opts: PcaOptions) -> Result<Vec<Loading>, ErrorTableError> {
    let cols = table.schema().ordered_explicit();
    if cols.is_empty() {
        return Err(ErrorTableError::Analysis("no ordered explicit columns".into()));
    }
    let n = table.len();
    if n < 2 {
        return Err(ErrorTableError::Analysis(format!("PCA needs at least 2 rows, table has {n}")));
    }
    let mut mat = DMatrix::<f64>::from_fn(n, cols.len(), |r, c| {
        table.rows()[r].values[cols[c]]
            .as_real()
            .expect("ordered columns hold reals")
    });
    for mut col in mat.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        if opts.normalize {
            let sd = (col.norm_squared() / n as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    let scale = mat.amax();
    let svd = mat.svd(false, true);
    let (best, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one singular value");
    if scale == 0.0 || sigma <= 1e-12 * scale {
        return Err(ErrorTableError::Degenerate);
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut v: Vec<f64> = v_t.row(best).iter().copied().collect();
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("nonempty");
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mut out: Vec<(usize, Loading)> = cols
        .iter()
        .zip(v)
        .enumerate()
        .map(|(i, (&c, loading))| {
            (
                i,
                Loading {
                    column: table.schema().columns()[c].name.clone(),
                    loading,
                },
            )
        })
        .collect();
    out.sort_by(|a, b| b.1.loading.abs().total_cmp(&a.1.loading.abs()).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, l)| l).collect())
}
