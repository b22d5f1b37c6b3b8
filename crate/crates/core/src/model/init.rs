use rand::Rng;

use crate::dense::DenseMatrix;
use crate::rng::StreamKey;

/// `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, key: StreamKey) -> DenseMatrix {
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = key.rng();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-r..r))
}

/// Glorot init of a `rows × cols` weight matrix.
pub fn glorot_matrix(rows: usize, cols: usize, key: StreamKey) -> DenseMatrix {
    glorot_uniform(rows, cols, rows, cols, key)
}

/// Same values as `glorot_matrix(rows, cols, key)` restricted to the
/// listed rows (ascending).
pub fn glorot_rows(rows: usize, cols: usize, keep: &[usize], key: StreamKey) -> DenseMatrix {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = key.rng();
    let mut out = DenseMatrix::zeros(keep.len(), cols);
    let mut next = keep.iter().enumerate().peekable();
    for i in 0..rows {
        let hit = matches!(next.peek(), Some(&(_, &k)) if k == i);
        for j in 0..cols {
            let v = rng.random_range(-r..r);
            if hit {
                let (slot, _) = *next.peek().unwrap();
                out[(slot, j)] = v;
            }
        }
        if hit {
            next.next();
        }
        if next.peek().is_none() {
            break;
        }
    }
    out
}
