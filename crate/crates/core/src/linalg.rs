//! Householder QR with in-order rank detection.
//!
//! Columns are processed left to right; a column whose norm orthogonal to
//! the already accepted columns falls below `tol × reference norm` is marked
//! aliased and skipped, so later duplicates of earlier columns are the ones
//! dropped.

pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Qr {
    n: usize,
    /// Householder vectors, `v[j]` acts on rows `j..n`.
    house: Vec<Vec<f64>>,
    /// Upper-triangular factor, column-major over kept columns.
    r: Vec<Vec<f64>>,
    kept: Vec<usize>,
    aliased: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // scaled to avoid overflow on large vote counts
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

impl Qr {
    /// Factors the columns. `reference_norms[j]` is the scale against which
    /// column `j` is judged for aliasing; defaults to the column's own norm.
    pub fn factor<C: AsRef<[f64]>>(columns: &[C], reference_norms: Option<&[f64]>) -> Qr {
        Self::factor_with_tolerance(columns, reference_norms, RANK_TOLERANCE)
    }

    pub fn factor_with_tolerance<C: AsRef<[f64]>>(
        columns: &[C],
        reference_norms: Option<&[f64]>,
        tol: f64,
    ) -> Qr {
        let n = columns.first().map_or(0, |c| c.as_ref().len());
        let mut qr = Qr {
            n,
            house: Vec::new(),
            r: Vec::new(),
            kept: Vec::new(),
            aliased: Vec::new(),
        };
        for (j, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            assert_eq!(col.len(), n, "ragged design");
            let reference = reference_norms.map_or_else(|| norm(col), |r| r[j]);
            let mut c = col.to_vec();
            qr.apply_reflectors(&mut c);
            let k = qr.kept.len();
            let below = if k < n { norm(&c[k..]) } else { 0.0 };
            if !(below > tol * reference) || reference == 0.0 {
                qr.aliased.push(j);
                continue;
            }
            let alpha = if c[k] > 0.0 { -below } else { below };
            let mut v = c[k..].to_vec();
            v[0] -= alpha;
            let vnorm = norm(&v);
            v.iter_mut().for_each(|x| *x /= vnorm);
            let mut rcol = c[..k].to_vec();
            rcol.push(alpha);
            qr.house.push(v);
            qr.r.push(rcol);
            qr.kept.push(j);
        }
        qr
    }

    fn apply_reflectors(&self, c: &mut [f64]) {
        for (j, v) in self.house.iter().enumerate() {
            let s = 2.0 * dot(v, &c[j..]);
            c[j..].iter_mut().zip(v).for_each(|(x, vi)| *x -= s * vi);
        }
    }

    /// Overwrites `y` with `Q'y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        self.apply_reflectors(y);
    }

    /// Overwrites `y` with `Q y`.
    pub fn apply_q(&self, y: &mut [f64]) {
        for (j, v) in self.house.iter().enumerate().rev() {
            let s = 2.0 * dot(v, &y[j..]);
            y[j..].iter_mut().zip(v).for_each(|(x, vi)| *x -= s * vi);
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Indices of retained input columns.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn aliased(&self) -> &[usize] {
        &self.aliased
    }

    /// Least-squares coefficients over the kept columns.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let k = self.rank();
        let mut beta = qty[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = beta[i];
            for j in i + 1..k {
                s -= self.r[j][i] * beta[j];
            }
            beta[i] = s / self.r[i][i];
        }
        beta
    }

    /// `y` minus its projection on the column space.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut v = y.to_vec();
        self.apply_qt(&mut v);
        v[..self.rank()].iter_mut().for_each(|x| *x = 0.0);
        self.apply_q(&mut v);
        v
    }

    /// `(X'X)^{-1}` over kept columns, row-major `rank × rank`.
    pub fn xtx_inverse(&self) -> Vec<Vec<f64>> {
        let k = self.rank();
        // R^{-1}, upper triangular, stored by rows
        let mut rinv = vec![vec![0.0; k]; k];
        for i in 0..k {
            rinv[i][i] = 1.0 / self.r[i][i];
        }
        for j in 0..k {
            for i in (0..j).rev() {
                let mut s = 0.0;
                for l in i + 1..=j {
                    s += self.r[l][i] * rinv[l][j];
                }
                rinv[i][j] = -s / self.r[i][i];
            }
        }
        let mut out = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in i..k {
                let s: f64 = (j..k).map(|l| rinv[i][l] * rinv[j][l]).sum();
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}

/// Euclidean norm with overflow-safe scaling.
pub fn vector_norm(v: &[f64]) -> f64 {
    norm(v)
}

/// Symmetric `A B A` for row-major square matrices.
pub fn sandwich(bread: &[Vec<f64>], meat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = bread.len();
    let mut tmp = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            tmp[i][j] = (0..k).map(|l| bread[i][l] * meat[l][j]).sum();
        }
    }
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let s: f64 = (0..k).map(|l| tmp[i][l] * bread[l][j]).sum();
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let cols = vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let qr = Qr::factor(&cols, None);
        let b = qr.solve(&[1.0, 2.0, 4.0]);
        assert!((b[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((b[1] - 1.5).abs() < 1e-14);
        let inv = qr.xtx_inverse();
        // X'X = [[3,3],[3,5]], inverse = [[5,-3],[-3,3]]/6
        assert!((inv[0][0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((inv[0][1] + 0.5).abs() < 1e-14);
        assert!((inv[1][1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn later_duplicate_is_aliased() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![0.5, -1.0, 2.0, 0.0];
        let qr = Qr::factor(&[a.clone(), b, a], None);
        assert_eq!(qr.kept(), &[0, 1]);
        assert_eq!(qr.aliased(), &[2]);
    }

    #[test]
    fn residual_is_orthogonal() {
        let cols = vec![vec![1.0, 1.0, 1.0, 1.0], vec![0.3, 1.0, -2.0, 5.0]];
        let qr = Qr::factor(&cols, None);
        let e = qr.residual(&[1.0, -1.0, 2.0, 0.5]);
        for c in &cols {
            assert!(dot(c, &e).abs() < 1e-13);
        }
    }

    #[test]
    fn reference_norm_flags_vanishing_column() {
        let tiny = vec![1e-17, -1e-17, 0.0];
        let qr = Qr::factor(&[tiny], Some(&[1.0]));
        assert_eq!(qr.rank(), 0);
    }
}
