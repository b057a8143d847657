/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` and `upper[i]` multiplies `x[i+1]` in row
/// `i`; `lower[0]` and `upper[n-1]` are ignored. No pivoting, so the matrix
/// should be diagonally dominant (true for every system built here).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64], out: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
}

/// LU factors of a tridiagonal matrix, for solving many right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    lower: Vec<f64>,
    inv_denom: Vec<f64>,
    c: Vec<f64>,
}

impl TridiagFactor {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        let mut c = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        for i in 0..n {
            let denom = if i == 0 { diag[0] } else { diag[i] - lower[i] * c[i - 1] };
            inv_denom[i] = 1.0 / denom;
            c[i] = if i + 1 < n { upper[i] * inv_denom[i] } else { 0.0 };
        }
        TridiagFactor { lower: lower.to_vec(), inv_denom, c }
    }

    /// Solves in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.c.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv_denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c[i] * x[i + 1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matvec(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    #[test]
    fn small_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1 1 1]
        let mut x = [0.0; 3];
        solve_tridiagonal(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[1.0, 0.0, 1.0], &mut x);
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn dominant_systems_roundtrip(
            x in prop::collection::vec(-10.0f64..10.0, 1..40),
            off in -1.0f64..1.0,
            shift in 2.1f64..5.0,
        ) {
            let n = x.len();
            let lower = vec![off; n];
            let upper = vec![-0.7 * off; n];
            let diag: Vec<f64> = (0..n).map(|i| shift + 0.1 * i as f64).collect();
            let b = matvec(&lower, &diag, &upper, &x);
            let mut out = vec![0.0; n];
            solve_tridiagonal(&lower, &diag, &upper, &b, &mut out);
            for (a, e) in out.iter().zip(&x) {
                prop_assert!((a - e).abs() < 1e-11);
            }
            let mut y = b.clone();
            TridiagFactor::new(&lower, &diag, &upper).solve(&mut y);
            for (a, e) in y.iter().zip(&out) {
                prop_assert!((a - e).abs() < 1e-13);
            }
        }
    }
}
