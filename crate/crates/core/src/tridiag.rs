//! Thomas elimination for tridiagonal systems.

/// Pre-factored tridiagonal system with constant bands.
///
/// Stores the modified super-diagonal and reciprocal pivots of the forward
/// sweep so each solve is one forward and one backward pass.
#[derive(Debug, Clone)]
pub struct TridiagFactor {
    sub: Vec<f64>,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagFactor {
    /// Factors the matrix with sub-diagonal `sub` (`sub[0]` unused), main
    /// diagonal `diag` and super-diagonal `sup` (`sup[n-1]` unused).
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        assert!(n > 0);
        assert_eq!(sub.len(), n);
        assert_eq!(sup.len(), n);
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        inv_pivot[0] = 1.0 / diag[0];
        c_prime[0] = sup[0] * inv_pivot[0];
        for i in 1..n {
            let den = diag[i] - sub[i] * c_prime[i - 1];
            assert!(den != 0.0, "zero pivot at row {i}");
            inv_pivot[i] = 1.0 / den;
            if i + 1 < n {
                c_prime[i] = sup[i] * inv_pivot[i];
            }
        }
        Self {
            sub: sub.to_vec(),
            c_prime,
            inv_pivot,
        }
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

/// One-shot tridiagonal solve.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut x = rhs.to_vec();
    TridiagFactor::new(sub, diag, sup).solve_in_place(&mut x);
    x
}
