//! Solver for the Newton systems of the implicit step: tridiagonal matrices
//! with one extra entry in the last row (the one-sided boundary-stress
//! stencil reaches two nodes inward).

#[derive(Debug, thiserror::Error)]
#[error("singular pivot at row {row} (|pivot| = {pivot:.3e})")]
pub struct SingularSystem {
    pub row: usize,
    pub pivot: f64,
}

/// In-place solve of A x = rhs where A has sub/diag/sup bands and, for
/// m >= 3, an extra coefficient `corner` at position (m-1, m-3).
///
/// `sub[i]` is A[i][i-1] (sub[0] unused), `sup[i]` is A[i][i+1]
/// (sup[m-1] unused). Plain Thomas elimination, with the corner entry folded
/// into the last row before its turn.
pub fn solve_tridiag_corner(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    corner: f64,
    rhs: &mut [f64],
) -> Result<(), SingularSystem> {
    let m = diag.len();
    assert!(m >= 3 && sub.len() == m && sup.len() == m && rhs.len() == m);

    let mut d = diag.to_vec();
    let c = sup.to_vec();
    let mut last_sub = sub[m - 1];
    let mut last_rhs_extra = 0.0;

    // Row 0 is never touched by the sweep, so when the corner sits in
    // column 0 (m == 3) it can be folded immediately.
    if corner != 0.0 && m == 3 {
        let p = d[0];
        if p.abs() < f64::MIN_POSITIVE {
            return Err(SingularSystem { row: 0, pivot: p });
        }
        let g = corner / p;
        last_sub -= g * c[0];
        last_rhs_extra -= g * rhs[0];
    }

    for i in 1..m - 1 {
        let p = d[i - 1];
        if p.abs() < f64::MIN_POSITIVE {
            return Err(SingularSystem {
                row: i - 1,
                pivot: p,
            });
        }
        let f = sub[i] / p;
        d[i] -= f * c[i - 1];
        rhs[i] -= f * rhs[i - 1];
        if i == m - 3 && corner != 0.0 {
            // fold the corner entry of the last row using the freshly
            // eliminated row m-3
            let g = corner / d[i];
            last_sub -= g * c[i];
            last_rhs_extra -= g * rhs[i];
        }
    }
    rhs[m - 1] += last_rhs_extra;
    let p = d[m - 2];
    if p.abs() < f64::MIN_POSITIVE {
        return Err(SingularSystem {
            row: m - 2,
            pivot: p,
        });
    }
    let f = last_sub / p;
    d[m - 1] -= f * c[m - 2];
    rhs[m - 1] -= f * rhs[m - 2];

    let p = d[m - 1];
    if p.abs() < f64::MIN_POSITIVE {
        return Err(SingularSystem {
            row: m - 1,
            pivot: p,
        });
    }
    rhs[m - 1] /= p;
    rhs[m - 2] = (rhs[m - 2] - c[m - 2] * rhs[m - 1]) / d[m - 2];
    for i in (0..m - 2).rev() {
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / d[i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn dense_solve(a: &nalgebra::DMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let rhs = nalgebra::DVector::from_column_slice(b);
        let x = a.clone().lu().solve(&rhs).expect("dense solve");
        x.iter().copied().collect()
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for m in [3usize, 4, 9, 33] {
            let mut sub = vec![0.0; m];
            let mut diag = vec![0.0; m];
            let mut sup = vec![0.0; m];
            for i in 0..m {
                diag[i] = 4.0 + rng.gen::<f64>();
                if i > 0 {
                    sub[i] = rng.gen::<f64>() - 0.5;
                }
                if i + 1 < m {
                    sup[i] = rng.gen::<f64>() - 0.5;
                }
            }
            let corner = rng.gen::<f64>() - 0.5;
            let mut a = nalgebra::DMatrix::zeros(m, m);
            for i in 0..m {
                a[(i, i)] = diag[i];
                if i > 0 {
                    a[(i, i - 1)] = sub[i];
                }
                if i + 1 < m {
                    a[(i, i + 1)] = sup[i];
                }
            }
            a[(m - 1, m - 3)] += corner;
            let b: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();

            let mut x = b.clone();
            solve_tridiag_corner(&sub, &diag, &sup, corner, &mut x).unwrap();
            let want = dense_solve(&a, &b);
            for i in 0..m {
                assert!(
                    (x[i] - want[i]).abs() < 1e-10,
                    "m={m} i={i}: {} vs {}",
                    x[i],
                    want[i]
                );
            }
        }
    }
}
