//! Graded 1-D grids on [0, Rbar] and the finite-difference/quadrature
//! helpers shared by the simulator and the diagnostics.
//!
//! Nodes follow x_j = Rbar (1 - (1 - j/N)^q); q > 1 concentrates resolution
//! at the vacuum boundary where the enthalpy vanishes linearly.

#[derive(Debug, Clone)]
pub struct Grid {
    /// Node coordinates, x_0 = 0, x_N = Rbar.
    pub xs: Vec<f64>,
    /// Cell midpoints, mids[j] = (xs[j] + xs[j+1]) / 2.
    pub mids: Vec<f64>,
    /// Trapezoid weights for nodal quadrature.
    pub w: Vec<f64>,
}

impl Grid {
    pub fn graded(r_bar: f64, n_cells: usize, q: f64) -> Grid {
        assert!(n_cells >= 4, "grid needs at least 4 cells");
        assert!(r_bar > 0.0 && q >= 1.0);
        let n = n_cells;
        let mut xs = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let s = 1.0 - j as f64 / n as f64;
            xs.push(r_bar * (1.0 - s.powf(q)));
        }
        xs[0] = 0.0;
        xs[n] = r_bar;
        let mids = (0..n).map(|j| 0.5 * (xs[j] + xs[j + 1])).collect();
        let w = trapezoid_weights(&xs);
        Grid { xs, mids, w }
    }

    pub fn n_cells(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn r_bar(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn trapz(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.w).map(|(fi, wi)| fi * wi).sum()
    }

    /// First derivative at every node: 3-point nonuniform central stencil in
    /// the interior (exact for quadratics), second-order one-sided at the ends.
    pub fn deriv(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n_cells();
        let xs = &self.xs;
        let mut out = vec![0.0; n + 1];
        for j in 1..n {
            let hm = xs[j] - xs[j - 1];
            let hp = xs[j + 1] - xs[j];
            out[j] = -hp / (hm * (hm + hp)) * f[j - 1]
                + (hp - hm) / (hm * hp) * f[j]
                + hm / (hp * (hm + hp)) * f[j + 1];
        }
        out[0] = one_sided_deriv(xs[0], xs[1], xs[2], f[0], f[1], f[2]);
        out[n] = one_sided_deriv(xs[n], xs[n - 1], xs[n - 2], f[n], f[n - 1], f[n - 2]);
        out
    }

    /// Second derivative at every node; interior uses the flux form of the
    /// 3-point stencil, ends copy their neighbour (the integrands that use
    /// r_xx carry weights vanishing at the boundary).
    pub fn second_deriv(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n_cells();
        let xs = &self.xs;
        let mut out = vec![0.0; n + 1];
        for j in 1..n {
            let hm = xs[j] - xs[j - 1];
            let hp = xs[j + 1] - xs[j];
            out[j] = 2.0 * ((f[j + 1] - f[j]) / hp - (f[j] - f[j - 1]) / hm) / (hm + hp);
        }
        out[0] = out[1];
        out[n] = out[n - 1];
        out
    }

    /// Coefficients (c0, c1, c2) of the second-order one-sided derivative at
    /// the last node: f'(x_N) = c0 f_{N-2} + c1 f_{N-1} + c2 f_N.
    pub fn end_deriv_coeffs(&self) -> [f64; 3] {
        let n = self.n_cells();
        let h1 = self.xs[n - 1] - self.xs[n - 2];
        let h2 = self.xs[n] - self.xs[n - 1];
        [
            h2 / (h1 * (h1 + h2)),
            -(h1 + h2) / (h1 * h2),
            (h1 + 2.0 * h2) / (h2 * (h1 + h2)),
        ]
    }
}

/// Second-order derivative at x0 from samples at (x0, x1, x2).
fn one_sided_deriv(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1
        - h1 / (h2 * (h1 + h2)) * f2
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() - 1;
    let mut w = vec![0.0; n + 1];
    w[0] = 0.5 * (xs[1] - xs[0]);
    w[n] = 0.5 * (xs[n] - xs[n - 1]);
    for j in 1..n {
        w[j] = 0.5 * (xs[j + 1] - xs[j - 1]);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_grid_endpoints_and_monotonicity() {
        let g = Grid::graded(1.25, 64, 2.0);
        assert_eq!(g.xs[0], 0.0);
        assert_eq!(g.r_bar(), 1.25);
        assert!(g.xs.windows(2).all(|p| p[1] > p[0]));
        // boundary cell shrinks like 1/N^2
        let last = g.xs[64] - g.xs[63];
        assert!((last - 1.25 / 64.0f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn derivative_exact_for_quadratics() {
        let g = Grid::graded(2.0, 50, 2.0);
        let f: Vec<f64> = g.xs.iter().map(|&x| 3.0 * x * x - 2.0 * x + 1.0).collect();
        let d = g.deriv(&f);
        for (j, &x) in g.xs.iter().enumerate() {
            assert!((d[j] - (6.0 * x - 2.0)).abs() < 1e-10, "node {j}");
        }
    }

    #[test]
    fn trapz_converges_quadratically() {
        let coarse = Grid::graded(1.0, 100, 2.0);
        let fine = Grid::graded(1.0, 200, 2.0);
        let f = |x: f64| (3.0 * x).sin();
        let exact = (1.0 - (3.0f64).cos()) / 3.0;
        let ec = (coarse.trapz(&coarse.xs.iter().map(|&x| f(x)).collect::<Vec<_>>()) - exact).abs();
        let ef = (fine.trapz(&fine.xs.iter().map(|&x| f(x)).collect::<Vec<_>>()) - exact).abs();
        assert!(ec / ef > 3.5 && ec / ef < 4.5, "ratio {}", ec / ef);
    }
}
