//! Test operators and start vectors.
//!
//! Stencils are assembled without the `1/h^2` factor, i.e. the 2D operator is
//! `h^2 L_h`. Times quoted for the scaled operator translate by `t -> t / h^2`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::csr::CsrMatrix;

/// `-(D1 u_x)_x - (D2 u_y)_y + Pe (v1 u_x + v2 u_y)` on the unit square, homogeneous Dirichlet.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvDiffSpec {
    /// Interior points per side; `h = 1 / (nx + 1)`.
    pub nx: usize,
    pub pe: f64,
    /// `D1` inside `[0.25, 0.75]^2` (it is 1 outside).
    pub d_inside: f64,
    /// `D2 = d2_ratio * D1`.
    pub d2_ratio: f64,
}

impl ConvDiffSpec {
    pub fn new(nx: usize, pe: f64) -> Self {
        Self {
            nx,
            pe,
            d_inside: 1e3,
            d2_ratio: 0.5,
        }
    }

    /// Constant unit coefficients, no convection: the 5-point Laplacian.
    pub fn laplacian(nx: usize) -> Self {
        Self {
            nx,
            pe: 0.0,
            d_inside: 1.0,
            d2_ratio: 1.0,
        }
    }

    fn d1(&self, x: f64, y: f64) -> f64 {
        if (0.25..=0.75).contains(&x) && (0.25..=0.75).contains(&y) {
            self.d_inside
        } else {
            1.0
        }
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Assembles diffusion and convection parts separately: `A = D + C` with `C = -C^T`.
pub fn conv_diff_parts(spec: &ConvDiffSpec) -> Result<(CsrMatrix, CsrMatrix)> {
    let nx = spec.nx;
    if nx < 4 {
        return Err(Error::invalid("conv-diff needs nx >= 4"));
    }
    if !(spec.d_inside > 0.0 && spec.d2_ratio > 0.0 && spec.pe.is_finite()) {
        return Err(Error::invalid("diffusion coefficients must be positive"));
    }
    let n = nx * nx;
    let h = 1.0 / (nx + 1) as f64;
    let coord = |i: isize| i as f64 * h + h;
    let idx = |i: usize, j: usize| j * nx + i;
    let mut diff = Vec::with_capacity(5 * n);
    let mut conv = Vec::with_capacity(4 * n);
    for j in 0..nx {
        for i in 0..nx {
            let (x, y) = (coord(i as isize), coord(j as isize));
            let row = idx(i, j);
            let d1 = spec.d1(x, y);
            let mut diag = 0.0;
            // (di, dj, direction): x-faces use D1, y-faces use D2
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (xn, yn) = (coord(i as isize + di), coord(j as isize + dj));
                let mut face = harmonic(d1, spec.d1(xn, yn));
                if dj != 0 {
                    face *= spec.d2_ratio;
                }
                diag += face;
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni >= 0 && nj >= 0 && (ni as usize) < nx && (nj as usize) < nx {
                    diff.push((row, idx(ni as usize, nj as usize), -face));
                }
            }
            diff.push((row, row, diag));
            if spec.pe != 0.0 {
                // split form with node velocities: (i, i+1) gets Pe h (v_i + v_{i+1}) / 4
                let v1 = |x: f64, y: f64| x + y;
                let v2 = |x: f64, y: f64| x - y;
                if i + 1 < nx {
                    let c = spec.pe * h * 0.25 * (v1(x, y) + v1(coord(i as isize + 1), y));
                    conv.push((row, idx(i + 1, j), c));
                    conv.push((idx(i + 1, j), row, -c));
                }
                if j + 1 < nx {
                    let c = spec.pe * h * 0.25 * (v2(x, y) + v2(x, coord(j as isize + 1)));
                    conv.push((row, idx(i, j + 1), c));
                    conv.push((idx(i, j + 1), row, -c));
                }
            }
        }
    }
    Ok((CsrMatrix::from_triplets(n, &diff)?, CsrMatrix::from_triplets(n, &conv)?))
}

pub fn conv_diff_2d(spec: &ConvDiffSpec) -> Result<CsrMatrix> {
    let (d, c) = conv_diff_parts(spec)?;
    d.lin_comb(1.0, &c, 1.0)
}

/// `diag(linspace(-1, 1, n))`, optionally with ones on the first superdiagonal,
/// and a seeded standard normal vector.
pub fn diag_test(n: usize, nonnormal: bool, seed: u64) -> Result<(CsrMatrix, Vec<f64>)> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut trip = Vec::with_capacity(2 * n);
    for i in 0..n {
        let d = if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        trip.push((i, i, d));
        if nonnormal && i + 1 < n {
            trip.push((i, i + 1, 1.0));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok((CsrMatrix::from_triplets(n, &trip)?, v))
}

/// `-Delta_h` with periodic boundaries on an `nx^3` grid, 7-point stencil without `1/h^2`.
pub fn laplacian_3d_periodic(nx: usize) -> Result<CsrMatrix> {
    if nx < 4 {
        return Err(Error::invalid("periodic Laplacian needs nx >= 4"));
    }
    let n = nx * nx * nx;
    let idx = |i: usize, j: usize, k: usize| (k * nx + j) * nx + i;
    let mut trip = Vec::with_capacity(7 * n);
    for k in 0..nx {
        for j in 0..nx {
            for i in 0..nx {
                let row = idx(i, j, k);
                trip.push((row, row, 6.0));
                let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
                let (jp, jm) = ((j + 1) % nx, (j + nx - 1) % nx);
                let (kp, km) = ((k + 1) % nx, (k + nx - 1) % nx);
                for col in [idx(ip, j, k), idx(im, j, k), idx(i, jp, k), idx(i, jm, k), idx(i, j, kp), idx(i, j, km)] {
                    trip.push((row, col, -1.0));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, &trip)
}

/// `sin(2 pi x) sin(2 pi y) sin(2 pi z) + x(a-x) y(a-y) z(a-z)` on the periodic grid `x_i = i / nx`.
pub fn initial_vector(nx: usize, a: f64) -> Vec<f64> {
    let h = 1.0 / nx as f64;
    let mut v = Vec::with_capacity(nx * nx * nx);
    for k in 0..nx {
        for j in 0..nx {
            for i in 0..nx {
                let (x, y, z) = (i as f64 * h, j as f64 * h, k as f64 * h);
                let s = (2.0 * PI * x).sin() * (2.0 * PI * y).sin() * (2.0 * PI * z).sin();
                v.push(s + x * (a - x) * y * (a - y) * z * (a - z));
            }
        }
    }
    v
}

/// `(1, ..., 1) / sqrt(n)`.
pub fn default_v(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64).sqrt(); n]
}

/// Mesh width of the 2D problem.
pub fn conv_diff_h(nx: usize) -> f64 {
    1.0 / (nx + 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector::norm2;
    use crate::operator::apply_alloc;

    #[test]
    fn pe_zero_is_symmetric() {
        let a = conv_diff_2d(&ConvDiffSpec::new(12, 0.0)).unwrap();
        let d = a.lin_comb(1.0, &a.transpose(), -1.0).unwrap();
        assert!(d.norm_fro() <= 1e-12 * a.norm_fro());
    }

    #[test]
    fn convection_is_exactly_skew() {
        for (nx, pe) in [(5, 1.0), (17, 100.0), (30, 1000.0)] {
            let (_, c) = conv_diff_parts(&ConvDiffSpec::new(nx, pe)).unwrap();
            let s = c.lin_comb(1.0, &c.transpose(), 1.0).unwrap();
            assert!(s.norm_fro() <= 1e-12 * c.norm_fro(), "nx={nx}");
        }
    }

    #[test]
    fn laplacian_eigenvectors() {
        let nx = 10;
        let a = conv_diff_2d(&ConvDiffSpec::laplacian(nx)).unwrap();
        let h = conv_diff_h(nx);
        for (p, q) in [(1usize, 1usize), (2, 5), (10, 3)] {
            let v: Vec<f64> = (0..nx * nx)
                .map(|r| {
                    let (i, j) = (r % nx, r / nx);
                    (p as f64 * PI * (i + 1) as f64 * h).sin() * (q as f64 * PI * (j + 1) as f64 * h).sin()
                })
                .collect();
            let lam = 4.0 - 2.0 * (p as f64 * PI * h).cos() - 2.0 * (q as f64 * PI * h).cos();
            let av = apply_alloc(&a, &v);
            let r: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - lam * y).collect();
            assert!(norm2(&r) <= 1e-10 * norm2(&v), "mode ({p},{q})");
        }
    }

    #[test]
    fn diag_test_small() {
        let (a, v) = diag_test(3, false, 1).unwrap();
        assert_eq!(a.to_dense().as_slice(), &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(v.len(), 3);
        let (b, w) = diag_test(3, true, 1).unwrap();
        assert_eq!(b.get(0, 1), 1.0);
        assert_eq!(b.get(1, 2), 1.0);
        assert_eq!(b.get(1, 0), 0.0);
        assert_eq!(v, w);
    }

    #[test]
    fn periodic_laplacian() {
        let nx = 6;
        let a = laplacian_3d_periodic(nx).unwrap();
        let ones = vec![1.0; nx * nx * nx];
        assert!(apply_alloc(&a, &ones).iter().all(|&x| x == 0.0));
        let h = 1.0 / nx as f64;
        let v: Vec<f64> = (0..nx * nx * nx).map(|r| (2.0 * PI * (r % nx) as f64 * h).sin()).collect();
        let lam = 2.0 * (1.0 - (2.0 * PI * h).cos());
        let av = apply_alloc(&a, &v);
        let r: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - lam * y).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&v));
    }

    #[test]
    fn default_vector() {
        assert_eq!(default_v(4), vec![0.5; 4]);
        assert!((norm2(&default_v(7)) - 1.0).abs() < 1e-15);
    }
}
