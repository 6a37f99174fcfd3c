//! Reference-element bases and degree-of-freedom maps.
//!
//! * [`lagrange`]: nodal `P_p` basis on equispaced nodes and the global
//!   conforming space `V_h`.
//! * [`raviart_thomas`]: `RT_q = x P_q + [P_q]^2` with edge normal moments
//!   against Legendre polynomials, and the H(div)-conforming patch spaces
//!   used by the flux reconstruction.

pub mod lagrange;
pub mod raviart_thomas;

pub use lagrange::{LagrangeBasis, LagrangeSpace};
pub use raviart_thomas::{PatchRtSpace, RtBasis};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::Point;

/// Shifted Legendre polynomial `P_j(2t - 1)` on `[0, 1]`.
pub fn legendre(j: usize, t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    match j {
        0 => 1.0,
        1 => x,
        _ => {
            for k in 2..=j {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// All shifted Legendre polynomials up to degree `n` at `t`.
pub fn legendre_all(n: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

/// Number of polynomials of total degree `<= p` in two variables.
pub fn dim_p(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Value and gradient of the hat function of `vertex` at `x`.
pub fn hat_function(mesh: &Mesh, vertex: usize, x: Point) -> Result<(f64, [f64; 2])> {
    let (t, xhat) = mesh.locate(x).ok_or(Error::PointOutsideMesh { x: x[0], y: x[1] })?;
    let Some(i) = mesh.triangles[t].iter().position(|&v| v == vertex) else {
        return Ok((0.0, [0.0, 0.0]));
    };
    let (lam, dlam) = barycentric(xhat);
    Ok((lam[i], mesh.element_map(t).grad(dlam[i])))
}

/// Barycentric coordinates on the reference triangle and their (constant) gradients.
pub fn barycentric(xhat: Point) -> ([f64; 3], [[f64; 2]; 3]) {
    (
        [1.0 - xhat[0] - xhat[1], xhat[0], xhat[1]],
        [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
    )
}
