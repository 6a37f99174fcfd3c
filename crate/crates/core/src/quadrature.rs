//! Quadrature on the reference triangle `{(0,0), (1,0), (0,1)}` and the
//! reference edge `[0, 1]`.
//!
//! Low degrees use classical symmetric rules; from degree 6 upward the
//! triangle rule is a collapsed (Duffy) tensor product of Gauss–Legendre
//! rules, which has positive weights and interior points at every order.

use crate::error::{Error, Result};
use crate::Point;

pub const MAX_DEGREE: usize = 30;

/// A quadrature rule on the reference triangle.
///
/// Points are stored in barycentric coordinates `(λ0, λ1, λ2)` with respect to
/// the vertices `(0,0)`, `(1,0)`, `(0,1)`; weights sum to the reference area 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl TriangleRule {
    /// Reference (cartesian) coordinates of point `i`.
    pub fn xy(&self, i: usize) -> Point {
        let b = self.points[i];
        [b[1], b[2]]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Iterator over `(reference point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        (0..self.len()).map(move |i| (self.xy(i), self.weights[i]))
    }
}

/// A quadrature rule on `[0, 1]`; weights sum to 1.
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
        exact_degree: 2 * n - 1,
    })
}

/// Quadrature rule on the reference triangle exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    match degree {
        0 | 1 => Ok(centroid_rule()),
        2 => Ok(three_point_rule()),
        3 | 4 => Ok(six_point_rule()),
        5 => Ok(seven_point_rule()),
        d if d <= MAX_DEGREE => Ok(collapsed_rule(d)),
        d => Err(Error::UnsupportedDegree(d)),
    }
}

fn centroid_rule() -> TriangleRule {
    TriangleRule {
        points: vec![[1.0 / 3.0; 3]],
        weights: vec![0.5],
        exact_degree: 1,
    }
}

fn three_point_rule() -> TriangleRule {
    let mut rule = TriangleRule {
        points: Vec::new(),
        weights: Vec::new(),
        exact_degree: 2,
    };
    push_orbit(&mut rule, 1.0 / 6.0, 1.0 / 3.0);
    rule
}

// Dunavant, degree 4.
fn six_point_rule() -> TriangleRule {
    let mut rule = TriangleRule {
        points: Vec::new(),
        weights: Vec::new(),
        exact_degree: 4,
    };
    push_orbit(&mut rule, 0.445_948_490_915_965, 0.223_381_589_678_011);
    push_orbit(&mut rule, 0.091_576_213_509_771, 0.109_951_743_655_322);
    rule
}

// Radon's 7-point degree-5 rule (closed-form nodes).
fn seven_point_rule() -> TriangleRule {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let mut rule = TriangleRule {
        points: vec![[1.0 / 3.0; 3]],
        weights: vec![0.5 * 9.0 / 40.0],
        exact_degree: 5,
    };
    push_orbit(&mut rule, a1, w1);
    push_orbit(&mut rule, a2, w2);
    rule
}

/// Adds the three points `(a, a, 1-2a)` (all permutations) with area-normalised weight `w`.
fn push_orbit(rule: &mut TriangleRule, a: f64, w: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        rule.points.push(p);
        rule.weights.push(0.5 * w);
    }
}

/// Collapsed Gauss rule: `x = u`, `y = v (1 - u)` with Jacobian `1 - u`.
fn collapsed_rule(degree: usize) -> TriangleRule {
    // The Jacobian adds one degree in u.
    let n = (degree + 1) / 2 + 1;
    let (g, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (g[i] + 1.0);
        let wu = 0.5 * w[i];
        for j in 0..n {
            let v = 0.5 * (g[j] + 1.0);
            let wv = 0.5 * w[j];
            let x = u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    TriangleRule {
        points,
        weights,
        exact_degree: 2 * n - 2,
    }
}
