use std::sync::Arc;

use helmholtz_core::mesh::build_cartesian_mesh;
use helmholtz_core::solver::{AnalyticSolution, DiscreteField, Polynomial};
use helmholtz_core::spaces::{LagrangeBasis, LagrangeSpace};
use helmholtz_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_reference_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    loop {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        if x[0] + x[1] <= 1.0 {
            return x;
        }
    }
}

#[test]
fn partition_of_unity_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in 1..=6 {
        let basis = LagrangeBasis::new(p);
        for _ in 0..100 {
            let (v, g) = basis.eval(random_reference_point(&mut rng));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(g.iter().map(|d| d[0]).sum::<f64>().abs() < 1e-10);
            assert!(g.iter().map(|d| d[1]).sum::<f64>().abs() < 1e-10);
        }
    }
}

#[test]
fn interpolation_reproduces_polynomials() {
    let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in 2..=6 {
        // x^2 and a full degree-p polynomial.
        let full = Polynomial::new((0..=p as u32).map(|i| (C64::new(1.0, i as f64), p as u32 - i, i)).collect());
        let square = Polynomial::new(vec![(C64::new(1.0, 0.0), 2, 0)]);
        for u in [square, full] {
            let uh = DiscreteField::interpolate(Arc::new(LagrangeSpace::new(mesh.clone(), p)), &u);
            for _ in 0..100 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let (v, g) = uh.eval(x).unwrap();
                let (ve, ge) = (u.value(x), u.gradient(x));
                assert!((v - ve).norm() < 1e-11);
                assert!((g[0] - ge[0]).norm() < 1e-9 && (g[1] - ge[1]).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn traces_are_continuous() {
    let mesh = Arc::new(build_cartesian_mesh(3, [-1.0, -1.0], [1.0, 1.0]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for p in 1..=6 {
        let space = Arc::new(LagrangeSpace::new(mesh.clone(), p));
        let mut u = DiscreteField::zero(space.clone());
        for c in &mut u.coeffs {
            *c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        for e in 0..mesh.n_edges() {
            let [Some(t0), Some(t1)] = mesh.edge_elements(e) else { continue };
            let [a, b] = mesh.edge(e);
            for s in [0.1, 0.37, 0.5, 0.83] {
                let x = [
                    mesh.vertices[a][0] + s * (mesh.vertices[b][0] - mesh.vertices[a][0]),
                    mesh.vertices[a][1] + s * (mesh.vertices[b][1] - mesh.vertices[a][1]),
                ];
                let v0 = u.eval_element(t0, mesh.element_map(t0).inverse(x)).0;
                let v1 = u.eval_element(t1, mesh.element_map(t1).inverse(x)).0;
                assert!((v0 - v1).norm() < 1e-12, "p {p} edge {e}");
            }
        }
    }
}
