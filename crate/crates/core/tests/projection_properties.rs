use dnes::convex_sets::{Halfspace, SetKind};
use dnes::{ConvexSet, Vector};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 1000;

fn hexagon() -> ConvexSet {
    let faces = (0..6)
        .map(|k| {
            let angle = k as f64 * std::f64::consts::PI / 3.0;
            Halfspace::new(dvector![angle.cos(), angle.sin()], 1.0)
        })
        .collect();
    ConvexSet::halfspaces(faces, dvector![0.0, 0.0]).unwrap()
}

fn truncated_cube() -> ConvexSet {
    let mut faces = Vec::new();
    for k in 0..3 {
        let mut e = DVector::zeros(3);
        e[k] = 1.0;
        faces.push(Halfspace::new(e.clone(), 1.0));
        faces.push(Halfspace::new(-e, 1.0));
    }
    faces.push(Halfspace::new(dvector![1.0, 1.0, 1.0], 1.5));
    ConvexSet::halfspaces(faces, dvector![0.0, 0.0, 0.0]).unwrap()
}

fn variants() -> Vec<(&'static str, ConvexSet)> {
    vec![
        (
            "box",
            ConvexSet::new_box(dvector![-1.0, 0.0, 2.0], dvector![1.0, 0.5, 4.0]).unwrap(),
        ),
        ("ball", ConvexSet::ball(dvector![0.5, -1.0, 2.0], 1.5).unwrap()),
        ("simplex", ConvexSet::simplex(4, 2.0).unwrap()),
        ("hexagon", hexagon()),
        ("truncated cube", truncated_cube()),
        (
            "product",
            ConvexSet::product(vec![
                ConvexSet::new_box(dvector![0.0], dvector![1.0]).unwrap(),
                ConvexSet::ball(dvector![0.0, 0.0], 1.0).unwrap(),
                ConvexSet::simplex(2, 1.0).unwrap(),
            ])
            .unwrap(),
        ),
        ("whole space", ConvexSet::whole_space(3).unwrap()),
    ]
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, spread: f64) -> Vector {
    DVector::from_fn(dim, |_, _| spread * (2.0 * rng.random::<f64>() - 1.0))
}

fn member(set: &ConvexSet, rng: &mut ChaCha8Rng) -> Vector {
    set.sample_with_box(rng, -3.0, 3.0).unwrap()
}

#[test]
fn non_expansive() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, set) in variants() {
        for _ in 0..TRIALS {
            let x = random_point(&mut rng, set.dim(), 5.0);
            let y = random_point(&mut rng, set.dim(), 5.0);
            let gap = (set.project(&x).unwrap() - set.project(&y).unwrap()).norm();
            assert!(gap <= (&x - &y).norm() + 1e-12, "{name}: {gap}");
        }
    }
}

#[test]
fn idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, set) in variants() {
        for _ in 0..TRIALS {
            let y = random_point(&mut rng, set.dim(), 5.0);
            let once = set.project(&y).unwrap();
            let twice = set.project(&once).unwrap();
            assert!((&twice - &once).norm() <= 1e-12, "{name}");
        }
    }
}

#[test]
fn members_are_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (name, set) in variants() {
        let closed_form = !matches!(set.kind(), SetKind::Halfspaces { .. });
        for _ in 0..TRIALS {
            let y = random_point(&mut rng, set.dim(), 2.0);
            if !set.contains(&y, 0.0).unwrap() {
                continue;
            }
            let p = set.project(&y).unwrap();
            if closed_form {
                assert_eq!(p, y, "{name}");
            } else {
                assert!((p - &y).norm() <= 1e-12, "{name}");
            }
        }
    }
}

#[test]
fn obtuse_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for (name, set) in variants() {
        for _ in 0..TRIALS / 10 {
            let y = random_point(&mut rng, set.dim(), 6.0);
            let p = set.project(&y).unwrap();
            let residual = &y - &p;
            for _ in 0..100 {
                let z = member(&set, &mut rng);
                let angle = residual.dot(&(z - &p));
                assert!(angle <= 1e-9, "{name}: {angle}");
            }
        }
    }
}

#[test]
fn projections_are_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (name, set) in variants() {
        for _ in 0..TRIALS {
            let y = random_point(&mut rng, set.dim(), 10.0);
            let p = set.project(&y).unwrap();
            assert!(set.contains(&p, 1e-12).unwrap(), "{name}");
        }
    }
}

#[test]
fn hexagon_vertex_region() {
    // Points beyond a vertex along its bisector land on the vertex.
    let set = hexagon();
    let vertex_angle = std::f64::consts::PI / 6.0;
    let radius = 1.0 / vertex_angle.cos();
    let vertex = dvector![radius * vertex_angle.cos(), radius * vertex_angle.sin()];
    let y = &vertex * 3.0;
    let p = set.project(&y).unwrap();
    assert!((p - vertex).norm() <= 1e-12);
}
