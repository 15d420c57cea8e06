use approx::assert_abs_diff_eq;
use nalgebra::{Matrix3, SymmetricEigen};
use proptest::prelude::*;
use purkinje::activation::{
    monodomain_tensor, root_times_from_delay, solve_coupled, solve_tree, tensor_from_fibers, ConductivityModel,
    CoupledSolver, CouplingConfig, MyoSource, MyocardiumSolver,
};
use purkinje::fixtures::cube_mesh;
use purkinje::mesh::{Point3, VolumeMesh};
use purkinje::tree::PurkinjeTree;
use purkinje::Error;

fn homogeneous(mesh: VolumeMesh, d: Matrix3<f64>) -> MyocardiumSolver {
    let n = mesh.tets.len();
    MyocardiumSolver::with_tensors(mesh, vec![d; n]).unwrap()
}

fn metric_distance(d: &Matrix3<f64>, a: &Point3, b: &Point3) -> f64 {
    let dx = b - a;
    dx.dot(&(d.try_inverse().unwrap() * dx)).sqrt()
}

fn linf_error(solver: &MyocardiumSolver, tau: &[f64], d: &Matrix3<f64>, src: &Point3) -> f64 {
    solver
        .mesh()
        .vertices
        .iter()
        .zip(tau)
        .map(|(x, t)| (t - metric_distance(d, src, x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn tensor_eigenvalues_are_harmonic_means() {
    let cm = ConductivityModel { alpha: 0.1, ..ConductivityModel::default() };
    for f in [Point3::new(1.0, 2.0, -0.5), Point3::new(-0.3, 0.1, 0.9), Point3::new(0.0, 0.0, 1.0)] {
        let f = f.normalize();
        let d = monodomain_tensor(&cm, &f).unwrap();
        let eig = SymmetricEigen::new(d);
        let (mut imax, mut vmax) = (0, f64::NEG_INFINITY);
        for k in 0..3 {
            if eig.eigenvalues[k] > vmax {
                (imax, vmax) = (k, eig.eigenvalues[k]);
            }
        }
        let along = eig.eigenvectors.column(imax);
        assert!((along.dot(&f).abs() - 1.0).abs() < 1e-10);
        assert_abs_diff_eq!(vmax, 0.01 * 3.0 * 3.0 / 6.0, epsilon = 1e-14);
        let mut rest: Vec<f64> = (0..3).filter(|&k| k != imax).map(|k| eig.eigenvalues[k]).collect();
        rest.sort_by(f64::total_cmp);
        for v in rest {
            assert_abs_diff_eq!(v, 0.01 * 0.3 * 1.2 / 1.5, epsilon = 1e-14);
        }
    }
}

#[test]
fn isotropic_conductivity_gives_scaled_identity() {
    let cm = ConductivityModel { sigma_il: 2.0, sigma_it: 2.0, sigma_el: 5.0, sigma_et: 5.0, alpha: 0.2 };
    let f = Point3::new(0.3, -0.4, 0.866).normalize();
    let d = tensor_from_fibers(&cm, &f).unwrap();
    let c = 100.0 * 0.04 * 10.0 / 7.0;
    assert!((d - Matrix3::identity() * c).abs().max() < 1e-12);
}

#[test]
fn corner_source_on_isotropic_cube() {
    let d = Matrix3::identity() * 0.25;
    let solver = homogeneous(cube_mesh(12, 10.0), d);
    let tau = solver.solve(&[MyoSource::Vertex { vertex: 0, time: 0.0 }]).unwrap();
    let diag = metric_distance(&d, &Point3::zeros(), &Point3::new(10.0, 10.0, 10.0));
    assert!(linf_error(&solver, &tau, &d, &Point3::zeros()) < 0.05 * diag);
    // straight edges of the lattice are exact
    assert_abs_diff_eq!(tau[12], 20.0, epsilon = 1e-9);
}

#[test]
fn anisotropic_slab_follows_the_metric() {
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 0.01, 0.01));
    let solver = homogeneous(cube_mesh(12, 10.0), d);
    let tau = solver.solve(&[MyoSource::Vertex { vertex: 0, time: 0.0 }]).unwrap();
    let far = metric_distance(&d, &Point3::zeros(), &Point3::new(10.0, 10.0, 10.0));
    assert!(linf_error(&solver, &tau, &d, &Point3::zeros()) < 0.07 * far);
}

#[test]
fn error_shrinks_under_refinement() {
    let d = Matrix3::identity();
    let err = |n| {
        let solver = homogeneous(cube_mesh(n, 10.0), d);
        let tau = solver.solve(&[MyoSource::Vertex { vertex: 0, time: 0.0 }]).unwrap();
        linf_error(&solver, &tau, &d, &Point3::zeros())
    };
    let (coarse, fine) = (err(6), err(12));
    assert!(fine < coarse, "{fine} !< {coarse}");
}

#[test]
fn off_node_source_seeds_its_element_exactly() {
    let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 0.2, 0.5));
    let solver = homogeneous(cube_mesh(5, 5.0), d);
    let p = Point3::new(2.3, 1.4, 3.7);
    let (tet, _) = solver.locate(&p).unwrap();
    let tau = solver.solve(&[MyoSource::Point { point: p, tet, time: 4.0 }]).unwrap();
    for &v in &solver.mesh().tets[tet] {
        assert_abs_diff_eq!(tau[v], 4.0 + metric_distance(&d, &p, &solver.mesh().vertices[v]), epsilon = 1e-12);
    }
    assert!(tau.iter().all(|t| t.is_finite() && *t >= 4.0));
}

#[test]
fn two_sources_take_the_pointwise_minimum() {
    let d = Matrix3::identity();
    let solver = homogeneous(cube_mesh(8, 8.0), d);
    let n = solver.mesh().vertices.len();
    let a = MyoSource::Vertex { vertex: 0, time: 0.0 };
    let b = MyoSource::Vertex { vertex: n - 1, time: 3.0 };
    let ta = solver.solve(&[a]).unwrap();
    let tb = solver.solve(&[b]).unwrap();
    let both = solver.solve(&[a, b]).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let m = ta[k].min(tb[k]);
        assert!(both[k] <= m + 1e-9);
        worst = worst.max(m - both[k]);
    }
    // fronts meet along a surface; only elements straddling it can differ
    assert!(worst < 0.05 * 8.0 * 3f64.sqrt(), "largest undercut {worst}");
}

/// Chain of nodes with unit spacing from `from` towards `to`, as a tree with
/// the first point as root and the last one as its only PMJ.
fn chain(from: Point3, to: Point3, steps: usize) -> PurkinjeTree {
    let nodes: Vec<[f64; 3]> = (0..=steps)
        .map(|k| {
            let p = from + (to - from) * (k as f64 / steps as f64);
            [p.x, p.y, p.z]
        })
        .collect();
    let edges: Vec<[usize; 2]> = (0..steps).map(|k| [k, k + 1]).collect();
    let lengths = vec![(to - from).norm() / steps as f64; steps];
    PurkinjeTree { uv: vec![[0.0, 0.0]; steps + 1], nodes, edges, lengths, root: 0, pmjs: vec![steps], branch_points: vec![] }
}

/// Comb: a spine from `from` to `to` with a short tooth ending in a PMJ at
/// each interior spine node.
fn comb(from: Point3, to: Point3, teeth: usize, tooth: Point3) -> PurkinjeTree {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for k in 0..=teeth + 1 {
        let p = from + (to - from) * (k as f64 / (teeth + 1) as f64);
        nodes.push([p.x, p.y, p.z]);
        if k > 0 {
            edges.push([k - 1, k]);
        }
    }
    let mut pmjs = vec![teeth + 1];
    for k in 1..=teeth {
        let p = Point3::from(nodes[k]) + tooth;
        nodes.push([p.x, p.y, p.z]);
        edges.push([k, nodes.len() - 1]);
        pmjs.push(nodes.len() - 1);
    }
    let lengths = edges.iter().map(|&[a, b]| (Point3::from(nodes[a]) - Point3::from(nodes[b])).norm()).collect();
    let n = nodes.len();
    PurkinjeTree { uv: vec![[0.0, 0.0]; n], nodes, edges, lengths, root: 0, pmjs, branch_points: vec![] }
}

#[test]
fn very_slow_myocardium_leaves_the_tree_alone() {
    let cm = ConductivityModel { alpha: 1e-4, ..ConductivityModel::default() };
    let solver = MyocardiumSolver::new(cube_mesh(6, 12.0), &cm).unwrap();
    let tree = comb(Point3::new(1.0, 1.0, 1.0), Point3::new(11.0, 11.0, 1.0), 5, Point3::new(0.0, 0.0, 2.0));
    let cfg = CouplingConfig::default();
    let out = solve_coupled(&solver, &[(&tree, 0.0)], &cfg).unwrap();
    let pure = solve_tree(&tree, cfg.cv, &[(0, 0.0)]);
    for (a, b) in out.field.tau_tree[0].iter().zip(&pure) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
    }
    assert!(out.converged && out.sweeps <= 3);
}

#[test]
fn delayed_tree_is_reached_antidromically() {
    let cm = ConductivityModel::default();
    let solver = MyocardiumSolver::new(cube_mesh(10, 20.0), &cm).unwrap();
    let early = chain(Point3::new(2.0, 2.0, 2.0), Point3::new(18.0, 2.0, 2.0), 16);
    let late = comb(Point3::new(18.0, 18.0, 18.0), Point3::new(2.0, 3.0, 4.0), 6, Point3::new(0.0, -1.0, 0.0));
    let [t_late, t_early] = root_times_from_delay(-200.0);
    assert_eq!(t_early, 0.0);
    let cfg = CouplingConfig::default();
    let s = CoupledSolver::new(&solver, vec![(late.clone(), t_late), (early, t_early)], cfg).unwrap();
    let out = s.solve().unwrap();
    assert!(out.converged);
    let orthodromic = solve_tree(&late, cfg.cv, &[(0, t_late)]);
    let mut strictly = 0;
    for &p in &late.pmjs {
        let t = out.field.tau_tree[0][p];
        assert!(t <= orthodromic[p] + 1e-9);
        if t < orthodromic[p] - 1e-6 {
            strictly += 1;
        }
    }
    assert!(strictly >= 1);
    // the late root itself fires before its scheduled time
    assert!(out.field.tau_tree[0][0] < t_late);
}

#[test]
fn coupled_sweeps_never_increase_times() {
    let solver = MyocardiumSolver::new(cube_mesh(8, 16.0), &ConductivityModel::default()).unwrap();
    let a = comb(Point3::new(1.0, 1.0, 1.0), Point3::new(15.0, 1.0, 15.0), 6, Point3::new(0.0, 1.5, 0.0));
    let b = comb(Point3::new(15.0, 15.0, 1.0), Point3::new(1.0, 15.0, 15.0), 6, Point3::new(0.0, -1.5, 0.0));
    let s = CoupledSolver::new(&solver, vec![(a, 40.0), (b, 0.0)], CouplingConfig::default()).unwrap();
    let mut prev = s.sweep(&s.unactivated()).unwrap();
    for _ in 0..6 {
        let next = s.sweep(&prev).unwrap();
        for (x, y) in prev.tau_myo.iter().zip(&next.tau_myo) {
            assert!(y <= x);
        }
        for (tx, ty) in prev.tau_tree.iter().zip(&next.tau_tree) {
            for (x, y) in tx.iter().zip(ty) {
                assert!(y <= x);
            }
        }
        prev = next;
    }
}

#[test]
fn pmj_outside_the_mesh_is_reported() {
    let solver = MyocardiumSolver::new(cube_mesh(4, 4.0), &ConductivityModel::default()).unwrap();
    let tree = chain(Point3::new(1.0, 1.0, 1.0), Point3::new(1.0, 1.0, 30.0), 5);
    let err = CoupledSolver::new(&solver, vec![(tree, 0.0)], CouplingConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Locate(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_spd_tensor_on_small_cube(a in 0.2f64..2.0, b in 0.2f64..2.0, c in 0.2f64..2.0, rx in -1.0f64..1.0, ry in -1.0f64..1.0) {
        let rot = nalgebra::Rotation3::from_euler_angles(rx, ry, 0.3).into_inner();
        let d = rot * Matrix3::from_diagonal(&nalgebra::Vector3::new(a, b, c)) * rot.transpose();
        let solver = homogeneous(cube_mesh(8, 8.0), d);
        let centre = solver.mesh().vertices.len() / 2;
        let src = solver.mesh().vertices[centre];
        let tau = solver.solve(&[MyoSource::Vertex { vertex: centre, time: 0.0 }]).unwrap();
        let far = solver.mesh().vertices.iter().map(|x| metric_distance(&d, &src, x)).fold(0.0, f64::max);
        // first order near the point source on a coarse lattice
        prop_assert!(linf_error(&solver, &tau, &d, &src) < 0.25 * far);
        // discrete solution never beats the exact travel time by more than rounding
        for (x, t) in solver.mesh().vertices.iter().zip(&tau) {
            prop_assert!(*t >= metric_distance(&d, &src, x) - 1e-9);
        }
    }
}
