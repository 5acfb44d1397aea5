mod common;

use common::{disguised_hexagon, rel_diff};
use hpbem::assembly::{assemble_hypersingular, QuadratureOrders, StabilizationConfig};
use hpbem::mesh::{generate_screen, vertex_patches, MarkingStrategy, MeshHierarchy};
use hpbem::precond::{
    build_b2, build_b3, build_coarse_plus_patch, build_lmld, AdditiveSchwarzPreconditioner, Prolongation,
    ReferenceBlockCache,
};
use hpbem::solvers::{dense_bounds, pcg};
use hpbem::space::{build_dof_map, patch_dofs};
use nalgebra::DVector;

fn patch_subspace(b: &AdditiveSchwarzPreconditioner, idx: &[usize]) -> usize {
    b.subspaces
        .iter()
        .position(|s| matches!(&s.prolongation, Prolongation::Indices(i) if i == idx))
        .expect("patch subspace present")
}

#[test]
fn b3_local_solve_on_a_regular_hexagon_is_exact() {
    for (r, twist) in [(0.37, 0), (2.5, 1), (1.0, 2)] {
        let h = MeshHierarchy::new(disguised_hexagon(r, twist));
        let mesh = h.finest();
        for p in [2, 3, 4, 5] {
            let dofs = build_dof_map(mesh, p).unwrap();
            let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
            let mut cache = ReferenceBlockCache::new(QuadratureOrders::default());
            let b3 = build_b3(&op, &h, &dofs, &mut cache).unwrap();
            // the centre of the hexagon has id 3
            let patch = vertex_patches(mesh).unwrap().into_iter().find(|z| z.center == 3).unwrap();
            assert_eq!(patch.valence(), 6);
            let idx = patch_dofs(&dofs, &patch);
            let exact = op.restrict(&idx).try_inverse().unwrap();
            let local = b3.local_inverse(patch_subspace(&b3, &idx)).unwrap();
            let err = rel_diff(&local, &exact);
            assert!(err <= 1e-6, "r = {r}, twist = {twist}, p = {p}: {err:e}");
        }
    }
}

#[test]
fn b2_is_comparable_to_b() {
    let mut h = MeshHierarchy::new(generate_screen(2));
    h.refine_with(&MarkingStrategy::Uniform).unwrap();
    let mesh = h.finest();
    for p in [2, 3] {
        let dofs = build_dof_map(mesh, p).unwrap();
        let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
        let kb = dense_bounds(&op.matrix, Some(&build_coarse_plus_patch(&op, mesh, &dofs).unwrap())).unwrap().kappa;
        let kb2 = dense_bounds(&op.matrix, Some(&build_b2(&op, &h, &dofs).unwrap())).unwrap().kappa;
        assert!(kb2 <= 3.0 * kb && kb <= 3.0 * kb2, "p = {p}: B {kb}, B2 {kb2}");
    }
}

#[test]
fn lmld_is_robust_on_graded_p1_meshes() {
    let mut h = MeshHierarchy::new(generate_screen(3));
    let strategy = MarkingStrategy::CornerWeighted { theta: 0.25, features: hpbem::mesh::screen_corners() };
    let mut kappas = Vec::new();
    for _ in 0..3 {
        h.refine_with(&strategy).unwrap();
        let mesh = h.finest();
        let dofs = build_dof_map(mesh, 1).unwrap();
        let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
        let lmld = build_lmld(&h, &op, &dofs).unwrap();
        let none = dense_bounds(&op.matrix, None).unwrap().kappa;
        let k = dense_bounds(&op.matrix, Some(&lmld)).unwrap().kappa;
        assert!(k < none);
        kappas.push(k);
    }
    let (lo, hi) = kappas.iter().fold((f64::MAX, 0.0f64), |(a, b), &k| (a.min(k), b.max(k)));
    assert!(hi <= 2.0 * lo, "{kappas:?}");
}

#[test]
fn b3_accelerates_pcg() {
    let h = MeshHierarchy::new(generate_screen(3));
    let mesh = h.finest();
    let dofs = build_dof_map(mesh, 4).unwrap();
    let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
    let b3 = build_b3(&op, &h, &dofs, &mut ReferenceBlockCache::default()).unwrap();
    let rhs = DVector::from_fn(dofs.len(), |i, _| ((i * 7) % 11) as f64 - 5.0);
    let plain = pcg(&op.matrix, None, &rhs, 1e-8, 5000).unwrap();
    let pre = pcg(&op.matrix, Some(&b3), &rhs, 1e-8, 5000).unwrap();
    assert!(plain.converged && pre.converged);
    assert!(3 * pre.iterations < plain.iterations, "{} vs {}", pre.iterations, plain.iterations);
    let r = &rhs - &op.matrix * &pre.x;
    assert!(r.norm() <= 1e-7 * rhs.norm());
}

#[test]
fn b2_obeys_the_product_bound() {
    // kappa(B2) <= 4 kappa(LMLD on S^1) kappa(B)
    let mut h = MeshHierarchy::new(generate_screen(2));
    h.refine_with(&MarkingStrategy::Uniform).unwrap();
    h.refine_with(&MarkingStrategy::CornerWeighted { theta: 0.3, features: hpbem::mesh::screen_corners() }).unwrap();
    let mesh = h.finest();
    let dofs1 = build_dof_map(mesh, 1).unwrap();
    let op1 = assemble_hypersingular(mesh, &dofs1, StabilizationConfig::NONE).unwrap();
    let k_lmld = dense_bounds(&op1.matrix, Some(&build_lmld(&h, &op1, &dofs1).unwrap())).unwrap().kappa;
    for p in [2, 3] {
        let dofs = build_dof_map(mesh, p).unwrap();
        let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
        let kb = dense_bounds(&op.matrix, Some(&build_coarse_plus_patch(&op, mesh, &dofs).unwrap())).unwrap().kappa;
        let kb2 = dense_bounds(&op.matrix, Some(&build_b2(&op, &h, &dofs).unwrap())).unwrap().kappa;
        assert!(kb2 <= 4.0 * k_lmld * kb, "p = {p}: {kb2} vs {k_lmld} x {kb}");
    }
}
