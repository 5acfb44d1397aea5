use hpbem::assembly::{assemble_hypersingular, StabilizationConfig};
use hpbem::mesh::{generate_screen, MeshHierarchy};
use hpbem::precond::{build_b3, build_diagonal, ReferenceBlockCache};
use hpbem::solvers::{dense_bounds, lanczos_bounds, pcg, SpectralOptions};
use hpbem::space::build_dof_map;
use nalgebra::DVector;

#[test]
fn lanczos_matches_dense_on_an_assembled_system() {
    let h = MeshHierarchy::new(generate_screen(6));
    let mesh = h.finest();
    let dofs = build_dof_map(mesh, 4).unwrap();
    assert!(dofs.len() > 500);
    let op = assemble_hypersingular(mesh, &dofs, StabilizationConfig::NONE).unwrap();
    let diag = build_diagonal(&op.matrix).unwrap();
    let b3 = build_b3(&op, &h, &dofs, &mut ReferenceBlockCache::default()).unwrap();
    let opts = SpectralOptions::default();
    for b in [None, Some(&diag), Some(&b3)] {
        let d = dense_bounds(&op.matrix, b).unwrap();
        let l = lanczos_bounds(&op.matrix, b, &opts).unwrap();
        let rel = (l.kappa - d.kappa).abs() / d.kappa;
        assert!(rel <= 0.01, "{:?}: lanczos {} dense {}", b.map(|b| &b.name), l.kappa, d.kappa);
    }
}

#[test]
fn pcg_solves_the_screen_problem() {
    let mesh = generate_screen(3);
    let dofs = build_dof_map(&mesh, 3).unwrap();
    let op = assemble_hypersingular(&mesh, &dofs, StabilizationConfig::NONE).unwrap();
    let x = DVector::from_fn(dofs.len(), |i, _| (i as f64 * 0.37).sin());
    let rhs = &op.matrix * &x;
    let r = pcg(&op.matrix, Some(&build_diagonal(&op.matrix).unwrap()), &rhs, 1e-12, 2000).unwrap();
    assert!(r.converged);
    assert!((&r.x - &x).norm() <= 1e-8 * x.norm());
}
