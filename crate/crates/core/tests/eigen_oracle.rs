use nalgebra::{DMatrix, SymmetricEigen};
use qruler_core::lattice::{build_mode_basis, RulerConfig};

/// Free-chain stiffness matrix divided by the mass: open ends, no zero mode removal.
fn dynamical_matrix(n: usize, omega_r2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let bonds = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            bonds * omega_r2
        } else if i.abs_diff(j) == 1 {
            -omega_r2
        } else {
            0.0
        }
    })
}

#[test]
#[allow(clippy::needless_range_loop)]
fn spectrum_and_modes_match_dense_eigensolver() {
    let n = 41;
    let cfg = RulerConfig { m_r0: 1.0, k_r0: 1.0, s: 1.0, ..RulerConfig::dimensionless(n, 1.0) };
    let basis = build_mode_basis(&cfg).unwrap();
    let w2 = basis.stiffness() / basis.mass();
    let eig = SymmetricEigen::new(dynamical_matrix(n, w2));

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // Lowest eigenvalue is the centre-of-mass mode; project it out.
    assert!(eig.eigenvalues[order[0]].abs() < 1e-12);
    let com = eig.eigenvectors.column(order[0]);
    let flat = 1.0 / (n as f64).sqrt();
    assert!(com.iter().all(|&v| (v.abs() - flat).abs() < 1e-10));

    for alpha in 1..n {
        let k = order[alpha];
        let omega = eig.eigenvalues[k].sqrt();
        assert!((omega - basis.omega(alpha)).abs() < 1e-10, "alpha {alpha}");
        let v = eig.eigenvectors.column(k);
        let overlap: f64 = v.iter().zip(basis.u_row(alpha)).map(|(a, b)| a * b).sum();
        assert!((overlap.abs() - 1.0).abs() < 1e-10, "alpha {alpha}: overlap {overlap}");
        let sign = overlap.signum();
        for (a, b) in v.iter().zip(basis.u_row(alpha)) {
            assert!((sign * a - b).abs() < 1e-10);
        }
    }
}
