use std::f64::consts::PI;
use std::sync::Arc;

use fastfem::element::ReferenceElement;
use fastfem::grid::{Mesh1D, SymBand, TensorField, TensorMesh};
use fastfem::solver::{Algorithm, SolveOptions, Solver};
use fastfem::spectral::{self, SecularFunction, SpectralBasis1D};
use fastfem::transform::FnPlan;
use fastfem::trig::{self, TransformKind, TransformPlan};
use proptest::prelude::*;

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn plan_and_vector() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..24, 1usize..=7).prop_flat_map(|(k, n)| (Just(k), Just(n), vec_of(n * k - 1)))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fn_round_trip((k, n, w) in plan_and_vector()) {
        let plan = FnPlan::new(k, n).unwrap();
        let mut ws = plan.workspace();
        let mut x = vec![0.0; w.len()];
        let mut back = vec![0.0; w.len()];
        plan.inverse(&w, &mut x, &mut ws).unwrap();
        plan.direct(&x, &mut back, &mut ws).unwrap();
        let err = w.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-12 * max_abs(&w).max(1e-300));
    }

    #[test]
    fn mass_energy_is_diagonal((k, n, w) in plan_and_vector()) {
        // xᵀ𝒞x = Σ ‖s‖² w² for x = S w.
        let plan = FnPlan::new(k, n).unwrap();
        let mut ws = plan.workspace();
        let mut x = vec![0.0; w.len()];
        plan.inverse(&w, &mut x, &mut ws).unwrap();
        let mut cx = vec![0.0; x.len()];
        plan.mass().apply(&x, &mut cx);
        let lhs: f64 = x.iter().zip(&cx).map(|(a, b)| a * b).sum();
        let rhs: f64 = plan.norms_sq().iter().zip(&w).map(|(s, c)| s * c * c).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1e-300));
    }

    #[test]
    fn stiffness_is_diagonalized((k, n, w) in plan_and_vector()) {
        // 𝒜 S w = 𝒞 S Λ w.
        let plan = FnPlan::new(k, n).unwrap();
        let mesh = Mesh1D::new(k, n, 1.0).unwrap();
        let mut ws = plan.workspace();
        let lw: Vec<f64> = w.iter().zip(plan.eigenvalues()).map(|(a, l)| a * l).collect();
        let (mut x, mut y) = (vec![0.0; w.len()], vec![0.0; w.len()]);
        plan.inverse(&w, &mut x, &mut ws).unwrap();
        plan.inverse(&lw, &mut y, &mut ws).unwrap();
        let (mut ax, mut cy) = (vec![0.0; w.len()], vec![0.0; w.len()]);
        mesh.scaled_stiffness().apply(&x, &mut ax);
        plan.mass().apply(&y, &mut cy);
        let err = ax.iter().zip(&cy).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-11 * max_abs(&ax).max(1e-300));
    }

    #[test]
    fn secular_roots_interlace_poles(n in 1usize..=9, theta in -0.999f64..0.999) {
        let el = ReferenceElement::shared(n).unwrap();
        let f = SecularFunction::new(&el, theta);
        let roots = f.solve_family().unwrap();
        prop_assert_eq!(roots.len(), n);
        let poles = &el.interior.values;
        for (l, r) in roots.iter().enumerate() {
            prop_assert!(*r > 0.0);
            if l > 0 { prop_assert!(*r > poles[l - 1]); }
            if l + 1 < n { prop_assert!(*r < poles[l]); }
        }
    }

    #[test]
    fn fast_transforms_match_sums(k in 2usize..80, seed in vec_of(80)) {
        for kind in TransformKind::ALL {
            let plan = TransformPlan::new(kind, k).unwrap();
            let len = plan.len();
            let input = &seed[..len];
            let mut fast = vec![0.0; len];
            let mut slow = vec![0.0; len];
            plan.execute(input, &mut fast, &mut plan.make_scratch()).unwrap();
            trig::naive(kind, k, input, &mut slow);
            let err = fast.iter().zip(&slow).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err <= 1e-12 * max_abs(&slow).max(1.0), "{:?} K={}", kind, k);
        }
    }

    #[test]
    fn banded_cholesky_solves(k in 2usize..12, n in 1usize..=5, shift in 0.0f64..50.0, seed in vec_of(60)) {
        let mesh = Mesh1D::new(k, n, 1.0).unwrap();
        let factor = mesh.shifted_factor(shift).unwrap();
        let s = 4.0 / (mesh.h() * mesh.h());
        let m = SymBand::combine(s, &mesh.scaled_stiffness(), shift, &mesh.scaled_mass());
        let x: Vec<f64> = seed.iter().cycle().take(mesh.dim()).copied().collect();
        let mut b = vec![0.0; x.len()];
        m.apply(&x, &mut b);
        factor.solve_in_place(&mut b);
        let err = x.iter().zip(&b).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        prop_assert!(err <= 1e-10 * max_abs(&x).max(1e-300));
    }

    #[test]
    fn solver_is_linear(k in 2usize..6, n in 1usize..=3, a in -2.0f64..2.0, f in vec_of(324), g in vec_of(324)) {
        let mesh = TensorMesh::uniform(2, k, n, 1.0).unwrap();
        let solver = Solver::new(mesh.clone(), 0.5).unwrap();
        let len = mesh.unknowns();
        let mk = |v: &[f64]| TensorField::from_vec(&mesh.shape(), v[..len].to_vec()).unwrap();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + y).collect();
        let opts = SolveOptions::default();
        let uf = solver.solve(mk(&f), &opts).unwrap();
        let ug = solver.solve(mk(&g), &opts).unwrap();
        let uc = solver.solve(mk(&combo), &opts).unwrap();
        let scale = uf.max_abs() * a.abs() + ug.max_abs();
        for i in 0..len {
            prop_assert!((a * uf.data()[i] + ug.data()[i] - uc.data()[i]).abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn transposed_data_gives_transposed_solution(k in 2usize..6, n in 1usize..=3, f in vec_of(324)) {
        let mesh = TensorMesh::uniform(2, k, n, 1.0).unwrap();
        let solver = Solver::new(mesh.clone(), 0.0).unwrap();
        let d = mesh.axes()[0].dim();
        let rhs = TensorField::from_vec(&mesh.shape(), f[..d * d].to_vec()).unwrap();
        let rhs_t = TensorField::from_fn(&mesh.shape(), |i| rhs.get(&[i[1], i[0]]));
        for algorithm in [Algorithm::Full, Algorithm::Partial] {
            let opts = SolveOptions::with_algorithm(algorithm);
            let u = solver.solve(rhs.clone(), &opts).unwrap();
            let ut = solver.solve(rhs_t.clone(), &opts).unwrap();
            for i in 0..d {
                for j in 0..d {
                    prop_assert!((u.get(&[i, j]) - ut.get(&[j, i])).abs() <= 1e-12 * u.max_abs());
                }
            }
        }
    }

    #[test]
    fn theta_parts_are_consistent(k_el in 2usize..5000, frac in 0.0f64..1.0) {
        let k = 1 + ((k_el - 2) as f64 * frac) as usize;
        let (t, m, p) = spectral::theta_parts(k, k_el);
        prop_assert!((t - (PI * k as f64 / k_el as f64).cos()).abs() < 1e-15);
        prop_assert!((m + p - 2.0).abs() < 1e-15);
        prop_assert!(m > 0.0 && p > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cache_round_trip_is_bit_identical(k in 2usize..40, n in 1usize..=6) {
        let dir = tempfile::tempdir().unwrap();
        let built = SpectralBasis1D::new(k, n).unwrap();
        let path = spectral::cache_path(dir.path(), k, n);
        spectral::write_cache(&path, &built).unwrap();
        let loaded = spectral::read_cache(&path, k, n).unwrap();
        let a = FnPlan::from_basis(Arc::new(built)).unwrap();
        let b = FnPlan::from_basis(Arc::new(loaded)).unwrap();
        let x: Vec<f64> = (0..a.dim()).map(|i| (i as f64 * 0.3).sin()).collect();
        let (mut wa, mut wb) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        a.direct(&x, &mut wa, &mut a.workspace()).unwrap();
        b.direct(&x, &mut wb, &mut b.workspace()).unwrap();
        prop_assert!(wa.iter().zip(&wb).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
