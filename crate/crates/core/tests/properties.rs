use std::sync::Arc;

use proptest::prelude::*;

use wassheat::calculus::{eval_f, grad_w, hess_quadratic_form, laplacian_w};
use wassheat::coupling::{optimal_coupling, w2};
use wassheat::heat::{semigroup_closed_form, FlowParams};
use wassheat::io::{coefficients_to_json, parse_coefficients};
use wassheat::kernel::{BumpProduct, ExponentialKernel, KernelCombination, KernelRef, SymmetricKernel};
use wassheat::measure::{DiscreteMeasure, Measure};
use wassheat::product_measure::{integrate_pij, ProductMeasureSpec};
use wassheat::reconstruction::apply_ok;
use wassheat::rng::RngStream;
use wassheat::spectral::{hs_norm, lambda_sq_value, SpectralCoefficients, SpectralGrid};
use wassheat::C64;

const D: usize = 2;

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, D)
}

fn measure(max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((point(), 0.05..1.0f64), 1..=max_atoms).prop_map(|atoms| {
        let (p, w): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
        DiscreteMeasure::new(p, Some(w)).unwrap()
    })
}

fn frequencies(k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, D), k)
}

fn coefficients() -> impl Strategy<Value = SpectralCoefficients> {
    (1usize..=3, 1usize..=6, any::<u64>()).prop_map(|(k, n, seed)| {
        let mut rng = RngStream::new(seed, 0);
        let nodes = (0..n).map(|_| (0..k).map(|_| rng.normal_vec(D)).collect()).collect();
        let grid = Arc::new(SpectralGrid::new(k, D, nodes, (0..n).map(|_| 0.1 + rng.uniform()).collect()).unwrap());
        SpectralCoefficients::new()
            .with_degree(grid, (0..n).map(|_| C64::new(rng.normal(), rng.normal())).collect())
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn char_fn_bounded_and_hermitian(m in measure(6), xi in point()) {
        let a = m.char_fn(&xi).unwrap();
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        prop_assert!(a.norm() <= 1.0 + 1e-15);
        prop_assert!((m.char_fn(&neg).unwrap() - a.conj()).norm() <= 1e-15);
    }

    #[test]
    fn translation_keeps_weights(m in measure(6), v in point()) {
        let t = m.translate(&v).unwrap();
        prop_assert_eq!(t.weights(), m.weights());
    }

    #[test]
    fn smoothing_composes(m in measure(4), xi in point(), a in 0.0..0.5f64, b in 0.0..0.5f64) {
        let once = m.smooth(a + b).unwrap().char_fn(&xi).unwrap();
        let twice = m.smooth(a).unwrap().smooth_more(b).unwrap().char_fn(&xi).unwrap();
        prop_assert!((once - twice).norm() <= 1e-14);
    }

    #[test]
    fn rng_streams_reproduce(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn w2_symmetric_and_triangular(a in measure(4), b in measure(4), c in measure(4)) {
        let ab = w2(&a, &b).unwrap();
        prop_assert!((ab - w2(&b, &a).unwrap()).abs() <= 1e-10);
        prop_assert!(w2(&a, &c).unwrap() <= ab + w2(&b, &c).unwrap() + 1e-9);
        let (g, _) = optimal_coupling(&a, &b).unwrap();
        prop_assert!(g.marginal_error() <= 1e-12);
    }

    #[test]
    fn calculus_linear_in_kernel(m in measure(4), xa in frequencies(2), xb in frequencies(2), ca in -2.0..2.0f64, cb in -2.0..2.0f64) {
        let a: KernelRef = Arc::new(ExponentialKernel::new(xa).unwrap());
        let b: KernelRef = Arc::new(ExponentialKernel::new(xb).unwrap());
        let (ca, cb) = (C64::new(ca, 0.0), C64::new(cb, 0.5));
        let combo = KernelCombination::new(vec![(ca, a.clone()), (cb, b.clone())]).unwrap();
        let close = |x: C64, y: C64| (x - y).norm() <= 1e-12 * (1.0 + y.norm());
        prop_assert!(close(eval_f(&combo, &m).unwrap(), ca * eval_f(a.as_ref(), &m).unwrap() + cb * eval_f(b.as_ref(), &m).unwrap()));
        let lc = laplacian_w(&combo, &m, 0.3).unwrap();
        prop_assert!(close(lc, ca * laplacian_w(a.as_ref(), &m, 0.3).unwrap() + cb * laplacian_w(b.as_ref(), &m, 0.3).unwrap()));
        let x = m.atom(0);
        let g = grad_w(&combo, &m, x).unwrap();
        let (ga, gb) = (grad_w(a.as_ref(), &m, x).unwrap(), grad_w(b.as_ref(), &m, x).unwrap());
        for c in 0..D {
            prop_assert!(close(g[c], ca * ga[c] + cb * gb[c]));
        }
    }

    #[test]
    fn functional_ignores_atom_order(m in measure(5), xi in frequencies(3), seed in any::<u64>()) {
        let phi = ExponentialKernel::new(xi).unwrap();
        let mut idx: Vec<usize> = (0..m.len()).collect();
        let mut rng = RngStream::new(seed, 0);
        for i in (1..idx.len()).rev() {
            idx.swap(i, (rng.uniform() * (i + 1) as f64) as usize);
        }
        let shuffled = DiscreteMeasure::new(
            idx.iter().map(|&i| m.atom(i).to_vec()).collect(),
            Some(idx.iter().map(|&i| m.weight(i)).collect()),
        ).unwrap();
        let (a, b) = (eval_f(&phi, &m).unwrap(), eval_f(&phi, &shuffled).unwrap());
        prop_assert!((a - b).norm() <= 1e-15 * (1.0 + a.norm()) * 4.0);
    }

    #[test]
    fn hessian_form_symmetric(m in measure(4), centers in frequencies(2), seed in any::<u64>()) {
        let phi = BumpProduct::new(2, D, 2.0, Some(centers)).unwrap();
        let mut rng = RngStream::new(seed, 1);
        let z1: Vec<Vec<f64>> = (0..m.len()).map(|_| rng.normal_vec(D)).collect();
        let z2: Vec<Vec<f64>> = (0..m.len()).map(|_| rng.normal_vec(D)).collect();
        let a = hess_quadratic_form(&phi, &m, &z1, &z2).unwrap();
        let b = hess_quadratic_form(&phi, &m, &z2, &z1).unwrap();
        prop_assert!((a - b).norm() <= 1e-10);
    }

    #[test]
    fn eigenvalue_ordering(xi in frequencies(3), eps in 0.0..2.0f64) {
        let base = lambda_sq_value(&xi, 0.0);
        prop_assert!(base >= 0.0);
        prop_assert!(lambda_sq_value(&xi, eps) >= base);
    }

    #[test]
    fn hs_triangle_inequality(a in coefficients(), seed in any::<u64>(), s in 0.0..2.0f64) {
        let mut rng = RngStream::new(seed, 2);
        let b = a.map_nodes(|_, _, _| C64::new(rng.normal(), rng.normal()));
        let sum = a.add(&b).unwrap();
        prop_assert!(hs_norm(&sum, s) <= hs_norm(&a, s) + hs_norm(&b, s) + 1e-12);
    }

    #[test]
    fn semigroup_composes(a in coefficients(), beta in 0.2..1.5f64, eps in 0.0..0.5f64, t1 in 0.0..0.5f64, t2 in 0.0..0.5f64) {
        let p = FlowParams::new(beta, eps, 0.0).unwrap();
        let once = semigroup_closed_form(&a, &p.at(t1 + t2));
        let twice = semigroup_closed_form(&semigroup_closed_form(&a, &p.at(t1)), &p.at(t2));
        for ((_, x), (_, y)) in once.degrees().zip(twice.degrees()) {
            for (u, v) in x.values.iter().zip(&y.values) {
                // Rounding of exp(μt) grows with |μt|.
                prop_assert!((u - v).norm() <= 1e-12 * u.norm());
            }
        }
    }

    #[test]
    fn coefficient_files_round_trip(a in coefficients()) {
        prop_assert_eq!(parse_coefficients(&coefficients_to_json(&a)).unwrap(), a);
    }

    #[test]
    fn polarization_ignores_tuple_order(x in prop::collection::vec(point(), 3), xi in frequencies(3)) {
        let phi = ExponentialKernel::new(xi).unwrap();
        let f = |m: &DiscreteMeasure| eval_f(&phi, m).map(|v| v * 3.0);
        let base = apply_ok(&f, &x).unwrap();
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let rot: Vec<Vec<f64>> = vec![x[1].clone(), x[2].clone(), x[0].clone()];
        for y in [rev, rot] {
            prop_assert!((apply_ok(&f, &y).unwrap() - base).norm() <= 1e-13 * (1.0 + base.norm()));
        }
        let xr: Vec<&[f64]> = x.iter().map(|p| p.as_slice()).collect();
        prop_assert!((base - phi.value(&xr)).norm() <= 1e-9 * (1.0 + base.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn constant_integrand_has_lebesgue_mass(k in 1usize..=3, r in 0.5..2.0f64, seed in any::<u64>()) {
        let spec = ProductMeasureSpec::new(k, r, D, 64, seed).unwrap();
        let i: Vec<usize> = (0..k).collect();
        let e = integrate_pij(|_, _| Ok(C64::new(1.0, 0.0)), &i, &i, &spec).unwrap();
        prop_assert!((e.mean.re - spec.lebesgue_mass()).abs() <= 1e-12 * spec.lebesgue_mass());
        prop_assert!(e.stderr <= 1e-12 * spec.lebesgue_mass());
    }
}
