use nora_core::budget::BudgetSpec;
use nora_core::linalg::numerical_rank;
use nora_core::rng::{gaussian_matrix, seeded};
use nora_core::training::check_adapter_gradients;
use nora_core::{jacobi_svd, Adapter, LoraAdapter, Matrix, NoraAdapter};
use proptest::prelude::*;

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-30)
}

fn randomize_inner(ad: &mut impl Adapter, seed: u64) {
    let mut rng = seeded(seed);
    for p in ad.trainable_mut() {
        let (r, c) = p.shape();
        *p = gaussian_matrix(&mut rng, r, c, 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs(m in 1usize..20, n in 1usize..20, seed in any::<u64>()) {
        let a = gaussian_matrix(&mut seeded(seed), m, n, 1.0);
        let f = jacobi_svd(&a).unwrap();
        prop_assert!(rel_err(&a, &f.reconstruct()) < 1e-9);
        let (du, dv) = f.orthonormality_defect();
        prop_assert!(du < 1e-10 && dv < 1e-10);
        prop_assert!(f.sigma().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_is_bit_deterministic(m in 1usize..12, n in 1usize..12, seed in any::<u64>()) {
        let a = gaussian_matrix(&mut seeded(seed), m, n, 1.0);
        let (f, g) = (jacobi_svd(&a).unwrap(), jacobi_svd(&a).unwrap());
        prop_assert!(f.u().bit_eq(g.u()) && f.vt().bit_eq(g.vt()));
        prop_assert!(f.sigma().iter().zip(g.sigma()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn matmul_associative(a in 1usize..8, b in 1usize..8, c in 1usize..8, d in 1usize..8, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let x = gaussian_matrix(&mut rng, a, b, 1.0);
        let y = gaussian_matrix(&mut rng, b, c, 1.0);
        let z = gaussian_matrix(&mut rng, c, d, 1.0);
        let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
        let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
        prop_assert!(rel_err(&left, &right) < 1e-9 || left.frobenius_norm() < 1e-12);
    }

    #[test]
    fn nora_init_is_best_low_rank(m in 2usize..16, n in 2usize..16, seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let w = gaussian_matrix(&mut seeded(seed), m, n, 1.0);
        let r_out = 1 + (a * m.min(n) as f64) as usize % m.min(n);
        let r_in = 1 + (b * r_out as f64) as usize % r_out;
        let ad = NoraAdapter::from_weight(&w, r_out, r_in, 1.0).unwrap();
        let oracle = jacobi_svd(&w).unwrap().truncate(r_in).unwrap().reconstruct();
        prop_assert!(ad.delta().sub(&oracle).unwrap().frobenius_norm() < 1e-9);
        prop_assert!(numerical_rank(&ad.delta(), 1e-8).unwrap() <= r_in);
    }

    #[test]
    fn nora_delta_rank_bounded_after_perturbation(seed in any::<u64>(), r_in in 1usize..4) {
        let w = gaussian_matrix(&mut seeded(seed), 12, 10, 1.0);
        let mut ad = NoraAdapter::from_weight(&w, 5, r_in, 1.0).unwrap();
        randomize_inner(&mut ad, seed ^ 1);
        prop_assert!(numerical_rank(&ad.delta(), 1e-8).unwrap() <= r_in);
    }

    #[test]
    fn merge_matches_adapted_forward(seed in any::<u64>(), lora in any::<bool>()) {
        let mut rng = seeded(seed);
        let w = gaussian_matrix(&mut rng, 9, 7, 1.0);
        let x = gaussian_matrix(&mut rng, 7, 5, 1.0);
        let (h, merged) = if lora {
            let mut ad = LoraAdapter::init(9, 7, 3, seed, 0.5).unwrap();
            randomize_inner(&mut ad, seed ^ 2);
            (ad.forward(&w, &x).unwrap().0, ad.merge(&w).unwrap())
        } else {
            let mut ad = NoraAdapter::from_weight(&w, 4, 2, 0.5).unwrap();
            randomize_inner(&mut ad, seed ^ 2);
            (ad.forward(&w, &x).unwrap().0, ad.merge(&w).unwrap())
        };
        prop_assert!(merged.matmul(&x).unwrap().sub(&h).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let w = gaussian_matrix(&mut rng, 6, 5, 1.0);
        let x = gaussian_matrix(&mut rng, 5, 3, 1.0);
        let t = gaussian_matrix(&mut rng, 6, 3, 1.0);
        let mut nora = NoraAdapter::from_weight(&w, 3, 2, 1.0).unwrap();
        randomize_inner(&mut nora, seed ^ 3);
        prop_assert!(check_adapter_gradients(&nora, &w, &x, &t, 1e-5).unwrap().worst() < 1e-5);
        let mut lora = LoraAdapter::init(6, 5, 2, seed, 1.0).unwrap();
        randomize_inner(&mut lora, seed ^ 4);
        prop_assert!(check_adapter_gradients(&lora, &w, &x, &t, 1e-5).unwrap().worst() < 1e-5);
    }

    #[test]
    fn budget_identities(l in 1u64..100, q in 1u64..8, n in 1u64..8192, x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
        let r = 1 + (x * n as f64) as u64 % n;
        let r_out = 1 + (y * n as f64) as u64 % n;
        let r_in = 1 + (z * r_out as f64) as u64 % r_out;
        let s = BudgetSpec::new(l, q, n, r, r_out, r_in).unwrap();
        prop_assert_eq!(s.lora_params(), l * q * r * 2 * n);
        prop_assert_eq!(s.nora_params(), 2 * l * q * r_out * r_in);
        let (num, den) = s.ratio_fraction();
        prop_assert_eq!(s.nora_params() / den * num, s.lora_params());
        let with_inner = BudgetSpec::new(l, q, n, r_in, r_out, r_in).unwrap();
        prop_assert_eq!(with_inner.efficiency_ratio(), n as f64 / r_out as f64);
    }
}

#[test]
fn init_energy_non_decreasing_in_inner_rank() {
    for seed in 0..5 {
        let w = gaussian_matrix(&mut seeded(seed), 14, 11, 1.0);
        let energies: Vec<f64> = (1..=8)
            .map(|r_in| NoraAdapter::from_weight(&w, 8, r_in, 1.0).unwrap().delta().frobenius_norm())
            .collect();
        assert!(energies.windows(2).all(|e| e[0] <= e[1]), "{energies:?}");
    }
}

#[test]
fn merge_at_init() {
    let w = gaussian_matrix(&mut seeded(5), 10, 8, 1.0);
    let lora = LoraAdapter::init(10, 8, 2, 1, 1.0).unwrap();
    assert!(lora.merge(&w).unwrap().bit_eq(&w));
    let nora = NoraAdapter::from_weight(&w, 5, 2, 0.5).unwrap();
    let oracle = w
        .add(&jacobi_svd(&w).unwrap().truncate(2).unwrap().reconstruct().scale(0.5))
        .unwrap();
    assert!(nora.merge(&w).unwrap().sub(&oracle).unwrap().frobenius_norm() < 1e-9);
}
