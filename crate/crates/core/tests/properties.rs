use gepsdp::generators::gnp;
use gepsdp::graph_io::{laplacian, parse_edge_list, parse_matrix_market, Laplacian};
use gepsdp::linalg::{center_apply, project_nsd, project_psd, sym_eig, thin_svd};
use gepsdp::variety::{
    is_singular, project_onto_variety, project_tangent, random_matrix, random_point, retract, round_to_singular,
    SingularPoint,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    random_matrix(n, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centering_is_idempotent(n in 2usize..30, r in 1usize..6, seed in any::<u64>()) {
        let x = gauss(n, r, seed);
        let c = center_apply(&x);
        prop_assert!((center_apply(&c) - &c).amax() < 1e-12);
        prop_assert!(c.row_sum().amax() < 1e-12 * (1.0 + x.amax()) * n as f64);
    }

    #[test]
    fn cone_projections_split_symmetric_matrix(k in 1usize..8, seed in any::<u64>()) {
        let a = gauss(k, k, seed);
        let m = &a + a.transpose();
        let p = project_psd(&m).unwrap();
        let q = project_nsd(&m).unwrap();
        let split_err = (&p + &q - &m).amax();
        prop_assert!(split_err < 1e-10 * (1.0 + m.amax()), "split error {split_err:e}, amax {}", m.amax());
        prop_assert!(p.dot(&q).abs() < 1e-10 * (1.0 + m.norm_squared()));
        prop_assert!(sym_eig(&p).0.min() > -1e-10 * (1.0 + m.amax()));
        prop_assert!(sym_eig(&q).0.max() < 1e-10 * (1.0 + m.amax()));
    }

    #[test]
    fn thin_svd_reconstructs(n in 2usize..40, r in 1usize..8, seed in any::<u64>()) {
        let x = gauss(n, r, seed);
        let svd = thin_svd(&x).unwrap();
        prop_assert!((svd.reconstruct() - &x).amax() < 1e-11 * (1.0 + x.amax()));
        prop_assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tangent_projection_is_idempotent(n in 4usize..30, r in 2usize..6, seed in any::<u64>()) {
        prop_assume!(r < n);
        let p = random_point::<f64>(n, r, seed).unwrap();
        let c = gauss(n, r, seed ^ 0xa5);
        let h = project_tangent(&p, &c).unwrap();
        let hh = project_tangent(&p, h.matrix()).unwrap();
        prop_assert!((hh.matrix() - h.matrix()).amax() < 1e-10);
        prop_assert!(h.matrix().row_sum().amax() < 1e-10);
    }

    #[test]
    fn metric_projection_is_idempotent(n in 4usize..30, r in 2usize..6, seed in any::<u64>()) {
        let y = gauss(n, r, seed);
        if let Ok(p) = project_onto_variety(&y) {
            let (row, col) = p.residuals();
            prop_assert!(row < 1e-10 && col < 1e-10);
            let q = project_onto_variety(p.matrix()).unwrap();
            prop_assert!((q.matrix() - p.matrix()).amax() < 1e-9);
        }
    }

    #[test]
    fn retraction_stays_feasible(n in 4usize..30, r in 2usize..6, scale in 0.0f64..2.0, seed in any::<u64>()) {
        prop_assume!(r < n);
        let p = random_point::<f64>(n, r, seed).unwrap();
        let h = project_tangent(&p, &gauss(n, r, seed ^ 7)).unwrap().into_matrix() * scale;
        if let Ok(out) = retract(&p, &h, 2.0, 30) {
            let (row, col) = out.point.residuals();
            prop_assert!(row < 1e-10 && col < 1e-10);
        }
    }

    #[test]
    fn rounding_stays_close(half in 2usize..15, r in 2usize..5, t in 0.0f64..0.3, seed in any::<u64>()) {
        let n = 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signs: Vec<i8> = (0..n).map(|i| if i < half { 1 } else { -1 }).collect();
        signs.shuffle(&mut rng);
        let a = SingularPoint::new(signs).unwrap();
        let mut h = random_matrix::<f64, _>(n, r, &mut rng);
        h.column_mut(0).fill(0.0);
        let y = a.factor::<f64>(r) + h * t;
        if let Ok(p) = project_onto_variety(&y) {
            let s = p.spectral_norm();
            let delta = 1.0 - s * s / n as f64;
            prop_assert!(is_singular(&p, delta.max(0.0) + 1e-12));
            if let Some(b) = round_to_singular(&p) {
                let f = b.factor::<f64>(r);
                let gap = (&f * f.transpose() - p.matrix() * p.matrix().transpose()).norm();
                prop_assert!(gap <= 2.0 * delta.max(0.0).sqrt() * n as f64 + 1e-9);
            }
        }
    }

    #[test]
    fn laplacian_quadratic_form_is_cut(n in 2usize..25, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = gnp(n, p, seed);
        let l: Laplacian<f64> = laplacian(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| if rand::Rng::gen_bool(&mut rng, 0.5) { 1.0 } else { -1.0 }).collect();
        let x = nalgebra::DVector::from_vec(v.clone());
        let cut = g.edges().iter().filter(|e| v[e.i] != v[e.j]).map(|e| e.w).sum::<f64>();
        prop_assert!((x.dot(&l.apply_vec(&x).unwrap()) - 4.0 * cut).abs() < 1e-9);
    }

    #[test]
    fn graph_text_round_trips(n in 2usize..25, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = gnp(n, p, seed);
        let a = parse_edge_list(&g.to_edge_list()).unwrap();
        let b = parse_matrix_market(&g.to_matrix_market()).unwrap();
        prop_assert_eq!(a.edges(), g.edges());
        prop_assert_eq!(b.edges(), g.edges());
        prop_assert_eq!(a.n(), n);
    }
}
