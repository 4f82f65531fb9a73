mod common;

use common::*;
use nalgebra::DVector;
use prefdens_core::basis::{basis_count, build_basis, design_matrix, ClusterStructure};
use prefdens_core::gaussian::{nw_update, Gaussian, GaussianStats};
use prefdens_core::mixture::{MixtureModel, PriorConfig, TypeLayout};
use prefdens_core::model_file::{ModelFile, Provenance};
use prefdens_core::projection::{ls_project, map_objective, map_project, normalize_log_weights, posterior_weights};
use prefdens_core::search::{neighbors, CandidateStructure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn basis_count_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_domain(&mut rng, 5, 4);
        let s = random_structure(&mut rng, d.num_variables());
        prop_assert_eq!(basis_count(&d, &s).unwrap(), build_basis(&d, &s).unwrap().len());
    }

    #[test]
    fn design_columns_are_orthogonal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_domain(&mut rng, 4, 4);
        let s = random_structure(&mut rng, d.num_variables());
        let g = design_matrix(&d, &build_basis(&d, &s).unwrap(), None).unwrap().gram();
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!(i == j || *v == 0);
            }
        }
    }

    #[test]
    fn sequential_conditioning_equals_joint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..6);
        let g = Gaussian::new(
            DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            random_spd(&mut rng, n, 1.0),
        ).unwrap();
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let (joint, ev) = g.condition(&[(0, x), (1, y)]).unwrap();
        let (first, ev1) = g.condition(&[(0, x)]).unwrap();
        let (second, ev2) = first.condition(&[(0, y)]).unwrap();
        prop_assert!((&joint.mean - &second.mean).amax() <= 1e-10);
        prop_assert!((&joint.cov - &second.cov).amax() <= 1e-10);
        prop_assert!((ev - ev1 - ev2).abs() <= 1e-10);
    }

    #[test]
    fn nw_update_is_associative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..4);
        let prior = random_nw(&mut rng, m);
        let data: Vec<DVector<f64>> = (0..7)
            .map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let k = rng.random_range(1..6);
        let all = nw_update(&prior, &GaussianStats::from_data(m, &data)).unwrap();
        let a = nw_update(&prior, &GaussianStats::from_data(m, &data[..k])).unwrap();
        let b = nw_update(&a, &GaussianStats::from_data(m, &data[k..])).unwrap();
        prop_assert!((&all.r - &b.r).amax() <= 1e-10);
        prop_assert!((&all.lambda - &b.lambda).amax() <= 1e-10);
        prop_assert!((all.beta - b.beta).abs() <= 1e-10 && (all.nu - b.nu).abs() <= 1e-10);
    }

    #[test]
    fn map_estimate_minimizes_error(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_domain(&mut rng, 3, 3);
        let s = random_structure(&mut rng, d.num_variables());
        let a = TypeLayout::new(&d, &s).unwrap().design_matrix;
        let p = random_params(&mut rng, a.ncols());
        let u: Vec<f64> = (0..a.nrows()).map(|_| rng.random_range(0.0..1.0)).collect();
        let w = map_project(&u, &p, &a).unwrap();
        let e0 = map_objective(&w, &u, &p, &a).unwrap();
        for _ in 0..20 {
            let mut delta = DVector::from_fn(w.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            delta *= 1e-3 / delta.norm();
            prop_assert!(map_objective(&(&w + delta), &u, &p, &a).unwrap() > e0);
        }
        let full: Vec<Option<f64>> = u.iter().map(|&x| Some(x)).collect();
        let (post, _) = posterior_weights(&full, &p, &a).unwrap();
        prop_assert!((post.mean - w).amax() <= 1e-8);
    }

    #[test]
    fn map_tends_to_least_squares(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_domain(&mut rng, 3, 3);
        let s = random_structure(&mut rng, d.num_variables());
        let a = TypeLayout::new(&d, &s).unwrap().design_matrix;
        let mut p = random_params(&mut rng, a.ncols());
        p.noise_var = 1e-10;
        let w = DVector::from_fn(a.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let u: Vec<f64> = (&a * &w).iter().copied().collect();
        let ls = ls_project(&u, &a).unwrap();
        prop_assert!((map_project(&u, &p, &a).unwrap() - ls).amax() <= 1e-6);
    }

    #[test]
    fn type_posterior_shift_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lw: Vec<f64> = (0..4).map(|_| rng.random_range(-20.0..0.0)).collect();
        let shifted: Vec<f64> = lw.iter().map(|x| x + shift).collect();
        let a = normalize_log_weights(&lw).unwrap();
        let b = normalize_log_weights(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn add_then_delete_is_reversible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_structure(&mut rng, 4);
        let start = CandidateStructure::new(vec![s.clone()]);
        for (i, c) in s.clusters().iter().enumerate() {
            for v in (0..4).filter(|v| !c.contains(v)) {
                let mut clusters = s.clusters().to_vec();
                clusters[i].push(v);
                let added = ClusterStructure::new(clusters);
                // only moves that absorb no other cluster are invertible
                if added.clusters().len() != s.clusters().len() {
                    continue;
                }
                let added = CandidateStructure::new(vec![added]);
                prop_assert!(neighbors(&start, 4, 4).contains(&added));
                prop_assert!(neighbors(&added, 4, 4).contains(&start));
            }
        }
    }

    #[test]
    fn model_file_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_domain(&mut rng, 3, 3);
        let s = random_structure(&mut rng, d.num_variables());
        let layout = Arc::new(TypeLayout::new(&d, &s).unwrap());
        let mut priors = PriorConfig::default().model_priors(&[layout.basis.len()]).unwrap();
        priors.types[0].nw = random_nw(&mut rng, layout.basis.len());
        priors.types[0].nw.beta += 2.0;
        let model = MixtureModel::from_priors(&d, &[layout], &priors).unwrap();
        let text = ModelFile::from_model(&model, Provenance::default()).to_json().unwrap();
        let back = ModelFile::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(back.to_model().unwrap(), model);
    }
}

#[test]
fn posterior_trace_shrinks_with_observations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = prefdens_core::synth::three_attribute_domain();
    let a = TypeLayout::new(&d, &ClusterStructure::new([vec![0, 1], vec![1, 2]]))
        .unwrap()
        .design_matrix;
    let p = random_params(&mut rng, a.ncols());
    let mut u: Vec<Option<f64>> = vec![None; 12];
    let mut prev = f64::INFINITY;
    for o in [4, 0, 11, 7, 2, 9] {
        u[o] = Some(rng.random_range(0.0..1.0));
        let (post, _) = posterior_weights(&u, &p, &a).unwrap();
        let tr = post.cov.trace();
        assert!(tr <= prev + 1e-12);
        prev = tr;
    }
}
