mod common;

use ::bttda::discriminant::{leading_eigenvectors, total_scatter};
use ::bttda::hoda::init_projections;
use ::bttda::{
    fit_hoda_backward, hoda_transform, EigenOrder, Error, FitOptions, InitStrategy,
    LabeledDataset, Matrix, Shrinkage, Tensor,
};
use common::*;

#[test]
fn single_mode_matches_fisher_lda() {
    for seed in 0..5 {
        let data = two_class_vectors(10, 200, seed);
        let model = fit_hoda_backward(&data, &[1], &FitOptions::default()).unwrap();
        let dir = fisher_lda_direction(&data);
        let oracle = Matrix::from_column_slice(10, 1, dir.as_slice());
        let sin = subspace_sin(&model.projections[0], &oracle);
        assert!(sin < 1e-8, "seed {seed}: {sin:e}");
        assert!(model.diagnostics.converged);
        assert!(max_orthonormality_error(&model) < 1e-10);
    }
}

#[test]
fn literal_magnitude_order_misses_fisher_direction() {
    // The magnitude rule can lock onto large negative eigenvalues of
    // S_b - phi S_w; this is why algebraic order is the default.
    let data = two_class_vectors(10, 200, 0);
    let opts = FitOptions {
        eigen_order: EigenOrder::Magnitude,
        ..FitOptions::default()
    };
    let model = fit_hoda_backward(&data, &[1], &opts).unwrap();
    let dir = fisher_lda_direction(&data);
    let oracle = Matrix::from_column_slice(10, 1, dir.as_slice());
    assert!(subspace_sin(&model.projections[0], &oracle) > 1e-3);
    assert!(max_orthonormality_error(&model) < 1e-10);
}

/// Mode-0 component 0 carries the class difference; everything else is noise.
fn separated_set() -> LabeledDataset {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2 {
        for i in 0..40 {
            let mut t = gaussian_tensor(&[4, 5], 11, (c * 100 + i) as u64);
            for j in 0..5 {
                let v = t.get(&[0, j]) + if c == 1 { 3.0 } else { -3.0 };
                let off = t.offset(&[0, j]);
                t.data_mut()[off] = v;
            }
            samples.push(t);
            labels.push(c);
        }
    }
    LabeledDataset::new(samples, labels, 2).unwrap()
}

#[test]
fn fisher_ratio_does_not_drop_on_pinned_seed() {
    let data = separated_set();
    let model = fit_hoda_backward(&data, &[1, 1], &FitOptions::default()).unwrap();
    let d = &model.diagnostics;
    assert!(d.final_fisher_ratio >= d.initial_fisher_ratio, "{d:?}");
    // the recovered mode-0 direction is the planted component
    assert!(model.projections[0][(0, 0)].abs() > 0.95);
    assert!(max_orthonormality_error(&model) < 1e-10);
}

#[test]
fn full_rank_preserves_distances() {
    let data = separated_set();
    let model = fit_hoda_backward(&data, &[4, 5], &FitOptions::default()).unwrap();
    let latents = model.transform_all(data.samples()).unwrap();
    for i in 0..10 {
        for j in (i + 1)..10 {
            let before = data.samples()[i].sub(&data.samples()[j]).unwrap().frobenius_norm();
            let after = latents[i].sub(&latents[j]).unwrap().frobenius_norm();
            assert!((before - after).abs() < 1e-10);
        }
    }
    // inverse through the transposes
    let back = latents[3].multi_mode_product(&model.projections, None).unwrap();
    assert!(max_abs_diff(back.data(), data.samples()[3].data()) < 1e-10);
    assert!(max_orthonormality_error(&model) < 1e-10);
}

#[test]
fn partial_hosvd_init_is_total_scatter_eigenvectors() {
    let data = separated_set();
    let init = init_projections(&data, &[2, 3], InitStrategy::PartialHosvd).unwrap();
    for (k, u) in init.iter().enumerate() {
        let s = total_scatter(data.samples(), k).unwrap();
        let expected = leading_eigenvectors(&s, u.ncols()).unwrap().vectors;
        assert_eq!(u, &expected);
        assert!(orthonormality_error(u) < 1e-10);
    }
    let square = init_projections(&data, &[4, 5], InitStrategy::PartialHosvd).unwrap();
    assert!(square.iter().all(|u| u.is_square() && orthonormality_error(u) < 1e-10));
}

#[test]
fn random_init_is_reproducible() {
    let data = separated_set();
    let s = InitStrategy::RandomOrthonormal { seed: 17 };
    let a = init_projections(&data, &[2, 3], s).unwrap();
    assert_eq!(a, init_projections(&data, &[2, 3], s).unwrap());
    assert_ne!(a, init_projections(&data, &[2, 3], InitStrategy::RandomOrthonormal { seed: 18 }).unwrap());
    assert!(a.iter().all(|u| orthonormality_error(u) < 1e-10));
}

#[test]
fn fit_is_deterministic() {
    let data = separated_set();
    for opts in [
        FitOptions::default(),
        FitOptions {
            init: InitStrategy::RandomOrthonormal { seed: 2 },
            shrinkage: Shrinkage::Auto,
            ..FitOptions::default()
        },
    ] {
        let a = fit_hoda_backward(&data, &[2, 2], &opts).unwrap();
        let b = fit_hoda_backward(&data, &[2, 2], &opts).unwrap();
        assert_eq!(a, b);
        assert!(max_orthonormality_error(&a) < 1e-10);
    }
}

#[test]
fn shrinkage_variants_fit_orthonormal_projections() {
    let data = separated_set();
    for shrinkage in [Shrinkage::Auto, Shrinkage::Fixed(0.0), Shrinkage::Fixed(0.5), Shrinkage::Fixed(1.0)] {
        let opts = FitOptions {
            shrinkage,
            ..FitOptions::default()
        };
        let m = fit_hoda_backward(&data, &[2, 3], &opts).unwrap();
        assert!(max_orthonormality_error(&m) < 1e-10, "{shrinkage:?}");
        assert_eq!(m.ranks, vec![2, 3]);
    }
}

#[test]
fn transform_checks_shape_and_maps_zero_to_zero() {
    let data = separated_set();
    let model = fit_hoda_backward(&data, &[2, 2], &FitOptions::default()).unwrap();
    let z = hoda_transform(&model, &Tensor::zeros(&[4, 5]).unwrap()).unwrap();
    assert_eq!(z, Tensor::zeros(&[2, 2]).unwrap());
    assert!(matches!(
        hoda_transform(&model, &Tensor::zeros(&[5, 4]).unwrap()),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn degenerate_inputs_error() {
    // identical samples within each class: no within-class scatter
    let a = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let b = Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
    let data = LabeledDataset::new(vec![a.clone(), a, b.clone(), b], vec![0, 0, 1, 1], 2).unwrap();
    assert!(matches!(
        fit_hoda_backward(&data, &[1, 1], &FitOptions::default()),
        Err(Error::SingularFit(_))
    ));
    let data = separated_set();
    assert!(fit_hoda_backward(&data, &[5, 1], &FitOptions::default()).is_err());
    assert!(fit_hoda_backward(&data, &[0, 1], &FitOptions::default()).is_err());
    let one_class = LabeledDataset::new(data.samples().to_vec(), vec![0; data.len()], 2).unwrap();
    assert!(matches!(
        fit_hoda_backward(&one_class, &[1, 1], &FitOptions::default()),
        Err(Error::EmptyClass(1))
    ));
}
