//! Cross-module properties checked on random inputs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use texnet::augment::{apply_affine, augment_dataset, AffineParams, AugmentConfig};
use texnet::data::{
    make_folds, ImageRecord, Magnification, Manifest, Role, SplitConfig, Subtype, TumorClass,
};
use texnet::engine::Tensor;
use texnet::eval::{patient_level_accuracy, PredictionRecord};
use texnet::model::{build_tcnn, init_parameters};
use texnet::optim::{fit, InMemoryExample, InMemorySet, TrainConfig, Trainer};

fn manifest(benign: usize, malignant: usize, images: &[usize]) -> Manifest {
    let mut records = Vec::new();
    for p in 0..benign + malignant {
        let (class, subtype) = if p < benign {
            (TumorClass::Benign, Subtype::Fibroadenoma)
        } else {
            (TumorClass::Malignant, Subtype::Lobular)
        };
        for seq in 1..=images[p % images.len()] {
            records.push(ImageRecord {
                path: PathBuf::from(format!("{p}-{seq}.png")),
                patient_id: format!("14-{p:04}"),
                tumor_class: class,
                subtype,
                magnification: Magnification::X200,
                seq: seq as u32,
            });
        }
    }
    Manifest::new(records).unwrap()
}

fn image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3)
        .map(|_| rng.gen_range(0.0..=1.0f32))
        .collect();
    Tensor::from_vec(&[h, w, 3], data).unwrap()
}

fn sorted_bits(t: &Tensor<f32>) -> Vec<u32> {
    let mut bits: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
    bits.sort_unstable();
    bits
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_never_leak_and_cover_both_classes(
        benign in 5usize..30,
        malignant in 5usize..60,
        images in prop::collection::vec(1usize..5, 1..6),
        seed in any::<u64>(),
    ) {
        let m = manifest(benign, malignant, &images);
        let plan = make_folds(&m, &SplitConfig::default(), seed).unwrap();
        // folds are independent hold-outs, so test sets may overlap across folds
        for fold in &plan.folds {
            let roles = [fold.role_set(Role::Train), fold.role_set(Role::Validation), fold.role_set(Role::Test)];
            prop_assert_eq!(roles.iter().map(BTreeSet::len).sum::<usize>(), benign + malignant);
            prop_assert!(roles[0].is_disjoint(&roles[1]) && roles[0].is_disjoint(&roles[2]) && roles[1].is_disjoint(&roles[2]));
            for set in &roles {
                let classes: BTreeSet<TumorClass> = set.iter().map(|p| m.patient_class(p).unwrap()).collect();
                prop_assert_eq!(classes.len(), 2);
            }
        }
    }

    #[test]
    fn affine_keeps_shape_and_range(
        h in 3usize..20,
        w in 3usize..20,
        flip_h: bool,
        flip_v: bool,
        rotation in -90.0f64..=90.0,
        translate_x in -0.1f64..=0.1,
        translate_y in -0.1f64..=0.1,
        seed: u64,
    ) {
        let src = image(h, w, seed);
        let params = AffineParams { flip_h, flip_v, rotation, translate_x, translate_y };
        let out = apply_affine(&src, &params).unwrap();
        prop_assert_eq!(out.shape(), src.shape());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn flips_permute_pixels(h in 1usize..16, w in 1usize..16, flip_h: bool, flip_v: bool, seed: u64) {
        let src = image(h, w, seed);
        let params = AffineParams { flip_h, flip_v, ..AffineParams::IDENTITY };
        let out = apply_affine(&src, &params).unwrap();
        prop_assert_eq!(sorted_bits(&out), sorted_bits(&src));
    }

    #[test]
    fn augmentation_is_deterministic_per_item(n in 1usize..40, extra in 1usize..10, seed: u64) {
        let m = manifest(20, 30, &[1, 2]);
        let records = &m.records()[..n.min(m.len())];
        let longer = &m.records()[..(n + extra).min(m.len())];
        let cfg = AugmentConfig { factor: 12, seed, ..AugmentConfig::default() };
        let a = augment_dataset(records, &cfg).unwrap();
        prop_assert_eq!(&a, &augment_dataset(records, &cfg).unwrap());
        // each item's stream depends on its position only, so a longer list extends the plan
        let b = augment_dataset(longer, &cfg).unwrap();
        prop_assert_eq!(&a[..], &b[..a.len()]);
    }

    #[test]
    fn patient_accuracy_ignores_record_order(
        outcomes in prop::collection::vec((0usize..6, any::<bool>(), any::<bool>()), 1..60),
        seed: u64,
    ) {
        let records: Vec<PredictionRecord> = outcomes
            .iter()
            .enumerate()
            .map(|(i, &(patient, malignant, correct))| {
                let truth = if malignant { TumorClass::Malignant } else { TumorClass::Benign };
                let other = TumorClass::from_index(1 - truth.index()).unwrap();
                PredictionRecord {
                    image_id: format!("img{i}"),
                    patient_id: format!("p{patient}"),
                    true_class: truth,
                    predicted_class: if correct { truth } else { other },
                    probability: 0.75,
                }
            })
            .collect();
        let mut shuffled = records.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let a = patient_level_accuracy(&records).unwrap().mean;
        let b = patient_level_accuracy(&shuffled).unwrap().mean;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

const TOY: usize = 32;

/// Horizontal stripes (benign) or vertical stripes (malignant) with noise.
fn stripes(count: usize, seed: u64) -> InMemorySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..count)
        .map(|i| {
            let label = TumorClass::from_index(i % 2).unwrap();
            let period = rng.gen_range(4.0..9.0f32);
            let phase = rng.gen_range(0.0..period);
            let mut data = Vec::with_capacity(TOY * TOY * 3);
            for y in 0..TOY {
                for x in 0..TOY {
                    let t = if label == TumorClass::Benign { y } else { x } as f32;
                    let v = 0.5 + 0.35 * (std::f32::consts::TAU * (t + phase) / period).sin();
                    data.extend([(v + rng.gen_range(-0.15..0.15f32)).clamp(0.0, 1.0); 3]);
                }
            }
            InMemoryExample {
                id: format!("s{seed}-{i}"),
                patient: format!("s{seed}-{i}"),
                label,
                image: Tensor::from_vec(&[TOY, TOY, 3], data).unwrap(),
            }
        })
        .collect();
    InMemorySet::new(examples).unwrap()
}

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn toy_training_loss_falls_over_ten_epoch_windows() {
    let losses = single_thread(|| {
        let train = stripes(24, 1);
        let spec = build_tcnn().with_input_size(TOY, TOY);
        let mut store = init_parameters::<f32>(&spec, 2);
        let cfg = TrainConfig {
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&spec, &mut store, &cfg).unwrap();
        (1..=30)
            .map(|e| trainer.run_epoch(&train, e).unwrap().loss)
            .collect::<Vec<_>>()
    });
    let windows: Vec<f64> = losses
        .chunks(10)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-6, "window means {windows:?}");
    }
    assert!(windows[2] < windows[0], "{windows:?}");
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let run = |seed| {
        single_thread(|| {
            let (train, validation) = (stripes(16, 4), stripes(6, 5));
            let spec = build_tcnn().with_input_size(TOY, TOY);
            let mut store = init_parameters::<f32>(&spec, 6);
            let cfg = TrainConfig {
                max_epochs: 4,
                patience: 2,
                batch_size: 4,
                seed,
                ..TrainConfig::default()
            };
            let report = fit(&spec, &mut store, &train, &validation, &cfg).unwrap();
            let weights: Vec<u32> = store
                .iter()
                .flat_map(|(_, p)| p.pair.value.data().iter().map(|v| v.to_bits()))
                .collect();
            (report, weights)
        })
    };
    let (a, wa) = run(7);
    let (b, wb) = run(7);
    assert!(a.same_trajectory(&b));
    assert_eq!(wa, wb);
    let (c, _) = run(8);
    assert_ne!(a.epochs, c.epochs);
}
