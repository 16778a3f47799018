//! End-to-end dry run of the core pipeline with no file IO: generate a
//! biased synthetic cohort, split it by subject, train on raw grayscale
//! maps, and check the classifier finds the injected group signal. The
//! all-black ablation must simultaneously score exactly at chance.

use vesselaudit_core::cohort::{split, Manifest, Partition, SubjectRecord};
use vesselaudit_core::metrics::{aggregate_subjects, auc_pr, auc_roc, Prediction};
use vesselaudit_core::net::{forward_prob, image_to_input, ArchDescriptor};
use vesselaudit_core::synth::{gen_rvm, plan_cohort, CohortSpec, Group};
use vesselaudit_core::train::{train, TrainConfig, TrainSample};
use vesselaudit_core::transform::{resize, threshold, ThresholdSpec};
use vesselaudit_core::augment::AugmentSpec;

const INPUT: usize = 16;

struct Rendered {
    subject_id: String,
    group: Group,
    image: vesselaudit_core::image::GrayImage,
}

fn render_cohort(spec: &CohortSpec) -> (Manifest, Vec<Rendered>) {
    let plan = plan_cohort(spec);
    let mut subjects = Vec::new();
    let mut images = Vec::new();
    for s in &plan.subjects {
        subjects.push(SubjectRecord {
            subject_id: s.subject_id.clone(),
            group: s.group.label().into(),
            bw_g: s.bw_g,
            ga_wk: s.ga_wk,
            pma_wk: s.pma_wk,
            image_paths: s
                .image_seeds
                .iter()
                .enumerate()
                .map(|(k, _)| format!("{}_{k}.pgm", s.subject_id))
                .collect(),
        });
        for &seed in &s.image_seeds {
            images.push(Rendered {
                subject_id: s.subject_id.clone(),
                group: s.group,
                image: gen_rvm(spec, s.group, seed),
            });
        }
    }
    (Manifest::from_subjects(subjects).unwrap(), images)
}

fn prepared(img: &vesselaudit_core::image::GrayImage, lower: u16) -> vesselaudit_core::image::GrayImage {
    let t = threshold(img, &ThresholdSpec::at_least(lower).unwrap());
    resize(&t, INPUT, INPUT)
}

#[test]
fn biased_cohort_is_detected_and_blackout_is_chance() {
    let spec = CohortSpec {
        n_subjects_a: 8,
        n_subjects_b: 8,
        images_per_subject_min: 2,
        images_per_subject_max: 2,
        width: 64,
        height: 48,
        confidence_bias: 60.0,
        caliber_delta: 1.5,
        seed: 5,
        ..CohortSpec::default()
    };
    let (manifest, images) = render_cohort(&spec);
    let assignment = split(&manifest, [0.5, 0.25, 0.25], 9).unwrap();

    let collect = |p: Partition| -> Vec<&Rendered> {
        images
            .iter()
            .filter(|r| assignment.partition_of(&r.subject_id) == Some(p))
            .collect()
    };
    let as_samples = |rs: &[&Rendered], lower: u16| -> Vec<TrainSample> {
        rs.iter()
            .map(|r| TrainSample { image: prepared(&r.image, lower), label: r.group == Group::A })
            .collect()
    };

    let train_part = collect(Partition::Train);
    let val_part = collect(Partition::Validation);
    let test_part = collect(Partition::Test);
    assert_eq!(train_part.len() + val_part.len() + test_part.len(), 32);

    let arch = ArchDescriptor::new(INPUT, vec![4, 8]).unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        lr: 0.2,
        max_epochs: 8,
        patience: 8,
        input_size: INPUT,
        seed: 3,
        ..TrainConfig::default()
    };

    // raw grayscale: the confidence and caliber signals are present
    let (params, report) = train(
        &as_samples(&train_part, 0),
        &as_samples(&val_part, 0),
        &arch,
        &cfg,
        &AugmentSpec::default(),
    )
    .unwrap();
    assert!(report.best_epoch >= 1);

    let preds: Vec<Prediction> = test_part
        .iter()
        .enumerate()
        .map(|(i, r)| Prediction {
            image_id: format!("img{i}"),
            subject_id: r.subject_id.clone(),
            label: r.group == Group::A,
            prob: forward_prob(&params, &image_to_input(&prepared(&r.image, 0))),
        })
        .collect();
    let image_auc = auc_roc(&preds).unwrap();
    assert!(image_auc >= 0.9, "injected signal missed: image AUC-ROC {image_auc}");

    let subject_preds = aggregate_subjects(&preds).unwrap();
    let subject_auc = auc_roc(&subject_preds).unwrap();
    assert!(subject_auc >= 0.9, "subject AUC-ROC {subject_auc}");

    // threshold 256 blacks out every image; identical inputs leave ranking at
    // exactly chance and average precision at exactly prevalence
    let blacked: Vec<Prediction> = test_part
        .iter()
        .enumerate()
        .map(|(i, r)| Prediction {
            image_id: format!("img{i}"),
            subject_id: r.subject_id.clone(),
            label: r.group == Group::A,
            prob: forward_prob(&params, &image_to_input(&prepared(&r.image, 256))),
        })
        .collect();
    assert_eq!(auc_roc(&blacked).unwrap(), 0.5);
    let n_pos = blacked.iter().filter(|p| p.label).count();
    assert_eq!(auc_pr(&blacked).unwrap(), n_pos as f64 / blacked.len() as f64);
}
