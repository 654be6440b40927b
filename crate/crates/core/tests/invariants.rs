use camel_core::association::{hungarian, CostMatrix};
use camel_core::domain::{BBox, CueTensor, Detection, TrackState, Tracklet};
use camel_core::model::{Camel, CueSpec, ModelConfig, ObjectSequence};
use proptest::prelude::*;

fn config() -> ModelConfig {
    ModelConfig {
        cues: vec![CueSpec { id: 0, width: 5 }, CueSpec { id: 1, width: 3 }],
        d_model: 8,
        d_fuse: 8,
        d_emb: 4,
        layers: 1,
        heads: 2,
        d_ff: 8,
        gaffe_d_ff: 8,
    }
}

fn det(frame: u32, v: &[f64], appearance: bool) -> Detection {
    let d = Detection::new(frame, BBox::new(v[0] * 100.0, v[1] * 100.0, 20.0, 40.0), 0.9)
        .with_cue(CueTensor::new(0, v[..5].to_vec()));
    if appearance {
        d.with_cue(CueTensor::new(1, v[5..8].to_vec()))
    } else {
        d
    }
}

// (frame offsets, values, has appearance) per object
fn objects_strategy() -> impl Strategy<Value = Vec<Vec<(u32, Vec<f64>, bool)>>> {
    prop::collection::vec(
        prop::collection::vec((0u32..3, prop::collection::vec(-1.0f64..1.0, 8), any::<bool>()), 1..4),
        1..6,
    )
}

fn build(spec: &[Vec<(u32, Vec<f64>, bool)>], shift: u32) -> Vec<Vec<Detection>> {
    spec.iter()
        .map(|steps| {
            let mut frame = shift;
            steps
                .iter()
                .map(|(gap, v, a)| {
                    frame += gap + 1;
                    det(frame, v, *a)
                })
                .collect()
        })
        .collect()
}

fn embed(model: &Camel, dets: &[Vec<Detection>], t: i64) -> Vec<Vec<u64>> {
    let objs: Vec<_> = dets
        .iter()
        .map(|d| ObjectSequence::from_detections(t, d.iter()))
        .collect();
    model
        .embed(&objs)
        .unwrap()
        .into_iter()
        .map(|r| r.into_iter().map(f64::to_bits).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embeddings_follow_object_order(spec in objects_strategy(), rot in 0usize..6) {
        let model = Camel::new(config(), 1).unwrap();
        let dets = build(&spec, 0);
        let z = embed(&model, &dets, 20);
        let k = rot % dets.len();
        let mut rotated = dets.clone();
        rotated.rotate_left(k);
        let zr = embed(&model, &rotated, 20);
        for (i, row) in zr.iter().enumerate() {
            prop_assert_eq!(row, &z[(i + k) % dets.len()]);
        }
    }

    #[test]
    fn embeddings_ignore_absolute_time(spec in objects_strategy(), shift in 1u32..10_000) {
        let model = Camel::new(config(), 2).unwrap();
        let a = embed(&model, &build(&spec, 0), 20);
        let b = embed(&model, &build(&spec, shift), 20 + shift as i64);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn embeddings_have_unit_norm(spec in objects_strategy()) {
        let model = Camel::new(config(), 3).unwrap();
        let dets = build(&spec, 0);
        let objs: Vec<_> = dets.iter().map(|d| ObjectSequence::from_detections(20, d.iter())).collect();
        for row in model.embed(&objs).unwrap() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bank_stays_bounded_and_ordered(gaps in prop::collection::vec(1u32..5, 1..40), cap in 1usize..8) {
        let mut t = Tracklet::new(1, Detection::new(1, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0), TrackState::Active);
        let mut frame = 1;
        for g in gaps {
            frame += g;
            t.bank_push(Detection::new(frame, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0), cap).unwrap();
            prop_assert!(t.bank.len() <= cap);
            prop_assert!(t.bank.windows(2).all(|w| w[0].frame < w[1].frame));
            prop_assert_eq!(t.last().frame, frame);
        }
        prop_assert!(t.bank_push(Detection::new(frame, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0), cap).is_err());
    }

    #[test]
    fn assignment_is_a_partial_permutation(r in 1usize..6, c in 1usize..6, seed in prop::collection::vec(0.0f64..1.0, 36)) {
        let m = CostMatrix::new(r, c, seed[..r * c].to_vec()).unwrap();
        let pairs = hungarian(&m).unwrap().pairs();
        prop_assert_eq!(pairs.len(), r.min(c));
        let mut rows: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), pairs.len());
        prop_assert_eq!(cols.len(), pairs.len());
    }
}
