use camel::dataio::{emit_mot, parse_mot, CueRecord, CueStore, MotRecord, RunConfig, WeightsFile};
use camel_core::domain::BBox;
use camel_core::model::Camel;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = MotRecord> {
    (
        1u32..100,
        -1i64..50,
        -1e3f64..1e4,
        -1e3f64..1e4,
        1e-3f64..1e3,
        1e-3f64..1e3,
        0.0f64..1.0,
    )
        .prop_map(|(frame, id, x, y, w, h, conf)| MotRecord::new(frame, id, BBox::new(x, y, w, h), conf))
}

proptest! {
    #[test]
    fn mot_text_round_trips(mut recs in prop::collection::vec(record(), 0..30)) {
        let text = emit_mot(&recs);
        recs.sort_by_key(|r| (r.frame, r.id));
        let parsed = parse_mot(&text).unwrap();
        prop_assert_eq!(&parsed, &recs);
        prop_assert_eq!(emit_mot(&parsed), text);
    }

    #[test]
    fn cue_store_round_trips(rows in prop::collection::btree_map((1u32..50, 0u32..8), prop::collection::vec(-10.0f32..10.0, 4), 0..20)) {
        let store = CueStore {
            cue_id: 1,
            width: 4,
            records: rows.into_iter().map(|((frame, det_index), values)| CueRecord { frame, det_index, values }).collect(),
        };
        let bytes = store.to_bytes().unwrap();
        let back = CueStore::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back, store);
    }

    #[test]
    fn truncated_weights_are_rejected(cut in 1usize..200) {
        let cfg = RunConfig::from_toml(include_str!("../../../configs/smoke.toml")).unwrap();
        let model = Camel::new(cfg.model.clone(), 0).unwrap();
        let bytes = WeightsFile::from_model(&model, [0; 32]).to_bytes();
        prop_assert!(WeightsFile::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn detection_files_keep_their_fields() {
    let text = "3,-1,10.5,20,30,40,0.75,-1,-1,-1\n";
    let recs = parse_mot(text).unwrap();
    let d = recs[0].to_detection();
    assert_eq!(d.frame, 3);
    assert_eq!(d.gt_identity, None);
    assert_eq!(d.bbox, BBox::new(10.5, 20.0, 30.0, 40.0));
    assert_eq!(emit_mot(&recs), text);
}
