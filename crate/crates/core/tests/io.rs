use std::path::Path;

use proptest::prelude::*;
use yn_crowd::io::*;
use yn_crowd::model::{
    BetaParams, ClassSpace, CredibilityMatrix, CredibilityPosterior, LabelAssignment, LabelPosterior, LabelerId,
    ObjectId, ResponsePair, VoteTable,
};
use yn_crowd::Error;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn classes(k: usize) -> ClassSpace {
    ClassSpace::from_ids(&["eb", "be", "lpb", "cep", "rr", "qso"][..k]).unwrap()
}

fn id() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_-]{1,8}"
}

fn vote_table() -> impl Strategy<Value = VoteTable> {
    (2usize..=5)
        .prop_flat_map(|k| {
            let yn = prop::collection::btree_map((id(), id(), 0..k), any::<bool>(), 0..40);
            let full = prop::collection::btree_map((id(), id()), 0..k, 0..10);
            (Just(k), yn, full)
        })
        .prop_map(|(k, yn, full)| {
            let mut t = VoteTable::new(k);
            for ((j, i, c), y) in yn {
                t.insert_yn(j.into(), i.into(), c, ResponsePair::from_answer(y)).unwrap();
            }
            for ((j, i), c) in full {
                t.insert_full(j.into(), i.into(), c).unwrap();
            }
            t
        })
}

fn write_to_vec(f: impl FnOnce(&mut Vec<u8>) -> yn_crowd::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).unwrap();
    buf
}

proptest! {
    #[test]
    fn votes_round_trip(table in vote_table()) {
        let cs = classes(table.num_classes());
        let bytes = write_to_vec(|b| write_votes(&table, &cs, b));
        let back = parse_votes(bytes.as_slice(), "v", &cs).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(write_to_vec(|b| write_votes(&back, &cs, b)), bytes);
    }

    #[test]
    fn labels_round_trip(labels in prop::collection::btree_map(id(), 0usize..4, 0..50)) {
        let cs = classes(4);
        let labels: LabelAssignment = labels.into_iter().map(|(o, c)| (ObjectId::from(o), c)).collect();
        let bytes = write_to_vec(|b| write_labels(&labels, &cs, b));
        prop_assert_eq!(parse_labels(bytes.as_slice(), "l", &cs).unwrap(), labels);
    }

    #[test]
    fn predictions_round_trip_to_nine_digits(rows in prop::collection::btree_map(id(), prop::collection::vec(0.001f64..1.0, 3), 0..30)) {
        let cs = classes(3);
        let mut post = LabelPosterior::new();
        for (o, w) in rows {
            let total: f64 = w.iter().sum();
            post.insert(o.into(), w.iter().map(|x| x / total).collect()).unwrap();
        }
        let bytes = write_to_vec(|b| write_predictions(&post, &cs, b));
        let back = parse_predictions(bytes.as_slice(), "p", &cs).unwrap();
        for ((o1, p1), (o2, p2)) in post.iter().zip(back.iter()) {
            prop_assert_eq!(o1, o2);
            for (a, b) in p1.iter().zip(p2) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn credibility_round_trip(grids in prop::collection::btree_map(id(), prop::collection::vec((0.01f64..100.0, 0.01f64..100.0), 4), 1..5)) {
        let cs = classes(2);
        let mut post = CredibilityPosterior::new(2);
        for (j, cells) in grids {
            let grid = cells.iter().map(|&(a, b)| BetaParams::new(round_float(a), round_float(b)).unwrap()).collect();
            post.insert(j.into(), grid).unwrap();
        }
        let bytes = write_to_vec(|b| write_credibility(&post, &cs, b));
        let back = parse_credibility(bytes.as_slice(), "c", &cs).unwrap();
        prop_assert_eq!(&back, &post);
        prop_assert_eq!(write_to_vec(|b| write_credibility(&back, &cs, b)), bytes);
    }

    #[test]
    fn floats_are_stable_after_one_rounding(x in -1e12f64..1e12) {
        let r = round_float(x);
        prop_assert_eq!(fmt_float(r), fmt_float(x));
        prop_assert!((r - x).abs() <= 5e-9 * x.abs());
    }
}

#[test]
fn theta_and_classes_round_trip() {
    let cs = ClassSpace::from_ids(&["a", "b"]).unwrap();
    let bytes = write_to_vec(|b| write_classes(&cs, b));
    assert_eq!(parse_classes(bytes.as_slice(), "c").unwrap(), cs);
    let mut thetas = std::collections::BTreeMap::new();
    thetas.insert(LabelerId::from("L1"), CredibilityMatrix::new(2, vec![0.125, 0.5, 0.25, 0.75]).unwrap());
    let bytes = write_to_vec(|b| write_theta(&thetas, &cs, b));
    assert_eq!(parse_theta(bytes.as_slice(), "t", &cs).unwrap(), thetas);
}

#[test]
fn macho_class_table_counts() {
    let cs = load_classes(&fixture("macho_classes.csv")).unwrap();
    let labels = load_labels(&fixture("macho_labels.csv"), &cs).unwrap();
    let counts = labels.class_counts(cs.len());
    let by_id: Vec<(&str, usize)> = (0..cs.len()).map(|c| (cs.id(c), counts[c])).collect();
    assert_eq!(by_id, vec![("EB", 104), ("BE", 57), ("LPB", 49), ("CEP", 40)]);
}

#[test]
fn missing_class_is_rejected_with_line() {
    let cs = ClassSpace::from_ids(&["a", "b"]).unwrap();
    let err = parse_labels(&b"object_id,class_id\no1,a\no2,z\n"[..], "labels.csv", &cs).unwrap_err();
    match err {
        Error::Format { line, ref path, .. } => {
            assert_eq!((line, path.as_str()), (3, "labels.csv"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn vote_invariant_violations_name_the_line() {
    let cs = ClassSpace::from_ids(&["a", "b"]).unwrap();
    let cases: [(&str, usize); 5] = [
        ("L1,o1,a,yn,maybe\n", 2),
        ("L1,o1,a,yn,yes\nL1,o1,,full,a\nL1,o1,,full,b\n", 4),
        ("L1,o1,a,full,a\n", 2),
        ("L 1,o1,a,yn,yes\n", 2),
        ("L1,o1,a,yn\n", 2),
    ];
    for (body, line) in cases {
        let text = format!("labeler_id,object_id,class_id,question_type,response\n{body}");
        match parse_votes(text.as_bytes(), "v", &cs) {
            Err(Error::Format { line: l, .. }) => assert_eq!(l, line, "{body}"),
            other => panic!("{body}: {other:?}"),
        }
    }
}

#[test]
fn save_and_load_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cs = classes(3);
    let mut t = VoteTable::new(3);
    t.insert_yn("L1".into(), "obj7".into(), 1, ResponsePair::YES).unwrap();
    t.insert_full("L2".into(), "obj7".into(), 2).unwrap();
    let path = dir.path().join("nested/votes.csv");
    save_votes(&t, &cs, &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "labeler_id,object_id,class_id,question_type,response\nL1,obj7,be,yn,yes\nL2,obj7,,full,lpb\n"
    );
    assert_eq!(load_votes(&path, &cs).unwrap(), t);
}
