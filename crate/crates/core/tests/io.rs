use svreg::data::{read_table, Dataset};
use svreg::prelude::*;
use svreg::Error;

fn fitted(degree_m: usize, scale_j: u32) -> (SvrModel, Dataset) {
    let problem = Problem::new(
        DistributionSpec::gaussian(3),
        FunctionSpec::new(FunctionKind::F1),
        None,
        0.02,
    )
    .unwrap();
    let train = problem.sample(800, 11).unwrap().data;
    let test = problem.sample(200, 12).unwrap().data;
    let pipeline = Pipeline {
        degree_m,
        scale_j: Some(scale_j),
        ..Pipeline::default()
    };
    (pipeline.fit(&train).unwrap(), test)
}

#[test]
fn model_json_round_trips_bit_exactly() {
    for (m, j) in [(0, 3), (1, 5), (2, 9)] {
        let (model, test) = fitted(m, j);
        let text = model.to_json().unwrap();
        let back = SvrModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);
        for x in test.rows() {
            assert_eq!(back.predict(x).to_bits(), model.predict(x).to_bits());
        }
    }
}

#[test]
fn model_json_has_documented_fields() {
    let (model, _) = fitted(1, 6);
    let v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    for key in [
        "direction",
        "method",
        "level_l",
        "interval_i",
        "scale_j",
        "degree_m",
        "coeffs",
        "fallback",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["method"], "svr");
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 64);
}

#[test]
fn malformed_models_are_rejected() {
    let (model, _) = fitted(1, 4);
    let mut v: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    v["scale_j"] = 5.into();
    assert!(matches!(
        SvrModel::from_json(&v.to_string()),
        Err(Error::InvalidInput(_))
    ));
    assert!(SvrModel::from_json("{}").is_err());
}

#[test]
fn dataset_csv_round_trips() {
    let (_, test) = fitted(1, 3);
    let mut buf = Vec::new();
    test.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x1,x2,x3,y\n"));
    let back = Dataset::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, test);
}

fn parse_line(text: &str) -> usize {
    match Dataset::read_csv(text.as_bytes()) {
        Err(Error::Parse { line, .. }) => line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn csv_errors_carry_line_numbers() {
    assert_eq!(parse_line("x1,x2,y\n1,2,3\n4,five,6\n"), 3);
    assert_eq!(parse_line("x1,x2,y\n1,2,3\n1,2,3\n4,6\n"), 4);
    assert_eq!(parse_line("x1,x3,y\n1,2,3\n"), 1);
    assert_eq!(parse_line("x1,x2\n1,2\n"), 1);
    assert_eq!(parse_line("x1,y\n1,\n"), 2);
    assert_eq!(parse_line("x1,y\n1,2\nNaN,2\n"), 3);
    assert!(matches!(
        Dataset::read_csv("x1,y\n".as_bytes()),
        Err(Error::EmptyDataset)
    ));
}

#[test]
fn tables_without_response_are_accepted() {
    let t = read_table("x1,x2\n1,2\n3,4\n".as_bytes()).unwrap();
    assert_eq!((t.d, t.n()), (2, 2));
    assert!(t.y.is_none());
}
