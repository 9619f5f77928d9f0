//! Figure-sweep outputs frozen on first run. The paper prints no numbers for
//! these curves, so the baselines guard against silent optimizer drift.
//! Regenerate with `CHANNEL_FORGE_BLESS=1 cargo test --test regression`.

use std::path::PathBuf;

use channel_forge::figures::{
    fig5a_point, fig5b_point, fig6a_point, fig6b_point, fig6c_point, fig7c_point, FIG6A_Q,
};
use channel_forge::optim::NelderMeadOptions;
use serde_json::{json, Value};

const TOL: f64 = 1e-6;

fn current() -> Value {
    let opts = NelderMeadOptions::default();
    let rows = |v: Vec<Value>| Value::Array(v);
    json!({
        "fig5a": rows([0.8, 0.9, 1.0].iter().map(|&q| json!(fig5a_point(q, &opts).unwrap())).collect()),
        "fig5b": rows([0.05, 0.2, 0.4].iter().map(|&s| json!(fig5b_point(s, &opts).unwrap())).collect()),
        "fig6a": rows([0.1, 0.5, 0.9].iter().map(|&g| json!(fig6a_point(g, FIG6A_Q).unwrap())).collect()),
        "fig6b": rows([0.1, 0.5, 0.9].iter().map(|&g| json!(fig6b_point(g, &opts).unwrap())).collect()),
        "fig6c": rows([0.1, 0.3, 0.6].iter().map(|&s| json!(fig6c_point(s, &opts).unwrap())).collect()),
        "fig7c": rows([(0.9, 0.9), (0.5, 0.3), (0.99, 0.7)].iter().map(|&(p, q)| json!(fig7c_point(p, q, 1e-10))).collect()),
    })
}

fn compare(path: &str, want: &Value, got: &Value, diffs: &mut Vec<String>) {
    match (want, got) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                match b.get(k) {
                    Some(vb) => compare(&format!("{path}.{k}"), va, vb, diffs),
                    None => diffs.push(format!("{path}.{k} missing")),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (va, vb)) in a.iter().zip(b).enumerate() {
                compare(&format!("{path}[{i}]"), va, vb, diffs);
            }
        }
        (Value::Number(a), Value::Number(b)) => {
            let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            if (x - y).abs() > TOL {
                diffs.push(format!("{path}: baseline {x}, now {y}"));
            }
        }
        _ if want == got => {}
        _ => diffs.push(format!("{path}: shape changed")),
    }
}

#[test]
fn figure_points_match_frozen_baselines() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/baselines/figures.json");
    let got = current();
    if std::env::var_os("CHANNEL_FORGE_BLESS").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
        return;
    }
    let want: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let mut diffs = Vec::new();
    compare("", &want, &got, &mut diffs);
    assert!(diffs.is_empty(), "figure outputs drifted:\n{}", diffs.join("\n"));
}
