//! Browser bindings for planar hardmax runs. Every entry point takes and
//! returns JSON strings so the page needs no generated glue beyond the
//! wasm-bindgen shim.

use hardmax::cluster::DEFAULT_CLUSTER_RADIUS;
use hardmax::{
    analyze, convex_hull_2d, run, similarity_matrix, AttentionSpec, ClusterKind, RunConfig, SimilarityMode, SpdMatrix,
    TokenConfiguration,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Cluster {
    position: Vec<f64>,
    kind: &'static str,
    members: Vec<usize>,
    weights: Option<Vec<f64>>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Simulation {
    frames: Vec<Vec<Vec<f64>>>,
    steps: usize,
    leaders: Vec<(usize, usize)>,
    hull: Vec<Vec<f64>>,
    clusters: Vec<Cluster>,
    verdicts: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Attention {
    hardmax: Vec<Vec<f64>>,
    softmax: Vec<Vec<f64>>,
    max_diff: f64,
}

fn parse_tokens(tokens: &str) -> Result<TokenConfiguration, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(tokens).map_err(|e| format!("tokens: {e}"))?;
    let z = TokenConfiguration::new(rows).map_err(|e| e.to_string())?;
    if z.dim() != 2 {
        return Err("the demo draws planar tokens only".into());
    }
    Ok(z)
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Runs the dynamics to convergence and analyzes the limit.
pub fn simulate_json(tokens: &str, alpha: f64) -> Result<String, String> {
    let z = parse_tokens(tokens)?;
    let spec = AttentionSpec::hardmax(SpdMatrix::identity(2), alpha).map_err(|e| e.to_string())?;
    let traj = run(&z, &spec, &RunConfig::default()).map_err(|e| e.to_string())?;
    if !traj.converged {
        return Err(format!("no convergence after {} steps", traj.steps_taken));
    }
    let report = analyze(&traj, DEFAULT_CLUSTER_RADIUS).map_err(|e| e.to_string())?;
    let leader_points: Vec<_> = report.leaders.iter().map(|l| l.limit_point.clone()).collect();
    let hull = if leader_points.is_empty() {
        Vec::new()
    } else {
        convex_hull_2d(&leader_points).map_err(|e| e.to_string())?.into_iter().map(Vec::from).collect()
    };
    let clusters = report
        .clusters
        .iter()
        .map(|c| {
            let (kind, weights) = match &c.kind {
                ClusterKind::Vertex { .. } => ("vertex", None),
                ClusterKind::FaceProjection { certificate } => ("face", Some(certificate.weights.clone())),
                ClusterKind::Uncertified => ("uncertified", None),
            };
            Cluster { position: c.position.coords().to_vec(), kind, members: c.member_tokens.clone(), weights }
        })
        .collect();
    to_json(&Simulation {
        frames: traj.configurations().map(|(_, z)| z.tokens().map(<[f64]>::to_vec).collect()).collect(),
        steps: traj.steps_taken,
        leaders: report.leaders.iter().map(|l| (l.token_index, l.detected_at_step)).collect(),
        hull,
        clusters,
        verdicts: report.verdicts.all(),
    })
}

/// Hardmax and softmax attention matrices of one configuration.
pub fn attention_json(tokens: &str, alpha: f64, tau: f64) -> Result<String, String> {
    let z = parse_tokens(tokens)?;
    let hard = AttentionSpec::hardmax(SpdMatrix::identity(2), alpha).map_err(|e| e.to_string())?;
    let soft = hard.with_mode(SimilarityMode::Softmax { tau }).map_err(|e| e.to_string())?;
    let h = similarity_matrix(&z, &hard).map_err(|e| e.to_string())?;
    let s = similarity_matrix(&z, &soft).map_err(|e| e.to_string())?;
    to_json(&Attention { max_diff: h.max_abs_diff(&s), hardmax: h.to_rows(), softmax: s.to_rows() })
}

/// Token sets worth starting from.
pub fn preset_json(name: &str) -> Result<String, String> {
    let rows: Vec<[f64; 2]> = match name {
        "square" => {
            vec![[-1.0, -0.2], [1.0, -0.2], [-1.0, 1.2], [1.0, 1.2], [0.0, -0.1], [0.0, 0.5], [-0.5, -0.1], [0.5, -0.1]]
        }
        "late-leader" => vec![[-1.0, 1.0], [0.0, 3.0], [12.0, 4.0]],
        "triangle" => vec![[2.0, 0.0], [-1.0, 1.8], [-1.0, -1.8], [0.4, 0.3], [-0.2, 0.9], [0.1, -1.1], [0.9, -0.2]],
        other => return Err(format!("unknown preset {other:?}")),
    };
    to_json(&rows)
}

#[wasm_bindgen]
pub fn simulate(tokens: &str, alpha: f64) -> Result<String, JsValue> {
    simulate_json(tokens, alpha).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn attention(tokens: &str, alpha: f64, tau: f64) -> Result<String, JsValue> {
    attention_json(tokens, alpha, tau).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, JsValue> {
    preset_json(name).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn square_preset_has_face_clusters() {
        let out: Value = serde_json::from_str(&simulate_json(&preset_json("square").unwrap(), 0.5).unwrap()).unwrap();
        assert_eq!(out["verdicts"], true);
        assert_eq!(out["leaders"].as_array().unwrap().len(), 4);
        assert!(out["clusters"].as_array().unwrap().iter().any(|c| c["kind"] == "face"));
        assert_eq!(out["frames"].as_array().unwrap().len(), out["steps"].as_u64().unwrap() as usize + 1);
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let out: Value = serde_json::from_str(&attention_json("[[1,0],[0,2],[-1,-1]]", 1.0, 0.5).unwrap()).unwrap();
        for key in ["hardmax", "softmax"] {
            for row in out[key].as_array().unwrap() {
                let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_planar_tokens() {
        assert!(simulate_json("[[1.0], [2.0]]", 0.5).is_err());
        assert!(preset_json("nope").is_err());
    }
}
