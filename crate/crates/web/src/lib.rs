//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes and returns JSON text. The `*_json` functions hold the
//! logic and are usable from native code.

use icsg::bench;
use icsg::model::perturb;
use icsg::nfg::{solve_matrix, Matrix};
use icsg::property::{parse_property, Query, Semantics};
use icsg::uncertainty::{solve_inner, vertices, Direction};
use icsg::zerosum::{solve, SolveOptions};
use icsg::IntervalDistribution;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Largest grid the page may request.
pub const MAX_GRID: usize = 5;

#[derive(Debug, Deserialize)]
pub struct SweepRequest {
    pub grid: usize,
    pub property: String,
    pub eps: Vec<f64>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SweepPoint {
    pub eps: f64,
    pub adversarial: Option<f64>,
    pub controlled: Option<f64>,
    /// Set when the widened model could not be built or solved.
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepResponse {
    pub states: usize,
    pub nominal: f64,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Deserialize)]
pub struct InnerRequest {
    /// `[lo, hi]` per successor.
    pub bounds: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub maximize: bool,
}

#[derive(Debug, Serialize)]
pub struct InnerResponse {
    pub value: f64,
    pub distribution: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct MatrixResponse {
    pub value: f64,
    pub row: Vec<f64>,
    pub column: Vec<f64>,
}

/// Initial-state value of a zero-sum property.
fn check_value(model: &icsg::Icsg, property: &str, semantics: Semantics) -> Result<f64, String> {
    let Query::ZeroSum {
        coalition,
        direction,
        objective,
    } = parse_property(property).map_err(|e| e.to_string())?
    else {
        return Err("the sweep needs a zero-sum property".into());
    };
    let c = model
        .player_index(&coalition)
        .ok_or_else(|| format!("unknown player `{coalition}`"))?;
    let opts = SolveOptions {
        semantics,
        ..Default::default()
    };
    let sol = solve(model, c, direction.into(), &objective, &opts).map_err(|e| e.to_string())?;
    Ok(sol.values[model.initial()])
}

/// Robust values of a property on the robot grid for each perturbation width.
pub fn robot_sweep_json(request: &str) -> Result<String, String> {
    let req: SweepRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.grid > MAX_GRID {
        return Err(format!("grid size is limited to {MAX_GRID}"));
    }
    let model = bench::robot(req.grid).map_err(|e| e.to_string())?;
    let nominal = check_value(&model, &req.property, Semantics::Adversarial)?;
    let points = req
        .eps
        .iter()
        .map(|&eps| {
            let solved = perturb(&model, eps)
                .map_err(|e| e.to_string())
                .and_then(|m| {
                    Ok((
                        check_value(&m, &req.property, Semantics::Adversarial)?,
                        check_value(&m, &req.property, Semantics::Controlled)?,
                    ))
                });
            match solved {
                Ok((a, c)) => SweepPoint {
                    eps,
                    adversarial: Some(a),
                    controlled: Some(c),
                    error: None,
                },
                Err(e) => SweepPoint {
                    eps,
                    adversarial: None,
                    controlled: None,
                    error: Some(e),
                },
            }
        })
        .collect();
    let response = SweepResponse {
        states: model.num_states(),
        nominal,
        points,
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

/// Nature's optimal resolution of one interval row.
pub fn inner_problem_json(request: &str) -> Result<String, String> {
    let req: InnerRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.bounds.len() != req.values.len() {
        return Err("one value per successor is needed".into());
    }
    let row =
        IntervalDistribution::new(req.bounds.iter().enumerate().map(|(k, b)| (k, b[0], b[1])));
    if row.len() != req.bounds.len() {
        return Err("every successor needs a positive upper bound".into());
    }
    let dir = if req.maximize {
        Direction::Maximize
    } else {
        Direction::Minimize
    };
    let (value, distribution) = solve_inner(&row, &req.values, dir).map_err(|e| e.to_string())?;
    let vertices = vertices(&row).map_err(|e| e.to_string())?;
    serde_json::to_string(&InnerResponse {
        value,
        distribution,
        vertices,
    })
    .map_err(|e| e.to_string())
}

/// Value and optimal strategies of a zero-sum matrix game given as rows of
/// numbers (rows split by newlines or `;`, entries by spaces or commas).
pub fn matrix_game_json(text: &str) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = text
        .split(['\n', ';'])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| {
            r.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: `{t}`")))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err("rows must be non-empty and of equal length".into());
    }
    let sol = solve_matrix(&Matrix::from_rows(&rows)).map_err(|e| e.to_string())?;
    serde_json::to_string(&MatrixResponse {
        value: sol.value,
        row: sol.x,
        column: sol.y,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn robot_sweep(request: &str) -> Result<String, JsValue> {
    robot_sweep_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn inner_problem(request: &str) -> Result<String, JsValue> {
    inner_problem_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn matrix_game(text: &str) -> Result<String, JsValue> {
    matrix_game_json(text).map_err(|e| JsValue::from_str(&e))
}
