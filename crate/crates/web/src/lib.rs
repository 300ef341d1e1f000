//! WebAssembly bindings for the static demo page in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(r: rba_gcn::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = clusterExplorer)]
pub fn cluster_explorer(utterances: usize, gamma: usize, rho: f64, neighborhood: &str, drift: f64, seed: u32) -> Result<String, JsError> {
    js(demo::cluster_explorer(utterances, gamma, rho, neighborhood, drift, seed.into()))
}

#[wasm_bindgen(js_name = similarityToCluster)]
pub fn similarity_to_cluster(u: Vec<f64>, o: Vec<f64>, gamma: usize, rho: f64, connected: bool) -> Result<String, JsError> {
    js(demo::similarity_to_cluster(&u, &o, gamma, rho, connected))
}

#[wasm_bindgen(js_name = oversmoothingCurve)]
pub fn oversmoothing_curve(utterances: usize, depth: usize, seed: u32) -> Result<String, JsError> {
    js(demo::oversmoothing_curve(utterances, depth, seed.into()))
}
