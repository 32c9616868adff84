use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub fn nystrom_error_curve(kernel: &str, param: f64, sampler: &str, n: u32, seed: u32) -> String {
    crate::nystrom_error_curve(kernel, param, sampler, n as usize, seed as u64)
}

#[wasm_bindgen]
pub fn circles_decision_map(sigma: f64, c_frac: f64, k: u32, noise: f64, grid: u32, seed: u32) -> String {
    crate::circles_decision_map(sigma, c_frac, k as usize, noise, grid as usize, seed as u64)
}

#[wasm_bindgen]
pub fn kernel_spectrum(kernel: &str, param: f64, sampler: &str, c: u32, seed: u32) -> String {
    crate::kernel_spectrum(kernel, param, sampler, c as usize, seed as u64)
}
