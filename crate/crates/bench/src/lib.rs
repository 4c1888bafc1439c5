//! Fixed instances shared by the benchmarks.

use guessd_core::{DistortionModel, SolverControls};

/// Three-symbol source with an asymmetric distortion matrix.
pub fn three_symbol() -> (Vec<f64>, DistortionModel) {
    let model = DistortionModel::from_matrix(
        vec![vec![0.0, 0.6218, 0.9047], vec![0.3172, 0.0, 0.5561], vec![0.7794, 0.2816, 0.0]],
        0.18,
    )
    .expect("valid model");
    (vec![0.4637, 0.3389, 0.1974], model)
}

/// Binary Hamming source with budget `delta`.
pub fn binary(delta: f64) -> (Vec<f64>, DistortionModel) {
    (vec![0.75, 0.25], DistortionModel::hamming(2, delta).expect("valid model"))
}

pub fn controls() -> SolverControls {
    SolverControls { seed: 17, ..SolverControls::default() }
}
