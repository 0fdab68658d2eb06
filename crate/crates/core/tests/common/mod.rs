#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use akcy_core::{CompatibleTriple, Grid, GridSpec, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cube(n: usize) -> Arc<Grid> {
    Grid::new(GridSpec::cube(n).unwrap()).unwrap()
}

pub fn perturbed(n: usize) -> CompatibleTriple {
    CompatibleTriple::perturbed(&cube(n), 7, 0.3).unwrap()
}

/// Random mean-zero trigonometric polynomial with wave numbers up to `kmax`.
pub fn smooth_field(grid: &Arc<Grid>, seed: u64, kmax: i32, amplitude: f64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = *grid.spec();
    let modes: Vec<([f64; 4], f64, f64)> = (0..8)
        .map(|_| {
            let k = loop {
                let k: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-kmax..=kmax) as f64);
                if k.iter().any(|&v| v != 0.0) {
                    break k;
                }
            };
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    ScalarField::sample(grid, |x| {
        modes
            .iter()
            .map(|(k, c, p)| {
                let arg: f64 = (0..4).map(|a| k[a] * 2.0 * PI * x[a] / spec.periods[a]).sum();
                amplitude * c * (arg + p).sin() / 8.0
            })
            .sum()
    })
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
