//! Known-effect designs for the cross-sectional and per-wave estimators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::panel::PanelDataset;

/// Arrays of one simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub x: Matrix,
}

struct Gauss(ChaCha8Rng);

impl Gauss {
    fn new(seed: u64) -> Self {
        Gauss(ChaCha8Rng::seed_from_u64(seed))
    }

    fn draw(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    fn matrix(&mut self, n: usize, p: usize) -> Matrix {
        let data = (0..n * p).map(|_| self.draw()).collect();
        Matrix::from_vec(n, p, data).unwrap()
    }
}

/// `X ~ N(0, I₁₀)`, `D = sin(X₁) + 0.5·X₂ + N(0,1)`, `Y = θ·D + X₁² + N(0,1)`.
pub fn nonlinear_plm(n: usize, theta: f64, seed: u64) -> Sample {
    let mut g = Gauss::new(seed);
    let x = g.matrix(n, 10);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (x1, x2) = (x[(i, 0)], x[(i, 1)]);
        let di = libm::sin(x1) + 0.5 * x2 + g.draw();
        d.push(di);
        y.push(theta * di + x1 * x1 + g.draw());
    }
    Sample { y, d, z: None, x }
}

/// `X ~ N(0, I_p)`, `D = Σ_j 0.5·X_j/j + N(0,1)`, `Y = θ·D + Σ_j (−1)^j X_j + N(0,1)`.
pub fn linear_plm(n: usize, p: usize, theta: f64, seed: u64) -> Sample {
    let mut g = Gauss::new(seed);
    let x = g.matrix(n, p);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let m: f64 = row.iter().enumerate().map(|(j, v)| 0.5 * v / (j + 1) as f64).sum();
        let l: f64 = row.iter().enumerate().map(|(j, v)| if j % 2 == 0 { *v } else { -v }).sum();
        let di = m + g.draw();
        d.push(di);
        y.push(theta * di + l + g.draw());
    }
    Sample { y, d, z: None, x }
}

/// Endogenous design with an unobserved confounder `c` shared by `D` and `Y`:
/// `Z, c ~ N(0,1)`, `X ~ N(0, I₃)`,
/// `D = π·Z + 0.5·X₁ − 0.3·X₂ + c + N(0,1)`, `Y = θ·D + X₁ + 0.5·X₃ + c + N(0,1)`.
/// `π = 0` makes the instrument pure noise.
pub fn endogenous_iv(n: usize, theta: f64, strength: f64, seed: u64) -> Sample {
    let mut g = Gauss::new(seed);
    let x = g.matrix(n, 3);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let (x1, x2, x3) = (x[(i, 0)], x[(i, 1)], x[(i, 2)]);
        let zi = g.draw();
        let c = g.draw();
        let di = strength * zi + 0.5 * x1 - 0.3 * x2 + c + g.draw();
        y.push(theta * di + x1 + 0.5 * x3 + c + g.draw());
        d.push(di);
        z.push(zi);
    }
    Sample { y, d, z: Some(z), x }
}

/// Balanced panel with wave-specific treatment effects `effects[k]` in wave
/// `waves[k]`: columns `x1`, `x2`, `d`, `y` with
/// `D = 0.6·X₁ + N(0,1)`, `Y = θ_w·D + X₁ − X₂ + N(0,1)`.
pub fn per_wave_panel(households: usize, waves: &[i64], effects: &[f64], seed: u64) -> Result<PanelDataset> {
    if waves.len() != effects.len() || waves.is_empty() {
        return Err(invalid("one effect per wave required"));
    }
    let mut g = Gauss::new(seed);
    let rows = households * waves.len();
    let mut ids: Vec<String> = Vec::with_capacity(rows);
    let mut years = Vec::with_capacity(rows);
    let (mut x1, mut x2, mut d, mut y) = (vec![], vec![], vec![], vec![]);
    for h in 0..households {
        for (w, theta) in waves.iter().zip(effects) {
            let (a, b) = (g.draw(), g.draw());
            let di = 0.6 * a + g.draw();
            ids.push(format!("h{h}"));
            years.push(*w);
            x1.push(a);
            x2.push(b);
            d.push(di);
            y.push(theta * di + a - b + g.draw());
        }
    }
    PanelDataset::new(ids, years)?
        .with_column("x1", x1)?
        .with_column("x2", x2)?
        .with_column("d", d)?
        .with_column("y", y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let a = nonlinear_plm(50, 0.5, 1);
        assert_eq!((a.x.nrows(), a.x.ncols(), a.y.len()), (50, 10, 50));
        assert_eq!(a, nonlinear_plm(50, 0.5, 1));
        assert!(endogenous_iv(10, 0.7, 1.0, 2).z.is_some());
        let ds = per_wave_panel(20, &[2015, 2017, 2019], &[0.5, 0.3, 0.4], 3).unwrap();
        assert_eq!(ds.len(), 60);
        assert!(ds.is_balanced());
        assert!(per_wave_panel(20, &[2015], &[0.5, 0.3], 3).is_err());
    }
}
