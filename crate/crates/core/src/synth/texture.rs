use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (angular cells, radial cells, amplitude) for each octave.
const OCTAVES: [(usize, usize, f64); 3] = [(32, 4, 1.0), (64, 8, 0.8), (128, 16, 0.6)];

struct Octave {
    angular: usize,
    radial: usize,
    amplitude: f64,
    /// `(radial + 1) × angular` lattice values, periodic in angle.
    lattice: Vec<f64>,
}

impl Octave {
    fn eval(&self, t: f64, phi: f64) -> f64 {
        let u = phi.rem_euclid(TAU) / TAU * self.angular as f64;
        let v = t.clamp(0.0, 1.0) * self.radial as f64;
        let (u0, v0) = (u.floor(), v.floor().min(self.radial as f64 - 1.0));
        let (fu, fv) = (smooth(u - u0), smooth(v - v0));
        let i0 = u0 as usize % self.angular;
        let i1 = (i0 + 1) % self.angular;
        let j0 = v0 as usize;
        let j1 = j0 + 1;
        let at = |i: usize, j: usize| self.lattice[j * self.angular + i];
        let a = at(i0, j0) + (at(i1, j0) - at(i0, j0)) * fu;
        let b = at(i0, j1) + (at(i1, j1) - at(i0, j1)) * fu;
        a + (b - a) * fv
    }
}

#[inline]
fn smooth(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

/// Seeded multi-octave value noise over rubber-sheet coordinates
/// (`t` ∈ [0, 1] from pupil to iris boundary, `phi` in radians). The field is
/// scaled to zero mean and unit variance.
pub struct IrisTexture {
    octaves: Vec<Octave>,
    offset: f64,
    gain: f64,
}

impl IrisTexture {
    pub fn new(identity_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(identity_seed);
        let octaves = OCTAVES
            .iter()
            .map(|&(angular, radial, amplitude)| Octave {
                angular,
                radial,
                amplitude,
                lattice: (0..(radial + 1) * angular)
                    .map(|_| rng.random_range(-1.0..=1.0))
                    .collect(),
            })
            .collect();
        let mut tex = Self {
            octaves,
            offset: 0.0,
            gain: 1.0,
        };
        let (rows, cols) = (48, 384);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let v = tex.raw((i as f64 + 0.5) / rows as f64, TAU * j as f64 / cols as f64);
                sum += v;
                sq += v * v;
            }
        }
        let n = (rows * cols) as f64;
        let mean = sum / n;
        let var = (sq / n - mean * mean).max(1e-12);
        tex.offset = mean;
        tex.gain = 1.0 / var.sqrt();
        tex
    }

    fn raw(&self, t: f64, phi: f64) -> f64 {
        self.octaves.iter().map(|o| o.amplitude * o.eval(t, phi)).sum()
    }

    pub fn eval(&self, t: f64, phi: f64) -> f64 {
        (self.raw(t, phi) - self.offset) * self.gain
    }
}
