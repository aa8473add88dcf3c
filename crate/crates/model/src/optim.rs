//! Adafactor with its default settings: relative step size
//! `min(1e-2, 1/sqrt(t))` scaled by the parameter RMS, decay `1 - t^-0.8`,
//! factored second moments for matrices, update clipping at RMS 1.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::params::{Mat, ParamStore};
use crate::tape::Grads;

const EPS1: f64 = 1e-30;
const EPS2: f64 = 1e-3;
const CLIP: f64 = 1.0;
const DECAY: f64 = -0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Moment {
    Factored { row: Vec<f64>, col: Vec<f64> },
    Full(Mat),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Adafactor {
    step: u64,
    moments: Vec<Option<Moment>>,
}

fn rms(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    (m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64).sqrt()
}

impl Adafactor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.step += 1;
        let t = self.step as f64;
        let rel_step = (1.0 / t.sqrt()).min(1e-2);
        let beta2 = 1.0 - t.powf(DECAY);
        self.moments.resize(store.len(), None);
        for id in 0..store.len() {
            let Some(g) = grads.get(id) else { continue };
            let p = store.value(id);
            let lr = rel_step * rms(p).max(EPS2);
            let (rows, cols) = g.dim();
            let sq = g.mapv(|v| v * v + EPS1);
            let moment = self.moments[id].get_or_insert_with(|| {
                if rows > 1 && cols > 1 {
                    Moment::Factored { row: vec![0.0; rows], col: vec![0.0; cols] }
                } else {
                    Moment::Full(Mat::zeros((rows, cols)))
                }
            });
            let mut update = match moment {
                Moment::Factored { row, col } => {
                    let rm = sq.mean_axis(Axis(1)).expect("non-empty");
                    let cm = sq.mean_axis(Axis(0)).expect("non-empty");
                    for (r, v) in row.iter_mut().zip(rm.iter()) {
                        *r = beta2 * *r + (1.0 - beta2) * v;
                    }
                    for (c, v) in col.iter_mut().zip(cm.iter()) {
                        *c = beta2 * *c + (1.0 - beta2) * v;
                    }
                    let row_mean = row.iter().sum::<f64>() / rows as f64;
                    Mat::from_shape_fn((rows, cols), |(i, j)| {
                        let r = (row[i] / row_mean).sqrt().recip();
                        let c = col[j].sqrt().recip();
                        g[[i, j]] * r * c
                    })
                }
                Moment::Full(v) => {
                    v.zip_mut_with(&sq, |a, &b| *a = beta2 * *a + (1.0 - beta2) * b);
                    Mat::from_shape_fn((rows, cols), |k| g[k] / v[k].sqrt())
                }
            };
            let scale = lr / (rms(&update) / CLIP).max(1.0);
            update.mapv_inplace(|u| u * scale);
            *store.value_mut(id) -= &update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn first_step_moves_against_the_gradient() {
        let mut s = ParamStore::new();
        let w = s.add("w", 3, 2, Init::Uniform, 1);
        let b = s.add("b", 1, 2, Init::Zeros, 1);
        let before = s.clone();
        let mut g = Grads::zeros(2);
        g.0[w] = Some(Mat::from_elem((3, 2), 0.5));
        g.0[b] = Some(Mat::from_elem((1, 2), -2.0));
        let mut opt = Adafactor::new();
        opt.step(&mut s, &g);
        assert!(s.value(w).iter().zip(before.value(w).iter()).all(|(a, b)| a < b));
        // Zero parameters use the 1e-3 scale floor: step 1e-2 * 1e-3.
        for v in s.value(b).iter() {
            assert!((v - 1e-5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = ParamStore::new();
        let w = s.add("w", 4, 4, Init::Uniform, 3);
        let target = Mat::from_shape_fn((4, 4), |(i, j)| (i as f64 - j as f64) * 0.1);
        let loss = |s: &ParamStore| (s.value(w) - &target).mapv(|v| v * v).sum();
        let start = loss(&s);
        let mut opt = Adafactor::new();
        for _ in 0..500 {
            let mut g = Grads::zeros(1);
            g.0[w] = Some((s.value(w) - &target) * 2.0);
            opt.step(&mut s, &g);
        }
        assert!(loss(&s) < start * 0.05, "{} -> {}", start, loss(&s));
    }
}
