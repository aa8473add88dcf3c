//! Layer outputs against direct loop implementations.

use cgt_model::layers::{causal_mask, key_mask, positional_encoding, Attention, Conv, Gating};
use cgt_model::{Mat, ParamStore, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros((a.nrows(), b.ncols()));
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            out[[i, j]] = (0..a.ncols()).map(|k| a[[i, k]] * b[[k, j]]).sum();
        }
    }
    out
}

#[test]
fn positional_encoding_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let d = 2 * rng.gen_range(1..=256);
        let b = rng.gen_range(0..12);
        let i = rng.gen_range(0..512);
        let j = rng.gen_range(0..d / 2);
        let pe = positional_encoding(b, i, d);
        let rate = (-((2 * j) as f64) / d as f64 * 10000f64.ln()).exp();
        let angle = (i + b) as f64 * rate;
        assert!((pe[2 * j] - angle.sin()).abs() < 1e-12, "b={b} i={i} j={j} d={d}");
        assert!((pe[2 * j + 1] - angle.cos()).abs() < 1e-12, "b={b} i={i} j={j} d={d}");
    }
}

#[test]
fn gating_weights_are_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (d, heads, cw, l) = (16, 4, 12, 1000);
    let mut store = ParamStore::new();
    let g = Gating::new(&mut store, "gate", d, cw, heads, 3);
    let y = random(l, d, &mut rng);
    let c = random(l, cw, &mut rng);
    let mut t = Tape::new(&store);
    let (yv, cv) = (t.constant(y.clone()), t.constant(c.clone()));
    let out = g.forward(&mut t, yv, cv);
    let (ay, ac) = (t.value(out.alpha_y).clone(), t.value(out.alpha_c).clone());
    for i in 0..l {
        for h in 0..heads {
            assert!((ay[[i, h]] + ac[[i, h]] - 1.0).abs() < 1e-6);
            assert!((0.0..=1.0).contains(&ay[[i, h]]));
        }
    }

    // Oracle: per head, a two-way softmax over the word and character scores
    // mixes the word and character values.
    let p = |id| store.value(id).clone();
    let n = matmul(&c, &p(g.wc));
    let q = matmul(&y, &p(g.w[0]));
    let (ky, kc) = (matmul(&y, &p(g.w[1])), matmul(&n, &p(g.w[2])));
    let (vy, vc) = (matmul(&y, &p(g.w[3])), matmul(&n, &p(g.w[4])));
    let dk = d / heads;
    let mut mixed = Mat::zeros((l, d));
    for i in 0..l {
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            let sy: f64 = cols.clone().map(|e| q[[i, e]] * ky[[i, e]]).sum();
            let sc: f64 = cols.clone().map(|e| q[[i, e]] * kc[[i, e]]).sum();
            let (ey, ec) = (sy.exp(), sc.exp());
            let a = ey / (ey + ec);
            assert!((a - ay[[i, h]]).abs() < 1e-9);
            for e in cols {
                mixed[[i, e]] = a * vy[[i, e]] + (1.0 - a) * vc[[i, e]];
            }
        }
    }
    let expect = matmul(&mixed, &p(g.wh));
    let got = t.value(out.out);
    assert!(got.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn attention_rows_are_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20 {
        let heads = [1, 2, 4][trial % 3];
        let d = heads * rng.gen_range(1..=4);
        let (lq, lk) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "att", d, heads, trial as u64);
        let mut t = Tape::new(&store);
        let q = t.constant(random(lq, d, &mut rng));
        let k = t.constant(random(lk, d, &mut rng));
        let valid: Vec<bool> = (0..lk).map(|i| i == 0 || rng.gen_bool(0.7)).collect();
        let mask = key_mask(lq, &valid);
        let out = att.forward(&mut t, q, k, Some(&mask));
        assert_eq!(out.weights.len(), heads);
        for w in &out.weights {
            for (r, row) in t.value(*w).rows().into_iter().enumerate() {
                assert!((row.sum() - 1.0).abs() < 1e-6, "row {r}");
                for (j, &v) in row.iter().enumerate() {
                    assert!(valid[j] || v == 0.0);
                }
            }
        }
    }
}

#[test]
fn single_head_attention_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (d, l) = (5, 4);
    let mut store = ParamStore::new();
    let att = Attention::new(&mut store, "att", d, 1, 0);
    let x = random(l, d, &mut rng);
    let mut t = Tape::new(&store);
    let xv = t.constant(x.clone());
    let mask = causal_mask(l);
    let out = att.forward(&mut t, xv, xv, Some(&mask));
    let got = t.value(out.out).clone();

    let p = |id| store.value(id).clone();
    let (q, k, v) = (matmul(&x, &p(att.wq)), matmul(&x, &p(att.wk)), matmul(&x, &p(att.wv)));
    let mut head = Mat::zeros((l, d));
    for i in 0..l {
        let scores: Vec<f64> =
            (0..=i).map(|j| (0..d).map(|e| q[[i, e]] * k[[j, e]]).sum::<f64>() / (d as f64).sqrt()).collect();
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for (j, s) in scores.iter().enumerate() {
            let w = (s - max).exp() / z;
            for e in 0..d {
                head[[i, e]] += w * v[[j, e]];
            }
        }
    }
    let expect = matmul(&head, &p(att.wh));
    assert!(got.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
}

fn naive_conv(x: &Mat, w: &Mat, k: usize, causal: bool) -> Mat {
    let (l, d) = x.dim();
    let first = if causal { -(k as isize - 1) } else { -((k as isize - 1) / 2) };
    let mut out = Mat::zeros((l, d));
    for i in 0..l {
        for s in 0..k {
            let src = i as isize + first + s as isize;
            if src < 0 || src >= l as isize {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    out[[i, b]] += x[[src as usize, a]] * w[[s * d + a, b]];
                }
            }
        }
    }
    out
}

#[test]
fn convolution_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (l, k, causal) in [(5, 3, false), (5, 3, true), (6, 5, false), (1, 3, false), (2, 1, false)] {
        let d = 4;
        let mut store = ParamStore::new();
        let conv = Conv::new(&mut store, "conv", d, k, causal, 1);
        let x = random(l, d, &mut rng);
        let mut t = Tape::new(&store);
        let xv = t.constant(x.clone());
        let out = conv.forward(&mut t, xv);
        let expect = naive_conv(&x, store.value(conv.w), k, causal);
        let got = t.value(out);
        assert!(got.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-12), "l={l} k={k} causal={causal}");
    }
}

#[test]
fn length_one_convolution_uses_the_centre_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let d = 3;
    let mut store = ParamStore::new();
    let conv = Conv::new(&mut store, "conv", d, 3, false, 2);
    let x = random(1, d, &mut rng);
    let mut t = Tape::new(&store);
    let xv = t.constant(x.clone());
    let out = conv.forward(&mut t, xv);
    let centre = store.value(conv.w).slice(ndarray::s![d..2 * d, ..]).to_owned();
    let expect = matmul(&x, &centre);
    assert!(t.value(out).iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
}

mod properties {
    use super::{positional_encoding, Mat, ParamStore, Tape};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn masked_softmax_rows_are_distributions(
            rows in 1usize..6,
            cols in 1usize..8,
            seed in any::<u64>(),
            keep in proptest::collection::vec(any::<bool>(), 48),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-30.0..30.0));
            let mask = ndarray::Array2::from_shape_fn((rows, cols), |(i, j)| keep[i * cols + j] || j == 0);
            let store = ParamStore::new();
            let mut t = Tape::new(&store);
            let v = t.constant(x);
            let s = t.softmax(v, Some(&mask));
            for (i, row) in t.value(s).rows().into_iter().enumerate() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                for (j, p) in row.iter().enumerate() {
                    prop_assert!(*p >= 0.0);
                    prop_assert!(mask[[i, j]] || *p == 0.0);
                }
            }
        }

        #[test]
        fn positional_entries_are_unit_pairs(b in 0usize..20, i in 0usize..600, half in 1usize..64) {
            let pe = positional_encoding(b, i, 2 * half);
            for j in 0..half {
                prop_assert!((pe[2 * j].powi(2) + pe[2 * j + 1].powi(2) - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(positional_encoding(b, i, 2 * half), positional_encoding(0, i + b, 2 * half));
        }
    }
}
