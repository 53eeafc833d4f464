//! Central finite-difference gradients, used to validate the tape.

use crate::numerics::{ParamId, ParamStore, Scalar};

/// One parameter entry whose analytic and numeric gradients disagree.
#[derive(Clone, Debug)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries whose true gradient is zero from dividing by
/// round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Estimates `d loss / d param[index]` as `(f(x+h) - f(x-h)) / 2h`.
pub fn numeric_gradient<T: Scalar>(
    store: &mut ParamStore<T>,
    id: ParamId,
    index: usize,
    step: f64,
    loss: &mut impl FnMut(&ParamStore<T>) -> f64,
) -> f64 {
    let orig = store.get(id).data()[index];
    store.get_mut(id).data_mut()[index] = orig + T::of(step);
    let plus = loss(store);
    store.get_mut(id).data_mut()[index] = orig - T::of(step);
    let minus = loss(store);
    store.get_mut(id).data_mut()[index] = orig;
    (plus - minus) / (2.0 * step)
}

/// Compares every entry of every parameter. `analytic(store, id)` must
/// return the full gradient of the parameter.
pub fn check_all<T: Scalar>(
    store: &mut ParamStore<T>,
    step: f64,
    tolerance: f64,
    floor: f64,
    analytic: &[Vec<f64>],
    loss: &mut impl FnMut(&ParamStore<T>) -> f64,
) -> Vec<GradMismatch> {
    let ids: Vec<_> = store.ids().collect();
    let mut bad = Vec::new();
    for id in ids {
        for index in 0..store.get(id).len() {
            let numeric = numeric_gradient(store, id, index, step, loss);
            let a = analytic[id.index()][index];
            let rel = relative_error(a, numeric, floor);
            if rel > tolerance {
                bad.push(GradMismatch {
                    param: store.name(id).to_string(),
                    index,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    //! Finite-difference checks for every differentiable tape op.
    use super::*;
    use crate::numerics::lstm::{run_lstm, LstmParams};
    use crate::numerics::{NodeId, ParamGrads, Tape, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        for &(name, r, c) in shapes {
            let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.insert(name, Tensor::new(vec![r, c], data).unwrap());
        }
        s
    }

    fn analytic(store: &ParamStore<f64>, build: &impl Fn(&mut Tape<'_, f64>) -> NodeId) -> Vec<Vec<f64>> {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape);
        let grads: ParamGrads<f64> = tape.backward(loss).unwrap();
        store
            .ids()
            .map(|id| {
                grads
                    .get(id)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; store.get(id).len()])
            })
            .collect()
    }

    fn check(mut store: ParamStore<f64>, build: impl Fn(&mut Tape<'_, f64>) -> NodeId) {
        let a = analytic(&store, &build);
        let mut loss = |s: &ParamStore<f64>| {
            let mut tape = Tape::new(s);
            let l = build(&mut tape);
            tape.scalar(l)
        };
        let bad = check_all(&mut store, 1e-3, 1e-3, 1e-6, &a, &mut loss);
        assert!(bad.is_empty(), "{bad:#?}");
    }

    // Reduces an arbitrary node to a scalar with non-uniform weights so that
    // symmetric errors in the backward rule cannot cancel.
    fn reduce(t: &mut Tape<'_, f64>, x: NodeId) -> NodeId {
        let (r, c) = t.shape(x);
        let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.17 * i as f64).collect();
        let w = t.constant(r, c, w).unwrap();
        let y = t.mul(x, w).unwrap();
        t.mean(y)
    }

    #[test]
    fn matmul_gradient() {
        let s = random_store(&[("a", 3, 4), ("b", 4, 2)], 1);
        check(s, |t| {
            let a = t.param(ParamId(0));
            let b = t.param(ParamId(1));
            let y = t.matmul(a, b).unwrap();
            reduce(t, y)
        });
    }

    #[test]
    fn sum_of_product_gradient_is_ones_times_b_transpose() {
        let s = random_store(&[("a", 2, 3), ("b", 3, 2)], 2);
        let mut t = Tape::new(&s);
        let a = t.param(ParamId(0));
        let b = t.param(ParamId(1));
        let y = t.matmul(a, b).unwrap();
        let m = t.mean(y);
        let g = t.backward(m).unwrap();
        let bv = s.get(ParamId(1)).data();
        // d mean / dA[i][k] = sum_j B[k][j] / 4
        for i in 0..2 {
            for k in 0..3 {
                let expected = (bv[k * 2] + bv[k * 2 + 1]) / 4.0;
                assert!((g.get(ParamId(0)).unwrap()[i * 3 + k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_gradient() {
        let s = random_store(&[("x", 3, 4)], 3);
        check(s, |t| {
            let x = t.param(ParamId(0));
            let y = t.softmax_rows(x);
            reduce(t, y)
        });
    }

    #[test]
    fn elementwise_gradients() {
        let s = random_store(&[("x", 2, 3), ("y", 2, 3), ("b", 1, 3), ("s", 2, 1)], 4);
        check(s, |t| {
            let x = t.param(ParamId(0));
            let y = t.param(ParamId(1));
            let b = t.param(ParamId(2));
            let sc = t.param(ParamId(3));
            let p = t.mul(x, y).unwrap();
            let q = t.add_row(p, b).unwrap();
            let r = t.sigmoid(q);
            let u = t.tanh(y);
            let v = t.add(r, u).unwrap();
            let w = t.leaky_relu(v, 0.2);
            let z = t.row_scale(w, sc).unwrap();
            let rs = t.row_sum(z);
            let tr = t.transpose(z);
            let a = reduce(t, rs);
            let b = reduce(t, tr);
            let both = t.concat_rows(&[a, b]).unwrap();
            t.mean(both)
        });
    }

    #[test]
    fn structural_gradients() {
        let s = random_store(&[("x", 3, 4), ("y", 3, 2)], 5);
        check(s, |t| {
            let x = t.param(ParamId(0));
            let y = t.param(ParamId(1));
            let c = t.concat_cols(&[x, y, x]).unwrap();
            let g = t.gather_rows(c, &[2, 0, 2]).unwrap();
            let sl = t.slice_cols(g, 1, 6).unwrap();
            reduce(t, sl)
        });
    }

    #[test]
    fn weighted_ce_gradient() {
        let s = random_store(&[("logits", 3, 4)], 6);
        check(s, |t| {
            let x = t.param(ParamId(0));
            let p = t.softmax_rows(x);
            t.weighted_cross_entropy(p, &[0, 3, 1], &[0.1, 0.5, 0.7, 1.3]).unwrap()
        });
    }

    #[test]
    fn lstm_gradient_over_three_steps() {
        let s = random_store(
            &[("xs", 3, 2), ("w_ih", 2, 12), ("w_hh", 3, 12), ("bias", 1, 12)],
            7,
        );
        let p = LstmParams {
            w_ih: ParamId(1),
            w_hh: ParamId(2),
            bias: ParamId(3),
        };
        check(s, move |t| {
            let xs = t.param(ParamId(0));
            let f = run_lstm(t, xs, &p, false).unwrap();
            let b = run_lstm(t, xs, &p, true).unwrap();
            let h = t.concat_cols(&[f, b]).unwrap();
            reduce(t, h)
        });
    }

    #[test]
    fn f32_softmax_gradient_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::<f32>::new();
        let data = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        store.insert("x", Tensor::new(vec![2, 4], data).unwrap());
        let build = |t: &mut Tape<'_, f32>| {
            let x = t.param(ParamId(0));
            let y = t.softmax_rows(x);
            t.weighted_cross_entropy(y, &[1, 2], &[1.0; 4]).unwrap()
        };
        let grads = {
            let mut t = Tape::new(&store);
            let l = build(&mut t);
            t.backward(l).unwrap()
        };
        let a = vec![grads.get(ParamId(0)).unwrap().iter().map(|&v| v as f64).collect()];
        let mut loss = |s: &ParamStore<f32>| {
            let mut t = Tape::new(s);
            let l = build(&mut t);
            t.scalar(l) as f64
        };
        let bad = check_all(&mut store, 1e-3, 1e-3, 1e-2, &a, &mut loss);
        assert!(bad.is_empty(), "{bad:#?}");
    }
}
