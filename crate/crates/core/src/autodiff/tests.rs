use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

#[test]
fn square_value_and_gradient() {
    let (tape, y) = record(|t| {
        let x = t.param("x", Tensor::scalar(3.0));
        Ok(t.mul(x, x))
    })
    .unwrap();
    assert_eq!(tape.scalar(y), 9.0);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.param("x").unwrap().item(), 6.0);
}

#[test]
fn relu_of_negated_input() {
    let (tape, y) = record(|t| {
        let x = t.param("x", Tensor::scalar(2.0));
        let n = t.scale(x, -1.0);
        Ok(t.relu(n))
    })
    .unwrap();
    assert_eq!(tape.scalar(y), 0.0);
    assert_eq!(tape.backward(y).unwrap().param("x").unwrap().item(), 0.0);
}

#[test]
fn max_routes_gradient_to_winner() {
    let (tape, y) = record(|t| {
        let x = t.param("x", Tensor::scalar(2.0));
        let z = t.param("y", Tensor::scalar(5.0));
        let c = t.concat(&[x, z]);
        Ok(t.max(c))
    })
    .unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.param("x").unwrap().item(), 0.0);
    assert_eq!(g.param("y").unwrap().item(), 1.0);
}

#[test]
fn max_ties_split_equally() {
    let (tape, y) = record(|t| {
        let x = t.param("x", Tensor::vector(vec![1.0, 4.0, 4.0, -2.0]));
        Ok(t.max(x))
    })
    .unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.param("x").unwrap().data(), &[0.0, 0.5, 0.5, 0.0]);
}

#[test]
fn non_scalar_backward_is_an_error() {
    let (tape, y) = record(|t| Ok(t.param("x", Tensor::vector(vec![1.0, 2.0])))).unwrap();
    assert!(tape.backward(y).is_err());
}

#[test]
fn constants_receive_no_gradient() {
    let (tape, y) = record(|t| {
        let c = t.constant(Tensor::scalar(4.0));
        let x = t.param("x", Tensor::scalar(1.5));
        let p = t.mul(c, x);
        Ok(t.sum(p))
    })
    .unwrap();
    let g = tape.backward(y).unwrap();
    assert_eq!(g.param("x").unwrap().item(), 4.0);
    assert!(g.get(c_var(&tape)).is_none());
}

fn c_var(tape: &Tape) -> Var {
    assert!(!tape.is_empty());
    Var(0)
}

fn direct_dft(x: &[f64], k: usize) -> (f64, f64) {
    let n = x.len() as f64;
    x.iter().enumerate().fold((0.0, 0.0), |(re, im), (j, v)| {
        let a = 2.0 * std::f64::consts::PI * (k * j) as f64 / n;
        (re + v * a.cos(), im - v * a.sin())
    })
}

#[test]
fn dft_of_impulse_matches_direct_sum() {
    for pos in 0..8 {
        let mut x = vec![0.0; 8];
        x[pos] = 1.0;
        let bins: Vec<usize> = (0..8).collect();
        let basis = DftBasis::new(8, &bins);
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(x.clone()));
        let re = t.dft(v, &basis, false);
        let im = t.dft(v, &basis, true);
        for k in 0..8 {
            let (r, i) = direct_dft(&x, k);
            assert!((t.value(re).data()[k] - r).abs() < 1e-12);
            assert!((t.value(im).data()[k] - i).abs() < 1e-12);
        }
    }
}

#[test]
fn dft_gradient_is_linear_in_input_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, 20, 1);
    let basis = DftBasis::new(20, &[1, 2, 3, 5]);
    let grad_at = |alpha: f64| {
        let (tape, y) = record(|t| {
            let v = t.param("x", x.clone());
            let s = t.scale(v, alpha);
            let re = t.dft(s, &basis, false);
            let im = t.dft(s, &basis, true);
            let a = t.mul(re, re);
            let b = t.mul(im, im);
            let p = t.add(a, b);
            Ok(t.sum(p))
        })
        .unwrap();
        tape.backward(y).unwrap().param("x").unwrap().clone()
    };
    // |DFT(ax)|^2 is quadratic in a, so its gradient scales by a^2 * a' = a^2
    let g1 = grad_at(1.0);
    let g3 = grad_at(3.0);
    for (a, b) in g1.data().iter().zip(g3.data()) {
        assert!((9.0 * a - b).abs() < 1e-9 * (1.0 + b.abs()));
    }
    // the DFT itself: d/dx sum(Re DFT(a x)) = a * d/dx sum(Re DFT(x))
    let lin = |alpha: f64| {
        let (tape, y) = record(|t| {
            let v = t.param("x", x.clone());
            let s = t.scale(v, alpha);
            let re = t.dft(s, &basis, false);
            Ok(t.sum(re))
        })
        .unwrap();
        tape.backward(y).unwrap().param("x").unwrap().clone()
    };
    let (l1, l2) = (lin(1.0), lin(-2.5));
    for (a, b) in l1.data().iter().zip(l2.data()) {
        assert!((-2.5 * a - b).abs() < 1e-12);
    }
}

#[test]
fn polynomial_passes_grad_check() {
    let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
    let r = grad_check(&[x], 1e-5, |t, v| {
        let sq = t.mul(v[0], v[0]);
        let cube = t.mul(sq, v[0]);
        let s = t.add(sq, cube);
        Ok(t.sum(s))
    })
    .unwrap();
    assert!(r.passes(1e-6), "{r:?}");
    assert!(r.kinks.is_empty());
}

#[test]
fn abs_at_zero_is_flagged() {
    let x = Tensor::scalar(0.0);
    let r = grad_check(&[x], 1e-5, |t, v| {
        let p = t.relu(v[0]);
        let n = t.scale(v[0], -1.0);
        let q = t.relu(n);
        let a = t.add(p, q);
        Ok(t.sum(a))
    })
    .unwrap();
    assert_eq!(r.kinks, vec![(0, 0)]);
    assert_eq!(r.checked, 0);
}

#[test]
fn smooth_primitives_pass_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_tensor(&mut rng, 3, 4);
    let b = rand_tensor(&mut rng, 4, 5);
    let bias = rand_tensor(&mut rng, 3, 1);
    let pos = Tensor::vector((0..6).map(|_| rng.random_range(0.5..2.0)).collect());
    let r = grad_check(&[a, b, bias, pos], 1e-5, |t, v| {
        let m = t.matmul(v[0], v[1]);
        let m = t.add_col_bias(m, v[2]);
        let cols = t.im2col(m, 3);
        let sq = t.mul(cols, cols);
        let s1 = t.sum(sq);
        let l = t.log(v[3]);
        let r = t.sqrt(v[3]);
        let d = t.div(l, r);
        let sl = t.slice(d, 1, 4);
        let s2 = t.sum(sl);
        let k = t.mul_scalar(v[3], s2);
        let k = t.clamp_min(k, -100.0);
        let s3 = t.sum(k);
        let tot = t.add(s1, s3);
        let tot = t.sub(tot, s2);
        Ok(t.offset(tot, 1.0))
    })
    .unwrap();
    assert!(r.passes(1e-6), "{r:?}");
}

#[test]
fn correlation_nodes_pass_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, 12, 1);
    let b = rand_tensor(&mut rng, 12, 1);
    let long = rand_tensor(&mut rng, 30, 1);
    let r = grad_check(&[a, b, long], 1e-6, |t, v| {
        let c = t.ncc(v[0], v[1])?;
        let w = t.constant(Tensor::vector(
            (0..23).map(|i| (i as f64 * 0.37).sin()).collect(),
        ));
        let cw = t.mul(c, w);
        let s1 = t.sum(cw);
        let m = t.swm_ncc(v[0], v[2])?;
        let w2 = t.constant(Tensor::vector(
            (0..19).map(|i| (i as f64 * 0.21).cos()).collect(),
        ));
        let mw = t.mul(m, w2);
        let s2 = t.sum(mw);
        Ok(t.add(s1, s2))
    })
    .unwrap();
    assert!(r.passes(1e-5), "{r:?}");
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, 40, 1);
    let long = rand_tensor(&mut rng, 90, 1);
    let run = || {
        let (tape, y) = record(|t| {
            let v = t.param("x", x.clone());
            let l = t.param("l", long.clone());
            let m = t.swm_ncc(v, l)?;
            let s = t.sum(m);
            let r = t.relu(v);
            let q = t.sum(r);
            Ok(t.add(s, q))
        })
        .unwrap();
        let g = tape.backward(y).unwrap();
        (g.param("x").unwrap().clone(), g.param("l").unwrap().clone())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a1), bits(&a2));
    assert_eq!(bits(&b1), bits(&b2));
}
