//! Reverse-mode gradients of every differentiable op against central
//! finite differences on random shapes up to 32x32.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajgan::autodiff::gradcheck::{numeric_grads, relative_error};
use trajgan::autodiff::{lstm_step, LstmCell, ParamSet, Tape, Tensor, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

type OpFn = dyn Fn(&mut Tape, &[Var]) -> Var;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect())
}

/// Loss = sum(op(inputs) * projection); compares tape gradients with
/// finite differences for every input.
fn check(name: &str, inputs: Vec<Tensor>, op: &OpFn, rng: &mut ChaCha8Rng) {
    let mut ps = ParamSet::new();
    for (i, t) in inputs.iter().enumerate() {
        ps.insert(format!("in{i}"), t.clone());
    }
    let names: Vec<String> = ps.names().cloned().collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = names.iter().map(|n| tape.leaf(ps.get(n).unwrap().clone())).collect();
    let out = op(&mut tape, &vars);
    let shape = tape.value(out).shape().to_vec();
    let proj = Tensor::new(shape.clone(), (0..tape.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

    let project = |ps: &ParamSet| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = names.iter().map(|n| t.constant(ps.get(n).unwrap().clone())).collect();
        let o = op(&mut t, &vs);
        t.value(o).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };

    let p = tape.constant(proj.clone());
    let prod = tape.mul(out, p).unwrap();
    let loss = tape.sum(prod).unwrap();
    let grads = tape.backward(loss).unwrap();
    let numeric = numeric_grads(&ps, &names, STEP, project);
    for (n, v) in names.iter().zip(&vars) {
        let a = grads.get(*v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; ps.get(n).unwrap().len()]);
        let e = relative_error(&a, numeric.get(n).unwrap().data());
        assert!(e < TOL, "{name}: input {n} relative error {e:e}");
    }
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let pick = |rng: &mut ChaCha8Rng| if rng.random_bool(0.25) { 32 } else { rng.random_range(1..=12) };
    (pick(rng), pick(rng), pick(rng))
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..4 {
        let (m, k, n) = dims(&mut rng);
        let a = random(&mut rng, m, k);
        let b = random(&mut rng, k, n);
        check("matmul", vec![a.clone(), b], &|t, v| t.matmul(v[0], v[1]).unwrap(), &mut rng);
        let bt = random(&mut rng, n, k);
        check("matmul_t", vec![a.clone(), bt], &|t, v| t.matmul_t(v[0], v[1]).unwrap(), &mut rng);
        let a2 = random(&mut rng, m, k);
        check("add", vec![a.clone(), a2.clone()], &|t, v| t.add(v[0], v[1]).unwrap(), &mut rng);
        check("sub", vec![a.clone(), a2.clone()], &|t, v| t.sub(v[0], v[1]).unwrap(), &mut rng);
        check("mul", vec![a.clone(), a2.clone()], &|t, v| t.mul(v[0], v[1]).unwrap(), &mut rng);
        let row = Tensor::vector((0..k).map(|_| rng.random_range(-1.0..1.0)).collect());
        check("add_row", vec![a.clone(), row], &|t, v| t.add_row(v[0], v[1]).unwrap(), &mut rng);
        check("scale", vec![a.clone()], &|t, v| t.scale(v[0], -0.7).unwrap(), &mut rng);
        check("tanh", vec![a.clone()], &|t, v| t.tanh(v[0]).unwrap(), &mut rng);
        check("sigmoid", vec![a.clone()], &|t, v| t.sigmoid(v[0]).unwrap(), &mut rng);
        check("softmax", vec![a.clone()], &|t, v| t.softmax(v[0]).unwrap(), &mut rng);
        let mask: Vec<bool> = (0..m * k).map(|i| i % k == 0 || (i * 7) % 3 != 0).collect();
        check("masked_softmax", vec![a.clone()], &move |t, v| t.masked_softmax(v[0], Some(&mask)).unwrap(), &mut rng);
        check("concat", vec![a.clone(), random(&mut rng, m, n)], &|t, v| t.concat_cols(&[v[0], v[1]]).unwrap(), &mut rng);
        let start = k / 3;
        let len = (k - start).max(1).min(k - start);
        check("slice", vec![a.clone()], &move |t, v| t.slice_cols(v[0], start, len).unwrap(), &mut rng);
        let rows: Vec<usize> = (0..m + 2).map(|i| (i * 5) % m).collect();
        check("gather", vec![a.clone()], &move |t, v| t.gather_rows(v[0], &rows).unwrap(), &mut rng);
        let g = random(&mut rng, 3 * m, k);
        check("segment_mean", vec![g], &|t, v| t.segment_mean(v[0], 3).unwrap(), &mut rng);
        check("sum", vec![a.clone()], &|t, v| t.sum(v[0]).unwrap(), &mut rng);
        check("mean", vec![a.clone()], &|t, v| t.mean(v[0]).unwrap(), &mut rng);
        check("squared_error", vec![a.clone(), a2], &|t, v| t.squared_error(v[0], v[1]).unwrap(), &mut rng);
        let targets: Vec<f64> = (0..m * k).map(|i| (i % 2) as f64).collect();
        check("bce", vec![a], &move |t, v| t.bce_with_logits(v[0], &targets).unwrap(), &mut rng);
    }
}

#[test]
fn sum_of_sigmoid_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = random(&mut rng, 6, 5);
    let x = random(&mut rng, 5, 1);
    check(
        "sum(sigmoid(Wx))",
        vec![w, x],
        &|t, v| {
            let wx = t.matmul(v[0], v[1]).unwrap();
            let s = t.sigmoid(wx).unwrap();
            t.sum(s).unwrap()
        },
        &mut rng,
    );
}

#[test]
fn lstm_cell_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cell = LstmCell::new("cell", 5, 4);
    let mut ps = ParamSet::new();
    cell.init(&mut ps, &mut rng);
    let x = random(&mut rng, 3, 5);
    let h = random(&mut rng, 3, 4);
    let c = random(&mut rng, 3, 4);
    ps.insert("x", x);
    ps.insert("h", h);
    ps.insert("c", c);
    let names: Vec<String> = ps.names().cloned().collect();

    let run = |ps: &ParamSet, tape: &mut Tape, trainable: bool| {
        let bound = tape.bind(ps, |_| trainable);
        let (x, h, c) = (bound.get("x").unwrap(), bound.get("h").unwrap(), bound.get("c").unwrap());
        let (h2, c2) = cell.forward(tape, &bound, x, h, c).unwrap();
        let both = tape.concat_cols(&[h2, c2]).unwrap();
        let hs = tape.slice_cols(both, 0, 4).unwrap();
        (bound, tape.sum(hs).unwrap())
    };

    let mut tape = Tape::new();
    let (bound, loss) = run(&ps, &mut tape, true);
    let grads = tape.backward(loss).unwrap().into_params(&bound);
    let numeric = numeric_grads(&ps, &names, STEP, |p| {
        let mut t = Tape::new();
        let (_, l) = run(p, &mut t, false);
        t.value(l).item().unwrap()
    });
    for n in &names {
        let e = relative_error(grads.get(n).unwrap().data(), numeric.get(n).unwrap().data());
        assert!(e < TOL, "lstm {n}: {e:e}");
    }
}

#[test]
fn unbatched_step_agrees_with_batched_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cell = LstmCell::new("cell", 3, 4);
    let mut ps = ParamSet::new();
    cell.init(&mut ps, &mut rng);
    let x = [0.2, -0.4, 0.9];
    let h = [0.1, 0.0, -0.3, 0.5];
    let c = [1.0, -1.0, 0.5, 0.0];
    let (h1, c1) = lstm_step(&cell.extract(&ps).unwrap(), &x, &h, &c).unwrap();

    let mut tape = Tape::new();
    let bound = tape.bind(&ps, |_| false);
    let xv = tape.constant(Tensor::matrix(1, 3, x.to_vec()));
    let hv = tape.constant(Tensor::matrix(1, 4, h.to_vec()));
    let cv = tape.constant(Tensor::matrix(1, 4, c.to_vec()));
    let (h2, c2) = cell.forward(&mut tape, &bound, xv, hv, cv).unwrap();
    assert_eq!(tape.value(h2).data(), h1.as_slice());
    assert_eq!(tape.value(c2).data(), c1.as_slice());
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let (m, n, _) = dims(&mut rng);
        let mut a = random(&mut rng, m, n);
        a.data_mut().iter_mut().for_each(|v| *v *= 20.0);
        let mut tape = Tape::new();
        let x = tape.constant(a);
        let y = tape.softmax(x).unwrap();
        for r in 0..m {
            let row = tape.value(y).row(r);
            assert!(row.iter().all(|v| *v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn replay_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let a = random(&mut rng, 7, 9);
        let b = random(&mut rng, 9, 4);
        let mut tape = Tape::new();
        let (va, vb) = (tape.leaf(a), tape.leaf(b));
        let p = tape.matmul(va, vb).unwrap();
        let s = tape.softmax(p).unwrap();
        let t = tape.tanh(s).unwrap();
        let l = tape.sum(t).unwrap();
        let value = tape.value(l).item().unwrap().to_bits();
        let g = tape.backward(l).unwrap();
        (value, g.get(va).unwrap().clone(), g.get(vb).unwrap().clone())
    };
    let (v1, ga1, gb1) = run();
    let (v2, ga2, gb2) = run();
    assert_eq!(v1, v2);
    assert!(ga1.data().iter().zip(ga2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(gb1.data().iter().zip(gb2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn adam_with_zero_lr_is_inert() {
    use trajgan::autodiff::{AdamConfig, AdamState, ParamGrads};
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ps = ParamSet::new();
    ps.insert("w", random(&mut rng, 4, 4));
    let before = ps.clone();
    let names: Vec<String> = ps.names().cloned().collect();
    let mut adam = AdamState::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }, &ps, &names);
    for _ in 0..5 {
        let mut g = ParamGrads::default();
        g.insert("w".into(), random(&mut rng, 4, 4));
        adam.apply(&mut ps, g).unwrap();
    }
    assert_eq!(ps, before);
}
