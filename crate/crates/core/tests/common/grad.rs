//! Finite-difference checks of every differentiable piece, one random
//! configuration per seed.

use alphaforge::dsl::{Grammar, Vocabulary};
use alphaforge::miner::{generator_pass, standard_normal_batch, GeneratorObjective};
use alphaforge::nn::{
    cosine_similarity, gumbel_backward, gumbel_softmax_masked, mean_cosine_similarity, relaxed_given, rmse,
    Activation, Dense, Input, LinearSurrogate, Mlp, MlpGrad, NetSpec,
};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::check_gradient;

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    standard_normal_batch(r, c, rng)
}

fn weighted_sum(c: &Array2<f64>, y: &Array2<f64>) -> f64 {
    (c * y).sum()
}

fn flat_params(net: &Mlp) -> Vec<f64> {
    let mut n = net.clone();
    n.tensors_mut().iter().flat_map(|t| t.iter().copied()).collect()
}

fn with_params(net: &Mlp, p: &[f64]) -> Mlp {
    let mut n = net.clone();
    let mut k = 0;
    for t in n.tensors_mut() {
        for v in t.iter_mut() {
            *v = p[k];
            k += 1;
        }
    }
    n
}

fn flat_grad(g: &MlpGrad) -> Vec<f64> {
    g.tensors().iter().flat_map(|t| t.iter().copied()).collect()
}

pub fn dense(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i, o, b) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..5));
    let mut layer = Dense::new(i, o, &mut rng);
    layer.b = Array1::from_shape_fn(o, |_| rng.random::<f64>() - 0.5);
    let x = randn(&mut rng, b, i);
    let c = randn(&mut rng, b, o);
    let (g, dx) = layer.backward(&x.view(), &c.view());
    let wv: Vec<f64> = layer.w.iter().copied().collect();
    check_gradient(
        |p| {
            let mut l = layer.clone();
            l.w.iter_mut().zip(p).for_each(|(a, b)| *a = *b);
            weighted_sum(&c, &l.forward(&x.view()))
        },
        &wv,
        g.w.as_slice().unwrap(),
    )
    .map_err(|e| format!("dense w: {e}"))?;
    check_gradient(
        |p| {
            let mut l = layer.clone();
            l.b.iter_mut().zip(p).for_each(|(a, b)| *a = *b);
            weighted_sum(&c, &l.forward(&x.view()))
        },
        layer.b.as_slice().unwrap(),
        g.b.as_slice().unwrap(),
    )
    .map_err(|e| format!("dense b: {e}"))?;
    let xv: Vec<f64> = x.iter().copied().collect();
    check_gradient(
        |p| {
            let xp = Array2::from_shape_vec((b, i), p.to_vec()).unwrap();
            weighted_sum(&c, &layer.forward(&xp.view()))
        },
        &xv,
        dx.as_standard_layout().as_slice().unwrap(),
    )
    .map_err(|e| format!("dense x: {e}"))?;

    // 0/1 input given by active columns
    let active: Vec<Vec<usize>> = (0..b).map(|_| (0..i).filter(|_| rng.random::<bool>()).collect()).collect();
    let gs = layer.backward_sparse(&active, &c.view());
    check_gradient(
        |p| {
            let mut l = layer.clone();
            l.w.iter_mut().zip(p).for_each(|(a, b)| *a = *b);
            weighted_sum(&c, &l.forward_sparse(&active))
        },
        &wv,
        gs.w.as_slice().unwrap(),
    )
    .map_err(|e| format!("sparse dense w: {e}"))
}

fn clear_of_kinks(net: &Mlp, x: &Array2<f64>) -> bool {
    let layers = net.layers();
    let mut h = x.clone();
    for (k, l) in layers.iter().enumerate() {
        let z = l.forward(&h.view());
        if k + 1 == layers.len() {
            break;
        }
        if z.iter().any(|v| v.abs() < 1e-3) {
            return false;
        }
        h = z.mapv(|v| v.max(0.0));
    }
    true
}

pub fn mlp(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(2..5);
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..7)).collect();
    let act = if seed.is_multiple_of(2) { Activation::Relu } else { Activation::Identity };
    let mut net = Mlp::new(NetSpec::new(widths.clone(), act).unwrap(), &mut rng).unwrap();
    let p0: Vec<f64> = flat_params(&net).iter().map(|v| v + 0.1 * (rng.random::<f64>() - 0.5)).collect();
    net = with_params(&net, &p0);
    let b = rng.random_range(1..5);
    // keep ReLU pre-activations away from the kink
    let mut x = randn(&mut rng, b, widths[0]);
    for _ in 0..1000 {
        if clear_of_kinks(&net, &x) {
            break;
        }
        x = randn(&mut rng, b, widths[0]);
    }
    let c = randn(&mut rng, b, widths[depth - 1]);
    let tr = net.forward(Input::Dense(x.view())).unwrap();
    let (g, dx) = net.backward(Input::Dense(x.view()), &tr, &c.view()).unwrap();
    check_gradient(
        |p| weighted_sum(&c, &with_params(&net, p).predict(Input::Dense(x.view())).unwrap()),
        &p0,
        &flat_grad(&g),
    )
    .map_err(|e| format!("mlp params {widths:?}: {e}"))?;
    let xv: Vec<f64> = x.iter().copied().collect();
    check_gradient(
        |p| {
            let xp = Array2::from_shape_vec(x.raw_dim(), p.to_vec()).unwrap();
            weighted_sum(&c, &net.predict(Input::Dense(xp.view())).unwrap())
        },
        &xv,
        dx.unwrap().as_standard_layout().as_slice().unwrap(),
    )
    .map_err(|e| format!("mlp input {widths:?}: {e}"))
}

pub fn losses(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..9);
    let pred: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let target: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let (_, g) = rmse(&pred, &target);
    check_gradient(|p| rmse(p, &target).0, &pred, &g).map_err(|e| format!("rmse: {e}"))?;
    let (_, da, db) = cosine_similarity(&pred, &target);
    check_gradient(|p| cosine_similarity(p, &target).0, &pred, &da).map_err(|e| format!("cosine a: {e}"))?;
    check_gradient(|p| cosine_similarity(&pred, p).0, &target, &db).map_err(|e| format!("cosine b: {e}"))?;
    let rows = rng.random_range(1..4);
    let a = randn(&mut rng, rows, n);
    let b = randn(&mut rng, rows, n);
    let (_, ga, _) = mean_cosine_similarity(&a.view(), &b.view());
    let av: Vec<f64> = a.iter().copied().collect();
    check_gradient(
        |p| mean_cosine_similarity(&Array2::from_shape_vec((rows, n), p.to_vec()).unwrap().view(), &b.view()).0,
        &av,
        ga.as_slice().unwrap(),
    )
    .map_err(|e| format!("mean cosine: {e}"))
}

pub fn relaxed_gumbel(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(3..9);
    let grammar = Grammar::new(Vocabulary::default(), s);
    let d = grammar.vocab().len();
    let tau = rng.random_range(0.5..2.0);
    let logits = randn(&mut rng, d, s);
    let sample = gumbel_softmax_masked(&logits.view(), &grammar, tau, Some(&mut rng));
    let c = randn(&mut rng, d, s);
    let analytic = gumbel_backward(&sample, &c.view());
    let lv: Vec<f64> = logits.iter().copied().collect();
    check_gradient(
        |p| {
            let l = Array2::from_shape_vec((d, s), p.to_vec()).unwrap();
            weighted_sum(&c, &relaxed_given(&l.view(), &sample.mask, &sample.noise, tau))
        },
        &lv,
        analytic.as_slice().unwrap(),
    )
    .map_err(|e| format!("relaxed gumbel (S={s}, tau={tau:.2}): {e}"))
}

/// Generator gradient through both diversity terms, with a flat surrogate
/// so the hard straight-through term vanishes. Coordinates whose
/// perturbation changes a hard choice are skipped.
pub fn generator_diversity(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(3..6);
    let grammar = Grammar::new(Vocabulary::default(), s);
    let d = grammar.vocab().len();
    let q = rng.random_range(2..5);
    let g = Mlp::new(NetSpec::new(vec![q, rng.random_range(2..6), d * s], Activation::Identity).unwrap(), &mut rng)
        .unwrap();
    let p = LinearSurrogate { weights: Array1::zeros(d * s), bias: 0.0 };
    let obj = GeneratorObjective { lambda_onehot: rng.random_range(0.05..1.0), lambda_hidden: rng.random_range(0.05..1.0), temperature: rng.random_range(0.5..2.0) };
    let b = rng.random_range(1..4);
    let z1 = randn(&mut rng, b, q);
    let z2 = randn(&mut rng, b, q);
    let (s1, s2) = (rng.random::<u64>(), rng.random::<u64>());
    let run = |net: &Mlp| {
        let mut n1 = ChaCha8Rng::seed_from_u64(s1);
        let mut n2 = ChaCha8Rng::seed_from_u64(s2);
        generator_pass(net, &p, &z1.view(), &z2.view(), &grammar, &obj, Some(&mut n1), Some(&mut n2)).unwrap()
    };
    let base = run(&g);
    let picks = |pass: &alphaforge::miner::GeneratorPass| pass.programs().map(|x| x.to_vec()).collect::<Vec<_>>();
    let base_picks = picks(&base);
    let p0 = flat_params(&g);
    let grad = flat_grad(&base.grads);
    let h = 1e-4;
    let mut theta = p0.clone();
    let mut checked = 0;
    for k in 0..p0.len() {
        theta[k] = p0[k] + h;
        let up = run(&with_params(&g, &theta));
        theta[k] = p0[k] - h;
        let dn = run(&with_params(&g, &theta));
        theta[k] = p0[k];
        if picks(&up) != base_picks || picks(&dn) != base_picks {
            continue;
        }
        checked += 1;
        let num = (up.loss - dn.loss) / (2.0 * h);
        let abs = (num - grad[k]).abs();
        if abs > 1e-6 && abs / num.abs().max(grad[k].abs()) > 1e-4 {
            return Err(format!("generator param {k}: analytic {} numeric {num}", grad[k]));
        }
    }
    if checked * 2 < p0.len() {
        return Err(format!("only {checked} of {} coordinates kept their hard choices", p0.len()));
    }
    Ok(())
}

/// Runs every check on `n` configurations; returns the failures.
pub fn suite(n: u64) -> Vec<String> {
    type Check = fn(u64) -> Result<(), String>;
    let checks: [(&str, Check); 5] = [
        ("dense", dense),
        ("mlp", mlp),
        ("losses", losses),
        ("relaxed_gumbel", relaxed_gumbel),
        ("generator", generator_diversity),
    ];
    let mut failures = Vec::new();
    for (name, f) in checks {
        for seed in 0..n {
            if let Err(e) = f(seed) {
                failures.push(format!("{name} seed {seed}: {e}"));
            }
        }
    }
    failures
}
