use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsl::Grammar;
use crate::nn::{
    gumbel_backward, gumbel_softmax_masked, mean_cosine_similarity, Adam, GumbelSample, Input, Mlp, MlpGrad,
    NnError, Surrogate,
};

/// Loss weights and temperature of a generator update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorObjective {
    pub lambda_onehot: f64,
    pub lambda_hidden: f64,
    pub temperature: f64,
}

/// Forward quantities and gradients for one pair of noise batches.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub loss: f64,
    /// Mean surrogate score of the hard first batch.
    pub mean_score: f64,
    pub sim_onehot: f64,
    pub sim_hidden: f64,
    pub grads: MlpGrad,
    pub samples1: Vec<GumbelSample>,
    pub samples2: Vec<GumbelSample>,
}

impl GeneratorPass {
    /// Chosen rows per column for every sample of both batches.
    pub fn programs(&self) -> impl Iterator<Item = &[usize]> {
        self.samples1.iter().chain(&self.samples2).map(|s| s.indices.as_slice())
    }
}

pub fn standard_normal_batch(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn sample_rows(
    logits: &Array2<f64>,
    grammar: &Grammar,
    tau: f64,
    mut noise: Option<&mut dyn RngCore>,
) -> Vec<GumbelSample> {
    let (d, s) = (grammar.vocab().len(), grammar.max_len());
    let mut out = Vec::with_capacity(logits.nrows());
    for row in logits.axis_iter(Axis(0)) {
        let m = row.to_shape((d, s)).expect("generator width is D·S");
        out.push(gumbel_softmax_masked(&m.view(), grammar, tau, noise.as_deref_mut()));
    }
    out
}

fn stack_flat(samples: &[GumbelSample], pick: impl Fn(&GumbelSample) -> &Array2<f64>) -> Array2<f64> {
    let width = samples.first().map_or(0, |s| pick(s).len());
    let mut out = Array2::zeros((samples.len(), width));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(samples) {
        row.iter_mut().zip(pick(s).iter()).for_each(|(o, v)| *o = *v);
    }
    out
}

/// `−mean P(x1) + λ_onehot·Sim(x̃1, x̃2) + λ_hidden·Sim(ℓ1, ℓ2)` where `x1` is the
/// hard sample fed to the surrogate, `x̃` the relaxed samples and `ℓ` the
/// pre-mask logits. The surrogate's input gradient at `x1` is passed straight
/// through to `x̃1`.
#[allow(clippy::too_many_arguments)]
pub fn generator_pass(
    g: &Mlp,
    p: &dyn Surrogate,
    z1: &ArrayView2<f64>,
    z2: &ArrayView2<f64>,
    grammar: &Grammar,
    obj: &GeneratorObjective,
    noise1: Option<&mut dyn RngCore>,
    noise2: Option<&mut dyn RngCore>,
) -> Result<GeneratorPass, NnError> {
    let (d, s) = (grammar.vocab().len(), grammar.max_len());
    if g.spec().output() != d * s || p.input_dim() != d * s {
        return Err(NnError::Shape { expected: format!("{} = D·S", d * s), found: format!("{}", g.spec().output()) });
    }
    let b = z1.nrows() as f64;
    let t1 = g.forward(Input::Dense(*z1))?;
    let t2 = g.forward(Input::Dense(*z2))?;
    let samples1 = sample_rows(&t1.output, grammar, obj.temperature, noise1);
    let samples2 = sample_rows(&t2.output, grammar, obj.temperature, noise2);

    let hard1 = stack_flat(&samples1, |s| &s.hard);
    let (scores, dx) = p.score_and_grad(&hard1.view());
    let mean_score = scores.mean().unwrap_or(0.0);

    let r1 = stack_flat(&samples1, |s| &s.relaxed);
    let r2 = stack_flat(&samples2, |s| &s.relaxed);
    let (sim_onehot, dr1, dr2) = mean_cosine_similarity(&r1.view(), &r2.view());
    let (sim_hidden, dl1, dl2) = mean_cosine_similarity(&t1.output.view(), &t2.output.view());

    let mut d_relaxed1 = dx.mapv(|v| -v / b);
    d_relaxed1.scaled_add(obj.lambda_onehot, &dr1);
    let d_relaxed2 = dr2 * obj.lambda_onehot;

    let back = |samples: &[GumbelSample], d_relaxed: &Array2<f64>, d_logits: &Array2<f64>| {
        let mut out = d_logits * obj.lambda_hidden;
        for (k, smp) in samples.iter().enumerate() {
            let dr = d_relaxed.row(k);
            let dr = dr.to_shape((d, s)).expect("D·S row");
            let dl = gumbel_backward(smp, &dr.view());
            out.row_mut(k).iter_mut().zip(dl.iter()).for_each(|(o, v)| *o += v);
        }
        out
    };
    let dlog1 = back(&samples1, &d_relaxed1, &dl1);
    let dlog2 = back(&samples2, &d_relaxed2, &dl2);
    let (mut grads, _) = g.backward(Input::Dense(*z1), &t1, &dlog1.view())?;
    let (g2, _) = g.backward(Input::Dense(*z2), &t2, &dlog2.view())?;
    grads.add_assign(&g2);

    Ok(GeneratorPass {
        loss: -mean_score + obj.lambda_onehot * sim_onehot + obj.lambda_hidden * sim_hidden,
        mean_score,
        sim_onehot,
        sim_hidden,
        grads,
        samples1,
        samples2,
    })
}

/// Draws fresh noise batches, runs [`generator_pass`] and applies the update.
/// A non-finite gradient skips the update but still returns the samples.
#[allow(clippy::too_many_arguments)]
pub fn generator_step(
    g: &mut Mlp,
    opt: &mut Adam,
    p: &dyn Surrogate,
    grammar: &Grammar,
    obj: &GeneratorObjective,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Result<(GeneratorPass, bool), NnError> {
    let q = g.spec().input();
    let z1 = standard_normal_batch(batch, q, rng);
    let z2 = standard_normal_batch(batch, q, rng);
    let pass = {
        let mut n1 = ChaCha8Rng::seed_from_u64(rng.next_u64());
        let mut n2 = ChaCha8Rng::seed_from_u64(rng.next_u64());
        generator_pass(g, p, &z1.view(), &z2.view(), grammar, obj, Some(&mut n1), Some(&mut n2))?
    };
    let applied = match g.apply(opt, &pass.grads) {
        Ok(()) => true,
        Err(NnError::NonFinite) => false,
        Err(e) => return Err(e),
    };
    Ok((pass, applied))
}

/// Hard programs (row index per column) drawn from the generator.
pub fn sample_programs(g: &Mlp, grammar: &Grammar, n: usize, tau: f64, rng: &mut dyn RngCore) -> Vec<Vec<usize>> {
    let z = standard_normal_batch(n, g.spec().input(), rng);
    let logits = g.predict(Input::Dense(z.view())).expect("generator input width");
    sample_rows(&logits, grammar, tau, Some(rng)).into_iter().map(|s| s.indices).collect()
}
