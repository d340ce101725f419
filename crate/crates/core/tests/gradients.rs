mod common;

use common::grad;

#[test]
fn dense_layer() {
    for seed in 0..20 {
        grad::dense(seed).unwrap();
    }
}

#[test]
fn mlp_both_activations() {
    for seed in 0..20 {
        grad::mlp(seed).unwrap();
    }
}

#[test]
fn rmse_and_cosine() {
    for seed in 0..20 {
        grad::losses(seed).unwrap();
    }
}

#[test]
fn relaxed_sampler() {
    for seed in 0..20 {
        grad::relaxed_gumbel(seed).unwrap();
    }
}

#[test]
fn generator_diversity_terms() {
    for seed in 0..20 {
        grad::generator_diversity(seed).unwrap();
    }
}
