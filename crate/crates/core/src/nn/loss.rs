/// `sqrt(mean((pred − target)²))` and its gradient with respect to `pred`
/// (zero at a perfect fit).
pub fn rmse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "rmse length mismatch");
    let n = pred.len() as f64;
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let loss = mse.sqrt();
    if loss == 0.0 {
        return (0.0, vec![0.0; pred.len()]);
    }
    let grad = pred.iter().zip(target).map(|(p, t)| (p - t) / (n * loss)).collect();
    (loss, grad)
}

/// Cosine similarity with its gradients; 0 with zero gradients when either
/// side is the zero vector.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len(), "cosine length mismatch");
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let cos = dot / (na * nb);
    let da = a.iter().zip(b).map(|(x, y)| y / (na * nb) - cos * x / (na * na)).collect();
    let db = a.iter().zip(b).map(|(x, y)| x / (na * nb) - cos * y / (nb * nb)).collect();
    (cos, da, db)
}

/// Mean over rows of the row-wise cosine similarity, with gradients for both
/// matrices.
pub fn mean_cosine_similarity(
    a: &ndarray::ArrayView2<f64>,
    b: &ndarray::ArrayView2<f64>,
) -> (f64, ndarray::Array2<f64>, ndarray::Array2<f64>) {
    assert_eq!(a.dim(), b.dim(), "cosine shape mismatch");
    let rows = a.nrows() as f64;
    let mut da = ndarray::Array2::zeros(a.raw_dim());
    let mut db = ndarray::Array2::zeros(b.raw_dim());
    let mut total = 0.0;
    for r in 0..a.nrows() {
        let ra = a.row(r).to_vec();
        let rb = b.row(r).to_vec();
        let (c, ga, gb) = cosine_similarity(&ra, &rb);
        total += c;
        for j in 0..ga.len() {
            da[[r, j]] = ga[j] / rows;
            db[[r, j]] = gb[j] / rows;
        }
    }
    (total / rows, da, db)
}
