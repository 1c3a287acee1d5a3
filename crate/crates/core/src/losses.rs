//! Training objective: answer cross-entropy plus the consistency and
//! HSIC disparity constraints on the multi-view embeddings.

use crate::autodiff::{Graph, NodeId};
use crate::encoders::NORM_EPS;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::unit::ViewEmbeddings;

/// Mean over steps of `‖S_A − S_M‖_F`, where `S = Z_nor·Z_norᵀ` is the
/// cosine-similarity Gram of the row-normalized common embeddings.
pub fn consistency_loss(g: &mut Graph, pairs: &[(NodeId, NodeId)]) -> Result<NodeId> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("consistency loss needs at least one step".into()));
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for &(za, zm) in pairs {
        if g.shape(za) != g.shape(zm) {
            return Err(Error::InvalidArgument(format!("common embeddings differ in shape: {:?} vs {:?}", g.shape(za), g.shape(zm))));
        }
        let na = g.row_l2_normalize(za, NORM_EPS);
        let nm = g.row_l2_normalize(zm, NORM_EPS);
        let sa = g.matmul_nt(na, na);
        let sm = g.matmul_nt(nm, nm);
        let diff = g.sub(sa, sm);
        terms.push(g.frobenius_norm(diff));
    }
    Ok(mean_of(g, &terms))
}

/// Linear-kernel HSIC: `(n−1)⁻²·tr(R·K·R·K')` with `K = Z·Zᵀ`, `K' = Z'·Z'ᵀ`.
pub fn hsic(g: &mut Graph, z: NodeId, z_other: NodeId) -> Result<NodeId> {
    let n = g.shape(z).0;
    if g.shape(z_other).0 != n {
        return Err(Error::InvalidArgument(format!("hsic inputs have {} and {} rows", n, g.shape(z_other).0)));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("hsic needs at least 2 samples, got {n}")));
    }
    let k = g.matmul_nt(z, z);
    let k_other = g.matmul_nt(z_other, z_other);
    // RKR is symmetric and so is K', hence tr(RKR·K') is their elementwise inner product.
    let centered = g.double_center(k);
    let prod = g.mul(centered, k_other);
    let total = g.sum(prod);
    let scale = 1.0 / ((n - 1) as f64).powi(2);
    Ok(g.scale(total, scale))
}

/// Mean over steps of `HSIC(Z_A, Z_CA) + HSIC(Z_M, Z_CM)`.
pub fn disparity_loss(g: &mut Graph, views: &[ViewEmbeddings]) -> Result<NodeId> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("disparity loss needs at least one step".into()));
    }
    let mut terms = Vec::with_capacity(views.len());
    for v in views {
        let a = hsic(g, v.appearance, v.appearance_common)?;
        let m = hsic(g, v.motion, v.motion_common)?;
        terms.push(g.add(a, m));
    }
    Ok(mean_of(g, &terms))
}

/// `−log softmax(logits)[label]` for a `1 × |A|` logit row.
pub fn cross_entropy(g: &mut Graph, logits: NodeId, label: usize) -> Result<NodeId> {
    let classes = g.shape(logits).1;
    if label >= classes {
        return Err(Error::InvalidArgument(format!("label {label} outside {classes} answers")));
    }
    let logp = g.log_softmax_rows(logits);
    let picked = g.pick(logp, 0, label);
    Ok(g.scale(picked, -1.0))
}

/// `L_t + γ·L_c + β·L_d`.
pub fn total_loss(g: &mut Graph, task: NodeId, consistency: NodeId, disparity: NodeId, gamma: f64, beta: f64) -> NodeId {
    let c = g.scale(consistency, gamma);
    let d = g.scale(disparity, beta);
    let s = g.add(task, c);
    g.add(s, d)
}

fn mean_of(g: &mut Graph, terms: &[NodeId]) -> NodeId {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t);
    }
    if terms.len() == 1 {
        acc
    } else {
        g.scale(acc, 1.0 / terms.len() as f64)
    }
}

/// [`hsic`] on plain matrices.
pub fn hsic_value(z: &Tensor, z_other: &Tensor) -> Result<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.input(z.clone());
    let b = g.input(z_other.clone());
    let h = hsic(&mut g, a, b)?;
    Ok(g.value(h).item())
}

/// [`consistency_loss`] for a single step on plain matrices.
pub fn consistency_value(z_a: &Tensor, z_m: &Tensor) -> Result<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.input(z_a.clone());
    let b = g.input(z_m.clone());
    let c = consistency_loss(&mut g, &[(a, b)])?;
    Ok(g.value(c).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn consistency_examples() {
        let z = Tensor::from_rows(&[&[1.0, 2.0], &[-0.5, 3.0], &[0.2, 0.1]]);
        assert_eq!(consistency_value(&z, &z).unwrap(), 0.0);
        assert!(consistency_value(&z, &z.map(|x| 3.0 * x)).unwrap() < 1e-12);
        let a = Tensor::identity(2);
        let m = Tensor::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert!((consistency_value(&a, &m).unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn consistency_rejects_mismatch_and_empty() {
        assert!(consistency_value(&Tensor::zeros(2, 2), &Tensor::zeros(3, 2)).is_err());
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        assert!(consistency_loss(&mut g, &[]).is_err());
    }

    #[test]
    fn hsic_examples() {
        let i2 = Tensor::identity(2);
        assert!((hsic_value(&i2, &i2).unwrap() - 1.0).abs() < 1e-15);
        let constant = Tensor::from_rows(&[&[1.0, 2.0][..]; 4]);
        let other = Tensor::uniform(4, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(hsic_value(&constant, &other).unwrap().abs() < 1e-12);
        assert!(matches!(hsic_value(&Tensor::zeros(1, 2), &Tensor::zeros(1, 2)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn disparity_examples() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let i = g.input(Tensor::identity(2));
        let v = ViewEmbeddings { appearance: i, appearance_common: i, motion: i, motion_common: i };
        let d = disparity_loss(&mut g, &[v]).unwrap();
        assert!((g.value(d).item() - 2.0).abs() < 1e-15);
        let c = g.input(Tensor::from_rows(&[&[1.0, 1.0][..]; 2]));
        let zero = ViewEmbeddings { appearance: c, appearance_common: i, motion: c, motion_common: i };
        let d = disparity_loss(&mut g, &[v, zero]).unwrap();
        assert!((g.value(d).item() - 1.0).abs() < 1e-15);
        let d = disparity_loss(&mut g, &[zero]).unwrap();
        assert!(g.value(d).item().abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let uniform = g.input(Tensor::zeros(1, 4));
        let l = cross_entropy(&mut g, uniform, 2).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
        let sure = g.input(Tensor::row_vector(&[0.0, 800.0]));
        let l = cross_entropy(&mut g, sure, 1).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let two = g.input(Tensor::row_vector(&[1.0, 0.0]));
        let l = cross_entropy(&mut g, two, 0).unwrap();
        assert!((g.value(l).item() - 0.31326168751822286).abs() < 1e-14);
        assert!(cross_entropy(&mut g, two, 2).is_err());
    }

    #[test]
    fn total_loss_weights() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let (t, c, d) = (g.input(Tensor::scalar(1.0)), g.input(Tensor::scalar(0.5)), g.input(Tensor::scalar(2.0)));
        let l = total_loss(&mut g, t, c, d, 0.0, 0.0);
        assert_eq!(g.value(l).item(), 1.0);
        let l = total_loss(&mut g, t, c, d, 100.0, 1e-6);
        assert!((g.value(l).item() - 51.000002).abs() < 1e-12);
        let zero = g.input(Tensor::scalar(0.0));
        let one = g.input(Tensor::scalar(1.0));
        let l = total_loss(&mut g, zero, one, d, 1.0, 1e-6);
        assert!((g.value(l).item() - (1.0 + 1e-6 * 2.0)).abs() < 1e-15);
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Tensor::from_vec(rows, cols, v))
    }

    proptest! {
        #[test]
        fn hsic_nonnegative_and_symmetric(a in matrix(5, 3), b in matrix(5, 4)) {
            let ab = hsic_value(&a, &b).unwrap();
            let ba = hsic_value(&b, &a).unwrap();
            prop_assert!(ab >= -1e-10);
            prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()));
        }

        #[test]
        fn consistency_scale_invariant(a in matrix(4, 3), b in matrix(4, 3), s in prop::collection::vec(0.1f64..10.0, 4)) {
            let scaled = Tensor::from_vec(4, 3, (0..12).map(|i| b.data()[i] * s[i / 3]).collect());
            let base = consistency_value(&a, &b).unwrap();
            let other = consistency_value(&a, &scaled).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!((base - other).abs() < 1e-9);
            prop_assert!(consistency_value(&a, &a).unwrap() == 0.0);
        }
    }
}
