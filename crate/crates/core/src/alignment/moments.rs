use crate::error::{Error, Result};
use crate::numkernel::{DenseMatrix, Real};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentConfig {
    pub orders: Vec<u32>,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self { orders: vec![1, 2] }
    }
}

impl MomentConfig {
    pub fn new(orders: Vec<u32>) -> Result<Self> {
        let cfg = Self { orders };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.orders.contains(&0) {
            return Err(Error::Config(format!(
                "moment orders must be a nonempty set of positive integers, got {:?}",
                self.orders
            )));
        }
        Ok(())
    }
}

/// Mean of the elementwise k-th power of each row.
pub fn moment_embedding<T: Real>(batch: &DenseMatrix<T>, k: u32) -> Result<Vec<f64>> {
    if batch.rows() == 0 {
        return Err(Error::Batch("moment of an empty batch".into()));
    }
    let mut acc = vec![0.0f64; batch.cols()];
    for row in batch.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v.as_f64().powi(k as i32);
        }
    }
    let n = batch.rows() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainRef {
    Source(usize),
    Target,
}

/// Distance between the order-`k` moment embeddings of two domains.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComponent {
    pub order: u32,
    pub a: DomainRef,
    pub b: DomainRef,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub value: f64,
    pub components: Vec<PairComponent>,
}

impl Discrepancy {
    pub fn component(&self, order: u32, a: DomainRef, b: DomainRef) -> Option<f64> {
        self.components
            .iter()
            .find(|c| c.order == order && ((c.a == a && c.b == b) || (c.a == b && c.b == a)))
            .map(|c| c.distance)
    }
}

fn check_dims<T: Real>(sources: &[&DenseMatrix<T>], target: &DenseMatrix<T>) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::Config("moment discrepancy needs at least one source".into()));
    }
    if let Some(bad) = sources.iter().find(|s| s.cols() != target.cols()) {
        return Err(Error::shape("domain feature width", target.cols(), bad.cols()));
    }
    Ok(())
}

/// Pair weights: `1/M` for every source–target pair, `1/C(M,2)` for every
/// source–source pair.
fn pairs(m: usize) -> Vec<(DomainRef, DomainRef, f64)> {
    let mut out: Vec<_> = (0..m)
        .map(|i| (DomainRef::Source(i), DomainRef::Target, 1.0 / m as f64))
        .collect();
    if m >= 2 {
        let w = 2.0 / (m * (m - 1)) as f64;
        for i in 0..m {
            for j in i + 1..m {
                out.push((DomainRef::Source(i), DomainRef::Source(j), w));
            }
        }
    }
    out
}

struct Embeddings {
    /// `[order][domain]`, domain index `m` is the target.
    by_order: Vec<Vec<Vec<f64>>>,
}

impl Embeddings {
    fn compute<T: Real>(
        sources: &[&DenseMatrix<T>],
        target: &DenseMatrix<T>,
        cfg: &MomentConfig,
    ) -> Result<Self> {
        let by_order = cfg
            .orders
            .iter()
            .map(|&k| {
                sources
                    .iter()
                    .copied()
                    .chain(std::iter::once(target))
                    .map(|b| moment_embedding(b, k))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { by_order })
    }

    fn get(&self, order_idx: usize, d: DomainRef) -> &[f64] {
        let domains = &self.by_order[order_idx];
        match d {
            DomainRef::Source(i) => &domains[i],
            DomainRef::Target => &domains[domains.len() - 1],
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cross-moment discrepancy over `M` sources and one target.
///
/// `Σ_k [ (1/M) Σ_i ‖E x_Si^k − E x_T^k‖ + C(M,2)^{-1} Σ_{i<j} ‖E x_Si^k − E x_Sj^k‖ ]`
pub fn moment_discrepancy<T: Real>(
    sources: &[&DenseMatrix<T>],
    target: &DenseMatrix<T>,
    cfg: &MomentConfig,
) -> Result<Discrepancy> {
    check_dims(sources, target)?;
    cfg.validate()?;
    let emb = Embeddings::compute(sources, target, cfg)?;
    let mut value = 0.0;
    let mut components = Vec::new();
    for (oi, &k) in cfg.orders.iter().enumerate() {
        for (a, b, w) in pairs(sources.len()) {
            let distance = l2(emb.get(oi, a), emb.get(oi, b));
            value += w * distance;
            components.push(PairComponent {
                order: k,
                a,
                b,
                distance,
            });
        }
    }
    Ok(Discrepancy { value, components })
}

/// Gradient of `scale · moment_discrepancy` with respect to every entry of
/// every input batch. Pairs at zero distance contribute the zero
/// subgradient.
pub fn moment_discrepancy_backward<T: Real>(
    sources: &[&DenseMatrix<T>],
    target: &DenseMatrix<T>,
    cfg: &MomentConfig,
    scale: f64,
) -> Result<(Vec<DenseMatrix<T>>, DenseMatrix<T>)> {
    check_dims(sources, target)?;
    cfg.validate()?;
    let emb = Embeddings::compute(sources, target, cfg)?;
    let m = sources.len();
    let d = target.cols();
    let batches: Vec<&DenseMatrix<T>> = sources.iter().copied().chain(std::iter::once(target)).collect();
    let slot = |r: DomainRef| match r {
        DomainRef::Source(i) => i,
        DomainRef::Target => m,
    };

    let mut grads: Vec<DenseMatrix<T>> = batches
        .iter()
        .map(|b| DenseMatrix::zeros(b.rows(), b.cols()))
        .collect();
    for (oi, &k) in cfg.orders.iter().enumerate() {
        // gradient of the order-k terms w.r.t. each domain's embedding
        let mut emb_grad = vec![vec![0.0f64; d]; m + 1];
        for (a, b, w) in pairs(m) {
            let (ea, eb) = (emb.get(oi, a), emb.get(oi, b));
            let dist = l2(ea, eb);
            if dist == 0.0 {
                continue;
            }
            let coef = scale * w / dist;
            for j in 0..d {
                let g = coef * (ea[j] - eb[j]);
                emb_grad[slot(a)][j] += g;
                emb_grad[slot(b)][j] -= g;
            }
        }
        for (slot, (batch, grad)) in batches.iter().zip(grads.iter_mut()).enumerate() {
            let n = batch.rows() as f64;
            let eg = &emb_grad[slot];
            for r in 0..batch.rows() {
                let x = batch.row(r);
                let g = grad.row_mut(r);
                for j in 0..d {
                    let dpow = if k == 1 {
                        1.0
                    } else {
                        k as f64 * x[j].as_f64().powi(k as i32 - 1)
                    };
                    g[j] = g[j] + T::from_f64_lossy(eg[j] * dpow / n);
                }
            }
        }
    }
    let target_grad = grads.pop().expect("target slot");
    Ok((grads, target_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn embedding_examples() {
        let b = col(&[0.0, 2.0]);
        assert_eq!(moment_embedding(&b, 1).unwrap(), vec![1.0]);
        assert_eq!(moment_embedding(&b, 2).unwrap(), vec![2.0]);
        let same = DenseMatrix::<f64>::from_f64_rows(&[&[1.5, -2.0], &[1.5, -2.0], &[1.5, -2.0]]).unwrap();
        assert_eq!(moment_embedding(&same, 1).unwrap(), vec![1.5, -2.0]);
        assert!(moment_embedding(&DenseMatrix::<f64>::zeros(0, 2), 1).is_err());
    }

    #[test]
    fn single_source_first_moment() {
        let d = moment_discrepancy(&[&col(&[0.0, 2.0])], &col(&[4.0, 6.0]), &MomentConfig::new(vec![1]).unwrap())
            .unwrap();
        assert_abs_diff_eq!(d.value, 4.0, epsilon = 1e-12);
        assert_eq!(d.components.len(), 1);
    }

    #[test]
    fn identical_domains_have_zero_discrepancy() {
        let b = DenseMatrix::<f64>::from_f64_rows(&[&[0.3, -1.0], &[2.0, 0.5]]).unwrap();
        let d = moment_discrepancy(&[&b, &b], &b, &MomentConfig::default()).unwrap();
        assert_eq!(d.value, 0.0);
        let (gs, gt) = moment_discrepancy_backward(&[&b, &b], &b, &MomentConfig::default(), 1.0).unwrap();
        assert!(gs.iter().chain([&gt]).all(|g| g.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mismatched_widths() {
        let err = moment_discrepancy(&[&DenseMatrix::<f64>::zeros(2, 3)], &DenseMatrix::zeros(2, 2), &MomentConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn three_sources_weights_pairs() {
        // scalar features; first moments 0, 1, 3 for sources and 2 for target
        let s = [col(&[0.0]), col(&[1.0]), col(&[3.0])];
        let t = col(&[2.0]);
        let refs: Vec<_> = s.iter().collect();
        let d = moment_discrepancy(&refs, &t, &MomentConfig::new(vec![1]).unwrap()).unwrap();
        let st = (2.0 + 1.0 + 1.0) / 3.0;
        let ss = (1.0 + 3.0 + 2.0) / 3.0;
        assert_abs_diff_eq!(d.value, st + ss, epsilon = 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let s0 = DenseMatrix::<f64>::from_f64_rows(&[&[0.3, -1.0], &[1.2, 0.4], &[-0.7, 0.9]]).unwrap();
        let s1 = DenseMatrix::<f64>::from_f64_rows(&[&[1.3, 0.2], &[0.1, -1.4]]).unwrap();
        let t = DenseMatrix::<f64>::from_f64_rows(&[&[-0.4, 1.1], &[0.8, 0.6], &[1.9, -0.2]]).unwrap();
        let cfg = MomentConfig::new(vec![1, 2, 3]).unwrap();
        let (gs, gt) = moment_discrepancy_backward(&[&s0, &s1], &t, &cfg, 0.5).unwrap();
        let eps = 1e-6;
        let eval = |s0: &DenseMatrix<f64>, s1: &DenseMatrix<f64>, t: &DenseMatrix<f64>| {
            0.5 * moment_discrepancy(&[s0, s1], t, &cfg).unwrap().value
        };
        let check = |which: usize, grad: &DenseMatrix<f64>| {
            for i in 0..grad.values().len() {
                let mut bs = [s0.clone(), s1.clone(), t.clone()];
                bs[which].values_mut()[i] += eps;
                let plus = eval(&bs[0], &bs[1], &bs[2]);
                bs[which].values_mut()[i] -= 2.0 * eps;
                let minus = eval(&bs[0], &bs[1], &bs[2]);
                let numeric = (plus - minus) / (2.0 * eps);
                assert_abs_diff_eq!(grad.values()[i], numeric, epsilon = 1e-7);
            }
        };
        check(0, &gs[0]);
        check(1, &gs[1]);
        check(2, &gt);
    }

    fn batch(rows: usize) -> impl Strategy<Value = DenseMatrix<f64>> {
        prop::collection::vec(-2.0f64..2.0, rows * 3)
            .prop_map(move |v| DenseMatrix::from_vec(rows, 3, v).unwrap())
    }

    proptest! {
        #[test]
        fn components_obey_triangle_inequality(a in batch(4), b in batch(5), t in batch(3)) {
            let d = moment_discrepancy(&[&a, &b], &t, &MomentConfig::default()).unwrap();
            for k in [1, 2] {
                let ab = d.component(k, DomainRef::Source(0), DomainRef::Source(1)).unwrap();
                let at = d.component(k, DomainRef::Source(0), DomainRef::Target).unwrap();
                let bt = d.component(k, DomainRef::Source(1), DomainRef::Target).unwrap();
                prop_assert!(ab <= at + bt + 1e-12);
            }
        }

        #[test]
        fn symmetric_under_source_permutation(a in batch(4), b in batch(2), c in batch(3), t in batch(3)) {
            let cfg = MomentConfig::default();
            let d1 = moment_discrepancy(&[&a, &b, &c], &t, &cfg).unwrap().value;
            let d2 = moment_discrepancy(&[&c, &a, &b], &t, &cfg).unwrap().value;
            prop_assert!((d1 - d2).abs() < 1e-9);
            prop_assert!(d1 >= 0.0);
        }
    }
}
