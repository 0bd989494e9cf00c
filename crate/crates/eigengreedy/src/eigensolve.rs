//! Hermitian eigensolvers (dense QR-type and matrix-free Lanczos with
//! locking) plus the coalescence rule that groups numerically equal
//! eigenvalues into multiplicity clusters.

use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::affine::{AffineFamily, ModelError};
use crate::scalar::{c, CMatrix, CVector, Cx, RMatrix, Scalar};

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("eigensolver failed to converge within {0} iterations")]
    NonConvergence(usize),
    #[error("requested {k} eigenpairs from a matrix of dimension {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("matrix dimension {n} exceeds the dense limit {limit}")]
    DenseLimit { n: usize, limit: usize },
    #[error("spectrum has fewer than {wanted} separated clusters")]
    SeparationViolated { wanted: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ascending eigenvalues with an orthonormal block of eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs<T: Scalar> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
    /// Set when the k-th and (k+1)-th eigenvalues coalesce under the default
    /// clustering rule, i.e. the returned block may truncate a cluster.
    pub degenerate_at_end: bool,
}

/// Eigenvalues grouped into numerically coalescent clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenClustering<T: Scalar> {
    pub cluster_values: Vec<T>,
    pub multiplicities: Vec<usize>,
    /// Half-open member index ranges per cluster.
    pub ranges: Vec<(usize, usize)>,
}

impl<T: Scalar> EigenClustering<T> {
    pub fn n_clusters(&self) -> usize {
        self.cluster_values.len()
    }

    /// Total number of clustered values.
    pub fn len(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.1)
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// `sum_{i<=t} m_i`: index one past the end of the t-th cluster (1-based t).
    pub fn boundary(&self, t: usize) -> usize {
        self.ranges[t - 1].1
    }
}

/// Coalescence tolerances of the clustering rule.
#[derive(Debug, Clone, Copy)]
pub struct ClusterTol<T: Scalar> {
    pub abs: T,
    pub rel: T,
}

impl<T: Scalar> Default for ClusterTol<T> {
    fn default() -> Self {
        Self {
            abs: c(1e-14),
            rel: c(1e-8),
        }
    }
}

/// Groups ascending values into clusters: two adjacent values coalesce when
/// both are below `tol.abs` in magnitude (the cluster value is then 0) or
/// when their relative distance is below `tol.rel`. Chaining is transitive
/// along adjacency; the cluster value is the mean of its members.
pub fn cluster<T: Scalar>(values: &[T], tol: ClusterTol<T>) -> EigenClustering<T> {
    let mut cluster_values = Vec::new();
    let mut multiplicities = Vec::new();
    let mut ranges = Vec::new();
    let mut start = 0usize;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && coalescent(values[end - 1], values[end], tol) {
            end += 1;
        }
        let members = &values[start..end];
        let all_tiny = members.iter().all(|v| v.abs() < tol.abs);
        let value = if all_tiny {
            T::zero()
        } else {
            members.iter().fold(T::zero(), |a, b| a + *b) / c::<T>(members.len() as f64)
        };
        cluster_values.push(value);
        multiplicities.push(end - start);
        ranges.push((start, end));
        start = end;
    }
    EigenClustering {
        cluster_values,
        multiplicities,
        ranges,
    }
}

fn coalescent<T: Scalar>(a: T, b: T, tol: ClusterTol<T>) -> bool {
    if a.abs() < tol.abs && b.abs() < tol.abs {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() / scale < tol.rel
}

/// Makes each column's largest-magnitude entry real and positive.
pub fn fix_phases<T: Scalar>(vectors: &mut CMatrix<T>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_mag = T::zero();
        for (i, v) in col.iter().enumerate() {
            let mag = v.norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag == T::zero() {
            continue;
        }
        let z = col[best];
        let phase = z.conj() / Cx::new(z.norm_sqr().sqrt(), T::zero());
        for v in col.iter_mut() {
            *v *= phase;
        }
    }
}

fn sort_ascending<T: Scalar>(values: &mut Vec<T>, vectors: &mut CMatrix<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let sorted_vals: Vec<T> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vecs = CMatrix::<T>::zeros(vectors.nrows(), vectors.ncols());
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs.set_column(dst, &vectors.column(src));
    }
    *values = sorted_vals;
    *vectors = sorted_vecs;
}

/// Full spectrum of a dense Hermitian matrix, ascending, with orthonormal
/// eigenvectors and fixed phases. Callers are responsible for honoring the
/// configured dense-size limit.
///
/// The QR-type decomposition is refined by threshold Jacobi sweeps; the
/// rotations start from a near-diagonal matrix, so one or two sweeps bring
/// the residuals down to a small multiple of machine precision.
pub fn dense_eig<T: Scalar>(a: &CMatrix<T>) -> Result<EigenPairs<T>, EigenError> {
    let n = a.nrows();
    let max_iter = 40 * n.max(16);
    let se = a
        .clone()
        .try_symmetric_eigen(T::default_epsilon(), max_iter)
        .ok_or(EigenError::NonConvergence(max_iter))?;
    let mut vectors = se.eigenvectors;
    let mut values = jacobi_polish(a, &mut vectors)?;
    sort_ascending(&mut values, &mut vectors);
    fix_phases(&mut vectors);
    Ok(EigenPairs {
        values,
        vectors,
        degenerate_at_end: false,
    })
}

/// Diagonalizes `v* a v` by cyclic threshold Jacobi rotations, accumulating
/// them into `v`, and returns the refined eigenvalues (unsorted).
fn jacobi_polish<T: Scalar>(a: &CMatrix<T>, v: &mut CMatrix<T>) -> Result<Vec<T>, EigenError> {
    let n = a.nrows();
    let mut m = v.adjoint() * a * &*v;
    let scale = m.norm().max(T::default_epsilon());
    let target = scale * T::default_epsilon() * c(4.0);
    let max_sweeps = 12;
    for sweep in 0..=max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].norm_sqr().sqrt());
            }
        }
        if off <= target {
            break;
        }
        if sweep == max_sweeps {
            return Err(EigenError::NonConvergence(max_sweeps));
        }
        let thresh = (off * c(1e-2)).max(target);
        for i in 0..n {
            for j in (i + 1)..n {
                let mij = m[(i, j)];
                let r = mij.norm_sqr().sqrt();
                if r <= thresh {
                    continue;
                }
                // Absorb the phase so the 2x2 block is real symmetric, then
                // apply the classical Jacobi angle.
                let phase = mij / Cx::new(r, T::zero());
                let alpha = m[(i, i)].re;
                let beta = m[(j, j)].re;
                let tau = (beta - alpha) / (r * c(2.0));
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let cth = T::one() / (T::one() + t * t).sqrt();
                let sth = t * cth;
                // G = [[c, s], [-s*conj(phase), c*conj(phase)]] on the (i,j) plane.
                let g11 = Cx::new(cth, T::zero());
                let g12 = Cx::new(sth, T::zero());
                let g21 = -phase.conj() * Cx::new(sth, T::zero());
                let g22 = phase.conj() * Cx::new(cth, T::zero());
                // m <- G* m G
                for k in 0..n {
                    let mki = m[(k, i)];
                    let mkj = m[(k, j)];
                    m[(k, i)] = mki * g11 + mkj * g21;
                    m[(k, j)] = mki * g12 + mkj * g22;
                }
                for k in 0..n {
                    let mik = m[(i, k)];
                    let mjk = m[(j, k)];
                    m[(i, k)] = g11.conj() * mik + g21.conj() * mjk;
                    m[(j, k)] = g12.conj() * mik + g22.conj() * mjk;
                }
                m[(i, j)] = Cx::zero();
                m[(j, i)] = Cx::zero();
                m[(i, i)] = Cx::new(m[(i, i)].re, T::zero());
                m[(j, j)] = Cx::new(m[(j, j)].re, T::zero());
                // v <- v G
                for k in 0..v.nrows() {
                    let vki = v[(k, i)];
                    let vkj = v[(k, j)];
                    v[(k, i)] = vki * g11 + vkj * g21;
                    v[(k, j)] = vki * g12 + vkj * g22;
                }
            }
        }
    }
    Ok((0..n).map(|i| m[(i, i)].re).collect())
}

/// Options of the iterative solver and the snapshot solves.
#[derive(Debug, Clone, Copy)]
pub struct EigOptions<T: Scalar> {
    /// Residual tolerance relative to the spectral norm estimate.
    pub tol: T,
    pub cluster: ClusterTol<T>,
    /// Above this dimension only the matrix-free path is used.
    pub dense_limit: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for EigOptions<T> {
    fn default() -> Self {
        Self {
            tol: c(1e-14),
            cluster: ClusterTol::default(),
            dense_limit: 4096,
            seed: 0x5eed,
        }
    }
}

fn mix_seed<T: Scalar>(seed: u64, mu: &[T]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for x in mu {
        let bits = x.to_f64().unwrap_or(0.0).to_bits();
        h ^= bits;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
    }
    h
}

fn random_unit<T: Scalar>(n: usize, rng: &mut ChaCha20Rng) -> CVector<T> {
    let mut v = CVector::<T>::from_fn(n, |_, _| {
        Cx::new(
            c::<T>(rng.gen_range(-1.0..1.0)),
            c::<T>(rng.gen_range(-1.0..1.0)),
        )
    });
    let norm = v.norm();
    v /= Cx::new(norm, T::zero());
    v
}

/// Twice-iterated orthogonalization of `v` against the columns of each block.
fn orthogonalize_against<T: Scalar>(v: &mut CVector<T>, blocks: &[&[CVector<T>]]) {
    for _ in 0..2 {
        for block in blocks {
            for u in *block {
                let coeff = u.dotc(v);
                if coeff != Cx::zero() {
                    v.axpy(-coeff, u, Cx::new(T::one(), T::zero()));
                }
            }
        }
    }
}

/// The `k` smallest eigenpairs (counting multiplicity) of `A(mu)` via a
/// matrix-free Lanczos iteration with full reorthogonalization, locking, and
/// deflated restarts. Degenerate eigenvalues are resolved one copy per
/// restart cycle.
pub fn smallest_k<T: Scalar>(
    family: &AffineFamily<T>,
    mu: &[T],
    k: usize,
    opts: &EigOptions<T>,
) -> Result<EigenPairs<T>, EigenError> {
    let n = family.n();
    if k > n {
        return Err(EigenError::KTooLarge { k, n });
    }
    let theta = family.evaluate_theta(mu)?;
    let norm_scale = family.norm_bound(mu)?.max(T::one());
    let apply = |x: &CVector<T>, y: &mut CVector<T>| family.apply_with_theta(&theta, x, y);

    // Converge one value past k so the caller can be warned when the block
    // boundary cuts a cluster.
    let target = (k + 1).min(n);
    let (values, vectors) = lanczos_locking(
        &apply,
        n,
        target,
        opts.tol * norm_scale,
        mix_seed(opts.seed, mu),
    )?;
    let degenerate_at_end = k < n && coalescent(values[k - 1], values[k], opts.cluster);
    let mut vals = values[..k].to_vec();
    let mut vecs = vectors.columns(0, k).into_owned();
    sort_ascending(&mut vals, &mut vecs);
    fix_phases(&mut vecs);
    Ok(EigenPairs {
        values: vals,
        vectors: vecs,
        degenerate_at_end,
    })
}

/// Ascending Ritz data of one Krylov pass against the deflated operator.
struct KrylovPass<T: Scalar> {
    values: Vec<T>,
    vectors: Vec<CVector<T>>,
    converged: Vec<bool>,
}

/// Locking Lanczos core. Repeatedly extracts the smallest eigenvalue of the
/// operator deflated by the locked set; a converged pass certifies that the
/// remaining spectrum lies above its smallest Ritz value, which yields the
/// stopping criterion for degenerate clusters (each restart recovers one
/// further copy).
fn lanczos_locking<T: Scalar>(
    apply: &dyn Fn(&CVector<T>, &mut CVector<T>),
    n: usize,
    target: usize,
    tol_abs: T,
    seed: u64,
) -> Result<(Vec<T>, CMatrix<T>), EigenError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut locked_vals: Vec<T> = Vec::new();
    let mut locked_vecs: Vec<CVector<T>> = Vec::new();
    let max_passes = 100 + 16 * target;
    let mut carry: Option<CVector<T>> = None;
    let slack = tol_abs * c(32.0);

    for pass in 0.. {
        if locked_vecs.len() == n {
            break;
        }
        if pass > max_passes {
            return Err(EigenError::NonConvergence(max_passes));
        }
        let ritz = krylov_pass(
            apply,
            n,
            target,
            tol_abs,
            &locked_vals,
            &locked_vecs,
            carry.take(),
            &mut rng,
        )?;
        if !ritz.converged[0] {
            carry = Some(ritz.vectors[0].clone());
            continue;
        }
        if locked_vals.len() >= target {
            // Verification: the deflated minimum sits at or above the
            // target-th locked value, so no smaller copy was missed.
            let kth = kth_smallest(&locked_vals, target);
            if ritz.values[0] >= kth - slack {
                break;
            }
        }
        // Lock the converged ascending prefix; at least one pair per pass
        // keeps verification failures making progress on degenerate copies.
        let max_new = (target + 2).saturating_sub(locked_vals.len()).max(1);
        for i in 0..ritz.values.len().min(max_new) {
            if !ritz.converged[i] {
                break;
            }
            locked_vals.push(ritz.values[i]);
            locked_vecs.push(ritz.vectors[i].clone());
        }
    }

    let mut order: Vec<usize> = (0..locked_vals.len()).collect();
    order.sort_by(|&a, &b| locked_vals[a].partial_cmp(&locked_vals[b]).unwrap());
    let count = locked_vals.len().min(target);
    let vals: Vec<T> = order.iter().take(count).map(|&i| locked_vals[i]).collect();
    let mut vecs = CMatrix::<T>::zeros(n, count);
    for (dst, &src) in order.iter().take(count).enumerate() {
        vecs.set_column(dst, &locked_vecs[src]);
    }
    Ok((vals, vecs))
}

fn kth_smallest<T: Scalar>(values: &[T], k: usize) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[k - 1]
}

#[allow(clippy::too_many_arguments)]
fn krylov_pass<T: Scalar>(
    apply: &dyn Fn(&CVector<T>, &mut CVector<T>),
    n: usize,
    target: usize,
    tol_abs: T,
    locked_vals: &[T],
    locked_vecs: &[CVector<T>],
    carry: Option<CVector<T>>,
    rng: &mut ChaCha20Rng,
) -> Result<KrylovPass<T>, EigenError> {
    let remaining = n - locked_vecs.len();
    let mut v = carry.unwrap_or_else(|| random_unit(n, rng));
    orthogonalize_against(&mut v, &[locked_vecs]);
    if v.norm() < c(1e-8) {
        v = random_unit(n, rng);
        orthogonalize_against(&mut v, &[locked_vecs]);
    }
    let norm = v.norm();
    v /= Cx::new(norm, T::zero());

    let wanted = target.saturating_sub(locked_vals.len());
    let steps = remaining.min((2 * wanted + 24).max(32));
    let mut basis: Vec<CVector<T>> = vec![v];
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    let mut breakdown = false;
    let mut w = CVector::<T>::zeros(n);
    for j in 0..steps {
        apply(&basis[j], &mut w);
        let alpha = basis[j].dotc(&w).re;
        alphas.push(alpha);
        let mut r = w.clone();
        orthogonalize_against(&mut r, &[locked_vecs, &basis]);
        let beta = r.norm();
        if beta <= (tol_abs * c(0.01)).max(T::default_epsilon() * c(64.0)) {
            breakdown = true;
            break;
        }
        betas.push(beta);
        if j + 1 < steps {
            basis.push(r / Cx::new(beta, T::zero()));
        }
    }

    let m = alphas.len();
    let mut tri = RMatrix::<T>::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alphas[i];
        if i + 1 < m {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let max_iter = 40 * m.max(16);
    let se = tri
        .try_symmetric_eigen(T::default_epsilon(), max_iter)
        .ok_or(EigenError::NonConvergence(max_iter))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let beta_last = if breakdown { T::zero() } else { betas[m - 1] };

    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut converged = Vec::with_capacity(m);
    for &idx in &order {
        let y = se.eigenvectors.column(idx);
        let resid = (beta_last * y[m - 1]).abs();
        let mut x = CVector::<T>::zeros(n);
        for (b, coeff) in basis.iter().zip(y.iter()) {
            x.axpy(Cx::new(*coeff, T::zero()), b, Cx::new(T::one(), T::zero()));
        }
        orthogonalize_against(&mut x, &[locked_vecs]);
        let norm = x.norm();
        if norm > T::zero() {
            x /= Cx::new(norm, T::zero());
        }
        values.push(se.eigenvalues[idx]);
        vectors.push(x);
        converged.push(breakdown || resid <= tol_abs);
    }
    Ok(KrylovPass {
        values,
        vectors,
        converged,
    })
}

/// Smallest (or largest) eigenvalue of a single sparse Hermitian matrix via
/// the same locking Lanczos iteration, used for the per-term spectral boxes.
pub fn extreme_eigenvalue<T: Scalar>(
    a: &crate::affine::HermitianSparse<T>,
    largest: bool,
    seed: u64,
) -> Result<T, EigenError> {
    let n = a.n();
    let sign = if largest { -T::one() } else { T::one() };
    let apply = |x: &CVector<T>, y: &mut CVector<T>| {
        y.fill(Cx::zero());
        a.apply_add(Cx::new(sign, T::zero()), x, y);
    };
    let tol_abs = a.norm_inf().max(T::one()) * c(1e-13);
    let (vals, _) = lanczos_locking(&apply, n, 1, tol_abs, seed ^ 0xa5a5)?;
    Ok(sign * vals[0])
}

/// Snapshot solve: the first `t_clusters` complete eigenvalue clusters of
/// `A(mu)` (vectors included) plus the next eigenvalue after them.
#[derive(Debug, Clone)]
pub struct ClusteredSolve<T: Scalar> {
    /// `lambda_1 .. lambda_l`, the members of the first `t` clusters.
    pub values: Vec<T>,
    /// Orthonormal eigenvector block for those values (n x l).
    pub vectors: CMatrix<T>,
    /// `lambda_{l+1}`, or `lambda_n` when the clusters exhaust the spectrum.
    pub next_value: T,
    pub clustering: EigenClustering<T>,
}

impl<T: Scalar> ClusteredSolve<T> {
    pub fn ell(&self) -> usize {
        self.values.len()
    }
}

/// Computes the first `t_clusters` complete clusters of `A(mu)` and
/// `lambda_{l+1}`, growing the solved block until the clusters are complete.
pub fn solve_clustered<T: Scalar>(
    family: &AffineFamily<T>,
    mu: &[T],
    t_clusters: usize,
    opts: &EigOptions<T>,
) -> Result<ClusteredSolve<T>, EigenError> {
    let n = family.n();
    let mut k = (t_clusters + 3).min(n);
    loop {
        let pairs = if n <= opts.dense_limit {
            let mut p = dense_eig(&family.assemble(mu)?)?;
            p.values.truncate(k);
            p.vectors = p.vectors.columns(0, k).into_owned();
            p
        } else {
            smallest_k(family, mu, k, opts)?
        };
        let clustering = cluster(&pairs.values, opts.cluster);
        if clustering.n_clusters() >= t_clusters {
            let ell = clustering.boundary(t_clusters);
            if ell < k {
                // Complete: a value beyond the t-th cluster exists in the block.
                let clustering = cluster(&pairs.values[..ell], opts.cluster);
                return Ok(ClusteredSolve {
                    values: pairs.values[..ell].to_vec(),
                    vectors: pairs.vectors.columns(0, ell).into_owned(),
                    next_value: pairs.values[ell],
                    clustering,
                });
            }
            if ell == n {
                // The clusters exhaust the whole spectrum.
                let next_value = pairs.values[n - 1];
                let clustering = cluster(&pairs.values, opts.cluster);
                return Ok(ClusteredSolve {
                    values: pairs.values,
                    vectors: pairs.vectors,
                    next_value,
                    clustering,
                });
            }
        } else if k == n {
            return Err(EigenError::SeparationViolated { wanted: t_clusters });
        }
        k = (k + t_clusters + 4).min(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    type F = f64;

    #[test]
    fn dense_eig_sorts() {
        let a = CMatrix::<F>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Cx::new(3.0, 0.0),
            Cx::new(1.0, 0.0),
            Cx::new(2.0, 0.0),
        ]));
        let p = dense_eig(&a).unwrap();
        assert_eq!(p.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_eig_example1_multiplicity() {
        let fam = generators::example1_family::<F>();
        let p = dense_eig(&fam.assemble(&[1.0]).unwrap()).unwrap();
        assert!((p.values[0] + 1.0).abs() < 1e-14);
        assert!((p.values[1] + 1.0).abs() < 1e-14);
        assert!((p.values[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dense_eig_residual_self_check() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g = CMatrix::<F>::from_fn(50, 50, |_, _| {
            Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let a = (&g + g.adjoint()) * Cx::new(0.5, 0.0);
        let p = dense_eig(&a).unwrap();
        for (i, &lam) in p.values.iter().enumerate() {
            let v = p.vectors.column(i);
            let r = &a * v - v * Cx::new(lam, 0.0);
            assert!(r.norm() <= 1e-10 * a.norm());
        }
        // orthonormality
        let gram = p.vectors.adjoint() * &p.vectors;
        assert!((gram - CMatrix::<F>::identity(50, 50)).norm() < 1e-10);
    }

    #[test]
    fn cluster_relative_rule() {
        let cl = cluster::<F>(&[1.0, 1.0 + 1e-10, 2.0], ClusterTol::default());
        assert_eq!(cl.multiplicities, vec![2, 1]);
        assert!((cl.cluster_values[0] - 1.0).abs() < 1e-9);
        assert_eq!(cl.cluster_values[1], 2.0);
    }

    #[test]
    fn cluster_absolute_rule_snaps_to_zero() {
        let cl = cluster::<F>(&[1e-15, 5e-15, 1.0], ClusterTol::default());
        assert_eq!(cl.multiplicities, vec![2, 1]);
        assert_eq!(cl.cluster_values[0], 0.0);
        assert_eq!(cl.cluster_values[1], 1.0);
    }

    #[test]
    fn cluster_keeps_separated_values() {
        let cl = cluster::<F>(&[1.0, 2.0, 3.0], ClusterTol::default());
        assert_eq!(cl.multiplicities, vec![1, 1, 1]);
    }

    #[test]
    fn cluster_is_idempotent() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut vals: Vec<F> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // inject a few near-duplicates
            valsidx(&mut vals, &mut rng);
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let cl = cluster(&vals, ClusterTol::default());
            let again = cluster(&cl.cluster_values, ClusterTol::default());
            assert_eq!(again.cluster_values.len(), cl.cluster_values.len());
        }
    }

    fn valsidx(vals: &mut Vec<F>, rng: &mut ChaCha20Rng) {
        let base = vals[0];
        vals.push(base * (1.0 + 1e-10));
        vals.push(rng.gen_range(-3.0..3.0));
    }

    #[test]
    fn lanczos_matches_dense_on_xxz() {
        let fam = generators::xxz_family::<F>(4).unwrap();
        let opts = EigOptions::default();
        for mu in [[1.0, 0.0], [0.5, 1.5], [-1.0, 0.0]] {
            let dense = dense_eig(&fam.assemble(&mu).unwrap()).unwrap();
            let lz = smallest_k(&fam, &mu, 5, &opts).unwrap();
            for i in 0..5 {
                assert!(
                    (dense.values[i] - lz.values[i]).abs() < 1e-9,
                    "mu={mu:?} i={i}: {} vs {}",
                    dense.values[i],
                    lz.values[i]
                );
            }
            // Rayleigh quotients reproduce the eigenvalues.
            let a = fam.assemble(&mu).unwrap();
            for i in 0..5 {
                let v = lz.vectors.column(i);
                let rq = (v.adjoint() * &a * v)[(0, 0)].re;
                let scale = lz.values[i].abs().max(1.0);
                assert!((rq - lz.values[i]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn lanczos_xxz_l2_first_two() {
        let fam = generators::xxz_family::<F>(2).unwrap();
        let p = smallest_k(&fam, &[1.0, 0.0], 2, &EigOptions::default()).unwrap();
        assert!((p.values[0] + 0.75).abs() < 1e-10);
        assert!((p.values[1] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn lanczos_example1_ground() {
        let fam = generators::example1_family::<F>();
        let p = smallest_k(&fam, &[0.0], 1, &EigOptions::default()).unwrap();
        assert!((p.values[0] + 2.0).abs() < 1e-12);
        let v = p.vectors.column(0);
        assert!(v[1].norm_sqr().sqrt() > 0.999);
    }

    #[test]
    fn lanczos_blbq_matches_dense() {
        let fam = generators::blbq_family::<F>(3).unwrap();
        let mu = [0.3, 0.1];
        let dense = dense_eig(&fam.assemble(&mu).unwrap()).unwrap();
        let lz = smallest_k(&fam, &mu, 4, &EigOptions::default()).unwrap();
        for i in 0..4 {
            assert!((dense.values[i] - lz.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_resolves_degenerate_ground_space() {
        // Ferromagnetic point of the xxz chain: m_1 = L + 1.
        let fam = generators::xxz_family::<F>(4).unwrap();
        let mu = [-1.0, 0.0];
        let k = 6;
        let lz = smallest_k(&fam, &mu, k, &EigOptions::default()).unwrap();
        let dense = dense_eig(&fam.assemble(&mu).unwrap()).unwrap();
        for i in 0..k {
            assert!((dense.values[i] - lz.values[i]).abs() < 1e-9);
        }
        let gram = lz.vectors.adjoint() * &lz.vectors;
        assert!((gram - CMatrix::<F>::identity(k, k)).norm() < 1e-9);
        assert!(lz.degenerate_at_end, "ground cluster of size 5 cut at k=6");
    }

    #[test]
    fn smallest_k_rejects_large_k() {
        let fam = generators::example1_family::<F>();
        assert!(matches!(
            smallest_k(&fam, &[0.0], 4, &EigOptions::default()),
            Err(EigenError::KTooLarge { .. })
        ));
    }

    #[test]
    fn solve_clustered_example1_at_one() {
        let fam = generators::example1_family::<F>();
        let s = solve_clustered(&fam, &[1.0], 2, &EigOptions::default()).unwrap();
        // clusters {-1,-1} and {1}: the whole spectrum
        assert_eq!(s.ell(), 3);
        assert_eq!(s.clustering.multiplicities, vec![2, 1]);
        assert_eq!(s.next_value, s.values[2]);
    }

    #[test]
    fn solve_clustered_generic_point() {
        let fam = generators::example1_family::<F>();
        let s = solve_clustered(&fam, &[0.5], 1, &EigOptions::default()).unwrap();
        assert_eq!(s.ell(), 1);
        assert!((s.values[0] + 1.75).abs() < 1e-14);
        assert!((s.next_value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn solve_clustered_xxz_ferromagnetic_multiplicity() {
        let fam = generators::xxz_family::<F>(4).unwrap();
        let s = solve_clustered(&fam, &[-1.0, 0.0], 1, &EigOptions::default()).unwrap();
        assert_eq!(s.ell(), 5, "m_1 = L + 1 at the ferromagnetic point");
    }
}
