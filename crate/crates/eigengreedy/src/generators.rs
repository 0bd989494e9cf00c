//! Constructors for the built-in test families: spin-chain Hamiltonians via
//! Kronecker embedding, the random quadratic family, the analytic 3x3
//! diagonal family, and the rank-one Lagrange family.

use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::affine::{
    AffineFamily, DomainBox, HermitianSparse, ModelError, ThetaKind, ThetaTerm,
};
use crate::scalar::{c, CMatrix, Cx, Scalar};

/// A single-site operator placed at position `j` of an `L`-site chain.
#[derive(Debug, Clone)]
pub struct SpinSiteSpec<T: Scalar> {
    /// Chain length.
    pub length: usize,
    /// Site index, 1-based.
    pub site: usize,
    /// Local Hermitian matrix (2x2 for spin-1/2, 3x3 for spin-1).
    pub local: CMatrix<T>,
}

/// Spin-1/2 matrices `(S_x, S_y, S_z)` in the convention with `S_z = diag(1,-1)`.
pub fn spin_half_matrices<T: Scalar>() -> [CMatrix<T>; 3] {
    let o = T::zero();
    let l = T::one();
    let sx = CMatrix::from_row_slice(2, 2, &[Cx::new(o, o), Cx::new(l, o), Cx::new(l, o), Cx::new(o, o)]);
    let sy = CMatrix::from_row_slice(2, 2, &[Cx::new(o, o), Cx::new(o, -l), Cx::new(o, l), Cx::new(o, o)]);
    let sz = CMatrix::from_row_slice(2, 2, &[Cx::new(l, o), Cx::new(o, o), Cx::new(o, o), Cx::new(-l, o)]);
    [sx, sy, sz]
}

/// Spin-1 matrices `(S_x, S_y, S_z)` with `S_z = diag(1,0,-1)`.
pub fn spin_one_matrices<T: Scalar>() -> [CMatrix<T>; 3] {
    let o = T::zero();
    let l = T::one();
    let s = T::one() / c::<T>(2.0).sqrt();
    let sx = CMatrix::from_fn(3, 3, |i, j| {
        if i.abs_diff(j) == 1 {
            Cx::new(s, o)
        } else {
            Cx::new(o, o)
        }
    });
    let sy = CMatrix::from_fn(3, 3, |i, j| match (i, j) {
        (0, 1) | (1, 2) => Cx::new(o, -s),
        (1, 0) | (2, 1) => Cx::new(o, s),
        _ => Cx::new(o, o),
    });
    let sz = CMatrix::from_fn(3, 3, |i, j| {
        if i == j {
            Cx::new(if i == 0 { l } else if i == 1 { o } else { -l }, o)
        } else {
            Cx::new(o, o)
        }
    });
    [sx, sy, sz]
}

fn checked_dim(m: usize, length: usize) -> Result<usize, ModelError> {
    let mut n: usize = 1;
    for _ in 0..length {
        n = n
            .checked_mul(m)
            .ok_or_else(|| ModelError::Invalid(format!("{m}^{length} overflows")))?;
    }
    Ok(n)
}

/// Appends the triplets of `I ⊗ local ⊗ I` with `local` acting on `width`
/// adjacent sites starting at 1-based `site`. Only the upper triangle of the
/// (Hermitian) local matrix is consumed.
fn embed_local<T: Scalar>(
    length: usize,
    m: usize,
    site: usize,
    width: usize,
    local: &CMatrix<T>,
    out: &mut Vec<(usize, usize, Cx<T>)>,
) -> Result<(), ModelError> {
    if site == 0 || site + width - 1 > length {
        return Err(ModelError::Invalid(format!(
            "site {site} (width {width}) out of range for chain length {length}"
        )));
    }
    let mw = checked_dim(m, width)?;
    if local.nrows() != mw || local.ncols() != mw {
        return Err(ModelError::Dimension {
            expected: mw,
            got: local.nrows(),
        });
    }
    let left = checked_dim(m, site - 1)?;
    let right = checked_dim(m, length - site - (width - 1))?;
    // Hermitian part of the local block; skew residue is rounding noise from
    // operator products and is discarded.
    for rl in 0..mw {
        for cl in rl..mw {
            let v = (local[(rl, cl)] + local[(cl, rl)].conj()) * Cx::new(c::<T>(0.5), T::zero());
            let v = if rl == cl { Cx::new(v.re, T::zero()) } else { v };
            if v == Cx::zero() {
                continue;
            }
            for a in 0..left {
                let row_base = (a * mw + rl) * right;
                let col_base = (a * mw + cl) * right;
                for b in 0..right {
                    out.push((row_base + b, col_base + b, v));
                }
            }
        }
    }
    Ok(())
}

/// `I^(j-1) ⊗ S ⊗ I^(L-j)` as a sparse Hermitian operator.
pub fn spin_site_operator<T: Scalar>(spec: &SpinSiteSpec<T>) -> Result<HermitianSparse<T>, ModelError> {
    let m = spec.local.nrows();
    if spec.local.ncols() != m {
        return Err(ModelError::Invalid("local matrix must be square".into()));
    }
    let n = checked_dim(m, spec.length)?;
    let mut triplets = Vec::new();
    embed_local(spec.length, m, spec.site, 1, &spec.local, &mut triplets)?;
    HermitianSparse::accumulate(n, triplets)
}

fn bond_sum<T: Scalar>(
    length: usize,
    m: usize,
    local: &CMatrix<T>,
) -> Result<HermitianSparse<T>, ModelError> {
    let n = checked_dim(m, length)?;
    let mut triplets = Vec::new();
    for j in 1..length {
        embed_local(length, m, j, 2, local, &mut triplets)?;
    }
    HermitianSparse::accumulate(n, triplets)
}

fn site_sum<T: Scalar>(
    length: usize,
    m: usize,
    local: &CMatrix<T>,
) -> Result<HermitianSparse<T>, ModelError> {
    let n = checked_dim(m, length)?;
    let mut triplets = Vec::new();
    for j in 1..=length {
        embed_local(length, m, j, 1, local, &mut triplets)?;
    }
    HermitianSparse::accumulate(n, triplets)
}

/// xxz chain with open boundary: `A(mu) = A_1 + mu_1 A_2 - mu_2 A_3` on
/// `[-1, 2.5] x [0, 3.5]`, with
/// `A_1 = (1/4) sum_j (SxSx + SySy)`, `A_2 = (1/4) sum_j SzSz`,
/// `A_3 = (1/2) sum_j Sz` over spin-1/2 matrices.
pub fn xxz_family<T: Scalar>(length: usize) -> Result<AffineFamily<T>, ModelError> {
    if length < 2 {
        return Err(ModelError::Invalid("xxz chain needs length >= 2".into()));
    }
    let [sx, sy, sz] = spin_half_matrices::<T>();
    let quarter = Cx::new(c::<T>(0.25), T::zero());
    let half = Cx::new(c::<T>(0.5), T::zero());

    let local1 = (sx.kronecker(&sx) + sy.kronecker(&sy)) * quarter;
    let local2 = sz.kronecker(&sz) * quarter;
    let local3 = sz * half;

    let a1 = bond_sum(length, 2, &local1)?;
    let a2 = bond_sum(length, 2, &local2)?;
    let a3 = site_sum(length, 2, &local3)?;

    let terms = vec![
        ThetaTerm::monomial(T::one(), vec![0, 0]),
        ThetaTerm::monomial(T::one(), vec![1, 0]),
        ThetaTerm::monomial(-T::one(), vec![0, 1]),
    ];
    let domain = DomainBox::new(vec![c(-1.0), c(0.0)], vec![c(2.5), c(3.5)])?;
    AffineFamily::new(terms, vec![a1, a2, a3], domain)
}

/// Bilinear-biquadratic spin-1 chain with uniaxial single-ion anisotropy:
/// `A(mu) = cos(mu_1) A_1 + sin(mu_1) A_2 + mu_2 A_3` on `[-pi, pi] x [-2, 3]`.
///
/// `A_1` is the bilinear exchange `sum_j S_j . S_{j+1}`, `A_2` the biquadratic
/// `sum_j (S_j . S_{j+1})^2` expanded over operator pairs `(a, b)`, and
/// `A_3 = sum_j (S_z^(j))^2`.
pub fn blbq_family<T: Scalar>(length: usize) -> Result<AffineFamily<T>, ModelError> {
    if length < 2 {
        return Err(ModelError::Invalid("blbq chain needs length >= 2".into()));
    }
    let spins = spin_one_matrices::<T>();

    let mut local1 = CMatrix::<T>::zeros(9, 9);
    for s in &spins {
        local1 += s.kronecker(s);
    }
    let mut local2 = CMatrix::<T>::zeros(9, 9);
    for sa in &spins {
        for sb in &spins {
            let prod = sa * sb;
            local2 += prod.kronecker(&prod);
        }
    }
    let mut local3 = CMatrix::<T>::zeros(3, 3);
    local3[(0, 0)] = Cx::new(T::one(), T::zero());
    local3[(2, 2)] = Cx::new(T::one(), T::zero());

    let a1 = bond_sum(length, 3, &local1)?;
    let a2 = bond_sum(length, 3, &local2)?;
    let a3 = site_sum(length, 3, &local3)?;

    let terms = vec![
        ThetaTerm::cosine(T::one(), T::one(), 0),
        ThetaTerm::sine(T::one(), T::one(), 0),
        ThetaTerm::monomial(T::one(), vec![0, 1]),
    ];
    let domain = DomainBox::new(vec![-T::pi(), c(-2.0)], vec![T::pi(), c(3.0)])?;
    AffineFamily::new(terms, vec![a1, a2, a3], domain)
}

/// `A(mu) = mu^2 A_1 + mu A_2` on `[0.1, 10]` with `A_1, A_2` dense real
/// symmetric, obtained by symmetrizing a seeded standard-normal matrix
/// (`(G + G^T)/2`, `G` drawn row-major from ChaCha20).
pub fn random_quadratic_family<T: Scalar>(
    n: usize,
    seed: u64,
) -> Result<AffineFamily<T>, ModelError> {
    if n < 2 {
        return Err(ModelError::Invalid("need n >= 2".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draw = |n: usize, rng: &mut ChaCha20Rng| -> Result<HermitianSparse<T>, ModelError> {
        let mut g = vec![0.0f64; n * n];
        for x in &mut g {
            *x = standard_normal(rng);
        }
        let mut triplets = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * (g[i * n + j] + g[j * n + i]);
                triplets.push((i, j, Cx::new(c::<T>(v), T::zero())));
            }
        }
        HermitianSparse::from_file_entries(n, triplets)
    };
    let a1 = draw(n, &mut rng)?;
    let a2 = draw(n, &mut rng)?;
    let terms = vec![
        ThetaTerm::monomial(T::one(), vec![2]),
        ThetaTerm::monomial(T::one(), vec![1]),
    ];
    let domain = DomainBox::new(vec![c(0.1)], vec![c(10.0)])?;
    AffineFamily::new(terms, vec![a1, a2], domain)
}

/// Box-Muller standard normal; keeps the generic scalar path free of
/// distribution trait bounds.
fn standard_normal(rng: &mut ChaCha20Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        if u > f64::MIN_POSITIVE {
            return (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
        }
    }
}

/// The analytic family `diag(mu, mu^2 - 2, -mu)` on `[-2, 2]`; its smallest
/// eigenvalue has multiplicity 2 at `mu = +-1`.
pub fn example1_family<T: Scalar>() -> AffineFamily<T> {
    let one = Cx::new(T::one(), T::zero());
    let a1 = HermitianSparse::from_file_entries(3, vec![(0, 0, one), (2, 2, -one)]).unwrap();
    let a2 = HermitianSparse::from_file_entries(3, vec![(1, 1, one)]).unwrap();
    let a3 = HermitianSparse::from_file_entries(3, vec![(1, 1, -one * c::<T>(2.0))]).unwrap();
    let terms = vec![
        ThetaTerm::monomial(T::one(), vec![1]),
        ThetaTerm::monomial(T::one(), vec![2]),
        ThetaTerm::monomial(T::one(), vec![0]),
    ];
    let domain = DomainBox::new(vec![c(-2.0)], vec![c(2.0)]).unwrap();
    AffineFamily::new(terms, vec![a1, a2, a3], domain).unwrap()
}

/// Rank-one family `A(mu) = -w(mu) w(mu)^*` built from normalized Lagrange
/// basis polynomials over the given nodes; `lambda_1(mu) = -1` identically
/// with eigenvector `w(mu)`. Uses the rational theta extension, so the
/// certified lower-bound path rejects these families.
pub fn lagrange_rank_one_family<T: Scalar>(nodes: &[T]) -> Result<AffineFamily<T>, ModelError> {
    let n = nodes.len();
    if n < 2 {
        return Err(ModelError::Invalid("need at least two nodes".into()));
    }
    if n > 20 {
        return Err(ModelError::Invalid("at most 20 nodes supported".into()));
    }
    for (a, &xa) in nodes.iter().enumerate() {
        if xa < c(-1.0) || xa > c(1.0) {
            return Err(ModelError::Invalid(format!("node {a} outside [-1, 1]")));
        }
        for &xb in &nodes[a + 1..] {
            if xa == xb {
                return Err(ModelError::Invalid("nodes must be pairwise distinct".into()));
            }
        }
    }
    let one = Cx::new(T::one(), T::zero());
    let mut terms = Vec::new();
    let mut matrices = Vec::new();
    for i in 0..n {
        for k in i..n {
            terms.push(ThetaTerm {
                coefficient: -T::one(),
                kind: ThetaKind::LagrangeRatio {
                    i,
                    k,
                    nodes: nodes.to_vec(),
                },
            });
            matrices.push(HermitianSparse::from_file_entries(n, vec![(i, k, one)])?);
        }
    }
    let domain = DomainBox::new(vec![c(-1.0)], vec![c(1.0)])?;
    AffineFamily::new(terms, matrices, domain)
}

/// The normalized vector `w(mu)` spanning the ground eigenspace of the
/// rank-one Lagrange family.
pub fn lagrange_ground_vector<T: Scalar>(nodes: &[T], mu: T) -> Vec<T> {
    let n = nodes.len();
    let ls: Vec<T> = (0..n)
        .map(|j| crate::affine::lagrange_basis(nodes, j, mu))
        .collect();
    let norm = ls
        .iter()
        .map(|l| *l * *l)
        .fold(T::zero(), |a, b| a + b)
        .sqrt();
    ls.into_iter().map(|l| l / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type F = f64;

    /// Dense Kronecker oracle: literally expands I ⊗ S ⊗ I via repeated
    /// dense Kronecker products.
    fn dense_site_oracle(length: usize, site: usize, s: &CMatrix<F>) -> CMatrix<F> {
        let m = s.nrows();
        let eye = CMatrix::<F>::identity(m, m);
        let mut acc = CMatrix::<F>::identity(1, 1);
        for j in 1..=length {
            let factor = if j == site { s.clone() } else { eye.clone() };
            acc = acc.kronecker(&factor);
        }
        acc
    }

    fn assert_dense_close(a: &CMatrix<F>, b: &CMatrix<F>, tol: F) {
        assert_eq!(a.nrows(), b.nrows());
        let diff = (a - b).norm();
        assert!(diff <= tol, "matrices differ by {diff}");
    }

    #[test]
    fn site_operator_single_site() {
        let [_, _, sz] = spin_half_matrices::<F>();
        let op = spin_site_operator(&SpinSiteSpec {
            length: 1,
            site: 1,
            local: sz.clone(),
        })
        .unwrap();
        assert_dense_close(&op.to_dense(), &sz, 0.0);
    }

    #[test]
    fn site_operator_i_kron_sz() {
        let [_, _, sz] = spin_half_matrices::<F>();
        let op = spin_site_operator(&SpinSiteSpec {
            length: 2,
            site: 2,
            local: sz,
        })
        .unwrap();
        let d = op.to_dense();
        for (k, want) in [1.0, -1.0, 1.0, -1.0].iter().enumerate() {
            assert_eq!(d[(k, k)], Cx::new(*want, 0.0));
        }
    }

    #[test]
    fn site_operator_matches_kron_oracle() {
        let [sx, sy, _] = spin_half_matrices::<F>();
        for (site, s) in [(2usize, &sx), (1, &sy), (3, &sx)] {
            let op = spin_site_operator(&SpinSiteSpec {
                length: 3,
                site,
                local: s.clone(),
            })
            .unwrap();
            assert_dense_close(&op.to_dense(), &dense_site_oracle(3, site, s), 1e-14);
        }
    }

    #[test]
    fn site_operator_rejects_bad_site() {
        let [sx, _, _] = spin_half_matrices::<F>();
        assert!(spin_site_operator(&SpinSiteSpec {
            length: 2,
            site: 3,
            local: sx,
        })
        .is_err());
    }

    /// Dense oracle for the full xxz terms, assembled from single-site
    /// dense Kronecker factors only.
    fn xxz_dense_oracle(length: usize) -> [CMatrix<F>; 3] {
        let [sx, sy, sz] = spin_half_matrices::<F>();
        let n = 1usize << length;
        let mut a1 = CMatrix::<F>::zeros(n, n);
        let mut a2 = CMatrix::<F>::zeros(n, n);
        let mut a3 = CMatrix::<F>::zeros(n, n);
        for j in 1..length {
            a1 += (dense_site_oracle(length, j, &sx) * dense_site_oracle(length, j + 1, &sx)
                + dense_site_oracle(length, j, &sy) * dense_site_oracle(length, j + 1, &sy))
                * Cx::new(0.25, 0.0);
            a2 += dense_site_oracle(length, j, &sz)
                * dense_site_oracle(length, j + 1, &sz)
                * Cx::new(0.25, 0.0);
        }
        for j in 1..=length {
            a3 += dense_site_oracle(length, j, &sz) * Cx::new(0.5, 0.0);
        }
        [a1, a2, a3]
    }

    #[test]
    fn xxz_matches_kron_oracle() {
        for length in 2..=4 {
            let fam = xxz_family::<F>(length).unwrap();
            let oracle = xxz_dense_oracle(length);
            for (a, o) in fam.matrices().iter().zip(&oracle) {
                assert_dense_close(&a.to_dense(), o, 1e-14);
            }
        }
    }

    #[test]
    fn xxz_a3_is_half_total_magnetization() {
        let fam = xxz_family::<F>(2).unwrap();
        let d = fam.matrices()[2].to_dense();
        for (k, want) in [1.0, 0.0, 0.0, -1.0].iter().enumerate() {
            assert_eq!(d[(k, k)], Cx::new(*want, 0.0));
        }
    }

    #[test]
    fn xxz_dimension_scaling() {
        assert_eq!(xxz_family::<F>(8).unwrap().n(), 256);
        // paper scale: L = 14 gives 16384
        let f = xxz_family::<F>(14).unwrap();
        assert_eq!(f.n(), 16384);
    }

    #[test]
    fn xxz_commutes_with_total_sz() {
        let [_, _, sz] = spin_half_matrices::<F>();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for length in 2..=4 {
            let fam = xxz_family::<F>(length).unwrap();
            let n = fam.n();
            let mut total = CMatrix::<F>::zeros(n, n);
            for j in 1..=length {
                total += dense_site_oracle(length, j, &sz);
            }
            for _ in 0..3 {
                let mu = [rng.gen_range(-1.0..2.5), rng.gen_range(0.0..3.5)];
                let a = fam.assemble(&mu).unwrap();
                let comm = &a * &total - &total * &a;
                assert!(comm.norm() <= 1e-12 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn blbq_dimensions() {
        assert_eq!(blbq_family::<F>(2).unwrap().n(), 9);
        assert_eq!(blbq_family::<F>(3).unwrap().n(), 27);
    }

    #[test]
    fn blbq_bilinear_matches_oracle() {
        let spins = spin_one_matrices::<F>();
        let fam = blbq_family::<F>(2).unwrap();
        // At mu = (0, 0) the family reduces to A_1 = sum_a S_a ⊗ S_a.
        let a = fam.assemble(&[0.0, 0.0]).unwrap();
        let mut oracle = CMatrix::<F>::zeros(9, 9);
        for s in &spins {
            oracle += s.kronecker(s);
        }
        assert_dense_close(&a, &oracle, 1e-14);
    }

    #[test]
    fn blbq_biquadratic_is_squared_dot_product() {
        let spins = spin_one_matrices::<F>();
        let fam = blbq_family::<F>(2).unwrap();
        let a2 = fam.matrices()[1].to_dense();
        let mut dot = CMatrix::<F>::zeros(9, 9);
        for s in &spins {
            dot += s.kronecker(s);
        }
        assert_dense_close(&a2, &(&dot * &dot), 1e-13);
        // Known two-site spectrum of (S.S)^2: eigenvalue 4 once, 1 eight times.
        let mut eigs: Vec<F> = a2.symmetric_eigen().eigenvalues.iter().cloned().collect();
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for e in &eigs[..8] {
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert!((eigs[8] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn generated_terms_are_hermitian_sparse() {
        for fam in [xxz_family::<F>(3).unwrap(), blbq_family::<F>(2).unwrap()] {
            for a in fam.matrices() {
                let d = a.to_dense();
                assert_dense_close(&d, &d.adjoint(), 0.0);
            }
        }
    }

    #[test]
    fn random_family_is_deterministic() {
        let f1 = random_quadratic_family::<F>(20, 42).unwrap();
        let f2 = random_quadratic_family::<F>(20, 42).unwrap();
        assert_eq!(f1, f2);
        let f3 = random_quadratic_family::<F>(20, 43).unwrap();
        assert_ne!(f1, f3);
    }

    #[test]
    fn random_family_assembles_symmetric() {
        let f = random_quadratic_family::<F>(15, 3).unwrap();
        let a = f.assemble(&[1.0]).unwrap();
        assert_dense_close(&a, &a.adjoint(), 0.0);
        assert_eq!(f.q(), 2);
    }

    #[test]
    fn example1_analytic_values() {
        let f = example1_family::<F>();
        let eig = |mu: f64| -> Vec<F> {
            let mut v: Vec<F> = f
                .assemble(&[mu])
                .unwrap()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v
        };
        let e1 = eig(1.0);
        assert!((e1[0] + 1.0).abs() < 1e-14 && (e1[1] + 1.0).abs() < 1e-14);
        assert!((e1[2] - 1.0).abs() < 1e-14);
        let e0 = eig(0.0);
        assert!((e0[0] + 2.0).abs() < 1e-14);
        assert!((e0[1] - e0[0] - 2.0).abs() < 1e-14);
        let e2 = eig(2.0);
        assert!((e2[0] + 2.0).abs() < 1e-14);
        assert!((e2[1] - e2[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn lagrange_constant_ground_eigenvalue() {
        let nodes: Vec<F> = vec![-0.8, -0.3, 0.2, 0.9];
        let fam = lagrange_rank_one_family(&nodes).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mu = rng.gen_range(-1.0..1.0);
            let a = fam.assemble(&[mu]).unwrap();
            let mut eigs: Vec<F> = a.symmetric_eigen().eigenvalues.iter().cloned().collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert!((eigs[0] + 1.0).abs() < 1e-12, "lambda_1 = {}", eigs[0]);
            let w = lagrange_ground_vector(&nodes, mu);
            let norm: F = w.iter().map(|x| x * x).sum::<F>().sqrt();
            assert!((norm - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrange_ground_vector_at_nodes() {
        let nodes: Vec<F> = vec![-0.5, 0.0, 0.5];
        let fam = lagrange_rank_one_family(&nodes).unwrap();
        for (k, &xk) in nodes.iter().enumerate() {
            let a = fam.assemble(&[xk]).unwrap();
            let mut e_k = crate::scalar::CVector::<F>::zeros(3);
            e_k[k] = Cx::new(1.0, 0.0);
            let y = &a * &e_k;
            assert!((&y + &e_k).norm() < 1e-12, "A e_k != -e_k at node {k}");
        }
    }

    #[test]
    fn lagrange_rejects_duplicates() {
        assert!(lagrange_rank_one_family::<F>(&[0.1, 0.1]).is_err());
    }
}
