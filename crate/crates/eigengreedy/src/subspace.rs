//! Reduced-model state: orthonormal basis, Galerkin-compressed terms, the
//! second-order Gramians needed for n-independent residual evaluation, and
//! per-snapshot bookkeeping. Includes the ROM container format.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::affine::{AffineFamily, DomainBox, ModelError, ThetaTerm};
use crate::eigensolve::{
    cluster, dense_eig, ClusterTol, EigenClustering, EigenError, ClusteredSolve,
};
use crate::scalar::{c, CMatrix, CVector, Cx, Scalar};

#[derive(Debug, Error)]
pub enum SubspaceError {
    #[error("reduced basis is empty")]
    EmptyBasis,
    #[error("state does not carry the full basis (rebuild with --store-basis)")]
    MissingBasis,
    #[error("state is frozen (loaded without offline caches); cannot extend")]
    Frozen,
    #[error("input block is not orthonormal (deviation {0})")]
    NonOrthonormal(f64),
    #[error("rational theta terms are not supported by the certified bound machinery")]
    RationalFamily,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("ROM parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-selected-parameter record: eigenvalues, eigenvector block (offline
/// only), and cross products against the current basis.
#[derive(Debug, Clone)]
pub struct Snapshot<T: Scalar> {
    pub mu: Vec<T>,
    /// `lambda_1 .. lambda_l` at `mu`.
    pub values: Vec<T>,
    /// `lambda_{l+1}` (or `lambda_n` when the snapshot exhausts the spectrum).
    pub next_value: T,
    /// `W^(j)`, n x l orthonormal eigenvector block; dropped in frozen states.
    pub vectors: Option<CMatrix<T>>,
    /// `M_j = (W^(j))^* V`, l x r, kept consistent with the basis.
    pub cross: CMatrix<T>,
}

impl<T: Scalar> Snapshot<T> {
    pub fn ell(&self) -> usize {
        self.values.len()
    }
}

/// Offline caches that allow incremental Gramian updates.
#[derive(Debug, Clone)]
struct OfflineCache<T: Scalar> {
    /// `A_q V` per term, n x r.
    aq_v: Vec<CMatrix<T>>,
    /// Orthonormal basis `Z` of `span{V, A_1 V, .., A_Q V}`, n x z.
    z_basis: CMatrix<T>,
}

/// Coordinates of the residual-bearing blocks in the auxiliary basis `Z`:
/// residual norms evaluated through these avoid the squared-Gramian
/// cancellation and stay accurate near machine precision.
#[derive(Debug, Clone)]
pub struct ResidualBasis<T: Scalar> {
    /// `Z^* V`, z x r.
    pub v_coeffs: CMatrix<T>,
    /// `Z^* A_q V` per term, z x r.
    pub term_coeffs: Vec<CMatrix<T>>,
}

/// Reduced eigendecomposition at one parameter.
#[derive(Debug, Clone)]
pub struct ReducedEig<T: Scalar> {
    pub values: Vec<T>,
    /// r x r orthonormal eigenvector block (reduced coordinates).
    pub vectors: CMatrix<T>,
    pub clustering: EigenClustering<T>,
    /// The reduced matrix is numerically `c * I`: every value in one cluster.
    pub scalar_identity: bool,
}

impl<T: Scalar> ReducedEig<T> {
    pub fn lambda1(&self) -> T {
        self.values[0]
    }

    /// Multiplicity of the smallest reduced eigenvalue.
    pub fn m1(&self) -> usize {
        self.clustering.multiplicities[0]
    }

    /// Reduced ground block, r x m_1.
    pub fn ground_block(&self) -> CMatrix<T> {
        self.vectors.columns(0, self.m1()).into_owned()
    }
}

/// Reduced-order model: basis metadata plus every Gramian needed to evaluate
/// eigenvalue bounds at cost independent of n.
#[derive(Debug, Clone)]
pub struct RomState<T: Scalar> {
    n: usize,
    terms: Vec<ThetaTerm<T>>,
    domain: DomainBox<T>,
    /// `V^* A_q V` per term, r x r.
    reduced_terms: Vec<CMatrix<T>>,
    /// `G_{q,q'} = (A_q V)^* (A_{q'} V)`, row-major `q * Q + q'`.
    second_order: Vec<CMatrix<T>>,
    /// `(lambda_min(A_q), lambda_max(A_q))` per term.
    term_extrema: Vec<(T, T)>,
    snapshots: Vec<Snapshot<T>>,
    resid: ResidualBasis<T>,
    /// Number of complete eigenvalue clusters each snapshot covers (k_0).
    cluster_coverage: usize,
    /// Build tolerance recorded for downstream claim verification.
    pub build_tolerance: Option<T>,
    pub cluster_tol: ClusterTol<T>,
    basis: Option<CMatrix<T>>,
    offline: Option<OfflineCache<T>>,
}

fn orthonormality_defect<T: Scalar>(block: &CMatrix<T>) -> T {
    let r = block.ncols();
    (block.adjoint() * block - CMatrix::<T>::identity(r, r)).norm()
}

impl<T: Scalar> RomState<T> {
    /// Fresh empty state for a family; computes the per-term spectral
    /// extrema once (iteratively, at both ends of each spectrum).
    pub fn new(
        family: &AffineFamily<T>,
        cluster_coverage: usize,
        cluster_tol: ClusterTol<T>,
        seed: u64,
    ) -> Result<Self, SubspaceError> {
        if family.has_rational_terms() {
            return Err(SubspaceError::RationalFamily);
        }
        let n = family.n();
        let mut term_extrema = Vec::with_capacity(family.q());
        for a in family.matrices() {
            let lo = crate::eigensolve::extreme_eigenvalue(a, false, seed)?;
            let hi = crate::eigensolve::extreme_eigenvalue(a, true, seed)?;
            // Ritz values sit inside the spectrum; widen so the box stays an
            // enclosure of the attainable Rayleigh quotients.
            let widen = (T::one() + lo.abs().max(hi.abs())) * c(1e-12);
            term_extrema.push((lo - widen, hi + widen));
        }
        let q = family.q();
        Ok(Self {
            n,
            terms: family.terms().to_vec(),
            domain: family.domain().clone(),
            reduced_terms: vec![CMatrix::zeros(0, 0); q],
            second_order: vec![CMatrix::zeros(0, 0); q * q],
            term_extrema,
            snapshots: Vec::new(),
            resid: ResidualBasis {
                v_coeffs: CMatrix::zeros(0, 0),
                term_coeffs: vec![CMatrix::zeros(0, 0); q],
            },
            cluster_coverage,
            build_tolerance: None,
            cluster_tol,
            basis: Some(CMatrix::zeros(n, 0)),
            offline: Some(OfflineCache {
                aq_v: vec![CMatrix::zeros(n, 0); q],
                z_basis: CMatrix::zeros(n, 0),
            }),
        })
    }

    /// State over a given orthonormal basis (testing and diagnostics).
    pub fn from_basis(
        family: &AffineFamily<T>,
        basis: &CMatrix<T>,
        cluster_coverage: usize,
        cluster_tol: ClusterTol<T>,
        seed: u64,
    ) -> Result<Self, SubspaceError> {
        let defect = orthonormality_defect(basis);
        if defect > c(1e-10) {
            return Err(SubspaceError::NonOrthonormal(defect.to_f64().unwrap_or(f64::NAN)));
        }
        let mut state = Self::new(family, cluster_coverage, cluster_tol, seed)?;
        state.extend_with_orthonormal(family, basis)?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.reduced_terms.len()
    }

    pub fn r(&self) -> usize {
        self.reduced_terms.first().map_or(0, |m| m.nrows())
    }

    pub fn terms(&self) -> &[ThetaTerm<T>] {
        &self.terms
    }

    pub fn domain(&self) -> &DomainBox<T> {
        &self.domain
    }

    pub fn p(&self) -> usize {
        self.domain.dim()
    }

    pub fn snapshots(&self) -> &[Snapshot<T>] {
        &self.snapshots
    }

    pub fn snapshot_mus(&self) -> Vec<Vec<T>> {
        self.snapshots.iter().map(|s| s.mu.clone()).collect()
    }

    pub fn cluster_coverage(&self) -> usize {
        self.cluster_coverage
    }

    pub fn term_extrema(&self) -> &[(T, T)] {
        &self.term_extrema
    }

    pub fn second_order(&self, q: usize, qp: usize) -> &CMatrix<T> {
        &self.second_order[q * self.q() + qp]
    }

    pub fn basis(&self) -> Option<&CMatrix<T>> {
        self.basis.as_ref()
    }

    pub fn has_basis(&self) -> bool {
        self.basis.is_some()
    }

    /// Drops the full basis and offline caches, keeping only what online
    /// evaluation needs.
    pub fn strip_basis(&mut self) {
        self.basis = None;
        self.offline = None;
        for s in &mut self.snapshots {
            s.vectors = None;
        }
    }

    pub fn theta(&self, mu: &[T]) -> Vec<T> {
        crate::affine::eval_theta_terms(&self.terms, mu)
    }

    /// Extends the basis by the components of `new_columns` orthogonal to
    /// the current span (twice-iterated modified Gram-Schmidt); columns with
    /// post-orthogonalization norm below 1e-12 are dropped. All Gramians and
    /// snapshot cross products are updated incrementally. Returns the number
    /// of accepted columns.
    pub fn orth_extend(
        &mut self,
        family: &AffineFamily<T>,
        new_columns: &CMatrix<T>,
    ) -> Result<usize, SubspaceError> {
        let basis = self.basis.as_ref().ok_or(SubspaceError::MissingBasis)?;
        if self.offline.is_none() {
            return Err(SubspaceError::Frozen);
        }
        let n = self.n;
        if new_columns.nrows() != n {
            return Err(SubspaceError::Model(ModelError::Dimension {
                expected: n,
                got: new_columns.nrows(),
            }));
        }
        let drop_tol = c::<T>(1e-12);
        let mut accepted: Vec<CVector<T>> = Vec::new();
        for col in new_columns.column_iter() {
            let mut v: CVector<T> = col.into_owned();
            for _ in 0..2 {
                for u in basis.column_iter() {
                    let coeff = u.dotc(&v);
                    v.axpy(-coeff, &u.into_owned(), Cx::new(T::one(), T::zero()));
                }
                for u in &accepted {
                    let coeff = u.dotc(&v);
                    v.axpy(-coeff, u, Cx::new(T::one(), T::zero()));
                }
            }
            let norm = v.norm();
            if norm < drop_tol {
                log::debug!("orth_extend: dropping dependent column (norm {norm:?})");
                continue;
            }
            v /= Cx::new(norm, T::zero());
            accepted.push(v);
        }
        if accepted.is_empty() {
            return Ok(0);
        }
        let d = accepted.len();
        let mut block = CMatrix::<T>::zeros(n, d);
        for (k, v) in accepted.iter().enumerate() {
            block.set_column(k, v);
        }
        self.extend_with_orthonormal(family, &block)?;
        Ok(d)
    }

    /// Appends an already-orthonormal block (also orthogonal to the current
    /// basis) and updates every Gramian incrementally.
    fn extend_with_orthonormal(
        &mut self,
        family: &AffineFamily<T>,
        block: &CMatrix<T>,
    ) -> Result<(), SubspaceError> {
        let d = block.ncols();
        if d == 0 {
            return Ok(());
        }
        let basis = self.basis.as_ref().ok_or(SubspaceError::MissingBasis)?;
        let cache = self.offline.as_ref().ok_or(SubspaceError::Frozen)?;
        let q = family.q();
        let r0 = self.r();
        let n = self.n;

        // A_q applied to the new columns.
        let mut aq_w: Vec<CMatrix<T>> = Vec::with_capacity(q);
        for a in family.matrices() {
            let mut prod = CMatrix::<T>::zeros(n, d);
            for k in 0..d {
                let x: CVector<T> = block.column(k).into_owned();
                let mut y = CVector::<T>::zeros(n);
                a.apply_add(Cx::new(T::one(), T::zero()), &x, &mut y);
                prod.set_column(k, &y);
            }
            aq_w.push(prod);
        }

        // Reduced terms: [[old, V* A_q W], [(V* A_q W)*, W* A_q W]].
        let mut new_reduced = Vec::with_capacity(q);
        for (qi, aw) in aq_w.iter().enumerate() {
            let top_right = basis.adjoint() * aw;
            let bottom_right = block.adjoint() * aw;
            let mut m = CMatrix::<T>::zeros(r0 + d, r0 + d);
            m.view_mut((0, 0), (r0, r0)).copy_from(&self.reduced_terms[qi]);
            m.view_mut((0, r0), (r0, d)).copy_from(&top_right);
            m.view_mut((r0, 0), (d, r0)).copy_from(&top_right.adjoint());
            m.view_mut((r0, r0), (d, d)).copy_from(&bottom_right);
            new_reduced.push(m);
        }

        // Second order: G_{q,q'} = (A_q V)^* (A_{q'} V) blockwise.
        let mut new_second = Vec::with_capacity(q * q);
        for qi in 0..q {
            for qj in 0..q {
                let old = &self.second_order[qi * q + qj];
                let top_right = cache.aq_v[qi].adjoint() * &aq_w[qj];
                let bottom_left = aq_w[qi].adjoint() * &cache.aq_v[qj];
                let bottom_right = aq_w[qi].adjoint() * &aq_w[qj];
                let mut m = CMatrix::<T>::zeros(r0 + d, r0 + d);
                m.view_mut((0, 0), (r0, r0)).copy_from(old);
                m.view_mut((0, r0), (r0, d)).copy_from(&top_right);
                m.view_mut((r0, 0), (d, r0)).copy_from(&bottom_left);
                m.view_mut((r0, r0), (d, d)).copy_from(&bottom_right);
                new_second.push(m);
            }
        }

        // Grow the auxiliary basis Z by the components of [W, A_q W] outside
        // its span; residual evaluations are exact in these coordinates.
        let z0 = cache.z_basis.ncols();
        let mut z_new: Vec<CVector<T>> = Vec::new();
        {
            let mut candidates: Vec<CVector<T>> = Vec::with_capacity(d * (q + 1));
            for k in 0..d {
                candidates.push(block.column(k).into_owned());
            }
            for aw in &aq_w {
                for k in 0..d {
                    candidates.push(aw.column(k).into_owned());
                }
            }
            for mut x in candidates {
                let pre = x.norm();
                if pre == T::zero() {
                    continue;
                }
                for _ in 0..2 {
                    for u in cache.z_basis.column_iter() {
                        let coeff = u.dotc(&x);
                        x.axpy(-coeff, &u.into_owned(), Cx::new(T::one(), T::zero()));
                    }
                    for u in &z_new {
                        let coeff = u.dotc(&x);
                        x.axpy(-coeff, u, Cx::new(T::one(), T::zero()));
                    }
                }
                let post = x.norm();
                if post > pre * c(1e-13) {
                    x /= Cx::new(post, T::zero());
                    z_new.push(x);
                }
            }
        }
        let dz = z_new.len();
        let mut z_block = CMatrix::<T>::zeros(n, dz);
        for (k, v) in z_new.iter().enumerate() {
            z_block.set_column(k, v);
        }

        // Residual coordinates: old V and A_q V lie in span(Z_old), so the
        // new rows against them vanish up to the Z drop tolerance; they are
        // computed honestly from the cached blocks.
        let grow = |old: &CMatrix<T>, new_cols: &CMatrix<T>, old_full: &CMatrix<T>| {
            let mut m = CMatrix::<T>::zeros(z0 + dz, r0 + d);
            m.view_mut((0, 0), (z0, r0)).copy_from(old);
            if z0 > 0 {
                m.view_mut((0, r0), (z0, d))
                    .copy_from(&(cache.z_basis.adjoint() * new_cols));
            }
            if dz > 0 {
                m.view_mut((z0, 0), (dz, r0))
                    .copy_from(&(z_block.adjoint() * old_full));
                m.view_mut((z0, r0), (dz, d))
                    .copy_from(&(z_block.adjoint() * new_cols));
            }
            m
        };
        let new_v_coeffs = grow(&self.resid.v_coeffs, block, basis);
        let mut new_term_coeffs = Vec::with_capacity(q);
        for qi in 0..q {
            new_term_coeffs.push(grow(&self.resid.term_coeffs[qi], &aq_w[qi], &cache.aq_v[qi]));
        }

        // Snapshot cross products gain columns W^(j)* (new block).
        for s in &mut self.snapshots {
            let w = s.vectors.as_ref().ok_or(SubspaceError::Frozen)?;
            let extra = w.adjoint() * block;
            let ell = s.cross.nrows();
            let mut m = CMatrix::<T>::zeros(ell, r0 + d);
            m.view_mut((0, 0), (ell, r0)).copy_from(&s.cross);
            m.view_mut((0, r0), (ell, d)).copy_from(&extra);
            s.cross = m;
        }

        let mut new_basis = CMatrix::<T>::zeros(n, r0 + d);
        new_basis.view_mut((0, 0), (n, r0)).copy_from(basis);
        new_basis.view_mut((0, r0), (n, d)).copy_from(block);
        let cache = self.offline.as_mut().unwrap();
        for (qi, aw) in aq_w.into_iter().enumerate() {
            let old = &cache.aq_v[qi];
            let mut m = CMatrix::<T>::zeros(n, r0 + d);
            m.view_mut((0, 0), (n, r0)).copy_from(old);
            m.view_mut((0, r0), (n, d)).copy_from(&aw);
            cache.aq_v[qi] = m;
        }
        let mut z_all = CMatrix::<T>::zeros(n, z0 + dz);
        z_all
            .view_mut((0, 0), (n, z0))
            .copy_from(&cache.z_basis);
        z_all.view_mut((0, z0), (n, dz)).copy_from(&z_block);
        cache.z_basis = z_all;
        self.resid = ResidualBasis {
            v_coeffs: new_v_coeffs,
            term_coeffs: new_term_coeffs,
        };
        self.basis = Some(new_basis);
        self.reduced_terms = new_reduced;
        self.second_order = new_second;
        Ok(())
    }

    /// Records a full-order solve as a snapshot (cross products against the
    /// current basis) without growing the basis.
    pub fn attach_snapshot(&mut self, mu: &[T], solve: &ClusteredSolve<T>) -> Result<(), SubspaceError> {
        let basis = self.basis.as_ref().ok_or(SubspaceError::MissingBasis)?;
        let cross = solve.vectors.adjoint() * basis;
        self.snapshots.push(Snapshot {
            mu: mu.to_vec(),
            values: solve.values.clone(),
            next_value: solve.next_value,
            vectors: Some(solve.vectors.clone()),
            cross,
        });
        Ok(())
    }

    /// Snapshot insertion as performed by the greedy drivers: record the
    /// solve, then extend the basis by its eigenvector block.
    pub fn insert_snapshot(
        &mut self,
        family: &AffineFamily<T>,
        mu: &[T],
        solve: &ClusteredSolve<T>,
    ) -> Result<usize, SubspaceError> {
        self.attach_snapshot(mu, solve)?;
        self.orth_extend(family, &solve.vectors)
    }

    /// `sum_q theta_q(mu) V^* A_q V`, Hermitized against rounding.
    pub fn reduced_assemble(&self, mu: &[T]) -> Result<CMatrix<T>, SubspaceError> {
        let r = self.r();
        if r == 0 {
            return Err(SubspaceError::EmptyBasis);
        }
        let theta = self.theta(mu);
        let mut m = CMatrix::<T>::zeros(r, r);
        for (t, a) in theta.iter().zip(&self.reduced_terms) {
            m += a * Cx::new(*t, T::zero());
        }
        let herm = (&m + m.adjoint()) * Cx::new(c::<T>(0.5), T::zero());
        Ok(herm)
    }

    /// Smallest reduced eigenvalue, its multiplicity, the reduced ground
    /// block, and the full reduced clustering.
    pub fn reduced_smallest(
        &self,
        mu: &[T],
    ) -> Result<(T, usize, CMatrix<T>, EigenClustering<T>), SubspaceError> {
        let red = self.reduced_eig(mu)?;
        Ok((
            red.lambda1(),
            red.m1(),
            red.ground_block(),
            red.clustering.clone(),
        ))
    }

    /// Dense eigendecomposition of the reduced matrix plus clustering.
    pub fn reduced_eig(&self, mu: &[T]) -> Result<ReducedEig<T>, SubspaceError> {
        let m = self.reduced_assemble(mu)?;
        let pairs = dense_eig(&m)?;
        let clustering = cluster(&pairs.values, self.cluster_tol);
        let scalar_identity = clustering.n_clusters() == 1;
        Ok(ReducedEig {
            values: pairs.values,
            vectors: pairs.vectors,
            clustering,
            scalar_identity,
        })
    }

    /// `sum_{q,q'} theta_q theta_{q'} G_{q,q'}`, the reduced representation
    /// of `V^* A(mu)^2 V`.
    pub fn second_order_weighted(&self, theta: &[T]) -> CMatrix<T> {
        let r = self.r();
        let q = self.q();
        let mut m = CMatrix::<T>::zeros(r, r);
        for qi in 0..q {
            for qj in 0..q {
                let w = theta[qi] * theta[qj];
                if w != T::zero() {
                    m += &self.second_order[qi * q + qj] * Cx::new(w, T::zero());
                }
            }
        }
        (&m + m.adjoint()) * Cx::new(c::<T>(0.5), T::zero())
    }

    /// Spectral norm of the block residual `A(mu) W - lambda W` for
    /// `W = V w_red`, evaluated n-independently in the auxiliary-basis
    /// coordinates (numerically stable down to machine precision).
    pub fn residual_norm(
        &self,
        mu: &[T],
        reduced_block: &CMatrix<T>,
        lambda: T,
    ) -> Result<T, SubspaceError> {
        let defect = orthonormality_defect(reduced_block);
        if defect > c(1e-8) {
            return Err(SubspaceError::NonOrthonormal(defect.to_f64().unwrap_or(f64::NAN)));
        }
        let theta = self.theta(mu);
        let mut m = &self.resid.v_coeffs * reduced_block * Cx::new(-lambda, T::zero());
        for (t, b) in theta.iter().zip(&self.resid.term_coeffs) {
            if *t != T::zero() {
                m += b * reduced_block * Cx::new(*t, T::zero());
            }
        }
        let svd = m.svd(false, false);
        Ok(svd
            .singular_values
            .iter()
            .cloned()
            .fold(T::zero(), |a, b| a.max(b)))
    }

    /// Deflation residual `|| (I - P_U) A(mu) U ||` for `U = V y_s` with an
    /// orthonormal reduced block `y_s`, in auxiliary-basis coordinates.
    pub fn deflated_residual_norm(&self, theta: &[T], y_s: &CMatrix<T>) -> Result<T, SubspaceError> {
        let mut a_tilde = CMatrix::<T>::zeros(self.resid.v_coeffs.nrows(), y_s.ncols());
        for (t, b) in theta.iter().zip(&self.resid.term_coeffs) {
            if *t != T::zero() {
                a_tilde += b * y_s * Cx::new(*t, T::zero());
            }
        }
        let u_tilde = &self.resid.v_coeffs * y_s;
        let resid = &a_tilde - &u_tilde * (u_tilde.adjoint() * &a_tilde);
        let svd = resid.svd(false, false);
        Ok(svd
            .singular_values
            .iter()
            .cloned()
            .fold(T::zero(), |a, b| a.max(b)))
    }

    /// The squared-Gramian route for the block residual norm
    /// (`sqrt(max(0, lambda_max(w^* M2 w - lambda^2 I)))`), kept as the
    /// paranoid cross-check of the stable evaluation; its floor is of order
    /// `sqrt(eps) ||A||` by construction.
    pub fn residual_norm_gramian(
        &self,
        mu: &[T],
        reduced_block: &CMatrix<T>,
        lambda: T,
    ) -> Result<T, SubspaceError> {
        let theta = self.theta(mu);
        let m2 = self.second_order_weighted(&theta);
        let h = reduced_block.adjoint() * m2 * reduced_block;
        let m = h.ncols();
        let shifted = h - CMatrix::<T>::identity(m, m) * Cx::new(lambda * lambda, T::zero());
        let pairs = dense_eig(&shifted)?;
        let top = *pairs.values.last().unwrap();
        Ok(top.max(T::zero()).sqrt())
    }

    /// `V * reduced` (n x m); requires the stored basis.
    pub fn lift(&self, reduced: &CMatrix<T>) -> Result<CMatrix<T>, SubspaceError> {
        let basis = self.basis.as_ref().ok_or(SubspaceError::MissingBasis)?;
        Ok(basis * reduced)
    }

    /// Recomputes every Gramian from scratch and returns the largest
    /// deviation from the incrementally maintained state (paranoid mode).
    pub fn verify_gramians(&self, family: &AffineFamily<T>) -> Result<T, SubspaceError> {
        let basis = self.basis.as_ref().ok_or(SubspaceError::MissingBasis)?;
        let q = family.q();
        let n = self.n;
        let r = self.r();
        let mut worst = T::zero();
        let mut aq_v = Vec::with_capacity(q);
        for a in family.matrices() {
            let mut prod = CMatrix::<T>::zeros(n, r);
            for k in 0..r {
                let x: CVector<T> = basis.column(k).into_owned();
                let mut y = CVector::<T>::zeros(n);
                a.apply_add(Cx::new(T::one(), T::zero()), &x, &mut y);
                prod.set_column(k, &y);
            }
            aq_v.push(prod);
        }
        for qi in 0..q {
            worst = worst.max((basis.adjoint() * &aq_v[qi] - &self.reduced_terms[qi]).norm());
            for qj in 0..q {
                let g = aq_v[qi].adjoint() * &aq_v[qj];
                worst = worst.max((g - &self.second_order[qi * q + qj]).norm());
            }
        }
        for s in &self.snapshots {
            if let Some(w) = &s.vectors {
                worst = worst.max((w.adjoint() * basis - &s.cross).norm());
            }
        }
        if let Some(cache) = &self.offline {
            let z = &cache.z_basis;
            worst = worst.max((z.adjoint() * basis - &self.resid.v_coeffs).norm());
            for (qi, av) in aq_v.iter().enumerate() {
                worst = worst.max((z.adjoint() * av - &self.resid.term_coeffs[qi]).norm());
            }
        }
        Ok(worst)
    }
}

/// Spectral-norm distance between the orthogonal projectors of two
/// orthonormal blocks: 1 when the dimensions differ, otherwise
/// `|| (I - W W*) W' ||`.
pub fn projector_distance<T: Scalar>(
    w: &CMatrix<T>,
    w_prime: &CMatrix<T>,
) -> Result<T, SubspaceError> {
    for block in [w, w_prime] {
        let defect = orthonormality_defect(block);
        if defect > c(1e-8) {
            return Err(SubspaceError::NonOrthonormal(defect.to_f64().unwrap_or(f64::NAN)));
        }
    }
    if w.ncols() != w_prime.ncols() {
        return Ok(T::one());
    }
    let resid = w_prime - w * (w.adjoint() * w_prime);
    let svd = resid.svd(false, false);
    Ok(svd
        .singular_values
        .iter()
        .cloned()
        .fold(T::zero(), |a, b| a.max(b)))
}

// ---------------------------------------------------------------------------
// ROM container (text format)
// ---------------------------------------------------------------------------

fn write_cmatrix<T: Scalar>(out: &mut String, tag: &str, m: &CMatrix<T>) {
    writeln!(out, "{tag} {} {}", m.nrows(), m.ncols()).unwrap();
    for i in 0..m.nrows() {
        let mut row = String::new();
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if j > 0 {
                row.push(' ');
            }
            write!(row, "{} {}", v.re, v.im).unwrap();
        }
        out.push_str(&row);
        out.push('\n');
    }
}

/// Serializes a state into the ROM text container. The basis block is
/// included only when the state still carries it.
pub fn rom_to_string<T: Scalar>(state: &RomState<T>) -> String {
    let mut out = String::new();
    writeln!(out, "rom 1").unwrap();
    writeln!(
        out,
        "size n {} p {} Q {} r {} coverage {}",
        state.n(),
        state.p(),
        state.q(),
        state.r(),
        state.cluster_coverage()
    )
    .unwrap();
    match state.build_tolerance {
        Some(t) => writeln!(out, "tolerance {t}").unwrap(),
        None => writeln!(out, "tolerance -").unwrap(),
    }
    writeln!(out, "cluster {} {}", state.cluster_tol.abs, state.cluster_tol.rel).unwrap();
    for k in 0..state.p() {
        let (lo, hi) = state.domain.axis(k);
        writeln!(out, "axis {k} {lo} {hi}").unwrap();
    }
    for t in state.terms() {
        writeln!(out, "{}", crate::affine::term_to_line(t)).unwrap();
    }
    for (lo, hi) in state.term_extrema() {
        writeln!(out, "extrema {lo} {hi}").unwrap();
    }
    for (qi, m) in state.reduced_terms.iter().enumerate() {
        write_cmatrix(&mut out, &format!("reduced {qi}"), m);
    }
    for qi in 0..state.q() {
        for qj in 0..state.q() {
            write_cmatrix(
                &mut out,
                &format!("second {qi} {qj}"),
                state.second_order(qi, qj),
            );
        }
    }
    write_cmatrix(&mut out, "residv", &state.resid.v_coeffs);
    for (qi, m) in state.resid.term_coeffs.iter().enumerate() {
        write_cmatrix(&mut out, &format!("residt {qi}"), m);
    }
    for s in state.snapshots() {
        let mu: Vec<String> = s.mu.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "snapshot {} {}", s.ell(), mu.join(" ")).unwrap();
        let vals: Vec<String> = s.values.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "values {}", vals.join(" ")).unwrap();
        writeln!(out, "next {}", s.next_value).unwrap();
        write_cmatrix(&mut out, "cross", &s.cross);
    }
    if let Some(basis) = state.basis() {
        write_cmatrix(&mut out, "basis", basis);
    }
    writeln!(out, "end").unwrap();
    out
}

pub fn save_rom<T: Scalar>(state: &RomState<T>, path: &Path) -> Result<(), SubspaceError> {
    std::fs::write(path, rom_to_string(state))?;
    Ok(())
}

struct RomReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> RomReader<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>), SubspaceError> {
        for (idx, line) in self.lines.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok((idx + 1, t.split_whitespace().collect()));
            }
        }
        Err(SubspaceError::Parse {
            line: 0,
            msg: "unexpected end of ROM file".into(),
        })
    }
}

fn rp_err(line: usize, msg: impl Into<String>) -> SubspaceError {
    SubspaceError::Parse {
        line,
        msg: msg.into(),
    }
}

fn rp<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, SubspaceError> {
    tok.parse()
        .map_err(|_| rp_err(line, format!("cannot parse {what} from {tok:?}")))
}

fn rp_scalar<T: Scalar>(line: usize, tok: &str, what: &str) -> Result<T, SubspaceError> {
    let x: f64 = rp(line, tok, what)?;
    Ok(c(x))
}

fn read_cmatrix<T: Scalar>(
    rd: &mut RomReader,
    expect_tag: &str,
) -> Result<CMatrix<T>, SubspaceError> {
    let (ln, toks) = rd.next()?;
    if toks.is_empty() || toks[0] != expect_tag {
        return Err(rp_err(ln, format!("expected `{expect_tag}` block")));
    }
    let ncols_idx = toks.len() - 1;
    let rows: usize = rp(ln, toks[ncols_idx - 1], "rows")?;
    let cols: usize = rp(ln, toks[ncols_idx], "cols")?;
    let mut m = CMatrix::<T>::zeros(rows, cols);
    for i in 0..rows {
        let (ln, toks) = rd.next()?;
        if toks.len() != 2 * cols {
            return Err(rp_err(ln, format!("expected {} numbers", 2 * cols)));
        }
        for j in 0..cols {
            let re: T = rp_scalar(ln, toks[2 * j], "entry")?;
            let im: T = rp_scalar(ln, toks[2 * j + 1], "entry")?;
            m[(i, j)] = Cx::new(re, im);
        }
    }
    Ok(m)
}

/// Parses a state from the ROM container. Loaded states are frozen: they
/// evaluate online quantities but cannot be extended.
pub fn rom_from_string<T: Scalar>(text: &str) -> Result<RomState<T>, SubspaceError> {
    let mut rd = RomReader {
        lines: text.lines().enumerate(),
    };
    let (ln, toks) = rd.next()?;
    if toks != ["rom", "1"] {
        return Err(rp_err(ln, "not a ROM file (missing `rom 1` header)"));
    }
    let (ln, toks) = rd.next()?;
    if toks.len() != 11 || toks[0] != "size" {
        return Err(rp_err(ln, "expected `size n .. p .. Q .. r .. coverage ..`"));
    }
    let n: usize = rp(ln, toks[2], "n")?;
    let p: usize = rp(ln, toks[4], "p")?;
    let q: usize = rp(ln, toks[6], "Q")?;
    let r: usize = rp(ln, toks[8], "r")?;
    let coverage: usize = rp(ln, toks[10], "coverage")?;

    let (ln, toks) = rd.next()?;
    if toks.len() != 2 || toks[0] != "tolerance" {
        return Err(rp_err(ln, "expected `tolerance`"));
    }
    let build_tolerance = if toks[1] == "-" {
        None
    } else {
        Some(rp_scalar(ln, toks[1], "tolerance")?)
    };
    let (ln, toks) = rd.next()?;
    if toks.len() != 3 || toks[0] != "cluster" {
        return Err(rp_err(ln, "expected `cluster`"));
    }
    let cluster_tol = ClusterTol {
        abs: rp_scalar(ln, toks[1], "cluster abs")?,
        rel: rp_scalar(ln, toks[2], "cluster rel")?,
    };
    let mut lo = vec![T::zero(); p];
    let mut hi = vec![T::zero(); p];
    for _ in 0..p {
        let (ln, toks) = rd.next()?;
        if toks.len() != 4 || toks[0] != "axis" {
            return Err(rp_err(ln, "expected `axis`"));
        }
        let k: usize = rp(ln, toks[1], "axis")?;
        if k >= p {
            return Err(rp_err(ln, "axis out of range"));
        }
        lo[k] = rp_scalar(ln, toks[2], "lo")?;
        hi[k] = rp_scalar(ln, toks[3], "hi")?;
    }
    let domain = DomainBox::new(lo, hi)?;
    let mut terms = Vec::with_capacity(q);
    for _ in 0..q {
        let (ln, toks) = rd.next()?;
        terms.push(crate::affine::term_from_tokens(ln, &toks)?);
    }
    let mut term_extrema = Vec::with_capacity(q);
    for _ in 0..q {
        let (ln, toks) = rd.next()?;
        if toks.len() != 3 || toks[0] != "extrema" {
            return Err(rp_err(ln, "expected `extrema`"));
        }
        term_extrema.push((
            rp_scalar(ln, toks[1], "lo")?,
            rp_scalar(ln, toks[2], "hi")?,
        ));
    }
    let mut reduced_terms = Vec::with_capacity(q);
    for qi in 0..q {
        let m = read_cmatrix(&mut rd, "reduced")?;
        if m.nrows() != r || m.ncols() != r {
            return Err(rp_err(0, format!("reduced block {qi} has wrong shape")));
        }
        reduced_terms.push(m);
    }
    let mut second_order = Vec::with_capacity(q * q);
    for _ in 0..q * q {
        second_order.push(read_cmatrix(&mut rd, "second")?);
    }
    let v_coeffs = read_cmatrix(&mut rd, "residv")?;
    let mut term_coeffs = Vec::with_capacity(q);
    for _ in 0..q {
        term_coeffs.push(read_cmatrix(&mut rd, "residt")?);
    }
    let resid = ResidualBasis {
        v_coeffs,
        term_coeffs,
    };
    // Remaining blocks: snapshots, optional basis, `end`.
    let mut snapshots = Vec::new();
    let mut basis = None;
    loop {
        let (ln, toks) = rd.next()?;
        match toks.first().copied() {
            Some("snapshot") => {
                if toks.len() != 2 + p {
                    return Err(rp_err(ln, "snapshot header needs `ell mu..`"));
                }
                let ell: usize = rp(ln, toks[1], "ell")?;
                let mut mu = Vec::with_capacity(p);
                for t in &toks[2..] {
                    mu.push(rp_scalar(ln, t, "mu")?);
                }
                let (ln2, vtoks) = rd.next()?;
                if vtoks.len() != 1 + ell || vtoks[0] != "values" {
                    return Err(rp_err(ln2, "expected `values`"));
                }
                let mut values = Vec::with_capacity(ell);
                for t in &vtoks[1..] {
                    values.push(rp_scalar(ln2, t, "value")?);
                }
                let (ln3, ntoks) = rd.next()?;
                if ntoks.len() != 2 || ntoks[0] != "next" {
                    return Err(rp_err(ln3, "expected `next`"));
                }
                let next_value = rp_scalar(ln3, ntoks[1], "next value")?;
                let cross = read_cmatrix(&mut rd, "cross")?;
                if cross.nrows() != ell || cross.ncols() != r {
                    return Err(rp_err(ln, "cross block has wrong shape"));
                }
                snapshots.push(Snapshot {
                    mu,
                    values,
                    next_value,
                    vectors: None,
                    cross,
                });
            }
            Some("basis") => {
                let rows: usize = rp(ln, toks[1], "rows")?;
                let cols: usize = rp(ln, toks[2], "cols")?;
                let mut m = CMatrix::<T>::zeros(rows, cols);
                for i in 0..rows {
                    let (ln2, toks) = rd.next()?;
                    if toks.len() != 2 * cols {
                        return Err(rp_err(ln2, format!("expected {} numbers", 2 * cols)));
                    }
                    for j in 0..cols {
                        m[(i, j)] = Cx::new(
                            rp_scalar(ln2, toks[2 * j], "entry")?,
                            rp_scalar(ln2, toks[2 * j + 1], "entry")?,
                        );
                    }
                }
                if rows != n || cols != r {
                    return Err(rp_err(ln, "basis block has wrong shape"));
                }
                basis = Some(m);
            }
            Some("end") => break,
            _ => return Err(rp_err(ln, "unexpected block in ROM file")),
        }
    }
    Ok(RomState {
        n,
        terms,
        domain,
        reduced_terms,
        second_order,
        term_extrema,
        snapshots,
        resid,
        cluster_coverage: coverage,
        build_tolerance,
        cluster_tol,
        basis,
        offline: None,
    })
}

pub fn load_rom<T: Scalar>(path: &Path) -> Result<RomState<T>, SubspaceError> {
    let text = std::fs::read_to_string(path).map_err(SubspaceError::Io)?;
    rom_from_string(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::{solve_clustered, EigOptions};
    use crate::generators;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    type F = f64;

    fn e(n: usize, k: usize) -> CMatrix<F> {
        let mut m = CMatrix::<F>::zeros(n, 1);
        m[(k, 0)] = Cx::new(1.0, 0.0);
        m
    }

    fn state_with_basis(basis: &CMatrix<F>) -> (AffineFamily<F>, RomState<F>) {
        let fam = generators::example1_family::<F>();
        let st = RomState::from_basis(&fam, basis, 2, ClusterTol::default(), 1).unwrap();
        (fam, st)
    }

    #[test]
    fn orth_extend_from_empty() {
        let fam = generators::example1_family::<F>();
        let mut st = RomState::new(&fam, 2, ClusterTol::default(), 1).unwrap();
        assert_eq!(st.orth_extend(&fam, &e(3, 0)).unwrap(), 1);
        assert_eq!(st.r(), 1);
        assert_eq!(st.basis().unwrap()[(0, 0)], Cx::new(1.0, 0.0));
        // duplicate column is dropped
        assert_eq!(st.orth_extend(&fam, &e(3, 0)).unwrap(), 0);
        assert_eq!(st.r(), 1);
        // (e1+e2)/sqrt(2) reduces to +-e2
        let mut col = CMatrix::<F>::zeros(3, 1);
        col[(0, 0)] = Cx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        col[(1, 0)] = Cx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert_eq!(st.orth_extend(&fam, &col).unwrap(), 1);
        assert_eq!(st.r(), 2);
        let b = st.basis().unwrap();
        assert!(b[(1, 1)].norm_sqr().sqrt() > 1.0 - 1e-12);
    }

    #[test]
    fn reduced_assemble_subbasis() {
        let mut basis = CMatrix::<F>::zeros(3, 2);
        basis[(1, 0)] = Cx::new(1.0, 0.0);
        basis[(2, 1)] = Cx::new(1.0, 0.0);
        let (_, st) = state_with_basis(&basis);
        let m = st.reduced_assemble(&[2.0]).unwrap();
        assert!((m[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((m[(1, 1)].re + 2.0).abs() < 1e-14);
        assert!(m[(0, 1)].norm_sqr() < 1e-28);
    }

    #[test]
    fn reduced_assemble_full_basis_matches_fom() {
        let fam = generators::xxz_family::<F>(2).unwrap();
        let basis = CMatrix::<F>::identity(4, 4);
        let st = RomState::from_basis(&fam, &basis, 2, ClusterTol::default(), 1).unwrap();
        let mu = [0.7, 1.3];
        let diff = (st.reduced_assemble(&mu).unwrap() - fam.assemble(&mu).unwrap()).norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn reduced_assemble_rejects_empty() {
        let fam = generators::example1_family::<F>();
        let st = RomState::new(&fam, 2, ClusterTol::default(), 1).unwrap();
        assert!(matches!(
            st.reduced_assemble(&[1.0]),
            Err(SubspaceError::EmptyBasis)
        ));
    }

    #[test]
    fn reduced_eig_subbasis_and_degenerate_flag() {
        let mut basis = CMatrix::<F>::zeros(3, 2);
        basis[(1, 0)] = Cx::new(1.0, 0.0);
        basis[(2, 1)] = Cx::new(1.0, 0.0);
        let (_, st) = state_with_basis(&basis);
        let red = st.reduced_eig(&[2.0]).unwrap();
        assert!((red.lambda1() + 2.0).abs() < 1e-14);
        assert_eq!(red.m1(), 1);
        assert!(!red.scalar_identity);
        let (lam1, m1, block, clustering) = st.reduced_smallest(&[2.0]).unwrap();
        assert_eq!(lam1, red.lambda1());
        assert_eq!(m1, 1);
        assert_eq!(block.ncols(), 1);
        assert_eq!(clustering.n_clusters(), 2);

        // full basis at mu = 1: ground multiplicity 2
        let full = CMatrix::<F>::identity(3, 3);
        let (_, st) = state_with_basis(&full);
        let red = st.reduced_eig(&[1.0]).unwrap();
        assert!((red.lambda1() + 1.0).abs() < 1e-14);
        assert_eq!(red.m1(), 2);

        // V spanning the mu=1 ground space only: reduced matrix is -I
        let mut pair = CMatrix::<F>::zeros(3, 2);
        pair[(1, 0)] = Cx::new(1.0, 0.0);
        pair[(2, 1)] = Cx::new(1.0, 0.0);
        let (_, st) = state_with_basis(&pair);
        let red = st.reduced_eig(&[1.0]).unwrap();
        assert!(red.scalar_identity);
    }

    #[test]
    fn residual_norm_exact_vector_vanishes() {
        let (_, st) = state_with_basis(&e(3, 0));
        // at mu=1, e_1 is an exact eigenvector with eigenvalue 1
        let red = st.reduced_eig(&[1.0]).unwrap();
        let rn = st
            .residual_norm(&[1.0], &red.ground_block(), red.lambda1())
            .unwrap();
        assert!(rn <= 1e-8);
    }

    #[test]
    fn residual_norm_matches_hand_oracle() {
        let mut basis = CMatrix::<F>::zeros(3, 1);
        basis[(0, 0)] = Cx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        basis[(1, 0)] = Cx::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let (_, st) = state_with_basis(&basis);
        let red = st.reduced_eig(&[0.0]).unwrap();
        assert!((red.lambda1() + 1.0).abs() < 1e-14);
        let rn = st
            .residual_norm(&[0.0], &red.ground_block(), red.lambda1())
            .unwrap();
        assert!((rn - 1.0).abs() < 1e-12, "residual {rn}");
    }

    #[test]
    fn residual_norm_matches_full_computation_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let fam = generators::xxz_family::<F>(4).unwrap();
        let n = fam.n();
        for _ in 0..5 {
            let raw = CMatrix::<F>::from_fn(n, 3, |_, _| {
                Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let basis = raw.qr().q();
            let st = RomState::from_basis(&fam, &basis, 2, ClusterTol::default(), 1).unwrap();
            let mu = [rng.gen_range(-1.0..2.5), rng.gen_range(0.0..3.5)];
            let red = st.reduced_eig(&mu).unwrap();
            let rn = st
                .residual_norm(&mu, &red.ground_block(), red.lambda1())
                .unwrap();
            let lifted = st.lift(&red.ground_block()).unwrap();
            let a = fam.assemble(&mu).unwrap();
            let resid = &a * &lifted - &lifted * Cx::new(red.lambda1(), 0.0);
            let direct = resid.svd(false, false).singular_values[0];
            let scale = (1.0 + direct.abs()).max(1.0);
            assert!(
                (rn - direct).abs() <= 1e-8 * scale,
                "gramian {rn} vs direct {direct}"
            );
        }
    }

    #[test]
    fn residual_routes_agree_within_gramian_floor() {
        // The stable route and the squared-Gramian route agree up to the
        // sqrt(eps)-level noise floor of the latter.
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let fam = generators::xxz_family::<F>(4).unwrap();
        let n = fam.n();
        for _ in 0..5 {
            let raw = CMatrix::<F>::from_fn(n, 4, |_, _| {
                Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let basis = raw.qr().q();
            let st = RomState::from_basis(&fam, &basis, 2, ClusterTol::default(), 1).unwrap();
            let mu = [rng.gen_range(-1.0..2.5), rng.gen_range(0.0..3.5)];
            let red = st.reduced_eig(&mu).unwrap();
            let stable = st
                .residual_norm(&mu, &red.ground_block(), red.lambda1())
                .unwrap();
            let gramian = st
                .residual_norm_gramian(&mu, &red.ground_block(), red.lambda1())
                .unwrap();
            let scale = fam.norm_bound(&mu).unwrap();
            assert!(
                (stable - gramian).abs() <= 1e-7 * scale,
                "stable {stable} vs gramian {gramian}"
            );
        }
    }

    #[test]
    fn minmax_sandwich_random_bases() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let fam = generators::xxz_family::<F>(4).unwrap();
        let n = fam.n();
        for _ in 0..5 {
            let r = rng.gen_range(1..6);
            let raw = CMatrix::<F>::from_fn(n, r, |_, _| {
                Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let basis = raw.qr().q();
            let st = RomState::from_basis(&fam, &basis, 2, ClusterTol::default(), 1).unwrap();
            let mu = [rng.gen_range(-1.0..2.5), rng.gen_range(0.0..3.5)];
            let red = st.reduced_eig(&mu).unwrap();
            let full = dense_eig(&fam.assemble(&mu).unwrap()).unwrap();
            for k in 0..r {
                let scale = 1.0 + full.values[k].abs();
                assert!(
                    full.values[k] <= red.values[k] + 1e-10 * scale,
                    "min-max violated at k={k}"
                );
            }
        }
    }

    #[test]
    fn gramians_match_recompute_after_extensions() {
        let fam = generators::xxz_family::<F>(3).unwrap();
        let mut st = RomState::new(&fam, 2, ClusterTol::default(), 1).unwrap();
        let opts = EigOptions::default();
        for mu in [[0.5, 0.1], [2.0, 3.0], [-0.5, 1.0]] {
            let solve = solve_clustered(&fam, &mu, 2, &opts).unwrap();
            st.insert_snapshot(&fam, &mu, &solve).unwrap();
        }
        assert!(st.r() >= 3);
        let defect = orthonormality_defect(st.basis().unwrap());
        assert!(defect < 1e-10, "basis defect {defect}");
        let worst = st.verify_gramians(&fam).unwrap();
        assert!(worst < 1e-10, "gramian deviation {worst}");
    }

    #[test]
    fn projector_distance_cases() {
        let w1 = e(3, 0);
        assert_eq!(projector_distance(&w1, &e(3, 0)).unwrap(), 0.0);
        let d = projector_distance(&w1, &e(3, 1)).unwrap();
        assert!((d - 1.0).abs() < 1e-14);
        let mut w2 = CMatrix::<F>::zeros(3, 2);
        w2[(0, 0)] = Cx::new(1.0, 0.0);
        w2[(1, 1)] = Cx::new(1.0, 0.0);
        assert_eq!(projector_distance(&w1, &w2).unwrap(), 1.0);
        assert_eq!(projector_distance(&w2, &w1).unwrap(), 1.0);
    }

    #[test]
    fn projector_distance_symmetry_and_unitary_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..10 {
            let raw1 = CMatrix::<F>::from_fn(6, 2, |_, _| {
                Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let raw2 = CMatrix::<F>::from_fn(6, 2, |_, _| {
                Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let w1 = raw1.qr().q();
            let w2 = raw2.qr().q();
            let d12 = projector_distance(&w1, &w2).unwrap();
            let d21 = projector_distance(&w2, &w1).unwrap();
            assert!((d12 - d21).abs() < 1e-10);
            // right-multiplication by a unitary leaves the distance unchanged
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let u = CMatrix::<F>::from_row_slice(
                2,
                2,
                &[
                    Cx::new(phi.cos(), 0.0),
                    Cx::new(phi.sin(), 0.0),
                    Cx::new(-phi.sin(), 0.0),
                    Cx::new(phi.cos(), 0.0),
                ],
            );
            let d_rot = projector_distance(&w1, &(&w2 * u)).unwrap();
            assert!((d12 - d_rot).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_distance_rejects_nonorthonormal() {
        let mut w = CMatrix::<F>::zeros(3, 1);
        w[(0, 0)] = Cx::new(2.0, 0.0);
        assert!(matches!(
            projector_distance(&w, &e(3, 0)),
            Err(SubspaceError::NonOrthonormal(_))
        ));
    }

    #[test]
    fn lift_maps_unit_vectors() {
        let mut basis = CMatrix::<F>::zeros(3, 2);
        basis[(1, 0)] = Cx::new(1.0, 0.0);
        basis[(2, 1)] = Cx::new(1.0, 0.0);
        let (_, st) = state_with_basis(&basis);
        let lifted = st.lift(&CMatrix::<F>::identity(2, 2)).unwrap();
        assert_eq!(lifted, basis);
        let mut red = CMatrix::<F>::zeros(2, 1);
        red[(0, 0)] = Cx::new(1.0, 0.0);
        let v = st.lift(&red).unwrap();
        assert_eq!(v[(1, 0)], Cx::new(1.0, 0.0));
    }

    #[test]
    fn lifted_rayleigh_quotient_matches_reduced_eigenvalue() {
        let fam = generators::xxz_family::<F>(3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let raw = CMatrix::<F>::from_fn(8, 3, |_, _| {
            Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let basis = raw.qr().q();
        let st = RomState::from_basis(&fam, &basis, 2, ClusterTol::default(), 1).unwrap();
        let mu = [1.2, 0.4];
        let red = st.reduced_eig(&mu).unwrap();
        let lifted = st.lift(&red.ground_block()).unwrap();
        let a = fam.assemble(&mu).unwrap();
        let rq = (lifted.adjoint() * &a * &lifted)[(0, 0)].re;
        assert!((rq - red.lambda1()).abs() < 1e-10 * (1.0 + rq.abs()));
    }

    #[test]
    fn rom_round_trip() {
        let fam = generators::xxz_family::<F>(3).unwrap();
        let mut st = RomState::new(&fam, 2, ClusterTol::default(), 1).unwrap();
        let opts = EigOptions::default();
        for mu in [[0.5, 0.1], [2.0, 3.0]] {
            let solve = solve_clustered(&fam, &mu, 2, &opts).unwrap();
            st.insert_snapshot(&fam, &mu, &solve).unwrap();
        }
        st.build_tolerance = Some(1e-6);
        let text = rom_to_string(&st);
        let loaded = rom_from_string::<F>(&text).unwrap();
        assert_eq!(loaded.r(), st.r());
        assert_eq!(loaded.snapshots().len(), st.snapshots().len());
        assert_eq!(loaded.build_tolerance, st.build_tolerance);
        // online evaluation agrees
        let mu = [1.0, 1.0];
        let a = st.reduced_assemble(&mu).unwrap();
        let b = loaded.reduced_assemble(&mu).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            st.second_order_weighted(&st.theta(&mu)),
            loaded.second_order_weighted(&loaded.theta(&mu))
        );
        // loaded states are frozen
        let mut loaded = loaded;
        assert!(matches!(
            loaded.orth_extend(&fam, &CMatrix::<F>::identity(8, 1)),
            Err(SubspaceError::Frozen)
        ));
    }

    #[test]
    fn rom_rejects_rational_families() {
        let fam = generators::lagrange_rank_one_family::<F>(&[-0.5, 0.5]).unwrap();
        assert!(matches!(
            RomState::new(&fam, 1, ClusterTol::default(), 1),
            Err(SubspaceError::RationalFamily)
        ));
    }
}
