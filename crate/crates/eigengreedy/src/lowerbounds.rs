//! Certified lower bounds for eigenvalues of the parametric family: the
//! deflation residual `rho`, the per-snapshot shifts `beta`, the linear
//! program over the constraint polytope yielding `eta_*`, and the resulting
//! subspace lower bounds for the k-th eigenvalue. Also carries the classical
//! residual-based diagnostic bounds.

use std::cell::RefCell;

use thiserror::Error;

use crate::eigensolve::{dense_eig, EigenClustering, EigenError};
use crate::scalar::{c, CMatrix, Cx, Scalar};
use crate::subspace::{ReducedEig, RomState, SubspaceError};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("s = {s} splits a reduced eigenvalue cluster")]
    ClusterSplit { s: usize },
    #[error("matrix dimension n = {n} violates n >= 2s for s = {s}")]
    DimensionTooSmall { n: usize, s: usize },
    #[error("k = {k} exceeds s = {s}")]
    KOutOfRange { k: usize, s: usize },
    #[error("linear program infeasible after relaxation")]
    Infeasible,
    #[error("simplex iteration stalled (cap {0})")]
    Stalled(usize),
    #[error("spectral gap must be positive")]
    GapNonPositive,
    #[error("reduced matrix is a multiple of the identity at this parameter")]
    DegenerateReduced,
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// A cluster-aligned truncation index: `s` reduced eigenvalues covering the
/// first `t` reduced clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SRange {
    pub s: usize,
    pub t: usize,
}

impl SRange {
    /// `s` covering the first `t` clusters of the reduced spectrum.
    pub fn from_clusters<T: Scalar>(
        clustering: &EigenClustering<T>,
        t: usize,
    ) -> Result<Self, BoundError> {
        if t == 0 || t > clustering.n_clusters() {
            return Err(BoundError::KOutOfRange {
                k: t,
                s: clustering.n_clusters(),
            });
        }
        Ok(Self {
            s: clustering.boundary(t),
            t,
        })
    }

    /// Validates an explicit `s` against the reduced clustering; values that
    /// cut a cluster are rejected rather than rounded.
    pub fn validate<T: Scalar>(
        clustering: &EigenClustering<T>,
        s: usize,
    ) -> Result<Self, BoundError> {
        for t in 1..=clustering.n_clusters() {
            if clustering.boundary(t) == s {
                return Ok(Self { s, t });
            }
        }
        Err(BoundError::ClusterSplit { s })
    }
}

/// Outcome of the constraint LP: a finite lower bound for the deflated
/// minimum, or no constraint at all when the deflation space is everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaStar<T: Scalar> {
    /// `U(mu, s)` spans the whole space; the deflated minimum is vacuous.
    Unconstrained,
    Value {
        value: T,
        /// The LP was only feasible after the documented rhs relaxation.
        relaxed: bool,
    },
}

impl<T: Scalar> EtaStar<T> {
    pub fn value_or(&self, fallback: T) -> T {
        match self {
            EtaStar::Unconstrained => fallback,
            EtaStar::Value { value, .. } => *value,
        }
    }
}

/// The modified residual fraction `2 rho^2 / (g + sqrt(g^2 + 4 rho^2))` with
/// the zero-over-zero guard: both `rho` and `g` below `1e-12 * scale` yield 0.
pub fn residual_fraction<T: Scalar>(rho: T, g: T, scale: T) -> T {
    let tiny = c::<T>(1e-12) * scale.max(T::one());
    if rho <= tiny && g <= tiny {
        return T::zero();
    }
    let denom = g + (g * g + rho * rho * c(4.0)).sqrt();
    if denom == T::zero() {
        return T::zero();
    }
    rho * rho * c::<T>(2.0) / denom
}

/// `g_k(eta) = min_{j <= k} |eta - values[j]|`.
pub fn g_k<T: Scalar>(values: &[T], k: usize, eta: T) -> T {
    values[..k]
        .iter()
        .map(|v| (eta - *v).abs())
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// The monotone auxiliary function `h_k(eta) = eta - fraction(rho, g_k(eta))`.
pub fn h_k<T: Scalar>(rho: T, values: &[T], eta: T) -> T {
    let g = g_k(values, values.len(), eta);
    let scale = T::one() + eta.abs();
    eta - residual_fraction(rho, g, scale)
}

/// The one-snapshot lower-bound map
/// `f(eta) = min(lambda1_v, eta) - fraction(rho, |lambda1_v - eta|)`.
pub fn f_lower<T: Scalar>(lambda1_v: T, eta: T, rho: T) -> T {
    let gap = (lambda1_v - eta).abs();
    let scale = T::one() + lambda1_v.abs() + eta.abs();
    lambda1_v.min(eta) - residual_fraction(rho, gap, scale)
}

/// The Bauer-Fike diagnostic: the residual norm itself bounds the distance
/// from the reduced value to the nearest point of the full spectrum.
pub fn bauer_fike<T: Scalar>(residual_norm: T) -> T {
    residual_norm
}

/// Eigenvalue-error-to-eigenvector-error diagnostic
/// `sqrt((lambda1_v - lambda1) / gap)`; oracle-fed, test-side only.
pub fn eigvec_from_eigval_bound<T: Scalar>(
    lambda1_v: T,
    lambda1: T,
    gap: T,
) -> Result<T, BoundError> {
    if gap <= T::zero() {
        return Err(BoundError::GapNonPositive);
    }
    Ok((lambda1_v - lambda1).max(T::zero()).sqrt() / gap.sqrt())
}

// ---------------------------------------------------------------------------
// Linear program
// ---------------------------------------------------------------------------

/// Box-plus-halfspace LP instance `min c^T y` over
/// `{ lo <= y <= hi, a_i^T y >= b_i }`.
#[derive(Debug, Clone)]
pub struct LpInstance<T: Scalar> {
    pub objective: Vec<T>,
    pub box_lo: Vec<T>,
    pub box_hi: Vec<T>,
    /// Rows `(a_i, b_i)` meaning `a_i^T y >= b_i`.
    pub halfspaces: Vec<(Vec<T>, T)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T: Scalar> {
    pub y: Vec<T>,
    pub value: T,
    pub relaxed: bool,
}

/// Dense two-phase primal simplex with Bland's rule. Infeasible instances
/// are retried once with every halfspace rhs relaxed by `1e-10 (1 + |rhs|)`
/// and the solution flagged.
pub fn solve_lp<T: Scalar>(inst: &LpInstance<T>) -> Result<LpSolution<T>, BoundError> {
    let q = inst.objective.len();
    assert_eq!(inst.box_lo.len(), q);
    assert_eq!(inst.box_hi.len(), q);
    for (lo, hi) in inst.box_lo.iter().zip(&inst.box_hi) {
        if lo > hi {
            return Err(BoundError::Infeasible);
        }
    }
    match simplex(inst, T::zero())? {
        Some((y, value)) => Ok(LpSolution {
            y,
            value,
            relaxed: false,
        }),
        None => {
            let slack = c::<T>(1e-10);
            match simplex(inst, slack)? {
                Some((y, value)) => Ok(LpSolution {
                    y,
                    value,
                    relaxed: true,
                }),
                None => Err(BoundError::Infeasible),
            }
        }
    }
}

/// Runs the two-phase simplex; `relax` loosens every halfspace rhs by
/// `relax * (1 + |rhs|)`. Returns `None` when infeasible.
fn simplex<T: Scalar>(inst: &LpInstance<T>, relax: T) -> Result<Option<(Vec<T>, T)>, BoundError> {
    let q = inst.objective.len();
    let j = inst.halfspaces.len();
    let m = q + j;

    // Shift to x = y - lo >= 0 with upper bounds ub = hi - lo.
    let ub: Vec<T> = inst
        .box_hi
        .iter()
        .zip(&inst.box_lo)
        .map(|(h, l)| *h - *l)
        .collect();
    let bp: Vec<T> = inst
        .halfspaces
        .iter()
        .map(|(a, b)| {
            let shift: T = a
                .iter()
                .zip(&inst.box_lo)
                .map(|(ai, lo)| *ai * *lo)
                .fold(T::zero(), |acc, v| acc + v);
            let b_relaxed = *b - relax * (T::one() + b.abs());
            b_relaxed - shift
        })
        .collect();

    // Columns: x (q) | slack s (q) | surplus t (j) | artificials (counted below).
    let mut art_rows: Vec<usize> = Vec::new();
    for (i, b) in bp.iter().enumerate() {
        if *b >= T::zero() {
            art_rows.push(q + i);
        }
    }
    let n_art = art_rows.len();
    let ncols = 2 * q + j + n_art;
    let mut tab = vec![vec![T::zero(); ncols + 1]; m];
    let mut basis = vec![0usize; m];

    // Box rows: x_q + s_q = ub_q, slack basic.
    for qq in 0..q {
        tab[qq][qq] = T::one();
        tab[qq][q + qq] = T::one();
        tab[qq][ncols] = ub[qq];
        basis[qq] = q + qq;
    }
    // Halfspace rows.
    let mut art_seen = 0usize;
    for i in 0..j {
        let row = q + i;
        let flip = bp[i] < T::zero();
        let sgn = if flip { -T::one() } else { T::one() };
        for (qq, aq) in inst.halfspaces[i].0.iter().enumerate() {
            tab[row][qq] = sgn * *aq;
        }
        tab[row][2 * q + i] = -sgn; // surplus
        tab[row][ncols] = sgn * bp[i];
        if flip {
            basis[row] = 2 * q + i;
        } else {
            let art_col = 2 * q + j + art_seen;
            tab[row][art_col] = T::one();
            basis[row] = art_col;
            art_seen += 1;
        }
    }

    let scale = tableau_scale(&tab);
    let tol = scale * c::<T>(1e-11);

    // Phase 1: minimize the sum of artificials.
    if n_art > 0 {
        let mut cost = vec![T::zero(); ncols + 1];
        for row in 0..m {
            if basis[row] >= 2 * q + j {
                for col in 0..=ncols {
                    cost[col] -= tab[row][col];
                }
            }
        }
        for a in 0..n_art {
            cost[2 * q + j + a] += T::one();
        }
        pivot_loop(&mut tab, &mut cost, &mut basis, ncols, tol, usize::MAX)?;
        let infeas = -cost[ncols];
        if infeas > tol.max(c::<T>(1e-9) * (T::one() + scale)) {
            return Ok(None);
        }
        // Pivot any zero-level artificial out of the basis when possible.
        for row in 0..m {
            if basis[row] >= 2 * q + j {
                if let Some(col) = (0..2 * q + j).find(|&col| tab[row][col].abs() > tol) {
                    pivot(&mut tab, &mut cost, &mut basis, row, col, ncols);
                }
            }
        }
    }

    // Phase 2: minimize the shifted objective over x..t, artificials banned.
    let mut cost = vec![T::zero(); ncols + 1];
    for (qq, cq) in inst.objective.iter().enumerate() {
        cost[qq] = *cq;
    }
    for row in 0..m {
        let b = basis[row];
        let cb = if b < q { inst.objective[b] } else { T::zero() };
        if cb != T::zero() {
            for col in 0..=ncols {
                cost[col] -= cb * tab[row][col];
            }
        }
    }
    pivot_loop(&mut tab, &mut cost, &mut basis, ncols, tol, 2 * q + j)?;

    let mut x = vec![T::zero(); q];
    for row in 0..m {
        if basis[row] < q {
            x[basis[row]] = tab[row][ncols];
        }
    }
    let y: Vec<T> = x
        .iter()
        .zip(&inst.box_lo)
        .map(|(xi, lo)| *xi + *lo)
        .collect();
    let value = y
        .iter()
        .zip(&inst.objective)
        .map(|(yi, ci)| *yi * *ci)
        .fold(T::zero(), |a, b| a + b);
    Ok(Some((y, value)))
}

fn tableau_scale<T: Scalar>(tab: &[Vec<T>]) -> T {
    let mut s = T::one();
    for row in tab {
        for v in row {
            s = s.max(v.abs());
        }
    }
    s
}

/// Bland's rule pivoting until optimality; columns `>= col_limit` are never
/// entered (used to ban artificials in phase 2).
fn pivot_loop<T: Scalar>(
    tab: &mut [Vec<T>],
    cost: &mut [T],
    basis: &mut [usize],
    ncols: usize,
    tol: T,
    col_limit: usize,
) -> Result<(), BoundError> {
    let m = tab.len();
    let limit = col_limit.min(ncols);
    let cap = 400 * (m + ncols + 4);
    for _ in 0..cap {
        // Entering: smallest index with negative reduced cost.
        let Some(enter) = (0..limit).find(|&jc| cost[jc] < -tol) else {
            return Ok(());
        };
        // Leaving: minimum ratio, ties by smallest basic variable index.
        let mut leave: Option<usize> = None;
        let mut best: T = T::zero();
        for (row, tr) in tab.iter().enumerate() {
            if tr[enter] > tol {
                let ratio = tr[ncols] / tr[enter];
                match leave {
                    None => {
                        leave = Some(row);
                        best = ratio;
                    }
                    Some(cur) => {
                        if ratio < best - tol || (ratio < best + tol && basis[row] < basis[cur]) {
                            leave = Some(row);
                            best = ratio;
                        }
                    }
                }
            }
        }
        let Some(leave) = leave else {
            // Unbounded direction; cannot happen over a compact box.
            return Err(BoundError::Stalled(cap));
        };
        pivot(tab, cost, basis, leave, enter, ncols);
    }
    Err(BoundError::Stalled(cap))
}

fn pivot<T: Scalar>(
    tab: &mut [Vec<T>],
    cost: &mut [T],
    basis: &mut [usize],
    row: usize,
    col: usize,
    ncols: usize,
) {
    let piv = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= piv;
    }
    for r in 0..tab.len() {
        if r != row {
            let factor = tab[r][col];
            if factor != T::zero() {
                for cc in 0..=ncols {
                    let upd = tab[row][cc] * factor;
                    tab[r][cc] -= upd;
                }
            }
        }
    }
    let factor = cost[col];
    if factor != T::zero() {
        for cc in 0..=ncols {
            let upd = tab[row][cc] * factor;
            cost[cc] -= upd;
        }
    }
    basis[row] = col;
}

// ---------------------------------------------------------------------------
// Per-parameter evaluation context
// ---------------------------------------------------------------------------

/// All bound machinery at a fixed parameter: reduced eigendecomposition,
/// weighted second-order Gramian, and caches for `rho` and `eta_*` per
/// truncation index.
pub struct MuEval<'a, T: Scalar> {
    pub state: &'a RomState<T>,
    pub mu: Vec<T>,
    pub theta: Vec<T>,
    pub red: ReducedEig<T>,
    rho_cache: RefCell<Vec<(usize, T)>>,
    eta_cache: RefCell<Vec<(usize, EtaStar<T>)>>,
}

impl<'a, T: Scalar> MuEval<'a, T> {
    pub fn new(state: &'a RomState<T>, mu: &[T]) -> Result<Self, BoundError> {
        let red = state.reduced_eig(mu)?;
        let theta = state.theta(mu);
        Ok(Self {
            state,
            mu: mu.to_vec(),
            theta,
            red,
            rho_cache: RefCell::new(Vec::new()),
            eta_cache: RefCell::new(Vec::new()),
        })
    }

    /// Cluster-aligned truncation covering the first `t` reduced clusters.
    pub fn srange(&self, t: usize) -> Result<SRange, BoundError> {
        SRange::from_clusters(&self.red.clustering, t)
    }

    /// True when the `n >= 2s` hypothesis backing the snapshot shifts holds.
    pub fn theory_margin_ok(&self, s: SRange) -> bool {
        self.state.n() >= 2 * s.s
    }

    /// `rho(mu, s) = || (I - P_U) A(mu) U ||`, evaluated n-independently in
    /// the auxiliary residual basis; vanishes when the first `s` reduced
    /// eigenvectors are exact eigenvectors.
    pub fn rho(&self, s: SRange) -> Result<T, BoundError> {
        if let Some(&(_, v)) = self.rho_cache.borrow().iter().find(|e| e.0 == s.s) {
            return Ok(v);
        }
        let ys = self.red.vectors.columns(0, s.s).into_owned();
        let rho = self.state.deflated_residual_norm(&self.theta, &ys)?;
        self.rho_cache.borrow_mut().push((s.s, rho));
        Ok(rho)
    }

    /// The squared-Gramian evaluation of `rho` (paranoid cross-check; its
    /// noise floor is of order `sqrt(eps) ||A||`).
    pub fn rho_gramian(&self, s: SRange) -> Result<T, BoundError> {
        let m2 = self.state.second_order_weighted(&self.theta);
        let ys = self.red.vectors.columns(0, s.s);
        let mut shifted = ys.adjoint() * &m2 * ys;
        for i in 0..s.s {
            let lam = self.red.values[i];
            shifted[(i, i)] -= Cx::new(lam * lam, T::zero());
        }
        let top = *dense_eig(&shifted)?.values.last().unwrap();
        Ok(top.max(T::zero()).sqrt())
    }

    /// Snapshot shift `beta^(j)(mu, s)`: the smallest eigenvalue of
    /// `(L - l_1 I) - M_j P_s M_j^* (L - l_{l+1} I)`, computed through the
    /// diagonal similarity that makes the pencil Hermitian.
    pub fn beta(&self, j: usize, s: SRange) -> Result<T, BoundError> {
        let snap = &self.state.snapshots()[j];
        let ell = snap.ell();
        let lam1 = snap.values[0];
        let next = snap.next_value;
        let ys = self.red.vectors.columns(0, s.s);
        let cross = &snap.cross * ys; // ell x s
        let proj = &cross * cross.adjoint(); // M_j P_s M_j^*
        let mut h = CMatrix::<T>::zeros(ell, ell);
        for a in 0..ell {
            let ea = (next - snap.values[a]).max(T::zero()).sqrt();
            for b in 0..ell {
                let eb = (next - snap.values[b]).max(T::zero()).sqrt();
                h[(a, b)] = proj[(a, b)] * Cx::new(ea * eb, T::zero());
            }
            h[(a, a)] += Cx::new(snap.values[a] - lam1, T::zero());
        }
        let herm = (&h + h.adjoint()) * Cx::new(c::<T>(0.5), T::zero());
        Ok(dense_eig(&herm)?.values[0])
    }

    /// The SCM lower bound `eta_*(mu, s)` for the deflated minimum, from the
    /// LP over the per-term spectral box cut by one halfspace per snapshot.
    pub fn eta_star(&self, s: SRange) -> Result<EtaStar<T>, BoundError> {
        if let Some(&(_, v)) = self.eta_cache.borrow().iter().find(|e| e.0 == s.s) {
            return Ok(v);
        }
        let result = if s.s >= self.state.n() {
            EtaStar::Unconstrained
        } else {
            let mut halfspaces = Vec::with_capacity(self.state.snapshots().len());
            for (j, snap) in self.state.snapshots().iter().enumerate() {
                let beta = self.beta(j, s)?;
                let a = self.state.theta(&snap.mu);
                halfspaces.push((a, snap.values[0] + beta));
            }
            let (lo, hi): (Vec<T>, Vec<T>) = self.state.term_extrema().iter().cloned().unzip();
            let inst = LpInstance {
                objective: self.theta.clone(),
                box_lo: lo,
                box_hi: hi,
                halfspaces,
            };
            let sol = solve_lp(&inst)?;
            EtaStar::Value {
                value: sol.value,
                relaxed: sol.relaxed,
            }
        };
        self.eta_cache.borrow_mut().push((s.s, result));
        Ok(result)
    }

    /// Subspace lower bound for the k-th eigenvalue (`k <= s`), guaranteed
    /// `<= lambda_k(mu)`; at `rho = g = 0` the bound degenerates to
    /// `min(lambda_k^V, eta_*)`.
    pub fn slb(&self, k: usize, s: SRange) -> Result<T, BoundError> {
        if k == 0 || k > s.s {
            return Err(BoundError::KOutOfRange { k, s: s.s });
        }
        let lam_k = self.red.values[k - 1];
        match self.eta_star(s)? {
            EtaStar::Unconstrained => Ok(lam_k),
            EtaStar::Value { value: eta, .. } => {
                let rho = self.rho(s)?;
                let g = g_k(&self.red.values, k, eta);
                let scale = T::one() + lam_k.abs() + eta.abs();
                Ok(lam_k.min(eta) - residual_fraction(rho, g, scale))
            }
        }
    }

    /// The lower-bound map `f(eta)` at this parameter: any cheap lower
    /// estimate of the deflated minimum turns into a bound on `lambda_1`.
    pub fn f_from_eta(&self, eta: T, s: SRange) -> Result<T, BoundError> {
        Ok(f_lower(self.red.values[0], eta, self.rho(s)?))
    }

    /// Subspace upper bound: the k-th reduced eigenvalue (min-max principle).
    pub fn sub(&self, k: usize) -> T {
        self.red.values[k - 1]
    }
}

// ---------------------------------------------------------------------------
// Strict free-function wrappers (hypotheses enforced)
// ---------------------------------------------------------------------------

fn strict_eval<'a, T: Scalar>(
    state: &'a RomState<T>,
    mu: &[T],
    s: usize,
) -> Result<(MuEval<'a, T>, SRange), BoundError> {
    let ev = MuEval::new(state, mu)?;
    let sr = SRange::validate(&ev.red.clustering, s)?;
    if state.n() < 2 * s {
        return Err(BoundError::DimensionTooSmall { n: state.n(), s });
    }
    Ok((ev, sr))
}

/// `rho(mu, s)` with cluster-boundary validation (the `n >= 2s` hypothesis
/// is not needed for `rho` itself).
pub fn rho<T: Scalar>(state: &RomState<T>, mu: &[T], s: usize) -> Result<T, BoundError> {
    let ev = MuEval::new(state, mu)?;
    let sr = SRange::validate(&ev.red.clustering, s)?;
    ev.rho(sr)
}

/// `beta^(j)(mu, s)` under the `n >= 2s` hypothesis.
pub fn beta<T: Scalar>(
    state: &RomState<T>,
    j: usize,
    mu: &[T],
    s: usize,
) -> Result<T, BoundError> {
    let (ev, sr) = strict_eval(state, mu, s)?;
    ev.beta(j, sr)
}

/// `eta_*(mu, s)` under the `n >= 2s` hypothesis.
pub fn eta_star<T: Scalar>(
    state: &RomState<T>,
    mu: &[T],
    s: usize,
) -> Result<EtaStar<T>, BoundError> {
    let (ev, sr) = strict_eval(state, mu, s)?;
    ev.eta_star(sr)
}

/// `lambda_k^SLB(mu, s)` under the `n >= 2s` hypothesis.
pub fn slb_k<T: Scalar>(
    state: &RomState<T>,
    mu: &[T],
    k: usize,
    s: usize,
) -> Result<T, BoundError> {
    let (ev, sr) = strict_eval(state, mu, s)?;
    ev.slb(k, sr)
}

/// `lambda_1^SLB(mu, s)`; definitionally `slb_k` with `k = 1`.
pub fn slb_1<T: Scalar>(state: &RomState<T>, mu: &[T], s: usize) -> Result<T, BoundError> {
    slb_k(state, mu, 1, s)
}
