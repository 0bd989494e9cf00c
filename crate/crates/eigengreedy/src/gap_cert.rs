//! Spectral-gap bounds and indicators, the exact-dimension-recovery check,
//! and the conditional online certification combining gap and eigenspace
//! reduced models.

use crate::affine::AffineFamily;
use crate::eigensolve::{solve_clustered, EigOptions, EigenClustering};
use crate::lowerbounds::{residual_fraction, g_k, BoundError, EtaStar, MuEval, SRange};
use crate::scalar::{c, Scalar};
use crate::subspace::RomState;

/// Gap bounds at one parameter: the reduced gap, its certified upper and
/// lower companions, and the relative width indicator.
#[derive(Debug, Clone, Copy)]
pub struct GapBounds<T: Scalar> {
    pub reduced_gap: T,
    pub sub: T,
    pub slb: T,
    /// `(sub - slb) / reduced_gap`.
    pub indicator: T,
}

/// Reduced spectral gap `lambda^V_{m_1+1} - lambda^V_1`; a reduced matrix
/// that clusters into one value (numerically `c I`) has no defined gap and
/// signals a forced interpolation point.
pub fn reduced_gap<T: Scalar>(ev: &MuEval<T>) -> Result<T, BoundError> {
    if ev.red.values.len() < 2 {
        return Err(BoundError::KOutOfRange {
            k: 2,
            s: ev.red.values.len(),
        });
    }
    if ev.red.scalar_identity {
        return Err(BoundError::DegenerateReduced);
    }
    let m1 = ev.red.m1();
    Ok(ev.red.values[m1] - ev.red.values[0])
}

/// `gamma^SUB = lambda^V_{m_1+1} - lambda_1^SLB(s = m_1)`.
pub fn gap_sub<T: Scalar>(ev: &MuEval<T>) -> Result<T, BoundError> {
    if ev.red.scalar_identity || ev.red.values.len() < 2 {
        return Err(BoundError::DegenerateReduced);
    }
    let m1 = ev.red.m1();
    let s1 = ev.srange(1)?;
    let slb1 = ev.slb(1, s1)?;
    Ok(ev.red.values[m1] - slb1)
}

/// `gamma^SLB = lambda^SLB_{m_1+1}(s covering the second cluster) - lambda^V_1`.
pub fn gap_slb<T: Scalar>(ev: &MuEval<T>) -> Result<T, BoundError> {
    if ev.red.scalar_identity || ev.red.values.len() < 2 {
        return Err(BoundError::DegenerateReduced);
    }
    let m1 = ev.red.m1();
    let s2 = ev.srange(2)?;
    let slb = ev.slb(m1 + 1, s2)?;
    Ok(slb - ev.red.values[0])
}

/// All gap bounds in one evaluation.
pub fn gap_bounds<T: Scalar>(ev: &MuEval<T>) -> Result<GapBounds<T>, BoundError> {
    let reduced = reduced_gap(ev)?;
    let sub = gap_sub(ev)?;
    let slb = gap_slb(ev)?;
    Ok(GapBounds {
        reduced_gap: reduced,
        sub,
        slb,
        indicator: (sub - slb) / reduced,
    })
}

/// `Gamma^V(mu) = (gamma^SUB - gamma^SLB) / gamma^V`.
pub fn gap_indicator<T: Scalar>(ev: &MuEval<T>) -> Result<T, BoundError> {
    Ok(gap_bounds(ev)?.indicator)
}

/// Oracle-side relative gap error `|gamma^V - gamma| / gamma^V`; performs a
/// full-order solve and is intended for verification sweeps only.
pub fn gap_error_oracle<T: Scalar>(
    state: &RomState<T>,
    family: &AffineFamily<T>,
    mu: &[T],
    opts: &EigOptions<T>,
) -> Result<T, BoundError> {
    let ev = MuEval::new(state, mu)?;
    let reduced = reduced_gap(&ev)?;
    let solve = solve_clustered(family, mu, 1, opts)?;
    let gamma = solve.next_value - solve.values[0];
    Ok((reduced - gamma).abs() / reduced)
}

/// `epsilon^(J)(mu, s)`: the modified-residual width entering the dimension
/// condition; defined as 0 when both `rho` and `g_s(eta_*)` vanish.
pub fn epsilon_j<T: Scalar>(ev: &MuEval<T>, s: SRange) -> Result<T, BoundError> {
    let rho = ev.rho(s)?;
    match ev.eta_star(s)? {
        EtaStar::Unconstrained => Ok(T::zero()),
        EtaStar::Value { value: eta, .. } => {
            let g = g_k(&ev.red.values, s.s, eta);
            let scale = T::one() + eta.abs() + ev.red.values[s.s - 1].abs();
            Ok(residual_fraction(rho, g, scale))
        }
    }
}

/// Outcome of the exact-dimension-recovery check for `t = 1..k`.
#[derive(Debug, Clone)]
pub struct DimCheckResult<T: Scalar> {
    /// Per `t`: the strict inequality `eta_* > lambda^V_{s(t)} + eps` held.
    pub satisfied: Vec<bool>,
    pub eta_values: Vec<EtaStar<T>>,
    pub epsilon_values: Vec<T>,
    pub s_values: Vec<usize>,
    pub clustering: EigenClustering<T>,
}

impl<T: Scalar> DimCheckResult<T> {
    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&b| b)
    }
}

/// Checks the strict inequality `eta_*(mu, s(t)) > lambda^V_{s(t)} + eps^(J)`
/// for every `t <= k`; when all hold, the reduced multiplicities `m_t(mu, V)`
/// match the full-order ones. The strictness is evaluated with a relative
/// safety margin (`margin * scale`).
pub fn check_dim_condition<T: Scalar>(
    ev: &MuEval<T>,
    k: usize,
    margin: T,
) -> Result<DimCheckResult<T>, BoundError> {
    if k == 0 || k > ev.state.cluster_coverage() {
        return Err(BoundError::KOutOfRange {
            k,
            s: ev.state.cluster_coverage(),
        });
    }
    if k > ev.red.clustering.n_clusters() {
        return Err(BoundError::KOutOfRange {
            k,
            s: ev.red.clustering.n_clusters(),
        });
    }
    let mut satisfied = Vec::with_capacity(k);
    let mut eta_values = Vec::with_capacity(k);
    let mut epsilon_values = Vec::with_capacity(k);
    let mut s_values = Vec::with_capacity(k);
    for t in 1..=k {
        let sr = ev.srange(t)?;
        let eta = ev.eta_star(sr)?;
        let eps = epsilon_j(ev, sr)?;
        let lam_s = ev.red.values[sr.s - 1];
        let scale = T::one() + lam_s.abs();
        let ok = match eta {
            EtaStar::Unconstrained => true,
            EtaStar::Value { value, .. } => value > lam_s + eps + margin * scale,
        };
        satisfied.push(ok);
        eta_values.push(eta);
        epsilon_values.push(eps);
        s_values.push(sr.s);
    }
    Ok(DimCheckResult {
        satisfied,
        eta_values,
        epsilon_values,
        s_values,
        clustering: ev.red.clustering.clone(),
    })
}

/// Separation diagnostic `F(mu) = eta_*(s(1)) - lambda^V_{s(1)} - eps^(J)`;
/// positive exactly when the dimension condition holds for `k = 1`.
/// `None` stands for an unconstrained (vacuously positive) value.
pub fn f_diagnostics<T: Scalar>(ev: &MuEval<T>) -> Result<Option<T>, BoundError> {
    let sr = ev.srange(1)?;
    let eta = ev.eta_star(sr)?;
    let eps = epsilon_j(ev, sr)?;
    match eta {
        EtaStar::Unconstrained => Ok(None),
        EtaStar::Value { value, .. } => Ok(Some(value - ev.red.values[sr.s - 1] - eps)),
    }
}

/// Online certification outcome at an arbitrary parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertifyOutcome<T: Scalar> {
    /// Both dimension checks passed and the gap width is small enough; the
    /// estimator value bounds the eigenspace projection error.
    Certified { bound: T, eps_mu: T },
    /// A dimension condition failed (or a reduced matrix was degenerate);
    /// escalate to a full-order solve to refresh the subspaces.
    DimConditionFailed,
    /// The online gap width `eps_mu` reached 1; the estimator denominator
    /// is no longer controlled.
    GapWidthTooLarge { eps_mu: T },
}

/// How the online gap width `eps_mu` is measured: the absolute difference
/// `gamma^SUB - gamma^SLB` as written in the source material, or the
/// relative variant scaled by the reduced gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapWidthConvention {
    #[default]
    Absolute,
    Relative,
}

/// Conditional certification at `mu`: requires the dimension condition for
/// `k = 1` on both the gap and eigenspace states, and the online gap width
/// below 1. On success returns the estimator value with `eps_mu` standing in
/// for the offline gap tolerance.
pub fn conditional_certify_online<T: Scalar>(
    gap_state: &RomState<T>,
    eig_state: &RomState<T>,
    mu: &[T],
    convention: GapWidthConvention,
    margin: T,
) -> Result<CertifyOutcome<T>, BoundError> {
    let ev_gamma = MuEval::new(gap_state, mu)?;
    let ev_w = MuEval::new(eig_state, mu)?;
    for ev in [&ev_gamma, &ev_w] {
        if ev.red.scalar_identity {
            return Ok(CertifyOutcome::DimConditionFailed);
        }
        let check = check_dim_condition(ev, 1, margin)?;
        if !check.all_satisfied() {
            return Ok(CertifyOutcome::DimConditionFailed);
        }
    }
    let bounds = gap_bounds(&ev_gamma)?;
    let eps_mu = match convention {
        GapWidthConvention::Absolute => bounds.sub - bounds.slb,
        GapWidthConvention::Relative => bounds.indicator,
    };
    if eps_mu >= T::one() {
        return Ok(CertifyOutcome::GapWidthTooLarge { eps_mu });
    }
    let s1 = ev_w.srange(1)?;
    let slb1 = ev_w.slb(1, s1)?;
    let sub1 = ev_w.sub(1);
    let resid = ev_w
        .state
        .residual_norm(mu, &ev_w.red.ground_block(), ev_w.red.lambda1())?;
    let bound = (sub1 - slb1 + resid) / ((T::one() - eps_mu) * bounds.reduced_gap);
    Ok(CertifyOutcome::Certified { bound, eps_mu })
}

/// Default strictness margin of the dimension condition.
pub fn default_dim_margin<T: Scalar>() -> T {
    c(1e-12)
}
