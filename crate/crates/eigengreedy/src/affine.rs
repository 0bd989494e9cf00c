//! Affine Hermitian matrix families `A(mu) = sum_q theta_q(mu) A_q`,
//! parameter grids, and the text model format.
//!
//! Matrices are stored as upper triangles with the conjugate transpose
//! implied, so every assembled matrix is Hermitian by construction.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex;
use num_traits::Zero;
use thiserror::Error;

use crate::scalar::{c, CMatrix, CVector, Cx, Scalar};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("Hermitian violation at entry ({i},{j}): {msg}")]
    Hermitian { i: usize, j: usize, msg: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// One scalar coefficient function of the affine decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTerm<T: Scalar> {
    pub coefficient: T,
    pub kind: ThetaKind<T>,
}

/// Functional form of a theta term.
///
/// `LagrangeRatio` is a rational extension used only by the rank-one
/// Lagrange generator; families containing it are rejected by the
/// certified lower-bound machinery (see [`AffineFamily::has_rational_terms`]).
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaKind<T: Scalar> {
    /// `prod_i mu_i ^ e_i`
    Monomial { exponents: Vec<u32> },
    /// `cos(frequency * mu_axis)`
    Cosine { frequency: T, axis: usize },
    /// `sin(frequency * mu_axis)`
    Sine { frequency: T, axis: usize },
    /// `L_i(mu_1) L_k(mu_1) / sum_j L_j(mu_1)^2` over the given nodes
    LagrangeRatio { i: usize, k: usize, nodes: Vec<T> },
}

impl<T: Scalar> ThetaTerm<T> {
    pub fn monomial(coefficient: T, exponents: Vec<u32>) -> Self {
        Self {
            coefficient,
            kind: ThetaKind::Monomial { exponents },
        }
    }

    pub fn cosine(coefficient: T, frequency: T, axis: usize) -> Self {
        Self {
            coefficient,
            kind: ThetaKind::Cosine { frequency, axis },
        }
    }

    pub fn sine(coefficient: T, frequency: T, axis: usize) -> Self {
        Self {
            coefficient,
            kind: ThetaKind::Sine { frequency, axis },
        }
    }

    fn eval(&self, mu: &[T]) -> T {
        let v = match &self.kind {
            ThetaKind::Monomial { exponents } => {
                let mut acc = T::one();
                for (x, e) in mu.iter().zip(exponents) {
                    if *e > 0 {
                        acc *= x.powi(*e as i32);
                    }
                }
                acc
            }
            ThetaKind::Cosine { frequency, axis } => (*frequency * mu[*axis]).cos(),
            ThetaKind::Sine { frequency, axis } => (*frequency * mu[*axis]).sin(),
            ThetaKind::LagrangeRatio { i, k, nodes } => {
                let x = mu[0];
                let den: T = (0..nodes.len())
                    .map(|j| {
                        let l = lagrange_basis(nodes, j, x);
                        l * l
                    })
                    .fold(T::zero(), |a, b| a + b);
                lagrange_basis(nodes, *i, x) * lagrange_basis(nodes, *k, x) / den
            }
        };
        self.coefficient * v
    }

    fn validate(&self, p: usize) -> Result<(), ModelError> {
        match &self.kind {
            ThetaKind::Monomial { exponents } => {
                if exponents.len() != p {
                    return Err(ModelError::Dimension {
                        expected: p,
                        got: exponents.len(),
                    });
                }
            }
            ThetaKind::Cosine { axis, .. } | ThetaKind::Sine { axis, .. } => {
                if *axis >= p {
                    return Err(ModelError::Invalid(format!(
                        "trigonometric term axis {axis} out of range for p={p}"
                    )));
                }
            }
            ThetaKind::LagrangeRatio { i, k, nodes } => {
                if p != 1 {
                    return Err(ModelError::Invalid(
                        "rational Lagrange terms require a one-dimensional parameter".into(),
                    ));
                }
                if *i >= nodes.len() || *k >= nodes.len() {
                    return Err(ModelError::Invalid("Lagrange index out of range".into()));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates a theta-term list at `mu` without any domain/dimension checks;
/// the reduced-model state uses this to share the term grammar.
pub fn eval_theta_terms<T: Scalar>(terms: &[ThetaTerm<T>], mu: &[T]) -> Vec<T> {
    terms.iter().map(|t| t.eval(mu)).collect()
}

/// `j`-th Lagrange basis polynomial over `nodes`, evaluated at `x`.
pub fn lagrange_basis<T: Scalar>(nodes: &[T], j: usize, x: T) -> T {
    let xj = nodes[j];
    let mut acc = T::one();
    for (m, &xm) in nodes.iter().enumerate() {
        if m != j {
            acc *= (x - xm) / (xj - xm);
        }
    }
    acc
}

/// Hermitian matrix stored as the diagonal plus strict upper triangle;
/// the lower triangle is the implied conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianSparse<T: Scalar> {
    n: usize,
    /// Row-major sorted entries with `i <= j`; diagonal entries are real.
    entries: Vec<(usize, usize, Cx<T>)>,
}

impl<T: Scalar> HermitianSparse<T> {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, Cx<T>)] {
        &self.entries
    }

    /// Builds from triplets, accumulating duplicates. Entries with `i > j`
    /// are folded onto the upper triangle as their conjugates.
    pub fn accumulate<I>(n: usize, triplets: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, usize, Cx<T>)>,
    {
        let mut raw: Vec<(usize, usize, Cx<T>)> = Vec::new();
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(ModelError::Invalid(format!(
                    "entry ({i},{j}) out of range for n={n}"
                )));
            }
            if i <= j {
                raw.push((i, j, v));
            } else {
                raw.push((j, i, v.conj()));
            }
        }
        raw.sort_by_key(|&(i, j, _)| (i, j));
        let mut entries: Vec<(usize, usize, Cx<T>)> = Vec::with_capacity(raw.len());
        for (i, j, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        entries.retain(|&(_, _, v)| v != Cx::zero());
        for &(i, j, v) in &entries {
            if i == j && v.im != T::zero() {
                return Err(ModelError::Hermitian {
                    i,
                    j,
                    msg: format!("diagonal entry has nonzero imaginary part {}", v.im),
                });
            }
        }
        Ok(Self { n, entries })
    }

    /// Strict constructor for file contents: a repeated `(i,j)` entry or a
    /// mismatched `(i,j)`/`(j,i)` pair is rejected.
    pub fn from_file_entries(
        n: usize,
        triplets: Vec<(usize, usize, Cx<T>)>,
    ) -> Result<Self, ModelError> {
        let mut seen: Vec<(usize, usize, Cx<T>, bool)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(ModelError::Invalid(format!(
                    "entry ({i},{j}) out of range for n={n}"
                )));
            }
            let (ui, uj, uv, flipped) = if i <= j {
                (i, j, v, false)
            } else {
                (j, i, v.conj(), true)
            };
            if let Some(prev) = seen.iter().find(|e| e.0 == ui && e.1 == uj) {
                if prev.3 == flipped {
                    return Err(ModelError::Parse {
                        line: 0,
                        msg: format!("duplicate entry ({i},{j})"),
                    });
                }
                if prev.2 != uv {
                    return Err(ModelError::Hermitian {
                        i: ui,
                        j: uj,
                        msg: "pair (i,j)/(j,i) is not conjugate-symmetric".into(),
                    });
                }
            } else {
                if ui == uj && uv.im != T::zero() {
                    return Err(ModelError::Hermitian {
                        i: ui,
                        j: uj,
                        msg: "diagonal entry must be real".into(),
                    });
                }
                seen.push((ui, uj, uv, flipped));
            }
        }
        let mut entries: Vec<(usize, usize, Cx<T>)> =
            seen.into_iter().map(|(i, j, v, _)| (i, j, v)).collect();
        entries.sort_by_key(|&(i, j, _)| (i, j));
        entries.retain(|&(_, _, v)| v != Cx::zero());
        Ok(Self { n, entries })
    }

    /// `y += scale * A x` using the implied conjugate transpose.
    pub fn apply_add(&self, scale: Cx<T>, x: &CVector<T>, y: &mut CVector<T>) {
        for &(i, j, v) in &self.entries {
            y[i] += scale * v * x[j];
            if i != j {
                y[j] += scale * v.conj() * x[i];
            }
        }
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        let mut m = CMatrix::<T>::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            if i != j {
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    /// Largest row sum of absolute values (an upper bound on the spectral norm).
    pub fn norm_inf(&self) -> T {
        let mut rows = vec![T::zero(); self.n];
        for &(i, j, v) in &self.entries {
            let a = (v.re * v.re + v.im * v.im).sqrt();
            rows[i] += a;
            if i != j {
                rows[j] += a;
            }
        }
        rows.into_iter().fold(T::zero(), |a, b| a.max(b))
    }
}

/// Axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox<T: Scalar> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Scalar> DomainBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self, ModelError> {
        if lo.len() != hi.len() {
            return Err(ModelError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(ModelError::Invalid("domain box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn axis(&self, k: usize) -> (T, T) {
        (self.lo[k], self.hi[k])
    }

    pub fn contains(&self, mu: &[T]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .enumerate()
                .all(|(k, x)| *x >= self.lo[k] && *x <= self.hi[k])
    }
}

/// Parametric Hermitian family `A(mu) = sum_q theta_q(mu) A_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily<T: Scalar> {
    n: usize,
    terms: Vec<ThetaTerm<T>>,
    matrices: Vec<HermitianSparse<T>>,
    domain: DomainBox<T>,
}

impl<T: Scalar> AffineFamily<T> {
    pub fn new(
        terms: Vec<ThetaTerm<T>>,
        matrices: Vec<HermitianSparse<T>>,
        domain: DomainBox<T>,
    ) -> Result<Self, ModelError> {
        if terms.is_empty() {
            return Err(ModelError::Invalid("family needs at least one term".into()));
        }
        if terms.len() != matrices.len() {
            return Err(ModelError::Invalid(format!(
                "{} terms but {} matrices",
                terms.len(),
                matrices.len()
            )));
        }
        let n = matrices[0].n();
        if n < 2 {
            return Err(ModelError::Invalid("matrix dimension must be >= 2".into()));
        }
        if matrices.iter().any(|m| m.n() != n) {
            return Err(ModelError::Invalid("matrices differ in dimension".into()));
        }
        let p = domain.dim();
        for t in &terms {
            t.validate(p)?;
        }
        Ok(Self {
            n,
            terms,
            matrices,
            domain,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.domain.dim()
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[ThetaTerm<T>] {
        &self.terms
    }

    pub fn matrices(&self) -> &[HermitianSparse<T>] {
        &self.matrices
    }

    pub fn domain(&self) -> &DomainBox<T> {
        &self.domain
    }

    /// True when any term uses the rational Lagrange extension; such
    /// families are excluded from the certified lower-bound path.
    pub fn has_rational_terms(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t.kind, ThetaKind::LagrangeRatio { .. }))
    }

    /// Evaluates `theta(mu)`. Points outside the domain box only warn: the
    /// bound theory assumes `mu` in the box, online probing outside is allowed.
    pub fn evaluate_theta(&self, mu: &[T]) -> Result<Vec<T>, ModelError> {
        if mu.len() != self.p() {
            return Err(ModelError::Dimension {
                expected: self.p(),
                got: mu.len(),
            });
        }
        if !self.domain.contains(mu) {
            log::warn!("parameter {mu:?} lies outside the model domain box");
        }
        Ok(self.terms.iter().map(|t| t.eval(mu)).collect())
    }

    /// Dense assembly of `A(mu)`.
    pub fn assemble(&self, mu: &[T]) -> Result<CMatrix<T>, ModelError> {
        let theta = self.evaluate_theta(mu)?;
        let mut m = CMatrix::<T>::zeros(self.n, self.n);
        for (t, a) in theta.iter().zip(&self.matrices) {
            let s = Cx::new(*t, T::zero());
            for &(i, j, v) in a.entries() {
                m[(i, j)] += s * v;
                if i != j {
                    m[(j, i)] += s * v.conj();
                }
            }
        }
        Ok(m)
    }

    /// Matrix-free `A(mu) x`.
    pub fn apply(&self, mu: &[T], x: &CVector<T>) -> Result<CVector<T>, ModelError> {
        if x.len() != self.n {
            return Err(ModelError::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let theta = self.evaluate_theta(mu)?;
        let mut y = CVector::<T>::zeros(self.n);
        for (t, a) in theta.iter().zip(&self.matrices) {
            a.apply_add(Cx::new(*t, T::zero()), x, &mut y);
        }
        Ok(y)
    }

    /// Matrix-free application with precomputed coefficients.
    pub fn apply_with_theta(&self, theta: &[T], x: &CVector<T>, y: &mut CVector<T>) {
        y.fill(Cx::zero());
        for (t, a) in theta.iter().zip(&self.matrices) {
            a.apply_add(Cx::new(*t, T::zero()), x, y);
        }
    }

    /// Crude upper bound on the spectral norm of `A(mu)`.
    pub fn norm_bound(&self, mu: &[T]) -> Result<T, ModelError> {
        let theta = self.evaluate_theta(mu)?;
        Ok(theta
            .iter()
            .zip(&self.matrices)
            .map(|(t, a)| t.abs() * a.norm_inf())
            .fold(T::zero(), |a, b| a + b))
    }
}

/// How a parameter grid was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridProvenance {
    TensorChebyshevWithEndpoints,
    ExplicitList,
}

/// Discrete training set of parameter points.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid<T: Scalar> {
    pub points: Vec<Vec<T>>,
    pub provenance: GridProvenance,
}

impl<T: Scalar> ParameterGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Tensor grid of Chebyshev points of the first kind per axis, with the
/// interval endpoints appended, sorted ascending per axis.
pub fn chebyshev_grid<T: Scalar>(
    domain: &DomainBox<T>,
    counts: &[usize],
) -> Result<ParameterGrid<T>, ModelError> {
    if counts.len() != domain.dim() {
        return Err(ModelError::Dimension {
            expected: domain.dim(),
            got: counts.len(),
        });
    }
    let mut axes: Vec<Vec<T>> = Vec::with_capacity(counts.len());
    for (k, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(ModelError::Invalid(format!(
                "axis {k}: need at least 2 points, got {count}"
            )));
        }
        let (lo, hi) = domain.axis(k);
        let interior = count - 2;
        let mut pts = Vec::with_capacity(count);
        pts.push(lo);
        // Chebyshev points of the first kind, cos((2i-1)pi/(2m)), mapped to [lo, hi].
        for i in (1..=interior).rev() {
            let angle = c::<T>(2.0 * i as f64 - 1.0) * T::pi() / c::<T>(2.0 * interior as f64);
            let x = angle.cos();
            let mapped = lo + (x + T::one()) * (hi - lo) / c::<T>(2.0);
            pts.push(mapped);
        }
        pts.push(hi);
        axes.push(pts);
    }
    // Tensor product in row-major order (last axis fastest).
    let total: usize = axes.iter().map(Vec::len).product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        points.push(idx.iter().enumerate().map(|(k, &i)| axes[k][i]).collect());
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(ParameterGrid {
        points,
        provenance: GridProvenance::TensorChebyshevWithEndpoints,
    })
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

/// `term <kind> <coefficient> <params...>` line for a theta term (shared by
/// the model and ROM formats).
pub fn term_to_line<T: Scalar>(t: &ThetaTerm<T>) -> String {
    let mut s = String::new();
    match &t.kind {
        ThetaKind::Monomial { exponents } => {
            write!(s, "term monomial {}", t.coefficient).unwrap();
            for e in exponents {
                write!(s, " {e}").unwrap();
            }
        }
        ThetaKind::Cosine { frequency, axis } => {
            write!(s, "term cosine {} {} {}", t.coefficient, frequency, axis).unwrap();
        }
        ThetaKind::Sine { frequency, axis } => {
            write!(s, "term sine {} {} {}", t.coefficient, frequency, axis).unwrap();
        }
        ThetaKind::LagrangeRatio { i, k, nodes } => {
            write!(s, "term ratlag {} {} {} {}", t.coefficient, i, k, nodes.len()).unwrap();
            for x in nodes {
                write!(s, " {x}").unwrap();
            }
        }
    }
    s
}

/// Serializes a family in the model text format.
pub fn model_to_string<T: Scalar>(family: &AffineFamily<T>) -> String {
    let mut out = String::new();
    writeln!(out, "{} {} {}", family.n(), family.q(), family.p()).unwrap();
    for k in 0..family.p() {
        let (lo, hi) = family.domain().axis(k);
        writeln!(out, "{k} {lo} {hi}").unwrap();
    }
    for (t, a) in family.terms().iter().zip(family.matrices()) {
        writeln!(out, "{}", term_to_line(t)).unwrap();
        writeln!(out, "nnz {}", a.nnz()).unwrap();
        for &(i, j, v) in a.entries() {
            writeln!(out, "{i} {j} {} {}", v.re, v.im).unwrap();
        }
    }
    out
}

pub fn save_model<T: Scalar>(family: &AffineFamily<T>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, model_to_string(family))?;
    Ok(())
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
        }
    }

    /// Next non-empty, non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Some((idx + 1, trimmed));
            }
        }
        None
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_field<F: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<F, ModelError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from {tok:?}")))
}

fn parse_scalar<T: Scalar>(line: usize, tok: &str, what: &str) -> Result<T, ModelError> {
    let x: f64 = parse_field(line, tok, what)?;
    Ok(c(x))
}

/// Parses a `term <kind> <coefficient> <params...>` token list.
pub fn term_from_tokens<T: Scalar>(ln: usize, toks: &[&str]) -> Result<ThetaTerm<T>, ModelError> {
    if toks.len() < 3 || toks[0] != "term" {
        return Err(parse_err(ln, "expected `term <kind> <coefficient> ...`"));
    }
    let coefficient: T = parse_scalar(ln, toks[2], "coefficient")?;
    let kind = match toks[1] {
        "monomial" => {
            let exps: Result<Vec<u32>, _> = toks[3..]
                .iter()
                .map(|t| parse_field(ln, t, "exponent"))
                .collect();
            ThetaKind::Monomial { exponents: exps? }
        }
        "cosine" | "sine" => {
            if toks.len() != 5 {
                return Err(parse_err(ln, "trigonometric term needs `<freq> <axis>`"));
            }
            let frequency: T = parse_scalar(ln, toks[3], "frequency")?;
            let axis: usize = parse_field(ln, toks[4], "axis")?;
            if toks[1] == "cosine" {
                ThetaKind::Cosine { frequency, axis }
            } else {
                ThetaKind::Sine { frequency, axis }
            }
        }
        "ratlag" => {
            if toks.len() < 6 {
                return Err(parse_err(ln, "ratlag term needs `<i> <k> <m> <nodes...>`"));
            }
            let i: usize = parse_field(ln, toks[3], "index i")?;
            let k: usize = parse_field(ln, toks[4], "index k")?;
            let m: usize = parse_field(ln, toks[5], "node count")?;
            if toks.len() != 6 + m {
                return Err(parse_err(ln, format!("expected {m} nodes")));
            }
            let nodes: Result<Vec<T>, _> = toks[6..]
                .iter()
                .map(|t| parse_scalar(ln, t, "node"))
                .collect();
            ThetaKind::LagrangeRatio { i, k, nodes: nodes? }
        }
        other => return Err(parse_err(ln, format!("unknown term kind {other:?}"))),
    };
    Ok(ThetaTerm { coefficient, kind })
}

/// Parses a family from the model text format.
pub fn model_from_string<T: Scalar>(text: &str) -> Result<AffineFamily<T>, ModelError> {
    let mut rd = LineReader::new(text);
    let (ln, header) = rd.next().ok_or(parse_err(0, "empty model file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(parse_err(ln, "header must be `n Q p`"));
    }
    let n: usize = parse_field(ln, toks[0], "n")?;
    let q: usize = parse_field(ln, toks[1], "Q")?;
    let p: usize = parse_field(ln, toks[2], "p")?;

    let mut lo = vec![T::zero(); p];
    let mut hi = vec![T::zero(); p];
    let mut seen_axes = vec![false; p];
    for _ in 0..p {
        let (ln, line) = rd.next().ok_or(parse_err(0, "missing axis line"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(ln, "axis line must be `axis lo hi`"));
        }
        let k: usize = parse_field(ln, toks[0], "axis index")?;
        if k >= p || seen_axes[k] {
            return Err(parse_err(ln, format!("bad or repeated axis index {k}")));
        }
        seen_axes[k] = true;
        lo[k] = parse_scalar(ln, toks[1], "axis lower bound")?;
        hi[k] = parse_scalar(ln, toks[2], "axis upper bound")?;
    }
    let domain = DomainBox::new(lo, hi)?;

    let mut terms = Vec::with_capacity(q);
    let mut matrices = Vec::with_capacity(q);
    for _ in 0..q {
        let (ln, line) = rd
            .next()
            .ok_or(parse_err(0, format!("expected {q} term blocks")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        terms.push(term_from_tokens(ln, &toks)?);

        let (ln, line) = rd.next().ok_or(parse_err(0, "missing nnz line"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 || toks[0] != "nnz" {
            return Err(parse_err(ln, "expected `nnz <count>`"));
        }
        let count: usize = parse_field(ln, toks[1], "nnz count")?;
        let mut triplets = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, line) = rd.next().ok_or(parse_err(0, "missing matrix entry"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(parse_err(ln, "entry must be `i j re im`"));
            }
            let i: usize = parse_field(ln, toks[0], "row")?;
            let j: usize = parse_field(ln, toks[1], "col")?;
            let re: T = parse_scalar(ln, toks[2], "real part")?;
            let im: T = parse_scalar(ln, toks[3], "imaginary part")?;
            triplets.push((i, j, Complex::new(re, im)));
        }
        matrices.push(HermitianSparse::from_file_entries(n, triplets)?);
    }
    if let Some((ln, _)) = rd.next() {
        return Err(parse_err(ln, "trailing content after final matrix block"));
    }
    AffineFamily::new(terms, matrices, domain)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<AffineFamily<T>, ModelError> {
    let text = std::fs::read_to_string(path)?;
    model_from_string(&text)
}

/// Writes a grid as CSV, one parameter point per row.
pub fn grid_to_string<T: Scalar>(grid: &ParameterGrid<T>) -> String {
    let mut out = String::new();
    for point in &grid.points {
        let row: Vec<String> = point.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn save_grid<T: Scalar>(grid: &ParameterGrid<T>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, grid_to_string(grid))?;
    Ok(())
}

/// Parses a grid CSV; `#` starts a comment line, `p` is checked per row.
pub fn grid_from_string<T: Scalar>(text: &str, p: usize) -> Result<ParameterGrid<T>, ModelError> {
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if cells.len() != p {
            return Err(parse_err(
                idx + 1,
                format!("expected {p} columns, got {}", cells.len()),
            ));
        }
        let point: Result<Vec<T>, _> = cells
            .iter()
            .map(|t| parse_scalar(idx + 1, t, "coordinate"))
            .collect();
        points.push(point?);
    }
    Ok(ParameterGrid {
        points,
        provenance: GridProvenance::ExplicitList,
    })
}

pub fn load_grid<T: Scalar>(path: &Path, p: usize) -> Result<ParameterGrid<T>, ModelError> {
    let text = std::fs::read_to_string(path)?;
    grid_from_string(&text, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    type F = f64;

    fn example1() -> AffineFamily<F> {
        generators::example1_family()
    }

    #[test]
    fn theta_example1() {
        let f = example1();
        let theta = f.evaluate_theta(&[2.0]).unwrap();
        assert_eq!(theta, vec![2.0, 4.0, 1.0]);
    }

    #[test]
    fn theta_blbq_form() {
        let f = generators::blbq_family::<F>(2).unwrap();
        let theta = f.evaluate_theta(&[0.0, 0.5]).unwrap();
        assert_eq!(theta, vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn theta_xxz_form() {
        let f = generators::xxz_family::<F>(2).unwrap();
        let theta = f.evaluate_theta(&[-1.0, 0.0]).unwrap();
        assert_eq!(theta, vec![1.0, -1.0, 0.0]);
    }

    #[test]
    fn theta_dimension_mismatch() {
        let f = example1();
        assert!(matches!(
            f.evaluate_theta(&[1.0, 2.0]),
            Err(ModelError::Dimension { .. })
        ));
    }

    #[test]
    fn assemble_example1() {
        let f = example1();
        let a = f.assemble(&[1.0]).unwrap();
        let expect = CMatrix::<F>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Cx::new(1.0, 0.0),
            Cx::new(-1.0, 0.0),
            Cx::new(-1.0, 0.0),
        ]));
        assert_eq!(a, expect);
        let a0 = f.assemble(&[0.0]).unwrap();
        assert_eq!(a0[(0, 0)], Cx::new(0.0, 0.0));
        assert_eq!(a0[(1, 1)], Cx::new(-2.0, 0.0));
        assert_eq!(a0[(2, 2)], Cx::new(0.0, 0.0));
    }

    #[test]
    fn apply_matches_assemble() {
        let f = example1();
        let mut x = CVector::<F>::zeros(3);
        x[0] = Cx::new(1.0, 0.0);
        let y = f.apply(&[2.0], &x).unwrap();
        assert_eq!(y[0], Cx::new(2.0, 0.0));
        assert_eq!(y[1], Cx::new(0.0, 0.0));
    }

    #[test]
    fn apply_matches_assemble_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(13);
        for fam in [
            generators::xxz_family::<F>(4).unwrap(),
            generators::random_quadratic_family::<F>(40, 5).unwrap(),
        ] {
            let n = fam.n();
            for _ in 0..5 {
                let mu: Vec<F> = (0..fam.p())
                    .map(|k| {
                        let (lo, hi) = fam.domain().axis(k);
                        rng.gen_range(lo..hi)
                    })
                    .collect();
                let x = CVector::<F>::from_fn(n, |_, _| {
                    Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let fast = fam.apply(&mu, &x).unwrap();
                let dense = fam.assemble(&mu).unwrap() * &x;
                let denom = dense.norm().max(1e-30);
                assert!((&fast - &dense).norm() / denom <= 1e-12);
            }
        }
    }

    #[test]
    fn apply_dimension_mismatch() {
        let f = example1();
        let x = CVector::<F>::zeros(5);
        assert!(f.apply(&[1.0], &x).is_err());
    }

    #[test]
    fn chebyshev_three_points() {
        let domain = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let g = chebyshev_grid::<F>(&domain, &[3]).unwrap();
        assert_eq!(g.points.len(), 3);
        assert_eq!(g.points[0], vec![-1.0]);
        assert!(g.points[1][0].abs() < 1e-15);
        assert_eq!(g.points[2], vec![1.0]);
    }

    #[test]
    fn chebyshev_tensor_corners() {
        let domain = DomainBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = chebyshev_grid::<F>(&domain, &[3, 2]).unwrap();
        assert_eq!(g.points.len(), 6);
        for corner in [[-1.0, 0.0], [-1.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            assert!(g.points.iter().any(|p| p == &corner));
        }
    }

    #[test]
    fn chebyshev_paper_grid_size() {
        let domain = DomainBox::new(vec![-1.0, 0.0], vec![2.5, 3.5]).unwrap();
        let g = chebyshev_grid::<F>(&domain, &[35, 35]).unwrap();
        assert_eq!(g.points.len(), 1225);
        // 33 interior nodes strictly inside each axis interval
        let mut axis0: Vec<F> = g
            .points
            .iter()
            .map(|p| p[0])
            .filter(|&x| x > -1.0 && x < 2.5)
            .collect();
        axis0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        axis0.dedup();
        assert_eq!(axis0.len(), 33);
    }

    #[test]
    fn chebyshev_count_too_small() {
        let domain = DomainBox::new(vec![0.0], vec![1.0]).unwrap();
        assert!(chebyshev_grid::<F>(&domain, &[1]).is_err());
    }

    #[test]
    fn model_round_trip() {
        let f = generators::xxz_family::<F>(3).unwrap();
        let text = model_to_string(&f);
        let g = model_from_string::<F>(&text).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn model_round_trip_rational() {
        let f = generators::lagrange_rank_one_family::<F>(&[-0.5, 0.0, 0.7]).unwrap();
        let text = model_to_string(&f);
        let g = model_from_string::<F>(&text).unwrap();
        assert_eq!(f, g);
        assert!(g.has_rational_terms());
    }

    #[test]
    fn model_rejects_nonconjugate_pair() {
        let text = "2 1 1\n0 0.0 1.0\nterm monomial 1 1\nnnz 2\n0 1 1.0 0.5\n1 0 1.0 0.5\n";
        match model_from_string::<F>(text) {
            Err(ModelError::Hermitian { .. }) => {}
            other => panic!("expected Hermitian rejection, got {other:?}"),
        }
    }

    #[test]
    fn model_rejects_wrong_block_count() {
        // Declares Q=2 but provides three term blocks.
        let text = "2 2 1\n0 0.0 1.0\n\
                    term monomial 1 1\nnnz 1\n0 0 1.0 0.0\n\
                    term monomial 1 0\nnnz 1\n1 1 1.0 0.0\n\
                    term monomial 1 2\nnnz 1\n0 1 1.0 0.0\n";
        assert!(matches!(
            model_from_string::<F>(text),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn grid_round_trip() {
        let domain = DomainBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = chebyshev_grid::<F>(&domain, &[4, 3]).unwrap();
        let text = grid_to_string(&g);
        let h = grid_from_string::<F>(&text, 2).unwrap();
        assert_eq!(g.points, h.points);
    }

    #[test]
    fn grid_rejects_ragged_rows() {
        assert!(grid_from_string::<F>("1.0,2.0\n3.0\n", 2).is_err());
    }

    #[test]
    fn accumulate_folds_lower_triangle() {
        let m = HermitianSparse::<F>::accumulate(
            2,
            vec![(1, 0, Cx::new(0.0, 1.0)), (0, 1, Cx::new(0.0, -1.0))],
        )
        .unwrap();
        assert_eq!(m.entries(), &[(0, 1, Cx::new(0.0, -2.0))]);
    }
}
