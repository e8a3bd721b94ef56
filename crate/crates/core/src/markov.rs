//! Finite-state Markov chains: invariant laws, relative entropy (the discrete
//! Helmholtz free energy), its decay along the evolution, and the first and
//! second time derivatives of the free energy for continuous-time chains.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const SUPPORT_EPS: f64 = 1e-14;
const INVARIANT_TOL: f64 = 1e-10;
const DENSE_SOLVE_MAX_STATES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// Row-stochastic transition matrix P.
    Kernel,
    /// Zero-row-sum generator L with non-negative off-diagonal rates.
    Generator,
}

/// A Markov kernel or generator on a finite labelled state set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    labels: Vec<String>,
    kind: ChainKind,
    matrix: Vec<f64>,
}

impl FiniteChain {
    pub fn new(kind: ChainKind, rows: &[Vec<f64>]) -> Result<Self> {
        let labels = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::with_labels(kind, labels, rows)
    }

    pub fn with_labels(kind: ChainKind, labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        if s < 2 {
            return Err(LabError::usage("a chain needs at least two states"));
        }
        if labels.len() != s {
            return Err(LabError::usage("one label per state is required"));
        }
        let mut matrix = Vec::with_capacity(s * s);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != s {
                return Err(LabError::usage(format!("row {i} has {} entries, expected {s}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LabError::usage(format!("entry ({i},{j}) is not finite")));
                }
                let off_diagonal = i != j;
                if v < 0.0 && (kind == ChainKind::Kernel || off_diagonal) {
                    return Err(LabError::usage(format!("entry ({i},{j}) = {v} is negative")));
                }
            }
            let sum: f64 = row.iter().sum();
            let target = match kind {
                ChainKind::Kernel => 1.0,
                ChainKind::Generator => 0.0,
            };
            if (sum - target).abs() > ROW_SUM_TOL {
                return Err(LabError::usage(format!(
                    "row {i} sums to {sum}, expected {target}"
                )));
            }
            matrix.extend_from_slice(row);
        }
        Ok(Self { labels, kind, matrix })
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = self.size();
        &self.matrix[i * s..(i + 1) * s]
    }

    /// Row vector times matrix: `(v M)(y) = Σ_x v(x) M(x, y)`.
    fn left_apply(&self, v: &[f64]) -> Vec<f64> {
        let s = self.size();
        let mut out = vec![0.0; s];
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(x)) {
                *o += vx * m;
            }
        }
        out
    }

    /// Matrix times column vector: `(M f)(x) = Σ_y M(x, y) f(y)`.
    fn right_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.size())
            .map(|x| self.row(x).iter().zip(f).map(|(m, fy)| m * fy).sum())
            .collect()
    }

    fn require(&self, kind: ChainKind, op: &str) -> Result<()> {
        if self.kind != kind {
            return Err(LabError::usage(format!("{op} requires a {kind:?} chain")));
        }
        Ok(())
    }
}

/// A probability vector over the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LabError::usage("probabilities must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(LabError::usage(format!("probabilities sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Normalizes non-negative weights to unit mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LabError::usage("weights must be non-negative with positive total"));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn point_mass(size: usize, state: usize) -> Result<Self> {
        if state >= size {
            return Err(LabError::usage(format!("state {state} out of range 0..{size}")));
        }
        let mut w = vec![0.0; size];
        w[state] = 1.0;
        Ok(Self(w))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(1 - eps) * self + eps * other`, used to move a law off the boundary
    /// of the simplex before evaluating the derivative formulas.
    pub fn mix(&self, other: &ProbVector, eps: f64) -> ProbVector {
        ProbVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - eps) * a + eps * b)
                .collect(),
        )
    }

    fn renormalized(mut w: Vec<f64>) -> Self {
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);
        Self(w)
    }
}

/// Strong connectivity of the support graph (entries above 1e-14).
fn check_irreducible(chain: &FiniteChain) -> Result<()> {
    let s = chain.size();
    let edge = |i: usize, j: usize| i != j && chain.entry(i, j) > SUPPORT_EPS;
    let reach = |forward: bool| {
        let mut seen = vec![false; s];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..s {
                let linked = if forward { edge(i, j) } else { edge(j, i) };
                if linked && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    let unreachable: Vec<&str> = (0..s)
        .filter(|&i| !fwd[i])
        .map(|i| chain.labels[i].as_str())
        .collect();
    if !unreachable.is_empty() {
        return Err(LabError::Structural(format!(
            "reducible chain: states {{{}}} are unreachable from state {}",
            unreachable.join(", "),
            chain.labels[0]
        )));
    }
    let trapped: Vec<&str> = (0..s)
        .filter(|&i| !bwd[i])
        .map(|i| chain.labels[i].as_str())
        .collect();
    if !trapped.is_empty() {
        return Err(LabError::Structural(format!(
            "reducible chain: state {} is unreachable from states {{{}}}",
            chain.labels[0],
            trapped.join(", ")
        )));
    }
    Ok(())
}

fn invariance_residual(chain: &FiniteChain, mu: &[f64]) -> f64 {
    let image = chain.left_apply(mu);
    match chain.kind {
        ChainKind::Kernel => image.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum(),
        ChainKind::Generator => image.iter().map(|a| a.abs()).sum(),
    }
}

/// Invariant law of an irreducible chain.
pub fn invariant_measure(chain: &FiniteChain) -> Result<ProbVector> {
    check_irreducible(chain)?;
    let s = chain.size();
    let mut mu = if s <= DENSE_SOLVE_MAX_STATES {
        dense_invariant(chain)?
    } else {
        power_invariant(chain)
    };
    let mut residual = invariance_residual(chain, &mu);
    if residual > INVARIANT_TOL {
        // one sweep of power iteration polishes a slightly inaccurate solve
        let lazy = uniformized(chain);
        for _ in 0..1000 {
            mu = lazy.left_apply(&mu);
            residual = invariance_residual(chain, &mu);
            if residual <= INVARIANT_TOL {
                break;
            }
        }
    }
    if residual > INVARIANT_TOL || mu.iter().any(|&m| !(m > 0.0)) {
        return Err(LabError::Numeric {
            message: "invariant measure solver did not converge".into(),
            residual,
        });
    }
    Ok(ProbVector(mu))
}

fn dense_invariant(chain: &FiniteChain) -> Result<Vec<f64>> {
    let s = chain.size();
    // rows of A are the balance equations: (P^T - I) mu = 0 or L^T mu = 0
    let mut a = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            let mut v = chain.entry(j, i);
            if chain.kind == ChainKind::Kernel && i == j {
                v -= 1.0;
            }
            a[(i, j)] = v;
        }
    }
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(s);
    b[s - 1] = 1.0;
    let solution = a.lu().solve(&b).ok_or_else(|| LabError::Numeric {
        message: "singular balance system".into(),
        residual: f64::NAN,
    })?;
    Ok(ProbVector::renormalized(solution.iter().copied().collect()).0)
}

fn power_invariant(chain: &FiniteChain) -> Vec<f64> {
    let lazy = uniformized(chain);
    let s = chain.size();
    let mut mu = vec![1.0 / s as f64; s];
    for _ in 0..1_000_000 {
        let next = lazy.left_apply(&mu);
        let delta: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if delta < 1e-15 {
            break;
        }
    }
    mu
}

/// Aperiodic kernel with the same invariant law: `(I + P)/2` for kernels,
/// `I + L/q` for generators.
fn uniformized(chain: &FiniteChain) -> FiniteChain {
    let s = chain.size();
    let mut matrix = chain.matrix.clone();
    match chain.kind {
        ChainKind::Kernel => {
            for i in 0..s {
                for j in 0..s {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    matrix[i * s + j] = 0.5 * (delta + chain.entry(i, j));
                }
            }
        }
        ChainKind::Generator => {
            let q = uniformization_rate(chain);
            for i in 0..s {
                for j in 0..s {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    matrix[i * s + j] = delta + chain.entry(i, j) / q;
                }
            }
        }
    }
    FiniteChain {
        labels: chain.labels.clone(),
        kind: ChainKind::Kernel,
        matrix,
    }
}

fn uniformization_rate(chain: &FiniteChain) -> f64 {
    let q = (0..chain.size())
        .map(|i| -chain.entry(i, i))
        .fold(0.0_f64, f64::max);
    if q > 0.0 {
        q
    } else {
        1.0
    }
}

/// `Σ_x Φ(μ(x)/ref(x)) ref(x)` with `Φ(u) = u log u`; `+∞` when μ is not
/// absolutely continuous with respect to `ref`.
pub fn relative_entropy(mu: &ProbVector, reference: &ProbVector) -> f64 {
    let mut sum = 0.0;
    for (&m, &r) in mu.0.iter().zip(&reference.0) {
        if m == 0.0 {
            continue;
        }
        if r == 0.0 {
            return f64::INFINITY;
        }
        sum += m * (m / r).ln();
    }
    sum.max(0.0)
}

/// `Σ_x |μ(x) - ν(x)|`.
pub fn total_variation(mu: &ProbVector, nu: &ProbVector) -> f64 {
    mu.0.iter().zip(&nu.0).map(|(a, b)| (a - b).abs()).sum()
}

/// Free energy `KL(μ₀ P^n ‖ μ_*)` for `n = 0..=steps`.
pub fn free_energy_trajectory(chain: &FiniteChain, mu0: &ProbVector, steps: usize) -> Result<Vec<f64>> {
    chain.require(ChainKind::Kernel, "free_energy_trajectory")?;
    check_len(chain, mu0)?;
    if steps == 0 {
        return Err(LabError::usage("steps must be positive"));
    }
    let invariant = invariant_measure(chain)?;
    let mut mu = mu0.0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(relative_entropy(mu0, &invariant));
    for _ in 0..steps {
        mu = chain.left_apply(&mu);
        out.push(relative_entropy(&ProbVector(mu.clone()), &invariant));
    }
    Ok(out)
}

/// One step of a kernel: `μ ↦ μP`.
pub fn kernel_step(chain: &FiniteChain, mu: &ProbVector) -> Result<ProbVector> {
    chain.require(ChainKind::Kernel, "kernel_step")?;
    check_len(chain, mu)?;
    Ok(ProbVector::renormalized(chain.left_apply(&mu.0)))
}

fn check_len(chain: &FiniteChain, mu: &ProbVector) -> Result<()> {
    if mu.len() != chain.size() {
        return Err(LabError::usage(format!(
            "law has {} entries but the chain has {} states",
            mu.len(),
            chain.size()
        )));
    }
    Ok(())
}

/// `μ₀ exp(tL)` by uniformization: Poisson(qt)-weighted powers of `I + L/q`.
/// Long horizons are split so that each piece has `qt <= 32`.
pub fn ct_evolve(chain: &FiniteChain, mu0: &ProbVector, t: f64) -> Result<ProbVector> {
    chain.require(ChainKind::Generator, "ct_evolve")?;
    check_len(chain, mu0)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::usage(format!("evolution time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(mu0.clone());
    }
    let q = uniformization_rate(chain);
    let kernel = uniformized(chain);
    let pieces = ((q * t) / 32.0).ceil().max(1.0) as usize;
    let tau = t / pieces as f64;
    let mut mu = mu0.0.clone();
    for _ in 0..pieces {
        mu = uniformization_piece(&kernel, &mu, q * tau);
    }
    Ok(ProbVector::renormalized(mu))
}

fn uniformization_piece(kernel: &FiniteChain, mu: &[f64], rate: f64) -> Vec<f64> {
    let mut weight = (-rate).exp();
    let mut power = mu.to_vec();
    let mut out: Vec<f64> = power.iter().map(|p| weight * p).collect();
    let mut k = 0usize;
    loop {
        k += 1;
        power = kernel.left_apply(&power);
        weight *= rate / k as f64;
        for (o, p) in out.iter_mut().zip(&power) {
            *o += weight * p;
        }
        // geometric bound on the remaining Poisson tail once k exceeds the mean
        let next = (k + 1) as f64;
        if next > rate + 1.0 && weight * rate / (next - rate) < 1e-17 {
            break;
        }
    }
    out
}

/// First and second time derivatives of `t ↦ Σ Φ(g_t) μ_*` at the law `mu_t`,
/// where `g_t = μ_t / μ_*`:
///
/// first  = `Σ_x Φ'(g)(x) (L*g)(x) μ_*(x)`
/// second = `Σ_x [g LL log g + (L*g)²/g](x) μ_*(x)`
///
/// with `L*` the adjoint of `L` in `L²(μ_*)`.
pub fn free_energy_derivatives(chain: &FiniteChain, mu_t: &ProbVector) -> Result<(f64, f64)> {
    chain.require(ChainKind::Generator, "free_energy_derivatives")?;
    check_len(chain, mu_t)?;
    if let Some(x) = mu_t.0.iter().position(|&m| !(m > 0.0)) {
        return Err(LabError::domain(format!(
            "law vanishes at state {}; mix in a small multiple (e.g. 1e-12) of the invariant law first",
            chain.labels[x]
        )));
    }
    let inv = invariant_measure(chain)?;
    let star = &inv.0;
    let g: Vec<f64> = mu_t.0.iter().zip(star).map(|(m, s)| m / s).collect();
    // (L*g)(x) = Σ_y μ_*(y) L(y,x) g(y) / μ_*(x) = (μ_t L)(x) / μ_*(x)
    let flux = chain.left_apply(&mu_t.0);
    let adj_g: Vec<f64> = flux.iter().zip(star).map(|(f, s)| f / s).collect();
    let log_g: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let l_log_g = chain.right_apply(&log_g);
    let ll_log_g = chain.right_apply(&l_log_g);

    let mut first = 0.0;
    let mut second = 0.0;
    for x in 0..chain.size() {
        first += (1.0 + log_g[x]) * adj_g[x] * star[x];
        second += (g[x] * ll_log_g[x] + adj_g[x] * adj_g[x] / g[x]) * star[x];
    }
    Ok((first, second))
}

/// Centered finite differences of `t ↦ KL(μ₀ e^{tL} ‖ μ_*)` at `t`, with
/// step `h <= t`. The independent check on [`free_energy_derivatives`].
pub fn finite_difference_derivatives(
    chain: &FiniteChain,
    mu0: &ProbVector,
    t: f64,
    h: f64,
) -> Result<(f64, f64)> {
    if !(h > 0.0 && h <= t) {
        return Err(LabError::usage("finite difference step must satisfy 0 < h <= t"));
    }
    let inv = invariant_measure(chain)?;
    let a = |s: f64| -> Result<f64> { Ok(relative_entropy(&ct_evolve(chain, mu0, s)?, &inv)) };
    let (minus, mid, plus) = (a(t - h)?, a(t)?, a(t + h)?);
    Ok(((plus - minus) / (2.0 * h), (plus - 2.0 * mid + minus) / (h * h)))
}

/// Generator of the M/M/∞ queue truncated to `{0, …, K}`: up-rate λ
/// (suppressed at K), down-rate `xμ`.
pub fn mm_infinity_generator(lambda: f64, mu: f64, truncation: usize) -> Result<FiniteChain> {
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(LabError::usage("arrival and service rates must be positive"));
    }
    if truncation < 2 {
        return Err(LabError::usage("truncation level must be at least 2"));
    }
    let s = truncation + 1;
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|x| {
            let mut row = vec![0.0; s];
            if x + 1 < s {
                row[x + 1] = lambda;
            }
            if x > 0 {
                row[x - 1] = x as f64 * mu;
            }
            row[x] = -row.iter().sum::<f64>();
            row
        })
        .collect();
    FiniteChain::new(ChainKind::Generator, &rows)
}

/// Least-squares estimate of ρ in `log A(t) ≈ c - 2ρt` from samples spaced by
/// `dt`. A diagnostic only.
pub fn decay_rate_regression(trajectory: &[f64], dt: f64) -> Result<f64> {
    if trajectory.len() < 3 {
        return Err(LabError::usage("decay regression needs at least three samples"));
    }
    if !(dt > 0.0) {
        return Err(LabError::usage("dt must be positive"));
    }
    if trajectory.iter().any(|&v| !(v > 0.0)) {
        return Err(LabError::domain("decay regression needs strictly positive values"));
    }
    let n = trajectory.len() as f64;
    let xs: Vec<f64> = (0..trajectory.len()).map(|i| i as f64 * dt).collect();
    let ys: Vec<f64> = trajectory.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(-(sxy / sxx) / 2.0)
}

/// Parses the chain file format: `kind=kernel|generator`, `S=<n>`, then S
/// rows of S numbers.
pub fn parse_chain(text: &str) -> Result<FiniteChain> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (ln, kind_line) = lines.next().ok_or_else(|| LabError::parse(1, "empty chain file"))?;
    let kind = match kind_line.trim() {
        "kind=kernel" => ChainKind::Kernel,
        "kind=generator" => ChainKind::Generator,
        other => return Err(LabError::parse(ln + 1, format!("expected kind=kernel|generator, got {other}"))),
    };
    let (ln, size_line) = lines.next().ok_or_else(|| LabError::parse(2, "missing S=<n> line"))?;
    let s: usize = size_line
        .trim()
        .strip_prefix("S=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LabError::parse(ln + 1, "expected S=<n>"))?;
    let mut rows = Vec::with_capacity(s);
    for (ln, line) in lines {
        let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|_| LabError::parse(ln + 1, "bad number in matrix row"))?;
        if row.len() != s {
            return Err(LabError::parse(ln + 1, format!("expected {s} entries")));
        }
        rows.push(row);
    }
    if rows.len() != s {
        return Err(LabError::parse(1, format!("expected {s} rows, found {}", rows.len())));
    }
    FiniteChain::new(kind, &rows)
}

pub fn write_chain(chain: &FiniteChain) -> String {
    let mut out = String::new();
    let kind = match chain.kind {
        ChainKind::Kernel => "kernel",
        ChainKind::Generator => "generator",
    };
    let _ = writeln!(out, "kind={kind}");
    let _ = writeln!(out, "S={}", chain.size());
    for i in 0..chain.size() {
        let row: Vec<String> = chain.row(i).iter().map(|&v| crate::measures::fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}
