//! Configuration energy `I_N` and its gradient.

use rayon::prelude::*;

use super::{ConfinementPotential, GasModel, Profile, COINCIDENCE};
use crate::error::{LabError, Result};
use crate::measures::ParticleConfiguration;

const COINCIDENCE_SQ: f64 = COINCIDENCE * COINCIDENCE;

/// Value of `I_N`; `+∞` with the offending pair when two particles coincide
/// under a singular kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub value: f64,
    pub coincident_pair: Option<(usize, usize)>,
}

/// Energy together with the flat gradient (`N·d` entries, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub gradient: Vec<f64>,
}

/// `(k(r), k'(r)/r)` from the squared distance.
trait Pair: Sync {
    /// Set when the energy is `log_scale() · ln r²`; the loop then multiplies
    /// squared distances and takes one logarithm per batch.
    const BATCHED_LOG: bool = false;
    fn eval(&self, r2: f64) -> (f64, f64);
    fn log_scale(&self) -> f64 {
        0.0
    }
}

struct NegLinear;
struct Log(f64);
struct InverseDistance;
struct InverseSquare;
struct Power(f64);

impl Pair for NegLinear {
    #[inline(always)]
    fn eval(&self, r2: f64) -> (f64, f64) {
        let r = r2.sqrt();
        (-r, if r > 0.0 { -1.0 / r } else { 0.0 })
    }
}

impl Pair for Log {
    const BATCHED_LOG: bool = true;
    fn log_scale(&self) -> f64 {
        -0.5 * self.0
    }
    #[inline(always)]
    fn eval(&self, r2: f64) -> (f64, f64) {
        (-0.5 * self.0 * r2.ln(), -self.0 / r2)
    }
}

impl Pair for InverseDistance {
    #[inline(always)]
    fn eval(&self, r2: f64) -> (f64, f64) {
        let k = 1.0 / r2.sqrt();
        (k, -k * k * k)
    }
}

impl Pair for InverseSquare {
    #[inline(always)]
    fn eval(&self, r2: f64) -> (f64, f64) {
        let k = 1.0 / r2;
        (k, -2.0 * k * k)
    }
}

impl Pair for Power {
    #[inline(always)]
    fn eval(&self, r2: f64) -> (f64, f64) {
        let k = r2.powf(-0.5 * self.0);
        (k, -self.0 * k / r2)
    }
}

/// Pair part `Σ_{i<j} k(|x_i - x_j|)`; adds `Σ_j (k'/r)(x_i - x_j)` to `grad`
/// when present. Sequential mode visits each unordered pair once in a fixed
/// order; parallel mode sums full rows per particle and halves the energy.
fn pair_sums<P: Pair, const D: usize>(
    pair: &P,
    singular: bool,
    x: &[f64],
    grad: Option<&mut [f64]>,
    parallel: bool,
) -> std::result::Result<f64, (usize, usize)> {
    let n = x.len() / D;
    if parallel {
        return pair_rows::<P, D>(pair, singular, x, grad);
    }
    let mut energy = 0.0;
    match grad {
        Some(g) => {
            for i in 0..n {
                let xi: [f64; D] = std::array::from_fn(|k| x[i * D + k]);
                let mut gi = [0.0; D];
                let mut row = 0.0;
                let mut prod = 1.0f64;
                for j in (i + 1)..n {
                    let mut diff = [0.0; D];
                    let mut r2 = 0.0;
                    for k in 0..D {
                        diff[k] = xi[k] - x[j * D + k];
                        r2 += diff[k] * diff[k];
                    }
                    if singular && r2 < COINCIDENCE_SQ {
                        return Err((i, j));
                    }
                    let (e, f) = pair.eval(r2);
                    if P::BATCHED_LOG {
                        prod *= r2;
                        if !(prod > 1e-250 && prod < 1e250) {
                            row += prod.ln();
                            prod = 1.0;
                        }
                    } else {
                        row += e;
                    }
                    for k in 0..D {
                        gi[k] += f * diff[k];
                        g[j * D + k] -= f * diff[k];
                    }
                }
                if P::BATCHED_LOG {
                    row = pair.log_scale() * (row + prod.ln());
                }
                energy += row;
                for k in 0..D {
                    g[i * D + k] += gi[k];
                }
            }
        }
        None => {
            for i in 0..n {
                let xi: [f64; D] = std::array::from_fn(|k| x[i * D + k]);
                let mut row = 0.0;
                for j in (i + 1)..n {
                    let mut r2 = 0.0;
                    for k in 0..D {
                        let dk = xi[k] - x[j * D + k];
                        r2 += dk * dk;
                    }
                    if singular && r2 < COINCIDENCE_SQ {
                        return Err((i, j));
                    }
                    row += pair.eval(r2).0;
                }
                energy += row;
            }
        }
    }
    Ok(energy)
}

fn pair_rows<P: Pair, const D: usize>(
    pair: &P,
    singular: bool,
    x: &[f64],
    grad: Option<&mut [f64]>,
) -> std::result::Result<f64, (usize, usize)> {
    let n = x.len() / D;
    let row = |i: usize, gi: &mut [f64]| -> std::result::Result<f64, (usize, usize)> {
        let xi: [f64; D] = std::array::from_fn(|k| x[i * D + k]);
        let mut e = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut diff = [0.0; D];
            let mut r2 = 0.0;
            for k in 0..D {
                diff[k] = xi[k] - x[j * D + k];
                r2 += diff[k] * diff[k];
            }
            if singular && r2 < COINCIDENCE_SQ {
                return Err((i.min(j), i.max(j)));
            }
            let (v, f) = pair.eval(r2);
            e += v;
            for k in 0..D {
                gi[k] += f * diff[k];
            }
        }
        Ok(e)
    };
    let rows: Vec<std::result::Result<f64, (usize, usize)>> = match grad {
        Some(g) => g.par_chunks_mut(D).enumerate().map(|(i, gi)| row(i, gi)).collect(),
        None => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut scratch = [0.0; D];
                row(i, &mut scratch)
            })
            .collect(),
    };
    let mut energy = 0.0;
    for r in rows {
        energy += r?;
    }
    Ok(0.5 * energy)
}

fn dispatch_dim<P: Pair>(
    pair: &P,
    singular: bool,
    d: usize,
    x: &[f64],
    grad: Option<&mut [f64]>,
    parallel: bool,
) -> std::result::Result<f64, (usize, usize)> {
    match d {
        1 => pair_sums::<P, 1>(pair, singular, x, grad, parallel),
        2 => pair_sums::<P, 2>(pair, singular, x, grad, parallel),
        3 => pair_sums::<P, 3>(pair, singular, x, grad, parallel),
        4 => pair_sums::<P, 4>(pair, singular, x, grad, parallel),
        5 => pair_sums::<P, 5>(pair, singular, x, grad, parallel),
        6 => pair_sums::<P, 6>(pair, singular, x, grad, parallel),
        7 => pair_sums::<P, 7>(pair, singular, x, grad, parallel),
        8 => pair_sums::<P, 8>(pair, singular, x, grad, parallel),
        _ => pair_sums_dyn(pair, singular, d, x, grad),
    }
}

fn pair_sums_dyn<P: Pair>(
    pair: &P,
    singular: bool,
    d: usize,
    x: &[f64],
    mut grad: Option<&mut [f64]>,
) -> std::result::Result<f64, (usize, usize)> {
    let n = x.len() / d;
    let mut energy = 0.0;
    let mut diff = vec![0.0; d];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut r2 = 0.0;
            for k in 0..d {
                diff[k] = x[i * d + k] - x[j * d + k];
                r2 += diff[k] * diff[k];
            }
            if singular && r2 < COINCIDENCE_SQ {
                return Err((i, j));
            }
            let (e, f) = pair.eval(r2);
            energy += e;
            if let Some(g) = grad.as_deref_mut() {
                for k in 0..d {
                    g[i * d + k] += f * diff[k];
                    g[j * d + k] -= f * diff[k];
                }
            }
        }
    }
    Ok(energy)
}

fn confinement(v: &ConfinementPotential, d: usize, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    match grad {
        Some(g) => {
            for (p, gp) in x.chunks_exact(d).zip(g.chunks_exact_mut(d)) {
                let r2: f64 = p.iter().map(|c| c * c).sum();
                let r = r2.sqrt();
                total += match v {
                    ConfinementPotential::Quadratic(c) => c * r2,
                    _ => v.radial(r),
                };
                let f = v.gradient_factor(r);
                for k in 0..d {
                    gp[k] = f * p[k];
                }
            }
        }
        None => {
            for p in x.chunks_exact(d) {
                total += v.eval(p);
            }
        }
    }
    total
}

/// `I_N` at flat coordinates, writing `∇I_N` into `grad` when given.
/// `Err((i, j))` reports a coincident pair under a singular kernel.
pub(crate) fn evaluate(
    model: &GasModel,
    d: usize,
    x: &[f64],
    mut grad: Option<&mut [f64]>,
    parallel: bool,
) -> std::result::Result<f64, (usize, usize)> {
    let n = (x.len() / d) as f64;
    let v_sum = confinement(&model.potential, d, x, grad.as_deref_mut());
    if let Some(g) = grad.as_deref_mut() {
        let s = 1.0 / n;
        g.iter_mut().for_each(|v| *v *= s);
    }
    // the pair gradient is accumulated unscaled into a separate buffer so that
    // the 1/N and 1/N² factors are applied once
    let mut pair_grad = grad.as_ref().map(|g| vec![0.0; g.len()]);
    let singular = model.kernel.is_singular();
    let pg = pair_grad.as_deref_mut();
    let w_sum = match model.kernel.profile() {
        Profile::Zero => 0.0,
        Profile::NegLinear => dispatch_dim(&NegLinear, false, d, x, pg, parallel)?,
        Profile::Log(s) => dispatch_dim(&Log(s), singular, d, x, pg, parallel)?,
        Profile::Power(p) if p == 1.0 => dispatch_dim(&InverseDistance, singular, d, x, pg, parallel)?,
        Profile::Power(p) if p == 2.0 => dispatch_dim(&InverseSquare, singular, d, x, pg, parallel)?,
        Profile::Power(p) => dispatch_dim(&Power(p), singular, d, x, pg, parallel)?,
    };
    if let (Some(g), Some(pg)) = (grad, pair_grad) {
        let s = 1.0 / (n * n);
        for (a, b) in g.iter_mut().zip(pg) {
            *a += s * b;
        }
    }
    Ok(v_sum / n + w_sum / (n * n))
}

fn check_dimension(model: &GasModel, config: &ParticleConfiguration) -> Result<()> {
    if config.dimension() != model.dimension {
        return Err(LabError::usage(format!(
            "configuration has dimension {} but the model has dimension {}",
            config.dimension(),
            model.dimension
        )));
    }
    if config.len() < 2 {
        return Err(LabError::usage("configuration needs at least two particles"));
    }
    Ok(())
}

/// `I_N = (1/N) Σ V(x_i) + (1/N²) Σ_{i<j} W(x_i, x_j)` with N the size of the
/// configuration.
pub fn configuration_energy(model: &GasModel, config: &ParticleConfiguration) -> Result<Energy> {
    check_dimension(model, config)?;
    Ok(match evaluate(model, model.dimension, config.coords(), None, false) {
        Ok(value) => Energy {
            value,
            coincident_pair: None,
        },
        Err(pair) => Energy {
            value: f64::INFINITY,
            coincident_pair: Some(pair),
        },
    })
}

/// `∇_{x_i} I_N` for every particle.
pub fn energy_gradient(model: &GasModel, config: &ParticleConfiguration) -> Result<Vec<Vec<f64>>> {
    let eval = energy_gradient_with(model, config, false)?;
    Ok(eval.gradient.chunks_exact(model.dimension).map(<[f64]>::to_vec).collect())
}

/// Energy and flat gradient; `parallel` sums full rows per particle on the
/// current rayon pool (agrees with the sequential order to rounding only).
pub fn energy_gradient_with(model: &GasModel, config: &ParticleConfiguration, parallel: bool) -> Result<Evaluation> {
    check_dimension(model, config)?;
    let mut gradient = vec![0.0; config.coords().len()];
    match evaluate(model, model.dimension, config.coords(), Some(&mut gradient), parallel) {
        Ok(energy) => Ok(Evaluation { energy, gradient }),
        Err((i, j)) => Err(LabError::domain(format!(
            "singular gradient: particles {i} and {j} coincide"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::InteractionKernel;

    fn ginibre(n: usize) -> GasModel {
        GasModel::new(
            2,
            n,
            (n * n) as f64,
            ConfinementPotential::Quadratic(1.0),
            InteractionKernel::Log2d(2.0),
        )
        .unwrap()
    }

    #[test]
    fn two_point_hand_value() {
        let c = ParticleConfiguration::new(2, &[vec![0.0, 0.0], vec![1.0, 0.0]], 0, 0).unwrap();
        let e = configuration_energy(&ginibre(2), &c).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.coincident_pair, None);
    }

    #[test]
    fn coincidence_sentinel() {
        let c = ParticleConfiguration::new(2, &[vec![0.3, 0.1], vec![1.0, 0.0], vec![0.3, 0.1]], 0, 0).unwrap();
        let e = configuration_energy(&ginibre(3), &c).unwrap();
        assert_eq!(e.value, f64::INFINITY);
        assert_eq!(e.coincident_pair, Some((0, 2)));
        assert!(energy_gradient(&ginibre(3), &c).is_err());
    }

    #[test]
    fn coulomb_pair_gradient_in_three_dimensions() {
        let model = GasModel::new(
            3,
            2,
            4.0,
            ConfinementPotential::Quadratic(1.0),
            InteractionKernel::Coulomb(3),
        )
        .unwrap();
        let a = [0.2, -0.1, 0.4];
        let b = [-0.3, 0.5, 0.1];
        let c = ParticleConfiguration::new(3, &[a.to_vec(), b.to_vec()], 0, 0).unwrap();
        let g = energy_gradient(&model, &c).unwrap();
        let r = crate::measures::norm_diff(&a, &b);
        for k in 0..3 {
            let expected = 2.0 * a[k] / 2.0 - (a[k] - b[k]) / (4.0 * r.powi(3));
            assert!((g[0][k] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn mirrored_pair_has_mirrored_gradients() {
        let model = ginibre(2);
        let c = ParticleConfiguration::new(2, &[vec![0.3, -0.7], vec![-0.3, 0.7]], 0, 0).unwrap();
        let g = energy_gradient(&model, &c).unwrap();
        assert_eq!(g[0][0], -g[1][0]);
        assert_eq!(g[0][1], -g[1][1]);
    }
}
