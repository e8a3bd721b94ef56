use entropy_lab_core::clt::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAUSS_ENTROPY: f64 = 1.418_938_533_204_672_7;
const STEP: f64 = 1.0 / 64.0;

fn unit_variance(f: impl Fn(f64) -> f64) -> GridDensity {
    let g = GridDensity::from_fn(-12.0, 12.0, STEP, f).unwrap();
    let centered = if g.mean().abs() > 1e-9 {
        let cells = (g.mean() / STEP).round() as i64;
        g.shifted(-cells)
    } else {
        g
    };
    let out = centered.dilate(1.0 / centered.variance().sqrt()).unwrap();
    assert!((out.variance() - 1.0).abs() < 1e-3, "variance {}", out.variance());
    out
}

#[test]
fn gaussian_has_the_largest_entropy_at_unit_variance() {
    let candidates: Vec<(&str, GridDensity)> = vec![
        ("uniform", unit_variance(|x| if x.abs() < 1.0 { 1.0 } else { 0.0 })),
        ("triangle", unit_variance(|x| (1.0 - x.abs()).max(0.0))),
        ("laplace", unit_variance(|x| (-x.abs()).exp())),
        ("logistic", unit_variance(|x| 1.0 / (x.cosh() + 1.0))),
        ("parabolic", unit_variance(|x| (1.0 - x * x).max(0.0))),
        ("cosine", unit_variance(|x| if x.abs() < 1.0 { (std::f64::consts::FRAC_PI_2 * x).cos() } else { 0.0 })),
        ("bimodal", unit_variance(|x| (-2.0 * (x - 1.0).powi(2)).exp() + (-2.0 * (x + 1.0).powi(2)).exp())),
        ("quartic", unit_variance(|x| (-x.powi(4)).exp())),
        ("sech", unit_variance(|x| 1.0 / x.cosh())),
        ("student5", unit_variance(|x| (1.0 + x * x / 5.0).powf(-3.0))),
    ];
    for (name, f) in candidates {
        let s = entropy(&f);
        assert!(s < GAUSS_ENTROPY, "{name}: {s}");
    }
    let g = GridDensity::gaussian(-12.0, 12.0, STEP, 0.0, 1.0).unwrap();
    assert!((entropy(&g) - GAUSS_ENTROPY).abs() < 1e-6);
}

#[test]
fn fisher_information_of_gaussians() {
    for sigma in [0.5, 1.0, 2.0] {
        let g = GridDensity::gaussian(-10.0 * sigma, 10.0 * sigma, sigma / 128.0, 0.0, sigma).unwrap();
        let fi = fisher_information(&g);
        assert!(!fi.floored);
        assert!((fi.value - 1.0 / (sigma * sigma)).abs() < 1e-3, "{sigma}: {}", fi.value);
    }
}

#[test]
fn doubling_from_uniform_climbs_toward_the_gaussian() {
    let mut f = GridDensity::uniform(-10.0, 10.0, 1.0 / 256.0, -3f64.sqrt(), 3f64.sqrt()).unwrap();
    let mut s = vec![entropy(&f)];
    assert!((s[0] - (2.0 * 3f64.sqrt()).ln()).abs() < 1e-3, "{}", s[0]);
    for _ in 0..4 {
        f = clt_step(&f).unwrap();
        s.push(entropy(&f));
    }
    assert!(s.windows(2).all(|w| w[1] > w[0]), "{s:?}");
    assert!(s[4] < GAUSS_ENTROPY && GAUSS_ENTROPY - s[4] < 1e-3, "{s:?}");
}

#[test]
fn heat_flow_adds_variance_and_composes() {
    let f = GridDensity::uniform(-12.0, 12.0, 1.0 / 64.0, -1.0, 1.0).unwrap();
    let one = heat_evolve(&heat_evolve(&f, 0.3).unwrap(), 0.4).unwrap();
    let both = heat_evolve(&f, 0.7).unwrap();
    let sup = one
        .values()
        .iter()
        .zip(both.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(sup < 1e-8, "{sup}");
    assert!((both.variance() - (f.variance() + 0.7)).abs() < 1e-5);
    let mut last = entropy(&f);
    for t in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let s = entropy(&heat_evolve(&f, t).unwrap());
        assert!(s > last);
        last = s;
    }
}

#[test]
fn de_bruijn_refines() {
    let uniform = |dx: f64| GridDensity::uniform(-8.0, 8.0, dx, -3f64.sqrt(), 3f64.sqrt()).unwrap();
    let coarse = de_bruijn_residual(&uniform(1.0 / 256.0), 0.5, 2e-3).unwrap();
    let fine = de_bruijn_residual(&uniform(1.0 / 512.0), 0.5, 1e-3).unwrap();
    assert!(fine < 1e-3, "{fine}");
    assert!(fine < coarse);
    let gauss = GridDensity::gaussian(-10.0, 10.0, 1.0 / 512.0, 0.0, 1.0).unwrap();
    assert!(de_bruijn_residual(&gauss, 1.0, 1e-3).unwrap() < 1e-4);
}

fn random_smooth(rng: &mut ChaCha8Rng) -> GridDensity {
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(-1.5..1.5),
                rng.random_range(0.3..1.0),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let f = GridDensity::from_fn(-10.0, 10.0, 1.0 / 64.0, |x| {
        bumps
            .iter()
            .map(|(m, s, w)| w * (-0.5 * ((x - m) / s).powi(2)).exp())
            .sum()
    })
    .unwrap();
    let m = f.mean();
    GridDensity::from_fn(-10.0, 10.0, 1.0 / 64.0, |x| {
        bumps
            .iter()
            .map(|(mu, s, w)| w * (-0.5 * ((x + m - mu) / s).powi(2)).exp())
            .sum()
    })
    .unwrap()
}

#[test]
fn doubling_never_lowers_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let f = random_smooth(&mut rng);
        assert!(f.mean().abs() < 1e-6);
        let g = clt_step(&f).unwrap();
        assert!(entropy(&g) >= entropy(&f) - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_adds_means_and_variances(
        m1 in -1.0f64..1.0, s1 in 0.2f64..1.0, m2 in -1.0f64..1.0, s2 in 0.2f64..1.0,
    ) {
        let f = GridDensity::gaussian(-6.0, 6.0, 1.0 / 32.0, m1, s1).unwrap();
        let g = GridDensity::uniform(-6.0, 6.0, 1.0 / 32.0, m2 - s2, m2 + s2).unwrap();
        let h = convolve(&f, &g).unwrap();
        prop_assert!((h.mass() - 1.0).abs() < 1e-12);
        prop_assert!((h.mean() - f.mean() - g.mean()).abs() < 1e-9);
        prop_assert!((h.variance() - f.variance() - g.variance()).abs() < 1e-6);
    }

    #[test]
    fn fisher_information_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..64).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = GridDensity::normalized(-1.0, 1.0 / 32.0, values).unwrap();
        prop_assert!(fisher_information(&f).value >= 0.0);
    }
}
