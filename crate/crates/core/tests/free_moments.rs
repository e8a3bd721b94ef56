use entropy_lab_core::free::{
    catalan, free_clt_scaled_moment, log_energy, log_energy_line, reference_moment, tree_walk_count, MomentFamily,
    PlanarDensity,
};
use entropy_lab_core::clt::GridDensity;
use proptest::prelude::*;

const GRID: usize = 256;

fn disc() -> PlanarDensity {
    PlanarDensity::uniform_disc(1.0, GRID).unwrap()
}

#[test]
fn unit_disc_log_energy() {
    let chi = log_energy(&disc());
    assert!(!chi.degenerate);
    assert!((chi.total() + 0.25).abs() < 2e-3, "chi = {}", chi.total());
    assert!((chi.off_diagonal + 0.25).abs() < 2e-3, "off-diagonal = {}", chi.off_diagonal);
}

#[test]
fn semicircle_log_energy_on_the_line() {
    // semicircle of radius 2 has χ = -1/4 + log 1 = -1/4
    let f = GridDensity::from_fn(-2.2, 2.2, 1.0 / 256.0, |x| (4.0 - x * x).max(0.0).sqrt()).unwrap();
    let chi = log_energy_line(&f).total();
    assert!((chi + 0.25).abs() < 2e-3, "chi = {chi}");
}

/// Alternatives with the same second moment as the unit disc (∫|z|² = 1/2).
fn alternatives() -> Vec<(&'static str, PlanarDensity)> {
    let sigma2: f64 = 0.5;
    let s3 = 3f64.sqrt() / 2.0;
    let (ea, eb) = (1.2f64, (2.0f64 - 1.44).sqrt());
    let (r1, r2) = (0.5f64, 0.75f64.sqrt());
    let rp2 = 1.5f64;
    let build = |half: f64, f: Box<dyn Fn(f64, f64) -> f64>| PlanarDensity::from_density(half, GRID, 4, f).unwrap();
    vec![
        (
            "gaussian",
            build(
                3.0,
                Box::new(move |x, y| {
                    let r2 = x * x + y * y;
                    if r2 < 16.0 * sigma2 {
                        (-r2 / sigma2).exp()
                    } else {
                        0.0
                    }
                }),
            ),
        ),
        ("square", build(1.0, Box::new(move |x, y| (x.abs() < s3 && y.abs() < s3) as u8 as f64))),
        (
            "ellipse",
            build(1.25, Box::new(move |x, y| ((x / ea).powi(2) + (y / eb).powi(2) <= 1.0) as u8 as f64)),
        ),
        (
            "annulus",
            build(1.0, Box::new(move |x, y| {
                let r = (x * x + y * y).sqrt();
                (r >= r1 && r <= r2) as u8 as f64
            })),
        ),
        ("parabolic", build(1.3, Box::new(move |x, y| (1.0 - (x * x + y * y) / rp2).max(0.0)))),
    ]
}

#[test]
fn disc_maximizes_log_energy_at_fixed_second_moment() {
    let chi_disc = log_energy(&disc()).total();
    let m_disc = disc().second_moment();
    for (name, mu) in alternatives() {
        let m2 = mu.second_moment();
        assert!((m2 - m_disc).abs() < 5e-3, "{name}: second moment {m2}");
        let chi = log_energy(&mu).total();
        assert!(chi < chi_disc, "{name}: {chi} >= {chi_disc}");
    }
}

#[test]
fn log_energy_is_rotation_invariant() {
    let (a, b) = (1.0f64, 0.6f64);
    let ellipse = |theta: f64| {
        let (s, c) = theta.sin_cos();
        PlanarDensity::from_density(1.1, GRID, 4, move |x, y| {
            let u = c * x + s * y;
            let v = -s * x + c * y;
            ((u / a).powi(2) + (v / b).powi(2) <= 1.0) as u8 as f64
        })
        .unwrap()
    };
    let base = log_energy(&ellipse(0.0)).total();
    for theta in [0.3, 0.7854, 1.2] {
        let rotated = log_energy(&ellipse(theta)).total();
        assert!((rotated - base).abs() < 2e-3, "theta={theta}: {rotated} vs {base}");
    }
}

#[test]
fn log_energy_shifts_by_log_of_scale() {
    let small = PlanarDensity::uniform_disc(0.5, GRID).unwrap();
    let chi = log_energy(&small).total();
    assert!((chi - (-0.25 + 0.5f64.ln())).abs() < 2e-3, "{chi}");
}

#[test]
fn kesten_mckay_against_walks_up_to_twenty() {
    for d in [3u32, 4, 7, 12] {
        for k in (0..=20u32).step_by(2) {
            let q = reference_moment(MomentFamily::KestenMcKay(d), k);
            let w = tree_walk_count(d, k).unwrap() as f64;
            assert!((q - w).abs() <= 1e-10 * w, "d={d} k={k}: {q} vs {w}");
        }
    }
}

#[test]
fn free_clt_limit_is_catalan() {
    for m in 1..=6u32 {
        let c = catalan(m).unwrap() as f64;
        let v = free_clt_scaled_moment(4000, m).unwrap();
        assert!((v - c).abs() / c < 1e-2, "m={m}: {v} vs {c}");
    }
}

proptest! {
    #[test]
    fn catalan_recurrence_holds(m in 0u32..30) {
        let sum: u64 = (0..=m).map(|i| catalan(i).unwrap() * catalan(m - i).unwrap()).sum();
        prop_assert_eq!(catalan(m + 1).unwrap(), sum);
    }

    #[test]
    fn odd_walks_vanish(d in 2u32..40, half in 0u32..20) {
        prop_assert_eq!(tree_walk_count(d, 2 * half + 1).unwrap(), 0);
    }

    #[test]
    fn walk_counts_are_monotone_in_degree(d in 2u32..30, m in 1u32..10) {
        prop_assert!(tree_walk_count(d + 1, 2 * m).unwrap() > tree_walk_count(d, 2 * m).unwrap());
    }
}
