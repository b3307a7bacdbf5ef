use aqec::fidelity::break_even_mean_fidelity;
use aqec::hardware::*;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn both_hamiltonians_agree_and_beat_break_even() {
    let base = HardwareConfig::default();
    let h0 = simulate_hardware(&HardwareConfig { variant: HardwareVariant::Heff0, ..base.clone() }).unwrap();
    let h1 = simulate_hardware(&HardwareConfig { variant: HardwareVariant::Heff1, ..base.clone() }).unwrap();
    let gap = max_gap(&h0.mean_fidelity, &h1.mean_fidelity);
    assert!(gap < 0.02, "heff0 vs heff1 gap {gap}");
    let be = break_even_mean_fidelity(base.gamma_a1.rad_per_us() * 1e3);
    for run in [&h0, &h1] {
        assert!(run.fidelity_at_ms(1.0) > be, "{:?}: {} vs {be}", run.variant, run.fidelity_at_ms(1.0));
        assert!(run.max_c_population <= 0.2, "<c†c> = {}", run.max_c_population);
        assert!(run.min_reduced_eigenvalue > -1e-8);
        run.curve().unwrap();
    }
}

#[test]
fn stronger_c_damping_approaches_the_eliminated_model() {
    let mut gaps = Vec::new();
    for g in [0.12, 0.24, 0.48] {
        let cfg = HardwareConfig {
            gamma_c1: Frequency::mhz_2pi(g),
            variant: HardwareVariant::Heff1,
            samples: 31,
            ..HardwareConfig::default()
        };
        let hw = simulate_hardware(&cfg).unwrap();
        let eff = eliminated_model_curve(&cfg).unwrap();
        gaps.push(max_gap(&hw.mean_fidelity, &eff));
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "gaps {gaps:?}");
}
