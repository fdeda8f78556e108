use chemowave::constants::{c_star, mu_of_c, ModelParams};
use chemowave::envelopes::membership_with_tol;
use chemowave::wave::{
    aligned_part_metric, aligned_sup_diff, construct_wave, fitted_decay_rate, WaveConfig,
};

#[test]
fn supercritical_wave_properties() {
    let (chi, c) = (0.2, 2.2);
    let cfg = WaveConfig::default();
    let p = construct_wave(chi, c, &cfg).unwrap();
    assert!(p.converged);
    assert!(membership_with_tol(&p.envelope, &p.u, 1e-6).member);
    assert!(membership_with_tol(&p.envelope, &p.first_iterate, 1e-6).member);

    let mu = mu_of_c(c).unwrap();
    let rate = fitted_decay_rate(&p.u, (10.0, 25.0)).unwrap();
    assert!(
        (rate - mu).abs() <= 0.02 * mu,
        "fitted {rate}, expected {mu}"
    );

    let tight = WaveConfig {
        tol_inner: cfg.tol_inner / 10.0,
        tol_outer: cfg.tol_outer / 10.0,
        ..cfg
    };
    let q = construct_wave(chi, c, &tight).unwrap();
    assert!(q.converged);
    let d = aligned_part_metric(&p.u, &q.u, -50.0, 40.0).unwrap();
    assert!(d <= 5.0 * cfg.tol_outer, "part metric {d}");
}

#[test]
fn critical_wave_decay_rate() {
    let chi = 0.2;
    let c = c_star(&ModelParams::new(chi).unwrap()).unwrap();
    let p = construct_wave(chi, c, &WaveConfig::default()).unwrap();
    let rate = fitted_decay_rate(&p.u, (10.0, 25.0)).unwrap();
    assert!(
        (rate - p.mu).abs() <= 0.02 * p.mu,
        "fitted {rate}, expected {}",
        p.mu
    );
}

#[test]
fn weak_chemotaxis_matches_fisher() {
    let cfg = WaveConfig::default();
    let c = c_star(&ModelParams::new(0.01).unwrap()).unwrap();
    let weak = construct_wave(0.01, c, &cfg).unwrap();
    let fisher = construct_wave(0.0, 2.01, &cfg).unwrap();
    let d = aligned_sup_diff(&weak.u, &fisher.u, -50.0, 50.0).unwrap();
    assert!(d <= 0.05, "{d}");
}

#[test]
fn rejects_out_of_range_inputs() {
    let cfg = WaveConfig::default();
    assert!(construct_wave(0.5, 3.0, &cfg).is_err());
    assert!(construct_wave(0.2, 2.0, &cfg).is_err());
}
