use semiknock_core::models::ModelSpec;
use semiknock_core::{Method, RngStream};
use semiknock_simbench::probes::InjectionConfig;
use semiknock_simbench::settings::diagnostic_standin;
use semiknock_simbench::{
    double_robustness_probe, exchangeability_snapshot_with, generate, null_injection_experiment,
    run_replicated, wasserstein_experiment, ImputerChoice, MethodConfig, SettingKind,
    SyntheticSetting,
};

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn adjacent_covariance_converges_to_ar1() {
    let setting = SyntheticSetting::new(SettingKind::AdjacentSupport).with_size(20_000, 12);
    let (data, _) = generate(&setting, &RngStream::new(11)).unwrap();
    let x = data.inputs();
    let n = x.nrows() as f64;
    let means: Vec<f64> = (0..12).map(|j| x.column(j).sum() / n).collect();
    let mut worst: f64 = 0.0;
    for a in 0..12 {
        for b in 0..12 {
            let cov = (0..x.nrows())
                .map(|i| (x[(i, a)] - means[a]) * (x[(i, b)] - means[b]))
                .sum::<f64>()
                / n;
            let target = 0.6f64.powi((a as i32 - b as i32).abs());
            worst = worst.max((cov - target).abs());
        }
    }
    assert!(worst <= 0.05, "max deviation {worst}");
}

#[test]
fn knockoff_controls_fdr_and_beats_bh_power() {
    let setting = SyntheticSetting::new(SettingKind::AdjacentSupport);
    let rng = RngStream::new(101);
    let knockoff = run_replicated(
        &setting,
        &MethodConfig::new(Method::KnockoffThreshold, 0.2),
        50,
        &rng,
        None,
    )
    .unwrap();
    let bh = run_replicated(
        &setting,
        &MethodConfig::new(Method::BhOnWilcoxon, 0.2),
        50,
        &rng,
        None,
    )
    .unwrap();
    assert!(knockoff.fdr <= 0.25, "knockoff FDR {}", knockoff.fdr);
    assert!(bh.fdr <= 0.25, "BH FDR {}", bh.fdr);
    assert!(
        bh.power <= knockoff.power,
        "BH power {} > knockoff {}",
        bh.power,
        knockoff.power
    );
    let mean_fdp = knockoff.replicates.iter().map(|r| r.fdp).sum::<f64>() / 50.0;
    assert!((mean_fdp - knockoff.fdr).abs() < 1e-12);
}

#[test]
fn null_statistics_are_sign_balanced() {
    let setting = SyntheticSetting::new(SettingKind::AdjacentSupport);
    let (mut positive, mut nonzero) = (0usize, 0usize);
    let (mut imp, mut null) = (Vec::new(), Vec::new());
    for r in 0..20 {
        let snap = exchangeability_snapshot_with(
            &setting,
            &ModelSpec::linear(),
            ImputerChoice::Oracle,
            0.2,
            &RngStream::new(500).derive(r),
        )
        .unwrap();
        for row in &snap.rows {
            if row.is_null {
                null.push(row.statistic);
                if row.statistic != 0.0 {
                    nonzero += 1;
                    positive += (row.statistic > 0.0) as usize;
                }
            } else {
                imp.push(row.statistic);
            }
        }
    }
    let fraction = positive as f64 / nonzero as f64;
    assert!(
        (0.45..=0.55).contains(&fraction),
        "positive fraction {fraction}"
    );
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&mut imp) > median(&mut null));
}

#[test]
fn double_robustness_concentrates_the_oracle_difference() {
    let setting = SyntheticSetting::new(SettingKind::DrNonlinear);
    let mut good = 0;
    for seed in 0..10 {
        let probe = double_robustness_probe(
            &setting,
            &ModelSpec::boosted_stumps(),
            0.1,
            &RngStream::new(900).derive(seed),
        )
        .unwrap();
        let blue = &probe.estimated_vs_estimated;
        let sb = std_dev(blue);
        let mean = blue.iter().sum::<f64>() / blue.len() as f64;
        if std_dev(&probe.estimated_vs_oracle) <= 0.75 * sb
            && mean.abs() <= 3.0 * sb / (blue.len() as f64).sqrt()
        {
            good += 1;
        }
    }
    assert!(good >= 8, "{good} of 10 runs");
}

#[test]
fn null_loss_distance_shrinks_with_n() {
    let setting = SyntheticSetting::new(SettingKind::AdjacentSupport);
    let rows = wasserstein_experiment(
        &setting,
        &[200, 3200],
        20,
        &ModelSpec::boosted_stumps(),
        0.1,
        &RngStream::new(77),
        None,
    )
    .unwrap();
    assert!(
        rows[1].median <= 0.6 * rows[0].median,
        "{} vs {}",
        rows[1].median,
        rows[0].median
    );
}

#[test]
fn injected_null_is_rarely_rejected() {
    let data = diagnostic_standin(569, &RngStream::new(2024)).unwrap();
    let config = InjectionConfig {
        target_correlation: 0.6,
        alpha: 0.05,
        permutations: 1,
        lambda: 0.1,
        model: ModelSpec::boosted_stumps(),
        seeds: 100,
    };
    let report = null_injection_experiment(&data, &config, &RngStream::new(3), None).unwrap();
    assert!(
        report.rejection_rate <= 0.08,
        "rate {}",
        report.rejection_rate
    );
}
