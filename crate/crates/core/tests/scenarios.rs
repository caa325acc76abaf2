use chaingap::operators::build_schrodinger;
use chaingap::scenarios::{
    compute_gap, localization_fit, restricted_eigenvector_check, run_sweep, scenario_disorder, scenario_impurity,
    DisorderFamily, DisorderSpec, DisorderTarget, ImpurityFamily, ImpurityParams, Scenario, StateSelector,
};
use chaingap::spectra::{eig_symmetric, GapMethod};

#[test]
fn impurity_restrictions_converge() {
    let fam = ImpurityFamily(ImpurityParams::default());
    let r = restricted_eigenvector_check(&fam, 128, &[8, 12, 16, 24, 32], StateSelector::Ground).unwrap();
    assert!(r.decreasing(), "{r:?}");
    let last = r.entries.last().unwrap().deviation.unwrap();
    assert!(last < 1e-8, "{r:?}");
}

#[test]
fn disorder_restrictions_converge() {
    let fam = DisorderFamily(DisorderSpec::new(DisorderTarget::Pinning, 7));
    let r = restricted_eigenvector_check(&fam, 64, &[4, 8, 12, 16], StateSelector::MostConcentrated).unwrap();
    assert!(r.entries.iter().filter(|e| e.deviation.is_some()).count() >= 3, "{r:?}");
    assert!(r.decreasing(), "{r:?}");
}

#[test]
fn impurity_localization_rate_is_stable() {
    let rates: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let imp = scenario_impurity(1, n, &ImpurityParams::default()).unwrap();
            let es = eig_symmetric(&build_schrodinger(&imp.spec)).unwrap();
            let fit = localization_fit(&es.vectors.column(0).into_owned(), imp.spec.shape(), imp.center).unwrap();
            fit.rate.expect("localized")
        })
        .collect();
    for r in &rates {
        assert!((r - rates[1]).abs() <= 0.2 * rates[1], "{rates:?}");
    }
}

#[test]
fn every_disorder_realization_has_a_gap() {
    for target in [DisorderTarget::Pinning, DisorderTarget::Mass, DisorderTarget::Interaction] {
        let rows = run_sweep(&Scenario::disorder(target), 1, &[2, 5, 9], &[0, 1, 2, 3, 4, 5, 6, 7], GapMethod::Direct);
        for r in rows {
            assert!(r.ok() && r.gap > 0.0, "{r:?}");
        }
    }
}

#[test]
fn gaps_ignore_temperatures() {
    let spec = scenario_disorder(1, 6, &DisorderSpec::new(DisorderTarget::Mass, 3)).unwrap();
    let hot = spec.with_temperatures(vec![7.5; spec.friction().len()]).unwrap();
    for method in [GapMethod::Direct, GapMethod::Pencil, GapMethod::Wigner] {
        let a = compute_gap(&spec, method).unwrap().0;
        let b = compute_gap(&hot, method).unwrap().0;
        assert_eq!(a.gap.to_bits(), b.gap.to_bits(), "{method}");
    }
}

#[test]
fn methods_agree_on_scenarios() {
    let specs = [
        scenario_impurity(1, 12, &ImpurityParams::default()).unwrap().spec,
        scenario_disorder(1, 5, &DisorderSpec::new(DisorderTarget::Interaction, 11)).unwrap(),
        Scenario::homogeneous(Some(chaingap::lattice::SiteTag::OppositeEdges)).build(2, 5, 0).unwrap().0,
    ];
    for spec in &specs {
        let d = compute_gap(spec, GapMethod::Direct).unwrap().0.gap;
        for method in [GapMethod::Pencil, GapMethod::Wigner] {
            let g = compute_gap(spec, method).unwrap().0.gap;
            assert!((g - d).abs() <= 1e-7 * d, "{method}: {g} vs {d}");
        }
    }
}
