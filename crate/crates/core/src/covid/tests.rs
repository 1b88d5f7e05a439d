use super::*;

fn zero_graph_error(outcome: &PipelineOutcome) -> f64 {
    let exp = &outcome.experiment;
    let z = exp.region_specific_cases.as_ref().unwrap();
    let n = exp.n_regions();
    prediction_error(&exp.overall_cases, z, &AdjacencyMatrix::zeros(n), &outcome.split.validation)
        .unwrap()
        .mean
}

#[test]
fn synthetic_panel_has_the_requested_coupling() {
    let syn = cyclic_five_region_panel(0.5, 66, 3).unwrap();
    assert!((crate::graph_learn::spectral_radius(syn.adjacency.weights()) - 0.5).abs() < 1e-9);
    assert!(!syn.adjacency.is_dag());
    assert_eq!(syn.panel.n_days(), 30 + 10 + 66);
    // calibration days are uncoupled
    assert_eq!(syn.panel.overall_cases.column(5), syn.region_specific.column(5));
}

#[test]
fn cross_validated_graph_beats_the_empty_graph() {
    for seed in 0..5 {
        let syn = cyclic_five_region_panel(0.5, 66, seed).unwrap();
        let outcome = run_pipeline(&syn.panel, &syn.settings).unwrap();
        assert_eq!(outcome.grid.table.len(), 8);
        assert!(outcome.validation_error() < zero_graph_error(&outcome), "seed {seed}");
        let (semucb, naive) = outcome.mean_ratios(5);
        assert!(semucb > naive, "seed {seed}: {semucb} vs {naive}");
        assert_eq!(outcome.selections.len(), 66);
        assert!(outcome.selections.iter().all(|x| x.count() <= 2));
    }
}

#[test]
fn error_curve_covers_days_after_the_first_validation_day() {
    let syn = cyclic_five_region_panel(0.5, 66, 7).unwrap();
    let outcome = run_pipeline(&syn.panel, &syn.settings).unwrap();
    let first = outcome.split.validation[0] + 1;
    assert_eq!(outcome.error_curve.first().unwrap().0, first);
    assert_eq!(outcome.error_curve.len(), 66 - first + 1);
    assert!(outcome.error_curve.iter().all(|(_, e)| e.is_finite() && *e >= 0.0));
}

#[test]
fn outputs_are_written_and_reproducible() {
    let syn = cyclic_five_region_panel(0.5, 33, 2).unwrap();
    let names = vec![("R0".to_string(), "Region zero".to_string())];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let outcome = run_pipeline(&syn.panel, &syn.settings).unwrap();
        let summary = write_outputs(&outcome, &names, dir.path()).unwrap();
        assert_eq!(summary.validation_days.len(), 3);
    }
    for name in ["panel_smoothed.csv", "errors.csv", "selections.csv", "ratios.csv", "summary.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        assert_eq!(a, std::fs::read(dirs[1].path().join(name)).unwrap(), "{name}");
    }
    let ratios = std::fs::read_to_string(dirs[0].path().join("ratios.csv")).unwrap();
    assert!(ratios.starts_with("day,semucb_ratio,naive_ratio\n"));
    assert_eq!(ratios.lines().count(), 34);
    let selections = std::fs::read_to_string(dirs[0].path().join("selections.csv")).unwrap();
    assert_eq!(selections.lines().count(), 1 + 33 * 5);
    assert!(selections.contains("Region zero"));
    let smoothed = ingest_csv(&dirs[0].path().join("panel_smoothed.csv")).unwrap();
    assert_eq!(smoothed.overall_cases.shape(), (5, 30 + 10 + 33));
}

#[test]
fn config_errors() {
    let syn = cyclic_five_region_panel(0.5, 22, 1).unwrap();
    let outside = PipelineSettings {
        calibration_start: syn.settings.calibration_start - chrono::Duration::days(1),
        ..syn.settings.clone()
    };
    assert!(matches!(run_pipeline(&syn.panel, &outside), Err(Error::Config(_))));
    let short = PipelineSettings {
        calibration_end: syn.settings.calibration_start + chrono::Duration::days(5),
        ..syn.settings.clone()
    };
    assert!(matches!(run_pipeline(&syn.panel, &short), Err(Error::InsufficientData(_))));
    let budget = PipelineSettings { budget: 6, ..syn.settings.clone() };
    assert!(matches!(run_pipeline(&syn.panel, &budget), Err(Error::Config(_))));
}

#[test]
fn config_file_defaults() {
    let parsed: CovidConfig = serde_json::from_str(r#"{"data": "cases.csv", "seed": 4}"#).unwrap();
    assert_eq!(parsed.settings.seed, 4);
    assert_eq!(parsed.settings.budget, 6);
    assert_eq!(parsed.settings.experiment_start, NaiveDate::from_ymd_opt(2020, 8, 10).unwrap());
    assert_eq!(parsed.settings.experiment_end, NaiveDate::from_ymd_opt(2020, 10, 15).unwrap());
    // 10 August to 15 October inclusive is 67 calendar days
    assert_eq!((parsed.settings.experiment_end - parsed.settings.experiment_start).num_days() + 1, 67);
}
