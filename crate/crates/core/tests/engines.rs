use immunet::dca::{compute_mcav, Label};
use immunet::scenario::{gen_ping_scan, gen_sessions, PingScanScenario, SessionScenario};
use immunet::tissue::{run_ticks_observed, CellPopulation, Context};
use immunet::tlr::{session_length, TlrPopulation};
use immunet::{
    run_ticks, AntigenEvent, DcaConfig, DcaPopulation, PopulationConfig, SignalSample,
    TissueCompartment, TissueConfig, TlrConfig, TlrDetector, TlrModel,
};

fn dca_run(seed: u64, antigen: &[AntigenEvent], signals: &[SignalSample]) -> (Vec<immunet::PresentationRecord>, DcaPopulation) {
    dca_run_with(DcaConfig::default(), seed, antigen, signals)
}

fn dca_run_with(
    config: DcaConfig,
    seed: u64,
    antigen: &[AntigenEvent],
    signals: &[SignalSample],
) -> (Vec<immunet::PresentationRecord>, DcaPopulation) {
    let pop_cfg = PopulationConfig {
        rng_seed: seed,
        ..PopulationConfig::default()
    };
    let mut tissue = TissueCompartment::new(TissueConfig::default()).unwrap();
    let mut pop = DcaPopulation::new(config, &pop_cfg).unwrap();
    let n = session_length(antigen, signals);
    let log = run_ticks(&mut tissue, &mut pop, &pop_cfg, antigen, signals, n).unwrap();
    (log, pop)
}

#[test]
fn dca_classifies_default_ping_scan() {
    let traces = gen_ping_scan(&PingScanScenario::default(), 1).unwrap();
    let (log, _) = dca_run(1, &traces.antigen, &traces.signals);
    let report = compute_mcav(&log, 0.5);
    for (entity, label) in &traces.labels.rows {
        let e = report.get(entity.parse().unwrap()).unwrap();
        assert_eq!(e.label, Some(*label), "process {entity}: {e:?}");
    }
}

#[test]
fn dca_runs_are_reproducible_and_seed_dependent() {
    let traces = gen_ping_scan(&PingScanScenario::default(), 2).unwrap();
    // wide thresholds so cells live for several updates and the seed matters
    let config = DcaConfig {
        threshold_range: (200.0, 600.0),
        ..DcaConfig::default()
    };
    let (a, _) = dca_run_with(config.clone(), 9, &traces.antigen, &traces.signals);
    let (b, _) = dca_run_with(config.clone(), 9, &traces.antigen, &traces.signals);
    let (c, _) = dca_run_with(config, 10, &traces.antigen, &traces.signals);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn dca_population_and_conservation_per_tick() {
    let traces = gen_ping_scan(&PingScanScenario::default(), 3).unwrap();
    let pop_cfg = PopulationConfig::default();
    let mut tissue = TissueCompartment::new(TissueConfig::default()).unwrap();
    let mut pop = DcaPopulation::new(DcaConfig::default(), &pop_cfg).unwrap();
    let mut log_len = 0;
    let log = run_ticks_observed(
        &mut tissue,
        &mut pop,
        &pop_cfg,
        &traces.antigen,
        &traces.signals,
        1000,
        |_, _, p| {
            assert_eq!(p.live_count(), pop_cfg.population_size);
            let s = p.stats();
            assert_eq!(s.sampled, s.presented + p.held_antigen());
            assert!(s.presented >= log_len);
            log_len = s.presented;
        },
    )
    .unwrap();
    let stats = pop.stats();
    assert_eq!(log.len() as u64, stats.presented);
    let delivered = traces.antigen.len() as u64;
    assert_eq!(
        delivered,
        stats.sampled + tissue.unsampled_count() as u64 + tissue.evicted_count()
    );
}

#[test]
fn pure_signals_give_extreme_mcav() {
    let antigen: Vec<_> = (0..2000u64).map(|t| AntigenEvent::new((t % 5) as u32, t)).collect();
    let safe: Vec<_> = (0..2000).map(|t| SignalSample::new(0.0, 0.0, 80.0, 0.0, t)).collect();
    let pamp: Vec<_> = (0..2000).map(|t| SignalSample::new(80.0, 0.0, 0.0, 0.0, t)).collect();
    let (log, _) = dca_run(4, &antigen, &safe);
    assert!(log.iter().all(|r| r.context == Context::SemiMature));
    assert!(compute_mcav(&log, 0.5).entries().all(|e| e.mcav == Some(0.0)));
    let (log, _) = dca_run(4, &antigen, &pamp);
    let report = compute_mcav(&log, 0.5);
    assert_eq!(report.len(), 5);
    assert!(report.entries().all(|e| e.mcav == Some(1.0) && e.label == Some(Label::Anomalous)));
}

fn trained() -> (immunet::scenario::SessionSet, TlrModel) {
    let set = gen_sessions(&SessionScenario::default(), 8).unwrap();
    let mut det = TlrDetector::new(TlrConfig::default()).unwrap();
    let model = det
        .train(&set.training.antigen, &set.training.signals, Default::default())
        .unwrap()
        .clone();
    (set, model)
}

#[test]
fn tlr_tolerates_its_training_corpus() {
    let (set, model) = trained();
    for seed in 0..3 {
        let det = TlrDetector::with_model(TlrConfig::default(), model.clone()).unwrap();
        let v = det
            .classify_with_seed(&set.training.antigen, &set.training.signals, seed)
            .unwrap();
        assert!(!v.anomalous);
        assert_eq!(v.stats.mature_dcs, 0);
        assert_eq!(v.activated_count, 0);
    }
}

#[test]
fn tlr_separates_injected_sessions_with_full_coverage() {
    let (set, model) = trained();
    let config = TlrConfig {
        tcell_population: 256,
        ..TlrConfig::default()
    };
    let det = TlrDetector::with_model(config, model).unwrap();
    for s in &set.sessions {
        let v = det.classify_session(&s.session.antigen, &s.session.signals).unwrap();
        assert_eq!(v.anomalous, s.label == Label::Anomalous, "{}", s.name);
        if v.anomalous {
            assert!(v.triggering_antigen.iter().any(|a| *a >= 200));
        }
    }
}

#[test]
fn tlr_population_and_conservation_per_tick() {
    let (set, model) = trained();
    let config = TlrConfig::default();
    let mut tissue = TissueCompartment::new(model.domains().tissue_config(config.store_capacity)).unwrap();
    let mut pop = TlrPopulation::new(model, config.clone()).unwrap();
    let s = &set.sessions[0].session;
    let n = session_length(&s.antigen, &s.signals);
    let log = run_ticks_observed(
        &mut tissue,
        &mut pop,
        &config.population_config(),
        &s.antigen,
        &s.signals,
        n,
        |_, _, p| {
            assert_eq!(p.live_count(), config.dc_population);
            assert_eq!(p.tcells().len(), config.tcell_population);
            let st = p.stats();
            assert_eq!(st.sampled, st.presented + p.held_antigen());
        },
    )
    .unwrap();
    assert_eq!(log.len() as u64, pop.stats().presented);
}
