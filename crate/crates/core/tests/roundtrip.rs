use conefield::field::{load_field, save_field};
use conefield::graph::load_graph;
use conefield::predict::{evaluate_predictor, PredictMode, Predictor};
use conefield::reconstruct::StateSetJson;
use conefield::rules::{simulate, LocalRule, SimConfig};
use conefield::stats::DatabaseJson;
use conefield::{
    build_cone_database, label_field, reconstruct_states, ConeDatabase, ConeParams, Graph, Pooling, StateField,
    StateSet, TestConfig,
};

fn fit(pooling: Pooling) -> (Graph, conefield::FieldSeries, ConeDatabase, StateSet) {
    let g = Graph::ring(12).unwrap();
    let f = simulate(&g, &LocalRule::rule184(12).unwrap(), &SimConfig::uniform(600, 3, 2)).unwrap();
    let db = build_cone_database(&f, &g, ConeParams::new(1, 2, 1).unwrap(), pooling).unwrap();
    let s = reconstruct_states(&db, &TestConfig::chi_squared(0.001), 1).unwrap();
    (g, f, db, s)
}

#[test]
fn text_formats_round_trip() {
    let g = Graph::random_tree(15, 3, 9).unwrap();
    assert_eq!(load_graph(&g.to_text()).unwrap(), g);

    let f = simulate(&g, &LocalRule::iid(vec![0.2, 0.3, 0.5]).unwrap(), &SimConfig::uniform(40, 2, 3)).unwrap();
    let back = load_field(&save_field(&f), &g).unwrap();
    assert_eq!(back, f);

    let (g, f, _, s) = fit(Pooling::On);
    let sf = label_field(&f, &s, &g, &s.layout.params).unwrap();
    assert_eq!(StateField::from_text(&sf.to_text(), g.vertex_count()).unwrap(), sf);
}

#[test]
fn json_documents_round_trip() {
    for pooling in [Pooling::On, Pooling::Off] {
        let (g, _, db, s) = fit(pooling);
        let text = serde_json::to_string(&s.to_json()).unwrap();
        let doc: StateSetJson = serde_json::from_str(&text).unwrap();
        let back = StateSet::from_json(&doc, &g).unwrap();
        assert!(back.same_partition(&s));
        assert_eq!(back.state_count(), s.state_count());

        let text = serde_json::to_string(&db.to_json()).unwrap();
        let doc: DatabaseJson = serde_json::from_str(&text).unwrap();
        let back = ConeDatabase::from_json(&doc, &g).unwrap();
        assert_eq!(back.total(), db.total());
        assert_eq!(back.classes.len(), db.classes.len());
    }
}

#[test]
fn reloaded_states_predict_identically() {
    let (g, f, _, s) = fit(Pooling::On);
    let doc: StateSetJson = serde_json::from_str(&serde_json::to_string(&s.to_json()).unwrap()).unwrap();
    let back = StateSet::from_json(&doc, &g).unwrap();
    for mode in [PredictMode::NextStep, PredictMode::FullCone] {
        let a = evaluate_predictor(&Predictor::new(s.clone(), mode).unwrap(), &f).unwrap();
        let b = evaluate_predictor(&Predictor::new(back.clone(), mode).unwrap(), &f).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn same_seed_same_partition() {
    let (_, _, db, s) = fit(Pooling::On);
    let again = reconstruct_states(&db, &TestConfig::chi_squared(0.001), 1).unwrap();
    assert_eq!(again, s);
}

#[test]
fn pooled_and_unpooled_agree_on_a_ring() {
    // Every ring vertex has the same cone shape, so pooling only adds data.
    let (g, f, _, pooled) = fit(Pooling::On);
    let (_, _, _, split) = fit(Pooling::Off);
    assert_eq!(pooled.classes.len(), 1);
    assert_eq!(split.classes.len(), g.vertex_count());
    let a = label_field(&f, &pooled, &g, &pooled.layout.params).unwrap();
    assert!(a.known_count() > 0);
    assert!(split.max_states_per_class() <= pooled.max_states_per_class() + 2);
}
