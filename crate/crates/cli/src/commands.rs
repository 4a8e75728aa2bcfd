use std::path::{Path, PathBuf};

use serde_json::json;

use conefield::analysis::{
    local_complexity_over, markov_field_test, temporal_markov_test, CmiConfig, ComplexityReport, ParentsSpec, Probe,
};
use conefield::field::{load_field, save_field};
use conefield::filter::{initial_estimate, propagate, propagate_parallel, MoveGeometry, TransitionTable};
use conefield::graph::load_graph;
use conefield::predict::{evaluate_predictor, EvalReport, PredictMode, Predictor};
use conefield::reconstruct::{database_hash, reconstruct_states_with, StateSetJson};
use conefield::rules::{simulate, LocalRule, SimConfig};
use conefield::stats::DatabaseJson;
use conefield::{
    label_field, ConeConfig, ConeDatabase, ConeLayout, ConeParams, FieldSeries, Graph, Pooling, StateField, StateSet,
    TestConfig, TestKind,
};

use crate::output::{parse_document, Run};
use crate::{Command, ConeArgs, Failure, GraphKind, MarkovKind, ModeArg, RuleArgs, Switch, TestArg, TestArgs};

pub fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Graph {
            kind,
            n,
            max_degree,
            extra_edges,
            seed,
            output,
        } => graph(kind, n, max_degree, extra_edges, seed, &output),
        Command::Simulate {
            graph,
            rule,
            steps,
            seed,
            output,
        } => simulate_cmd(&graph, &rule, steps, seed, &output),
        Command::Cones {
            graph,
            field,
            cone,
            output,
        } => cones(&graph, &field, &cone, &output),
        Command::Reconstruct {
            graph,
            field,
            cone,
            test,
            seed,
            output,
        } => reconstruct(&graph, &field, &cone, &test, seed, &output),
        Command::Label { states, field, output } => label(&states, &field, &output),
        Command::Predict {
            states,
            class,
            past,
            mode,
            output,
        } => predict(&states, class, &past, mode, output.as_deref()),
        Command::Evaluate {
            states,
            field,
            mode,
            output,
        } => evaluate(&states, &field, mode, output.as_deref()),
        Command::Filter {
            states,
            train,
            field,
            check_parallel,
            output,
            summary,
        } => filter(&states, &train, &field, check_parallel, &output, summary.as_deref()),
        Command::Complexity {
            states,
            field,
            output,
            csv,
        } => complexity(&states, &field, &output, csv.as_deref()),
        Command::MarkovTest {
            states,
            field,
            kind,
            lag,
            probe_distance,
            probe_dt,
            cmi,
            output,
        } => {
            let cfg = CmiConfig {
                threshold_bits: cmi.threshold,
                min_cell: cmi.min_cell,
            };
            markov(&states, &field, kind, lag, Probe { distance: probe_distance, dt: probe_dt }, cfg, output.as_deref())
        }
        Command::Pipeline {
            graph,
            rule,
            steps,
            heldout_steps,
            cone,
            test,
            seed,
            mode,
            out_dir,
        } => pipeline(&graph, &rule, steps, heldout_steps.unwrap_or(steps), &cone, &test, seed, mode, &out_dir),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn pooling(s: Switch) -> Pooling {
    match s {
        Switch::On => Pooling::On,
        Switch::Off => Pooling::Off,
    }
}

fn mode(m: ModeArg) -> PredictMode {
    match m {
        ModeArg::NextStep => PredictMode::NextStep,
        ModeArg::FullCone => PredictMode::FullCone,
    }
}

fn cone_params(c: &ConeArgs) -> Result<ConeParams, Failure> {
    Ok(ConeParams::new(c.c, c.past, c.future)?)
}

fn cone_json(c: &ConeArgs) -> serde_json::Value {
    json!({"c": c.c, "past_depth": c.past, "future_depth": c.future, "pooling": pooling(c.pooling)})
}

fn test_config(t: &TestArgs, seed: u64) -> Result<TestConfig, Failure> {
    let cfg = TestConfig {
        alpha: t.alpha,
        test: match t.test {
            TestArg::Chi2 => TestKind::ChiSquared,
            TestArg::Permutation => TestKind::Permutation { n_perm: t.n_perm, seed },
        },
        min_expected: t.min_expected,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn rule_json(r: &RuleArgs) -> serde_json::Value {
    json!({"rule": r.rule, "p": r.p, "alphabet": r.alphabet, "noise": r.noise})
}

fn build_rule(r: &RuleArgs, g: &Graph) -> Result<LocalRule, Failure> {
    let n = g.vertex_count();
    let rule = match r.rule.as_str() {
        "iid" => {
            let p = match &r.p {
                Some(text) => text
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("bad probability `{x}` in --p"))))
                    .collect::<Result<Vec<f64>, _>>()?,
                None => vec![1.0 / r.alphabet as f64; r.alphabet as usize],
            };
            if p.len() != r.alphabet as usize {
                return Err(usage(format!("--p has {} entries, alphabet is {}", p.len(), r.alphabet)));
            }
            LocalRule::iid(p)?
        }
        "shift" => LocalRule::shift(r.alphabet, n)?,
        "rule184" => {
            if r.alphabet != 2 {
                return Err(usage("rule184 is binary; use --alphabet 2"));
            }
            LocalRule::rule184(n)?
        }
        other => match other.strip_prefix("elementary:") {
            Some(num) => {
                if r.alphabet != 2 {
                    return Err(usage("elementary rules are binary; use --alphabet 2"));
                }
                let num: u8 = num.parse().map_err(|_| usage(format!("bad elementary rule number `{num}`")))?;
                LocalRule::elementary(num, n)?
            }
            None => return Err(usage(format!("unknown rule `{other}`; expected iid, shift, rule184 or elementary:<n>"))),
        },
    };
    if r.p.is_some() && r.rule != "iid" {
        return Err(usage("--p applies only to the iid rule"));
    }
    let rule = if r.noise > 0.0 { rule.with_noise(r.noise)? } else { rule };
    rule.validate(g).map_err(|e| usage(e.to_string()))?;
    Ok(rule)
}

fn read_graph(run: &mut Run, path: &Path) -> Result<(Graph, String), Failure> {
    let text = run.read("graph", path)?;
    let g = load_graph(&text)?;
    let canonical = g.to_text();
    Ok((g, canonical))
}

fn read_field(run: &mut Run, name: &str, path: &Path, g: &Graph) -> Result<FieldSeries, Failure> {
    let text = run.read(name, path)?;
    load_field(&text, g).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_fields(run: &mut Run, name: &str, paths: &[PathBuf], g: &Graph) -> Result<Vec<FieldSeries>, Failure> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_field(run, &format!("{name}[{i}]"), p, g))
        .collect()
}

/// A state set document with the graph it was built on.
struct LoadedStates {
    graph: Graph,
    graph_text: String,
    states: StateSet,
}

fn read_states(run: &mut Run, path: &Path) -> Result<LoadedStates, Failure> {
    let text = run.read("states", path)?;
    let doc = parse_document::<StateSetJson>(&text, path)?;
    let graph_text = doc
        .graph
        .ok_or_else(|| Failure::Data(format!("{}: state file carries no graph", path.display())))?;
    let graph = load_graph(&graph_text)?;
    let states = StateSet::from_json(&doc.result, &graph)?;
    Ok(LoadedStates {
        graph,
        graph_text,
        states,
    })
}

fn database(fields: &[FieldSeries], g: &Graph, p: ConeParams, pool: Pooling, alphabet: u16) -> Result<ConeDatabase, Failure> {
    let mut db = ConeDatabase::new(ConeLayout::new(g, p, pool)?, alphabet);
    for f in fields {
        if f.alphabet() != alphabet {
            return Err(Failure::Data("input fields differ in alphabet".into()));
        }
        db.add_series(f)?;
    }
    Ok(db)
}

fn graph(kind: GraphKind, n: usize, max_degree: usize, extra_edges: usize, seed: Option<u64>, output: &Path) -> Result<(), Failure> {
    let need_seed = || seed.ok_or_else(|| usage("random graph kinds need --seed"));
    let g = match kind {
        GraphKind::Ring => Graph::ring(n)?,
        GraphKind::Path => Graph::path(n)?,
        GraphKind::Star => Graph::star(n)?,
        GraphKind::Tree => Graph::random_tree(n, max_degree, need_seed()?)?,
        GraphKind::Connected => Graph::random_connected(n, extra_edges, need_seed()?)?,
    };
    let run = Run::new(
        "graph",
        json!({"kind": format!("{kind:?}").to_lowercase(), "n": n, "max_degree": max_degree, "extra_edges": extra_edges}),
        seed,
    );
    run.write_text(output, &g.to_text())
}

fn simulate_cmd(graph_path: &Path, r: &RuleArgs, steps: usize, seed: u64, output: &Path) -> Result<(), Failure> {
    let mut run = Run::new("simulate", json!({"rule": rule_json(r), "steps": steps}), Some(seed));
    let (g, _) = read_graph(&mut run, graph_path)?;
    let rule = build_rule(r, &g)?;
    let f = simulate(&g, &rule, &SimConfig::uniform(steps, seed, r.alphabet))?;
    run.write_text(output, &save_field(&f))
}

fn cones(graph_path: &Path, fields: &[PathBuf], cone: &ConeArgs, output: &Path) -> Result<(), Failure> {
    let p = cone_params(cone)?;
    let mut run = Run::new("cones", cone_json(cone), None);
    let (g, gtext) = read_graph(&mut run, graph_path)?;
    let fs = read_fields(&mut run, "field", fields, &g)?;
    let db = database(&fs, &g, p, pooling(cone.pooling), fs[0].alphabet())?;
    if db.is_empty() {
        return Err(Failure::Data("fields are too short for these cone depths".into()));
    }
    run.write_json::<DatabaseJson>(output, Some(&gtext), &db.to_json())
}

fn reconstruct(
    graph_path: &Path,
    fields: &[PathBuf],
    cone: &ConeArgs,
    test: &TestArgs,
    seed: u64,
    output: &Path,
) -> Result<(), Failure> {
    let cfg = test_config(test, seed)?;
    let p = cone_params(cone)?;
    let mut run = Run::new(
        "reconstruct",
        json!({"cone": cone_json(cone), "test": cfg, "refine": test.refine}),
        Some(seed),
    );
    let (g, gtext) = read_graph(&mut run, graph_path)?;
    let fs = read_fields(&mut run, "field", fields, &g)?;
    let db = database(&fs, &g, p, pooling(cone.pooling), fs[0].alphabet())?;
    let s = reconstruct_states_with(&db, &cfg, seed, test.refine)?;
    run.write_json(output, Some(&gtext), &s.to_json())?;
    println!(
        "{} states over {} classes (max {} per class)",
        s.state_count(),
        s.classes.len(),
        s.max_states_per_class()
    );
    Ok(())
}

fn label(states: &Path, field: &Path, output: &Path) -> Result<(), Failure> {
    let mut run = Run::new("label", json!({}), None);
    let ls = read_states(&mut run, states)?;
    let f = read_field(&mut run, "field", field, &ls.graph)?;
    let sf = label_field(&f, &ls.states, &ls.graph, &ls.states.layout.params)?;
    run.write_text(output, &sf.to_text())
}

fn predict(states: &Path, class: usize, past: &str, m: ModeArg, output: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::new("predict", json!({"class": class, "past": past, "mode": mode(m)}), None);
    let ls = read_states(&mut run, states)?;
    if class >= ls.states.classes.len() {
        return Err(usage(format!("no class {class}; the state set has {}", ls.states.classes.len())));
    }
    let codec = ls.states.past_codec(class);
    let key = codec.parse(past).map_err(|e| usage(format!("--past: {e}")))?;
    let pred = Predictor::new(ls.states, mode(m))?;
    let dist = pred.predict_distribution::<f64>(&ConeConfig(codec.decode(&key).0), class)?;
    let oc = pred.outcome_codec(class);
    let probs: serde_json::Map<String, serde_json::Value> = dist.iter().map(|(k, p)| (oc.format(k), json!(p))).collect();
    match output {
        Some(path) => run.write_json(path, Some(&ls.graph_text), &probs),
        None => {
            println!("{}", serde_json::Value::Object(probs));
            Ok(())
        }
    }
}

fn evaluate(states: &Path, field: &Path, m: ModeArg, output: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::new("evaluate", json!({"mode": mode(m)}), None);
    let ls = read_states(&mut run, states)?;
    let f = read_field(&mut run, "field", field, &ls.graph)?;
    let report: EvalReport = evaluate_predictor(&Predictor::new(ls.states, mode(m))?, &f)?;
    println!("{}", report.tsv());
    if let Some(path) = output {
        run.write_json(path, Some(&ls.graph_text), &report)?;
    }
    Ok(())
}

fn filter(
    states: &Path,
    train: &[PathBuf],
    field: &Path,
    check_parallel: bool,
    output: &Path,
    summary: Option<&Path>,
) -> Result<(), Failure> {
    let mut run = Run::new("filter", json!({"check_parallel": check_parallel}), None);
    let ls = read_states(&mut run, states)?;
    let (g, s) = (&ls.graph, &ls.states);
    let geom = MoveGeometry::new(g, &s.layout)?;
    let mut tt = TransitionTable::default();
    for f in read_fields(&mut run, "train", train, g)? {
        let sf = label_field(&f, s, g, &s.layout.params)?;
        tt.add(&sf, &f, &geom)?;
    }
    let f = read_field(&mut run, "field", field, g)?;
    let init = initial_estimate(&f, s)?;
    let est = propagate(init.clone(), &f, &tt, &geom)?;
    if check_parallel && propagate_parallel(init, &f, &tt, &geom)? != est {
        return Err(Failure::Data("parallel propagation disagrees with the worklist result".into()));
    }
    run.write_text(output, &est.to_text())?;
    let sum = est.summary();
    eprintln!(
        "singletons {:.4}, contradictions {}, coverage {:.4}, transition keys {}, conflicting keys {}",
        sum.singleton_fraction,
        sum.contradiction_count,
        sum.coverage,
        tt.key_count(),
        tt.conflicting_keys()
    );
    if let Some(path) = summary {
        let body = json!({
            "summary": sum,
            "transition_keys": tt.key_count(),
            "conflicting_keys": tt.conflicting_keys(),
            "conflict_events": tt.conflicts.len(),
        });
        run.write_json(path, Some(&ls.graph_text), &body)?;
    }
    Ok(())
}

fn complexity(states: &Path, fields: &[PathBuf], output: &Path, csv: Option<&Path>) -> Result<(), Failure> {
    let mut run = Run::new("complexity", json!({}), None);
    let ls = read_states(&mut run, states)?;
    let (g, s) = (&ls.graph, &ls.states);
    let fs = read_fields(&mut run, "field", fields, g)?;
    let p = s.layout.params;
    let mut db = ConeDatabase::new(s.layout.clone(), s.alphabet);
    let mut labeled = Vec::with_capacity(fs.len());
    for f in &fs {
        db.add_series(f)?;
        labeled.push(label_field(f, s, g, &p)?);
    }
    let refs: Vec<&StateField> = labeled.iter().collect();
    let report: ComplexityReport<f64> = local_complexity_over(&refs, &db, s)?;
    run.write_json(
        output,
        Some(&ls.graph_text),
        &json!({"mean_c_bits": report.mean_c_bits(), "database_hash": database_hash(&db)?, "classes": report.classes}),
    )?;
    if let Some(path) = csv {
        run.write_text(path, &report.to_csv())?;
    }
    println!("mean C = {:.6} bits over {} classes", report.mean_c_bits(), report.classes.len());
    Ok(())
}

fn markov(
    states: &Path,
    field: &Path,
    kind: MarkovKind,
    lag: usize,
    probe: Probe,
    cfg: CmiConfig,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let params = match kind {
        MarkovKind::Temporal => json!({"kind": "temporal", "lag": lag, "cmi": cfg}),
        MarkovKind::Field => json!({"kind": "field", "probe": probe, "cmi": cfg}),
    };
    let mut run = Run::new("markov-test", params, None);
    let ls = read_states(&mut run, states)?;
    let f = read_field(&mut run, "field", field, &ls.graph)?;
    let sf = label_field(&f, &ls.states, &ls.graph, &ls.states.layout.params)?;
    let report = match kind {
        MarkovKind::Temporal => temporal_markov_test(&sf, &ParentsSpec::from_graph(&ls.graph), lag, &cfg)?,
        MarkovKind::Field => markov_field_test(&sf, &ls.graph, probe, &cfg)?,
    };
    println!("{}\t{:?}\t{}", report.cmi_bits, report.verdict, report.used_samples);
    if let Some(path) = output {
        run.write_json(path, Some(&ls.graph_text), &report)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn pipeline(
    graph_path: &Path,
    r: &RuleArgs,
    steps: usize,
    heldout_steps: usize,
    cone: &ConeArgs,
    test: &TestArgs,
    seed: u64,
    m: ModeArg,
    out_dir: &Path,
) -> Result<(), Failure> {
    let cfg = test_config(test, seed)?;
    let p = cone_params(cone)?;
    let heldout_seed = seed.wrapping_add(1);
    let mut run = Run::new(
        "pipeline",
        json!({
            "rule": rule_json(r), "steps": steps, "heldout_steps": heldout_steps, "heldout_seed": heldout_seed,
            "cone": cone_json(cone), "test": cfg, "refine": test.refine, "mode": mode(m),
        }),
        Some(seed),
    );
    let (g, gtext) = read_graph(&mut run, graph_path)?;
    let rule = build_rule(r, &g)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;

    let train = simulate(&g, &rule, &SimConfig::uniform(steps, seed, r.alphabet))?;
    let heldout = simulate(&g, &rule, &SimConfig::uniform(heldout_steps, heldout_seed, r.alphabet))?;
    run.write_text(&out_dir.join("train.fld"), &save_field(&train))?;
    run.write_text(&out_dir.join("heldout.fld"), &save_field(&heldout))?;

    let db = database(std::slice::from_ref(&train), &g, p, pooling(cone.pooling), r.alphabet)?;
    let s = reconstruct_states_with(&db, &cfg, seed, test.refine)?;
    run.write_json(&out_dir.join("states.json"), Some(&gtext), &s.to_json())?;

    let sf = label_field(&train, &s, &g, &s.layout.params)?;
    run.write_text(&out_dir.join("train.labels"), &sf.to_text())?;

    let report = evaluate_predictor(&Predictor::new(s.clone(), mode(m))?, &heldout)?;
    run.write_json(
        &out_dir.join("evaluation.json"),
        Some(&gtext),
        &json!({"states": s.state_count(), "classes": s.classes.len(), "evaluation": report}),
    )?;
    println!("{}", report.tsv());
    Ok(())
}
