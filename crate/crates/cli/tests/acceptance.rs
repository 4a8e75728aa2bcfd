//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts it.
//!
//! Systems:
//! 1. i.i.d. fair bits on a random 20-vertex tree (max degree 3), T = 5000.
//! 2. Binary left shift on a 32-ring, fitted on an ensemble of short runs.
//! 3. Rule 184 on a 64-ring.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use conefield::analysis::{
    local_complexity, markov_field_test, temporal_markov_test, CmiConfig, CmiVerdict, ParentsSpec,
    Probe,
};
use conefield::filter::{
    learn_transitions, path_independence_check, random_path_pairs, recursive_filter, MoveGeometry,
};
use conefield::info::{conditional_mutual_information, entropy, mutual_information};
use conefield::oracle::exact_conditionals;
use conefield::predict::{evaluate_predictor, oracle_patch_partition, PatchCones, PatchTally, PredictMode, Predictor};
use conefield::reconstruct::oracle_states;
use conefield::rules::{simulate, LocalRule, SimConfig};
use conefield::{
    build_cone_database, label_field, ConeDatabase, ConeLayout, ConeParams, FieldSeries, Graph, Offset, Pooling,
    StateField, StateSet, TestConfig,
};

const ALPHA: f64 = 0.001;

fn params() -> ConeParams {
    ConeParams::new(1, 2, 1).unwrap()
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {id:02} {verdict} {name}: {detail}");
}

fn check(id: u32, name: &str, pass: bool, detail: String) {
    report(id, name, pass, &detail);
    assert!(pass, "{name}: {detail}");
}

struct System {
    g: Graph,
    rule: LocalRule,
    states: StateSet,
    /// Database the states were fitted on.
    db: ConeDatabase,
    /// Long run labeled with `states`.
    field: FieldSeries,
    labels: StateField,
}

fn iid_system(seed: u64) -> (Graph, LocalRule, FieldSeries, ConeDatabase, StateSet) {
    let g = Graph::random_tree(20, 3, seed).unwrap();
    let rule = LocalRule::iid(vec![0.5, 0.5]).unwrap();
    let f = simulate(&g, &rule, &SimConfig::uniform(5000, 1000 + seed, 2)).unwrap();
    let db = build_cone_database(&f, &g, params(), Pooling::On).unwrap();
    let s = conefield::reconstruct_states(&db, &TestConfig::chi_squared(ALPHA), seed).unwrap();
    (g, rule, f, db, s)
}

fn system1() -> &'static System {
    static S: OnceLock<System> = OnceLock::new();
    S.get_or_init(|| {
        let (g, rule, field, db, states) = iid_system(0);
        let labels = label_field(&field, &states, &g, &params()).unwrap();
        System {
            g,
            rule,
            states,
            db,
            field,
            labels,
        }
    })
}

const SHIFT_RUN: usize = 3;

fn shift_layout(g: &Graph) -> ConeLayout {
    ConeLayout::new(g, params(), Pooling::On).unwrap()
}

/// Ensemble of independent length-3 runs, about 10^4 rows in total.
fn shift_database(g: &Graph, rule: &LocalRule, seed: u64) -> ConeDatabase {
    let mut db = ConeDatabase::new(shift_layout(g), 2);
    for r in 0..(10_000 / SHIFT_RUN) as u64 {
        let f = simulate(g, rule, &SimConfig::uniform(SHIFT_RUN, seed * 1_000_000 + r, 2)).unwrap();
        db.add_series(&f).unwrap();
    }
    db
}

fn shift_oracle(g: &Graph, rule: &LocalRule) -> StateSet {
    let layout = shift_layout(g);
    let exact = exact_conditionals(g, rule, &[0.5, 0.5], &layout).unwrap();
    oracle_states(&layout, 2, &exact).unwrap()
}

fn system2() -> &'static System {
    static S: OnceLock<System> = OnceLock::new();
    S.get_or_init(|| {
        let g = Graph::ring(32).unwrap();
        let rule = LocalRule::shift(2, 32).unwrap();
        let db = shift_database(&g, &rule, 0);
        let states = conefield::reconstruct_states(&db, &TestConfig::chi_squared(ALPHA), 0).unwrap();
        let field = simulate(&g, &rule, &SimConfig::uniform(2000, 77, 2)).unwrap();
        let labels = label_field(&field, &states, &g, &params()).unwrap();
        System {
            g,
            rule,
            states,
            db,
            field,
            labels,
        }
    })
}

fn rule184_fit(steps: usize, seed: u64) -> (Graph, FieldSeries, ConeDatabase, StateSet) {
    let g = Graph::ring(64).unwrap();
    let f = simulate(&g, &LocalRule::rule184(64).unwrap(), &SimConfig::uniform(steps, seed, 2)).unwrap();
    let db = build_cone_database(&f, &g, params(), Pooling::On).unwrap();
    let s = conefield::reconstruct_states(&db, &TestConfig::chi_squared(ALPHA), seed).unwrap();
    (g, f, db, s)
}

fn system3() -> &'static System {
    static S: OnceLock<System> = OnceLock::new();
    S.get_or_init(|| {
        let (g, field, db, states) = rule184_fit(10_000, 0);
        let labels = label_field(&field, &states, &g, &params()).unwrap();
        System {
            g,
            rule: LocalRule::rule184(64).unwrap(),
            states,
            db,
            field,
            labels,
        }
    })
}

#[test]
fn iid_null_gives_one_state_per_class() {
    let t0 = Instant::now();
    let good = (0..20u64).filter(|&seed| iid_system(seed).4.max_states_per_class() == 1).count();
    let secs = t0.elapsed().as_secs_f64();
    check(
        1,
        "iid null",
        good >= 18 && secs < 30.0,
        format!("{good}/20 seeds with one state per class (need >= 18), {secs:.1} s (limit 30 s)"),
    );
}

#[test]
fn shift_matches_oracle_partition() {
    let t0 = Instant::now();
    let g = Graph::ring(32).unwrap();
    let rule = LocalRule::shift(2, 32).unwrap();
    let oracle = shift_oracle(&g, &rule);

    // Oracle shape: two states told apart by the present symbol.
    let v = oracle.layout.classes[0].vertices[0];
    let slot = oracle.layout.cones[v].past.iter().position(|o| *o == Offset::new(v, 0)).unwrap();
    let codec = oracle.past_codec(0);
    let keyed: Vec<Vec<u8>> = oracle.classes[0]
        .states
        .iter()
        .map(|s| {
            let mut sym: Vec<u8> = s.members.iter().map(|m| codec.decode(m).0[slot]).collect();
            sym.dedup();
            sym
        })
        .collect();
    let oracle_ok = oracle.state_count() == 2 && keyed.iter().all(|k| k.len() == 1) && keyed[0] != keyed[1];

    let long = simulate(&g, &rule, &SimConfig::uniform(2000, 77, 2)).unwrap();
    let mut matched = 0;
    let mut worst_c: f64 = 0.0;
    for seed in 0..20u64 {
        let db = shift_database(&g, &rule, seed);
        let s = conefield::reconstruct_states(&db, &TestConfig::chi_squared(ALPHA), seed).unwrap();
        if s.same_partition(&oracle) {
            matched += 1;
            let sf = label_field(&long, &s, &g, &params()).unwrap();
            let c = local_complexity::<f64>(&sf, &db, &s).unwrap().mean_c_bits();
            worst_c = worst_c.max((c - 1.0).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        2,
        "shift oracle",
        oracle_ok && matched >= 19 && worst_c <= 0.05 && secs < 30.0,
        format!(
            "oracle has 2 states keyed by (v,0): {oracle_ok}; {matched}/20 seeds equal the oracle partition (need >= 19); \
             max |H[S] - 1| = {worst_c:.4} bits (tol 0.05); {secs:.1} s (limit 30 s)"
        ),
    );
}

/// Plug-in `H[x(v,t+1) | past]` counted directly from ring neighbors.
fn ring_conditional_entropy(f: &FieldSeries) -> f64 {
    let n = f.vertex_count();
    let mut joint: BTreeMap<[u8; 5], u64> = BTreeMap::new();
    for t in 1..f.steps() - 1 {
        for v in 0..n {
            let (l, r) = ((v + n - 1) % n, (v + 1) % n);
            let key = [f.get(t, v), f.get(t - 1, l), f.get(t - 1, v), f.get(t - 1, r), f.get(t + 1, v)];
            *joint.entry(key).or_insert(0) += 1;
        }
    }
    let mut pasts: BTreeMap<[u8; 4], u64> = BTreeMap::new();
    for (k, &c) in &joint {
        *pasts.entry([k[0], k[1], k[2], k[3]]).or_insert(0) += c;
    }
    let h_joint: f64 = entropy(joint.values().copied());
    let h_past: f64 = entropy(pasts.values().copied());
    h_joint - h_past
}

#[test]
fn rule184_states_are_stable() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let mut counts = Vec::new();
        for steps in [2_000, 10_000, 50_000] {
            let (_, f, _, s) = rule184_fit(steps, seed);
            let pred = Predictor::new(s.clone(), PredictMode::NextStep).unwrap();
            let loss = evaluate_predictor(&pred, &f).unwrap().log_loss_bits_per_point;
            let h = ring_conditional_entropy(&f);
            ok &= (loss - h).abs() <= 0.05;
            counts.push((s.state_count(), loss - h));
        }
        let n: Vec<usize> = counts.iter().map(|c| c.0).collect();
        ok &= n[1] == n[2] && n[2] <= 2 * n[0].max(1);
        lines.push(format!(
            "seed {seed}: states {n:?}, loss - H = {}",
            counts.iter().map(|c| format!("{:.4}", c.1)).collect::<Vec<_>>().join("/")
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    check(3, "rule-184 stability", ok, format!("{}; {secs:.1} s (limit 120 s)", lines.join("; ")));
}

#[test]
fn predictive_information_is_bounded_by_state_entropy() {
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for (name, sys) in [("1", system1()), ("2", system2()), ("3", system3())] {
        let r = local_complexity::<f64>(&sys.labels, &sys.db, &sys.states).unwrap();
        let excess = r
            .classes
            .iter()
            .map(|c| c.predictive_info_lower_bits - c.state_entropy_bits)
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(excess);
        parts.push(format!("system {name} max I - H[S] = {excess:.4}"));
    }
    check(4, "bound check", worst <= 0.02, format!("{} (slack 0.02 bits)", parts.join(", ")));
}

#[test]
fn transitions_are_deterministic_on_the_shift() {
    let sys = system2();
    let oracle = shift_oracle(&sys.g, &sys.rule);
    let oracle_labels = label_field(&sys.field, &oracle, &sys.g, &params()).unwrap();
    let tt_oracle = learn_transitions(&oracle_labels, &sys.field, &sys.g, &oracle.layout).unwrap();
    let tt = learn_transitions(&sys.labels, &sys.field, &sys.g, &sys.states.layout).unwrap();
    let geom = MoveGeometry::new(&sys.g, &sys.states.layout).unwrap();
    let samples = random_path_pairs(&sys.g, sys.field.steps(), 2, 100, 6, 11).unwrap();
    let paths = path_independence_check(&tt, &geom, &samples, &sys.labels, &sys.field).unwrap();
    let pass = tt_oracle.conflicting_keys() == 0 && tt.conflict_fraction() <= 0.01 && paths.violations == 0 && paths.evaluated > 0;
    check(
        5,
        "transition determinism",
        pass,
        format!(
            "oracle labels: {} conflicting of {} keys; reconstructed: {:.4} conflicting fraction (limit 0.01); \
             paths: {} violations over {} evaluated of {} samples",
            tt_oracle.conflicting_keys(),
            tt_oracle.key_count(),
            tt.conflict_fraction(),
            paths.violations,
            paths.evaluated,
            paths.samples
        ),
    );
}

#[test]
fn filter_recovers_withheld_row() {
    let sys = system2();
    let (g, s) = (&sys.g, &sys.states);
    let tt = learn_transitions(&sys.labels, &sys.field, g, &s.layout).unwrap();

    // The first row of the observed field has no past in range; truth comes
    // from the run that includes the row before it.
    let full = simulate(g, &sys.rule, &SimConfig::uniform(1001, 4242, 2)).unwrap();
    let truth = label_field(&full, s, g, &params()).unwrap();
    let observed = full.slice_rows(1, full.steps());
    let est = recursive_filter(&observed, s, &tt, g).unwrap();

    let (mut total, mut right, mut first_total, mut first_right) = (0u64, 0u64, 0u64, 0u64);
    for t in 0..observed.steps() {
        for v in 0..observed.vertex_count() {
            let Some(want) = truth.get(t + 1, v) else { continue };
            let hit = est.singleton(t, v) == Some(want);
            total += 1;
            right += hit as u64;
            if t == 0 {
                first_total += 1;
                first_right += hit as u64;
            }
        }
    }
    let frac = right as f64 / total as f64;
    let contradictions = est.summary().contradiction_count;
    check(
        6,
        "filter resolution",
        frac >= 0.99 && contradictions == 0 && first_total > 0 && first_right == first_total,
        format!(
            "{right}/{total} = {frac:.4} correct singletons (need >= 0.99); withheld row {first_right}/{first_total}; \
             {contradictions} contradictions"
        ),
    );
}

/// Patch tallies need many independent samples: one per time step on system 1,
/// whose union cones span 7 past and 5 future cells, and one per short run on
/// the shift, whose single long runs cycle through a single ring pattern.
fn patch_tally(sys: &System, shift: bool) -> PatchTally {
    let (u, p) = (0, params());
    let cones = PatchCones::new(&sys.g, &[u, sys.g.neighbors(u)[0]], &p).unwrap();
    let mut tally = PatchTally::new(cones);
    let runs: Vec<FieldSeries> = if shift {
        (0..(10_000 / SHIFT_RUN) as u64)
            .map(|r| simulate(&sys.g, &sys.rule, &SimConfig::uniform(SHIFT_RUN, 7_000_000 + r, 2)).unwrap())
            .collect()
    } else {
        vec![simulate(&sys.g, &sys.rule, &SimConfig::uniform(100_000, 2000, 2)).unwrap()]
    };
    for f in &runs {
        tally.add(&label_field(f, &sys.states, &sys.g, &p).unwrap(), f).unwrap();
    }
    tally
}

#[test]
fn patch_keys_compose() {
    let cfg = CmiConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, sys, shift) in [("1", system1(), false), ("2", system2(), true)] {
        let tally = patch_tally(sys, shift);
        let partition = oracle_patch_partition(&sys.g, &sys.rule, &[0.5, 0.5], &tally.cones).unwrap();
        let fr = tally.function_violations(&partition);
        let cmi = tally.sufficiency(&cfg).unwrap();
        pass &= fr.violations == 0 && fr.unmapped_pasts == 0 && cmi.cmi_bits <= cfg.threshold_bits && cmi.verdict == CmiVerdict::Consistent;
        parts.push(format!(
            "system {name}: {} keys, {} violations, CMI {:.4} bits ({:?}, bias {:.4}, n {})",
            fr.keys, fr.violations, cmi.cmi_bits, cmi.verdict, cmi.bias_bits, cmi.n_samples
        ));
    }
    check(7, "patch composition", pass, parts.join("; "));
}

#[test]
fn markov_diagnostics_hold() {
    let cfg = CmiConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, sys, field_test) in [("1", system1(), true), ("2", system2(), true), ("3", system3(), false)] {
        let t = temporal_markov_test(&sys.labels, &ParentsSpec::from_graph(&sys.g), 2, &cfg).unwrap();
        pass &= t.cmi_bits <= cfg.threshold_bits && t.verdict == CmiVerdict::Consistent;
        let mut line = format!("system {name}: temporal {:.4} ({:?})", t.cmi_bits, t.verdict);
        if field_test {
            let m = markov_field_test(&sys.labels, &sys.g, Probe::default(), &cfg).unwrap();
            pass &= m.cmi_bits <= cfg.threshold_bits && m.verdict == CmiVerdict::Consistent;
            line += &format!(", field {:.4} ({:?})", m.cmi_bits, m.verdict);
        }
        parts.push(line);
    }
    check(8, "markov diagnostics", pass, format!("{} (threshold 0.05 bits)", parts.join("; ")));
}

fn table3(nx: usize, ny: usize, nz: usize, salt: u64) -> Vec<Vec<Vec<u64>>> {
    (0..nx)
        .map(|x| {
            (0..ny)
                .map(|y| (0..nz).map(|z| ((x as u64 * 7 + y as u64 * 13 + z as u64 * 5 + salt) * 2_654_435_761 % 97) + 1).collect())
                .collect()
        })
        .collect()
}

#[test]
fn estimator_identities() {
    let mut chain_err: f64 = 0.0;
    for salt in 0..12u64 {
        let (nx, ny, nz) = (2 + salt as usize % 3, 2 + salt as usize % 2, 2 + salt as usize % 4);
        let xyz = table3(nx, ny, nz, salt);
        let x_yz: Vec<Vec<u64>> = xyz.iter().map(|row| row.iter().flatten().copied().collect()).collect();
        let x_z: Vec<Vec<u64>> = xyz.iter().map(|row| (0..nz).map(|z| row.iter().map(|r| r[z]).sum()).collect()).collect();
        let whole: f64 = mutual_information(&x_yz).unwrap();
        let parts: f64 = mutual_information::<f64>(&x_z).unwrap() + conditional_mutual_information::<f64>(&xyz).unwrap();
        chain_err = chain_err.max((whole - parts).abs());
    }
    let mi: f64 = mutual_information(&[vec![30, 10], vec![10, 30]]).unwrap();
    // By hand: 1 - H2(1/4) with H2(1/4) = 2 - (3/4) log2 3.
    let hand = 1.0 - (2.0 - 0.75 * 3f64.log2());
    let pass = chain_err <= 1e-12 && (mi - 0.278).abs() <= 0.001;
    check(
        9,
        "estimator identities",
        pass,
        format!(
            "chain rule max error {chain_err:.2e} (tol 1e-12); MI[[30,10],[10,30]] = {mi:.6} bits vs target 0.278 +/- 0.001; \
             hand computation {hand:.15}, |MI - hand| = {:.1e}",
            (mi - hand).abs()
        ),
    );
}

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_conefield")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cli_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script: &[&[&str]] = &[
        &["graph", "--kind", "tree", "--n", "12", "--seed", "4", "-o", "OUT/tree.g"],
        &["graph", "--kind", "ring", "--n", "24", "-o", "OUT/ring.g"],
        &["simulate", "--graph", "OUT/ring.g", "--rule", "rule184", "--steps", "1500", "--seed", "8", "-o", "OUT/a.fld"],
        &["simulate", "--graph", "OUT/ring.g", "--rule", "rule184", "--steps", "400", "--seed", "9", "-o", "OUT/b.fld"],
        &["simulate", "--graph", "OUT/tree.g", "--rule", "iid", "--p", "0.3,0.7", "--steps", "500", "--seed", "2", "-o", "OUT/c.fld"],
        &["cones", "--graph", "OUT/ring.g", "--field", "OUT/a.fld", "--pooling", "on", "-o", "OUT/db.json"],
        &["reconstruct", "--graph", "OUT/ring.g", "--field", "OUT/a.fld", "--pooling", "on", "--alpha", "0.001", "--seed", "5", "-o", "OUT/s.json"],
        &["reconstruct", "--graph", "OUT/tree.g", "--field", "OUT/c.fld", "--test", "permutation", "--n-perm", "200", "--seed", "5", "-o", "OUT/t.json"],
        &["label", "--states", "OUT/s.json", "--field", "OUT/b.fld", "-o", "OUT/b.lab"],
        &["evaluate", "--states", "OUT/s.json", "--field", "OUT/b.fld", "-o", "OUT/eval.json"],
        &["filter", "--states", "OUT/s.json", "--train", "OUT/a.fld", "--field", "OUT/b.fld", "-o", "OUT/b.flt", "--summary", "OUT/filter.json"],
        &["complexity", "--states", "OUT/s.json", "--field", "OUT/a.fld", "-o", "OUT/c.json", "--csv", "OUT/c.csv"],
        &["markov-test", "--states", "OUT/s.json", "--field", "OUT/a.fld", "-o", "OUT/m.json"],
        &["pipeline", "--graph", "OUT/ring.g", "--rule", "shift", "--steps", "300", "--seed", "3", "--out-dir", "OUT/pipe"],
    ];
    for out in ["run1", "run2"] {
        std::fs::create_dir_all(d.join(out)).unwrap();
        for cmd in script {
            let args: Vec<String> = cmd.iter().map(|a| a.replace("OUT", out)).collect();
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            run_cli(d, &args);
        }
    }
    let mut files = Vec::new();
    let mut stack = vec![d.join("run1")];
    while let Some(p) = stack.pop() {
        for e in std::fs::read_dir(&p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|a| {
            let b = d.join("run2").join(a.strip_prefix(d.join("run1")).unwrap());
            std::fs::read(a).unwrap() != std::fs::read(b).unwrap()
        })
        .map(|p| p.display().to_string())
        .collect();
    check(
        10,
        "reproducibility",
        differing.is_empty() && files.len() >= 20,
        format!("{} output files compared across two runs, {} differ {differing:?}", files.len(), differing.len()),
    );
}
