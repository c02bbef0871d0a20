use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use pcsat::bank::{evaluate, train_bank, Classification, ClassifierBank};
use pcsat::cache::SolutionCache;
use pcsat::dataset::{self, CorpusConfig, DatasetRecord, ShapeParams};
use pcsat::dnn::{kfold_validate, layer_dims, TrainConfig};
use pcsat::symexec::{self, parse_program, run_verified, Backend, RunOptions, RunReport};
use pcsat::{canonize, format_pc, parse_pc_named, vectorize, PathCondition, Solver, Verdict};
use serde_json::{json, Value};

use crate::config::Config;
use crate::{bench, BenchArgs, Cli, CliError, Command, Finish, GenDataArgs, SymexecArgs, TrainArgs};

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Prints `value` as one JSON document, or `human` otherwise.
pub(crate) fn emit(json_out: bool, value: &Value, human: &str) {
    let mut out = std::io::stdout().lock();
    if json_out {
        let _ = writeln!(out, "{value}");
    } else {
        let _ = out.write_all(human.as_bytes());
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

/// Non-empty lines that are not `#` comments, with 1-based line numbers.
fn pc_lines(path: &Path) -> Result<Vec<(usize, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn parse_line(path: &Path, line: usize, text: &str) -> Result<(PathCondition, BTreeMap<usize, String>), CliError> {
    parse_pc_named(text).map_err(|e| runtime(format!("{}:{line}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<Finish, CliError> {
    let cfg = Config::load(cli.global.config.as_deref())?;
    let json_out = cfg.flag(cli.global.json, "json")?;
    let seed: Option<u64> = cfg.pick(cli.global.seed.map(Some), "seed", None)?;
    match cli.command {
        Command::Canonize { file } => {
            cfg.check_keys("canonize", &[])?;
            canonize_cmd(&file, json_out)
        }
        Command::Vectorize { file, tmax } => {
            cfg.check_keys("vectorize", &["tmax"])?;
            let tmax = required(cfg.pick(tmax.map(Some), "tmax", None)?, "tmax")?;
            vectorize_cmd(&file, tmax, json_out)
        }
        Command::Solve { file, budget } => {
            cfg.check_keys("solve", &["budget"])?;
            let solver = Solver::new(cfg.pick(budget, "budget", pcsat::solver::DEFAULT_NODE_BUDGET)?);
            solve_cmd(&file, &solver, json_out)
        }
        Command::GenData(args) => gen_data(args, &cfg, seed, json_out),
        Command::Train(args) => train(args, &cfg, seed.unwrap_or(1), json_out),
        Command::Classify { bank, file } => {
            cfg.check_keys("classify", &["bank"])?;
            let bank = required(cfg.pick(bank.map(Some), "bank", None)?, "bank")?;
            classify_cmd(&bank, &file, json_out)
        }
        Command::Symexec(args) => symexec(args, &cfg, json_out),
        Command::Bench(args) => bench_cmd(args, &cfg, json_out),
    }
}

fn canonize_cmd(file: &Path, json_out: bool) -> Result<Finish, CliError> {
    let mut human = String::new();
    let mut results = Vec::new();
    for (line, text) in pc_lines(file)? {
        let (pc, _) = parse_line(file, line, &text)?;
        let canon = format_pc(&canonize(&pc));
        human.push_str(&canon);
        human.push('\n');
        results.push(json!({"input": text, "canonical": canon}));
    }
    emit(json_out, &json!({ "results": results }), &human);
    Ok(Finish::Clean)
}

fn vectorize_cmd(file: &Path, tmax: usize, json_out: bool) -> Result<Finish, CliError> {
    let mut blocks = Vec::new();
    let mut results = Vec::new();
    for (line, text) in pc_lines(file)? {
        let (pc, _) = parse_line(file, line, &text)?;
        let canon = canonize(&pc);
        let m = vectorize(&canon, tmax).map_err(|e| runtime(format!("{}:{line}: {e}", file.display())))?;
        blocks.push(m.to_text());
        results.push(json!({"canonical": format_pc(&canon), "rows": m.to_rows()}));
    }
    emit(json_out, &json!({ "tmax": tmax, "results": results }), &blocks.join("\n"));
    Ok(Finish::Clean)
}

fn solve_cmd(file: &Path, solver: &Solver, json_out: bool) -> Result<Finish, CliError> {
    let mut human = String::new();
    let mut results = Vec::new();
    let mut finish = Finish::Clean;
    for (line, text) in pc_lines(file)? {
        let (pc, names) = parse_line(file, line, &text)?;
        let name = |i: &usize| names.get(i).cloned().unwrap_or_else(|| format!("v{i}"));
        match solver.solve(&pc) {
            Ok(Verdict::Sat(model)) => {
                let shown: Vec<String> = model.iter().map(|(i, v)| format!("{}:{v}", name(i))).collect();
                human.push_str(&format!("SAT model={{{}}}\n", shown.join(", ")));
                let m: serde_json::Map<String, Value> = model
                    .iter()
                    .map(|(i, v)| (name(i), i64::try_from(v).map_or_else(|_| json!(v.to_string()), |x| json!(x))))
                    .collect();
                results.push(json!({"pc": text, "verdict": "SAT", "model": m}));
            }
            Ok(Verdict::Unsat) => {
                human.push_str("UNSAT\n");
                results.push(json!({"pc": text, "verdict": "UNSAT"}));
            }
            Err(e) => {
                finish = Finish::Unknown;
                human.push_str(&format!("UNKNOWN ({e})\n"));
                results.push(json!({"pc": text, "verdict": "UNKNOWN", "reason": e.to_string()}));
            }
        }
    }
    emit(json_out, &json!({ "results": results }), &human);
    Ok(finish)
}

fn gen_data(args: GenDataArgs, cfg: &Config, seed: Option<u64>, json_out: bool) -> Result<Finish, CliError> {
    cfg.check_keys(
        "gen-data",
        &["programs", "mutants", "out", "tmax", "dmin", "dmax", "max-states", "max-label-share", "budget", "shape"],
    )?;
    let d = CorpusConfig::default();
    let corpus = CorpusConfig {
        programs: cfg.pick(args.programs, "programs", d.programs)?,
        mutants: cfg.pick(args.mutants, "mutants", d.mutants)?,
        seed: seed.unwrap_or(d.seed),
        shape: cfg.get::<ShapeParams>("shape")?.unwrap_or(d.shape),
        t_max: cfg.pick(args.tmax, "tmax", d.t_max)?,
        d_min: cfg.pick(args.dmin, "dmin", d.d_min)?,
        d_max: cfg.pick(args.dmax, "dmax", d.d_max)?,
        max_label_share: cfg.pick(args.max_label_share, "max-label-share", d.max_label_share)?,
        max_states: cfg.pick(args.max_states, "max-states", d.max_states)?,
        node_budget: cfg.pick(args.budget, "budget", d.node_budget)?,
    };
    let out = required(cfg.pick(args.out.map(Some), "out", None)?, "out")?;
    if corpus.programs == 0 {
        return Err(CliError::Usage("--programs must be at least 1".into()));
    }
    if !(corpus.max_label_share >= 0.5 && corpus.max_label_share <= 1.0) {
        return Err(CliError::Usage("--max-label-share must lie in [0.5, 1]".into()));
    }
    let (records, report) = dataset::build_corpus(&corpus);
    dataset::save_jsonl(&records, &out).map_err(runtime)?;
    let value = json!({ "out": out, "config": corpus, "report": report });
    let human = serde_json::to_string_pretty(&value).expect("report serializes") + "\n";
    emit(json_out, &value, &human);
    Ok(Finish::Clean)
}

fn parse_dims(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--dims expects HxW such as 5x5, got `{s}`"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.parse().map_err(|_| bad())?;
    let w: usize = w.parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    dataset::load_jsonl(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn train(args: TrainArgs, cfg: &Config, seed: u64, json_out: bool) -> Result<Finish, CliError> {
    cfg.check_keys(
        "train",
        &[
            "data", "dims", "out", "kfold", "tmax", "split", "epochs", "batch-size", "learning-rate", "patience",
            "restarts", "class-weights", "test-out",
        ],
    )?;
    let d = TrainConfig::default();
    let data = required(cfg.pick(args.data.map(Some), "data", None)?, "data")?;
    let out = required(cfg.pick(args.out.map(Some), "out", None)?, "out")?;
    let (hidden, width) = parse_dims(&cfg.pick(args.dims, "dims", "5x5".to_string())?)?;
    let kfold = cfg.pick(args.kfold, "kfold", 0usize)?;
    let split = cfg.pick(args.split, "split", 0.8f64)?;
    let test_out: Option<PathBuf> = cfg.pick(args.test_out.map(Some), "test-out", None)?;
    let tcfg = TrainConfig {
        epochs: cfg.pick(args.epochs, "epochs", d.epochs)?,
        batch_size: cfg.pick(args.batch_size, "batch-size", d.batch_size)?,
        learning_rate: cfg.pick(args.learning_rate, "learning-rate", d.learning_rate)?,
        seed,
        validation_split: d.validation_split,
        k: kfold,
        patience: cfg.pick(args.patience, "patience", d.patience)?,
        class_weights: cfg.flag(args.class_weights, "class-weights")?,
        restarts: cfg.pick(args.restarts, "restarts", d.restarts)?,
    };
    tcfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if kfold == 1 {
        return Err(CliError::Usage("--kfold needs k >= 2 (0 disables it)".into()));
    }

    let records = load_records(&data)?;
    let (train_set, test_set, stats) =
        dataset::split_and_stats(&records, seed, split).map_err(|e| CliError::Usage(e.to_string()))?;
    let t_max = cfg.pick(args.tmax, "tmax", CorpusConfig::default().t_max)?;
    let labeled = |rs: &[DatasetRecord]| -> Vec<(PathCondition, bool)> {
        rs.iter().map(|r| (r.path_condition(), r.sat)).collect()
    };
    let train_pcs = labeled(&train_set);
    let test_pcs = labeled(&test_set);
    let (bank, summary) = train_bank(&train_pcs, t_max, hidden, width, &tcfg).map_err(runtime)?;
    bank.save(&out).map_err(runtime)?;
    if let Some(p) = &test_out {
        dataset::save_jsonl(&test_set, p).map_err(runtime)?;
    }
    let ev = evaluate(&bank, &test_pcs);

    let mut kfold_means = BTreeMap::new();
    if kfold >= 2 {
        let mut by_d: BTreeMap<usize, Vec<_>> = BTreeMap::new();
        for (pc, sat) in &train_pcs {
            if let Ok(m) = vectorize(pc, t_max) {
                by_d.entry(pc.len()).or_default().push((m, *sat));
            }
        }
        for (d, rows) in by_d {
            if !bank.groups().contains_key(&d) || rows.len() < kfold {
                continue;
            }
            let dims = layer_dims(d * (t_max + 2), hidden, width);
            match kfold_validate(&rows, &dims, &TrainConfig { seed: seed.wrapping_add(d as u64), ..tcfg.clone() }) {
                Ok(r) => {
                    kfold_means.insert(d, json!({"mean": r.mean, "spread": r.spread(), "folds": r.accuracy}));
                }
                Err(e) => log::warn!("k-fold on d = {d} failed: {e}"),
            }
        }
    }

    let mut groups = Vec::new();
    let mut human = format!(
        "trained {hidden}x{width} bank on {} records ({} held out), t_max {t_max}\n{:>4} {:>7} {:>6} {:>8} {:>9}{}\n",
        train_set.len(),
        test_set.len(),
        "d",
        "train",
        "sat%",
        "held-out",
        "accuracy",
        if kfold >= 2 { format!(" {:>10}", "k-fold") } else { String::new() }
    );
    for g in &summary {
        let acc = ev.groups.get(&g.d);
        let kf = kfold_means.get(&g.d);
        human.push_str(&format!(
            "{:>4} {:>7} {:>6.1} {:>8} {:>9}{}\n",
            g.d,
            g.records,
            100.0 * g.sat as f64 / g.records.max(1) as f64,
            acc.map_or(0, |a| a.total),
            acc.map_or("-".into(), |a| format!("{:.4}", a.accuracy())),
            kf.map_or(String::new(), |k| format!(" {:>10.4}", k["mean"].as_f64().unwrap_or(0.0)))
        ));
        groups.push(json!({
            "d": g.d,
            "train_records": g.records,
            "train_sat": g.sat,
            "trained": g.report.is_some(),
            "best_epoch": g.report.as_ref().map(|r| r.best_epoch),
            "test_total": acc.map_or(0, |a| a.total),
            "test_correct": acc.map_or(0, |a| a.correct),
            "test_accuracy": acc.map(|a| a.accuracy()),
            "kfold": kf,
        }));
    }
    human.push_str(&format!("aggregate held-out accuracy {:.4}; {} held-out PCs unsupported\n", ev.aggregate(), ev.unsupported));
    let value = json!({
        "bank": out,
        "dims": format!("{hidden}x{width}"),
        "t_max": t_max,
        "train_size": train_set.len(),
        "test_size": test_set.len(),
        "groups": groups,
        "aggregate_accuracy": ev.aggregate(),
        "unsupported": ev.unsupported,
        "corpus": stats,
    });
    emit(json_out, &value, &human);
    Ok(Finish::Clean)
}

fn load_bank(path: &Path) -> Result<ClassifierBank, CliError> {
    ClassifierBank::load(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn classify_cmd(bank: &Path, file: &Path, json_out: bool) -> Result<Finish, CliError> {
    let bank = load_bank(bank)?;
    let mut human = String::new();
    let mut results = Vec::new();
    for (line, text) in pc_lines(file)? {
        let (pc, _) = parse_line(file, line, &text)?;
        match bank.check(&pc) {
            Classification::Classified(sat) => {
                let label = if sat { "SAT" } else { "UNSAT" };
                human.push_str(label);
                human.push('\n');
                results.push(json!({"pc": text, "label": label}));
            }
            Classification::Unsupported(why) => {
                human.push_str(&format!("UNSUPPORTED ({why})\n"));
                results.push(json!({"pc": text, "label": "UNSUPPORTED", "reason": why}));
            }
        }
    }
    emit(json_out, &json!({ "results": results }), &human);
    Ok(Finish::Clean)
}

fn symexec(args: SymexecArgs, cfg: &Config, json_out: bool) -> Result<Finish, CliError> {
    cfg.check_keys("symexec", &["max-states", "budget", "tests-out", "out", "cache-file"])?;
    let d = RunOptions::default();
    let opts = RunOptions {
        solver: Solver::new(cfg.pick(args.budget, "budget", pcsat::solver::DEFAULT_NODE_BUDGET)?),
        max_states: cfg.pick(args.max_states, "max-states", d.max_states)?,
        record_checks: false,
    };
    let text = std::fs::read_to_string(&args.program)
        .map_err(|e| runtime(format!("{}: {e}", args.program.display())))?;
    let program = parse_program(&text).map_err(|e| runtime(format!("{}: {e}", args.program.display())))?;
    let report = if let Some(bank) = &args.bank {
        let bank = load_bank(bank)?;
        if args.verify {
            run_verified(&program, &bank, &opts)
        } else {
            symexec::run(&program, &mut Backend::Classifier(&bank), &opts)
        }
    } else if args.cache {
        let cache_file: Option<PathBuf> = cfg.pick(args.cache_file.map(Some), "cache-file", None)?;
        let mut cache = match &cache_file {
            Some(p) if p.exists() => SolutionCache::load(p).map_err(runtime)?,
            _ => SolutionCache::new(),
        };
        let report = symexec::run(&program, &mut Backend::Cache(&mut cache), &opts);
        if let Some(p) = &cache_file {
            cache.save(p).map_err(runtime)?;
        }
        report
    } else {
        symexec::run(&program, &mut Backend::SolverOnly, &opts)
    };

    let tests_out: Option<PathBuf> = cfg.pick(args.tests_out.map(Some), "tests-out", None)?;
    if let Some(p) = tests_out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(runtime)?);
        report.write_tests_jsonl(&mut f).map_err(runtime)?;
        f.flush().map_err(runtime)?;
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    let out: Option<PathBuf> = cfg.pick(args.out.map(Some), "out", None)?;
    if let Some(p) = out {
        let body = serde_json::to_string_pretty(&value).expect("report serializes") + "\n";
        std::fs::write(&p, body).map_err(runtime)?;
    }
    emit(json_out, &value, &render_report(&report));
    Ok(if report.unknown_paths > 0 { Finish::Unknown } else { Finish::Clean })
}

fn render_report(r: &RunReport) -> String {
    let mut s = format!(
        "program {} ({} backend){}\n",
        r.program,
        r.backend,
        if r.complete { "" } else { " INCOMPLETE: state budget hit" }
    );
    let mut row = |k: &str, v: String| s.push_str(&format!("  {k:<20} {v}\n"));
    row("pcs checked", r.pcs_checked.to_string());
    row("states explored", r.states_explored.to_string());
    row("states pruned", r.pruned_states.to_string());
    row("leaf states", r.leaf_states.to_string());
    row("infeasible leaves", r.infeasible_leaves.to_string());
    row("unknown paths", r.unknown_paths.to_string());
    row("solver calls", r.solver_calls.to_string());
    row("classifier calls", r.classifier_calls.to_string());
    row("cache hits", r.cache_hits.to_string());
    row("type I corrections", r.type1_corrections.to_string());
    if let (Some(t1), Some(t2)) = (r.type1_count, r.type2_count) {
        row("type I", t1.to_string());
        row("type II", t2.to_string());
    }
    row("tests", r.tests.len().to_string());
    row("wall time ms", format!("{:.3}", r.elapsed_ms));
    for t in &r.tests {
        let inputs: Vec<String> = t.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!(
            "  test {} [{}] {}\n",
            t.path,
            match t.leaf {
                pcsat::symexec::LeafKind::Halt => "halt",
                pcsat::symexec::LeafKind::AssertFail => "assert_fail",
            },
            inputs.join(" ")
        ));
    }
    s
}

fn bench_cmd(args: BenchArgs, cfg: &Config, json_out: bool) -> Result<Finish, CliError> {
    cfg.check_keys("bench", &["bank", "data", "limit", "warmup", "budget"])?;
    let bank = load_bank(&required(cfg.pick(args.bank.map(Some), "bank", None)?, "bank")?)?;
    let data = required(cfg.pick(args.data.map(Some), "data", None)?, "data")?;
    let mut records = load_records(&data)?;
    if let Some(limit) = cfg.pick(args.limit.map(Some), "limit", None::<usize>)? {
        records.truncate(limit);
    }
    if records.is_empty() {
        return Err(runtime(format!("{}: no records", data.display())));
    }
    let warmup = cfg.pick(args.warmup, "warmup", 100usize)?;
    let solver = Solver::new(cfg.pick(args.budget, "budget", pcsat::solver::DEFAULT_NODE_BUDGET)?);
    let table = bench::run(&bank, &records, &solver, warmup);
    emit(json_out, &serde_json::to_value(&table).expect("table serializes"), &table.render());
    Ok(if table.unknown > 0 { Finish::Unknown } else { Finish::Clean })
}
