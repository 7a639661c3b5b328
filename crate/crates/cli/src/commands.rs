use std::fs;
use std::path::{Path, PathBuf};

use cashplan_core::demand_fit::{fit_all, read_samples_csv};
use cashplan_core::evaluation::{
    self, EvaluationReport, ParameterValue, Solver, StudyParameter, REPAIR_POLICY,
};
use cashplan_core::planner::{self, BuildOptions, ModelKind};
use cashplan_core::scenario_gen::{self, branching_factor, ScenarioTree};
use cashplan_core::scenario_reduce::{fast_forward_select, ScenarioFan};
use cashplan_core::solver::{backend_from_env, lp_format, Backend, SolveOptions};
use cashplan_core::{presets, Error, InstanceConfig, Result};

use crate::args::*;
use crate::manifest::{RunManifest, SolverRecord};

const BUILTIN_CONFIG: &str = "builtin:paper";

/// Collects the files a command writes so the manifest can checksum them.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn write_fan(&mut self, name: &str, fan: &ScenarioFan) -> Result<()> {
        let mut buf = Vec::new();
        fan.write_csv(&mut buf)?;
        self.write(name, buf)
    }

    fn write_report(&mut self, report: &EvaluationReport) -> Result<()> {
        let names = report.write_csvs(&self.dir)?;
        self.files.extend(names);
        self.write_json("report.json", report)
    }

    fn finish(self, manifest: RunManifest) -> Result<()> {
        manifest.finish(&self.dir, &self.files)
    }
}

fn load_config(path: Option<&Path>) -> Result<(InstanceConfig, String)> {
    match path {
        Some(p) => Ok((InstanceConfig::load(p)?.validated()?, p.display().to_string())),
        None => Ok((presets::paper_instance(), BUILTIN_CONFIG.to_string())),
    }
}

fn read_fan(path: &Path) -> Result<ScenarioFan> {
    ScenarioFan::read_csv(fs::File::open(path)?)
}

fn solver_record(backend: &dyn Backend, options: &SolveOptions) -> SolverRecord {
    SolverRecord {
        backend: backend.name().to_string(),
        options: options.clone(),
    }
}

fn reduce(fan: ScenarioFan, k: usize) -> Result<ScenarioFan> {
    if k == 0 || k >= fan.len() {
        Ok(fan)
    } else {
        Ok(fast_forward_select(&fan, k)?.apply(&fan))
    }
}

fn parse_list<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| parse(x.trim())).collect()
}

/// Value lists of the published parameter study. Initial cash runs past the
/// published list to 40,000 in steps of 5,000.
pub fn default_values(param: StudyParameter) -> Vec<ParameterValue> {
    let nums = |v: &[f64]| v.iter().map(|&x| ParameterValue::Number(x)).collect();
    match param {
        StudyParameter::InitialCash => nums(&[10_000.0, 15_000.0, 20_000.0, 25_000.0, 30_000.0, 35_000.0, 40_000.0]),
        StudyParameter::ReceiptDelay => nums(&[0.0, 1.0, 2.0, 3.0, 4.0]),
        StudyParameter::Overhead => nums(&[0.0, 1_000.0, 2_000.0, 3_000.0, 4_000.0]),
        StudyParameter::Pattern => ["000000", "000011", "001111", "111111"]
            .iter()
            .map(|p| ParameterValue::parse(StudyParameter::Pattern, p).expect("valid pattern"))
            .collect(),
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(a) => fit(a),
        Command::Gen(a) => gen(a),
        Command::Reduce(a) => reduce_cmd(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::ReproPaper(a) => repro_paper(a),
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let sets = read_samples_csv(fs::File::open(&a.input)?)?;
    if sets.is_empty() {
        return Err(Error::Input(format!("{} holds no observations", a.input.display())));
    }
    let fits = fit_all(&sets, a.rate, a.lag)?;
    let mut out = Outputs::create(&a.out)?;
    out.write_json("fits.json", &fits)?;
    let mut m = RunManifest::new("fit", &a.out);
    m.config = Some(a.input.display().to_string());
    out.finish(m)
}

fn gen(a: GenArgs) -> Result<()> {
    let (cfg, config_name) = load_config(a.config.as_deref())?;
    if a.trees == 0 {
        return Err(Error::Input("--trees must be at least 1".into()));
    }
    let y = a
        .branches
        .unwrap_or_else(|| branching_factor(cfg.n_products, cfg.horizon, a.moments));
    let mut out = Outputs::create(&a.out)?;
    let mut m = RunManifest::new("gen", &a.out);
    m.config = Some(config_name);
    let mut diagnostics = Vec::new();
    for k in 1..=a.trees {
        let seed = a.seed.wrapping_add(k as u64 - 1);
        m.seeds.insert(format!("tree_{k}"), seed);
        let matched = scenario_gen::generate_branch_sets_matching(&cfg, a.moments, y, seed, a.starts)?;
        let sets = matched.iter().map(|(r, o)| (*r, o.branches.clone())).collect();
        let tree = scenario_gen::build_tree(&cfg, &sets)?;
        out.write(&format!("tree_{k}.json"), tree.to_json_pretty() + "\n")?;
        out.write_fan(&format!("fan_{k}.csv"), &tree.to_fan())?;
        diagnostics.push(matched);
    }
    out.write_json("branch_sets.json", &diagnostics)?;
    out.finish(m)
}

fn reduce_cmd(a: ReduceArgs) -> Result<()> {
    let fan = read_fan(&a.fan)?;
    let r = fast_forward_select(&fan, a.k)?;
    let mut out = Outputs::create(&a.out)?;
    out.write_fan("reduced.csv", &r.apply(&fan))?;
    out.write_json("reduction.json", &r)?;
    let mut m = RunManifest::new("reduce", &a.out);
    m.config = Some(a.fan.display().to_string());
    out.finish(m)
}

fn solve(a: SolveArgs) -> Result<()> {
    let (cfg, config_name) = load_config(a.config.as_deref())?;
    let fan = match (&a.demand, a.model.is_stochastic()) {
        (Some(p), _) => read_fan(p)?,
        (None, false) => ScenarioFan::single(cfg.mean_forecast()),
        (None, true) => return Err(Error::Input(format!("--demand is required for {}", a.model))),
    };
    let backend = backend_from_env()?;
    let options = a.solver.options();
    let build = BuildOptions::default();
    let plan = planner::solve(&cfg, &fan, a.model, &build, backend.as_ref(), &options)?;
    let mut out = Outputs::create(&a.out)?;
    out.write("solution.json", plan.to_json_pretty() + "\n")?;
    let mut csv = Vec::new();
    plan.write_summary_csv(&cfg, &mut csv)?;
    out.write("summary.csv", csv)?;
    if a.write_lp {
        let built = planner::build(&cfg, &fan, a.model.loans(), &build)?;
        out.write("model.lp", lp_format::write_lp(&built.model))?;
    }
    let mut m = RunManifest::new("solve", &a.out);
    m.config = Some(config_name);
    m.seeds.insert("solver".into(), options.seed as u64);
    m.solver = Some(solver_record(backend.as_ref(), &options));
    out.finish(m)
}

/// `tree_K.json` files of a directory, ordered by K.
fn read_trees(dir: &Path) -> Result<Vec<ScenarioTree>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(k) = name
            .strip_prefix("tree_")
            .and_then(|r| r.strip_suffix(".json"))
            .and_then(|k| k.parse().ok())
        {
            found.push((k, path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Input(format!("no tree_K.json files in {}", dir.display())));
    }
    found
        .into_iter()
        .map(|(_, p)| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect()
}

fn check_tree(cfg: &InstanceConfig, tree: &ScenarioTree) -> Result<()> {
    if tree.n_products() != cfg.n_products || tree.horizon() != cfg.horizon {
        return Err(Error::Input(format!(
            "tree has {} products over {} periods, instance has {} over {}",
            tree.n_products(),
            tree.horizon(),
            cfg.n_products,
            cfg.horizon
        )));
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (cfg, config_name) = load_config(a.config.as_deref())?;
    let trees = read_trees(&a.trees_dir)?;
    for t in &trees {
        check_tree(&cfg, t)?;
    }
    let backend = backend_from_env()?;
    let options = a.solver.options();
    let s = Solver {
        backend: backend.as_ref(),
        options: &options,
    };
    let reduced = || -> Result<Vec<ScenarioFan>> { trees.iter().map(|t| reduce(t.to_fan(), a.reduce_to)).collect() };
    let mut report = EvaluationReport::default();
    match a.study {
        Study::VssEvpi => {
            let fan = reduce(trees[0].to_fan(), a.reduce_to)?;
            for loans in [false, true] {
                report
                    .value_of_information
                    .push(evaluation::value_of_information(&cfg, &fan, loans, s)?);
            }
            report.dv_repair_policy = Some(REPAIR_POLICY.to_string());
        }
        Study::Stability => {
            let fans = reduced()?;
            for loans in [false, true] {
                report.stability.push(evaluation::stability_matrix(&cfg, &fans, loans, s)?);
            }
        }
        Study::Sweep => {
            let sizes = parse_list(&a.sizes, |x| {
                x.parse::<usize>().map_err(|_| Error::Input(format!("bad sample size '{x}'")))
            })?;
            let full = trees[0].to_fan();
            for loans in [false, true] {
                let rows = evaluation::sample_size_sweep(&cfg, &full, &sizes, loans, s)?;
                report.sweep.push((ModelKind::stochastic(loans), rows));
            }
        }
        Study::ProfitGap => {
            let param: StudyParameter = a
                .param
                .as_deref()
                .ok_or_else(|| Error::Input("--param is required for the profit-gap study".into()))?
                .parse()?;
            let values = match &a.values {
                Some(v) => parse_list(v, |x| ParameterValue::parse(param, x))?,
                None => default_values(param),
            };
            let k = (a.reduce_to > 0).then_some(a.reduce_to);
            report
                .profit_gap
                .push(evaluation::profit_gap_study(&cfg, &trees[0], k, param, &values, s)?);
        }
    }
    let mut out = Outputs::create(&a.out)?;
    out.write_report(&report)?;
    let mut m = RunManifest::new("eval", &a.out);
    m.config = Some(config_name);
    m.seeds.insert("solver".into(), options.seed as u64);
    m.solver = Some(solver_record(backend.as_ref(), &options));
    out.finish(m)
}

fn repro_paper(a: ReproArgs) -> Result<()> {
    let cfg = presets::paper_instance();
    let k = if a.quick { a.scenarios.min(20) } else { a.scenarios };
    let backend = backend_from_env()?;
    let options = a.solver.options();
    let s = Solver {
        backend: backend.as_ref(),
        options: &options,
    };
    let mut out = Outputs::create(&a.out)?;
    out.write("instance.json", cfg.to_json_pretty() + "\n")?;

    let trees = presets::table3_branch_sets()
        .iter()
        .map(|b| scenario_gen::build_tree(&cfg, b))
        .collect::<Result<Vec<_>>>()?;
    let mut fans = Vec::new();
    for (i, t) in trees.iter().enumerate() {
        out.write(&format!("tree_{}.json", i + 1), t.to_json_pretty() + "\n")?;
        let fan = reduce(t.to_fan(), k)?;
        out.write_fan(&format!("reduced_{}.csv", i + 1), &fan)?;
        fans.push(fan);
    }

    let mut report = EvaluationReport::default();
    eprintln!("stability ({} scenarios per tree)", k);
    for loans in [false, true] {
        report.stability.push(evaluation::stability_matrix(&cfg, &fans, loans, s)?);
    }
    let mut cmp = String::from("model,solution_from,evaluated_on,objective,published,relative_difference\n");
    for (m, reference) in report
        .stability
        .iter()
        .zip([presets::REFERENCE_SO_S, presets::REFERENCE_OL_S])
    {
        for (a_, row) in m.values.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                let r = reference[a_][b];
                cmp += &format!("{},{},{},{v:.4},{r},{:.6}\n", m.kind, a_ + 1, b + 1, (v - r) / r);
            }
        }
    }
    out.write("table5_comparison.csv", cmp)?;

    eprintln!("value of information");
    for loans in [false, true] {
        report
            .value_of_information
            .push(evaluation::value_of_information(&cfg, &fans[0], loans, s)?);
    }
    report.dv_repair_policy = Some(REPAIR_POLICY.to_string());

    eprintln!("sample-size sweep");
    let sizes: Vec<usize> = if a.quick { vec![10, 20] } else { (1..=9).map(|i| 20 * i).collect() };
    let full = trees[0].to_fan();
    for loans in [false, true] {
        let rows = evaluation::sample_size_sweep(&cfg, &full, &sizes, loans, s)?;
        report.sweep.push((ModelKind::stochastic(loans), rows));
    }

    for param in [
        StudyParameter::InitialCash,
        StudyParameter::ReceiptDelay,
        StudyParameter::Overhead,
        StudyParameter::Pattern,
    ] {
        eprintln!("profit gap over {param}");
        let mut values = default_values(param);
        if a.quick {
            values.truncate(2);
        }
        report
            .profit_gap
            .push(evaluation::profit_gap_study(&cfg, &trees[0], Some(k), param, &values, s)?);
    }
    out.write_report(&report)?;

    let mut m = RunManifest::new("repro-paper", &a.out);
    m.config = Some(BUILTIN_CONFIG.to_string());
    m.seeds.insert("solver".into(), options.seed as u64);
    m.solver = Some(solver_record(backend.as_ref(), &options));
    out.finish(m)
}
