use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use subshuffle::accountant::{
    conversion_penalty, dp_from_bound, lower_reference, total_privacy, AccountantConfig,
    DEFAULT_LAMBDA_MAX,
};
use subshuffle::baselines::baseline_total;
use subshuffle::bounds::{BoundEvaluator, CurveKind, SubsampledShuffleParams};
use subshuffle::oracle::suites::{Suite, SuiteReport};
use subshuffle::sgd::{self, ConvexProblem, LrSchedule, ProblemSpec, SgdConfig, SgdRunReport};

use crate::config::{or_default, require_out, required, BoundKind, FileConfig};
use crate::output::{emit, write_all, table_artifacts, Artifact, Cell, Table};
use crate::sweep::{Axis, SweepSpec};
use crate::{
    BoundArgs, Cli, Command, CompareArgs, ComposeArgs, ConvertArgs, OracleArgs, Outcome, ParamArgs,
    SearchArgs, SimulateArgs,
};

pub fn dispatch(cli: Cli) -> Result<Outcome> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Bound(a) => bound(&a, &file, out),
        Command::Convert(a) => convert(&a, &file, out),
        Command::Compose(a) => compose(&a, &file, out),
        Command::Compare(a) => compare(&a, &file, out),
        Command::Simulate(a) => simulate(&a, &file, out),
        Command::Oracle(a) => oracle(&a, &file, out),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
struct ParamValues {
    n: u64,
    k: u64,
    eps0: f64,
}

fn params(a: &ParamArgs, file: &FileConfig) -> Result<SubsampledShuffleParams> {
    let n = required(a.n, file.n, "n")?;
    let k = required(a.k, file.k, "k")?;
    let eps0 = required(a.eps0, file.eps0, "eps0")?;
    Ok(SubsampledShuffleParams::new(n, k, eps0)?)
}

fn param_values(p: &SubsampledShuffleParams) -> ParamValues {
    ParamValues {
        n: p.n(),
        k: p.k(),
        eps0: p.eps0(),
    }
}

fn accountant(rounds: u64, delta: f64, s: &SearchArgs, file: &FileConfig) -> Result<AccountantConfig> {
    let lambda_max = or_default(s.lambda_max, file.lambda_max, DEFAULT_LAMBDA_MAX);
    let exact = s.exact_search || file.exact_search.unwrap_or(false);
    Ok(AccountantConfig::new(rounds, delta)?
        .with_lambda_max(lambda_max)?
        .with_exact_search(exact))
}

fn single_rounds(flag: Option<u64>, file: &FileConfig) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.rounds.clone().map(|r| r.into_vec()) {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(v[0])),
        Some(_) => bail!("`rounds` in --config must be a single number for this command"),
    }
}

fn bound(a: &BoundArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let p = params(&a.params, file)?;
    let lo = or_default(a.lambda_min, file.lambda_min, 2);
    let hi = or_default(a.lambda_max, file.lambda_max, 32);
    if lo < 2 {
        bail!("lambda-min must be >= 2, got {lo}");
    }
    if lo > hi {
        bail!("empty order range {lo}..={hi}");
    }
    let mut upper = BoundEvaluator::new(p, CurveKind::UpperBound)?;
    let mut lower = BoundEvaluator::new(p, CurveKind::LowerBound)?;
    let mut table = Table::new(&["lambda", "eps_upper", "eps_lower"]);
    for lambda in lo..=hi {
        table.push(vec![lambda.into(), upper.eval(lambda)?.into(), lower.eval(lambda)?.into()]);
    }

    #[derive(Serialize)]
    struct Inputs {
        params: ParamValues,
        lambda_min: u32,
        lambda_max: u32,
    }
    let inputs = Inputs {
        params: param_values(&p),
        lambda_min: lo,
        lambda_max: hi,
    };
    emit(out, "bound", "bound", &inputs, &table)?;
    Ok(Outcome::Ok)
}

fn convert(a: &ConvertArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let p = params(&a.params, file)?;
    let rounds = single_rounds(a.rounds, file)?.unwrap_or(1);
    let delta = required(a.delta, file.delta, "delta")?;
    let cfg = accountant(rounds, delta, &a.search, file)?;
    let kind = or_default(a.bound, file.bound, BoundKind::Upper);
    let curve = match kind {
        BoundKind::Upper => CurveKind::UpperBound,
        BoundKind::Lower => CurveKind::LowerBound,
    };
    let g = dp_from_bound(&p, &cfg, curve)?;
    let mut table = Table::new(&["eps", "delta", "argmin_lambda", "eps_unclamped"]);
    table.push(vec![
        g.eps.into(),
        g.delta.into(),
        g.argmin_lambda.unwrap_or(0).into(),
        g.eps_unclamped.unwrap_or(g.eps).into(),
    ]);

    #[derive(Serialize)]
    struct Inputs {
        params: ParamValues,
        accountant: AccountantConfig,
        bound: BoundKind,
    }
    let inputs = Inputs {
        params: param_values(&p),
        accountant: cfg,
        bound: kind,
    };
    emit(out, "convert", "convert", &inputs, &table)?;
    Ok(Outcome::Ok)
}

fn compose(a: &ComposeArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let p = params(&a.params, file)?;
    let rounds = match (&a.rounds, &file.rounds) {
        (Some(r), _) => r.clone(),
        (None, Some(r)) => r.clone().into_vec(),
        (None, None) => bail!("missing --rounds (flag or `rounds` in --config)"),
    };
    if rounds.is_empty() {
        bail!("--rounds must list at least one value");
    }
    let delta = required(a.delta, file.delta, "delta")?;
    let cfgs = rounds
        .iter()
        .map(|&t| accountant(t, delta, &a.search, file))
        .collect::<Result<Vec<_>>>()?;
    let rows = cfgs
        .par_iter()
        .map(|cfg| -> Result<Vec<Cell>> {
            let up = total_privacy(&p, cfg)?;
            let lo = lower_reference(&p, cfg)?;
            Ok(vec![
                cfg.rounds.into(),
                up.eps.into(),
                up.argmin_lambda.unwrap_or(0).into(),
                lo.eps.into(),
                lo.argmin_lambda.unwrap_or(0).into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&[
        "rounds",
        "eps_upper",
        "argmin_lambda_upper",
        "eps_lower",
        "argmin_lambda_lower",
    ]);
    rows.into_iter().for_each(|r| table.push(r));

    #[derive(Serialize)]
    struct Inputs {
        params: ParamValues,
        rounds: Vec<u64>,
        delta: f64,
        lambda_max: u32,
        exact_search: bool,
    }
    let inputs = Inputs {
        params: param_values(&p),
        rounds,
        delta,
        lambda_max: cfgs[0].lambda_max,
        exact_search: cfgs[0].exact_search,
    };
    emit(out, "compose", "compose", &inputs, &table)?;
    Ok(Outcome::Ok)
}

/// One resolved point of a comparison sweep.
#[derive(Debug, Clone, Copy)]
struct ComparePoint {
    params: SubsampledShuffleParams,
    acct: AccountantConfig,
    /// Set on the lambda axis: evaluate this order only.
    order: Option<u32>,
}

fn compare_point(pt: &ComparePoint) -> Result<Vec<Cell>> {
    let (ours, lower) = match pt.order {
        None => (
            total_privacy(&pt.params, &pt.acct)?.eps,
            lower_reference(&pt.params, &pt.acct)?.eps,
        ),
        Some(lambda) => {
            let t = pt.acct.rounds as f64;
            let pen = conversion_penalty(lambda, pt.acct.delta);
            let mut up = BoundEvaluator::new(pt.params, CurveKind::UpperBound)?;
            let mut lo = BoundEvaluator::new(pt.params, CurveKind::LowerBound)?;
            (
                (t * up.eval(lambda)? + pen).max(0.0),
                (t * lo.eval(lambda)? + pen).max(0.0),
            )
        }
    };
    let base = baseline_total(&pt.params, pt.acct.rounds, pt.acct.delta)?;
    let regime = if base.degenerate() { "degenerate" } else { "amplified" };
    Ok(vec![
        ours.into(),
        base.guarantee.eps.into(),
        lower.into(),
        regime.into(),
    ])
}

fn compare(a: &CompareArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let axis = required(a.axis, file.axis, "axis")?;
    let (values, range) = if a.values.is_some() || a.range.is_some() {
        (a.values.clone(), a.range)
    } else {
        (file.values.clone(), file.range)
    };
    let sweep = SweepSpec::new(axis, values, range)?;
    let delta = required(a.delta, file.delta, "delta")?;
    let fixed = |flag: Option<u64>, file_v: Option<u64>, name: &str, swept: Axis| -> Result<u64> {
        if axis == swept {
            Ok(flag.or(file_v).unwrap_or(0))
        } else {
            required(flag, file_v, name)
        }
    };
    let n = fixed(a.params.n, file.n, "n", Axis::N)?;
    let k = required(a.params.k, file.k, "k")?;
    let rounds = fixed(single_rounds(a.rounds, file)?, None, "rounds", Axis::T)?;
    let eps0 = if axis == Axis::Eps0 {
        0.0
    } else {
        required(a.params.eps0, file.eps0, "eps0")?
    };

    let points = sweep
        .values
        .iter()
        .map(|&v| -> Result<ComparePoint> {
            let (mut n, mut eps0, mut rounds, mut order) = (n, eps0, rounds, None);
            match axis {
                Axis::T => rounds = v as u64,
                Axis::N => n = v as u64,
                Axis::Eps0 => eps0 = v,
                Axis::Lambda => {
                    if v > u32::MAX as f64 {
                        bail!("order {v} too large");
                    }
                    order = Some(v as u32)
                }
            }
            let params = SubsampledShuffleParams::new(n, k, eps0)
                .with_context(|| format!("at {} = {v}", axis.name()))?;
            let acct = accountant(rounds, delta, &a.search, file)?;
            Ok(ComparePoint { params, acct, order })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = points
        .par_iter()
        .map(compare_point)
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["axis_value", "eps_ours", "eps_baseline", "eps_lower_ref", "baseline_regime"]);
    for (v, row) in sweep.values.iter().zip(rows) {
        let x: Cell = if axis == Axis::Eps0 { (*v).into() } else { (*v as u64).into() };
        let mut r = vec![x];
        r.extend(row);
        table.push(r);
    }

    #[derive(Serialize)]
    struct Inputs<'a> {
        sweep: &'a SweepSpec,
        n: Option<u64>,
        k: u64,
        eps0: Option<f64>,
        rounds: Option<u64>,
        delta: f64,
        lambda_max: u32,
        exact_search: bool,
    }
    let inputs = Inputs {
        sweep: &sweep,
        n: (axis != Axis::N).then_some(n),
        k,
        eps0: (axis != Axis::Eps0).then_some(eps0),
        rounds: (axis != Axis::T).then_some(rounds),
        delta,
        lambda_max: points[0].acct.lambda_max,
        exact_search: points[0].acct.exact_search,
    };
    emit(out, "compare", "compare", &inputs, &table)?;
    Ok(Outcome::Ok)
}

/// Problem and SGD settings used when nothing else is given.
pub fn default_simulation() -> (ProblemSpec, SgdConfig) {
    (
        ProblemSpec::least_squares(1000, 10, 1.0, 0),
        SgdConfig::new(2000, 100, 2.0, 0),
    )
}

/// Flags, then the `problem`/`sgd` blocks, then top-level keys, then
/// [`default_simulation`].
pub fn simulation_inputs(a: &SimulateArgs, file: &FileConfig) -> Result<(ProblemSpec, SgdConfig)> {
    let (mut problem, mut sgd) = default_simulation();
    if let Some(p) = file.problem {
        problem = p;
    }
    if file.problem.is_none() {
        if let Some(n) = file.n {
            problem.n = n as usize;
        }
    }
    if let Some(n) = a.n {
        problem.n = n;
    }
    if let Some(d) = a.d {
        problem.d = d;
    }
    if let Some(r) = a.radius {
        problem.radius = r;
    }
    problem.validate()?;

    let s = file.sgd.clone().unwrap_or_default();
    let top_rounds = single_rounds(None, file)?;
    sgd.rounds = a.rounds.or(s.rounds).or(top_rounds).unwrap_or(sgd.rounds);
    sgd.k = a.k.or(s.k.map(|k| k as usize)).or(file.k.map(|k| k as usize)).unwrap_or(sgd.k);
    sgd.eps0 = a.eps0.or(s.eps0).or(file.eps0).unwrap_or(sgd.eps0);
    sgd.delta = a.delta.or(s.delta).or(file.delta).unwrap_or(sgd.delta);
    sgd.seed = a.seed.or(s.seed).or(file.seed).unwrap_or(sgd.seed);
    sgd.clip = a.clip.or(s.clip);
    sgd.lambda_max = a.lambda_max.or(s.lambda_max).or(file.lambda_max).unwrap_or(sgd.lambda_max);
    sgd.bypass_randomizer = a.bypass_randomizer || s.bypass_randomizer.unwrap_or(false);
    sgd.lr = match (a.constant_lr, s.lr) {
        (Some(eta), _) => LrSchedule::Constant { eta },
        (None, Some(lr)) => lr,
        (None, None) => sgd.lr,
    };
    Ok((problem, sgd))
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    problem: &'a ProblemSpec,
    sgd: &'a SgdConfig,
    lipschitz: f64,
    opt_value: f64,
    final_suboptimality: f64,
    convergence_bound: f64,
    within_convergence_bound: bool,
    second_moment: f64,
    second_moment_bound: f64,
    diameter: f64,
    privacy: &'a Option<subshuffle::DpGuarantee>,
    final_theta: &'a [f64],
}

fn simulate(a: &SimulateArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let dir = require_out(out.map(Path::to_path_buf).as_ref())?.clone();
    let (spec, sgd_cfg) = simulation_inputs(a, file)?;
    let problem = ConvexProblem::synthetic(spec)?;
    let resolved = sgd_cfg.resolve(&problem)?;
    let report: SgdRunReport = sgd::run(&problem, &resolved)?;

    let mut table = Table::new(&["round", "objective", "suboptimality"]);
    for p in &report.trajectory {
        table.push(vec![p.round.into(), p.objective.into(), p.suboptimality.into()]);
    }
    #[derive(Serialize)]
    struct Inputs<'a> {
        problem: &'a ProblemSpec,
        sgd: &'a SgdConfig,
    }
    let inputs = Inputs {
        problem: &spec,
        sgd: &resolved,
    };
    let summary = SimulationSummary {
        problem: &spec,
        sgd: &resolved,
        lipschitz: problem.lipschitz(),
        opt_value: problem.opt_value(),
        final_suboptimality: report.final_suboptimality,
        convergence_bound: report.convergence_bound,
        within_convergence_bound: report.within_convergence_bound(),
        second_moment: report.second_moment,
        second_moment_bound: report.second_moment_bound,
        diameter: report.diameter,
        privacy: &report.privacy,
        final_theta: &report.final_theta,
    };
    let mut files = table_artifacts("trajectory", "simulate", &inputs, &table)?;
    files.push(Artifact::json("privacy.json", &summary)?);
    write_all(&dir, &files)?;
    Ok(Outcome::Ok)
}

/// Parses a suite name or `all`.
pub fn parse_suites(name: &str) -> Result<Vec<Suite>> {
    if name == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    Ok(vec![name.parse::<Suite>()?])
}

fn oracle(a: &OracleArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let suites = parse_suites(&a.suite)?;
    let seed = or_default(a.seed, file.seed, 0);
    let reports = suites
        .par_iter()
        .map(|s| s.run(seed))
        .collect::<subshuffle::Result<Vec<SuiteReport>>>()?;
    let mut table = Table::new(&["suite", "passed", "checks", "worst_slack", "worst_case"]);
    for r in &reports {
        eprintln!(
            "{} {}: {} checks, worst slack {:.6e} at {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.checks,
            r.worst_slack,
            r.worst_case
        );
        table.push(vec![
            r.suite.clone().into(),
            if r.passed { "true" } else { "false" }.into(),
            r.checks.into(),
            r.worst_slack.into(),
            r.worst_case.clone().into(),
        ]);
    }

    #[derive(Serialize)]
    struct Inputs {
        suites: Vec<&'static str>,
        seed: u64,
    }
    let inputs = Inputs {
        suites: suites.iter().map(|s| s.name()).collect(),
        seed,
    };
    emit(out, "oracle", "oracle", &inputs, &table)?;
    Ok(if reports.iter().all(|r| r.passed) {
        Outcome::Ok
    } else {
        Outcome::InvariantFailure
    })
}
