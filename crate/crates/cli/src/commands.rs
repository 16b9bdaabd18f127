use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use bet_core::baselines::{fit_axis_tree, fit_knn, Impurity};
use bet_core::envs::{generate_moons3, GridConfig, GridPursuit, ScriptedTeacher};
use bet_core::explain::{bone_catalog, min_perturbation, risk_score};
use bet_core::harness::{collect_trajectories, evaluate_reward, run_protocol, Policy, ProtocolConfig};
use bet_core::io::{read_states, read_trajectories, write_records, write_trajectories};
use bet_core::model_io::AnyModel;
use bet_core::{build, ActionId, BetConfig, BetError, BetTree, DistanceFn, ExperiencePool, SigmaMode, StateVector};

use crate::{
    CliError, CollectArgs, DistanceArg, EnvName, EvalArgs, EvalMode, ExplainArgs, ExplainMode, ModelKind, ReportArgs,
    TrainArgs,
};

type Outputs = Result<Vec<PathBuf>, CliError>;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_pool(path: &Path) -> Result<ExperiencePool, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(read_trajectories(BufReader::new(file))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn collect(a: &CollectArgs) -> Outputs {
    let pool = match a.env {
        EnvName::Gridpursuit => {
            let mut env = GridPursuit::new(GridConfig::default());
            let c = collect_trajectories(&mut env, &ScriptedTeacher, a.episodes, a.seed)?;
            let total: f64 = c.episodes.iter().map(|e| e.reward).sum();
            println!("collected {} episodes, {} decisions, mean reward {:.4}", c.episodes.len(), c.pool.len(), total / c.episodes.len() as f64);
            c.pool
        }
        EnvName::Moons => {
            let data = generate_moons3(a.per_class, a.noise, a.seed)?;
            println!("exported {} moons points", data.len());
            data.to_pool()
        }
    };
    write_trajectories(&pool, create(&a.out)?)?;
    Ok(vec![a.out.clone()])
}

pub fn train(a: &TrainArgs) -> Outputs {
    let pool = load_pool(&a.data)?;
    let model = match a.model {
        ModelKind::Bet => {
            let cfg = BetConfig {
                n_bones: a.n_bones,
                max_depth: a.max_depth,
                min_split: a.min_split,
                distance: match a.distance {
                    DistanceArg::Euclidean => DistanceFn::Euclidean,
                    DistanceArg::SquaredEuclidean => DistanceFn::SquaredEuclidean,
                },
                sigma_mode: a.sigma.map_or(SigmaMode::PerNodeMedian, |value| SigmaMode::Fixed { value }),
                seed: a.seed,
                lloyd_max_iters: a.lloyd_max_iters,
                lloyd_tol: a.lloyd_tol,
            };
            let tree = build(&pool, &cfg)?;
            print_traces(&tree);
            AnyModel::Bet(tree)
        }
        ModelKind::Cart | ModelKind::Id3 => {
            if a.max_depth == 0 {
                return Err(CliError::Usage("max_depth must be at least 1".into()));
            }
            let impurity = if a.model == ModelKind::Cart { Impurity::Gini } else { Impurity::Entropy };
            AnyModel::Axis(fit_axis_tree(&pool, impurity, a.max_depth, a.min_split)?)
        }
        ModelKind::Knn => AnyModel::Knn(fit_knn(&pool, a.k, DistanceFn::Euclidean)?),
    };
    model.save(&a.out)?;
    Ok(vec![a.out.clone()])
}

fn print_traces(tree: &BetTree) {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
    println!("training_cost_trace: {}", fmt(&tree.training_cost_trace));
    for b in tree.branch_nodes() {
        println!("node {} depth {} refinement: {}", b.node_id, b.depth, fmt(&b.refinement_trace));
    }
}

/// A model file, or the scripted teacher named on the command line.
enum Student {
    Model(AnyModel),
    Scripted,
}

impl Student {
    fn load(spec: &str) -> Result<Student, CliError> {
        if spec == "scripted" {
            return Ok(Student::Scripted);
        }
        Ok(Student::Model(AnyModel::load(Path::new(spec))?))
    }

    fn policy(&self) -> &dyn Policy {
        match self {
            Student::Model(m) => m,
            Student::Scripted => &ScriptedTeacher,
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            Student::Model(m) => m.state_dim(),
            Student::Scripted => 2,
        }
    }
}

#[derive(Serialize)]
struct FidelityReport {
    mode: &'static str,
    student: String,
    n_samples: usize,
    matches: usize,
    fidelity: f64,
    /// Agreement on the decisions whose recorded action is each class; null when absent.
    per_class_fidelity: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct RewardReport {
    mode: &'static str,
    student: String,
    env: EnvName,
    seed: u64,
    episodes: usize,
    mean_reward: f64,
    std_reward: f64,
    teacher_mean_reward: f64,
    per_episode_rewards: Vec<f64>,
}

pub fn eval(a: &EvalArgs) -> Outputs {
    let student = Student::load(&a.model)?;
    let policy = student.policy();
    match a.mode {
        EvalMode::Fidelity => {
            let data = a.data.as_ref().ok_or_else(|| CliError::Usage("--data is required for fidelity".into()))?;
            let pool = load_pool(data)?;
            if pool.state_dim() != student.state_dim() {
                return Err(BetError::Dimension { expected: student.state_dim(), got: pool.state_dim() }.into());
            }
            let classes = pool.action_count().max(policy.action_count());
            let mut hits = vec![0usize; classes];
            let mut seen = vec![0usize; classes];
            for e in pool.iter() {
                seen[e.action.0] += 1;
                if policy.act(&e.state) == e.action {
                    hits[e.action.0] += 1;
                }
            }
            let matches: usize = hits.iter().sum();
            let report = FidelityReport {
                mode: "fidelity",
                student: policy.name().to_string(),
                n_samples: pool.len(),
                matches,
                fidelity: matches as f64 / pool.len() as f64,
                per_class_fidelity: hits.iter().zip(&seen).map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64)).collect(),
            };
            println!("fidelity {:.6} ({matches}/{})", report.fidelity, report.n_samples);
            write_json(&a.out, &report)?;
        }
        EvalMode::Reward => {
            if a.env != EnvName::Gridpursuit {
                return Err(CliError::Usage("reward evaluation needs an interactive env (gridpursuit)".into()));
            }
            let mut env = GridPursuit::new(GridConfig::default());
            if student.state_dim() != 2 {
                return Err(BetError::Dimension { expected: 2, got: student.state_dim() }.into());
            }
            let r = evaluate_reward(&mut env, policy, a.episodes, a.seed)?;
            let teacher = evaluate_reward(&mut env, &ScriptedTeacher, a.episodes, a.seed)?;
            println!("mean reward {:.4} (teacher {:.4})", r.mean_reward, teacher.mean_reward);
            write_json(
                &a.out,
                &RewardReport {
                    mode: "reward",
                    student: policy.name().to_string(),
                    env: a.env,
                    seed: a.seed,
                    episodes: r.episodes,
                    mean_reward: r.mean_reward,
                    std_reward: r.std_reward,
                    teacher_mean_reward: teacher.mean_reward,
                    per_episode_rewards: r.per_episode_rewards,
                },
            )?;
        }
    }
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct RiskRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    state: Vec<f64>,
    risk: f64,
    weakest_node_id: usize,
}

fn parse_grid(spec: &str, dim: usize) -> Result<Vec<StateVector>, CliError> {
    let bad = || CliError::Usage(format!("--grid expects LO:HI:N with N >= 2, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
    let n: usize = n.parse().map_err(|_| bad())?;
    if n < 2 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(bad());
    }
    if dim != 2 {
        return Err(CliError::Usage(format!("--grid needs a 2-D model, this one has {dim} dimensions")));
    }
    let at = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(StateVector::new(vec![at(i), at(j)])?);
        }
    }
    Ok(out)
}

fn probe_states(a: &ExplainArgs, dim: usize) -> Result<Vec<StateVector>, CliError> {
    let states = match (&a.states, &a.grid) {
        (Some(p), None) => {
            let file = File::open(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            read_states(BufReader::new(file))?
        }
        (None, Some(g)) => parse_grid(g, dim)?,
        _ => return Err(CliError::Usage("give exactly one of --states or --grid".into())),
    };
    if let Some(s) = states.iter().find(|s| s.dim() != dim) {
        return Err(BetError::Dimension { expected: dim, got: s.dim() }.into());
    }
    Ok(states)
}

pub fn explain(a: &ExplainArgs) -> Outputs {
    let AnyModel::Bet(tree) = AnyModel::load(&a.model)? else {
        return Err(CliError::Usage("explain needs a bet model".into()));
    };
    let out = create(&a.out)?;
    match a.mode {
        ExplainMode::Risk => {
            let mut records = Vec::new();
            for s in probe_states(a, tree.state_dim)? {
                let r = risk_score(&tree, &s)?;
                let planar = tree.state_dim == 2;
                records.push(RiskRecord {
                    x: planar.then(|| s[0]),
                    y: planar.then(|| s[1]),
                    state: r.state,
                    risk: r.risk,
                    weakest_node_id: r.weakest_node_id,
                });
            }
            println!("{} risk records", records.len());
            write_records(&records, out)?;
        }
        ExplainMode::Perturb => {
            let targets: Option<Vec<ActionId>> = a.targets.as_ref().map(|t| t.iter().map(|&x| ActionId(x)).collect());
            let mut records = Vec::new();
            for s in probe_states(a, tree.state_dim)? {
                records.push(min_perturbation(&tree, &s, targets.as_deref(), a.tol)?);
            }
            let flipped = records.iter().filter(|r| r.flipped().is_some()).count();
            println!("{} states, {flipped} perturbations found", records.len());
            write_records(&records, out)?;
        }
        ExplainMode::Bones => {
            let data = a.data.as_ref().ok_or_else(|| CliError::Usage("--data is required for bones".into()))?;
            let catalog = bone_catalog(&tree, &load_pool(data)?)?;
            println!("{} bones", catalog.entries.len());
            write_records(&catalog.entries, out)?;
        }
    }
    Ok(vec![a.out.clone()])
}

#[derive(Serialize)]
struct StudentSummary {
    student: String,
    mean_fidelity: f64,
    min_fidelity: f64,
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    train_size: usize,
    fidelity: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct Report {
    env: EnvName,
    protocol: ProtocolConfig,
    runs: Vec<RunSummary>,
    students: Vec<StudentSummary>,
}

pub fn report(a: &ReportArgs) -> Outputs {
    if a.env != EnvName::Gridpursuit {
        return Err(CliError::Usage("report runs the distillation protocol on gridpursuit".into()));
    }
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let protocol = ProtocolConfig { collection_episodes: a.episodes, heldout_decisions: a.decisions, ..ProtocolConfig::default() };
    let mut env = GridPursuit::new(GridConfig::default());
    let mut runs = Vec::new();
    for r in 0..a.runs {
        let seed = a.seed.wrapping_add(r);
        let run = run_protocol(&mut env, &ScriptedTeacher, &protocol, seed)?;
        runs.push(RunSummary {
            seed,
            train_size: run.train_size,
            fidelity: run.scores.iter().map(|s| (s.student.clone(), s.fidelity.fidelity)).collect(),
        });
    }
    let names: Vec<String> = runs[0].fidelity.iter().map(|(n, _)| n.clone()).collect();
    let students: Vec<StudentSummary> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let vals: Vec<f64> = runs.iter().map(|r| r.fidelity[i].1).collect();
            StudentSummary {
                student: name.clone(),
                mean_fidelity: vals.iter().sum::<f64>() / vals.len() as f64,
                min_fidelity: vals.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let mut stdout = std::io::stdout().lock();
    for s in &students {
        writeln!(stdout, "{:<5} mean fidelity {:.4} (min {:.4})", s.student, s.mean_fidelity, s.min_fidelity)?;
    }
    write_json(&a.out, &Report { env: a.env, protocol, runs, students })?;
    Ok(vec![a.out.clone()])
}
