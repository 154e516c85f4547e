//! Acceptance suite. Every criterion runs, prints one PASS/FAIL line to the
//! real stdout (not the captured test output), and the test fails at the end
//! if any criterion failed.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use marlperf_core::comm::{comm_net_backward, comm_net_forward, comm_net_params, sender_backward, sender_params, sender_scores, tom_backward, tom_forward, tom_hidden_rows, tom_params};
use marlperf_core::envs::{JointAction, Observation};
use marlperf_core::graph::{CommGraph, Provenance};
use marlperf_core::numerics::{
    dense_backward, dense_forward, gradcheck, graph_aggregate, graph_aggregate_backward, gru_cell_backward, gru_cell_forward, gru_params, Activation, GradStore, Layer,
    LayerKind, ParamStore, Tensor2,
};
use marlperf_core::pipelines::maddpg::{actor_loss, assemble_batch, critic_loss, critic_targets, straight_through_offset, MaddpgModels};
use marlperf_core::pipelines::neurcomm::{neurcomm_agent_loss, AgentStep, NeurcommAgent};
use marlperf_core::pipelines::tom2c::{tom2c_loss, StepTarget, Tom2cModels, TrainStep};
use marlperf_core::pipelines::{random_policy_rewards, Experience};
use marlperf_core::profiler::{aggregate, breakdown_pct, loglog_slope, Category, CategoryTimes, IpsReport, PhaseFilter, Phase, Recorder, TimingBreakdown};
use marlperf_core::runtime::{run, run_driver, PipelineKind, PolicyMode, RunConfig, RunOutput, RunPlan, SleepPipeline};

const TRIALS: usize = 100;
const LAYER_TOL: f64 = 1e-6;
const LOSS_TOL: f64 = 1e-5;
// Near the roundoff/truncation optimum of the fourth-order stencil in f64.
const LAYER_EPS: f64 = 1e-3;
const LOSS_EPS: f64 = 3e-3;

struct Verdicts {
    rows: Vec<(String, bool)>,
}

impl Verdicts {
    fn record(&mut self, id: &str, pass: bool, detail: String, started: Instant) {
        let line = format!(
            "{id} {} ({:.1}s) {detail}\n",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        let mut out = std::io::stdout();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
        self.rows.push((id.into(), pass));
    }
}

fn rand_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn weighted(out: &Tensor2, w: &Tensor2) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn report(out: &RunOutput, plan: &RunPlan) -> IpsReport {
    IpsReport::from_breakdowns(&out.breakdowns, plan.pipeline.composition()).unwrap()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v.sqrt())
}

fn ac1(v: &mut Verdicts) {
    let t = Instant::now();
    let mut plan = RunPlan::for_pipeline(PipelineKind::Maddpg, 1);
    plan.iterations = 8;
    plan.warmup_iterations = 1;
    let mut details = Vec::new();
    let mut pass = true;
    for (overlapped, mode, want) in [(false, PolicyMode::OnPolicy, 1.0 / 0.2), (true, PolicyMode::OffPolicy, 1.0 / 0.15)] {
        let mut p = SleepPipeline {
            sg: Duration::from_millis(50),
            mu: Duration::from_millis(150),
            overlapped,
        };
        let out = run_driver(&mut p, &plan).unwrap();
        let r = IpsReport::from_breakdowns(&out.breakdowns, mode).unwrap();
        let wall_ips = 1.0 / r.t_wallclock;
        let ok = (r.ips - want).abs() <= 0.05 * want && (wall_ips - want).abs() <= 0.05 * want;
        pass &= ok;
        details.push(format!("{mode:?}: ips={:.3} wallclock_ips={wall_ips:.3} target={want:.3}", r.ips));
    }
    v.record("AC-1", pass, details.join("; "), t);
}

fn dense_trial(act: Activation, rng: &mut ChaCha8Rng) -> f64 {
    let (rows, i) = (rng.gen_range(1..5), rng.gen_range(1..6));
    let o = if act == Activation::Softmax { rng.gen_range(2..6) } else { rng.gen_range(1..6) };
    let layer = Layer::uniform(i, o, rng);
    // ReLU is not differentiable at zero; redraw inputs whose pre-activations sit near the kink.
    let x = loop {
        let x = rand_tensor(rows, i, 1.0, rng);
        let (pre, _) = dense_forward(&x, &layer, Activation::Identity).unwrap();
        if act != Activation::Relu || pre.data().iter().all(|p| p.abs() > 1e-2) {
            break x;
        }
    };
    let w = rand_tensor(rows, o, 1.0, rng);
    let p = ParamStore::single(layer, LayerKind::Dense);
    gradcheck(
        |q| {
            let (y, c) = dense_forward(&x, &q.layers[0], act).unwrap();
            let (_, g) = dense_backward(&q.layers[0], &w, &c).unwrap();
            let mut gs = GradStore::zeros_for(q);
            gs.accumulate_layer(0, &g).unwrap();
            (weighted(&y, &w), gs)
        },
        &p,
        LAYER_EPS,
    )
}

fn gru_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (rows, i, h) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
    let p = gru_params(i, h, rng);
    let x = rand_tensor(rows, i, 1.0, rng);
    let h0 = rand_tensor(rows, h, 0.5, rng);
    let w = rand_tensor(rows, h, 1.0, rng);
    gradcheck(
        |q| {
            let (y, c) = gru_cell_forward(&x, &h0, q).unwrap();
            let (_, _, g) = gru_cell_backward(&w, &c, q).unwrap();
            (weighted(&y, &w), g)
        },
        &p,
        LAYER_EPS,
    )
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> CommGraph {
    let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i != j && rng.gen_bool(0.6)).collect()).collect();
    CommGraph::from_adjacency(&adj, Provenance::Predefined).unwrap()
}

fn aggregate_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (n, f, o) = (rng.gen_range(2..6), rng.gen_range(1..5), rng.gen_range(1..5));
    let g = random_graph(n, rng);
    let x = rand_tensor(n, f, 1.0, rng);
    let w = rand_tensor(n, o, 1.0, rng);
    let p = ParamStore::single(Layer::uniform(f, o, rng), LayerKind::Dense);
    gradcheck(
        |q| {
            let (y, c) = graph_aggregate(&x, &g, &q.layers[0], Activation::Tanh).unwrap();
            let (_, gl) = graph_aggregate_backward(&q.layers[0], &w, &c).unwrap();
            let mut gs = GradStore::zeros_for(q);
            gs.accumulate_layer(0, &gl).unwrap();
            (weighted(&y, &w), gs)
        },
        &p,
        LAYER_EPS,
    )
}

fn tom_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (n, e, h) = (rng.gen_range(2..5), rng.gen_range(1..4), rng.gen_range(1..4));
    let p = tom_params(e, h, rng);
    let x = rand_tensor(n, e, 1.0, rng);
    let h0 = rand_tensor(tom_hidden_rows(n), h, 0.5, rng);
    let w = rand_tensor(n, n - 1, 1.0, rng);
    gradcheck(
        |q| {
            let (i, _, c) = tom_forward(&x, &h0, q).unwrap();
            let (_, g) = tom_backward(q, &w, &c).unwrap();
            (weighted(&i, &w), g)
        },
        &p,
        LAYER_EPS,
    )
}

fn sender_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (n, f, h) = (rng.gen_range(2..5), rng.gen_range(1..4), rng.gen_range(1..5));
    let p = sender_params(n, f, h, rng);
    let int = rand_tensor(n, n - 1, 1.0, rng);
    let feat = rand_tensor(n, f, 1.0, rng);
    let w = rand_tensor(n, n, 1.0, rng);
    gradcheck(
        |q| {
            let (s, c) = sender_scores(&int, &feat, q).unwrap();
            let (_, _, g) = sender_backward(q, &w, &c).unwrap();
            (weighted(&s, &w), g)
        },
        &p,
        LAYER_EPS,
    )
}

fn comm_net_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (rows, b, s, a) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4));
    let p = comm_net_params(b, s, a, rng);
    let x = rand_tensor(rows, b + s + a, 1.0, rng);
    let h0 = rand_tensor(rows, b, 0.5, rng);
    let w = rand_tensor(rows, b, 1.0, rng);
    gradcheck(
        |q| {
            let (y, c) = comm_net_forward(q, &x, &h0).unwrap();
            (weighted(&y, &w), comm_net_backward(q, &w, &c).unwrap())
        },
        &p,
        LAYER_EPS,
    )
}

fn maddpg_mini(rng: &mut ChaCha8Rng) -> (MaddpgModels, marlperf_core::pipelines::maddpg::CriticBatch) {
    let widths = [rng.gen_range(1..4), rng.gen_range(1..4)];
    let actions = rng.gen_range(2..4);
    let models = MaddpgModels::new(&widths, actions, rng.gen_range(2..6), 1e-3, rng);
    let obs = |rng: &mut ChaCha8Rng| -> Vec<Observation> {
        widths
            .iter()
            .enumerate()
            .map(|(agent, &w)| Observation {
                agent,
                vector: (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect()
    };
    let batch: Vec<Experience> = (0..rng.gen_range(2..5))
        .map(|_| Experience {
            obs: obs(rng),
            actions: JointAction::uniform_space(vec![rng.gen_range(0..actions), rng.gen_range(0..actions)], actions).unwrap(),
            rewards: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            next_obs: obs(rng),
            done: rng.gen_bool(0.3),
        })
        .collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let b = assemble_batch(&models, &refs, &mut Recorder::disabled(Phase::ModelUpdate)).unwrap();
    (models, b)
}

fn maddpg_critic_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (models, batch) = maddpg_mini(rng);
    let i = rng.gen_range(0..2);
    let a = &models.agents[i];
    let y = critic_targets(a, &batch, i, 0.9).unwrap();
    gradcheck(|p| critic_loss(&a.critic.with_params(p.clone()), &batch.joint, &y).unwrap(), &a.critic.params, LOSS_EPS)
}

fn maddpg_actor_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (models, batch) = maddpg_mini(rng);
    let i = rng.gen_range(0..2);
    let a = &models.agents[i];
    let off = straight_through_offset(&a.policy, &batch.obs[i]).unwrap();
    let col = models.action_offset(i);
    gradcheck(
        |p| actor_loss(&a.policy.with_params(p.clone()), &a.critic, &batch.obs[i], &batch.joint, col, &off).unwrap(),
        &a.policy.params,
        LOSS_EPS,
    )
}

fn tom2c_trial(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.gen_range(2..4);
    let (w, acts) = (2 * rng.gen_range(1..3), rng.gen_range(2..4));
    let m = Tom2cModels::new(n, w, acts, rng.gen_range(2..6), rng).unwrap();
    let mut steps = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        steps.push(TrainStep {
            obs: rand_tensor(n, w, 1.0, rng),
            hidden: rand_tensor(tom_hidden_rows(n), m.tom_hidden, 0.5, rng),
            graph: random_graph(n, rng),
            actions: (0..n).map(|_| rng.gen_range(0..acts)).collect(),
            rewards: vec![0.0; n],
            done: false,
            values: vec![0.0; n],
        });
        targets.push(StepTarget {
            returns: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            advantages: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        });
    }
    let mut quiet = Recorder::disabled(Phase::ModelUpdate);
    gradcheck(
        |p| {
            let (l, g) = tom2c_loss(&m.with_packed(p), &steps, &targets, 0.05, 0.1, &mut quiet).unwrap();
            (l.total, g.packed())
        },
        &m.packed(),
        LOSS_EPS,
    )
}

fn neurcomm_trial(rng: &mut ChaCha8Rng) -> f64 {
    let (w, acts, b) = (rng.gen_range(1..4), rng.gen_range(2..4), rng.gen_range(1..4));
    let agent = NeurcommAgent::new(w, acts, b, rng.gen_range(2..6), 1e-3, rng);
    let t = rng.gen_range(1..4);
    let steps: Vec<AgentStep> = (0..t)
        .map(|_| AgentStep {
            obs: (0..w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            prior_belief: (0..b).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            comm_input: (0..b + w + acts).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: rng.gen_range(0..acts),
            reward: 0.0,
            done: false,
            value: 0.0,
        })
        .collect();
    let g: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut quiet = Recorder::disabled(Phase::ModelUpdate);
    gradcheck(
        |p| {
            let (l, gr) = neurcomm_agent_loss(&agent.with_packed(p), &steps, &g, &a, 0.05, &mut quiet).unwrap();
            (l.total, gr.packed())
        },
        &agent.packed(),
        LOSS_EPS,
    )
}

fn ac2(v: &mut Verdicts) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    type Trial = Box<dyn Fn(&mut ChaCha8Rng) -> f64>;
    let mut cases: Vec<(&str, f64, Trial)> = Vec::new();
    for (name, act) in [
        ("dense/identity", Activation::Identity),
        ("dense/relu", Activation::Relu),
        ("dense/tanh", Activation::Tanh),
        ("dense/sigmoid", Activation::Sigmoid),
        ("dense/softmax", Activation::Softmax),
    ] {
        cases.push((name, LAYER_TOL, Box::new(move |r| dense_trial(act, r))));
    }
    cases.push(("gru", LAYER_TOL, Box::new(gru_trial)));
    cases.push(("graph_aggregate", LAYER_TOL, Box::new(aggregate_trial)));
    cases.push(("tom", LAYER_TOL, Box::new(tom_trial)));
    cases.push(("sender", LAYER_TOL, Box::new(sender_trial)));
    cases.push(("comm_net", LAYER_TOL, Box::new(comm_net_trial)));
    cases.push(("maddpg_critic_loss", LOSS_TOL, Box::new(maddpg_critic_trial)));
    cases.push(("maddpg_actor_loss", LOSS_TOL, Box::new(maddpg_actor_trial)));
    cases.push(("tom2c_loss", LOSS_TOL, Box::new(tom2c_trial)));
    cases.push(("neurcomm_agent_loss", LOSS_TOL, Box::new(neurcomm_trial)));
    let mut pass = true;
    let mut details = Vec::new();
    for (name, tol, trial) in &cases {
        let worst = (0..TRIALS).map(|_| trial(&mut rng)).fold(0.0, f64::max);
        pass &= worst < *tol;
        details.push(format!("{name}={worst:.1e}"));
    }
    v.record("AC-2", pass, format!("worst relative error over {TRIALS} trials: {}", details.join(" ")), t);
}

fn ac3(v: &mut Verdicts) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut b = TimingBreakdown::new(0);
        for c in Category::ALL {
            b.execution.add(c, rng.gen_range(0.0..10.0) * rng.gen_range(0.0f64..1.0).powi(3));
            b.training.add(c, rng.gen_range(1e-9..10.0));
        }
        for f in [PhaseFilter::Execution, PhaseFilter::Training, PhaseFilter::All] {
            if let Ok(p) = breakdown_pct(&b, f) {
                worst = worst.max((p.iter().map(|(_, x)| x).sum::<f64>() - 100.0).abs());
            }
        }
    }
    let mut b = TimingBreakdown::new(0);
    b.execution = CategoryTimes::default();
    b.execution.add(Category::Communication, 0.722);
    b.execution.add(Category::PolicyInference, 0.078);
    b.execution.add(Category::EnvStep, 0.2);
    let pct = marlperf_core::profiler::category_pct(&b, PhaseFilter::Execution, Category::Communication).unwrap();
    let pass = worst <= 0.1 && (pct - 72.2).abs() <= 0.05;
    v.record("AC-3", pass, format!("max |sum-100|={worst:.2e}; synthetic comm share={pct:.4}%"), t);
}

fn ac4(v: &mut Verdicts) {
    let t = Instant::now();
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut ips = Vec::new();
    let mut per_sample = Vec::new();
    for k in [1, 2, 4, 8] {
        let mut plan = RunPlan::for_pipeline(PipelineKind::Maddpg, 2);
        plan.rollout_threads = k;
        plan.iterations = 24;
        plan.warmup_iterations = 8;
        let out = run(&plan, &RunConfig::for_pipeline(PipelineKind::Maddpg)).unwrap();
        let agg = aggregate(&out.breakdowns);
        ips.push(report(&out, &plan).ips);
        per_sample.push(agg.t_sg / agg.samples as f64);
    }
    let mean = ips.iter().sum::<f64>() / ips.len() as f64;
    let flat = ips.iter().all(|x| (x - mean).abs() < 0.3 * mean);
    let falling = per_sample.windows(2).all(|w| w[1] < w[0]);
    let detail = format!(
        "hardware threads={hw} (criterion needs >= 8); ips={} within30%={flat}; sg s/sample={} decreasing={falling}",
        ips.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(","),
        per_sample.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(","),
    );
    v.record("AC-4", hw >= 8 && flat && falling, detail, t);
}

fn ac5(v: &mut Verdicts) {
    let t = Instant::now();
    let ns = [2usize, 4, 8];
    let mut mus = Vec::new();
    for &n in &ns {
        let mut plan = RunPlan::for_pipeline(PipelineKind::Tom2c, n);
        plan.iterations = 8;
        plan.warmup_iterations = 2;
        let out = run(&plan, &RunConfig::for_pipeline(PipelineKind::Tom2c)).unwrap();
        mus.push(report(&out, &plan).t_mu);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &mus).unwrap_or(f64::NAN);
    v.record("AC-5", slope >= 1.5, format!("t_mu={mus:.4?} slope={slope:.3} (need >= 1.5)"), t);
}

fn ac6(v: &mut Verdicts) {
    let t = Instant::now();
    let ns = [4usize, 8, 16];
    let mut lat = Vec::new();
    let mut ips = Vec::new();
    for &n in &ns {
        let mut plan = RunPlan::for_pipeline(PipelineKind::Neurcomm, n);
        plan.iterations = 12;
        plan.warmup_iterations = 2;
        let r = report(&run(&plan, &RunConfig::for_pipeline(PipelineKind::Neurcomm)).unwrap(), &plan);
        lat.push(r.t_iteration);
        ips.push(r.ips);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &lat).unwrap_or(f64::NAN);
    let falling = ips.windows(2).all(|w| w[1] < w[0]);
    v.record(
        "AC-6",
        (slope - 1.0).abs() <= 0.3 && falling,
        format!("t_iteration={lat:.4?} slope={slope:.3} ips={ips:.2?} decreasing={falling}"),
        t,
    );
}

fn ac7(v: &mut Verdicts) {
    let t = Instant::now();
    let mut pct = Vec::new();
    for k in [PipelineKind::Maddpg, PipelineKind::Tom2c, PipelineKind::Neurcomm] {
        let mut plan = RunPlan::for_pipeline(k, 4);
        plan.iterations = 12;
        plan.warmup_iterations = 2;
        pct.push(report(&run(&plan, &RunConfig::for_pipeline(k)).unwrap(), &plan).comm_pct_execution);
    }
    let pass = pct[2] > pct[1] && pct[1] > pct[0];
    v.record("AC-7", pass, format!("execution comm %: maddpg={:.2} tom2c={:.2} neurcomm={:.2}", pct[0], pct[1], pct[2]), t);
}

const STEP_BUDGET: u64 = 20_000;

fn ac8(v: &mut Verdicts) {
    let t = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (kind, n) in [(PipelineKind::Maddpg, 2), (PipelineKind::Tom2c, 2), (PipelineKind::Neurcomm, 4)] {
        let cfg = RunConfig::for_pipeline(kind);
        let mut env = cfg.env.build(n, 999).unwrap();
        let base = random_policy_rewards(&mut env, 200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let (mb, sb) = mean_sd(&base);
        let mut plan = RunPlan::for_pipeline(kind, n);
        let per_iteration = match kind {
            PipelineKind::Maddpg => cfg.hyper.steps_per_thread,
            _ => cfg.hyper.horizon,
        } * plan.rollout_threads;
        plan.iterations = STEP_BUDGET as usize / per_iteration;
        plan.warmup_iterations = 0;
        let out = run(&plan, &cfg).unwrap();
        let r = &out.episode_rewards;
        let tail = &r[r.len() - (r.len() / 10).max(1)..];
        let mt = tail.iter().sum::<f64>() / tail.len() as f64;
        let z = (mt - mb) / sb;
        let ok = z >= 3.0 && out.env_steps <= STEP_BUDGET;
        pass &= ok;
        let mut d = format!(
            "{}(n={n}): random {mb:.2}±{sb:.2}, last {} episodes {mt:.2}, z={z:.2}, steps={}",
            kind.name(),
            tail.len(),
            out.env_steps
        );
        if cfg.env.name() == "coopnav" {
            // Episode reward on this environment is never positive, so z cannot exceed |mean|/sd.
            d.push_str(&format!(" (ceiling z<={:.2})", -mb / sb));
        }
        details.push(d);
    }
    v.record("AC-8", pass, details.join("; "), t);
}

fn small(kind: PipelineKind) -> RunConfig {
    let mut c = RunConfig::for_pipeline(kind);
    c.hyper.hidden = 16;
    c.hyper.belief_dim = 8;
    c.hyper.batch = 32;
    c.hyper.steps_per_thread = 32;
    c.hyper.horizon = 16;
    c
}

fn ac9(v: &mut Verdicts) {
    let t = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for (kind, n, threads) in [(PipelineKind::Maddpg, 3, 2), (PipelineKind::Tom2c, 3, 2), (PipelineKind::Neurcomm, 4, 1)] {
        let mut plan = RunPlan::for_pipeline(kind, n);
        plan.rollout_threads = threads;
        plan.iterations = 10;
        plan.warmup_iterations = 2;
        plan.seed = 11;
        let cfg = small(kind);
        let a = run(&plan, &cfg).unwrap();
        let b = run(&plan, &cfg).unwrap();
        let bits = |o: &RunOutput| o.episode_rewards.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let same = a.breakdowns.len() == b.breakdowns.len()
            && a.experience_fingerprint == b.experience_fingerprint
            && a.param_fingerprint == b.param_fingerprint
            && a.env_steps == b.env_steps
            && bits(&a) == bits(&b);
        pass &= same;
        details.push(format!(
            "{}: rows={}/{} experience={:016x}/{:016x} params={:016x}/{:016x}",
            kind.name(),
            a.breakdowns.len(),
            b.breakdowns.len(),
            a.experience_fingerprint,
            b.experience_fingerprint,
            a.param_fingerprint,
            b.param_fingerprint
        ));
    }
    v.record("AC-9", pass, details.join("; "), t);
}

fn ac10(v: &mut Verdicts) {
    let t = Instant::now();
    let mut pass = true;
    let mut details = Vec::new();
    for kind in [PipelineKind::Maddpg, PipelineKind::Tom2c, PipelineKind::Neurcomm] {
        let mut plan = RunPlan::for_pipeline(kind, 4);
        plan.iterations = 30;
        plan.warmup_iterations = 0;
        // Interleaved repetitions; the minimum filters scheduler noise.
        let mut best = [f64::INFINITY; 2];
        for _ in 0..11 {
            for (slot, profile) in [(0, true), (1, false)] {
                let mut cfg = RunConfig::for_pipeline(kind);
                cfg.profile = profile;
                let start = Instant::now();
                run(&plan, &cfg).unwrap();
                best[slot] = best[slot].min(start.elapsed().as_secs_f64());
            }
        }
        let diff = (best[0] - best[1]).abs() / best[1];
        pass &= diff < 0.03;
        details.push(format!("{}: profiled={:.3}s unprofiled={:.3}s diff={:.2}%", kind.name(), best[0], best[1], 100.0 * diff));
    }
    v.record("AC-10", pass, details.join("; "), t);
}

#[test]
fn acceptance_criteria() {
    let mut v = Verdicts { rows: Vec::new() };
    let criteria: [(&str, fn(&mut Verdicts)); 10] = [
        ("AC-1", ac1),
        ("AC-2", ac2),
        ("AC-3", ac3),
        ("AC-4", ac4),
        ("AC-5", ac5),
        ("AC-6", ac6),
        ("AC-7", ac7),
        ("AC-8", ac8),
        ("AC-9", ac9),
        ("AC-10", ac10),
    ];
    // ACCEPTANCE_ONLY=AC-2,AC-5 runs a subset.
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    for (id, criterion) in criteria {
        match &only {
            Some(list) if !list.split(',').any(|s| s.trim() == id) => {
                std::io::stdout().write_all(format!("{id} SKIP (not selected)\n").as_bytes()).unwrap();
            }
            _ => criterion(&mut v),
        }
    }
    let failed: Vec<&str> = v.rows.iter().filter(|(_, ok)| !ok).map(|(id, _)| id.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
