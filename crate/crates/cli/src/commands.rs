//! The eight commands.

use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use svnet::approx_blocks::{CchBoxes, CchCoefficientNets, RBergomiBoxes};
use svnet::net_builder::{
    cch_plan_bundles, cch_pricing_net, cch_recursion_price, rbergomi_plan_copies, rbergomi_pricing_net,
    rbergomi_recursion_price, relative_gap, Model, PricingNet, RBergomiBlocks, RealizationPlan,
};
use svnet::pricing::{
    heston_cf_price, mc_price, stopped_domain_sweep, truncation_sweep, HestonParams, MeasureMu, ModelSpec, PayoffSpec,
    SweepRow,
};
use svnet::relu_net::ReluNetwork;
use svnet::rng::RngKey;
use svnet::rough_vol::{hybrid_fourth_moment_bound, hybrid_fourth_moment_exact, hybrid_fourth_moment_mc};
use svnet::stats::{linear_fit, log_log_slope};
use svnet::sv_sim::{lipschitz_test_model, strong_error_sweep, Drivers, GridSpec, Policy};

use crate::config::*;
use crate::output::{RunInfo, Table};
use crate::trainer::{gradient_check, mse, train, Arch, Mlp};
use crate::{row, CliError, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    ConvergeHybrid,
    ConvergeEm,
    RealizeCheck,
    SizeSweep,
    Train,
    Price,
    TruncationSweep,
    StoppedSweep,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::ConvergeHybrid,
        Command::ConvergeEm,
        Command::RealizeCheck,
        Command::SizeSweep,
        Command::Train,
        Command::Price,
        Command::TruncationSweep,
        Command::StoppedSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::ConvergeHybrid => "converge-hybrid",
            Command::ConvergeEm => "converge-em",
            Command::RealizeCheck => "realize-check",
            Command::SizeSweep => "size-sweep",
            Command::Train => "train",
            Command::Price => "price",
            Command::TruncationSweep => "truncation-sweep",
            Command::StoppedSweep => "stopped-sweep",
        }
    }

    fn file_stem(self) -> String {
        self.name().replace('-', "_")
    }
}

struct Run<'a> {
    command: Command,
    info: RunInfo,
    out: &'a Path,
    files: Vec<std::path::PathBuf>,
    failures: Vec<String>,
}

impl<'a> Run<'a> {
    fn table(&self, suffix: &str, columns: &[&str]) -> Result<Table, CliError> {
        let name = if suffix.is_empty() {
            self.command.file_stem()
        } else {
            format!("{}_{suffix}", self.command.file_stem())
        };
        Table::create(self.out, &name, &self.info, columns)
    }

    fn done(&mut self, t: Table) -> Result<(), CliError> {
        self.files.push(t.finish()?);
        Ok(())
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn outcome(self) -> Outcome {
        Outcome {
            files: self.files,
            failures: self.failures,
        }
    }
}

fn start<'a, T: DeserializeOwned + Serialize>(
    command: Command,
    text: &str,
    out: &'a Path,
    seed: impl Fn(&T) -> u64,
) -> Result<(T, Run<'a>), CliError> {
    let p = parse::<T>(text)?;
    let info = RunInfo {
        command: command.name(),
        seed: seed(&p.config),
        config_json: p.canonical,
        hash: p.hash,
    };
    Ok((
        p.config,
        Run {
            command,
            info,
            out,
            files: Vec::new(),
            failures: Vec::new(),
        },
    ))
}

pub(crate) fn dispatch(command: Command, text: &str, out: &Path) -> Result<Outcome, CliError> {
    match command {
        Command::ConvergeHybrid => {
            let (c, r) = start(command, text, out, |c: &ConvergeHybridConfig| c.seed)?;
            converge_hybrid(c, r)
        }
        Command::ConvergeEm => {
            let (c, r) = start(command, text, out, |c: &ConvergeEmConfig| c.seed)?;
            converge_em(c, r)
        }
        Command::RealizeCheck => {
            let (c, r) = start(command, text, out, |c: &RealizeCheckConfig| c.seed)?;
            realize_check(c, r)
        }
        Command::SizeSweep => {
            let (c, r) = start(command, text, out, |c: &SizeSweepConfig| c.seed)?;
            size_sweep(c, r)
        }
        Command::Train => {
            let (c, r) = start(command, text, out, |c: &TrainConfig| c.seed)?;
            train_cmd(c, r)
        }
        Command::Price => {
            let (c, r) = start(command, text, out, |c: &PriceConfig| c.seed)?;
            price(c, r)
        }
        Command::TruncationSweep => {
            let (c, r) = start(command, text, out, |c: &TruncationSweepConfig| c.seed)?;
            truncation(c, r)
        }
        Command::StoppedSweep => {
            let (c, r) = start(command, text, out, |c: &StoppedSweepConfig| c.seed)?;
            stopped(c, r)
        }
    }
}

fn grid(horizon: f64, steps: usize) -> Result<GridSpec, CliError> {
    GridSpec::new(horizon, steps).map_err(|e| CliError::Config(e.to_string()))
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn converge_hybrid(c: ConvergeHybridConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.hurst.iter().any(|h| !(*h > 0.0 && *h <= 0.5)) || c.steps.iter().any(|n| *n < 2) || c.samples < 2 {
        return Err(config_err("need H ∈ (0, ½], N ≥ 2 and at least two samples"));
    }
    let mut t = run.table(
        "",
        &["hurst", "steps", "h", "bound", "closed_form", "mc_mean", "mc_se", "mc_z", "bound_pass"],
    )?;
    let mut fits = run.table("slopes", &["hurst", "slope", "target", "rel_dev", "within_10pct"])?;
    for &hurst in &c.hurst {
        let mut hs = Vec::new();
        let mut moments = Vec::new();
        for &n in &c.steps {
            let bound = hybrid_fourth_moment_bound(c.horizon, n, hurst);
            let exact = hybrid_fourth_moment_exact(c.horizon, n, hurst);
            let mc = hybrid_fourth_moment_mc(c.horizon, n, hurst, c.samples, RngKey::new(c.seed).named(&format!("converge-hybrid/{hurst}/{n}")))?;
            let z = if mc.se > 0.0 { (mc.mean - exact) / mc.se } else { 0.0 };
            let pass = exact <= bound;
            if !pass {
                run.fail(format!("H={hurst} N={n}: closed form {exact:e} above bound {bound:e}"));
            }
            t.row(row![hurst, n, c.horizon / n as f64, bound, exact, mc.mean, mc.se, z, pass])?;
            if exact > 0.0 {
                hs.push(c.horizon / n as f64);
                moments.push(exact);
            }
        }
        if hs.len() >= 2 {
            let slope = log_log_slope(&hs, &moments);
            let target = 4.0 * hurst;
            let dev = (slope - target).abs() / target;
            fits.row(row![hurst, slope, target, dev, dev <= 0.1])?;
        }
    }
    run.done(t)?;
    run.done(fits)?;
    Ok(run.outcome())
}

fn converge_em(c: ConvergeEmConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.paths < 2 || c.steps.len() < 2 {
        return Err(config_err("need at least two paths and two step counts"));
    }
    let model = lipschitz_test_model();
    let rows = strong_error_sweep(
        &model,
        &[c.x0],
        &[c.v0],
        c.horizon,
        &c.steps,
        c.n_ref,
        c.paths,
        Drivers::Correlated(c.corr),
        RngKey::new(c.seed).named("converge-em"),
    )
    .map_err(|e| match e {
        svnet::error::SimError::Invalid(m) => CliError::Config(m),
        e => e.into(),
    })?;
    let mut t = run.table("", &["steps", "h", "mean_sup_sq_error", "se"])?;
    for r in &rows {
        t.row(row![r.steps, r.h, r.mean, r.se])?;
    }
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let slope = log_log_slope(&h, &e);
    let pass = slope >= c.slope_range.0 && slope <= c.slope_range.1;
    if !pass {
        run.fail(format!("strong-error slope {slope} outside {:?}", c.slope_range));
    }
    let mut f = run.table("fit", &["slope", "lo", "hi", "pass"])?;
    f.row(row![slope, c.slope_range.0, c.slope_range.1, pass])?;
    run.done(t)?;
    run.done(f)?;
    Ok(run.outcome())
}

/// Every last-layer weight of `net` scaled by `1 + delta`.
pub fn perturb_last_layer(net: &ReluNetwork, delta: f64) -> Result<ReluNetwork, CliError> {
    let mut layers = net.layers().to_vec();
    let last = layers.last_mut().expect("nonempty network");
    for k in 0..last.stored() {
        *last = last.with_scaled_entry(k, 1.0 + delta);
    }
    Ok(ReluNetwork::from_layers(layers)?)
}

fn realize_check(c: RealizeCheckConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.seeds == 0 || c.copies.is_empty() || c.steps.is_empty() || c.strikes.is_empty() {
        return Err(config_err("empty seed, copy, step or strike list"));
    }
    let mut t = run.table(
        "",
        &[
            "model", "d", "steps", "copies", "seed_index", "strike", "network", "recursion", "rel_gap", "size", "depth",
            "depth_law", "audit_pass", "pass",
        ],
    )?;
    let mut audit = run.table("audit", &["model", "d", "steps", "copies", "seed_index", "block", "measured_size", "bound_value", "pass"])?;
    let model_name = match c.model {
        Model::Cch => "cch",
        Model::RBergomi => "rbergomi",
    };
    let dims = match c.model {
        Model::Cch => c.dims.clone(),
        Model::RBergomi => vec![1],
    };
    for &d in &dims {
        let cch_nets = match c.model {
            Model::Cch => Some(CchCoefficientNets::build(d, &CchBoxes::default(), c.eps)?),
            Model::RBergomi => None,
        };
        let payoff = if d == 1 {
            PayoffSpec::Call
        } else {
            PayoffSpec::BasketCall {
                weights: vec![1.0 / d as f64; d],
            }
        };
        for &n in &c.steps {
            let g = grid(c.horizon, n)?;
            let blocks = match c.model {
                Model::RBergomi => Some(RBergomiBlocks::build(g, &RBergomiBoxes::default(), c.trunc, c.eps)?),
                Model::Cch => None,
            };
            for &m in &c.copies {
                let cases: Vec<_> = (0..c.seeds)
                    .into_par_iter()
                    .map(|s| -> Result<_, CliError> {
                        let plan = RealizationPlan {
                            model: c.model,
                            copies: m,
                            grid: g,
                            eps: c.eps,
                            eps_bar: c.eps_bar,
                            seed: c.seed.wrapping_mul(1_000_003).wrapping_add(s as u64),
                        };
                        let (u, values) = match c.model {
                            Model::Cch => {
                                let nets = cch_nets.as_ref().expect("built above");
                                let bundles = cch_plan_bundles(&plan, d);
                                let u = cch_pricing_net(&plan, nets, &payoff, &bundles)?;
                                let theta = c.cch.theta(d).to_vec();
                                let x0: Vec<f64> = (0..d).map(|i| c.x0 * (1.0 + 0.05 * i as f64)).collect();
                                let v0 = vec![c.v0; d];
                                let mut z: Vec<f64> = x0.iter().chain(&v0).chain(&theta).copied().collect();
                                z.push(0.0);
                                let net = perturbed(&u, c.perturb)?;
                                let mut vals = Vec::new();
                                for &k in &c.strikes {
                                    *z.last_mut().expect("strike slot") = k;
                                    let direct = cch_recursion_price(nets, &payoff, &bundles, &x0, &v0, &theta, k)?;
                                    vals.push((k, net.eval1(&z), direct));
                                }
                                (u, vals)
                            }
                            Model::RBergomi => {
                                let blocks = blocks.as_ref().expect("built above");
                                let th = c.rbergomi;
                                let copies = rbergomi_plan_copies(&plan, th.hurst, c.r_clamp)?;
                                let (u, mult) = rbergomi_pricing_net(&plan, blocks, &payoff, &copies)?;
                                let net = perturbed(&u, c.perturb)?;
                                let theta = th.to_vec();
                                let mut vals = Vec::new();
                                for &k in &c.strikes {
                                    let direct = rbergomi_recursion_price(blocks, &mult, &payoff, &copies, c.x0, theta, k);
                                    let z = [c.x0, theta[0], theta[1], theta[2], theta[3], k];
                                    vals.push((k, net.eval1(&z), direct));
                                }
                                (u, vals)
                            }
                        };
                        Ok((u, values))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                for (s, (u, vals)) in cases.into_iter().enumerate() {
                    let depth_law = u.paths.iter().all(|p| {
                        p.net.depth() == p.step_depths.iter().sum::<usize>() - (p.step_depths.len() - 1)
                    });
                    for a in &u.audit.rows {
                        audit.row(row![model_name, d, n, m, s, a.block, a.measured_size, a.bound_value, a.pass])?;
                    }
                    let audit_pass = u.audit.all_pass();
                    for (k, net, direct) in vals {
                        let gap = relative_gap(net, direct);
                        let pass = gap <= c.tolerance && depth_law && audit_pass;
                        if !pass {
                            run.fail(format!(
                                "{model_name} d={d} N={n} M={m} seed {s} K={k}: gap {gap:e}, depth law {depth_law}, audit {audit_pass}"
                            ));
                        }
                        t.row(row![
                            model_name,
                            d,
                            n,
                            m,
                            s,
                            k,
                            net,
                            direct,
                            gap,
                            u.net.size(),
                            u.net.depth(),
                            depth_law,
                            audit_pass,
                            pass
                        ])?;
                    }
                }
            }
        }
    }
    run.done(t)?;
    run.done(audit)?;
    Ok(run.outcome())
}

fn perturbed(u: &PricingNet, delta: Option<f64>) -> Result<ReluNetwork, CliError> {
    match delta {
        Some(d) => perturb_last_layer(&u.net, d),
        None => Ok(u.net.clone()),
    }
}

fn basket(d: usize) -> PayoffSpec {
    if d == 1 {
        PayoffSpec::Call
    } else {
        PayoffSpec::BasketCall {
            weights: vec![1.0 / d as f64; d],
        }
    }
}

fn size_sweep(c: SizeSweepConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.dims.is_empty() || c.eps_bars.is_empty() || c.copies.is_empty() || c.sweep_copies == 0 {
        return Err(config_err("empty sweep list"));
    }
    let g = grid(c.horizon, c.steps)?;
    let plan = |model, copies, eps: f64| RealizationPlan {
        model,
        copies,
        grid: g,
        eps,
        eps_bar: eps,
        seed: c.seed,
    };
    let cch_size = |d: usize, copies: usize, eps: f64| -> Result<(usize, usize), CliError> {
        let p = plan(Model::Cch, copies, eps);
        let nets = CchCoefficientNets::build(d, &CchBoxes::default(), eps)?;
        let u = cch_pricing_net(&p, &nets, &basket(d), &cch_plan_bundles(&p, d))?;
        Ok((u.net.size(), u.net.depth()))
    };
    let mut t = run.table("", &["sweep", "model", "d", "eps_bar", "copies", "size", "depth"])?;
    let mut fits = run.table("fits", &["fit", "slope", "intercept", "max_rel_residual", "pass"])?;

    let mut dbar = Vec::new();
    let mut dsize = Vec::new();
    for &d in &c.dims {
        let (size, depth) = cch_size(d, c.sweep_copies, c.dim_eps)?;
        t.row(row!["dim", "cch", d, c.dim_eps, c.sweep_copies, size, depth])?;
        dbar.push((2 * d + 1) as f64);
        dsize.push(size as f64);
    }
    let mut inv_eps = Vec::new();
    let mut cch_eps = Vec::new();
    let mut rb_eps = Vec::new();
    let rb_theta_h = 0.1;
    for &e in &c.eps_bars {
        let (size, depth) = cch_size(1, c.sweep_copies, e)?;
        t.row(row!["eps", "cch", 1, e, c.sweep_copies, size, depth])?;
        cch_eps.push(size as f64);
        let p = plan(Model::RBergomi, c.sweep_copies, e);
        let blocks = RBergomiBlocks::build(g, &RBergomiBoxes::default(), c.trunc, e)?;
        let copies = rbergomi_plan_copies(&p, rb_theta_h, c.r_clamp)?;
        let (u, _) = rbergomi_pricing_net(&p, &blocks, &PayoffSpec::Call, &copies)?;
        t.row(row!["eps", "rbergomi", 1, e, c.sweep_copies, u.net.size(), u.net.depth()])?;
        rb_eps.push(u.net.size() as f64);
        inv_eps.push(1.0 / e);
    }
    let mut ms = Vec::new();
    let mut msize = Vec::new();
    for &m in &c.copies {
        let (size, depth) = cch_size(1, m, c.dim_eps)?;
        t.row(row!["copies", "cch", 1, c.dim_eps, m, size, depth])?;
        ms.push(m as f64);
        msize.push(size as f64);
    }
    let mut slope_fit = |name: &str, x: &[f64], y: &[f64], run: &mut Run| -> Result<(), CliError> {
        if x.len() < 2 {
            return Ok(());
        }
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let (slope, intercept) = linear_fit(&lx, &ly);
        let pass = slope.is_finite() && intercept.is_finite();
        if !pass {
            run.fail(format!("{name}: non-finite slope"));
        }
        fits.row(row![name, slope, intercept, "", pass])
    };
    slope_fit("p_emp_cch_dbar", &dbar, &dsize, &mut run)?;
    slope_fit("q_emp_cch_eps", &inv_eps, &cch_eps, &mut run)?;
    slope_fit("q_emp_rbergomi_eps", &inv_eps, &rb_eps, &mut run)?;
    if ms.len() >= 2 {
        let (b, a) = linear_fit(&ms, &msize);
        let resid = ms
            .iter()
            .zip(&msize)
            .map(|(m, s)| (a + b * m - s).abs() / s)
            .fold(0.0, f64::max);
        let pass = resid < 1e-9;
        if !pass {
            run.fail(format!("size is not affine in M: residual {resid:e}"));
        }
        fits.row(row!["affine_in_copies", b, a, resid, pass])?;
    }
    run.done(t)?;
    run.done(fits)?;
    Ok(run.outcome())
}

/// Maps a μ sample to `[−1, 1]` per coordinate.
fn normalize(mu: &MeasureMu, p: &[f64]) -> Vec<f64> {
    let b = &mu.boxes;
    let d = mu.d;
    let mut boxes = vec![b.x; d];
    boxes.extend(vec![b.v; d]);
    for _ in 0..d {
        boxes.extend([b.a, b.b, b.nu, b.rho_x, b.rho_v]);
    }
    boxes.push(mu.k);
    p.iter().zip(&boxes).map(|(x, (lo, hi))| 2.0 * (x - lo) / (hi - lo) - 1.0).collect()
}

/// Prices are divided by this before training.
const PRICE_SCALE: f64 = 10.0;

fn train_cmd(c: TrainConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.d == 0 || c.train_samples == 0 || c.test_samples == 0 || c.archs.is_empty() || c.label_paths < 2 || c.test_label_paths < 2 {
        return Err(config_err("empty training setup"));
    }
    let mu = MeasureMu::new(c.d);
    let g = grid(c.horizon, c.steps)?;
    let payoff = basket(c.d);
    let root = RngKey::new(c.seed);
    let label = |split: &str, i: usize, paths: usize| -> Result<(Vec<f64>, f64, f64), CliError> {
        let key = root.named(split).path(i as u64);
        let p = mu.sample(key.stream(0));
        let d = c.d;
        let model = ModelSpec::Cch {
            theta: svnet::sv_sim::CchTheta::from_vec(&p[2 * d..7 * d])?,
            x0: p[..d].to_vec(),
            v0: p[d..2 * d].to_vec(),
            policy: Policy::FullTruncation,
        };
        let r = mc_price(&model, &payoff, p[7 * d], g, paths, root.named(&format!("{split}-paths/{i}")))?;
        Ok((normalize(&mu, &p), r.estimate, r.se))
    };
    type Split = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);
    let data = |split: &str, n: usize, paths: usize| -> Result<Split, CliError> {
        let rows = (0..n).into_par_iter().map(|i| label(split, i, paths)).collect::<Result<Vec<_>, _>>()?;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut se = Vec::with_capacity(n);
        for (x, y, s) in rows {
            xs.push(x);
            ys.push(y / PRICE_SCALE);
            se.push(s);
        }
        Ok((xs, ys, se))
    };
    let (train_x, train_y, _) = data("train", c.train_samples, c.label_paths)?;
    let (test_x, test_y, test_se) = data("test", c.test_samples, c.test_label_paths)?;
    let floor = (test_se.iter().map(|s| s * s).sum::<f64>() / test_se.len() as f64).sqrt();

    let mut t = run.table(
        "",
        &["width", "hidden", "depth", "size", "epochs", "train_rmse", "test_rmse", "label_se_floor", "excess_rmse"],
    )?;
    let mut excess = Vec::new();
    for (j, &arch) in c.archs.iter().enumerate() {
        let mut net = Mlp::he(mu.dim(), arch, root.named("init").path(j as u64));
        train(&mut net, &train_x, &train_y, c.optimizer, root.named("batches").path(j as u64))?;
        let train_rmse = mse(&net, &train_x, &train_y).sqrt() * PRICE_SCALE;
        let test_rmse = mse(&net, &test_x, &test_y).sqrt() * PRICE_SCALE;
        let ex = (test_rmse * test_rmse - floor * floor).max(0.0).sqrt();
        let relu = net.to_relu_network();
        t.row(row![arch.width, arch.hidden, relu.depth(), relu.size(), c.optimizer.epochs, train_rmse, test_rmse, floor, ex])?;
        excess.push(ex);
    }
    run.done(t)?;

    let mut s = run.table("summary", &["first_excess", "last_excess", "improvement", "required", "pass"])?;
    let (first, last) = (excess[0], *excess.last().expect("nonempty"));
    let improvement = if first > 0.0 { 1.0 - last / first } else { 0.0 };
    let pass = c.archs.len() < 2 || improvement >= c.min_improvement;
    if !pass {
        run.fail(format!("architecture sweep improved the excess RMSE by {improvement:.3} < {}", c.min_improvement));
    }
    s.row(row![first, last, improvement, c.min_improvement, pass])?;
    run.done(s)?;

    let mut gc = run.table("gradcheck", &["pair", "width", "hidden", "rel_error", "pass"])?;
    let gkey = root.named("gradcheck");
    for i in 0..c.gradcheck_pairs {
        let k = gkey.path(i as u64);
        let mut rng = k.stream(0).rng();
        use rand::Rng;
        let arch = Arch {
            width: rng.random_range(2..=12),
            hidden: rng.random_range(1..=3),
        };
        let mut net = Mlp::he(mu.dim(), arch, k.stream(1));
        // Nonzero biases keep a dead layer from pinning later units on a kink.
        let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        net.set_params(&p);
        let x: Vec<f64> = (0..mu.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: f64 = rng.random_range(-1.0..1.0);
        let err = gradient_check(&net, &[x.as_slice()], &[y], c.gradcheck_step);
        let pass = err <= c.gradcheck_tolerance;
        if !pass {
            run.fail(format!("gradient check pair {i}: relative error {err:e}"));
        }
        gc.row(row![i, arch.width, arch.hidden, err, pass])?;
    }
    run.done(gc)?;
    Ok(run.outcome())
}

fn model_spec(m: &ModelConfig) -> ModelSpec {
    match m.clone() {
        ModelConfig::Cch { theta, x0, v0, policy } => ModelSpec::Cch { theta, x0, v0, policy },
        ModelConfig::RBergomi {
            theta,
            trunc,
            x0,
            source,
            r_clamp,
        } => ModelSpec::RBergomi {
            theta,
            trunc,
            x0,
            source,
            r_clamp,
        },
    }
}

fn price(c: PriceConfig, mut run: Run) -> Result<Outcome, CliError> {
    if c.strikes.is_empty() {
        return Err(config_err("no strikes"));
    }
    let g = grid(c.horizon, c.steps)?;
    let spec = model_spec(&c.model);
    let oracle = match (&c.model, c.oracle) {
        (ModelConfig::Cch { theta, x0, v0, .. }, true) if theta.d() == 1 && c.payoff == PayoffSpec::Call => Some(HestonParams {
            a: theta.a[0],
            b: theta.b[0],
            nu: theta.nu[0],
            rho: theta.rho_v[0],
            v0: v0[0],
        })
        .map(|p| (p, x0[0])),
        (_, true) => return Err(config_err("the oracle needs a one-asset CCH model and a call payoff")),
        _ => None,
    };
    let name = match c.model {
        ModelConfig::Cch { .. } => "cch",
        ModelConfig::RBergomi { .. } => "rbergomi",
    };
    let mut t = run.table("", &["model", "strike", "horizon", "paths", "price", "se", "oracle", "z", "pass"])?;
    let key = RngKey::new(c.seed).named("price");
    for &k in &c.strikes {
        let r = mc_price(&spec, &c.payoff, k, g, c.paths, key).map_err(|e| match e {
            svnet::error::SimError::Invalid(m) => CliError::Config(m),
            e => e.into(),
        })?;
        let mut pass = c.max_se.is_none_or(|m| r.se <= m);
        let (o, z) = match oracle {
            Some((p, x0)) => {
                let o = heston_cf_price(&p, x0, k, c.horizon)?;
                let z = (r.estimate - o) / r.se;
                pass &= z.abs() <= 3.0;
                (o.to_string(), z.to_string())
            }
            None => (String::new(), String::new()),
        };
        if !pass {
            run.fail(format!("K={k}: price {} se {} oracle {o}", r.estimate, r.se));
        }
        t.row(row![name, k, c.horizon, c.paths, r.estimate, r.se, o, z, pass])?;
    }
    run.done(t)?;
    Ok(run.outcome())
}

/// `|Δ_{j+1}| ≤ |Δ_j| + 2·SE` for consecutive sweep rows.
fn shrinking(rows: &[SweepRow]) -> Vec<(usize, bool)> {
    rows.windows(2)
        .enumerate()
        .map(|(j, w)| {
            let se = w[0].diff_se.hypot(w[1].diff_se);
            (j, w[1].diff.abs() <= w[0].diff.abs() + 2.0 * se)
        })
        .collect()
}

fn sweep_table(run: &Run, extra: &[&str]) -> Result<Table, CliError> {
    let mut cols = vec!["param"];
    cols.extend_from_slice(extra);
    cols.extend(["price", "se", "diff_to_reference", "diff_se", "shrink_pass"]);
    run.table("", &cols)
}

fn truncation(c: TruncationSweepConfig, mut run: Run) -> Result<Outcome, CliError> {
    let g = grid(c.horizon, c.steps)?;
    let payoff = PayoffSpec::CappedCall { cap: c.cap };
    let rows = truncation_sweep(
        &c.theta,
        &c.truncs,
        c.x0,
        &payoff,
        c.strike,
        g,
        c.source,
        c.paths,
        RngKey::new(c.seed).named("truncation-sweep"),
    )
    .map_err(|e| match e {
        svnet::error::SimError::Invalid(m) => CliError::Config(m),
        e => e.into(),
    })?;
    let mut t = sweep_table(&run, &[])?;
    let body = &rows[..rows.len() - 1];
    let shrink = shrinking(body);
    for (j, r) in rows.iter().enumerate() {
        let ok = j == 0 || shrink.get(j - 1).is_none_or(|s| s.1);
        let capped = r.price <= c.cap;
        if !ok || !capped {
            run.fail(format!("D={}: |ΔP| {} does not shrink or price above cap", r.param, r.diff));
        }
        t.row(row![r.param, r.price, r.se, r.diff, r.diff_se, ok && capped])?;
    }
    run.done(t)?;
    Ok(run.outcome())
}

fn stopped(c: StoppedSweepConfig, mut run: Run) -> Result<Outcome, CliError> {
    let g = grid(c.horizon, c.steps)?;
    if c.scales.is_empty() {
        return Err(config_err("no box scales"));
    }
    let rows = stopped_domain_sweep(
        &c.theta,
        &c.x0,
        &c.v0,
        &c.payoff,
        c.strike,
        g,
        c.base,
        &c.scales,
        c.paths,
        RngKey::new(c.seed).named("stopped-sweep"),
    )
    .map_err(|e| match e {
        svnet::error::SimError::Invalid(m) => CliError::Config(m),
        e => e.into(),
    })?;
    let mut t = sweep_table(&run, &["x_lo", "x_hi", "v_lo", "v_hi"])?;
    let body = &rows[..rows.len() - 1];
    let shrink = shrinking(body);
    for (j, r) in rows.iter().enumerate() {
        let b = if r.param.is_finite() {
            Some(c.base.scaled(c.x0[0], c.v0[0], r.param))
        } else {
            None
        };
        let mut ok = j == 0 || shrink.get(j - 1).is_none_or(|s| s.1);
        if j + 2 == rows.len() {
            ok &= r.diff.abs() <= 2.0 * r.diff_se;
        }
        if !ok {
            run.fail(format!("scale {}: stopped price {} differs from the unstopped price by {}", r.param, r.price, r.diff));
        }
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        t.row(row![
            r.param,
            f(b.map(|b| b.x.0)),
            f(b.map(|b| b.x.1)),
            f(b.map(|b| b.v.0)),
            f(b.map(|b| b.v.1)),
            r.price,
            r.se,
            r.diff,
            r.diff_se,
            ok
        ])?;
    }
    run.done(t)?;
    Ok(run.outcome())
}
