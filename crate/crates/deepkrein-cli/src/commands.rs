use deepkrein::analysis::{empirical_rademacher, rademacher_bound_nn, rnn_radius, sparsity_report, BoundReport};
use deepkrein::kreinkernel::{gram, KernelDefinition, Variant};
use deepkrein::ksvm::{stabilized_objective, train_gd, train_squared, TrainedKSVM};
use deepkrein::netcore::{
    fmt17, forward, gradient, max_preactivations, objective, train, Architecture, Dataset, Loss, Penalty, WeightSet,
};
use deepkrein::pushforward::{flat_eval, FlatSpace};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde_json::{json, Value};

use crate::config::{load_dataset, resolve};
use crate::{num, nums, write_atomic, CliError, Command, Context, Report};

pub(crate) fn dispatch(command: Command, ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    match command {
        Command::Flatten => run_flatten(ctx, report),
        Command::Kernel => run_kernel(ctx, report),
        Command::TrainNet => run_train_net(ctx, report).map(|_| ()),
        Command::TrainKsvm => run_train_ksvm(ctx, report).map(|_| ()),
        Command::Compare => run_compare(ctx, report),
        Command::Bounds => run_bounds(ctx, report),
        Command::Sparsity => run_sparsity(ctx, report),
    }
}

fn dataset(ctx: &Context, arch: &Architecture) -> Result<Option<Dataset>, CliError> {
    ctx.config.dataset.as_ref().map(|p| load_dataset(&resolve(&ctx.base, p), arch.input_dim())).transpose()
}

fn require_dataset(ctx: &Context, arch: &Architecture) -> Result<Dataset, CliError> {
    dataset(ctx, arch)?.ok_or_else(|| CliError::Config("this subcommand needs a `dataset`".into()))
}

/// Weights from the configured file, or the seeded initialisation.
fn weights(ctx: &Context, arch: &Architecture, report: &mut Report) -> Result<WeightSet, CliError> {
    match &ctx.config.weights {
        Some(p) => {
            let path = resolve(&ctx.base, p);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            report.diag("weights_source", "file");
            Ok(WeightSet::from_text(arch, &text)?)
        }
        None => {
            report.diag("weights_source", "seeded initialisation");
            Ok(WeightSet::init(arch, ctx.config.seed))
        }
    }
}

fn side_file(ctx: &Context, suffix: &str, contents: &str) -> Result<String, CliError> {
    let path = ctx.side_file(suffix);
    write_atomic(&path, contents.as_bytes())?;
    Ok(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
}

fn spectrum(g: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(g.clone()).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn gram_diagnostics(g: &DMatrix<f64>) -> Value {
    let e = spectrum(g);
    json!({
        "n": g.nrows(),
        "min_eigenvalue": num(e[0]),
        "max_eigenvalue": num(e[e.len() - 1]),
        "negative_eigenvalues": e.iter().filter(|v| **v < 0.0).count(),
        "frobenius_norm": num(g.norm()),
        "symmetric": g == &g.transpose(),
    })
}

fn run_flatten(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let arch = ctx.config.architecture()?;
    let t = ctx.config.truncation;
    let fs = FlatSpace::build(&arch, t)?;
    let w = weights(ctx, &arch, report)?;
    let g = fs.metric();
    let v = fs.flat_weight(&w)?;
    report.result("truncation", t);
    report.result("level_sizes", fs.level_sizes());
    report.result("alphabet_sizes", fs.alphabet_sizes());
    report.result("entries", fs.len());
    report.result("negative_metric_entries", g.values().iter().filter(|x| **x < 0.0).count());
    report.result("zero_metric_entries", g.values().iter().filter(|x| **x == 0.0).count());
    let mut files = serde_json::Map::new();
    files.insert("metric".into(), side_file(ctx, "metric.txt", &fs.dump(&g)?)?.into());
    files.insert("flat_weight".into(), side_file(ctx, "flat_weight.txt", &fs.dump(&v)?)?.into());
    for q in 0..arch.depth() {
        let vq = fs.pushed_weights(&w, q)?;
        files.insert(format!("pushed_weight_{q}"), side_file(ctx, &format!("pushed_weight_{q}.txt"), &fs.dump(&vq)?)?.into());
    }
    match dataset(ctx, &arch)? {
        Some(data) => {
            let phi0 = fs.feature_map(&data.xs[0])?;
            files.insert("features_x0".into(), side_file(ctx, "features_x0.txt", &fs.dump(&phi0)?)?.into());
            let mut worst: f64 = 0.0;
            let mut per_point = Vec::with_capacity(data.len());
            for x in &data.xs {
                let f = forward(&arch, &w, x)?;
                let flat = flat_eval(&v, &fs.feature_map(x)?, &g)?;
                let rel = (f - flat).abs() / f.abs().max(1.0);
                worst = worst.max(rel);
                per_point.push(json!({ "network": num(f), "flat": num(flat) }));
            }
            report.result("max_relative_residual", num(worst));
            report.result("evaluations", Value::Array(per_point));
            if !arch.activations().iter().all(|s| matches!(s.kind(), deepkrein::activations::ActivationKind::Polynomial(_) | deepkrein::activations::ActivationKind::Linear)) {
                report.warn("non-polynomial activations: the flat form is a truncation and the residual includes the series tail");
            }
        }
        None => report.warn("no dataset: equivalence residual not computed"),
    }
    report.result("files", Value::Object(files));
    Ok(())
}

fn variant(ctx: &Context) -> Variant {
    if ctx.config.kernel.variant == "associated" {
        Variant::Associated
    } else {
        Variant::Krein
    }
}

fn gram_csv(g: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..g.nrows() {
        let row: Vec<String> = (0..g.ncols()).map(|j| fmt17(g[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn run_kernel(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let arch = ctx.config.architecture()?;
    let data = require_dataset(ctx, &arch)?;
    let def = KernelDefinition { arch, variant: variant(ctx) };
    let g = gram(&def, &data.xs)?;
    report.result("variant", ctx.config.kernel.variant.clone());
    report.result("gram_file", side_file(ctx, "gram.csv", &gram_csv(&g))?);
    report.result("diagonal", nums(g.diagonal().iter().copied()));
    report.diag("gram", gram_diagnostics(&g));
    Ok(())
}

struct NetOutcome {
    weights: WeightSet,
    risk: f64,
    predictions: Vec<f64>,
}

fn risk(loss: Loss, ys: &[f64], fs: &[f64]) -> f64 {
    ys.iter().zip(fs).map(|(y, f)| loss.value(*y, *f)).sum::<f64>() / ys.len() as f64
}

fn run_train_net(ctx: &Context, report: &mut Report) -> Result<NetOutcome, CliError> {
    let arch = ctx.config.architecture()?;
    let data = require_dataset(ctx, &arch)?;
    let loss = ctx.config.loss()?;
    let penalty = Penalty::new(ctx.config.lambda, arch.depth());
    let res = train(&arch, &data, loss, penalty, ctx.config.seed, ctx.config.train_config())?;
    let w = res.weights;
    let predictions = data.xs.iter().map(|x| forward(&arch, &w, x)).collect::<deepkrein::Result<Vec<f64>>>()?;
    let r = risk(loss, &data.ys, &predictions);
    report.result("net_initial_objective", num(res.initial_objective));
    report.result("net_final_objective", num(res.final_objective));
    report.result("net_training_loss", num(r));
    report.result("net_r_nn", num(rnn_radius(&w)));
    report.result("net_predictions", nums(predictions.iter().copied()));
    report.result("net_weights_file", side_file(ctx, "weights.txt", &w.to_text())?);
    report.diag("net_objective_history_length", res.history.len());
    report.diag("net_objective_check", num(objective(&arch, &w, &data, loss, penalty)?));
    report.diag("net_gradient_norm", num(gradient(&arch, &w, &data, loss, penalty)?.norm()));
    report.diag("net_max_preactivations", nums(max_preactivations(&arch, &w, &data.xs)?));
    if res.final_objective >= res.initial_objective {
        report.warn("network training did not improve on the initialisation");
    }
    Ok(NetOutcome { weights: w, risk: r, predictions })
}

struct KsvmOutcome {
    risk: f64,
    gram: DMatrix<f64>,
}

fn run_train_ksvm(ctx: &Context, report: &mut Report) -> Result<KsvmOutcome, CliError> {
    let arch = ctx.config.architecture()?;
    let data = require_dataset(ctx, &arch)?;
    let loss = ctx.config.loss()?;
    let lambda = ctx.config.lambda;
    let def = KernelDefinition::krein(arch);
    let g = gram(&def, &data.xs)?;
    let y = DVector::from_column_slice(&data.ys);
    let alpha = match loss {
        Loss::Squared => {
            let sol = train_squared(&g, &y, lambda)?;
            report.result("ksvm_solver", "eigendecomposition");
            report.diag("ksvm_residual", num(sol.residual));
            sol.alpha
        }
        Loss::Logistic => {
            let sol = train_gd(&g, &y, lambda, loss, ctx.config.seed, ctx.config.train_config())?;
            report.result("ksvm_solver", "gradient descent");
            report.diag("ksvm_gradient_norm", num(sol.gradient_norm));
            sol.alpha
        }
    };
    let parts = stabilized_objective(&alpha, &g, &y, lambda, loss)?;
    let predictions: Vec<f64> = (&g * &alpha).iter().copied().collect();
    let model = TrainedKSVM::new(def, data.xs.clone(), alpha.clone(), lambda)?;
    report.result("ksvm_alpha", nums(alpha.iter().copied()));
    report.result("ksvm_training_loss", num(parts.risk));
    report.result("ksvm_regularizer", num(parts.regularizer));
    report.result("ksvm_objective", num(parts.total));
    report.result("ksvm_predictions", nums(predictions));
    report.result("ksvm_model_file", side_file(ctx, "ksvm.txt", &model.to_text())?);
    report.diag("gram", gram_diagnostics(&g));
    if parts.regularizer < 0.0 {
        report.warn("the stabilised regulariser αᵀGα is negative (indefinite kernel)");
    }
    Ok(KsvmOutcome { risk: parts.risk, gram: g })
}

fn bound_json(b: &BoundReport) -> Value {
    let concave = match &b.bound_concave {
        Ok(c) => json!({
            "integral": num(c.integral),
            "unbounded": c.unbounded.map(num),
            "bounded": c.bounded.map(|(q, v)| json!({ "layer": q, "value": num(v) })),
        }),
        Err(msg) => json!({ "precondition_not_met": msg }),
    };
    json!({
        "r_nn": num(b.r_nn),
        "r_svm": num(b.r_svm),
        "d": b.depth,
        "n": b.n,
        "h": num(b.h),
        "l": num(b.l),
        "mean_kbar": num(b.mean_kbar),
        "mean_sq_norm": num(b.mean_sq_norm),
        "bound_kernel": num(b.bound_kernel),
        "bound_linear": b.bound_linear.map(num),
        "bound_concave": concave,
        "empirical_estimate": b.empirical_estimate.map(num),
    })
}

fn bounds_for(ctx: &Context, arch: &Architecture, r_nn: f64, sample: &[Vec<f64>], report: &mut Report) -> Result<Value, CliError> {
    let n = ctx.config.bounds.n.unwrap_or(sample.len());
    let mut b = rademacher_bound_nn(arch, r_nn, sample, n)?;
    let est = empirical_rademacher(arch, r_nn, sample, ctx.config.bounds.trials, ctx.config.bounds.hypothesis_draws, ctx.config.seed)?;
    b.empirical_estimate = Some(est.value);
    report.diag("empirical_hypotheses", est.draws);
    report.diag("empirical_rejected", est.rejected);
    report.diag("empirical_trials", ctx.config.bounds.trials);
    if let Err(msg) = &b.bound_concave {
        report.warn(format!("concave-case bound skipped: precondition not met: {msg}"));
    }
    if est.value > b.min_bound() {
        report.warn("empirical estimate exceeds the smallest theoretical bound");
    }
    if n != sample.len() {
        report.warn("bounds use N different from the sample size; the empirical estimate uses the sample");
    }
    Ok(bound_json(&b))
}

fn run_compare(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let arch = ctx.config.architecture()?;
    let data = require_dataset(ctx, &arch)?;
    let net = run_train_net(ctx, report)?;
    let svm = run_train_ksvm(ctx, report)?;
    let ksvm_pred: Vec<f64> = match report.results.get("ksvm_predictions") {
        Some(Value::Array(v)) => v.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect(),
        _ => Vec::new(),
    };
    let gap = net.predictions.iter().zip(&ksvm_pred).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    report.result("training_loss_gap", num(net.risk - svm.risk));
    report.result("max_prediction_gap", num(gap));
    report.diag("gram_trace", num(svm.gram.trace()));
    let r = rnn_radius(&net.weights);
    let r_nn = ctx.config.bounds.r_nn.unwrap_or(r);
    let bounds = bounds_for(ctx, &arch, r_nn, &data.xs, report)?;
    report.result("bounds", bounds);
    Ok(())
}

fn run_bounds(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let arch = ctx.config.architecture()?;
    let data = require_dataset(ctx, &arch)?;
    let r_nn = match ctx.config.bounds.r_nn {
        Some(r) => {
            report.diag("r_nn_source", "config");
            r
        }
        None => rnn_radius(&weights(ctx, &arch, report)?),
    };
    let bounds = bounds_for(ctx, &arch, r_nn, &data.xs, report)?;
    report.result("bounds", bounds);
    Ok(())
}

fn run_sparsity(ctx: &Context, report: &mut Report) -> Result<(), CliError> {
    let arch = ctx.config.architecture()?;
    let fs = FlatSpace::build(&arch, ctx.config.truncation)?;
    let w = weights(ctx, &arch, report)?;
    let s = sparsity_report(&fs, &w, &ctx.config.sparsity.epsilons)?;
    let p = &s.profile;
    report.result("truncation", ctx.config.truncation);
    report.result("entries", fs.len());
    report.result("r_nn", num(s.r_nn));
    report.result("h", num(s.h));
    report.result("lbar", num(s.lbar));
    report.result("lipschitz_intervals", nums(s.intervals.iter().copied()));
    report.result("norm_2_over_d", num(p.norm));
    report.result("norm_bound", num(p.norm_bound));
    report.result("v_inf", num(p.v_inf));
    report.result("v_inf_bound", num(p.v_inf_bound));
    report.result("pushed_inf", nums(s.pushed_inf.iter().copied()));
    report.result("pushed_inf_bound", num(s.pushed_inf_bound));
    report.result(
        "counts",
        Value::Array(
            p.counts
                .iter()
                .map(|(e, c, cap)| json!({ "epsilon": num(*e), "count": c, "cap": num(*cap) }))
                .collect(),
        ),
    );
    report.diag("truncated_left_sides", "norms and counts are computed over stored (truncated) indices only");
    if !s.lbar.is_finite() {
        report.warn("an associated functional leaves its activation's domain, so L̄ = ∞ and the norm bound is vacuous");
    }
    if !p.norm_ok() {
        report.warn("‖g⊙v‖_{2/d} exceeds its bound");
    }
    if !p.v_inf_ok() {
        report.warn("‖v_NN‖_∞ exceeds R_NN^d");
    }
    if !s.pushed_ok() {
        report.warn("some ‖v_[q]‖_∞ exceeds d·R_NN");
    }
    if !p.counts_ok() {
        report.warn("some ε-count exceeds its cap");
    }
    Ok(())
}
