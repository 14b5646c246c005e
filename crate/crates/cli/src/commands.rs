use std::path::PathBuf;

use losscurv::estimators::sc_min_estimate;
use losscurv::experiments::{minibatch_analysis, ou_escape_paths, perturbation_sweep, saddle_grid, PerturbationMode};
use losscurv::fields::eval_hessian;
use losscurv::geometry::{
    christoffel_at, metric_at, riemann_at, scalar_curvature_at, volume_deficit_coefficient, DeficitFitModel,
    GeodesicOptions, QuadratureSpec,
};
use losscurv::linalg::SymMatrix;
use losscurv::nn::{
    make_sine_dataset, mlp_loss_field, partition_by_phase, train, Activation, MlpSpec, ModelSnapshot, Optimizer,
    TrainConfig,
};
use losscurv::output::{fmt_g17, write_json, Cell, CsvTable};
use losscurv::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::field::{parse_matrix, resolve};

/// Writes the artifacts selected by `--format` as `<out>/<name>.{csv,json}`.
struct Sink<'a> {
    global: &'a GlobalArgs,
    config: Value,
}

impl Sink<'_> {
    fn path(&self, name: &str, ext: &str) -> PathBuf {
        self.global.out.join(format!("{name}.{ext}"))
    }

    fn emit<R: Serialize>(&self, name: &str, table: &CsvTable, report: &R) -> Result<()> {
        if self.global.format.csv() {
            table.write(&self.path(name, "csv"), &self.config)?;
        }
        if self.global.format.json() {
            write_json(&self.path(name, "json"), &self.config, self.global.seed, report)?;
        }
        Ok(())
    }
}

fn g(x: f64) -> String {
    fmt_g17(x)
}

pub fn run(cli: &Cli) -> Result<()> {
    let sink = Sink { global: &cli.global, config: serde_json::to_value(cli)? };
    let seed = cli.global.seed;
    match &cli.command {
        Command::Curvature(a) => curvature(&sink, a, seed),
        Command::Christoffel(a) => christoffel(&sink, a, seed),
        Command::Riemann(a) => riemann(&sink, a, seed),
        Command::SaddleGrid(a) => saddle(&sink, a),
        Command::BallVolume(a) => ball_volume(&sink, a, seed),
        Command::Perturb(a) => perturb(&sink, a, seed),
        Command::Escape(a) => escape(&sink, a, seed),
        Command::Minibatch(a) => minibatch(&sink, a, seed),
        Command::Train(a) => train_cmd(&sink, a, seed),
        Command::Estimate(a) => estimate(&sink, a, seed),
    }
}

fn point_columns(q: usize) -> Vec<String> {
    (0..q).map(|i| format!("x{i}")).collect()
}

fn curvature(sink: &Sink, a: &PointArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(a, seed)?;
    let r = scalar_curvature_at(&field, &x)?;
    let mut header = point_columns(x.len());
    header.extend(
        ["value", "grad_norm", "beta", "trace_h", "trace_h2", "nuclear_h", "frobenius_h", "scalar_curvature", "critical_form"]
            .map(String::from),
    );
    let mut row: Vec<Cell> = x.iter().map(|&v| v.into()).collect();
    row.extend([r.value, r.grad_norm, r.beta, r.trace_h, r.trace_h2, r.nuclear_h, r.frobenius_h, r.scalar_curvature, r.critical_form].map(Cell::from));
    let table = CsvTable { header, rows: vec![row] };
    sink.emit("curvature", &table, &r)?;
    if r.smoothness_warning {
        eprintln!("warning: the field is not twice differentiable everywhere; curvature is only valid away from kinks");
    }
    println!(
        "Sc = {} (tr H = {}, tr H² = {}, |∇f| = {}{})",
        g(r.scalar_curvature),
        g(r.trace_h),
        g(r.trace_h2),
        g(r.grad_norm),
        if r.at_critical_point { ", critical point" } else { "" }
    );
    Ok(())
}

fn christoffel(sink: &Sink, a: &PointArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(a, seed)?;
    let gamma = christoffel_at(&field, &x)?;
    let q = gamma.dim();
    let mut table = CsvTable::new(&["i", "k", "l", "gamma"]);
    for i in 0..q {
        for k in 0..q {
            for l in 0..q {
                table.push(vec![i.into(), k.into(), l.into(), gamma.get(i, k, l).into()]);
            }
        }
    }
    let contraction = gamma.contraction();
    let report = json!({ "dim": q, "point": x, "gamma": gamma.as_slice(), "contraction": contraction });
    sink.emit("christoffel", &table, &report)?;
    let max = gamma.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("christoffel: q = {q}, max |Γ| = {}, Γ^i_ki = [{}]", g(max), contraction.iter().map(|v| g(*v)).collect::<Vec<_>>().join(", "));
    Ok(())
}

fn riemann(sink: &Sink, a: &PointArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(a, seed)?;
    let riem = riemann_at(&field, &x)?;
    let metric = metric_at(&field, &x)?;
    let q = riem.dim();
    let mut table = CsvTable::new(&["i", "j", "k", "m", "r"]);
    for i in 0..q {
        for j in 0..q {
            for k in 0..q {
                for m in 0..q {
                    table.push(vec![i.into(), j.into(), k.into(), m.into(), riem.get(i, j, k, m).into()]);
                }
            }
        }
    }
    let ricci = riem.ricci();
    let sc: f64 = (0..q).flat_map(|i| (0..q).map(move |j| (i, j))).map(|(i, j)| metric.g_inv.get(i, j) * ricci.get(i, j)).sum();
    let sym = riem.symmetry_residuals(&metric.g);
    let report = json!({ "dim": q, "point": x, "riemann": riem, "ricci": ricci, "scalar_curvature": sc, "symmetry": sym });
    sink.emit("riemann", &table, &report)?;
    println!(
        "riemann: q = {q}, Sc = g^ab Ric_ab = {}, residuals antisymmetry {} pair {} bianchi {}",
        g(sc),
        g(sym.antisymmetry),
        g(sym.pair_symmetry),
        g(sym.bianchi)
    );
    Ok(())
}

fn saddle(sink: &Sink, a: &SaddleGridArgs) -> Result<()> {
    let records = saddle_grid(a.c, a.u, a.v)?;
    let mut table = CsvTable::new(&["u", "v", "f", "trace", "sc"]);
    for r in &records {
        table.push(vec![r.u.into(), r.v.into(), r.f.into(), r.trace_h.into(), r.sc.into()]);
    }
    let fold = |pick: fn(&losscurv::experiments::SaddleGridRecord) -> f64| {
        records.iter().map(pick).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (sc_min, sc_max) = fold(|r| r.sc);
    let (tr_min, tr_max) = fold(|r| r.trace_h);
    let report = json!({
        "c": a.c, "n_records": records.len(),
        "sc_min": sc_min, "sc_max": sc_max, "trace_min": tr_min, "trace_max": tr_max,
    });
    sink.emit("saddle-grid", &table, &report)?;
    println!("saddle-grid: {} nodes, Sc in [{}, {}], tr H in [{}, {}]", records.len(), g(sc_min), g(sc_max), g(tr_min), g(tr_max));
    Ok(())
}

fn ball_volume(sink: &Sink, a: &BallVolumeArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(&a.point, seed)?;
    let mut spec = QuadratureSpec::default_for_dim(field.dim());
    spec.seed = seed;
    spec.geodesic = GeodesicOptions { steps: a.steps, ..GeodesicOptions::default() };
    if let Some(n) = a.directions {
        spec.directions = n;
    }
    let model = match a.fit {
        FitArg::Quadratic => DeficitFitModel::Quadratic,
        FitArg::QuadraticQuartic => DeficitFitModel::QuadraticQuartic,
    };
    let fit = volume_deficit_coefficient(&field, &x, &a.r.values(), &spec, model)?;
    let mut table = CsvTable::new(&["radius", "volume", "std_error", "euclidean_volume", "ratio"]);
    for v in &fit.volumes {
        table.push(vec![v.radius.into(), v.volume.into(), v.std_error.into(), v.euclidean_volume.into(), v.ratio.into()]);
    }
    sink.emit("ball-volume", &table, &fit)?;
    if fit.fit_warning {
        eprintln!("warning: the deficit fit leaves a large residual; try smaller radii");
    }
    println!("Sc_estimate = {} (k = {}, residual {})", g(fit.sc_estimate), g(fit.k), g(fit.residual_rms));
    Ok(())
}

fn perturb(sink: &Sink, a: &PerturbArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(&a.point, seed)?;
    let mode = match a.mode {
        ModeArg::UnitSphere => PerturbationMode::UnitSphere,
        ModeArg::Gaussian => PerturbationMode::Gaussian,
    };
    let r = perturbation_sweep(&field, &x, a.epsilon, a.directions, mode, seed)?;
    let mut table = CsvTable::new(&["index", "radius", "delta"]);
    for (i, (rad, d)) in r.radii.iter().zip(&r.deltas).enumerate() {
        table.push(vec![i.into(), (*rad).into(), (*d).into()]);
    }
    sink.emit("perturb", &table, &r)?;
    println!(
        "perturb: mean delta {}, max delta {}, bound {}, max delta/bound {}, violations {}, failures {}",
        g(r.mean_delta),
        g(r.max_delta),
        g(r.bound),
        g(r.max_bound_ratio),
        r.violations,
        r.failures
    );
    Ok(())
}

fn escape(sink: &Sink, a: &EscapeArgs, seed: u64) -> Result<()> {
    let h = match &a.matrix {
        Some(m) => parse_matrix(m)?,
        None => SymMatrix::from_diag(&a.diag),
    };
    let (r, paths) = ou_escape_paths(&h, a.t, a.dt, a.paths, seed)?;
    let mut table = CsvTable::new(&["path", "escape"]);
    for (i, e) in paths.iter().enumerate() {
        table.push(vec![i.into(), (*e).into()]);
    }
    sink.emit("escape", &table, &r)?;
    println!(
        "escape: empirical {} ± {}, predicted {}, relative error {}",
        g(r.empirical_escape),
        g(r.std_error),
        g(r.predicted),
        g(r.rel_error)
    );
    Ok(())
}

fn activation(a: ActivationArg) -> Activation {
    match a {
        ActivationArg::Tanh => Activation::Tanh,
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Identity => Activation::Identity,
    }
}

fn minibatch(sink: &Sink, a: &MinibatchArgs, seed: u64) -> Result<()> {
    let hessians = match a.source {
        BatchSource::Counterexample => vec![SymMatrix::from_diag(&[2.0, 0.0]), SymMatrix::from_diag(&[0.0, 2.0])],
        BatchSource::Sine => {
            let data = make_sine_dataset(a.net.n, a.net.noise, seed)?;
            let spec = MlpSpec::uniform(a.net.widths.clone(), activation(a.net.activation))?;
            let cfg = TrainConfig::adam(a.net.lr, a.net.steps, data.len(), seed);
            let params = train(&spec, &data, &cfg)?.params;
            partition_by_phase(&data, a.k)?
                .into_iter()
                .map(|b| eval_hessian(&mlp_loss_field(spec.clone(), b)?, &params))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let r = minibatch_analysis(&hessians)?;
    let mut table = CsvTable::new(&["batch", "trace", "sc"]);
    for (i, (t, s)) in r.per_batch_traces.iter().zip(&r.per_batch_sc).enumerate() {
        table.push(vec![i.into(), (*t).into(), (*s).into()]);
    }
    sink.emit("minibatch", &table, &r)?;
    let mean_sc = r.per_batch_sc.iter().sum::<f64>() / r.k as f64;
    println!(
        "minibatch: k = {}, full Sc {}, mean batch Sc {}, sc_gap {}, trace_gap {}",
        r.k,
        g(r.full_sc),
        g(mean_sc),
        g(r.sc_gap),
        g(r.trace_gap)
    );
    Ok(())
}

fn train_cmd(sink: &Sink, a: &TrainArgs, seed: u64) -> Result<()> {
    let data = make_sine_dataset(a.net.n, a.net.noise, seed)?;
    let spec = MlpSpec::uniform(a.net.widths.clone(), activation(a.net.activation))?;
    let optimizer = match a.optimizer {
        OptimizerArg::Adam => Optimizer::adam(),
        OptimizerArg::Sgd => Optimizer::Sgd,
    };
    let cfg = TrainConfig {
        optimizer,
        learning_rate: a.net.lr,
        steps: a.net.steps,
        batch_size: a.batch_size.unwrap_or(data.len()),
        seed,
    };
    let r = train(&spec, &data, &cfg)?;
    let mut table = CsvTable::new(&["step", "loss", "grad_norm"]);
    for rec in &r.trace {
        table.push(vec![rec.step.into(), rec.loss.into(), rec.grad_norm.into()]);
    }
    let snap = ModelSnapshot {
        spec: spec.clone(),
        params: r.params.clone(),
        seed,
        final_loss: r.final_loss,
        final_grad_norm: r.final_grad_norm,
        dataset: data,
    };
    let model_path = sink.path("model", "json");
    std::fs::create_dir_all(&sink.global.out)?;
    snap.save(&model_path)?;
    let report = json!({
        "param_count": spec.param_count(), "steps": cfg.steps, "final_loss": r.final_loss,
        "final_grad_norm": r.final_grad_norm, "model": model_path,
    });
    sink.emit("train", &table, &report)?;
    println!(
        "train: q = {}, final loss {}, |∇f| {}, model saved to {}",
        spec.param_count(),
        g(r.final_loss),
        g(r.final_grad_norm),
        model_path.display()
    );
    Ok(())
}

fn estimate(sink: &Sink, a: &EstimateArgs, seed: u64) -> Result<()> {
    let (field, x) = resolve(&a.point, seed)?;
    let e = sc_min_estimate(&field, &x, a.probes, seed)?;
    let mut table = CsvTable::new(&["quantity", "mean", "std_error", "n_probes"]);
    table.push(vec!["trace_h".into(), e.trace.mean.into(), e.trace.std_error.into(), e.trace.n_probes.into()]);
    table.push(vec!["trace_h2".into(), e.trace_h2.mean.into(), e.trace_h2.std_error.into(), e.trace_h2.n_probes.into()]);
    sink.emit("estimate", &table, &e)?;
    if e.not_critical {
        eprintln!("warning: |∇f| = {} is not small; the critical-point formula is approximate", g(e.grad_norm));
    }
    println!(
        "Sc ≈ {} (tr H = {} ± {}, tr H² = {} ± {}, {} probes)",
        g(e.sc),
        g(e.trace.mean),
        g(e.trace.std_error),
        g(e.trace_h2.mean),
        g(e.trace_h2.std_error),
        e.trace.n_probes
    );
    Ok(())
}
