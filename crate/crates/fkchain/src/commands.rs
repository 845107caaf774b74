//! One function per subcommand. Each returns the report, a CSV table and the list of
//! violated invariants; the caller decides how to write them.

use clap::ValueEnum;
use fkchain_core::feynman_kac::{
    fk_semigroup_apply, gauge_function, schrodinger_generator, super_gauge_margin,
};
use fkchain_core::girsanov::{kato_transfer_bound, reduction_identity_residual, TransferBound};
use fkchain_core::pathsim::{
    fk_cross_check, girsanov_empirical, lifetime_horizon, mc_mean_one, mc_quadratic_variation,
    McEstimate,
};
use fkchain_core::revuz;
use fkchain_core::spectral::{independence_report, FSpec, MeasureSpec};
use fkchain_core::{Error, JumpPerturbation, SmoothMeasure, SymmetricChain};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{
    KatoArgs, McArgs, ModelArgs, PerturbedArgs, SemigroupArgs, SpectralArgs, SweepArgs, What,
};
use crate::error::{CliError, CliResult};
use crate::format::{to_json, Cell, Table};
use crate::input::{
    explicit_model, jump_json, load_family, load_function, load_jump, load_measure, load_model,
    measure_json, read_json,
};
use crate::parallel::{truncation_sweep, Parallel};

/// Absolute residual allowed in `(-A) g = k`, relative to `max(1, ||A|| ||g||)`.
const GAUGE_RESIDUAL_TOL: f64 = 1e-9;
/// Allowed residual of the Girsanov reduction identity, relative to `max(1, ||A||)`.
const REDUCTION_TOL: f64 = 1e-12;
/// Fraction of Monte Carlo cells that must fall within three standard errors.
const MC_PASS_FRACTION: f64 = 0.95;
/// Transfer bounds try `k = 2, 3, ...` up to this order until the moment is finite.
const MAX_TRANSFER_ORDER: u32 = 64;

/// What a command produced.
#[derive(Debug)]
pub struct Output {
    pub command: String,
    pub report: Value,
    pub table: Table,
    /// Further files for the output directory, `(name, contents)`.
    pub extra: Vec<(String, String)>,
    pub violations: Vec<String>,
}

impl Output {
    fn new(command: &str, report: impl Serialize, table: Table) -> Self {
        Self {
            command: command.into(),
            report: serde_json::to_value(report).expect("reports serialize"),
            table,
            extra: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, what: &str) {
        if !ok {
            self.violations.push(what.into());
        }
    }
}

struct Perturbed {
    chain: SymmetricChain,
    mu: SmoothMeasure,
    f: JumpPerturbation,
}

fn with_alpha(chain: SymmetricChain, alpha: Option<f64>) -> CliResult<SymmetricChain> {
    match alpha {
        Some(a) if a != 0.0 => Ok(chain.alpha_subprocess(a)?),
        _ => Ok(chain),
    }
}

fn load_perturbed(a: &PerturbedArgs) -> CliResult<Perturbed> {
    let (_, chain) = load_model(&a.model)?;
    let chain = with_alpha(chain, a.alpha)?;
    let n = chain.n();
    let mu =
        a.mu.as_deref()
            .map(|p| load_measure(p, n))
            .transpose()?
            .unwrap_or_else(|| SmoothMeasure::zero(n));
    let f =
        a.f.as_deref()
            .map(|p| load_jump(p, n))
            .transpose()?
            .unwrap_or_else(|| JumpPerturbation::zero(n));
    Ok(Perturbed { chain, mu, f })
}

fn state_table(chain: &SymmetricChain) -> Table {
    let mut t = Table::new(&["state", "mass", "killing", "jump_rate"]);
    for (x, r) in chain.jump_rates().into_iter().enumerate() {
        t.push(vec![
            x.into(),
            chain.mass()[x].into(),
            chain.killing()[x].into(),
            r.into(),
        ]);
    }
    t
}

fn summary(chain: &SymmetricChain) -> Value {
    json!({
        "n": chain.n(),
        "nnz": chain.rates().nnz(),
        "conservative": chain.is_conservative(),
    })
}

pub fn model_build(a: &ModelArgs) -> CliResult<Output> {
    let (_, chain) = load_model(&a.model)?;
    let model = explicit_model(&chain);
    let mut report = summary(&chain);
    report["model"] = serde_json::to_value(&model).expect("models serialize");
    let mut out = Output::new("model build", report, state_table(&chain));
    out.extra.push(("model.json".into(), to_json(&model)));
    Ok(out)
}

pub fn model_validate(a: &ModelArgs) -> CliResult<Output> {
    let (spec, chain) = load_model(&a.model)?;
    let mut report = summary(&chain);
    report["valid"] = json!(true);
    report["kind"] = serde_json::to_value(&spec).expect("models serialize")["kind"].clone();
    Ok(Output::new("model validate", report, state_table(&chain)))
}

pub fn kato_diagnose(a: &KatoArgs) -> CliResult<Output> {
    let (_, chain) = load_model(&a.model)?;
    let chain = with_alpha(chain, a.alpha)?;
    let nu = load_measure(&a.mu, chain.n())?;
    let r = revuz::kato_diagnose(&chain, &nu, &a.t, &a.fractions)?;
    let mut table = Table::new(&["t", "sup_expected_functional", "slope_bound"]);
    for p in &r.k.points {
        table.push(vec![
            p.t.into(),
            p.sup.into(),
            (p.t * r.k.density_bound).into(),
        ]);
    }
    let consistent = r.consistent();
    let report = json!({
        "measure": measure_json(&nu),
        "alpha": a.alpha.unwrap_or(0.0),
        "consistent": consistent,
        "diagnostics": r,
    });
    let mut out = Output::new("kato diagnose", report, table);
    out.require(
        consistent,
        "Kato class inclusions or the energy inequality failed",
    );
    Ok(out)
}

pub fn fk_gauge(a: &PerturbedArgs) -> CliResult<Output> {
    let p = load_perturbed(a)?;
    let gauge = gauge_function(&p.chain, &p.mu, &p.f)?;
    let op = schrodinger_generator(&p.chain, &p.mu, &p.f)?;
    let mut table = Table::new(&["state", "g"]);
    let (residual, epsilon0, positive) = match &gauge.g {
        Some(g) => {
            let ag = op.operator().apply(g);
            let residual = ag
                .iter()
                .zip(p.chain.killing())
                .fold(0.0f64, |m, (v, k)| m.max((k + v).abs()));
            for (x, v) in g.iter().enumerate() {
                table.push(vec![x.into(), (*v).into()]);
            }
            (
                Some(residual),
                Some(super_gauge_margin(&p.chain, &p.mu, &p.f)?),
                g.iter().all(|&v| v > 0.0),
            )
        }
        None => (None, None, true),
    };
    let scale = gauge.g.as_ref().map_or(1.0, |g| {
        op.operator().max_abs() * g.iter().fold(0.0f64, |m, v| m.max(v.abs())) * p.chain.n() as f64
    });
    let report = json!({
        "gaugeable": gauge.gaugeable,
        "status": gauge.status,
        "g": gauge.g,
        "lambda2": gauge.lambda2,
        "epsilon0": epsilon0,
        "residual": residual,
    });
    let mut out = Output::new("fk gauge", report, table);
    out.require(
        residual.map_or(true, |r| r <= GAUGE_RESIDUAL_TOL * scale.max(1.0)),
        "gauge residual ||(-A) g - k|| too large",
    );
    out.require(positive, "gauge function is not positive");
    Ok(out)
}

pub fn fk_semigroup(a: &SemigroupArgs) -> CliResult<Output> {
    let p = load_perturbed(&a.inputs)?;
    let n = p.chain.n();
    let f = a
        .func
        .as_deref()
        .map(|path| load_function(path, n))
        .transpose()?
        .unwrap_or_else(|| vec![1.0; n]);
    let op = schrodinger_generator(&p.chain, &p.mu, &p.f)?;
    let values = fk_semigroup_apply(&op, a.t, &f)?;
    let mut table = Table::new(&["state", "f", "value"]);
    for x in 0..n {
        table.push(vec![x.into(), f[x].into(), values[x].into()]);
    }
    let scale = f
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let nonnegative = f.iter().any(|&v| v < 0.0) || values.iter().all(|&v| v >= -1e-12 * scale);
    let report = json!({ "t": a.t, "f": f, "values": values });
    let mut out = Output::new("fk semigroup", report, table);
    out.require(
        nonnegative,
        "semigroup of a nonnegative function has a negative entry",
    );
    Ok(out)
}

/// Transfer bound at the smallest `k` (largest `p = k / (k - 1)`) with a finite moment.
fn transfer(p: &Perturbed) -> CliResult<(Option<TransferBound>, &'static str)> {
    if p.chain.is_conservative() {
        return Ok((
            None,
            "the chain is conservative; pass --alpha for a transient subprocess",
        ));
    }
    let nu = p.mu.abs();
    for k in 2..=MAX_TRANSFER_ORDER {
        match kato_transfer_bound(&p.chain, &nu, &p.f, k) {
            Ok(b) => return Ok((Some(b), "")),
            Err(Error::MomentInfinite { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((
        None,
        "the exponential moment is infinite for every tried order",
    ))
}

pub fn girsanov_check(a: &SpectralArgs) -> CliResult<Output> {
    let p = load_perturbed(&a.inputs)?;
    let residual = reduction_identity_residual(&p.chain, &p.mu, &p.f)?;
    let scale = schrodinger_generator(&p.chain, &p.mu, &p.f)?
        .operator()
        .max_abs()
        .max(1.0);
    let spectral = independence_report(&p.chain, &p.mu, &p.f, &a.p, true)?;
    let matched = spectral.girsanov.clone().expect("requested");
    let (bound, note) = transfer(&p)?;
    let mut table = Table::new(&["quantity", "original", "transformed"]);
    table.push(vec![
        "lambda1".into(),
        spectral.lambda1.into(),
        matched.lambda1.into(),
    ]);
    table.push(vec![
        "lambda2".into(),
        spectral.lambda2.into(),
        matched.lambda2.into(),
    ]);
    table.push(vec![
        "lambda_inf".into(),
        spectral.lambda_inf.into(),
        matched.lambda_inf.into(),
    ]);
    for (x, y) in spectral.lambda_p.iter().zip(&matched.lambda_p) {
        table.push(vec![
            format!("lambda_p({})", x.p).into(),
            x.value.into(),
            y.value.into(),
        ]);
    }
    let report = json!({
        "residual": residual,
        "lhs": bound.map(|b| b.lhs),
        "rhs": bound.map(|b| b.rhs),
        "lambda_match": matched,
        "transfer": bound,
        "transfer_note": note,
    });
    let mut out = Output::new("girsanov check", report, table);
    out.require(
        residual <= REDUCTION_TOL * scale,
        "reduction identity residual too large",
    );
    out.require(
        matched.matched,
        "spectral bounds differ between the original and transformed chains",
    );
    out.require(bound.map_or(true, |b| b.holds), "Kato transfer bound fails");
    Ok(out)
}

pub fn spectral_report(a: &SpectralArgs) -> CliResult<Output> {
    let p = load_perturbed(&a.inputs)?;
    let via_girsanov = !p.f.is_zero();
    let r = independence_report(&p.chain, &p.mu, &p.f, &a.p, via_girsanov)?;
    let mut table = Table::new(&["quantity", "value", "method"]);
    let method = |m| {
        serde_json::to_value(m)
            .expect("methods serialize")
            .as_str()
            .unwrap_or_default()
            .to_string()
    };
    table.push(vec![
        "lambda1".into(),
        r.lambda1.into(),
        method(r.methods.lambda1).into(),
    ]);
    table.push(vec![
        "lambda2".into(),
        r.lambda2.into(),
        method(r.methods.lambda2).into(),
    ]);
    table.push(vec![
        "lambda_inf".into(),
        r.lambda_inf.into(),
        method(r.methods.lambda_inf).into(),
    ]);
    for e in &r.lambda_p {
        table.push(vec![
            format!("lambda_p({})", e.p).into(),
            e.value.into(),
            method(r.methods.lambda_p).into(),
        ]);
    }
    let violations = r.violations();
    let mut out = Output::new("spectral report", &r, table);
    out.violations = violations;
    Ok(out)
}

pub fn spectral_sweep(a: &SweepArgs) -> CliResult<Output> {
    let family = load_family(&a.model)?;
    let mu: MeasureSpec =
        a.mu.as_deref()
            .map(read_json)
            .transpose()?
            .unwrap_or(MeasureSpec::Zero);
    let f: FSpec =
        a.f.as_deref()
            .map(read_json)
            .transpose()?
            .unwrap_or(FSpec::Zero);
    let sizes: Vec<usize> = a.sizes.iter().flat_map(|&(lo, hi)| lo..=hi).collect();
    let r = truncation_sweep(&family, &sizes, &mu, &f, a.alpha, &a.p, a.split)?;
    let mut header = vec![
        "size".to_string(),
        "n".into(),
        "lambda2".into(),
        "lambda_inf".into(),
    ];
    header.extend(a.p.iter().map(|p| format!("lambda_p({p})")));
    header.push("inf_green".into());
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for row in &r.rows {
        let mut cells: Vec<Cell> = vec![
            row.size.into(),
            row.n.into(),
            row.lambda2.into(),
            row.lambda_inf.into(),
        ];
        cells.extend(row.lambda_p.iter().map(|e| Cell::from(e.value)));
        cells.push(row.inf_green.into());
        table.push(cells);
    }
    let ok = r.invariants_ok();
    let conservative_split = r
        .split
        .as_ref()
        .map_or(true, |s| s.reflecting_conservative || !mu.is_zero());
    let mut out = Output::new("spectral sweep", &r, table);
    out.require(ok, "ordering lambda_inf <= lambda_p <= lambda_2 or lambda_inf >= min(lambda_2, 0) failed at some size");
    out.require(
        conservative_split,
        "reflecting truncations without potential must have lambda_inf = 0",
    );
    Ok(out)
}

#[derive(Serialize)]
struct McCell {
    state: usize,
    t: f64,
    quantity: &'static str,
    /// End state `y` or jump pair `a->b` the quantity refers to; empty for whole-path quantities.
    target: String,
    estimate: f64,
    stderr: f64,
    exact: f64,
    pass: bool,
}

impl McCell {
    fn new(state: usize, t: f64, quantity: &'static str, e: McEstimate, exact: f64) -> Self {
        Self {
            state,
            t,
            quantity,
            target: String::new(),
            estimate: e.mean,
            stderr: e.stderr,
            exact,
            pass: e.within(exact, 3.0),
        }
    }

    fn at(mut self, target: String) -> Self {
        self.target = target;
        self
    }
}

fn mc_table(cells: &[McCell]) -> Table {
    let mut t = Table::new(&[
        "state", "t", "quantity", "target", "estimate", "stderr", "exact", "pass",
    ]);
    for c in cells {
        t.push(vec![
            c.state.into(),
            c.t.into(),
            c.quantity.into(),
            c.target.as_str().into(),
            c.estimate.into(),
            c.stderr.into(),
            c.exact.into(),
            c.pass.into(),
        ]);
    }
    t
}

pub fn mc_verify(a: &McArgs) -> CliResult<Output> {
    let (_, chain) = load_model(&a.model)?;
    let n = chain.n();
    let f =
        a.f.as_deref()
            .map(|p| load_jump(p, n))
            .transpose()?
            .unwrap_or_else(|| JumpPerturbation::zero(n));
    let starts: Vec<usize> = match (a.x.is_empty(), a.what) {
        (false, _) => a.x.clone(),
        (true, What::MeanOne | What::Quadvar) => (0..n).collect(),
        (true, _) => vec![0],
    };
    for &x in &starts {
        chain.check_state(x)?;
    }
    let mut cells = Vec::new();
    let mut details = Vec::new();
    let mut extra_ok = true;
    match a.what {
        What::MeanOne => {
            let times = if a.t.is_empty() {
                vec![0.5, 2.0]
            } else {
                a.t.clone()
            };
            for &t in &times {
                for &x in &starts {
                    let r = mc_mean_one(&chain, &f, x, t, a.n, a.seed, &Parallel)?;
                    cells.push(McCell::new(x, t, "mean_one", r.closed, 1.0));
                    extra_ok &= r.supermartingale_ok;
                    details.push(serde_json::to_value(&r).expect("serializes"));
                }
            }
        }
        What::Quadvar => {
            let times = if a.t.is_empty() {
                vec![lifetime_horizon(&chain, 1e-6)?]
            } else {
                a.t.clone()
            };
            for &t in &times {
                for &x in &starts {
                    let r = mc_quadratic_variation(&chain, &f, x, t, a.n, a.seed, &Parallel)?;
                    cells.push(McCell::new(
                        x,
                        t,
                        "quadratic_variation",
                        r.estimate,
                        r.exact,
                    ));
                    extra_ok &= r.uniformly_integrable;
                    details.push(serde_json::to_value(&r).expect("serializes"));
                }
            }
        }
        What::Girsanov => {
            let times = if a.t.is_empty() {
                vec![1.0]
            } else {
                a.t.clone()
            };
            for &t in &times {
                for &x in &starts {
                    let r = girsanov_empirical(&chain, &f, x, t, a.n, a.seed, &Parallel)?;
                    for c in &r.states {
                        let y = c.state.to_string();
                        cells.push(McCell::new(x, t, "direct", c.direct, c.exact).at(y.clone()));
                        cells.push(McCell::new(x, t, "reweighted", c.reweighted, c.exact).at(y));
                    }
                    for j in &r.jumps {
                        let pair = format!("{}->{}", j.from, j.to);
                        cells.push(McCell::new(x, t, "jump_pair", j.reweighted, j.exact).at(pair));
                    }
                    details.push(serde_json::to_value(&r).expect("serializes"));
                }
            }
        }
        What::Fk => {
            let mu = match &a.mu {
                Some(p) => load_measure(p, n)?,
                None => SmoothMeasure::zero(n),
            };
            let g = a
                .func
                .as_deref()
                .map(|p| load_function(p, n))
                .transpose()?
                .unwrap_or_else(|| vec![1.0; n]);
            let times = if a.t.is_empty() {
                vec![1.0]
            } else {
                a.t.clone()
            };
            for &t in &times {
                for &x in &starts {
                    let r = fk_cross_check(&chain, &mu, &f, &g, x, t, a.n, a.seed, &Parallel)?;
                    cells.push(McCell::new(x, t, "direct", r.direct, r.exact));
                    cells.push(McCell::new(x, t, "reweighted", r.reweighted, r.exact));
                    details.push(serde_json::to_value(&r).expect("serializes"));
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Usage("no cells to evaluate".into()));
    }
    let passed = cells.iter().filter(|c| c.pass).count();
    let fraction = passed as f64 / cells.len() as f64;
    let table = mc_table(&cells);
    let report = json!({
        "what": a.what.to_possible_value().map(|v| v.get_name().to_string()),
        "n": a.n,
        "seed": a.seed,
        "jump_weight": jump_json(&f),
        "pass_fraction": fraction,
        "cells": cells,
        "details": details,
        "note": "uniform integrability is checked through its observable consequences: mean one at the lifetime and a finite supremum of the potential",
    });
    let mut out = Output::new("mc verify", report, table);
    out.require(
        fraction >= MC_PASS_FRACTION,
        "fewer than 95% of cells within three standard errors",
    );
    out.require(
        extra_ok,
        "supermartingale or uniform integrability check failed",
    );
    Ok(out)
}
