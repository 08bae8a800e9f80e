use serde_json::Value;

use super::{ComposeResult, Outcome, RunConfig, ScalarSummary};
use crate::mcmc::Estimate;
use crate::error::{Error, Result};

/// Column layout of `--output csv`, per command.
pub const CSV_HELP: &str = "\
CSV columns by command:
  pressure           convention,exact,mcmc,mcmc_stderr,agree
  metric, compose    i,j,exact,mcmc,mcmc_stderr
  connections        alpha,i,j,k,exact,mcmc,mcmc_stderr
  legendre, entropy  quantity,exact,mcmc,mcmc_stderr
  equilibrium        x,density
  free-report        quantity,value
  cramer-rao         i,j,error_cov,error_cov_stderr,metric_inverse
  fluctuations       n,i,j,beta,beta_stderr,metric
  loop-check         quantity,value,stderr
  convergence-sweep  n,method,i,j,value,stderr";

/// Six significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // The exponent after rounding to six digits.
    let sci = format!("{x:.5e}");
    let mag: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        sci
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(format_sig).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn is_flat(v: &[Value]) -> bool {
    v.iter().all(|x| !x.is_array() && !x.is_object())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) if is_flat(a) => {
            let items: Vec<String> = a.iter().map(scalar).collect();
            out.push((prefix.to_string(), format!("[{}]", items.join(", "))));
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

/// Aligned `key  value` lines of the result.
pub fn table(cfg: &RunConfig, outcome: &Outcome) -> Result<String> {
    let mut rows = Vec::new();
    flatten("", &serde_json::to_value(outcome)?, &mut rows);
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let mut s = format!(
        "# {} ({})\n",
        serde_json::to_value(cfg.command)?.as_str().unwrap_or_default(),
        serde_json::to_value(cfg.method)?.as_str().unwrap_or_default()
    );
    for (k, v) in rows {
        let pad = width - k.chars().count();
        s.push_str(&format!("{k}{}  {v}\n", " ".repeat(pad)));
    }
    Ok(s)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn csv(_cfg: &RunConfig, outcome: &Outcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rec = |fields: Vec<String>| w.write_record(&fields).map_err(csv_err);
    let e = |x: f64| format!("{x:e}");
    match outcome {
        Outcome::Pressure(rows) => {
            rec(vec!["convention".into(), "exact".into(), "mcmc".into(), "mcmc_stderr".into(), "agree".into()])?;
            for r in rows {
                rec(vec![
                    serde_json::to_value(r.convention)?.as_str().unwrap_or_default().to_string(),
                    opt(r.exact),
                    opt(r.mcmc.map(|m| m.value)),
                    opt(r.mcmc.map(|m| m.stderr)),
                    r.agree.map(|a| a.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        Outcome::Metric(side) | Outcome::Compose(ComposeResult { metric: side, .. }) => {
            rec(vec!["i".into(), "j".into(), "exact".into(), "mcmc".into(), "mcmc_stderr".into()])?;
            let m = side.exact.as_ref().or(side.mcmc.as_ref()).map_or(0, |g| g.value.len());
            for i in 0..m {
                for j in 0..m {
                    rec(vec![
                        i.to_string(),
                        j.to_string(),
                        opt(side.exact.as_ref().map(|g| g.value[i][j])),
                        opt(side.mcmc.as_ref().map(|g| g.value[i][j])),
                        opt(side.mcmc.as_ref().map(|g| g.stderr[i][j])),
                    ])?;
                }
            }
        }
        Outcome::Connections(side) => {
            rec(["alpha", "i", "j", "k", "exact", "mcmc", "mcmc_stderr"].map(String::from).to_vec())?;
            let list = side.exact.as_ref().or(side.mcmc.as_ref()).cloned().unwrap_or_default();
            for (idx, c) in list.iter().enumerate() {
                let m = c.value.dim();
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            rec(vec![
                                e(c.alpha),
                                i.to_string(),
                                j.to_string(),
                                k.to_string(),
                                opt(side.exact.as_ref().map(|l| l[idx].value.get(i, j, k))),
                                opt(side.mcmc.as_ref().map(|l| l[idx].value.get(i, j, k))),
                                opt(side.mcmc.as_ref().map(|l| l[idx].stderr.get(i, j, k))),
                            ])?;
                        }
                    }
                }
            }
        }
        Outcome::Scalar(side) => {
            rec(["quantity", "exact", "mcmc", "mcmc_stderr"].map(String::from).to_vec())?;
            let rows: [(&str, fn(&ScalarSummary) -> Estimate); 2] = [("value", |r| r.value), ("pressure", |r| r.pressure)];
            for (name, f) in rows {
                rec(vec![
                    name.into(),
                    opt(side.exact.as_ref().map(|r| f(r).value)),
                    opt(side.mcmc.as_ref().map(|r| f(r).value)),
                    opt(side.mcmc.as_ref().map(|r| f(r).stderr)),
                ])?;
            }
        }
        Outcome::Equilibrium(r) => {
            rec(vec!["x".into(), "density".into()])?;
            if let Some((xs, qs)) = &r.grid {
                for (x, q) in xs.iter().zip(qs) {
                    rec(vec![e(*x), e(*q)])?;
                }
            }
        }
        Outcome::FreeReport(r) => {
            rec(vec!["quantity".into(), "value".into()])?;
            let rep = &r.report;
            for (k, v) in [
                ("a", rep.measure.a),
                ("b", rep.measure.b),
                ("chi", rep.chi),
                ("free_pressure", rep.free_pressure),
                ("phi_free", rep.phi_free),
                ("phi_cubic", rep.phi_cubic),
                ("limit_pressure", rep.limit_pressure),
                ("limit_legendre", rep.limit_legendre),
                ("limit_entropy", rep.limit_entropy),
                ("biane_residual", rep.biane_residual),
            ] {
                rec(vec![k.into(), e(v)])?;
            }
        }
        Outcome::CramerRao(r) => {
            rec(["i", "j", "error_cov", "error_cov_stderr", "metric_inverse"].map(String::from).to_vec())?;
            for (i, row) in r.error_cov.value.iter().enumerate() {
                for j in 0..row.len() {
                    rec(vec![
                        i.to_string(),
                        j.to_string(),
                        e(row[j]),
                        e(r.error_cov.stderr[i][j]),
                        e(r.metric_inverse[i][j]),
                    ])?;
                }
            }
        }
        Outcome::Fluctuations(r) => {
            rec(["n", "i", "j", "beta", "beta_stderr", "metric"].map(String::from).to_vec())?;
            for row in &r.rows {
                for (i, vals) in row.beta.value.iter().enumerate() {
                    for j in 0..vals.len() {
                        rec(vec![
                            row.n.to_string(),
                            i.to_string(),
                            j.to_string(),
                            e(vals[j]),
                            e(row.beta.stderr[i][j]),
                            opt(row.metric.as_ref().map(|g| g[i][j])),
                        ])?;
                    }
                }
            }
        }
        Outcome::Loop(r) => {
            rec(["quantity", "value", "stderr"].map(String::from).to_vec())?;
            let res = &r.residual;
            rec(vec!["residual".into(), e(res.residual.value), e(res.residual.stderr)])?;
            rec(vec!["scale".into(), e(res.scale), String::new()])?;
            for (name, v) in ["pair_term", "drift_term", "derivative_term"].iter().zip(res.terms) {
                rec(vec![name.to_string(), e(v), String::new()])?;
            }
        }
        Outcome::Sweep(t) => {
            rec(["n", "method", "i", "j", "value", "stderr"].map(String::from).to_vec())?;
            for row in &t.rows {
                let method = serde_json::to_value(row.method)?.as_str().unwrap_or_default().to_string();
                for (i, vals) in row.metric.value.iter().enumerate() {
                    for j in 0..vals.len() {
                        rec(vec![
                            row.n.to_string(),
                            method.clone(),
                            i.to_string(),
                            j.to_string(),
                            e(vals[j]),
                            e(row.metric.stderr[i][j]),
                        ])?;
                    }
                }
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}
