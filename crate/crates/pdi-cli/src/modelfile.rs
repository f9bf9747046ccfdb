//! Self-describing text format for fitted estimators: versioned key/value
//! lines with whitespace-separated numeric arrays, floats rendered with 17
//! significant digits for exact round-trips.

use std::collections::BTreeMap;
use std::path::Path;

use pdi_core::{DoseProbModel, IntervalRule, NuisanceModels, PropensityModel};

use crate::csvio::{fmt_f64, write_file};
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Everything `predict` and `evaluate` need.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub kind: String,
    pub alpha: f64,
    pub rule: IntervalRule,
    pub nuisance: NuisanceModels,
    /// Affine dose normalization `(lo, hi)` applied at ingestion, if any.
    pub dose_norm: Option<(f64, f64)>,
    pub c_loss: f64,
}

fn push_vec(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    out.push_str(":");
    for v in values {
        out.push(' ');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

pub fn render(model: &ModelFile) -> String {
    let mut out = String::new();
    out.push_str(&format!("pdi-model-version: {FORMAT_VERSION}\n"));
    out.push_str(&format!("kind: {}\n", model.kind));
    out.push_str(&format!(
        "covariate-dim: {}\n",
        model.rule.anchors.first().map(|a| a.len()).unwrap_or(0)
    ));
    out.push_str(&format!("anchor-count: {}\n", model.rule.anchors.len()));
    out.push_str(&format!("alpha: {}\n", fmt_f64(model.alpha)));
    out.push_str(&format!("gamma: {}\n", fmt_f64(model.rule.gamma)));
    out.push_str(&format!("c-loss: {}\n", fmt_f64(model.c_loss)));
    match model.rule.width {
        Some(w) => out.push_str(&format!("width: {}\n", fmt_f64(w))),
        None => out.push_str("width: none\n"),
    }
    match model.dose_norm {
        Some((lo, hi)) => out.push_str(&format!(
            "dose-normalization: {} {}\n",
            fmt_f64(lo),
            fmt_f64(hi)
        )),
        None => out.push_str("dose-normalization: none\n"),
    }
    out.push_str(&format!("beta-l0: {}\n", fmt_f64(model.rule.beta_l0)));
    out.push_str(&format!("beta-u0: {}\n", fmt_f64(model.rule.beta_u0)));
    push_vec(&mut out, "beta-l", &model.rule.beta_l);
    push_vec(&mut out, "beta-u", &model.rule.beta_u);
    out.push_str(&format!(
        "propensity-log-dose: {}\n",
        model.nuisance.propensity.log_dose
    ));
    out.push_str(&format!(
        "propensity-sigma2: {}\n",
        fmt_f64(model.nuisance.propensity.sigma2)
    ));
    push_vec(&mut out, "propensity-coef", &model.nuisance.propensity.coef);
    let dp = &model.nuisance.dose_prob;
    let mut theta = vec![dp.theta0, dp.theta_a, dp.theta_a2];
    theta.extend_from_slice(&dp.theta_x);
    push_vec(&mut out, "dose-prob-theta", &theta);
    out.push_str(&format!("dose-prob-stabilized: {}\n", dp.stabilized));
    for anchor in &model.rule.anchors {
        push_vec(&mut out, "anchor", anchor);
    }
    out
}

pub fn save(path: &Path, model: &ModelFile) -> Result<(), CliError> {
    write_file(path, &render(model))
}

fn parse_f64(s: &str, key: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Schema(format!("model field `{key}`: bad number `{s}`")))
}

fn parse_vec(s: &str, key: &str) -> Result<Vec<f64>, CliError> {
    s.split_whitespace()
        .map(|tok| parse_f64(tok, key))
        .collect()
}

pub fn load(path: &Path) -> Result<ModelFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| CliError::Schema(format!("model line {}: missing `:`", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if i == 0 {
            if key != "pdi-model-version" {
                return Err(CliError::Version(
                    "file does not start with pdi-model-version".into(),
                ));
            }
            if value != FORMAT_VERSION.to_string() {
                return Err(CliError::Version(format!(
                    "unsupported model version {value}, expected {FORMAT_VERSION}"
                )));
            }
        }
        if key == "anchor" {
            anchors.push(parse_vec(value, "anchor")?);
        } else {
            fields.insert(key.to_string(), value.to_string());
        }
    }
    let get = |key: &str| -> Result<&String, CliError> {
        fields
            .get(key)
            .ok_or_else(|| CliError::Schema(format!("model missing field `{key}`")))
    };
    let kind = get("kind")?.clone();
    let d: usize = get("covariate-dim")?
        .parse()
        .map_err(|_| CliError::Schema("bad covariate-dim".into()))?;
    let n: usize = get("anchor-count")?
        .parse()
        .map_err(|_| CliError::Schema("bad anchor-count".into()))?;
    if anchors.len() != n {
        return Err(CliError::Schema(format!(
            "anchor-count says {n}, found {}",
            anchors.len()
        )));
    }
    if anchors.iter().any(|a| a.len() != d) {
        return Err(CliError::Schema("anchor dimension mismatch".into()));
    }
    let width_raw = get("width")?;
    let width = if width_raw == "none" {
        None
    } else {
        Some(parse_f64(width_raw, "width")?)
    };
    let dose_norm_raw = get("dose-normalization")?;
    let dose_norm = if dose_norm_raw == "none" {
        None
    } else {
        let v = parse_vec(dose_norm_raw, "dose-normalization")?;
        if v.len() != 2 {
            return Err(CliError::Schema("dose-normalization needs two numbers".into()));
        }
        Some((v[0], v[1]))
    };
    let beta_l = parse_vec(get("beta-l")?, "beta-l")?;
    let beta_u = parse_vec(get("beta-u")?, "beta-u")?;
    if beta_l.len() != n || beta_u.len() != n {
        return Err(CliError::Schema("coefficient length mismatch".into()));
    }
    let theta = parse_vec(get("dose-prob-theta")?, "dose-prob-theta")?;
    if theta.len() != d + 3 {
        return Err(CliError::Schema("dose-prob-theta length mismatch".into()));
    }
    let rule = IntervalRule {
        beta_l0: parse_f64(get("beta-l0")?, "beta-l0")?,
        beta_l,
        beta_u0: parse_f64(get("beta-u0")?, "beta-u0")?,
        beta_u,
        anchors,
        gamma: parse_f64(get("gamma")?, "gamma")?,
        width,
    };
    rule.validate().map_err(CliError::Core)?;
    let nuisance = NuisanceModels {
        propensity: PropensityModel {
            coef: parse_vec(get("propensity-coef")?, "propensity-coef")?,
            sigma2: parse_f64(get("propensity-sigma2")?, "propensity-sigma2")?,
            log_dose: get("propensity-log-dose")? == "true",
        },
        dose_prob: DoseProbModel {
            theta0: theta[0],
            theta_a: theta[1],
            theta_a2: theta[2],
            theta_x: theta[3..].to_vec(),
            stabilized: get("dose-prob-stabilized")? == "true",
        },
    };
    Ok(ModelFile {
        kind,
        alpha: parse_f64(get("alpha")?, "alpha")?,
        rule,
        nuisance,
        dose_norm,
        c_loss: parse_f64(get("c-loss")?, "c-loss")?,
    })
}
