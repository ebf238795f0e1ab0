//! File formats: life-table and sexed-count CSV, prior configuration,
//! posterior and draw documents, and report assembly.
//!
//! Structured documents are JSON and carry a `format_version` field.
//! Numbers are written in shortest round-trip form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::{
    prior_expert, prior_from_moments, BetaParams, GammaParams, HyperParams, PairParams,
    PosteriorParams, SexedCount,
};
use crate::model::{Cell, LifeTable, OffspringLaw, PairMap, ParameterDraw, PopulationState, TypeIndex};

pub const FORMAT_VERSION: u32 = 1;

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, want: &[&str]) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(parse_err(
            1,
            format!("expected header `{}`, found `{}`", want.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// Parses integer fields of one record, rejecting negatives with a
/// field-specific message.
fn int_fields(record: &csv::StringRecord, names: &[&str], line: u64) -> Result<Vec<u64>> {
    if record.len() != names.len() {
        return Err(parse_err(
            line,
            format!("expected {} fields, found {}", names.len(), record.len()),
        ));
    }
    record
        .iter()
        .zip(names)
        .map(|(field, name)| {
            let v: i64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("field `{name}` is not an integer: `{field}`")))?;
            if v < 0 {
                return Err(parse_err(line, format!("negative {name}: {v}")));
            }
            Ok(v as u64)
        })
        .collect()
}

/// Reads `i,j,k,t,count` rows. The number of types is the largest index
/// mentioned unless `types` is given.
pub fn parse_life_table(text: &str, types: Option<usize>) -> Result<LifeTable> {
    const NAMES: [&str; 5] = ["i", "j", "k", "t", "count"];
    let mut reader = csv_reader(text);
    check_header(&mut reader, &NAMES)?;
    let mut rows: BTreeMap<(u64, u64, u64, u64), (u64, u64)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let f = int_fields(&record, &NAMES, line)?;
        if f[0] == 0 || f[1] == 0 {
            return Err(parse_err(line, "type indices start at 1"));
        }
        if f[2] > u32::MAX as u64 || f[3] > u32::MAX as u64 {
            return Err(parse_err(line, "offspring count or time too large"));
        }
        let key = (f[0], f[1], f[2], f[3]);
        if let Some((first, _)) = rows.get(&key) {
            return Err(parse_err(
                line,
                format!(
                    "duplicate row for (i,j,k,t) = ({},{},{},{}), first seen on line {first}",
                    f[0], f[1], f[2], f[3]
                ),
            ));
        }
        rows.insert(key, (line, f[4]));
    }
    let inferred = rows.keys().map(|k| k.0.max(k.1)).max().unwrap_or(0) as usize;
    let k = types.unwrap_or(inferred.max(1));
    let mut table = LifeTable::new(k);
    for ((i, j, off, t), (line, count)) in rows {
        let from = TypeIndex::new(i as usize, k).map_err(|e| parse_err(line, e.to_string()))?;
        let to = TypeIndex::new(j as usize, k).map_err(|e| parse_err(line, e.to_string()))?;
        table.insert(Cell::new(from, to, off as u32, t as u32), count)?;
    }
    Ok(table)
}

pub fn write_life_table(table: &LifeTable) -> String {
    let mut out = String::from("i,j,k,t,count\n");
    for (c, n) in table.iter() {
        out.push_str(&format!("{},{},{},{},{}\n", c.from, c.to, c.offspring, c.time, n));
    }
    out
}

/// Reads `i,j,females,males` rows for thinned pairs.
pub fn parse_sexed_counts(text: &str, types: usize) -> Result<Vec<SexedCount>> {
    const NAMES: [&str; 4] = ["i", "j", "females", "males"];
    let mut reader = csv_reader(text);
    check_header(&mut reader, &NAMES)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = int_fields(&record, &NAMES, line)?;
        let from = TypeIndex::new(f[0] as usize, types).map_err(|e| parse_err(line, e.to_string()))?;
        let to = TypeIndex::new(f[1] as usize, types).map_err(|e| parse_err(line, e.to_string()))?;
        out.push(SexedCount {
            from,
            to,
            females: f[2],
            males: f[3],
        });
    }
    Ok(out)
}

/// Parses a comma-separated abundance vector such as `2,2,2,1,10`.
pub fn parse_population(text: &str) -> Result<PopulationState> {
    let counts = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidParameter(format!("abundance `{}` is not a nonnegative integer", s.trim())))
        })
        .collect::<Result<Vec<u64>>>()?;
    if counts.is_empty() {
        return Err(Error::InvalidParameter("empty population".into()));
    }
    Ok(PopulationState::at_zero(counts))
}

/// Rows of a small CSV document.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PairKind {
    Categorical,
    Poisson,
    Thinned,
    Forbidden,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairConfig {
    from: usize,
    to: usize,
    kind: PairKind,
    #[serde(default)]
    kappa: Option<u32>,
    #[serde(default)]
    rule: Option<Value>,
    #[serde(default)]
    gamma: Option<[f64; 2]>,
    #[serde(default)]
    sex_ratio_prior: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorConfigFile {
    format_version: u32,
    types: usize,
    #[serde(default)]
    default: Option<String>,
    pairs: Vec<PairConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentsRule {
    mean: Vec<f64>,
    variance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpertRule {
    q: Vec<f64>,
    weight: f64,
}

/// Hyperparameter rule for one pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorRule {
    Flat,
    Moments { mean: Vec<f64>, variance: f64 },
    Expert { q: Vec<f64>, weight: f64 },
    Explicit(Vec<f64>),
}

const RULE_NAMES: [&str; 4] = ["flat", "moments", "expert", "explicit"];

fn parse_rule(value: &Value, pair: (usize, usize)) -> Result<PriorRule> {
    let ctx = |m: String| Error::Config(format!("pair ({},{}): {m}", pair.0, pair.1));
    match value {
        Value::String(s) if s == "flat" => Ok(PriorRule::Flat),
        Value::Object(map) => {
            let present: Vec<&str> = RULE_NAMES.iter().copied().filter(|n| map.contains_key(*n)).collect();
            if let Some(unknown) = map.keys().find(|k| !RULE_NAMES.contains(&k.as_str())) {
                return Err(ctx(format!("unknown rule `{unknown}`")));
            }
            match present.as_slice() {
                [] => Err(ctx("rule object names no rule".into())),
                [one] => {
                    let body = map[*one].clone();
                    match *one {
                        "flat" => Ok(PriorRule::Flat),
                        "moments" => {
                            let r: MomentsRule = serde_json::from_value(body).map_err(|e| ctx(e.to_string()))?;
                            Ok(PriorRule::Moments {
                                mean: r.mean,
                                variance: r.variance,
                            })
                        }
                        "expert" => {
                            let r: ExpertRule = serde_json::from_value(body).map_err(|e| ctx(e.to_string()))?;
                            Ok(PriorRule::Expert { q: r.q, weight: r.weight })
                        }
                        _ => {
                            let a: Vec<f64> = serde_json::from_value(body).map_err(|e| ctx(e.to_string()))?;
                            Ok(PriorRule::Explicit(a))
                        }
                    }
                }
                many => Err(ctx(format!("conflicting rules: {}", many.join(", ")))),
            }
        }
        other => Err(ctx(format!("unrecognised rule {other}"))),
    }
}

/// Prior hyperparameters with any warnings raised while building them.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub hyper: HyperParams,
    pub warnings: Vec<String>,
}

fn rule_alpha(rule: &PriorRule, kappa: Option<u32>, pair: (usize, usize), warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    let ctx = |m: String| Error::Config(format!("pair ({},{}): {m}", pair.0, pair.1));
    let alpha = match rule {
        PriorRule::Flat => {
            let kappa = kappa.ok_or_else(|| ctx("flat rule needs `kappa`".into()))?;
            vec![1.0; kappa as usize + 1]
        }
        PriorRule::Moments { mean, variance } => {
            if *variance >= 1.0 {
                warnings.push(format!(
                    "pair ({},{}): variance factor {variance} ≥ 1 admits no Dirichlet; using the flat prior",
                    pair.0, pair.1
                ));
            }
            prior_from_moments(mean, *variance).map_err(|e| ctx(e.to_string()))?
        }
        PriorRule::Expert { q, weight } => prior_expert(q, *weight).map_err(|e| ctx(e.to_string()))?,
        PriorRule::Explicit(a) => a.clone(),
    };
    if let Some(kappa) = kappa {
        if alpha.len() != kappa as usize + 1 {
            return Err(ctx(format!(
                "rule gives {} concentrations but kappa = {kappa} needs {}",
                alpha.len(),
                kappa + 1
            )));
        }
    }
    if alpha.len() < 2 {
        return Err(ctx("a categorical law needs kappa ≥ 1; use kind `forbidden` for kappa = 0".into()));
    }
    Ok(alpha)
}

/// Builds hyperparameters from a prior configuration document.
///
/// Every pair must be listed unless `"default": "forbidden"` is given, in
/// which case unlisted pairs are structural zeros.
pub fn parse_prior_config(text: &str) -> Result<PriorConfig> {
    let file: PriorConfigFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    let k = file.types;
    if k == 0 {
        return Err(Error::Config("`types` must be at least 1".into()));
    }
    let default_forbidden = match file.default.as_deref() {
        None => false,
        Some("forbidden") => true,
        Some(other) => return Err(Error::Config(format!("unknown default `{other}`"))),
    };
    let mut warnings = Vec::new();
    let mut given: BTreeMap<(usize, usize), PairParams> = BTreeMap::new();
    for p in &file.pairs {
        let key = (p.from, p.to);
        TypeIndex::new(p.from, k).map_err(|e| Error::Config(e.to_string()))?;
        TypeIndex::new(p.to, k).map_err(|e| Error::Config(e.to_string()))?;
        let params = match p.kind {
            PairKind::Forbidden => PairParams::Forbidden,
            PairKind::Categorical => {
                let rule = p
                    .rule
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("pair ({},{}): missing rule", p.from, p.to)))?;
                let alpha = rule_alpha(&parse_rule(rule, key)?, p.kappa, key, &mut warnings)?;
                PairParams::categorical(alpha).map_err(|e| Error::Config(format!("pair ({},{}): {e}", p.from, p.to)))?
            }
            PairKind::Poisson => {
                let [shape, rate] = p.gamma.unwrap_or([1.0, 1.0]);
                PairParams::Poisson {
                    gamma: GammaParams::new(shape, rate).map_err(|e| Error::Config(e.to_string()))?,
                }
            }
            PairKind::Thinned => {
                let rule = p
                    .rule
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("pair ({},{}): missing rule", p.from, p.to)))?;
                let litter_alpha = rule_alpha(&parse_rule(rule, key)?, p.kappa, key, &mut warnings)?;
                let [a, b] = p.sex_ratio_prior.unwrap_or([1.0, 1.0]);
                PairParams::Thinned {
                    litter_alpha,
                    sex_ratio: BetaParams::new(a, b).map_err(|e| Error::Config(e.to_string()))?,
                }
            }
        };
        if given.insert(key, params).is_some() {
            return Err(Error::Config(format!("pair ({},{}) listed twice", p.from, p.to)));
        }
    }
    let mut missing = Vec::new();
    let pairs = PairMap::from_fn(k, |i, j| match given.remove(&(i.get(), j.get())) {
        Some(p) => p,
        None => {
            if !default_forbidden {
                missing.push(format!("({i},{j})"));
            }
            PairParams::Forbidden
        }
    });
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing pairs {}; list them or set \"default\": \"forbidden\"",
            missing.join(", ")
        )));
    }
    Ok(PriorConfig {
        hyper: HyperParams::new(pairs)?,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairRecord {
    from: TypeIndex,
    to: TypeIndex,
    #[serde(flatten)]
    params: PairParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LawRecord {
    from: TypeIndex,
    to: TypeIndex,
    #[serde(flatten)]
    law: OffspringLaw,
}

/// Marginal credible interval of one category of a categorical pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub from: TypeIndex,
    pub to: TypeIndex,
    pub k: u32,
    pub a: f64,
    pub b: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior document written by `fit` and read by every downstream
/// command. Only `types` and `pairs` are read back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDocument {
    pub format_version: u32,
    pub types: usize,
    pairs: Vec<PairRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credible_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<IntervalRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PosteriorDocument {
    pub fn new(post: &PosteriorParams) -> Self {
        let pairs = post
            .as_hyper()
            .pairs()
            .iter()
            .map(|(from, to, params)| PairRecord {
                from,
                to,
                params: params.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            types: post.types(),
            pairs,
            mean_matrix: None,
            credible_level: None,
            intervals: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn posterior(&self) -> Result<PosteriorParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let k = self.types;
        let mut given: BTreeMap<(usize, usize), PairParams> = BTreeMap::new();
        for r in &self.pairs {
            if r.from.get() > k || r.to.get() > k {
                return Err(Error::TypeOutOfRange {
                    value: r.from.get().max(r.to.get()),
                    types: k,
                });
            }
            if given.insert((r.from.get(), r.to.get()), r.params.clone()).is_some() {
                return Err(Error::Config(format!("pair ({},{}) listed twice", r.from, r.to)));
            }
        }
        let pairs = PairMap::from_fn(k, |i, j| {
            given.remove(&(i.get(), j.get())).unwrap_or(PairParams::Forbidden)
        });
        Ok(PosteriorParams::from_hyper(HyperParams::new(pairs)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A fixed parameter draw on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawDocument {
    pub format_version: u32,
    pub types: usize,
    laws: Vec<LawRecord>,
}

impl DrawDocument {
    pub fn new(draw: &ParameterDraw) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            types: draw.types(),
            laws: draw
                .laws()
                .iter()
                .map(|(from, to, law)| LawRecord {
                    from,
                    to,
                    law: law.clone(),
                })
                .collect(),
        }
    }

    /// Unlisted pairs produce no offspring.
    pub fn draw(&self) -> Result<ParameterDraw> {
        let k = self.types;
        let mut given: BTreeMap<(usize, usize), OffspringLaw> = BTreeMap::new();
        for r in &self.laws {
            if r.from.get() > k || r.to.get() > k || r.from.get() == 0 || r.to.get() == 0 {
                return Err(Error::TypeOutOfRange {
                    value: r.from.get().max(r.to.get()),
                    types: k,
                });
            }
            if given.insert((r.from.get(), r.to.get()), r.law.clone()).is_some() {
                return Err(Error::Config(format!("law ({},{}) listed twice", r.from, r.to)));
            }
        }
        ParameterDraw::new(PairMap::from_fn(k, |i, j| {
            given
                .remove(&(i.get(), j.get()))
                .unwrap_or_else(OffspringLaw::point_mass_zero)
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance of a report: digests of the input files and the Monte Carlo
/// settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputsDigest {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_prec: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, Value>,
}

impl InputsDigest {
    pub fn file(mut self, role: &str, bytes: &[u8]) -> Self {
        self.files.insert(role.to_string(), sha256_hex(bytes));
        self
    }

    pub fn param(mut self, name: &str, value: impl Serialize) -> Self {
        self.parameters
            .insert(name.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }
}

/// Machine-readable result of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub command: String,
    pub inputs: InputsDigest,
    pub results: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, inputs: InputsDigest, results: impl Serialize) -> Result<Self> {
        Ok(Self {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            inputs,
            results: serde_json::to_value(results)?,
            warnings: Vec::new(),
        })
    }

    pub fn with_warnings(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Rounds to four significant digits for human-readable output.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (3 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::inference::{posterior_update, prior_noninformative};
    use crate::model::aggregate_counts;

    #[test]
    fn synthetic_csv_round_trip() {
        let table = datasets::synthetic_learning_table();
        let text = write_life_table(&table);
        let parsed = parse_life_table(&text, None).unwrap();
        assert_eq!(parsed, table);
        let one = TypeIndex::new(1, 1).unwrap();
        let agg = aggregate_counts(&parsed);
        assert_eq!((0..5).map(|k| agg.get(one, one, k)).collect::<Vec<_>>(), vec![144, 127, 19, 13, 7]);
    }

    #[test]
    fn header_only_is_empty() {
        let table = parse_life_table("i,j,k,t,count\n", None).unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn negative_count_reports_line() {
        let text = "i,j,k,t,count\n# comment\n1,1,0,0,4\n1,1,2,0,-3\n";
        match parse_life_table(text, None) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("negative"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_rows() {
        let dup = "i,j,k,t,count\n1,1,0,0,4\n1,1,0,0,5\n";
        assert!(matches!(parse_life_table(dup, None), Err(Error::Parse { line: 3, .. })));
        let bad = "i,j,k,t,count\n1,1,x,0,4\n";
        assert!(matches!(parse_life_table(bad, None), Err(Error::Parse { line: 2, .. })));
        let short = "i,j,k,t,count\n1,1,0\n";
        assert!(matches!(parse_life_table(short, None), Err(Error::Parse { line: 2, .. })));
        assert!(parse_life_table("a,b\n", None).is_err());
    }

    #[test]
    fn flat_single_type_config() {
        let cfg = r#"{"format_version":1,"types":1,"pairs":[{"from":1,"to":1,"kind":"categorical","kappa":4,"rule":"flat"}]}"#;
        let prior = parse_prior_config(cfg).unwrap();
        assert_eq!(prior.hyper, prior_noninformative(&datasets::synthetic_cap()));
    }

    #[test]
    fn bear_config_matches_flat_prior() {
        let cfg = r#"{
            "format_version": 1, "types": 5, "default": "forbidden",
            "pairs": [
                {"from":1,"to":2,"kind":"categorical","kappa":1,"rule":"flat"},
                {"from":2,"to":3,"kind":"categorical","kappa":1,"rule":"flat"},
                {"from":3,"to":4,"kind":"categorical","kappa":1,"rule":"flat"},
                {"from":4,"to":5,"kind":"categorical","kappa":1,"rule":"flat"},
                {"from":5,"to":5,"kind":"categorical","kappa":1,"rule":{"flat":true}},
                {"from":5,"to":1,"kind":"categorical","kappa":3,"rule":"flat"}
            ]}"#;
        let prior = parse_prior_config(cfg).unwrap();
        assert_eq!(prior.hyper, prior_noninformative(&datasets::bear_cap()));
        assert!(prior.warnings.is_empty());
    }

    #[test]
    fn config_rule_variants() {
        let cfg = |rule: &str| {
            format!(r#"{{"format_version":1,"types":1,"pairs":[{{"from":1,"to":1,"kind":"categorical","rule":{rule}}}]}}"#)
        };
        let p = parse_prior_config(&cfg(r#"{"moments":{"mean":[0.4,0.6],"variance":1.5}}"#)).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.hyper.pair(TypeIndex::new(1, 1).unwrap(), TypeIndex::new(1, 1).unwrap()), &PairParams::Categorical { alpha: vec![1.0, 1.0] });
        assert!(parse_prior_config(&cfg(r#"{"moments":{"mean":[0.4,0.6],"variance":0.0}}"#)).is_err());
        let p = parse_prior_config(&cfg(r#"{"expert":{"q":[0.8,0.2],"weight":10}}"#)).unwrap();
        assert_eq!(p.hyper.pair(TypeIndex::new(1, 1).unwrap(), TypeIndex::new(1, 1).unwrap()), &PairParams::Categorical { alpha: vec![8.0, 2.0] });
        match parse_prior_config(&cfg(r#"{"flat":true,"explicit":[1,2]}"#)) {
            Err(Error::Config(m)) => assert!(m.contains("conflicting"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(parse_prior_config(&cfg(r#""flat""#)).is_err(), "flat without kappa");
    }

    #[test]
    fn missing_pair_is_an_error() {
        let cfg = r#"{"format_version":1,"types":2,"pairs":[{"from":1,"to":1,"kind":"forbidden"}]}"#;
        match parse_prior_config(cfg) {
            Err(Error::Config(m)) => assert!(m.contains("(1,2)"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn posterior_document_round_trip() {
        let post = posterior_update(
            &prior_noninformative(&datasets::bear_cap()),
            &datasets::bear_aggregate_table(),
        )
        .unwrap();
        let text = PosteriorDocument::new(&post).to_json().unwrap();
        let back = PosteriorDocument::from_json(&text).unwrap().posterior().unwrap();
        assert_eq!(back, post);
    }

    #[test]
    fn draw_document_round_trip() {
        let draw = datasets::synthetic_true_draw();
        let text = DrawDocument::new(&draw).to_json().unwrap();
        assert_eq!(DrawDocument::from_json(&text).unwrap().draw().unwrap(), draw);
    }

    #[test]
    fn population_and_sexed_counts() {
        assert_eq!(parse_population("2, 2,2,1,10").unwrap().counts, vec![2, 2, 2, 1, 10]);
        assert!(parse_population("1,-1").is_err());
        let s = parse_sexed_counts("i,j,females,males\n5,1,14,10\n", 5).unwrap();
        assert_eq!((s[0].females, s[0].males), (14, 10));
    }

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.768253968), "0.7683");
        assert_eq!(sig4(16.9), "16.90");
        assert_eq!(sig4(12345.6), "12346");
        assert_eq!(sig4(1.5e-7), "1.500e-7");
    }
}
