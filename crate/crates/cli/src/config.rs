//! Run configuration: a single JSON document, validated into core inputs.

use std::fmt;
use std::path::Path;

use haarlab_core::lca::make_lca;
use haarlab_core::measures::{
    make_measure, BernoulliSpec, Cylinder, Kernel, MarkovChainSpec, Measure, MeasureSpec, NStepMarkovSpec, Subsequence,
};
use haarlab_core::mrf::{make_grid_mrf, Boundary, GridMrf, Interaction};
use haarlab_core::{Character, Endo, Group, GroupElement, Lca, Matrix, Site};
use serde::{Deserialize, Serialize};

/// A configuration problem, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
    /// The core rejected the input because it would exceed a size cap.
    pub cap_exceeded: bool,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { path: path.into(), message: message.into(), cap_exceeded: false }
    }

    fn core(path: impl Into<String>, e: haarlab_core::Error) -> Self {
        let cap_exceeded = matches!(e, haarlab_core::Error::CapExceeded(_));
        ConfigError { path: path.into(), message: e.to_string(), cap_exceeded }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupConfig>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lca: Vec<LcaTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub character: Vec<CharTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrf: Option<MrfConfig>,
    #[serde(default)]
    pub analysis: Analysis,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: None,
            dimension: 1,
            lca: Vec::new(),
            character: Vec::new(),
            measure: None,
            mrf: None,
            analysis: Analysis::default(),
        }
    }
}

fn one() -> usize {
    1
}

fn is_one(x: &usize) -> bool {
    *x == 1
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cyclic: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<VectorGroup>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VectorGroup {
    pub p: u64,
    pub r: u32,
    pub dim: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LcaTerm {
    pub site: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<u64>>>,
}

/// A group element: a bare integer for cyclic groups, a residue list otherwise.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(untagged)]
pub enum ElementValue {
    Scalar(i64),
    Vector(Vec<i64>),
}

impl ElementValue {
    fn residues(&self) -> Vec<i64> {
        match self {
            ElementValue::Scalar(x) => vec![*x],
            ElementValue::Vector(v) => v.clone(),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CharTerm {
    pub site: Vec<i64>,
    pub value: ElementValue,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Bernoulli,
    Markov,
    Nstep,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub kind: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Markov: one matrix per period step, rows indexed by the next letter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// N-step: joint law of `U+1` consecutive letters, first letter least significant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<Vec<f64>>,
    /// N-step alternative: `conditional[prefix][next]`, made stationary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    Torus,
    FreeStrip,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    pub offsets: Vec<[i64; 2]>,
    pub weights: Vec<f64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IsingConfig {
    pub agree: f64,
    pub disagree: f64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MrfConfig {
    pub width: usize,
    pub height: usize,
    pub boundary: BoundaryConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<InteractionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ising: Option<IsingConfig>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(untagged)]
pub enum SubsequenceConfig {
    Named(String),
    List(Vec<usize>),
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: i64,
    pub len: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LucasArgs {
    #[serde(rename = "N")]
    pub big_n: u64,
    pub n: u64,
    pub p: u64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct SeparatingArgs {
    pub j: u64,
    pub p: u64,
    pub v_extent: u64,
    pub r: u64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LedrappierArgs {
    #[serde(rename = "N")]
    pub big_n: u64,
    pub p: u64,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsequence: Option<SubsequenceConfig>,
    /// Automaton power for `fourier`.
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub power: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cylinder: Vec<CharTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lucas: Option<LucasArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separating: Option<SeparatingArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledrappier: Option<LedrappierArgs>,
}

/// Parses JSON text, reporting the failing field path and position.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let path = if path == "." { String::new() } else { path };
        ConfigError::new(path, format!("{inner}"))
    })?;
    config.validate()?;
    Ok(config)
}

/// Loads from a file, or from inline JSON when the argument starts with `{`.
pub fn load_config(source: &str) -> Result<RunConfig> {
    if source.trim_start().starts_with('{') {
        return parse_config(source);
    }
    let text = std::fs::read_to_string(Path::new(source))
        .map_err(|e| ConfigError::new("", format!("cannot read {source}: {e}")))?;
    parse_config(&text)
}

fn field<T>(value: Option<T>, path: &str, why: &str) -> Result<T> {
    value.ok_or_else(|| ConfigError::new(path, format!("required {why}")))
}

impl RunConfig {
    /// Semantic checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dimension) {
            return Err(ConfigError::new("dimension", "must be 1 or 2"));
        }
        if let Some(g) = &self.group {
            g.build()?;
        }
        if !self.lca.is_empty() {
            self.automaton()?;
        }
        if !self.character.is_empty() {
            self.chi()?;
        }
        Ok(())
    }

    pub fn group(&self) -> Result<Group> {
        field(self.group.as_ref(), "group", "for this command")?.build()
    }

    fn site(&self, path: &str, coords: &[i64]) -> Result<Site> {
        if coords.len() != self.dimension {
            return Err(ConfigError::new(path, format!("site needs {} coordinate(s)", self.dimension)));
        }
        Site::from_coords(coords).map_err(|e| ConfigError::core(path, e))
    }

    fn element(&self, group: &Group, path: &str, value: &ElementValue) -> Result<GroupElement> {
        let residues = value.residues();
        if residues.len() != group.coords() {
            return Err(ConfigError::new(path, format!("{group} elements have {} residue(s)", group.coords())));
        }
        group.element(&residues).map_err(|e| ConfigError::core(path, e))
    }

    pub fn automaton(&self) -> Result<Lca> {
        let group = self.group()?;
        if self.lca.is_empty() {
            return Err(ConfigError::new("lca", "required for this command"));
        }
        let mut terms = Vec::with_capacity(self.lca.len());
        for (i, t) in self.lca.iter().enumerate() {
            let path = format!("lca[{i}]");
            let site = self.site(&format!("{path}.site"), &t.site)?;
            let endo = match (&t.scalar, &t.matrix, group.is_cyclic()) {
                (Some(k), None, _) => Endo::Scalar(*k),
                (None, Some(_), true) => {
                    return Err(ConfigError::new(
                        format!("{path}.matrix"),
                        format!("type mismatch: {group} takes scalar coefficients, not matrices"),
                    ))
                }
                (None, Some(rows), false) => Endo::Matrix(
                    Matrix::new(rows.clone()).map_err(|e| ConfigError::core(format!("{path}.matrix"), e))?,
                ),
                _ => return Err(ConfigError::new(path, "give exactly one of `scalar` or `matrix`")),
            };
            terms.push((site, endo));
        }
        make_lca(group, self.dimension, terms).map_err(|e| ConfigError::core("lca", e))
    }

    pub fn chi(&self) -> Result<Character> {
        let group = self.group()?;
        if self.character.is_empty() {
            return Err(ConfigError::new("character", "required for this command"));
        }
        let mut coeffs = Vec::with_capacity(self.character.len());
        for (i, t) in self.character.iter().enumerate() {
            let site = self.site(&format!("character[{i}].site"), &t.site)?;
            coeffs.push((site, self.element(&group, &format!("character[{i}].value"), &t.value)?));
        }
        Character::new(group, self.dimension, coeffs).map_err(|e| ConfigError::core("character", e))
    }

    pub fn measure(&self) -> Result<Measure> {
        let group = self.group()?;
        let m = field(self.measure.as_ref(), "measure", "for this command")?;
        if self.dimension != 1 {
            return Err(ConfigError::new("dimension", "measures live on one-dimensional lattices"));
        }
        let spec = match m.kind {
            MeasureKind::Bernoulli => MeasureSpec::Bernoulli(BernoulliSpec {
                group,
                weights: field(m.weights.clone(), "measure.weights", "for bernoulli measures")?,
            }),
            MeasureKind::Markov => {
                let mats = field(m.transitions.as_ref(), "measure.transitions", "for markov measures")?;
                let mut transitions = Vec::with_capacity(mats.len());
                for (i, rows) in mats.iter().enumerate() {
                    transitions.push(
                        Kernel::from_rows(rows)
                            .map_err(|e| ConfigError::core(format!("measure.transitions[{i}]"), e))?,
                    );
                }
                MeasureSpec::Markov(MarkovChainSpec {
                    group,
                    transitions,
                    initial: field(m.initial.clone(), "measure.initial", "for markov measures")?,
                    origin: m.origin.unwrap_or(0),
                })
            }
            MeasureKind::Nstep => {
                let steps = field(m.steps, "measure.steps", "for nstep measures")?;
                let mut spec = match (&m.block, &m.conditional) {
                    (Some(block), None) => NStepMarkovSpec { group, steps, block: block.clone(), origin: 0 },
                    (None, Some(cond)) => NStepMarkovSpec::from_conditional(group, steps, cond)
                        .map_err(|e| ConfigError::core("measure.conditional", e))?,
                    _ => return Err(ConfigError::new("measure.block", "give exactly one of `block` or `conditional`")),
                };
                spec.origin = m.origin.unwrap_or(0);
                MeasureSpec::NStep(spec)
            }
        };
        make_measure(spec).map_err(|e| ConfigError::core("measure", e))
    }

    /// The transition family behind the measure, for `ehm-lambda`.
    pub fn transition_family(&self) -> Result<Vec<Kernel>> {
        let mu = self.measure()?;
        match mu.spec() {
            MeasureSpec::Markov(s) => Ok(s.transitions.clone()),
            MeasureSpec::Bernoulli(s) => {
                let n = s.weights.len();
                let rows: Vec<Vec<f64>> = s.weights.iter().map(|&w| vec![w; n]).collect();
                Ok(vec![Kernel::from_rows(&rows).map_err(|e| ConfigError::core("measure.weights", e))?])
            }
            MeasureSpec::NStep(_) => {
                Err(ConfigError::new("measure.kind", "ehm-lambda needs a bernoulli or markov measure"))
            }
        }
    }

    pub fn grid_mrf(&self) -> Result<GridMrf> {
        let group = self.group()?;
        let m = field(self.mrf.as_ref(), "mrf", "for this command")?;
        let size = group.order().unwrap_or(u64::MAX) as usize;
        let mut interactions: Vec<Interaction> = m
            .interactions
            .iter()
            .map(|i| Interaction { offsets: i.offsets.clone(), weights: i.weights.clone() })
            .collect();
        if let Some(is) = &m.ising {
            interactions.extend(Interaction::ising(size, is.agree, is.disagree));
        }
        if interactions.is_empty() {
            return Err(ConfigError::new("mrf.interactions", "give `interactions` or `ising`"));
        }
        let boundary = match m.boundary {
            BoundaryConfig::Torus => Boundary::Torus,
            BoundaryConfig::FreeStrip => Boundary::FreeStrip,
        };
        make_grid_mrf(group, m.width, m.height, interactions, boundary).map_err(|e| ConfigError::core("mrf", e))
    }

    pub fn cylinder(&self) -> Result<Option<Cylinder>> {
        if self.analysis.cylinder.is_empty() {
            return Ok(None);
        }
        let group = self.group()?;
        let mut sites = Vec::new();
        let mut values = Vec::new();
        for (i, t) in self.analysis.cylinder.iter().enumerate() {
            let path = format!("analysis.cylinder[{i}]");
            if t.site.len() != 1 {
                return Err(ConfigError::new(format!("{path}.site"), "cylinders are one-dimensional"));
            }
            sites.push(t.site[0]);
            values.push(self.element(&group, &format!("{path}.value"), &t.value)?);
        }
        Cylinder::new(sites, values).map(Some).map_err(|e| ConfigError::core("analysis.cylinder", e))
    }

    pub fn subsequence(&self) -> Result<Subsequence> {
        match &self.analysis.subsequence {
            None => Ok(Subsequence::None),
            Some(SubsequenceConfig::Named(s)) => match s.as_str() {
                "none" => Ok(Subsequence::None),
                "pow2" => Ok(Subsequence::Powers(2)),
                "pow3" => Ok(Subsequence::Powers(3)),
                other => Err(ConfigError::new(
                    "analysis.subsequence",
                    format!("unknown subsequence `{other}` (expected pow2, pow3, none, or a list)"),
                )),
            },
            Some(SubsequenceConfig::List(v)) => Ok(Subsequence::Explicit(v.clone())),
        }
    }

    pub fn n_max(&self) -> Result<usize> {
        match self.analysis.n_max {
            Some(0) => Err(ConfigError::new("analysis.n_max", "must be >= 1")),
            n => field(n, "analysis.n_max", "for this command"),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        field(self.analysis.seed, "analysis.seed", "for randomized commands (give an explicit seed)")
    }

    /// Canonical JSON rendering, the input to the config digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

impl GroupConfig {
    pub fn build(&self) -> Result<Group> {
        match (self.cyclic, &self.vector) {
            (Some(n), None) => Group::cyclic(n).map_err(|e| ConfigError::core("group.cyclic", e)),
            (None, Some(v)) => {
                Group::prime_power_vector(v.p, v.r, v.dim).map_err(|e| ConfigError::core("group.vector", e))
            }
            _ => Err(ConfigError::new("group", "give exactly one of `cyclic` or `vector`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_config() {
        let c = parse_config(r#"{"group": {"cyclic": 8}, "lca": [{"site": [0], "scalar": 1}, {"site": [1], "scalar": 2}]}"#)
            .unwrap();
        let f = c.automaton().unwrap();
        assert_eq!(f.coefficient(&Site::new1(1)), Endo::Scalar(2));
    }

    #[test]
    fn missing_weights_names_the_field() {
        let c = parse_config(r#"{"group": {"cyclic": 2}, "measure": {"kind": "bernoulli"}}"#).unwrap();
        assert_eq!(c.measure().unwrap_err().path, "measure.weights");
    }

    #[test]
    fn matrix_on_cyclic_is_a_type_mismatch() {
        let e = parse_config(r#"{"group": {"cyclic": 8}, "lca": [{"site": [0], "matrix": [[1]]}]}"#).unwrap_err();
        assert_eq!(e.path, "lca[0].matrix");
        assert!(e.message.contains("type mismatch"));
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let e = parse_config(r#"{"group": {"cyclic": 8}, "analysis": {"nmax": 3}}"#).unwrap_err();
        assert_eq!(e.path, "analysis.nmax");
        assert!(e.message.contains("nmax"));
        let e = parse_config(r#"{"group": {"cyclic": "eight"}}"#).unwrap_err();
        assert_eq!(e.path, "group.cyclic");
        assert!(e.message.contains("line 1"));
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "group": {"vector": {"p": 3, "r": 1, "dim": 2}},
            "lca": [{"site": [0], "matrix": [[0, 1], [1, 0]]}, {"site": [1], "matrix": [[0, 0], [0, 1]]}],
            "character": [{"site": [0], "value": [1, 2]}],
            "measure": {"kind": "markov", "transitions": [[[0.9, 0.1], [0.1, 0.9]]], "initial": [0.5, 0.5]},
            "mrf": {"width": 3, "height": 3, "boundary": "free_strip", "ising": {"agree": 2.0, "disagree": 1.0}},
            "analysis": {"n_max": 64, "subsequence": "pow2", "seed": 7, "cylinder": [{"site": [0], "value": 0}]}
        }"#;
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.canonical_json()).unwrap();
        assert_eq!(c, again);
    }
}
