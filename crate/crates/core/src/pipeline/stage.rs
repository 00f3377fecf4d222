use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use super::{read_to_string, Pipeline, PipelineConfig, PipelineError};
use crate::builder::build_graph;
use crate::evidence::attach_evidence;
use crate::inference::{infer_trust, verdict_with, SolverChoice};
use crate::model::{deserialize_graph, ArgGraph, Claim, Statement, Takeaway, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageName {
    Takeaway,
    Segment,
    Roles,
    Claims,
    Graph,
    Evidence,
    Infer,
    Verdict,
}

impl StageName {
    pub const ALL: [StageName; 8] = [
        StageName::Takeaway,
        StageName::Segment,
        StageName::Roles,
        StageName::Claims,
        StageName::Graph,
        StageName::Evidence,
        StageName::Infer,
        StageName::Verdict,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageName::Takeaway => "takeaway",
            StageName::Segment => "segment",
            StageName::Roles => "roles",
            StageName::Claims => "claims",
            StageName::Graph => "graph",
            StageName::Evidence => "evidence",
            StageName::Infer => "infer",
            StageName::Verdict => "verdict",
        }
    }

    fn needs_provider(self) -> bool {
        !matches!(self, StageName::Infer | StageName::Verdict)
    }
}

impl FromStr for StageName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageName::ALL
            .into_iter()
            .find(|st| st.name() == s.trim().to_lowercase())
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Files from earlier stages. Which ones are required depends on the stage.
#[derive(Debug, Clone, Default)]
pub struct StageInputs {
    pub transcript: Option<PathBuf>,
    pub takeaway: Option<PathBuf>,
    pub statements: Option<PathBuf>,
    pub claims: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub solver: Option<SolverChoice>,
}

/// Runs a single stage and returns its JSON output. Stages that talk to the
/// LLM build providers from `config`; `infer` and `verdict` do not.
pub fn cmd_stage(
    stage: StageName,
    inputs: &StageInputs,
    config: &PipelineConfig,
) -> Result<Value, PipelineError> {
    if stage.needs_provider() {
        let pipeline = Pipeline::from_config(config.clone())?;
        cmd_stage_with(&pipeline, stage, inputs)
    } else {
        offline(stage, inputs, config)
    }
}

pub fn cmd_stage_with(
    pipeline: &Pipeline,
    stage: StageName,
    inputs: &StageInputs,
) -> Result<Value, PipelineError> {
    if !stage.needs_provider() {
        return offline(stage, inputs, &pipeline.config);
    }
    let stages = pipeline.stages();
    let transcript = load_transcript(require(&inputs.transcript, "--transcript")?)?;
    let err = |e: &dyn std::fmt::Display| PipelineError::Stage(format!("{}: {e}", stage.name()));
    let out = match stage {
        StageName::Takeaway => {
            let mut tk = stages.extract_takeaway(&transcript).map_err(|e| err(&e))?;
            if tk.found {
                tk.takeaway_type = Some(
                    stages
                        .classify_takeaway_type(&transcript, &tk)
                        .map_err(|e| err(&e))?
                        .label,
                );
            }
            to_value(&tk)
        }
        StageName::Segment => to_value(&stages.segment_statements(&transcript).map_err(|e| err(&e))?),
        StageName::Roles => {
            let statements = load_statements(require(&inputs.statements, "--statements")?)?;
            to_value(
                &stages
                    .classify_rhetorical_roles(&transcript, &statements)
                    .map_err(|e| err(&e))?,
            )
        }
        StageName::Claims => {
            let statements = load_statements(require(&inputs.statements, "--statements")?)?;
            to_value(&stages.extract_claims(&transcript, &statements).map_err(|e| err(&e))?)
        }
        StageName::Graph => {
            let takeaway: Takeaway = load_json(require(&inputs.takeaway, "--takeaway")?)?;
            let claims: Vec<Claim> = load_json(require(&inputs.claims, "--claims")?)?;
            let statements = load_statements(require(&inputs.statements, "--statements")?)?;
            let g = build_graph(
                &transcript,
                &takeaway,
                &claims,
                &statements,
                &stages,
                &pipeline.config.builder,
            )
            .map_err(|e| err(&e))?;
            to_value(&g)
        }
        StageName::Evidence => {
            let graph = load_graph(require(&inputs.graph, "--graph")?)?;
            let g = attach_evidence(
                &transcript,
                &graph,
                &stages,
                pipeline.retriever(),
                pipeline.reranker(),
                &pipeline.config.retrieval,
            )
            .map_err(|e| err(&e))?;
            to_value(&g)
        }
        StageName::Infer | StageName::Verdict => unreachable!(),
    };
    Ok(out)
}

fn offline(stage: StageName, inputs: &StageInputs, config: &PipelineConfig) -> Result<Value, PipelineError> {
    match stage {
        StageName::Infer => {
            let graph = load_graph(require(&inputs.graph, "--graph")?)?;
            let solver = match inputs.solver {
                Some(c) => config.solver.with_choice(c),
                None => config.solver,
            };
            let outcome = infer_trust(&graph, &config.potentials, &solver)
                .map_err(|e| PipelineError::Stage(format!("infer: {e}")))?;
            Ok(to_value(&outcome))
        }
        StageName::Verdict => {
            let path = require(&inputs.trust, "--trust")?;
            let trust = trust_from_json(&load_json::<Value>(path)?).ok_or_else(|| {
                PipelineError::Input(format!("{}: no trust value found", path.display()))
            })?;
            let v = verdict_with(trust, &config.verdict)
                .map_err(|e| PipelineError::Stage(format!("verdict: {e}")))?;
            Ok(to_value(&v))
        }
        _ => unreachable!(),
    }
}

/// Accepts a bare number, `{"trust": x}`, an infer outcome
/// (`takeaway_trust`) or a trust assignment (`values.T`).
fn trust_from_json(v: &Value) -> Option<f64> {
    v.as_f64()
        .or_else(|| v.get("takeaway_trust").and_then(Value::as_f64))
        .or_else(|| v.get("trust").and_then(Value::as_f64))
        .or_else(|| v.pointer("/values/T").and_then(Value::as_f64))
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, PipelineError> {
    let p = p
        .as_deref()
        .ok_or_else(|| PipelineError::MissingPrerequisite(format!("{flag} is required for this stage")))?;
    if !p.exists() {
        return Err(PipelineError::MissingPrerequisite(format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("stage output serializes")
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<ArgGraph, PipelineError> {
    deserialize_graph(read_to_string(path)?.as_bytes())
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// A statement array, or the `roles` stage output wrapping one.
fn load_statements(path: &Path) -> Result<Vec<Statement>, PipelineError> {
    let v: Value = load_json(path)?;
    let inner = v.get("statements").cloned().unwrap_or(v);
    serde_json::from_value(inner).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// A transcript JSON object, or plain text named after the file stem.
fn load_transcript(path: &Path) -> Result<Transcript, PipelineError> {
    let text = read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(&text)
            .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "transcript".into());
    Ok(Transcript::new(id, text.trim()))
}
