//! Dependency-parse schema and parser backends.
//!
//! The extraction code only ever sees [`ParsedSentence`]. Where it comes from
//! is a [`ParserBackend`]: committed golden fixtures, an external command that
//! speaks the same JSON schema, or a CoreNLP server.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::srt::SrtError;

/// Environment variable overriding the CoreNLP endpoint.
pub const PARSER_ENDPOINT_ENV: &str = "PROTOFORM_PARSER_ENDPOINT";

/// A dependency arc. `head == None` marks the root arc.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepEdge {
    pub head: Option<usize>,
    pub dependent: usize,
    pub label: String,
}

impl DepEdge {
    pub fn new(head: Option<usize>, dependent: usize, label: impl Into<String>) -> Self {
        Self {
            head,
            dependent,
            label: label.into(),
        }
    }
}

/// Raw input sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSentence {
    #[serde(alias = "id")]
    pub sentence_id: String,
    pub text: String,
}

/// Tokenized, tagged and parsed sentence. Token indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub sentence_id: String,
    #[serde(default)]
    pub text: String,
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub dep_edges: Vec<DepEdge>,
}

impl ParsedSentence {
    pub fn validate(&self) -> Result<(), SrtError> {
        let fail = |reason: String| SrtError::ParseFailure {
            sentence_id: self.sentence_id.clone(),
            reason,
        };
        if self.tokens.is_empty() {
            return Err(fail("no tokens".into()));
        }
        if self.pos_tags.len() != self.tokens.len() {
            return Err(fail(format!(
                "{} POS tags for {} tokens",
                self.pos_tags.len(),
                self.tokens.len()
            )));
        }
        let n = self.tokens.len();
        let mut roots = 0;
        for edge in &self.dep_edges {
            if edge.dependent >= n || edge.head.is_some_and(|h| h >= n) {
                return Err(fail(format!("edge {edge:?} out of range for {n} tokens")));
            }
            if edge.head.is_none() {
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(fail(format!("expected exactly one root edge, found {roots}")));
        }
        Ok(())
    }

    /// Text from `text`, or tokens joined by spaces when it is missing.
    pub fn sentence_text(&self) -> String {
        if self.text.is_empty() {
            self.tokens.join(" ")
        } else {
            self.text.clone()
        }
    }

    pub fn edges_from(&self, head: usize) -> impl Iterator<Item = &DepEdge> {
        self.dep_edges.iter().filter(move |e| e.head == Some(head))
    }
}

/// Produces parses. Implementations that cannot serve concurrent requests
/// return `false` from [`ParserBackend::supports_concurrency`].
pub trait ParserBackend: Send + Sync {
    fn parse(&self, sentence: &RawSentence) -> Result<ParsedSentence, SrtError>;

    fn supports_concurrency(&self) -> bool {
        true
    }
}

/// Parses one sentence, rejecting empty input before the backend is called
/// and validating what comes back.
pub fn parse_dependencies(
    sentence: &RawSentence,
    backend: &dyn ParserBackend,
) -> Result<ParsedSentence, SrtError> {
    if sentence.text.trim().is_empty() {
        return Err(SrtError::EmptySentence {
            sentence_id: sentence.sentence_id.clone(),
        });
    }
    let parsed = backend.parse(sentence)?;
    parsed.validate()?;
    Ok(parsed)
}

/// Committed parses, looked up by sentence id and then by text.
#[derive(Clone, Debug, Default)]
pub struct FixtureBackend {
    by_id: HashMap<String, ParsedSentence>,
    by_text: HashMap<String, ParsedSentence>,
}

impl FixtureBackend {
    pub fn new(parses: impl IntoIterator<Item = ParsedSentence>) -> Self {
        let mut backend = Self::default();
        for p in parses {
            backend.by_text.insert(p.sentence_text(), p.clone());
            backend.by_id.insert(p.sentence_id.clone(), p);
        }
        backend
    }

    pub fn from_file(path: &Path) -> Result<Self, SrtError> {
        Ok(Self::new(read_parsed_file(path)?))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl ParserBackend for FixtureBackend {
    fn parse(&self, sentence: &RawSentence) -> Result<ParsedSentence, SrtError> {
        self.by_id
            .get(&sentence.sentence_id)
            .or_else(|| self.by_text.get(&sentence.text))
            .cloned()
            .ok_or_else(|| SrtError::ParseFailure {
                sentence_id: sentence.sentence_id.clone(),
                reason: "no fixture parse for this sentence".into(),
            })
    }
}

/// Runs an external program once per sentence. The program reads a
/// [`RawSentence`] JSON object on stdin and writes a [`ParsedSentence`] on stdout.
#[derive(Clone, Debug)]
pub struct CommandBackend {
    pub program: String,
    pub args: Vec<String>,
}

impl ParserBackend for CommandBackend {
    fn parse(&self, sentence: &RawSentence) -> Result<ParsedSentence, SrtError> {
        let unavailable = |reason: String| SrtError::BackendUnavailable {
            sentence_id: sentence.sentence_id.clone(),
            reason,
        };
        let failure = |reason: String| SrtError::ParseFailure {
            sentence_id: sentence.sentence_id.clone(),
            reason,
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| unavailable(format!("cannot start `{}`: {e}", self.program)))?;
        let request = serde_json::to_vec(sentence).expect("sentence serializes");
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(&request)
                .map_err(|e| unavailable(format!("cannot write request: {e}")))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| unavailable(format!("backend did not finish: {e}")))?;
        if !output.status.success() {
            return Err(failure(format!(
                "backend exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        serde_json::from_slice(&output.stdout).map_err(|e| failure(format!("malformed backend output: {e}")))
    }

    fn supports_concurrency(&self) -> bool {
        false
    }
}

/// Client for a Stanford CoreNLP server (`tokenize,ssplit,pos,lemma,depparse`).
#[derive(Clone, Debug)]
pub struct CoreNlpBackend {
    pub endpoint: String,
}

impl CoreNlpBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
        }
    }

    /// Uses [`PARSER_ENDPOINT_ENV`] when set, else `fallback`.
    pub fn from_env_or(fallback: &str) -> Self {
        Self::new(std::env::var(PARSER_ENDPOINT_ENV).unwrap_or_else(|_| fallback.to_string()))
    }
}

const CORENLP_PROPERTIES: &str = r#"{"annotators":"tokenize,ssplit,pos,lemma,depparse","ssplit.isOneSentence":"true","outputFormat":"json"}"#;

impl ParserBackend for CoreNlpBackend {
    fn parse(&self, sentence: &RawSentence) -> Result<ParsedSentence, SrtError> {
        let response = ureq::post(&self.endpoint)
            .query("properties", CORENLP_PROPERTIES)
            .header("Content-Type", "text/plain; charset=utf-8")
            .send(sentence.text.as_str());
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) => {
                return Err(SrtError::ParseFailure {
                    sentence_id: sentence.sentence_id.clone(),
                    reason: format!("server answered HTTP {code}"),
                })
            }
            Err(e) => {
                return Err(SrtError::BackendUnavailable {
                    sentence_id: sentence.sentence_id.clone(),
                    reason: format!("{}: {e}", self.endpoint),
                })
            }
        };
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| SrtError::BackendUnavailable {
                sentence_id: sentence.sentence_id.clone(),
                reason: e.to_string(),
            })?;
        let value: Value = serde_json::from_str(&body).map_err(|e| SrtError::ParseFailure {
            sentence_id: sentence.sentence_id.clone(),
            reason: format!("response is not JSON: {e}"),
        })?;
        from_corenlp_json(sentence, &value)
    }
}

/// Converts a CoreNLP JSON document (first sentence, `basicDependencies`,
/// 1-based indices with governor 0 for the root) into a [`ParsedSentence`].
pub fn from_corenlp_json(sentence: &RawSentence, doc: &Value) -> Result<ParsedSentence, SrtError> {
    let fail = |reason: &str| SrtError::ParseFailure {
        sentence_id: sentence.sentence_id.clone(),
        reason: reason.to_string(),
    };
    let first = doc
        .get("sentences")
        .and_then(Value::as_array)
        .and_then(|s| s.first())
        .ok_or_else(|| fail("no sentences in response"))?;
    let tokens = first
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing tokens"))?;
    let mut words = Vec::with_capacity(tokens.len());
    let mut tags = Vec::with_capacity(tokens.len());
    for t in tokens {
        let word = t.get("word").and_then(Value::as_str).ok_or_else(|| fail("token without word"))?;
        let pos = t.get("pos").and_then(Value::as_str).ok_or_else(|| fail("token without pos"))?;
        words.push(word.to_string());
        tags.push(pos.to_string());
    }
    let deps = first
        .get("basicDependencies")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing basicDependencies"))?;
    let mut edges = Vec::with_capacity(deps.len());
    for d in deps {
        let governor = d.get("governor").and_then(Value::as_u64).ok_or_else(|| fail("arc without governor"))?;
        let dependent = d.get("dependent").and_then(Value::as_u64).ok_or_else(|| fail("arc without dependent"))?;
        let label = d.get("dep").and_then(Value::as_str).ok_or_else(|| fail("arc without label"))?;
        if dependent == 0 {
            return Err(fail("dependent index 0"));
        }
        let head = (governor > 0).then(|| governor as usize - 1);
        let label = if head.is_none() { "root".to_string() } else { label.to_string() };
        edges.push(DepEdge::new(head, dependent as usize - 1, label));
    }
    let parsed = ParsedSentence {
        sentence_id: sentence.sentence_id.clone(),
        text: sentence.text.clone(),
        tokens: words,
        pos_tags: tags,
        dep_edges: edges,
    };
    parsed.validate()?;
    Ok(parsed)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead, what: &str) -> Result<Vec<T>, SrtError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SrtError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SrtError::Malformed {
            line: i + 1,
            reason: format!("{what}: {e}"),
        })?);
    }
    Ok(out)
}

pub fn read_parsed(reader: impl BufRead) -> Result<Vec<ParsedSentence>, SrtError> {
    read_jsonl(reader, "parsed sentence")
}

pub fn read_parsed_file(path: &Path) -> Result<Vec<ParsedSentence>, SrtError> {
    let file = std::fs::File::open(path).map_err(|e| SrtError::Io(format!("{}: {e}", path.display())))?;
    read_parsed(std::io::BufReader::new(file))
}

/// Raw sentences as JSON Lines `{"id": .., "text": ..}`.
pub fn read_raw_sentences(reader: impl BufRead) -> Result<Vec<RawSentence>, SrtError> {
    read_jsonl(reader, "raw sentence")
}
