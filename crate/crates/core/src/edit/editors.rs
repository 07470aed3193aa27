use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value as Json};

use super::{Editor, EditorError, EditorRequest, Proposal};
use crate::diff::{diff_from_json, parse_diff};
use crate::layer::LayerId;

/// Default time an external editor gets to answer one request.
pub const DEFAULT_EDITOR_TIMEOUT: Duration = Duration::from_secs(120);

/// Never proposes anything.
#[derive(Debug, Default, Clone)]
pub struct NullEditor;

impl Editor for NullEditor {
    fn id(&self) -> String {
        "null".into()
    }

    fn propose(&mut self, _request: &EditorRequest) -> Result<Proposal, EditorError> {
        Ok(Proposal::none(self.id()))
    }
}

/// Replays diff documents in order, then stops proposing.
#[derive(Debug, Clone)]
pub struct ScriptedEditor {
    id: String,
    items: Vec<(String, String)>,
    next: usize,
}

impl ScriptedEditor {
    /// Diff texts labelled by name, replayed in the given order.
    pub fn from_texts(id: &str, items: Vec<(String, String)>) -> Self {
        ScriptedEditor {
            id: id.to_string(),
            items,
            next: 0,
        }
    }

    /// Every `.yaml`, `.yml` or `.json` file of `dir`, in file-name order.
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .is_some_and(|x| x == "yaml" || x == "yml" || x == "json")
            })
            .collect();
        files.sort();
        let mut items = Vec::new();
        for f in files {
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            items.push((name, std::fs::read_to_string(&f)?));
        }
        Ok(ScriptedEditor::from_texts(
            &format!("scripted:{}", dir.display()),
            items,
        ))
    }

    pub fn remaining(&self) -> usize {
        self.items.len() - self.next
    }
}

impl Editor for ScriptedEditor {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn propose(&mut self, _request: &EditorRequest) -> Result<Proposal, EditorError> {
        let Some((name, text)) = self.items.get(self.next) else {
            return Ok(Proposal::none(self.id()));
        };
        self.next += 1;
        let diff = parse_diff(text).map_err(|e| EditorError::Protocol(format!("{name}: {e}")))?;
        Ok(Proposal {
            layer_hypothesis: Some(diff.layer),
            diff: Some(diff),
            editor_id: self.id(),
            note: None,
        })
    }
}

/// Writes one length-prefixed message: the byte length in decimal, a
/// newline, then the JSON body.
pub fn write_frame(mut out: impl Write, body: &Json) -> std::io::Result<()> {
    let text = serde_json::to_string(body)?;
    write!(out, "{}\n{}", text.len(), text)?;
    out.flush()
}

pub fn read_frame(input: impl Read) -> Result<Json, String> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(|e| e.to_string())?;
    let len: usize = header
        .trim()
        .parse()
        .map_err(|_| format!("bad frame header `{}`", header.trim()))?;
    let mut body = vec![0u8; len];
    reader
        .read_exact(&mut body)
        .map_err(|e| format!("short frame: {e}"))?;
    serde_json::from_slice(&body).map_err(|e| format!("frame body: {e}"))
}

/// Decodes an editor response: `{"kind": "no_proposal"}` or
/// `{"kind": "diff", "layer": "L4", "diff": <document or text>}`.
pub fn decode_response(editor_id: &str, response: &Json) -> Result<Proposal, EditorError> {
    let protocol = |m: &str| EditorError::Protocol(m.to_string());
    match response.get("kind").and_then(Json::as_str) {
        Some("no_proposal") => Ok(Proposal::none(editor_id.to_string())),
        Some("diff") => {
            let diff = match response.get("diff") {
                Some(Json::Array(_)) => return Err(protocol("one diff per iteration")),
                Some(Json::String(text)) => parse_diff(text),
                Some(doc @ Json::Object(_)) => diff_from_json(doc),
                _ => return Err(protocol("response has no diff document")),
            }
            .map_err(|e| EditorError::Protocol(e.to_string()))?;
            let layer_hypothesis = match response.get("layer").and_then(Json::as_str) {
                Some(l) => Some(
                    l.parse::<LayerId>()
                        .map_err(|e| EditorError::Protocol(e.to_string()))?,
                ),
                None => Some(diff.layer),
            };
            Ok(Proposal {
                layer_hypothesis,
                diff: Some(diff),
                editor_id: editor_id.to_string(),
                note: None,
            })
        }
        _ => Err(protocol("response kind must be `diff` or `no_proposal`")),
    }
}

/// Runs a child process per request: one framed request on its standard
/// input, one framed response expected on its standard output.
#[derive(Debug, Clone)]
pub struct ExternalEditor {
    command: String,
    timeout: Duration,
}

impl ExternalEditor {
    pub fn new(command: &str) -> Self {
        ExternalEditor {
            command: command.to_string(),
            timeout: DEFAULT_EDITOR_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Editor for ExternalEditor {
    fn id(&self) -> String {
        format!("external:{}", self.command)
    }

    fn propose(&mut self, request: &EditorRequest) -> Result<Proposal, EditorError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EditorError::Protocol(format!("spawn: {e}")))?;
        let body = json!({ "kind": "propose", "request": request });
        let mut stdin = child.stdin.take().expect("piped stdin");
        thread::spawn(move || {
            let _ = write_frame(&mut stdin, &body);
        });
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let _ = tx.send(read_frame(stdout));
        });
        let result = rx.recv_timeout(self.timeout);
        if result.is_err() {
            let _ = child.kill();
        }
        let _ = child.wait();
        match result {
            Ok(frame) => decode_response(&self.id(), &frame.map_err(EditorError::Protocol)?),
            Err(_) => Err(EditorError::Timeout),
        }
    }
}
