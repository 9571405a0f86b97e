//! Line-delimited JSON protocol for out-of-process intent generators.
//!
//! Requests are `{"id", "query", "n", "beam"}`; responses are
//! `{"id", "intents": [{"text", "logprob"}]}` or `{"id", "error"}`.
//! Responses may come back in any order and are matched by id.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::intentgen::{beam_search, filter_ranked, IntentSet, NextTokenModel, MAX_GENERATED_TOKENS};
use crate::text::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub query: String,
    pub n: usize,
    pub beam: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intents: Vec<GeneratedText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn parse_request(line: &str) -> Result<Request> {
    serde_json::from_str(line).map_err(|e| Error::Protocol(format!("bad request: {e}")))
}

pub fn parse_response(line: &str) -> Result<Response> {
    let resp: Response =
        serde_json::from_str(line).map_err(|e| Error::Protocol(format!("bad response: {e}")))?;
    if resp.id.is_none() && resp.error.is_none() {
        return Err(Error::Protocol("response without id".into()));
    }
    if resp.intents.iter().any(|i| !i.logprob.is_finite() && i.logprob != f64::NEG_INFINITY) {
        return Err(Error::Protocol("non-finite logprob".into()));
    }
    Ok(resp)
}

/// Client side of the protocol over any pair of byte streams.
pub struct ExternalGenerator<R, W> {
    reader: R,
    writer: W,
    child: Option<Child>,
    next_id: u64,
}

impl ExternalGenerator<BufReader<ChildStdout>, ChildStdin> {
    /// Starts `command` as a child process speaking the protocol on stdio.
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty generator command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ExternalGenerator {
            reader: BufReader::new(stdout),
            writer: stdin,
            child: Some(child),
            next_id: 0,
        })
    }
}

impl<R: BufRead, W: Write + Send> ExternalGenerator<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        ExternalGenerator {
            reader,
            writer,
            child: None,
            next_id: 0,
        }
    }

    /// Sends one request per query and filters each response, keeping the
    /// generator's ranking. Results come back in input order.
    pub fn generate_batch(&mut self, queries: &[String], n: usize, beam: usize) -> Result<Vec<IntentSet>> {
        let requests: Vec<Request> = queries
            .iter()
            .map(|query| {
                self.next_id += 1;
                Request {
                    id: format!("r{}", self.next_id),
                    query: query.clone(),
                    n,
                    beam,
                }
            })
            .collect();
        let mut waiting: HashMap<String, usize> = requests
            .iter()
            .enumerate()
            .map(|(idx, r)| (r.id.clone(), idx))
            .collect();
        let mut results: Vec<Option<IntentSet>> = vec![None; queries.len()];

        let writer = &mut self.writer;
        let reader = &mut self.reader;
        std::thread::scope(|scope| -> Result<()> {
            let sender = scope.spawn(move || -> Result<()> {
                for req in &requests {
                    serde_json::to_writer(&mut *writer, req)?;
                    writer.write_all(b"\n")?;
                }
                writer.flush()?;
                Ok(())
            });
            let mut line = String::new();
            while !waiting.is_empty() {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(Error::Protocol(format!(
                        "generator closed with {} requests unanswered",
                        waiting.len()
                    )));
                }
                if line.trim().is_empty() {
                    continue;
                }
                let resp = parse_response(line.trim())?;
                let Some(idx) = resp.id.as_ref().and_then(|id| waiting.remove(id)) else {
                    continue;
                };
                if let Some(err) = resp.error {
                    return Err(Error::Protocol(format!("generator error for {:?}: {err}", queries[idx])));
                }
                let raw: Vec<(String, f64)> = resp.intents.into_iter().map(|g| (g.text, g.logprob)).collect();
                results[idx] = Some(filter_ranked(&raw, &tokenize(&queries[idx]), n));
            }
            sender.join().expect("request writer panicked")
        })?;
        Ok(results.into_iter().map(|r| r.expect("every request answered")).collect())
    }

    pub fn generate(&mut self, query: &str, n: usize, beam: usize) -> Result<IntentSet> {
        Ok(self.generate_batch(&[query.to_string()], n, beam)?.remove(0))
    }
}

impl<R, W> Drop for ExternalGenerator<R, W> {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn error_response(line: &str, message: String) -> Response {
    let id = serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| match v.get("id") {
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(other) if !other.is_null() => Some(other.to_string()),
            _ => None,
        });
    Response {
        id,
        intents: Vec::new(),
        error: Some(message),
    }
}

/// Answers a single request line with the model's raw beam output.
pub fn respond<M: NextTokenModel + ?Sized>(model: &M, line: &str) -> Response {
    let req = match parse_request(line) {
        Ok(req) => req,
        Err(e) => return error_response(line, e.to_string()),
    };
    let tokens = tokenize(&req.query);
    if tokens.is_empty() {
        return error_response(line, "empty query".into());
    }
    match beam_search(model, &tokens, req.beam, MAX_GENERATED_TOKENS) {
        Ok(hyps) => Response {
            id: Some(req.id),
            intents: hyps
                .into_iter()
                .map(|h| GeneratedText {
                    text: h.tokens.join(" "),
                    logprob: h.logprob,
                })
                .collect(),
            error: None,
        },
        Err(e) => error_response(line, e.to_string()),
    }
}

/// Serves the protocol until `reader` is exhausted. Malformed lines get an
/// error response and the loop continues.
pub fn serve<M: NextTokenModel + ?Sized, R: BufRead, W: Write>(model: &M, reader: R, mut writer: W) -> Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = respond(model, &line);
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
