//! Payload retrieval over HTTP. Each node is fetched independently; a
//! failure is recorded against that node and never aborts the others.

use std::fs;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use geoverify::ingest::parse_measurement_file;

/// Payloads larger than this are rejected.
const MAX_PAYLOAD_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub id: String,
    pub url: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: String,
    pub url: String,
    /// File name inside the output directory on success.
    pub file: Option<String>,
    pub error: Option<String>,
}

/// Node list: one `id url` (or `id,url`) per line; blank lines and `#`
/// comments are skipped.
pub fn read_targets(path: &Path) -> Result<Vec<Target>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_targets(&text)
}

fn parse_targets(text: &str) -> Result<Vec<Target>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(id), Some(url), None) => out.push(Target { id: id.to_string(), url: url.to_string() }),
            _ => bail!("node list line {}: expected `id url`", k + 1),
        }
    }
    Ok(out)
}

/// File-system safe name for a node id.
pub fn file_name(id: &str) -> String {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("{safe}.json")
}

fn fetch_one(agent: &ureq::Agent, t: &Target, out_dir: &Path) -> Result<String> {
    let resp = agent.get(&t.url).call().map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut body = Vec::new();
    resp.into_reader().take(MAX_PAYLOAD_BYTES + 1).read_to_end(&mut body)?;
    if body.len() as u64 > MAX_PAYLOAD_BYTES {
        bail!("payload exceeds {MAX_PAYLOAD_BYTES} bytes");
    }
    let parsed = parse_measurement_file(&body)?;
    if parsed.node != t.id {
        bail!("payload names node {}", parsed.node);
    }
    let name = file_name(&t.id);
    fs::write(out_dir.join(&name), &body).with_context(|| format!("writing {name}"))?;
    Ok(name)
}

/// Fetches every target with at most `concurrency` requests in flight.
/// Outcomes are returned in target order.
pub fn fetch_all(targets: &[Target], out_dir: &Path, timeout: Duration, concurrency: usize) -> Vec<Outcome> {
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new(vec![None; targets.len()]);
    let workers = concurrency.clamp(1, targets.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(t) = targets.get(k) else { break };
                let (file, error) = match fetch_one(&agent, t, out_dir) {
                    Ok(name) => (Some(name), None),
                    Err(e) => (None, Some(format!("{e:#}"))),
                };
                results.lock().unwrap()[k] = Some(Outcome { id: t.id.clone(), url: t.url.clone(), file, error });
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|o| o.expect("every target visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_list_formats() {
        let t = parse_targets("# crawl\nab12 http://10.0.0.1:8000/verloc\n\ncd34,http://10.0.0.2:8000/verloc\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1], Target { id: "cd34".into(), url: "http://10.0.0.2:8000/verloc".into() });
        assert!(parse_targets("only-an-id\n").is_err());
        assert!(parse_targets("a b c\n").is_err());
    }

    #[test]
    fn file_names_are_flat() {
        assert_eq!(file_name("ab12"), "ab12.json");
        assert_eq!(file_name("../x/y"), "___x_y.json");
    }
}
