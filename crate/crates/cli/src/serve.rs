//! Loopback JSON server over a data directory.
//!
//! Shapes live in `<data>/<id>.json`, pipeline results in
//! `<data>/results/<id>.json`. Requests are handled one at a time.

use std::path::{Path, PathBuf};

use mobility_core::bench::{parse_annotation, read_annotation, write_annotation, Annotation, INDEX_FILE};
use mobility_core::kinematics::motion_isometry;
use mobility_core::pipeline::PipelineConfig;
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

use crate::commands::run;
use crate::{CliError, Result};

pub const DEFAULT_PORT: u16 = 7373;
const RESULTS_DIR: &str = "results";

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, value: &Value) -> Self {
        Self {
            status,
            body: (serde_json::to_string(value).expect("json value serialises") + "\n").into_bytes(),
        }
    }

    fn document(text: String) -> Self {
        Self {
            status: 200,
            body: text.into_bytes(),
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &json!({ "error": message.into() }))
    }

    fn unprocessable(field: Option<&str>, message: impl Into<String>) -> Self {
        Self::json(422, &json!({ "error": message.into(), "field": field }))
    }

    pub fn body_json(&self) -> Option<Value> {
        serde_json::from_slice(&self.body).ok()
    }
}

/// Ids double as file names, so only a conservative alphabet is accepted.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub struct Service {
    data: PathBuf,
    config: PipelineConfig,
}

impl Service {
    pub fn new(data: impl Into<PathBuf>, config: PipelineConfig) -> Self {
        Self {
            data: data.into(),
            config,
        }
    }

    fn shape_path(&self, id: &str) -> PathBuf {
        self.data.join(format!("{id}.json"))
    }

    fn result_path(&self, id: &str) -> PathBuf {
        self.data.join(RESULTS_DIR).join(format!("{id}.json"))
    }

    pub fn shape_ids(&self) -> std::io::Result<Vec<String>> {
        let mut ids: Vec<String> = std::fs::read_dir(&self.data)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .filter(|p| p.file_name().is_some_and(|n| n != INDEX_FILE))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn load(&self, path: &Path) -> std::result::Result<Annotation, Reply> {
        let bytes = std::fs::read(path).map_err(|e| Reply::error(500, e.to_string()))?;
        read_annotation(&bytes).map_err(|e| Reply::error(500, format!("stored document is invalid: {e}")))
    }

    pub fn handle(&self, method: &str, url: &str, body: &[u8]) -> Reply {
        let path = url.split('?').next().unwrap_or("");
        let segs: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (method, segs.as_slice()) {
            ("GET", ["shapes"]) => match self.shape_ids() {
                Ok(ids) => Reply::json(200, &json!(ids)),
                Err(e) => Reply::error(500, e.to_string()),
            },
            (_, ["shapes", id, ..]) if !valid_id(id) => Reply::error(404, format!("unknown shape '{id}'")),
            ("GET", ["shapes", id]) => self.get_shape(id),
            ("PUT", ["shapes", id]) => self.put_shape(id, body),
            ("GET", ["shapes", id, "result"]) => self.get_result(id),
            ("POST", ["shapes", id, "run"]) => self.run_shape(id),
            ("POST", ["shapes", id, "flow"]) => self.flow(id, body),
            _ => Reply::error(404, format!("no route for {method} {path}")),
        }
    }

    fn get_shape(&self, id: &str) -> Reply {
        match std::fs::read(self.shape_path(id)) {
            Ok(bytes) => Reply { status: 200, body: bytes },
            Err(_) => Reply::error(404, format!("unknown shape '{id}'")),
        }
    }

    fn put_shape(&self, id: &str, body: &[u8]) -> Reply {
        let doc: Value = match serde_json::from_slice(body) {
            Ok(v) => v,
            Err(e) => return Reply::error(400, format!("malformed JSON: {e}")),
        };
        let ann = match parse_annotation(&doc) {
            Ok(a) => a,
            Err(e) => return Reply::unprocessable(e.field(), e.to_string()),
        };
        if ann.shape_id != id {
            return Reply::unprocessable(
                Some("shape_id"),
                format!("shape_id '{}' does not match '{id}'", ann.shape_id),
            );
        }
        let text = match write_annotation(&ann) {
            Ok(t) => t,
            Err(e) => return Reply::unprocessable(e.field(), e.to_string()),
        };
        match std::fs::write(self.shape_path(id), text) {
            Ok(()) => Reply::json(200, &json!({ "shape_id": id })),
            Err(e) => Reply::error(500, e.to_string()),
        }
    }

    fn get_result(&self, id: &str) -> Reply {
        match std::fs::read(self.result_path(id)) {
            Ok(bytes) => Reply { status: 200, body: bytes },
            Err(_) => Reply::error(404, format!("no result for '{id}'")),
        }
    }

    fn run_shape(&self, id: &str) -> Reply {
        let path = self.shape_path(id);
        if !path.is_file() {
            return Reply::error(404, format!("unknown shape '{id}'"));
        }
        let ann = match self.load(&path) {
            Ok(a) => a,
            Err(r) => return r,
        };
        let text = match run(&ann, &self.config) {
            Ok(t) => t,
            Err(e) => return Reply::error(500, e.to_string()),
        };
        let out = self.result_path(id);
        let stored = out
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .and_then(|()| std::fs::write(&out, &text));
        match stored {
            Ok(()) => Reply::document(text),
            Err(e) => Reply::error(500, e.to_string()),
        }
    }

    /// Per-point displacement of one mobility at `phase` times the full
    /// canonical amount. `source` picks the shape's own annotation (default)
    /// or its stored pipeline result.
    fn flow(&self, id: &str, body: &[u8]) -> Reply {
        let req: Value = match serde_json::from_slice(body) {
            Ok(v) => v,
            Err(e) => return Reply::error(400, format!("malformed JSON: {e}")),
        };
        let Some(index) = req.get("mobility").and_then(Value::as_u64) else {
            return Reply::unprocessable(Some("mobility"), "expected a non-negative integer");
        };
        let Some(phase) = req.get("phase").and_then(Value::as_f64) else {
            return Reply::unprocessable(Some("phase"), "expected a number");
        };
        let path = match req.get("source").and_then(Value::as_str).unwrap_or("shape") {
            "shape" => self.shape_path(id),
            "result" => self.result_path(id),
            other => return Reply::unprocessable(Some("source"), format!("unknown source '{other}'")),
        };
        if !path.is_file() {
            return Reply::error(404, format!("nothing stored for '{id}'"));
        }
        let ann = match self.load(&path) {
            Ok(a) => a,
            Err(r) => return r,
        };
        let motions: Vec<_> = ann
            .parts
            .iter()
            .flat_map(|p| p.motions.iter().map(move |m| (p, m)))
            .collect();
        let Some((part, motion)) = motions.get(index as usize) else {
            return Reply::unprocessable(
                Some("mobility"),
                format!("index {index} out of range for {} mobilities", motions.len()),
            );
        };
        let amount = self.config.amounts().amount(ann.cloud.bbox_diagonal()).scaled(phase);
        let iso = motion_isometry(&motion.line, motion.motion_type, amount);
        let mut flow = vec![[0.0; 3]; ann.cloud.len()];
        for &i in &part.indices {
            let p = ann.cloud.point(i);
            let d = iso.transform_point(&p.into()).coords - p;
            flow[i] = [d.x, d.y, d.z];
        }
        Reply::json(
            200,
            &json!({
                "shape_id": ann.shape_id,
                "mobility": index,
                "phase": phase,
                "type": motion.motion_type.code(),
                "displacements": flow,
            }),
        )
    }
}

/// Binds on loopback; port 0 picks a free port.
pub fn bind(port: u16) -> Result<Server> {
    Server::http(("127.0.0.1", port)).map_err(|e| CliError::Config(format!("cannot bind port {port}: {e}")))
}

pub fn local_port(server: &Server) -> Option<u16> {
    server.server_addr().to_ip().map(|a| a.port())
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

/// Serves until the listener fails.
pub fn serve(server: &Server, service: &Service) {
    for mut request in server.incoming_requests() {
        let mut body = Vec::new();
        let reply = match request.as_reader().read_to_end(&mut body) {
            Err(e) => Reply::error(400, e.to_string()),
            Ok(_) if *request.method() == Method::Options => Reply { status: 204, body: Vec::new() },
            Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
        };
        let response = Response::from_data(reply.body)
            .with_status_code(reply.status)
            .with_header(header("Content-Type", "application/json"))
            .with_header(header("Access-Control-Allow-Origin", "*"))
            .with_header(header("Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS"))
            .with_header(header("Access-Control-Allow-Headers", "Content-Type"));
        // the client may already be gone; nothing to do about it here
        let _ = request.respond(response);
    }
}
