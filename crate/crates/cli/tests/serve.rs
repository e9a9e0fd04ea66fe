use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;

use mobility_core::bench::{generate, read_annotation, write_annotation, Archetype};
use mobility_core::pipeline::PipelineConfig;
use mobility_core::Vec3;
use s2m::serve::{bind, local_port, serve, Service};
use serde_json::{json, Value};

fn service_with(dir: &Path, shapes: &[(Archetype, u64)]) -> Service {
    for &(a, seed) in shapes {
        let ann = generate(a, seed, 1024).unwrap();
        std::fs::write(dir.join(format!("{}.json", ann.shape_id)), write_annotation(&ann).unwrap()).unwrap();
    }
    Service::new(dir, PipelineConfig::default())
}

fn laptop_id() -> String {
    generate(Archetype::Laptop, 0, 1024).unwrap().shape_id
}

#[test]
fn lists_and_fetches_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[(Archetype::Laptop, 0), (Archetype::Drawer, 1)]);
    let reply = service.handle("GET", "/shapes", b"");
    assert_eq!(reply.status, 200);
    let ids: Vec<String> = serde_json::from_value(reply.body_json().unwrap()).unwrap();
    assert_eq!(ids.len(), 2);
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    let id = laptop_id();
    let reply = service.handle("GET", &format!("/shapes/{id}"), b"");
    assert_eq!(reply.status, 200);
    assert_eq!(reply.body, std::fs::read(dir.path().join(format!("{id}.json"))).unwrap());
}

#[test]
fn unknown_routes_and_shapes_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[]);
    assert_eq!(service.handle("GET", "/shapes/nope", b"").status, 404);
    assert_eq!(service.handle("GET", "/shapes/nope/result", b"").status, 404);
    assert_eq!(service.handle("POST", "/shapes/nope/run", b"").status, 404);
    assert_eq!(service.handle("GET", "/shapes/..%2Fetc", b"").status, 404);
    assert_eq!(service.handle("GET", "/shapes/.hidden", b"").status, 404);
    assert_eq!(service.handle("DELETE", "/shapes", b"").status, 404);
    assert_eq!(service.handle("GET", "/", b"").status, 404);
}

#[test]
fn put_validates_and_saves_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[]);
    let ann = generate(Archetype::Door, 2, 512).unwrap();
    let text = write_annotation(&ann).unwrap();
    let url = format!("/shapes/{}", ann.shape_id);

    let reply = service.handle("PUT", &url, text.as_bytes());
    assert_eq!(reply.status, 200, "{:?}", reply.body_json());
    let back = service.handle("GET", &url, b"");
    assert_eq!(back.body, text.as_bytes());
    assert_eq!(read_annotation(&back.body).unwrap(), ann);

    let reply = service.handle("PUT", &url, b"{not json");
    assert_eq!(reply.status, 400);

    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["parts"][1]["indices"][0] = json!(99_999);
    let reply = service.handle("PUT", &url, doc.to_string().as_bytes());
    assert_eq!(reply.status, 422);
    assert_eq!(reply.body_json().unwrap()["field"], "parts[1].indices[0]");

    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc.as_object_mut().unwrap().remove("parts");
    let reply = service.handle("PUT", &url, doc.to_string().as_bytes());
    assert_eq!(reply.status, 422);
    assert!(reply.body_json().unwrap()["error"].as_str().unwrap().contains("missing field: parts"));

    let reply = service.handle("PUT", "/shapes/other", text.as_bytes());
    assert_eq!(reply.status, 422);
    assert_eq!(reply.body_json().unwrap()["field"], "shape_id");
    assert!(!dir.path().join("other.json").exists());
}

#[test]
fn run_stores_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[(Archetype::Laptop, 0)]);
    let id = laptop_id();
    assert_eq!(service.handle("GET", &format!("/shapes/{id}/result"), b"").status, 404);

    let reply = service.handle("POST", &format!("/shapes/{id}/run"), b"");
    assert_eq!(reply.status, 200);
    let doc = reply.body_json().unwrap();
    assert!(doc["report"]["iou"].as_f64().unwrap() >= 0.95);

    let stored = service.handle("GET", &format!("/shapes/{id}/result"), b"");
    assert_eq!(stored.status, 200);
    assert_eq!(stored.body, reply.body);
    // results are not listed as shapes
    let ids = service.handle("GET", "/shapes", b"").body_json().unwrap();
    assert_eq!(ids, json!([id]));

    let flow = service.handle("POST", &format!("/shapes/{id}/flow"), br#"{"mobility":0,"phase":1.0,"source":"result"}"#);
    assert_eq!(flow.status, 200);
}

#[test]
fn hinge_flow_turns_the_lid_a_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[(Archetype::Laptop, 0)]);
    let gt = generate(Archetype::Laptop, 0, 1024).unwrap();
    let lid = gt.moving_parts().next().unwrap();
    let line = lid.motions[0].line;

    let reply = service.handle("POST", &format!("/shapes/{}/flow", gt.shape_id), br#"{"mobility":0,"phase":1.0}"#);
    assert_eq!(reply.status, 200);
    let doc = reply.body_json().unwrap();
    assert_eq!(doc["type"], "R");
    let flow: Vec<[f64; 3]> = serde_json::from_value(doc["displacements"].clone()).unwrap();
    assert_eq!(flow.len(), gt.cloud.len());
    for i in 0..gt.cloud.len() {
        let d = Vec3::from(flow[i]);
        if !lid.indices.contains(&i) {
            assert_eq!(d, Vec3::zeros());
            continue;
        }
        // a quarter turn moves each point by sqrt(2) times its distance to the axis
        let r = line.distance(&gt.cloud.point(i));
        assert!((d.norm() - r * 2f64.sqrt()).abs() < 1e-9);
        assert!(d.dot(&line.direction).abs() < 1e-9);
    }

    let half = service.handle("POST", &format!("/shapes/{}/flow", gt.shape_id), br#"{"mobility":0,"phase":0.5}"#);
    let half: Vec<[f64; 3]> = serde_json::from_value(half.body_json().unwrap()["displacements"].clone()).unwrap();
    let i = lid.indices[0];
    let r = line.distance(&gt.cloud.point(i));
    let expect = 2.0 * r * (45f64.to_radians() / 2.0).sin();
    assert!((Vec3::from(half[i]).norm() - expect).abs() < 1e-9);
}

#[test]
fn flow_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[(Archetype::Laptop, 0)]);
    let url = format!("/shapes/{}/flow", laptop_id());
    let field = |body: &[u8]| {
        let reply = service.handle("POST", &url, body);
        assert_eq!(reply.status, 422);
        reply.body_json().unwrap()["field"].clone()
    };
    assert_eq!(field(br#"{"phase":1.0}"#), "mobility");
    assert_eq!(field(br#"{"mobility":0}"#), "phase");
    assert_eq!(field(br#"{"mobility":7,"phase":1.0}"#), "mobility");
    assert_eq!(field(br#"{"mobility":0,"phase":1.0,"source":"x"}"#), "source");
    assert_eq!(service.handle("POST", &url, b"[").status, 400);
    // no stored result yet
    assert_eq!(service.handle("POST", &url, br#"{"mobility":0,"phase":1,"source":"result"}"#).status, 404);
}

fn http(port: u16, request: &str) -> String {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn answers_over_a_socket() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_with(dir.path(), &[(Archetype::Laptop, 0)]);
    let server = bind(0).unwrap();
    let port = local_port(&server).unwrap();
    std::thread::spawn(move || serve(&server, &service));

    let reply = http(port, "GET /shapes HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("Access-Control-Allow-Origin: *"));
    assert!(reply.contains(&laptop_id()));

    let reply = http(port, "OPTIONS /shapes HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    assert!(reply.starts_with("HTTP/1.1 204"), "{reply}");

    let body = "{oops";
    let req = format!(
        "PUT /shapes/x HTTP/1.1\r\nHost: localhost\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    assert!(http(port, &req).starts_with("HTTP/1.1 400"));
}
