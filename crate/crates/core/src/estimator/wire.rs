//! Client side of the external estimator protocol (version 1).
//!
//! Newline-delimited JSON over TCP or a child process's stdio. The client
//! opens with `{"op":"hello"}` and expects `{"v":1,"raster":[w,h]}`. Each
//! estimate request is
//! `{"v":1,"op":"estimate","w":..,"h":..,"img_s":..,"img_g":..}` with the
//! rasters as base64 of little-endian `f32`, row-major. Replies are
//! `{"v":1,"quat_wxyz":[w,x,y,z],"confidence":c|null}` or
//! `{"v":1,"error":"..."}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::Serialize;
use serde_json::Value;

use super::{check_pair, EstimateRequest, RotationEstimate, RotationEstimator};
use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::render::{crop_and_resize, DepthImage};
use crate::so3::UnitQuaternion;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Stdio(Vec<String>),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Endpoint> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() || !addr.contains(':') {
                return Err(Error::Config(format!("endpoint {s:?} needs host:port")));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config(format!("endpoint {s:?} names no command")));
            }
            return Ok(Endpoint::Stdio(argv));
        }
        Err(Error::Config(format!(
            "endpoint {s:?} must start with tcp:// or stdio:"
        )))
    }
}

#[derive(Serialize)]
struct EstimateMessage<'a> {
    v: u64,
    op: &'a str,
    w: u32,
    h: u32,
    img_s: String,
    img_g: String,
}

/// Serialized estimate request line, without the trailing newline.
pub fn encode_request(image_start: &DepthImage, image_goal: &DepthImage) -> String {
    let msg = EstimateMessage {
        v: PROTOCOL_VERSION,
        op: "estimate",
        w: image_start.width(),
        h: image_start.height(),
        img_s: STANDARD.encode(image_start.to_le_bytes()),
        img_g: STANDARD.encode(image_goal.to_le_bytes()),
    };
    serde_json::to_string(&msg).expect("request serializes")
}

pub fn encode_hello() -> &'static str {
    r#"{"op":"hello"}"#
}

fn parse_object(line: &str, what: &str) -> Result<serde_json::Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Protocol(format!(
            "{what}: reply is not a JSON object"
        ))),
        Err(e) => Err(Error::Protocol(format!("{what}: malformed reply: {e}"))),
    }
}

fn check_version(map: &serde_json::Map<String, Value>, what: &str) -> Result<()> {
    match map.get("v").and_then(Value::as_u64) {
        Some(PROTOCOL_VERSION) => Ok(()),
        Some(v) => Err(Error::Protocol(format!(
            "{what}: version mismatch (server speaks {v}, client speaks {PROTOCOL_VERSION})"
        ))),
        None => Err(Error::Protocol(format!(
            "{what}: reply lacks a version field"
        ))),
    }
}

/// Parses a handshake reply into the protocol version and raster size.
pub fn decode_hello(line: &str) -> Result<(u64, [u32; 2])> {
    let map = parse_object(line, "handshake")?;
    if let Some(e) = map.get("error") {
        return Err(Error::Remote(
            e.as_str().unwrap_or("unspecified").to_string(),
        ));
    }
    check_version(&map, "handshake")?;
    let raster = map
        .get("raster")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .and_then(|a| Some([a[0].as_u64()?, a[1].as_u64()?]))
        .filter(|r| r[0] > 0 && r[1] > 0 && r[0] <= u32::MAX as u64 && r[1] <= u32::MAX as u64)
        .ok_or_else(|| Error::Protocol("handshake: missing or invalid raster size".into()))?;
    Ok((PROTOCOL_VERSION, [raster[0] as u32, raster[1] as u32]))
}

/// Parses an estimate reply into a rotation and optional confidence.
pub fn decode_response(line: &str) -> Result<(UnitQuaternion, Option<f64>)> {
    let map = parse_object(line, "estimate")?;
    check_version(&map, "estimate")?;
    if let Some(e) = map.get("error") {
        return Err(Error::Remote(
            e.as_str().unwrap_or("unspecified").to_string(),
        ));
    }
    let q = map
        .get("quat_wxyz")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 4)
        .and_then(|a| {
            Some([
                a[0].as_f64()?,
                a[1].as_f64()?,
                a[2].as_f64()?,
                a[3].as_f64()?,
            ])
        })
        .ok_or_else(|| Error::Protocol("estimate: quat_wxyz must be 4 numbers".into()))?;
    let rotation = UnitQuaternion::from_wxyz(q)
        .map_err(|e| Error::Protocol(format!("estimate: bad quaternion: {e}")))?;
    let confidence = match map.get("confidence") {
        None | Some(Value::Null) => None,
        Some(c) => match c.as_f64() {
            Some(c) if (0.0..=1.0).contains(&c) => Some(c),
            _ => {
                return Err(Error::Protocol(
                    "estimate: confidence must be null or in [0, 1]".into(),
                ))
            }
        },
    };
    Ok((rotation, confidence))
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
}

fn spawn_reader<R: std::io::Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(r);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

impl Connection {
    fn open(endpoint: &Endpoint, timeout: Duration) -> Result<Connection> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let sock = addr
                    .to_socket_addrs()
                    .map_err(|e| Error::Transport(format!("resolving {addr}: {e}")))?
                    .next()
                    .ok_or_else(|| Error::Transport(format!("{addr} resolves to nothing")))?;
                let stream = TcpStream::connect_timeout(&sock, timeout)
                    .map_err(|e| Error::Transport(format!("connecting to {addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read_half = stream
                    .try_clone()
                    .map_err(|e| Error::Transport(format!("cloning socket: {e}")))?;
                Ok(Connection {
                    writer: Box::new(stream),
                    lines: spawn_reader(read_half),
                    child: None,
                    timeout,
                })
            }
            Endpoint::Stdio(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Transport(format!("spawning {}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Connection {
                    writer: Box::new(stdin),
                    lines: spawn_reader(stdout),
                    child: Some(child),
                    timeout,
                })
            }
        }
    }

    fn roundtrip(&mut self, line: &str) -> Result<String> {
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        self.writer
            .write_all(&buf)
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Transport(format!("sending request: {e}")))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(Error::Transport(format!("reading reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Transport(format!(
                "no reply within {:.1} s",
                self.timeout.as_secs_f64()
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("connection closed by server".into()))
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Adapter owning one connection; requests are serialized.
pub struct ExternalEstimator {
    conn: Connection,
    version: u64,
    raster: [u32; 2],
    crop_margin: Option<f64>,
}

impl ExternalEstimator {
    pub fn connect(endpoint: &str, timeout_s: f64, crop_margin: Option<f64>) -> Result<Self> {
        let ep = Endpoint::parse(endpoint)?;
        let timeout = Duration::from_secs_f64(timeout_s.max(1e-3));
        let mut conn = Connection::open(&ep, timeout)?;
        let reply = conn.roundtrip(encode_hello())?;
        let (version, raster) = decode_hello(&reply)?;
        if crop_margin.is_some() && raster[0] != raster[1] {
            return Err(Error::Config(format!(
                "cropping needs a square raster, server expects {}x{}",
                raster[0], raster[1]
            )));
        }
        Ok(ExternalEstimator {
            conn,
            version,
            raster,
            crop_margin,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn raster(&self) -> [u32; 2] {
        self.raster
    }

    fn prepare(&self, img: &DepthImage) -> Result<DepthImage> {
        let out = match self.crop_margin {
            Some(m) => {
                let center = img.foreground_center().ok_or(Error::EmptyForeground)?;
                crop_and_resize(img, center, m, self.raster[0])?
            }
            None => img.clone(),
        };
        if out.width() != self.raster[0] || out.height() != self.raster[1] {
            return Err(Error::DimensionMismatch {
                expected_w: self.raster[0],
                expected_h: self.raster[1],
                got_w: out.width(),
                got_h: out.height(),
            });
        }
        Ok(out)
    }
}

impl RotationEstimator for ExternalEstimator {
    fn estimate(&mut self, req: &EstimateRequest<'_>) -> Result<RotationEstimate> {
        check_pair(req)?;
        let sw = Stopwatch::start();
        let s = self.prepare(req.image_start)?;
        let g = self.prepare(req.image_goal)?;
        let reply = self.conn.roundtrip(&encode_request(&s, &g))?;
        let (rotation, confidence) = decode_response(&reply)?;
        Ok(RotationEstimate {
            rotation,
            confidence,
            latency: sw.elapsed(),
        })
    }
}
