//! TCP command server, UDP odometry broadcaster and websocket mirror.
//!
//! Odometry: a client sends the 8-byte little-endian session id (from INFO)
//! to the odometry port; the server echoes it back as an acknowledgement and
//! from then on sends that client one datagram per physics tick of that
//! session. Sends never block: a full socket buffer drops the packet.

use std::collections::HashMap;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::{json, Value};
use tungstenite::Message;

use seeksim_core::kinematics::Odometry;
use seeksim_core::sim::SessionConfig;

use crate::protocol::{
    read_frame, write_frame, ErrorKind, ErrorReply, Frame, FrameError, MsgType, OdometryPacket, Request, DEFAULT_ODOM_PORT,
    DEFAULT_PORT, DEFAULT_WS_PORT,
};
use crate::session::{Response, Session};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub host: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub odom_port: u16,
    pub ws_port: u16,
    pub defaults: SessionConfig,
    pub scene_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            odom_port: DEFAULT_ODOM_PORT,
            ws_port: DEFAULT_WS_PORT,
            defaults: SessionConfig::default(),
            scene_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerAddrs {
    pub command: SocketAddr,
    pub odometry: SocketAddr,
    pub websocket: SocketAddr,
}

type Subscribers = Mutex<HashMap<u64, Vec<SocketAddr>>>;

struct Shared {
    config: ServerConfig,
    next_id: AtomicU64,
    subscribers: Subscribers,
    sender: UdpSocket,
}

impl Shared {
    fn new_session(&self) -> Session {
        let mut s = Session::new(self.config.defaults.clone(), self.config.scene_dir.clone());
        s.id = self.next_id.fetch_add(1, Ordering::Relaxed);
        s
    }

    fn broadcast(&self, id: u64, o: &Odometry) {
        let sent = {
            let subs = self.subscribers.lock().unwrap();
            let addrs = subs.get(&id).map_or(&[][..], |a| a.as_slice());
            let bytes = OdometryPacket::from(o).to_bytes();
            for a in addrs {
                // Datagram semantics: a full buffer loses the packet.
                let _ = self.sender.send_to(&bytes, a);
            }
            !addrs.is_empty()
        };
        // Step-mode bursts outrun same-host readers otherwise.
        if sent {
            thread::yield_now();
        }
    }

    fn end_session(&self, id: u64) {
        self.subscribers.lock().unwrap().remove(&id);
    }
}

pub struct Server {
    command: TcpListener,
    odometry: UdpSocket,
    websocket: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(config: ServerConfig) -> io::Result<Server> {
        let command = TcpListener::bind((config.host, config.port))?;
        let odometry = UdpSocket::bind((config.host, config.odom_port))?;
        let websocket = TcpListener::bind((config.host, config.ws_port))?;
        let sender = UdpSocket::bind((config.host, 0))?;
        sender.set_nonblocking(true)?;
        let shared = Arc::new(Shared { config, next_id: AtomicU64::new(1), subscribers: Mutex::new(HashMap::new()), sender });
        Ok(Server { command, odometry, websocket, shared })
    }

    pub fn addrs(&self) -> io::Result<ServerAddrs> {
        Ok(ServerAddrs {
            command: self.command.local_addr()?,
            odometry: self.odometry.local_addr()?,
            websocket: self.websocket.local_addr()?,
        })
    }

    /// Serves on background threads.
    pub fn spawn(self) -> io::Result<ServerAddrs> {
        let addrs = self.addrs()?;
        let Server { command, odometry, websocket, shared } = self;
        let s = shared.clone();
        thread::spawn(move || subscription_loop(odometry, &s));
        let s = shared.clone();
        thread::spawn(move || accept_loop(websocket, s, serve_websocket));
        thread::spawn(move || accept_loop(command, shared, serve_stream));
        Ok(addrs)
    }

    /// Serves until the command listener fails.
    pub fn run(self) -> io::Result<()> {
        let Server { command, odometry, websocket, shared } = self;
        let s = shared.clone();
        thread::spawn(move || subscription_loop(odometry, &s));
        let s = shared.clone();
        thread::spawn(move || accept_loop(websocket, s, serve_websocket));
        accept_loop(command, shared, serve_stream);
        Ok(())
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, serve: fn(TcpStream, &Shared) -> io::Result<()>) {
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let shared = shared.clone();
        thread::spawn(move || {
            let _ = serve(stream, &shared);
        });
    }
}

fn subscription_loop(socket: UdpSocket, shared: &Shared) {
    let mut buf = [0u8; 64];
    loop {
        let Ok((n, from)) = socket.recv_from(&mut buf) else { continue };
        if n != 8 {
            continue;
        }
        let id = u64::from_le_bytes(buf[..8].try_into().unwrap());
        {
            let mut subs = shared.subscribers.lock().unwrap();
            let list = subs.entry(id).or_default();
            if !list.contains(&from) {
                list.push(from);
            }
        }
        let _ = socket.send_to(&buf[..8], from);
    }
}

fn error_frame(e: &ErrorReply) -> Frame {
    Frame::json(MsgType::Error, e)
}

fn serve_stream(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut session = shared.new_session();
    let id = session.id;
    let mut reader = stream.try_clone()?;
    let mut out = BufWriter::new(stream);
    let result = (|| loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => return Ok(()),
            Err(FrameError::Io(e)) => return Err(e),
            Err(e) => {
                write_frame(&mut out, &error_frame(&ErrorReply { kind: ErrorKind::Protocol, message: e.to_string() }))?;
                return out.flush();
            }
        };
        let req = match Request::from_frame(&frame) {
            Ok(r) => r,
            Err(message) => {
                write_frame(&mut out, &error_frame(&ErrorReply { kind: ErrorKind::Protocol, message }))?;
                return out.flush();
            }
        };
        match session.handle(req, &mut |o| shared.broadcast(id, o)) {
            Ok(Response::Reply(v)) => write_frame(&mut out, &Frame::json(MsgType::Reply, &v))?,
            Ok(Response::Observation { header, buffers }) => {
                write_frame(&mut out, &Frame::json(MsgType::ObsHeader, &header))?;
                for b in buffers {
                    write_frame(&mut out, &Frame::new(MsgType::Buffer, b))?;
                }
            }
            Ok(Response::Mesh { format, bytes }) => {
                write_frame(&mut out, &Frame::json(MsgType::Reply, &json!({ "format": format, "size": bytes.len() })))?;
                write_frame(&mut out, &Frame::new(MsgType::Buffer, bytes))?;
            }
            Err(e) => write_frame(&mut out, &error_frame(&e))?,
        }
        out.flush()?;
    })();
    shared.end_session(id);
    result
}

/// The websocket form of a response: one JSON text message.
pub fn websocket_json(resp: Result<Response, ErrorReply>) -> Value {
    match resp {
        Ok(Response::Reply(data)) => json!({ "type": "reply", "data": data }),
        Ok(Response::Observation { header, buffers }) => json!({
            "type": "obs",
            "header": header,
            "buffers": buffers.iter().map(|b| B64.encode(b)).collect::<Vec<_>>(),
        }),
        Ok(Response::Mesh { format, bytes }) => json!({ "type": "mesh", "format": format, "data": B64.encode(bytes) }),
        Err(e) => json!({ "type": "error", "kind": e.kind, "message": e.message }),
    }
}

fn serve_websocket(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    let mut session = shared.new_session();
    let id = session.id;
    let ws_err = |e: tungstenite::Error| io::Error::other(e.to_string());
    let result = (|| loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                let e = ErrorReply { kind: ErrorKind::Protocol, message: "binary messages are not accepted".into() };
                ws.send(Message::text(websocket_json(Err(e)).to_string())).map_err(ws_err)?;
                return ws.close(None).map_err(ws_err);
            }
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Ok(_) => continue,
            Err(e) => return Err(ws_err(e)),
        };
        match Request::from_json(text.as_bytes()) {
            Ok(req) => {
                let resp = session.handle(req, &mut |o| shared.broadcast(id, o));
                ws.send(Message::text(websocket_json(resp).to_string())).map_err(ws_err)?;
            }
            Err(message) => {
                let e = ErrorReply { kind: ErrorKind::Protocol, message };
                ws.send(Message::text(websocket_json(Err(e)).to_string())).map_err(ws_err)?;
                return ws.close(None).map_err(ws_err);
            }
        }
    })();
    shared.end_session(id);
    result
}
