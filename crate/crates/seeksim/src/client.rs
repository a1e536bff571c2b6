//! Blocking client for the command stream, and an [`Environment`] over it.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::Value;

use seeksim_core::agents::Environment;
use seeksim_core::kinematics::Action;
use seeksim_core::perception::NoiseConfig;
use seeksim_core::sensors::Image;
use seeksim_core::sim::{EpisodeStart, Modality, Mode, Observation, SessionConfig, StepReceipt};

use crate::mesh_export::MeshFormat;
use crate::protocol::{read_frame, write_frame, ErrorReply, Frame, FrameError, MsgType, ObsHeader, OdometryPacket, Request};
use crate::session::{ResetReply, TickReply};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("server error {0}")]
    Server(ErrorReply),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

pub type Result<T> = std::result::Result<T, ClientError>;

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Client> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }

    /// Sends a raw frame; for protocol tests.
    pub fn send_frame(&mut self, frame: &Frame) -> Result<()> {
        write_frame(&mut self.writer, frame)?;
        Ok(self.writer.flush()?)
    }

    pub fn recv_frame(&mut self) -> Result<Frame> {
        read_frame(&mut self.reader)?.ok_or(ClientError::Frame(FrameError::Truncated))
    }

    fn expect(&mut self, t: MsgType) -> Result<Frame> {
        let f = self.recv_frame()?;
        if f.msg_type == MsgType::Error {
            let e: ErrorReply = serde_json::from_slice(&f.payload).map_err(|e| ClientError::Unexpected(e.to_string()))?;
            return Err(ClientError::Server(e));
        }
        if f.msg_type != t {
            return Err(ClientError::Unexpected(format!("{:?} where {t:?} was expected", f.msg_type)));
        }
        Ok(f)
    }

    fn call<T: DeserializeOwned>(&mut self, req: &Request) -> Result<T> {
        self.send_frame(&req.to_frame())?;
        let f = self.expect(MsgType::Reply)?;
        serde_json::from_slice(&f.payload).map_err(|e| ClientError::Unexpected(e.to_string()))
    }

    pub fn ping(&mut self) -> Result<()> {
        self.call::<Value>(&Request::Ping).map(drop)
    }

    pub fn info(&mut self) -> Result<Value> {
        self.call(&Request::Info)
    }

    pub fn reset(&mut self, config: Option<SessionConfig>) -> Result<ResetReply> {
        self.call(&Request::Reset { config, scene_file: None })
    }

    pub fn reset_with_scene_file(&mut self, config: SessionConfig, scene_file: &str) -> Result<ResetReply> {
        self.call(&Request::Reset { config: Some(config), scene_file: Some(scene_file.to_string()) })
    }

    pub fn set_mode(&mut self, mode: Mode, noise: Option<NoiseConfig>) -> Result<ResetReply> {
        self.call(&Request::SetMode { mode, noise })
    }

    pub fn act(&mut self, action: Action) -> Result<StepReceipt> {
        self.call(&Request::Action { action })
    }

    pub fn force(&mut self, forward_force: f64, torque: f64, ticks: u64) -> Result<TickReply> {
        self.call(&Request::Force { forward_force, torque, ticks })
    }

    pub fn step(&mut self, ticks: u64) -> Result<TickReply> {
        self.call(&Request::Step { ticks })
    }

    /// Header plus one raw buffer per modality.
    pub fn get_obs_raw(&mut self, modalities: &[Modality]) -> Result<(ObsHeader, Vec<Vec<u8>>)> {
        self.send_frame(&Request::GetObs { modalities: modalities.to_vec() }.to_frame())?;
        let f = self.expect(MsgType::ObsHeader)?;
        let header: ObsHeader = serde_json::from_slice(&f.payload).map_err(|e| ClientError::Unexpected(e.to_string()))?;
        let mut buffers = Vec::with_capacity(header.modalities.len());
        for size in &header.sizes {
            let b = self.expect(MsgType::Buffer)?;
            if b.payload.len() != *size {
                return Err(ClientError::Unexpected(format!("buffer of {} bytes, header says {size}", b.payload.len())));
            }
            buffers.push(b.payload);
        }
        Ok((header, buffers))
    }

    pub fn get_obs(&mut self, modalities: &[Modality]) -> Result<Observation> {
        let (header, buffers) = self.get_obs_raw(modalities)?;
        decode_observation(&header, &buffers)
    }

    pub fn export_mesh(&mut self, format: MeshFormat) -> Result<Vec<u8>> {
        self.send_frame(&Request::ExportMesh { format }.to_frame())?;
        self.expect(MsgType::Reply)?;
        Ok(self.expect(MsgType::Buffer)?.payload)
    }

    /// Subscribes a fresh local socket to this session's odometry.
    pub fn subscribe_odometry(&mut self, odometry: SocketAddr) -> Result<OdometryReceiver> {
        let info = self.info()?;
        let id = info["session"].as_u64().ok_or_else(|| ClientError::Unexpected("INFO without session id".into()))?;
        let local = if odometry.is_ipv4() { "127.0.0.1:0" } else { "[::1]:0" };
        let socket = UdpSocket::bind(local)?;
        socket.set_read_timeout(Some(Duration::from_millis(200)))?;
        let mut buf = [0u8; 64];
        for _ in 0..25 {
            socket.send_to(&id.to_le_bytes(), odometry)?;
            if let Ok((8, _)) = socket.recv_from(&mut buf) {
                if buf[..8] == id.to_le_bytes() {
                    return OdometryReceiver::start(socket);
                }
            }
        }
        Err(ClientError::Unexpected("odometry subscription was not acknowledged".into()))
    }
}

/// Odometry datagrams of one subscription. A background thread keeps the
/// socket drained so bursts are not lost while the caller waits on a command.
pub struct OdometryReceiver {
    packets: Receiver<OdometryPacket>,
    stop: Arc<AtomicBool>,
}

impl OdometryReceiver {
    fn start(socket: UdpSocket) -> Result<OdometryReceiver> {
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let (tx, packets) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        thread::spawn(move || {
            let mut buf = [0u8; 128];
            while !flag.load(Ordering::Relaxed) {
                match socket.recv(&mut buf) {
                    Ok(n) => {
                        if let Some(p) = OdometryPacket::from_bytes(&buf[..n]) {
                            if tx.send(p).is_err() {
                                return;
                            }
                        }
                    }
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                    Err(_) => return,
                }
            }
        });
        Ok(OdometryReceiver { packets, stop })
    }

    /// Waits up to `timeout` for a packet.
    pub fn recv(&self, timeout: Duration) -> Result<Option<OdometryPacket>> {
        match self.packets.recv_timeout(timeout) {
            Ok(p) => Ok(Some(p)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Unexpected("odometry socket closed".into())),
        }
    }

    /// Collects packets until `quiet` passes without one.
    pub fn drain(&self, quiet: Duration) -> Result<Vec<OdometryPacket>> {
        let mut out = Vec::new();
        while let Some(p) = self.recv(quiet)? {
            out.push(p);
        }
        Ok(out)
    }
}

impl Drop for OdometryReceiver {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

/// Rebuilds an [`Observation`] from its wire form.
pub fn decode_observation(header: &ObsHeader, buffers: &[Vec<u8>]) -> Result<Observation> {
    let [w, h] = header.dims;
    let bad = |m: Modality| ClientError::Unexpected(format!("malformed {} buffer", m.name()));
    let mut obs = Observation { tick: header.tick, mode: header.mode, pose: header.pose, color: None, depth: None, seg: None, inst: None };
    if header.modalities.len() != buffers.len() {
        return Err(ClientError::Unexpected("buffer count differs from header".into()));
    }
    for (m, b) in header.modalities.iter().zip(buffers) {
        match m {
            Modality::Color => obs.color = Some(Image::from_le_bytes(w, h, b).ok_or_else(|| bad(*m))?),
            Modality::Depth => obs.depth = Some(Image::from_le_bytes(w, h, b).ok_or_else(|| bad(*m))?),
            Modality::Seg => obs.seg = Some(Image::from_le_bytes(w, h, b).ok_or_else(|| bad(*m))?),
            Modality::Inst => obs.inst = Some(Image::from_le_bytes(w, h, b).ok_or_else(|| bad(*m))?),
        }
    }
    Ok(obs)
}

/// Runs episodes against a server. Each reset sends `template` with the
/// episode seed filled in.
pub struct RemoteEnv {
    pub client: Client,
    pub template: SessionConfig,
}

impl RemoteEnv {
    pub fn connect(addr: impl ToSocketAddrs, template: SessionConfig) -> Result<RemoteEnv> {
        Ok(RemoteEnv { client: Client::connect(addr)?, template })
    }
}

impl Environment for RemoteEnv {
    type Error = ClientError;

    fn reset(&mut self, episode_seed: u64) -> Result<EpisodeStart> {
        let config = SessionConfig { episode_seed, ..self.template.clone() };
        Ok(self.client.reset(Some(config))?.start)
    }

    fn observe(&mut self, modalities: &[Modality]) -> Result<Observation> {
        self.client.get_obs(modalities)
    }

    fn act(&mut self, action: Action) -> Result<StepReceipt> {
        self.client.act(action)
    }
}
