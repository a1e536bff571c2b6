//! Wire format of the command stream and the odometry datagrams.
//!
//! Every frame is `length: u32 LE | type: u8 | payload`, with `length`
//! counting payload bytes only. Requests and `REPLY`/`ERROR` payloads are
//! UTF-8 JSON; `BUFFER` payloads are raw little-endian image or mesh bytes.
//! `GET_OBS` is answered by one `OBS_HEADER` frame followed by one `BUFFER`
//! per listed modality, in the header's order. `EXPORT_MESH` is answered by a
//! `REPLY` giving format and size, then one `BUFFER`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use seeksim_core::kinematics::{Action, Odometry};
use seeksim_core::perception::{NoiseConfig, PoseEstimate};
use seeksim_core::sim::{Modality, Mode, SessionConfig};

use crate::mesh_export::MeshFormat;

pub const HEADER_LEN: usize = 5;
/// Frames above this are refused rather than buffered.
pub const MAX_PAYLOAD: usize = 64 << 20;

pub const DEFAULT_PORT: u16 = 9000;
pub const DEFAULT_ODOM_PORT: u16 = 9001;
pub const DEFAULT_WS_PORT: u16 = 9002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Ping = 0x01,
    Info = 0x02,
    Reset = 0x03,
    Action = 0x04,
    Force = 0x05,
    Step = 0x06,
    GetObs = 0x07,
    SetMode = 0x08,
    ExportMesh = 0x09,
    Reply = 0x81,
    ObsHeader = 0x82,
    Buffer = 0x83,
    Error = 0xFF,
}

impl MsgType {
    pub const ALL: [MsgType; 13] = [
        MsgType::Ping,
        MsgType::Info,
        MsgType::Reset,
        MsgType::Action,
        MsgType::Force,
        MsgType::Step,
        MsgType::GetObs,
        MsgType::SetMode,
        MsgType::ExportMesh,
        MsgType::Reply,
        MsgType::ObsHeader,
        MsgType::Buffer,
        MsgType::Error,
    ];

    pub fn from_u8(b: u8) -> Option<MsgType> {
        MsgType::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn is_request(self) -> bool {
        (self as u8) < 0x80
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn json<T: Serialize>(msg_type: MsgType, value: &T) -> Self {
        Frame::new(msg_type, serde_json::to_vec(value).expect("protocol types serialize"))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.payload);
        out
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("need {0} more bytes")]
    NeedMore(usize),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
}

/// Decodes one frame from the front of `buf`, returning it and the number of
/// bytes consumed.
pub fn decode(buf: &[u8]) -> Result<(Frame, usize), DecodeError> {
    if buf.len() < HEADER_LEN {
        return Err(DecodeError::NeedMore(HEADER_LEN - buf.len()));
    }
    let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    let msg_type = MsgType::from_u8(buf[4]).ok_or(DecodeError::UnknownType(buf[4]))?;
    if len > MAX_PAYLOAD {
        return Err(DecodeError::TooLarge(len));
    }
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(DecodeError::NeedMore(total - buf.len()));
    }
    Ok((Frame::new(msg_type, buf[HEADER_LEN..total].to_vec()), total))
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("connection closed mid-frame")]
    Truncated,
}

/// Reads one frame. `Ok(None)` is a clean close between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let msg_type = MsgType::from_u8(header[4]).ok_or(DecodeError::UnknownType(header[4]))?;
    if len > MAX_PAYLOAD {
        return Err(DecodeError::TooLarge(len).into());
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(Frame::new(msg_type, payload)))
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())
}

/// A command. The same JSON is the payload of a framed request and the
/// text of a websocket message; `cmd` must agree with the frame type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Ping,
    Info,
    Reset {
        /// Server defaults when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<SessionConfig>,
        /// Load `<scene-dir>/<scene_file>` instead of the config's scene.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scene_file: Option<String>,
    },
    Action {
        action: Action,
    },
    Force {
        forward_force: f64,
        torque: f64,
        ticks: u64,
    },
    Step {
        ticks: u64,
    },
    GetObs {
        modalities: Vec<Modality>,
    },
    SetMode {
        mode: Mode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<NoiseConfig>,
    },
    ExportMesh {
        #[serde(default = "default_mesh_format")]
        format: MeshFormat,
    },
}

fn default_mesh_format() -> MeshFormat {
    MeshFormat::Ply
}

impl Request {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Request::Ping => MsgType::Ping,
            Request::Info => MsgType::Info,
            Request::Reset { .. } => MsgType::Reset,
            Request::Action { .. } => MsgType::Action,
            Request::Force { .. } => MsgType::Force,
            Request::Step { .. } => MsgType::Step,
            Request::GetObs { .. } => MsgType::GetObs,
            Request::SetMode { .. } => MsgType::SetMode,
            Request::ExportMesh { .. } => MsgType::ExportMesh,
        }
    }

    pub fn to_frame(&self) -> Frame {
        Frame::json(self.msg_type(), self)
    }

    /// Parses a request frame. An empty payload is accepted for commands
    /// without arguments.
    pub fn from_frame(frame: &Frame) -> Result<Request, String> {
        if !frame.msg_type.is_request() {
            return Err(format!("{:?} is not a request type", frame.msg_type));
        }
        let req: Request = if frame.payload.is_empty() {
            match frame.msg_type {
                MsgType::Ping => Request::Ping,
                MsgType::Info => Request::Info,
                t => return Err(format!("{t:?} needs a payload")),
            }
        } else {
            Request::from_json(&frame.payload)?
        };
        if req.msg_type() != frame.msg_type {
            return Err(format!("frame type {:?} carries a {:?} command", frame.msg_type, req.msg_type()));
        }
        Ok(req)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Request, String> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
    }
}

/// Header of an observation: what follows and how to read it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsHeader {
    pub modalities: Vec<Modality>,
    /// `[width, height]`.
    pub dims: [usize; 2],
    pub dtypes: Vec<String>,
    /// Byte length of each following buffer.
    pub sizes: Vec<usize>,
    pub mode: Mode,
    pub tick: u64,
    pub pose: PoseEstimate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Unparseable frame or payload. The server closes the connection after
    /// sending it.
    Protocol,
    /// Command not valid in the session's state, for example ACTION before RESET.
    State,
    EpisodeFinished,
    Config,
    Io,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct ErrorReply {
    pub kind: ErrorKind,
    pub message: String,
}

pub const ODOMETRY_PACKET_LEN: usize = 53;

/// One physics tick of odometry: `tick u64 | pos_x f64 | pos_y f64 | yaw f64
/// | vel_x f32 | vel_y f32 | accel_x f32 | accel_y f32 | angular_rate f32 |
/// collision u8`, little-endian, 53 bytes. Prefixed on the wire by nothing;
/// one datagram carries one packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdometryPacket {
    pub tick: u64,
    pub pos_x: f64,
    pub pos_y: f64,
    pub yaw: f64,
    pub vel_x: f32,
    pub vel_y: f32,
    pub accel_x: f32,
    pub accel_y: f32,
    pub angular_rate: f32,
    pub collision: bool,
}

impl OdometryPacket {
    pub fn to_bytes(&self) -> [u8; ODOMETRY_PACKET_LEN] {
        let mut b = [0u8; ODOMETRY_PACKET_LEN];
        b[0..8].copy_from_slice(&self.tick.to_le_bytes());
        b[8..16].copy_from_slice(&self.pos_x.to_le_bytes());
        b[16..24].copy_from_slice(&self.pos_y.to_le_bytes());
        b[24..32].copy_from_slice(&self.yaw.to_le_bytes());
        for (k, v) in [self.vel_x, self.vel_y, self.accel_x, self.accel_y, self.angular_rate].iter().enumerate() {
            b[32 + 4 * k..36 + 4 * k].copy_from_slice(&v.to_le_bytes());
        }
        b[52] = self.collision as u8;
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<OdometryPacket> {
        if b.len() != ODOMETRY_PACKET_LEN || b[52] > 1 {
            return None;
        }
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let f32_at = |i: usize| f32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        Some(OdometryPacket {
            tick: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            pos_x: f64_at(8),
            pos_y: f64_at(16),
            yaw: f64_at(24),
            vel_x: f32_at(32),
            vel_y: f32_at(36),
            accel_x: f32_at(40),
            accel_y: f32_at(44),
            angular_rate: f32_at(48),
            collision: b[52] == 1,
        })
    }
}

impl From<&Odometry> for OdometryPacket {
    fn from(o: &Odometry) -> Self {
        OdometryPacket {
            tick: o.tick,
            pos_x: o.position.x,
            pos_y: o.position.y,
            yaw: o.yaw,
            vel_x: o.velocity.x as f32,
            vel_y: o.velocity.y as f32,
            accel_x: o.acceleration.x as f32,
            accel_y: o.acceleration.y as f32,
            angular_rate: o.angular_rate as f32,
            collision: o.collision,
        }
    }
}
