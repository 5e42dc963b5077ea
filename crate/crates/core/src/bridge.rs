//! Best-effort message bus between the fire loop and the robot loop.
//!
//! Every topic is a single latest-value cell: publishing replaces the
//! previous envelope, reading returns the newest one without consuming it.
//! Neither side ever waits for the other. A [`DelayShim`] withholds
//! envelopes for a fixed time, and a length-prefixed TCP framing carries
//! envelopes between processes.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use arc_swap::ArcSwapOption;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{from_occupancy_message, to_occupancy_message, ThermalCostmap};
use crate::radiation::SensorReading;
use crate::robot::{Command, DepthImage, RgbImage, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    CameraRgb,
    CameraDepth,
    CameraPose,
    CameraComposite,
    SensorsThermal,
    CostmapThermal,
    RobotOdom,
    RobotCmd,
    TeleopSteering,
}

impl Topic {
    pub const ALL: [Topic; 9] = [
        Topic::CameraRgb,
        Topic::CameraDepth,
        Topic::CameraPose,
        Topic::CameraComposite,
        Topic::SensorsThermal,
        Topic::CostmapThermal,
        Topic::RobotOdom,
        Topic::RobotCmd,
        Topic::TeleopSteering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::CameraRgb => "camera/rgb",
            Topic::CameraDepth => "camera/depth",
            Topic::CameraPose => "camera/pose",
            Topic::CameraComposite => "camera/composite",
            Topic::SensorsThermal => "sensors/thermal",
            Topic::CostmapThermal => "costmap/thermal",
            Topic::RobotOdom => "robot/odom",
            Topic::RobotCmd => "robot/cmd",
            Topic::TeleopSteering => "teleop/steering",
        }
    }

    pub fn from_name(name: &str) -> Result<Topic, BusError> {
        Topic::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Which loop publishes on the topic.
    pub fn direction(self) -> Direction {
        match self {
            Topic::CameraComposite | Topic::SensorsThermal | Topic::CostmapThermal => {
                Direction::FireToRobot
            }
            _ => Direction::RobotToFire,
        }
    }

    fn accepts(self, p: &Payload) -> bool {
        matches!(
            (self, p),
            (Topic::CameraRgb, Payload::Rgb(_))
                | (Topic::CameraDepth, Payload::Depth(_))
                | (Topic::CameraPose, Payload::Pose(_))
                | (Topic::CameraComposite, Payload::Composite(_))
                | (Topic::SensorsThermal, Payload::Thermal(_))
                | (Topic::CostmapThermal, Payload::Costmap(_))
                | (Topic::RobotOdom, Payload::Odom(_))
                | (Topic::RobotCmd, Payload::Cmd(_))
                | (Topic::TeleopSteering, Payload::Steering(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    RobotToFire,
    FireToRobot,
    Both,
}

impl Direction {
    pub fn includes(self, d: Direction) -> bool {
        self == Direction::Both || self == d
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "robot-to-fire" => Ok(Direction::RobotToFire),
            "fire-to-robot" => Ok(Direction::FireToRobot),
            "both" => Ok(Direction::Both),
            _ => Err(format!(
                "unknown direction `{s}` (robot-to-fire, fire-to-robot, both)"
            )),
        }
    }
}

/// Camera pose: position and unit quaternion (x, y, z, w), tagged with the
/// triplet sequence number shared by the matching rgb and depth frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub triplet: u64,
    pub pose: [f64; 7],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    /// Triplet the fire was rendered against.
    pub source_seq: u64,
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub triplet: u64,
    pub image: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Rgb(Frame<RgbImage>),
    Depth(Frame<DepthImage>),
    Pose(CameraPose),
    Composite(Composite),
    Thermal(Vec<SensorReading>),
    Costmap(ThermalCostmap),
    Odom(RobotState),
    Cmd(Command),
    /// Steering angle, degrees.
    Steering(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub topic: Topic,
    pub seq: u64,
    /// Source-clock seconds.
    pub stamp: f64,
    pub payload: Payload,
}

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("payload does not match the schema of `{0}`")]
    SchemaMismatch(&'static str),
    #[error("stamp went backwards on `{topic}`: {stamp} < {last}")]
    StampRegression {
        topic: &'static str,
        stamp: f64,
        last: f64,
    },
    #[error("truncated frame")]
    Truncated,
    #[error("malformed frame: {0}")]
    Malformed(String),
}

struct LatestCell {
    slot: ArcSwapOption<Envelope>,
    next_seq: AtomicU64,
    delivered: AtomicU64,
}

/// Snapshot returned by [`Bus::latest`].
#[derive(Debug, Clone)]
pub struct Latest {
    pub envelope: Arc<Envelope>,
    /// s
    pub age: f64,
    pub stale: bool,
}

/// One latest-value cell per topic. Each topic has one writer; any number
/// of readers.
pub struct Bus {
    cells: Vec<LatestCell>,
    budgets: [f64; 9],
}

impl Default for Bus {
    fn default() -> Self {
        Bus::new(default_budgets(0.05, 0.01, 1.0 / 15.0))
    }
}

/// Staleness budgets at three times each publisher's nominal period.
pub fn default_budgets(fire_period: f64, robot_period: f64, camera_period: f64) -> [f64; 9] {
    let mut b = [0.0; 9];
    for t in Topic::ALL {
        let period = match t {
            Topic::CameraRgb | Topic::CameraDepth | Topic::CameraPose => camera_period,
            Topic::CameraComposite | Topic::SensorsThermal | Topic::CostmapThermal => fire_period,
            Topic::RobotOdom | Topic::RobotCmd => robot_period,
            Topic::TeleopSteering => 0.05,
        };
        b[t.index()] = 3.0 * period;
    }
    b
}

impl Bus {
    pub fn new(budgets: [f64; 9]) -> Self {
        Bus {
            cells: Topic::ALL
                .iter()
                .map(|_| LatestCell {
                    slot: ArcSwapOption::empty(),
                    next_seq: AtomicU64::new(1),
                    delivered: AtomicU64::new(0),
                })
                .collect(),
            budgets,
        }
    }

    pub fn budget(&self, topic: Topic) -> f64 {
        self.budgets[topic.index()]
    }

    /// Stamps a new envelope with the next sequence number and stores it.
    pub fn publish(
        &self,
        topic: Topic,
        payload: Payload,
        stamp: f64,
    ) -> Result<Arc<Envelope>, BusError> {
        if !topic.accepts(&payload) {
            return Err(BusError::SchemaMismatch(topic.name()));
        }
        let cell = &self.cells[topic.index()];
        if let Some(prev) = cell.slot.load().as_ref() {
            if stamp < prev.stamp {
                return Err(BusError::StampRegression {
                    topic: topic.name(),
                    stamp,
                    last: prev.stamp,
                });
            }
        }
        let seq = cell.next_seq.fetch_add(1, Ordering::Relaxed);
        let env = Arc::new(Envelope {
            topic,
            seq,
            stamp,
            payload,
        });
        cell.slot.store(Some(env.clone()));
        cell.delivered.fetch_add(1, Ordering::Relaxed);
        Ok(env)
    }

    pub fn publish_named(
        &self,
        name: &str,
        payload: Payload,
        stamp: f64,
    ) -> Result<Arc<Envelope>, BusError> {
        self.publish(Topic::from_name(name)?, payload, stamp)
    }

    /// Stores an envelope that was sequenced elsewhere (forwarded or
    /// received). Older or repeated sequence numbers are dropped so readers
    /// never see a regression; returns whether it was stored.
    pub fn deliver(&self, env: Arc<Envelope>) -> bool {
        let cell = &self.cells[env.topic.index()];
        if let Some(prev) = cell.slot.load().as_ref() {
            if env.seq <= prev.seq {
                return false;
            }
        }
        cell.slot.store(Some(env));
        cell.delivered.fetch_add(1, Ordering::Relaxed);
        true
    }

    pub fn latest(&self, topic: Topic, now: f64) -> Option<Latest> {
        let env = self.cells[topic.index()].slot.load_full()?;
        let age = now - env.stamp;
        Some(Latest {
            stale: age > self.budgets[topic.index()],
            age,
            envelope: env,
        })
    }

    /// Number of envelopes stored on the topic so far.
    pub fn count(&self, topic: Topic) -> u64 {
        self.cells[topic.index()].delivered.load(Ordering::Relaxed)
    }

    pub fn counts(&self) -> Vec<(&'static str, u64)> {
        Topic::ALL
            .iter()
            .map(|&t| (t.name(), self.count(t)))
            .collect()
    }
}

/// Seconds on some monotonic time base.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Simulated time advanced explicitly by a scheduler.
#[derive(Debug, Clone, Default)]
pub struct SimClock(Arc<AtomicU64>);

impl SimClock {
    pub fn set(&self, t: f64) {
        self.0.store(t.to_bits(), Ordering::Release);
    }
}

impl Clock for SimClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }
}

/// Wall-clock seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock {
            origin: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        WallClock::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Withholds envelopes for `delay` seconds, releasing them in the order
/// they were pushed.
#[derive(Debug, Default)]
pub struct DelayShim {
    pub delay: f64,
    queue: VecDeque<(f64, Arc<Envelope>)>,
}

impl DelayShim {
    pub fn new(delay_ms: f64) -> Self {
        DelayShim {
            delay: delay_ms.max(0.0) / 1000.0,
            queue: VecDeque::new(),
        }
    }

    pub fn push(&mut self, env: Arc<Envelope>, now: f64) {
        self.queue.push_back((now + self.delay, env));
    }

    /// Oldest envelope if it is due at `now`.
    pub fn pop_due(&mut self, now: f64) -> Option<Arc<Envelope>> {
        if self.queue.front()?.0 > now {
            return None;
        }
        self.queue.pop_front().map(|(_, env)| env)
    }

    /// Releases every envelope due at `now` into `dest`; returns how many.
    pub fn pump(&mut self, now: f64, dest: &Bus) -> usize {
        let mut n = 0;
        while let Some(env) = self.pop_due(now) {
            dest.deliver(env);
            n += 1;
        }
        n
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

// ---- wire format ----

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(b: &mut Vec<u8>, v: u64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(b: &mut Vec<u8>, v: f64) {
    b.extend_from_slice(&v.to_le_bytes());
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    put_u32(b, s.len() as u32);
    b.extend_from_slice(s.as_bytes());
}

fn put_rgb(b: &mut Vec<u8>, img: &RgbImage) {
    put_u32(b, img.width);
    put_u32(b, img.height);
    b.extend_from_slice(&img.data);
}

struct WireReader<'a> {
    buf: &'a [u8],
}

impl<'a> WireReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BusError> {
        if self.buf.len() < n {
            return Err(BusError::Truncated);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }
    fn u8(&mut self) -> Result<u8, BusError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, BusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, BusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, BusError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, BusError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| BusError::Malformed("utf-8".into()))
    }
    fn dims(&mut self, bytes_per_px: usize) -> Result<(u32, u32, usize), BusError> {
        let w = self.u32()?;
        let h = self.u32()?;
        let n = (w as usize)
            .checked_mul(h as usize)
            .and_then(|n| n.checked_mul(bytes_per_px))
            .ok_or_else(|| BusError::Malformed("image size".into()))?;
        Ok((w, h, n))
    }
    fn rgb(&mut self) -> Result<RgbImage, BusError> {
        let (width, height, n) = self.dims(3)?;
        Ok(RgbImage {
            width,
            height,
            data: self.take(n)?.to_vec(),
        })
    }
    fn finish(self) -> Result<(), BusError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(BusError::Malformed(format!(
                "{} trailing bytes",
                self.buf.len()
            )))
        }
    }
}

/// Payload bytes. Layouts (little endian):
/// rgb/composite: `[triplet|source_seq u64] width u32, height u32, 3*w*h u8`;
/// depth: `triplet u64, width u32, height u32, w*h f32` meters;
/// pose: `triplet u64` then 7 f64 (x, y, z, qx, qy, qz, qw);
/// thermal: `count u32`, then per sensor `id (u32 len + UTF-8), raw, filtered, dose` as f64;
/// costmap: irradiance scale f64, then the occupancy message layout; odom: x, y, heading, speed, stamp f64;
/// cmd: `tag u8` (0 stop, 1 twist, 2 heading, 3 velocity) + two f64; steering: f64 degrees.
pub fn encode_payload(p: &Payload) -> Vec<u8> {
    let mut b = Vec::new();
    match p {
        Payload::Rgb(f) => {
            put_u64(&mut b, f.triplet);
            put_rgb(&mut b, &f.image);
        }
        Payload::Composite(c) => {
            put_u64(&mut b, c.source_seq);
            put_rgb(&mut b, &c.image);
        }
        Payload::Depth(f) => {
            put_u64(&mut b, f.triplet);
            put_u32(&mut b, f.image.width);
            put_u32(&mut b, f.image.height);
            for d in &f.image.data {
                b.extend_from_slice(&d.to_le_bytes());
            }
        }
        Payload::Pose(p) => {
            put_u64(&mut b, p.triplet);
            for v in p.pose {
                put_f64(&mut b, v);
            }
        }
        Payload::Thermal(rs) => {
            put_u32(&mut b, rs.len() as u32);
            for r in rs {
                put_str(&mut b, &r.id);
                put_f64(&mut b, r.raw);
                put_f64(&mut b, r.filtered);
                put_f64(&mut b, r.dose);
            }
        }
        Payload::Costmap(m) => {
            b.extend_from_slice(&m.irradiance_scale.to_le_bytes());
            b.extend(to_occupancy_message(m, 0.0, "map"));
        }
        Payload::Odom(s) => {
            for v in [s.x, s.y, s.heading, s.speed, s.stamp] {
                put_f64(&mut b, v);
            }
        }
        Payload::Cmd(c) => {
            let (tag, a, z) = match *c {
                Command::Stop => (0u8, 0.0, 0.0),
                Command::Twist { linear, angular } => (1, linear, angular),
                Command::Heading { heading, speed } => (2, heading, speed),
                Command::Velocity { vx, vy } => (3, vx, vy),
            };
            b.push(tag);
            put_f64(&mut b, a);
            put_f64(&mut b, z);
        }
        Payload::Steering(d) => put_f64(&mut b, *d),
    }
    b
}

pub fn decode_payload(topic: Topic, bytes: &[u8]) -> Result<Payload, BusError> {
    let mut r = WireReader { buf: bytes };
    let p = match topic {
        Topic::CameraRgb => {
            let triplet = r.u64()?;
            Payload::Rgb(Frame {
                triplet,
                image: r.rgb()?,
            })
        }
        Topic::CameraComposite => {
            let source_seq = r.u64()?;
            Payload::Composite(Composite {
                source_seq,
                image: r.rgb()?,
            })
        }
        Topic::CameraDepth => {
            let triplet = r.u64()?;
            let (width, height, n) = r.dims(4)?;
            let data = r
                .take(n)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Payload::Depth(Frame {
                triplet,
                image: DepthImage {
                    width,
                    height,
                    data,
                },
            })
        }
        Topic::CameraPose => {
            let triplet = r.u64()?;
            let mut pose = [0.0; 7];
            for v in &mut pose {
                *v = r.f64()?;
            }
            Payload::Pose(CameraPose { triplet, pose })
        }
        Topic::SensorsThermal => {
            let n = r.u32()? as usize;
            let mut rs = Vec::with_capacity(n.min(64));
            for _ in 0..n {
                rs.push(SensorReading {
                    id: r.string()?,
                    raw: r.f64()?,
                    filtered: r.f64()?,
                    dose: r.f64()?,
                });
            }
            Payload::Thermal(rs)
        }
        Topic::CostmapThermal => {
            let scale = r.f64()?;
            let msg = from_occupancy_message(r.take(r.buf.len())?, scale)
                .map_err(|e| BusError::Malformed(e.to_string()))?;
            Payload::Costmap(msg.map)
        }
        Topic::RobotOdom => Payload::Odom(RobotState {
            x: r.f64()?,
            y: r.f64()?,
            heading: r.f64()?,
            speed: r.f64()?,
            stamp: r.f64()?,
        }),
        Topic::RobotCmd => {
            let tag = r.u8()?;
            let (a, z) = (r.f64()?, r.f64()?);
            Payload::Cmd(match tag {
                0 => Command::Stop,
                1 => Command::Twist {
                    linear: a,
                    angular: z,
                },
                2 => Command::Heading {
                    heading: a,
                    speed: z,
                },
                3 => Command::Velocity { vx: a, vy: z },
                t => return Err(BusError::Malformed(format!("command tag {t}"))),
            })
        }
        Topic::TeleopSteering => Payload::Steering(r.f64()?),
    };
    r.finish()?;
    Ok(p)
}

/// Envelope body: `topic (u32 len + UTF-8), seq u64, stamp f64, payload`.
pub fn encode_envelope(env: &Envelope) -> Vec<u8> {
    let mut b = Vec::new();
    put_str(&mut b, env.topic.name());
    put_u64(&mut b, env.seq);
    put_f64(&mut b, env.stamp);
    b.extend(encode_payload(&env.payload));
    b
}

pub fn decode_envelope(bytes: &[u8]) -> Result<Envelope, BusError> {
    let mut r = WireReader { buf: bytes };
    let topic = Topic::from_name(&r.string()?)?;
    let seq = r.u64()?;
    let stamp = r.f64()?;
    let payload = decode_payload(topic, r.buf)?;
    Ok(Envelope {
        topic,
        seq,
        stamp,
        payload,
    })
}

/// Largest accepted frame body.
pub const MAX_FRAME: usize = 64 << 20;

/// Writes a 4-byte little-endian length followed by `body`.
pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one length-prefixed frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {n} bytes"),
        ));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

/// Client side of the single-round clock handshake: sends the local time,
/// receives the peer's time and returns `peer - local` estimated at the
/// midpoint of the round trip.
pub fn handshake_client(stream: &mut TcpStream, clock: &dyn Clock) -> io::Result<f64> {
    let t0 = clock.now();
    write_frame(stream, &t0.to_le_bytes())?;
    let reply = read_frame(stream)?
        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "handshake"))?;
    let t1 = clock.now();
    let peer = f64::from_le_bytes(
        reply
            .as_slice()
            .try_into()
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "handshake"))?,
    );
    Ok(peer - 0.5 * (t0 + t1))
}

/// Server side of the handshake: answers with the local time.
pub fn handshake_server(stream: &mut TcpStream, clock: &dyn Clock) -> io::Result<()> {
    read_frame(stream)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "handshake"))?;
    write_frame(stream, &clock.now().to_le_bytes())
}

/// Sends envelopes over a TCP stream.
pub struct TcpSender {
    stream: TcpStream,
}

impl TcpSender {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpSender { stream })
    }

    pub fn send(&mut self, env: &Envelope) -> io::Result<()> {
        write_frame(&mut self.stream, &encode_envelope(env))
    }
}

/// Receives envelopes until the peer closes and delivers them into `bus`,
/// shifting stamps by `-offset` (peer clock minus local clock) so ages are
/// measured on the local clock. Returns the number delivered.
pub fn receive_into(mut stream: TcpStream, bus: &Bus, offset: f64) -> io::Result<u64> {
    let mut n = 0;
    while let Some(body) = read_frame(&mut stream)? {
        let mut env =
            decode_envelope(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        env.stamp -= offset;
        if bus.deliver(Arc::new(env)) {
            n += 1;
        }
    }
    Ok(n)
}
