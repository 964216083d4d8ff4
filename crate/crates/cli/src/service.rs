//! Live playback over TCP: newline-delimited JSON in both directions.
//!
//! A single ticker thread owns the [`Player`]. Reader threads forward parsed
//! client lines to it over a channel; it applies them between ticks, steps the
//! player on a wall-clock schedule and fans frames out to per-client bounded
//! queues that shed their oldest frames when a client falls behind.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use phasemotion::pae::ModelConfig;
use phasemotion::runtime::{Command, Frame, Mode, Player};
use serde::{Deserialize, Serialize};

/// Read-only queries answered on the same stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    ListMotions,
    GetConfig,
    GetState,
}

/// One line of client input.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientMessage {
    Request(Request),
    Command(Command),
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self, String> {
        if let Ok(r) = serde_json::from_str::<Request>(line) {
            return Ok(ClientMessage::Request(r));
        }
        serde_json::from_str::<Command>(line)
            .map(ClientMessage::Command)
            .map_err(|e| format!("malformed message: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub playing: bool,
    pub motion: Option<String>,
    pub cursor: Option<f64>,
    pub freq_scale: f64,
    pub mode: Mode,
    pub in_transition: bool,
    pub frames: u64,
}

/// One line of server output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Frame),
    /// A command was applied; it first affects frame number `tick`.
    Ack {
        command: String,
        tick: u64,
    },
    Motions {
        motions: Vec<String>,
    },
    Config {
        model: ModelConfig,
        period_s: f64,
    },
    State(SessionState),
    /// Frames discarded for this client so far.
    Dropped {
        count: u64,
    },
    Error {
        message: String,
    },
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Play { .. } => "play",
        Command::Stop => "stop",
        Command::Transition { .. } => "transition",
        Command::FreqScale { .. } => "freq_scale",
        Command::Mode { .. } => "mode",
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceOptions {
    pub period: Duration,
    /// Frames buffered per client before the oldest are dropped.
    pub queue_capacity: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            period: Duration::from_millis(10),
            queue_capacity: 256,
        }
    }
}

struct Outgoing {
    line: String,
    is_frame: bool,
}

#[derive(Default)]
struct QueueInner {
    items: VecDeque<Outgoing>,
    frames: usize,
    dropped_total: u64,
    dropped_unreported: bool,
    closed: bool,
}

/// Bounded per-client outbox; only frames are ever discarded.
struct ClientQueue {
    inner: Mutex<QueueInner>,
    ready: Condvar,
    capacity: usize,
}

impl ClientQueue {
    fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new(QueueInner::default()),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    fn push(&self, line: String, is_frame: bool) {
        let mut q = self.inner.lock().expect("queue lock");
        if q.closed {
            return;
        }
        if is_frame {
            if q.frames >= self.capacity {
                if let Some(pos) = q.items.iter().position(|o| o.is_frame) {
                    q.items.remove(pos);
                    q.frames -= 1;
                    q.dropped_total += 1;
                    q.dropped_unreported = true;
                }
            }
            q.frames += 1;
        }
        q.items.push_back(Outgoing { line, is_frame });
        self.ready.notify_one();
    }

    /// Next line to send (a drop notice first, when due), or `None` on timeout/close.
    fn pop(&self, timeout: Duration) -> Option<String> {
        let mut q = self.inner.lock().expect("queue lock");
        if q.items.is_empty() && !q.closed {
            q = self.ready.wait_timeout(q, timeout).expect("queue lock").0;
        }
        if q.dropped_unreported {
            q.dropped_unreported = false;
            let msg = ServerMessage::Dropped {
                count: q.dropped_total,
            };
            return Some(serde_json::to_string(&msg).expect("serializable"));
        }
        let out = q.items.pop_front()?;
        if out.is_frame {
            q.frames -= 1;
        }
        Some(out.line)
    }

    fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    fn is_closed(&self) -> bool {
        self.inner.lock().expect("queue lock").closed
    }
}

type Registry = Arc<Mutex<Vec<(u64, Arc<ClientQueue>)>>>;

/// A running service; dropping it shuts the service down.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    /// Blocks until the service stops (for the CLI).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

/// Starts accepting clients on `listener` and ticking `player`.
pub fn start(
    player: Player,
    listener: TcpListener,
    opts: ServiceOptions,
) -> io::Result<ServiceHandle> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let registry: Registry = Arc::default();
    let (tx, rx) = mpsc::channel::<(u64, String)>();

    let ticker = {
        let (stop, registry) = (stop.clone(), registry.clone());
        thread::Builder::new()
            .name("ticker".into())
            .spawn(move || run_ticker(player, rx, registry, stop, opts))?
    };
    let acceptor = {
        let stop = stop.clone();
        thread::Builder::new()
            .name("acceptor".into())
            .spawn(move || accept_loop(listener, tx, registry, stop, opts))?
    };
    Ok(ServiceHandle {
        addr,
        stop,
        threads: vec![ticker, acceptor],
    })
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<(u64, String)>,
    registry: Registry,
    stop: Arc<AtomicBool>,
    opts: ServiceOptions,
) {
    let next_id = AtomicU64::new(0);
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client {peer} connected");
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let queue = Arc::new(ClientQueue::new(opts.queue_capacity));
                registry
                    .lock()
                    .expect("registry lock")
                    .push((id, queue.clone()));
                match spawn_client(stream, id, queue, tx.clone(), stop.clone()) {
                    Ok(handles) => clients.extend(handles),
                    Err(e) => log::warn!("client {peer}: {e}"),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5))
            }
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
    for (_, q) in registry.lock().expect("registry lock").iter() {
        q.close();
    }
    for h in clients {
        let _ = h.join();
    }
}

fn spawn_client(
    stream: TcpStream,
    id: u64,
    queue: Arc<ClientQueue>,
    tx: Sender<(u64, String)>,
    stop: Arc<AtomicBool>,
) -> io::Result<Vec<JoinHandle<()>>> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_millis(50)))?;
    let mut write_half = stream.try_clone()?;
    let reader_queue = queue.clone();
    let reader_stop = stop.clone();
    let reader = thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        while !reader_stop.load(Ordering::SeqCst) && !reader_queue.is_closed() {
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if line.ends_with('\n') {
                        let msg = line.trim();
                        if !msg.is_empty() && tx.send((id, msg.to_string())).is_err() {
                            break;
                        }
                        line.clear();
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) => {}
                Err(_) => break,
            }
        }
        reader_queue.close();
    });
    let writer = thread::spawn(move || {
        while !stop.load(Ordering::SeqCst) {
            match queue.pop(Duration::from_millis(50)) {
                Some(line) => {
                    if writeln!(write_half, "{line}").is_err() {
                        break;
                    }
                }
                None if queue.is_closed() => break,
                None => {}
            }
        }
        queue.close();
        let _ = write_half.shutdown(std::net::Shutdown::Both);
    });
    Ok(vec![reader, writer])
}

fn state_of(player: &Player) -> SessionState {
    let s = player.state();
    SessionState {
        playing: s.playing(),
        motion: s.source().map(|src| player.clips()[src.clip].name.clone()),
        cursor: s.source().map(|src| src.cursor),
        freq_scale: s.freq_scale,
        mode: s.mode,
        in_transition: s.in_transition(),
        frames: s.frames,
    }
}

/// Answers one client line; commands mutate the player.
pub fn handle_line(player: &mut Player, line: &str, period: Duration) -> ServerMessage {
    match ClientMessage::parse(line) {
        Err(message) => ServerMessage::Error { message },
        Ok(ClientMessage::Request(Request::ListMotions)) => ServerMessage::Motions {
            motions: player.motion_names(),
        },
        Ok(ClientMessage::Request(Request::GetConfig)) => ServerMessage::Config {
            model: player.model().config().clone(),
            period_s: period.as_secs_f64(),
        },
        Ok(ClientMessage::Request(Request::GetState)) => ServerMessage::State(state_of(player)),
        Ok(ClientMessage::Command(cmd)) => match player.apply(&cmd) {
            Ok(()) => ServerMessage::Ack {
                command: command_name(&cmd).into(),
                tick: player.state().frames,
            },
            Err(e) => ServerMessage::Error {
                message: e.to_string(),
            },
        },
    }
}

fn run_ticker(
    mut player: Player,
    rx: Receiver<(u64, String)>,
    registry: Registry,
    stop: Arc<AtomicBool>,
    opts: ServiceOptions,
) {
    let mut next = Instant::now() + opts.period;
    while !stop.load(Ordering::SeqCst) {
        while let Ok((id, line)) = rx.try_recv() {
            let reply = handle_line(&mut player, &line, opts.period);
            let text = serde_json::to_string(&reply).expect("serializable");
            if let Some((_, q)) = registry
                .lock()
                .expect("registry lock")
                .iter()
                .find(|(i, _)| *i == id)
            {
                q.push(text, false);
            }
        }
        match player.tick() {
            Ok(Some(frame)) => {
                let text =
                    serde_json::to_string(&ServerMessage::Frame(frame)).expect("serializable");
                let mut reg = registry.lock().expect("registry lock");
                reg.retain(|(_, q)| !q.is_closed());
                for (_, q) in reg.iter() {
                    q.push(text.clone(), true);
                }
            }
            Ok(None) => {}
            Err(e) => {
                log::error!("tick failed: {e}");
                let text = serde_json::to_string(&ServerMessage::Error {
                    message: e.to_string(),
                })
                .expect("serializable");
                for (_, q) in registry.lock().expect("registry lock").iter() {
                    q.push(text.clone(), false);
                }
                let _ = player.apply(&Command::Stop);
            }
        }
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
            next += opts.period;
        } else {
            // overran: keep the period, do not burst to catch up
            next = now + opts.period;
        }
    }
}
