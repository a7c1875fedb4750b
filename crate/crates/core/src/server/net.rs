//! Socket front end: one acceptor, one reader and one writer thread per
//! connection, and a single event loop thread that owns [`ServerCore`].

use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::{self, JoinHandle};

use thiserror::Error;

use super::{AuthConfig, Outbox, ServerCore, SessionId};
use crate::braille::BrailleTable;
use crate::driver::{DeviceEvent, Driver, DriverError};
use crate::proto::{encode_packet, DecodeError, FrameBuffer, Packet};
use crate::transport::{Address, Listener, Stream};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("driver: {0}")]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum Event {
    Connected(SessionId, Arc<Outbox>),
    Packet(SessionId, Packet),
    BadFrame(SessionId, DecodeError),
    Disconnected(SessionId),
    Device(DeviceEvent),
    Shutdown,
}

pub struct Server {
    core: ServerCore,
    listener: Listener,
    device_events: mpsc::Receiver<DeviceEvent>,
}

impl Server {
    /// Opens `driver` and prepares to serve on `listener`. `device_events`
    /// is the receiving end of the sink the driver was built with.
    pub fn new(
        driver: Box<dyn Driver>,
        device_events: mpsc::Receiver<DeviceEvent>,
        listener: Listener,
        auth: AuthConfig,
        table: BrailleTable,
    ) -> Result<Server, ServerError> {
        Ok(Server {
            core: ServerCore::new(driver, table, auth)?,
            listener,
            device_events,
        })
    }

    pub fn local_address(&self) -> std::io::Result<Address> {
        self.listener.local_address()
    }

    /// Serves on background threads until the returned handle is shut
    /// down or dropped.
    pub fn spawn(self) -> Result<ServerHandle, ServerError> {
        let address = self.listener.local_address()?;
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = spawn_acceptor(self.listener, tx.clone(), Arc::clone(&stop))?;
        spawn_device_forwarder(self.device_events, tx.clone())?;
        let core = self.core;
        let event_loop = thread::Builder::new()
            .name("brld-events".into())
            .spawn(move || event_loop(core, rx))?;
        Ok(ServerHandle {
            address,
            events: tx,
            stop,
            threads: vec![event_loop, acceptor],
        })
    }

    /// Serves on the calling thread, forever.
    pub fn run(self) -> Result<(), ServerError> {
        let handle = self.spawn()?;
        handle.wait();
        Ok(())
    }
}

pub struct ServerHandle {
    address: Address,
    events: mpsc::Sender<Event>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn address(&self) -> &Address {
        &self.address
    }

    fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Closes every session, closes the driver and stops the threads.
    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        if self.threads.is_empty() {
            return;
        }
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.events.send(Event::Shutdown);
        // unblock accept()
        let _ = Stream::connect(&self.address);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn event_loop(mut core: ServerCore, rx: mpsc::Receiver<Event>) {
    let mut sessions: Vec<Arc<Outbox>> = Vec::new();
    for event in rx {
        match event {
            Event::Connected(id, outbox) => {
                log::debug!("session {id} connected");
                sessions.retain(|o| !o.is_closed());
                sessions.push(Arc::clone(&outbox));
                core.connect(id, outbox);
            }
            Event::Packet(id, packet) => {
                log::trace!("session {id}: {packet:?}");
                core.handle_packet(id, packet);
            }
            Event::BadFrame(id, err) => {
                log::debug!("session {id}: {err}");
                core.bad_frame(id, &err);
            }
            Event::Disconnected(id) => {
                log::debug!("session {id} disconnected");
                core.disconnect(id);
            }
            Event::Device(ev) => core.device_event(ev),
            Event::Shutdown => break,
        }
    }
    for outbox in sessions {
        outbox.close();
    }
    if core.driver().is_open() {
        let _ = core.driver_mut().close();
    }
}

fn spawn_acceptor(
    listener: Listener,
    events: mpsc::Sender<Event>,
    stop: Arc<AtomicBool>,
) -> std::io::Result<JoinHandle<()>> {
    let next_id = AtomicU64::new(1);
    thread::Builder::new()
        .name("brld-accept".into())
        .spawn(move || loop {
            let stream = match listener.accept() {
                Ok(s) => s,
                Err(e) => {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let id = next_id.fetch_add(1, Ordering::Relaxed);
            if let Err(e) = start_session(id, stream, &events) {
                log::warn!("session {id}: {e}");
            }
        })
}

fn start_session(
    id: SessionId,
    stream: Stream,
    events: &mpsc::Sender<Event>,
) -> std::io::Result<()> {
    let writer_stream = stream.try_clone()?;
    let outbox = Outbox::new();
    // Connected must be queued before any packet the reader forwards.
    if events
        .send(Event::Connected(id, Arc::clone(&outbox)))
        .is_err()
    {
        return Ok(());
    }
    thread::Builder::new()
        .name(format!("brld-write-{id}"))
        .spawn(move || write_loop(writer_stream, outbox))?;
    let events = events.clone();
    thread::Builder::new()
        .name(format!("brld-read-{id}"))
        .spawn(move || read_loop(id, stream, events))?;
    Ok(())
}

fn write_loop(mut stream: Stream, outbox: Arc<Outbox>) {
    while let Some(packet) = outbox.pop() {
        let frame = match encode_packet(&packet) {
            Ok(f) => f,
            Err(e) => {
                log::error!("cannot encode {packet:?}: {e}");
                continue;
            }
        };
        if stream.write_all(&frame).is_err() {
            outbox.close();
            break;
        }
    }
    let _ = stream.shutdown();
}

fn read_loop(id: SessionId, mut stream: Stream, events: mpsc::Sender<Event>) {
    let mut frames = FrameBuffer::new();
    let mut buf = [0u8; 8192];
    'outer: loop {
        let n = match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        frames.extend(&buf[..n]);
        loop {
            match frames.next_packet() {
                Ok(Some(p)) => {
                    if events.send(Event::Packet(id, p)).is_err() {
                        break 'outer;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let fatal = e.frame_len.is_none();
                    if events.send(Event::BadFrame(id, e)).is_err() || fatal {
                        break 'outer;
                    }
                }
            }
        }
    }
    let _ = events.send(Event::Disconnected(id));
}

fn spawn_device_forwarder(
    device_events: mpsc::Receiver<DeviceEvent>,
    events: mpsc::Sender<Event>,
) -> std::io::Result<()> {
    thread::Builder::new()
        .name("brld-device".into())
        .spawn(move || {
            for ev in device_events {
                if events.send(Event::Device(ev)).is_err() {
                    break;
                }
            }
        })?;
    Ok(())
}
