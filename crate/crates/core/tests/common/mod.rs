#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use braillemux::braille::BrailleTable;
use braillemux::driver::simscript::{Injector, SimScript, SimScriptConfig};
use braillemux::focus::{FocusPath, KeyMode, MAX_DEPTH};
use braillemux::proto::{
    encode_packet, ErrorCode, FrameBuffer, KeyKind, Mechanism, Packet, MAX_AUTH_PAYLOAD,
    MAX_NAME_LEN,
};
use braillemux::server::{AuthConfig, Server, ServerHandle};
use braillemux::transport::{Address, Listener, Stream};
use proptest::prelude::*;
use std::io::{Read, Write};
use std::path::PathBuf;
use tempfile::TempDir;

/// A daemon on an ephemeral TCP port, driving a simscript device.
pub struct Live {
    pub handle: ServerHandle,
    pub injector: Injector,
    pub log: PathBuf,
    pub received: PathBuf,
    pub dir: TempDir,
}

impl Live {
    pub fn start(auth: AuthConfig, cols: u16) -> Live {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SimScriptConfig::in_dir(dir.path());
        cfg.cols = cols;
        let (tx, rx) = mpsc::channel();
        let driver = SimScript::new(cfg, tx).unwrap();
        let injector = driver.injector();
        let log = driver.log_path().to_owned();
        let received = driver.received_path().to_owned();
        let listener = Listener::bind(&"tcp:127.0.0.1:0".parse().unwrap()).unwrap();
        let server = Server::new(
            Box::new(driver),
            rx,
            listener,
            auth,
            BrailleTable::default(),
        )
        .unwrap();
        Live {
            handle: server.spawn().unwrap(),
            injector,
            log,
            received,
            dir,
        }
    }

    pub fn open() -> Live {
        Live::start(AuthConfig::Open, 40)
    }

    pub fn addr(&self) -> Address {
        self.handle.address().clone()
    }

    pub fn log_lines(&self) -> Vec<String> {
        std::fs::read_to_string(&self.log)
            .unwrap_or_default()
            .lines()
            .map(str::to_owned)
            .collect()
    }

    pub fn w_lines(&self) -> Vec<String> {
        self.log_lines()
            .into_iter()
            .filter(|l| l.starts_with("W "))
            .collect()
    }

    /// Polls the log until `pred` holds or `timeout` passes.
    pub fn wait_log(&self, timeout: Duration, pred: impl Fn(&[String]) -> bool) -> bool {
        let end = Instant::now() + timeout;
        loop {
            if pred(&self.log_lines()) {
                return true;
            }
            if Instant::now() >= end {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }
}

/// A bare protocol peer that sees every packet the daemon sends.
pub struct Wire {
    stream: Stream,
    frames: FrameBuffer,
}

impl Wire {
    pub fn connect(addr: &Address) -> Wire {
        Wire {
            stream: Stream::connect(addr).unwrap(),
            frames: FrameBuffer::new(),
        }
    }

    /// Connects and completes the handshake with mechanism NONE.
    pub fn authed(addr: &Address) -> Wire {
        let mut w = Wire::connect(addr);
        assert!(matches!(w.recv(), Some(Packet::Version { version: 1 })));
        assert!(matches!(w.recv(), Some(Packet::AuthOffer { .. })));
        w.send(&Packet::VersionAck { version: 1 });
        w.send(&Packet::AuthReq {
            mechanism: Mechanism::None,
            payload: vec![],
        });
        assert_eq!(w.recv(), Some(Packet::AuthOk));
        w
    }

    pub fn send(&mut self, p: &Packet) {
        self.stream.write_all(&encode_packet(p).unwrap()).unwrap();
    }

    pub fn send_bytes(&mut self, b: &[u8]) {
        self.stream.write_all(b).unwrap();
    }

    /// Next packet within 2 s; None on timeout or EOF.
    pub fn recv(&mut self) -> Option<Packet> {
        self.recv_within(Duration::from_secs(2))
    }

    pub fn recv_within(&mut self, timeout: Duration) -> Option<Packet> {
        let end = Instant::now() + timeout;
        let mut buf = [0u8; 4096];
        loop {
            if let Ok(Some(p)) = self.frames.next_packet() {
                return Some(p);
            }
            let left = end.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return None;
            }
            self.stream.set_read_timeout(Some(left)).unwrap();
            match self.stream.read(&mut buf) {
                Ok(0) => return None,
                Ok(n) => self.frames.extend(&buf[..n]),
                Err(_) => return None,
            }
        }
    }

    /// Everything that arrives within `quiet`.
    pub fn drain(&mut self, quiet: Duration) -> Vec<Packet> {
        let mut out = Vec::new();
        while let Some(p) = self.recv_within(quiet) {
            out.push(p);
        }
        out
    }

    pub fn request(&mut self, p: &Packet) -> Packet {
        self.send(p);
        self.recv().expect("no reply")
    }

    pub fn enter_tty(&mut self, path: &[u32]) {
        let reply = self.request(&Packet::EnterTty {
            path: FocusPath::new(path.to_vec()).unwrap(),
            key_mode: KeyMode::Commands,
        });
        assert_eq!(reply, Packet::Ack { acked_type: 0x20 });
    }

    pub fn set_focus(&mut self, prefix: &[u32], child: u32) {
        let reply = self.request(&Packet::SetFocus {
            prefix: FocusPath::new(prefix.to_vec()).unwrap(),
            active_child: child,
        });
        assert_eq!(reply, Packet::Ack { acked_type: 0x40 });
    }
}

pub fn arb_path(max: usize) -> impl Strategy<Value = FocusPath> {
    prop::collection::vec(any::<u32>(), 0..=max).prop_map(|v| FocusPath::new(v).unwrap())
}

fn arb_name() -> impl Strategy<Value = String> {
    prop::collection::vec(any::<char>(), 0..16)
        .prop_map(|v| v.into_iter().collect::<String>())
        .prop_filter("name fits", |s| s.len() <= MAX_NAME_LEN)
}

fn arb_bytes(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..=max)
}

pub fn arb_key_mode() -> impl Strategy<Value = KeyMode> {
    prop_oneof![Just(KeyMode::Commands), Just(KeyMode::Raw)]
}

pub fn arb_mechanism() -> impl Strategy<Value = Mechanism> {
    prop_oneof![Just(Mechanism::None), Just(Mechanism::KeyFile)]
}

/// Every packet the codec can carry.
pub fn arb_packet() -> impl Strategy<Value = Packet> {
    prop_oneof![
        any::<u32>().prop_map(|version| Packet::Version { version }),
        any::<u32>().prop_map(|version| Packet::VersionAck { version }),
        prop::collection::vec(arb_mechanism(), 0..4)
            .prop_map(|mechanisms| Packet::AuthOffer { mechanisms }),
        (arb_mechanism(), arb_bytes(MAX_AUTH_PAYLOAD))
            .prop_map(|(mechanism, payload)| Packet::AuthReq { mechanism, payload }),
        Just(Packet::AuthOk),
        any::<u32>().prop_map(|acked_type| Packet::Ack { acked_type }),
        Just(Packet::GetDriverName),
        arb_name().prop_map(|name| Packet::DriverName { name }),
        Just(Packet::GetDisplaySize),
        (any::<u32>(), any::<u32>()).prop_map(|(cols, rows)| Packet::DisplaySize { cols, rows }),
        (arb_path(MAX_DEPTH), arb_key_mode())
            .prop_map(|(path, key_mode)| Packet::EnterTty { path, key_mode }),
        Just(Packet::LeaveTty),
        (any::<u32>(), ".{0,64}").prop_map(|(cursor, text)| Packet::WriteText { cursor, text }),
        arb_bytes(128).prop_map(|cells| Packet::WriteDots { cells }),
        (
            prop_oneof![Just(KeyKind::Command), Just(KeyKind::Raw)],
            any::<u64>(),
            any::<u32>()
        )
            .prop_map(|(kind, code, arg)| Packet::KeyEvent { kind, code, arg }),
        arb_name().prop_map(|driver_name| Packet::EnterRaw { driver_name }),
        Just(Packet::LeaveRaw),
        arb_bytes(256).prop_map(|data| Packet::RawPacket { data }),
        arb_name().prop_map(|driver_name| Packet::Suspend { driver_name }),
        Just(Packet::Resume),
        (arb_path(MAX_DEPTH), any::<u32>()).prop_map(|(prefix, active_child)| Packet::SetFocus {
            prefix,
            active_child
        }),
        (prop::sample::select(ErrorCode::ALL.to_vec()), any::<u32>()).prop_map(
            |(code, offending_type)| Packet::Error {
                code,
                offending_type
            }
        ),
    ]
}

// ---- focus oracle ----

/// Reports as a plain list, later entries overriding earlier ones.
pub fn oracle_active(reports: &[(Vec<u32>, u32)]) -> Vec<u32> {
    let mut latest: HashMap<Vec<u32>, u32> = HashMap::new();
    for (p, c) in reports {
        latest.insert(p.clone(), *c);
    }
    let mut path = Vec::new();
    for _ in 0..8 {
        match latest.get(&path) {
            Some(c) => path.push(*c),
            None => break,
        }
    }
    path
}

/// Tries every prefix of the active path, longest first.
pub fn oracle_resolve(bindings: &[(u32, Vec<u32>, u64)], active: &[u32]) -> Option<u32> {
    for len in (1..=active.len()).rev() {
        let prefix = &active[..len];
        let best = bindings
            .iter()
            .filter(|(_, p, _)| p.as_slice() == prefix)
            .max_by_key(|(_, _, seq)| *seq);
        if let Some((id, _, _)) = best {
            return Some(*id);
        }
    }
    None
}

// A tiny alphabet so paths collide often.
fn focus_elems(max: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..3, 0..=max)
}

/// Focus reports and `(path, seq)` bindings.
pub type FocusInstance = (Vec<(Vec<u32>, u32)>, Vec<(Vec<u32>, u64)>);

pub fn focus_instance() -> impl Strategy<Value = FocusInstance> {
    (
        prop::collection::vec((focus_elems(7), 0u32..3), 0..12),
        prop::collection::vec(
            (
                focus_elems(8).prop_filter("non-empty", |v| !v.is_empty()),
                0u64..6,
            ),
            0..8,
        ),
    )
}

/// `(resolve_focus, oracle)` for one generated instance.
pub fn focus_both(
    reports: &[(Vec<u32>, u32)],
    binds: &[(Vec<u32>, u64)],
) -> (Option<u32>, Option<u32>) {
    use braillemux::focus::{resolve_focus, FocusMap, TtyBinding};
    let mut map = FocusMap::new();
    for (p, c) in reports {
        map.set_active(FocusPath::new(p.clone()).unwrap(), *c)
            .unwrap();
    }
    let seqd: Vec<(u32, Vec<u32>, u64)> = binds
        .iter()
        .enumerate()
        .map(|(i, (p, s))| (i as u32, p.clone(), s * 100 + i as u64))
        .collect();
    let bindings: Vec<TtyBinding<u32>> = seqd
        .iter()
        .map(|(id, p, seq)| TtyBinding {
            client: *id,
            path: FocusPath::new(p.clone()).unwrap(),
            key_mode: KeyMode::Commands,
            entry_seq: *seq,
        })
        .collect();
    (
        resolve_focus(&bindings, &map),
        oracle_resolve(&seqd, &oracle_active(reports)),
    )
}
