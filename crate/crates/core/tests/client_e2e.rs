mod common;

use std::time::Duration;

use braillemux::client::{ClientError, ClientMode, Connection};
use braillemux::driver::Command;
use braillemux::focus::{FocusPath, KeyMode};
use braillemux::proto::{code, ErrorCode, KeyKind};
use braillemux::server::AuthConfig;
use braillemux::transport::Address;
use common::Live;

const T: Duration = Duration::from_secs(2);

fn path(s: &str) -> FocusPath {
    s.parse().unwrap()
}

#[test]
fn queries_and_modes() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    assert_eq!(c.mode(), ClientMode::Authed);
    assert_eq!(c.driver_name().unwrap(), "simscript");
    assert_eq!(c.display_size().unwrap(), (40, 1));
    assert!(matches!(c.write_text("x", 0), Err(ClientError::NotInTty)));
    c.enter_tty_mode(&path("1"), KeyMode::Commands).unwrap();
    assert_eq!(c.mode(), ClientMode::Tty);
    c.leave_tty_mode().unwrap();
    assert_eq!(c.mode(), ClientMode::Authed);
    let e = c.leave_tty_mode().unwrap_err();
    assert_eq!(e.server_code(), Some(ErrorCode::NotInMode));
}

#[test]
fn keys_reach_the_focused_client() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    c.set_focus(&FocusPath::root(), 3).unwrap();
    c.enter_tty_mode(&path("3"), KeyMode::Commands).unwrap();
    c.write_text("hi", 1).unwrap();
    assert!(live.wait_log(T, |l| l.iter().any(|x| x.starts_with("W 1 2813 280A"))));
    live.injector.key(0x05);
    live.injector.key(0x100 + 7);
    let k = c.read_key(T).unwrap();
    assert_eq!(k.command(), Some(Command::Home));
    assert_eq!(k.to_string(), "command Home");
    assert_eq!(c.read_key(T).unwrap().command(), Some(Command::Route(7)));
    assert!(matches!(
        c.read_key(Duration::from_millis(50)),
        Err(ClientError::TimedOut)
    ));
}

#[test]
fn raw_key_mode() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    c.set_focus(&FocusPath::root(), 1).unwrap();
    c.enter_tty_mode(&path("1"), KeyMode::Raw).unwrap();
    assert!(live.wait_log(T, |l| l.iter().any(|x| x.starts_with("W "))));
    live.injector.key(0xabc);
    let k = c.read_key(T).unwrap();
    assert_eq!((k.kind, k.code), (KeyKind::Raw, 0xabc));
}

#[test]
fn rejected_write_is_reported_later() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    c.enter_tty_mode(&path("1"), KeyMode::Commands).unwrap();
    c.write_text("ok", 0).unwrap();
    c.write_text("bad", 99).unwrap();
    let e = c.next_error(T).unwrap();
    assert_eq!(
        (e.code, e.offending_type),
        (ErrorCode::BadParameter, code::WRITE_TEXT)
    );
    // the connection stays usable
    assert_eq!(c.driver_name().unwrap(), "simscript");
    assert!(c.next_error(Duration::from_millis(50)).is_none());
}

#[test]
fn deep_focus_prefix_is_rejected() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    let deep = FocusPath::new(vec![1; 8]).unwrap();
    assert_eq!(
        c.set_focus(&deep, 1).unwrap_err().server_code(),
        Some(ErrorCode::BadParameter)
    );
}

#[test]
fn raw_round_trip_and_busy() {
    let live = Live::open();
    let a = Connection::open(&live.addr(), None).unwrap();
    let b = Connection::open(&live.addr(), None).unwrap();
    a.enter_tty_mode(&path("1"), KeyMode::Commands).unwrap();
    a.enter_raw_mode("simscript").unwrap();
    assert_eq!(a.mode(), ClientMode::Raw { from_tty: true });
    let e = b.enter_raw_mode("simscript").unwrap_err();
    assert_eq!(e.server_code(), Some(ErrorCode::DeviceBusy));
    let e = b.suspend_driver("simscript").unwrap_err();
    assert_eq!(e.server_code(), Some(ErrorCode::DeviceBusy));
    a.send_raw(&[7, 8, 9]).unwrap();
    assert_eq!(a.recv_raw(T).unwrap(), vec![7, 8, 9]);
    a.leave_raw_mode().unwrap();
    assert_eq!(a.mode(), ClientMode::Tty);
    b.enter_raw_mode("simscript").unwrap();
    b.leave_raw_mode().unwrap();
    assert_eq!(
        b.enter_raw_mode("braille-x").unwrap_err().server_code(),
        Some(ErrorCode::DriverMismatch)
    );
}

#[test]
fn suspend_and_resume() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    c.suspend_driver("simscript").unwrap();
    assert_eq!(c.mode(), ClientMode::Suspended { from_tty: false });
    assert_eq!(live.log_lines().last().map(String::as_str), Some("C"));
    c.resume_driver().unwrap();
    assert_eq!(c.mode(), ClientMode::Authed);
    assert!(live.wait_log(T, |l| l.len() >= 4 && l[2] == "O"));
}

#[test]
fn dropping_the_owner_releases_the_device() {
    let live = Live::open();
    let a = Connection::open(&live.addr(), None).unwrap();
    a.suspend_driver("simscript").unwrap();
    drop(a);
    let b = Connection::open(&live.addr(), None).unwrap();
    let mut ok = false;
    for _ in 0..200 {
        if b.enter_raw_mode("simscript").is_ok() {
            ok = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    assert!(ok);
}

#[test]
fn keyfile_auth() {
    let live = Live::start(AuthConfig::Key(b"hunter2".to_vec()), 40);
    assert!(matches!(
        Connection::open(&live.addr(), Some(b"nope")),
        Err(ClientError::AuthFailed)
    ));
    assert!(matches!(
        Connection::open(&live.addr(), None),
        Err(ClientError::AuthFailed)
    ));
    let c = Connection::open(&live.addr(), Some(b"hunter2")).unwrap();
    assert_eq!(c.driver_name().unwrap(), "simscript");
}

#[test]
fn unreachable_server() {
    let addr: Address = "tcp:127.0.0.1:1".parse().unwrap();
    assert!(matches!(
        Connection::open(&addr, None),
        Err(ClientError::ConnectFailed(_))
    ));
}

#[test]
fn local_socket() {
    let dir = tempfile::tempdir().unwrap();
    let sock = dir.path().join("brl.sock");
    let live_dir = tempfile::tempdir().unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    let driver = braillemux::driver::simscript::SimScript::new(
        braillemux::driver::simscript::SimScriptConfig::in_dir(live_dir.path()),
        tx,
    )
    .unwrap();
    let addr = Address::Local(sock.clone());
    let listener = braillemux::transport::Listener::bind(&addr).unwrap();
    let server = braillemux::server::Server::new(
        Box::new(driver),
        rx,
        listener,
        AuthConfig::Open,
        Default::default(),
    )
    .unwrap()
    .spawn()
    .unwrap();
    let c = Connection::open(&addr, None).unwrap();
    assert_eq!(c.display_size().unwrap(), (40, 1));
    drop(c);
    server.shutdown();
    assert!(!sock.exists());
}

#[test]
fn server_shutdown_is_seen_as_lost_connection() {
    let live = Live::open();
    let c = Connection::open(&live.addr(), None).unwrap();
    c.enter_tty_mode(&path("1"), KeyMode::Commands).unwrap();
    let Live { handle, .. } = live;
    handle.shutdown();
    assert!(matches!(c.read_key(T), Err(ClientError::ConnectionLost)));
}
