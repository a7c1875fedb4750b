use std::io::Write;
use std::sync::mpsc;
use std::time::Duration;

use braillemux::braille::BrailleTable;
use braillemux::driver::simscript::{replay, SimScript, SimScriptConfig};
use braillemux::driver::{DeviceEvent, Driver};
use braillemux::transfer::TransferPacket;

fn driver(dir: &std::path::Path) -> (SimScript, mpsc::Receiver<DeviceEvent>) {
    let mut cfg = SimScriptConfig::in_dir(dir);
    cfg.cols = 4;
    let (tx, rx) = mpsc::channel();
    (SimScript::new(cfg, tx).unwrap(), rx)
}

#[test]
fn replay_reproduces_log_and_transfer() {
    let a = tempfile::tempdir().unwrap();
    let (mut d, _rx) = driver(a.path());
    let table = BrailleTable::default();
    d.open().unwrap();
    d.write_cells(&table.render_text("ab", 4, 1).unwrap())
        .unwrap();
    d.injector().key(0x05);
    d.injector().packet(vec![0xAA, 0x55]);
    d.set_raw_mode(true);
    d.send_packet(&[1, 2, 3]).unwrap();
    let payload: Vec<u8> = (0..1500u32).map(|i| (i * 7) as u8).collect();
    d.send_packet(&TransferPacket::Hello.encode()).unwrap();
    for (seq, chunk) in payload.chunks(1024).enumerate() {
        d.send_packet(
            &TransferPacket::Data {
                seq: seq as u32,
                bytes: chunk.to_vec(),
            }
            .encode(),
        )
        .unwrap();
    }
    d.send_packet(
        &TransferPacket::Done {
            crc32: braillemux::transfer::crc32(&payload),
        }
        .encode(),
    )
    .unwrap();
    d.set_raw_mode(false);
    d.write_cells(&table.render_text("", 4, 0).unwrap())
        .unwrap();
    d.close().unwrap();

    let recorded = std::fs::read_to_string(d.log_path()).unwrap();
    assert_eq!(std::fs::read(d.received_path()).unwrap(), payload);
    assert!(recorded.lines().any(|l| l.starts_with("T done 1500 ")));

    let b = tempfile::tempdir().unwrap();
    let (mut e, _rx2) = driver(b.path());
    replay(&recorded, &mut e).unwrap();
    assert_eq!(std::fs::read_to_string(e.log_path()).unwrap(), recorded);
    assert_eq!(std::fs::read(e.received_path()).unwrap(), payload);
}

#[test]
fn documented_write_line() {
    let dir = tempfile::tempdir().unwrap();
    let (mut d, _rx) = driver(dir.path());
    d.open().unwrap();
    let buf = BrailleTable::default().render_text("ab", 4, 1).unwrap();
    d.write_cells(&buf).unwrap();
    let log = std::fs::read_to_string(d.log_path()).unwrap();
    assert_eq!(log, "O\nW 1 2801 2803 2800 2800\n");
}

#[test]
fn replay_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let (mut d, _rx) = driver(dir.path());
    assert!(replay("O\nX what\n", &mut d).is_err());
    assert!(replay("W 0 2801\n", &mut d).is_err());
}

#[test]
fn closed_driver_ignores_injection() {
    let dir = tempfile::tempdir().unwrap();
    let (d, rx) = driver(dir.path());
    assert!(!d.injector().key(1));
    assert!(rx.try_recv().is_err());
}

#[test]
fn command_pipe_injects_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("sim.conf");
    std::fs::write(
        &conf,
        "name = sim\ncols = 20\nlog = sim.log\npipe = sim.pipe\n",
    )
    .unwrap();
    let (tx, rx) = mpsc::channel();
    let mut d = SimScript::from_config_file(&conf, tx).unwrap();
    d.open().unwrap();
    let mut pipe = std::fs::OpenOptions::new()
        .write(true)
        .open(dir.path().join("sim.pipe"))
        .unwrap();
    writeln!(pipe, "key 0x05").unwrap();
    writeln!(pipe, "packet 01 02").unwrap();
    let t = Duration::from_secs(2);
    assert_eq!(rx.recv_timeout(t).unwrap(), DeviceEvent::Key(5));
    assert_eq!(rx.recv_timeout(t).unwrap(), DeviceEvent::Packet(vec![1, 2]));
    let log = std::fs::read_to_string(dir.path().join("sim.log")).unwrap();
    assert_eq!(log, "O\nK 0x05\nP 0102\n");
}
