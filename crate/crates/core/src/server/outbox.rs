use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::proto::Packet;

/// Most key events queued for one session; older ones are dropped first.
pub const KEY_QUEUE_LEN: usize = 64;

#[derive(Default)]
struct Inner {
    queue: VecDeque<Packet>,
    keys: usize,
    dropped: u64,
    closed: bool,
}

/// Packets waiting to be written to one session's transport.
///
/// The event loop pushes, a per-connection writer drains. Key events are
/// bounded so that a client that stops reading cannot grow the queue
/// without limit.
#[derive(Default)]
pub struct Outbox {
    inner: Mutex<Inner>,
    ready: Condvar,
}

impl Outbox {
    pub fn new() -> Arc<Outbox> {
        Arc::new(Outbox::default())
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, packet: Packet) {
        let mut inner = self.lock();
        if inner.closed {
            return;
        }
        if matches!(packet, Packet::KeyEvent { .. }) {
            if inner.keys == KEY_QUEUE_LEN {
                let oldest = inner
                    .queue
                    .iter()
                    .position(|p| matches!(p, Packet::KeyEvent { .. }))
                    .expect("key count matches queue");
                inner.queue.remove(oldest);
                inner.keys -= 1;
                inner.dropped += 1;
            }
            inner.keys += 1;
        }
        inner.queue.push_back(packet);
        self.ready.notify_one();
    }

    /// Stops accepting packets; whatever is queued is still delivered.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Key events dropped because the queue was full.
    pub fn dropped_keys(&self) -> u64 {
        self.lock().dropped
    }

    fn pop_locked(inner: &mut Inner) -> Option<Packet> {
        let p = inner.queue.pop_front()?;
        if matches!(p, Packet::KeyEvent { .. }) {
            inner.keys -= 1;
        }
        Some(p)
    }

    /// Waits for the next packet. `None` once closed and drained.
    pub fn pop(&self) -> Option<Packet> {
        let mut inner = self.lock();
        loop {
            if let Some(p) = Self::pop_locked(&mut inner) {
                return Some(p);
            }
            if inner.closed {
                return None;
            }
            inner = self.ready.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<Packet> {
        let inner = self.lock();
        let (mut inner, _) = self
            .ready
            .wait_timeout_while(inner, timeout, |i| i.queue.is_empty() && !i.closed)
            .unwrap_or_else(|e| e.into_inner());
        Self::pop_locked(&mut inner)
    }

    /// Takes everything queued right now.
    pub fn drain(&self) -> Vec<Packet> {
        let mut inner = self.lock();
        inner.keys = 0;
        inner.queue.drain(..).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proto::KeyKind;

    fn key(code: u64) -> Packet {
        Packet::KeyEvent {
            kind: KeyKind::Raw,
            code,
            arg: 0,
        }
    }

    #[test]
    fn key_overflow_drops_oldest() {
        let ob = Outbox::new();
        ob.push(Packet::AuthOk);
        for i in 0..(KEY_QUEUE_LEN as u64 + 3) {
            ob.push(key(i));
        }
        assert_eq!(ob.dropped_keys(), 3);
        let all = ob.drain();
        assert_eq!(all.len(), KEY_QUEUE_LEN + 1);
        assert_eq!(all[0], Packet::AuthOk);
        assert_eq!(all[1], key(3));
        assert_eq!(all.last(), Some(&key(KEY_QUEUE_LEN as u64 + 2)));
    }

    #[test]
    fn close_drains_then_ends() {
        let ob = Outbox::new();
        ob.push(Packet::Resume);
        ob.close();
        ob.push(Packet::LeaveRaw);
        assert_eq!(ob.pop(), Some(Packet::Resume));
        assert_eq!(ob.pop(), None);
    }

    #[test]
    fn pop_timeout_returns_none_when_idle() {
        let ob = Outbox::new();
        assert_eq!(ob.pop_timeout(Duration::from_millis(5)), None);
    }
}
