//! Reader/renderer coordination primitives for one worker group.

use std::sync::{Condvar, Mutex, MutexGuard, TryLockError};

use crate::volume::{SlabAssignment, Volume};

/// Binary gate: `post` opens it (idempotently), `acquire` blocks until it
/// is open and closes it again.
#[derive(Debug, Default)]
pub struct Gate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    pub fn new() -> Self {
        Gate::default()
    }

    pub fn post(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_one();
    }

    pub fn acquire(&self) {
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
        *open = false;
    }

    pub fn is_open(&self) -> bool {
        *self.open.lock().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Load { timestep: usize, slab: SlabAssignment },
    Terminate,
}

/// Control variable the renderer writes before posting gate A. The reader
/// marks each command taken once it has started acting on it.
#[derive(Debug, Default)]
pub struct ControlCell {
    state: Mutex<(Option<Command>, bool)>,
    cv: Condvar,
}

impl ControlCell {
    pub fn new() -> Self {
        ControlCell::default()
    }

    pub fn set(&self, cmd: Command) {
        *self.state.lock().unwrap() = (Some(cmd), false);
    }

    pub fn peek(&self) -> Option<Command> {
        self.state.lock().unwrap().0.clone()
    }

    pub fn mark_taken(&self) {
        self.state.lock().unwrap().1 = true;
        self.cv.notify_all();
    }

    pub fn wait_taken(&self) {
        let mut s = self.state.lock().unwrap();
        while !s.1 {
            s = self.cv.wait(s).unwrap();
        }
    }
}

/// One half of the double buffer.
#[derive(Debug, Default)]
pub struct Staged {
    pub timestep: Option<usize>,
    pub slab: Option<SlabAssignment>,
    pub voxels: Option<Volume>,
    pub bytes: u64,
}

/// Two staging halves; timestep `t` uses half `t % 2`. Access is by
/// `try_lock` so that a protocol error surfaces instead of blocking.
#[derive(Debug, Default)]
pub struct DoubleBuffer {
    halves: [Mutex<Staged>; 2],
}

impl DoubleBuffer {
    pub fn new() -> Self {
        DoubleBuffer::default()
    }

    pub fn half_for(timestep: usize) -> usize {
        timestep % 2
    }

    /// Locks half `h`, or returns `None` if the other role holds it.
    pub fn try_acquire(&self, h: usize) -> Option<MutexGuard<'_, Staged>> {
        match self.halves[h].try_lock() {
            Ok(g) => Some(g),
            Err(TryLockError::WouldBlock) => None,
            Err(TryLockError::Poisoned(p)) => Some(p.into_inner()),
        }
    }

    /// Blocking lock, for recovery after a failed `try_acquire`.
    pub fn lock(&self, h: usize) -> MutexGuard<'_, Staged> {
        self.halves[h].lock().unwrap_or_else(|p| p.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn gate_post_is_idempotent() {
        let g = Gate::new();
        g.post();
        g.post();
        g.acquire();
        assert!(!g.is_open());
    }

    #[test]
    fn gate_blocks_until_post() {
        let g = Arc::new(Gate::new());
        let g2 = g.clone();
        let t = thread::spawn(move || {
            g2.acquire();
            7
        });
        thread::sleep(Duration::from_millis(30));
        assert!(!t.is_finished());
        g.post();
        assert_eq!(t.join().unwrap(), 7);
    }

    #[test]
    fn double_buffer_halves_are_exclusive() {
        let b = DoubleBuffer::new();
        let g0 = b.try_acquire(DoubleBuffer::half_for(4)).unwrap();
        assert!(b.try_acquire(0).is_none());
        assert!(b.try_acquire(DoubleBuffer::half_for(5)).is_some());
        drop(g0);
        assert!(b.try_acquire(0).is_some());
    }

    #[test]
    fn control_cell_handshake() {
        let c = Arc::new(ControlCell::new());
        c.set(Command::Terminate);
        let c2 = c.clone();
        let t = thread::spawn(move || {
            assert_eq!(c2.peek(), Some(Command::Terminate));
            c2.mark_taken();
        });
        c.wait_taken();
        t.join().unwrap();
    }
}
