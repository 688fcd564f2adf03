//! Textbook LRU simulation and a driver for the context manager's cache.

use ctxguard_core::manager::{Acquisition, ContextManager, Session};
use ctxguard_core::model::{ContextSpace, FunctionEntry, SecurityLevel};

/// Most recently used last. Returns the eviction trace.
pub fn simulate(accesses: &[&str], capacity: usize, pinned: &[&str]) -> Vec<String> {
    let mut resident: Vec<&str> = Vec::new();
    let mut evicted = Vec::new();
    for &app in accesses {
        if let Some(pos) = resident.iter().position(|a| *a == app) {
            resident.remove(pos);
        } else if resident.len() == capacity {
            let victim = resident.iter().position(|a| !pinned.contains(a)).expect("an unpinned victim");
            evicted.push(resident.remove(victim).to_owned());
        }
        resident.push(app);
    }
    evicted
}

/// All strings of length <= `max_len` over `alphabet`.
pub fn access_strings<'a>(alphabet: &[&'a str], max_len: usize) -> Vec<Vec<&'a str>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in alphabet {
                let mut t: Vec<&str> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn tiny_space(app: &str) -> ContextSpace {
    let mut s = ContextSpace::new(app, "1");
    let mut f = FunctionEntry::new("noop", SecurityLevel::Normal);
    f.desc = "does nothing".into();
    s.functions.as_mut().expect("flat space").push(f);
    s
}

/// Replays accesses through a manager: switch on hit, register on miss.
/// Returns the eviction trace.
pub fn drive_manager(accesses: &[&str], capacity: usize, pinned: &[&str]) -> Vec<String> {
    let pinned_owned: Vec<String> = pinned.iter().map(|s| s.to_string()).collect();
    let m = ContextManager::new(capacity, &pinned_owned, Acquisition::default()).expect("capacity > 0");
    let mut session = Session::new(1);
    for app in accesses {
        if !m.switch_app(&mut session, app) {
            m.register_space(&mut session, tiny_space(app)).expect("space lints clean");
        }
    }
    m.with_cache(|c| c.evictions().to_vec())
}
