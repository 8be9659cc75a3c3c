//! Dataflow assertion hooks. Agents report which kind of state each network
//! reads; tests capture the events of a closure and check the role split.

use std::cell::RefCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Act,
    ActorUpdate,
    CriticUpdate,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Net {
    Actor,
    Critic,
    Attention,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Input {
    /// Raw observations `s_r`.
    Real,
    /// `s_r ⊙ p`.
    Virtual,
    /// `[s_r ⊙ p, a]` as fed to an action-value critic.
    VirtualWithAction,
    /// `[s_r, a]`, used only by single-world action-value critics.
    RealWithAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub phase: Phase,
    pub net: Net,
    pub input: Input,
}

thread_local! {
    static EVENTS: RefCell<Option<Vec<Event>>> = const { RefCell::new(None) };
}

pub(crate) fn record(phase: Phase, net: Net, input: Input) {
    EVENTS.with(|e| {
        if let Some(events) = e.borrow_mut().as_mut() {
            events.push(Event { phase, net, input });
        }
    });
}

/// Runs `f` on this thread and returns the events it recorded.
pub fn capture<R>(f: impl FnOnce() -> R) -> (R, Vec<Event>) {
    let previous = EVENTS.with(|e| e.borrow_mut().replace(Vec::new()));
    let out = f();
    let events = EVENTS.with(|e| std::mem::replace(&mut *e.borrow_mut(), previous)).unwrap_or_default();
    (out, events)
}
