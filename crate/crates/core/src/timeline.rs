//! Per-device link-state timeline in integer nanoseconds.

use crate::protocol::NANOS_PER_SEC;
use crate::scenario::ApId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Connected(ApId),
    /// Inside a handover: old link gone, new one not yet serving.
    Disrupted,
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub state: LinkState,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl Segment {
    pub fn len_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }

    pub fn start_s(&self) -> f64 {
        self.start_ns as f64 / NANOS_PER_SEC
    }

    pub fn end_s(&self) -> f64 {
        self.end_ns as f64 / NANOS_PER_SEC
    }
}

/// Contiguous, non-overlapping segments covering `[0, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConnectivityLog {
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TimeSplit {
    pub connected_ns: u64,
    pub disrupted_ns: u64,
    pub disconnected_ns: u64,
}

impl TimeSplit {
    pub fn total_ns(&self) -> u64 {
        self.connected_ns + self.disrupted_ns + self.disconnected_ns
    }
}

impl ConnectivityLog {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn split(&self) -> TimeSplit {
        let mut t = TimeSplit::default();
        for s in &self.segments {
            match s.state {
                LinkState::Connected(_) => t.connected_ns += s.len_ns(),
                LinkState::Disrupted => t.disrupted_ns += s.len_ns(),
                LinkState::Disconnected => t.disconnected_ns += s.len_ns(),
            }
        }
        t
    }

    pub fn connected_ns_to(&self, ap: ApId) -> u64 {
        self.segments
            .iter()
            .filter(|s| s.state == LinkState::Connected(ap))
            .map(Segment::len_ns)
            .sum()
    }
}

/// Appends state changes in time order.
#[derive(Debug, Clone)]
pub struct LogBuilder {
    segments: Vec<Segment>,
    cursor_ns: u64,
    state: LinkState,
}

impl LogBuilder {
    pub fn new(initial: LinkState) -> Self {
        Self {
            segments: Vec::new(),
            cursor_ns: 0,
            state: initial,
        }
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    /// Switches to `state` at `at_ns`. Times before the last transition are
    /// moved up to it so the log stays ordered.
    pub fn transition(&mut self, at_ns: u64, state: LinkState) {
        let at = at_ns.max(self.cursor_ns);
        if at > self.cursor_ns {
            self.push(self.state, self.cursor_ns, at);
        }
        self.cursor_ns = at;
        self.state = state;
    }

    fn push(&mut self, state: LinkState, start: u64, end: u64) {
        if let Some(last) = self.segments.last_mut() {
            if last.state == state && last.end_ns == start {
                last.end_ns = end;
                return;
            }
        }
        self.segments.push(Segment {
            state,
            start_ns: start,
            end_ns: end,
        });
    }

    /// Closes the log at `end_ns`, truncating anything scheduled later.
    pub fn finish(mut self, end_ns: u64) -> ConnectivityLog {
        if end_ns > self.cursor_ns {
            self.push(self.state, self.cursor_ns, end_ns);
        }
        let mut segments: Vec<Segment> = self
            .segments
            .into_iter()
            .filter(|s| s.start_ns < end_ns)
            .collect();
        if let Some(last) = segments.last_mut() {
            last.end_ns = last.end_ns.min(end_ns);
        }
        ConnectivityLog { segments }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_conserves_time() {
        let mut b = LogBuilder::new(LinkState::Disconnected);
        b.transition(0, LinkState::Connected(ApId(1)));
        b.transition(1_000, LinkState::Disrupted);
        b.transition(1_040, LinkState::Connected(ApId(2)));
        b.transition(5_000, LinkState::Disconnected);
        b.transition(6_000, LinkState::Connected(ApId(2)));
        let log = b.finish(10_000);
        let s = log.split();
        assert_eq!(s.total_ns(), 10_000);
        assert_eq!(s.disrupted_ns, 40);
        assert_eq!(s.disconnected_ns, 1_000);
        assert_eq!(log.connected_ns_to(ApId(2)), 3_960 + 4_000);
    }

    #[test]
    fn finish_truncates() {
        let mut b = LogBuilder::new(LinkState::Connected(ApId(1)));
        b.transition(900, LinkState::Disrupted);
        b.transition(1_200, LinkState::Connected(ApId(3)));
        let log = b.finish(1_000);
        assert_eq!(log.split().total_ns(), 1_000);
        assert_eq!(log.segments().last().unwrap().state, LinkState::Disrupted);
    }
}
