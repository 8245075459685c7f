//! Deterministic offline driver shared by simulation and replay.
//!
//! Input sample `k` (at `input_rate_hz`) is offered before loop tick `j` (at
//! the session loop rate) exactly when `k · loop_rate ≤ j · input_rate`, so
//! the interleaving uses integer arithmetic only.

use super::{Command, FinishedTrial, Input, Session, SessionState, TeleopError};

/// Source of timestamped inputs for an offline run.
pub trait InputFeed {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Receive time and value of input `k`; called once per `k`, in order.
    fn input(&mut self, k: usize) -> Result<(f64, Input), TeleopError>;

    /// Called with each tick's state, after the tick.
    fn observe(&mut self, _state: &SessionState) {}
}

/// Replays a fixed list of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedFeed {
    items: Vec<(f64, Input)>,
}

impl RecordedFeed {
    pub fn new(items: Vec<(f64, Input)>) -> Self {
        Self { items }
    }
}

impl InputFeed for RecordedFeed {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn input(&mut self, k: usize) -> Result<(f64, Input), TeleopError> {
        Ok(self.items[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineRun {
    /// Every input offered, in order.
    pub inputs: Vec<(f64, Input)>,
    pub states: Vec<SessionState>,
    pub trials: Vec<FinishedTrial>,
}

/// Start a trial and run the session until the feed is exhausted. A trial
/// still running at the end is stopped and returned as partial.
pub fn run_offline(
    session: &mut Session,
    feed: &mut dyn InputFeed,
    input_rate_hz: u32,
) -> Result<OfflineRun, TeleopError> {
    let n = feed.len() as u64;
    let loop_rate = session.config().loop_rate_hz as u64;
    let rate = input_rate_hz as u64;
    if rate == 0 {
        return Err(TeleopError::InvalidConfig("input rate 0".into()));
    }
    let mut run = OfflineRun {
        inputs: Vec::with_capacity(n as usize),
        states: Vec::new(),
        trials: Vec::new(),
    };
    if n == 0 {
        return Ok(run);
    }
    session.command(Command::Start);
    let mut k = 0u64;
    let mut j = 0u64;
    while j * rate <= (n - 1) * loop_rate {
        while k < n && k * loop_rate <= j * rate {
            let (at, input) = feed.input(k as usize)?;
            session.offer(input, at)?;
            run.inputs.push((at, input));
            k += 1;
        }
        let state = session.tick(session.config().tick_time(j))?.clone();
        feed.observe(&state);
        run.states.push(state);
        j += 1;
    }
    session.command(Command::Stop);
    run.trials = session.take_finished();
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{RigidTransform, Vector3};
    use crate::task::make_straight_wire;
    use crate::teleop::{InputSource, SessionConfig};

    fn poses(n: usize, rate: f64) -> Vec<(f64, Input)> {
        (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                let x = -0.2 + 0.4 * k as f64 / (n - 1) as f64;
                (t, Input::Pose { pose: RigidTransform::from_translation(Vector3::new(x, 0.0, 0.001)) })
            })
            .collect()
    }

    #[test]
    fn schedule_interleaves_by_integer_rule() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Datagram);
        let mut s = Session::new(cfg).unwrap();
        let items = poses(201, 100.0);
        let run = run_offline(&mut s, &mut RecordedFeed::new(items.clone()), 100).unwrap();
        assert_eq!(run.inputs, items);
        // 50 Hz loop over 2 s of 100 Hz input
        assert_eq!(run.states.len(), 101);
        assert_eq!(run.states[1].t, 0.02);
        // tick j sees sample 2j
        for (j, st) in run.states.iter().enumerate().take(50) {
            let x = -0.2 + 0.4 * (2 * j) as f64 / 200.0;
            assert_eq!(st.ring.translation.x, x);
        }
        assert_eq!(run.trials.len(), 1);
        assert!(run.trials[0].record.completed);
    }

    #[test]
    fn same_feed_gives_identical_records() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Datagram);
        let items = poses(333, 120.0);
        let a = run_offline(&mut Session::new(cfg.clone()).unwrap(), &mut RecordedFeed::new(items.clone()), 120).unwrap();
        let b = run_offline(&mut Session::new(cfg).unwrap(), &mut RecordedFeed::new(items), 120).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn unfinished_feed_yields_partial_trial() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Datagram);
        let items: Vec<_> = poses(201, 100.0).into_iter().take(100).collect();
        let run = run_offline(&mut Session::new(cfg).unwrap(), &mut RecordedFeed::new(items), 100).unwrap();
        assert_eq!(run.trials.len(), 1);
        assert!(!run.trials[0].record.completed);
    }

    #[test]
    fn empty_feed_runs_nothing() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Datagram);
        let run = run_offline(&mut Session::new(cfg).unwrap(), &mut RecordedFeed::new(vec![]), 100).unwrap();
        assert!(run.states.is_empty() && run.trials.is_empty());
    }
}
