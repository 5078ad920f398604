//! Per-connection episode state machine.
//!
//! A session starts before the handshake. `hello` moves it to ready,
//! `reset` to running, and a crash or the end of the trace to done; `reset`
//! is accepted again from done. `metrics` works in any state after `hello`.

use serde_json::{json, Value};
use vista_core::episode::{EpisodeConfig, Env, MetricsAccumulator, SimContext};
use vista_core::Error;

use crate::protocol::{WireMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreHello,
    Ready,
    Running,
    Done,
    Closed,
}

pub struct Session {
    pub id: u64,
    ctx: SimContext,
    defaults: EpisodeConfig,
    env: Option<Env>,
    phase: Phase,
    metrics: MetricsAccumulator,
}

impl Session {
    pub fn new(id: u64, ctx: SimContext, defaults: EpisodeConfig) -> Self {
        Self { id, ctx, defaults, env: None, phase: Phase::PreHello, metrics: MetricsAccumulator::default() }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn env(&self) -> Option<&Env> {
        self.env.as_ref()
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    /// Handles one request and returns the reply. Failures are reported as
    /// error replies; the session stays usable.
    pub fn handle(&mut self, msg: &WireMessage) -> WireMessage {
        let Some(cmd) = msg.cmd() else {
            return WireMessage::error("malformed", "missing `cmd` string");
        };
        if self.phase == Phase::Closed {
            return WireMessage::error("protocol", "session is closed");
        }
        if self.phase == Phase::PreHello && cmd != "hello" && cmd != "close" {
            return WireMessage::error("protocol", "expected hello first");
        }
        match cmd {
            "hello" => self.hello(msg),
            "reset" => self.reset(msg),
            "step" => self.step(msg),
            "observe" => self.observe(),
            "metrics" => WireMessage::new(json!({ "ok": true, "metrics": self.metrics.metrics() })),
            "close" => {
                self.phase = Phase::Closed;
                WireMessage::new(json!({ "ok": true }))
            }
            other => WireMessage::error("malformed", format!("unknown command `{other}`")),
        }
    }

    fn hello(&mut self, msg: &WireMessage) -> WireMessage {
        if self.phase != Phase::PreHello {
            return WireMessage::error("protocol", "hello already received");
        }
        match msg.get("version").and_then(Value::as_str) {
            Some(PROTOCOL_VERSION) => {
                self.phase = Phase::Ready;
                WireMessage::new(json!({ "ok": true, "version": PROTOCOL_VERSION, "session": self.id }))
            }
            v => WireMessage::error("version", format!("unsupported protocol version {v:?}; server speaks {PROTOCOL_VERSION}")),
        }
    }

    fn reset(&mut self, msg: &WireMessage) -> WireMessage {
        let config = match msg.get("config") {
            None | Some(Value::Null) => None,
            Some(v) => match self.defaults.with_overrides(v) {
                Ok(c) => Some(c),
                Err(e) => return error_reply(&e),
            },
        };
        let seed = match msg.get("seed") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(s) => Some(s),
                None => return WireMessage::error("malformed", "`seed` must be a nonnegative integer"),
            },
        };
        // A new config replaces the episode; otherwise the current one is reused.
        if config.is_some() || self.env.is_none() {
            let cfg = config.unwrap_or_else(|| self.defaults.clone());
            match Env::new(self.ctx.clone(), cfg) {
                Ok(env) => self.env = Some(env),
                Err(e) => return error_reply(&e),
            }
        }
        let env = self.env.as_mut().expect("env was just ensured");
        let result = match seed {
            Some(s) => env.reset_seeded(s),
            None => env.reset(),
        };
        if let Err(e) = result {
            return error_reply(&e);
        }
        self.metrics.start_trial();
        self.phase = Phase::Running;
        WireMessage::new(json!({ "ok": true, "state": state_json(env) }))
    }

    fn step(&mut self, msg: &WireMessage) -> WireMessage {
        let Some(kappa) = msg.get("curvature").and_then(Value::as_f64) else {
            return WireMessage::error("malformed", "`curvature` must be a number");
        };
        match self.phase {
            Phase::Running => {}
            Phase::Done => return WireMessage::error("episode-done", "episode done"),
            _ => return WireMessage::error("protocol", "reset required before step"),
        }
        let env = self.env.as_mut().expect("running session has an env");
        match env.step(kappa) {
            Ok(info) => {
                self.metrics.record(&info);
                if info.done {
                    self.phase = Phase::Done;
                }
                WireMessage::new(json!({
                    "done": info.done,
                    "cause": info.cause.map(|c| c.as_str()),
                    "deviation": info.deviation,
                    "heading_error": info.heading_error,
                    "sim_time": info.sim_time,
                }))
            }
            Err(e) => error_reply(&e),
        }
    }

    fn observe(&mut self) -> WireMessage {
        let env = match (self.phase, self.env.as_mut()) {
            (Phase::Running | Phase::Done, Some(env)) => env,
            _ => return WireMessage::error("protocol", "reset required before observe"),
        };
        match env.observe() {
            Ok(obs) => WireMessage::new(json!({ "ok": true, "sensor": env.config().sensor })).with_attachment(obs.encode()),
            Err(e) => error_reply(&e),
        }
    }
}

fn state_json(env: &Env) -> Value {
    let s = env.state();
    let a = &s.agent;
    json!({
        "x": a.pose.x,
        "y": a.pose.y,
        "yaw": a.pose.yaw,
        "speed": a.speed,
        "sim_time": a.time,
        "deviation": s.lateral,
        "heading_error": s.heading_error,
        "episode": s.episode,
        "seed": s.episode_seed,
    })
}

fn error_reply(e: &Error) -> WireMessage {
    let code = match e {
        Error::EpisodeDone => "episode-done",
        Error::InvalidArgument(_) => "invalid",
        Error::OutOfSupport { .. } => "out-of-support",
        _ => "simulation",
    };
    WireMessage::error(code, e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use vista_core::episode::InitRange;
    use vista_core::synthetic::SyntheticTrace;

    fn ctx() -> SimContext {
        let mut spec = SyntheticTrace::straight(150.0);
        spec.lidar = None;
        spec.rgb.as_mut().unwrap().rate = 2.0;
        SimContext::new(spec.build().unwrap()).unwrap()
    }

    fn send(s: &mut Session, v: Value) -> WireMessage {
        s.handle(&WireMessage::new(v))
    }

    fn ready() -> Session {
        let mut s = Session::new(1, ctx(), EpisodeConfig::default());
        assert!(!send(&mut s, json!({"cmd": "hello", "version": "1"})).is_error());
        s
    }

    #[test]
    fn handshake() {
        let mut s = Session::new(0, ctx(), EpisodeConfig::default());
        assert_eq!(send(&mut s, json!({"cmd": "step", "curvature": 0.0})).get("error").unwrap(), "protocol");
        assert_eq!(send(&mut s, json!({"cmd": "hello", "version": "2"})).get("error").unwrap(), "version");
        let r = send(&mut s, json!({"cmd": "hello", "version": "1"}));
        assert_eq!(r.get("version").unwrap(), "1");
        assert_eq!(r.get("ok").unwrap(), true);
        assert_eq!(s.phase(), Phase::Ready);
    }

    #[test]
    fn step_before_reset_is_a_protocol_error() {
        let mut s = ready();
        let r = send(&mut s, json!({"cmd": "step", "curvature": 0.0}));
        assert_eq!(r.get("error").unwrap(), "protocol");
        assert_eq!(s.phase(), Phase::Ready);
    }

    #[test]
    fn malformed_requests_keep_the_session() {
        let mut s = ready();
        assert!(send(&mut s, json!({"nocmd": 1})).is_error());
        assert!(send(&mut s, json!({"cmd": "fly"})).is_error());
        assert!(send(&mut s, json!({"cmd": "reset", "seed": -3})).is_error());
        assert!(send(&mut s, json!({"cmd": "reset", "config": {"dt": -1.0}})).is_error());
        assert!(!send(&mut s, json!({"cmd": "reset", "seed": 3})).is_error());
        assert!(send(&mut s, json!({"cmd": "step"})).is_error());
        assert!(!send(&mut s, json!({"cmd": "step", "curvature": 0.0})).is_error());
    }

    #[test]
    fn step_after_crash_reports_episode_done() {
        let mut s = ready();
        let r = send(&mut s, json!({"cmd": "reset", "seed": 1, "config": {"init": {"lateral": 0.0, "yaw": 0.0}}}));
        assert!(!r.is_error(), "{r:?}");
        let mut crashed = false;
        for _ in 0..1000 {
            let r = send(&mut s, json!({"cmd": "step", "curvature": 0.3}));
            if r.get("done") == Some(&json!(true)) {
                assert_eq!(r.get("cause").unwrap(), "crash");
                crashed = true;
                break;
            }
        }
        assert!(crashed);
        let r = send(&mut s, json!({"cmd": "step", "curvature": 0.0}));
        assert_eq!(r.get("error").unwrap(), "episode-done");
        assert_eq!(r.get("message").unwrap(), "episode done");
        let m = send(&mut s, json!({"cmd": "metrics"}));
        assert_eq!(m.get("metrics").unwrap()["crash_rate"], json!(1.0));
        // A fresh reset starts another trial.
        assert!(!send(&mut s, json!({"cmd": "reset"})).is_error());
        assert_eq!(s.phase(), Phase::Running);
    }

    #[test]
    fn observe_attaches_the_rgb_payload() {
        let mut s = ready();
        send(&mut s, json!({"cmd": "reset", "seed": 9}));
        let r = send(&mut s, json!({"cmd": "observe"}));
        assert_eq!(r.get("ok").unwrap(), true);
        assert_eq!(r.attachments.len(), 1);
        assert_eq!(r.attachments[0].len(), 128 * 96 * 3);
    }

    #[test]
    fn reset_config_applies() {
        let mut s = ready();
        let cfg = json!({"init": InitRange::ZERO});
        let r = send(&mut s, json!({"cmd": "reset", "seed": 4, "config": cfg}));
        assert_eq!(r.get("state").unwrap()["deviation"], json!(0.0));
    }

    #[test]
    fn close_ends_the_session() {
        let mut s = ready();
        assert!(!send(&mut s, json!({"cmd": "close"})).is_error());
        assert_eq!(s.phase(), Phase::Closed);
        assert!(send(&mut s, json!({"cmd": "metrics"})).is_error());
    }
}
