use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::json;
use vista_core::episode::{EpisodeConfig, SimContext};
use vista_core::synthetic::SyntheticTrace;
use vista_core::trace::SensorKind;
use vista_server::{Client, Server, WireMessage, MAX_FRAME};

fn start(config: EpisodeConfig) -> std::net::SocketAddr {
    let mut spec = SyntheticTrace::straight(150.0);
    spec.rgb.as_mut().unwrap().rate = 5.0;
    spec.lidar.as_mut().unwrap().rate = 2.0;
    let ctx = SimContext::new(spec.build().unwrap()).unwrap();
    let server = Server::new(TcpListener::bind("127.0.0.1:0").unwrap(), ctx, config);
    let addr = server.local_addr().unwrap();
    server.spawn();
    addr
}

fn connect(addr: std::net::SocketAddr) -> Client<TcpStream, TcpStream> {
    let s = TcpStream::connect(addr).unwrap();
    Client::new(s.try_clone().unwrap(), s)
}

/// Payloads from a fixed seed and command script.
fn observe_stream(client: &mut Client<TcpStream, TcpStream>, seed: u64) -> Vec<Vec<u8>> {
    client.hello().unwrap();
    client.reset(Some(seed), None).unwrap();
    let mut out = Vec::new();
    for k in 0..8 {
        out.push(client.observe().unwrap());
        client.step(0.01 * (k as f64 - 4.0)).unwrap();
    }
    out
}

#[test]
fn equal_seeds_give_identical_observations() {
    for sensor in [SensorKind::Rgb, SensorKind::Lidar, SensorKind::EventTarget] {
        let addr = start(EpisodeConfig { sensor, ..Default::default() });
        let a = observe_stream(&mut connect(addr), 42);
        let b = observe_stream(&mut connect(addr), 42);
        assert_eq!(a, b, "{sensor}");
        let c = observe_stream(&mut connect(addr), 43);
        assert_ne!(a, c, "{sensor}");
    }
}

#[test]
fn interleaved_sessions_are_isolated() {
    let addr = start(EpisodeConfig::default());
    let mut solo = connect(addr);
    solo.hello().unwrap();
    solo.reset(Some(5), None).unwrap();
    let expect: Vec<_> = (0..20).map(|_| solo.step(0.02).unwrap()).collect();

    let mut a = connect(addr);
    let mut b = connect(addr);
    a.hello().unwrap();
    b.hello().unwrap();
    a.reset(Some(5), None).unwrap();
    b.reset(Some(99), None).unwrap();
    for e in &expect {
        assert_eq!(a.step(0.02).unwrap(), *e);
        b.step(-0.1).unwrap();
        b.observe().unwrap();
    }
}

#[test]
fn oversized_prefix_closes_the_connection() {
    let addr = start(EpisodeConfig::default());
    let mut s = TcpStream::connect(addr).unwrap();
    s.write_all(&((MAX_FRAME + 1) as u32).to_le_bytes()).unwrap();
    let mut buf = [0u8; 16];
    assert_eq!(s.read(&mut buf).unwrap_or(0), 0);
}

#[test]
fn malformed_body_gets_an_error_reply() {
    let addr = start(EpisodeConfig::default());
    let mut s = TcpStream::connect(addr).unwrap();
    let mut bytes = 7u32.to_le_bytes().to_vec();
    bytes.extend_from_slice(b"not{js}");
    s.write_all(&bytes).unwrap();
    let reply = WireMessage::read_from(&mut s).unwrap().unwrap();
    assert_eq!(reply.get("error").unwrap(), "malformed");
    // Same connection keeps working.
    WireMessage::new(json!({"cmd": "hello", "version": "1"})).write_to(&mut s).unwrap();
    let reply = WireMessage::read_from(&mut s).unwrap().unwrap();
    assert_eq!(reply.get("ok").unwrap(), true);
}
