use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc::Receiver;
use std::thread;
use std::time::Duration;

use immunet::server::{serve, ServerEvent};
use immunet::trace::{read_trace, write_trace, TraceFile, TraceKind, TraceRecord};
use immunet::wire::WireMessage;
use immunet::{AntigenEvent, SignalSample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn connect(addr: SocketAddr) -> (TcpStream, BufReader<TcpStream>) {
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let reader = BufReader::new(stream.try_clone().unwrap());
    (stream, reader)
}

fn reply(reader: &mut BufReader<TcpStream>) -> String {
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    line.trim_end().to_string()
}

fn next_event(rx: &Receiver<ServerEvent>) -> ServerEvent {
    rx.recv_timeout(Duration::from_secs(10)).expect("server event")
}

#[test]
fn handshake_signal_and_unknown_tag() {
    let (server, rx) = serve("127.0.0.1:0").unwrap();
    let (mut s, mut r) = connect(server.local_addr());
    s.write_all(b"HELLO v1\n").unwrap();
    assert_eq!(reply(&mut r), "OK v1");
    s.write_all(b"S 5 10 2 0 0\n").unwrap();
    match next_event(&rx) {
        ServerEvent::Record(item) => {
            assert_eq!(item.seq, 0);
            assert_eq!(
                item.record,
                TraceRecord::Signal(SignalSample::new(10.0, 2.0, 0.0, 0.0, 5))
            );
        }
        other => panic!("unexpected {other:?}"),
    }
    s.write_all(b"X 1 2 3\n").unwrap();
    assert_eq!(reply(&mut r), "ERR unknown-tag");
    // connection is still usable
    s.write_all(b"A 6 9\nBYE\n").unwrap();
    assert_eq!(reply(&mut r), "BYE");
    match next_event(&rx) {
        ServerEvent::Record(item) => {
            assert_eq!(item.seq, 1);
            assert_eq!(item.record, TraceRecord::Antigen(AntigenEvent::new(9, 6)));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        next_event(&rx),
        ServerEvent::Disconnected { said_bye: true, .. }
    ));
}

fn sample_mixed(seed: u64, n: usize) -> TraceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut tick = 0;
    for _ in 0..n {
        tick += rng.random_range(0..3u64);
        records.push(if rng.random_bool(0.6) {
            TraceRecord::Antigen(AntigenEvent::new(rng.random_range(0..256), tick))
        } else {
            TraceRecord::Signal(SignalSample::new(
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
                0.0,
                tick,
            ))
        });
    }
    TraceFile::mixed(records)
}

#[test]
fn wire_replay_matches_file_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.trace");
    write_trace(&path, &sample_mixed(11, 2_000)).unwrap();
    let from_file = read_trace(&path).unwrap();

    let (server, rx) = serve("127.0.0.1:0").unwrap();
    let (mut s, mut r) = connect(server.local_addr());
    let mut wire = String::from("HELLO v1\n");
    for rec in &from_file.records {
        wire.push_str(&WireMessage::from(*rec).to_string());
        wire.push('\n');
    }
    wire.push_str("BYE\n");
    s.write_all(wire.as_bytes()).unwrap();
    assert_eq!(reply(&mut r), "OK v1");
    assert_eq!(reply(&mut r), "BYE");

    let mut received = Vec::new();
    while let ServerEvent::Record(item) = next_event(&rx) {
        assert_eq!(item.seq, received.len() as u64);
        received.push(item.record);
    }
    assert_eq!(received, from_file.records);
}

#[test]
fn random_byte_lines_do_not_break_the_server() {
    let (server, rx) = serve("127.0.0.1:0").unwrap();
    let (mut s, r) = connect(server.local_addr());
    let drain = thread::spawn(move || r.lines().map_while(Result::ok).last());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut batch = Vec::with_capacity(64 * 1024);
    for i in 0..20_000 {
        let len = rng.random_range(0..64);
        batch.extend((0..len).map(|_| loop {
            let b: u8 = rng.random();
            if b != b'\n' {
                break b;
            }
        }));
        batch.push(b'\n');
        if i % 500 == 0 {
            s.write_all(&batch).unwrap();
            batch.clear();
        }
    }
    batch.extend_from_slice(b"BYE\n");
    s.write_all(&batch).unwrap();
    assert_eq!(drain.join().unwrap().as_deref(), Some("BYE"));
    // the server still serves new clients
    let (mut s2, mut r2) = connect(server.local_addr());
    s2.write_all(b"HELLO v1\n").unwrap();
    assert_eq!(reply(&mut r2), "OK v1");
    drop(rx);
}

#[test]
fn concurrent_clients_share_one_ordered_queue() {
    let (server, rx) = serve("127.0.0.1:0").unwrap();
    let addr = server.local_addr();
    let clients: Vec<_> = (0..4u32)
        .map(|c| {
            thread::spawn(move || {
                let (mut s, mut r) = connect(addr);
                let mut text = String::new();
                for t in 0..250u64 {
                    text.push_str(&format!("A {t} {c}\n"));
                }
                text.push_str("BYE\n");
                s.write_all(text.as_bytes()).unwrap();
                assert_eq!(reply(&mut r), "BYE");
            })
        })
        .collect();
    for h in clients {
        h.join().unwrap();
    }
    let (mut seqs, mut per_client) = (Vec::new(), vec![Vec::new(); 4]);
    let mut done = 0;
    while done < 4 {
        match next_event(&rx) {
            ServerEvent::Record(item) => {
                seqs.push(item.seq);
                if let TraceRecord::Antigen(e) = item.record {
                    per_client[e.antigen_type as usize].push(e.tick);
                }
            }
            ServerEvent::Disconnected { .. } => done += 1,
        }
    }
    assert_eq!(seqs, (0..1000).collect::<Vec<u64>>());
    for ticks in per_client {
        assert_eq!(ticks, (0..250).collect::<Vec<u64>>());
    }
}

fn record() -> impl Strategy<Value = TraceRecord> {
    let value = prop_oneof![0.0..100.0f64, Just(0.0), Just(100.0), (0u32..100).prop_map(f64::from)];
    prop_oneof![
        (0u64..1000, any::<u32>()).prop_map(|(t, a)| TraceRecord::Antigen(AntigenEvent::new(a, t))),
        (0u64..1000, value.clone(), value.clone(), value.clone(), value)
            .prop_map(|(t, p, d, s, i)| TraceRecord::Signal(SignalSample::new(p, d, s, i, t))),
    ]
}

fn sorted_per_stream(mut records: Vec<TraceRecord>) -> Vec<TraceRecord> {
    records.sort_by_key(TraceRecord::tick);
    records
}

proptest! {
    #[test]
    fn mixed_files_round_trip(records in prop::collection::vec(record(), 0..200)) {
        let trace = TraceFile::mixed(sorted_per_stream(records));
        let parsed = TraceFile::parse(&trace.render()).unwrap();
        prop_assert_eq!(&parsed, &trace);
        prop_assert_eq!(parsed.render(), trace.render());
    }

    #[test]
    fn single_kind_files_round_trip(records in prop::collection::vec(record(), 0..200)) {
        let records = sorted_per_stream(records);
        let antigen = TraceFile::antigen(records.iter().filter_map(|r| match r {
            TraceRecord::Antigen(e) => Some(*e),
            _ => None,
        }));
        let signal = TraceFile::signal(records.iter().filter_map(|r| match r {
            TraceRecord::Signal(s) => Some(*s),
            _ => None,
        }));
        for t in [antigen, signal] {
            let parsed = TraceFile::parse(&t.render()).unwrap();
            prop_assert_eq!(parsed.kind, t.kind);
            prop_assert_ne!(parsed.kind, TraceKind::Mixed);
            prop_assert_eq!(parsed, t);
        }
    }
}
