use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::{Duration, Instant};

use super::{
    sum_in_order, Envelope, EnvelopeKind, Phase, Responder, RoundLedger, Transport, TransportMode,
    DRIVER_ID,
};
use crate::error::{DinoError, Result};

struct Peer {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Driver-side listening socket, before the workers have joined.
pub struct SocketListener {
    listener: TcpListener,
}

impl SocketListener {
    /// Bind on localhost; port 0 picks a free port.
    pub fn bind(port: u16) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        Ok(SocketListener { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Wait for `checksums.len()` workers to connect and say hello.
    ///
    /// A hello carries the worker's id and `[shard checksum bits, worker
    /// count]`. Any mismatch aborts the whole run.
    pub fn accept_workers(self, checksums: &[u64], timeout: Duration) -> Result<SocketTransport> {
        let m = checksums.len();
        let deadline = Instant::now() + timeout;
        self.listener.set_nonblocking(true)?;
        let mut peers: BTreeMap<usize, Peer> = BTreeMap::new();
        while peers.len() < m {
            let stream = match self.listener.accept() {
                Ok((stream, _)) => stream,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(DinoError::Timeout(format!(
                            "driver waited {:.1}s but only {} of {m} workers connected",
                            timeout.as_secs_f64(),
                            peers.len()
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(5));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            stream.set_nonblocking(false)?;
            stream.set_nodelay(true)?;
            stream.set_read_timeout(Some(
                deadline
                    .saturating_duration_since(Instant::now())
                    .max(Duration::from_millis(1)),
            ))?;
            let mut reader = BufReader::new(stream.try_clone()?);
            let hello = Envelope::read_from(&mut reader, EnvelopeKind::ReduceContribution)
                .map_err(|e| match e {
                    DinoError::Io(io)
                        if matches!(
                            io.kind(),
                            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                        ) =>
                    {
                        DinoError::Timeout("worker connected but sent no hello".into())
                    }
                    other => other,
                })?;
            let id = validate_hello(&hello, checksums)?;
            if peers.contains_key(&id) {
                return Err(DinoError::Protocol(format!("worker {id} connected twice")));
            }
            stream.set_read_timeout(None)?;
            peers.insert(
                id,
                Peer {
                    reader,
                    writer: BufWriter::new(stream),
                },
            );
        }
        let mut peers: Vec<Peer> = peers.into_values().collect();
        for (id, peer) in peers.iter_mut().enumerate() {
            Envelope::broadcast(Phase::HelloAck, 0, vec![id as f64]).write_to(&mut peer.writer)?;
        }
        Ok(SocketTransport {
            peers,
            ledger: RoundLedger::new(),
            pending: None,
            read_timeout: None,
        })
    }
}

fn validate_hello(hello: &Envelope, checksums: &[u64]) -> Result<usize> {
    let m = checksums.len();
    if hello.phase != Phase::Hello || hello.payload.len() != 2 {
        return Err(DinoError::Protocol(format!(
            "expected hello, got {} with {} values",
            hello.phase.name(),
            hello.payload.len()
        )));
    }
    let id = hello.worker_id;
    if id < 0 || id as usize >= m {
        return Err(DinoError::Protocol(format!(
            "worker id {id} out of range for {m} workers"
        )));
    }
    let claimed_m = hello.payload[1];
    if claimed_m != m as f64 {
        return Err(DinoError::Protocol(format!(
            "worker {id} configured for {claimed_m} workers, driver expects {m}"
        )));
    }
    let checksum = hello.payload[0].to_bits();
    if checksum != checksums[id as usize] {
        return Err(DinoError::Protocol(format!(
            "worker {id} shard checksum {checksum:016x} does not match expected {:016x}",
            checksums[id as usize]
        )));
    }
    Ok(id as usize)
}

/// Driver side of the TCP transport. Workers are addressed in id order.
pub struct SocketTransport {
    peers: Vec<Peer>,
    ledger: RoundLedger,
    pending: Option<(Phase, u32)>,
    read_timeout: Option<Duration>,
}

impl SocketTransport {
    /// Bound on how long a reduce waits for any single worker.
    pub fn set_read_timeout(&mut self, timeout: Option<Duration>) -> Result<()> {
        for p in &self.peers {
            p.reader.get_ref().set_read_timeout(timeout)?;
        }
        self.read_timeout = timeout;
        Ok(())
    }

    fn abort(&self, what: String) -> DinoError {
        DinoError::Protocol(format!(
            "{what}; aborting after {} rounds, {} bytes",
            self.ledger.rounds(),
            self.ledger.bytes_sent()
        ))
    }
}

impl Transport for SocketTransport {
    fn mode(&self) -> TransportMode {
        TransportMode::Socket
    }

    fn workers(&self) -> usize {
        self.peers.len()
    }

    fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    fn broadcast(&mut self, phase: Phase, iteration: u32, payload: &[f64]) -> Result<()> {
        if self.pending.is_some() {
            return Err(DinoError::Protocol(
                "broadcast while contributions are unreduced".into(),
            ));
        }
        let envelope = Envelope::broadcast(phase, iteration, payload.to_vec());
        let frame = envelope.encode();
        for id in 0..self.peers.len() {
            let res = {
                use std::io::Write;
                let w = &mut self.peers[id].writer;
                w.write_all(&frame).and_then(|_| w.flush())
            };
            if let Err(e) = res {
                return Err(self.abort(format!("send to worker {id} failed: {e}")));
            }
        }
        self.ledger
            .record(phase, self.peers.len() as u64 * envelope.payload_bytes());
        self.pending = Some((phase, iteration));
        Ok(())
    }

    fn reduce_sum(&mut self, phase: Phase, iteration: u32) -> Result<Vec<f64>> {
        match self.pending.take() {
            Some((p, it)) if p == phase && it == iteration => {}
            _ => {
                return Err(DinoError::Protocol(format!(
                    "reduce of {} without matching broadcast",
                    phase.name()
                )))
            }
        }
        let mut contributions = Vec::with_capacity(self.peers.len());
        for id in 0..self.peers.len() {
            let env = match Envelope::read_from(
                &mut self.peers[id].reader,
                EnvelopeKind::ReduceContribution,
            ) {
                Ok(env) => env,
                Err(DinoError::Io(e)) => {
                    return Err(self.abort(format!("worker {id} disconnected or timed out: {e}")));
                }
                Err(e) => return Err(e),
            };
            if env.phase != phase || env.iteration != iteration || env.worker_id != id as i32 {
                return Err(self.abort(format!(
                    "expected {}@{} from worker {id}, got {}@{} from worker {}",
                    phase.name(),
                    iteration,
                    env.phase.name(),
                    env.iteration,
                    env.worker_id
                )));
            }
            contributions.push(env.payload);
        }
        let sum = sum_in_order(&contributions)?;
        let bytes: u64 = contributions.iter().map(|c| 8 * c.len() as u64).sum();
        self.ledger.record(phase, bytes);
        Ok(sum)
    }

    fn shutdown(&mut self) -> Result<()> {
        self.pending = None;
        let frame = Envelope::broadcast(Phase::Shutdown, 0, vec![]).encode();
        for peer in &mut self.peers {
            use std::io::Write;
            // Workers that already exited are fine to ignore here.
            let _ = peer
                .writer
                .write_all(&frame)
                .and_then(|_| peer.writer.flush());
        }
        Ok(())
    }
}

/// Worker process loop: connect (retrying until `connect_timeout`), say
/// hello, then answer every broadcast until shutdown.
pub fn run_socket_worker<R: Responder>(
    addr: SocketAddr,
    worker_id: usize,
    workers: usize,
    checksum: u64,
    responder: &mut R,
    connect_timeout: Duration,
) -> Result<()> {
    let deadline = Instant::now() + connect_timeout;
    let stream = loop {
        match TcpStream::connect(addr) {
            Ok(s) => break s,
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(DinoError::Timeout(format!(
                        "worker {worker_id} could not reach driver at {addr}: {e}"
                    )));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    };
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let id = worker_id as i32;
    Envelope::contribution(
        Phase::Hello,
        0,
        id,
        vec![f64::from_bits(checksum), workers as f64],
    )
    .write_to(&mut writer)?;
    let ack = Envelope::read_from(&mut reader, EnvelopeKind::Broadcast).map_err(|e| match e {
        DinoError::Io(io) => DinoError::Protocol(format!("driver rejected handshake: {io}")),
        other => other,
    })?;
    if ack.phase != Phase::HelloAck {
        return Err(DinoError::Protocol(format!(
            "expected hello_ack, got {}",
            ack.phase.name()
        )));
    }
    loop {
        let env = match Envelope::read_from(&mut reader, EnvelopeKind::Broadcast) {
            Ok(env) => env,
            Err(DinoError::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                return Err(DinoError::Protocol("driver closed the connection".into()));
            }
            Err(e) => return Err(e),
        };
        if env.worker_id != DRIVER_ID {
            return Err(DinoError::Protocol(format!(
                "broadcast from non-driver id {}",
                env.worker_id
            )));
        }
        if env.phase == Phase::Shutdown {
            return Ok(());
        }
        let payload = responder.respond(&env)?;
        Envelope::contribution(env.phase, env.iteration, id, payload).write_to(&mut writer)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::InProcessTransport;

    #[derive(Clone)]
    struct Affine(f64);

    impl Responder for Affine {
        fn respond(&mut self, envelope: &Envelope) -> Result<Vec<f64>> {
            Ok(envelope.payload.iter().map(|x| x * self.0 + 0.1).collect())
        }
    }

    fn spawn_workers(
        addr: SocketAddr,
        m: usize,
        checksums: Vec<u64>,
    ) -> Vec<std::thread::JoinHandle<Result<()>>> {
        (0..m)
            .map(|id| {
                let c = checksums[id];
                std::thread::spawn(move || {
                    let mut r = Affine(1.0 / (id as f64 + 3.0));
                    run_socket_worker(addr, id, m, c, &mut r, Duration::from_secs(5))
                })
            })
            .collect()
    }

    #[test]
    fn socket_matches_in_process_bit_for_bit() {
        let m = 3;
        let checksums = vec![11, 22, 33];
        let listener = SocketListener::bind(0).unwrap();
        let addr = listener.local_addr().unwrap();
        let handles = spawn_workers(addr, m, checksums.clone());
        let mut sock = listener
            .accept_workers(&checksums, Duration::from_secs(5))
            .unwrap();
        let mut local =
            InProcessTransport::new((0..m).map(|id| Affine(1.0 / (id as f64 + 3.0))).collect())
                .unwrap();
        for it in 0..4u32 {
            let payload: Vec<f64> = (0..5)
                .map(|k| (k as f64 + 0.3) * (it as f64 + 1.7))
                .collect();
            sock.broadcast(Phase::Grad, it, &payload).unwrap();
            local.broadcast(Phase::Grad, it, &payload).unwrap();
            let a = sock.reduce_sum(Phase::Grad, it).unwrap();
            let b = local.reduce_sum(Phase::Grad, it).unwrap();
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
        assert_eq!(sock.ledger(), local.ledger());
        sock.shutdown().unwrap();
        for h in handles {
            h.join().unwrap().unwrap();
        }
    }

    #[test]
    fn checksum_mismatch_aborts_handshake() {
        let listener = SocketListener::bind(0).unwrap();
        let addr = listener.local_addr().unwrap();
        let handles = spawn_workers(addr, 1, vec![999]);
        let err = listener
            .accept_workers(&[1], Duration::from_secs(5))
            .err()
            .unwrap();
        assert!(
            matches!(err, DinoError::Protocol(ref msg) if msg.contains("checksum")),
            "{err}"
        );
        let worker = handles.into_iter().next().unwrap().join().unwrap();
        assert!(worker.is_err());
    }

    #[test]
    fn wrong_worker_count_aborts_handshake() {
        let listener = SocketListener::bind(0).unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let mut r = Affine(1.0);
            run_socket_worker(addr, 0, 3, 5, &mut r, Duration::from_secs(5))
        });
        let err = listener
            .accept_workers(&[5, 6], Duration::from_secs(5))
            .err()
            .unwrap();
        assert!(
            matches!(err, DinoError::Protocol(ref msg) if msg.contains("expects 2")),
            "{err}"
        );
        assert!(h.join().unwrap().is_err());
    }

    #[test]
    fn driver_without_workers_times_out() {
        let listener = SocketListener::bind(0).unwrap();
        let err = listener
            .accept_workers(&[1, 2], Duration::from_millis(100))
            .err()
            .unwrap();
        match err {
            DinoError::Timeout(msg) => assert!(msg.contains("0 of 2 workers")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn worker_without_driver_times_out() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let mut r = Affine(1.0);
        let err = run_socket_worker(addr, 0, 1, 0, &mut r, Duration::from_millis(100)).unwrap_err();
        assert!(matches!(err, DinoError::Timeout(_)));
    }

    #[test]
    fn disconnected_worker_aborts_reduce_with_partial_ledger() {
        let listener = SocketListener::bind(0).unwrap();
        let addr = listener.local_addr().unwrap();
        let h = std::thread::spawn(move || {
            let stream = TcpStream::connect(addr).unwrap();
            let mut w = BufWriter::new(stream.try_clone().unwrap());
            Envelope::contribution(Phase::Hello, 0, 0, vec![f64::from_bits(7), 1.0])
                .write_to(&mut w)
                .unwrap();
            let mut r = BufReader::new(stream);
            Envelope::read_from(&mut r, EnvelopeKind::Broadcast).unwrap();
            // Read the broadcast, then vanish without answering.
            Envelope::read_from(&mut r, EnvelopeKind::Broadcast).unwrap();
        });
        let mut t = listener
            .accept_workers(&[7], Duration::from_secs(5))
            .unwrap();
        t.broadcast(Phase::Grad, 0, &[1.0]).unwrap();
        h.join().unwrap();
        let err = t.reduce_sum(Phase::Grad, 0).unwrap_err();
        assert!(
            matches!(err, DinoError::Protocol(ref msg) if msg.contains("after 1 rounds")),
            "{err}"
        );
    }
}
