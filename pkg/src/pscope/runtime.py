"""Master/worker execution engines.

Workers are any objects with ``grad_sum(t, w) -> ndarray`` and
``local_epoch(t, z) -> (ndarray, touches)``. An engine moves vectors
between the master and its workers; ``run_round`` is the master side of
one synchronous outer iteration and always reduces in worker-index
order, so the result does not depend on which worker finishes first.

Wire format (all little-endian)::

    [tag: u8][round: u32][count: u64][count x f64]

Handshake sent by a worker right after connecting::

    [b"pSCP"][worker_id: u32][shard_hash: 8 bytes]
"""
from __future__ import annotations

import enum
import hashlib
import logging
import os
import socket
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

HEADER = struct.Struct("<BIQ")
HANDSHAKE = struct.Struct("<4sI8s")
MAGIC = b"pSCP"


class Tag(enum.IntEnum):
    BROADCAST_W = 0x01
    GRAD_SUM = 0x02
    FULL_GRAD = 0x03
    LOCAL_RESULT = 0x04
    SHUTDOWN = 0x05
    # extension: per-round coordinate-touch count, payload length 1
    STATS = 0x06


class ProtocolError(RuntimeError):
    pass


class EngineError(RuntimeError):
    """A worker failed or timed out; the round was aborted before averaging."""


@dataclass(frozen=True, eq=False)
class Message:
    tag: Tag
    round: int
    payload: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Message):
            return NotImplemented
        return (self.tag == other.tag and self.round == other.round
                and self.payload.dtype == other.payload.dtype
                and np.array_equal(self.payload, other.payload))


def encode_message(msg: Message) -> bytes:
    payload = np.ascontiguousarray(msg.payload, dtype="<f8")
    if msg.tag == Tag.SHUTDOWN and payload.size:
        raise ProtocolError("shutdown carries no payload")
    if not np.all(np.isfinite(payload)):
        raise ProtocolError("payload must be finite")
    if not 0 <= msg.round < 2**32:
        raise ProtocolError("round out of range")
    return HEADER.pack(int(Tag(msg.tag)), msg.round, payload.size) + payload.tobytes()


def decode_message(buf: bytes) -> Message:
    if len(buf) < HEADER.size:
        raise ProtocolError("truncated frame header")
    tag, rnd, count = HEADER.unpack_from(buf)
    try:
        tag = Tag(tag)
    except ValueError:
        raise ProtocolError(f"unknown tag 0x{tag:02x}") from None
    if len(buf) != HEADER.size + 8 * count:
        raise ProtocolError(f"count mismatch: header says {count} doubles, "
                            f"frame has {(len(buf) - HEADER.size) / 8}")
    payload = np.frombuffer(buf, dtype="<f8", offset=HEADER.size, count=count)
    return Message(tag, rnd, payload.astype(np.float64))


def shard_hash(shard: np.ndarray) -> bytes:
    return hashlib.blake2b(np.ascontiguousarray(shard, dtype="<i8").tobytes(),
                           digest_size=8).digest()


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def send_message(sock: socket.socket, msg: Message) -> int:
    data = encode_message(msg)
    sock.sendall(data)
    return len(data)


def recv_message(sock: socket.socket) -> Message:
    head = _recv_exact(sock, HEADER.size)
    count = HEADER.unpack(head)[2]
    return decode_message(head + _recv_exact(sock, 8 * count))


def _expect(msg: Message, tag: Tag, rnd: int, size: int | None = None) -> np.ndarray:
    if msg.tag != tag:
        raise ProtocolError(f"expected {tag.name}, got {msg.tag.name}")
    if msg.round != rnd:
        raise ProtocolError(f"round mismatch: expected {rnd}, got {msg.round}")
    if size is not None and msg.payload.size != size:
        raise ProtocolError(f"{tag.name} payload has {msg.payload.size} entries, expected {size}")
    return msg.payload


@dataclass
class RoundResult:
    w: np.ndarray
    comm_bytes: int
    touches: int


def run_round(engine, w: np.ndarray, t: int, n: int) -> RoundResult:
    """Broadcast w, gather z_k, broadcast z, gather u_k, average.

    ``n`` is the total number of instances held by the workers, i.e. the
    sum of shard sizes: the dataset size for disjoint shards and p times
    it for a replicated plan, so that z is always the mean gradient.

    Communication is accounted as 4 * p * d * 8 bytes: the two
    broadcasts are counted once per worker, as are the two gathers.
    """
    p, d = engine.p, len(w)
    grad_sums = engine.gather_grad_sums(t, w)
    z = np.zeros(d)
    for zk in grad_sums:
        z += zk
    z /= n
    results = engine.gather_local_results(t, z)
    total = np.zeros(d)
    touches = 0
    for u, k_touches in results:
        total += u
        touches += k_touches
    return RoundResult(total / p, 4 * p * d * 8, touches)


def _thread_cap() -> int | None:
    v = os.environ.get("PSCOPE_THREADS")
    return max(1, int(v)) if v else None


class InProcessEngine:
    """Workers live in this process; epochs may run on a thread pool."""

    def __init__(self, workers, threads: int | None = None):
        self.workers = list(workers)
        cap = threads or _thread_cap()
        n = min(cap or len(self.workers), len(self.workers))
        self._pool = ThreadPoolExecutor(max_workers=n) if n > 1 else None

    @property
    def p(self) -> int:
        return len(self.workers)

    def _map(self, fn):
        if self._pool is None:
            return [fn(wk) for wk in self.workers]
        futures = [self._pool.submit(fn, wk) for wk in self.workers]
        return [f.result() for f in futures]

    def gather_grad_sums(self, t, w):
        return self._map(lambda wk: wk.grad_sum(t, w))

    def gather_local_results(self, t, z):
        return self._map(lambda wk: wk.local_epoch(t, z))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


class TcpEngine:
    """Master side of the socket engine: one TCP connection per worker."""

    def __init__(self, conns: list[socket.socket], d: int, timeout: float | None = None):
        self.conns = conns
        self.d = d
        self.bytes_sent = 0
        self.bytes_received = 0
        self._threads: list[threading.Thread] = []
        for c in conns:
            c.settimeout(timeout)

    @property
    def p(self) -> int:
        return len(self.conns)

    @classmethod
    def accept(cls, server: socket.socket, shard_hashes: list[bytes], d: int,
               timeout: float | None = 60.0) -> "TcpEngine":
        """Accept one connection per worker and order them by worker id."""
        p = len(shard_hashes)
        conns: list[socket.socket | None] = [None] * p
        server.settimeout(timeout)
        try:
            for _ in range(p):
                conn, peer = server.accept()
                conn.settimeout(timeout)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                magic, wid, h = HANDSHAKE.unpack(_recv_exact(conn, HANDSHAKE.size))
                if magic != MAGIC:
                    conn.close()
                    raise ProtocolError(f"bad handshake magic from {peer}")
                if wid >= p or conns[wid] is not None:
                    conn.close()
                    raise ProtocolError(f"unexpected worker id {wid}")
                if h != shard_hashes[wid]:
                    conn.close()
                    raise ProtocolError(f"worker {wid} holds a different shard")
                log.debug("worker %d connected from %s", wid, peer)
                conns[wid] = conn
        except socket.timeout:
            for c in conns:
                if c is not None:
                    c.close()
            raise EngineError("timed out waiting for workers to connect") from None
        return cls(conns, d, timeout)

    @classmethod
    def spawn_local(cls, workers, shards, d: int, timeout: float | None = 60.0) -> "TcpEngine":
        """Listen on an ephemeral loopback port and connect worker threads to it."""
        server = socket.create_server(("127.0.0.1", 0))
        addr = server.getsockname()
        threads = []
        for k, (wk, shard) in enumerate(zip(workers, shards)):
            th = threading.Thread(target=serve_worker, args=(addr, k, shard_hash(shard), wk),
                                  kwargs={"timeout": timeout}, daemon=True)
            th.start()
            threads.append(th)
        try:
            engine = cls.accept(server, [shard_hash(s) for s in shards], d, timeout)
        finally:
            server.close()
        engine._threads = threads
        return engine

    def _send_all(self, tag, t, payload):
        for c in self.conns:
            self.bytes_sent += send_message(c, Message(tag, t, payload))

    def _recv(self, k, tag, t, size):
        try:
            msg = recv_message(self.conns[k])
        except (OSError, ProtocolError) as e:
            raise EngineError(f"round {t}: worker {k} failed: {e}") from e
        self.bytes_received += HEADER.size + 8 * msg.payload.size
        return _expect(msg, tag, t, size)

    def gather_grad_sums(self, t, w):
        self._send_all(Tag.BROADCAST_W, t, w)
        return [self._recv(k, Tag.GRAD_SUM, t, self.d) for k in range(self.p)]

    def gather_local_results(self, t, z):
        self._send_all(Tag.FULL_GRAD, t, z)
        out = []
        for k in range(self.p):
            u = self._recv(k, Tag.LOCAL_RESULT, t, self.d)
            stats = self._recv(k, Tag.STATS, t, 1)
            out.append((u, int(stats[0])))
        return out

    def close(self):
        for c in self.conns:
            try:
                send_message(c, Message(Tag.SHUTDOWN, 0, np.empty(0)))
            except OSError:
                pass
            c.close()
        for th in self._threads:
            th.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_worker(address, worker_id: int, shard_digest: bytes, worker,
                 timeout: float | None = 60.0) -> int:
    """Worker side of the socket engine; returns the number of rounds served."""
    sock = socket.create_connection(address, timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    rounds = 0
    try:
        sock.sendall(HANDSHAKE.pack(MAGIC, worker_id, shard_digest))
        while True:
            msg = recv_message(sock)
            if msg.tag == Tag.SHUTDOWN:
                return rounds
            t = msg.round
            w = _expect(msg, Tag.BROADCAST_W, t)
            send_message(sock, Message(Tag.GRAD_SUM, t, worker.grad_sum(t, w)))
            z = _expect(recv_message(sock), Tag.FULL_GRAD, t, w.size)
            u, touches = worker.local_epoch(t, z)
            send_message(sock, Message(Tag.LOCAL_RESULT, t, u))
            send_message(sock, Message(Tag.STATS, t, np.array([float(touches)])))
            rounds += 1
    finally:
        sock.close()
