"""WebSocket pub/sub telemetry bus.

One JSON envelope per WebSocket text frame:

``{"type": <verb>, "topic": str, "seq": int, "stamp": float, "data": {...}}``

Client verbs are ``SUB``, ``UNSUB``, ``PUB`` and ``CLOSE``; the server
answers ``SUB``/``UNSUB`` with ``ACK`` (or ``NACK`` with a reason), assigns
per-topic monotone ``seq`` numbers to deliveries, re-emits deliveries as
``PUB`` frames, and broadcasts ``CLOSE`` on graceful shutdown.  ``PUB`` is
not individually acknowledged -- per-message round trips would serialise
publishers at the control rate.

Quality of service is a property of the topic, not the subscriber:

* *lossless* topics (state, force, operator commands) queue without limit
  (up to a sanity bound that errors the connection) so a slow subscriber
  stalls delivery rather than losing telemetry;
* *lossy* topics (camera frames) keep a latest-wins ring per subscriber;
  overflow drops the oldest frame and counts the drop, so a stalled UI
  costs camera frames, never control telemetry.

Ordering is guaranteed per topic per publisher.  Delivery starts at
subscription time; there is no replay of earlier messages (recording and
replaying is the job of :func:`record` / :func:`replay`).

``/digit/frame`` payloads embed the raw ``TFR1`` container base64-encoded,
so any subscriber can reconstruct the exact float32 image.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from websockets.asyncio.client import connect
from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .errors import BusError, ReplayError

log = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8765

#: Hard sanity bound on a lossless per-client queue; exceeding it means the
#: subscriber is not a slow consumer but a dead one, and the connection is
#: errored rather than eating unbounded memory.
LOSSLESS_QUEUE_LIMIT = 200_000

_MAX_FRAME_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class TopicSpec:
    """A named topic with its payload schema and QoS class."""

    name: str
    payload: str  # StateRecord | ForceRecord | FrameRef | OperatorCmd
    qos: str  # "lossless" | "lossy"
    ring_depth: int = 64  # per-subscriber ring for lossy topics


DEFAULT_TOPICS: tuple[TopicSpec, ...] = (
    TopicSpec("/leader/state", "StateRecord", "lossless"),
    TopicSpec("/follower/state", "StateRecord", "lossless"),
    TopicSpec("/digit/frame", "FrameRef", "lossy", ring_depth=64),
    TopicSpec("/digit/force", "ForceRecord", "lossless"),
    TopicSpec("/operator/cmd", "OperatorCmd", "lossless"),
)


def frame_payload(frame) -> dict:
    """FrameRef payload for a TactileFrame: base64 of its TFR1 bytes."""
    h, w = frame.pixels.shape[:2]
    return {
        "frame_id": frame.frame_id,
        "stamp": frame.stamp,
        "width": w,
        "height": h,
        "encoding": "tfr1+base64",
        "data": base64.b64encode(frame.encode()).decode("ascii"),
    }


def decode_frame_payload(payload: dict):
    """Inverse of :func:`frame_payload`."""
    from .fields import TactileFrame

    if payload.get("encoding") != "tfr1+base64":
        raise BusError(f"unsupported frame encoding {payload.get('encoding')!r}")
    blob = base64.b64decode(payload["data"])
    return TactileFrame.decode(
        blob, stamp=float(payload.get("stamp", 0.0)), frame_id=int(payload.get("frame_id", 0))
    )


# ---------------------------------------------------------------------------
# Server


class _Session:
    """Per-connection outgoing queues and their drain task."""

    def __init__(self, ws, topics: dict[str, TopicSpec]):
        self.ws = ws
        self.subscriptions: set[str] = set()
        self._lossless: deque[str] = deque()
        self._lossy: dict[str, deque[str]] = {
            t.name: deque(maxlen=t.ring_depth) for t in topics.values() if t.qos == "lossy"
        }
        self.drops: dict[str, int] = {}
        self._wake = asyncio.Event()
        self._idle = asyncio.Event()
        self._idle.set()
        self.overflowed = False

    def enqueue(self, spec: TopicSpec, text: str) -> int:
        """Queue one delivery; returns the number of messages dropped."""
        dropped = 0
        if spec.qos == "lossless":
            self._lossless.append(text)
            if len(self._lossless) > LOSSLESS_QUEUE_LIMIT:
                self.overflowed = True
        else:
            ring = self._lossy[spec.name]
            if len(ring) == ring.maxlen:
                ring.popleft()
                dropped = 1
                self.drops[spec.name] = self.drops.get(spec.name, 0) + 1
            ring.append(text)
        self._idle.clear()
        self._wake.set()
        return dropped

    def enqueue_control(self, text: str) -> None:
        self._lossless.append(text)
        self._idle.clear()
        self._wake.set()

    def _next(self) -> str | None:
        if self._lossless:
            return self._lossless.popleft()
        for ring in self._lossy.values():
            if ring:
                return ring.popleft()
        return None

    async def run(self) -> None:
        while True:
            if self.overflowed:
                # A lossless backlog this deep means the subscriber is gone,
                # not slow; error the connection rather than grow unbounded.
                try:
                    await self.ws.send(json.dumps({"type": "NACK", "reason": "overflow"}))
                finally:
                    await self.ws.close(code=1011, reason="lossless queue overflow")
                return
            text = self._next()
            if text is None:
                self._idle.set()
                self._wake.clear()
                await self._wake.wait()
                continue
            await self.ws.send(text)

    async def drain(self, timeout: float) -> None:
        try:
            await asyncio.wait_for(self._idle.wait(), timeout)
        except asyncio.TimeoutError:
            pass


class BusServer:
    """Asyncio WebSocket bus server.

    In-process components publish via :meth:`publish` and listen via
    :meth:`on_message`; remote clients speak the wire protocol.
    """

    def __init__(
        self,
        host: str = DEFAULT_HOST,
        port: int = DEFAULT_PORT,
        topics: tuple[TopicSpec, ...] = DEFAULT_TOPICS,
    ):
        self.host = host
        self.port = port
        self.topics = {t.name: t for t in topics}
        self._seq = {t.name: 0 for t in topics}
        self._subs: dict[str, set[_Session]] = {t.name: set() for t in topics}
        self._sessions: dict[_Session, asyncio.Task] = {}
        self._local_subs: dict[str, list] = {}
        self._server = None
        self.published = {t.name: 0 for t in topics}
        self.drops = {t.name: 0 for t in topics}

    # -- lifecycle ----------------------------------------------------------

    async def start(self) -> None:
        self._server = await serve(
            self._handle, self.host, self.port, max_size=_MAX_FRAME_BYTES
        )
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("bus listening on ws://%s:%d", self.host, self.port)

    async def stop(self) -> None:
        """Broadcast CLOSE, flush what can be flushed, drop connections."""
        close_text = json.dumps({"type": "CLOSE"})
        sessions = list(self._sessions.items())
        for session, _task in sessions:
            session.enqueue_control(close_text)
        for session, _task in sessions:
            await session.drain(timeout=2.0)
        for session, task in sessions:
            task.cancel()
            try:
                await session.ws.close()
            except Exception:
                pass
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    # -- publishing -----------------------------------------------------------

    def publish(self, topic: str, data: dict, stamp: float | None = None) -> dict:
        """Assign a seq number and fan out to subscribers; returns the envelope."""
        spec = self.topics.get(topic)
        if spec is None:
            raise BusError(f"unknown topic {topic!r}")
        self._seq[topic] += 1
        envelope = {
            "type": "PUB",
            "topic": topic,
            "seq": self._seq[topic],
            "stamp": time.time() if stamp is None else stamp,
            "data": data,
        }
        self.published[topic] += 1
        text = json.dumps(envelope)
        for session in self._subs[topic]:
            self.drops[topic] += session.enqueue(spec, text)
        for cb in self._local_subs.get(topic, ()):
            try:
                cb(envelope)
            except Exception:
                log.exception("local subscriber for %s failed", topic)
        return envelope

    def on_message(self, topic: str, callback) -> None:
        """Register an in-process callback for a topic (no QoS involved)."""
        if topic not in self.topics:
            raise BusError(f"unknown topic {topic!r}")
        self._local_subs.setdefault(topic, []).append(callback)

    def stats(self) -> dict:
        return {
            "published": dict(self.published),
            "dropped": dict(self.drops),
            "sessions": len(self._sessions),
        }

    # -- connection handling ------------------------------------------------

    async def _handle(self, ws) -> None:
        session = _Session(ws, self.topics)
        task = asyncio.create_task(session.run())
        self._sessions[session] = task

        async def nack(reason: str, **extra) -> None:
            await ws.send(json.dumps({"type": "NACK", "reason": reason, **extra}))

        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("envelope must be a JSON object")
                    mtype = msg["type"]
                except (ValueError, KeyError) as exc:
                    await nack("malformed", detail=str(exc))
                    break  # disconnect on protocol violation
                if mtype == "SUB":
                    topic = msg.get("topic")
                    if topic not in self.topics:
                        await nack("unknown_topic", topic=topic)
                        continue
                    session.subscriptions.add(topic)
                    self._subs[topic].add(session)
                    await ws.send(json.dumps({"type": "ACK", "op": "SUB", "topic": topic}))
                elif mtype == "UNSUB":
                    topic = msg.get("topic")
                    if topic not in self.topics:
                        await nack("unknown_topic", topic=topic)
                        continue
                    session.subscriptions.discard(topic)
                    self._subs[topic].discard(session)
                    await ws.send(json.dumps({"type": "ACK", "op": "UNSUB", "topic": topic}))
                elif mtype == "PUB":
                    topic = msg.get("topic")
                    if topic not in self.topics:
                        await nack("unknown_topic", topic=topic)
                        continue
                    data = msg.get("data")
                    if not isinstance(data, dict):
                        await nack("malformed", detail="PUB data must be an object")
                        break
                    self.publish(topic, data, stamp=msg.get("stamp"))
                elif mtype == "CLOSE":
                    break
                else:
                    await nack("unknown_type", detail=str(mtype))
                    break
        except ConnectionClosed:
            pass
        finally:
            for topic in session.subscriptions:
                self._subs[topic].discard(session)
            task.cancel()
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
            self._sessions.pop(session, None)


# ---------------------------------------------------------------------------
# Client


class BusClient:
    """Asyncio bus client: subscribe, publish, iterate deliveries."""

    def __init__(self, ws):
        self._ws = ws
        self._queue: asyncio.Queue = asyncio.Queue()
        self._acks: dict[tuple[str, str], asyncio.Future] = {}
        self._reader = asyncio.create_task(self._read_loop())
        self.server_closed = False

    @classmethod
    async def connect(cls, url: str, open_timeout: float = 10.0) -> "BusClient":
        ws = await connect(url, max_size=_MAX_FRAME_BYTES, open_timeout=open_timeout)
        return cls(ws)

    async def __aenter__(self) -> "BusClient":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()

    async def _read_loop(self) -> None:
        try:
            async for raw in self._ws:
                msg = json.loads(raw)
                mtype = msg.get("type")
                if mtype == "PUB":
                    await self._queue.put(msg)
                elif mtype == "ACK":
                    fut = self._acks.pop((msg.get("op"), msg.get("topic")), None)
                    if fut is not None and not fut.done():
                        fut.set_result(msg)
                elif mtype == "NACK":
                    err = BusError(f"server NACK: {msg.get('reason')} ({msg})")
                    matched = False
                    for key, fut in list(self._acks.items()):
                        if key[1] == msg.get("topic") and not fut.done():
                            fut.set_exception(err)
                            self._acks.pop(key, None)
                            matched = True
                    if not matched:
                        await self._queue.put(err)
                elif mtype == "CLOSE":
                    self.server_closed = True
                    break
        except ConnectionClosed:
            pass
        except Exception as exc:  # malformed server frame etc.
            await self._queue.put(BusError(f"bus client read failed: {exc}"))
        finally:
            await self._queue.put(None)

    async def subscribe(self, topic: str) -> None:
        fut: asyncio.Future = asyncio.get_running_loop().create_future()
        self._acks[("SUB", topic)] = fut
        await self._ws.send(json.dumps({"type": "SUB", "topic": topic}))
        await asyncio.wait_for(fut, timeout=10.0)

    async def unsubscribe(self, topic: str) -> None:
        fut: asyncio.Future = asyncio.get_running_loop().create_future()
        self._acks[("UNSUB", topic)] = fut
        await self._ws.send(json.dumps({"type": "UNSUB", "topic": topic}))
        await asyncio.wait_for(fut, timeout=10.0)

    async def publish(self, topic: str, data: dict, stamp: float | None = None) -> None:
        envelope = {
            "type": "PUB",
            "topic": topic,
            "stamp": time.time() if stamp is None else stamp,
            "data": data,
        }
        await self._ws.send(json.dumps(envelope))

    async def recv(self, timeout: float | None = None) -> dict | None:
        """Next delivered envelope; None when the bus closed."""
        if timeout is None:
            item = await self._queue.get()
        else:
            item = await asyncio.wait_for(self._queue.get(), timeout)
        if isinstance(item, BusError):
            raise item
        return item

    async def messages(self):
        """Async-iterate deliveries until the connection closes."""
        while True:
            item = await self.recv()
            if item is None:
                return
            yield item

    async def close(self) -> None:
        try:
            await self._ws.send(json.dumps({"type": "CLOSE"}))
        except ConnectionClosed:
            pass
        await self._ws.close()
        self._reader.cancel()
        try:
            await self._reader
        except (asyncio.CancelledError, Exception):
            pass


# ---------------------------------------------------------------------------
# Record / replay


async def record(
    url: str,
    topics: list[str],
    path: str | Path,
    limit: int | None = None,
    duration: float | None = None,
) -> int:
    """Subscribe and append every delivery to a JSON-lines file.

    Each line is the delivered envelope plus a ``recv_stamp`` wall-clock
    field.  Stops after ``limit`` messages, after ``duration`` seconds, or
    when the server closes; returns the number of records written.
    """
    written = 0
    deadline = None if duration is None else time.monotonic() + duration
    async with await BusClient.connect(url) as client:
        for topic in topics:
            await client.subscribe(topic)
        with open(path, "w") as fh:
            while limit is None or written < limit:
                timeout = None
                if deadline is not None:
                    timeout = deadline - time.monotonic()
                    if timeout <= 0:
                        break
                try:
                    env = await client.recv(timeout=timeout)
                except asyncio.TimeoutError:
                    break
                if env is None:
                    break
                env["recv_stamp"] = time.time()
                fh.write(json.dumps(env) + "\n")
                written += 1
    return written


def load_recording(path: str | Path) -> list[dict]:
    """Parse a recorded JSON-lines file, validating each line."""
    envelopes = []
    try:
        fh = open(path)
    except OSError as exc:
        raise ReplayError(f"cannot read recording {path}: {exc}") from exc
    with fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                env = json.loads(line)
                if not isinstance(env, dict) or "topic" not in env or "data" not in env:
                    raise ValueError("missing topic/data")
            except ValueError as exc:
                raise ReplayError(f"{path}: corrupt record on line {i}: {exc}") from exc
            envelopes.append(env)
    return envelopes


async def replay(url: str, path: str | Path, speed: float = 1.0) -> int:
    """Re-publish a recording with its original relative timing.

    Inter-message gaps are scaled by ``1/speed``; messages get fresh seq
    numbers from the server.  Returns the number of messages re-published.
    """
    if speed <= 0:
        raise ReplayError("speed must be positive")
    envelopes = load_recording(path)
    if not envelopes:
        return 0

    def timestamp(env: dict) -> float:
        return float(env.get("recv_stamp", env.get("stamp", 0.0)))

    t0 = timestamp(envelopes[0])
    start = time.monotonic()
    async with await BusClient.connect(url) as client:
        for env in envelopes:
            target = start + (timestamp(env) - t0) / speed
            delay = target - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            await client.publish(env["topic"], env["data"], stamp=env.get("stamp"))
    return len(envelopes)


def resolve_bus_address(
    flag_host: str | None = None,
    flag_port: int | None = None,
    default_host: str = DEFAULT_HOST,
    default_port: int = DEFAULT_PORT,
) -> tuple[str, int]:
    """Bus bind address with precedence: CLI flags > TACTIFORCE_BUS_ADDR > defaults.

    The env var accepts ``host:port`` or just ``host``.
    """
    import os

    env = os.environ.get("TACTIFORCE_BUS_ADDR", "")
    env_host: str | None = None
    env_port: int | None = None
    if env:
        if ":" in env:
            env_host, port_s = env.rsplit(":", 1)
            try:
                env_port = int(port_s)
            except ValueError as exc:
                raise BusError(f"bad TACTIFORCE_BUS_ADDR {env!r}") from exc
        else:
            env_host = env
    host = flag_host or env_host or default_host
    port = flag_port if flag_port is not None else (env_port if env_port is not None else default_port)
    return host, port
