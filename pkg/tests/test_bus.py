"""Telemetry bus: wire protocol, QoS, record/replay.

Every test spins up a real server on an ephemeral loopback port and talks
to it over actual WebSocket connections; nothing is mocked.  The stall
tests use ~300 KB frame payloads so a non-reading subscriber saturates the
socket buffers deterministically.
"""

import asyncio
import json
import time

import numpy as np
import pytest
from websockets.asyncio.client import connect
from websockets.exceptions import ConnectionClosed

import tactiforce.bus as bus
from tactiforce.bus import (
    BusClient,
    BusServer,
    decode_frame_payload,
    frame_payload,
    load_recording,
    record,
    replay,
    resolve_bus_address,
)
from tactiforce.errors import BusError, ReplayError
from tactiforce.fields import TactileFrame


def run(coro):
    return asyncio.run(coro)


async def started_server() -> BusServer:
    server = BusServer(host="127.0.0.1", port=0)
    await server.start()
    return server


def make_frame(frame_id: int = 7, stamp: float = 1.25) -> TactileFrame:
    rng = np.random.default_rng(0)
    pixels = rng.random((120, 160, 3), dtype=np.float32)
    return TactileFrame(pixels=pixels, stamp=stamp, frame_id=frame_id)


class TestFramePayload:
    def test_round_trip_exact(self):
        frame = make_frame()
        payload = frame_payload(frame)
        assert payload["encoding"] == "tfr1+base64"
        assert payload["width"] == 160 and payload["height"] == 120
        back = decode_frame_payload(payload)
        np.testing.assert_array_equal(back.pixels, frame.pixels)
        assert back.frame_id == 7
        assert back.stamp == 1.25

    def test_unknown_encoding_rejected(self):
        with pytest.raises(BusError, match="encoding"):
            decode_frame_payload({"encoding": "png", "data": ""})


class TestResolveBusAddress:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("TACTIFORCE_BUS_ADDR", raising=False)
        assert resolve_bus_address() == (bus.DEFAULT_HOST, bus.DEFAULT_PORT)

    def test_env_host_and_port(self, monkeypatch):
        monkeypatch.setenv("TACTIFORCE_BUS_ADDR", "10.0.0.5:9100")
        assert resolve_bus_address() == ("10.0.0.5", 9100)

    def test_env_host_only(self, monkeypatch):
        monkeypatch.setenv("TACTIFORCE_BUS_ADDR", "10.0.0.5")
        assert resolve_bus_address() == ("10.0.0.5", bus.DEFAULT_PORT)

    def test_flags_beat_env(self, monkeypatch):
        monkeypatch.setenv("TACTIFORCE_BUS_ADDR", "10.0.0.5:9100")
        assert resolve_bus_address("127.0.0.1", 8001) == ("127.0.0.1", 8001)

    def test_bad_env_port(self, monkeypatch):
        monkeypatch.setenv("TACTIFORCE_BUS_ADDR", "host:notaport")
        with pytest.raises(BusError):
            resolve_bus_address()


class TestWireProtocol:
    def test_sub_unsub_acked(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(json.dumps({"type": "SUB", "topic": "/leader/state"}))
                    ack = json.loads(await ws.recv())
                    assert ack == {"type": "ACK", "op": "SUB", "topic": "/leader/state"}
                    await ws.send(json.dumps({"type": "UNSUB", "topic": "/leader/state"}))
                    ack = json.loads(await ws.recv())
                    assert ack == {"type": "ACK", "op": "UNSUB", "topic": "/leader/state"}
            finally:
                await server.stop()

        run(main())

    def test_unknown_topic_nacked_connection_survives(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(json.dumps({"type": "SUB", "topic": "/no/such"}))
                    nack = json.loads(await ws.recv())
                    assert nack["type"] == "NACK"
                    assert nack["reason"] == "unknown_topic"
                    # same connection keeps working
                    await ws.send(json.dumps({"type": "SUB", "topic": "/digit/force"}))
                    assert json.loads(await ws.recv())["type"] == "ACK"
            finally:
                await server.stop()

        run(main())

    def test_malformed_json_nacked_then_disconnected(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send("{this is not json")
                    nack = json.loads(await ws.recv())
                    assert nack["type"] == "NACK"
                    assert nack["reason"] == "malformed"
                    with pytest.raises(ConnectionClosed):
                        await asyncio.wait_for(ws.recv(), timeout=5.0)
            finally:
                await server.stop()

        run(main())

    def test_unknown_verb_nacked_then_disconnected(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(json.dumps({"type": "HELLO"}))
                    nack = json.loads(await ws.recv())
                    assert nack["reason"] == "unknown_type"
                    with pytest.raises(ConnectionClosed):
                        await asyncio.wait_for(ws.recv(), timeout=5.0)
            finally:
                await server.stop()

        run(main())

    def test_pub_with_non_object_data_nacked(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(
                        json.dumps({"type": "PUB", "topic": "/digit/force", "data": 3})
                    )
                    nack = json.loads(await ws.recv())
                    assert nack["reason"] == "malformed"
            finally:
                await server.stop()

        run(main())

    def test_pub_is_not_acked(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(
                        json.dumps({"type": "PUB", "topic": "/digit/force", "data": {"f": 1.0}})
                    )
                    with pytest.raises(asyncio.TimeoutError):
                        await asyncio.wait_for(ws.recv(), timeout=0.3)
                assert server.published["/digit/force"] == 1
            finally:
                await server.stop()

        run(main())

    def test_close_verb_ends_session(self):
        async def main():
            server = await started_server()
            try:
                async with connect(server.url) as ws:
                    await ws.send(json.dumps({"type": "SUB", "topic": "/digit/force"}))
                    await ws.recv()
                    assert server.stats()["sessions"] == 1
                    await ws.send(json.dumps({"type": "CLOSE"}))
                    deadline = time.monotonic() + 5.0
                    while server.stats()["sessions"] and time.monotonic() < deadline:
                        await asyncio.sleep(0.01)
                    assert server.stats()["sessions"] == 0
            finally:
                await server.stop()

        run(main())


class TestDelivery:
    def test_lossless_in_order_no_gaps(self):
        n = 3000

        async def main():
            server = await started_server()
            try:
                async with await BusClient.connect(server.url) as sub:
                    await sub.subscribe("/digit/force")
                    async with await BusClient.connect(server.url) as pub:
                        for k in range(n):
                            await pub.publish("/digit/force", {"i": k})
                        got = [await sub.recv(timeout=10.0) for _ in range(n)]
                assert [env["data"]["i"] for env in got] == list(range(n))
                assert [env["seq"] for env in got] == list(range(1, n + 1))
                assert server.drops["/digit/force"] == 0
            finally:
                await server.stop()

        run(main())

    def test_seq_is_per_topic(self):
        async def main():
            server = await started_server()
            try:
                for k in range(3):
                    a = server.publish("/leader/state", {"k": k})
                    b = server.publish("/follower/state", {"k": k})
                    assert a["seq"] == b["seq"] == k + 1
            finally:
                await server.stop()

        run(main())

    def test_delivery_starts_at_subscription(self):
        async def main():
            server = await started_server()
            try:
                server.publish("/digit/force", {"i": "early"})
                async with await BusClient.connect(server.url) as sub:
                    await sub.subscribe("/digit/force")
                    server.publish("/digit/force", {"i": "late"})
                    env = await sub.recv(timeout=5.0)
                    assert env["data"]["i"] == "late"
            finally:
                await server.stop()

        run(main())

    def test_local_callback_sees_envelope(self):
        async def main():
            server = await started_server()
            try:
                seen = []
                server.on_message("/operator/cmd", seen.append)
                env = server.publish("/operator/cmd", {"aperture_m": 0.02}, stamp=4.5)
                assert seen == [env]
                assert env["stamp"] == 4.5
                with pytest.raises(BusError):
                    server.on_message("/nope", seen.append)
                with pytest.raises(BusError):
                    server.publish("/nope", {})
            finally:
                await server.stop()

        run(main())

    def test_loopback_latency_small(self):
        async def main():
            server = await started_server()
            try:
                async with await BusClient.connect(server.url) as sub:
                    await sub.subscribe("/operator/cmd")
                    lags = []
                    for k in range(20):
                        t0 = time.monotonic()
                        server.publish("/operator/cmd", {"k": k})
                        env = await sub.recv(timeout=5.0)
                        lags.append(time.monotonic() - t0)
                        assert env["data"]["k"] == k
                assert np.median(lags) < 0.05
            finally:
                await server.stop()

        run(main())


class TestBackpressure:
    def test_stalled_subscriber_drops_frames_not_telemetry(self):
        payload = frame_payload(make_frame())

        async def main():
            server = await started_server()
            try:
                async with await BusClient.connect(server.url) as healthy:
                    await healthy.subscribe("/digit/force")
                    stalled = await connect(server.url, max_size=bus._MAX_FRAME_BYTES)
                    await stalled.send(json.dumps({"type": "SUB", "topic": "/digit/frame"}))
                    assert json.loads(await stalled.recv())["type"] == "ACK"
                    # a synchronous burst outruns any subscriber: the 64-deep
                    # frame ring must shed oldest frames, telemetry must not
                    n_force = 100
                    for k in range(n_force):
                        server.publish("/digit/frame", payload)
                        server.publish("/digit/force", {"i": k})
                    assert server.drops["/digit/frame"] == n_force - 64
                    assert server.drops["/digit/force"] == 0
                    got = [await healthy.recv(timeout=10.0) for _ in range(n_force)]
                    assert [env["data"]["i"] for env in got] == list(range(n_force))
                    await stalled.close()
            finally:
                await server.stop()

        run(main())

    def test_dead_lossless_subscriber_errored_not_buffered_forever(self, monkeypatch):
        monkeypatch.setattr(bus, "LOSSLESS_QUEUE_LIMIT", 32)

        async def main():
            server = await started_server()
            try:
                ws = await connect(server.url)
                await ws.send(json.dumps({"type": "SUB", "topic": "/digit/force"}))
                assert json.loads(await ws.recv())["type"] == "ACK"
                # a synchronous burst exceeds the sanity bound before the
                # drain task gets a chance to send anything
                for k in range(120):
                    server.publish("/digit/force", {"i": k})
                # the server must error the connection, not buffer forever
                saw_overflow_nack = False
                with pytest.raises(ConnectionClosed) as info:
                    while True:
                        msg = json.loads(await asyncio.wait_for(ws.recv(), timeout=10.0))
                        if msg.get("type") == "NACK" and msg.get("reason") == "overflow":
                            saw_overflow_nack = True
                assert saw_overflow_nack
                assert info.value.rcvd.code == 1011
            finally:
                await server.stop()

        run(main())


class TestRecordReplay:
    def test_record_replay_record_payload_identity(self, tmp_path):
        p1, p2 = tmp_path / "take1.jsonl", tmp_path / "take2.jsonl"
        n = 25

        async def main():
            server = await started_server()
            try:
                rec = asyncio.create_task(
                    record(server.url, ["/digit/force"], p1, limit=n)
                )
                await asyncio.sleep(0.2)  # let the recorder subscribe
                for k in range(n):
                    server.publish("/digit/force", {"i": k, "f": k * 0.5})
                assert await rec == n

                rec2 = asyncio.create_task(
                    record(server.url, ["/digit/force"], p2, limit=n)
                )
                await asyncio.sleep(0.2)
                assert await replay(server.url, p1, speed=100.0) == n
                assert await rec2 == n
            finally:
                await server.stop()

        run(main())
        first = [(e["topic"], e["data"]) for e in load_recording(p1)]
        second = [(e["topic"], e["data"]) for e in load_recording(p2)]
        assert first == second
        # replay got fresh seq numbers from the server, still gapless
        seqs = [e["seq"] for e in load_recording(p2)]
        assert seqs == list(range(seqs[0], seqs[0] + n))
        assert seqs[0] == n + 1

    def test_replay_preserves_relative_timing(self, tmp_path):
        path = tmp_path / "gaps.jsonl"
        envs = [
            {"type": "PUB", "topic": "/digit/force", "seq": i + 1,
             "stamp": float(i), "data": {"i": i}, "recv_stamp": 100.0 + 0.2 * i}
            for i in range(3)
        ]
        path.write_text("".join(json.dumps(e) + "\n" for e in envs))

        async def main():
            server = await started_server()
            try:
                stamps = []
                server.on_message("/digit/force", lambda env: stamps.append(time.monotonic()))
                t0 = time.monotonic()
                await replay(server.url, path, speed=1.0)
                elapsed = time.monotonic() - t0
                assert len(stamps) == 3
                assert elapsed >= 0.4  # two 0.2 s gaps at speed 1
            finally:
                await server.stop()

        run(main())

    def test_corrupt_recording_line_reported(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"topic": "/digit/force", "data": {}}\n{oops\n')
        with pytest.raises(ReplayError, match="line 2"):
            load_recording(path)

    def test_replay_rejects_bad_speed(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text("")
        with pytest.raises(ReplayError, match="speed"):
            run(replay("ws://127.0.0.1:1", path, speed=0.0))


class TestShutdown:
    def test_close_broadcast_on_stop(self):
        async def main():
            server = await started_server()
            client = await BusClient.connect(server.url)
            await client.subscribe("/leader/state")
            await server.stop()
            env = await client.recv(timeout=5.0)
            assert env is None  # closed cleanly
            assert client.server_closed
            await client.close()

        run(main())
