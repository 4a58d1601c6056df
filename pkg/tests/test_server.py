import json
import random

import pytest

from conftest import random_dataset
from shrq import ces, protocols as prot
from shrq.ces import LAYOUT_SHRQ
from shrq.pairing import TRANSPARENT
from shrq.geometry import SphereQuery, make_sphere_query_component
from shrq.oracle import hrq_oracle
from shrq.server import ServerConnection, ServerState, TcpServer, b64e, connect


@pytest.fixture(scope="module")
def deployment():
    config = prot.make_config("c", 2, 400, 100, e_max=2, backend=TRANSPARENT, layout=LAYOUT_SHRQ)
    sk, _ = ces.keygen(32, 2, LAYOUT_SHRQ, 400, 100, TRANSPARENT, rng=random.Random(31))
    return config, sk


def fill(config, sk, dataset, server, rng):
    prot.run_setup(config, sk, dataset, server, rng=rng)


# -- message-level behaviour ------------------------------------------------------


def test_put_then_query_roundtrip(deployment, rng):
    config, sk = deployment
    server = ServerState()
    ds = [("p1", (10, 10)), ("p2", (90, 90))]
    fill(config, sk, ds, server, rng)
    comp = make_sphere_query_component(SphereQuery((10, 10), 1), config.layout)
    reply = server.request(prot.query_message(sk, comp, 0))
    assert reply["type"] == "result"
    assert [m["id"] for m in reply["matches"]] == ["p1"]


def test_query_on_empty_level(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, [], server, rng)
    comp = make_sphere_query_component(SphereQuery((1, 1), 1), config.layout)
    reply = server.request(prot.query_message(sk, comp, 1))
    assert reply == {"type": "result", "matches": []}


def test_unknown_level_is_protocol_error(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, [], server, rng)
    comp = make_sphere_query_component(SphereQuery((1, 1), 1), config.layout)
    for bad in (3, -1, "0"):
        reply = server.request(dict(prot.query_message(sk, comp, 0), level=bad))
        assert reply["type"] == "error" and "level" in reply["error"]


def test_messages_before_hello_fail():
    server = ServerState()
    reply = server.request({"type": "put_store", "id": "a", "blob": b64e(b"x")})
    assert reply["type"] == "error" and "hello" in reply["error"]


def test_malformed_and_unknown_messages():
    server = ServerState()
    assert json.loads(server.handle_line("{not json"))["type"] == "error"
    assert json.loads(server.handle_line('"just a string"'))["type"] == "error"
    assert server.request({"type": "frobnicate"})["type"] == "error"
    assert server.request({"type": "hello"})["type"] == "error"  # missing fields


def test_hello_pinning(deployment):
    config, sk = deployment
    server = ServerState()
    hello = prot.hello_message(config, prot._public_params(sk))
    assert server.request(hello)["type"] == "ack"
    assert server.request(hello)["type"] == "ack"  # idempotent re-hello
    other = dict(hello, N=str(int(hello["N"]) + 2))
    reply = server.request(other)
    assert reply["type"] == "error" and "mismatch" in reply["error"]


def test_duplicate_puts_rejected(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, [("a", (1, 1))], server, rng)
    msgs = prot.point_messages(config, sk, "a", (2, 2), rng=rng)
    replies = [server.request(m) for m in msgs]
    assert all(r["type"] == "error" and "duplicate id" in r["error"] for r in replies)


def test_delete_reports_found(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, [("a", (1, 1))], server, rng)
    assert server.request({"type": "delete", "id": "a"}) == {"type": "ack", "found": True}
    assert server.request({"type": "delete", "id": "a"}) == {"type": "ack", "found": False}


def test_matched_id_missing_from_store_is_integrity_error(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, [("a", (5, 5))], server, rng)
    del server.db_store["a"]
    comp = make_sphere_query_component(SphereQuery((5, 5), 1), config.layout)
    reply = server.request(prot.query_message(sk, comp, 0))
    assert reply["type"] == "error" and "db-store" in reply["error"]


def test_compute_call_count_is_store_size(deployment, rng):
    config, sk = deployment
    ds = random_dataset(rng, 17)
    server = ServerState()
    fill(config, sk, ds, server, rng)
    comp = make_sphere_query_component(SphereQuery((3, 3), 5), config.layout)
    before = server.compute_calls
    server.request(prot.query_message(sk, comp, 0))
    assert server.compute_calls - before == 17
    before = server.compute_calls
    server.request(prot.query_message(sk, comp, 1))
    assert server.compute_calls - before == 17


def test_query_reply_deterministic(deployment, rng):
    config, sk = deployment
    server = ServerState()
    fill(config, sk, random_dataset(rng, 25), server, rng)
    comp = make_sphere_query_component(SphereQuery((40, 40), 18), config.layout)
    line = json.dumps(prot.query_message(sk, comp, 0))
    assert server.handle_line(line) == server.handle_line(line)


# -- persistence --------------------------------------------------------------------


def test_restart_replays_state(deployment, rng, tmp_path):
    config, sk = deployment
    ds = random_dataset(rng, 12)
    first = ServerState(str(tmp_path))
    fill(config, sk, ds, first, rng)
    q = SphereQuery((50, 50), 20)
    want = prot.query_sphere(config, sk, q, first)
    first.close()

    reborn = ServerState(str(tmp_path))
    assert prot.query_sphere(config, sk, q, reborn) == want
    assert reborn.db_store.keys() == first.db_store.keys()


def test_restart_between_any_two_messages(deployment, rng, tmp_path):
    config, sk = deployment
    msgs = list(prot.setup_messages(config, sk, random_dataset(rng, 3), rng=rng))
    cut = len(msgs) // 2
    state = ServerState(str(tmp_path))
    for msg in msgs[:cut]:
        assert state.request(msg)["type"] == "ack"
    state.close()  # simulated crash after the ack

    state = ServerState(str(tmp_path))
    for msg in msgs[cut:]:
        assert state.request(msg)["type"] == "ack"
    q = SphereQuery((50, 50), 20)
    fresh = ServerState()
    for msg in msgs:
        fresh.request(msg)
    assert prot.query_sphere(config, sk, q, state) == prot.query_sphere(config, sk, q, fresh)


def test_compaction_preserves_state(deployment, rng, tmp_path):
    config, sk = deployment
    ds = random_dataset(rng, 10)
    state = ServerState(str(tmp_path))
    fill(config, sk, ds, state, rng)
    state.request({"type": "delete", "id": ds[0][0]})
    q = SphereQuery((50, 50), 20)
    want = prot.query_sphere(config, sk, q, state)
    state.compact()
    state.close()
    reborn = ServerState(str(tmp_path))
    assert prot.query_sphere(config, sk, q, reborn) == want


def test_mutations_logged_queries_not(deployment, rng, tmp_path):
    config, sk = deployment
    state = ServerState(str(tmp_path))
    fill(config, sk, [("a", (1, 2))], state, rng)
    comp = make_sphere_query_component(SphereQuery((1, 2), 1), config.layout)
    state.request(prot.query_message(sk, comp, 0))
    state.close()
    lines = (tmp_path / "log.jsonl").read_text().strip().splitlines()
    kinds = [json.loads(line)["type"] for line in lines]
    assert "query" not in kinds
    assert kinds.count("hello") == 1


# -- TCP transport ---------------------------------------------------------------------


def test_tcp_round_trip(deployment, rng):
    config, sk = deployment
    ds = random_dataset(rng, 15)
    state = ServerState()
    srv = TcpServer(("127.0.0.1", 0), state)
    srv.start_background()
    host, port = srv.address
    try:
        with ServerConnection(host, port) as conn:
            prot.run_setup(config, sk, ds, conn, rng=rng)
            q = SphereQuery((30, 30), 19)
            got = prot.query_sphere(config, sk, q, conn)
            assert got.ids == hrq_oracle(ds, q)
    finally:
        srv.shutdown()
        srv.server_close()


def test_tcp_malformed_line_keeps_connection(deployment):
    config, sk = deployment
    state = ServerState()
    srv = TcpServer(("127.0.0.1", 0), state)
    srv.start_background()
    host, port = srv.address
    try:
        with ServerConnection(host, port) as conn:
            conn._file.write(b"zzz not json\n")
            conn._file.flush()
            assert json.loads(conn._file.readline())["type"] == "error"
            hello = prot.hello_message(config, prot._public_params(sk))
            assert conn.request(hello)["type"] == "ack"  # still usable
    finally:
        srv.shutdown()
        srv.server_close()


def test_connect_helper_unreachable():
    from shrq.errors import ServerUnreachable

    with pytest.raises(ServerUnreachable):
        connect("127.0.0.1:9")
