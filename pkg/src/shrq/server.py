"""The untrusted query server: stores, wire protocol, evaluation loop.

The server holds only public computation parameters (N, group descriptor,
hash id), the lookup-table digests, AES blobs it cannot open, and encrypted
tuples.  Its whole query-time behaviour is: pair slots, multiply, hash,
check membership, return the blob on a hit.

Wire format: newline-delimited UTF-8 JSON over TCP, binary fields base64.
Requests carry a "type" field:

    hello      {N, backend, hash, levels}           -> ack
    put_lookup {v, digests: [b64]}                  -> ack
    put_tuple  {level, id, slots: [b64 canonical]}  -> ack
    put_store  {id, blob: b64}                      -> ack
    delete     {id}                                 -> ack {found}
    query      {level, slots: [b64 canonical]}      -> result {matches: [{id, blob}]}

Anything malformed gets {"type": "error", "error": ...} and the connection
stays open.  Mutations are appended to a write-ahead log before they are
acknowledged and replayed on restart, so an acknowledged mutation survives
a crash between any two messages.
"""

import base64
import json
import os
import socket
import socketserver
import threading

from .ces import (
    EncryptedQuery,
    EncryptedTuple,
    LookupTable,
    compute,
    lookup_contains,
    serialize_lookup_table,
)
from .errors import DataIntegrityError, ProtocolError, ServerUnreachable
from .pairing import group_from_descriptor

_LOG_NAME = "log.jsonl"
_MUTATIONS = ("hello", "put_lookup", "put_tuple", "put_store", "delete")


def b64e(raw):
    return base64.b64encode(raw).decode("ascii")


def b64d(text):
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError(f"bad base64 payload: {exc}") from None


class ServerState:
    """All server-side state plus the message handler; transport-agnostic."""

    def __init__(self, state_dir=None, fsync=True, compact_every=10000):
        self.descriptor = None
        self.group = None
        self.hash_id = None
        self.levels = None
        self.lookup = None
        self.db_store = {}  # id -> AES blob bytes
        self.db_query = {}  # level -> {id: tuple of G elements}
        self.compute_calls = 0  # instrumentation: one per evaluated tuple
        self._state_dir = state_dir
        self._fsync = fsync
        self._compact_every = compact_every
        self._mutations_since_compact = 0
        self._log = None
        self._lock = threading.Lock()
        if state_dir is not None:
            os.makedirs(state_dir, exist_ok=True)
            self._replay()
            self._log = open(os.path.join(state_dir, _LOG_NAME), "a", encoding="utf-8")

    # -- persistence --------------------------------------------------------
    def _replay(self):
        path = os.path.join(self._state_dir, _LOG_NAME)
        if not os.path.exists(path):
            return
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                reply = self._dispatch(json.loads(line), log=False)
                if reply.get("type") == "error":
                    raise DataIntegrityError(f"corrupt state log: {reply['error']}")

    def _append_log(self, msg):
        if self._log is None:
            return
        self._log.write(json.dumps(msg, sort_keys=True) + "\n")
        self._log.flush()
        if self._fsync:
            os.fsync(self._log.fileno())
        self._mutations_since_compact += 1
        if self._compact_every and self._mutations_since_compact >= self._compact_every:
            self.compact()

    def snapshot_messages(self):
        """Current state as a minimal replayable message sequence."""
        msgs = []
        if self.descriptor is not None:
            msgs.append(
                {
                    "type": "hello",
                    "N": self.descriptor["N"],
                    "backend": {k: v for k, v in self.descriptor.items() if k != "N"},
                    "hash": self.hash_id,
                    "levels": self.levels,
                }
            )
        if self.lookup is not None:
            msgs.append(
                {
                    "type": "put_lookup",
                    "v": self.lookup.v,
                    "digests": [b64e(d) for d in sorted(self.lookup.digests)],
                }
            )
        for rid in sorted(self.db_store):
            msgs.append({"type": "put_store", "id": rid, "blob": b64e(self.db_store[rid])})
        for level in sorted(self.db_query):
            for rid in sorted(self.db_query[level]):
                slots = [b64e(self.group.canonical_bytes(s)) for s in self.db_query[level][rid]]
                msgs.append({"type": "put_tuple", "level": level, "id": rid, "slots": slots})
        return msgs

    def compact(self):
        """Rewrite the log as a snapshot, atomically."""
        if self._state_dir is None:
            return
        path = os.path.join(self._state_dir, _LOG_NAME)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for msg in self.snapshot_messages():
                fh.write(json.dumps(msg, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        if self._log is not None:
            self._log.close()
            self._log = open(path, "a", encoding="utf-8")
        self._mutations_since_compact = 0

    def close(self):
        if self._log is not None:
            self._log.close()
            self._log = None

    # -- message handling -----------------------------------------------------
    def handle_line(self, line):
        """Process one wire line, return one reply line (thread-safe)."""
        with self._lock:
            try:
                msg = json.loads(line)
                if not isinstance(msg, dict):
                    raise ProtocolError("message must be a JSON object")
            except (json.JSONDecodeError, ProtocolError) as exc:
                return json.dumps({"type": "error", "error": f"malformed message: {exc}"})
            return json.dumps(self._dispatch(msg, log=True), sort_keys=True)

    def request(self, msg):
        """In-process transport: same code path as TCP, JSON round-tripped."""
        return json.loads(self.handle_line(json.dumps(msg)))

    def _dispatch(self, msg, log):
        mtype = msg.get("type")
        try:
            if mtype == "hello":
                reply = self._do_hello(msg)
            elif mtype == "put_lookup":
                reply = self._do_put_lookup(msg)
            elif mtype == "put_tuple":
                reply = self._do_put_tuple(msg)
            elif mtype == "put_store":
                reply = self._do_put_store(msg)
            elif mtype == "delete":
                reply = self._do_delete(msg)
            elif mtype == "query":
                return self._do_query(msg)
            else:
                raise ProtocolError(f"unknown message type {mtype!r}")
        except (ProtocolError, DataIntegrityError, KeyError, TypeError, ValueError) as exc:
            return {"type": "error", "error": str(exc)}
        if log:
            self._append_log(msg)
        return reply

    def _require_params(self):
        if self.group is None:
            raise ProtocolError("no parameters pinned: send hello first")

    def _check_level(self, level):
        if not isinstance(level, int) or not 0 <= level < self.levels:
            raise ProtocolError(f"unknown level {level!r} (levels 0..{self.levels - 1})")

    def _do_hello(self, msg):
        desc = dict(msg["backend"])
        desc["N"] = str(msg["N"])
        levels = int(msg["levels"])
        if levels < 1:
            raise ProtocolError("levels must be >= 1")
        pinned = {"descriptor": desc, "hash": msg["hash"], "levels": levels}
        if self.descriptor is not None:
            current = {"descriptor": self.descriptor, "hash": self.hash_id, "levels": self.levels}
            if current != pinned:
                raise ProtocolError("parameter mismatch with pinned hello")
            return {"type": "ack"}
        if msg["hash"] != "SHA-256":
            raise ProtocolError(f"unsupported hash {msg['hash']!r}")
        self.group = group_from_descriptor(desc)
        self.descriptor = desc
        self.hash_id = msg["hash"]
        self.levels = levels
        return {"type": "ack"}

    def _do_put_lookup(self, msg):
        self._require_params()
        digests = [b64d(d) for d in msg["digests"]]
        if any(len(d) != 32 for d in digests):
            raise ProtocolError("lookup digests must be 32 bytes")
        uniq = frozenset(digests)
        if len(uniq) != len(digests):
            raise ProtocolError("duplicate lookup digests")
        self.lookup = LookupTable(uniq, int(msg["v"]))
        return {"type": "ack"}

    def _do_put_tuple(self, msg):
        self._require_params()
        level = msg["level"]
        self._check_level(level)
        rid = str(msg["id"])
        slots = tuple(self.group.decode(b64d(s)) for s in msg["slots"])
        if not slots:
            raise ProtocolError("tuple has no slots")
        bucket = self.db_query.setdefault(level, {})
        if rid in bucket:
            raise ProtocolError(f"duplicate id {rid!r} at level {level}")
        bucket[rid] = slots
        return {"type": "ack"}

    def _do_put_store(self, msg):
        self._require_params()
        rid = str(msg["id"])
        if rid in self.db_store:
            raise ProtocolError(f"duplicate id {rid!r} in store")
        self.db_store[rid] = b64d(msg["blob"])
        return {"type": "ack"}

    def _do_delete(self, msg):
        self._require_params()
        rid = str(msg["id"])
        found = rid in self.db_store
        self.db_store.pop(rid, None)
        for bucket in self.db_query.values():
            found |= bucket.pop(rid, None) is not None
        return {"type": "ack", "found": found}

    def _do_query(self, msg):
        try:
            self._require_params()
            level = msg["level"]
            self._check_level(level)
            if self.lookup is None:
                raise ProtocolError("no lookup table uploaded")
            query = EncryptedQuery(
                tuple(self.group.decode(b64d(s)) for s in msg["slots"]), level
            )
            matches = []
            for rid in sorted(self.db_query.get(level, {})):
                record = EncryptedTuple(rid, self.db_query[level][rid])
                value = compute(self.group, record, query)
                self.compute_calls += 1
                if lookup_contains(self.lookup, self.group, value):
                    blob = self.db_store.get(rid)
                    if blob is None:
                        raise DataIntegrityError(f"matched id {rid!r} missing from db-store")
                    matches.append({"id": rid, "blob": b64e(blob)})
            return {"type": "result", "matches": matches}
        except (ProtocolError, DataIntegrityError, KeyError, TypeError, ValueError) as exc:
            return {"type": "error", "error": str(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            reply = self.server.state.handle_line(line.decode("utf-8", errors="replace"))
            self.wfile.write(reply.encode("utf-8") + b"\n")
            self.wfile.flush()


class TcpServer(socketserver.ThreadingTCPServer):
    """Serve one ServerState over TCP; usable as a context manager in tests."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, state):
        super().__init__(address, _Handler)
        self.state = state

    @property
    def address(self):
        return self.server_address[:2]

    def start_background(self):
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(listen="127.0.0.1:9045", state_dir=None, fsync=True):
    """Blocking entry point for the server process."""
    host, _, port = listen.rpartition(":")
    state = ServerState(state_dir, fsync=fsync)
    srv = TcpServer((host or "127.0.0.1", int(port)), state)
    try:
        srv.serve_forever()
    finally:
        srv.server_close()
        state.close()


class ServerConnection:
    """Client end of the wire: one JSON line out, one JSON line back."""

    def __init__(self, host, port, timeout=30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ServerUnreachable(f"cannot connect to {host}:{port}: {exc}") from None
        self._file = self._sock.makefile("rwb")

    def request(self, msg):
        self._file.write(json.dumps(msg).encode("utf-8") + b"\n")
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ServerUnreachable("server closed the connection")
        return json.loads(line)

    def close(self):
        self._file.close()
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(address, timeout=30.0):
    host, _, port = address.rpartition(":")
    return ServerConnection(host or "127.0.0.1", int(port), timeout)
