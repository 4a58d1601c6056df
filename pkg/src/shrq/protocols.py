"""Setup and query orchestration for the three sphere protocols and ranges.

Protocol variants (DeploymentConfig.protocol):

    "t"  one store, radius capped at sqrt(v);
    "c"  one coarse store per power-of-two level, query runs at the minimal
         level whose transformed radius fits the lookup table;
    "l"  stores per power-of-b_c level, query runs once per layer of a
         gap-free layer plan and the union is deduplicated client-side.

Every pipeline ends with client-side validation against the original
integer predicate, so the returned ResultSet is exact regardless of how
much the coarse execution over-covered.
"""

import json
import secrets
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .ces import (
    LAYOUT_UNIFIED,
    PublicParams,
    create_lookup_table,
    query_encrypt,
    tuple_encrypt,
)
from .errors import (
    ConfigError,
    DataIntegrityError,
    DuplicateIdError,
    NotFoundError,
    ProtocolError,
    QueryRejected,
    SetupError,
)
from .geometry import (
    RangeQuery,
    SphereQuery,
    coarse_transform,
    coarsity_base,
    covering_radii,
    make_data_component,
    make_sphere_query_component,
    range_contains,
    range_to_sphere,
    select_coarsity_exponent,
    sphere_contains,
    transform_sphere_query,
    validate_point,
)
from .pairing import CURVE_A1
from .server import b64d, b64e

PROTOCOL_TABLE = "t"
PROTOCOL_COARSE = "c"
PROTOCOL_LAYERED = "l"

_NONCE_LEN = 12


@dataclass
class DeploymentConfig:
    protocol: str
    layout: str
    d: int
    v: int
    x_max: int
    e_max: int = 0
    b_c: int | None = None
    backend: str = CURVE_A1

    @property
    def levels(self):
        return self.e_max + 1

    def level_factor(self, level):
        if self.protocol == PROTOCOL_LAYERED:
            return self.b_c**level
        return 2**level


def make_config(protocol, d, v, x_max, e_max=0, backend=CURVE_A1, layout=LAYOUT_UNIFIED):
    """Validate and derive the deployment parameters."""
    protocol = protocol.lower()
    if protocol not in (PROTOCOL_TABLE, PROTOCOL_COARSE, PROTOCOL_LAYERED):
        raise ConfigError(f"unknown protocol {protocol!r} (expected t, c or l)")
    if d < 1 or v < 0 or x_max < 1:
        raise ConfigError("need d >= 1, v >= 0, x_max >= 1")
    if protocol == PROTOCOL_TABLE:
        if e_max != 0:
            raise ConfigError("single-table protocol has exactly one level (E_max = 0)")
    elif e_max < 0:
        raise ConfigError("E_max must be non-negative")
    b_c = coarsity_base(v, d) if protocol == PROTOCOL_LAYERED else None
    return DeploymentConfig(protocol, layout, d, v, x_max, e_max, b_c, backend)


@dataclass
class ResultSet:
    """Validated query answer: (id, point) pairs sorted by id, deduplicated."""

    records: list = field(default_factory=list)

    @property
    def ids(self):
        return {rid for rid, _ in self.records}

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if isinstance(other, ResultSet):
            return self.records == other.records
        return NotImplemented


# -- record encryption (db-store blobs) --------------------------------------


def encrypt_record(sk, rid, coords):
    """AES-256-GCM blob = nonce || ciphertext || tag, id bound as AAD."""
    nonce = secrets.token_bytes(_NONCE_LEN)
    payload = json.dumps({"coords": list(coords)}).encode("utf-8")
    return nonce + AESGCM(sk.aes_key).encrypt(nonce, payload, rid.encode("utf-8"))


def decrypt_record(sk, rid, blob):
    if len(blob) < _NONCE_LEN + 16:
        raise DataIntegrityError(f"record {rid!r}: blob too short")
    try:
        payload = AESGCM(sk.aes_key).decrypt(blob[:_NONCE_LEN], blob[_NONCE_LEN:], rid.encode("utf-8"))
    except InvalidTag:
        raise DataIntegrityError(f"record {rid!r}: AES authentication failed") from None
    return tuple(json.loads(payload)["coords"])


# -- wire helpers -------------------------------------------------------------


def _send(server, msg):
    reply = server.request(msg)
    if reply.get("type") == "error":
        text = reply.get("error", "")
        if "duplicate id" in text:
            raise DuplicateIdError(text)
        raise ProtocolError(f"server error: {text}")
    return reply


def hello_message(config, pp):
    desc = pp.to_group().params.describe()
    return {
        "type": "hello",
        "N": desc.pop("N"),
        "backend": desc,
        "hash": pp.hash_id,
        "levels": config.levels,
    }


def lookup_message(table):
    return {
        "type": "put_lookup",
        "v": table.v,
        "digests": [b64e(d) for d in sorted(table.digests)],
    }


def point_messages(config, sk, rid, coords, rng=None):
    """db-store blob plus one encrypted tuple per coarsity level."""
    rid = str(rid)
    coords = validate_point(coords, config.d, config.x_max, label=rid)
    group = sk.group
    msgs = [{"type": "put_store", "id": rid, "blob": b64e(encrypt_record(sk, rid, coords))}]
    for level in range(config.levels):
        comp = make_data_component(
            coarse_transform(coords, config.level_factor(level)), config.layout
        )
        enc = tuple_encrypt(sk, comp, rid, rng=rng)
        msgs.append(
            {
                "type": "put_tuple",
                "level": level,
                "id": rid,
                "slots": [b64e(group.canonical_bytes(s)) for s in enc.slots],
            }
        )
    return msgs


def setup_messages(config, sk, dataset, rng=None):
    """The full upload stream: hello, lookup table, then every record."""
    yield hello_message(config, _public_params(sk))
    yield lookup_message(create_lookup_table(sk))
    seen = set()
    for rid, coords in dataset:
        rid = str(rid)
        if rid in seen:
            raise SetupError(f"duplicate record id {rid!r} in dataset")
        seen.add(rid)
        yield from point_messages(config, sk, rid, coords, rng=rng)


def _public_params(sk):
    params = sk.group.params
    return PublicParams(params.backend, params.N, params.p, params.l)


def run_setup(config, sk, dataset, server, rng=None):
    """Send the whole setup stream; returns the number of messages sent."""
    count = 0
    for msg in setup_messages(config, sk, dataset, rng=rng):
        _send(server, msg)
        count += 1
    return count


# -- dynamic updates -----------------------------------------------------------


def insert_point(config, sk, rid, coords, server, rng=None):
    for msg in point_messages(config, sk, rid, coords, rng=rng):
        _send(server, msg)


def delete_point(config, sk, rid, server):
    reply = _send(server, {"type": "delete", "id": str(rid)})
    if not reply.get("found"):
        raise NotFoundError(f"record id {rid!r} not present")


def update_point(config, sk, rid, coords, server, rng=None):
    delete_point(config, sk, rid, server)
    insert_point(config, sk, rid, coords, server, rng=rng)


# -- query pipeline -------------------------------------------------------------


def _wrap_guard(sk, scaled_radius):
    # dot values live mod q2; a layer radius whose square reaches the
    # margin would let in-range residues collide with out-of-range dots
    q2 = sk.group.params.q2
    limit = q2 - (sk.v + sk.d * sk.x_max * sk.x_max)
    if scaled_radius * scaled_radius >= limit:
        raise QueryRejected(
            "radius-unsupported", f"radius {scaled_radius} would wrap dot values modulo q2"
        )


def _plan(config, sk, sphere, active_dims):
    """(level, transformed query, factor) triples the query will execute."""
    r, v = sphere.radius, config.v
    if config.protocol == PROTOCOL_TABLE:
        if r * r > v:
            raise QueryRejected(
                "radius-unsupported", f"r > sqrt(v): radius {r} exceeds sqrt({v})"
            )
        return [(0, sphere, 1)]
    if config.protocol == PROTOCOL_COARSE:
        e = select_coarsity_exponent(r, v, active_dims, config.e_max)
        factor = 2**e
        slack = active_dims**0.5 if e else 0.0
        return [(e, transform_sphere_query(sphere, factor, slack), factor)]
    plan = covering_radii(r, v, active_dims, config.b_c, config.e_max)
    for layer in plan:
        _wrap_guard(sk, layer.scaled_radius)
    return [
        (
            layer.index,
            SphereQuery(coarse_transform(sphere.center, layer.factor), layer.scaled_radius),
            layer.factor,
        )
        for layer in plan
    ]


def check_sphere_support(config, sk, query, cols=None):
    """Raise QueryRejected if the deployment cannot run this query; the
    check is pure, so callers can fail fast before opening a connection."""
    active = config.d if cols is None else len(set(cols))
    _plan(config, sk, query, active)


def check_range_support(config, sk, rq):
    lo, hi = max(rq.lo, 0), min(rq.hi, config.x_max)
    if lo > hi:
        return
    _plan(config, sk, range_to_sphere(RangeQuery(rq.col, lo, hi), config.d), 1)


def query_message(sk, comp, level):
    enc = query_encrypt(sk, comp, level)
    return {
        "type": "query",
        "level": level,
        "slots": [b64e(sk.group.canonical_bytes(s)) for s in enc.slots],
    }


def _execute(config, sk, server, plan, cols):
    """Run every planned level, union the matches by id (first blob wins)."""
    raw = {}
    for level, tsphere, _factor in plan:
        comp = make_sphere_query_component(tsphere, config.layout, cols)
        reply = _send(server, query_message(sk, comp, level))
        if reply.get("type") != "result":
            raise ProtocolError(f"unexpected reply {reply.get('type')!r}")
        for match in reply["matches"]:
            raw.setdefault(str(match["id"]), match["blob"])
    return raw


def validate(raw_records, predicate):
    """Keep exactly the records satisfying the original integer predicate."""
    kept = [(rid, coords) for rid, coords in raw_records if predicate(coords)]
    kept.sort(key=lambda item: item[0])
    return ResultSet(kept)


def _decrypt_all(sk, raw):
    return [(rid, decrypt_record(sk, rid, b64d(blob))) for rid, blob in raw.items()]


def query_sphere(config, sk, query, server, cols=None, return_raw=False):
    """Full sphere pipeline: plan, encrypt, execute, decrypt, validate."""
    for c in query.center:
        if not 0 <= c <= config.x_max:
            raise QueryRejected("center-out-of-domain", f"center coordinate {c} outside [0, {config.x_max}]")
    active = config.d if cols is None else len(set(cols))
    plan = _plan(config, sk, query, active)
    raw = _execute(config, sk, server, plan, cols)
    records = _decrypt_all(sk, raw)
    result = validate(records, lambda coords: sphere_contains(coords, query, cols))
    if return_raw:
        return result, {rid for rid, _ in records}
    return result


def query_range(config, sk, rq, server, return_raw=False):
    """Range pipeline: clamp to the domain, run as a one-column sphere, trim
    the odd-width over-cover during validation."""
    if config.layout != LAYOUT_UNIFIED:
        raise ConfigError("range queries need a unified-layout deployment")
    if rq.col > config.d:
        raise ConfigError(f"column {rq.col} exceeds dimension count {config.d}")
    lo, hi = max(rq.lo, 0), min(rq.hi, config.x_max)
    if lo > hi:
        return (ResultSet([]), set()) if return_raw else ResultSet([])
    clamped = RangeQuery(rq.col, lo, hi)
    sphere = range_to_sphere(clamped, config.d)
    plan = _plan(config, sk, sphere, 1)
    raw = _execute(config, sk, server, plan, cols=(rq.col,))
    records = _decrypt_all(sk, raw)
    result = validate(records, lambda coords: range_contains(coords, clamped))
    if return_raw:
        return result, {rid for rid, _ in records}
    return result
