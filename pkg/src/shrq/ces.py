"""Slot-wise component encryption with homomorphic dot-product evaluation.

A data component and a query component (fixed-length integer vectors) are
encrypted slot by slot as s^{x_i} * h^{r*Y_i}.  Pairing matching slots and
multiplying the results yields

    T = e(s,s)^{alpha * (dot(m, q) + beta)}

because the blinding factors pair to e(h,h)^{r_m * r_q * (A.B)} = 1
(A.B is a multiple of q1 and h has order q1) and the cross terms
e(s, h) vanish outright.  The server decides "dot value in [0, v]" by
hashing T against a precomputed lookup table, learning nothing else.

alpha and beta are long-term key material: the lookup table is built from
them once at setup, so they cannot be refreshed per query (only the
blinding scalars r_m, r_q are fresh).  Correctness needs
q2 > 2*(v + d*x_max^2): dot values live mod q2, and that margin forces
every out-of-range dot (negative residues included) to miss the table.
"""

import hashlib
import math
import secrets
from dataclasses import dataclass

from .errors import ConfigError, DataIntegrityError, NotFoundError, ProtocolError
from .pairing import CURVE_A1, GTElement, group_from_descriptor, group_gen

LAYOUT_SHRQ = "shrq"  # {m_1..m_d, 1, ||m||^2}, length d+2
LAYOUT_UNIFIED = "unified"  # {m_1..m_d, 1, m_1^2..m_d^2}, length 2d+1

HASH_ID = "SHA-256"


def layout_len(layout, d):
    if layout == LAYOUT_SHRQ:
        return d + 2
    if layout == LAYOUT_UNIFIED:
        return 2 * d + 1
    raise ConfigError(f"unknown layout {layout!r}")


@dataclass(frozen=True)
class Component:
    """Integer vector derived from a point or query; slot const_slot pairs
    with the other side's constant-1 slot."""

    entries: tuple
    const_slot: int

    def __post_init__(self):
        if not 0 <= self.const_slot < len(self.entries):
            raise ConfigError("const_slot out of range")


@dataclass(frozen=True)
class PublicParams:
    """Everything the server may hold: group shape and hash choice only."""

    backend: str
    N: int
    p: int | None = None
    l: int | None = None
    hash_id: str = HASH_ID

    def to_group(self):
        desc = {"backend": self.backend, "N": str(self.N)}
        if self.p is not None:
            desc["p"] = str(self.p)
            desc["l"] = str(self.l)
        return group_from_descriptor(desc)


@dataclass
class SecretKey:
    """All owner-side secrets plus the layout the components must follow."""

    group: object
    g: object
    u: object
    s: object  # g^q1, order q2: carries the message slots
    h: object  # u^q2, order q1: carries the blinding
    A: list
    B: list
    alpha: int
    beta: int
    aes_key: bytes
    layout: str
    d: int
    v: int
    x_max: int

    @property
    def L(self):
        return layout_len(self.layout, self.d)


@dataclass
class EncryptedTuple:
    id: str | None
    slots: tuple


@dataclass
class EncryptedQuery:
    slots: tuple
    level: int = 0


@dataclass(frozen=True)
class LookupTable:
    digests: frozenset  # 32-byte SHA-256 values
    v: int


def margin_bound(d, v, x_max):
    """Smallest value q2 must exceed for exact table membership."""
    return 2 * (v + d * x_max * x_max)


def keygen(lambda_bits, d, layout, v, x_max, backend=CURVE_A1, rng=None, group=None):
    """Generate a secret key and the server-shareable parameters.

    The B vector is solved so that A.B is a multiple of q1 mod N, which is
    what makes the blinding disappear inside compute().
    """
    rng = rng if rng is not None else secrets.SystemRandom()
    if group is None:
        group = group_gen(lambda_bits, backend, rng)
    params = group.params
    if params.q1 is None:
        raise ConfigError("keygen needs a group with its factorization")
    q1, q2, N = params.q1, params.q2, params.N
    bound = margin_bound(d, v, x_max)
    if q2 <= bound:
        raise ConfigError(
            f"correctness margin violated: need q2 > 2*(v + d*x_max^2) = {bound}, got q2 = {q2}"
        )
    if v + 1 > q2:
        raise ConfigError(f"lookup bound too large: need v + 1 <= q2, got v = {v}, q2 = {q2}")
    L = layout_len(layout, d)

    g = group.random_generator(rng)
    u = group.random_generator(rng)
    s = group.pow(g, q1)
    h = group.pow(u, q2)

    A = [rng.randrange(N) for _ in range(L)]
    while math.gcd(A[-1], N) != 1:
        A[-1] = rng.randrange(N)
    B = [rng.randrange(N) for _ in range(L - 1)]
    r_factor = rng.randrange(1, N)
    partial = sum(a * b for a, b in zip(A, B)) % N
    B.append((r_factor * q1 - partial) * pow(A[-1], -1, N) % N)

    alpha = rng.randrange(1, N)
    while alpha % q2 == 0:
        alpha = rng.randrange(1, N)
    beta = rng.randrange(N)
    aes_key = rng.randbytes(32)

    sk = SecretKey(group, g, u, s, h, A, B, alpha, beta, aes_key, layout, d, v, x_max)
    pp = PublicParams(params.backend, N, params.p, params.l)
    return sk, pp


def _check_len(sk, comp):
    if len(comp.entries) != sk.L:
        raise ProtocolError(f"component has {len(comp.entries)} slots, key expects {sk.L}")


def tuple_encrypt(sk, comp, record_id=None, rng=None, blinding=None):
    """Encrypt a data component; fresh blinding scalar per call unless pinned."""
    _check_len(sk, comp)
    if blinding is None:
        rng = rng if rng is not None else secrets.SystemRandom()
        blinding = rng.randrange(1, sk.group.N)
    group = sk.group
    slots = tuple(
        group.mul(group.pow(sk.s, int(m_i)), group.pow(sk.h, blinding * a_i))
        for m_i, a_i in zip(comp.entries, sk.A)
    )
    return EncryptedTuple(record_id, slots)


def query_encrypt(sk, comp, level=0, rng=None, blinding=None):
    """Encrypt a query component; beta shifts only the slot facing the
    data side's constant-1 slot, alpha scales every slot."""
    _check_len(sk, comp)
    if blinding is None:
        rng = rng if rng is not None else secrets.SystemRandom()
        blinding = rng.randrange(1, sk.group.N)
    group = sk.group
    slots = []
    for i, (q_i, b_i) in enumerate(zip(comp.entries, sk.B)):
        coeff = int(q_i) + sk.beta if i == comp.const_slot else int(q_i)
        slots.append(
            group.mul(group.pow(sk.s, coeff * sk.alpha), group.pow(sk.h, blinding * b_i))
        )
    return EncryptedQuery(tuple(slots), level)


def compute(group, enc_tuple, enc_query):
    """Pair matching slots and multiply: e(s,s)^{alpha*(dot+beta)}."""
    if len(enc_tuple.slots) != len(enc_query.slots):
        raise ProtocolError("encrypted tuple/query slot counts differ")
    out = group.identity_gt()
    for ms, qs in zip(enc_tuple.slots, enc_query.slots):
        out = group.mul(out, group.pair(ms, qs))
    return out


def _digest(group, t):
    return hashlib.sha256(group.canonical_bytes(t)).digest()


def create_lookup_table(sk, v=None):
    """Hash e(s,s)^{(i+beta)*alpha} for i in [0, v]; abort on any collision
    (it would mean the canonical encoding is broken)."""
    v = sk.v if v is None else v
    group = sk.group
    base = group.pair(sk.s, sk.s)
    digests = set()
    for i in range(v + 1):
        dig = _digest(group, group.pow(base, (i + sk.beta) * sk.alpha))
        if dig in digests:
            raise DataIntegrityError("lookup table digest collision during build")
        digests.add(dig)
    return LookupTable(frozenset(digests), v)


def lookup_contains(table, group, t):
    """Membership test the server runs on each compute() output."""
    return _digest(group, t) in table.digests


def serialize_lookup_table(table):
    """8-byte big-endian count, then the raw digests in sorted order."""
    out = [len(table.digests).to_bytes(8, "big")]
    out.extend(sorted(table.digests))
    return b"".join(out)


def deserialize_lookup_table(data, v):
    count = int.from_bytes(data[:8], "big")
    body = data[8:]
    if len(body) != 32 * count:
        raise ProtocolError("lookup table payload length mismatch")
    digests = frozenset(body[32 * i : 32 * (i + 1)] for i in range(count))
    if len(digests) != count:
        raise ProtocolError("lookup table contains duplicate digests")
    return LookupTable(digests, v)


# -- minimal BGN reference (validates the backends) --------------------------


@dataclass
class BgnPublicKey:
    group: object
    g: object
    h: object  # u^q2, order q1


@dataclass
class BgnSecretKey:
    q1: int


def bgn_keygen(group, rng=None):
    rng = rng if rng is not None else secrets.SystemRandom()
    params = group.params
    if params.q1 is None:
        raise ConfigError("BGN keygen needs the factorization")
    g = group.random_generator(rng)
    u = group.random_generator(rng)
    return BgnPublicKey(group, g, group.pow(u, params.q2)), BgnSecretKey(params.q1)


def bgn_enc(pk, m, rng=None, blinding=None):
    if blinding is None:
        rng = rng if rng is not None else secrets.SystemRandom()
        blinding = rng.randrange(1, pk.group.N)
    return pk.group.mul(pk.group.pow(pk.g, m), pk.group.pow(pk.h, blinding))


def bgn_add(pk, c1, c2):
    return pk.group.mul(c1, c2)


def bgn_mul(pk, c1, c2):
    return pk.group.pair(c1, c2)


def bgn_dec_lookup(sk, pk, c, bound):
    """Kill the blinding by raising to q1, then scan g^{q1*i} for i <= bound."""
    group = pk.group
    if isinstance(c, GTElement):
        base = group.pow(group.pair(pk.g, pk.g), sk.q1)
    else:
        base = group.pow(pk.g, sk.q1)
    target = group.pow(c, sk.q1)
    acc = group.identity_gt() if isinstance(c, GTElement) else group.identity_g()
    for m in range(bound + 1):
        if acc == target:
            return m
        acc = group.mul(acc, base)
    raise NotFoundError(f"plaintext not within decryption bound {bound}")
