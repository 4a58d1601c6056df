"""Encrypted hypersphere and range queries over an untrusted store.

A data owner encrypts a spatial table slot-by-slot under a composite-order
pairing scheme and uploads it, together with a hash lookup table, to a
server that evaluates encrypted sphere and range queries without learning
points, queries, or even the query type.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataIntegrityError,
    DuplicateIdError,
    IngestionError,
    KeyfileError,
    NotFoundError,
    ProtocolError,
    QueryRejected,
    ServerUnreachable,
    SetupError,
    ShrqError,
)
from .pairing import CURVE_A1, TRANSPARENT, group_from_descriptor, group_from_primes, group_gen

__all__ = [
    "CURVE_A1",
    "TRANSPARENT",
    "ConfigError",
    "DataIntegrityError",
    "DuplicateIdError",
    "IngestionError",
    "KeyfileError",
    "NotFoundError",
    "ProtocolError",
    "QueryRejected",
    "ServerUnreachable",
    "SetupError",
    "ShrqError",
    "group_from_descriptor",
    "group_from_primes",
    "group_gen",
]
