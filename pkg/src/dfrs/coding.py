"""Subcell time-sharing schedule, rate-1/M block encoder and the sensor message wire format.

Wire layout of one message, packed most-significant bit first and
zero-padded to a whole byte::

    supercell label  ceil(log2 L) bits, value j - 1, big-endian
    subcell label    ceil(log2 M) bits, value k - 1, big-endian
    payload          T / M bits, increasing snapshot order

A batch file is a sequence of messages, each preceded by its byte length as
a 4-byte little-endian unsigned integer.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from .errors import DivisibilityError, MalformedHeader, ModelError, WrongPayloadLength


def label_bits(count):
    return math.ceil(math.log2(count)) if count > 1 else 0


def active_subcell(t, M):
    """Subcell whose sensors report snapshot ``t`` (both one-based)."""
    if t < 1:
        raise ModelError(f"snapshot index must be >= 1, got {t}")
    return (t - 1) % M + 1


def check_divisible(M, T):
    if T % M:
        raise DivisibilityError(f"T={T} is not a multiple of M={M}")
    return T // M


@dataclass(frozen=True)
class Schedule:
    M: int
    T: int

    def __post_init__(self):
        check_divisible(self.M, self.T)

    @property
    def rate(self):
        return 1.0 / self.M

    def active(self, t):
        if not 1 <= t <= self.T:
            raise ModelError(f"snapshot {t} outside 1..{self.T}")
        return active_subcell(t, self.M)

    def snapshots(self, k):
        """Snapshots reported by a sensor in subcell ``k``."""
        return list(range(k, self.T + 1, self.M))

    def rows(self):
        return [(t, self.active(t)) for t in range(1, self.T + 1)]

    def mask(self, subcell):
        """(N, T) boolean: sensor ``i`` reports snapshot ``t``."""
        active = (np.arange(self.T) % self.M) + 1
        return np.asarray(subcell)[:, None] == active[None, :]


@dataclass(frozen=True, eq=False)
class SensorMessage:
    supercell: int
    subcell: int
    payload: np.ndarray
    L: int
    M: int
    sensor_id: int = None  # transport metadata, never serialized

    def __eq__(self, other):
        if not isinstance(other, SensorMessage):
            return NotImplemented
        return ((self.supercell, self.subcell, self.L, self.M) ==
                (other.supercell, other.subcell, other.L, other.M)
                and np.array_equal(self.payload, other.payload))

    @property
    def header_bits(self):
        return label_bits(self.L) + label_bits(self.M)

    def to_bits(self):
        hl, hm = label_bits(self.L), label_bits(self.M)
        head = [(self.supercell - 1) >> (hl - 1 - i) & 1 for i in range(hl)]
        head += [(self.subcell - 1) >> (hm - 1 - i) & 1 for i in range(hm)]
        return np.concatenate([np.asarray(head, dtype=np.uint8),
                               np.asarray(self.payload, dtype=np.uint8)])

    def to_bytes(self):
        return np.packbits(self.to_bits()).tobytes()

    @classmethod
    def from_bytes(cls, data, L, M, T):
        n_payload = check_divisible(M, T)
        hl, hm = label_bits(L), label_bits(M)
        n_bits = hl + hm + n_payload
        if len(data) != -(-n_bits // 8):
            raise WrongPayloadLength(
                f"expected {-(-n_bits // 8)} bytes for {n_payload} payload bits, got {len(data)}")
        bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))
        if np.any(bits[n_bits:]):
            raise WrongPayloadLength("nonzero bits after the payload")
        j_label = int("".join(map(str, bits[:hl])) or "0", 2)
        k_label = int("".join(map(str, bits[hl:hl + hm])) or "0", 2)
        if j_label >= L or k_label >= M:
            raise MalformedHeader(f"header labels ({j_label}, {k_label}) outside L={L}, M={M}")
        return cls(j_label + 1, k_label + 1, bits[hl + hm:n_bits].copy(), L, M)


def encode(bits, k, M, T, j=1, L=1, sensor_id=None):
    """Keep every M-th bit starting at snapshot ``k``: (B_k, B_{k+M}, ...)."""
    check_divisible(M, T)
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (T,):
        raise WrongPayloadLength(f"expected {T} quantized samples, got shape {bits.shape}")
    if not 1 <= k <= M:
        raise ModelError(f"subcell {k} outside 1..{M}")
    if not 1 <= j <= L:
        raise ModelError(f"supercell {j} outside 1..{L}")
    return SensorMessage(int(j), int(k), bits[k - 1::M].copy(), int(L), int(M), sensor_id)


@dataclass(frozen=True)
class DecodedMessage:
    supercell: int
    subcell: int
    bits: dict  # snapshot -> bit


def decode(msg, M, T, L=None):
    """Inverse of ``encode``; accepts a SensorMessage or its serialized bytes (``L`` required)."""
    if isinstance(msg, (bytes, bytearray, memoryview)):
        if L is None:
            raise ModelError("decoding raw bytes needs the supercell count L")
        msg = SensorMessage.from_bytes(msg, L, M, T)
    n_payload = check_divisible(M, T)
    if len(msg.payload) != n_payload:
        raise WrongPayloadLength(f"payload has {len(msg.payload)} bits, expected {n_payload}")
    if not (1 <= msg.supercell <= msg.L and 1 <= msg.subcell <= M):
        raise MalformedHeader(f"header ({msg.supercell}, {msg.subcell}) outside L={msg.L}, M={M}")
    snaps = range(msg.subcell, T + 1, M)
    return DecodedMessage(msg.supercell, msg.subcell,
                          {t: int(b) for t, b in zip(snaps, msg.payload)})


def write_batch(messages):
    out = bytearray()
    for m in messages:
        body = m.to_bytes()
        out += struct.pack("<I", len(body)) + body
    return bytes(out)


def read_batch(data, L, M, T):
    messages, pos = [], 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise WrongPayloadLength("truncated length prefix")
        (size,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + size > len(data):
            raise WrongPayloadLength("truncated message body")
        messages.append(SensorMessage.from_bytes(data[pos:pos + size], L, M, T))
        pos += size
    return messages


def overhead_rate(N, T, L, M):
    """Location-label overhead (N / T) log2(LM) in bits per snapshot."""
    if min(N, T, L, M) <= 0:
        raise ModelError("N, T, L and M must be positive")
    return N / T * math.log2(L * M)
