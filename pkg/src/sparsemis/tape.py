"""Shared randomness tape.

All coin flips in the suite are pure functions of (seed, entity, iteration,
slot).  A run's randomness is therefore fixed up-front: the centralized
engines, the machine-model simulator and the query-model harness replay the
exact same bits in any order, which is what makes cross-model bit-equality
testable at all.

Values are B-bit unsigned numerators interpreted as numerator / 2**B in
[0, 1).  Comparing such a value against a dyadic probability 2**-j is an
exact integer comparison, so no float ever enters a decision.

Slot layout per (node, iteration): slots 1..k are the sampling repetitions,
slot 0 is the marking coin.  Edge-indexed values (used by the matching
algorithms) live in a separate domain so they can never collide with node
slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_MASK64 = (1 << 64) - 1
_PHI64 = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_DOMAIN_NODE = 0x4E4F4445
_DOMAIN_EDGE = 0x45444745

MARK_SLOT = 0


class Fraction(NamedTuple):
    """A B-bit fixed-point fraction in [0, 1): value = numerator / 2**bits."""

    numerator: int
    bits: int

    def as_float(self) -> float:
        return self.numerator / float(1 << self.bits)


@dataclass(frozen=True)
class TapeSpec:
    """Identifies one shared random tape.

    seed            64-bit master seed.
    precision_bits  B; every value is a B-bit numerator.
    repetitions_k   number of sampling slots per (node, iteration).
    max_iterations  T; iterations are 1-based and must stay within [1, T].
    """

    seed: int
    precision_bits: int = 64
    repetitions_k: int = 1
    max_iterations: int = 1

    def __post_init__(self) -> None:
        if not (8 <= self.precision_bits <= 64):
            raise ValueError(f"precision_bits must be in [8, 64], got {self.precision_bits}")
        if self.repetitions_k < 1:
            raise ValueError("repetitions_k must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def validate_for(self, max_degree: int, iterations: int) -> None:
        """Check the precision floor B >= log2(T) + log2(max_degree) + 8."""
        need = _ceil_log2(max(2, iterations)) + _ceil_log2(max(2, max_degree)) + 8
        if self.precision_bits < need:
            raise ValueError(
                f"precision_bits={self.precision_bits} too small: need >= {need} "
                f"for T={iterations}, max_degree={max_degree}"
            )
        if iterations > self.max_iterations:
            raise ValueError(
                f"run needs {iterations} iterations but tape allows {self.max_iterations}"
            )


def _ceil_log2(x: int) -> int:
    return (x - 1).bit_length()


def _mix(h: int) -> int:
    h &= _MASK64
    h ^= h >> 30
    h = (h * _MIX1) & _MASK64
    h ^= h >> 27
    h = (h * _MIX2) & _MASK64
    h ^= h >> 31
    return h


def _absorb(h: int, x: int) -> int:
    return _mix((h + (x & _MASK64) * _PHI64) & _MASK64)


def _core(seed: int, domain: int, a: int, b: int, t: int, slot: int) -> int:
    h = _mix(seed & _MASK64)
    for x in (domain, a, b, t, slot):
        h = _absorb(h, x)
    return h


def tape_value(spec: TapeSpec, node: int, iteration: int, slot: int) -> Fraction:
    """The value r^slot for (node, iteration): slot 0 is the mark coin,
    slots 1..k are the sampling repetitions."""
    if not (1 <= iteration <= spec.max_iterations):
        raise ValueError(f"iteration {iteration} outside [1, {spec.max_iterations}]")
    if not (0 <= slot <= spec.repetitions_k):
        raise ValueError(f"slot {slot} outside [0, {spec.repetitions_k}]")
    h = _core(spec.seed, _DOMAIN_NODE, node, 0, iteration, slot)
    return Fraction(h >> (64 - spec.precision_bits), spec.precision_bits)


def edge_tape_value(spec: TapeSpec, u: int, v: int, iteration: int) -> Fraction:
    """Per-(edge, iteration) value; keyed by the canonical (min, max) pair so
    both endpoints derive the identical number."""
    if u == v:
        raise ValueError("self-loop has no tape value")
    a, b = (u, v) if u < v else (v, u)
    h = _core(spec.seed, _DOMAIN_EDGE, a, b, iteration, 0)
    return Fraction(h >> (64 - spec.precision_bits), spec.precision_bits)


def below(p_exponent: int | None, r: Fraction) -> bool:
    """Exact test r < 2**-p_exponent.  p_exponent None encodes p = 0."""
    if p_exponent is None:
        return False
    if not (0 <= p_exponent <= r.bits):
        raise ValueError(f"2**-{p_exponent} is not representable in {r.bits} bits")
    return r.numerator < (1 << (r.bits - p_exponent))


def below_fraction(num: int, den: int, r: Fraction) -> bool:
    """Exact test r < num/den for a general rational probability."""
    if den <= 0 or num < 0:
        raise ValueError("probability must be a nonnegative rational")
    return r.numerator * den < num << r.bits


# ---------------------------------------------------------------------------
# Vectorized lanes.  Same mixing arithmetic on uint64 arrays; equality with
# the scalar path is property-tested.
# ---------------------------------------------------------------------------

def _mix_np(h: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = h.astype(np.uint64, copy=True)
        h ^= h >> np.uint64(30)
        h *= np.uint64(_MIX1)
        h ^= h >> np.uint64(27)
        h *= np.uint64(_MIX2)
        h ^= h >> np.uint64(31)
    return h


def _absorb_np(h: np.ndarray, x: np.ndarray | int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _mix_np(h + np.asarray(x, dtype=np.uint64) * np.uint64(_PHI64))


def bulk_node_values(
    spec: TapeSpec, nodes: np.ndarray, iteration: int, slots: np.ndarray
) -> np.ndarray:
    """Numerators for the (node, slot) grid at one iteration.

    Returns an array of shape (len(nodes), len(slots)) of uint64 numerators,
    already truncated to precision_bits.
    """
    nodes = np.asarray(nodes, dtype=np.uint64)
    slots = np.asarray(slots, dtype=np.uint64)
    h = _mix_np(np.asarray(spec.seed & _MASK64, dtype=np.uint64)[None])
    h = _absorb_np(h, np.uint64(_DOMAIN_NODE))
    h = _absorb_np(np.broadcast_to(h, nodes.shape).copy(), nodes)
    h = _absorb_np(h, np.uint64(0))
    h = _absorb_np(h, np.uint64(iteration))
    h = _absorb_np(h[:, None], slots[None, :])
    return h >> np.uint64(64 - spec.precision_bits)


def bulk_edge_values(
    spec: TapeSpec, edges_u: np.ndarray, edges_v: np.ndarray, iteration: int
) -> np.ndarray:
    """Numerators for canonical edges (u < v expected) at one iteration."""
    a = np.asarray(edges_u, dtype=np.uint64)
    b = np.asarray(edges_v, dtype=np.uint64)
    h = _mix_np(np.asarray(spec.seed & _MASK64, dtype=np.uint64)[None])
    h = _absorb_np(h, np.uint64(_DOMAIN_EDGE))
    h = _absorb_np(np.broadcast_to(h, a.shape).copy(), a)
    h = _absorb_np(h, b)
    h = _absorb_np(h, np.uint64(iteration))
    h = _absorb_np(h, np.uint64(0))
    return h >> np.uint64(64 - spec.precision_bits)


def bulk_below(p_exponents: np.ndarray, numerators: np.ndarray, bits: int) -> np.ndarray:
    """Vectorized below(): numerators shape (n, s), p_exponents shape (n,).

    Exponent 0 means p = 1 (always true); exponents > bits are clamped by the
    caller.  A negative exponent encodes p = 0 (never true).
    """
    e = np.asarray(p_exponents, dtype=np.int64)
    num = np.asarray(numerators, dtype=np.uint64)
    if num.ndim == 2:
        e = e[:, None]
    shift = np.maximum(np.int64(bits) - np.maximum(e, 0), 0).astype(np.uint64)
    # r < 2**(bits-e)  <=>  r >> (bits-e) == 0
    out = (num >> shift) == 0
    return np.where(e >= 0, out, False)
