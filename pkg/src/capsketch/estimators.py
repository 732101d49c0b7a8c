"""End-to-end measurement pipelines.

Each pipeline owns the sketches for one measurement mode and the exact sum of
element values. Estimates follow a common shape: when the sketch has seen
enough distinct output keys (at least 3/epsilon^2) its estimate divided by the
replication r is returned; below that the transform is in its linear regime
and t * SUM is the better answer.

Pipelines are single-writer; ``merge`` is pure and returns a new pipeline.
Batch ingestion is bit-compatible with element-at-a-time ingestion given the
same ordinals.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import ceil, inf
from typing import Iterable

import numpy as np

from .core import Element, IncompatibleSketchError
from .mappers import MapperConfig, full_range_batch, map_full_range, map_point, point_outkeys_batch
from .sketches import AllThresholdSketch, DistinctCounter, MaxDistinctSketch, SumCounter
from .transforms import CoefficientFunction, SignedCoefficientFunction

__all__ = [
    "PointPipeline",
    "CombinationPipeline",
    "FullRangePipeline",
    "SignedCombinationPipeline",
    "SignedEstimate",
    "signed_estimate",
    "soft_cap_estimate",
]

_BLOB_LEN = struct.Struct("<I")

# Seed perturbation for the negative-component pipeline of a signed estimate,
# so the two measurements use independent draws.
_MINUS_SEED_FLIP = 0x5851F42D4C957F2D


def _check_field(name: str, a, b):
    if a != b:
        raise IncompatibleSketchError(f"pipelines differ in {name}: {a!r} vs {b!r}")


def _pack_blob(b: bytes) -> bytes:
    return _BLOB_LEN.pack(len(b)) + b


def _read_blob(data: bytes, off: int) -> tuple[bytes, int]:
    (n,) = _BLOB_LEN.unpack_from(data, off)
    off += _BLOB_LEN.size
    return data[off : off + n], off + n


class _PipelineBase:
    """Shared ingest bookkeeping: ordinal assignment and the exact sum."""

    def __init__(self, r: int, epsilon: float, k: int, seed: int, ordinal_base: int):
        if not 0.0 < epsilon < 1.0:
            raise ValueError(f"error target must be in (0,1), got {epsilon}")
        self.r = int(r)
        self.epsilon = float(epsilon)
        self.k = int(k)
        self.seed = int(seed)
        self.ordinal_base = int(ordinal_base)
        self.count = 0
        self.sum_counter = SumCounter()

    @property
    def gate(self) -> float:
        """Minimum distinct-output estimate for the sketch path: 3/epsilon^2."""
        return 3.0 * self.epsilon**-2

    def _next_ordinal(self) -> int:
        o = self.ordinal_base + self.count
        self.count += 1
        return o

    def _next_ordinals(self, n: int) -> np.ndarray:
        o = np.arange(self.ordinal_base + self.count, self.ordinal_base + self.count + n, dtype=np.uint64)
        self.count += n
        return o


class PointPipeline(_PipelineBase):
    """Distinct-count measurement of the transform at a fixed threshold t."""

    def __init__(self, t: float, r: int, epsilon: float, k: int, seed: int = 0, ordinal_base: int = 0):
        super().__init__(r, epsilon, k, seed, ordinal_base)
        if not t >= 0.0:
            raise ValueError(f"threshold t must be >= 0, got {t}")
        self.t = float(t)
        self.counter = DistinctCounter(k, seed)
        self.emitted = 0

    @classmethod
    def for_soft_cap(cls, T: float, r: int, epsilon: float, k: int, seed: int = 0, ordinal_base: int = 0):
        """Pipeline measuring the smooth-capping statistic at scale T (t = 1/T)."""
        if not T > 0.0:
            raise ValueError(f"soft cap scale T must be > 0, got {T}")
        return cls(1.0 / T, r, epsilon, k, seed, ordinal_base)

    def _cfg(self) -> MapperConfig:
        return MapperConfig(r=self.r, t=self.t, seed=self.seed)

    def ingest(self, e: Element) -> None:
        e = e if isinstance(e, Element) else Element(*e)
        ordinal = self._next_ordinal()
        outs = map_point(e, self._cfg(), ordinal)
        self.emitted += len(outs)
        for out in outs:
            self.counter.update(out.outkey)
        self.sum_counter.update(e.value)

    def ingest_batch(self, key64s: np.ndarray, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        ordinals = self._next_ordinals(len(values))
        outkeys = point_outkeys_batch(np.asarray(key64s, dtype=np.uint64), values, self._cfg(), ordinals)
        self.emitted += len(outkeys)
        self.counter.update_batch(outkeys)
        self.sum_counter.update_batch(values)

    def merge(self, other: "PointPipeline") -> "PointPipeline":
        """Pure merge; the result keeps the smaller ordinal base, so merge
        output bytes do not depend on argument order."""
        _check_field("type", type(self).__name__, type(other).__name__)
        _check_field("t", self.t, other.t)
        _check_field("r", self.r, other.r)
        _check_field("epsilon", self.epsilon, other.epsilon)
        _check_field("k", self.k, other.k)
        _check_field("seed", self.seed, other.seed)
        out = PointPipeline(self.t, self.r, self.epsilon, self.k, self.seed, min(self.ordinal_base, other.ordinal_base))
        out.counter = self.counter.merge(other.counter)
        out.sum_counter = self.sum_counter.merge(other.sum_counter)
        out.count = self.count + other.count
        out.emitted = self.emitted + other.emitted
        return out

    def estimate(self) -> float:
        """Estimate of the transform at t, falling back to t * SUM when the
        distinct-output estimate is below 3/epsilon^2."""
        d = self.counter.estimate()
        if d >= self.gate:
            return d / self.r
        return self.t * self.sum_counter.value()

    def to_bytes(self) -> bytes:
        head = struct.pack("<BdIdIQQQ", 1, self.t, self.r, self.epsilon, self.k, self.seed, self.ordinal_base, self.count)
        return head + _pack_blob(self.counter.to_bytes()) + _pack_blob(self.sum_counter.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "PointPipeline":
        tag, t, r, epsilon, k, seed, base, count = struct.unpack_from("<BdIdIQQQ", data)
        if tag != 1:
            raise ValueError(f"not a point pipeline blob (tag {tag})")
        off = struct.calcsize("<BdIdIQQQ")
        dc_blob, off = _read_blob(data, off)
        sum_blob, off = _read_blob(data, off)
        out = cls(t, r, epsilon, k, seed, base)
        out.counter = DistinctCounter.from_bytes(dc_blob)
        out.sum_counter = SumCounter.from_bytes(sum_blob)
        out.count = count
        return out


def soft_cap_estimate(pipeline: PointPipeline, T: float) -> float:
    """Smooth-capping statistic at scale T from a pipeline built at t = 1/T."""
    if not T > 0.0:
        raise ValueError(f"soft cap scale T must be > 0, got {T}")
    if abs(pipeline.t * T - 1.0) > 1e-9:
        raise ValueError(f"pipeline threshold {pipeline.t} does not match 1/T for T={T}")
    return T * pipeline.estimate()


class CombinationPipeline(_PipelineBase):
    """Max-distinct measurement of a nonnegative coefficient combination.

    Output elements carry raw draws; the smallest-draw outkeys are sidelined
    (up to ceil(3/epsilon^2) of them) so the integration cutoff can be chosen
    adaptively at estimation time. Evicted keys enter the max-distinct sketch
    valued at the tail integral of their own recorded draw; at estimation the
    sidelined keys are fed at the tail integral of the cutoff and the head of
    the coefficient function is covered by the exact sum.
    """

    def __init__(
        self,
        a: CoefficientFunction,
        r: int,
        epsilon: float,
        k: int,
        seed: int = 0,
        ordinal_base: int = 0,
    ):
        super().__init__(r, epsilon, k, seed, ordinal_base)
        if not isinstance(a, CoefficientFunction):
            raise TypeError("combination pipelines need a CoefficientFunction")
        if float(a.head(1.0)) == inf:
            raise ValueError("coefficient function must have a finite head integral")
        self.a = a
        self.ell = ceil(3.0 * self.epsilon**-2)
        self.max_sketch = MaxDistinctSketch(k, seed)
        self.sidelined: dict[int, float] = {}
        self._theta: tuple[float, int] | None = None

    def _cfg(self) -> MapperConfig:
        return MapperConfig(r=self.r, seed=self.seed)

    def _theta_entry(self) -> tuple[float, int]:
        if self._theta is None:
            self._theta = max((y, o) for o, y in self.sidelined.items())
        return self._theta

    def _feed(self, okey: int, y: float) -> None:
        v = float(self.a.tail(y))
        if v > 0.0:
            self.max_sketch.update(okey, v)

    def _absorb(self, okey: int, y: float) -> None:
        cur = self.sidelined.get(okey)
        if cur is not None:
            if y < cur:
                self.sidelined[okey] = y
                if self._theta is not None and self._theta[1] == okey:
                    self._theta = None
            return
        if len(self.sidelined) < self.ell:
            self.sidelined[okey] = y
            self._theta = None
            return
        theta = self._theta_entry()
        if (y, okey) < theta:
            del self.sidelined[theta[1]]
            self.sidelined[okey] = y
            self._theta = None
            self._feed(theta[1], theta[0])
        else:
            self._feed(okey, y)

    def ingest(self, e: Element) -> None:
        e = e if isinstance(e, Element) else Element(*e)
        ordinal = self._next_ordinal()
        for out in map_full_range(e, self._cfg(), ordinal):
            self._absorb(out.outkey, out.value)
        self.sum_counter.update(e.value)

    def ingest_outputs(self, outputs: Iterable) -> None:
        """Feed already-mapped output elements carrying raw draws."""
        for out in outputs:
            self._absorb(int(out.outkey), float(out.value))

    def ingest_batch(self, key64s: np.ndarray, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        ordinals = self._next_ordinals(len(values))
        outkeys, ys = full_range_batch(np.asarray(key64s, dtype=np.uint64), values, self._cfg(), ordinals)
        self._absorb_batch(outkeys, ys)
        self.sum_counter.update_batch(values)

    def _absorb_batch(self, outkeys: np.ndarray, ys: np.ndarray) -> None:
        if len(outkeys) == 0:
            return
        uk, inv = np.unique(outkeys, return_inverse=True)
        gy = np.full(len(uk), inf)
        np.minimum.at(gy, inv, ys)
        merged = dict(self.sidelined)
        for o, y in zip(uk, gy):
            okey, yv = int(o), float(y)
            if merged.get(okey, inf) > yv:
                merged[okey] = yv
        if len(merged) <= self.ell:
            self.sidelined = merged
            self._theta = None
            return
        items = sorted((y, o) for o, y in merged.items())
        self.sidelined = {o: y for y, o in items[: self.ell]}
        self._theta = None
        evicted = items[self.ell :]
        ev_keys = np.array([o for _, o in evicted], dtype=np.uint64)
        ev_vals = np.asarray(self.a.tail(np.array([y for y, _ in evicted], dtype=np.float64)), dtype=np.float64)
        keep = ev_vals > 0.0
        if keep.any():
            self.max_sketch.update_batch(ev_keys[keep], ev_vals[keep])

    def merge(self, other: "CombinationPipeline") -> "CombinationPipeline":
        _check_field("type", type(self).__name__, type(other).__name__)
        _check_field("coefficient function", self.a, other.a)
        _check_field("r", self.r, other.r)
        _check_field("epsilon", self.epsilon, other.epsilon)
        _check_field("k", self.k, other.k)
        _check_field("seed", self.seed, other.seed)
        out = CombinationPipeline(self.a, self.r, self.epsilon, self.k, self.seed, min(self.ordinal_base, other.ordinal_base))
        out.max_sketch = self.max_sketch.merge(other.max_sketch)
        out.sum_counter = self.sum_counter.merge(other.sum_counter)
        out.count = self.count + other.count
        merged = dict(self.sidelined)
        for okey, y in other.sidelined.items():
            if merged.get(okey, inf) > y:
                merged[okey] = y
        items = sorted((y, o) for o, y in merged.items())
        out.sidelined = {o: y for y, o in items[: out.ell]}
        for y, okey in items[out.ell :]:
            out._feed(okey, y)
        return out

    def tau(self) -> float:
        """Current adaptive cutoff: the largest sidelined draw."""
        if not self.sidelined:
            return 0.0
        return self._theta_entry()[0]

    def estimate(self) -> float:
        """Finalize without mutating: sideline keys are fed at the cutoff's
        tail value into a copy of the sketch, the head is covered by the sum."""
        if not self.sidelined:
            return 0.0
        tau = self.tau()
        fed = self.max_sketch.merge(MaxDistinctSketch(self.k, self.seed))
        v = float(self.a.tail(tau))
        if v > 0.0:
            for okey in self.sidelined:
                fed.update(okey, v)
        return fed.estimate() / self.r + self.sum_counter.value() * float(self.a.head(tau))

    def to_bytes(self) -> bytes:
        head = struct.pack(
            "<BIdIQQQI", 2, self.r, self.epsilon, self.k, self.seed, self.ordinal_base, self.count, len(self.sidelined)
        )
        side = b"".join(struct.pack("<Qd", o, y) for y, o in sorted((y, o) for o, y in self.sidelined.items()))
        return head + side + _pack_blob(self.max_sketch.to_bytes()) + _pack_blob(self.sum_counter.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, a: CoefficientFunction) -> "CombinationPipeline":
        tag, r, epsilon, k, seed, base, count, nside = struct.unpack_from("<BIdIQQQI", data)
        if tag != 2:
            raise ValueError(f"not a combination pipeline blob (tag {tag})")
        off = struct.calcsize("<BIdIQQQI")
        out = cls(a, r, epsilon, k, seed, base)
        for _ in range(nside):
            o, y = struct.unpack_from("<Qd", data, off)
            off += 16
            out.sidelined[int(o)] = float(y)
        md_blob, off = _read_blob(data, off)
        sum_blob, off = _read_blob(data, off)
        out.max_sketch = MaxDistinctSketch.from_bytes(md_blob)
        out.sum_counter = SumCounter.from_bytes(sum_blob)
        out.count = count
        return out


class FullRangePipeline(_PipelineBase):
    """All-threshold measurement: one sketch answering every threshold and
    any nonnegative coefficient combination after the fact."""

    def __init__(self, r: int, epsilon: float, k: int, seed: int = 0, ordinal_base: int = 0):
        super().__init__(r, epsilon, k, seed, ordinal_base)
        self.threshold_sketch = AllThresholdSketch(k, seed)

    def _cfg(self) -> MapperConfig:
        return MapperConfig(r=self.r, seed=self.seed)

    def ingest(self, e: Element) -> None:
        e = e if isinstance(e, Element) else Element(*e)
        ordinal = self._next_ordinal()
        for out in map_full_range(e, self._cfg(), ordinal):
            self.threshold_sketch.update(out.outkey, out.value)
        self.sum_counter.update(e.value)

    def ingest_batch(self, key64s: np.ndarray, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        ordinals = self._next_ordinals(len(values))
        outkeys, ys = full_range_batch(np.asarray(key64s, dtype=np.uint64), values, self._cfg(), ordinals)
        self.threshold_sketch.update_batch(outkeys, ys)
        self.sum_counter.update_batch(values)

    def merge(self, other: "FullRangePipeline") -> "FullRangePipeline":
        _check_field("type", type(self).__name__, type(other).__name__)
        _check_field("r", self.r, other.r)
        _check_field("epsilon", self.epsilon, other.epsilon)
        _check_field("k", self.k, other.k)
        _check_field("seed", self.seed, other.seed)
        out = FullRangePipeline(self.r, self.epsilon, self.k, self.seed, min(self.ordinal_base, other.ordinal_base))
        out.threshold_sketch = self.threshold_sketch.merge(other.threshold_sketch)
        out.sum_counter = self.sum_counter.merge(other.sum_counter)
        out.count = self.count + other.count
        return out

    def estimate_at(self, t: float) -> float:
        """Point estimate at threshold t with the t * SUM fallback.

        Beyond the largest stored draw the sketch covers everything it will
        ever cover, so the sketch value is used there regardless of the gate
        (t * SUM grows without bound and stops being meaningful).
        """
        if not t >= 0.0:
            raise ValueError(f"threshold t must be >= 0, got {t}")
        raw = self.threshold_sketch.estimate_at(t)
        bp = self.threshold_sketch.breakpoints()
        if raw >= self.gate or (bp.size and t >= bp[-1]):
            return raw / self.r
        return t * self.sum_counter.value()

    def estimate_soft_cap(self, T: float) -> float:
        if not T > 0.0:
            raise ValueError(f"soft cap scale T must be > 0, got {T}")
        return T * self.estimate_at(1.0 / T)

    def estimate_combination(self, a: CoefficientFunction) -> float:
        """Integral of the coefficient function against the threshold profile.

        Point masses are exact point queries; continuous parts integrate the
        step-function profile in closed form through tail-integral
        differences, with the region below the fallback crossing covered by
        t * SUM (head integral times the exact sum).
        """
        total = 0.0
        for loc, mass in a.deltas:
            total += mass * self.estimate_at(loc)
        if a.parts:
            cont = CoefficientFunction(parts=a.parts)
            ys, _, _ = self.threshold_sketch._build_profile()
            if ys.size == 0:
                return total
            raw = self.threshold_sketch.estimate_all(ys)
            above = np.nonzero(raw >= self.gate)[0]
            start = int(above[0]) if above.size else len(ys) - 1
            total += self.sum_counter.value() * float(cont.head(ys[start]))
            tails = np.asarray(cont.tail(ys[start:]), dtype=np.float64)
            seg = tails.copy()
            seg[:-1] -= tails[1:]
            total += float(np.dot(raw[start:] / self.r, seg))
        return total

    def to_bytes(self) -> bytes:
        head = struct.pack("<BIdIQQQ", 3, self.r, self.epsilon, self.k, self.seed, self.ordinal_base, self.count)
        return head + _pack_blob(self.threshold_sketch.to_bytes()) + _pack_blob(self.sum_counter.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "FullRangePipeline":
        tag, r, epsilon, k, seed, base, count = struct.unpack_from("<BIdIQQQ", data)
        if tag != 3:
            raise ValueError(f"not a full-range pipeline blob (tag {tag})")
        off = struct.calcsize("<BIdIQQQ")
        at_blob, off = _read_blob(data, off)
        sum_blob, off = _read_blob(data, off)
        out = cls(r, epsilon, k, seed, base)
        out.threshold_sketch = AllThresholdSketch.from_bytes(at_blob)
        out.sum_counter = SumCounter.from_bytes(sum_blob)
        out.count = count
        return out


@dataclass(frozen=True)
class SignedEstimate:
    """Difference estimate with its stability certificate.

    ``error_bound`` is the certified relative error limit rho * (eps+ + eps-)
    given component measurements within eps+ and eps- relative error.
    """

    value: float
    raw: float
    rho: float
    error_bound: float
    clamped: bool


def signed_estimate(
    plus_value: float,
    minus_value: float,
    a: SignedCoefficientFunction,
    eps_plus: float = 0.0,
    eps_minus: float = 0.0,
) -> SignedEstimate:
    """Combine component measurements of the positive and negative parts.

    A negative difference is clamped to zero (the target statistic is
    nonnegative, so clamping can only reduce error); the clamp is flagged.
    """
    raw = float(plus_value) - float(minus_value)
    clamped = raw < 0.0
    return SignedEstimate(
        value=0.0 if clamped else raw,
        raw=raw,
        rho=a.rho_bound,
        error_bound=a.rho_bound * (float(eps_plus) + float(eps_minus)),
        clamped=clamped,
    )


class SignedCombinationPipeline:
    """Two combination pipelines measuring the positive and negative parts of
    a signed coefficient function, with independent draws."""

    def __init__(
        self,
        a: SignedCoefficientFunction,
        r: int,
        epsilon: float,
        k: int,
        seed: int = 0,
        ordinal_base: int = 0,
    ):
        if a.minus.is_empty:
            raise ValueError("signed pipeline needs a nonempty negative part; use CombinationPipeline")
        self.signed = a
        self.plus = CombinationPipeline(a.plus, r, epsilon, k, seed, ordinal_base)
        self.minus = CombinationPipeline(a.minus, r, epsilon, k, seed ^ _MINUS_SEED_FLIP, ordinal_base)

    @property
    def epsilon(self) -> float:
        return self.plus.epsilon

    def ingest(self, e: Element) -> None:
        self.plus.ingest(e)
        self.minus.ingest(e)

    def ingest_batch(self, key64s, values) -> None:
        self.plus.ingest_batch(key64s, values)
        self.minus.ingest_batch(key64s, values)

    def merge(self, other: "SignedCombinationPipeline") -> "SignedCombinationPipeline":
        _check_field("coefficient function", self.signed, other.signed)
        out = SignedCombinationPipeline.__new__(SignedCombinationPipeline)
        out.signed = self.signed
        out.plus = self.plus.merge(other.plus)
        out.minus = self.minus.merge(other.minus)
        return out

    def estimate(self) -> SignedEstimate:
        return signed_estimate(
            self.plus.estimate(),
            self.minus.estimate(),
            self.signed,
            eps_plus=self.plus.epsilon,
            eps_minus=self.minus.epsilon,
        )

    def to_bytes(self) -> bytes:
        return struct.pack("<B", 4) + _pack_blob(self.plus.to_bytes()) + _pack_blob(self.minus.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, a: SignedCoefficientFunction) -> "SignedCombinationPipeline":
        (tag,) = struct.unpack_from("<B", data)
        if tag != 4:
            raise ValueError(f"not a signed combination blob (tag {tag})")
        off = 1
        plus_blob, off = _read_blob(data, off)
        minus_blob, off = _read_blob(data, off)
        out = cls.__new__(cls)
        out.signed = a
        out.plus = CombinationPipeline.from_bytes(plus_blob, a.plus)
        out.minus = CombinationPipeline.from_bytes(minus_blob, a.minus)
        return out
