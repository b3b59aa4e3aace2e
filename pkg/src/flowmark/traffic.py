"""Packet flows, synthetic traffic, and timestamp trace files.

A flow is an ordered sequence of packet arrival times in seconds.  The
inter-packet delay (IPD) view is the first difference of the timestamps;
both views round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PacketFlow:
    """Arrival timestamps of one packet flow, seconds, nondecreasing."""

    timestamps: np.ndarray
    label: str | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if ts.size == 0:
            raise ValueError("a flow needs at least one packet")
        if not np.all(np.isfinite(ts)):
            raise ValueError("timestamps must be finite")
        if ts[0] < 0.0:
            raise ValueError("timestamps must be nonnegative")
        if np.any(np.diff(ts) < 0.0):
            raise ValueError("timestamps must be nondecreasing")
        ts.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])


def poisson_flow(rate: float, count: int, seed: int) -> PacketFlow:
    """Generate a Poisson flow: `count` packets with i.i.d. exponential IPDs.

    The first packet arrives at t=0 and the mean IPD is 1/rate seconds.
    Deterministic for a fixed seed.
    """
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    if count < 2:
        raise ValueError("count must be at least 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    ipds = rng.exponential(1.0 / rate, size=count - 1)
    ts = np.concatenate(([0.0], np.cumsum(ipds)))
    return PacketFlow(ts, label=f"poisson-{rate}pps-{seed}")


def to_ipds(flow: PacketFlow) -> np.ndarray:
    """Inter-packet delays of a flow; length is one less than the flow."""
    if len(flow) < 2:
        raise ValueError("need at least 2 packets to form IPDs")
    return np.diff(flow.timestamps)


def to_flow(ipds: np.ndarray, start: float = 0.0, label: str | None = None) -> PacketFlow:
    """Rebuild a flow from IPDs and the first arrival time."""
    ipds = np.asarray(ipds, dtype=np.float64)
    if np.any(ipds < 0.0):
        raise ValueError("IPDs must be nonnegative")
    ts = np.empty(ipds.size + 1)
    ts[0] = start
    np.cumsum(ipds, out=ts[1:])
    ts[1:] += start
    return PacketFlow(ts, label=label)


def read_trace(path, clamp: bool = False, label: str | None = None) -> PacketFlow:
    """Read a timestamp trace: one decimal seconds value per line.

    Blank lines and `#` comments are ignored.  Decreasing timestamps are an
    error unless `clamp` is set, which clamps negative gaps to zero (for
    traces with jitter-induced tiny negative gaps).
    """
    ts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                ts.append(float(text))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: not a timestamp: {text!r}") from None
    if not ts:
        raise ValueError(f"{path}: no timestamps found")
    arr = np.asarray(ts, dtype=np.float64)
    if clamp:
        arr = np.maximum.accumulate(arr)
    else:
        bad = np.nonzero(np.diff(arr) < 0.0)[0]
        if bad.size:
            raise ValueError(
                f"{path}: timestamps decrease at entry {bad[0] + 2} "
                "(pass clamp to clamp negative gaps to zero)"
            )
    return PacketFlow(arr, label=label or str(path))


def write_trace(flow: PacketFlow, path) -> None:
    """Write a flow in the trace format read_trace accepts (9 decimals)."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in flow.timestamps:
            fh.write(f"{t:.9f}\n")
