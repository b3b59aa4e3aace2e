"""Timestamp-level network channel: jitter, drops, bursty splits.

Effects are applied in order: independent packet deletion, geometric
bursts of inserted packets after each surviving packet, then i.i.d.
zero-mean Laplace jitter on the resulting IPDs (clamped so IPDs stay
nonnegative).  The log records ground truth for decoder tests and for
locating the watermarked segment in the received flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from flowmark.traffic import PacketFlow


@dataclass(frozen=True)
class ChannelParams:
    """Network channel knobs.

    sigma is the jitter standard deviation in seconds (the Laplace scale is
    sigma/sqrt(2)).  Each packet is dropped independently with probability
    p_delete; after each surviving packet, L extra packets are inserted
    with P(L=l) = p_insert**l * (1-p_insert), capped at max_insert_run,
    each placed insert_spacing seconds after its predecessor.  protect_first
    exempts packet 0 from deletion, matching the decoder's assumption that
    the flow head survives.

    jitter selects how sigma perturbs the received IPDs:

    * "laplace": literal i.i.d. zero-mean Laplace noise.  Physically
      realistic, but both noise directions can cross the quantizer decision
      boundary, so the realized bit-flip rate is u/(1+u**2) with
      u = exp(-delta/(2*sqrt(2)*sigma)), about twice substitution_prob().
    * "quantizer": quantization-aware substitution.  Each received IPD is
      shifted by half a quantization step with exactly the probability
      substitution_prob(delta, sigma); requires delta.  This realizes the
      bit-substitution abstraction the decoder is built on and is what the
      experiment harness uses to reproduce the reference robustness tables.
    """

    sigma: float = 0.0
    p_delete: float = 0.0
    p_insert: float = 0.0
    insert_spacing: float = 0.0
    max_insert_run: int = 8
    protect_first: bool = True
    seed: int = 0
    jitter: str = "laplace"
    delta: float | None = None

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 <= self.p_delete <= 1.0:
            raise ValueError("p_delete must lie in [0, 1]")
        if not 0.0 <= self.p_insert < 1.0:
            raise ValueError("p_insert must lie in [0, 1)")
        if self.insert_spacing < 0.0:
            raise ValueError("insert_spacing must be nonnegative")
        if self.max_insert_run < 1:
            raise ValueError("max_insert_run must be at least 1")
        if self.jitter not in ("laplace", "quantizer"):
            raise ValueError("jitter must be 'laplace' or 'quantizer'")
        if self.jitter == "quantizer" and (self.delta is None or self.delta <= 0.0):
            raise ValueError("quantizer jitter needs a positive delta")


@dataclass(frozen=True)
class ChannelLog:
    """Ground truth for one transmission.

    origins[r] is the index, in the sent flow, of the packet that received
    packet r descends from (inserted packets point at the survivor they
    follow).  inserted_mask marks which received packets are insertions.
    """

    deleted_indices: np.ndarray
    origins: np.ndarray
    inserted_mask: np.ndarray
    jitter: np.ndarray

    @property
    def n_deleted(self) -> int:
        return int(self.deleted_indices.size)

    @property
    def n_inserted(self) -> int:
        return int(np.count_nonzero(self.inserted_mask))

    def segment_bits(self, last_marked: int) -> int:
        """Number of received bits whose IPD ends at a packet descending
        from sent packets 0..last_marked (the watermarked segment)."""
        return int(np.count_nonzero(self.origins[1:] <= last_marked))


def substitution_prob(delta: float, sigma: float) -> float:
    """Probability that Laplace jitter flips one embedded bit.

    A bit flips when the IPD moves more than delta/4 toward the wrong
    quantizer, which for zero-mean Laplace jitter with standard deviation
    sigma has probability exp(-delta / (2*sqrt(2)*sigma)) / 2.
    """
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0.0:
        return 0.0
    return 0.5 * math.exp(-delta / (2.0 * math.sqrt(2.0) * sigma))


def transmit(flow: PacketFlow, params: ChannelParams) -> tuple[PacketFlow, ChannelLog]:
    """Push a flow through the channel.  Deterministic for a fixed seed."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    ts = flow.timestamps
    m = ts.size

    drop = rng.random(m) < params.p_delete
    if params.protect_first:
        drop[0] = False
    if np.all(drop):
        raise ValueError("channel deleted every packet; nothing to receive")
    deleted = np.nonzero(drop)[0]
    surv_idx = np.nonzero(~drop)[0]
    surv_ts = ts[surv_idx]

    if params.p_insert > 0.0:
        u = np.maximum(rng.random(surv_idx.size), 1e-300)
        runs = np.floor(np.log(u) / math.log(params.p_insert)).astype(np.int64)
        runs = np.minimum(runs, params.max_insert_run)
    else:
        runs = np.zeros(surv_idx.size, dtype=np.int64)

    counts = runs + 1
    origins = np.repeat(surv_idx, counts)
    out_ts = np.repeat(surv_ts, counts)
    block_start = np.repeat(np.cumsum(counts) - counts, counts)
    within = np.arange(origins.size) - block_start
    ins_mask = within > 0
    if params.insert_spacing > 0.0:
        out_ts = out_ts + within * params.insert_spacing

    if out_ts.size > 1:
        ipds = np.diff(out_ts)
        # Spacing may step past the next survivor; keep arrival order.
        ipds = np.maximum(ipds, 0.0)
        if params.sigma > 0.0:
            if params.jitter == "laplace":
                noise = rng.laplace(0.0, params.sigma / math.sqrt(2.0), size=ipds.size)
            else:
                half = 0.5 * params.delta
                p_sub = substitution_prob(params.delta, params.sigma)
                flips = rng.random(ipds.size) < p_sub
                signs = np.where(rng.random(ipds.size) < 0.5, -1.0, 1.0)
                # an IPD too small to move down gets pushed up instead
                signs = np.where(ipds < half, 1.0, signs)
                noise = np.where(flips, signs * half, 0.0)
        else:
            noise = np.zeros(ipds.size)
        ipds = np.maximum(ipds + noise, 0.0)
        final = np.empty_like(out_ts)
        final[0] = out_ts[0]
        np.cumsum(ipds, out=final[1:])
        final[1:] += out_ts[0]
    else:
        noise = np.zeros(0)
        final = out_ts

    log = ChannelLog(
        deleted_indices=deleted,
        origins=origins,
        inserted_mask=ins_mask,
        jitter=noise,
    )
    return PacketFlow(final, label=flow.label), log
