"""Reference precoders used for verification and benchmark comparison.

None of these are competitive algorithms: the sampling oracle brackets the
attainable min-SNR on small instances, and the two closed-form baselines are
deliberately simple sanity anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet
from .solver import Precoder, canonical_phase

_CHUNK = 4096


@dataclass(frozen=True)
class OracleConfig:
    """Sampling oracle parameters.

    ``n_samples`` random unit directions are drawn in chunks whose seeds are
    derived from (seed, chunk index), so the sample stream is independent of
    how work is scheduled and prefixes are nested: enlarging n_samples never
    changes the samples already drawn.
    """

    n_samples: int = 100_000
    seed: int = 0
    refine: bool = True

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def _unit_directions(seed: int, n: int, m: int):
    """Yield chunks of uniformly distributed unit directions in C^m."""
    n_chunks = (n + _CHUNK - 1) // _CHUNK
    for c in range(n_chunks):
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        block = rng.standard_normal((_CHUNK, m)) + 1j * rng.standard_normal((_CHUNK, m))
        if c == n_chunks - 1 and n % _CHUNK:
            block = block[: n % _CHUNK]
        yield block / np.linalg.norm(block, axis=1, keepdims=True)


def _min_snr(w, H, pt):
    return float(np.min(np.abs(H.conj().T @ w) ** 2))


def _refine(w, H, pt, sweeps=10, step=0.25):
    """Cyclic coordinate perturbation on the power sphere; the step halves
    after every sweep without improvement. Never decreases the value."""
    M = H.shape[0]
    scale = math.sqrt(pt)
    cur = w.copy()
    val = _min_snr(cur, H, pt)
    for _ in range(sweeps):
        improved = False
        for m in range(M):
            for delta in (step, -step, 1j * step, -1j * step):
                cand = cur.copy()
                cand[m] += delta * scale
                nrm = np.linalg.norm(cand)
                if nrm == 0.0:
                    continue
                cand *= scale / nrm
                v = _min_snr(cand, H, pt)
                if v > val:
                    cur, val, improved = cand, v, True
        if not improved:
            step *= 0.5
    return cur, val


def random_sampling_oracle(channels: ChannelSet, pt: float,
                           cfg: OracleConfig | None = None):
    """Best min-SNR over seeded random unit directions scaled to the budget.

    Returns (Precoder, min_snr). With ``refine`` enabled the best sample is
    polished by coordinate perturbation, which can only increase the value.
    Deterministic per (seed, n_samples, instance).
    """
    cfg = cfg or OracleConfig()
    H = channels.H
    scale = math.sqrt(pt)
    best_val = -1.0
    best_w = None
    for block in _unit_directions(cfg.seed, cfg.n_samples, channels.M):
        amps = np.abs(block @ H.conj()) ** 2 * pt
        mins = amps.min(axis=1)
        i = int(np.argmax(mins))
        if mins[i] > best_val:
            best_val = float(mins[i])
            best_w = block[i] * scale
    if cfg.refine:
        best_w, best_val = _refine(best_w, H, pt)
    return Precoder(w=best_w, pt=pt), best_val


def mrt_weakest(channels: ChannelSet, pt: float) -> Precoder:
    """Matched filter toward the user with the smallest channel norm."""
    norms = channels.norms()
    k = int(np.argmin(norms))
    w = channels.H[:, k] * (math.sqrt(pt) / norms[k])
    return Precoder(w=w, pt=pt)


def sum_eig(channels: ChannelSet, pt: float) -> Precoder:
    """Principal eigenvector of sum_k h_k h_k^H, scaled to the budget.

    Canonical-phase normalization makes the returned vector deterministic
    even when the leading eigenvalue is degenerate (up to the eigensolver's
    own run-stable basis choice).
    """
    vals, vecs = np.linalg.eigh(channels.H @ channels.H.conj().T)
    w = canonical_phase(vecs[:, -1])
    w = w * (math.sqrt(pt) / np.linalg.norm(w))
    return Precoder(w=w, pt=pt)
