"""Channel set generation, file I/O, and collinearity detection.

Channels are stored as the columns of a complex M x K matrix: column k is
the vector channel from the M-antenna transmitter to single-antenna user k.
Noise is normalized to unit variance throughout, so SNRs are plain
|h_k^H w|^2 values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_COLLINEAR_TOL = 1e-9


class ChannelFormatError(ValueError):
    """Channel file is malformed (bad JSON, missing keys, wrong types)."""


class ChannelDimensionError(ChannelFormatError):
    """Declared dimensions disagree with the encoded data."""


class ChannelValidationError(ValueError):
    """Channel matrix violates a construction invariant (e.g. zero column)."""


@dataclass(frozen=True)
class ChannelSet:
    """An M x K complex channel matrix plus provenance.

    Invariants enforced at construction: M >= 1, K >= 1, all entries finite,
    and every column has strictly positive norm.
    """

    H: np.ndarray
    source: str = "memory"

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.complex128)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise ChannelValidationError(
                f"channel matrix must be 2-D with positive dims, got shape {H.shape}"
            )
        if not np.all(np.isfinite(H)):
            raise ChannelValidationError("channel matrix contains NaN or Inf")
        norms = np.linalg.norm(H, axis=0)
        if np.any(norms == 0.0):
            bad = int(np.argmin(norms))
            raise ChannelValidationError(f"zero channel: column {bad} has zero norm")
        object.__setattr__(self, "H", H)

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.H[:, k]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.H, axis=0)


@dataclass(frozen=True)
class CollinearGroups:
    """Partition of user indices into maximal groups of mutually collinear channels.

    ``representatives[g]`` is the member of ``groups[g]`` with the lowest
    channel norm (lowest index on ties); it is the user kept active when the
    solver collapses a collinear group.
    """

    groups: tuple = field(default=())
    representatives: tuple = field(default=())
    tolerance: float = DEFAULT_COLLINEAR_TOL

    def dropped(self) -> list:
        """Indices of all non-representative users, ascending."""
        out = []
        for g, rep in zip(self.groups, self.representatives):
            out.extend(k for k in g if k != rep)
        return sorted(out)

    def kept(self) -> list:
        return sorted(self.representatives)


def generate_iid(seed: int, M: int, K: int, variance: float = 1.0) -> ChannelSet:
    """Draw an M x K matrix of i.i.d. circularly-symmetric complex Gaussians.

    Each entry has variance ``variance`` (real and imaginary parts are
    independent N(0, variance/2)). The draw is a pure function of
    (seed, M, K, variance): a fresh generator is created per call, so results
    do not depend on call order or thread scheduling. Unit-variance entries
    are drawn first and then scaled by sqrt(variance).
    """
    if not (isinstance(M, (int, np.integer)) and M >= 1):
        raise ValueError(f"antenna count M must be a positive integer, got {M!r}")
    if not (isinstance(K, (int, np.integer)) and K >= 1):
        raise ValueError(f"user count K must be a positive integer, got {K!r}")
    if not (variance > 0):
        raise ValueError(f"variance must be positive, got {variance!r}")
    rng = np.random.default_rng(seed)
    re = rng.standard_normal((M, K))
    im = rng.standard_normal((M, K))
    H = (re + 1j * im) / math.sqrt(2.0)
    H = H * math.sqrt(variance)
    return ChannelSet(H=H, source=f"seed:{seed}")


def _require(cond, msg, exc=ChannelFormatError):
    if not cond:
        raise exc(msg)


def _reject_constant(token):
    raise ChannelFormatError(f"non-finite value {token!r} not permitted in channel file")


def save_channels(channels: ChannelSet, path) -> None:
    """Write a channel set to the JSON channel file format.

    Schema: {"M": int, "K": int, "columns": [[[re, im], ...] x K]} where each
    column holds M [re, im] pairs. Doubles round-trip exactly through repr.
    """
    H = channels.H
    columns = [[[float(H[m, k].real), float(H[m, k].imag)] for m in range(H.shape[0])]
               for k in range(H.shape[1])]
    payload = {"M": channels.M, "K": channels.K, "columns": columns}
    with open(path, "w") as f:
        json.dump(payload, f)
        f.write("\n")


def load_channels(path) -> ChannelSet:
    """Load a channel set from the JSON channel file format.

    Raises ChannelFormatError for malformed files, ChannelDimensionError when
    the declared M/K disagree with the data, and ChannelValidationError for
    invalid matrices (zero columns). NaN/Inf tokens are rejected.
    """
    try:
        with open(path) as f:
            payload = json.load(f, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ChannelFormatError(f"invalid JSON in channel file {path}: {e}") from e
    _require(isinstance(payload, dict), "channel file must contain a JSON object")
    for key in ("M", "K", "columns"):
        _require(key in payload, f"channel file missing key {key!r}")
    M, K, columns = payload["M"], payload["K"], payload["columns"]
    _require(isinstance(M, int) and isinstance(K, int), "M and K must be integers")
    _require(isinstance(columns, list), "columns must be a list")
    _require(len(columns) == K, f"declared K={K} but found {len(columns)} columns",
             ChannelDimensionError)
    H = np.empty((M, K), dtype=np.complex128)
    for k, col in enumerate(columns):
        _require(isinstance(col, list), f"column {k} must be a list")
        _require(len(col) == M, f"declared M={M} but column {k} has {len(col)} entries",
                 ChannelDimensionError)
        for m, pair in enumerate(col):
            _require(isinstance(pair, list) and len(pair) == 2,
                     f"entry ({m},{k}) must be a [re, im] pair")
            re, im = pair
            _require(isinstance(re, (int, float)) and isinstance(im, (int, float)),
                     f"entry ({m},{k}) must hold numbers")
            H[m, k] = complex(re, im)
    return ChannelSet(H=H, source=f"file:{path}")


def detect_collinear(channels: ChannelSet, tolerance: float = DEFAULT_COLLINEAR_TOL) -> CollinearGroups:
    """Group users whose channels are equal up to a complex scale factor.

    Users i and j are merged when |h_i^H h_j| >= (1 - tolerance) ||h_i|| ||h_j||;
    groups are the union-find closure of the pairwise test, so chains of
    near-collinear vectors may merge users whose extreme members are less
    correlated. Each group's representative is its lowest-norm member
    (lowest index on ties).
    """
    if not (0.0 < tolerance < 1.0):
        raise ValueError(f"tolerance must be in (0, 1), got {tolerance!r}")
    H = channels.H
    K = channels.K
    norms = np.linalg.norm(H, axis=0)
    parent = list(range(K))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    inner = np.abs(H.conj().T @ H)
    thresh = (1.0 - tolerance) * np.outer(norms, norms)
    for i in range(K):
        for j in range(i + 1, K):
            if inner[i, j] >= thresh[i, j]:
                union(i, j)

    members = {}
    for k in range(K):
        members.setdefault(find(k), []).append(k)
    groups = []
    reps = []
    for root in sorted(members):
        g = tuple(sorted(members[root]))
        # lowest norm wins; ties resolved by index order of the scan
        rep = min(g, key=lambda k: (norms[k], k))
        groups.append(g)
        reps.append(rep)
    return CollinearGroups(groups=tuple(groups), representatives=tuple(reps),
                           tolerance=float(tolerance))
