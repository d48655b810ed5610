"""Seeded Monte-Carlo sweeps: min-SNR vs transmit power and per-user snapshots.

Reproducibility contract: every channel realization seed is derived from
(master_seed, realization_index) through a SeedSequence, so the same channels
are reused across the power grid (min-SNR is then strictly increasing in P_t
for every record) and results are independent of the worker count.  Failures
of individual solves are recorded as data, never raised.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .channels import ChannelSet, generate_iid
from .solver import SolverConfig, solve, per_user_snr
from .baselines import OracleConfig, random_sampling_oracle, mrt_weakest, sum_eig

METHOD_SOLVER = "solver"
KNOWN_BASELINES = ("mrt_weakest", "sum_eig")
BALANCE_TOL = 1e-6


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def derive_seed(master_seed: int, *key) -> int:
    """Splittable per-record seed: SeedSequence([master_seed, *key])."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SweepConfig:
    M: int
    K: int
    pt_grid_db: tuple
    n_realizations: int
    master_seed: int = 0
    variance: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    oracle: OracleConfig | None = None
    baselines: tuple = KNOWN_BASELINES
    record_timing: bool = False
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if len(self.pt_grid_db) == 0:
            raise ValueError("pt_grid_db must be non-empty")
        object.__setattr__(self, "pt_grid_db", tuple(float(x) for x in self.pt_grid_db))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        for b in self.baselines:
            if b not in KNOWN_BASELINES:
                raise ValueError(f"unknown baseline {b!r}")

    def methods(self) -> list:
        out = [METHOD_SOLVER]
        out.extend(self.baselines)
        if self.oracle is not None:
            out.append("oracle")
        return out


def sweep_config_from_dict(payload: dict) -> SweepConfig:
    """Build a SweepConfig from the JSON sweep-file representation."""
    known = {"M", "K", "pt_grid_db", "n_realizations", "master_seed", "variance",
             "solver", "oracle", "baselines", "record_timing", "outputs"}
    extra = set(payload) - known
    if extra:
        raise ValueError(f"unknown sweep config keys: {sorted(extra)}")
    kwargs = dict(payload)
    if kwargs.get("solver") is not None:
        kwargs["solver"] = SolverConfig(**kwargs["solver"])
    else:
        kwargs.pop("solver", None)
    if kwargs.get("oracle") is not None:
        kwargs["oracle"] = OracleConfig(**kwargs["oracle"])
    if "pt_grid_db" in kwargs:
        kwargs["pt_grid_db"] = tuple(kwargs["pt_grid_db"])
    if "baselines" in kwargs:
        kwargs["baselines"] = tuple(kwargs["baselines"])
    return SweepConfig(**kwargs)


def sweep_config_to_dict(cfg: SweepConfig) -> dict:
    out = {
        "M": cfg.M,
        "K": cfg.K,
        "pt_grid_db": list(cfg.pt_grid_db),
        "n_realizations": cfg.n_realizations,
        "master_seed": cfg.master_seed,
        "variance": cfg.variance,
        "solver": {k: v for k, v in asdict(cfg.solver).items() if k != "init_w"},
        "oracle": None if cfg.oracle is None else asdict(cfg.oracle),
        "baselines": list(cfg.baselines),
        "record_timing": cfg.record_timing,
        "outputs": dict(cfg.outputs),
    }
    return out


@dataclass(frozen=True)
class SweepRecord:
    method: str
    pt_db: float
    realization: int
    status: str                      # "ok" or "failed: <reason>"
    min_snr: float | None = None
    per_user_snr: tuple = ()
    balanced: bool | None = None
    rank_case: str | None = None
    iters: int | None = None
    wall_ms: float | None = None
    kkt: dict | None = None


@dataclass(frozen=True)
class AggregateRow:
    method: str
    pt_db: float
    mean_min_snr: float | None
    n_ok: int
    n_failed: int


@dataclass(frozen=True)
class SweepResult:
    config: dict                     # serialized SweepConfig
    records: tuple
    aggregates: tuple

    def failed_records(self):
        return [r for r in self.records if r.status != "ok"]


def _balanced(snrs) -> bool:
    snrs = np.asarray(snrs, dtype=float)
    lo = float(snrs.min())
    if lo <= 0:
        return False
    return bool((snrs.max() - lo) / lo <= BALANCE_TOL)


def _run_method(method, channels, pt, cfg: SweepConfig):
    """One (method, instance) evaluation; returns the record field dict."""
    t0 = time.perf_counter()
    if method == METHOD_SOLVER:
        result = solve(channels, pt, cfg.solver)
        rep = result.report
        active = list(result.dual.active)
        act = rep.per_user_snr[active]
        return {
            "min_snr": float(rep.min_snr),
            "per_user_snr": tuple(float(x) for x in rep.per_user_snr),
            "balanced": _balanced(act),
            "rank_case": rep.rank_case,
            "iters": rep.iters,
            "kkt": rep.kkt.as_dict(),
            "elapsed": time.perf_counter() - t0,
        }
    if method == "mrt_weakest":
        prec = mrt_weakest(channels, pt)
    elif method == "sum_eig":
        prec = sum_eig(channels, pt)
    elif method == "oracle":
        prec, _ = random_sampling_oracle(channels, pt, cfg.oracle)
    else:
        raise ValueError(f"unknown method {method!r}")
    snrs = per_user_snr(prec, channels)
    return {
        "min_snr": float(snrs.min()),
        "per_user_snr": tuple(float(x) for x in snrs),
        "balanced": _balanced(snrs),
        "rank_case": None,
        "iters": None,
        "kkt": None,
        "elapsed": time.perf_counter() - t0,
    }


def _run_cell(cfg: SweepConfig, i_pt: int, realization: int) -> list:
    """All methods for one (power point, realization) cell."""
    pt_db = cfg.pt_grid_db[i_pt]
    pt = db_to_linear(pt_db)
    seed = derive_seed(cfg.master_seed, realization)
    channels = generate_iid(seed, cfg.M, cfg.K, cfg.variance)
    records = []
    for method in cfg.methods():
        try:
            fields = _run_method(method, channels, pt, cfg)
            wall_ms = fields.pop("elapsed") * 1e3
            records.append(SweepRecord(
                method=method, pt_db=pt_db, realization=realization, status="ok",
                wall_ms=wall_ms if cfg.record_timing else None, **fields))
        except Exception as e:  # failures are data, not control flow
            records.append(SweepRecord(
                method=method, pt_db=pt_db, realization=realization,
                status=f"failed: {type(e).__name__}: {e}"))
    return records


def run_sweep(cfg: SweepConfig, n_workers: int = 1) -> SweepResult:
    """Run the full grid; aggregation is a deterministic fold in index order."""
    cells = [(i_pt, r) for i_pt in range(len(cfg.pt_grid_db))
             for r in range(cfg.n_realizations)]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_cell = list(pool.map(lambda c: _run_cell(cfg, *c), cells))
    else:
        per_cell = [_run_cell(cfg, *c) for c in cells]
    records = [rec for cell in per_cell for rec in cell]

    aggregates = []
    for method in cfg.methods():
        for pt_db in cfg.pt_grid_db:
            group = [r for r in records if r.method == method and r.pt_db == pt_db]
            ok = [r for r in group if r.status == "ok"]
            mean = float(np.mean([r.min_snr for r in ok])) if ok else None
            aggregates.append(AggregateRow(
                method=method, pt_db=pt_db, mean_min_snr=mean,
                n_ok=len(ok), n_failed=len(group) - len(ok)))
    return SweepResult(config=sweep_config_to_dict(cfg), records=tuple(records),
                       aggregates=tuple(aggregates))


@dataclass(frozen=True)
class SnapshotTable:
    """Per-user SNRs of each method on a single realization."""

    pt_db: float
    realization: int
    K: int
    methods: tuple
    snrs: dict                       # method -> tuple of K floats


def snapshot_users(cfg: SweepConfig, i_pt: int = 0, realization: int = 0) -> SnapshotTable:
    """Evaluate all methods once and tabulate per-user SNRs (bar-chart shape)."""
    if not (0 <= i_pt < len(cfg.pt_grid_db)):
        raise ValueError(f"i_pt out of range: {i_pt}")
    records = _run_cell(cfg, i_pt, realization)
    snrs = {}
    for rec in records:
        if rec.status != "ok":
            raise RuntimeError(f"snapshot method {rec.method} failed: {rec.status}")
        snrs[rec.method] = rec.per_user_snr
    return SnapshotTable(pt_db=cfg.pt_grid_db[i_pt], realization=realization,
                         K=cfg.K, methods=tuple(cfg.methods()), snrs=snrs)
