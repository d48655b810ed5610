"""Rate-balancing solver for max-min fair multicast beamforming.

The problem is  max_w min_k |h_k^H w|^2  subject to ||w||^2 <= P_t.  The
solver alternates two closed-form blocks:

  1. auxiliary update   beta_k = h_k^H w * P_t / ||w||^2
  2. precoder update    maximize the per-user quadratic surrogates
                        2 Re{beta_k^* h_k^H w} - (|beta_k|^2 / P_t) ||w||^2
                        over the power sphere.

Step 2 is solved in closed form through the dual weights lambda: with
Htil = [beta_1 h_1, ..., beta_K h_K] the balanced stationary point satisfies

    2 zeta Re{Htil^H Htil} lambda - z 1 = b,   sum(lambda) = 1,

where b_k = |beta_k|^2 and z is the common surrogate level.  Substituting
rho = zeta * lambda decouples the system: Re{Htil^H Htil} rho = (b + z 1)/2 is
affine in z, and z is pinned by the scalar quadratic ||Htil rho(z)||^2 = P_t.
An equivalent K x K linear system D lambda = d parametrized by the power
multiplier mu (found by bisection) provides an independent route to the same
lambda; both are exposed and cross-checked.

When the balanced all-active solution is dual-infeasible (some lambda_k < 0)
the true subproblem optimum leaves those users strictly above the common
level; an active-set search then balances a subset and verifies every
excluded user sits at or above z.  The same machinery doubles as the fallback
for rank-deficient systems in overloaded (K > M) configurations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .channels import ChannelSet, detect_collinear, DEFAULT_COLLINEAR_TOL

RANK_UNDERLOADED = "K<=M"
RANK_CRITICAL = "M<K<=2M"
RANK_OVERLOADED = "K>2M"

CERTIFY_TOL = 1e-6
BALANCE_TOL = 1e-6

_MU_MAX = 1e12


class SolverError(Exception):
    """Base class for solver failures."""


class RankDeficiencyError(SolverError):
    """A dual linear system is singular at the configured condition cutoff."""


class InfeasibleDualError(SolverError):
    """The balanced-level quadratic admits no root with positive scale."""


class BracketFailureError(SolverError):
    """The power residual never changes sign along the mu bracket expansion."""


class DegenerateDirectionError(SolverError):
    """The weighted channel combination Htil @ lambda vanished."""


@dataclass(frozen=True)
class Precoder:
    """Complex transmit vector w with its power budget (linear scale)."""

    w: np.ndarray
    pt: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.complex128))

    @property
    def power(self) -> float:
        return float(np.vdot(self.w, self.w).real)


@dataclass(frozen=True)
class SolverConfig:
    """Solver tolerances, iteration caps, and strategy switches.

    inner_update:
      "auto"       take the all-active balanced step whenever it does not
                   decrease the current min-SNR, otherwise run the active-set
                   search (monotone by construction).
      "active-set" always run the active-set search; finds the subproblem
                   optimum every iteration and is the right mode for
                   multi-start global polishing on small instances.
    """

    outer_tol: float = 1e-8
    max_outer_iters: int = 200
    bisect_tol: float = 1e-12
    bisect_max_iters: int = 200
    cond_threshold: float = 1e-12
    collinear_tol: float = DEFAULT_COLLINEAR_TOL
    init_strategy: str = "sum-of-channels"
    init_w: object = None
    inner_update: str = "auto"

    def __post_init__(self):
        for name in ("outer_tol", "bisect_tol", "cond_threshold", "collinear_tol"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer_iters", "bisect_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.init_strategy not in ("sum-of-channels", "principal-eigenvector", "user-supplied"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")
        if self.inner_update not in ("auto", "active-set"):
            raise ValueError(f"unknown inner_update {self.inner_update!r}")


@dataclass(frozen=True)
class DualLinearSystem:
    """The two equivalent K x K dual systems built from one (beta, H) pair.

    htil columns are beta_k h_k; gram = htil^H htil; b_k = |beta_k|^2.
    Rows i < K of D encode the pairwise balance conditions against user K:
    D[i, j] = 2 Re{beta_j a_i^H h_j} - bdiff_i |beta_j|^2 / pt with
    a_i = beta_K h_K - beta_i h_i and bdiff_i = b_K - b_i; the last row is
    all ones.  The right-hand side is d_i = mu * bdiff_i, d_K = 1.
    """

    htil: np.ndarray
    gram: np.ndarray
    b: np.ndarray
    bdiff: np.ndarray
    D: np.ndarray
    pt: float

    @property
    def K(self) -> int:
        return self.b.shape[0]

    @property
    def M(self) -> int:
        return self.htil.shape[0]

    @property
    def re_gram(self) -> np.ndarray:
        return self.gram.real

    def rhs(self, mu: float) -> np.ndarray:
        d = np.empty(self.K)
        d[:-1] = mu * self.bdiff
        d[-1] = 1.0
        return d


@dataclass(frozen=True)
class DualSolution:
    """Dual weights and multipliers for one precoder update.

    lam sums to one and is zero outside ``active``; z is the balanced
    surrogate level of the active users; zeta scales Htil @ lam back to the
    power sphere; mu is the (clamped nonnegative) power multiplier; eta is
    the sum-constraint multiplier of the quadratic dual form, which matches
    -(mean(b) + 2z) only at exact balance.
    """

    lam: np.ndarray
    mu: float
    zeta: float
    z: float
    eta: float
    active: tuple


@dataclass(frozen=True)
class KktResiduals:
    """The five first-order optimality residuals of a precoder update."""

    simplex: float
    stationarity: float
    slackness: float
    power_slack: float
    primal: float

    def max_residual(self) -> float:
        return max(self.simplex, self.stationarity, self.slackness,
                   self.power_slack, self.primal)

    def as_dict(self) -> dict:
        return {
            "simplex": self.simplex,
            "stationarity": self.stationarity,
            "slackness": self.slackness,
            "power_slack": self.power_slack,
            "primal": self.primal,
        }


@dataclass(frozen=True)
class RankDiagnostics:
    """Regime classification and conditioning of the dual systems."""

    case: str
    rcond_re_gram: float
    rcond_d: float
    channels_independent: bool
    balance_guaranteed: bool
    balance_impossible: bool


@dataclass
class SolveReport:
    """Per-solve diagnostics: SNRs, trajectory, certificates, counters."""

    per_user_snr: np.ndarray
    min_snr: float
    trajectory: list
    kkt: KktResiduals
    rank_case: str
    rank_diag: RankDiagnostics
    balanced: bool
    dropped_users: list
    certified: bool
    converged: bool
    iters: int
    wall_time: float


@dataclass(frozen=True)
class SolveResult:
    precoder: Precoder
    dual: DualSolution
    report: SolveReport


# ---------------------------------------------------------------------------
# elementary operations


def _as_vector(w) -> np.ndarray:
    return np.asarray(w.w if isinstance(w, Precoder) else w, dtype=np.complex128)


def _rcond(A: np.ndarray) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def canonical_phase(w) -> np.ndarray:
    """Rotate w so its largest-magnitude entry is real nonnegative.

    SNRs are invariant to a global phase; this picks the canonical member of
    each phase orbit so precoders can be compared entrywise.
    """
    v = _as_vector(w)
    i = int(np.argmax(np.abs(v)))
    if v[i] == 0:
        return v.copy()
    return v * np.exp(-1j * np.angle(v[i]))


def snr(w, h) -> float:
    """Received SNR |h^H w|^2 under unit-variance noise."""
    v = _as_vector(w)
    h = np.asarray(h, dtype=np.complex128)
    if v.shape != h.shape:
        raise ValueError(f"dimension mismatch: w has shape {v.shape}, h has shape {h.shape}")
    return float(np.abs(np.vdot(h, v)) ** 2)


def per_user_snr(w, channels: ChannelSet) -> np.ndarray:
    v = _as_vector(w)
    if v.shape[0] != channels.M:
        raise ValueError(f"precoder length {v.shape[0]} != antenna count {channels.M}")
    return np.abs(channels.H.conj().T @ v) ** 2


def update_beta(precoder: Precoder, channels: ChannelSet) -> np.ndarray:
    """Optimal auxiliary variables beta_k = h_k^H w * P_t / ||w||^2.

    At matched power (||w||^2 = P_t) this reduces to beta_k = h_k^H w.
    """
    w = _as_vector(precoder)
    if w.shape[0] != channels.M:
        raise ValueError(f"precoder length {w.shape[0]} != antenna count {channels.M}")
    nrm2 = float(np.vdot(w, w).real)
    if nrm2 == 0.0:
        raise ValueError("zero precoder: beta update undefined")
    return (channels.H.conj().T @ w) * (precoder.pt / nrm2)


def surrogate(precoder: Precoder, beta: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Per-user surrogate 2 Re{beta_k^* h_k^H w} - (|beta_k|^2 / P_t) ||w||^2.

    The minimum of this vector is the objective of the precoder subproblem;
    with beta from update_beta at matched power it equals the per-user SNR.
    """
    w = _as_vector(precoder)
    beta = np.asarray(beta, dtype=np.complex128)
    if beta.shape[0] != channels.K:
        raise ValueError(f"beta length {beta.shape[0]} != user count {channels.K}")
    c = channels.H.conj().T @ w
    nrm2 = float(np.vdot(w, w).real)
    return 2.0 * (np.conj(beta) * c).real - (np.abs(beta) ** 2) * (nrm2 / precoder.pt)


def build_dual_system(beta: np.ndarray, channels: ChannelSet, pt: float) -> DualLinearSystem:
    """Assemble both dual systems from one auxiliary vector."""
    beta = np.asarray(beta, dtype=np.complex128)
    if beta.shape[0] != channels.K:
        raise ValueError(f"beta length {beta.shape[0]} != user count {channels.K}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta contains non-finite entries")
    htil = channels.H * beta[None, :]
    gram = htil.conj().T @ htil
    b = np.abs(beta) ** 2
    K = b.shape[0]
    bdiff = b[-1] - b[:-1]
    D = np.empty((K, K))
    if K > 1:
        re_g = gram.real
        D[:-1, :] = 2.0 * (re_g[-1, :][None, :] - re_g[:-1, :]) - np.outer(bdiff, b) / pt
    D[-1, :] = 1.0
    return DualLinearSystem(htil=htil, gram=gram, b=b, bdiff=bdiff, D=D, pt=float(pt))


def reconstruct_w(lam: np.ndarray, system: DualLinearSystem) -> Precoder:
    """Scale the weighted channel combination back to the power sphere:
    w = zeta * Htil @ lam with zeta = sqrt(P_t) / ||Htil @ lam||."""
    v = system.htil @ np.asarray(lam, dtype=np.float64)
    nrm = float(np.linalg.norm(v))
    if nrm <= 1e-300:
        raise DegenerateDirectionError("Htil @ lam vanished; no precoder direction")
    return Precoder(w=v * (math.sqrt(system.pt) / nrm), pt=system.pt)


def solve_lambda_qp(system: DualLinearSystem,
                    cond_threshold: float = 1e-12) -> DualSolution:
    """Closed-form dual solve through the rho = zeta * lambda parametrization.

    Solves Re{gram} rho = (b + z 1)/2 along the affine family rho(z), picks z
    from the scalar quadratic ||Htil rho(z)||^2 = P_t (the root with positive
    zeta = sum(rho); the larger root when both qualify), then lambda = rho/zeta.
    The result satisfies 2 zeta Re{gram} lambda - z 1 = b and sum(lambda) = 1.
    """
    re_g = system.re_gram
    K = system.K
    rc = _rcond(re_g)
    if rc < cond_threshold:
        raise RankDeficiencyError(
            f"Re(gram) reciprocal condition {rc:.3e} below threshold {cond_threshold:.1e}")
    rhs = np.column_stack([system.b * 0.5, np.full(K, 0.5)])
    sols = np.linalg.solve(re_g, rhs)
    rho0, rho1 = sols[:, 0], sols[:, 1]
    u0 = system.htil @ rho0
    u1 = system.htil @ rho1
    q2 = float(np.vdot(u1, u1).real)
    q1 = 2.0 * float(np.vdot(u0, u1).real)
    q0 = float(np.vdot(u0, u0).real) - system.pt
    if q2 <= 0.0:
        raise InfeasibleDualError("balance family has no power dependence on the level z")
    disc = q1 * q1 - 4.0 * q2 * q0
    if disc < 0.0:
        raise InfeasibleDualError("no real balanced level meets the power budget")
    sq = math.sqrt(disc)
    z_hi = (-q1 + sq) / (2.0 * q2)
    z_lo = (-q1 - sq) / (2.0 * q2)
    for z in (z_hi, z_lo):
        rho = rho0 + z * rho1
        zeta = float(rho.sum())
        if zeta > 0.0:
            lam = rho / zeta
            mu = max(0.0, 1.0 / zeta - float(lam @ system.b) / system.pt)
            eta = -(float(np.mean(system.b)) + 2.0 * z)
            return DualSolution(lam=lam, mu=mu, zeta=zeta, z=float(z), eta=eta,
                                active=tuple(range(K)))
    raise InfeasibleDualError("no balanced level with positive scale zeta")


def solve_lambda_linear(system: DualLinearSystem, mu: float,
                        cond_threshold: float = 1e-12) -> np.ndarray:
    """Solve D lambda = d(mu) directly; the all-ones last row enforces
    sum(lambda) = 1."""
    rc = _rcond(system.D)
    if rc < cond_threshold:
        raise RankDeficiencyError(
            f"D reciprocal condition {rc:.3e} below threshold {cond_threshold:.1e}")
    return np.linalg.solve(system.D, system.rhs(mu))


def bisect_mu(system: DualLinearSystem, cfg: SolverConfig | None = None):
    """Find mu >= 0 so the precoder implied by D lambda = d(mu) is power-tight.

    lambda(mu) is affine in mu, so D is factored once (two right-hand sides)
    and every probe costs O(M).  The bracket starts at [0, 1] and the upper
    end doubles until the power residual changes sign (capped at 1e12);
    failure to bracket raises BracketFailureError.  Returns (mu, lambda,
    Precoder); the precoder satisfies |  ||w||^2 - P_t | <= bisect_tol * P_t.
    """
    cfg = cfg or SolverConfig()
    rc = _rcond(system.D)
    if rc < cfg.cond_threshold:
        raise RankDeficiencyError(
            f"D reciprocal condition {rc:.3e} below threshold {cfg.cond_threshold:.1e}")
    K = system.K
    rhs0 = np.zeros(K)
    rhs0[-1] = 1.0
    rhs1 = np.zeros(K)
    rhs1[:-1] = system.bdiff
    sols = np.linalg.solve(system.D, np.column_stack([rhs0, rhs1]))
    lam0, lam1 = sols[:, 0], sols[:, 1]
    n0 = system.htil @ lam0
    n1 = system.htil @ lam1
    s0 = float(lam0 @ system.b) / system.pt
    s1 = float(lam1 @ system.b) / system.pt
    pt = system.pt

    def residual(mu):
        denom = s0 + mu * (s1 + 1.0)
        if denom == 0.0:
            return math.inf
        num = n0 + mu * n1
        return float(np.vdot(num, num).real) / (denom * denom) - pt

    def precoder_at(mu):
        denom = s0 + mu * (s1 + 1.0)
        return Precoder(w=(n0 + mu * n1) / denom, pt=pt)

    tol_abs = cfg.bisect_tol * pt
    g0 = residual(0.0)
    if abs(g0) <= tol_abs:
        return 0.0, lam0.copy(), precoder_at(0.0)
    lo, glo = 0.0, g0
    hi = 1.0
    ghi = residual(hi)
    while math.copysign(1.0, ghi) == math.copysign(1.0, glo) and hi < _MU_MAX:
        hi *= 2.0
        ghi = residual(hi)
    if math.copysign(1.0, ghi) == math.copysign(1.0, glo):
        raise BracketFailureError(
            f"power residual has no sign change on [0, {_MU_MAX:.0e}]: "
            f"g(0)={g0:.3e}, g(max)={ghi:.3e}")
    for _ in range(cfg.bisect_max_iters):
        mid = 0.5 * (lo + hi)
        gm = residual(mid)
        if math.copysign(1.0, gm) == math.copysign(1.0, glo):
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    mu = 0.5 * (lo + hi)
    g_final = residual(mu)
    if abs(g_final) > tol_abs:
        raise BracketFailureError(
            f"bisection stalled: |power residual| {abs(g_final):.3e} exceeds "
            f"{tol_abs:.3e} (possible pole in the bracket)")
    return mu, lam0 + mu * lam1, precoder_at(mu)


def kkt_residuals(precoder: Precoder, dual: DualSolution, beta: np.ndarray,
                  channels: ChannelSet) -> KktResiduals:
    """Evaluate the five optimality residuals at an arbitrary point.

    (i) |sum(lambda) - 1|; (ii) stationarity norm
    ||(sum_k lam_k |beta_k|^2 / P_t + mu) w - sum_k lam_k beta_k h_k||;
    (iii) max_k |lam_k (surrogate_k - z)|; (iv) |mu (P_t - ||w||^2)|;
    (v) max(0, ||w||^2 - P_t).  Diagnostic semantics: nonzero residuals are
    reported, never raised.
    """
    w = _as_vector(precoder)
    lam = np.asarray(dual.lam, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.complex128)
    if lam.shape[0] != channels.K or beta.shape[0] != channels.K:
        raise ValueError("lambda/beta length must match the user count")
    pt = precoder.pt
    nrm2 = float(np.vdot(w, w).real)
    b = np.abs(beta) ** 2
    scale = float(lam @ b) / pt + dual.mu
    combo = channels.H @ (lam * beta)
    stat = float(np.linalg.norm(scale * w - combo))
    surr = surrogate(precoder, beta, channels)
    slack = float(np.max(np.abs(lam * (surr - dual.z)))) if channels.K else 0.0
    return KktResiduals(
        simplex=float(abs(lam.sum() - 1.0)),
        stationarity=stat,
        slackness=slack,
        power_slack=float(abs(dual.mu * (pt - nrm2))),
        primal=float(max(0.0, nrm2 - pt)),
    )


def rank_case(channels: ChannelSet, system: DualLinearSystem,
              cfg: SolverConfig | None = None) -> RankDiagnostics:
    """Classify the loading regime and report dual-system conditioning.

    Balance across all users is guaranteed attainable only in the
    underloaded case with linearly independent channels; for K > 2M the
    real part of the gram matrix is structurally rank-deficient and a
    balanced all-active solution cannot exist.
    """
    cfg = cfg or SolverConfig()
    M, K = system.M, system.K
    if K <= M:
        case = RANK_UNDERLOADED
    elif K <= 2 * M:
        case = RANK_CRITICAL
    else:
        case = RANK_OVERLOADED
    sub = channels.H
    if sub.shape[1] == K and sub.shape[0] == M:
        rc_h = _rcond(sub)
    else:
        rc_h = _rcond(system.htil)
    independent = bool(K <= M and rc_h > cfg.cond_threshold)
    return RankDiagnostics(
        case=case,
        rcond_re_gram=_rcond(system.re_gram),
        rcond_d=_rcond(system.D),
        channels_independent=independent,
        balance_guaranteed=bool(case == RANK_UNDERLOADED and independent),
        balance_impossible=bool(case == RANK_OVERLOADED),
    )


# ---------------------------------------------------------------------------
# inner precoder update: balanced solve plus active-set search


@dataclass(frozen=True)
class _InnerStep:
    precoder: Precoder
    lam: np.ndarray        # over the local user indexing of the step
    z: float
    zeta: float
    mu: float
    active: tuple          # local indices with lam free (others pinned to 0)
    accepted: bool         # optimality conditions verified


def _subset_balanced(beta, channels, pt, subset, cfg):
    """Balanced solve restricted to ``subset``; tries the quadratic path first
    and falls back to the linear system + bisection. Returns None when both
    routes are rank-deficient or infeasible."""
    sub_h = ChannelSet(H=channels.H[:, subset], source=channels.source)
    system = build_dual_system(beta[subset], sub_h, pt)
    try:
        dual = solve_lambda_qp(system, cond_threshold=cfg.cond_threshold)
        prec = reconstruct_w(dual.lam, system)
        return dual.lam, dual.z, dual.zeta, dual.mu, prec
    except (RankDeficiencyError, InfeasibleDualError, DegenerateDirectionError):
        pass
    try:
        mu, lam, prec = bisect_mu(system, cfg)
        surr_sub = surrogate(prec, beta[subset], sub_h)
        z = float(np.mean(surr_sub))
        v = system.htil @ lam
        zeta = math.sqrt(pt) / float(np.linalg.norm(v))
        return lam, z, zeta, mu, prec
    except (RankDeficiencyError, BracketFailureError, DegenerateDirectionError):
        return None


def _active_set_search(beta, channels, pt, cfg, snr_now, slack_scale) -> _InnerStep:
    """Maximize the minimum surrogate on the power sphere by balancing an
    active subset.

    Moves: a singular or infeasible subset drops its highest-SNR member (the
    user most able to sit above the common level); a negative dual weight
    drops its user; an excluded user falling below the balanced level z is
    reinstated.  A solution with nonnegative weights, all excluded users at
    or above z, and matched power is optimal for the (concave) subproblem.
    Cycles fall back to the best level found, flagged unaccepted.
    """
    K = channels.K
    active = list(range(K))
    visited = set()
    best = None
    rel = 1e-11 * max(1.0, slack_scale)
    for _ in range(4 * K + 8):
        key = frozenset(active)
        if key in visited:
            break
        visited.add(key)
        out = _subset_balanced(beta, channels, pt, active, cfg)
        if out is None:
            if len(active) == 1:
                break
            drop = max(active, key=lambda k: (snr_now[k], k))
            active = [k for k in active if k != drop]
            continue
        lam_s, z, zeta, mu, prec = out
        surr = surrogate(prec, beta, channels)
        lam_full = np.zeros(K)
        lam_full[active] = lam_s
        cand = _InnerStep(precoder=prec, lam=lam_full, z=z, zeta=zeta, mu=mu,
                          active=tuple(active), accepted=False)
        if best is None or float(surr.min()) > best[0]:
            best = (float(surr.min()), cand)
        if np.min(lam_s) < -1e-11 and len(active) > 1:
            drop = active[int(np.argmin(lam_s))]
            active = [k for k in active if k != drop]
            continue
        excluded = [k for k in range(K) if k not in active]
        viol = [k for k in excluded if surr[k] < z - rel]
        if viol:
            back = min(viol, key=lambda k: (surr[k], k))
            active = sorted(active + [back])
            continue
        return replace(cand, accepted=True)
    if best is None:
        raise SolverError("active-set search found no solvable subset")
    return best[1]


def active_set_fallback(beta: np.ndarray, channels: ChannelSet, pt: float,
                        snr_now: np.ndarray,
                        cfg: SolverConfig | None = None) -> _InnerStep:
    """Reduced-active-set dual solve for rank-deficient overloaded systems.

    Greedy heuristic: repeatedly remove the user with the highest current SNR
    until the reduced system is invertible, solve the reduced dual, and accept
    when every excluded user's surrogate is at least the balanced level z
    (within slack).  Returns the best level found flagged unaccepted when no
    subset passes the check.
    """
    cfg = cfg or SolverConfig()
    scale = float(np.max(snr_now)) if len(snr_now) else 1.0
    return _active_set_search(beta, channels, pt, cfg, np.asarray(snr_now), scale)


def _inner_step(beta, channels, pt, cfg, snr_now, current_min) -> _InnerStep:
    """One precoder update.  In "auto" mode the all-active balanced step is
    kept whenever it does not regress the running min-SNR; regression means
    the all-active stationary point is not the subproblem optimum, so the
    active-set search takes over."""
    if cfg.inner_update != "active-set":
        try:
            system = build_dual_system(beta, channels, pt)
            dual = solve_lambda_qp(system, cond_threshold=cfg.cond_threshold)
            prec = reconstruct_w(dual.lam, system)
            new_min = float(np.min(per_user_snr(prec, channels)))
            if new_min >= current_min - 1e-11 * max(1.0, current_min):
                return _InnerStep(precoder=prec, lam=dual.lam, z=dual.z,
                                  zeta=dual.zeta, mu=dual.mu,
                                  active=tuple(range(channels.K)),
                                  accepted=True)
        except (RankDeficiencyError, InfeasibleDualError, DegenerateDirectionError):
            pass
    return _active_set_search(beta, channels, pt, cfg, snr_now, current_min)


# ---------------------------------------------------------------------------
# outer loop


def _initial_direction(H: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    M, K = H.shape
    if cfg.init_strategy == "user-supplied":
        if cfg.init_w is None:
            raise ValueError("init_strategy 'user-supplied' requires init_w")
        w0 = np.asarray(cfg.init_w, dtype=np.complex128)
        if w0.shape != (M,):
            raise ValueError(f"init_w must have shape ({M},), got {w0.shape}")
        if np.linalg.norm(w0) == 0.0:
            raise ValueError("init_w must be nonzero")
        return w0
    if cfg.init_strategy == "sum-of-channels":
        w0 = (H / np.linalg.norm(H, axis=0)[None, :]).sum(axis=1)
        if np.linalg.norm(w0) > 1e-12 * K:
            return w0
        # pathological cancellation: fall through to the eigen initializer
    vals, vecs = np.linalg.eigh(H @ H.conj().T)
    return canonical_phase(vecs[:, -1])


def solve(channels: ChannelSet, pt: float, cfg: SolverConfig | None = None) -> SolveResult:
    """Run the alternating solver on one channel set.

    Collinear channel groups are collapsed to their lowest-norm member before
    iterating (the discarded higher-norm users receive at least the balanced
    SNR for free).  Each iteration refreshes beta, solves the dual for the
    active users, and rebuilds the precoder on the power sphere; the loop
    stops when the relative min-SNR change falls below ``outer_tol``.  The
    emitted report carries the KKT residuals of the final iterate, the rank
    regime, and the (non-decreasing) min-SNR trajectory.
    """
    cfg = cfg or SolverConfig()
    if not (pt > 0):
        raise ValueError(f"power budget must be positive, got {pt!r}")
    t0 = time.perf_counter()
    K_full = channels.K

    groups = detect_collinear(channels, cfg.collinear_tol)
    kept = groups.kept()
    dropped = groups.dropped()
    reduced = ChannelSet(H=channels.H[:, kept], source=channels.source)

    w = _initial_direction(reduced.H, cfg)
    w = w * (math.sqrt(pt) / np.linalg.norm(w))
    prec = Precoder(w=w, pt=pt)
    traj = [float(np.min(per_user_snr(prec, reduced)))]

    step = None          # last inner step kept for the certificate
    beta = None          # the auxiliary vector that step was built from
    converged = False
    iters = 0
    for it in range(cfg.max_outer_iters):
        iters = it + 1
        beta_it = update_beta(prec, reduced)
        snr_now = per_user_snr(prec, reduced)
        try:
            step_it = _inner_step(beta_it, reduced, pt, cfg, snr_now, traj[-1])
        except SolverError:
            if step is None:
                raise
            break
        new_min = float(np.min(per_user_snr(step_it.precoder, reduced)))
        if new_min < traj[-1] - 1e-11 * max(1.0, traj[-1]):
            # only a non-accepted (best-found) step can regress; keep the last
            # monotone iterate rather than emit a decreasing trajectory
            if step is None:
                step, beta = step_it, beta_it
            break
        prec = step_it.precoder
        traj.append(new_min)
        step, beta = step_it, beta_it
        if abs(traj[-1] - traj[-2]) <= cfg.outer_tol * max(abs(traj[-2]), 1e-300):
            converged = True
            break

    # embed the reduced-system dual into the original user indexing
    lam_full = np.zeros(K_full)
    lam_full[np.asarray(kept)] = step.lam
    active_orig = tuple(sorted(kept[i] for i in step.active))
    beta_full = np.zeros(K_full, dtype=np.complex128)
    beta_full[np.asarray(kept)] = beta
    if dropped:
        # consistent beta for the pinned users (lambda is zero there)
        beta_full[np.asarray(dropped)] = update_beta(prec, channels)[np.asarray(dropped)]
    b_active = np.abs(beta[list(step.active)]) ** 2
    eta = -(float(np.mean(b_active)) + 2.0 * step.z)
    dual = DualSolution(lam=lam_full, mu=step.mu, zeta=step.zeta, z=step.z,
                        eta=eta, active=active_orig)

    kkt = kkt_residuals(prec, dual, beta_full, channels)
    final_system = build_dual_system(beta, reduced, pt)
    diag = rank_case(reduced, final_system, cfg)

    snrs = per_user_snr(prec, channels)
    active_snrs = snrs[list(active_orig)]
    lo = float(active_snrs.min())
    spread = float((active_snrs.max() - lo) / lo) if lo > 0 else math.inf
    excluded = sorted(set(range(K_full)) - set(active_orig))
    certified = bool(step.accepted and kkt.max_residual() <= CERTIFY_TOL)
    report = SolveReport(
        per_user_snr=snrs,
        min_snr=float(snrs.min()),
        trajectory=traj,
        kkt=kkt,
        rank_case=diag.case,
        rank_diag=diag,
        balanced=bool(spread <= BALANCE_TOL),
        dropped_users=excluded,
        certified=certified,
        converged=converged,
        iters=iters,
        wall_time=time.perf_counter() - t0,
    )
    return SolveResult(precoder=prec, dual=dual, report=report)


def solve_multistart(channels: ChannelSet, pt: float, cfg: SolverConfig | None = None,
                     n_random: int = 6, seed: int = 0) -> SolveResult:
    """Best-of-several solve for the non-convex regimes.

    Deterministic start list: the configured initializer, the principal
    eigenvector, each user's matched filter, and ``n_random`` seeded Gaussian
    directions.  Returns the run with the highest min-SNR (first winner on
    exact ties).
    """
    cfg = cfg or SolverConfig()
    H = channels.H
    M = channels.M
    starts = [None]
    vals, vecs = np.linalg.eigh(H @ H.conj().T)
    starts.append(canonical_phase(vecs[:, -1]))
    for k in range(channels.K):
        starts.append(H[:, k].copy())
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        starts.append(rng.standard_normal(M) + 1j * rng.standard_normal(M))
    best = None
    for w0 in starts:
        run_cfg = cfg if w0 is None else replace(
            cfg, init_strategy="user-supplied", init_w=w0)
        result = solve(channels, pt, run_cfg)
        if best is None or result.report.min_snr > best.report.min_snr:
            best = result
    return best
