"""End-to-end solver behavior: specials, invariants, both dual paths, fallback."""

import math

import numpy as np
import pytest

from mmfbeam.channels import ChannelSet, generate_iid
from mmfbeam.solver import (
    Precoder,
    SolverConfig,
    active_set_fallback,
    bisect_mu,
    build_dual_system,
    canonical_phase,
    per_user_snr,
    reconstruct_w,
    solve,
    solve_lambda_qp,
    solve_multistart,
    surrogate,
    update_beta,
)
from mmfbeam.baselines import OracleConfig, random_sampling_oracle, sum_eig


def monotone(traj, slack=1e-9):
    return all(b >= a - slack for a, b in zip(traj, traj[1:]))


def test_orthonormal_two_users():
    res = solve(ChannelSet(H=np.eye(2, dtype=complex)), 2.0)
    assert np.allclose(res.report.per_user_snr, [1.0, 1.0], atol=1e-9)
    assert np.allclose(res.dual.lam, [0.5, 0.5], atol=1e-9)
    assert res.report.min_snr == pytest.approx(1.0, abs=1e-9)
    assert res.report.balanced and res.report.certified


def test_single_user_matched_filter():
    rng = np.random.default_rng(0)
    for _ in range(10):
        M = int(rng.integers(1, 8))
        h = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        pt = float(rng.uniform(0.5, 10.0))
        res = solve(ChannelSet(H=h.reshape(M, 1)), pt)
        expect = pt * float(np.linalg.norm(h) ** 2)
        assert abs(res.report.min_snr - expect) <= 1e-10 * expect
        direction = canonical_phase(res.precoder.w) / math.sqrt(pt)
        target = canonical_phase(h / np.linalg.norm(h))
        assert np.max(np.abs(direction - target)) <= 1e-8


def test_orthonormal_general_equal_split():
    # unitary columns: every user gets pt/K and the weights are uniform
    rng = np.random.default_rng(1)
    for M, K in [(4, 3), (6, 4), (5, 5)]:
        A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
        Q, _ = np.linalg.qr(A)
        cs = ChannelSet(H=Q[:, :K])
        pt = 3.0
        res = solve(cs, pt)
        assert np.allclose(res.report.per_user_snr, pt / K, atol=1e-9)
        assert np.allclose(res.dual.lam, 1.0 / K, atol=1e-9)


def test_solve_rejects_bad_power():
    cs = generate_iid(0, 2, 2)
    with pytest.raises(ValueError):
        solve(cs, 0.0)


def test_report_invariants_random_instances():
    rng = np.random.default_rng(2)
    shapes = [(4, 2), (6, 4), (3, 3), (8, 10), (2, 5), (5, 1)]
    for i, (M, K) in enumerate(shapes):
        for s in range(8):
            cs = generate_iid(100 * i + s, M, K)
            pt = float(rng.uniform(0.5, 20.0))
            res = solve(cs, pt)
            rep = res.report
            # power tightness
            assert abs(res.precoder.power - pt) <= 1e-10 * pt
            # simplex and pinned weights
            assert abs(res.dual.lam.sum() - 1.0) <= 1e-12
            inactive = set(range(K)) - set(res.dual.active)
            assert all(res.dual.lam[k] == 0.0 for k in inactive)
            assert rep.dropped_users == sorted(inactive)
            # reported minimum really is the minimum
            assert rep.min_snr == pytest.approx(float(rep.per_user_snr.min()), rel=1e-15)
            # trajectory is an ascent
            assert monotone(rep.trajectory)
            assert res.dual.mu >= 0.0 and res.dual.zeta >= 0.0
            if rep.certified:
                assert rep.kkt.max_residual() <= 1e-6


def test_certified_solves_have_consistent_level():
    # at a certified solve the balanced level z equals the active-set min-SNR
    for seed in range(10):
        cs = generate_iid(seed, 6, 3)
        res = solve(cs, 10.0)
        if res.report.certified and res.report.converged:
            active = list(res.dual.active)
            assert res.dual.z == pytest.approx(
                float(res.report.per_user_snr[active].min()), rel=1e-6)


def test_balance_underloaded_family():
    for seed in range(25):
        cs = generate_iid(seed, 10, 5)
        res = solve(cs, 10.0)
        snrs = res.report.per_user_snr
        spread = (snrs.max() - snrs.min()) / snrs.min()
        assert spread <= 1e-6
        assert res.report.rank_case == "K<=M"
        assert res.report.certified


def test_path_equivalence_on_converged_system():
    # both dual routes solve the same balance conditions: weights agree
    # entrywise and the precoders agree up to a global phase
    for i, (M, K) in enumerate([(4, 2), (6, 4), (10, 5)]):
        for s in range(10):
            cs = generate_iid(500 * i + s, M, K)
            pt = 10.0
            res = solve(cs, pt)
            active = list(res.dual.active)
            sub = ChannelSet(H=cs.H[:, active])
            beta = update_beta(res.precoder, sub)
            sys_ = build_dual_system(beta, sub, pt)
            dual_qp = solve_lambda_qp(sys_)
            mu_b, lam_b, prec_b = bisect_mu(sys_)
            denom = np.maximum(np.abs(dual_qp.lam), 1e-300)
            assert np.max(np.abs(dual_qp.lam - lam_b) / denom) <= 1e-8
            w_qp = canonical_phase(reconstruct_w(dual_qp.lam, sys_).w)
            w_bi = canonical_phase(prec_b.w)
            assert np.max(np.abs(w_qp - w_bi)) / math.sqrt(pt) <= 1e-8


def test_path_equivalence_mid_iteration():
    # the two routes coincide on any well-conditioned system, converged or
    # not: compare them on the system built from the initial precoder
    for i, (M, K) in enumerate([(4, 2), (6, 4), (10, 5)]):
        for s in range(8):
            cs = generate_iid(900 * i + s, M, K)
            pt = 10.0
            w0 = (cs.H / np.linalg.norm(cs.H, axis=0)).sum(axis=1)
            prec = Precoder(w=w0 * math.sqrt(pt) / np.linalg.norm(w0), pt=pt)
            beta = update_beta(prec, cs)
            sys_ = build_dual_system(beta, cs, pt)
            dual_qp = solve_lambda_qp(sys_)
            mu_b, lam_b, prec_b = bisect_mu(sys_)
            denom = np.maximum(np.abs(dual_qp.lam), 1e-300)
            assert np.max(np.abs(dual_qp.lam - lam_b) / denom) <= 1e-8
            w_qp = canonical_phase(reconstruct_w(dual_qp.lam, sys_).w)
            w_bi = canonical_phase(prec_b.w * math.sqrt(pt) / np.linalg.norm(prec_b.w))
            assert np.max(np.abs(w_qp - w_bi)) / math.sqrt(pt) <= 1e-8


def test_solve_from_channel_file(tmp_path):
    from mmfbeam.channels import save_channels, load_channels
    cs = generate_iid(21, 5, 3)
    path = tmp_path / "ch.json"
    save_channels(cs, path)
    direct = solve(cs, 4.0)
    loaded = solve(load_channels(path), 4.0)
    assert loaded.report.min_snr == direct.report.min_snr
    assert np.array_equal(loaded.precoder.w, direct.precoder.w)


def test_scale_law():
    for seed in range(10):
        cs = generate_iid(seed, 4, 3)
        r1 = solve(cs, 1.0)
        r4 = solve(cs, 4.0)
        ratio = r4.report.min_snr / r1.report.min_snr
        assert abs(ratio - 4.0) <= 4e-6
        d1 = canonical_phase(r1.precoder.w / np.linalg.norm(r1.precoder.w))
        d4 = canonical_phase(r4.precoder.w / np.linalg.norm(r4.precoder.w))
        assert np.max(np.abs(d1 - d4)) <= 1e-6


def test_collinear_duplicate_matches_reduced_solve():
    for seed in range(8):
        base = generate_iid(seed, 4, 3)
        dup = 3.0 * base.H[:, 1]
        H = np.column_stack([base.H[:, 0], base.H[:, 1], dup, base.H[:, 2]])
        full = solve(ChannelSet(H=H), 5.0)
        red = solve(base, 5.0)
        assert 2 in full.report.dropped_users
        wf = canonical_phase(full.precoder.w)
        wr = canonical_phase(red.precoder.w)
        assert np.max(np.abs(wf - wr)) <= 1e-10 * math.sqrt(5.0)
        # the discarded duplicate rides 9x above its representative
        assert full.report.per_user_snr[2] == pytest.approx(
            9.0 * full.report.per_user_snr[1], rel=1e-10)


def test_dropped_users_sit_above_active_minimum():
    for seed in range(12):
        cs = generate_iid(seed, 3, 6)
        res = solve(cs, 10.0)
        active = list(res.dual.active)
        floor = res.report.per_user_snr[active].min()
        for k in res.report.dropped_users:
            assert res.report.per_user_snr[k] >= floor - 1e-9 * max(1.0, floor)


def test_tiny_instances_dominate_sampling_oracle():
    oc = OracleConfig(n_samples=20_000, seed=77, refine=True)
    cfg = SolverConfig(inner_update="active-set")
    for seed in range(12):
        cs = generate_iid(seed, 3, 3)
        res = solve_multistart(cs, 1.0, cfg, n_random=6, seed=1)
        _, bound = random_sampling_oracle(cs, 1.0, oc)
        assert res.report.min_snr >= bound * (1.0 - 1e-3)


def test_solver_dominates_sum_eig():
    for seed in range(12):
        cs = generate_iid(seed, 4, 4)
        pt = 2.0
        res = solve(cs, pt)
        base = float(per_user_snr(sum_eig(cs, pt), cs).min())
        assert res.report.min_snr >= base - 1e-9


def test_overloaded_k_beyond_2m_fallback():
    # K > 2M forces a reduced active set with an invertible subsystem
    for seed in range(10):
        cs = generate_iid(seed, 2, 5)
        res = solve(cs, 10.0)
        rep = res.report
        assert rep.rank_case == "K>2M"
        assert len(res.dual.active) <= 4
        assert monotone(rep.trajectory)
        if rep.certified:
            beta = update_beta(res.precoder, cs)
            surr = surrogate(res.precoder, beta, cs)
            for k in rep.dropped_users:
                assert surr[k] >= res.dual.z - 1e-9 * max(1.0, abs(res.dual.z))


def test_active_set_fallback_direct():
    # duplicated equal-norm channels with equal beta make the full system
    # singular; the fallback drops one copy and solves the reduced system
    rng = np.random.default_rng(3)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    g = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    cs = ChannelSet(H=np.column_stack([h, h, g]))
    pt = 2.0
    w0 = (h + g) / np.linalg.norm(h + g) * math.sqrt(pt)
    prec = Precoder(w=w0, pt=pt)
    beta = update_beta(prec, cs)
    snr_now = per_user_snr(prec, cs)
    step = active_set_fallback(beta, cs, pt, snr_now)
    assert len(step.active) < 3
    sub = ChannelSet(H=cs.H[:, list(step.active)])
    sys_sub = build_dual_system(beta[list(step.active)], sub, pt)
    assert np.linalg.matrix_rank(sys_sub.D) == len(step.active)


def test_fallback_never_engages_for_independent_underloaded():
    for seed in range(10):
        cs = generate_iid(seed, 8, 4)
        res = solve(cs, 5.0)
        assert len(res.dual.active) >= 1
        assert res.report.rank_diag.balance_guaranteed


def test_multistart_never_worse_than_single_start():
    for seed in range(8):
        cs = generate_iid(seed, 3, 3)
        single = solve(cs, 1.0)
        multi = solve_multistart(cs, 1.0, n_random=4, seed=0)
        assert multi.report.min_snr >= single.report.min_snr - 1e-12


def test_user_supplied_init():
    cs = generate_iid(4, 4, 2)
    w0 = np.ones(4, dtype=complex)
    cfg = SolverConfig(init_strategy="user-supplied", init_w=w0)
    res = solve(cs, 2.0, cfg)
    assert res.report.converged
    bad = SolverConfig(init_strategy="user-supplied")
    with pytest.raises(ValueError, match="init_w"):
        solve(cs, 2.0, bad)


def test_principal_eigenvector_init():
    cs = generate_iid(5, 6, 3)
    res = solve(cs, 2.0, SolverConfig(init_strategy="principal-eigenvector"))
    ref = solve(cs, 2.0)
    assert res.report.min_snr == pytest.approx(ref.report.min_snr, rel=1e-6)
