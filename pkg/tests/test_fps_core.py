import numpy as np
import pytest

from fps_hybrid import fps_core
from fps_hybrid.errors import (BDInfeasibleError, DegenerateInputError, DegenerateTargetError,
                               DimensionError, NormalizationError)
from fps_hybrid.fps_core import (HybridPrecoder, alpha_search, altmin, bd_baseband, bd_leakage,
                                 build_phase_bank, init_fdd_mc, init_fdd_sc, normalize_digital,
                                 solve_alpha_switch, solve_binary_scale, surrogate_objective,
                                 threshold_switch, true_objective, update_fdd_mc, update_fdd_sc)
from fps_hybrid.oracle import brute_force_alpha_s
from fps_hybrid.sysmodel import (ChannelSet, CombinerSet, SystemConfig, design_combiners,
                                 fully_digital_precoder, generate_channels)

from conftest import crandn


def _semi_unitary(rng, rows, cols):
    q, _ = np.linalg.qr(crandn(rng, max(rows, cols), min(rows, cols)))
    return q if rows >= cols else q.conj().T


# ---------------------------------------------------------------- phase bank

def test_phase_bank_quarter_circle():
    bank = build_phase_bank(4, 1)
    np.testing.assert_allclose(bank.c, 0.5 * np.array([1, 1j, -1, -1j]), atol=1e-15)


def test_phase_bank_two_phases():
    C = build_phase_bank(2, 2).C
    expected = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]]) / np.sqrt(2)
    np.testing.assert_allclose(C, expected, atol=1e-15)


@pytest.mark.parametrize("nc,nrf", [(1, 1), (3, 4), (30, 8), (7, 2)])
def test_phase_bank_semi_unitary(nc, nrf):
    bank = build_phase_bank(nc, nrf)
    C = bank.C
    assert np.count_nonzero(C) == nc * nrf
    np.testing.assert_allclose(C.conj().T @ C, np.eye(nrf), atol=1e-12)
    assert abs(np.linalg.norm(bank.c) - 1) < 1e-12


def test_phase_bank_fast_products_match_dense(rng):
    bank = build_phase_bank(5, 3)
    s = rng.integers(0, 2, size=(7, 15)).astype(np.uint8)
    y = crandn(rng, 7, 3)
    np.testing.assert_allclose(bank.analog(s), s @ bank.C, atol=1e-14)
    np.testing.assert_allclose(bank.project(y), y @ bank.C.conj().T, atol=1e-14)


def test_phase_bank_override():
    bank = build_phase_bank(3, 1, phases=[0.0, 1.0, 7.0])
    np.testing.assert_allclose(bank.phases, [0.0, 1.0, 7.0 - 2 * np.pi])
    with pytest.raises(ValueError):
        build_phase_bank(3, 1, phases=[0.0])


# ---------------------------------------------------------------- surrogate

def _random_hp(rng, n_t=8, nc=4, nrf=3, m=2):
    bank = build_phase_bank(nc, nrf)
    s = rng.integers(0, 2, size=(n_t, nc * nrf)).astype(np.uint8)
    return HybridPrecoder(s, bank, float(rng.normal()), _semi_unitary(rng, nrf, m))


def test_surrogate_trivial_cases(rng):
    f_opt = crandn(rng, 8, 2)
    hp = _random_hp(rng)
    hp.alpha = 0.0
    assert surrogate_objective(f_opt, hp) == pytest.approx(np.linalg.norm(f_opt) ** 2, abs=1e-12)
    hp = _random_hp(rng)
    hp.switch[:] = 0
    assert surrogate_objective(f_opt, hp) == pytest.approx(np.linalg.norm(f_opt) ** 2, abs=1e-12)


def test_surrogate_upper_bounds_true_objective(rng):
    for _ in range(200):
        f_opt = crandn(rng, 8, 2)
        hp = _random_hp(rng)
        assert surrogate_objective(f_opt, hp) >= true_objective(f_opt, hp) - 1e-9


# ---------------------------------------------------------------- initialization

def test_init_sc_identity_target():
    f_opt = np.vstack([np.eye(2), np.zeros((2, 2))])
    f_dd = init_fdd_sc(f_opt, 3)
    assert f_dd.shape == (3, 2)
    np.testing.assert_allclose(np.abs(f_dd), np.vstack([np.eye(2), np.zeros((1, 2))]), atol=1e-15)


def test_init_sc_semi_unitary_and_scale_invariant(rng):
    for _ in range(20):
        f_opt = crandn(rng, 10, 3)
        f_dd = init_fdd_sc(f_opt, 5)
        np.testing.assert_allclose(f_dd.conj().T @ f_dd, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(init_fdd_sc(5 * f_opt, 5), f_dd, atol=1e-12)
    with pytest.raises(DimensionError):
        init_fdd_sc(crandn(rng, 10, 6), 5)


def test_init_mc_identity_target():
    f_opt = np.hstack([np.eye(4), np.zeros((4, 2))])
    f_dd = init_fdd_mc(f_opt, 2)
    np.testing.assert_allclose(f_dd @ f_dd.conj().T, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(f_dd[:, 4:], 0, atol=1e-15)


def test_init_mc_row_orthonormal_and_permutation_equivariant(rng):
    for _ in range(20):
        f_opt = crandn(rng, 12, 9)
        f_dd = init_fdd_mc(f_opt, 4)
        np.testing.assert_allclose(f_dd @ f_dd.conj().T, np.eye(4), atol=1e-12)
        perm = rng.permutation(9)
        np.testing.assert_allclose(init_fdd_mc(f_opt[:, perm], 4), f_dd[:, perm], atol=1e-10)
    with pytest.raises(DimensionError):
        init_fdd_mc(crandn(rng, 10, 3), 5)


# ---------------------------------------------------------------- digital updates

def test_update_sc_coordinate_case():
    m, nrf, n_t = 2, 3, 6
    bank = build_phase_bank(1, nrf)
    s = np.vstack([np.eye(nrf), np.zeros((n_t - nrf, nrf))]).astype(np.uint8)
    f_opt = np.zeros((n_t, m))
    f_opt[:m, :m] = np.eye(m)
    f_dd = update_fdd_sc(f_opt, s, bank, 1.0)
    np.testing.assert_allclose(f_dd, np.vstack([np.eye(m), np.zeros((1, m))]), atol=1e-15)


def test_update_mc_coordinate_case():
    m, nrf, n_t = 5, 2, 6
    bank = build_phase_bank(1, nrf)
    s = np.vstack([np.eye(nrf), np.zeros((n_t - nrf, nrf))]).astype(np.uint8)
    f_opt = np.zeros((n_t, m))
    f_opt[:nrf, :nrf] = np.eye(nrf)
    f_dd = update_fdd_mc(f_opt, s, bank, 1.0)
    np.testing.assert_allclose(f_dd, np.hstack([np.eye(nrf), np.zeros((nrf, m - nrf))]), atol=1e-15)


def _cross(f_opt, s, bank, f_dd, alpha):
    return alpha * np.trace(f_dd @ f_opt.conj().T @ s @ bank.C).real


@pytest.mark.parametrize("regime", ["sc", "mc"])
def test_update_trace_dominance(rng, regime):
    n_t, nc, nrf = 10, 4, 3
    m = 2 if regime == "sc" else 6
    update = update_fdd_sc if regime == "sc" else update_fdd_mc
    bank = build_phase_bank(nc, nrf)
    for _ in range(10):
        f_opt = crandn(rng, n_t, m)
        s = rng.integers(0, 2, size=(n_t, nc * nrf)).astype(np.uint8)
        alpha = float(rng.normal())
        f_dd = update(f_opt, s, bank, alpha)
        if regime == "sc":
            np.testing.assert_allclose(f_dd.conj().T @ f_dd, np.eye(m), atol=1e-10)
        else:
            np.testing.assert_allclose(f_dd @ f_dd.conj().T, np.eye(nrf), atol=1e-10)
        best = _cross(f_opt, s, bank, f_dd, alpha)
        sv = np.linalg.svd(alpha * f_opt.conj().T @ s @ bank.C, compute_uv=False)
        assert best == pytest.approx(sv.sum(), abs=1e-10)
        for _ in range(100):
            other = _semi_unitary(rng, nrf, m)
            assert _cross(f_opt, s, bank, other, alpha) <= best + 1e-12


def test_update_rejects_zero_alpha(rng):
    bank = build_phase_bank(2, 2)
    with pytest.raises(DegenerateInputError):
        update_fdd_sc(crandn(rng, 4, 2), np.ones((4, 4), np.uint8), bank, 0.0)


# ---------------------------------------------------------------- (alpha, S)

@pytest.mark.parametrize("x,alpha,s,f", [
    ([3, 2, -1], 2.5, [1, 1, 0], 1.5),
    ([1, 1, 0], 1.0, [1, 1, 0], 0.0),
    ([-4, -4], -4.0, [1, 1], 0.0),
])
def test_binary_scale_examples(x, alpha, s, f):
    a, sv, fv, _ = solve_binary_scale(x)
    assert a == pytest.approx(alpha, abs=1e-15)
    np.testing.assert_array_equal(sv, s)
    assert fv == pytest.approx(f, abs=1e-12)


def test_binary_scale_matches_enumeration(rng):
    for _ in range(1000):
        x = rng.standard_normal(12)
        a, s, f, _ = solve_binary_scale(x)
        a_bf, s_bf, f_bf = brute_force_alpha_s(x)
        assert abs(f - f_bf) < 1e-9
        np.testing.assert_array_equal(s, s_bf)
        assert a == pytest.approx(a_bf, abs=1e-9)


def test_binary_scale_switch_dtype_and_attained_value(rng):
    x = rng.standard_normal(20)
    a, s, f, _ = solve_binary_scale(x)
    assert s.dtype == np.uint8 and set(np.unique(s)) <= {0, 1}
    assert f == pytest.approx(np.sum((x - a * s) ** 2), abs=1e-12)


def test_candidates_are_admissible_means(rng):
    for _ in range(100):
        prob = alpha_search(rng.standard_normal(15))
        xs = prob.x_sorted
        assert np.all(np.diff(xs) >= 0)
        ends = prob.intervals
        for c in prob.candidates:
            lo, hi = ends[c.index]
            assert lo <= c.value <= hi
            if c.branch == "negative":
                assert c.value < 0 and c.value == pytest.approx(xs[:c.index].mean())
            else:
                assert c.value > 0 and c.value == pytest.approx(xs[c.index:].mean())


def test_zero_target_is_degenerate():
    with pytest.raises(DegenerateTargetError):
        solve_binary_scale(np.zeros(5))


def test_ties_and_equal_entries():
    # symmetric input: +1 and -1 branches tie; positive wins at equal |alpha|
    a, s, f, _ = solve_binary_scale([1.0, -1.0])
    assert a == 1.0 and list(s) == [1, 0] and f == pytest.approx(1.0)
    a, s, f, _ = solve_binary_scale([2.0, 2.0, 2.0])
    assert a == 2.0 and f == pytest.approx(0.0)


def test_threshold_rule_on_exact_boundary():
    np.testing.assert_array_equal(threshold_switch([1.0, 0.5, 0.2], 1.0), [1, 0, 0])
    np.testing.assert_array_equal(threshold_switch([-1.0, -0.5, 0.2], -1.0), [1, 0, 0])


def test_clamped_fallback_is_exact(rng):
    for _ in range(200):
        x = np.round(rng.standard_normal(8), 1)
        if not np.any(x):
            continue
        xs = np.sort(x)
        cands = fps_core._clamped_fallback(xs, fps_core._prefix_sums(xs))
        best = min(c.objective for c in cands)
        assert best == pytest.approx(brute_force_alpha_s(x)[2], abs=1e-9)


def test_solve_alpha_switch_matrix_form(rng):
    bank = build_phase_bank(3, 2)
    f_opt = crandn(rng, 4, 2)
    f_dd = _semi_unitary(rng, 2, 2)
    alpha, s, f = solve_alpha_switch(f_opt, f_dd, bank)
    assert s.shape == (4, 6)
    x = (f_opt @ f_dd.conj().T @ bank.C.conj().T).real
    assert f == pytest.approx(np.linalg.norm(x - alpha * s) ** 2, abs=1e-10)
    assert f == pytest.approx(brute_force_alpha_s(x.ravel())[2] if x.size <= 16 else f)


# ---------------------------------------------------------------- altmin

def test_altmin_exact_factorization_is_fixed_point():
    # one shifter makes the bound tight; disjoint supports with distinct sizes
    n_t, nrf = 9, 3
    s = np.zeros((n_t, nrf), np.uint8)
    s[0:2, 0] = 1
    s[2:5, 1] = 1
    s[5:9, 2] = 1
    bank = build_phase_bank(1, nrf)
    f_opt = 2.0 * bank.analog(s) @ np.eye(nrf)
    hp, rep = altmin(f_opt, bank, tol=1e-4)
    assert rep.iterations <= 2 and rep.converged
    assert rep.true_objective < 1e-9
    assert rep.surrogate_trace[-1] == pytest.approx(0.0, abs=1e-9)


def test_altmin_random_su_monotone(rng):
    bank = build_phase_bank(8, 2)
    for _ in range(5):
        f_opt, _ = np.linalg.qr(crandn(rng, 16, 2))
        hp, rep = altmin(f_opt, bank, regime="single-carrier", tol=1e-4, max_iter=100)
        assert np.all(np.diff(rep.surrogate_trace) <= 1e-9)
        assert rep.converged
        np.testing.assert_allclose(hp.f_dd.conj().T @ hp.f_dd, np.eye(2), atol=1e-10)


def test_altmin_multicarrier_shapes(rng):
    bank = build_phase_bank(4, 3)
    f_opt = crandn(rng, 12, 8)
    hp, rep = altmin(f_opt, bank)
    assert hp.f_dd.shape == (3, 8)
    np.testing.assert_allclose(hp.f_dd @ hp.f_dd.conj().T, np.eye(3), atol=1e-10)
    assert np.all(np.diff(rep.surrogate_trace) <= 1e-9)
    assert rep.true_objective <= rep.surrogate_trace[-1] + 1e-9


def test_altmin_infinite_tolerance_stops_after_one_iteration(rng):
    bank = build_phase_bank(4, 3)
    hp, rep = altmin(crandn(rng, 12, 2), bank, tol=np.inf)
    assert rep.iterations == 1 and len(rep.surrogate_trace) == 1
    assert hp.switch.shape == (12, 12) and hp.f_dd.shape == (3, 2)


def test_altmin_argument_checks(rng):
    bank = build_phase_bank(4, 3)
    with pytest.raises(ValueError):
        altmin(crandn(rng, 12, 2), bank, tol=0)
    with pytest.raises(DimensionError):
        altmin(crandn(rng, 12, 5), bank, regime="single-carrier")
    with pytest.raises(DimensionError):
        altmin(crandn(rng, 12, 2), bank, regime="multicarrier")
    with pytest.raises(DegenerateTargetError):
        altmin(np.zeros((12, 2)), bank)


# ---------------------------------------------------------------- BD + normalization

def test_bd_orthogonal_channels_identity():
    cfg = SystemConfig(n_tx_antennas=2, n_rx_antennas=1, n_users=2, n_streams=1,
                       n_rf_tx=2, n_rf_rx=1, tx_grid=(1, 2))
    ch = ChannelSet(np.array([[[[1.0, 0.0]]], [[[0.0, 1.0]]]], complex))
    bank = build_phase_bank(1, 2)
    hp = HybridPrecoder(np.eye(2, dtype=np.uint8), bank, 1.0, np.eye(2, dtype=complex))
    comb = CombinerSet([np.eye(1)] * 2, [[np.eye(1)]] * 2)
    out = bd_baseband(ch, hp, comb, cfg)
    np.testing.assert_allclose(np.abs(out.f_dd), np.eye(2), atol=1e-15)
    assert bd_leakage(ch, out, comb, cfg) == 0.0


def test_bd_random_instance(mu_cfg):
    ch = generate_channels(mu_cfg, 11)
    t = fully_digital_precoder(ch, mu_cfg)
    hp, _ = altmin(t, build_phase_bank(mu_cfg.n_shifters, mu_cfg.n_rf_tx))
    comb = design_combiners(ch, hp, mu_cfg)
    assert bd_leakage(ch, hp, comb, mu_cfg) > 1e-6
    out = bd_baseband(ch, hp, comb, mu_cfg)
    assert bd_leakage(ch, out, comb, mu_cfg) < 1e-8


def test_bd_single_user_passthrough(small_cfg):
    ch = generate_channels(small_cfg, 1)
    t = fully_digital_precoder(ch, small_cfg)
    hp, _ = altmin(t, build_phase_bank(8, 2))
    out = bd_baseband(ch, hp, None, small_cfg)
    np.testing.assert_array_equal(out.f_dd, hp.f_dd)


def test_bd_infeasible():
    cfg = SystemConfig(n_tx_antennas=3, n_rx_antennas=2, n_users=2, n_streams=1,
                       n_rf_tx=2, n_rf_rx=1, tx_grid=(1, 3), rx_grid=(1, 2))
    ch = ChannelSet(np.ones((2, 1, 2, 3), complex))
    # rank-1 digital stage: zero-forcing the other user removes all of this user's signal
    hp = HybridPrecoder(np.ones((3, 2), np.uint8), build_phase_bank(1, 2), 1.0,
                        np.array([[1, 0], [0, 0]], complex))
    comb = CombinerSet([np.eye(2)] * 2, [[np.eye(2)[:, :1]]] * 2)
    with pytest.raises(BDInfeasibleError):
        bd_baseband(ch, hp, comb, cfg)


def test_normalize_scale_factor():
    bank = build_phase_bank(1, 1)
    s = np.array([[1], [1], [1], [1]], np.uint8)
    hp = HybridPrecoder(s, bank, 1.0, np.array([[1.0 + 0j]]))
    cfg = SystemConfig(n_users=1, n_streams=4, n_subcarriers=4, n_rf_tx=4)
    out = normalize_digital(hp, cfg)
    # ||S C F_DD|| = 2 and K N_s F = 16 -> factor 2
    np.testing.assert_allclose(out.f_bb, [[2.0]])
    assert np.linalg.norm(out.matrix()) ** 2 == pytest.approx(16.0, abs=1e-9)


def test_normalize_power(rng):
    cfg = SystemConfig(n_tx_antennas=12, n_streams=2, n_rf_tx=3, n_subcarriers=1)
    for _ in range(20):
        hp = _random_hp(rng, n_t=12, nc=4, nrf=3, m=2)
        hp.switch[0, 0] = 1
        out = normalize_digital(hp, cfg)
        assert np.linalg.norm(out.matrix()) ** 2 == pytest.approx(2.0, abs=1e-9)


def test_normalize_zero_switch(rng):
    hp = _random_hp(rng)
    hp.switch[:] = 0
    with pytest.raises(NormalizationError):
        normalize_digital(hp, SystemConfig())
