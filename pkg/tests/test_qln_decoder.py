from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import book_for
from sapcode import phy_sim
from sapcode.phy_sim import AttackMode, SystemConfig, SubcarrierObservation
from sapcode.qln_decoder import (
    AmdVerdict,
    CalibrationError,
    FeatureVector,
    attribute_digit,
    attribute_digits,
    build_g3,
    calibrate_threshold,
    consistent_hypotheses,
    count_signals,
    decode_burst,
    decode_features,
    detect_attack_mode,
    eigen_ratios,
    extract_independence,
    false_alarm_rate,
    ideal_features,
    mp_ratio_bound,
)
from sapcode.superimposed_code import build_stacked, from_mask, superpose, to_mask


def _obs(Y, noise=1.0):
    return SubcarrierObservation(Y, noise)


# counting -------------------------------------------------------------------


def test_mp_bound_value():
    assert mp_ratio_bound(128, 14) == pytest.approx(((1 + np.sqrt(14 / 128)) / (1 - np.sqrt(14 / 128))) ** 2)
    assert mp_ratio_bound(128, 14) == pytest.approx(3.953, abs=1e-3)
    with pytest.raises(ValueError):
        mp_ratio_bound(10, 10)


def test_eigen_ratios_sorted_and_start_at_one():
    rng = np.random.default_rng(0)
    T = eigen_ratios(phy_sim.crandn(rng, (7, 64, 5)))
    assert np.allclose(T[:, 0], 1.0)
    assert np.all(np.diff(T, axis=1) >= 0)


def test_count_noise_only_and_one_signal():
    rng = np.random.default_rng(1)
    thr = calibrate_threshold(128, 3, 0.0, 10_000, seed=5)
    zero = sum(count_signals(_obs(phy_sim.crandn(rng, (128, 5))), thr) == 0 for _ in range(500))
    assert zero >= 499
    ones = 0
    for _ in range(300):
        g = phy_sim.crandn(rng, (128, 1))
        x = np.sqrt(10) * np.exp(2j * np.pi * rng.random(5))
        ones += count_signals(_obs(g * x + phy_sim.crandn(rng, (128, 5))), thr) == 1
    assert ones / 300 >= 0.99


@pytest.mark.parametrize("K", [2, 3, 4])
def test_count_users_plus_attacker(K):
    rng = np.random.default_rng(K)
    thr = calibrate_threshold(128, K, 0.0, 10_000, seed=K)
    M = K + 2
    hits = 0
    for t in range(200):
        X = np.exp(2j * np.pi * np.outer(np.arange(K), np.arange(M)) / M) * np.sqrt(10)
        jam = np.sqrt(10) * np.exp(2j * np.pi * rng.random(M))
        Y = phy_sim.crandn(rng, (128, K)) @ X + np.outer(phy_sim.crandn(rng, 128), jam)
        hits += count_signals(_obs(Y + phy_sim.crandn(rng, (128, M))), thr) == K + 1
    assert hits / 200 >= 0.95


def test_count_rejects_short_observation():
    with pytest.raises(ValueError):
        count_signals(_obs(np.ones((128, 4))), 2.0, n_users=3)


def test_calibration_properties():
    t12 = calibrate_threshold(128, 12, 0.0, 10_000, seed=0)
    assert t12 >= mp_ratio_bound(128, 14)
    assert false_alarm_rate(t12, 128, 12, 10_000, seed=1) <= 1e-3
    t16 = calibrate_threshold(128, 16, 0.0, 10_000, seed=0)
    assert t16 > t12
    assert calibrate_threshold(128, 12, 0.5, 10_000, seed=0) < t12
    assert calibrate_threshold(128, 12, 0.0, 10_000, seed=0) == t12


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_threshold(128, 3, 0.0, trials=100)
    with pytest.raises(CalibrationError) as exc:
        calibrate_threshold(128, 3, 1e-6, trials=10_000)
    assert exc.value.achieved == pytest.approx(1e-4)


# independence features ----------------------------------------------------------


def test_independence_same_vs_distinct_sources():
    rng = np.random.default_rng(2)
    g_att = phy_sim.crandn(rng, 128)
    same = [np.outer(g_att * np.exp(2j * np.pi * rng.random()), np.ones(5)) + 0.1 * phy_sim.crandn(rng, (128, 5))
            for _ in range(2)]
    other = [np.outer(phy_sim.crandn(rng, 128), np.ones(5)) for _ in range(2)]
    obs = [_obs(Y) for Y in same + other]
    occ = np.ones(4, dtype=np.uint8)
    D = extract_independence(obs, occ)
    # pre-XOR digits: 1 for the same source, 0 for independent ones; XOR flips occupied rows
    assert D[0, 1] == 0 and D[1, 0] == 0
    assert D[2, 3] == 1 and D[0, 2] == 1
    assert np.all(np.diag(D) == 0)
    U = np.stack([o.Y[:, 0] / np.linalg.norm(o.Y[:, 0]) for o in obs])
    I = np.abs(U.conj() @ U.T)
    assert I[0, 1] >= 0.8 and I[2, 3] <= 0.2


def test_idle_rows_and_columns_zero():
    rng = np.random.default_rng(3)
    obs = [_obs(phy_sim.crandn(rng, (64, 5))) for _ in range(5)]
    occ = np.array([1, 0, 1, 1, 0], dtype=np.uint8)
    D = extract_independence(obs, occ)
    assert not D[1].any() and not D[4].any()
    assert D[0, 1] == 1  # occupied row, idle column: independent


def test_measured_features_match_ideal_at_high_snr():
    book = book_for(11, 2, 10, 5)
    cfg = SystemConfig(n_users=3)
    thr = calibrate_threshold(128, 3, 0.0, 10_000, seed=0)
    for i, mode in enumerate(AttackMode):
        rng = np.random.default_rng(100 + i)
        burst = phy_sim.draw_active_users(book, 3, rng)
        att = phy_sim.draw_attack(mode, book.length, 10.0, rng)
        ch = phy_sim.draw_channels(cfg, rng, n_trp=book.length)
        obs = phy_sim.emit_sap_burst(book, burst, att, ch, cfg, rng)
        res = decode_burst(obs, thr, book, 3)
        ideal = ideal_features(book, burst.codewords, att.codeword)
        assert np.array_equal(res.features.m_I, ideal.m_I)
        assert np.array_equal(res.features.D, ideal.D)


# AMD -------------------------------------------------------------------


def test_amd_exhaustive_small():
    """Every user pair and every attacker vector on the (3,2,3) code."""
    book = book_for(3, 2, 3, 9)
    N = book.length
    attackers = [from_mask(m, N) for m in range(2**N)]
    for users in itertools.combinations(range(len(book)), 2):
        for a in attackers:
            w = int(a.sum())
            truth = 0 if w == 0 else 1 if w == N else -1
            v = detect_attack_mode(ideal_features(book, users, a), book, 2)
            assert v.A == truth, (users, a)
            if truth == 1:
                assert np.array_equal(v.b_A, superpose(book.words[list(users)]))


def test_amd_with_stacked_codebook_matches(book323):
    S = build_stacked(book323)
    rng = np.random.default_rng(0)
    for _ in range(300):
        users = rng.choice(9, 3, replace=False)
        a = rng.integers(0, 2, 12) * rng.integers(0, 2)
        f = ideal_features(book323, users, a)
        assert detect_attack_mode(f, S, 3).A == detect_attack_mode(f, book323, 3).A


def test_amd_b_A_rules():
    book = book_for(5, 2, 3, 5)
    users = (0, 6, 12)
    b_sk = superpose(book.words[list(users)])
    sc = detect_attack_mode(ideal_features(book, users), book, 3)
    assert sc.A == 0 and np.array_equal(sc.b_A, b_sk)
    a = np.zeros(book.length, dtype=np.uint8)
    a[np.flatnonzero(b_sk == 0)[:2]] = 1
    pb = detect_attack_mode(ideal_features(book, users, a), book, 3)
    assert pb.A == -1 and np.array_equal(pb.b_A, b_sk | a)


# digit attribution ----------------------------------------------------------------


def _pb_instance(book, K, rng):
    users = [int(rng.choice(list(book.cluster_members(g)))) for g in rng.choice(book.params.G, K, replace=False)]
    while True:
        a = rng.integers(0, 2, book.length).astype(np.uint8)
        if 0 < a.sum() < book.length:
            return sorted(users), a


def test_g3_case_constant_zero():
    # attacker sends a codeword with a single digit outside the users' OR
    book = book_for(5, 2, 3, 25)
    users = [0, 6, 12]
    b_sk = superpose(book.words[users])
    for w in range(len(book)):
        extra = np.flatnonzero(book.words[w] & ~b_sk)
        if w not in users and len(extra) == 1:
            break
    f = ideal_features(book, users, book.words[w])
    v = detect_attack_mode(f, book, 3)
    assert book.is_member(to_mask(v.b_A), 4)
    g3 = build_g3(int(extra[0]), f, v, book, 3, "literal")
    assert (g3(0), g3(1)) == (0, 0)
    assert attribute_digit(g3) == 1
    # a valid codeword from an unused cluster is indistinguishable from a user
    # by counts alone, so the consistency rule declines to attribute the digit
    g3 = build_g3(int(extra[0]), f, v, book, 3, "consistent")
    assert (g3(0), g3(1)) == (0, 1)


def test_g3_case_balanced_when_digit_is_legitimate():
    book = book_for(5, 2, 3, 25)
    users = [0, 6, 12]
    b_sk = superpose(book.words[users])
    for w in range(len(book)):
        if w not in users and len(np.flatnonzero(book.words[w] & ~b_sk)) == 1:
            break
    f = ideal_features(book, users, book.words[w])
    v = detect_attack_mode(f, book, 3)
    counts = book.words[users].sum(axis=0)
    j = int(np.flatnonzero((counts == 1) & (f.m_I == 1))[0])
    g3 = build_g3(j, f, v, book, 3, "literal")
    assert (g3(0), g3(1)) == (0, 1)
    assert attribute_digit(g3) == 0


def test_g3_case_constant_one():
    # a lone foreign digit that completes no extra codeword: b_A is outside B_{K+1}
    book = book_for(7, 2, 3, 49)
    found = None
    for users in itertools.combinations(range(0, 49, 5), 3):
        b_sk = superpose(book.words[list(users)])
        for j in np.flatnonzero(b_sk == 0):
            a = np.zeros(book.length, dtype=np.uint8)
            a[j] = 1
            if not book.is_member(to_mask(b_sk | a), 4):
                found = users, int(j), a
                break
        if found:
            break
    users, j, a = found
    f = ideal_features(book, users, a)
    v = detect_attack_mode(f, book, 3)
    g3 = build_g3(j, f, v, book, 3, "literal")
    assert (g3(0), g3(1)) == (1, 1)
    assert attribute_digit(g3, "classical") == attribute_digit(g3, "quantum") == 1
    r = decode_features(f, book, 3, rule="literal").report
    assert r.ok and r.codeword_indices == tuple(users)


def test_attribution_trivial_modes():
    f = FeatureVector(np.array([2, 1, 1]), np.ones((3, 3), dtype=np.uint8))
    book = book_for(3, 2, 3)
    assert attribute_digits(f, AmdVerdict(1, f.b_I), book, 1).B.tolist() == [1, 1, 1]
    assert attribute_digits(f, AmdVerdict(0, f.b_I), book, 1).B.tolist() == [0, 0, 0]


@pytest.mark.parametrize("rule", ["literal", "consistent"])
def test_quantum_and_classical_attribution_agree(rule):
    book = book_for(5, 2, 3, 5)
    rng = np.random.default_rng(11)
    for _ in range(150):
        users, a = _pb_instance(book, 3, rng)
        f = ideal_features(book, users, a)
        v = detect_attack_mode(f, book, 3)
        q = attribute_digits(f, v, book, 3, "quantum", rule)
        c = attribute_digits(f, v, book, 3, "classical", rule)
        assert np.array_equal(q.B, c.B)
        assert q.queries * 2 == c.queries
        assert set(q.D2) <= set(q.D1)


def test_consistent_hypotheses_contain_truth():
    book = book_for(7, 2, 6, 5)
    rng = np.random.default_rng(4)
    for _ in range(100):
        users, a = _pb_instance(book, 3, rng)
        hyps = consistent_hypotheses(book, ideal_features(book, users, a).m_I, 3)
        assert tuple(users) in hyps


# recovery --------------------------------------------------------------------------


@pytest.mark.parametrize("mode", list(AttackMode))
def test_recovery_noise_free_small(mode):
    book = book_for(3, 2, 3, 3)
    for users in itertools.product(*(book.cluster_members(g) for g in range(3))):
        a = phy_sim.draw_attack(mode, book.length, 1.0, sum(users)).codeword
        if mode is AttackMode.PB_PJ:
            a = a & superpose(book.words[list(users)])  # absorbed attacker
            if not a.any():
                continue
        r = decode_features(ideal_features(book, users, a), book, 3).report
        assert r.ok
        assert r.codeword_indices == tuple(sorted(users))
        assert r.user_ids == (0, 1, 2)
        assert r.phases == tuple(book.phase_for(c) for c in sorted(users))


def test_pb_absorbed_equals_sc_report():
    book = book_for(5, 2, 3, 5)
    users = (0, 6, 12)
    a = book.words[0] | book.words[6]
    sc = decode_features(ideal_features(book, users), book, 3).report
    pb = decode_features(ideal_features(book, users, a), book, 3).report
    assert (pb.user_ids, pb.codeword_indices, pb.phases) == (sc.user_ids, sc.codeword_indices, sc.phases)


def test_recovery_is_exact_or_failure():
    """No silent wrong answers: any successful report equals the transmitted set."""
    book = book_for(5, 2, 3, 5)
    rng = np.random.default_rng(9)
    wrong = 0
    for _ in range(300):
        users, a = _pb_instance(book, 3, rng)
        r = decode_features(ideal_features(book, users, a), book, 3).report
        if r.ok:
            wrong += r.codeword_indices != tuple(users)
    assert wrong == 0


def test_miscount_reports_decode_failure():
    book = book_for(5, 2, 3, 5)
    f = ideal_features(book, (0, 6, 12))
    m = f.m_I.copy()
    m[np.flatnonzero(m == 1)[0]] = 3  # two phantom signals on a single-user digit
    r = decode_features(FeatureVector(m, f.D), book, 3).report
    assert r.status == "decode-failure"


def test_report_json():
    book = book_for(3, 2, 3, 3)
    r = decode_features(ideal_features(book, (0, 3, 6)), book, 3).report
    d = json.loads(r.to_json())
    assert set(d) >= {"attack_label", "user_ids", "codeword_indices", "phases", "status"}
    assert d["attack_label"] == "SC" and d["status"] == "success"


def test_feature_csv(tmp_path):
    book = book_for(3, 2, 3, 3)
    f = ideal_features(book, (0, 3, 6))
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "subcarrier,M,b,d" and len(lines) == 13


def test_pipeline_deterministic():
    book = book_for(11, 2, 10, 5)
    cfg = SystemConfig(n_users=3)

    def once():
        rng = np.random.default_rng(77)
        burst = phy_sim.draw_active_users(book, 3, rng)
        att = phy_sim.draw_attack("PB-PJ", book.length, 10.0, rng)
        ch = phy_sim.draw_channels(cfg, rng, n_trp=book.length)
        return decode_burst(phy_sim.emit_sap_burst(book, burst, att, ch, cfg, rng), 2.5, book, 3).report

    assert once() == once()


@given(st.data())
def test_recovered_codewords_in_distinct_clusters(data):
    book = book_for(7, 2, 6, 5)
    K = data.draw(st.integers(1, 4))
    mode = data.draw(st.sampled_from(list(AttackMode)))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    burst = phy_sim.draw_active_users(book, K, rng)
    a = phy_sim.draw_attack(mode, book.length, 1.0, rng).codeword
    r = decode_features(ideal_features(book, burst.codewords, a), book, K).report
    if r.ok:
        assert len(set(r.user_ids)) == len(r.user_ids) <= book.params.G
        assert r.codeword_indices == tuple(sorted(burst.codewords))
