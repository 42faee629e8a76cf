import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronmem.cortex import build_graph, icosphere, path_graph
from kronmem.simstudy import (
    MetricsRow,
    RecordedNoise,
    TimeProfile,
    aggregate_report,
    default_noise,
    evaluate_estimate,
    iota_index,
    kappa_scores,
    read_metrics_csv,
    report_csv,
    restricted_auc,
    roc_auc,
    scale_noise_to_snr,
    simulate_trial,
    slow_wave_profile,
    synthetic_leadfield,
    write_metrics_csv,
)

SNR_6 = 20 * np.log10(2.0)


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(0)
    v, f = icosphere(2)
    g = build_graph(v, f)
    G0, sensors = synthetic_leadfield(v, 20, rng)
    prof = slow_wave_profile()
    return g, G0, prof, default_noise(len(prof), sensors)


def test_profile():
    p = slow_wave_profile()
    assert len(p) == 200 and p.sfreq == 50.0
    assert np.max(np.abs(p.samples)) == 1.0
    assert not p.samples[:50].any()
    assert p.samples[np.argmax(np.abs(p.samples))] == -1.0
    with pytest.raises(ValueError):
        TimeProfile(np.zeros(5))


def test_leadfield_shape_and_rank(setup):
    g, G0, _, _ = setup
    assert G0.shape == (20, g.n_vertices)
    np.testing.assert_allclose(np.linalg.norm(G0), 1.0)
    assert np.linalg.matrix_rank(G0) == 20


def test_noiseless_trial(setup):
    g, G0, prof, noise = setup
    tr = simulate_trial(g, G0, prof, 30, np.inf, noise, seed=1)
    np.testing.assert_array_equal(tr.Z, tr.j0 @ G0.T)
    assert tr.patch.size == 30 and g.is_connected(tr.patch)
    assert tr.noise_scale == 0.0


def test_empty_patch_is_noise_only(setup):
    g, G0, prof, noise = setup
    tr = simulate_trial(g, G0, prof, 0, SNR_6, noise, seed=2)
    assert not tr.j0.any() and tr.noise_scale == 1.0
    r = np.random.default_rng(2)
    r.integers(g.n_vertices)  # patch centre
    np.testing.assert_array_equal(tr.Z, noise.draw(r))


def test_snr_six_db_is_amplitude_ratio_two(setup):
    g, G0, prof, noise = setup
    tr = simulate_trial(g, G0, prof, 40, SNR_6, noise, seed=3)
    S = tr.j0 @ G0.T
    ratio = np.linalg.norm(S) / np.linalg.norm(tr.Z - S)
    assert abs(ratio - 2.0) < 1e-10


def test_trial_reproducible(setup):
    g, G0, prof, noise = setup
    a = simulate_trial(g, G0, prof, 25, SNR_6, noise, seed=99)
    b = simulate_trial(g, G0, prof, 25, SNR_6, noise, seed=99)
    np.testing.assert_array_equal(a.Z, b.Z)
    np.testing.assert_array_equal(a.patch, b.patch)


def test_trial_argument_checks(setup):
    g, G0, prof, noise = setup
    with pytest.raises(ValueError):
        simulate_trial(g, G0[:, :-1], prof, 5, SNR_6, noise, seed=0)


def test_scale_noise_examples(rng):
    S, N = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    np.testing.assert_allclose(np.linalg.norm(scale_noise_to_snr(S, N, 0.0)), np.linalg.norm(S))
    out = scale_noise_to_snr(S, N, 6.0206)
    np.testing.assert_allclose(np.linalg.norm(S) / np.linalg.norm(out), 2.0, rtol=1e-5)
    np.testing.assert_allclose(scale_noise_to_snr(S, 2 * N, 3.0), scale_noise_to_snr(S, N, 3.0),
                               rtol=1e-14)
    with pytest.raises(ValueError):
        scale_noise_to_snr(S, np.zeros_like(N), 0.0)


def test_recorded_noise(rng):
    recs = [np.full((2, 2), i, float) for i in range(3)]
    draw = RecordedNoise(recs).draw(rng)
    assert any(np.array_equal(draw, r) for r in recs)
    with pytest.raises(ValueError):
        RecordedNoise([])


def test_iota_examples(rng):
    j = rng.standard_normal((6, 4))
    assert iota_index(j, j) == pytest.approx(1.0, abs=1e-15)
    assert iota_index(j, -j) == pytest.approx(-1.0, abs=1e-15)
    a = np.zeros((2, 2))
    a[0, 0] = 1
    b = np.zeros((2, 2))
    b[1, 1] = 3
    assert iota_index(a, b) == 0.0
    assert iota_index(j, 3.5 * j) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        iota_index(j, np.zeros_like(j))


def test_kappa_examples():
    phi = np.array([1.0, -2.0, 0.5, 0.0])
    orth = np.array([2.0, 1.0, 0.0, 7.0])
    J = np.column_stack([phi, -2 * phi, orth, np.zeros(4)])
    np.testing.assert_allclose(kappa_scores(J, phi), [1, 1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(kappa_scores(J, phi, signed=True), [1, -1, 0, 0], atol=1e-15)
    with pytest.raises(ValueError):
        kappa_scores(J[:3], phi)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == 0.75
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])


def _pairwise_auc(scores, labels):
    pos = scores[labels]
    neg = scores[~labels]
    cmp = (pos[:, None] > neg[None, :]) + 0.5 * (pos[:, None] == neg[None, :])
    return cmp.mean()


def _trapezoid_auc(scores, labels):
    ths = np.r_[np.inf, np.unique(scores)[::-1]]
    tpr = [np.mean(scores[labels] >= t) for t in ths]
    fpr = [np.mean(scores[~labels] >= t) for t in ths]
    return float(np.sum(np.diff(fpr) * (np.array(tpr[1:]) + np.array(tpr[:-1])) / 2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_auc_matches_pair_count_and_trapezoid(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 40))
    labels = r.random(n) < 0.4
    labels[0], labels[1] = True, False
    scores = np.round(r.random(n), 1)
    a = roc_auc(scores, labels)
    assert a == pytest.approx(_pairwise_auc(scores, labels), abs=1e-12)
    assert a == pytest.approx(_trapezoid_auc(scores, labels), abs=1e-12)
    assert roc_auc(np.exp(3 * scores), labels) == pytest.approx(a, abs=1e-12)


def test_restricted_auc(rng):
    labels = np.r_[np.ones(5, bool), np.zeros(20, bool)]
    sep = np.r_[np.ones(5), np.zeros(20)]
    assert restricted_auc(sep, labels, rng) == 1.0
    bal = np.r_[np.ones(5, bool), np.zeros(5, bool)]
    s = rng.random(10)
    assert restricted_auc(s, bal, rng) == roc_auc(s, bal)
    with pytest.raises(ValueError):
        restricted_auc(s, np.r_[np.ones(7, bool), np.zeros(3, bool)], rng)
    a = restricted_auc(s, bal, np.random.default_rng(4))
    assert a == restricted_auc(s, bal, np.random.default_rng(4))


def test_restricted_auc_monte_carlo():
    r = np.random.default_rng(8)
    labels = np.r_[np.ones(30, bool), np.zeros(300, bool)]
    scores = r.random(330) + 0.3 * labels
    full = roc_auc(scores, labels)
    est = restricted_auc(scores, labels, r, resamples=400)
    assert abs(est - full) < 0.02


def test_evaluate_estimate(rng):
    phi = slow_wave_profile().samples
    j0 = np.zeros((200, 10))
    j0[:, [2, 3]] = phi[:, None]
    row = evaluate_estimate(j0, j0 + 0.01 * rng.standard_normal(j0.shape), np.array([2, 3]),
                            phi, "G", rng, 5, trial=4, realization=1)
    assert row.stage == "G" and row.trial == 4 and row.realization == 1
    assert row.auc == 1.0 and row.iota > 0.99


def test_aggregate_examples():
    t = aggregate_report([MetricsRow("G", 0.3, 0.7, 0.6)])
    assert t["iota"]["mean"]["G"] == t["iota"]["median"]["G"] == 0.3
    assert t["iota"]["std"]["G"] == 0.0
    rows = [MetricsRow("G", 0.0, 0.0, 0.0, trial=0), MetricsRow("G", 1.0, 1.0, 1.0, trial=1)]
    t = aggregate_report(rows)
    assert t["AUC"]["mean"]["G"] == 0.5 and t["AUC"]["median"]["G"] == 0.5
    assert t["AUC"]["std"]["G"] == pytest.approx(np.sqrt(0.5), abs=1e-15)
    with pytest.raises(ValueError):
        aggregate_report([])


def test_aggregate_averages_realizations_first():
    rows = [MetricsRow("GM", 0.2, 0.5, 0.5, 0, 0), MetricsRow("GM", 0.4, 0.5, 0.5, 0, 1),
            MetricsRow("GM", 0.9, 0.5, 0.5, 1, 0)]
    t = aggregate_report(rows)
    assert t["iota"]["mean"]["GM"] == pytest.approx(0.6)
    assert t["iota"]["median"]["GM"] == pytest.approx(0.6)


def test_report_csv_layout():
    rows = [MetricsRow(s, 0.1, 0.2, 0.3) for s in ("G", "GM", "uGM")]
    lines = report_csv(aggregate_report(rows)).splitlines()
    assert lines[0] == "criterion,statistic,G,GM,uGM"
    assert len(lines) == 10
    assert lines[1].startswith("iota,mean,")


def test_metrics_csv_round_trip(tmp_path):
    rows = [MetricsRow("uGM", 0.1 + 1e-17, 2 / 3, 0.5, 3, 2)]
    write_metrics_csv(tmp_path / "m.csv", rows)
    assert read_metrics_csv(tmp_path / "m.csv") == rows


def test_patch_and_graph_consistency():
    g = path_graph(5)
    prof = TimeProfile(np.ones(4))
    tr = simulate_trial(g, np.eye(5), prof, 5, np.inf, None, seed=0)
    np.testing.assert_array_equal(tr.Z, np.ones((4, 5)))
