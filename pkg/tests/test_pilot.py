import numpy as np
import pytest
import scipy.stats

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario, make_rng, steering_vector
from hadoa.errors import ConfigurationError, DomainError
from hadoa.frontend import Combiner, FullyConnected, dft_combiner, validate
from hadoa.music import SpectrumGrid, estimate_doa_music
from hadoa.covariance import sample_scm
from hadoa.pilot import (PilotSchedule, collect_virtual_observation, matched_filter_estimate,
                         matched_filter_spectrum, pilot_estimate, random_phase_combiner, virtual_music)
from hadoa.array_model import SnapshotMatrix

QUIET = NoiseSpec(1e-30)


def test_random_combiners_valid_and_seeded():
    a = random_phase_combiner(16, 4, 1)
    b = random_phase_combiner(16, 4, 2)
    assert validate(a) == []
    assert not np.allclose(a.matrix, b.matrix)
    np.testing.assert_array_equal(a.matrix, random_phase_combiner(16, 4, 1).matrix)
    np.testing.assert_allclose(np.abs(a.matrix), 0.25, atol=1e-15)


def test_random_phases_look_uniform():
    ph = np.angle(random_phase_combiner(64, 64, 11).matrix).ravel()
    counts, _ = np.histogram(ph, bins=16, range=(-np.pi, np.pi))
    assert scipy.stats.chisquare(counts).pvalue > 1e-3


def test_schedule_checks():
    with pytest.raises(ConfigurationError):
        PilotSchedule(2, (1.0,))
    with pytest.raises(ConfigurationError):
        PilotSchedule(1, (2.0,))
    s = PilotSchedule.random(4, 3)
    cs = s.slot_combiners(8, 2)
    assert len(cs) == 4 and not np.allclose(cs[0].matrix, cs[1].matrix)
    assert np.allclose(np.abs(s.pilot_symbols), 1)


def test_single_identity_slot_strips_pilot():
    g = ArrayGeometry(4)
    comb = Combiner(np.eye(4, dtype=complex), FullyConnected())
    p = np.exp(0.7j)
    sched = PilotSchedule(1, (p,), combiners=(comb,))
    sc = SourceScenario((20.0,), (1.0,))
    obs = collect_virtual_observation(g, sc, NoiseSpec(0.1), sched, 4, 6, seed=5)
    # rebuild the received block from the same stream
    rng = make_rng(5)
    s = np.sqrt(0.5) * (rng.standard_normal((1, 6)) + 1j * rng.standard_normal((1, 6)))
    w = np.sqrt(0.05) * (rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6)))
    x = p * steering_vector(g, 20.0)[:, None] @ s + w
    np.testing.assert_allclose(obs.frames, np.conj(p) * x, atol=1e-12)


def test_structure_and_noiseless_collinearity():
    g = ArrayGeometry(16)
    sched = PilotSchedule.random(3, 8)
    obs = collect_virtual_observation(g, SourceScenario((-25.0,), (1.0,)), QUIET, sched, 4, 5, 1)
    assert obs.dimension == 12 and obs.num_frames == 5
    for k, c in enumerate(sched.slot_combiners(16, 4)):
        np.testing.assert_array_equal(obs.G[4 * k:4 * k + 4], c.matrix.conj().T)
    v = obs.G @ steering_vector(g, -25.0)
    for z in obs.frames.T:
        cos = abs(np.vdot(v, z)) / (np.linalg.norm(v) * np.linalg.norm(z))
        assert cos == pytest.approx(1.0, abs=1e-10)


def test_unitary_G_matches_fully_digital():
    # one slot whose G is a unitary DFT: same sample covariance up to a unitary map
    M = 8
    g = ArrayGeometry(M)
    F = dft_combiner(M, range(M))
    sched = PilotSchedule(1, (1.0,), combiners=(F,))
    sc = SourceScenario((-20.0, 35.0), (1.0, 1.0))
    errs = []
    for t in range(20):
        obs = collect_virtual_observation(g, sc, NoiseSpec.from_snr_db(10), sched, M, 200, t)
        est = virtual_music(obs, g, 2)
        X = np.linalg.solve(obs.G, obs.frames)
        fd = estimate_doa_music(sample_scm(SnapshotMatrix(X)), g, 2)
        errs.append(np.max(np.abs(np.subtract(est.angles_deg, fd.angles_deg))))
    assert max(errs) <= 0.05


def test_desk_case_median():
    g = ArrayGeometry(64)
    errs = []
    for t in range(50):
        sched = PilotSchedule.random(8, 100 + t)
        est = pilot_estimate(g, SourceScenario((10.0,), (1.0,)), NoiseSpec.from_snr_db(0), sched, 4, 100, t)
        errs.append(abs(est.angles_deg[0] - 10.0))
    assert np.median(errs) <= 0.3


def test_too_many_sources_for_virtual_dimension():
    g = ArrayGeometry(16)
    sched = PilotSchedule.random(1, 0)
    with pytest.raises(DomainError):
        pilot_estimate(g, SourceScenario((0.0, 30.0), (1.0, 1.0)), NoiseSpec(0.1), sched, 2, 50, 0)


def test_matched_filter_on_grid_exact():
    g = ArrayGeometry(32)
    sched = PilotSchedule.random(4, 2)
    obs = collect_virtual_observation(g, SourceScenario((12.3,), (1.0,)), QUIET, sched, 4, 1, 0)
    grid = SpectrumGrid(refine=False)
    est = matched_filter_estimate(obs, g, grid)
    assert est.angles_deg[0] == pytest.approx(12.3, abs=1e-9)


def test_matched_filter_invariant_to_pilot_phases():
    g = ArrayGeometry(16)
    base = PilotSchedule.random(4, 9)
    combs = base.slot_combiners(16, 2)
    other = PilotSchedule(4, tuple(np.exp(1j * np.arange(4))), combiners=combs)
    same = PilotSchedule(4, base.pilot_symbols, combiners=combs)
    grid = SpectrumGrid(coarse_step_deg=0.5)
    sc = SourceScenario((40.0,), (1.0,))
    P1 = matched_filter_spectrum(collect_virtual_observation(g, sc, QUIET, same, 2, 3, 4), g, grid)
    P2 = matched_filter_spectrum(collect_virtual_observation(g, sc, QUIET, other, 2, 3, 4), g, grid)
    np.testing.assert_allclose(P1, P2, rtol=1e-9)


def test_matched_filter_agrees_with_music_for_one_source():
    g = ArrayGeometry(32)
    grid = SpectrumGrid()
    for t, snr in enumerate((10, 20, 30)):
        sched = PilotSchedule.random(4, t)
        obs = collect_virtual_observation(g, SourceScenario((-33.0,), (1.0,)), NoiseSpec.from_snr_db(snr),
                                          sched, 4, 50, t)
        a = matched_filter_estimate(obs, g, grid).angles_deg[0]
        b = virtual_music(obs, g, 1, grid).angles_deg[0]
        assert abs(a - b) <= grid.coarse_step_deg


def test_error_shrinks_with_more_slots():
    g = ArrayGeometry(64)
    med = []
    for Kp in (2, 4, 8):
        errs = []
        for t in range(40):
            sched = PilotSchedule.random(Kp, 1000 + t)
            est = pilot_estimate(g, SourceScenario((10.0,), (1.0,)), NoiseSpec.from_snr_db(0), sched, 4, 100, t)
            errs.append(abs(est.angles_deg[0] - 10.0))
        med.append(np.median(errs))
    assert med[0] >= med[1] >= med[2]


def test_deterministic():
    g = ArrayGeometry(16)
    sched = PilotSchedule.random(4, 6)
    sc = SourceScenario((5.0, -40.0), (1.0, 0.5))
    a = pilot_estimate(g, sc, NoiseSpec(0.3), sched, 4, 30, 2)
    b = pilot_estimate(g, sc, NoiseSpec(0.3), PilotSchedule.random(4, 6), 4, 30, 2)
    assert a == b


def test_unknown_estimator():
    g = ArrayGeometry(8)
    with pytest.raises(ConfigurationError):
        pilot_estimate(g, SourceScenario((0.0,), (1.0,)), NoiseSpec(0.1), PilotSchedule.random(2), 2, 5,
                       estimator="capon")
