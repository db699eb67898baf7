import numpy as np
import pytest

from hadoa.array_model import ArrayGeometry, NoiseSpec, SourceScenario, generate_snapshots, true_covariance
from hadoa.covariance import CovarianceMatrix, sample_scm
from hadoa.errors import DomainError, PeakDeficitError
from hadoa.frontend import build_combiner, FullyConnected
from hadoa.music import (SpectrumGrid, beamformer_spectrum, estimate_doa_music, find_peaks, grid_steering,
                         hermitian_eig, music_spectrum, parabolic_offset, subspace_spectrum, write_spectrum_csv)

from conftest import covariance_oracle, mp_eigenvalues, random_hermitian, steering_oracle

GRID = SpectrumGrid()


def test_grid_excludes_endpoints():
    a = GRID.angles
    assert a[0] == pytest.approx(-89.9) and a[-1] == pytest.approx(89.9)
    assert a.size == 1799
    with pytest.raises(DomainError):
        SpectrumGrid(10, 5)
    with pytest.raises(DomainError):
        SpectrumGrid(coarse_step_deg=0)


# eigendecomposition -----------------------------------------------------

def test_eig_diagonal():
    lam, V = hermitian_eig(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(lam, [1, 2, 3])
    np.testing.assert_allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]], atol=1e-15)


def test_eig_rank_one_plus_identity():
    a = steering_oracle(4, 10.0)
    lam, _ = hermitian_eig(np.outer(a, a.conj()) + np.eye(4))
    assert lam[-1] == pytest.approx(5.0, abs=1e-8)
    np.testing.assert_allclose(lam[:3], 1.0, atol=1e-8)


def test_eig_matches_mpmath_oracle(rng):
    H = random_hermitian(rng, 6)
    lam, _ = hermitian_eig(H)
    np.testing.assert_allclose(lam, mp_eigenvalues(H), atol=1e-6)


def test_eig_residual_and_orthonormality(rng):
    for _ in range(100):
        n = int(rng.integers(2, 17))
        H = random_hermitian(rng, n)
        lam, V = hermitian_eig(H)
        assert np.linalg.norm(H @ V - V * lam) <= 1e-8 * np.linalg.norm(H)
        assert np.linalg.norm(V.conj().T @ V - np.eye(n)) <= 1e-8
        assert np.all(np.diff(lam) >= 0)


def test_eig_rejects_non_hermitian():
    with pytest.raises(DomainError):
        hermitian_eig(np.array([[1, 1], [0, 1]], complex))


# spectrum ---------------------------------------------------------------

def test_single_source_argmax():
    R = covariance_oracle(8, (10.0,), (1.0,), 0.01)
    P = music_spectrum(R, ArrayGeometry(8), 1, GRID)
    assert GRID.angles[np.argmax(P)] == pytest.approx(10.0)
    assert np.all(P > 0)
    # brute force over the grid with an independent implementation
    lam, V = np.linalg.eigh(R)
    En = V[:, :7]
    ref = [1 / np.linalg.norm(En.conj().T @ steering_oracle(8, a)) ** 2 * 8 for a in GRID.angles[::50]]
    np.testing.assert_allclose(P[::50], ref, rtol=1e-8)


def test_k_must_be_below_dimension():
    with pytest.raises(DomainError):
        music_spectrum(np.eye(4), ArrayGeometry(4), 4, GRID)
    with pytest.raises(DomainError):
        music_spectrum(np.eye(4), ArrayGeometry(4), 0, GRID)


def test_spectrum_invariant_under_unitary_similarity(rng):
    R = covariance_oracle(6, (-12.0, 33.0), (1.0, 1.0), 0.2)
    V = grid_steering(ArrayGeometry(6), GRID)
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6)))
    P1 = subspace_spectrum(R, V, 2)
    P2 = subspace_spectrum(Q @ R @ Q.conj().T, Q @ V, 2)
    # compare denominators: on-grid sources make the spectrum itself blow up
    np.testing.assert_allclose(1 / P2, 1 / P1, atol=1e-10)


def test_scale_invariance_of_peaks():
    g = ArrayGeometry(8)
    R = true_covariance(g, SourceScenario.equal_power([-20.0, 15.0]), NoiseSpec(0.1)).data
    a = estimate_doa_music(R, g, 2).angles_deg
    # a power-of-two scale is exact in floating point
    assert estimate_doa_music(4.0 * R, g, 2).angles_deg == a
    np.testing.assert_allclose(estimate_doa_music(7.5 * R, g, 2).angles_deg, a, atol=1e-9)


@pytest.mark.parametrize("M", [4, 8, 16])
def test_noise_free_denominator_vanishes_at_truth(M):
    angles = (-30.0, 20.0)
    R = covariance_oracle(M, angles, (1.0, 1.0), 0.01)
    V = np.stack([steering_oracle(M, a) for a in angles], 1)
    P = subspace_spectrum(R, V, 2)
    assert np.all(1 / P <= 1e-10)


@pytest.mark.parametrize("M", [4, 8, 16])
@pytest.mark.parametrize("angles", [(25.0,), (-41.3, 12.7), (0.0, 70.0)])
def test_noiseless_on_grid_recovery(M, angles):
    g = ArrayGeometry(M)
    R = covariance_oracle(M, angles, [1.0] * len(angles), 1e-3)
    est = estimate_doa_music(R, g, len(angles))
    np.testing.assert_allclose(est.angles_deg, angles, atol=0.01)


def test_refinement_never_hurts_on_noiseless_set():
    plain = SpectrumGrid(refine=False)
    for M in (4, 8, 16):
        for angles in [(10.03,), (-33.37,), (5.55, 48.21), (-60.12, -20.08)]:
            g = ArrayGeometry(M)
            R = covariance_oracle(M, angles, [1.0] * len(angles), 1e-3)
            a = np.array(estimate_doa_music(R, g, len(angles), GRID).angles_deg)
            b = np.array(estimate_doa_music(R, g, len(angles), plain).angles_deg)
            assert np.all(np.abs(a - angles) <= np.abs(b - angles) + 1e-9)


# peak search ------------------------------------------------------------

def test_find_peaks_exact_indices():
    grid = SpectrumGrid(coarse_step_deg=1.0, refine=False)
    P = np.ones(grid.angles.size)
    P[17], P[40] = 5.0, 3.0
    ang, vals = find_peaks(P, grid, 2)
    np.testing.assert_allclose(ang, grid.angles[[17, 40]])
    np.testing.assert_allclose(vals, [5.0, 3.0])


def test_parabolic_offsets():
    assert parabolic_offset(1, 4, 1) == 0.0
    assert parabolic_offset(2, 4, 3) == pytest.approx(1 / 6)
    grid = SpectrumGrid(coarse_step_deg=1.0)
    P = np.ones(grid.angles.size)
    P[99:102] = (2, 4, 3)
    ang, _ = find_peaks(P, grid, 1, log_domain=False)
    assert ang[0] == pytest.approx(grid.angles[100] + 1 / 6)
    P[99:102] = (1, 4, 1)
    assert find_peaks(P, grid, 1)[0][0] == grid.angles[100]


def test_peak_deficit_and_fallback():
    grid = SpectrumGrid(coarse_step_deg=1.0)
    P = np.linspace(1, 2, grid.angles.size)
    P[50] = 10
    with pytest.raises(PeakDeficitError) as e:
        find_peaks(P, grid, 2)
    assert (e.value.found, e.value.requested) == (1, 2)
    ang, _ = find_peaks(P, grid, 2, fallback=True)
    assert len(ang) == 2 and ang[0] == pytest.approx(grid.angles[50], abs=0.01)


def test_spectrum_length_mismatch():
    with pytest.raises(DomainError):
        find_peaks(np.ones(3), GRID, 1)


# end to end -------------------------------------------------------------

def test_fd_music_two_sources_m64():
    R = covariance_oracle(64, (10.0, 60.0), (1.0, 1.0), 0.01)
    est = estimate_doa_music(CovarianceMatrix(R, "true"), ArrayGeometry(64), 2)
    assert est.method == "fd-music" and not est.failed
    np.testing.assert_allclose(est.angles_deg, (10.0, 60.0), atol=0.05)
    assert list(est.angles_deg) == sorted(est.angles_deg)


def test_had_music_orthonormal_fc_l16():
    g = ArrayGeometry(64)
    c = build_combiner(FullyConnected(), 64, 16)
    assert c.column_normalized
    R = covariance_oracle(64, (10.0, 60.0), (1.0, 1.0), 0.01)
    Rh = c.matrix.conj().T @ R @ c.matrix
    est = estimate_doa_music(Rh, g, 2, combiner=c)
    assert est.method == "had-music"
    np.testing.assert_allclose(est.angles_deg, (10.0, 60.0), atol=0.2)


def test_had_music_random_phase_combiner_whitened():
    g = ArrayGeometry(16)
    c = build_combiner(FullyConnected(), 16, 6, seed=2, phases="random")
    R = covariance_oracle(16, (-25.0, 30.0), (1.0, 1.0), 0.01)
    est = estimate_doa_music(c.matrix.conj().T @ R @ c.matrix, g, 2, combiner=c)
    np.testing.assert_allclose(est.angles_deg, (-25.0, 30.0), atol=0.05)


def test_two_requested_one_present_is_deterministic():
    g = ArrayGeometry(8)
    X = generate_snapshots(g, SourceScenario.equal_power([20.0], 200), NoiseSpec(0.1), 3)
    R = sample_scm(X)
    runs = []
    for _ in range(2):
        try:
            runs.append(estimate_doa_music(R, g, 2))
        except PeakDeficitError:
            runs.append("deficit")
    assert runs[0] == runs[1]
    est = estimate_doa_music(R, g, 2, fallback=True)
    assert len(est.angles_deg) == 2


def test_beamformer_peak_at_source():
    g = ArrayGeometry(16)
    R = covariance_oracle(16, (12.0,), (1.0,), 0.1)
    P = beamformer_spectrum(R, g, GRID)
    assert GRID.angles[np.argmax(P)] == pytest.approx(12.0)


def test_spectrum_csv(tmp_path):
    grid = SpectrumGrid(-10, 10, 5.0)
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, grid, np.arange(grid.angles.size, dtype=float))
    lines = p.read_text().splitlines()
    assert lines[0] == "angle_deg,value"
    assert lines[1] == "-10.0,0.0"
