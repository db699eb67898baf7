import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hadoa.array_model import ArrayGeometry, SnapshotMatrix, steering_vector
from hadoa.errors import ConfigurationError, DomainError
from hadoa.frontend import (Combiner, DynamicSubarray, FullyConnected, PartiallyConnected, SwitchBased,
                            apply_combiner, build_combiner, dft_combiner, effective_steering, hds_switches,
                            quantize_phases, read_combiner_csv, validate, whitener, write_combiner_csv)

from conftest import steering_oracle


def support(W):
    return (np.abs(W) > 1e-12).astype(int)


def test_fc_m4_l4_is_scaled_dft():
    c = build_combiner(FullyConnected(), 4, 4)
    m = np.arange(4)
    dft = np.exp(2j * np.pi * np.outer(m, m) / 4)
    np.testing.assert_allclose(c.matrix, dft / 2, atol=1e-14)
    np.testing.assert_allclose(c.matrix.conj().T @ c.matrix, np.eye(4), atol=1e-14)
    assert c.column_normalized


def test_pc_support_pattern():
    c = build_combiner(PartiallyConnected(2), 4, 2)
    assert support(c.matrix).tolist() == [[1, 0], [1, 0], [0, 1], [0, 1]]
    assert validate(c) == []


def test_hds_between_pc_and_fc():
    # one closed switch per chain reproduces the PC support, all closed gives FC support
    pc_like = build_combiner(DynamicSubarray(2, 0.5), 4, 2)
    assert support(pc_like.matrix).tolist() == [[1, 0], [1, 0], [0, 1], [0, 1]]
    fc_like = build_combiner(DynamicSubarray(2, 1.0), 4, 2)
    assert support(fc_like.matrix).tolist() == [[1, 1]] * 4
    assert validate(pc_like) == [] and validate(fc_like) == []


def test_se_contiguous_blocks():
    c = build_combiner(SwitchBased(2), 6, 3)
    assert support(c.matrix).tolist() == [[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1]]
    np.testing.assert_allclose(c.matrix[c.matrix != 0], 1 / np.sqrt(2))


def test_se_overlap_only_when_explicit():
    with pytest.raises(ConfigurationError):
        build_combiner(SwitchBased(3), 4, 2)
    c = build_combiner(SwitchBased(3, ((0, 1, 2), (1, 2, 3))), 4, 2)
    assert validate(c) == []


@pytest.mark.parametrize("spec,M,L,needle", [
    (PartiallyConnected(3), 8, 2, "subarray_size*L == M"),
    (SwitchBased(9), 8, 2, "active_per_chain"),
    (DynamicSubarray(3, 0.5), 8, 2, "divide"),
    (DynamicSubarray(2, 0.1), 8, 4, "fewer than L"),
    (FullyConnected(), 4, 5, "L=5"),
])
def test_incompatible_spec_names_constraint(spec, M, L, needle):
    with pytest.raises(ConfigurationError, match=needle.replace("*", r"\*")):
        build_combiner(spec, M, L)


def test_validate_reports_violations():
    W = np.array(build_combiner(FullyConnected(), 4, 2).matrix)
    W[1, 0] = 0
    assert any("unit-modulus" in p for p in validate(Combiner(W, FullyConnected())))
    W = np.array(build_combiner(PartiallyConnected(2), 4, 2).matrix)
    W[3, 0] = 0.5
    assert any("support violation" in p for p in validate(Combiner(W, PartiallyConnected(2))))
    W = np.zeros((4, 2), complex)
    W[:2, 0] = 1 / np.sqrt(2)
    assert any("all zero" in p for p in validate(Combiner(W, SwitchBased(2))))


def test_validate_hds_count_message_includes_expected():
    good = build_combiner(DynamicSubarray(2, 0.5), 4, 2)
    W = np.array(good.matrix)
    W[2:, 0] = 0.5
    msgs = validate(Combiner(W, DynamicSubarray(2, 0.5)))
    assert any("expected 2" in p for p in msgs)


@pytest.mark.parametrize("spec,M,L", [
    (FullyConnected(), 16, 4),
    (PartiallyConnected(4), 16, 4),
    (SwitchBased(3), 16, 4),
    (DynamicSubarray(4, 0.5), 16, 4),
    (DynamicSubarray(2, 0.75), 8, 2),
])
@pytest.mark.parametrize("phases", ["grid", "random"])
def test_built_combiners_valid_for_many_seeds(spec, M, L, phases):
    for seed in range(100):
        c = build_combiner(spec, M, L, seed=seed, phases=phases)
        assert validate(c) == []


def test_column_normalized_flag_truthful():
    for spec, M, L in [(FullyConnected(), 8, 8), (FullyConnected(), 8, 3), (PartiallyConnected(2), 8, 4),
                       (DynamicSubarray(4, 0.75), 8, 2)]:
        for phases in ("grid", "random"):
            c = build_combiner(spec, M, L, seed=1, phases=phases)
            err = np.linalg.norm(c.matrix.conj().T @ c.matrix - np.eye(L))
            assert c.column_normalized == (err <= 1e-10)


def test_hds_monotone_in_closure_ratio():
    counts = [np.count_nonzero(build_combiner(DynamicSubarray(4, r), 16, 4).matrix)
              for r in np.linspace(0.25, 1.0, 13)]
    assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_hds_round_half_up():
    # 0.3125 * 2 * 4 = 2.5 -> 3 closed switches
    assert len(hds_switches(DynamicSubarray(4, 0.3125), 2)) == 3


def test_apply_combiner_identity_selection():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    c = build_combiner(SwitchBased(1), 4, 4)
    Y = apply_combiner(c, SnapshotMatrix(X))
    np.testing.assert_allclose(Y.data, X, atol=0)
    assert Y.domain == "rf-chain"


def test_apply_combiner_rank_one_rows_constant():
    g = ArrayGeometry(8)
    a = steering_vector(g, 20.0)
    X = np.outer(a, np.ones(6))
    c = build_combiner(FullyConnected(), 8, 3, seed=4, phases="random")
    Y = apply_combiner(c, X).data
    np.testing.assert_allclose(Y, np.outer(c.matrix.conj().T @ a, np.ones(6)), atol=1e-12)


def test_apply_combiner_matches_direct_multiply():
    rng = np.random.default_rng(5)
    W = build_combiner(FullyConnected(), 4, 2, seed=2, phases="random").matrix
    X = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    ref = np.array([[sum(np.conj(W[m, l]) * X[m, n] for m in range(4)) for n in range(3)] for l in range(2)])
    got = apply_combiner(Combiner(W, FullyConnected()), X).data
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_apply_combiner_dimension_mismatch():
    with pytest.raises(DomainError):
        apply_combiner(build_combiner(FullyConnected(), 4, 2), np.ones((5, 2)))


def test_effective_steering_dft_beam_single_entry():
    g = ArrayGeometry(4)
    c = build_combiner(FullyConnected(), 4, 4)
    # column 1 points at sin(theta) = 2/4 = 0.5, i.e. 30 degrees
    v = effective_steering(c, g, 30.0)
    assert abs(v[1]) == pytest.approx(2.0)
    np.testing.assert_allclose(np.delete(v, 1), 0, atol=1e-10)


def test_effective_steering_projection_bound_and_broadside():
    g = ArrayGeometry(16)
    c = build_combiner(FullyConnected(), 16, 5)
    for ang in np.linspace(-80, 80, 17):
        assert np.linalg.norm(effective_steering(c, g, ang)) <= np.sqrt(16) + 1e-12
    v = effective_steering(build_combiner(FullyConnected(), 16, 1), g, 0.0)
    assert v[0] == pytest.approx(4.0)


def test_whitener_inverse_square_root():
    c = build_combiner(FullyConnected(), 8, 3, seed=3, phases="random")
    Q = whitener(c)
    G = c.matrix.conj().T @ c.matrix
    np.testing.assert_allclose(Q @ G @ Q.conj().T, np.eye(3), atol=1e-12)


def test_quantize_phases():
    W = np.full((2, 1), np.exp(1j * np.pi / 3) / np.sqrt(2))
    q = quantize_phases(Combiner(W, FullyConnected()), 1)
    np.testing.assert_allclose(q.matrix, np.full((2, 1), 1 / np.sqrt(2)), atol=1e-15)
    c = build_combiner(FullyConnected(), 8, 3, seed=9, phases="random")
    np.testing.assert_allclose(quantize_phases(c, 50).matrix, c.matrix, atol=1e-12)
    assert validate(quantize_phases(c, 3)) == []
    np.testing.assert_allclose(np.abs(quantize_phases(c, 2).matrix), np.abs(c.matrix), atol=1e-15)


@pytest.mark.parametrize("spec,M,L", [
    (FullyConnected(), 4, 2), (PartiallyConnected(2), 4, 2), (SwitchBased(1, ((0,), (3,))), 4, 2),
    (DynamicSubarray(2, 0.75, ((0, 0), (0, 1), (1, 1))), 4, 2),
])
def test_combiner_csv_round_trip(tmp_path, spec, M, L):
    c = build_combiner(spec, M, L, seed=3, phases="random")
    p = tmp_path / "w.csv"
    write_combiner_csv(c, p)
    back = read_combiner_csv(p)
    assert back.spec == c.spec
    assert np.array_equal(back.matrix, c.matrix)
    assert p.read_text().splitlines()[1] == "row,col,re,im"


def test_dft_combiner_columns_are_steering_vectors():
    c = dft_combiner(8, [0, 3])
    np.testing.assert_allclose(c.matrix[:, 1] * np.sqrt(8),
                               steering_oracle(8, np.degrees(np.arcsin(2 * 3 / 8))), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(M=st.sampled_from([4, 6, 8, 12]), L=st.integers(1, 4), seed=st.integers(0, 2 ** 32))
def test_random_fc_always_valid(M, L, seed):
    c = build_combiner(FullyConnected(), M, L, seed=seed, phases="random")
    assert validate(c) == []
