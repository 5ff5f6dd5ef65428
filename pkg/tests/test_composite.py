"""Blockwise product emissions and observation layouts."""

import numpy as np
import pytest

from arhmm import (Block, CartesianDynamics, CompositeDynamics, GaussianNoise,
                   InsufficientDataError, LinearBasis, ObservationLayout,
                   ObservationSequence, PolynomialBasis, QuaternionDynamics,
                   cartesian_layout, default_dynamics, log_gaussian_density,
                   pose_gripper_layout, quat_exp, quat_mul)
from arhmm.composite import emission_from_payload


def unit_rows(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_cartesian(rng, d, basis=None):
    basis = basis or LinearBasis(d)
    w = rng.normal(scale=0.3, size=(d, basis.output_len))
    cov = np.diag(rng.uniform(0.05, 0.2, size=d))
    return CartesianDynamics(basis, w, cov)


def pose_gripper_rows(rng, n, arms=2):
    """Valid rows for the pose+gripper layout: unit quaternion blocks."""
    width = arms * 8
    rows = np.empty((n, width))
    for h in range(arms):
        rows[:, 8 * h:8 * h + 3] = rng.normal(size=(n, 3))
        rows[:, 8 * h + 3:8 * h + 7] = unit_rows(rng, n)
        rows[:, 8 * h + 7] = rng.uniform(0.0, 1.0, size=n)
    return rows


# ---------------------------------------------------------------- layouts


def test_layout_offsets_are_contiguous_and_cover_width():
    layout = pose_gripper_layout(2)
    assert layout.width == 16
    slices = layout.slices()
    assert slices[0].start == 0
    for prev, cur in zip(slices, slices[1:]):
        assert prev.stop == cur.start
    assert slices[-1].stop == layout.width


def test_pose_gripper_block_structure():
    layout = pose_gripper_layout(2)
    assert [b.name for b in layout.blocks] == ["x1", "q1", "th1",
                                               "x2", "q2", "th2"]
    assert [b.kind for b in layout.blocks] == ["cartesian", "quaternion",
                                               "scalar"] * 2
    assert [b.dim for b in layout.blocks] == [3, 4, 1, 3, 4, 1]
    assert layout.block_slice("q2") == slice(11, 15)


def test_channel_names_flatten_blocks():
    layout = pose_gripper_layout(1)
    assert layout.channel_names() == [
        "x1_0", "x1_1", "x1_2", "q1_r", "q1_i", "q1_j", "q1_k", "th1"]


def test_layout_payload_round_trip():
    layout = pose_gripper_layout(2)
    payload = layout.to_payload()
    # quaternion and scalar entries carry no dim key
    assert payload["blocks"][1] == {"name": "q1", "kind": "quaternion"}
    assert payload["blocks"][2] == {"name": "th1", "kind": "scalar"}
    assert payload["blocks"][0] == {"name": "x1", "kind": "cartesian", "dim": 3}
    assert ObservationLayout.from_payload(payload) == layout


def test_block_validation():
    with pytest.raises(ValueError):
        Block("q", "quaternion", 3)
    with pytest.raises(ValueError):
        Block("th", "scalar", 2)
    with pytest.raises(ValueError):
        Block("y", "spherical", 3)
    with pytest.raises(ValueError):
        ObservationLayout([Block("y", "cartesian", 2),
                           Block("y", "cartesian", 2)])
    with pytest.raises(KeyError):
        cartesian_layout(2).block_slice("nope")


def test_quaternion_slices_listed_in_order():
    layout = pose_gripper_layout(2)
    assert layout.quaternion_slices() == [slice(3, 7), slice(11, 15)]
    assert cartesian_layout(3).quaternion_slices() == []


# ------------------------------------------------------- observation rows


def test_sequence_validates_shape_and_content():
    layout = cartesian_layout(2)
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros((5, 3)), layout)
    with pytest.raises(ValueError):
        ObservationSequence(np.zeros((1, 2)), layout)
    bad = np.zeros((4, 2))
    bad[2, 1] = np.nan
    with pytest.raises(ValueError):
        ObservationSequence(bad, layout)


def test_sequence_block_views():
    rng = np.random.default_rng(0)
    layout = pose_gripper_layout(1)
    rows = pose_gripper_rows(rng, 5, arms=1)
    seq = ObservationSequence(rows, layout, name="demo")
    assert seq.n_steps == 4
    assert np.array_equal(seq.block_values("x1"), rows[:, 0:3])
    assert np.array_equal(seq.block_values("th1"), rows[:, 7:8])


# ------------------------------------------------------ product emissions


def test_single_block_composite_equals_bare_dynamics():
    rng = np.random.default_rng(3)
    layout = cartesian_layout(3)
    part = random_cartesian(rng, 3)
    composite = CompositeDynamics(layout, [part])
    values = rng.normal(size=(12, 3))
    assert np.array_equal(composite.log_emission_seq(values),
                          part.log_emission_seq(values))
    y = rng.normal(size=3)
    assert np.array_equal(composite.predict(y), part.predict(y))


def test_two_block_log_emission_is_the_sum():
    rng = np.random.default_rng(4)
    layout = ObservationLayout([Block("a", "cartesian", 2),
                                Block("b", "cartesian", 3)])
    pa = random_cartesian(rng, 2)
    pb = random_cartesian(rng, 3)
    composite = CompositeDynamics(layout, [pa, pb])
    values = rng.normal(size=(9, 5))
    v1 = pa.log_emission_seq(values[:, :2])
    v2 = pb.log_emission_seq(values[:, 2:])
    assert np.allclose(composite.log_emission_seq(values), v1 + v2,
                       atol=1e-12)


def test_sixteen_channel_product_against_direct_densities():
    # Full two-arm layout scored block by block with the plain Gaussian
    # formula, predictions rebuilt from the raw maps.
    rng = np.random.default_rng(5)
    layout = pose_gripper_layout(2)
    parts = []
    for block in layout.blocks:
        if block.kind == "quaternion":
            parts.append(QuaternionDynamics(
                rng.normal(scale=0.05, size=3),
                np.diag(rng.uniform(0.01, 0.05, size=4))))
        else:
            parts.append(random_cartesian(
                rng, block.dim,
                LinearBasis(block.dim) if block.kind == "cartesian"
                else PolynomialBasis(1, 2)))
    composite = CompositeDynamics(layout, parts)
    rows = pose_gripper_rows(rng, 7, arms=2)

    got = composite.log_emission_seq(rows)
    want = np.zeros(6)
    for sl, part, block in zip(layout.slices(), parts, layout.blocks):
        prev, nxt = rows[:-1, sl], rows[1:, sl]
        for t in range(6):
            if block.kind == "quaternion":
                mean = quat_mul(quat_exp(part.rotvec), prev[t])
            else:
                mean = part.weights @ part.basis.evaluate_rows(prev[t:t + 1])[0]
            want[t] += log_gaussian_density(nxt[t], mean,
                                            part.noise.covariance)
    assert np.allclose(got, want, atol=1e-10)


def test_log_emission_pair_agrees_with_sequence():
    rng = np.random.default_rng(6)
    layout = pose_gripper_layout(1)
    model = default_dynamics(layout, noise_scale=0.5)
    rows = pose_gripper_rows(rng, 4, arms=1)
    seq = model.log_emission_seq(rows)
    for t in range(3):
        assert model.log_emission(rows[t], rows[t + 1]) == pytest.approx(
            seq[t], abs=1e-12)


def test_constructor_rejects_misaligned_parts():
    layout = pose_gripper_layout(1)
    rng = np.random.default_rng(7)
    good = [random_cartesian(rng, 3),
            QuaternionDynamics(np.zeros(3), np.eye(4)),
            random_cartesian(rng, 1)]
    with pytest.raises(ValueError):
        CompositeDynamics(layout, good[:2])
    with pytest.raises(ValueError):
        CompositeDynamics(layout, [good[0], random_cartesian(rng, 4), good[2]])
    with pytest.raises(ValueError):
        CompositeDynamics(layout, [good[0], good[1], random_cartesian(rng, 2)])


def test_quaternion_block_requires_quaternion_dynamics():
    layout = pose_gripper_layout(1)
    rng = np.random.default_rng(8)
    parts = [random_cartesian(rng, 3), random_cartesian(rng, 4),
             random_cartesian(rng, 1)]
    with pytest.raises(ValueError):
        CompositeDynamics(layout, parts)


def test_sampling_keeps_quaternion_blocks_unit_norm():
    rng = np.random.default_rng(9)
    layout = pose_gripper_layout(1)
    model = default_dynamics(layout, noise_scale=0.01)
    y = pose_gripper_rows(rng, 1, arms=1)[0]
    for _ in range(50):
        y = model.sample_next(y, rng)
        assert np.linalg.norm(y[3:7]) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- m-step


def test_m_step_single_block_equals_standalone():
    rng = np.random.default_rng(10)
    layout = cartesian_layout(2)
    part = random_cartesian(rng, 2)
    composite = CompositeDynamics(layout, [part])
    values = rng.normal(size=(40, 2))
    w = rng.uniform(0.1, 1.0, size=39)
    fit_c = composite.m_step([values], [w])
    fit_s = part.m_step([values], [w])
    assert np.array_equal(fit_c.parts[0].weights, fit_s.weights)
    assert np.array_equal(fit_c.parts[0].noise.covariance,
                          fit_s.noise.covariance)


def test_m_step_matches_disjoint_standalone_fits():
    rng = np.random.default_rng(11)
    layout = pose_gripper_layout(1)
    start = default_dynamics(layout, noise_scale=0.5)
    values = pose_gripper_rows(rng, 60, arms=1)
    w = rng.uniform(0.2, 1.0, size=59)

    fitted = start.m_step([values], [w])
    for sl, part, got in zip(layout.slices(), start.parts, fitted.parts):
        alone = part.m_step([values[:, sl]], [w])
        if isinstance(part, QuaternionDynamics):
            assert np.allclose(got.rotvec, alone.rotvec, atol=1e-10)
        else:
            assert np.allclose(got.weights, alone.weights, atol=1e-10)
        assert np.allclose(got.noise.covariance, alone.noise.covariance,
                           atol=1e-10)


def test_m_step_shares_the_insufficient_data_error():
    rng = np.random.default_rng(12)
    layout = pose_gripper_layout(1)
    model = default_dynamics(layout)
    values = pose_gripper_rows(rng, 10, arms=1)
    with pytest.raises(InsufficientDataError, match="no responsibility mass"):
        model.m_step([values], [np.zeros(9)])


def test_m_step_passes_the_diagonal_flag_down():
    rng = np.random.default_rng(13)
    layout = ObservationLayout([Block("a", "cartesian", 2),
                                Block("b", "cartesian", 2)])
    start = CompositeDynamics(layout, [random_cartesian(rng, 2),
                                       random_cartesian(rng, 2)])
    values = rng.normal(size=(50, 4))
    fitted = start.m_step([values], [np.ones(49)], diagonal=True)
    for part in fitted.parts:
        off = part.noise.covariance - np.diag(np.diag(part.noise.covariance))
        assert np.all(off == 0.0)


# ------------------------------------------------------ default dynamics


def test_default_dynamics_single_block_is_bare():
    model = default_dynamics(cartesian_layout(3))
    assert isinstance(model, CartesianDynamics)
    assert isinstance(model.basis, LinearBasis)
    assert np.all(model.weights == 0.0)


def test_default_dynamics_block_kinds_and_scales():
    model = default_dynamics(pose_gripper_layout(1), noise_scale=0.2)
    assert isinstance(model, CompositeDynamics)
    pos, quat, grip = model.parts
    assert isinstance(pos, CartesianDynamics) and isinstance(pos.basis, LinearBasis)
    assert isinstance(quat, QuaternionDynamics)
    assert isinstance(grip, CartesianDynamics)
    assert isinstance(grip.basis, PolynomialBasis)
    assert grip.basis.degree == 2
    assert np.array_equal(pos.noise.covariance, 0.2 * np.eye(3))
    assert np.array_equal(quat.noise.covariance, 0.2 * np.eye(4))


def test_default_dynamics_basis_overrides():
    layout = pose_gripper_layout(1)
    model = default_dynamics(layout, {"x1": PolynomialBasis(3, 2)})
    assert isinstance(model.parts[0].basis, PolynomialBasis)
    with pytest.raises(ValueError):
        default_dynamics(layout, {"x9": LinearBasis(3)})
    with pytest.raises(ValueError):
        default_dynamics(layout, {"q1": LinearBasis(4)})
    with pytest.raises(ValueError):
        default_dynamics(layout, {"x1": LinearBasis(2)})


# -------------------------------------------------------------- payloads


def test_composite_payload_round_trip():
    rng = np.random.default_rng(14)
    layout = pose_gripper_layout(2)
    parts = []
    for block in layout.blocks:
        if block.kind == "quaternion":
            parts.append(QuaternionDynamics(rng.normal(size=3),
                                            np.diag(rng.uniform(0.1, 1, 4))))
        else:
            parts.append(random_cartesian(rng, block.dim))
    model = CompositeDynamics(layout, parts)
    back = emission_from_payload(model.to_payload(), layout)
    assert isinstance(back, CompositeDynamics)
    for orig, rebuilt in zip(model.parts, back.parts):
        if isinstance(orig, QuaternionDynamics):
            assert np.array_equal(orig.rotvec, rebuilt.rotvec)
        else:
            assert np.array_equal(orig.weights, rebuilt.weights)
        assert np.array_equal(orig.noise.covariance,
                              rebuilt.noise.covariance)


def test_composite_payload_needs_layout():
    model = default_dynamics(pose_gripper_layout(1))
    with pytest.raises(ValueError):
        emission_from_payload(model.to_payload())


def test_unknown_payload_kind_is_rejected():
    with pytest.raises(ValueError):
        emission_from_payload({"kind": "spline"})
