import dataclasses

import numpy as np
import pytest

from realm.arm import (
    ActionCommand,
    ArmState,
    GRIPPER_SLEW_RATE,
    default_arm_params,
    forward_kinematics,
    inverse_kinematics,
    replay_trajectory,
    rest_state,
    step,
)
from realm.arm import _joint_substep, _substep_consts
from realm.geometry import Pose, quat_rotate


@pytest.fixture(scope="module")
def params():
    return default_arm_params()


def test_rest_is_exact_fixed_point(params):
    state = rest_state(params)
    cmd = ActionCommand(state.q.copy(), state.gripper_aperture)
    for _ in range(50):
        new = step(state, params, cmd, 1.0 / 120.0)
        assert np.array_equal(new.q, state.q)
        assert np.array_equal(new.qdot, state.qdot)
        assert new.gripper_aperture == state.gripper_aperture
        state = new


def test_critically_damped_matches_analytic_ode(params):
    # single-joint linear ODE: I=1, kp=1, kd=2 (critically damped), no friction
    p = dataclasses.replace(
        params,
        inertia=np.ones(7),
        friction=np.zeros(7),
        armature=np.zeros(7),
        kp=np.ones(7),
        kd=2.0 * np.ones(7),
        joint_limits=np.array([[-10.0, 10.0]] * 7),
    )
    dt = 1e-4
    offset = 0.01
    q = np.zeros(7)
    qd = np.zeros(7)
    target = np.zeros(7)
    target[0] = offset
    consts = _substep_consts(p, dt)
    worst = 0.0
    for k in range(1, 10001):
        q, qd = _joint_substep(q, qd, target, consts, dt)
        t = k * dt
        analytic = offset + (-offset - offset * t) * np.exp(-t)
        worst = max(worst, abs(q[0] - analytic))
    assert worst < 1e-6


def test_step_deterministic(params):
    state = ArmState(params.home_q + 0.1, np.full(7, 0.2), 0.5, 0.0)
    cmd = ActionCommand(params.home_q, 1.0)
    a = step(state, params, cmd, 1.0 / 120.0)
    b = step(state, params, cmd, 1.0 / 120.0)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.qdot, b.qdot)
    assert a.gripper_aperture == b.gripper_aperture and a.time == b.time


def test_step_rejects_bad_input(params):
    state = rest_state(params)
    cmd = ActionCommand(state.q, 1.0)
    with pytest.raises(ValueError):
        step(state, params, cmd, 0.0)
    bad = ArmState(np.full(7, np.nan), np.zeros(7), 1.0, 0.0)
    with pytest.raises(ValueError):
        step(bad, params, cmd, 1.0 / 120.0)


def test_viscous_friction_never_speeds_joint(params):
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(200):
        q = rng.uniform(-1.0, 1.0, 7)
        qd = rng.uniform(-2.0, 2.0, 7)
        target = q + rng.uniform(-0.5, 0.5, 7)
        prev_speed = None
        for scale in (0.0, 0.5, 1.0, 2.0, 5.0, 20.0):
            p = dataclasses.replace(params, friction=np.full(7, scale))
            new = step(ArmState(q, qd, 1.0, 0.0), p, ActionCommand(target, 1.0), 1.0 / 120.0)
            speed = np.abs(new.qdot)
            if prev_speed is not None:
                assert np.all(speed <= prev_speed + 1e-15)
            prev_speed = speed


def test_joint_limits_hold_under_wild_targets(params):
    state = rest_state(params)
    cmd = ActionCommand(np.full(7, 100.0), 0.0)
    for _ in range(240):
        state = step(state, params, cmd, 1.0 / 120.0)
        assert np.all(state.q >= params.joint_limits[:, 0] - 1e-12)
        assert np.all(state.q <= params.joint_limits[:, 1] + 1e-12)


def test_gripper_slew_rate(params):
    state = rest_state(params)  # aperture 1.0
    cmd = ActionCommand(state.q, 0.0)
    dt = 1.0 / 120.0
    new = step(state, params, cmd, dt)
    assert new.gripper_aperture == pytest.approx(1.0 - GRIPPER_SLEW_RATE * dt)
    for _ in range(200):
        new = step(new, params, cmd, dt)
    assert new.gripper_aperture == 0.0


def test_replay_holding_commands_keeps_pose(params):
    state = rest_state(params)
    cmds = [ActionCommand(state.q.copy(), 1.0)] * 20
    qs = replay_trajectory(state, params, cmds, 15.0, 8)
    assert qs.shape == (20, 7)
    assert np.array_equal(qs, np.tile(state.q, (20, 1)))


def test_replay_empty_commands(params):
    qs = replay_trajectory(rest_state(params), params, [], 15.0, 8)
    assert qs.shape == (0, 7)


def test_replay_deterministic(params):
    state = rest_state(params)
    cmds = [ActionCommand(state.q + 0.01 * k, 1.0) for k in range(30)]
    a = replay_trajectory(state, params, cmds, 15.0, 8)
    b = replay_trajectory(state, params, cmds, 15.0, 8)
    assert np.array_equal(a, b)


def test_larger_armature_tracks_slower(params):
    state = rest_state(params)
    target = state.q + 0.3
    cmds = [ActionCommand(target, 1.0)]
    errors = []
    for scale in (1.0, 2.0, 4.0):
        p = dataclasses.replace(params, armature=params.armature * scale)
        qs = replay_trajectory(state, p, cmds, 15.0, 8)
        errors.append(np.linalg.norm(target - qs[0]))
    assert errors[0] <= errors[1] <= errors[2]


# --- kinematics -------------------------------------------------------------


def test_fk_zero_config_is_product_of_link_transforms(params):
    expected = np.eye(4)
    for t in params.link_transforms:
        expected = expected @ t
    pose = forward_kinematics(np.zeros(7), params)
    assert np.allclose(pose.position, expected[:3, 3], atol=1e-12)


# independent oracle: plain homogeneous-transform composition from the same
# modified-DH table, written without the package's helpers
_DH_ROWS = [
    (0.0, 0.0, 0.333),
    (-np.pi / 2, 0.0, 0.0),
    (np.pi / 2, 0.0, 0.316),
    (np.pi / 2, 0.0825, 0.0),
    (-np.pi / 2, -0.0825, 0.384),
    (np.pi / 2, 0.0, 0.0),
    (np.pi / 2, 0.088, 0.0),
    (0.0, 0.0, 0.2104),
]


def _oracle_fk_position(q):
    t = np.eye(4)
    for i, (alpha, a, d) in enumerate(_DH_ROWS):
        ca, sa = np.cos(alpha), np.sin(alpha)
        if i < 7:
            ct, st = np.cos(q[i]), np.sin(q[i])
        else:
            ct, st = 1.0, 0.0
        # modified-DH single-joint transform (Craig convention)
        step_m = np.array(
            [
                [ct, -st, 0.0, a],
                [st * ca, ct * ca, -sa, -sa * d],
                [st * sa, ct * sa, ca, ca * d],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )
        t = t @ step_m
    return t[:3, 3]


def test_fk_matches_independent_dh_oracle(params):
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(50):
        q = rng.uniform(params.joint_limits[:, 0], params.joint_limits[:, 1])
        pose = forward_kinematics(q, params)
        assert np.allclose(pose.position, _oracle_fk_position(q), atol=1e-9)


def test_wrist_joint_axis_passes_through_grasp_point(params):
    rng = np.random.Generator(np.random.PCG64(6))
    q = rng.uniform(params.joint_limits[:, 0], params.joint_limits[:, 1])
    base_pos = forward_kinematics(q, params).position
    for delta in (-0.8, -0.2, 0.4, 1.1):
        q2 = q.copy()
        q2[6] = np.clip(q[6] + delta, params.joint_limits[6, 0], params.joint_limits[6, 1])
        assert np.allclose(forward_kinematics(q2, params).position, base_pos, atol=1e-12)


def test_ik_identity_target_returns_seed(params):
    q0 = params.home_q
    res = inverse_kinematics(forward_kinematics(q0, params), q0, params)
    assert res.converged and res.iterations == 0
    assert np.allclose(res.q, q0, atol=1e-12)


def test_ik_reaches_nearby_target(params):
    q0 = params.home_q
    pose = forward_kinematics(q0, params)
    target = Pose(pose.position + np.array([0.0, 0.0, 0.05]), pose.orientation)
    res = inverse_kinematics(target, q0, params)
    assert res.converged
    reached = forward_kinematics(res.q, params)
    assert np.linalg.norm(reached.position - target.position) < 1e-4


def test_ik_far_target_is_unreachable(params):
    target = Pose(np.array([10.0, 0.0, 0.0]))
    res = inverse_kinematics(target, params.home_q, params)
    assert not res.converged


def test_fk_ik_round_trip(params):
    rng = np.random.Generator(np.random.PCG64(9))
    q0 = params.home_q
    for _ in range(25):
        q = np.clip(q0 + rng.uniform(-0.5, 0.5, 7),
                    params.joint_limits[:, 0], params.joint_limits[:, 1])
        target = forward_kinematics(q, params)
        res = inverse_kinematics(target, q0, params)
        assert res.converged
        reached = forward_kinematics(res.q, params)
        assert np.linalg.norm(reached.position - target.position) < 1e-4


def test_home_pose_points_down(params):
    pose = forward_kinematics(params.home_q, params)
    tool_z = quat_rotate(pose.orientation, np.array([0.0, 0.0, 1.0]))
    assert tool_z[2] < -0.999
