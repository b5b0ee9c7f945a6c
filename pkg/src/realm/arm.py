"""Deterministic joint-space simulation of a 7-DoF arm with parallel gripper.

The arm tracks commanded joint positions with a per-joint PD law acting on an
effective inertia (fixed link inertia plus identifiable armature), opposed by
identifiable joint friction:

    (I_j + armature_j) qdd = kp_j (q_target - q) - kd_j qd - f_visc,j qd - f_coul,j sign(qd)

Friction per joint is a single identifiable scale `friction_j`: the viscous
coefficient equals the scale and the Coulomb level is scale/10 (fixed 10:1
viscous:Coulomb ratio, keeping one friction parameter per joint).

Integration is semi-implicit Euler with the velocity-proportional terms (kd and
viscous friction) treated implicitly and the Coulomb decrement clamped so it can
never reverse the sign of the velocity within a substep.  Both choices are
required for unconditional stability and for |qd| to be monotone non-increasing
in the friction scale, which explicit damping does not guarantee.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Sequence

import numpy as np

from .geometry import Pose, quat_from_matrix, quat_to_matrix

NUM_JOINTS = 7
CONTROL_HZ = 15.0  # control ticks per second
SUBSTEPS = 8  # physics substeps per control tick (dt = 1/120 s)
GRIPPER_SLEW_RATE = 4.0  # aperture units per second
VISCOUS_TO_COULOMB = 10.0
WORKSPACE_RADIUS = 1.1  # m, from the arm base; IK rejects targets outside

IK_DAMPING = 0.05
IK_MAX_ITERS = 200
IK_POS_TOL = 1e-4  # m
IK_ORI_TOL = 1e-3  # rad


@dataclass(frozen=True)
class ArmParams:
    """Controller and dynamics parameters; friction and armature are the 14
    identifiable values, everything else is fixed plumbing."""

    inertia: np.ndarray  # 7 fixed effective link inertias (kg m^2)
    friction: np.ndarray  # 7 identifiable friction scales (>= 0)
    armature: np.ndarray  # 7 identifiable reflected rotor inertias (>= 0)
    kp: np.ndarray
    kd: np.ndarray
    joint_limits: np.ndarray  # (7, 2) [lower, upper] rad
    link_transforms: np.ndarray  # (8, 4, 4) fixed transforms; joint i rotates about local z after link_transforms[i]
    home_q: np.ndarray

    def __post_init__(self):
        for name in ("inertia", "friction", "armature", "kp", "kd", "home_q"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
            if getattr(self, name).shape != (NUM_JOINTS,):
                raise ValueError(f"{name} must have shape ({NUM_JOINTS},)")
        object.__setattr__(self, "joint_limits", np.asarray(self.joint_limits, dtype=np.float64))
        object.__setattr__(self, "link_transforms", np.asarray(self.link_transforms, dtype=np.float64))
        if self.joint_limits.shape != (NUM_JOINTS, 2):
            raise ValueError("joint_limits must have shape (7, 2)")
        if self.link_transforms.shape != (NUM_JOINTS + 1, 4, 4):
            raise ValueError("link_transforms must have shape (8, 4, 4)")
        if np.any(self.friction < 0) or np.any(self.armature < 0):
            raise ValueError("friction and armature must be non-negative")
        if np.any(self.inertia <= 0) or np.any(self.kp <= 0) or np.any(self.kd < 0):
            raise ValueError("inertia and kp must be positive, kd non-negative")

    def with_identified(self, friction, armature) -> "ArmParams":
        """Copy with the 14 identifiable values replaced."""
        return replace(
            self,
            friction=np.asarray(friction, dtype=np.float64),
            armature=np.asarray(armature, dtype=np.float64),
        )

    def to_json(self) -> dict:
        return {
            "inertia": self.inertia.tolist(),
            "friction": self.friction.tolist(),
            "armature": self.armature.tolist(),
            "kp": self.kp.tolist(),
            "kd": self.kd.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "link_transforms": self.link_transforms.tolist(),
            "home_q": self.home_q.tolist(),
        }

    @staticmethod
    def from_json(d: dict) -> "ArmParams":
        return ArmParams(
            inertia=d["inertia"],
            friction=d["friction"],
            armature=d["armature"],
            kp=d["kp"],
            kd=d["kd"],
            joint_limits=d["joint_limits"],
            link_transforms=d["link_transforms"],
            home_q=d["home_q"],
        )


def load_arm_params(path) -> ArmParams:
    with open(path) as f:
        return ArmParams.from_json(json.load(f))


def save_arm_params(params: ArmParams, path) -> None:
    with open(path, "w") as f:
        json.dump(params.to_json(), f, indent=1)
        f.write("\n")


def default_arm_params() -> ArmParams:
    """Shipped parameters for the 7-DoF research arm used by the benchmark."""
    text = resources.files("realm.data").joinpath("arm_params.json").read_text()
    return ArmParams.from_json(json.loads(text))


@dataclass(frozen=True)
class ArmState:
    q: np.ndarray  # (7,) rad
    qdot: np.ndarray  # (7,) rad/s
    gripper_aperture: float  # [0, 1], 1 = fully open
    time: float  # s

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=np.float64))


@dataclass(frozen=True)
class ActionCommand:
    joint_targets: np.ndarray  # (7,) rad, clamped to limits before use
    gripper_target: float  # [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "joint_targets", np.asarray(self.joint_targets, dtype=np.float64))
        object.__setattr__(self, "gripper_target", float(self.gripper_target))

    @staticmethod
    def from_vector(v) -> "ActionCommand":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (8,):
            raise ValueError("action vector must have 8 entries")
        return ActionCommand(v[:7], float(v[7]))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.joint_targets, [self.gripper_target]])


def rest_state(params: ArmParams) -> ArmState:
    return ArmState(params.home_q.copy(), np.zeros(NUM_JOINTS), 1.0, 0.0)


def _substep_consts(params: ArmParams, dt: float):
    """Precomputed per-substep integrator constants (gain, denom, decrement, lo, hi)."""
    ieff = params.inertia + params.armature
    f_visc = params.friction
    f_coul = params.friction / VISCOUS_TO_COULOMB
    gain = dt * params.kp / ieff
    denom = 1.0 + dt * (params.kd + f_visc) / ieff
    decrement = dt * f_coul / ieff
    return gain, denom, decrement, params.joint_limits[:, 0], params.joint_limits[:, 1]


def _joint_substep(q, qd, targets, consts, dt: float):
    """One integrator substep on arrays of shape (..., 7); returns (q', qd')."""
    gain, denom, decrement, lo, hi = consts
    qd_half = (qd + gain * (targets - q)) / denom
    # Coulomb decrement cannot push the velocity through zero
    qd_new = np.sign(qd_half) * np.maximum(0.0, np.abs(qd_half) - decrement)
    q_new = np.clip(q + dt * qd_new, lo, hi)
    return q_new, qd_new


def _slew_gripper(aperture: float, target: float, dt: float) -> float:
    target = min(1.0, max(0.0, target))
    delta = target - aperture
    limit = GRIPPER_SLEW_RATE * dt
    if delta > limit:
        delta = limit
    elif delta < -limit:
        delta = -limit
    return min(1.0, max(0.0, aperture + delta))


def step(state: ArmState, params: ArmParams, command: ActionCommand, dt: float) -> ArmState:
    """Advance the arm by one physics substep. Pure and deterministic."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qdot))
            and np.isfinite(state.gripper_aperture)):
        raise ValueError("non-finite arm state")
    targets = np.clip(command.joint_targets, params.joint_limits[:, 0], params.joint_limits[:, 1])
    q_new, qd_new = _joint_substep(state.q, state.qdot, targets, _substep_consts(params, dt), dt)
    grip = _slew_gripper(state.gripper_aperture, command.gripper_target, dt)
    return ArmState(q_new, qd_new, grip, state.time + dt)


def replay_trajectory(
    initial: ArmState,
    params: ArmParams,
    commands: Sequence[ActionCommand],
    control_hz: float,
    substeps: int,
) -> np.ndarray:
    """Simulate a command stream open-loop; returns joint positions sampled
    once per control tick, shape (len(commands), 7)."""
    if control_hz <= 0:
        raise ValueError("control_hz must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if len(commands) == 0:
        return np.zeros((0, NUM_JOINTS))
    dt = 1.0 / (control_hz * substeps)
    consts = _substep_consts(params, dt)
    lo, hi = params.joint_limits[:, 0], params.joint_limits[:, 1]
    q = initial.q.copy()
    qd = initial.qdot.copy()
    out = np.empty((len(commands), NUM_JOINTS))
    for k, cmd in enumerate(commands):
        targets = np.clip(cmd.joint_targets, lo, hi)
        for _ in range(substeps):
            q, qd = _joint_substep(q, qd, targets, consts, dt)
        out[k] = q
    return out


# --- kinematics -------------------------------------------------------------


def _rotz(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    m = np.eye(4)
    m[0, 0] = c
    m[0, 1] = -s
    m[1, 0] = s
    m[1, 1] = c
    return m


def joint_frames(q, params: ArmParams) -> list[np.ndarray]:
    """World 4x4 frames after each joint rotation, plus the end-effector frame.

    Entry i (0-based, i < 7) is the frame whose local z is joint i's axis,
    taken after the joint rotation; the last entry is the tool frame.
    """
    q = np.asarray(q, dtype=np.float64)
    frames = []
    t = np.eye(4)
    for i in range(NUM_JOINTS):
        t = t @ params.link_transforms[i] @ _rotz(q[i])
        frames.append(t)
    frames.append(t @ params.link_transforms[NUM_JOINTS])
    return frames


def forward_kinematics(q, params: ArmParams) -> Pose:
    """End-effector pose (grasp point) from the fixed link-transform chain."""
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite joint vector")
    t = joint_frames(q, params)[-1]
    return Pose(t[:3, 3].copy(), quat_from_matrix(t[:3, :3]))


def _jacobian(q, params: ArmParams) -> np.ndarray:
    """Geometric Jacobian, rows [linear; angular], shape (6, 7)."""
    frames = joint_frames(q, params)
    p_ee = frames[-1][:3, 3]
    jac = np.zeros((6, NUM_JOINTS))
    for i in range(NUM_JOINTS):
        # joint i rotates about the z axis of the frame preceding its rotation;
        # that axis is unchanged by the rotation itself, so read it from frames[i]
        axis = frames[i][:3, 2]
        origin = frames[i][:3, 3]
        jac[:3, i] = np.cross(axis, p_ee - origin)
        jac[3:, i] = axis
    return jac


@dataclass(frozen=True)
class IKResult:
    q: np.ndarray
    converged: bool
    position_error: float
    orientation_error: float
    iterations: int


def _pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector [position error; rotation vector] taking current to target."""
    e_pos = target.position - current.position
    r_err = quat_to_matrix(target.orientation) @ quat_to_matrix(current.orientation).T
    # rotation vector of r_err
    cos_a = (np.trace(r_err) - 1.0) / 2.0
    cos_a = min(1.0, max(-1.0, cos_a))
    angle = np.arccos(cos_a)
    if angle < 1e-12:
        e_rot = np.zeros(3)
    else:
        axis = np.array([
            r_err[2, 1] - r_err[1, 2],
            r_err[0, 2] - r_err[2, 0],
            r_err[1, 0] - r_err[0, 1],
        ]) / (2.0 * np.sin(angle))
        e_rot = axis * angle
    return np.concatenate([e_pos, e_rot])


def inverse_kinematics(target: Pose, seed_q, params: ArmParams) -> IKResult:
    """Damped-least-squares IK; returns an explicit unreachable result instead
    of raising when the target cannot be met."""
    if float(np.linalg.norm(target.position)) > WORKSPACE_RADIUS:
        return IKResult(np.asarray(seed_q, dtype=np.float64).copy(), False,
                        float("inf"), float("inf"), 0)
    q = np.clip(np.asarray(seed_q, dtype=np.float64),
                params.joint_limits[:, 0], params.joint_limits[:, 1])
    lam_sq = IK_DAMPING**2
    for it in range(IK_MAX_ITERS + 1):
        err = _pose_error(target, forward_kinematics(q, params))
        pos_err = float(np.linalg.norm(err[:3]))
        ori_err = float(np.linalg.norm(err[3:]))
        if pos_err < IK_POS_TOL and ori_err < IK_ORI_TOL:
            return IKResult(q, True, pos_err, ori_err, it)
        if it == IK_MAX_ITERS:
            return IKResult(q, False, pos_err, ori_err, it)
        jac = _jacobian(q, params)
        jjt = jac @ jac.T + lam_sq * np.eye(6)
        dq = jac.T @ np.linalg.solve(jjt, err)
        step_norm = float(np.linalg.norm(dq))
        if step_norm > 0.5:
            dq *= 0.5 / step_norm
        q = np.clip(q + dq, params.joint_limits[:, 0], params.joint_limits[:, 1])
    raise AssertionError("unreachable")
