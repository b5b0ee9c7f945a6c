"""Identification of the 14 joint friction/armature parameters.

The pipeline fits simulated trajectory replays to recorded joint trajectories
by minimizing the summed squared joint-position error (the control-alignment
loss), first with CMA-ES for a global estimate and then with an
accept-if-better annealed coordinate search for refinement.

Parameter vectors are handled in log-space (7 log friction scales followed by
7 log armatures) so every candidate decodes to non-negative physical values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .arm import (
    CONTROL_HZ,
    NUM_JOINTS,
    SUBSTEPS,
    ActionCommand,
    ArmParams,
    ArmState,
    _joint_substep,
    _substep_consts,
)
from .cma import cma_es_minimize

UNSTABLE_PENALTY = 1e9
LOG_FLOOR = 1e-8  # physical values below this encode to log(LOG_FLOOR)

ANNEAL_INITIAL_STEP = float(np.log(1.2))  # +/-20% multiplicative proposals
ANNEAL_DECAY = 0.5
ANNEAL_PROPOSALS_PER_ROUND = 200


def encode_params(friction, armature) -> np.ndarray:
    """Physical (friction, armature) -> 14-vector of logs."""
    phys = np.concatenate([np.asarray(friction, float), np.asarray(armature, float)])
    return np.log(np.maximum(phys, LOG_FLOOR))


def decode_params(vec14) -> tuple[np.ndarray, np.ndarray]:
    """14-vector of logs -> physical (friction, armature), always >= 0."""
    with np.errstate(over="ignore"):  # inf decodes are caught by the loss penalty
        phys = np.exp(np.asarray(vec14, dtype=np.float64))
    return phys[:NUM_JOINTS], phys[NUM_JOINTS:]


@dataclass(frozen=True)
class TrajectoryPair:
    """A recorded command stream and the joint positions it produced."""

    commands: np.ndarray  # (T, 8) action vectors
    q_real: np.ndarray  # (T, 7)
    initial_state: ArmState

    def __post_init__(self):
        cmds = self.commands
        if not isinstance(cmds, np.ndarray):
            cmds = np.asarray([c.to_vector() if isinstance(c, ActionCommand) else c for c in cmds])
        object.__setattr__(self, "commands", np.asarray(cmds, dtype=np.float64))
        object.__setattr__(self, "q_real", np.asarray(self.q_real, dtype=np.float64))
        if len(self.commands) != len(self.q_real) or len(self.commands) < 1:
            raise ValueError("commands and q_real must have equal length >= 1")

    def to_json(self) -> dict:
        return {
            "control_hz": CONTROL_HZ,
            "substeps": SUBSTEPS,
            "initial_state": {
                "q": self.initial_state.q.tolist(),
                "qdot": self.initial_state.qdot.tolist(),
                "gripper_aperture": self.initial_state.gripper_aperture,
                "time": self.initial_state.time,
            },
            "commands": self.commands.tolist(),
            "q_real": self.q_real.tolist(),
        }

    @staticmethod
    def from_json(d: dict) -> "TrajectoryPair":
        init = d["initial_state"]
        state = ArmState(
            np.array(init["q"]), np.array(init["qdot"]),
            float(init["gripper_aperture"]), float(init["time"]),
        )
        return TrajectoryPair(np.array(d["commands"]), np.array(d["q_real"]), state)


@dataclass(frozen=True)
class SysIdDataset:
    pairs: tuple[TrajectoryPair, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if len(self.pairs) < 1:
            raise ValueError("dataset must contain at least one trajectory pair")


def load_dataset(directory) -> SysIdDataset:
    """Read every *.json trajectory pair in a directory (sorted by name)."""
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no trajectory pair files in {directory}")
    return SysIdDataset(tuple(TrajectoryPair.from_json(json.loads(p.read_text())) for p in paths))


def save_dataset(dataset: SysIdDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, pair in enumerate(dataset.pairs):
        with open(directory / f"pair_{i:03d}.json", "w") as f:
            json.dump(pair.to_json(), f)


def _replay_residual_sq(pair_group: list[TrajectoryPair], params: ArmParams) -> np.ndarray:
    """Per-pair sums of squared joint errors for equal-length pairs, replayed
    together; batching is elementwise so results match pair-at-a-time replay."""
    horizon = len(pair_group[0].commands)
    targets = np.stack([p.commands[:, :NUM_JOINTS] for p in pair_group], axis=1)  # (T, B, 7)
    q_real = np.stack([p.q_real for p in pair_group], axis=1)
    q = np.stack([p.initial_state.q for p in pair_group])
    qd = np.stack([p.initial_state.qdot for p in pair_group])
    dt = 1.0 / (CONTROL_HZ * SUBSTEPS)
    consts = _substep_consts(params, dt)
    lo, hi = params.joint_limits[:, 0], params.joint_limits[:, 1]
    targets = np.clip(targets, lo, hi)
    totals = np.zeros(len(pair_group))
    for t in range(horizon):
        tgt = targets[t]
        for _ in range(SUBSTEPS):
            q, qd = _joint_substep(q, qd, tgt, consts, dt)
        diff = q - q_real[t]
        totals = totals + np.sum(diff * diff, axis=-1)
    return totals


def alignment_loss(params_vec14, dataset: SysIdDataset, base: ArmParams) -> float:
    """Summed squared joint-position replay error under the candidate parameters.

    Candidates that drive the simulation non-finite report a large finite
    penalty (1e9) so rank-based optimizers can keep going.
    """
    friction, armature = decode_params(params_vec14)
    if not (np.all(np.isfinite(friction)) and np.all(np.isfinite(armature))):
        return UNSTABLE_PENALTY
    params = base.with_identified(friction, armature)
    groups: dict[int, list[TrajectoryPair]] = {}
    for pair in dataset.pairs:
        groups.setdefault(len(pair.commands), []).append(pair)
    per_pair = []
    for horizon in sorted(groups):
        per_pair.extend(_replay_residual_sq(groups[horizon], params).tolist())
    # fsum is exactly rounded, so the loss is invariant to pair order
    total = math.fsum(per_pair)
    if not np.isfinite(total):
        return UNSTABLE_PENALTY
    return total


def anneal_refine(
    start: np.ndarray,
    objective: Callable[[np.ndarray], float],
    rounds: int,
    seed: int,
    proposals_per_round: int = ANNEAL_PROPOSALS_PER_ROUND,
) -> np.ndarray:
    """Coordinate-wise random search with geometrically decaying proposal scale.

    Accepts a proposal only when it strictly improves the objective, so the
    returned point is never worse than `start`.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = np.asarray(start, dtype=np.float64).copy()
    f = float(objective(x))
    n = x.size
    scale = ANNEAL_INITIAL_STEP
    for _ in range(rounds):
        for _ in range(proposals_per_round):
            j = int(rng.integers(n))
            delta = float(rng.uniform(-scale, scale))
            cand = x.copy()
            cand[j] += delta
            fc = float(objective(cand))
            if fc < f:
                x, f = cand, fc
        scale *= ANNEAL_DECAY
    return x


def identify(
    dataset: SysIdDataset,
    base: ArmParams,
    seed: int,
    cma_budget: int = 3300,
    cma_sigma: float = 0.5,
    anneal_rounds: int = 6,
) -> ArmParams:
    """Full pipeline: CMA-ES global estimate, then annealed refinement.

    Returns `base` with friction/armature replaced by the identified values.
    If the dataset carries no excitation (loss already exactly zero at the
    initial mean), the initial values are returned unchanged.
    """
    init = encode_params(base.friction, base.armature)
    objective = lambda v: alignment_loss(v, dataset, base)
    if objective(init) == 0.0:
        return base.with_identified(*decode_params(init))
    best, _ = cma_es_minimize(objective, init, cma_sigma, cma_budget, seed)
    refined = anneal_refine(best, objective, anneal_rounds, seed + 1)
    return base.with_identified(*decode_params(refined))


def make_synthetic_dataset(
    params: ArmParams,
    n_pairs: int,
    ticks: int,
    seed: int,
    amplitude: float = 0.35,
) -> SysIdDataset:
    """Generate excitation trajectories and replay them under `params` to get
    ground-truth joint responses; used by tests and demos."""
    from .arm import replay_trajectory, rest_state

    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = []
    t = np.arange(ticks) / CONTROL_HZ
    for _ in range(n_pairs):
        state = rest_state(params)
        freqs = rng.uniform(0.3, 1.4, size=NUM_JOINTS)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=NUM_JOINTS)
        amps = rng.uniform(0.5, 1.0, size=NUM_JOINTS) * amplitude
        targets = state.q + amps * np.sin(
            2.0 * np.pi * freqs * t[:, None] + phases
        )
        targets = np.clip(targets, params.joint_limits[:, 0] + 0.05,
                          params.joint_limits[:, 1] - 0.05)
        commands = np.concatenate([targets, np.ones((ticks, 1))], axis=1)
        action_list = [ActionCommand.from_vector(v) for v in commands]
        q_sim = replay_trajectory(state, params, action_list, CONTROL_HZ, SUBSTEPS)
        pairs.append(TrajectoryPair(commands, q_sim, state))
    return SysIdDataset(tuple(pairs))
