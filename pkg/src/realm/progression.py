"""Tiered task-progression scoring.

Each skill has an ordered list of equally weighted stage predicates evaluated
over a trace of world states.  A stage becomes eligible only once every
earlier stage has been credited, and at most one stage is credited per trace
step so credit timestamps are strictly increasing.  The score is the fraction
of stages achieved; success means all of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np

from .tasks import TaskSpec
from .world import RigidObject, WorldState

Predicate = Callable[[WorldState, "StageContext"], bool]

STAGE_SEQUENCES: dict[str, tuple[str, ...]] = {
    "put": ("reach", "grasp", "lift", "move_close", "is_inside"),
    "pick": ("reach", "grasp", "lift"),
    "stack": ("reach", "grasp", "lift", "move_close", "is_on_top"),
    "push": ("reach", "touch", "is_toggled_on"),
    "rotate": ("reach", "grasp", "rotate_45"),
    "open": ("reach", "touch_and_move", "open_50", "open_75", "open_95"),
    "close": ("reach", "touch_and_move", "closed_50", "closed_75", "closed_95"),
}


def default_thresholds() -> dict:
    text = resources.files("realm.data").joinpath("rubric_thresholds.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class SkillRubric:
    skill: str
    stage_names: tuple[str, ...]
    predicates: tuple[Predicate, ...]

    def __len__(self) -> int:
        return len(self.stage_names)


@dataclass(frozen=True)
class ProgressionResult:
    stages_achieved: int
    score: float
    stage_times: tuple[float, ...]
    success: bool
    duration_to_success: Optional[float]

    def to_json(self) -> dict:
        return {
            "stages_achieved": self.stages_achieved,
            "score": self.score,
            "stage_times": list(self.stage_times),
            "success": self.success,
            "duration_to_success": self.duration_to_success,
        }

    @staticmethod
    def from_json(d: dict) -> "ProgressionResult":
        return ProgressionResult(
            int(d["stages_achieved"]), float(d["score"]),
            tuple(float(t) for t in d["stage_times"]), bool(d["success"]),
            d.get("duration_to_success"),
        )


class StageContext:
    """Initial-state quantities that predicates compare against."""

    def __init__(self, task: TaskSpec, first: WorldState):
        self.task = task
        scene = first.scene
        self.kind = "rigid"
        try:
            scene.object_by_id(task.target_object)
        except KeyError:
            try:
                scene.articulated_by_id(task.target_object)
                self.kind = "articulated"
            except KeyError:
                scene.toggle_by_id(task.target_object)
                self.kind = "toggle"
        if self.kind == "rigid":
            obj = scene.object_by_id(task.target_object)
            self.initial_z = float(obj.pose.position[2])
            self.initial_yaw = obj.yaw()
        elif self.kind == "articulated":
            self.initial_slide = scene.articulated_by_id(task.target_object).position

    def target_point(self, world: WorldState) -> np.ndarray:
        if self.kind == "rigid":
            return world.scene.object_by_id(self.task.target_object).pose.position
        if self.kind == "articulated":
            return world.scene.articulated_by_id(self.task.target_object).handle_point()
        return world.scene.toggle_by_id(self.task.target_object).base.pose.position

    def target(self, world: WorldState) -> RigidObject:
        return world.scene.object_by_id(self.task.target_object)

    def destination(self, world: WorldState) -> RigidObject:
        return world.scene.object_by_id(self.task.destination_object)

    def attached_to_target(self, world: WorldState) -> bool:
        return world.attachment is not None and world.attachment[0] == self.task.target_object


def _surface_distance(obj: RigidObject, point) -> float:
    local = obj.pose.inverse().transform_point(point)
    if obj.shape == "box":
        outside = np.maximum(np.abs(local) - obj.size / 2.0, 0.0)
        return float(np.linalg.norm(outside))
    if obj.shape == "cylinder":
        radial = max(0.0, float(np.hypot(local[0], local[1])) - float(obj.size[0]) / 2.0)
        vertical = max(0.0, abs(float(local[2])) - obj.half_height)
        return float(np.hypot(radial, vertical))
    return max(0.0, float(np.linalg.norm(local)) - float(obj.size[0]) / 2.0)


def _yaw_change(initial_yaw: float, obj: RigidObject) -> float:
    delta = obj.yaw() - initial_yaw
    return abs(float(np.arctan2(np.sin(delta), np.cos(delta))))


def stage_predicates(skill: str, thresholds: dict | None = None) -> SkillRubric:
    """Ordered stage predicates for a skill, with centralized thresholds."""
    if skill not in STAGE_SEQUENCES:
        raise ValueError(f"unknown skill {skill!r}")
    th = default_thresholds() if thresholds is None else thresholds

    def reach(world: WorldState, ctx: StageContext) -> bool:
        dist = float(np.linalg.norm(world.ee_pose.position - ctx.target_point(world)))
        return dist <= th["reach_dist"]

    def grasp(world, ctx):
        return ctx.attached_to_target(world)

    def lift(world, ctx):
        if not ctx.attached_to_target(world):
            return False
        return float(ctx.target(world).pose.position[2]) >= ctx.initial_z + th["lift_height"]

    def move_close(world, ctx):
        if not ctx.attached_to_target(world):
            return False
        delta = ctx.target(world).pose.position[:2] - ctx.destination(world).pose.position[:2]
        return float(np.hypot(*delta)) <= th["move_close_dist"]

    def is_inside(world, ctx):
        return ctx.destination(world).interior_contains(ctx.target(world).pose.position)

    def is_on_top(world, ctx):
        if ctx.attached_to_target(world):
            return False
        target = ctx.target(world)
        dest = ctx.destination(world)
        delta = target.pose.position[:2] - dest.pose.position[:2]
        if float(np.hypot(*delta)) > float(min(dest.size[0], dest.size[1])) / 2.0:
            return False
        stacked_z = dest.top_z() + target.half_height
        return abs(float(target.pose.position[2]) - stacked_z) <= th["on_top_height_tol"]

    def touch(world, ctx):
        obj = world.scene.toggle_by_id(ctx.task.target_object).base
        return _surface_distance(obj, world.ee_pose.position) <= th["touch_dist"]

    def is_toggled_on(world, ctx):
        return world.scene.toggle_by_id(ctx.task.target_object).toggled

    def rotate_45(world, ctx):
        if not ctx.attached_to_target(world):
            return False
        angle = np.deg2rad(th["rotate_angle_deg"])
        return _yaw_change(ctx.initial_yaw, ctx.target(world)) >= angle

    def touch_and_move(world, ctx):
        art = world.scene.articulated_by_id(ctx.task.target_object)
        return abs(art.position - ctx.initial_slide) >= th["handle_move_dist"]

    def open_at(fraction):
        def pred(world, ctx):
            return world.scene.articulated_by_id(ctx.task.target_object).open_fraction >= fraction
        return pred

    def closed_at(fraction):
        def pred(world, ctx):
            return world.scene.articulated_by_id(ctx.task.target_object).open_fraction <= fraction
        return pred

    table: dict[str, Predicate] = {
        "reach": reach,
        "grasp": grasp,
        "lift": lift,
        "move_close": move_close,
        "is_inside": is_inside,
        "is_on_top": is_on_top,
        "touch": touch,
        "is_toggled_on": is_toggled_on,
        "rotate_45": rotate_45,
        "touch_and_move": touch_and_move,
        "open_50": open_at(th["open_fractions"][0]),
        "open_75": open_at(th["open_fractions"][1]),
        "open_95": open_at(th["open_fractions"][2]),
        "closed_50": closed_at(th["close_fractions"][0]),
        "closed_75": closed_at(th["close_fractions"][1]),
        "closed_95": closed_at(th["close_fractions"][2]),
    }
    names = STAGE_SEQUENCES[skill]
    return SkillRubric(skill, names, tuple(table[n] for n in names))


class IncrementalScorer:
    """Feeds world states one at a time; `score_trace` wraps this so the
    incremental and whole-trace paths cannot diverge."""

    def __init__(self, task: TaskSpec, rubric: SkillRubric, first: WorldState):
        if rubric.skill != task.skill:
            raise ValueError(f"rubric skill {rubric.skill!r} does not match task skill {task.skill!r}")
        self.task = task
        self.rubric = rubric
        self.ctx = StageContext(task, first)
        self.stage_times: list[float] = []
        self.update(first)

    @property
    def next_stage(self) -> int:
        return len(self.stage_times)

    def update(self, world: WorldState) -> None:
        # at most one stage per step keeps credit times strictly increasing
        k = self.next_stage
        if k < len(self.rubric) and self.rubric.predicates[k](world, self.ctx):
            self.stage_times.append(float(world.arm.time))

    @property
    def done(self) -> bool:
        return self.next_stage == len(self.rubric)

    def result(self) -> ProgressionResult:
        achieved = len(self.stage_times)
        total = len(self.rubric)
        success = achieved == total
        return ProgressionResult(
            stages_achieved=achieved,
            score=achieved / total,
            stage_times=tuple(self.stage_times),
            success=success,
            duration_to_success=self.stage_times[-1] if success else None,
        )


def score_trace(trace: Sequence[WorldState], task: TaskSpec, rubric: SkillRubric) -> ProgressionResult:
    """Score a whole episode trace against the task's rubric."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    scorer = IncrementalScorer(task, rubric, trace[0])
    for world in trace[1:]:
        scorer.update(world)
    return scorer.result()
