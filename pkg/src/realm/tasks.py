"""Task definitions and the shipped task sets.

A task instantiates one skill on one scene: which object to manipulate, where
to put it (if anywhere), the default instruction, and the episode step cap.
The shipped benchmark has a `base` set of 8 pick-place style tasks and an
`articulated` set of 2 drawer tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .world import Scene

SKILLS = ("put", "pick", "stack", "push", "rotate", "open", "close")
TASK_SETS = ("base", "articulated")


@dataclass(frozen=True)
class TaskSpec:
    id: str
    skill: str
    scene_path: str  # package-relative under realm/data, or absolute
    target_object: str
    destination_object: Optional[str]
    default_instruction: str
    compatible_alternate_skill: Optional[str]
    max_steps: int
    set: str  # base | articulated

    def __post_init__(self):
        if self.skill not in SKILLS:
            raise ValueError(f"unknown skill {self.skill!r}")
        if self.set not in TASK_SETS:
            raise ValueError(f"unknown task set {self.set!r}")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.compatible_alternate_skill is not None and \
                self.compatible_alternate_skill not in SKILLS:
            raise ValueError("unknown alternate skill")

    def with_skill(self, skill: str) -> "TaskSpec":
        return replace(self, skill=skill)

    def with_target(self, target: str) -> "TaskSpec":
        return replace(self, target_object=target)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "skill": self.skill,
            "scene_path": self.scene_path,
            "target_object": self.target_object,
            "destination_object": self.destination_object,
            "default_instruction": self.default_instruction,
            "compatible_alternate_skill": self.compatible_alternate_skill,
            "max_steps": self.max_steps,
            "set": self.set,
        }

    @staticmethod
    def from_json(d: dict) -> "TaskSpec":
        return TaskSpec(
            d["id"], d["skill"], d["scene_path"], d["target_object"],
            d.get("destination_object"), d["default_instruction"],
            d.get("compatible_alternate_skill"), int(d["max_steps"]), d["set"],
        )


def load_scene_for(task: TaskSpec) -> Scene:
    path = Path(task.scene_path)
    if path.is_absolute():
        with open(path) as f:
            return Scene.from_json(json.load(f))
    text = resources.files("realm.data").joinpath(task.scene_path).read_text()
    return Scene.from_json(json.loads(text))


def load_task_set(which: str) -> list[TaskSpec]:
    """Load "base", "articulated", or "all" shipped tasks."""
    if which == "all":
        return load_task_set("base") + load_task_set("articulated")
    if which not in TASK_SETS:
        raise ValueError(f"unknown task set {which!r}")
    text = resources.files("realm.data").joinpath(f"tasks/{which}.json").read_text()
    return [TaskSpec.from_json(d) for d in json.loads(text)]


def task_by_id(task_id: str) -> TaskSpec:
    for task in load_task_set("all"):
        if task.id == task_id:
            return task
    raise KeyError(task_id)
