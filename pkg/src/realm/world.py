"""Object-level world model coupling the arm to a desk scene.

Grasping is kinematic: a closing gripper near a manipulable object attaches it
rigidly to the end-effector; opening past a threshold releases it and the
object settles straight down onto the highest supporting surface under its
center.  Prismatic drawers are driven 1:1 by an engaged end-effector, and
buttons toggle on a downward press entering their press region.  Object mass
is carried as scene data (perturbations randomize it) but does not feed back
into the joint-space arm model.

All updates are functional: `world_step` returns a new `WorldState` that
shares unchanged scene entries with its predecessor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .arm import (
    CONTROL_HZ,
    SUBSTEPS,
    ActionCommand,
    ArmParams,
    ArmState,
    forward_kinematics,
    rest_state,
    step,
)
from .geometry import Pose, quat_from_axis_angle, quat_rotate

GRASP_RADIUS = 0.04  # m, object center to grasp point
ATTACH_APERTURE = 0.35  # gripper counts as closing below this
RELEASE_APERTURE = 0.6  # attached object releases above this
GRIPPER_MAX_WIDTH = 0.08  # m, opening width at aperture 1.0 (closing onset)
DRAWER_ENGAGE_RADIUS = 0.03  # m, end-effector to handle
TOGGLE_MIN_PRESS_SPEED = 0.02  # m/s downward at press-region entry
RECEPTACLE_WALL = 0.01  # m, wall/floor thickness of open receptacles

SHAPES = ("box", "cylinder", "sphere")
ROLES = ("manipulable", "receptacle", "distractor", "fixture")


@dataclass(frozen=True)
class RigidObject:
    id: str
    shape: str  # box | cylinder | sphere
    size: np.ndarray  # full extents (m); cylinder/sphere use (d, d, h)/(d, d, d)
    mass: float  # kg
    pose: Pose
    color: np.ndarray  # RGB in [0, 1]
    role: str

    def __post_init__(self):
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if np.any(self.size <= 0) or self.mass <= 0:
            raise ValueError("size components and mass must be positive")

    @property
    def half_height(self) -> float:
        return float(self.size[2]) / 2.0

    @property
    def max_horizontal_extent(self) -> float:
        if self.shape == "box":
            return float(max(self.size[0], self.size[1]))
        return float(self.size[0])  # diameter

    def yaw(self) -> float:
        x_axis = quat_rotate(self.pose.orientation, np.array([1.0, 0.0, 0.0]))
        if abs(x_axis[0]) < 1e-12 and abs(x_axis[1]) < 1e-12:
            y_axis = quat_rotate(self.pose.orientation, np.array([0.0, 1.0, 0.0]))
            return float(np.arctan2(y_axis[1], y_axis[0]) - np.pi / 2.0)
        return float(np.arctan2(x_axis[1], x_axis[0]))

    def footprint_contains(self, point_xy) -> bool:
        """Is the horizontal point inside this object's outer footprint?"""
        delta = np.asarray(point_xy, dtype=np.float64) - self.pose.position[:2]
        if self.shape == "box":
            yaw = self.yaw()
            c, s = np.cos(-yaw), np.sin(-yaw)
            local = np.array([c * delta[0] - s * delta[1], s * delta[0] + c * delta[1]])
            return bool(np.all(np.abs(local) <= self.size[:2] / 2.0))
        return float(np.hypot(*delta)) <= float(self.size[0]) / 2.0

    def interior_contains(self, point) -> bool:
        """Is a point inside the open interior volume (receptacles only)?"""
        point = np.asarray(point, dtype=np.float64)
        delta = point[:2] - self.pose.position[:2]
        floor = self.interior_floor_z()
        rim = float(self.pose.position[2]) + self.half_height
        if not (floor <= point[2] <= rim):
            return False
        if self.shape == "box":
            yaw = self.yaw()
            c, s = np.cos(-yaw), np.sin(-yaw)
            local = np.array([c * delta[0] - s * delta[1], s * delta[0] + c * delta[1]])
            inner = self.size[:2] / 2.0 - RECEPTACLE_WALL
            return bool(np.all(np.abs(local) <= inner))
        return float(np.hypot(*delta)) <= float(self.size[0]) / 2.0 - RECEPTACLE_WALL

    def interior_floor_z(self) -> float:
        return float(self.pose.position[2]) - self.half_height + RECEPTACLE_WALL

    def top_z(self) -> float:
        return float(self.pose.position[2]) + self.half_height

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "shape": self.shape,
            "size": self.size.tolist(),
            "mass": self.mass,
            "pose": self.pose.to_json(),
            "color": self.color.tolist(),
            "role": self.role,
        }

    @staticmethod
    def from_json(d: dict) -> "RigidObject":
        return RigidObject(d["id"], d["shape"], np.array(d["size"]), float(d["mass"]),
                           Pose.from_json(d["pose"]), np.array(d["color"]), d["role"])


@dataclass(frozen=True)
class ArticulatedObject:
    """Prismatic drawer: the base rigid body slides along joint_axis."""

    base: RigidObject
    joint_axis: np.ndarray  # unit 3-vector
    range: tuple[float, float]  # (min, max) slide in m
    position: float

    def __post_init__(self):
        axis = np.asarray(self.joint_axis, dtype=np.float64)
        n = float(np.linalg.norm(axis))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("joint_axis must be a unit vector")
        object.__setattr__(self, "joint_axis", axis)
        object.__setattr__(self, "range", (float(self.range[0]), float(self.range[1])))
        if not (self.range[0] <= self.position <= self.range[1]):
            raise ValueError("position outside range")

    @property
    def open_fraction(self) -> float:
        lo, hi = self.range
        return (self.position - lo) / (hi - lo)

    def current_pose(self) -> Pose:
        return Pose(self.base.pose.position + self.joint_axis * self.position,
                    self.base.pose.orientation)

    def handle_point(self) -> np.ndarray:
        """Center of the face pointing along the slide axis, at the current slide."""
        axis = self.joint_axis
        extent = float(np.abs(axis) @ self.base.size) / 2.0
        return self.current_pose().position + axis * extent

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "joint_axis": self.joint_axis.tolist(),
                "range": list(self.range), "position": self.position}

    @staticmethod
    def from_json(d: dict) -> "ArticulatedObject":
        return ArticulatedObject(RigidObject.from_json(d["base"]),
                                 np.array(d["joint_axis"]), tuple(d["range"]),
                                 float(d["position"]))


@dataclass(frozen=True)
class ToggleObject:
    """Press button; `toggled` flips on each fresh downward press."""

    base: RigidObject
    toggled: bool
    press_region: tuple[np.ndarray, np.ndarray]  # (min, max) box in object frame

    def __post_init__(self):
        lo = np.asarray(self.press_region[0], dtype=np.float64)
        hi = np.asarray(self.press_region[1], dtype=np.float64)
        object.__setattr__(self, "press_region", (lo, hi))

    def region_contains(self, world_point) -> bool:
        local = self.base.pose.inverse().transform_point(world_point)
        lo, hi = self.press_region
        return bool(np.all(local >= lo) and np.all(local <= hi))

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "toggled": self.toggled,
                "press_region": {"min": self.press_region[0].tolist(),
                                 "max": self.press_region[1].tolist()}}

    @staticmethod
    def from_json(d: dict) -> "ToggleObject":
        return ToggleObject(RigidObject.from_json(d["base"]), bool(d["toggled"]),
                            (np.array(d["press_region"]["min"]),
                             np.array(d["press_region"]["max"])))


@dataclass(frozen=True)
class Light:
    direction: np.ndarray  # unit vector, direction the light travels
    color: np.ndarray  # RGB in [0, 1]
    intensity: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = float(np.linalg.norm(d))
        if n == 0:
            raise ValueError("light direction must be nonzero")
        object.__setattr__(self, "direction", d / n)
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64))
        if self.intensity < 0:
            raise ValueError("light intensity must be >= 0")

    def to_json(self) -> dict:
        return {"direction": self.direction.tolist(), "color": self.color.tolist(),
                "intensity": self.intensity}

    @staticmethod
    def from_json(d: dict) -> "Light":
        return Light(np.array(d["direction"]), np.array(d["color"]), float(d["intensity"]))


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.fx <= 0 or self.fy <= 0:
            raise ValueError("invalid camera intrinsics")

    def to_json(self) -> dict:
        return {"width": self.width, "height": self.height, "fx": self.fx,
                "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @staticmethod
    def from_json(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(int(d["width"]), int(d["height"]), float(d["fx"]),
                                float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True)
class Camera:
    """The camera named "wrist" stores its pose relative to the end-effector
    frame; every other camera pose is in world coordinates."""

    name: str
    pose: Pose
    intrinsics: CameraIntrinsics

    def to_json(self) -> dict:
        return {"name": self.name, "pose": self.pose.to_json(),
                "intrinsics": self.intrinsics.to_json()}

    @staticmethod
    def from_json(d: dict) -> "Camera":
        return Camera(d["name"], Pose.from_json(d["pose"]),
                      CameraIntrinsics.from_json(d["intrinsics"]))


@dataclass(frozen=True)
class Scene:
    objects: tuple[RigidObject, ...]
    articulated: tuple[ArticulatedObject, ...]
    toggles: tuple[ToggleObject, ...]
    table_height: float
    lights: tuple[Light, ...]
    cameras: tuple[Camera, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "articulated", tuple(self.articulated))
        object.__setattr__(self, "toggles", tuple(self.toggles))
        object.__setattr__(self, "lights", tuple(self.lights))
        object.__setattr__(self, "cameras", tuple(self.cameras))
        ids = [o.id for o in self.objects]
        ids += [a.base.id for a in self.articulated]
        ids += [t.base.id for t in self.toggles]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a scene")
        names = sorted(c.name for c in self.cameras)
        if names != ["external", "wrist"]:
            raise ValueError('scene must define exactly one "external" and one "wrist" camera')

    def object_by_id(self, obj_id: str) -> RigidObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def articulated_by_id(self, obj_id: str) -> ArticulatedObject:
        for a in self.articulated:
            if a.base.id == obj_id:
                return a
        raise KeyError(obj_id)

    def toggle_by_id(self, obj_id: str) -> ToggleObject:
        for t in self.toggles:
            if t.base.id == obj_id:
                return t
        raise KeyError(obj_id)

    def camera_by_name(self, name: str) -> Camera:
        for c in self.cameras:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_object(self, obj: RigidObject) -> "Scene":
        return replace(self, objects=tuple(obj if o.id == obj.id else o for o in self.objects))

    def with_articulated(self, art: ArticulatedObject) -> "Scene":
        return replace(self, articulated=tuple(
            art if a.base.id == art.base.id else a for a in self.articulated))

    def with_toggle(self, tog: ToggleObject) -> "Scene":
        return replace(self, toggles=tuple(
            tog if t.base.id == tog.base.id else t for t in self.toggles))

    def to_json(self) -> dict:
        return {
            "table_height": self.table_height,
            "objects": [o.to_json() for o in self.objects],
            "articulated": [a.to_json() for a in self.articulated],
            "toggles": [t.to_json() for t in self.toggles],
            "lights": [l.to_json() for l in self.lights],
            "cameras": [c.to_json() for c in self.cameras],
        }

    @staticmethod
    def from_json(d: dict) -> "Scene":
        return Scene(
            tuple(RigidObject.from_json(o) for o in d["objects"]),
            tuple(ArticulatedObject.from_json(a) for a in d.get("articulated", [])),
            tuple(ToggleObject.from_json(t) for t in d.get("toggles", [])),
            float(d["table_height"]),
            tuple(Light.from_json(l) for l in d["lights"]),
            tuple(Camera.from_json(c) for c in d["cameras"]),
        )


def load_scene(path) -> Scene:
    with open(path) as f:
        return Scene.from_json(json.load(f))


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        json.dump(scene.to_json(), f, indent=1)
        f.write("\n")


@dataclass(frozen=True)
class WorldState:
    arm: ArmState
    scene: Scene
    attachment: Optional[tuple[str, Pose]]  # (object id, grasp transform)
    step_index: int
    ee_pose: Pose  # cached forward kinematics of arm.q

    def attached_object(self) -> Optional[RigidObject]:
        if self.attachment is None:
            return None
        return self.scene.object_by_id(self.attachment[0])


def initial_world(scene: Scene, params: ArmParams) -> WorldState:
    arm = rest_state(params)
    return WorldState(arm, scene, None, 0, forward_kinematics(arm.q, params))


def check_attach(world: WorldState) -> Optional[tuple[str, Pose]]:
    """Attachment rule: closing gripper, manipulable object within the grasp
    radius, and the object narrow enough for the gripper at closing onset
    (taken as the fully-open width).  Nearest candidate wins; ties break on id.
    """
    if world.arm.gripper_aperture >= ATTACH_APERTURE:
        return None
    grasp_point = world.ee_pose.position
    best: Optional[tuple[float, str]] = None
    for obj in world.scene.objects:
        if obj.role != "manipulable":
            continue
        if obj.max_horizontal_extent >= GRIPPER_MAX_WIDTH:
            continue
        dist = float(np.linalg.norm(obj.pose.position - grasp_point))
        if dist > GRASP_RADIUS:
            continue
        key = (dist, obj.id)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    obj = world.scene.object_by_id(best[1])
    grasp_transform = world.ee_pose.inverse().compose(obj.pose)
    return (obj.id, grasp_transform)


def settle(obj: RigidObject, scene: Scene) -> Pose:
    """Drop straight down onto the highest supporting surface whose footprint
    contains the object center; roll/pitch zero out, yaw is preserved."""
    center = obj.pose.position
    support = scene.table_height
    for other in scene.objects:
        if other.id == obj.id or other.shape == "sphere":
            continue
        if other.role == "receptacle" and other.interior_contains(
            np.array([center[0], center[1], other.interior_floor_z()])
        ):
            z = other.interior_floor_z()
        elif other.footprint_contains(center[:2]):
            z = other.top_z()
        else:
            continue
        if z <= center[2] and z > support:
            support = z
    rest_z = support + obj.half_height
    yaw = obj.yaw()
    orientation = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    return Pose(np.array([center[0], center[1], rest_z]), orientation)


def world_step(world: WorldState, params: ArmParams, command: ActionCommand) -> WorldState:
    """Advance one control tick: arm substeps, then grasp/drawer/toggle rules."""
    arm = world.arm
    dt = 1.0 / (CONTROL_HZ * SUBSTEPS)
    for _ in range(SUBSTEPS):
        arm = step(arm, params, command, dt)
    old_ee = world.ee_pose
    new_ee = forward_kinematics(arm.q, params)

    scene = world.scene
    attachment = world.attachment

    if attachment is not None and arm.gripper_aperture > RELEASE_APERTURE:
        obj_id, grasp_t = attachment
        obj = scene.object_by_id(obj_id)
        carried = replace(obj, pose=new_ee.compose(grasp_t))
        scene = scene.with_object(replace(carried, pose=settle(carried, scene)))
        attachment = None
    elif attachment is not None:
        obj_id, grasp_t = attachment
        obj = scene.object_by_id(obj_id)
        scene = scene.with_object(replace(obj, pose=new_ee.compose(grasp_t)))
    else:
        interim = WorldState(arm, scene, None, world.step_index, new_ee)
        attachment = check_attach(interim)

    # prismatic drawers: an engaged gripper drives the slide 1:1
    if attachment is None and arm.gripper_aperture < ATTACH_APERTURE:
        for art in scene.articulated:
            if float(np.linalg.norm(old_ee.position - art.handle_point())) <= DRAWER_ENGAGE_RADIUS:
                slide = float((new_ee.position - old_ee.position) @ art.joint_axis)
                new_pos = min(art.range[1], max(art.range[0], art.position + slide))
                if new_pos != art.position:
                    scene = scene.with_articulated(replace(art, position=new_pos))

    # toggle buttons: fresh downward entry into the press region
    down_speed = float((old_ee.position[2] - new_ee.position[2]) * CONTROL_HZ)
    for tog in scene.toggles:
        if (
            tog.region_contains(new_ee.position)
            and not tog.region_contains(old_ee.position)
            and down_speed > TOGGLE_MIN_PRESS_SPEED
        ):
            scene = scene.with_toggle(replace(tog, toggled=not tog.toggled))

    return WorldState(arm, scene, attachment, world.step_index + 1, new_ee)
