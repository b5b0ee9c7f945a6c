import numpy as np
import pytest

from realm.arm import default_arm_params
from realm.geometry import Pose, pose_look_at
from realm.world import (
    ArticulatedObject,
    Camera,
    CameraIntrinsics,
    Light,
    RigidObject,
    Scene,
    ToggleObject,
)


def make_intrinsics(width=224, height=224, f=200.0):
    return CameraIntrinsics(width, height, f, f, (width - 1) / 2.0, (height - 1) / 2.0)


def make_cameras():
    external = Camera("external", pose_look_at([1.05, 0.0, 0.55], [0.45, 0.0, 0.1]),
                      make_intrinsics())
    wrist = Camera("wrist", Pose(np.array([0.0, 0.0, -0.12])), make_intrinsics())
    return (external, wrist)


def make_lights():
    return (Light(np.array([-0.3, 0.2, -1.0]), np.array([1.0, 1.0, 1.0]), 0.8),)


def table_object():
    return RigidObject("table", "box", np.array([0.9, 1.2, 0.04]), 50.0,
                       Pose(np.array([0.45, 0.0, -0.02])), np.array([0.55, 0.45, 0.35]),
                       "fixture")


def cube(obj_id="red_cube", xy=(0.45, 0.0), side=0.05, color=(0.8, 0.1, 0.1),
         role="manipulable"):
    return RigidObject(obj_id, "box", np.array([side, side, side]), 0.1,
                       Pose(np.array([xy[0], xy[1], side / 2.0])), np.array(color), role)


def bowl(obj_id="bowl", xy=(0.45, -0.2)):
    return RigidObject(obj_id, "cylinder", np.array([0.16, 0.16, 0.06]), 0.3,
                       Pose(np.array([xy[0], xy[1], 0.03])), np.array([0.2, 0.3, 0.8]),
                       "receptacle")


def make_scene(objects=(), articulated=(), toggles=()):
    return Scene(
        objects=(table_object(),) + tuple(objects),
        articulated=tuple(articulated),
        toggles=tuple(toggles),
        table_height=0.0,
        lights=make_lights(),
        cameras=make_cameras(),
    )


def make_drawer(position=0.0):
    base = RigidObject("drawer", "box", np.array([0.3, 0.26, 0.12]), 2.0,
                       Pose(np.array([0.62, 0.0, 0.06])), np.array([0.5, 0.35, 0.2]),
                       "fixture")
    return ArticulatedObject(base, np.array([-1.0, 0.0, 0.0]), (0.0, 0.18), position)


def make_button(toggled=False):
    base = RigidObject("button", "cylinder", np.array([0.06, 0.06, 0.03]), 0.2,
                       Pose(np.array([0.45, 0.15, 0.015])), np.array([0.9, 0.2, 0.2]),
                       "fixture")
    region = (np.array([-0.03, -0.03, 0.01]), np.array([0.03, 0.03, 0.06]))
    return ToggleObject(base, toggled, region)


@pytest.fixture(scope="session")
def arm_params():
    return default_arm_params()
