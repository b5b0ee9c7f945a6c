import dataclasses

import numpy as np
import pytest

from conftest import bowl, cube, make_button, make_drawer, make_scene
from realm.arm import ActionCommand, forward_kinematics, inverse_kinematics
from realm.geometry import Pose, quat_from_axis_angle
from realm.world import (
    ATTACH_APERTURE,
    GRASP_RADIUS,
    Scene,
    check_attach,
    initial_world,
    settle,
    world_step,
)


def hold_command(world, gripper):
    return ActionCommand(world.arm.q.copy(), gripper)


def world_at_pose(scene, arm_params, position, gripper=1.0):
    """World whose end-effector has been IK-placed at `position`, pointing down."""
    home_pose = forward_kinematics(arm_params.home_q, arm_params)
    target = Pose(np.asarray(position, dtype=np.float64), home_pose.orientation)
    res = inverse_kinematics(target, arm_params.home_q, arm_params)
    assert res.converged
    world = initial_world(scene, arm_params)
    arm = dataclasses.replace(world.arm, q=res.q, gripper_aperture=gripper)
    return dataclasses.replace(world, arm=arm,
                               ee_pose=forward_kinematics(res.q, arm_params))


def test_no_attachment_when_nothing_near(arm_params):
    scene = make_scene([cube()])
    world = initial_world(scene, arm_params)
    for _ in range(10):
        world = world_step(world, arm_params, hold_command(world, 0.0))
    assert world.attachment is None
    assert np.array_equal(world.scene.object_by_id("red_cube").pose.position,
                          cube().pose.position)


def test_open_gripper_never_attaches(arm_params):
    scene = make_scene([cube()])
    obj = scene.object_by_id("red_cube")
    world = world_at_pose(scene, arm_params, obj.pose.position, gripper=1.0)
    assert check_attach(world) is None


def test_close_gripper_attaches_nearby_object(arm_params):
    scene = make_scene([cube()])
    obj = scene.object_by_id("red_cube")
    near = obj.pose.position + np.array([0.01, 0.0, 0.0])
    world = world_at_pose(scene, arm_params, near, gripper=0.2)
    attach = check_attach(world)
    assert attach is not None and attach[0] == "red_cube"


def test_attach_rejects_wide_objects(arm_params):
    wide = cube("wide", side=0.12)  # wider than the gripper opening
    scene = make_scene([wide])
    world = world_at_pose(scene, arm_params, wide.pose.position, gripper=0.2)
    assert check_attach(world) is None


def test_attach_tie_breaks_on_distance_then_id(arm_params):
    a = cube("aaa", xy=(0.45, 0.012))
    b = cube("zzz", xy=(0.45, -0.012))
    scene = make_scene([a, b])
    mid = np.array([0.45, 0.0, 0.025])
    world = world_at_pose(scene, arm_params, mid, gripper=0.2)
    attach = check_attach(world)
    assert attach is not None and attach[0] == "aaa"  # equidistant, id order
    closer = cube("zzz", xy=(0.45, -0.008))
    scene = make_scene([a, closer])
    world = world_at_pose(scene, arm_params, mid, gripper=0.2)
    assert check_attach(world)[0] == "zzz"


def test_grasp_then_move_drags_object_exactly(arm_params):
    scene = make_scene([cube()])
    obj = scene.object_by_id("red_cube")
    world = world_at_pose(scene, arm_params, obj.pose.position + np.array([0.0, 0.0, 0.01]))
    # close the gripper in place
    for _ in range(6):
        world = world_step(world, arm_params, hold_command(world, 0.0))
    assert world.attachment is not None
    obj_id, grasp_t = world.attachment
    # command upward joint motion and verify rigid composition each tick
    lift_target = world.ee_pose.position + np.array([0.0, 0.0, 0.1])
    res = inverse_kinematics(Pose(lift_target, world.ee_pose.orientation),
                             world.arm.q, arm_params)
    for _ in range(20):
        world = world_step(world, arm_params, ActionCommand(res.q, 0.0))
        expected = world.ee_pose.compose(grasp_t)
        carried = world.scene.object_by_id(obj_id)
        assert np.array_equal(carried.pose.position, expected.position)
        assert np.array_equal(carried.pose.orientation, expected.orientation)
    assert world.scene.object_by_id(obj_id).pose.position[2] > 0.08


def test_release_settles_on_table(arm_params):
    scene = make_scene([cube()])
    obj = scene.object_by_id("red_cube")
    world = world_at_pose(scene, arm_params, obj.pose.position + np.array([0.0, 0.0, 0.01]))
    for _ in range(6):
        world = world_step(world, arm_params, hold_command(world, 0.0))
    assert world.attachment is not None
    lift = inverse_kinematics(
        Pose(world.ee_pose.position + np.array([0.0, 0.0, 0.12]), world.ee_pose.orientation),
        world.arm.q, arm_params)
    for _ in range(20):
        world = world_step(world, arm_params, ActionCommand(lift.q, 0.0))
    for _ in range(8):
        world = world_step(world, arm_params, hold_command(world, 1.0))
    assert world.attachment is None
    rest = world.scene.object_by_id("red_cube").pose.position
    assert rest[2] == pytest.approx(0.025)  # table + half height


def test_settle_into_receptacle():
    scene = make_scene([bowl(), cube(xy=(0.45, -0.2))])
    obj = scene.object_by_id("red_cube")
    dropped = dataclasses.replace(
        obj, pose=Pose(np.array([0.45, -0.2, 0.3]), obj.pose.orientation))
    pose = settle(dropped, scene)
    floor = scene.object_by_id("bowl").interior_floor_z()
    assert pose.position[2] == pytest.approx(floor + 0.025)


def test_settle_stacks_on_box_top():
    base = cube("base_cube", xy=(0.5, 0.1), side=0.06)
    top = cube("top_cube", xy=(0.5, 0.1), side=0.05)
    scene = make_scene([base, top])
    hovering = dataclasses.replace(
        top, pose=Pose(np.array([0.51, 0.1, 0.4]), top.pose.orientation))
    pose = settle(hovering, scene)
    assert pose.position[2] == pytest.approx(0.06 + 0.025)


def test_settle_preserves_yaw_zeroes_tilt():
    tilted = dataclasses.replace(
        cube(), pose=Pose(
            np.array([0.45, 0.0, 0.3]),
            np.array([0.9689124217106447, 0.2474039592545229, 0.0, 0.0]),  # roll 28.6 deg
        ))
    pose = settle(tilted, make_scene([cube()]))
    # roll removed: orientation is now a pure yaw rotation
    assert abs(pose.orientation[1]) < 1e-12 and abs(pose.orientation[2]) < 1e-12


def test_drawer_moves_only_when_engaged(arm_params):
    drawer = make_drawer(0.0)
    scene = make_scene(articulated=[drawer])
    handle = drawer.handle_point()
    world = world_at_pose(scene, arm_params, handle + np.array([0.0, 0.0, 0.0]), gripper=0.2)
    # pull along the slide axis
    pull = inverse_kinematics(
        Pose(world.ee_pose.position + np.array([-0.1, 0.0, 0.0]), world.ee_pose.orientation),
        world.arm.q, arm_params)
    assert pull.converged
    before = world.scene.articulated[0].position
    for _ in range(30):
        world = world_step(world, arm_params, ActionCommand(pull.q, 0.0))
    after = world.scene.articulated[0].position
    assert after > before + 0.05
    assert 0.0 <= world.scene.articulated[0].open_fraction <= 1.0

    # same motion with the gripper open leaves the drawer alone
    world2 = world_at_pose(scene, arm_params, handle, gripper=1.0)
    for _ in range(30):
        world2 = world_step(world2, arm_params, ActionCommand(pull.q, 1.0))
    assert world2.scene.articulated[0].position == before


def test_drawer_position_clamped_to_range(arm_params):
    drawer = make_drawer(0.17)
    scene = make_scene(articulated=[drawer])
    world = world_at_pose(scene, arm_params, drawer.handle_point(), gripper=0.2)
    pull = inverse_kinematics(
        Pose(world.ee_pose.position + np.array([-0.15, 0.0, 0.0]), world.ee_pose.orientation),
        world.arm.q, arm_params)
    for _ in range(40):
        world = world_step(world, arm_params, ActionCommand(pull.q, 0.0))
        art = world.scene.articulated[0]
        assert art.range[0] <= art.position <= art.range[1]
    assert world.scene.articulated[0].position == pytest.approx(0.18)


def test_toggle_requires_fresh_downward_press(arm_params):
    button = make_button()
    scene = make_scene(toggles=[button])
    above = button.base.pose.position + np.array([0.0, 0.0, 0.12])
    world = world_at_pose(scene, arm_params, above)
    press = inverse_kinematics(
        Pose(button.base.pose.position + np.array([0.0, 0.0, 0.035]),
             world.ee_pose.orientation), world.arm.q, arm_params)
    for _ in range(15):
        world = world_step(world, arm_params, ActionCommand(press.q, 1.0))
    assert world.scene.toggles[0].toggled is True
    # holding inside the region must not retrigger
    for _ in range(15):
        world = world_step(world, arm_params, ActionCommand(press.q, 1.0))
    assert world.scene.toggles[0].toggled is True
    # lift out, press again -> toggles back off
    lift = inverse_kinematics(Pose(above, world.ee_pose.orientation), world.arm.q, arm_params)
    for _ in range(15):
        world = world_step(world, arm_params, ActionCommand(lift.q, 1.0))
    for _ in range(15):
        world = world_step(world, arm_params, ActionCommand(press.q, 1.0))
    assert world.scene.toggles[0].toggled is False


def test_inventory_conserved_and_determinism(arm_params):
    scene = make_scene([cube(), bowl()])
    world_a = initial_world(scene, arm_params)
    world_b = initial_world(scene, arm_params)
    rng = np.random.Generator(np.random.PCG64(3))
    targets = arm_params.home_q + rng.uniform(-0.4, 0.4, size=(25, 7))
    for k in range(25):
        cmd = ActionCommand(targets[k], float(k % 2))
        world_a = world_step(world_a, arm_params, cmd)
        world_b = world_step(world_b, arm_params, cmd)
        assert len(world_a.scene.objects) == len(scene.objects)
        assert np.array_equal(world_a.arm.q, world_b.arm.q)
    assert world_a.step_index == 25


def test_scene_requires_unique_ids_and_two_cameras():
    with pytest.raises(ValueError):
        make_scene([cube("dup"), cube("dup")])
    scene = make_scene([cube()])
    with pytest.raises(ValueError):
        Scene(scene.objects, (), (), 0.0, scene.lights, (scene.cameras[0],))


def test_scene_json_round_trip(tmp_path):
    from realm.world import load_scene, save_scene

    scene = make_scene([cube(), bowl()], articulated=[make_drawer(0.05)],
                       toggles=[make_button(True)])
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert loaded.table_height == scene.table_height
    assert [o.id for o in loaded.objects] == [o.id for o in scene.objects]
    assert loaded.articulated[0].position == 0.05
    assert loaded.toggles[0].toggled is True
    assert np.array_equal(loaded.objects[1].pose.position, scene.objects[1].pose.position)
