"""Deterministic software rasterizer for scene observations.

Flat-shaded triangles with a z-buffer and pinhole projection; Lambertian
shading from directional scene lights plus a fixed ambient term.  Shading is
linear and only quantized to 8 bits at the very end, so the light-linearity
properties hold exactly on the pre-clip image returned by `render_linear`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arm import ArmParams, forward_kinematics, joint_frames
from .geometry import Pose, quat_to_matrix
from .world import Camera, CameraIntrinsics, Scene

AMBIENT = 0.15
NEAR_PLANE = 0.05  # m
ARM_LINK_THICKNESS = 0.06  # m, square cross-section of rendered links
ARM_COLOR = np.array([0.82, 0.82, 0.85])
FINGER_COLOR = np.array([0.25, 0.25, 0.28])


@dataclass(frozen=True)
class Image:
    """Row-major RGB8 raster."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError("pixel buffer must have shape (height, width, 3)")
        object.__setattr__(self, "pixels", px)

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()

    @staticmethod
    def from_bytes(width: int, height: int, data: bytes) -> "Image":
        if len(data) != width * height * 3:
            raise ValueError("pixel byte length must equal width*height*3")
        px = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return Image(width, height, px.copy())


def save_png(image: Image, path) -> None:
    from PIL import Image as PILImage

    PILImage.fromarray(image.pixels, mode="RGB").save(path, format="PNG")


# --- primitive meshes --------------------------------------------------------


def _box_mesh(size) -> tuple[np.ndarray, np.ndarray]:
    sx, sy, sz = np.asarray(size, dtype=np.float64) / 2.0
    verts = np.array(
        [
            [-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
            [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],
            [1, 2, 6], [1, 6, 5],
            [2, 3, 7], [2, 7, 6],
            [3, 0, 4], [3, 4, 7],
        ]
    )
    return verts, faces


def _cylinder_mesh(diameter: float, height: float, segments: int = 16):
    r = diameter / 2.0
    hz = height / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.full((segments, 1), -hz)], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), hz)], axis=1)
    verts = np.concatenate([bottom, top, [[0.0, 0.0, -hz]], [[0.0, 0.0, hz]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([i, j, segments + i])
        faces.append([j, segments + j, segments + i])
        faces.append([cb, j, i])
        faces.append([ct, segments + i, segments + j])
    return verts, np.array(faces)


def _sphere_mesh(diameter: float, stacks: int = 6, slices: int = 10):
    r = diameter / 2.0
    verts = [[0.0, 0.0, r]]
    for i in range(1, stacks):
        phi = np.pi * i / stacks
        for j in range(slices):
            theta = 2.0 * np.pi * j / slices
            verts.append([r * np.sin(phi) * np.cos(theta),
                          r * np.sin(phi) * np.sin(theta),
                          r * np.cos(phi)])
    verts.append([0.0, 0.0, -r])
    last = len(verts) - 1
    faces = []
    for j in range(slices):
        faces.append([0, 1 + j, 1 + (j + 1) % slices])
    for i in range(stacks - 2):
        base = 1 + i * slices
        for j in range(slices):
            a = base + j
            b = base + (j + 1) % slices
            faces.append([a, a + slices, b])
            faces.append([b, a + slices, b + slices])
    base = 1 + (stacks - 2) * slices
    for j in range(slices):
        faces.append([last, base + (j + 1) % slices, base + j])
    return np.array(verts), np.array(faces)


def _segment_box(p0, p1, thickness: float):
    """Oriented box mesh spanning the segment p0 -> p1."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    z = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    verts, faces = _box_mesh((thickness, thickness, length))
    rot = np.column_stack([x, y, z])
    world = verts @ rot.T + (p0 + p1) / 2.0
    return world, faces


def _object_mesh(shape: str, size) -> tuple[np.ndarray, np.ndarray]:
    if shape == "box":
        return _box_mesh(size)
    if shape == "cylinder":
        return _cylinder_mesh(float(size[0]), float(size[2]))
    if shape == "sphere":
        return _sphere_mesh(float(size[0]))
    raise ValueError(f"unknown shape {shape!r}")


def _scene_triangles(scene: Scene, arm_q, params: ArmParams, gripper_aperture: float):
    """All world-space triangles with their base colors, in a fixed order."""
    batches = []

    def add(verts, faces, pose: Pose | None, color):
        if pose is not None:
            rot = quat_to_matrix(pose.orientation)
            verts = verts @ rot.T + pose.position
        batches.append((verts[faces], np.asarray(color, dtype=np.float64)))

    for obj in scene.objects:
        v, f = _object_mesh(obj.shape, obj.size)
        add(v, f, obj.pose, obj.color)
    for art in scene.articulated:
        v, f = _object_mesh(art.base.shape, art.base.size)
        add(v, f, art.current_pose(), art.base.color)
    for tog in scene.toggles:
        v, f = _object_mesh(tog.base.shape, tog.base.size)
        add(v, f, tog.base.pose, tog.base.color)

    frames = joint_frames(arm_q, params)
    origins = [np.zeros(3)] + [t[:3, 3] for t in frames]
    for p0, p1 in zip(origins[:-1], origins[1:]):
        if np.linalg.norm(p1 - p0) < 0.01:
            continue
        v, f = _segment_box(p0, p1, ARM_LINK_THICKNESS)
        add(v, f, None, ARM_COLOR)
    ee = frames[-1]
    tool_x, tool_z = ee[:3, 0], ee[:3, 2]
    grasp = ee[:3, 3]
    half_gap = 0.004 + 0.036 * float(gripper_aperture)
    for side in (-1.0, 1.0):
        center = grasp - 0.025 * tool_z + side * half_gap * tool_x
        v, f = _box_mesh((0.012, 0.012, 0.06))
        rot = np.column_stack([tool_x, np.cross(tool_z, tool_x), tool_z])
        add(v @ rot.T + center, f, None, FINGER_COLOR)
    return batches


def _shade(normal, color, camera_pos, centroid, lights) -> np.ndarray:
    """Two-sided flat Lambertian shading, pre-clip linear RGB."""
    view = camera_pos - centroid
    if float(normal @ view) < 0.0:
        normal = -normal
    out = np.full(3, AMBIENT) * color
    for light in lights:
        lambert = max(0.0, -float(normal @ light.direction))
        out = out + color * light.color * (light.intensity * lambert)
    return out


def _clip_near(poly: np.ndarray) -> np.ndarray:
    """Clip a camera-space polygon against z = NEAR_PLANE."""
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        a_in, b_in = a[2] >= NEAR_PLANE, b[2] >= NEAR_PLANE
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (NEAR_PLANE - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    return np.array(out) if out else np.zeros((0, 3))


def resolve_camera(scene: Scene, camera_name: str, arm_q, params: ArmParams) -> tuple[Camera, Pose]:
    cam = scene.camera_by_name(camera_name)
    if camera_name == "wrist":
        ee = forward_kinematics(arm_q, params)
        return cam, ee.compose(cam.pose)
    return cam, cam.pose


def render_linear(
    scene: Scene,
    arm_q,
    camera_name: str,
    params: ArmParams,
    gripper_aperture: float = 1.0,
) -> np.ndarray:
    """Pre-clip linear float image, shape (h, w, 3); `render` quantizes it."""
    cam, cam_pose = resolve_camera(scene, camera_name, arm_q, params)
    intr = cam.intrinsics
    w, h = intr.width, intr.height
    rot_wc = quat_to_matrix(cam_pose.orientation).T  # world -> camera
    t = cam_pose.position

    img = np.full((h, w, 3), AMBIENT, dtype=np.float64)
    inv_z = np.zeros((h, w), dtype=np.float64)  # 0 = infinitely far

    for verts_w, color in _scene_triangles(scene, arm_q, params, gripper_aperture):
        cam_tris = (verts_w - t) @ rot_wc.T  # (n_tri, 3, 3)
        world_tris = verts_w
        for tri_cam, tri_world in zip(cam_tris, world_tris):
            if np.all(tri_cam[:, 2] < NEAR_PLANE):
                continue
            normal = np.cross(tri_world[1] - tri_world[0], tri_world[2] - tri_world[0])
            nn = float(np.linalg.norm(normal))
            if nn < 1e-15:
                continue
            shade = _shade(normal / nn, color, t, tri_world.mean(axis=0), scene.lights)
            poly = _clip_near(tri_cam) if np.any(tri_cam[:, 2] < NEAR_PLANE) else tri_cam
            if len(poly) < 3:
                continue
            uv = np.empty((len(poly), 2))
            uv[:, 0] = intr.fx * poly[:, 0] / poly[:, 2] + intr.cx
            uv[:, 1] = intr.fy * poly[:, 1] / poly[:, 2] + intr.cy
            invz = 1.0 / poly[:, 2]
            for k in range(1, len(poly) - 1):
                _raster_triangle(img, inv_z, uv[[0, k, k + 1]], invz[[0, k, k + 1]], shade)
    return img


def _raster_triangle(img, inv_z_buf, uv, invz, shade) -> None:
    h, w = inv_z_buf.shape
    x0 = max(0, int(np.floor(uv[:, 0].min())))
    x1 = min(w - 1, int(np.ceil(uv[:, 0].max())))
    y0 = max(0, int(np.floor(uv[:, 1].min())))
    y1 = min(h - 1, int(np.ceil(uv[:, 1].max())))
    if x0 > x1 or y0 > y1:
        return
    (ax, ay), (bx, by), (cx, cy) = uv
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0.0:
        return
    xs = np.arange(x0, x1 + 1) + 0.5
    ys = np.arange(y0, y1 + 1) + 0.5
    px, py = np.meshgrid(xs, ys)
    w0 = ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) / area
    w1 = ((cx - bx) * (py - by) - (cy - by) * (px - bx)) / area
    w2 = 1.0 - w0 - w1
    # barycentric relative to vertices: weight of C is w0', of A is w1', B is w2'
    mask = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    if not mask.any():
        return
    interp_invz = w1 * invz[0] + w2 * invz[1] + w0 * invz[2]
    patch = inv_z_buf[y0 : y1 + 1, x0 : x1 + 1]
    closer = mask & (interp_invz > patch)
    if not closer.any():
        return
    patch[closer] = interp_invz[closer]
    img_patch = img[y0 : y1 + 1, x0 : x1 + 1]
    img_patch[closer] = shade


def render(
    scene: Scene,
    arm_q,
    camera_name: str,
    params: ArmParams,
    gripper_aperture: float = 1.0,
) -> Image:
    """Rasterize one camera view; deterministic for identical inputs."""
    cam = scene.camera_by_name(camera_name)  # raises KeyError for unknown names
    linear = render_linear(scene, arm_q, camera_name, params, gripper_aperture)
    px = np.clip(np.rint(linear * 255.0), 0.0, 255.0).astype(np.uint8)
    return Image(cam.intrinsics.width, cam.intrinsics.height, px)


def apply_photometric(image: Image, contrast: float, blur_sigma: float) -> Image:
    """Contrast scaling about mid-gray followed by Gaussian blur.

    (contrast=1, blur_sigma=0) is the exact identity.
    """
    if contrast <= 0:
        raise ValueError("contrast must be positive")
    if blur_sigma < 0:
        raise ValueError("blur_sigma must be >= 0")
    if contrast == 1.0 and blur_sigma == 0.0:
        return Image(image.width, image.height, image.pixels.copy())
    data = image.pixels.astype(np.float64)
    if contrast != 1.0:
        data = 128.0 + contrast * (data - 128.0)
        data = np.clip(data, 0.0, 255.0)
    if blur_sigma > 0.0:
        radius = int(np.ceil(3.0 * blur_sigma))
        offsets = np.arange(-radius, radius + 1)
        kernel = np.exp(-0.5 * (offsets / blur_sigma) ** 2)
        kernel /= kernel.sum()
        padded = np.pad(data, ((radius, radius), (0, 0), (0, 0)), mode="edge")
        data = sum(kernel[i] * padded[i : i + image.height] for i in range(len(kernel)))
        padded = np.pad(data, ((0, 0), (radius, radius), (0, 0)), mode="edge")
        data = sum(kernel[i] * padded[:, i : i + image.width] for i in range(len(kernel)))
    px = np.clip(np.rint(data), 0.0, 255.0).astype(np.uint8)
    return Image(image.width, image.height, px)
