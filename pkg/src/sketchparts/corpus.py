"""Procedural corpus of part-labelled figures.

Each category is a parametric template: a body plus appendages placed
around it, rasterized straight onto the label grid. The figure's facing
direction puts the "front" part (head, windows, nose) along the pose
vector and the tail opposite, so pose stays recoverable from the part
layout alone. A flat-gray synthetic photo accompanies every label map;
sketchifying that pair produces the training sketch.

Dataset layout on disk:

    <root>/taxonomy.tax
    <root>/<category>/<id>.sketch.pgm
    <root>/<category>/<id>.labels.pgm
    <root>/poses.csv            # rows: relative sketch path,pose
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import PairedSample, sketchify
from .autograd import make_rng
from .errors import ConfigError
from .imaging import LabelMap, Raster
from .pgm import read_pgm, write_pgm
from .poses import POSES, direction
from .taxonomy import Taxonomy, load_taxonomy

DEFAULT_TAXONOMY_TEXT = """\
super Small Animals
cat cat : head, body, leg, tail
cat dog : head, body, leg, tail
super Large Animals
cat horse : head, body, leg, tail
cat cow : head, body, leg, tail
super Four Wheelers
cat car : body, wheel, window
cat bus : body, wheel, window
super Flying Things
cat airplane : body, wing, tail
cat bird : body, wing, tail
"""

BACKGROUND_GRAY = 248


@dataclass(frozen=True)
class CorpusSpec:
    taxonomy: Taxonomy
    per_category: int
    seed: int
    image_size: int = 128
    categories: tuple = ()  # empty means every taxonomy category

    def __post_init__(self):
        if self.per_category < 1:
            raise ConfigError(f"per_category must be positive, got {self.per_category}")
        if self.image_size < 32:
            raise ConfigError(f"image size {self.image_size} is too small to draw on")

    def category_list(self):
        cats = list(self.categories) if self.categories else list(self.taxonomy.categories)
        for c in cats:
            if c not in TEMPLATES:
                raise ConfigError(f"no figure template for category {c!r}")
            self.taxonomy.branch_of(c)  # raises for categories outside the taxonomy
        return cats


# ---------------------------------------------------------------------------
# mask primitives


def _grid(size):
    return np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64))


def _ellipse(jj, ii, cx, cy, rx, ry, tilt=0.0, wobble=None, power=2.0):
    dx, dy = jj - cx, ii - cy
    if tilt:
        c, s = math.cos(tilt), math.sin(tilt)
        dx, dy = c * dx + s * dy, -s * dx + c * dy
    x, y = dx / rx, dy / ry
    rho = (np.abs(x) ** power + np.abs(y) ** power) ** (1.0 / power)
    lim = 1.0
    if wobble is not None:
        amp, freq, phase = wobble
        lim = 1.0 + amp * np.sin(freq * np.arctan2(y, x) + phase)
    return rho <= lim


def _box(jj, ii, cx, cy, rx, ry, tilt=0.0):
    # superellipse of power 4 reads as a rounded rectangle
    return _ellipse(jj, ii, cx, cy, rx, ry, tilt=tilt, power=4.0)


def _capsule(jj, ii, p0, p1, half_width):
    (x0, y0), (x1, y1) = p0, p1
    vx, vy = x1 - x0, y1 - y0
    norm2 = vx * vx + vy * vy
    if norm2 == 0:
        t = np.zeros_like(jj)
    else:
        t = np.clip(((jj - x0) * vx + (ii - y0) * vy) / norm2, 0.0, 1.0)
    dist = np.hypot(jj - (x0 + t * vx), ii - (y0 + t * vy))
    return dist <= half_width


def _ellipse_radius_along(rx, ry, ux, uy):
    return 1.0 / math.hypot(ux / rx, uy / ry)


# ---------------------------------------------------------------------------
# figure templates; each returns [(part name, bool mask), ...] in draw order


def _animal(size, pose, rng, p):
    jj, ii = _grid(size)
    u = size / 128.0
    ux, uy = direction(pose)
    scale = u * rng.uniform(0.94, 1.06)
    cx = size * 0.5 - ux * size * 0.055 + rng.uniform(-3, 3) * u
    cy = size * 0.52 - uy * size * 0.055 + rng.uniform(-3, 3) * u

    brx = p["body_rx"] * scale * rng.uniform(0.95, 1.05)
    bry = p["body_ry"] * scale * rng.uniform(0.95, 1.05)
    wob = (rng.uniform(0.015, 0.04), rng.integers(2, 5), rng.uniform(0, 2 * math.pi))
    body = _ellipse(jj, ii, cx, cy, brx, bry, wobble=wob)

    # head sits along the facing direction, slightly overlapping the body
    jit = math.radians(rng.uniform(-8, 8))
    hx, hy = math.cos(jit) * ux - math.sin(jit) * uy, math.sin(jit) * ux + math.cos(jit) * uy
    hr = p["head_r"] * scale * rng.uniform(0.95, 1.05)
    reach = _ellipse_radius_along(brx, bry, hx, hy) + hr * 0.55
    head = _ellipse(jj, ii, cx + hx * reach, cy + hy * reach, hr, hr * 0.92, wobble=wob)

    legs = np.zeros_like(body)
    leg_len = p["leg_len"] * scale
    leg_hw = p["leg_w"] * scale / 2.0
    for fx in (-0.62, -0.22, 0.22, 0.62):
        x0 = cx + fx * brx
        y0 = cy + bry * 0.55
        lean = rng.uniform(-0.12, 0.12)
        legs |= _capsule(jj, ii, (x0, y0), (x0 + lean * leg_len, y0 + leg_len), leg_hw)

    # tail leaves the rear and sweeps to the side of the facing axis
    tx, ty = -hx, -hy
    reach_t = _ellipse_radius_along(brx, bry, tx, ty)
    t0 = (cx + tx * reach_t * 0.9, cy + ty * reach_t * 0.65)
    sweep = rng.uniform(0.45, 0.75) * (1 if rng.random() < 0.5 else -1)
    tlen = p["tail_len"] * scale
    t1 = (t0[0] + (tx - ty * sweep) * tlen * 0.8, t0[1] + (ty + tx * sweep) * tlen * 0.8)
    tail = _capsule(jj, ii, t0, t1, p["tail_w"] * scale / 2.0)

    # tail after legs so back views keep it visible
    return [("body", body), ("leg", legs), ("tail", tail), ("head", head)]


def _vehicle(size, pose, rng, p):
    jj, ii = _grid(size)
    u = size / 128.0
    ux, uy = direction(pose)
    scale = u * rng.uniform(0.94, 1.06)
    cx = size * 0.5 + rng.uniform(-3, 3) * u
    cy = size * 0.54 + rng.uniform(-3, 3) * u

    # facing north/south shows the narrow end of the vehicle
    wf = 0.55 + 0.45 * abs(ux)
    brx = p["body_rx"] * wf * scale * rng.uniform(0.96, 1.04)
    bry = p["body_ry"] * scale * rng.uniform(0.96, 1.04)
    body = _box(jj, ii, cx, cy, brx, bry)

    wheels = np.zeros_like(body)
    wr = p["wheel_r"] * scale * rng.uniform(0.95, 1.05)
    n_wheels = p["wheels"] if abs(ux) > 0.5 else 2
    span = brx - wr * 1.15
    for k in range(n_wheels):
        frac = -1.0 if n_wheels == 1 else -1.0 + 2.0 * k / (n_wheels - 1)
        wheels |= _ellipse(jj, ii, cx + frac * span, cy + bry * 0.92, wr, wr)

    # window cluster hangs toward the rear, away from the facing direction
    windows = np.zeros_like(body)
    win_r = p["win_r"] * scale
    wx = cx - ux * brx * 0.38
    wy = cy - bry * 0.32 - uy * bry * 0.25
    n_win = p["windows"] if abs(ux) > 0.5 else 1
    spread = min(brx * 0.55, (n_win - 1) * win_r * 1.4) if n_win > 1 else 0.0
    for k in range(n_win):
        frac = 0.0 if n_win == 1 else -1.0 + 2.0 * k / (n_win - 1)
        windows |= _box(jj, ii, wx + frac * spread, wy, win_r, win_r * 0.9)

    return [("body", body), ("wheel", wheels), ("window", windows)]


def _flyer(size, pose, rng, p):
    jj, ii = _grid(size)
    u = size / 128.0
    ux, uy = direction(pose)
    theta = math.atan2(uy, ux)
    scale = u * rng.uniform(0.94, 1.06)
    cx = size * 0.5 - ux * size * 0.03 + rng.uniform(-3, 3) * u
    cy = size * 0.5 - uy * size * 0.03 + rng.uniform(-3, 3) * u

    blen = p["body_len"] * scale * rng.uniform(0.95, 1.05)
    bw = p["body_w"] * scale * rng.uniform(0.95, 1.05)
    wob = (rng.uniform(0.01, 0.03), rng.integers(2, 4), rng.uniform(0, 2 * math.pi))
    body = _ellipse(jj, ii, cx, cy, blen, bw, tilt=theta, wobble=wob, power=p["nose"])

    sweep = math.radians(p["wing_sweep"] + rng.uniform(-6, 6))
    wings = _ellipse(
        jj,
        ii,
        cx + ux * blen * 0.08,
        cy + uy * blen * 0.08,
        p["wing_span"] * scale,
        p["wing_w"] * scale,
        tilt=theta + math.pi / 2 + sweep,
        power=3.0,
    )

    tail = _ellipse(
        jj,
        ii,
        cx - ux * blen * 0.95,
        cy - uy * blen * 0.95,
        p["tail_span"] * scale,
        p["tail_w"] * scale,
        tilt=theta + math.pi / 2,
        power=3.0,
    )

    # body drawn last so the wing and tail bars split into the two halves
    # that stick out on either side
    return [("wing", wings), ("tail", tail), ("body", body)]


TEMPLATES = {
    "cat": (_animal, {"body_rx": 28, "body_ry": 16, "head_r": 13, "leg_len": 19, "leg_w": 13, "tail_len": 22, "tail_w": 11}),
    "dog": (_animal, {"body_rx": 31, "body_ry": 17, "head_r": 14, "leg_len": 23, "leg_w": 14, "tail_len": 18, "tail_w": 12}),
    "fox": (_animal, {"body_rx": 29, "body_ry": 15, "head_r": 11, "leg_len": 18, "leg_w": 12, "tail_len": 26, "tail_w": 15}),
    "horse": (_animal, {"body_rx": 35, "body_ry": 19, "head_r": 14, "leg_len": 28, "leg_w": 13, "tail_len": 20, "tail_w": 12}),
    "cow": (_animal, {"body_rx": 37, "body_ry": 22, "head_r": 16, "leg_len": 22, "leg_w": 15, "tail_len": 17, "tail_w": 11}),
    "car": (_vehicle, {"body_rx": 40, "body_ry": 15, "wheel_r": 11, "wheels": 2, "win_r": 8, "windows": 2}),
    "bus": (_vehicle, {"body_rx": 46, "body_ry": 20, "wheel_r": 10, "wheels": 3, "win_r": 7, "windows": 4}),
    "airplane": (_flyer, {"body_len": 42, "body_w": 11, "nose": 1.6, "wing_span": 40, "wing_w": 9, "wing_sweep": 18, "tail_span": 18, "tail_w": 7}),
    "bird": (_flyer, {"body_len": 30, "body_w": 14, "nose": 2.0, "wing_span": 34, "wing_w": 12, "wing_sweep": 38, "tail_span": 13, "tail_w": 9}),
}


def draw_figure(category, pose, rng, size, part_ids):
    """Rasterize one figure. Returns (photo, labels) with branch part ids."""
    if category not in TEMPLATES:
        raise ConfigError(f"no figure template for category {category!r}")
    template, preset = TEMPLATES[category]
    parts = template(size, pose, rng, preset)
    labels = np.zeros((size, size), dtype=np.uint8)
    photo = np.full((size, size), BACKGROUND_GRAY, dtype=np.uint8)
    for name, mask in parts:
        if name not in part_ids:
            raise ConfigError(f"template part {name!r} missing from id table {part_ids}")
        pid = part_ids[name]
        labels[mask] = pid
        photo[mask] = max(40, 215 - 30 * pid)
    return Raster(photo), LabelMap(labels)


def make_sample(category, pose, rng, size, taxonomy):
    photo, labels = draw_figure(category, pose, rng, size, taxonomy.category_part_ids(category))
    sketch = sketchify(photo, labels)
    return PairedSample(sketch=sketch, labels=labels, category=category, pose=pose)


def gen_corpus(spec, root):
    """Write the dataset under `root`; same spec and seed give identical bytes."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "taxonomy.tax").write_text(spec.taxonomy.to_text(), encoding="utf-8")
    rows = []
    for ci, category in enumerate(spec.category_list()):
        (root / category).mkdir(exist_ok=True)
        for i in range(spec.per_category):
            rng = make_rng((spec.seed, ci, i))
            pose = POSES[int(rng.integers(0, len(POSES)))]
            sample = make_sample(category, pose, rng, spec.image_size, spec.taxonomy)
            stem = f"{i:04d}"
            write_pgm(root / category / f"{stem}.sketch.pgm", sample.sketch.pixels)
            write_pgm(root / category / f"{stem}.labels.pgm", sample.labels.labels)
            rows.append((f"{category}/{stem}.sketch.pgm", pose))
    with open(root / "poses.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["relative_path", "pose"])
        writer.writerows(rows)
    return [r for r, _ in rows]


def load_corpus(root, taxonomy=None):
    """Read a dataset directory back into PairedSamples (sorted by path)."""
    root = Path(root)
    if taxonomy is None:
        taxonomy = load_taxonomy((root / "taxonomy.tax").read_text(encoding="utf-8"))
    poses = {}
    with open(root / "poses.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for rel, pose in reader:
            poses[rel] = pose
    samples = []
    for rel in sorted(poses):
        sketch_path = root / rel
        labels_path = root / rel.replace(".sketch.pgm", ".labels.pgm")
        category = Path(rel).parent.name
        samples.append(
            PairedSample(
                sketch=Raster(read_pgm(sketch_path)),
                labels=LabelMap(read_pgm(labels_path)),
                category=category,
                pose=poses[rel],
            )
        )
    return samples, taxonomy
