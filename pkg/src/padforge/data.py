"""Synthetic fingerprint corpus (licensed-data stand-in), manifest I/O,
and protocol-aware train/test split builders.

Live images are oriented sinusoidal ridge patterns (smoothly varying
orientation field, 0.08-0.12 cycles/pixel) with pore speckle, passed
through a per-sensor gamma/noise transform. Spoof images share the ridge
base and get a per-material degradation (blur, contrast compression, blob
dropout). Everything is deterministic per (seed, sample id).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np

from . import pgm
from .model import LIVE, SPOOF, ConfigError

MATERIAL_NONE = "none"

# fixed degradation recipes:
# (blur_sigma, contrast_factor, dropout_density, brightness_shift)
MATERIAL_RECIPES = {
    "gelatine": (1.0, 0.70, 0.00015, 0.07),
    "woodglue": (1.7, 0.55, 0.00040, 0.10),
    "latex": (0.7, 0.80, 0.00080, 0.05),
    "ecoflex": (1.3, 0.65, 0.00025, 0.08),
    "silicone": (0.9, 0.75, 0.00055, 0.06),
    "playdoh": (2.0, 0.50, 0.00010, 0.09),
}

# fixed capture profiles: (gamma, additive_noise_sigma)
SENSOR_PROFILES = {
    "alpha": (0.85, 0.020),
    "beta": (1.25, 0.035),
    "gamma": (1.00, 0.050),
    "delta": (0.70, 0.015),
}


def _hash_rng(*parts):
    digest = hashlib.blake2s(":".join(str(p) for p in parts).encode()).digest()[:8]
    return np.random.default_rng(int.from_bytes(digest, "little"))


def material_recipe(name):
    if name in MATERIAL_RECIPES:
        return MATERIAL_RECIPES[name]
    r = _hash_rng("material-recipe", name)
    return (r.uniform(0.6, 2.0), r.uniform(0.5, 0.8), r.uniform(0.0001, 0.0008),
            r.uniform(0.04, 0.10))


def sensor_profile(name):
    if name in SENSOR_PROFILES:
        return SENSOR_PROFILES[name]
    r = _hash_rng("sensor-profile", name)
    return (r.uniform(0.7, 1.3), r.uniform(0.015, 0.05))


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (H, W) in [0, 1]
    label: str
    sensor: str
    material: str = MATERIAL_NONE


@dataclass
class CorpusSpec:
    n_live: int = 1000
    n_spoof_per_material: int = 200
    sensors: list = field(default_factory=lambda: ["alpha", "beta"])
    materials: list = field(default_factory=lambda: ["gelatine", "woodglue", "latex"])
    image_size: int = 56
    seed: int = 0

    def __post_init__(self):
        if not self.sensors or not self.materials:
            raise ConfigError("need at least one sensor and one material")
        if self.image_size < 32:
            raise ConfigError(f"image_size {self.image_size} too small (need >= 32)")

    def to_dict(self):
        return {"n_live": self.n_live, "n_spoof_per_material": self.n_spoof_per_material,
                "sensors": list(self.sensors), "materials": list(self.materials),
                "image_size": self.image_size, "seed": self.seed}


# ---------------------------------------------------------------------------
# image synthesis

def _gaussian_blur(img, sigma):
    if sigma <= 0:
        return img
    r = max(1, int(round(3 * sigma)))
    k = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    k /= k.sum()
    for axis in (0, 1):
        moved = np.moveaxis(img, axis, 0)
        padded = np.pad(moved, ((r, r), (0, 0)), mode="reflect")
        win = np.lib.stride_tricks.sliding_window_view(padded, 2 * r + 1, axis=0)
        img = np.moveaxis(win @ k, 0, axis)
    return img


def ridge_base(size, rng):
    """Sinusoidal ridge flow with a smoothly varying orientation field."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    yn, xn = yy / size, xx / size
    theta0 = rng.uniform(0, np.pi)
    theta = theta0 \
        + 0.35 * np.sin(2 * np.pi * (rng.uniform(0.5, 1.5) * xn + rng.random())) \
        + 0.35 * np.sin(2 * np.pi * (rng.uniform(0.5, 1.5) * yn + rng.random()))
    freq = rng.uniform(0.08, 0.12)
    phase = rng.uniform(0, 2 * np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    img = 0.5 + 0.45 * np.sin(2 * np.pi * freq * u + phase)
    # pore speckle: sparse bright pits along the ridges
    n_pores = max(1, int(0.004 * size * size))
    py = rng.integers(0, size, n_pores)
    px = rng.integers(0, size, n_pores)
    img[py, px] = np.minimum(1.0, img[py, px] + rng.uniform(0.3, 0.6, n_pores))
    return np.clip(img, 0.0, 1.0)


def _degrade(img, material, rng):
    blur_sigma, contrast, dropout, brightness = material_recipe(material)
    img = _gaussian_blur(img, blur_sigma)
    img = 0.5 + brightness + contrast * (img - 0.5)
    size = img.shape[0]
    n_blobs = rng.poisson(dropout * size * size)
    if n_blobs:
        yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        for _ in range(n_blobs):
            cy, cx = rng.uniform(0, size, 2)
            rad = rng.uniform(1.5, 4.0)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
            img[mask] = 0.5
    return img


def _capture(img, sensor, rng):
    gamma, noise = sensor_profile(sensor)
    img = np.clip(img, 0.0, 1.0) ** gamma
    img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_image(sample_id, label, sensor, material, size, seed):
    rng = _hash_rng("sample", seed, sample_id)
    img = ridge_base(size, rng)
    if label == SPOOF:
        img = _degrade(img, material, rng)
    return _capture(img, sensor, rng)


def generate_samples(spec: CorpusSpec):
    """Yields all samples of the corpus in a fixed order."""
    for sensor in spec.sensors:
        for i in range(spec.n_live):
            sid = f"{sensor}-live-{i:05d}"
            yield Sample(sid, synth_image(sid, LIVE, sensor, MATERIAL_NONE,
                                          spec.image_size, spec.seed),
                         LIVE, sensor, MATERIAL_NONE)
        for material in spec.materials:
            for i in range(spec.n_spoof_per_material):
                sid = f"{sensor}-{material}-{i:05d}"
                yield Sample(sid, synth_image(sid, SPOOF, sensor, material,
                                              spec.image_size, spec.seed),
                             SPOOF, sensor, material)


# ---------------------------------------------------------------------------
# manifest

MANIFEST_HEADER = "# path\tlabel\tsensor\tmaterial\tid"


@dataclass
class ManifestRecord:
    path: str  # relative to the manifest file
    label: str
    sensor: str
    material: str
    id: str


def write_manifest(records, path):
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids in manifest")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(MANIFEST_HEADER + "\n")
        for r in records:
            f.write(f"{r.path}\t{r.label}\t{r.sensor}\t{r.material}\t{r.id}\n")


def read_manifest(path):
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
            records.append(ManifestRecord(*parts))
    return records


def generate_corpus(spec: CorpusSpec, out_dir):
    """Writes PGM images + manifest.tsv under out_dir; returns the records."""
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    records = []
    for s in generate_samples(spec):
        rel = os.path.join("images", f"{s.id}.pgm")
        pgm.write_pgm(s.image, os.path.join(out_dir, rel))
        records.append(ManifestRecord(rel, s.label, s.sensor, s.material, s.id))
    write_manifest(records, os.path.join(out_dir, "manifest.tsv"))
    return records


def load_samples(manifest_path, records=None):
    """Loads images for manifest records (all of them by default)."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    if records is None:
        records = read_manifest(manifest_path)
    return [Sample(r.id, pgm.read_pgm(os.path.join(base, r.path)),
                   r.label, r.sensor, r.material) for r in records]


# ---------------------------------------------------------------------------
# protocol splits

PROTOCOLS = ("intra_sensor_known", "intra_sensor_unknown_material", "cross_sensor")


@dataclass
class SplitSpec:
    protocol: str
    train_sensors: list
    test_sensors: list
    held_out_materials: list = field(default_factory=list)
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.protocol == "cross_sensor":
            if set(self.train_sensors) & set(self.test_sensors):
                raise ConfigError("cross_sensor train and test sensors must be disjoint")
        if self.protocol == "intra_sensor_unknown_material" and not self.held_out_materials:
            raise ConfigError("intra_sensor_unknown_material needs held_out_materials")


def _check_tags(records, spec: SplitSpec):
    sensors = {r.sensor for r in records}
    materials = {r.material for r in records} - {MATERIAL_NONE}
    missing = (set(spec.train_sensors) | set(spec.test_sensors)) - sensors
    if missing:
        raise ConfigError(f"sensors {sorted(missing)} not in manifest "
                          f"(available: {sorted(sensors)})")
    missing = set(spec.held_out_materials) - materials
    if missing:
        raise ConfigError(f"materials {sorted(missing)} not in manifest "
                          f"(available: {sorted(materials)})")


def build_split(records, spec: SplitSpec):
    """Returns disjoint (train_records, test_records) per the protocol."""
    _check_tags(records, spec)
    if spec.protocol == "cross_sensor":
        train = [r for r in records if r.sensor in spec.train_sensors]
        test = [r for r in records if r.sensor in spec.test_sensors]
    elif spec.protocol == "intra_sensor_unknown_material":
        pool = [r for r in records if r.sensor in spec.train_sensors]
        held = set(spec.held_out_materials)
        spoofs_train = [r for r in pool if r.label == SPOOF and r.material not in held]
        spoofs_test = [r for r in pool if r.label == SPOOF and r.material in held]
        lives = [r for r in pool if r.label == LIVE]
        lives_train, lives_test = _partition(lives, spec.train_fraction, spec.seed)
        train = spoofs_train + lives_train
        test = spoofs_test + lives_test
    else:  # intra_sensor_known
        pool = [r for r in records if r.sensor in spec.train_sensors]
        train, test = _partition(pool, spec.train_fraction, spec.seed)
    if not train or not test:
        raise ConfigError(f"protocol {spec.protocol} produced an empty split")
    return train, test


def _partition(records, fraction, seed):
    order = np.random.default_rng((seed, len(records))).permutation(len(records))
    cut = int(round(fraction * len(records)))
    return ([records[i] for i in sorted(order[:cut])],
            [records[i] for i in sorted(order[cut:])])
