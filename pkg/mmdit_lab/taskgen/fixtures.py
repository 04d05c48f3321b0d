"""
Procedural reference images standing in for the scene, subject and style photo sets.

Every image is an ``uint8`` array ``[height, width, 3]`` drawn with Pillow from a
numpy ``Generator`` seeded by name, so the same seed always yields the same bytes.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from ..mmdit.rng import derive_seed
from .denylist import data_json
from .tasks import FamilyKind

DEFAULT_SIZE = (32, 32)


@dataclass(frozen=True)
class SceneInfo:
    name: str
    category: str
    place: str


def _rng(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed("fixture", seed, *parts))


def _canvas(size, color) -> tuple[Image.Image, ImageDraw.ImageDraw]:
    h, w = size
    image = Image.new("RGB", (w, h), tuple(int(c) for c in color))
    return image, ImageDraw.Draw(image)


def _to_array(image: Image.Image) -> np.ndarray:
    return np.asarray(image, dtype=np.uint8).copy()


# ----------------------------
# Per-family generators
# ----------------------------

def color_fixtures(size=DEFAULT_SIZE, seed: int = 0) -> dict[str, np.ndarray]:
    out = {}
    for color in data_json("instructions", "colors.json")["colors"]:
        image, _ = _canvas(size, color["rgb"])
        out[f"color/{color['name']}"] = _to_array(image)
    return out


def _silhouette(draw: ImageDraw.ImageDraw, rng: np.random.Generator, size, fill, outline=None) -> None:
    h, w = size
    cx, cy = w * rng.uniform(0.4, 0.6), h * rng.uniform(0.55, 0.7)
    bw, bh = w * rng.uniform(0.18, 0.3), h * rng.uniform(0.18, 0.28)
    r = min(h, w) * rng.uniform(0.1, 0.16)
    draw.ellipse([cx - bw, cy - bh, cx + bw, cy + bh], fill=fill, outline=outline)
    draw.ellipse([cx - r, cy - bh - 2 * r, cx + r, cy - bh], fill=fill, outline=outline)


def style_fixtures(size=DEFAULT_SIZE, seed: int = 0) -> dict[str, np.ndarray]:
    """One flat, outlined ``fictional`` image and one textured ``realistic`` analog per subject."""
    out = {}
    h, w = size
    for subject in data_json("instructions", "style.json")["subjects"]:
        slug = subject["slug"]
        palette = _rng(seed, "style-palette", slug).integers(40, 216, size=(2, 3))

        image, draw = _canvas(size, palette[0])
        _silhouette(draw, _rng(seed, "style-shape", slug), size, tuple(int(c) for c in palette[1]), outline=(0, 0, 0))
        out[f"style/{slug}_fictional"] = _to_array(image)

        rng = _rng(seed, "style-real", slug)
        ramp = np.linspace(0.7, 1.3, h)[:, None, None]
        background = np.clip(palette[0][None, None, :] * ramp * np.ones((h, w, 1)), 0, 255)
        base = Image.fromarray(background.astype(np.uint8))
        draw = ImageDraw.Draw(base)
        _silhouette(draw, _rng(seed, "style-shape", slug), size, tuple(int(c) for c in palette[1]))
        smooth = np.asarray(base.filter(ImageFilter.GaussianBlur(radius=1.2)), dtype=np.float64)
        noisy = smooth + rng.normal(0.0, 12.0, size=smooth.shape)
        out[f"style/{slug}_realistic"] = np.clip(np.round(noisy), 0, 255).astype(np.uint8)
    return out


_SKIN = [(241, 194, 125), (224, 172, 105), (198, 134, 66), (141, 85, 36), (255, 219, 172)]
_HAIR = [(20, 20, 20), (90, 56, 37), (200, 160, 80), (160, 60, 30), (180, 180, 180)]


def human_fixtures(size=DEFAULT_SIZE, seed: int = 0) -> dict[str, np.ndarray]:
    """Distinct glyph people: skin, hair, head shape and shirt vary per subject."""
    out = {}
    h, w = size
    for index, name in enumerate(data_json("instructions", "humans.json")["subjects"]):
        rng = _rng(seed, "human", name)
        background = rng.integers(150, 240, size=3)
        image, draw = _canvas(size, background)
        shirt = tuple(int(c) for c in rng.integers(20, 235, size=3))
        skin = _SKIN[index % len(_SKIN)]
        hair = _HAIR[(index * 3 + 1) % len(_HAIR)]
        head_w = w * (0.16 + 0.03 * (index % 3))
        head_h = h * (0.18 + 0.02 * (index % 4))
        cx, cy = w / 2, h * 0.38
        draw.rectangle([w * 0.22, h * 0.62, w * 0.78, h], fill=shirt)
        draw.ellipse([cx - head_w, cy - head_h, cx + head_w, cy + head_h], fill=skin)
        if index % 2:
            draw.rectangle([cx - head_w, cy - head_h - 2, cx + head_w, cy - head_h * 0.4], fill=hair)
        else:
            draw.pieslice([cx - head_w - 2, cy - head_h - 3, cx + head_w + 2, cy + head_h], 180, 360, fill=hair)
        eye = max(1, int(w / 32))
        for dx in (-head_w * 0.4, head_w * 0.4):
            draw.rectangle([cx + dx - eye, cy - eye, cx + dx + eye, cy + eye], fill=(0, 0, 0))
        out[f"human/{name}"] = _to_array(image)
    return out


def scene_catalog() -> list[SceneInfo]:
    meta = data_json("instructions", "scenes.json")
    places = meta["places"]
    catalog = []
    for category in range(meta["categories"]):
        place = places[category % len(places)]
        for image in range(meta["images_per_category"]):
            catalog.append(SceneInfo(
                name=f"scene_{category:03d}_{'abcdefgh'[image]}",
                category=f"{place}_{category:03d}",
                place=place,
            ))
    return catalog


def scene_fixtures(size=DEFAULT_SIZE, seed: int = 0, limit: int | None = None) -> dict[str, np.ndarray]:
    """Cluttered scenes: a two-tone ground plus a few seeded boxes and discs."""
    out = {}
    h, w = size
    catalog = scene_catalog()
    for info in catalog[:limit] if limit is not None else catalog:
        rng = _rng(seed, "scene", info.name)
        sky, ground = rng.integers(30, 230, size=(2, 3))
        image, draw = _canvas(size, sky)
        horizon = h * rng.uniform(0.4, 0.7)
        draw.rectangle([0, horizon, w, h], fill=tuple(int(c) for c in ground))
        for _ in range(int(rng.integers(3, 8))):
            x0, y0 = rng.uniform(0, w * 0.8), rng.uniform(0, h * 0.8)
            x1, y1 = x0 + rng.uniform(2, w * 0.4), y0 + rng.uniform(2, h * 0.4)
            fill = tuple(int(c) for c in rng.integers(0, 256, size=3))
            if rng.random() < 0.5:
                draw.rectangle([x0, y0, x1, y1], fill=fill)
            else:
                draw.ellipse([x0, y0, x1, y1], fill=fill)
        out[f"scene/{info.name}"] = _to_array(image)
    return out


def fixture_images(kind: FamilyKind, size=DEFAULT_SIZE, seed: int = 0) -> dict[str, np.ndarray]:
    kind = FamilyKind(kind)
    if kind is FamilyKind.COLOR_TRANSFER:
        return color_fixtures(size, seed)
    if kind is FamilyKind.STYLE_TRANSFER:
        return style_fixtures(size, seed)
    if kind is FamilyKind.HUMAN_CUSTOMIZATION:
        return human_fixtures(size, seed)
    return scene_fixtures(size, seed)


def save_png(pixels: np.ndarray, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")
    return path


def load_png(path: Path | str) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()
