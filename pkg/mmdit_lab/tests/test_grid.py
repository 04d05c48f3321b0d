from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from mmdit_lab.exceptions import SerializationError
from mmdit_lab.experiments.grid import MARKER_COLOR, compose_grid, emit_grid, grid_from_manifest
from mmdit_lab.interventions.engine import GridEntry, GridManifest
from mmdit_lab.taskgen.fixtures import save_png


def tiles(n: int, size: int = 4) -> list[np.ndarray]:
    return [np.full((size, size, 3), 20 * i, dtype=np.uint8) for i in range(n)]


@pytest.mark.parametrize(("n", "expected"), [(1, (16, 30)), (4, (28, 56)), (5, (40, 56)), (10, (52, 82))])
def test_grid_layout(n, expected):
    assert compose_grid(tiles(n), [str(i) for i in range(n)], scale=2).size == expected


def test_cells_are_resized_to_the_first():
    grid = compose_grid([tiles(1, 4)[0], tiles(1, 6)[0]], ["a", "b"], scale=1)
    assert grid.size == (2 * (4 + 4) + 4, 4 + 14 + 4 + 4)


def test_marker_is_drawn():
    plain = np.asarray(compose_grid(tiles(4), list("abcd"), scale=2))
    marked = np.asarray(compose_grid(tiles(4), list("abcd"), marker=2, scale=2))
    changed = np.argwhere((plain != marked).any(axis=-1))
    assert len(changed)
    assert (marked[tuple(changed[0])] == MARKER_COLOR).all()


def test_empty_grid():
    with pytest.raises(ValueError):
        compose_grid([], [])


def sweep_manifest() -> GridManifest:
    return GridManifest(
        op="t2i_lens",
        entries=[GridEntry(k, f"Double#{k + 1}") for k in range(3)],
        marker=1,
        caption="color-red-chair-s0: t2i_lens sweep",
    )


def test_emit_grid_writes_caption(tmp_path):
    png, caption = emit_grid(tiles(3), sweep_manifest(), tmp_path / "grid.png")
    assert Image.open(png).format == "PNG"
    assert caption.read_text(encoding="utf-8").splitlines() == [
        "color-red-chair-s0: t2i_lens sweep",
        "0: Double#1",
        "1: Double#2 (marked)",
        "2: Double#3",
    ]


def test_grid_from_saved_manifest(tmp_path):
    manifest = sweep_manifest()
    for entry, pixels in zip(manifest.entries, tiles(3)):
        entry.image = save_png(pixels, tmp_path / f"{entry.ordinal:02d}.png").name
    path = manifest.save(tmp_path / "grid.json")
    assert GridManifest.load(path) == manifest
    png, _ = grid_from_manifest(path)
    assert png == tmp_path / "grid.png"
    assert png.exists()


def test_grid_manifest_without_images(tmp_path):
    path = sweep_manifest().save(tmp_path / "grid.json")
    with pytest.raises(SerializationError):
        grid_from_manifest(path)
