"""
Offline rule-based judge.

Answers the same questions as the remote judge from simple pixel statistics so an
experiment can run end to end without a network. Rules per question kind:

- color: median color of the judged image compared with the reference's median
- style: flatness, the share of pixels equal to their right-hand neighbour
- identity and scene content: correlation of 8x8 grayscale thumbnails
"""
from __future__ import annotations

import io
import json

import numpy as np
from PIL import Image

from ..taskgen.tasks import FamilyKind
from .prompts import JudgeExperiment
from .verdicts import JudgeRequest

COLOR_MARGIN = 8.0
STYLE_MARGIN = 0.02
IDENTITY_MARGIN = 0.02


def _pixels(png: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(png)) as image:
        return np.asarray(image.convert("RGB"), dtype=np.float64)


def dominant_color(pixels: np.ndarray) -> np.ndarray:
    return np.median(pixels.reshape(-1, 3), axis=0)


def color_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(dominant_color(a) - dominant_color(b)))


def flatness(pixels: np.ndarray) -> float:
    same = np.all(pixels[:, 1:] == pixels[:, :-1], axis=-1)
    return float(same.mean()) if same.size else 1.0


def thumbnail(pixels: np.ndarray, size: int = 8) -> np.ndarray:
    image = Image.fromarray(pixels.astype(np.uint8)).convert("L").resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(image, dtype=np.float64).ravel()


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    x, y = thumbnail(a), thumbnail(b)
    x, y = x - x.mean(), y - y.mean()
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0:
        # two flat thumbnails: compare their levels
        return 1.0 if np.allclose(thumbnail(a), thumbnail(b), atol=4.0) else 0.0
    return float((x * y).sum() / denom)


class StubJudge:
    """Deterministic judge backend; its replies go through the normal parser."""

    def ask(self, request: JudgeRequest) -> str:
        images = [_pixels(attachment.png) for attachment in request.images]
        passed, reason = self.decide(request, images)
        return json.dumps({"pass": int(passed), "reason": reason})

    def decide(self, request: JudgeRequest, images: list[np.ndarray]) -> tuple[bool, str]:
        family = request.family
        experiment = request.experiment
        if experiment is JudgeExperiment.I2I_PATCH:
            source_ref, target_ref, baseline, patched = images
            if family is FamilyKind.COLOR_TRANSFER:
                return (
                    color_distance(patched, source_ref) < color_distance(patched, target_ref),
                    "patched color nearer the source reference",
                )
            if family is FamilyKind.STYLE_TRANSFER:
                return flatness(patched) > flatness(baseline) + STYLE_MARGIN, "patched image flatter than baseline"
            return similarity(patched, source_ref) > similarity(patched, target_ref), "patched person nearer source"

        reference, baseline, output = images
        if experiment is JudgeExperiment.T2I_LENS:
            if family is FamilyKind.COLOR_TRANSFER:
                return (
                    color_distance(output, reference) + COLOR_MARGIN < color_distance(baseline, reference),
                    "reference color moved into the lens output",
                )
            if family is FamilyKind.STYLE_TRANSFER:
                return flatness(output) > flatness(baseline) + STYLE_MARGIN, "lens output flatter than baseline"
            if family is FamilyKind.HUMAN_CUSTOMIZATION:
                return similarity(output, reference) < 0.5, "lens output unlike the reference person"
            return (
                similarity(output, reference) > similarity(baseline, reference) + IDENTITY_MARGIN,
                "lens output closer to the reference scene",
            )

        lost = experiment is JudgeExperiment.KNOCKOUT and request.variant != "ref->image"
        if family is FamilyKind.COLOR_TRANSFER:
            drift = color_distance(output, reference) - color_distance(baseline, reference)
            kept = drift <= COLOR_MARGIN
        elif family is FamilyKind.STYLE_TRANSFER:
            kept = flatness(output) >= flatness(baseline) - STYLE_MARGIN
        else:
            kept = similarity(output, reference) >= similarity(baseline, reference) - IDENTITY_MARGIN
        if lost:
            return not kept, "property lost after blocking" if not kept else "property survived blocking"
        return kept, "property preserved" if kept else "property lost"
