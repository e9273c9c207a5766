"""Aspect-preserving downscale under a total-pixel cap."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateOutput
from .imgproc import resize_image

DEFAULT_MAX_PIXELS = 1728 * 1728


@dataclass(frozen=True)
class ResizePolicy:
    max_pixels: int = DEFAULT_MAX_PIXELS

    def __post_init__(self):
        if self.max_pixels < 1:
            raise ValueError("max_pixels must be >= 1")


def parse_max_size(text: str) -> int:
    """Parse ``"NxM"`` (product taken) or a plain pixel count."""
    m = re.fullmatch(r"\s*(\d+)\s*[xX*]\s*(\d+)\s*", text)
    if m:
        return int(m.group(1)) * int(m.group(2))
    if re.fullmatch(r"\s*\d+\s*", text):
        return int(text)
    raise ValueError(f"bad max size {text!r}; expected 'NxM' or an integer")


def target_dims(h: int, w: int, max_pixels: int) -> tuple[int, int, float]:
    """Output ``(height, width, scale)`` for an ``h x w`` input.

    With ``r = sqrt(max_pixels / (h*w))`` the output is ``(floor(r*h), floor(r*w))``.
    The floors are taken in exact integer arithmetic:
    ``floor(r*h)`` is the largest ``k`` with ``k*k*w <= h*max_pixels``.
    """
    if h < 1 or w < 1:
        raise ValueError(f"invalid dimensions {h}x{w}")
    if h * w <= max_pixels:
        return h, w, 1.0
    out_h = math.isqrt(h * max_pixels // w)
    out_w = math.isqrt(w * max_pixels // h)
    scale = math.sqrt(max_pixels / (h * w))
    if out_h == 0 or out_w == 0:
        raise DegenerateOutput(
            f"{h}x{w} under a cap of {max_pixels} pixels collapses to {out_h}x{out_w}"
        )
    return out_h, out_w, scale


def flexible_resize(img: np.ndarray, policy: ResizePolicy | None = None) -> tuple[np.ndarray, float]:
    policy = policy or ResizePolicy()
    h, w = img.shape[:2]
    out_h, out_w, scale = target_dims(h, w, policy.max_pixels)
    if scale == 1.0:
        return img, 1.0
    return resize_image(img, out_h, out_w), scale
