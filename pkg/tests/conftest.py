"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from colonykit.imagestack import ImageStack, StackMetadata
from colonykit.units import quantity


def make_metadata(
    pixel_size_um: float = 0.1,
    frame_interval_h: float = 0.25,
    channels: tuple[str, ...] = ("c0",),
    origin_id: str = "test",
) -> StackMetadata:
    return StackMetadata(
        pixel_size=quantity(pixel_size_um, "um"),
        frame_interval=quantity(frame_interval_h, "h"),
        channel_names=channels,
        origin_id=origin_id,
    )


def make_stack(pixels, **meta_kwargs) -> ImageStack:
    """Build an ImageStack from an array-like.

    Accepts (T, H, W) single-channel data or full (T, H, W, C).
    """
    arr = np.asarray(pixels, dtype=float)
    if arr.ndim == 3:
        arr = arr[:, :, :, None]
    channels = meta_kwargs.pop(
        "channels", tuple(f"c{i}" for i in range(arr.shape[3]))
    )
    return ImageStack(arr, make_metadata(channels=channels, **meta_kwargs))


@pytest.fixture
def tiny_metadata() -> StackMetadata:
    return make_metadata()
