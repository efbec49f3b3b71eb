"""Time-lapse image stacks and their on-disk formats.

A stack is a (T, H, W, C) float array with values in [0, 1] plus the
metadata needed to attach physical units: pixel size, frame interval and
channel names. Two storage formats are supported:

* multipage TIFF, page ``t * C + c`` holding frame ``t`` of channel ``c``
  (uint8 and uint16 pages are normalized by 255 and 65535);
* a raw binary format: four little-endian uint32 values (T, H, W, C)
  followed by the pixel data as little-endian float32, C-contiguous.

Metadata travels in a JSON sidecar with keys ``pixel_size_um``,
``frame_interval_min``, ``channels`` and ``origin_id``. Note the sidecar
stores the frame interval in minutes; it is converted to hours on load.

Label stacks (integer cell ids, no normalization) reuse the same two
containers via :func:`load_label_stack`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tifffile

from .errors import InvalidInput, InvalidMetadata
from .units import LENGTH, TIME, Quantity, quantity

__all__ = [
    "StackMetadata",
    "ImageStack",
    "load_sidecar",
    "save_sidecar",
    "load_stack",
    "save_stack_raw",
    "save_stack_tiff",
    "load_label_stack",
    "save_label_stack_raw",
]

_SIDECAR_KEYS = ("pixel_size_um", "frame_interval_min", "channels", "origin_id")


@dataclass(frozen=True)
class StackMetadata:
    """Physical context for one stack."""

    pixel_size: Quantity  # side of one pixel
    frame_interval: Quantity  # time between consecutive frames
    channel_names: tuple[str, ...]
    origin_id: str

    def __post_init__(self) -> None:
        if self.pixel_size.dimension != LENGTH:
            raise InvalidMetadata("pixel_size_um must carry a length dimension")
        if self.frame_interval.dimension != TIME:
            raise InvalidMetadata("frame_interval_min must carry a time dimension")
        if not self.pixel_size.value > 0:
            raise InvalidMetadata("pixel_size_um must be positive")
        if not self.frame_interval.value > 0:
            raise InvalidMetadata("frame_interval_min must be positive")
        if not self.channel_names:
            raise InvalidMetadata("channels must name at least one channel")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise InvalidMetadata("channels must be unique")
        if not self.origin_id:
            raise InvalidMetadata("origin_id must be a non-empty string")

    @property
    def pixel_size_um(self) -> float:
        return self.pixel_size.to("um")

    @property
    def frame_interval_h(self) -> float:
        return self.frame_interval.to("h")


class ImageStack:
    """A (T, H, W, C) stack of normalized frames with metadata."""

    def __init__(self, pixels: np.ndarray, metadata: StackMetadata) -> None:
        pixels = np.asarray(pixels)
        if pixels.ndim != 4:
            raise InvalidInput(
                f"stack must be 4-D (T, H, W, C), got shape {pixels.shape}"
            )
        if pixels.shape[3] != len(metadata.channel_names):
            raise InvalidInput(
                f"stack has {pixels.shape[3]} channels, metadata names "
                f"{len(metadata.channel_names)}"
            )
        if not np.issubdtype(pixels.dtype, np.floating):
            raise InvalidInput("stack pixels must be floating point")
        if pixels.size and not np.all(np.isfinite(pixels)):
            raise InvalidInput("stack pixels must be finite")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise InvalidInput("stack pixels must lie in [0, 1]")
        self.pixels = pixels
        self.metadata = metadata

    @property
    def n_frames(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def n_channels(self) -> int:
        return self.pixels.shape[3]

    def channel_index(self, channel: int | str) -> int:
        if isinstance(channel, str):
            try:
                return self.metadata.channel_names.index(channel)
            except ValueError:
                raise InvalidInput(
                    f"unknown channel {channel!r}; stack has "
                    f"{list(self.metadata.channel_names)}"
                ) from None
        idx = int(channel)
        if not 0 <= idx < self.n_channels:
            raise IndexError(
                f"channel index {idx} out of range for {self.n_channels} channels"
            )
        return idx

    def frame(self, t: int) -> np.ndarray:
        if not 0 <= t < self.n_frames:
            raise IndexError(f"frame {t} out of range for {self.n_frames} frames")
        return self.pixels[t]

    def channel(self, t: int, channel: int | str) -> np.ndarray:
        return self.frame(t)[:, :, self.channel_index(channel)]

    def time_of(self, t: int) -> Quantity:
        if not 0 <= t < self.n_frames:
            raise IndexError(f"frame {t} out of range for {self.n_frames} frames")
        return Quantity(t * self.metadata.frame_interval_h, TIME)

    def __iter__(self):
        return (self.pixels[t] for t in range(self.n_frames))

    def __repr__(self) -> str:
        return (
            f"ImageStack(T={self.n_frames}, H={self.height}, W={self.width}, "
            f"C={self.n_channels}, origin={self.metadata.origin_id!r})"
        )


def load_sidecar(path: str | Path) -> StackMetadata:
    """Read and validate a metadata sidecar."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise InvalidMetadata(f"sidecar not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidMetadata(f"sidecar {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidMetadata(f"sidecar {path} must hold a JSON object")
    for key in _SIDECAR_KEYS:
        if key not in raw:
            raise InvalidMetadata(f"sidecar missing key {key!r}")
    if not isinstance(raw["pixel_size_um"], (int, float)) or isinstance(
        raw["pixel_size_um"], bool
    ):
        raise InvalidMetadata("pixel_size_um must be a number")
    if not isinstance(raw["frame_interval_min"], (int, float)) or isinstance(
        raw["frame_interval_min"], bool
    ):
        raise InvalidMetadata("frame_interval_min must be a number")
    channels = raw["channels"]
    if not isinstance(channels, list) or not all(
        isinstance(c, str) for c in channels
    ):
        raise InvalidMetadata("channels must be a list of strings")
    if raw["pixel_size_um"] <= 0:
        raise InvalidMetadata("pixel_size_um must be positive")
    if raw["frame_interval_min"] <= 0:
        raise InvalidMetadata("frame_interval_min must be positive")
    if not isinstance(raw["origin_id"], str):
        raise InvalidMetadata("origin_id must be a string")
    return StackMetadata(
        pixel_size=quantity(float(raw["pixel_size_um"]), "um"),
        frame_interval=quantity(float(raw["frame_interval_min"]), "min"),
        channel_names=tuple(channels),
        origin_id=raw["origin_id"],
    )


def save_sidecar(metadata: StackMetadata, path: str | Path) -> None:
    payload = {
        "channels": list(metadata.channel_names),
        "frame_interval_min": metadata.frame_interval.to("min"),
        "origin_id": metadata.origin_id,
        "pixel_size_um": metadata.pixel_size_um,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _is_tiff(path: Path) -> bool:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return magic in (b"II*\x00", b"MM\x00*")


def _normalize_pages(pages: np.ndarray) -> np.ndarray:
    if pages.dtype == np.uint8:
        return pages.astype(np.float32) / np.float32(255)
    if pages.dtype == np.uint16:
        return pages.astype(np.float32) / np.float32(65535)
    if np.issubdtype(pages.dtype, np.floating):
        return pages.astype(np.float32)
    raise InvalidInput(f"unsupported TIFF sample type {pages.dtype}")


def _read_tiff_pages(path: Path) -> np.ndarray:
    pages = tifffile.imread(path)
    if pages.ndim == 2:
        pages = pages[None]
    if pages.ndim != 3:
        raise InvalidInput(
            f"TIFF {path} must hold single-plane grayscale pages, "
            f"got shape {pages.shape}"
        )
    return pages


def _read_raw(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < 16:
        raise InvalidInput(f"raw stack {path} shorter than its 16-byte header")
    t, h, w, c = struct.unpack("<4I", blob[:16])
    expected = 16 + t * h * w * c * 4
    if len(blob) != expected:
        raise InvalidInput(
            f"raw stack {path} has {len(blob)} bytes, header implies {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=16)
    return data.reshape(t, h, w, c)


def load_stack(stack_path: str | Path, sidecar_path: str | Path) -> ImageStack:
    """Load a stack (TIFF or raw binary) and its sidecar."""
    metadata = load_sidecar(sidecar_path)
    path = Path(stack_path)
    if not path.exists():
        raise FileNotFoundError(f"stack not found: {path}")
    n_channels = len(metadata.channel_names)
    if _is_tiff(path):
        pages = _normalize_pages(_read_tiff_pages(path))
        if pages.shape[0] % n_channels:
            raise InvalidInput(
                f"TIFF has {pages.shape[0]} pages, not a multiple of "
                f"{n_channels} channels"
            )
        t = pages.shape[0] // n_channels
        pixels = pages.reshape(t, n_channels, *pages.shape[1:]).transpose(0, 2, 3, 1)
    else:
        pixels = _read_raw(path)
        if pixels.shape[3] != n_channels:
            raise InvalidInput(
                f"raw stack has {pixels.shape[3]} channels, sidecar names "
                f"{n_channels}"
            )
    return ImageStack(pixels, metadata)


def save_stack_raw(pixels: np.ndarray, path: str | Path) -> None:
    """Write a (T, H, W, C) float array in the raw binary format."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 4:
        raise InvalidInput(f"raw stacks are 4-D, got shape {pixels.shape}")
    header = struct.pack("<4I", *pixels.shape)
    body = np.ascontiguousarray(pixels, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body)


def save_stack_tiff(
    pixels: np.ndarray, path: str | Path, bit_depth: int = 16
) -> None:
    """Write a (T, H, W, C) float array as a multipage TIFF."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 4:
        raise InvalidInput(f"stacks are 4-D, got shape {pixels.shape}")
    if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
        raise InvalidInput("stack pixels must lie in [0, 1]")
    if bit_depth == 8:
        scale, dtype = 255, np.uint8
    elif bit_depth == 16:
        scale, dtype = 65535, np.uint16
    else:
        raise InvalidInput(f"bit_depth must be 8 or 16, got {bit_depth}")
    t, h, w, c = pixels.shape
    pages = np.rint(pixels.astype(np.float64) * scale).astype(dtype)
    pages = pages.transpose(0, 3, 1, 2).reshape(t * c, h, w)
    # photometric pinned so small page counts are never taken for RGB planes
    tifffile.imwrite(Path(path), pages, photometric="minisblack")


def load_label_stack(path: str | Path) -> np.ndarray:
    """Load a (T, H, W) integer label stack from TIFF or raw binary.

    Raw float32 values must be non-negative integers; TIFF pages keep
    their raw sample values (no normalization).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label stack not found: {path}")
    if _is_tiff(path):
        pages = _read_tiff_pages(path)
        values = pages.astype(np.float64)
    else:
        raw = _read_raw(path)
        if raw.shape[3] != 1:
            raise InvalidInput(
                f"label stack must have one channel, got {raw.shape[3]}"
            )
        values = raw[:, :, :, 0].astype(np.float64)
    if values.size:
        if not np.all(np.isfinite(values)):
            raise InvalidInput("label stack must be finite")
        if np.any(values < 0) or np.any(values != np.rint(values)):
            raise InvalidInput("label stack must hold non-negative integers")
    return values.astype(np.int32)


def save_label_stack_raw(labels: np.ndarray, path: str | Path) -> None:
    """Write a (T, H, W) integer label stack in the raw binary format."""
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise InvalidInput(f"label stacks are 3-D, got shape {labels.shape}")
    save_stack_raw(labels.astype("<f4")[:, :, :, None], path)
