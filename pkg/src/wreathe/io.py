"""PNG images, shape files, posterior-sample records and run manifests."""

from __future__ import annotations

import json
import math
import os
import re
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .grammar import GrammarError, Shape, parse, serialize
from .inference import PosteriorSample
from .priors import BlurParams
from .wreath_process import noise_from_json, noise_to_json

LUMA = (0.2126, 0.7152, 0.0722)


class ImageIOError(OSError):
    code = "io"


class ImageNotFoundError(ImageIOError):
    code = "missing"


class MalformedImageError(ImageIOError):
    code = "malformed"


class UnwritablePathError(ImageIOError):
    code = "unwritable"


class SampleFormatError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


# -- PNG ---------------------------------------------------------------------------


def read_png(path) -> np.ndarray:
    """8-bit (or 16-bit) image as a float array in [0, 1]; color is reduced by luminance."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                data = np.asarray(im, dtype=float)
                top = 65535.0 if mode.startswith("I;16") or data.max(initial=0) > 255 else 255.0
                return np.clip(data / top, 0.0, 1.0)
            if mode in ("L", "LA"):
                return np.asarray(im.getchannel(0), dtype=float) / 255.0
            if mode == "1":
                return np.asarray(im.convert("L"), dtype=float) / 255.0
            rgb = np.asarray(im.convert("RGB"), dtype=float) / 255.0
            return rgb @ np.array(LUMA)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise MalformedImageError(f"{path}: not a readable image ({e})") from e


def to_uint8(raster) -> np.ndarray:
    a = np.asarray(raster, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D raster, got shape {a.shape}")
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(raster, path) -> None:
    path = Path(path)
    img = Image.fromarray(to_uint8(raster), mode="L")
    try:
        # no timestamps or text chunks, so identical rasters give identical bytes
        img.save(path, format="PNG", optimize=False, compress_level=9)
    except (OSError, ValueError) as e:
        raise UnwritablePathError(f"{path}: cannot write ({e})") from e


# -- shape files ---------------------------------------------------------------------

_LAMBDA_RE = re.compile(r"^#\s*lambda\s*=\s*(\S+)\s*$")


def write_shape(shape: Shape, path, lam: Optional[float] = None, comments: Iterable[str] = ()) -> None:
    lines = [f"# {c}" for c in comments]
    if lam is not None:
        lines.append(f"# lambda={float(lam)!r}")
    lines.append(serialize(shape))
    _write_text(path, "\n".join(lines) + "\n")


def read_shape(path, validate_shape: bool = True) -> tuple[Shape, Optional[float]]:
    """Shape and optional scale recorded as a ``# lambda=...`` comment."""
    text = _read_text(path)
    lam = None
    body = []
    for line in text.splitlines():
        m = _LAMBDA_RE.match(line.strip())
        if m:
            try:
                lam = float(m.group(1))
            except ValueError:
                raise GrammarError(f"{path}: bad lambda comment {line.strip()!r}") from None
            body.append("")
        else:
            body.append(line)
    return parse("\n".join(body), validate_shape=validate_shape), lam


def _read_text(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    return path.read_text(encoding="utf-8")


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise UnwritablePathError(f"{path}: cannot write ({e})") from e


# -- posterior samples -----------------------------------------------------------------

_SAMPLE_KEYS = ("iteration", "shape", "lambda", "blur_w", "blur_sigma", "log_posterior", "log_likelihood")


def format_sample(s: PosteriorSample) -> str:
    fields = [
        f"iteration={s.iteration}",
        f"shape={serialize(s.shape)}",
        f"lambda={float(s.lam)!r}",
        f"blur_w={s.blur.w_b}",
        f"blur_sigma={float(s.blur.sigma_b)!r}",
        f"log_posterior={float(s.log_posterior)!r}",
        f"log_likelihood={float(s.log_likelihood)!r}",
    ]
    if s.noise is not None:
        fields.append("noise=" + json.dumps(noise_to_json(s.noise), separators=(",", ":")))
    return "\t".join(fields)


def write_samples(samples: Iterable[PosteriorSample], path) -> None:
    _write_text(path, "".join(format_sample(s) + "\n" for s in samples))


def _float(v: str, line: int, key: str) -> float:
    try:
        x = float(v)
    except ValueError:
        raise SampleFormatError(line, f"{key} is not a number: {v!r}") from None
    if math.isnan(x):
        raise SampleFormatError(line, f"{key} is NaN")
    return x


def parse_sample(text: str, line: int = 1) -> PosteriorSample:
    rec = {}
    for part in text.split("\t"):
        key, sep, value = part.partition("=")
        if not sep:
            raise SampleFormatError(line, f"field {part!r} is not key=value")
        if key in rec:
            raise SampleFormatError(line, f"duplicate field {key!r}")
        rec[key] = value
    missing = [k for k in _SAMPLE_KEYS if k not in rec]
    if missing:
        raise SampleFormatError(line, f"missing field(s) {', '.join(missing)}")
    unknown = set(rec) - set(_SAMPLE_KEYS) - {"noise"}
    if unknown:
        raise SampleFormatError(line, f"unknown field(s) {', '.join(sorted(unknown))}")
    try:
        it = int(rec["iteration"])
        w = int(rec["blur_w"])
    except ValueError:
        raise SampleFormatError(line, "iteration and blur_w must be integers") from None
    try:
        shape = parse(rec["shape"])
    except GrammarError as e:
        raise SampleFormatError(line, f"bad shape: {e}") from None
    try:
        blur = BlurParams(w, _float(rec["blur_sigma"], line, "blur_sigma"))
    except ValueError as e:
        if isinstance(e, SampleFormatError):
            raise
        raise SampleFormatError(line, str(e)) from None
    noise = None
    if "noise" in rec:
        try:
            noise = noise_from_json(json.loads(rec["noise"]))
        except (ValueError, TypeError) as e:
            raise SampleFormatError(line, f"bad noise record: {e}") from None
    return PosteriorSample(
        it,
        shape,
        _float(rec["lambda"], line, "lambda"),
        blur,
        _float(rec["log_posterior"], line, "log_posterior"),
        _float(rec["log_likelihood"], line, "log_likelihood"),
        noise,
    )


def read_samples(path) -> list:
    """Parse a samples file; every record must be newline-terminated."""
    text = _read_text(path)
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] != "":
        raise SampleFormatError(len(lines), "truncated record (no line terminator)")
    out = []
    for k, line in enumerate(lines[:-1], start=1):
        if not line.strip():
            raise SampleFormatError(k, "empty record")
        out.append(parse_sample(line, k))
    return out


# -- manifests -------------------------------------------------------------------------


def write_manifest(path, entries: dict) -> None:
    """Plain key=value lines in insertion order."""
    lines = []
    for k, v in entries.items():
        text = v if isinstance(v, str) else json.dumps(v, sort_keys=True) if isinstance(v, (dict, list, tuple)) else repr(v)
        if "\n" in text or "\n" in k:
            raise ValueError(f"manifest entry {k!r} spans lines")
        lines.append(f"{k}={text}")
    _write_text(path, "\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for k, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SampleFormatError(k, f"manifest line is not key=value: {line!r}")
        out[key.strip()] = value
    return out


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UnwritablePathError(f"{path}: cannot create directory ({e})") from e
    if not os.access(path, os.W_OK):
        raise UnwritablePathError(f"{path}: directory is not writable")
    return path
