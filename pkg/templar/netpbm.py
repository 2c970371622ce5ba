# BSD 3-Clause License
#
# Copyright (c) 2025-Present, templar developers
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# * Redistributions of source code must retain the above copyright notice, this
#   list of conditions and the following disclaimer.
#
# * Redistributions in binary form must reproduce the above copyright notice,
#   this list of conditions and the following disclaimer in the documentation
#   and/or other materials provided with the distribution.
#
# * Neither the name of the copyright holder nor the names of its
#   contributors may be used to endorse or promote products derived from
#   this software without specific prior written permission.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
# DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
"""Binary portable graymap (P5) and pixmap (P6) codec.

Samples are written at maxval 65535 as big-endian 16-bit words, reading
accepts any maxval up to 65535 and comment lines inside the header.
"""

from __future__ import annotations

__all__ = ("MAXVAL", "encode", "decode", "suffix_for")

import typing

import numpy as np
from sain.collections.buf import Bytes

if typing.TYPE_CHECKING:
    import numpy.typing as npt

MAXVAL: typing.Final = 65535
_WHITESPACE: typing.Final = b" \t\r\n\x0b\x0c"
_MAGIC: typing.Final = {1: b"P5", 3: b"P6"}


def suffix_for(channels: int) -> str:
    """The file suffix for an image with this many channels."""
    if channels == 1:
        return ".pgm"
    if channels == 3:
        return ".ppm"
    raise ValueError(f"netpbm only stores 1 or 3 channels, not {channels}")


def encode(pixels: npt.NDArray[np.float64]) -> bytes:
    """Encode an `(height, width, channels)` array of values in `[0, 1]`.

    Example
    -------
    ```py
    raw = netpbm.encode(np.zeros((2, 3, 1)))
    assert raw.startswith(b"P5\\n3 2\\n65535\\n")
    ```
    """
    if pixels.ndim != 3:
        raise ValueError(f"expected a (height, width, channels) array, got {pixels.shape}")

    height, width, channels = pixels.shape
    magic = _MAGIC.get(channels)
    if magic is None:
        raise ValueError(f"netpbm only stores 1 or 3 channels, not {channels}")

    samples = np.rint(np.clip(pixels, 0.0, 1.0) * MAXVAL).astype(">u2")
    buf = Bytes()
    buf.put_bytes(magic)
    buf.put_str(f"\n{width} {height}\n{MAXVAL}\n")
    buf.put_bytes(samples.tobytes(order="C"))
    return buf.to_bytes()


def _header(raw: bytes) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    end = len(raw)
    while len(tokens) < 4:
        while pos < end and raw[pos] in _WHITESPACE:
            pos += 1
        if pos < end and raw[pos] == ord("#"):
            while pos < end and raw[pos] not in b"\r\n":
                pos += 1
            continue

        start = pos
        while pos < end and raw[pos] not in _WHITESPACE and raw[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise ValueError("truncated header")
        tokens.append(raw[start:pos])

    # Exactly one whitespace byte separates maxval from the raster.
    if pos >= end or raw[pos] not in _WHITESPACE:
        raise ValueError("missing raster")
    return tokens, pos + 1


def decode(raw: bytes) -> npt.NDArray[np.float64]:
    """Decode a P5 or P6 file into an `(height, width, channels)` float array.

    Raises
    ------
    `ValueError`
        If the header is malformed or the raster is shorter or longer than the header says.
    """
    tokens, offset = _header(raw)
    magic, *numbers = tokens
    channels = next((c for c, m in _MAGIC.items() if m == magic), None)
    if channels is None:
        raise ValueError(f"unsupported magic number {magic!r}")

    try:
        width, height, maxval = (int(n) for n in numbers)
    except ValueError:
        raise ValueError("non-numeric header field") from None

    if width <= 0 or height <= 0 or not 0 < maxval <= MAXVAL:
        raise ValueError(f"bad header {width}x{height} maxval {maxval}")

    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    count = width * height * channels
    if len(raw) - offset != count * dtype.itemsize:
        raise ValueError(
            f"raster holds {len(raw) - offset} bytes, expected {count * dtype.itemsize}"
        )

    samples = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if int(samples.max(initial=0)) > maxval:
        raise ValueError("sample exceeds maxval")
    return (samples.astype(np.float64) / maxval).reshape(height, width, channels)
