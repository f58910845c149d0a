"""Binary (P5) PGM reader/writer, maxval 255.

Read maps byte v to v/255 float64; write rounds to nearest byte, so
write -> read -> write is byte-identical after the first quantization.
"""

from __future__ import annotations

import numpy as np


class PgmParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_pgm(image, path):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected (H,W) image, got shape {image.shape}")
    h, w = image.shape
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _next_token(buf, pos):
    # skip whitespace and '#' comments between header tokens
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise PgmParseError("unterminated comment", pos)
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PgmParseError("truncated header", pos)
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pgm(path):
    with open(path, "rb") as f:
        buf = f.read()
    magic, pos = _next_token(buf, 0)
    if magic != b"P5":
        raise PgmParseError(f"expected P5 magic, got {magic!r}", 0)
    fields = []
    for _ in range(3):
        tok, pos = _next_token(buf, pos)
        if not tok.isdigit():
            raise PgmParseError(f"expected integer header field, got {tok!r}",
                                pos - len(tok))
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise PgmParseError(f"unsupported maxval {maxval}", pos)
    pos += 1  # single whitespace byte separates header from payload
    payload = buf[pos:pos + w * h]
    if len(payload) != w * h:
        raise PgmParseError(f"truncated payload: need {w * h} bytes, have {len(payload)}",
                            pos + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0
