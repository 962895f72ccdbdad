#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the NIfTI-1 and gradient-table byte fixtures used by the tests.

Headers are packed field by field with struct, independently of the C++
reader, in both byte orders.
"""
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def header(order, dims, datatype, bitpix, pixdim, slope, inter, magic=b"n+1\0"):
    h = bytearray(348)
    struct.pack_into(order + "i", h, 0, 348)
    full = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(order + "8h", h, 40, *full)
    struct.pack_into(order + "h", h, 70, datatype)
    struct.pack_into(order + "h", h, 72, bitpix)
    struct.pack_into(order + "8f", h, 76, *pixdim)
    struct.pack_into(order + "f", h, 108, 352.0)
    struct.pack_into(order + "f", h, 112, slope)
    struct.pack_into(order + "f", h, 116, inter)
    h[344:348] = magic
    return bytes(h) + b"\0\0\0\0"


def float_volume(order):
    nx, ny, nz = 16, 16, 8
    body = bytearray()
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):  # x fastest on disk
                body += struct.pack(order + "f", 0.25 * (x + 16 * y + 256 * z) - 3.0)
    return header(order, (nx, ny, nz), 16, 32, (1, 2, 2, 2.5, 1, 1, 1, 1), 0.0, 0.0) + body


def int_volume(order):
    dims = (4, 3, 2, 2)
    body = bytearray()
    for t in range(dims[3]):
        for z in range(dims[2]):
            for y in range(dims[1]):
                for x in range(dims[0]):
                    body += struct.pack(order + "h", x + 4 * y + 12 * z + 24 * t - 20)
    return header(order, dims, 4, 16, (1, 1, 1, 1, 1, 1, 1, 1), 0.5, 1.0) + body


def main():
    (HERE / "float32_le.nii").write_bytes(float_volume("<"))
    (HERE / "float32_be.nii").write_bytes(float_volume(">"))
    (HERE / "int16_scaled_le.nii").write_bytes(int_volume("<"))
    (HERE / "int16_scaled_be.nii").write_bytes(int_volume(">"))

    good = float_volume("<")
    (HERE / "bad_magic.nii").write_bytes(good[:344] + b"junk" + good[348:])
    (HERE / "truncated.nii").write_bytes(good[:352 + 100])
    uint8 = bytearray(good)
    struct.pack_into("<h", uint8, 70, 2)
    struct.pack_into("<h", uint8, 72, 8)
    (HERE / "unsupported_datatype.nii").write_bytes(bytes(uint8))

    (HERE / "small.bval").write_text("0 1000 1000\n")
    (HERE / "small.bvec").write_text("0 1 0\n0 0 1\n0 0 0\n")
    (HERE / "scaled.bval").write_text("5 2000\n")
    (HERE / "scaled.bvec").write_text("0 2\n0 0\n0 0\n")
    (HERE / "zero_dir.bval").write_text("0 1000\n")
    (HERE / "zero_dir.bvec").write_text("0 0\n0 0\n0 0\n")
    (HERE / "mismatch.bval").write_text("0 1000 1000 1000\n")
    (HERE / "text.bval").write_text("0 1000 abc\n")


if __name__ == "__main__":
    main()
