"""
Binary Netpbm files: 8-bit PGM (P5) and PPM (P6) images and PBM (P4) masks.

Intensities are stored in [0, 1] in memory, mapped from and to bytes by
:code:`v / 255` and :code:`round(255 v)`. A PBM mask stores known pixels as
1 bits, rows padded to whole bytes; the mask values come from the companion
image.
"""

import logging

from typing import List, Optional, Tuple

import numpy as np

from inpaint.schwarz.core import (ImageBuffer, InpaintingError, InpaintingMask,
                                  PnmFormatError)

log = logging.getLogger(__name__)

_WHITESPACE = b' \t\n\r\v\f'
_IMAGE_MAGIC = {b'P5': 1, b'P6': 3}
_CHANNEL_MAGIC = {1: b'P5', 3: b'P6'}


def _read_bytes(path) -> bytes:
    try:
        with open(path, 'rb') as input_file:
            return input_file.read()
    except OSError as e:
        raise InpaintingError(f"Unable to read {path}: {e}") from e


def _write_bytes(path, header: str, payload: bytes):
    try:
        with open(path, 'wb') as output_file:
            output_file.write(header.encode('ascii'))
            output_file.write(payload)
    except OSError as e:
        raise InpaintingError(f"Unable to write {path}: {e}") from e


def _parse_header(data: bytes, fields: int,
                  path) -> Tuple[bytes, List[int], int]:
    """
    Splits off the magic number and :code:`fields` decimal header fields,
    skipping whitespace and :code:`#` comments. Returns them with the offset
    of the first payload byte.
    """
    if len(data) < 2:
        raise PnmFormatError(f"{path}: truncated header at byte {len(data)}")
    magic = data[:2]
    offset = 2
    values = []
    while len(values) < fields:
        while offset < len(data):
            if data[offset] in _WHITESPACE:
                offset += 1
            elif data[offset:offset + 1] == b'#':
                end = data.find(b'\n', offset)
                offset = len(data) if end < 0 else end + 1
            else:
                break
        start = offset
        while offset < len(data) and data[offset:offset + 1].isdigit():
            offset += 1
        if start == offset:
            if offset >= len(data):
                raise PnmFormatError(f"{path}: truncated header at byte "
                                     f"{offset}")
            raise PnmFormatError(f"{path}: expected a number at byte "
                                 f"{offset}")
        values.append(int(data[start:offset]))

    if offset >= len(data) or data[offset] not in _WHITESPACE:
        raise PnmFormatError(f"{path}: expected whitespace after the header "
                             f"at byte {offset}")
    return magic, values, offset + 1


def _payload(data: bytes, offset: int, length: int, path) -> bytes:
    if len(data) < offset + length:
        raise PnmFormatError(f"{path}: payload truncated at byte {len(data)}, "
                             f"expected {length} bytes from byte {offset}")
    if len(data) > offset + length:
        log.debug('%s: ignoring %d trailing byte(s)', path,
                  len(data) - offset - length)
    return data[offset:offset + length]


def read_pnm(path) -> ImageBuffer:
    """
    Reads a binary 8-bit PGM (P5) or PPM (P6) file into a 1 or 3 channel
    image with values :code:`v / 255`.

    Raises
    ------
    PnmFormatError
        On a bad magic number, a malformed header, a maxval other than 255
        or a truncated payload; the message names the byte offset
    InpaintingError
        If the file can't be read
    """
    data = _read_bytes(path)
    magic = data[:2]
    if magic not in _IMAGE_MAGIC:
        raise PnmFormatError(f"{path}: unsupported magic number {magic!r} at "
                             'byte 0, expected P5 or P6')
    _, (width, height, maxval), offset = _parse_header(data, 3, path)
    if maxval != 255:
        raise PnmFormatError(f"{path}: maxval {maxval} before byte {offset} "
                             'is unsupported, expected 255')
    if width < 1 or height < 1:
        raise PnmFormatError(f"{path}: empty {width}x{height} image")

    channels = _IMAGE_MAGIC[magic]
    payload = _payload(data, offset, width * height * channels, path)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width,
                                                            channels)
    return ImageBuffer(np.transpose(pixels, (2, 0, 1)) / 255.0, source=True)


def quantise(image: ImageBuffer) -> np.ndarray:
    """Bytes of an image, clamped to [0, 1] and rounded half up."""
    return np.floor(255.0 * np.clip(image.data, 0.0, 1.0) + 0.5).astype(
        np.uint8)


def write_pnm(image: ImageBuffer, path):
    """
    Writes a P5 (1 channel) or P6 (3 channels) file. Values are clamped to
    [0, 1] and quantised to :code:`round(255 v)`.

    Raises
    ------
    InpaintingError
        If the file can't be written
    """
    pixels = np.transpose(quantise(image), (1, 2, 0))
    header = (f"{_CHANNEL_MAGIC[image.channels].decode('ascii')}\n"
              f"{image.width} {image.height}\n255\n")
    _write_bytes(path, header, np.ascontiguousarray(pixels).tobytes())


def read_mask_pbm(path,
                  expected: Optional[ImageBuffer] = None) -> InpaintingMask:
    """
    Reads a binary PBM (P4) mask; 1 bits are known pixels.

    Parameters
    ----------
    path
        Mask file
    expected
        Companion image the mask must match in size

    Raises
    ------
    PnmFormatError
        If the file is malformed
    InvalidInput
        If the mask doesn't match :code:`expected` or has no known pixel
    """
    data = _read_bytes(path)
    if data[:2] != b'P4':
        raise PnmFormatError(f"{path}: unsupported magic number "
                             f"{data[:2]!r} at byte 0, expected P4")
    _, (width, height), offset = _parse_header(data, 2, path)
    if width < 1 or height < 1:
        raise PnmFormatError(f"{path}: empty {width}x{height} mask")

    row_bytes = -(-width // 8)
    payload = _payload(data, offset, row_bytes * height, path)
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(height, row_bytes)
    mask = InpaintingMask(np.unpackbits(packed, axis=1, count=width)
                          .astype(bool))
    if expected is not None:
        mask.check_matches(expected)
    return mask


def write_mask_pbm(mask: InpaintingMask, path):
    """
    Writes a binary PBM (P4) mask, rows padded with zero bits.

    Raises
    ------
    InpaintingError
        If the file can't be written
    """
    packed = np.packbits(mask.known, axis=1)
    _write_bytes(path, f"P4\n{mask.width} {mask.height}\n", packed.tobytes())
