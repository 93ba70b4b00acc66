import logging
import os
import re
from typing import List, Optional, Tuple

import numpy as np

from interpolation.geosparse_core import (
    GUIDANCE_SCALE,
    DimensionMismatchError,
    GeoSparseError,
    ImageGrid,
    NoSamplesError,
    SparseField,
)

"""
Readers and writers for every file the pipeline touches:

    .pgm/.ppm   8-bit guidance images and masks (binary P5/P6)
    .pfm        single-channel float fields, e.g. disparity
    .flo        2-channel (u, v) flow fields
    .sparse     text list of known samples, "GEOSPARSE <width> <height> <channels>"
                followed by one "x y v1 [v2 ...]" record per known site in raster order

Readers reject anything malformed with a FormatParseError that names the byte
offset (binary formats) or line number (text format).
"""

FLO_MAGIC = 202021.25
FLO_TAG = b'PIEH'
SPARSE_TAG = 'GEOSPARSE'

PNM_CHANNELS = {b'P5': 1, b'P6': 3}
PNM_TOKEN = re.compile(rb'(?:\s|#[^\n]*\n)*(\S+)')


class FormatParseError(GeoSparseError):
    """
    A file violates its format.

    Args:
        path (str): file being read
        message (str): what is wrong
        offset (int): byte offset of the problem, for binary formats
        line (int): 1-based line number of the problem, for the text format
    """

    def __init__(self, path: str, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        self.path = path
        self.offset = offset
        self.line = line
        where = ''
        if offset is not None:
            where = f' at byte {offset}'
        elif line is not None:
            where = f' at line {line}'
        super().__init__(f'{path}{where}: {message}')


class MalformedHeaderError(FormatParseError):
    pass


class TruncatedPayloadError(FormatParseError):
    pass


class SiteOutOfBoundsError(FormatParseError):
    pass


class MalformedRecordError(FormatParseError):
    pass


def _read_bytes(path: str) -> bytes:
    if not os.path.exists(path):
        raise FileNotFoundError(f'Missing file: {path}')
    with open(path, 'rb') as f:
        return f.read()


def _payload(path: str, data: bytes, offset: int, dtype: str, count: int) -> np.ndarray:
    needed = count * np.dtype(dtype).itemsize
    available = len(data) - offset
    if available < needed:
        raise TruncatedPayloadError(path, f'expected {needed} payload bytes, found {available}', offset=offset + available)
    if available > needed:
        logging.warning(f'{path}: ignoring {available - needed} trailing byte(s)')
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset)


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------

def _pnm_header(path: str, data: bytes) -> Tuple[int, int, int, int, int]:
    magic = data[:2]
    if magic not in PNM_CHANNELS:
        raise MalformedHeaderError(path, f'unsupported magic {magic!r}, expected P5 or P6', offset=0)

    offset = 2
    fields = []
    for name in ('width', 'height', 'maxval'):
        match = PNM_TOKEN.match(data, offset)
        if match is None or not match.group(1).isdigit():
            raise MalformedHeaderError(path, f'missing or invalid {name}', offset=offset)
        fields.append(int(match.group(1)))
        offset = match.end()

    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError(path, f'invalid size {width}x{height}', offset=2)
    if not 1 <= maxval <= 255:
        raise MalformedHeaderError(path, f'only 8-bit images are supported, maxval is {maxval}', offset=offset)
    if offset >= len(data) or not data[offset:offset + 1].isspace():
        raise MalformedHeaderError(path, 'header must end with a single whitespace byte', offset=offset)
    return PNM_CHANNELS[magic], width, height, maxval, offset + 1


def read_image(path: str) -> ImageGrid:
    """
    Read a binary PGM (1 channel) or PPM (3 channels) image.

    Values are rescaled to reals in [0, 255] whatever the file's maxval.

    Args:
        path (str): image file

    Returns:
        ImageGrid
    """
    data = _read_bytes(path)
    channels, width, height, maxval, offset = _pnm_header(path, data)
    pixels = _payload(path, data, offset, 'u1', width * height * channels)
    values = pixels.reshape(height, width, channels).astype(np.float64) * (255.0 / maxval)
    return ImageGrid(values, value_scale=GUIDANCE_SCALE)


def write_image(path: str, grid: ImageGrid) -> None:
    """Write a 1- or 3-channel grid as 8-bit PGM/PPM, rounding and clipping to [0, 255]."""
    magic = {1: b'P5', 3: b'P6'}.get(grid.channels)
    if magic is None:
        raise DimensionMismatchError(f'PGM/PPM images need 1 or 3 channels, got {grid.channels}')
    pixels = np.clip(np.rint(grid.data), 0, 255).astype(np.uint8)
    with open(path, 'wb') as f:
        f.write(magic + f'\n{grid.width} {grid.height}\n255\n'.encode('ascii'))
        f.write(pixels.tobytes())


def read_mask(path: str, invert: bool = False) -> np.ndarray:
    """
    Read a PGM/PPM mask: pixels brighter than 127 are set.

    Args:
        path (str): mask image
        invert (bool): flip the mask, for occlusion maps where white marks excluded pixels

    Returns:
        boolean (height, width) array
    """
    image = read_image(path)
    mask = image.data.max(axis=2) > 127
    return ~mask if invert else mask


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def _header_line(path: str, data: bytes, offset: int, what: str) -> Tuple[str, int]:
    end = data.find(b'\n', offset)
    if end < 0:
        raise MalformedHeaderError(path, f'unterminated {what} line', offset=offset)
    try:
        return data[offset:end].decode('ascii').strip(), end + 1
    except UnicodeDecodeError:
        raise MalformedHeaderError(path, f'{what} line is not ASCII', offset=offset)


def read_pfm(path: str) -> ImageGrid:
    """
    Read a single-channel PFM file.

    The sign of the scale field gives the byte order (negative means little-endian)
    and rows are stored bottom to top. NaN and Inf entries are kept as they mark
    pixels without ground truth.

    Args:
        path (str): .pfm file

    Returns:
        1-channel ImageGrid (non-finite values allowed)
    """
    data = _read_bytes(path)
    magic, offset = _header_line(path, data, 0, 'magic')
    if magic != 'Pf':
        raise MalformedHeaderError(path, f'expected single-channel "Pf" magic, found {magic!r}', offset=0)

    dims_at = offset
    dims, offset = _header_line(path, data, offset, 'size')
    parts = dims.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise MalformedHeaderError(path, f'invalid size line {dims!r}', offset=dims_at)
    width, height = int(parts[0]), int(parts[1])
    if width < 1 or height < 1:
        raise MalformedHeaderError(path, f'invalid size {width}x{height}', offset=dims_at)

    scale_at = offset
    scale_text, offset = _header_line(path, data, offset, 'scale')
    try:
        scale = float(scale_text)
    except ValueError:
        raise MalformedHeaderError(path, f'invalid scale {scale_text!r}', offset=scale_at)
    if scale == 0 or not np.isfinite(scale):
        raise MalformedHeaderError(path, f'scale must be finite and nonzero, got {scale_text}', offset=scale_at)

    dtype = '<f4' if scale < 0 else '>f4'
    values = _payload(path, data, offset, dtype, width * height).reshape(height, width)
    return ImageGrid(np.flipud(values), allow_nonfinite=True)


def write_pfm(path: str, grid: ImageGrid) -> None:
    """Write a single-channel grid as little-endian PFM (scale -1, bottom-to-top rows)."""
    if grid.channels != 1:
        raise DimensionMismatchError(f'PFM output needs 1 channel, got {grid.channels}')
    values = np.ascontiguousarray(np.flipud(grid.data[:, :, 0]), dtype='<f4')
    with open(path, 'wb') as f:
        f.write(f'Pf\n{grid.width} {grid.height}\n-1.0\n'.encode('ascii'))
        f.write(values.tobytes())


# ---------------------------------------------------------------------------
# FLO
# ---------------------------------------------------------------------------

def read_flo(path: str) -> ImageGrid:
    """
    Read a .flo optical flow file: 'PIEH' tag, int32 width and height, then
    interleaved float32 (u, v) pairs in row-major order, all little-endian.

    Args:
        path (str): .flo file

    Returns:
        2-channel ImageGrid
    """
    data = _read_bytes(path)
    if len(data) < 12:
        raise TruncatedPayloadError(path, f'header needs 12 bytes, file has {len(data)}', offset=len(data))
    magic = np.frombuffer(data, dtype='<f4', count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise MalformedHeaderError(path, f'bad magic tag {data[:4]!r}, expected {FLO_TAG!r}', offset=0)

    width, height = (int(v) for v in np.frombuffer(data, dtype='<i4', count=2, offset=4))
    if width < 1 or height < 1:
        raise MalformedHeaderError(path, f'invalid size {width}x{height}', offset=4)

    flow = _payload(path, data, 12, '<f4', width * height * 2).reshape(height, width, 2)
    return ImageGrid(flow, allow_nonfinite=True)


def write_flo(path: str, grid: ImageGrid) -> None:
    if grid.channels != 2:
        raise DimensionMismatchError(f'.flo output needs 2 channels, got {grid.channels}')
    with open(path, 'wb') as f:
        f.write(FLO_TAG)
        f.write(np.array([grid.width, grid.height], dtype='<i4').tobytes())
        f.write(np.ascontiguousarray(grid.data, dtype='<f4').tobytes())


# ---------------------------------------------------------------------------
# sparse sample lists
# ---------------------------------------------------------------------------

def _parse_sparse_header(path: str, line: str) -> Tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != SPARSE_TAG or not all(p.isdigit() for p in parts[1:]):
        raise MalformedHeaderError(path, f'expected "{SPARSE_TAG} <width> <height> <channels>", found {line!r}', line=1)
    width, height, channels = (int(p) for p in parts[1:])
    if width < 1 or height < 1 or channels < 1:
        raise MalformedHeaderError(path, f'invalid size {width}x{height}x{channels}', line=1)
    return width, height, channels


def read_sparse(path: str) -> SparseField:
    """
    Read a sparse sample file.

    Records must be in strict raster order (which also rules out duplicates), every
    site must lie inside the raster, every value must be finite and there must be at
    least one record.

    Args:
        path (str): .sparse file

    Returns:
        SparseField
    """
    data = _read_bytes(path)
    try:
        text = data.decode('ascii')
    except UnicodeDecodeError as e:
        line = data.count(b'\n', 0, e.start) + 1
        error = MalformedHeaderError if line == 1 else MalformedRecordError
        raise error(path, f'non-ASCII byte 0x{data[e.start]:02x}', offset=e.start, line=line)
    lines = text.splitlines()

    if not lines:
        raise MalformedHeaderError(path, 'empty file', line=1)
    width, height, channels = _parse_sparse_header(path, lines[0])

    values = np.zeros((height, width, channels))
    confidence = np.zeros((height, width, 1))
    previous = -1
    records = 0

    for number, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            raise MalformedRecordError(path, 'blank line', line=number)
        if len(parts) != 2 + channels:
            raise MalformedRecordError(path, f'expected {2 + channels} fields, found {len(parts)}', line=number)
        try:
            x, y = int(parts[0]), int(parts[1])
            vec = [float(p) for p in parts[2:]]
        except ValueError:
            raise MalformedRecordError(path, f'cannot parse record {line!r}', line=number)

        if not (0 <= x < width and 0 <= y < height):
            raise SiteOutOfBoundsError(path, f'site ({x}, {y}) outside the {width}x{height} raster', line=number)
        if not all(np.isfinite(vec)):
            raise MalformedRecordError(path, f'non-finite value at site ({x}, {y})', line=number)

        index = y * width + x
        if index == previous:
            raise MalformedRecordError(path, f'duplicate site ({x}, {y})', line=number)
        if index < previous:
            raise MalformedRecordError(path, f'site ({x}, {y}) is out of raster order', line=number)
        previous = index

        values[y, x] = vec
        confidence[y, x, 0] = 1.0
        records += 1

    if records == 0:
        raise TruncatedPayloadError(path, 'no sample records', line=len(lines) + 1)
    return SparseField(ImageGrid(values), ImageGrid(confidence))


def write_sparse(path: str, sparse: SparseField) -> None:
    """Write the known sites of a sparse field in raster order, values in round-trip exact repr form."""
    sites = sparse.sites()
    if not sites:
        raise NoSamplesError('refusing to write a sparse file without samples')
    out: List[str] = [f'{SPARSE_TAG} {sparse.width} {sparse.height} {sparse.channels}']
    for x, y, vec in sites:
        out.append(' '.join([str(x), str(y)] + [repr(v) for v in vec]))
    with open(path, 'w', encoding='ascii') as f:
        f.write('\n'.join(out) + '\n')


# ---------------------------------------------------------------------------
# dense field dispatch
# ---------------------------------------------------------------------------

def _extension(path: str) -> str:
    return os.path.splitext(path)[1].lower()


def read_field(path: str) -> ImageGrid:
    """Read a dense field by extension: .pfm, .flo, or a PGM/PPM image."""
    ext = _extension(path)
    if ext == '.pfm':
        return read_pfm(path)
    elif ext == '.flo':
        return read_flo(path)
    elif ext in ('.pgm', '.ppm', '.pnm'):
        return read_image(path)
    raise FormatParseError(path, f'unknown field format {ext!r}, expected .pfm, .flo, .pgm or .ppm')


def write_field(path: str, grid: ImageGrid) -> str:
    """
    Write a dense field, choosing the format from the extension or else from the channel count.

    Returns:
        the path actually written (an extension is appended when missing)
    """
    ext = _extension(path)
    if ext not in ('.pfm', '.flo'):
        if grid.channels == 1:
            ext = '.pfm'
        elif grid.channels == 2:
            ext = '.flo'
        else:
            raise DimensionMismatchError(f'no field format for {grid.channels} channels')
        if _extension(path) == '':
            path = path + ext
        logging.debug(f'writing {path} as {ext}')

    if ext == '.pfm':
        write_pfm(path, grid)
    else:
        write_flo(path, grid)
    return path
