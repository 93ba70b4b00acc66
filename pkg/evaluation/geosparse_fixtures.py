from typing import Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from interpolation.geosparse_core import GUIDANCE_SCALE, ImageGrid, ParameterDomainError

"""
Seeded synthetic scenes used by the experiment commands and the test-suite.

The disparity fixture is a block checkerboard: every disparity edge sits in the
middle of a short colour ramp of the guidance image, and blocks of the same colour
do not share a disparity. Colour alone therefore only partly predicts disparity.
"""

DEFAULT_BLOCK = 64
DEFAULT_NOISE = 50.0
DEFAULT_EDGE_WIDTH = 5

# the two checkerboard colours (RGB)
PALETTE = np.array([[70.0, 70.0, 70.0], [185.0, 185.0, 185.0]])

# overlapping disparity ranges of the dark and the light blocks
DARK_DISPARITY = (1.0, 100.0)
LIGHT_DISPARITY = (41.0, 140.0)

MAX_FLOW = 20.0


def _check_size(width: int, height: int, block: int) -> None:
    if width < 1 or height < 1:
        raise ParameterDomainError(f'invalid fixture size {width}x{height}')
    if block < 1:
        raise ParameterDomainError(f'block size must be >= 1, got {block}')


def _block_index(width: int, height: int, block: int) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.arange(height) // block
    cols = np.arange(width) // block
    return np.meshgrid(rows, cols, indexing='ij')


def _textured(colours: np.ndarray, rng: np.random.Generator, noise: float) -> ImageGrid:
    guidance = colours + rng.normal(0.0, noise, size=colours.shape) if noise > 0 else colours
    return ImageGrid(np.clip(guidance, *GUIDANCE_SCALE), value_scale=GUIDANCE_SCALE)


def make_piecewise_fixture(width: int = 256, height: int = 256, seed: int = 0, block: int = DEFAULT_BLOCK,
                           noise: float = DEFAULT_NOISE, edge_width: int = DEFAULT_EDGE_WIDTH) -> Tuple[ImageGrid, ImageGrid]:
    """
    Piecewise-constant disparity map with an aligned, textured colour guidance image.

    Args:
        width (int): image width
        height (int): image height
        seed (int): random seed
        block (int): side of the square constant-disparity blocks
        noise (float): standard deviation of the guidance texture
        edge_width (int): width of the colour ramp across block borders, 1 for hard edges

    Returns:
        tuple(3-channel guidance, 1-channel ground-truth disparity)
    """
    _check_size(width, height, block)
    rng = np.random.default_rng(seed)
    block_rows, block_cols = _block_index(width, height, block)
    n_rows, n_cols = block_rows[-1, 0] + 1, block_cols[0, -1] + 1

    parity = (block_rows + block_cols) % 2
    dark = rng.uniform(*DARK_DISPARITY, size=(n_rows, n_cols))
    light = rng.uniform(*LIGHT_DISPARITY, size=(n_rows, n_cols))
    disparity = np.where(parity == 0, dark[block_rows, block_cols], light[block_rows, block_cols])

    colours = PALETTE[parity]
    if edge_width > 1:
        colours = uniform_filter(colours, size=(edge_width, edge_width, 1), mode='nearest')
    guidance = _textured(colours, rng, noise)
    return guidance, ImageGrid(disparity)


def make_random_guidance(width: int, height: int, seed: int = 0, channels: int = 3) -> ImageGrid:
    """Uniform random guidance in [0, 255], used for timing runs."""
    _check_size(width, height, 1)
    rng = np.random.default_rng(seed)
    return ImageGrid(rng.uniform(*GUIDANCE_SCALE, size=(height, width, channels)), value_scale=GUIDANCE_SCALE)


def make_flow_fixture(width: int = 128, height: int = 128, seed: int = 0, block: int = 32,
                      noise: float = DEFAULT_NOISE) -> Tuple[ImageGrid, ImageGrid]:
    """
    Piecewise-constant (u, v) flow with one random guidance colour per block.

    Returns:
        tuple(3-channel guidance, 2-channel ground-truth flow)
    """
    _check_size(width, height, block)
    rng = np.random.default_rng(seed)
    block_rows, block_cols = _block_index(width, height, block)
    n_rows, n_cols = block_rows[-1, 0] + 1, block_cols[0, -1] + 1

    vectors = rng.uniform(-MAX_FLOW, MAX_FLOW, size=(n_rows, n_cols, 2))
    colours = rng.uniform(*GUIDANCE_SCALE, size=(n_rows, n_cols, 3))
    guidance = _textured(colours[block_rows, block_cols], rng, noise)
    return guidance, ImageGrid(vectors[block_rows, block_cols])
