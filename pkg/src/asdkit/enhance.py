"""Parameter-free feature enhancement (SimAM).

Each spectrogram entry z gets an attention weight from a closed-form
energy e*(z) = 4*(var + lambda) / ((z - mean)^2 + 2*var + 2*lambda), with
mean and population variance taken over all entries of the matrix being
enhanced; the weight is sigmoid(1/e*).  Entries far from the mean carry
more information and receive larger weights; every weight lies strictly
between 0.5 and 1, so enhancement shrinks magnitudes without flipping
signs.

Three modes:

* global      -- one statistics pool over the whole spectrogram.
* local       -- the spectrogram is cut into tiles (32x32 by default, edge
                 tiles smaller) and each tile is enhanced independently.
* customized  -- per-machine-type dispatch between global and local via a
                 mode map.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .filterbank import LogMelSpectrogram

ENHANCE_MODES = ("global", "local", "customized")


class NumericInputError(ValueError):
    """Input contains NaN or infinity."""


@dataclass(frozen=True)
class SimamParams:
    e_lambda: float = 1e-4
    mode: str = "global"
    tile: tuple[int, int] = (32, 32)
    mode_map: dict = field(default_factory=dict)
    default_mode: str = "global"

    def __post_init__(self):
        if self.e_lambda <= 0:
            raise ValueError(f"lambda must be positive, got {self.e_lambda}")
        if self.mode not in ENHANCE_MODES:
            raise ValueError(f"mode {self.mode!r} not in {ENHANCE_MODES}")
        if len(self.tile) != 2 or min(self.tile) < 1:
            raise ValueError(f"tile dims must be >= 1, got {self.tile}")
        if self.default_mode not in ("global", "local"):
            raise ValueError(f"default_mode must be global or local, got {self.default_mode!r}")
        for machine, mode in self.mode_map.items():
            if mode not in ("global", "local"):
                raise ValueError(f"mode map entry {machine}={mode!r} must be global or local")


def simam_weights(x, e_lambda: float = 1e-4) -> np.ndarray:
    """Attention weights for every entry of a matrix.

    Uses mean and population variance over all entries (the target neuron
    included).  A constant matrix yields sigmoid(0.5) everywhere.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 1:
        raise ValueError("cannot compute weights of an empty matrix")
    if e_lambda <= 0:
        raise ValueError(f"lambda must be positive, got {e_lambda}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("input contains non-finite entries")
    mu = x.mean()
    var = x.var()
    # 1/e* = ((z-mu)^2 + 2*var + 2*lambda) / (4*(var + lambda))
    inv_energy = ((x - mu) ** 2 + 2.0 * var + 2.0 * e_lambda) / (4.0 * (var + e_lambda))
    return 1.0 / (1.0 + np.exp(-inv_energy))


def enhance_global(x: LogMelSpectrogram, params: SimamParams = SimamParams()) -> LogMelSpectrogram:
    """Multiply the spectrogram elementwise by its whole-matrix weights."""
    weights = simam_weights(x.values, params.e_lambda)
    return replace(x, values=weights * x.values, enhancement="global")


def enhance_local(x: LogMelSpectrogram, params: SimamParams = SimamParams()) -> LogMelSpectrogram:
    """Enhance tile by tile; a tile covering the whole matrix equals global."""
    tile_h, tile_w = params.tile
    values = x.values
    out = np.empty_like(values)
    for i in range(0, values.shape[0], tile_h):
        for j in range(0, values.shape[1], tile_w):
            tile = values[i:i + tile_h, j:j + tile_w]
            out[i:i + tile_h, j:j + tile_w] = simam_weights(tile, params.e_lambda) * tile
    return replace(x, values=out, enhancement="local")


def enhance_customized(x: LogMelSpectrogram, machine_type: str,
                       params: SimamParams = SimamParams()) -> LogMelSpectrogram:
    """Dispatch to global or local per machine type; unmapped types use the default."""
    mode = params.mode_map.get(machine_type, params.default_mode)
    if mode == "local":
        out = enhance_local(x, params)
    else:
        out = enhance_global(x, params)
    return replace(out, enhancement="customized")


def enhance(x: LogMelSpectrogram, machine_type: str, params: SimamParams) -> LogMelSpectrogram:
    """Apply the mode configured in ``params``."""
    if params.mode == "global":
        return enhance_global(x, params)
    if params.mode == "local":
        return enhance_local(x, params)
    return enhance_customized(x, machine_type, params)


def parse_mode_map(path) -> tuple[dict, str]:
    """Read a ``machine_type=global|local`` file; a ``default=`` line is allowed.

    Blank lines and ``#`` comments are skipped.  Returns (mapping, default).
    """
    mapping: dict = {}
    default = "global"
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if value not in ("global", "local"):
                raise ValueError(
                    f"{path}:{lineno}: mode for {key!r} must be global or local, got {value!r}")
            if key == "default":
                default = value
            else:
                mapping[key] = value
    return mapping, default
