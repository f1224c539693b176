"""Total-variation denoising and inpainting by checkerboard MM sweeps.

The criterion is

    sum_{(i,j) in S} (y_ij - mu_ij)^2
        + lam * sum_{i,j} sum_{(k,l) in N(i,j)} sqrt((mu_ij - mu_kl)^2 + eps)

with 4-neighborhoods clipped at the border, so each adjacent pair appears
twice in the penalty.  Each penalty term is majorized by a quadratic through
the concavity of ``sqrt(t + eps)``.  Pixels of one checkerboard colour share no
neighbours, so the surrogate separates and every pixel of that colour gets a
closed-form weighted-average update.  The weights are refreshed between the
two colours.

Images are plain 2-D float arrays, rows first.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import MMProblem, StoppingRule, run_mm

__all__ = [
    "TVConfig",
    "tv_norm",
    "tv_objective",
    "checkerboard_sweep",
    "update_block",
    "initial_image",
    "restore",
    "TVProblem",
    "read_pgm",
    "write_pgm",
    "read_mask",
    "to_bytes",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TVConfig:
    lam: float = 15.0
    eps: float = 1.0
    sweeps: int = 100
    tol: float = 1e-4

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.sweeps < 1:
            raise ValueError("sweeps must be a positive integer")


def tv_norm(x, eps):
    return np.sqrt(np.square(x) + eps)


def _check_shapes(mu, y, mask):
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if mu.ndim != 2 or mu.shape != y.shape or mask.shape != y.shape:
        raise ValueError(f"shape mismatch: mu {mu.shape}, y {y.shape}, mask {mask.shape}")
    return mu, y, mask


def tv_objective(mu, y, mask, config: TVConfig) -> float:
    mu, y, mask = _check_shapes(mu, y, mask)
    fit = np.sum((y - mu)[mask] ** 2)
    # each horizontal and vertical adjacency is visited from both ends
    pen = tv_norm(np.diff(mu, axis=1), config.eps).sum() + tv_norm(np.diff(mu, axis=0), config.eps).sum()
    return float(fit + config.lam * 2.0 * pen)


def _neighbor_terms(mu, eps):
    """Per-pixel sums of ``mu_kl / w`` and ``1 / w`` over clipped 4-neighbours."""
    num = np.zeros_like(mu)
    den = np.zeros_like(mu)
    # horizontal pairs
    inv = 1.0 / tv_norm(mu[:, 1:] - mu[:, :-1], eps)
    num[:, :-1] += inv * mu[:, 1:]
    den[:, :-1] += inv
    num[:, 1:] += inv * mu[:, :-1]
    den[:, 1:] += inv
    # vertical pairs
    inv = 1.0 / tv_norm(mu[1:, :] - mu[:-1, :], eps)
    num[:-1, :] += inv * mu[1:, :]
    den[:-1, :] += inv
    num[1:, :] += inv * mu[:-1, :]
    den[1:, :] += inv
    return num, den


def update_block(mu, y, mask, config: TVConfig, parity: int) -> np.ndarray:
    """Update every pixel with ``(i + j) % 2 == parity``; returns a new array.

    Pixels in S take ``(y + lam sum mu_kl / w) / (1 + lam sum 1 / w)``; pixels
    outside S take the neighbour average weighted by ``1 / w``, where ``w`` is
    the TV norm of the current difference.  Because each pair is counted twice
    in the penalty, the data weight is 1 relative to ``lam``; written with the
    data term doubled this is ``(2y + 2 lam sum) / (2 + 2 lam sum)``.
    """
    mu, y, mask = _check_shapes(mu, y, mask)
    if mu.size == 1 and not mask.all():
        raise ValueError("isolated pixel outside S has no neighbours: update undefined")
    num, den = _neighbor_terms(mu, config.eps)
    ii, jj = np.indices(mu.shape)
    block = (ii + jj) % 2 == parity
    lam = config.lam
    out = mu.copy()
    inside = block & mask
    outside = block & ~mask
    out[inside] = (y[inside] + lam * num[inside]) / (1.0 + lam * den[inside])
    if np.any(outside):
        if np.any(den[outside] == 0):
            raise ValueError("pixel outside S has no neighbours: update undefined")
        out[outside] = num[outside] / den[outside]
    if log.isEnabledFor(logging.DEBUG):
        log.debug("parity %d: max TV weight %.3g", parity, den.max(initial=0.0))
    return out


def checkerboard_sweep(mu, y, mask, config: TVConfig) -> np.ndarray:
    """Even-parity pixels first, then odd, refreshing weights in between."""
    half = update_block(mu, y, mask, config, 0)
    return update_block(half, y, mask, config, 1)


def initial_image(y, mask) -> np.ndarray:
    """Accepted pixels keep their values; the rest start at the accepted mean."""
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    mu = y.copy()
    if mask.any():
        mu[~mask] = y[mask].mean()
    else:
        warnings.warn("no accepted pixels: the restoration is data-free", RuntimeWarning)
        mu[:] = y.mean()
    return mu


class TVProblem(MMProblem):
    sense = "minimize"
    monotone = True

    def __init__(self, y, mask, config: TVConfig):
        _, self.y, self.mask = _check_shapes(y, y, mask)
        self.config = config
        self.shape = self.y.shape
        self.dimension = self.y.size

    def objective(self, theta):
        return tv_objective(theta.reshape(self.shape), self.y, self.mask, self.config)

    def mm_map(self, theta):
        return checkerboard_sweep(theta.reshape(self.shape), self.y, self.mask, self.config).ravel()


def restore(y, mask=None, config: TVConfig = TVConfig(), mu0=None):
    """Run up to ``config.sweeps`` sweeps, stopping when no pixel moves more than ``config.tol``.

    Returns the restored image and the objective trace.  Parameter snapshots
    other than the first and last are not retained.
    """
    y = np.asarray(y, dtype=float)
    mask = np.ones(y.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    problem = TVProblem(y, mask, config)
    mu0 = initial_image(y, mask) if mu0 is None else np.asarray(mu0, dtype=float)
    rule = StoppingRule(max_iterations=config.sweeps, param_tol=config.tol)
    trace, report = run_mm(problem, mu0.ravel(), rule, store_iterates=False)
    return report.theta_final.reshape(y.shape), trace


def _read_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit PGM as a float array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise ValueError(f"{path}: malformed PGM header")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    if len(data) - pos < width * height:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).astype(float)


def to_bytes(image) -> np.ndarray:
    """Clamp to [0, 255] and round half up."""
    return np.floor(np.clip(np.asarray(image, dtype=float), 0.0, 255.0) + 0.5).astype(np.uint8)


def write_pgm(path, image) -> None:
    pixels = to_bytes(image)
    height, width = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_mask(path, shape=None) -> np.ndarray:
    """PGM mask: 0 marks an excluded pixel, 255 an accepted one."""
    m = read_pgm(path)
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} does not match image shape {tuple(shape)}")
    bad = ~np.isin(m, (0.0, 255.0))
    if bad.any():
        raise ValueError("mask pixels must be 0 or 255")
    return m == 255.0
