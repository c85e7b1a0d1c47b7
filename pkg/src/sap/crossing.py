"""
Crossing module - the compact sets K_l that the annulus map stretches across the copies of the
target rectangle, and the direct stretching-along-paths check on sampled paths.
"""
from dataclasses import dataclass, field

import numpy as np

from src.core.config import GRID, PATHS, SEED
from src.core.exceptions import PreconditionError, ResolutionError
from src.core.logger import logger
from src.sap.lifted import LiftBox, LiftedMap, CellRegion
from src.sap.twist import TwistCertificate, SOURCE_WINDOW, TARGET_WINDOW, TURN

MAX_DEPTH = 10
# A cell whose corner images spread over more than this many window units is split
SPLIT_SPAN = 0.25
PATH_SAMPLES = 257
MAX_REFINE = 16
MAX_PATH_POINTS = 40000
MIN_PATHS = 8
INVARIANT_TOL = 1e-9


def target_copy(level: int) -> LiftBox:
    """The level-th copy [2l + 1, 2l + 3/2] x [-1, 1] of the target rectangle, crossed along theta."""
    t0, t1 = TARGET_WINDOW
    return LiftBox(TURN * level + t0, TURN * level + t1, -1.0, 1.0, axis=0)


@dataclass(frozen=True)
class CrossingSets:
    """K_l for each forced level l, as cell coverings of the source rectangle."""
    sets: dict[int, CellRegion]
    source: LiftBox
    grid: int
    depth: int
    evaluations: int

    @property
    def nonempty(self) -> list[int]:
        return [level for level, cells in sorted(self.sets.items()) if not cells.empty]

    def __getitem__(self, level: int) -> CellRegion:
        return self.sets[level]

    def pairwise_disjoint(self) -> bool:
        levels = self.nonempty
        return all(self.sets[a].disjoint_from(self.sets[b]) for i, a in enumerate(levels) for b in levels[i + 1:])

    def inside_source(self) -> bool:
        s = self.source
        return all(bool(np.all((c.cells[:, 0] >= s.x0) & (c.cells[:, 1] <= s.x1) &
                               (c.cells[:, 2] >= s.y0) & (c.cells[:, 3] <= s.y1)))
                   for c in self.sets.values() if not c.empty)


class _Cache:
    """Memoised lifted-map evaluations keyed by exact lift coordinates."""

    def __init__(self, lifted: LiftedMap):
        self.lifted = lifted
        self.values: dict[tuple[float, float], tuple[float, float]] = {}

    def __call__(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keys = list(zip(x.tolist(), y.tolist()))
        missing = sorted({k for k in keys if k not in self.values})
        if missing:
            mx = np.array([k[0] for k in missing])
            my = np.array([k[1] for k in missing])
            X, Y = self.lifted(mx, my)
            for k, a, b in zip(missing, np.asarray(X, dtype=float), np.asarray(Y, dtype=float)):
                self.values[k] = (float(a), float(b))
        out = np.array([self.values[k] for k in keys]).reshape(-1, 2)
        return out[:, 0], out[:, 1]


def _corners(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Corner coordinates in the order (x0, y0), (x1, y0), (x0, y1), (x1, y1), each block one per cell."""
    return (np.concatenate([cells[:, 0], cells[:, 1], cells[:, 0], cells[:, 1]]),
            np.concatenate([cells[:, 2], cells[:, 2], cells[:, 3], cells[:, 3]]))


def _in_copy(box: LiftBox, X, Y) -> np.ndarray:
    """Image in the copy, allowing rounding on the invariant circles rho = +-1."""
    return box.contains(X, np.where(np.abs(Y) <= 1.0 + INVARIANT_TOL, np.clip(Y, -1.0, 1.0), Y))


def _refine(cache: _Cache, cells: np.ndarray, max_depth: int) -> tuple[np.ndarray, int]:
    final = []
    active = cells
    depth = 0
    while active.size:
        X, _ = cache(*_corners(active))
        c00, c10, c01, c11 = X.reshape(4, -1)
        stacked = np.vstack([c00, c10, c01, c11])
        span = np.where(np.all(np.isfinite(stacked), axis=0), np.ptp(stacked, axis=0), np.inf)
        split = (span > SPLIT_SPAN) & (depth < max_depth)
        final.append(active[~split])
        if not np.any(split):
            break
        parents = active[split]
        vary_x = np.maximum(np.abs(c10 - c00), np.abs(c11 - c01))[split]
        vary_y = np.maximum(np.abs(c01 - c00), np.abs(c11 - c10))[split]
        along_x = ~(vary_x <= 0.5 * SPLIT_SPAN)
        along_y = ~(vary_y <= 0.5 * SPLIT_SPAN)
        neither = ~along_x & ~along_y
        along_x |= neither & (vary_x >= vary_y)
        along_y |= neither & (vary_y > vary_x)
        children = []
        for cell, sx, sy in zip(parents, along_x, along_y):
            x0, x1, y0, y1 = cell
            xs = (x0, 0.5 * (x0 + x1), x1) if sx else (x0, x1)
            ys = (y0, 0.5 * (y0 + y1), y1) if sy else (y0, y1)
            for i in range(len(xs) - 1):
                for j in range(len(ys) - 1):
                    children.append((xs[i], xs[i + 1], ys[j], ys[j + 1]))
        active = np.array(children)
        depth += 1
    return np.vstack(final), depth


def crossing_sets(lifted: LiftedMap, cert: TwistCertificate, source: LiftBox | None = None,
                  grid: int = GRID, max_depth: int = MAX_DEPTH) -> CrossingSets:
    """
    K_l = cells of the source rectangle whose centre image lands in the l-th target copy with
    |rho'| <= 1, for l between the certificate's j pair. A resolved cell also joins K_l when one of
    its corner images lands there; resolved cells span less than the gap between copies, so the
    sets stay disjoint.

    The grid starts at grid x grid cells and splits every cell whose corner images spread over
    more than a quarter window, up to max_depth times.
    """
    if not cert.passed:
        raise PreconditionError(f"crossing sets need a passing twist certificate (margin {cert.margin:.4g})")
    if grid < 2:
        raise PreconditionError(f"grid must be at least 2, got {grid}")
    source = source or LiftBox(SOURCE_WINDOW[0], SOURCE_WINDOW[1], -1.0, 1.0, axis=1)
    xs, ys = source.grid(grid, grid)
    gx0, gy0 = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
    gx1, gy1 = np.meshgrid(xs[1:], ys[1:], indexing="ij")
    cells = np.column_stack([gx0.ravel(), gx1.ravel(), gy0.ravel(), gy1.ravel()])

    cache = _Cache(lifted)
    cells, depth = _refine(cache, cells, max_depth)
    cx = 0.5 * (cells[:, 0] + cells[:, 1])
    cy = 0.5 * (cells[:, 2] + cells[:, 3])
    X, Y = cache(cx, cy)
    corner_x, corner_y = _corners(cells)
    CX, CY = cache(corner_x, corner_y)
    CX, CY = CX.reshape(4, -1), CY.reshape(4, -1)
    resolved = np.all(np.isfinite(CX), axis=0) & (np.ptp(np.where(np.isfinite(CX), CX, 0.0), axis=0) <= SPLIT_SPAN)
    sets = {}
    for level in cert.levels:
        box = target_copy(level)
        corner_hit = np.any(_in_copy(box, CX, CY), axis=0) & resolved
        sets[level] = CellRegion(cells[_in_copy(box, X, Y) | corner_hit])
    result = CrossingSets(sets=sets, source=source, grid=grid, depth=depth, evaluations=len(cache.values))
    found = result.nonempty
    logger.debug(f"crossing sets: levels {found} nonempty of {cert.levels}, {cells.shape[0]} cells, "
                 f"depth {depth}, {len(cache.values)} map evaluations")
    if len(found) < cert.m - 1:
        raise ResolutionError(f"only {len(found)} nonempty crossing sets at grid {grid}, "
                              f"expected at least {cert.m - 1}")
    return result


# ----------------------------------------------------------------------
# Stretching along paths
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class StretchResult:
    passed: bool
    paths: int
    crossed: int
    witness: np.ndarray | None = None
    witness_index: int | None = None
    runs: list[tuple[float, float]] = field(default_factory=list)


def sample_paths(source: LiftBox, paths: int, seed: int = SEED, samples: int = PATH_SAMPLES):
    """
    Paths across the source rectangle between its two R⁻ sides, as (t, points) pairs.

    Path 0 runs straight through the middle; the others wave about a random offset with random
    frequency and phase, staying inside the rectangle.
    """
    rng = np.random.default_rng(seed)
    lo, hi = source.span
    c0, c1 = source.cross_span
    t = np.linspace(0.0, 1.0, samples)
    out = []
    for k in range(paths):
        if k == 0:
            across = np.full(samples, 0.5 * (c0 + c1))
        else:
            base = c0 + (c1 - c0) * rng.uniform(0.1, 0.9)
            reach = 0.9 * min(base - c0, c1 - base) * rng.uniform(0.2, 1.0)
            freq = int(rng.integers(1, 4))
            phase = rng.uniform(0.0, 2 * np.pi)
            across = base + reach * np.sin(2 * np.pi * freq * t + phase)
        out.append((t.copy(), _path_points(source, t, across, lo, hi)))
    return out


def _path_points(source: LiftBox, t, across, lo, hi) -> np.ndarray:
    along = lo + np.asarray(t) * (hi - lo)
    return np.column_stack([along, across]) if source.axis == 0 else np.column_stack([across, along])


def _refined_images(lifted: LiftedMap, source: LiftBox, target: LiftBox, t: np.ndarray,
                    points: np.ndarray):
    lo, hi = source.span
    axis_s = 1 - source.axis
    across = points[:, axis_s]
    X, Y = lifted(points[:, 0], points[:, 1])
    images = np.column_stack([X, Y])
    t0, t1 = target.span
    jump = 0.25 * (t1 - t0)
    axis_t = target.axis
    for _ in range(MAX_REFINE):
        v = images[:, axis_t]
        dv = np.abs(np.diff(v))
        wide = ~(dv <= jump)
        if not np.any(wide) or t.size >= MAX_PATH_POINTS:
            break
        t_mid = 0.5 * (t[:-1][wide] + t[1:][wide])
        across_mid = 0.5 * (across[:-1][wide] + across[1:][wide])
        new_points = _path_points(source, t_mid, across_mid, lo, hi)
        nX, nY = lifted(new_points[:, 0], new_points[:, 1])
        t = np.concatenate([t, t_mid])
        across = np.concatenate([across, across_mid])
        points = np.vstack([points, new_points])
        images = np.vstack([images, np.column_stack([nX, nY])])
        order = np.argsort(t, kind="stable")
        t, across, points, images = t[order], across[order], points[order], images[order]
    return t, points, images


def stretch_check(lifted: LiftedMap, source: LiftBox, target: LiftBox, K=None,
                  paths: int = PATHS, seed: int = SEED, samples: int = PATH_SAMPLES) -> StretchResult:
    """
    Check on sampled paths that the lifted map stretches the source across the target.

    Every path must contain a sub-path whose image stays in the target, enters it past one R⁻
    side and leaves it past the other, and (when K is given) lies in K. A cell covering K is
    grown by one cell before testing. The first failing path is returned as the witness.
    """
    if paths < MIN_PATHS:
        raise PreconditionError(f"stretching check needs at least {MIN_PATHS} paths, got {paths}")
    if isinstance(K, CellRegion):
        K = K.dilated(1)
    crossed = 0
    runs = []
    for index, (t, points) in enumerate(sample_paths(source, paths, seed, samples)):
        t, points, images = _refined_images(lifted, source, target, t, points)
        side = target.side(images[:, 0], images[:, 1])
        outside = np.nonzero(side != 0)[0]
        found = None
        for i, j in zip(outside[:-1], outside[1:]):
            if j == i + 1 or side[i] * side[j] != -1:
                continue
            run = points[i + 1:j]
            if K is not None and not np.all(K.contains(run[:, 0], run[:, 1])):
                continue
            found = (float(t[i + 1]), float(t[j - 1]))
            break
        if found is None:
            logger.debug(f"stretching fails on path {index} of {paths}")
            return StretchResult(passed=False, paths=paths, crossed=crossed, witness=points,
                                 witness_index=index, runs=runs)
        crossed += 1
        runs.append(found)
    return StretchResult(passed=True, paths=paths, crossed=crossed, runs=runs)
