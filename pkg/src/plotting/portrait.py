"""
Portrait module - phase portraits of the normal forms rendered to SVG.

Equilibria are coloured by kind, separatrices are the integrated stable and unstable branches
of every saddle (overlaid with the first-integral level through the saddle where one exists),
and a regular grid of seeds gives the background trajectories. Output is byte-stable for a fixed
configuration: the SVG hash salt is fixed and no date is written.
"""
import io
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.core.exceptions import IntegrationError, PreconditionError  # noqa: E402
from src.core.logger import logger  # noqa: E402
from src.dynamics.flow import IntegratorConfig, field_rhs, solve  # noqa: E402
from src.dynamics.normal_forms import (CONSERVATIVE_FAMILIES, Equilibrium, FirstIntegral,  # noqa: E402
                                       VectorFieldSpec, equilibria, jacobian)
from src.storage.artifacts import write_bytes  # noqa: E402

KIND_COLORS = {
    "center": "#2ca02c",
    "saddle": "#d62728",
    "focus": "#9467bd",
    "attractor": "#1f77b4",
    "repeller": "#ff7f0e",
    "degenerate": "#000000",
}
TRAJECTORY_COLOR = "#8c8c8c"
SEPARATRIX_COLOR = "#d62728"
TRAJECTORY_WIDTH = 0.6
SEPARATRIX_WIDTH = 1.4
TRAJECTORY_GRID = 9
TRAJECTORY_TIME = 4.0
SEPARATRIX_OFFSET = 1e-6
SEPARATRIX_TIME = 40.0
CONTOUR_GRID = 401
SVG_SALT = "reversible-chaos"


@dataclass(frozen=True)
class Window:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        values = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(np.isfinite(v) for v in values):
            raise PreconditionError(f"window must be finite, got {values}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise PreconditionError(f"window must have positive extent, got {values}")

    @classmethod
    def parse(cls, text: str) -> "Window":
        """'xmin,xmax,ymin,ymax'"""
        try:
            xmin, xmax, ymin, ymax = (float(v) for v in text.split(","))
        except ValueError as e:
            raise PreconditionError(f"window needs four comma-separated numbers, got '{text}'") from e
        return cls(xmin, xmax, ymin, ymax)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return ((p[:, 0] >= self.xmin) & (p[:, 0] <= self.xmax)
                & (p[:, 1] >= self.ymin) & (p[:, 1] <= self.ymax))

    def clip(self, polyline: np.ndarray) -> list[np.ndarray]:
        """Runs of consecutive points inside the window."""
        inside = self.contains(polyline)
        runs, start = [], None
        for i, flag in enumerate(np.append(inside, False)):
            if flag and start is None:
                start = i
            elif not flag and start is not None:
                if i - start >= 2:
                    runs.append(polyline[start:i])
                start = None
        return runs


@dataclass(frozen=True)
class PortraitData:
    spec: VectorFieldSpec
    window: Window
    equilibria: list[Equilibrium]
    separatrices: list[np.ndarray] = field(default_factory=list)
    trajectories: list[np.ndarray] = field(default_factory=list)


def _orbit(spec: VectorFieldSpec, p, t: float, cfg: IntegratorConfig) -> np.ndarray | None:
    try:
        sol = solve(field_rhs(spec), (0.0, t), np.asarray(p, dtype=float), cfg, allow_escape=True)
    except IntegrationError as e:
        logger.debug(f"portrait orbit from {np.asarray(p).tolist()} dropped: {e}")
        return None
    return sol.y.T


def _separatrices(spec: VectorFieldSpec, eq: Equilibrium, window: Window, cfg: IntegratorConfig) -> list[np.ndarray]:
    values, vectors = np.linalg.eig(jacobian(spec, eq.position))
    out = []
    for value, vector in zip(values, vectors.T):
        if abs(value.imag) > 0 or value.real == 0:
            continue
        direction = vector.real / np.linalg.norm(vector.real)
        t = SEPARATRIX_TIME if value.real > 0 else -SEPARATRIX_TIME
        for sign in (1.0, -1.0):
            orbit = _orbit(spec, eq.position + sign * SEPARATRIX_OFFSET * direction, t, cfg)
            if orbit is not None:
                out.extend(window.clip(np.vstack([eq.position[None, :], orbit])))
    return out


def portrait_data(spec: VectorFieldSpec, window: Window, cfg: IntegratorConfig | None = None,
                  grid: int = TRAJECTORY_GRID) -> PortraitData:
    """Equilibria inside the window, saddle separatrices and a grid of trajectories."""
    cfg = cfg or IntegratorConfig()
    points = [eq for eq in equilibria(spec) if bool(window.contains(eq.position)[0])]
    separatrices = []
    for eq in points:
        if eq.kind == "saddle":
            separatrices.extend(_separatrices(spec, eq, window, cfg))
    trajectories = []
    xs = np.linspace(window.xmin, window.xmax, grid + 2)[1:-1]
    ys = np.linspace(window.ymin, window.ymax, grid + 2)[1:-1]
    for x in xs:
        for y in ys:
            forward = _orbit(spec, (x, y), TRAJECTORY_TIME, cfg)
            backward = _orbit(spec, (x, y), -TRAJECTORY_TIME, cfg)
            if forward is None or backward is None:
                continue
            trajectories.extend(window.clip(np.vstack([backward[::-1], forward[1:]])))
    logger.info(f"Portrait {spec.family.value} lambda={spec.lam}: {len(points)} equilibria, "
                f"{len(separatrices)} separatrix arcs, {len(trajectories)} trajectory arcs")
    return PortraitData(spec=spec, window=window, equilibria=points, separatrices=separatrices,
                        trajectories=trajectories)


def render_portrait(data: PortraitData) -> bytes:
    """SVG bytes for the portrait."""
    w = data.window
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 6.0))
        for arc in data.trajectories:
            ax.plot(arc[:, 0], arc[:, 1], color=TRAJECTORY_COLOR, linewidth=TRAJECTORY_WIDTH)
        for arc in data.separatrices:
            ax.plot(arc[:, 0], arc[:, 1], color=SEPARATRIX_COLOR, linewidth=SEPARATRIX_WIDTH)
        if data.spec.family in CONSERVATIVE_FAMILIES:
            fi = FirstIntegral(data.spec.family, data.spec.lam)
            levels = sorted({round(float(fi.value(eq.position)), 12) for eq in data.equilibria
                             if eq.kind in ("saddle", "degenerate")})
            if levels:
                X, Y = np.meshgrid(np.linspace(w.xmin, w.xmax, CONTOUR_GRID), np.linspace(w.ymin, w.ymax, CONTOUR_GRID))
                H = fi.value(np.stack([X, Y], axis=-1))
                ax.contour(X, Y, H, levels=levels, colors=SEPARATRIX_COLOR, linewidths=0.5 * SEPARATRIX_WIDTH,
                           linestyles="dashed")
        seen = set()
        for eq in data.equilibria:
            label = eq.kind if eq.kind not in seen else None
            seen.add(eq.kind)
            ax.plot([eq.position[0]], [eq.position[1]], marker="o", markersize=6, linestyle="none",
                    color=KIND_COLORS.get(eq.kind, "#000000"), label=label, zorder=3)
        if seen:
            ax.legend(loc="upper right", fontsize=8)
        ax.set_xlim(w.xmin, w.xmax)
        ax.set_ylim(w.ymin, w.ymax)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(f"{data.spec.family.value}, lambda = {data.spec.lam:g}")
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buffer.getvalue()


def write_portrait(spec: VectorFieldSpec, window: Window, path, cfg: IntegratorConfig | None = None) -> PortraitData:
    data = portrait_data(spec, window, cfg)
    write_bytes(path, render_portrait(data))
    logger.info(f"Portrait written to {path}")
    return data
