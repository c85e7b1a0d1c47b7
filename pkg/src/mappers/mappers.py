"""
Mappers - turn constructions, certificates, orbits and scan outcomes into the flat records the
JSON and CSV artifacts are written from.
"""
import numpy as np

from src.sap.certificate import ChaosCertificate

SCAN_COLUMNS = [
    'family', 'lambda1', 'lambda2', 'status', 'stage', 'symbol_count', 'm', 'margin_strip',
    'margin_annulus', 'margin_resampled', 'tau1', 'tau2', 'alpha', 'beta', 'exploratory', 'message',
]

TRAJECTORY_COLUMNS = ['t', 'x', 'y']


def format_float(value) -> str:
    """Round-trip text for a float; empty for None"""
    if value is None:
        return ''
    return format(float(value), '.17g')


def _points(points) -> list[list[float]]:
    return np.asarray(points, dtype=float).tolist()


def map_certificate(cert: ChaosCertificate, strip_interval: tuple[float, float] | None = None) -> dict:
    """Map a chaos certificate to its JSON record"""
    record = cert.to_dict()
    if strip_interval is not None:
        record['strip_time_interval'] = [float(strip_interval[0]), float(strip_interval[1])]
    return record


def map_rectangle(rectangle) -> dict:
    lo, hi = rectangle.window
    return {
        'label': rectangle.label,
        'boundary': _points(rectangle.boundary.points),
        'window': [lo, hi],
        'rho_levels': _points(rectangle.rho_levels),
    }


def map_geometry(construction) -> dict:
    """
    Map a linked construction to its geometry record: the provenance scalars (enough to rebuild
    it with the same alpha, beta and times) plus the boundary curves and rectangles.
    """
    annulus, strip, linkage = construction.annulus, construction.strip, construction.linkage
    return {
        'family': construction.family.value,
        'lambda1': construction.setup.lambda1,
        'lambda2': construction.setup.lambda2,
        'provenance': construction.provenance,
        'annulus': {
            'outer': _points(annulus.outer.points),
            'inner': _points(annulus.inner.points),
            'center': _points(annulus.center_hint),
        },
        'strip': {
            'lower': _points(strip.lower),
            'upper': _points(strip.upper),
        },
        'rectangles': [map_rectangle(r) for r in construction.rectangles],
        'linkage': {
            'ball_center': _points(linkage.ball.center),
            'ball_radius': float(linkage.ball.radius),
            'exits': linkage.exits,
        },
        'strip_twist': {
            'margin': construction.strip_twist.margin,
            'xi_lower': list(construction.strip_twist.xi_lower),
            'xi_upper': list(construction.strip_twist.xi_upper),
        },
        'annular_twist': {
            'form': construction.annular_twist.form,
            'j_minus1': construction.annular_twist.j_minus1,
            'j_plus1': construction.annular_twist.j_plus1,
            'm': construction.annular_twist.m,
            'margin': construction.annular_twist.margin,
        },
        'crossed_levels': construction.crossed_levels,
        'tau2_tried': [list(item) for item in construction.tau2_tried],
    }


def map_orbit_summary(result) -> dict:
    """Map a periodic orbit result to the orbit summary JSON"""
    return result.to_dict()


def map_trajectory_rows(rows) -> list[list[str]]:
    return [[format_float(t), format_float(x), format_float(y)] for t, x, y in rows]


def map_scan_row(family: str, lambda1: float, lambda2: float, *, status: str, stage: str = '',
                 cert: ChaosCertificate | None = None, provenance: dict | None = None,
                 exploratory: bool = False, message: str = '') -> dict:
    """Map one scan grid point to a report row keyed by SCAN_COLUMNS"""
    provenance = provenance or {}
    return {
        'family': family,
        'lambda1': lambda1,
        'lambda2': lambda2,
        'status': status,
        'stage': stage,
        'symbol_count': cert.symbol_count if cert else None,
        'm': cert.m if cert else None,
        'margin_strip': cert.margin_strip if cert else None,
        'margin_annulus': cert.margin_annulus if cert else None,
        'margin_resampled': cert.margin_resampled if cert else None,
        'tau1': cert.tau1 if cert else None,
        'tau2': cert.tau2 if cert else None,
        'alpha': provenance.get('alpha'),
        'beta': provenance.get('beta'),
        'exploratory': exploratory,
        'message': message,
    }


def scan_csv_rows(rows: list[dict]) -> list[list[str]]:
    """Scan records as CSV cells in SCAN_COLUMNS order"""
    out = []
    for row in rows:
        cells = []
        for column in SCAN_COLUMNS:
            value = row.get(column)
            if isinstance(value, bool):
                cells.append('true' if value else 'false')
            elif isinstance(value, (float, np.floating)):
                cells.append(format_float(value))
            elif value is None:
                cells.append('')
            else:
                cells.append(str(value))
        out.append(cells)
    return out
