"""Error norms, estimated orders of convergence, and report emission."""
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .reference import quadrature
from .smallmat import det3
from .transforms import pullback_solution

ERROR_EXACTNESS = 8
_CSV_COLUMNS = ("level", "h", "ndof", "l2_error", "hcurl_error",
                "pullback_error", "d0", "d1")
_EOC_WINDOW = 3   # last rows used for slope fits, skipping the coarse regime


def _cellwise_l2(mesh, sampled_sq, weights, dets):
    return float(np.einsum('mq,q,mq->', sampled_sq, weights, dets).real)


def _quad_data(mesh, exactness):
    rule = quadrature(exactness)
    jac = mesh.jacobians(rule.points)
    det = det3(jac)
    phys = mesh.map_points(rule.points)
    return rule, det, phys


def error_norms(mesh, solution, exact, exactness=ERROR_EXACTNESS):
    """L2 and H(curl) distances between a discrete field and an exact one."""
    rule, det, phys = _quad_data(mesh, exactness)
    flat = phys.reshape(-1, 3)
    dval = solution.values_at(rule.points) - exact.value(flat).reshape(phys.shape)
    dcurl = solution.curls_at(rule.points) - exact.curl(flat).reshape(phys.shape)
    l2_sq = _cellwise_l2(mesh, np.abs(dval ** 2).sum(axis=2), rule.weights, det)
    curl_sq = _cellwise_l2(mesh, np.abs(dcurl ** 2).sum(axis=2), rule.weights, det)
    return np.sqrt(l2_sq), np.sqrt(l2_sq + curl_sq)


def field_norms(mesh, exact, exactness=ERROR_EXACTNESS):
    """L2 and H(curl) norms of an analytic field over the meshed domain."""
    rule, det, phys = _quad_data(mesh, exactness)
    flat = phys.reshape(-1, 3)
    val = exact.value(flat).reshape(phys.shape)
    curl = exact.curl(flat).reshape(phys.shape)
    l2_sq = _cellwise_l2(mesh, np.abs(val ** 2).sum(axis=2), rule.weights, det)
    curl_sq = _cellwise_l2(mesh, np.abs(curl ** 2).sum(axis=2), rule.weights, det)
    return np.sqrt(l2_sq), np.sqrt(l2_sq + curl_sq)


def pullback_error(domain_map, solution, exact, exactness=ERROR_EXACTNESS):
    """H(curl) distance between the transported exact field and the solution."""
    transported = pullback_solution(domain_map, exact)
    return error_norms(domain_map.mesh, solution, transported,
                       exactness=exactness)[1]


def eoc(rows):
    """Least-squares slope of log(error) against log(h) for (h, error) rows."""
    rows = [(float(h), float(e)) for h, e in rows]
    if len(rows) < 2:
        raise ValueError("need at least two rows to estimate an order")
    if any(h <= 0 or e <= 0 for h, e in rows):
        raise ValueError("orders need positive mesh sizes and errors")
    x = np.log([h for h, _ in rows])
    y = np.log([e for _, e in rows])
    design = np.vstack([x, np.ones_like(x)]).T
    return float(np.linalg.lstsq(design, y, rcond=None)[0][0])


@dataclass
class LevelRow:
    level: int
    h: float
    ndof: int
    l2_error: float
    hcurl_error: float
    pullback_error: float = None
    d0: float = None
    d1: float = None


@dataclass
class ConvergenceReport:
    study: str
    k: int
    geo_order: int
    material: str
    rows: list = field(default_factory=list)

    def add_row(self, **kwargs):
        self.rows.append(LevelRow(**kwargs))

    def _columns(self):
        cols = ["l2_error", "hcurl_error"]
        cols += [c for c in ("pullback_error", "d0", "d1")
                 if all(getattr(r, c) is not None for r in self.rows)]
        return cols

    def slopes(self):
        """EOC per error column from the last rows (log-log least squares)."""
        rows = sorted(self.rows, key=lambda r: -r.h)[-_EOC_WINDOW:]
        out = {}
        for col in self._columns():
            values = [(r.h, getattr(r, col)) for r in rows]
            if all(v > 0 for _, v in values):
                out[col] = eoc(values)
        return out

    def to_csv(self):
        cols = ["level", "h", "ndof"] + self._columns()
        lines = [",".join(cols)]
        for r in sorted(self.rows, key=lambda r: -r.h):
            cells = []
            for c in cols:
                v = getattr(r, c)
                cells.append(str(v) if c in ("level", "ndof") else f"{v:.12e}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def emit_report(report, out_dir, basename=None, metadata=None):
    """Write CSV rows, an SVG log-log plot, and a JSON sidecar; return paths."""
    import pathlib
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if basename is None:
        basename = f"{report.study}_k{report.k}_g{report.geo_order}"
    csv_path = out / f"{basename}.csv"
    csv_path.write_text(report.to_csv(), encoding="ascii")
    svg_path = out / f"{basename}.svg"
    _plot(report, svg_path)
    sidecar = {
        "study": report.study,
        "k": report.k,
        "geo_order": report.geo_order,
        "material": report.material,
        "slopes": report.slopes(),
        "rows": [asdict(r) for r in sorted(report.rows, key=lambda r: -r.h)],
    }
    if metadata:
        sidecar.update(metadata)
    json_path = out / f"{basename}.json"
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="ascii")
    return csv_path, svg_path, json_path


def _plot(report, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    rows = sorted(report.rows, key=lambda r: -r.h)
    h = np.array([r.h for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    markers = {"l2_error": "o", "hcurl_error": "s", "pullback_error": "^",
               "d0": "v", "d1": "d"}
    for col in report._columns():
        e = np.array([getattr(r, col) for r in rows])
        if (e > 0).all():
            ax.loglog(h, e, marker=markers.get(col, "x"), label=col)
    emax = max(getattr(rows[0], c) for c in report._columns())
    for slope in (1.0, 1.5, 2.0):
        guide = emax * (h / h[0]) ** slope
        ax.loglog(h, guide, "k--", linewidth=0.6, alpha=0.5)
        ax.annotate(f"{slope:g}", (h[-1], guide[-1]), fontsize=7, alpha=0.6)
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(f"{report.study} (k={report.k}, geo {report.geo_order})",
                 fontsize=9)
    ax.legend(fontsize=7)
    ax.grid(True, which="both", alpha=0.2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
