"""Benchmark harness: runs, scaling fits, crossover location, CSV and plots.

Configs are flat ``key=value`` text (diff-friendly), e.g.::

    sizes=8,16,32
    kernels=naive,parallel_inverse
    methods=find,rgf
    reps=3
    oracle=auto
    gless=on
    leaf_max=4
    seed=7

``oracle=auto`` cross-checks against the dense inverse only for N <= 32.
Wall times are medians over ``reps`` repetitions after one discarded
warm-up run; the multiplication counts come from the solver ledgers and
are identical across repetitions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import FlopLedger
from .mesh import build_mesh
from .operators import SparseOperator, assemble_sigma
from .rgf import block_partition, rgf_gless_diag, rgf_gr_diag
from .oracle import dense_gless_diag, dense_gr_diag
from .solver import SolverConfig, solve

MODEL_FIND_COEFF = 457.0
MODEL_FIND_POWER = 3.0
MODEL_RGF_COEFF = 3.5
MODEL_RGF_POWER = 4.0

CSV_COLUMNS = "method,kernel,N,seconds,flops,max_err"


@dataclass
class BenchConfig:
    sizes: list = field(default_factory=lambda: [8, 16])
    kernels: list = field(default_factory=lambda: ["naive"])
    methods: list = field(default_factory=lambda: ["find", "rgf"])
    reps: int = 3
    oracle: str = "auto"  # auto | on | off
    gless: bool = True
    leaf_max: int = 4
    seed: int = 1234


def parse_config(text: str) -> BenchConfig:
    """Parse flat key=value text; errors carry line numbers."""
    cfg = BenchConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "sizes":
                cfg.sizes = [int(v) for v in value.split(",") if v.strip()]
            elif key == "kernels":
                cfg.kernels = [v.strip() for v in value.split(",") if v.strip()]
            elif key == "methods":
                cfg.methods = [v.strip() for v in value.split(",") if v.strip()]
            elif key == "reps":
                cfg.reps = int(value)
            elif key == "oracle":
                if value not in ("auto", "on", "off"):
                    raise ValueError("oracle must be auto|on|off")
                cfg.oracle = value
            elif key == "gless":
                cfg.gless = value.lower() in ("on", "true", "1", "yes")
            elif key == "leaf_max":
                cfg.leaf_max = int(value)
            elif key == "seed":
                cfg.seed = int(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return cfg


@dataclass
class BenchRow:
    method: str
    kernel: str
    n: int
    rep: int
    seconds: float
    flops: float
    max_err: float | None


def random_device_operator(n_side_x: int, n_side_y: int, seed: int, hermitian=False):
    """Deterministic well-conditioned random fixture on the stencil pattern."""
    rng = np.random.default_rng(seed)
    mesh = build_mesh(n_side_x, n_side_y)
    adj = mesh.adjacency().tocoo()
    mask = adj.row < adj.col
    rows, cols = adj.row[mask], adj.col[mask]
    hop = rng.standard_normal(rows.size) + 1j * rng.standard_normal(rows.size)
    if hermitian:
        hop_back = hop.conj()
    else:
        hop_back = rng.standard_normal(rows.size) + 1j * rng.standard_normal(rows.size)
    diag_ids = np.arange(mesh.n)
    degree = np.asarray(mesh.adjacency().sum(axis=1)).ravel()
    if hermitian:
        diag = degree + 2.0 + rng.random(mesh.n)
    else:
        diag = (
            degree
            + 2.0
            + rng.random(mesh.n)
            + 1j * (1.0 + rng.random(mesh.n))
        )
    op = SparseOperator.from_coo(
        mesh.n,
        np.concatenate([diag_ids, rows, cols]),
        np.concatenate([diag_ids, cols, rows]),
        np.concatenate([diag, hop, hop_back]),
    )
    return mesh, op


def _time_solve(fn, reps: int):
    fn()  # warm-up, discarded
    times = []
    out = None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return times, out


def run_benchmark(cfg: BenchConfig) -> list[BenchRow]:
    rows: list[BenchRow] = []
    for n_side in cfg.sizes:
        mesh, a = random_device_operator(n_side, n_side, cfg.seed + n_side)
        sigma = assemble_sigma(mesh, "diagonal", np.ones(mesh.n)) if cfg.gless else None
        use_oracle = cfg.oracle == "on" or (cfg.oracle == "auto" and n_side <= 32)
        ref_gr = dense_gr_diag(a.to_dense()) if use_oracle else None
        ref_gl = (
            dense_gless_diag(a.to_dense(), sigma.to_dense())
            if use_oracle and cfg.gless
            else None
        )
        if "find" in cfg.methods:
            for kernel in cfg.kernels:
                config = SolverConfig(
                    kernel=kernel,
                    compute_gless=cfg.gless,
                    leaf_max=cfg.leaf_max,
                )
                times, result = _time_solve(lambda: solve(mesh, a, sigma, config), cfg.reps)
                err = None
                if use_oracle:
                    err = float(np.max(np.abs(result.gr_diag - ref_gr) / np.abs(ref_gr)))
                    if cfg.gless:
                        err = max(
                            err,
                            float(
                                np.max(np.abs(result.gless_diag - ref_gl) / np.abs(ref_gl))
                            ),
                        )
                for rep, sec in enumerate(times):
                    rows.append(
                        BenchRow("find", kernel, n_side, rep, sec, result.ledger.as_float(), err)
                    )
        if "rgf" in cfg.methods:
            bt = block_partition(a, mesh)
            sig_bt = block_partition(sigma, mesh) if cfg.gless else None

            def run_rgf():
                ledger = FlopLedger()
                gr = rgf_gr_diag(bt, ledger)
                gl = rgf_gless_diag(bt, sig_bt, ledger) if cfg.gless else None
                return gr, gl, ledger

            times, (gr, gl, ledger) = _time_solve(run_rgf, cfg.reps)
            err = None
            if use_oracle:
                err = float(np.max(np.abs(gr - ref_gr) / np.abs(ref_gr)))
                if cfg.gless:
                    err = max(err, float(np.max(np.abs(gl - ref_gl) / np.abs(ref_gl))))
            for rep, sec in enumerate(times):
                rows.append(BenchRow("rgf", "-", n_side, rep, sec, ledger.as_float(), err))
    return rows


# ---------------------------------------------------------------------------
# Fits and crossover
# ---------------------------------------------------------------------------


@dataclass
class ScalingFit:
    exponent: float
    log10_coeff: float
    residual: float

    def value(self, n: float) -> float:
        return 10.0**self.log10_coeff * n**self.exponent


def fit_scaling(points) -> ScalingFit:
    """Least-squares power-law fit cost ~ C * N^p on log-log axes.

    ``points`` is a sequence of (N, cost); needs at least 3 sizes
    spanning a factor of 4.
    """
    ns = np.array([float(p[0]) for p in points])
    vals = np.array([float(p[1]) for p in points])
    uniq = np.unique(ns)
    if uniq.size < 3:
        raise ValueError("need at least 3 distinct sizes to fit a scaling exponent")
    if uniq.max() / uniq.min() < 4.0:
        raise ValueError("sizes must span at least a factor of 4")
    if np.any(vals <= 0):
        raise ValueError("costs must be positive for a log-log fit")
    x, y = np.log10(ns), np.log10(vals)
    coeffs, residuals, *_ = np.polyfit(x, y, 1, full=True)
    res = float(residuals[0]) if len(residuals) else 0.0
    return ScalingFit(exponent=float(coeffs[0]), log10_coeff=float(coeffs[1]), residual=res)


def crossover_of_fits(fit_a: ScalingFit, fit_b: ScalingFit) -> float:
    """N where two fitted power laws intersect."""
    if fit_a.exponent == fit_b.exponent:
        raise ValueError("equal exponents never cross")
    log_n = (fit_b.log10_coeff - fit_a.log10_coeff) / (fit_a.exponent - fit_b.exponent)
    return 10.0**log_n


def model_crossover(
    coeff_a: float = MODEL_FIND_COEFF,
    power_a: float = MODEL_FIND_POWER,
    coeff_b: float = MODEL_RGF_COEFF,
    power_b: float = MODEL_RGF_POWER,
) -> float:
    """Intersection of two closed-form cost curves; no measurement involved."""
    if power_a == power_b:
        raise ValueError("equal powers never cross")
    return (coeff_a / coeff_b) ** (1.0 / (power_b - power_a))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def rows_to_csv(rows: list[BenchRow]) -> str:
    lines = [CSV_COLUMNS]
    for r in rows:
        err = "" if r.max_err is None else format(r.max_err, ".17g")
        lines.append(
            f"{r.method},{r.kernel},{r.n},{format(r.seconds, '.17g')},"
            f"{format(r.flops, '.17g')},{err}"
        )
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> list[BenchRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    out = []
    counter: dict = {}
    for ln in lines[1:]:
        method, kernel, n, seconds, flops, err = ln.split(",")
        key = (method, kernel, int(n))
        rep = counter.get(key, 0)
        counter[key] = rep + 1
        out.append(
            BenchRow(
                method,
                kernel,
                int(n),
                rep,
                float(seconds),
                float(flops),
                None if err == "" else float(err),
            )
        )
    return out


def median_series(rows: list[BenchRow], value: str = "seconds"):
    """Per-(method, kernel) median series: {(method, kernel): [(N, v), ...]}."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.kernel, r.n), []).append(getattr(r, value))
    series: dict = {}
    for (method, kernel, n), vals in sorted(groups.items()):
        series.setdefault((method, kernel), []).append((n, float(np.median(vals))))
    return series


def emit_report(rows: list[BenchRow], out_dir, formats=("csv", "plot")) -> list:
    """Write the result CSV and a log-log timing plot with fitted lines."""
    import pathlib

    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / "results.csv"
        path.write_text(rows_to_csv(rows))
        written.append(path)
    if "plot" in formats:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        series = median_series(rows, "seconds")
        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        fits = {}
        for (method, kernel), pts in series.items():
            ns = [p[0] for p in pts]
            vals = [p[1] for p in pts]
            label = method if kernel in ("-", "") else f"{method}/{kernel}"
            ax.loglog(ns, vals, "o", label=label)
            try:
                fit = fit_scaling(pts)
            except ValueError:
                continue
            fits[(method, kernel)] = fit
            grid = np.geomspace(min(ns), max(ns), 64)
            ax.loglog(grid, [fit.value(g) for g in grid], "--", alpha=0.7)
        keys = list(fits)
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                try:
                    nx = crossover_of_fits(fits[keys[i]], fits[keys[j]])
                except ValueError:
                    continue
                if math.isfinite(nx) and nx > 0:
                    ax.axvline(nx, color="gray", ls=":", alpha=0.5)
        ax.set_xlabel("mesh side N")
        ax.set_ylabel("wall time [s]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "scaling.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
