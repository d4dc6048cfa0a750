"""Typed request/response models and handlers for the HTTP service.

The handlers are plain functions over pydantic models; the FastAPI app
in :mod:`find_selinv.api` mounts them, and the CLI calls them either
in-process or over HTTP against a running server.
"""

from __future__ import annotations

import io
import tempfile
from fractions import Fraction

from pydantic import BaseModel, Field

from . import bench as bench_mod
from .kernels import _MODELS_MN, _MODELS_SB, flop_model
from .mesh import build_mesh
from .operators import read_matrix_market
from .solver import KERNEL_NAMES, SolverConfig, diag_to_csv, offdiag_to_csv, solve

SERVICE_VERSION = "0.1.0"


class SolveRequest(BaseModel):
    matrix_mtx: str = Field(description="operator in Matrix Market coordinate format")
    sigma_mtx: str | None = Field(default=None, description="scattering matrix, same format")
    nx: int | None = None
    ny: int | None = None
    kernel: str = "naive"
    use_symmetry: bool = False
    compute_gless: bool = True
    compute_offdiag: bool = False
    tiling: str = "full-leaves"
    leaf_max: int = 2


class OffdiagEntry(BaseModel):
    i: int
    j: int
    re: float
    im: float


class SolveResponse(BaseModel):
    nx: int
    ny: int
    gr_diag: list[list[float]]
    gless_diag: list[list[float]] | None
    offdiag: list[OffdiagEntry] | None
    flops: float
    flops_breakdown: dict[str, float]
    timings: dict[str, float]
    diag_csv: str
    offdiag_csv: str | None


class ModelRequest(BaseModel):
    kernel: str | None = Field(default=None, description="one kernel, or None for all")
    m: float | None = None
    n: float | None = None
    s: float | None = None
    b: float | None = None


class ModelEntry(BaseModel):
    kernel: str
    cost: float


class ModelResponse(BaseModel):
    entries: list[ModelEntry]


class BenchRequest(BaseModel):
    config: str = Field(description="flat key=value benchmark config text")


class BenchRowModel(BaseModel):
    method: str
    kernel: str
    n: int
    rep: int
    seconds: float
    flops: float
    max_err: float | None


class FitModel(BaseModel):
    method: str
    kernel: str
    exponent: float
    log10_coeff: float


class BenchResponse(BaseModel):
    rows: list[BenchRowModel]
    fits: list[FitModel]
    model_crossover_n: float
    csv: str


class HealthResponse(BaseModel):
    status: str
    version: str
    kernels: list[str]


def _read_mtx_text(text: str):
    with tempfile.NamedTemporaryFile("w", suffix=".mtx", delete=False) as fh:
        fh.write(text)
        path = fh.name
    return read_matrix_market(path)


def handle_solve(req: SolveRequest) -> SolveResponse:
    a, dims = _read_mtx_text(req.matrix_mtx)
    nx, ny = req.nx, req.ny
    if nx is None or ny is None:
        if dims is None:
            raise ValueError("mesh size missing: pass nx/ny or a %%mesh header")
        nx, ny = dims
    mesh = build_mesh(nx, ny)
    sigma = None
    if req.sigma_mtx is not None:
        sigma, _ = _read_mtx_text(req.sigma_mtx)
    config = SolverConfig(
        kernel=req.kernel,
        use_symmetry=req.use_symmetry,
        compute_gless=req.compute_gless,
        compute_offdiag=req.compute_offdiag,
        tiling=req.tiling,
        leaf_max=req.leaf_max,
    )
    result = solve(mesh, a, sigma, config)
    gr = [[float(v.real), float(v.imag)] for v in result.gr_diag]
    gl = (
        [[float(v.real), float(v.imag)] for v in result.gless_diag]
        if result.gless_diag is not None
        else None
    )
    off = None
    off_csv = None
    if result.offdiag is not None:
        off = [
            OffdiagEntry(i=i, j=j, re=result.offdiag[(i, j)].real, im=result.offdiag[(i, j)].imag)
            for (i, j) in sorted(result.offdiag)
        ]
        off_csv = offdiag_to_csv(result)
    return SolveResponse(
        nx=nx,
        ny=ny,
        gr_diag=gr,
        gless_diag=gl,
        offdiag=off,
        flops=result.ledger.as_float(),
        flops_breakdown={k: float(v) for k, v in result.ledger.by_kernel.items()},
        timings=result.timings,
        diag_csv=diag_to_csv(result, mesh),
        offdiag_csv=off_csv,
    )


def handle_model(req: ModelRequest) -> ModelResponse:
    names = [req.kernel] if req.kernel else sorted(list(_MODELS_MN) + list(_MODELS_SB))
    entries = []
    for name in names:
        kwargs = {}
        if name in _MODELS_MN:
            if req.m is not None and req.n is not None:
                kwargs = {"m": Fraction(req.m).limit_denominator(), "n": Fraction(req.n).limit_denominator()}
            elif req.s is not None and req.b is not None:
                kwargs = {"s": Fraction(req.s).limit_denominator(), "b": Fraction(req.b).limit_denominator()}
            else:
                raise ValueError(f"kernel {name!r} needs (m, n) or (s, b)")
        else:
            if req.s is None or req.b is None:
                raise ValueError(f"kernel {name!r} needs (s, b)")
            kwargs = {"s": Fraction(req.s).limit_denominator(), "b": Fraction(req.b).limit_denominator()}
        entries.append(ModelEntry(kernel=name, cost=float(flop_model(name, **kwargs))))
    return ModelResponse(entries=entries)


def handle_bench(req: BenchRequest) -> BenchResponse:
    cfg = bench_mod.parse_config(req.config)
    rows = bench_mod.run_benchmark(cfg)
    fits = []
    for (method, kernel), pts in bench_mod.median_series(rows, "seconds").items():
        try:
            fit = bench_mod.fit_scaling(pts)
        except ValueError:
            continue
        fits.append(
            FitModel(
                method=method, kernel=kernel, exponent=fit.exponent, log10_coeff=fit.log10_coeff
            )
        )
    return BenchResponse(
        rows=[
            BenchRowModel(
                method=r.method,
                kernel=r.kernel,
                n=r.n,
                rep=r.rep,
                seconds=r.seconds,
                flops=r.flops,
                max_err=r.max_err,
            )
            for r in rows
        ],
        fits=fits,
        model_crossover_n=bench_mod.model_crossover(),
        csv=bench_mod.rows_to_csv(rows),
    )


def handle_health() -> HealthResponse:
    return HealthResponse(status="ok", version=SERVICE_VERSION, kernels=list(KERNEL_NAMES))
