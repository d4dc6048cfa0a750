"""Command-line client for the solver service.

All computation goes through the same typed request/response surface as
the HTTP API.  By default requests are handled in-process; ``--server``
points the same commands at a running ``find-selinv serve`` instance.

Exit codes: 0 ok, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import pathlib
import sys

import click

from .errors import NotPositiveDefiniteError, SelInvError, SingularPivotError
from . import service


class _Transport:
    """Dispatch a request model to a handler, locally or over HTTP."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def call(self, route: str, handler, request, response_model):
        if self.server is None:
            return handler(request)
        import httpx

        resp = httpx.post(
            f"{self.server}{route}", json=request.model_dump(), timeout=None
        )
        if resp.status_code != 200:
            detail = resp.json().get("detail", resp.text)
            if resp.status_code == 422 and "numerical" in str(detail):
                raise SingularPivotError(str(detail))
            raise ValueError(str(detail))
        return response_model.model_validate(resp.json())


@click.group()
@click.option("--server", default=None, help="base URL of a running service; default in-process")
@click.pass_context
def cli(ctx, server):
    """Selected inversion on 2D meshes: solve, benchmark, cost model."""
    ctx.obj = _Transport(server)


@cli.command()
@click.option("--matrix", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sigma", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--mesh", "mesh_spec", default=None, help="NXxNY; falls back to the %%mesh header")
@click.option("--kernel", default="naive", help="elimination kernel")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--offdiag-out", default=None, type=click.Path(dir_okay=False))
@click.option("--tiling", default="full-leaves", type=click.Choice(["full-leaves", "half-leaves"]))
@click.option("--leaf-max", default=2, type=int)
@click.option("--use-symmetry", is_flag=True, default=False)
@click.option("--offdiag/--no-offdiag", default=False)
@click.pass_obj
def solve(transport, matrix, sigma, mesh_spec, kernel, out, offdiag_out, tiling, leaf_max,
          use_symmetry, offdiag):
    """Compute selected inverse entries for one operator."""
    nx = ny = None
    if mesh_spec:
        try:
            nx_s, ny_s = mesh_spec.lower().split("x")
            nx, ny = int(nx_s), int(ny_s)
        except Exception as exc:
            raise click.UsageError(f"--mesh must look like 8x8, got {mesh_spec!r}") from exc
    req = service.SolveRequest(
        matrix_mtx=pathlib.Path(matrix).read_text(),
        sigma_mtx=pathlib.Path(sigma).read_text() if sigma else None,
        nx=nx,
        ny=ny,
        kernel=kernel,
        use_symmetry=use_symmetry,
        compute_gless=sigma is not None,
        compute_offdiag=offdiag,
        tiling=tiling,
        leaf_max=leaf_max,
    )
    resp = transport.call("/solve", service.handle_solve, req, service.SolveResponse)
    pathlib.Path(out).write_text(resp.diag_csv)
    click.echo(f"wrote {out} ({resp.nx}x{resp.ny} mesh, {resp.flops:.3g} multiplications)")
    if offdiag and resp.offdiag_csv is not None:
        target = offdiag_out or (str(out) + ".offdiag.csv")
        pathlib.Path(target).write_text(resp.offdiag_csv)
        click.echo(f"wrote {target}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
def bench(transport, config_path, out_dir):
    """Run the benchmark matrix from a key=value config file."""
    req = service.BenchRequest(config=pathlib.Path(config_path).read_text())
    resp = transport.call("/bench", service.handle_bench, req, service.BenchResponse)
    from . import bench as bench_mod

    rows = bench_mod.rows_from_csv(resp.csv)
    written = bench_mod.emit_report(rows, out_dir)
    for path in written:
        click.echo(f"wrote {path}")
    for fit in resp.fits:
        label = fit.method if fit.kernel in ("-", "") else f"{fit.method}/{fit.kernel}"
        click.echo(f"fit {label}: exponent {fit.exponent:.3f}")
    click.echo(f"model-mode crossover: N = {resp.model_crossover_n:.1f}")


@cli.command()
@click.option("--table1", is_flag=True, default=False, help="evaluate the structured-kernel table")
@click.option("--kernel", default=None)
@click.option("-m", type=float, default=None)
@click.option("-n", type=float, default=None)
@click.option("-s", type=float, default=None)
@click.option("-b", type=float, default=None)
@click.pass_obj
def model(transport, table1, kernel, m, n, s, b):
    """Evaluate closed-form kernel costs at given block sizes."""
    if table1:
        if m is None or n is None:
            raise click.UsageError("--table1 needs -m and -n")
        names = ["parallel_inverse", "sequential_inverse", "block_lu", "naive_lu"]
        base = None
        for name in names:
            req = service.ModelRequest(kernel=name, m=m, n=n)
            resp = transport.call("/model", service.handle_model, req, service.ModelResponse)
            cost = resp.entries[0].cost
            dense_req = service.ModelRequest(kernel="naive_dense", s=2 * m, b=2 * n)
            dense = transport.call(
                "/model", service.handle_model, dense_req, service.ModelResponse
            ).entries[0].cost
            click.echo(f"{name:<22s} {cost:>18.6g}   {100.0 * cost / dense:6.1f}% of dense")
        return
    req = service.ModelRequest(kernel=kernel, m=m, n=n, s=s, b=b)
    resp = transport.call("/model", service.handle_model, req, service.ModelResponse)
    for entry in resp.entries:
        click.echo(f"{entry.kernel:<28s} {entry.cost:.6g}")


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .api import app

    uvicorn.run(app, host=host, port=port)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (SingularPivotError, NotPositiveDefiniteError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(2)
    except (ValueError, SelInvError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
