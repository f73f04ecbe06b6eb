"""Command-line entry point: ``quanteit <command> [--config FILE] [--out DIR] [--seed N]``.

Commands: simulate, reconstruct, evaluate, sweep, params, import-check.
Exit status is 0 on success, 1 on validation errors and 2 on numeric failures.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import benchmark, metrics, textio
from . import forward2d as fwd
from .errors import NumericError, ParameterError, ValidationError
from .qanet import GeometrySpec, parameter_count
from .recon import PRESETS, ReconstructionConfig, max_normalize, reconstruct
from .regularizers import RegWeights

DEFAULTS = {
    "task": "2d",
    "grid": {"dims": [64, 64]},
    "electrodes": 16,
    "background": fwd.BACKGROUND,
    "phantom": "two_lung",
    "snr_db": None,
    "method": "quanteit",
    "iterations": 1000,
    "lr": None,
    "lambda": None,
    "mu": 20.0,
    "seed": 0,
    "reduction": "mean",
    "signed_output": False,
    "output_dir": None,
    "data_dir": None,
    "import": None,
}

REFERENCE_ROWS = [("2D", 64 * 64, 2, 2), ("3D", 32 * 32 * 40, 2, 2)]


# ------------------------------------------------------------------ config


def resolve_config(raw: dict | None = None, **overrides) -> dict:
    """Fill defaults so the result alone is enough to rerun a command."""
    cfg = copy.deepcopy(DEFAULTS)
    updates = dict(raw or {})
    updates.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in updates.items():
        if key not in DEFAULTS:
            raise ParameterError(f"unknown config key {key!r}")
        cfg[key] = value
    dims = cfg["grid"].get("dims") if isinstance(cfg["grid"], dict) else None
    if not dims or len(dims) not in (2, 3):
        raise ParameterError("grid.dims must list 2 or 3 sizes")
    task = cfg["task"]
    if task not in ("2d", "3d"):
        raise ParameterError(f"task must be '2d' or '3d', got {task!r}")
    if (task == "3d") != (len(dims) == 3):
        raise ParameterError(f"task {task} does not match grid dims {dims}")
    if cfg["lr"] is None:
        cfg["lr"] = 0.1 if task == "3d" else 0.05
    if cfg["lambda"] is None:
        cfg["lambda"] = list(PRESETS["3d" if task == "3d" else "2d_sim"])
    elif isinstance(cfg["lambda"], str):
        if cfg["lambda"] not in PRESETS:
            raise ParameterError(f"unknown lambda preset {cfg['lambda']!r}; choose from {sorted(PRESETS)}")
        cfg["lambda"] = list(PRESETS[cfg["lambda"]])
    cfg["lambda"] = [float(v) for v in cfg["lambda"]]
    RegWeights.from_sequence(cfg["lambda"])
    if cfg["snr_db"] is not None:
        cfg["snr_db"] = float(cfg["snr_db"])
    cfg["seed"] = int(cfg["seed"])
    return cfg


def geometry_of(cfg) -> GeometrySpec:
    dims = cfg["grid"]["dims"]
    return GeometrySpec("grid3d" if len(dims) == 3 else "grid2d", tuple(dims))


def recon_config(cfg, **overrides) -> ReconstructionConfig:
    kw = dict(
        iterations=int(cfg["iterations"]),
        lr=float(cfg["lr"]),
        reg_weights=RegWeights.from_sequence(cfg["lambda"]),
        seed=cfg["seed"],
        method=cfg["method"],
        noser_mu=float(cfg["mu"]),
        reduction=cfg["reduction"],
        signed_output=bool(cfg["signed_output"]),
    )
    kw.update(overrides)
    return ReconstructionConfig(**kw)


def _ellipses(cfg):
    ph = cfg["phantom"]
    if ph == "two_lung":
        return fwd.two_lung_ellipses()
    if isinstance(ph, list):
        try:
            return [fwd.Ellipse(tuple(e["center"]), tuple(e["axes"]), float(e["conductivity"]))
                    for e in ph]
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"malformed ellipse entry: {exc}") from None
    raise ParameterError(f"unknown phantom {ph!r}")


def _simulate(cfg) -> benchmark.Benchmark:
    if cfg["task"] == "3d":
        raise ParameterError(
            "3D forward simulation is not available (no 3D solver); "
            "run 'reconstruct --import DIR' with an externally computed sensitivity model"
        )
    return benchmark.simulate(geometry_of(cfg), int(cfg["electrodes"]), float(cfg["background"]),
                              _ellipses(cfg))


def _image_matrix(geometry, x):
    # rows = everything but width, cols = width
    return np.asarray(x).reshape(-1, geometry.dims[0])


def _write_image(path, geometry, x):
    textio.write_matrix(path, _image_matrix(geometry, x))


def _read_image(path, geometry):
    a = textio.read_matrix(path)
    if a.size != geometry.n:
        raise ParameterError(f"{path} holds {a.size} values, geometry needs {geometry.n}")
    return a.ravel()


def _need(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"expected input not found: {path}")
    return path


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, out: Path) -> benchmark.Benchmark:
    b = _simulate(cfg)
    geo = b.geometry
    dv = fwd.add_noise(b.delta_v, cfg["snr_db"], cfg["seed"])
    _write_image(out / "sigma_r.mat", geo, b.sigma_r.values)
    _write_image(out / "sigma_o.mat", geo, b.sigma_o.values)
    textio.write_vector(out / "v_r.vec", b.v_r)
    textio.write_vector(out / "v_o.vec", b.v_o)
    textio.write_vector(out / "delta_v_clean.vec", b.delta_v)
    textio.write_vector(out / "delta_v.vec", dv)
    _write_image(out / "delta_sigma_true.mat", geo, b.truth)
    b.model.save(out / "sensitivity")
    textio.write_json(out / "config.json", cfg)
    print(f"simulated {b.protocol.m} measurements on {geo.dims} -> {out}")
    return b


def _metric_rows(x, truth, geometry, cfg, method, snr_db):
    rows = []
    modes = [True] if geometry.kind == "grid2d" else [False, True]
    for normalized in modes:
        rep = metrics.evaluate(x, truth, geometry, normalized=normalized)
        rows.append(rep.csv_row(method, cfg["seed"], snr_db))
    return rows


def _write_loss_trace(path, res):
    lines = ["iteration,total,fidelity,laplacian,tv,l1"]
    for k in range(res.loss_trace.size):
        vals = [res.loss_trace[k], res.fidelity_trace[k], *res.reg_traces[k]]
        lines.append(f"{k}," + ",".join(textio.format_float(v) for v in vals))
    textio.write_text(path, "\n".join(lines) + "\n")


def _load_inputs(cfg, out: Path):
    data = Path(cfg["data_dir"]) if cfg["data_dir"] else out
    if cfg["import"]:
        imp = Path(cfg["import"])
        model = fwd.load_sensitivity(imp)
        dv_path = imp / "delta_v.vec" if (imp / "delta_v.vec").exists() else data / "delta_v.vec"
        truth_path = next((p for p in (imp / "delta_sigma_true.mat", data / "delta_sigma_true.mat")
                           if p.exists()), None)
    else:
        if cfg["task"] == "3d":
            raise ParameterError(
                "3D reconstruction needs --import DIR with an external sensitivity model "
                "(the 3D forward solver is out of scope)"
            )
        model = fwd.load_sensitivity(_need(data / "sensitivity"))
        dv_path = data / "delta_v.vec"
        truth_path = data / "delta_sigma_true.mat"
        truth_path = truth_path if truth_path.exists() else None
    geometry = model.geometry
    if geometry != geometry_of(cfg):
        raise ParameterError(f"sensitivity geometry {geometry.dims} differs from config grid "
                             f"{tuple(cfg['grid']['dims'])}")
    dv = textio.read_vector(_need(dv_path))
    if dv.size != model.m:
        raise ParameterError(f"{dv_path} has {dv.size} entries, model expects {model.m}")
    truth = _read_image(truth_path, geometry) if truth_path else None
    return model, dv, truth


def cmd_reconstruct(cfg, out: Path):
    model, dv, truth = _load_inputs(cfg, out)
    geo = model.geometry
    res = reconstruct(dv, model, recon_config(cfg))
    _write_image(out / "delta_sigma.mat", geo, res.delta_sigma)
    if res.loss_trace.size:
        _write_loss_trace(out / "loss_trace.csv", res)
    img = geo.reshape(res.delta_sigma)
    if img.ndim == 3:
        img = img[img.shape[0] // 2]
    textio.write_pgm(out / "delta_sigma.pgm", img)
    if truth is not None:
        rows = _metric_rows(res.delta_sigma, truth, geo, cfg, cfg["method"], cfg["snr_db"])
        textio.write_text(out / "metrics.csv", "\n".join([metrics.CSV_HEADER, *rows]) + "\n")
        for r in rows:
            print(r)
    textio.write_json(out / "config.json", cfg)
    print(f"{cfg['method']} finished in {res.seconds:.2f} s -> {out}")
    return res


def cmd_evaluate(cfg, out: Path, recon_path=None, truth_path=None):
    data = Path(cfg["data_dir"]) if cfg["data_dir"] else out
    geo = geometry_of(cfg)
    recon_path = Path(recon_path) if recon_path else out / "delta_sigma.mat"
    truth_path = Path(truth_path) if truth_path else data / "delta_sigma_true.mat"
    x = _read_image(_need(recon_path), geo)
    truth = _read_image(_need(truth_path), geo)
    rows = _metric_rows(x, truth, geo, cfg, cfg["method"], cfg["snr_db"])
    textio.write_text(out / "metrics.csv", "\n".join([metrics.CSV_HEADER, *rows]) + "\n")
    textio.write_json(out / "config.json", cfg)
    for r in rows:
        print(r)
    return rows


def _threads():
    try:
        return max(1, int(os.environ.get("QUANTEIT_THREADS", "1")))
    except ValueError:
        raise ParameterError("QUANTEIT_THREADS must be an integer") from None


def cmd_sweep(cfg, out: Path, axis, values):
    """One reconstruction per value of ``axis``; rows come back in input order."""
    if axis not in ("lr", "snr"):
        raise ParameterError(f"sweep axis must be 'lr' or 'snr', got {axis!r}")
    values = [float(v) for v in values]
    if not values:
        raise ParameterError("sweep needs at least one value")
    if any(not np.isfinite(v) or v <= 0 for v in values):
        raise ParameterError("sweep values must be finite and positive")
    b = _simulate(cfg)

    def run(value):
        if axis == "lr":
            dv = fwd.add_noise(b.delta_v, cfg["snr_db"], cfg["seed"])
            rc = recon_config(cfg, lr=value)
        else:
            dv = fwd.add_noise(b.delta_v, value, cfg["seed"])
            rc = recon_config(cfg)
        res = reconstruct(dv, b.model, rc)
        rep = metrics.evaluate(res.delta_sigma, b.truth, b.geometry, normalized=True)
        return value, rep, res

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, values))

    lines = [f"{axis},cc,psnr,err,mssim,final_loss"]
    for value, rep, res in results:
        final = res.final_loss if res.loss_trace.size else float("nan")
        vals = (value, rep.cc, rep.psnr, rep.err, rep.mssim, final)
        lines.append(",".join(textio.format_float(v) for v in vals))
        if res.loss_trace.size:
            _write_loss_trace(out / f"sweep_{axis}_traces" / f"loss_{axis}_{value!r}.csv", res)
    textio.write_text(out / f"sweep_{axis}.csv", "\n".join(lines) + "\n")
    textio.write_json(out / "config.json", dict(cfg, sweep={"axis": axis, "values": values}))
    print("\n".join(lines))
    return results


def cmd_params(n=None, n_c=2, n_q=2):
    rows = REFERENCE_ROWS if n is None else [("custom", n, n_c, n_q)]
    lines = [f"{'task':<8}{'n':>8}{'n_c':>5}{'n_q':>5}{'params':>10}"]
    counts = []
    for task, nn, c, q in rows:
        count = parameter_count(nn, c, q)
        counts.append(count)
        lines.append(f"{task:<8}{nn:>8}{c:>5}{q:>5}{count:>10,}")
    print("\n".join(lines))
    return counts


def cmd_import_check(path):
    model = fwd.load_sensitivity(path)
    print(f"ok: {path}: {model.geometry.kind} dims={model.geometry.dims} m={model.m} n={model.n}")
    return model


# -------------------------------------------------------------------- main


def _parse_values(text):
    return [v for v in text.replace(",", " ").split() if v]


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")

    p = argparse.ArgumentParser(prog="quanteit", description=__doc__.splitlines()[0],
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate phantom data and the Jacobian")
    s.add_argument("--snr", default=argparse.SUPPRESS, help="SNR in dB, or 'none'")

    r = sub.add_parser("reconstruct", parents=[common], help="reconstruct from simulated/imported data")
    r.add_argument("--method", choices=["quanteit", "ablation_ones", "ablation_learned", "noser"])
    r.add_argument("--iterations", type=int)
    r.add_argument("--lr", type=float)
    r.add_argument("--data", help="directory with simulate outputs (default: --out)")
    r.add_argument("--import", dest="import_dir", help="external sensitivity directory")

    e = sub.add_parser("evaluate", parents=[common], help="score a reconstruction")
    e.add_argument("--recon", help="reconstruction matrix file")
    e.add_argument("--truth", help="ground-truth matrix file")
    e.add_argument("--method")

    w = sub.add_parser("sweep", parents=[common], help="metric-vs-parameter sweep")
    w.add_argument("--axis", required=True, choices=["lr", "snr"])
    w.add_argument("--values", required=True, help="comma separated values")
    w.add_argument("--snr", default=argparse.SUPPRESS, help="SNR for lr sweeps, or 'none'")

    q = sub.add_parser("params", parents=[common], help="parameter counts")
    q.add_argument("--n", type=int)
    q.add_argument("--nc", type=int, default=2)
    q.add_argument("--nq", type=int, default=2)

    i = sub.add_parser("import-check", parents=[common], help="validate a sensitivity directory")
    i.add_argument("path")
    return p


def _snr_arg(value):
    if value is None or str(value).lower() in ("none", "inf", ""):
        return None
    return float(value)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "params":
            cmd_params(args.n, args.nc, args.nq)
            return 0
        if args.command == "import-check":
            cmd_import_check(args.path)
            return 0
        raw = {}
        if args.config:
            try:
                raw = json.loads(_need(args.config).read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ParameterError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
        over = {"seed": args.seed}
        if hasattr(args, "snr"):
            raw = dict(raw, snr_db=_snr_arg(args.snr))
        for key, attr in (("method", "method"), ("iterations", "iterations"), ("lr", "lr"),
                          ("data_dir", "data"), ("import", "import_dir")):
            if getattr(args, attr, None) is not None:
                over[key] = getattr(args, attr)
        cfg = resolve_config(raw, **over)
        out = args.out or (Path(cfg["output_dir"]) if cfg["output_dir"] else None)
        if out is None:
            raise ParameterError("no output directory: pass --out or set output_dir")
        cfg["output_dir"] = str(out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out, args.recon, args.truth)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, args.axis, _parse_values(args.values))
        return 0
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
