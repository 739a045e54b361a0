"""Command line front end.

Subcommands ``smatrix``, ``probe``, ``derivs`` and ``localize`` read a JSON
run configuration, validate it against ``CONFIG_SCHEMA`` and write an output
directory holding ``config.json`` (the validated input), ``result.json`` and
``samples.csv``.  Floats are written with 17 significant digits and keys in
a fixed order, so identical inputs give byte-identical files.  Failures print
one JSON object on stderr and exit with the code of the error class.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema

from .bicprobe import ProbeConfig, localize_bic, probe
from .derivs import (
    BicPoint,
    derivative_report,
    finite_difference_frequencies,
    relative_error,
)
from .errors import BicError, ConfigInvalid, NotABic
from .geometry import StructureSpec, make_slab
from .smatrix import scattering_matrix
from .solver import Grid

EXIT_OK = 0
BUNDLED = ("example1", "example2", "example3_r02", "example3_r04")

_NUMBER = {"type": "number"}
_VECTOR = {"type": "array", "items": _NUMBER}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["structure"],
    "properties": {
        "description": {"type": "string"},
        "structure": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family", "eps_background"],
            "properties": {
                "family": {"enum": ["circle", "perturbed_circle", "scaled_circle", "slab"]},
                "eps_background": _NUMBER,
                "eps_inclusion": _NUMBER,
                "base_radius": _NUMBER,
                "d0": {"type": "number", "exclusiveMinimum": 0},
                "bump_angle": _NUMBER,
                "bump_width": _NUMBER,
                "delta_bound": _NUMBER,
                "layers": {
                    "type": "array",
                    "items": {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3},
                },
            },
        },
        "grid": {
            "type": "array",
            "items": {"type": "integer", "minimum": 4},
            "minItems": 2,
            "maxItems": 2,
        },
        "point": {
            "type": "object",
            "additionalProperties": False,
            "required": ["beta", "k"],
            "properties": {"beta": _NUMBER, "delta": _VECTOR, "k": _NUMBER},
        },
        "probe": {
            "type": "object",
            "additionalProperties": False,
            "required": ["beta_c", "k_seed", "r", "case"],
            "properties": {
                "beta_c": _NUMBER,
                "delta_c": _VECTOR,
                "k_seed": _NUMBER,
                "r": {"type": "number", "exclusiveMinimum": 0},
                "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "case": {"enum": ["II", "III", "IV"]},
                "n_samples": {"type": "integer", "minimum": 2},
                "theta": _NUMBER,
                "C": {"enum": [1, -1]},
                "shape": {
                    "type": "array",
                    "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "offset": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                "chain": {"type": "boolean"},
            },
        },
        "localize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depth": {"type": "integer", "minimum": 0},
                "polish": {"type": "integer", "minimum": 0},
            },
        },
        "derivs": {
            "type": "object",
            "additionalProperties": False,
            "required": ["case"],
            "properties": {
                "case": {"enum": ["I", "II", "III", "IV"]},
                "theta": _NUMBER,
                "C": {"enum": [1, -1]},
                "fd_check": {"type": "boolean"},
                "fd_step": {"type": "number", "exclusiveMinimum": 0},
                "parity": {"enum": [1, -1, None]},
            },
        },
    },
}

_REQUIRED = {
    "smatrix": ("point",),
    "probe": ("probe",),
    "localize": ("probe",),
    "derivs": ("derivs",),
}


# ---- deterministic serialization ----------------------------------------------------


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(x, ".17g")


def dumps(obj: Any, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits and two-space indentation."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return dumps(obj.item(), indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)) or hasattr(obj, "tolist"):
        seq = obj.tolist() if hasattr(obj, "tolist") else obj
        if not seq:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict)) for v in seq):
            return "[" + ", ".join(dumps(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _sorted(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


# ---- configuration ---------------------------------------------------------------------


def bundled_config_path(name: str) -> Path:
    return Path(str(resources.files("bicindex") / "configs" / f"{name}.json"))


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in BUNDLED:
        return bundled_config_path(stem)
    raise ConfigInvalid("config file not found", path=path)


def load_config(path: str) -> dict:
    p = _resolve(path)
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("config is not valid JSON", path=str(p), reason=str(exc)) from None
    validate_config(data)
    return data


def validate_config(data: Any, command: str | None = None) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ConfigInvalid(
            "config does not match the schema",
            path="/".join(str(p) for p in first.absolute_path),
            reason=first.message,
        )
    if command is not None:
        missing = [key for key in _REQUIRED[command] if key not in data]
        if missing:
            raise ConfigInvalid(f"{command} needs the section(s) {missing}", missing=missing)


def parse_grid(text: str) -> tuple[int, int]:
    try:
        n1, n2 = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigInvalid("grid must look like N1xN2", grid=text) from None
    if n1 < 4 or n2 < 4:
        raise ConfigInvalid("grid sizes must be at least 4", grid=text)
    return n1, n2


def build_structure(cfg: dict) -> StructureSpec:
    try:
        return _build_structure(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("structure section is inconsistent", reason=str(exc)) from None


def _build_structure(cfg: dict) -> StructureSpec:
    s = dict(cfg)
    family = s.pop("family")
    if family == "slab":
        return make_slab(s.get("layers", []), s.get("d0", math.pi), s.get("eps_background", 1.0))
    s.setdefault("eps_inclusion", s["eps_background"])
    if "layers" in s:
        raise ConfigInvalid("layers only apply to the slab family")
    return StructureSpec(family, **s)


def build_probe(cfg: dict, radius: float | None = None, threads: int = 1) -> ProbeConfig:
    try:
        return _build_probe(cfg, radius, threads)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("probe section is inconsistent", reason=str(exc)) from None


def _build_probe(cfg: dict, radius: float | None, threads: int) -> ProbeConfig:
    p = dict(cfg)
    p.pop("radii", None)
    r = p.pop("r") if radius is None else radius
    p.pop("r", None)
    return ProbeConfig(
        beta_c=p.pop("beta_c"),
        delta_c=tuple(p.pop("delta_c", ())),
        k_seed=p.pop("k_seed"),
        r=r,
        case=p.pop("case"),
        threads=threads,
        **{k: (tuple(map(tuple, v)) if k == "shape" else tuple(v) if k == "offset" else v) for k, v in p.items()},
    )


def _grid(config: dict, spec: StructureSpec, override: tuple[int, int] | None) -> Grid:
    n1, n2 = override if override is not None else tuple(config.get("grid", (128, 128)))
    return Grid(int(n1), int(n2), spec.d0)


def _point(config: dict, spec: StructureSpec) -> BicPoint:
    pt = config["point"]
    delta = tuple(pt.get("delta", ()))
    spec.check_delta(delta)
    return BicPoint(float(pt["beta"]), delta, float(pt["k"]))


# ---- subcommands ---------------------------------------------------------------------------


def cmd_smatrix(config: dict, grid: Grid, threads: int) -> tuple[dict, str, list[str]]:
    spec = build_structure(config["structure"])
    pt = _point(config, spec)
    sm = scattering_matrix(spec, pt.beta, pt.delta, pt.k, grid)
    rows = [
        [i, j, float(sm.s[i, j].real), float(sm.s[i, j].imag)]
        for i in range(sm.s.shape[0])
        for j in range(sm.s.shape[1])
    ]
    lines = [
        f"unitarity_defect {format_float(sm.unitarity_defect)}",
        "eigenphases " + " ".join(format_float(float(x)) for x in sm.eigenphases()),
    ]
    result = {"grid": [grid.n1, grid.n2], **sm.to_dict()}
    return result, _csv(["row", "col", "re_s", "im_s"], rows), lines


def cmd_probe(config: dict, grid: Grid, threads: int) -> tuple[dict, str, list[str]]:
    spec = build_structure(config["structure"])
    radii = config["probe"].get("radii") or [config["probe"]["r"]]
    runs, rows, lines = [], [], []
    for r in radii:
        res = probe(spec, build_probe(config["probe"], r, threads), grid)
        runs.append(res.to_dict())
        rows.extend([format(r, ".17g")] + row for row in res.csv_rows())
        lines.append(
            f"r {format_float(float(r))} index {res.index} residual {format_float(float(res.residual))}"
        )
    indices = [run["index"] for run in runs]
    result = {"grid": [grid.n1, grid.n2], "indices": indices, "runs": runs}
    header = ["r", "n", "beta", "delta", "k", "re_a_hat", "im_a_hat"]
    return result, _csv(header, rows), lines


def cmd_localize(config: dict, grid: Grid, threads: int) -> tuple[dict, str, list[str]]:
    spec = build_structure(config["structure"])
    opts = config.get("localize", {})
    loc = localize_bic(
        spec, build_probe(config["probe"], None, threads), grid,
        int(opts.get("depth", 6)), int(opts.get("polish", 0)),
    )
    delta = loc.delta[0] if loc.delta else 0.0
    row = [float(loc.beta), float(delta), float(loc.k), float(loc.r), loc.levels]
    lines = [f"beta {format_float(loc.beta)} delta {format_float(delta)} k {format_float(loc.k)}"]
    result = {"grid": [grid.n1, grid.n2], **loc.to_dict()}
    return result, _csv(["beta", "delta", "k", "r", "levels"], [row]), lines


def _derivs_point(config: dict, spec: StructureSpec, grid: Grid, threads: int) -> BicPoint:
    if "point" in config:
        return _point(config, spec)
    if "probe" not in config:
        raise ConfigInvalid("derivs needs a bound-state point or a probe section to localize one")
    opts = config.get("localize", {})
    probe_spec = spec
    probe_cfg = build_probe(config["probe"], None, threads)
    if probe_cfg.case == "IV" and spec.n_delta:
        # localize in the unperturbed structure, then evaluate at delta = 0
        probe_spec = StructureSpec("circle", spec.eps_background, spec.eps_inclusion, spec.base_radius, spec.d0)
    loc = localize_bic(probe_spec, probe_cfg, grid, int(opts.get("depth", 6)), int(opts.get("polish", 8)))
    delta = loc.delta if loc.delta else (0.0,) * spec.n_delta
    return BicPoint(loc.beta, tuple(delta), loc.k)


def cmd_derivs(config: dict, grid: Grid, threads: int) -> tuple[dict, str, list[str]]:
    spec = build_structure(config["structure"])
    opts = config["derivs"]
    pt = _derivs_point(config, spec, grid, threads)
    case = opts["case"]
    theta = float(opts.get("theta", math.pi))
    C = int(opts.get("C", 1))
    try:
        rep = derivative_report(spec, pt, grid, case, theta, C)
    except NotABic as exc:
        exc.details["hint"] = "run the localize subcommand and pass its point"
        raise
    rows = [["dk_dbeta", rep.dk_dbeta, float("nan"), float("nan")]]
    rows += [[f"dk_ddelta_{j}", v, float("nan"), float("nan")] for j, v in enumerate(rep.dk_ddelta)]
    if opts.get("fd_check", False):
        parity = opts.get("parity", C if spec.symmetry_x2 else None)
        fd = finite_difference_frequencies(spec, pt, grid, theta, parity, float(opts.get("fd_step", 1e-3)))
        for row in rows:
            ref = fd[row[0]]["richardson"]
            row[2] = float(ref)
            row[3] = relative_error(row[1], ref)
        rep.checks["finite_difference"] = {r[0]: {"reference": r[2], "relative_error": r[3]} for r in rows}
    lines = [
        "mu_det " + ("none" if rep.mu_det is None else f"{format_float(rep.mu_det.real)} {format_float(rep.mu_det.imag)}"),
        f"mu_scale {format_float(rep.mu_scale)}",
        f"index_prediction {rep.index_prediction}",
    ]
    lines += [f"{r[0]} {format_float(r[1])} fd_rel_err {format_float(r[3])}" for r in rows]
    result = {"grid": [grid.n1, grid.n2], **rep.to_dict()}
    return result, _csv(["quantity", "value", "finite_difference", "relative_error"], rows), lines


COMMANDS = {
    "smatrix": cmd_smatrix,
    "probe": cmd_probe,
    "localize": cmd_localize,
    "derivs": cmd_derivs,
}


def write_outputs(out: Path, config: dict, result: dict, samples: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dumps(_sorted(config)) + "\n")
    (out / "result.json").write_text(dumps(result) + "\n")
    (out / "samples.csv").write_text(samples)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bicindex", description="Scattering matrices and bound-state index probes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration or a bundled name such as example1.json")
        p.add_argument("--out", default=None, help="output directory (default: ./<command>-out)")
        p.add_argument("--grid", default=None, help="override the grid, e.g. 256x256")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent samples")
    return parser


def _fail(exc: BicError) -> int:
    sys.stderr.write(json.dumps(exc.to_dict(), default=str, sort_keys=True) + "\n")
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(ConfigInvalid("invalid command line arguments"))
    try:
        if args.threads < 1:
            raise ConfigInvalid("threads must be positive", threads=args.threads)
        config = load_config(args.config)
        validate_config(config, args.command)
        override = parse_grid(args.grid) if args.grid else None
        spec = build_structure(config["structure"])
        grid = _grid(config, spec, override)
        result, samples, lines = COMMANDS[args.command](config, grid, args.threads)
    except BicError as exc:
        if exc.exit_code == 2 and not isinstance(exc, ConfigInvalid):
            exc = ConfigInvalid(exc.message, reason=exc.kind, **exc.details)
        return _fail(exc)
    echo = dict(config)
    echo["grid"] = [grid.n1, grid.n2]
    write_outputs(Path(args.out or f"{args.command}-out"), echo, result, samples)
    for line in lines:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
