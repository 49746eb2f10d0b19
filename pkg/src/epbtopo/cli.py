"""Command-line driver.

Subcommands and the files they write (all into ``--out``):

``invariants``
    ``invariants.json`` (keys ``loop, dn, dn_raw, vorticities, gap,
    permutation, berry, field_dn, n_points, quantization_error``) and
    ``berry_trace.csv`` with columns ``step,theta_partial_rad``: the running
    Berry phase after each transport step, ending at ``berry.theta_rad``.
``surface``
    ``surface.csv`` with columns ``p1,p2,re_w_plus,im_w_plus,re_w_minus,im_w_minus``:
    both eigenvalues on a plane grid, principal-branch labels, rad/s
    (divided by omega0 with ``--normalize-omega0``).
``field``
    ``field.csv`` with columns ``p1,p2,d1,d2,norm``: the discriminant field
    ``grad arg Delta`` on a plane grid.
``pipeline``
    ``dataset.csv`` (two-port spectra), ``field_dataset.csv`` (14-port field
    maps), ``calibration_dataset.csv``, ``onsite_dataset.csv``, each with a
    JSON sidecar; ``fits.json`` and ``report.json``.
``loops list`` / ``loops show NAME``
    Print the built-in loops.

Exit codes: 0 success, 1 usage or validation error, 2 non-quantized result
or retrieved invariants differing from ground truth, 3 too many failed fits.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from . import io
from .errors import DegenerateLoop, EPBError, NotQuantized, PipelineFailure
from .invariants import PlaneSpec, analyze_loop, discriminant_field
from .model import COORD_NAMES, ModelKind, SystemConstants, eigenvalues_many
from .paths import builtin_loop, builtin_names, loop_to_dict, read_loop_file, sample_loop
from .retrieval.pipeline import PIPELINE_SUBDIVISIONS, pipeline_reproduce

EXIT_OK, EXIT_USAGE, EXIT_NOT_QUANTIZED, EXIT_PIPELINE = 0, 1, 2, 3

DEFAULT_PLANES = {
    # 101 points put rows on xi_r = -1, xi_r = 0 and xi_i = 0
    ModelKind.PARABOLA: (("xi_r", "xi_i"), 0.0, (-2.0, 0.5), (-1.25, 1.25)),
    ModelKind.CHAIN: (("zeta_r", "zeta_i"), 0.0, (-1.0, 1.0), (-1.0, 1.0)),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for NotQuantized here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Validated settings shared by the subcommands."""

    kind: ModelKind
    constants: SystemConstants
    loop_name: str = None
    loop_file: str = None
    subdivisions: int = None
    eta: float = 0.0
    seed: int = 0
    out: Path = Path(".")
    normalize: bool = False

    def validate(self, need_loop=False):
        if need_loop and (self.loop_name is None) == (self.loop_file is None):
            raise UsageError("exactly one of --loop or --loop-file is required")
        if self.subdivisions is not None and self.subdivisions < 1:
            raise UsageError("--subdivisions must be a positive integer")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise UsageError("--eta must be a finite number >= 0")
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {self.out}: {exc}") from None
        if not os.access(self.out, os.W_OK):
            raise UsageError(f"output directory {self.out} is not writable")

    def loop_spec(self):
        if self.loop_file is not None:
            try:
                spec = read_loop_file(self.loop_file)
            except OSError as exc:
                raise UsageError(f"cannot read loop file {self.loop_file}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise UsageError(f"loop file {self.loop_file} is not valid JSON: {exc}") from None
        else:
            spec = builtin_loop(self.loop_name)
        if self.kind is not None and spec.kind is not self.kind:
            raise UsageError(f"loop {spec.name!r} uses the {spec.kind.value} model, not {self.kind.value}")
        return spec


def _bool(s):
    v = str(s).strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {s!r}")


def _pair(s):
    try:
        a, b = (float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {s!r}") from None
    return a, b


def _grid(s):
    try:
        a, b = (int(x) for x in s.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N1xN2, got {s!r}") from None
    return a, b


def _common(p, loop=True):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=[k.value for k in ModelKind], default=None)
    g.add_argument("--omega0", type=float, default=SystemConstants.omega0, help="rad/s")
    g.add_argument("--gamma0", type=float, default=SystemConstants.gamma0, help="rad/s")
    g.add_argument("--kappa0", type=float, default=SystemConstants.kappa0, help="rad/s")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--normalize-omega0", action="store_true", help="divide frequencies by omega0")
    if loop:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--loop", help="built-in loop name (see `loops list`)")
        src.add_argument("--loop-file", help="loop description JSON")
        p.add_argument("--subdivisions", type=int, default=None, help="points per loop segment")


def _plane_args(p):
    p.add_argument("--plane", default=None, help="two coordinate names, e.g. xi_r,xi_i")
    p.add_argument("--fixed", type=float, default=None, help="value of the third coordinate")
    p.add_argument("--range1", type=_pair, default=None, metavar="LO,HI")
    p.add_argument("--range2", type=_pair, default=None, metavar="LO,HI")
    p.add_argument("--grid", type=_grid, default=(101, 101), metavar="N1xN2")


def build_parser():
    ap = _Parser(prog="epbtopo", description="Topological invariants of the exceptional-parabola two-state model.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("invariants", help="DN, vorticities, gap type and Berry phase of a loop")
    _common(p)
    p.add_argument("--state", type=int, default=1, help="1-based starting state for the Berry phase")
    p.add_argument("--cycles", type=int, default=None, help="loop traversals (default: permutation order)")

    p = sub.add_parser("surface", help="eigenvalue sheets on a coordinate plane")
    _common(p, loop=False)
    _plane_args(p)

    p = sub.add_parser("field", help="discriminant field on a coordinate plane")
    _common(p, loop=False)
    _plane_args(p)

    p = sub.add_parser("pipeline", help="synthetic measurement and retrieval along a loop")
    _common(p)
    p.add_argument("--eta", type=float, default=0.0, help="relative noise level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--refit-constants", type=_bool, default=True, metavar="true|false")
    p.add_argument("--state", type=int, default=1, help="1-based starting state for the Berry phase")

    p = sub.add_parser("loops", help="built-in loops")
    lsub = p.add_subparsers(dest="loops_command", required=True, parser_class=_Parser)
    lsub.add_parser("list", help="names and descriptions")
    ps = lsub.add_parser("show", help="print a loop as JSON")
    ps.add_argument("name")
    return ap


def _config(args):
    try:
        c = SystemConstants(args.omega0, args.gamma0, args.kappa0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(
        kind=ModelKind.parse(args.model) if args.model else None,
        constants=c,
        loop_name=getattr(args, "loop", None),
        loop_file=getattr(args, "loop_file", None),
        subdivisions=getattr(args, "subdivisions", None),
        eta=getattr(args, "eta", 0.0),
        seed=getattr(args, "seed", 0),
        out=args.out,
        normalize=args.normalize_omega0,
    )


def _constants_json(c):
    return {"omega0": c.omega0, "gamma0": c.gamma0, "kappa0": c.kappa0}


def _state_index(state):
    if state not in (1, 2):
        raise UsageError("--state must be 1 or 2")
    return state - 1


def cmd_invariants(args, cfg):
    cfg.validate(need_loop=True)
    state = _state_index(args.state)
    if args.cycles is not None and args.cycles < 1:
        raise UsageError("--cycles must be a positive integer")
    spec = cfg.loop_spec()
    loop = sample_loop(spec, cfg.subdivisions)
    try:
        res = analyze_loop(loop, cfg.constants, state=state, cycles=args.cycles)
    except NotQuantized as exc:
        print(f"not quantized: {exc}", file=sys.stderr)
        return EXIT_NOT_QUANTIZED
    out = {"version": __version__, "model": spec.kind.value, "constants": _constants_json(cfg.constants)}
    out.update(res.to_json())
    out["berry"]["quantization_error"] = res.berry.quantization_error
    io.write_json(out, cfg.out / "invariants.json")
    io.write_berry_trace(res.berry.trace, cfg.out / "berry_trace.csv")
    print(
        f"{res.name}: DN = {out['dn']}, gap = {out['gap']}, "
        f"Berry phase = {res.berry.theta / math.pi:+.6f} pi over {res.cycles} cycle(s)"
    )
    return EXIT_OK


def _plane(args, cfg):
    kind = cfg.kind or ModelKind.PARABOLA
    axes, fixed, r1, r2 = DEFAULT_PLANES[kind]
    if args.plane is not None:
        axes = tuple(a.strip() for a in args.plane.split(","))
        names = COORD_NAMES[kind]
        if len(axes) != 2 or any(a not in names for a in axes) or axes[0] == axes[1]:
            raise UsageError(f"invalid plane {args.plane!r}: give two distinct names from {', '.join(names)}")
        if args.range1 is None or args.range2 is None:
            raise UsageError("--range1 and --range2 are required with --plane")
    n1, n2 = args.grid
    if n1 < 1 or n2 < 1:
        raise UsageError(f"grid dimensions must be positive, got {n1}x{n2}")
    try:
        return PlaneSpec(
            kind,
            axes,
            fixed if args.fixed is None else args.fixed,
            args.range1 or r1,
            args.range2 or r2,
        )
    except ValueError as exc:
        raise UsageError(f"invalid plane: {exc}") from None


def cmd_surface(args, cfg):
    cfg.validate()
    plane = _plane(args, cfg)
    p1, p2 = plane.grid(*args.grid)
    X = plane.coords(p1, p2)
    w = eigenvalues_many(plane.kind, cfg.constants, X.reshape(-1, 3)).reshape(X.shape[:-1] + (2,))
    if cfg.normalize:
        w = w / cfg.constants.omega0
    io.write_surface(cfg.out / "surface.csv", p1, p2, w)
    print(f"surface: {len(p1)}x{len(p2)} grid in ({plane.axes[0]}, {plane.axes[1]})")
    return EXIT_OK


def cmd_field(args, cfg):
    cfg.validate()
    plane = _plane(args, cfg)
    fg = discriminant_field(cfg.constants, plane, *args.grid)
    io.write_field(cfg.out / "field.csv", fg)
    print(f"field: {len(fg.p1)}x{len(fg.p2)} grid in ({plane.axes[0]}, {plane.axes[1]})")
    return EXIT_OK


def _fits_json(rep):
    cal = rep.calibration
    on = rep.onsite
    return {
        "version": __version__,
        "calibration": cal.to_json(),
        "onsite": {
            "poles": [[p.real, p.imag] for p in on.poles],
            "residual": on.residual,
            "profile_a": [[v.real, v.imag] for v in on.modes.profile_a],
            "profile_b": [[v.real, v.imag] for v in on.modes.profile_b],
        },
        "points": [
            dict({"point_index": i, "coords": list(rep.coords[i])}, **(f.to_json() if f is not None else {"failed": True}))
            for i, f in enumerate(rep.fits)
        ],
    }


def cmd_pipeline(args, cfg):
    cfg.validate(need_loop=True)
    state = _state_index(args.state)
    spec = cfg.loop_spec()
    if spec.kind is not ModelKind.PARABOLA:
        raise UsageError("the pipeline supports parabola-model loops only")
    sub = cfg.subdivisions if cfg.subdivisions is not None else PIPELINE_SUBDIVISIONS
    try:
        rep = pipeline_reproduce(
            spec,
            eta=cfg.eta,
            seed=cfg.seed,
            c=cfg.constants,
            subdivisions=sub,
            refit_constants=args.refit_constants,
            state=state,
        )
    except PipelineFailure as exc:
        io.write_json(
            {
                "version": __version__,
                "loop": spec.name,
                "eta": cfg.eta,
                "seed": cfg.seed,
                "error": str(exc),
                "failed_points": [{"point_index": i, "error": e} for i, e in exc.failed],
            },
            cfg.out / "report.json",
        )
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE

    c = cfg.constants
    meta = {
        "loop": spec.name,
        "constants": _constants_json(c),
        "geometry": {"ports_per_cavity": 7, "height_m": 0.110, "source_port": 3},
    }
    ds = rep.datasets
    io.write_dataset(ds["spectra"], cfg.out / "dataset.csv", dict(meta, kind="spectra"))
    io.write_dataset(ds["field"], cfg.out / "field_dataset.csv", dict(meta, kind="field"))
    io.write_dataset(ds["calibration"], cfg.out / "calibration_dataset.csv", dict(meta, kind="calibration"))
    io.write_dataset(ds["onsite"], cfg.out / "onsite_dataset.csv", dict(meta, kind="onsite"))
    io.write_json(_fits_json(rep), cfg.out / "fits.json")
    report = {"version": __version__}
    report.update(rep.to_json())
    io.write_json(report, cfg.out / "report.json")

    t, r = rep.truth, rep.retrieved
    if "error" in r:
        print(f"{spec.name}: retrieval failed: {r['error']}", file=sys.stderr)
    else:
        print(
            f"{spec.name}: truth DN {t['dn']}, Theta/pi {t['theta_quantized_pi']}; "
            f"retrieved DN {r['dn']}, Theta/pi {r['theta_quantized_pi']}"
        )
    return EXIT_OK if rep.match else EXIT_NOT_QUANTIZED


def cmd_loops(args):
    if args.loops_command == "list":
        for n in builtin_names():
            spec = builtin_loop(n)
            desc = spec.description.splitlines()[0] if spec.description else ""
            print(f"{n:14s} {spec.kind.value:9s} {desc}")
        return EXIT_OK
    json.dump(loop_to_dict(builtin_loop(args.name)), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


COMMANDS = {"invariants": cmd_invariants, "surface": cmd_surface, "field": cmd_field, "pipeline": cmd_pipeline}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "loops":
            return cmd_loops(args)
        return COMMANDS[args.command](args, _config(args))
    except (UsageError, DegenerateLoop, ValueError) as exc:
        print(f"error: {type(exc).__name__ + ': ' if isinstance(exc, EPBError) else ''}{exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotQuantized as exc:
        print(f"not quantized: {exc}", file=sys.stderr)
        return EXIT_NOT_QUANTIZED
    except EPBError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
