"""``crystalwulff`` command line.

Every subcommand reads JSON inputs, writes its results as JSON (plus OFF
meshes and CSV where relevant) into ``--output-dir`` and echoes the main
result on stdout.  Exit status: 0 on success (a found counterexample is a
success with a flagged report), 1 on invalid input, 2 on a numerical failure.
Failures print a JSON diagnostic on stderr.

``--norm`` accepts a norm JSON file or the name of a shipped preset.  The
default output directory is taken from ``CRYSTALWULFF_OUTPUT_DIR`` (else the
working directory).
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .correspondence import build_correspondence, distance_comparison, divergence_stats
from .crystal import CrystalNorm, offset_shape, renormalize_volume
from .energy import first_order_energy_delta, offset_energy, surface_energy, wulff_deficit
from .errors import ComputationError, CrystalWulffError, ValidationError
from .geometry import CellComplex, convex_hull, to_off
from .harness import (
    KINDS,
    PerturbationFamily,
    epsilon_minimality_falsifier,
    stability_sweep,
)
from .potential import (
    MinimizeConfig,
    Norm,
    Potential,
    Quadratic,
    gravity_potential,
    minimize_with_potential,
)
from .presets import PRESETS, load_preset
from .projection import DEFAULT_ETA, ProjectionProblem, project_to_family

COMMANDS = ("build", "offset", "energy", "expand", "project", "correspondence", "sweep",
            "falsify", "minimize")
DEFAULT_SEED = 20240917
OUTPUT_ENV = "CRYSTALWULFF_OUTPUT_DIR"
BUILTIN_POTENTIALS = {"quadratic": Quadratic, "norm": Norm, "gravity": gravity_potential}


@dataclass
class RunConfig:
    command: str
    norm_path: str = None
    set_path: str = None
    offset_path: str = None
    offset2_path: str = None
    potential: str = None
    output_dir: str = None
    eta: float = DEFAULT_ETA
    tol: float = None
    max_iter: int = 50
    eps: float = 0.0
    R: float = None
    samples: int = 100
    competitors: int = 1000
    kind: str = "corner-truncation"
    magnitude: float = 0.1
    mass: float = None
    seed: int = DEFAULT_SEED
    renormalize: bool = False
    align: bool = False
    distance_samples: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.output_dir is None:
            self.output_dir = os.environ.get(OUTPUT_ENV, ".")
        if not 0.0 < self.eta < 1.0:
            raise ValidationError("--eta must lie in (0, 1)")
        if self.tol is not None and not self.tol > 0:
            raise ValidationError("--tol must be positive")
        if self.max_iter < 1 or self.samples < 1 or self.competitors < 1:
            raise ValidationError("--max-iter, --samples and --competitors must be >= 1")
        if not self.eps >= 0:
            raise ValidationError("--eps must be nonnegative")
        if self.R is not None and not self.R > 0:
            raise ValidationError("-R must be positive")
        if not 0.0 < self.magnitude < 1.0:
            raise ValidationError("--magnitude must lie in (0, 1)")
        if self.kind not in KINDS:
            raise ValidationError(f"--kind must be one of {KINDS}")
        if self.mass is not None and not self.mass > 0:
            raise ValidationError("--mass must be positive")


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------


def _read_json(path, what):
    if path is None:
        raise ValidationError(f"missing {what} file")
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path!r} is not valid JSON: {exc.msg}") from exc


def load_norm(spec):
    if spec is None:
        raise ValidationError("--norm is required")
    if not Path(spec).exists() and spec in PRESETS:
        return load_preset(spec)
    d = _read_json(spec, "norm")
    try:
        return CrystalNorm.from_dict(d)
    except KeyError as exc:
        raise ValidationError(f"norm file lacks field {exc}") from exc


def load_set(path):
    """Cell complex from ``{cells: [...]}``, ``{dim, halfspaces}`` or ``{vertices}``."""
    d = _read_json(path, "set")
    try:
        if "vertices" in d and "halfspaces" not in d:
            return CellComplex.of(convex_hull(np.asarray(d["vertices"], dtype=float)))
        return CellComplex.from_dict(d)
    except KeyError as exc:
        raise ValidationError(f"set file lacks field {exc}") from exc


def load_offset(path, norm):
    d = _read_json(path, "offset")
    a = d["a"] if isinstance(d, dict) else d
    a = np.asarray(a, dtype=float)
    if a.shape != (norm.N,):
        raise ValidationError(f"offset vector needs {norm.N} entries")
    return a


def load_potential(spec):
    if spec is None:
        raise ValidationError("--potential is required")
    if spec in BUILTIN_POTENTIALS and not Path(spec).exists():
        return BUILTIN_POTENTIALS[spec]()
    return Potential.from_dict(_read_json(spec, "potential"))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _write(out, name, text):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _polytope_record(P, norm):
    return {"polytope": P.to_dict(), "volume": P.volume, "energy": surface_energy(P, norm).total,
            "areas": P.areas.tolist(), "source_indices": list(map(int, P.source_indices))}


def cmd_build(cfg, out):
    norm = load_norm(cfg.norm_path)
    rec = {"norm": norm.to_dict(), **_polytope_record(norm.K, norm)}
    _write(out, "wulff.json", _dump(rec))
    if norm.dim == 3:
        _write(out, "wulff.off", to_off(norm.K))
    return rec


def cmd_offset(cfg, out):
    norm = load_norm(cfg.norm_path)
    a = load_offset(cfg.offset_path, norm)
    if cfg.renormalize:
        a = renormalize_volume(norm, a)
    P = offset_shape(norm, a)
    rec = {"a": a.tolist(), **_polytope_record(P, norm)}
    _write(out, "offset.json", _dump(rec))
    if norm.dim == 3:
        _write(out, "offset.off", to_off(P))
    return rec


def cmd_energy(cfg, out):
    norm = load_norm(cfg.norm_path)
    E = load_set(cfg.set_path)
    rep = surface_energy(E, norm)
    rec = {**rep.to_dict(), "volume": E.volume, "wulff_deficit": wulff_deficit(E, norm)}
    _write(out, "energy.json", _dump(rec))
    return rec


def cmd_expand(cfg, out):
    norm = load_norm(cfg.norm_path)
    a = load_offset(cfg.offset_path, norm)
    a2 = load_offset(cfg.offset2_path, norm) if cfg.offset2_path else np.zeros(norm.N)
    rep = first_order_energy_delta(norm, a, a2)
    vol = [offset_shape(norm, x).volume for x in (a, a2)]
    rec = {**rep.to_dict(), "a": a.tolist(), "a2": a2.tolist(),
           "exact_delta_F": offset_energy(norm, a2) - offset_energy(norm, a),
           "exact_delta_V": vol[1] - vol[0]}
    _write(out, "expand.json", _dump(rec))
    return rec


def cmd_project(cfg, out):
    norm = load_norm(cfg.norm_path)
    E = load_set(cfg.set_path)
    p = ProjectionProblem(norm, E, eta=cfg.eta, tol=cfg.tol, max_iter=cfg.max_iter)
    rec = project_to_family(p).to_dict()
    _write(out, "project.json", _dump(rec))
    return rec


def cmd_correspondence(cfg, out):
    norm = load_norm(cfg.norm_path)
    a = load_offset(cfg.offset_path, norm)
    kw = {"eps": cfg.eps} if cfg.eps > 0 else {}
    cmap = build_correspondence(norm, a, **kw)
    rec = {"stats": divergence_stats(cmap).to_dict(), "n_simplices": cmap.n_simplices,
           "n_T": int(cmap.in_T.sum()), "map": cmap.to_dict()}
    if cfg.distance_samples:
        rec["distance_ratio"] = distance_comparison(cmap, norm, cfg.distance_samples,
                                                    seed=cfg.seed)
    _write(out, "correspondence.json", _dump(rec))
    if norm.dim == 3:
        _write(out, "correspondence.off", cmap.to_off())
    return {k: v for k, v in rec.items() if k != "map"}


def cmd_sweep(cfg, out):
    norm = load_norm(cfg.norm_path)
    fam = PerturbationFamily(cfg.kind, cfg.magnitude, seed=cfg.seed)
    res = stability_sweep(norm, fam, cfg.samples, eta=cfg.eta, tol=cfg.tol, align=cfg.align)
    _write(out, "records.jsonl", res.records_jsonl())
    _write(out, "summary.json", res.summary_json() + "\n")
    _write(out, "ratios.csv", res.ratios_csv())
    return res.summary()


def cmd_falsify(cfg, out):
    norm = load_norm(cfg.norm_path)
    if cfg.set_path:
        cells = load_set(cfg.set_path).cells
        if len(cells) != 1:
            raise ValidationError("falsify needs a single convex set")
        S = cells[0]
    elif cfg.offset_path:
        S = offset_shape(norm, load_offset(cfg.offset_path, norm))
    else:
        S = norm.K
    R = cfg.R if cfg.R is not None else norm.dim + 1.0
    rep = epsilon_minimality_falsifier(norm, S, cfg.eps, R, cfg.competitors, seed=cfg.seed)
    rec = {"eps": cfg.eps, "R": R, "competitors": cfg.competitors, "seed": cfg.seed,
           **rep.to_dict()}
    _write(out, "falsify.json", _dump(rec))
    return rec


def cmd_minimize(cfg, out):
    norm = load_norm(cfg.norm_path)
    g = load_potential(cfg.potential)
    m = cfg.mass if cfg.mass is not None else 0.1 * norm.K.volume
    res = minimize_with_potential(norm, g, m, MinimizeConfig())
    rec = {**res.to_dict(), "mass": m, "potential": g.to_dict(),
           "note": "the small-mass regime is asymptotic; m_max = 0.25 |K| is a heuristic cap"}
    _write(out, "minimize.json", _dump(rec))
    return rec


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run(cfg):
    """Execute ``cfg``; returns the exit status."""
    out = Path(cfg.output_dir)
    try:
        rec = HANDLERS[cfg.command](cfg, out)
    except ValidationError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    except ComputationError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(json.dumps({"error": "ValidationError", "message": str(exc)}), file=sys.stderr)
        return 1
    except CrystalWulffError as exc:  # pragma: no cover - every error has a category
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    print(json.dumps(rec, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: JSON on stderr, exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        sys.exit(1)


def build_parser():
    ap = _Parser(prog="crystalwulff", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help, *opts):
        p = sub.add_parser(name, help=help)
        p.add_argument("--norm", dest="norm_path", required=True,
                       help="norm JSON file or preset name (" + ", ".join(PRESETS) + ")")
        p.add_argument("--output-dir", default=None,
                       help=f"where result files go (default ${OUTPUT_ENV} or .)")
        for o in opts:
            o(p)
        return p

    def set_(p, required=True):
        p.add_argument("--set", dest="set_path", required=required, help="set JSON file")

    def offset(p, required=True):
        p.add_argument("--offset", dest="offset_path", required=required,
                       help="offset vector JSON (array or {\"a\": [...]})")

    def eta(p):
        p.add_argument("--eta", type=float, default=DEFAULT_ETA)
        p.add_argument("--tol", type=float, default=None, help="residual tolerance (1e-10 |K|)")

    def seed(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    add("build", "Wulff shape K of a norm")
    add("offset", "offset shape K^a", offset,
        lambda p: p.add_argument("--renormalize", action="store_true",
                                 help="dilate to volume |K| first"))
    add("energy", "surface energy F(E) of a set", set_)
    add("expand", "first-order expansion of F between two offsets", offset,
        lambda p: p.add_argument("--offset2", dest="offset2_path", default=None,
                                 help="second offset (default 0)"))
    add("project", "project a set onto the offset family", set_, eta,
        lambda p: p.add_argument("--max-iter", type=int, default=50))
    add("correspondence", "facet correspondence map K^a -> K", offset, seed,
        lambda p: p.add_argument("--eps", type=float, default=0.0,
                                 help="vertex matching tie tolerance"),
        lambda p: p.add_argument("--distance-samples", type=int, default=0,
                                 help="points per facet for the cone distance check"))
    add("sweep", "stability sweep over a perturbation family", eta, seed,
        lambda p: p.add_argument("--kind", choices=KINDS, default="corner-truncation"),
        lambda p: p.add_argument("--magnitude", type=float, default=0.1),
        lambda p: p.add_argument("--samples", type=int, default=100),
        lambda p: p.add_argument("--align", action="store_true",
                                 help="center samples before projecting"))
    add("falsify", "(eps, R)-minimality falsifier", seed,
        lambda p: set_(p, required=False), lambda p: offset(p, required=False),
        lambda p: p.add_argument("--eps", type=float, default=0.0),
        lambda p: p.add_argument("-R", type=float, default=None, help="radius (default n + 1)"),
        lambda p: p.add_argument("--competitors", type=int, default=1000))
    add("minimize", "minimise F + potential over dilated offset shapes",
        lambda p: p.add_argument("--potential", required=True,
                                 help="potential JSON or one of " + ", ".join(BUILTIN_POTENTIALS)),
        lambda p: p.add_argument("--mass", type=float, default=None, help="default 0.1 |K|"))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
    except ValidationError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
