"""Batch pipeline entry points.

Five subcommands cover the loop from synthetic data to report tables:

    svpose synth   write seeded scenes plus a manifest
    svpose solve   recover rotations per scene (or per energy table)
    svpose eval    score predictions against ground truth
    svpose grid    build and save an SO(3) grid file
    svpose report  merge per-scene metric CSVs and append a mean row

Every run resolves to a RunConfig. Passing --config loads one from
JSON, explicit flags override individual fields, and the resolved
config is written next to the outputs, so any run can be reproduced
from its config alone. SVP_SEED in the environment overrides the seed
field. Exit codes: 0 ok, 2 IO, 3 format, 4 consistency; errors go to
stderr as one JSON line each. Output files are written atomically.
"""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._fileio import write_text_atomic
from .energy import EnergyTable, TableScorer, load_table, score_over_grid
from .errors import ConsistencyError, FormatError
from .evaluation import center_errors, evaluate, rotation_errors_deg
from .frame import CameraPose
from .so3 import GridSpec, build_grid, grid_from_spec, save_grid
from .solver import SolverConfig, solve
from .synth import (
    RigSpec,
    generate_scene,
    load_scene,
    pose_from_dict,
    pose_to_dict,
    save_scene,
    scene_to_scorer,
)

PRED_FORMAT = "svpose-pred"
PRED_VERSION = 1
MANIFEST_FORMAT = "svpose-manifest"
MANIFEST_VERSION = 1

TRANSLATION_SOURCES = ("gt", "constant-z", "external")


@dataclass
class RunConfig:
    """Everything needed to repeat a run, minus the input files."""

    subcommand: str
    out: str = ""
    seed: int = 0
    # synth
    n_cameras: int = 8
    n_scenes: int = 1
    radius_min: float = 1.0
    radius_max: float = 1.0
    jitter: float = 0.0
    lookat: tuple = (0.0, 0.0, 0.0)
    emit_tables: bool = False
    # solve inputs: scene files/dirs or energy-table files
    scenes: tuple = ()
    tables: tuple = ()
    grid_n: int = 4608
    grid_generator: str = "super_fibonacci"
    grid_seed: int = 0
    kappa: float = 50.0
    noise_angle: float = 0.0
    max_sweeps: int = 50
    patience: int = 1
    translation: str = "gt"
    external: str = ""
    jobs: int = 1
    # eval
    pred: tuple = ()
    gt: tuple = ()
    sweep: bool = False
    # grid
    covering: bool = False
    # report
    inputs: tuple = ()

    def __post_init__(self):
        for name in ("lookat", "scenes", "tables", "pred", "gt", "inputs"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.translation not in TRANSLATION_SOURCES:
            raise ValueError(f"unknown translation source: {self.translation!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def to_json(self):
        doc = asdict(self)
        doc["lookat"] = list(self.lookat)
        for name in ("scenes", "tables", "pred", "gt", "inputs"):
            doc[name] = list(doc[name])
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_config(path) -> dict:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise FormatError(f"{path}: unknown config fields {unknown}")
    return doc


def resolve_config(args) -> RunConfig:
    """Layer config file, explicit flags, defaults, then SVP_SEED."""
    merged = {"subcommand": args.subcommand}
    if args.config:
        loaded = load_config(args.config)
        loaded.pop("subcommand", None)
        merged.update(loaded)
    for key, value in vars(args).items():
        if key in ("subcommand", "config") or value is None:
            continue
        merged[key] = value
    env_seed = os.environ.get("SVP_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError:
            raise FormatError(f"SVP_SEED is not an integer: {env_seed!r}") from None
    return RunConfig(**merged)


def _scene_files(paths, suffix="*.json"):
    """Expand files and directories into a sorted list of input files."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            skip = {"manifest.json", "run_config.json", "aggregate.json"}
            out.extend(sorted(q for q in p.glob(suffix) if q.name not in skip))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such input: {p}")
    if not out:
        raise FileNotFoundError("no input files found")
    return out


def _load_json(path, expect_format, expect_version):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != expect_format:
        raise FormatError(f"{path}: expected a {expect_format} file")
    if doc.get("version") != expect_version:
        raise FormatError(f"{path}: unsupported version {doc.get('version')}")
    return doc


def _fmt(value):
    return f"{value:.10g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    write_text_atomic(path, buf.getvalue())


def cmd_synth(config: RunConfig):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    table_grid = None
    if config.emit_tables:
        table_grid = grid_from_spec(
            GridSpec(
                n=config.grid_n,
                generator=config.grid_generator,
                seed=config.grid_seed,
            )
        )
    entries = []
    for k in range(config.n_scenes):
        rig = RigSpec(
            n_cameras=config.n_cameras,
            seed=config.seed + k,
            radius_min=config.radius_min,
            radius_max=config.radius_max,
            jitter=config.jitter,
            lookat=config.lookat,
        )
        scene = generate_scene(rig)
        name = f"scene_{k:03d}"
        save_scene(scene, out / f"{name}.json")
        entry = {"id": name, "file": f"{name}.json", "seed": rig.seed}
        if table_grid is not None:
            scorer = scene_to_scorer(
                scene,
                kappa=config.kappa,
                noise_angle=config.noise_angle,
                noise_seed=rig.seed if config.noise_angle > 0.0 else None,
            )
            n = rig.n_cameras
            rows = {
                (i, j): score_over_grid(scorer, i, j, table_grid)
                for i in range(n)
                for j in range(i + 1, n)
            }
            table = EnergyTable(grid_spec=table_grid.spec, rows=rows)
            table.save(out / f"{name}.rpet")
            entry["table"] = f"{name}.rpet"
        entries.append(entry)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "scenes": entries,
    }
    write_text_atomic(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    write_text_atomic(out / "run_config.json", config.to_json())
    return 0


def _external_poses(config, scene_id, n_cameras):
    root = Path(config.external)
    path = root / f"{scene_id}.json" if root.is_dir() else root
    if not path.exists():
        raise FileNotFoundError(f"external poses not found for {scene_id}: {path}")
    scene = load_scene(path)
    if len(scene.poses) != n_cameras:
        raise ConsistencyError(
            f"{path}: {len(scene.poses)} poses for {n_cameras} cameras"
        )
    return [p.translation for p in scene.poses]


def _translations(config, scene_id, n_cameras, gt_poses):
    if config.translation == "gt":
        if gt_poses is None:
            raise ConsistencyError(
                "translation source 'gt' needs scene inputs, not energy tables"
            )
        return [p.translation for p in gt_poses]
    if config.translation == "constant-z":
        return [np.array([0.0, 0.0, 1.0]) for _ in range(n_cameras)]
    if not config.external:
        raise ConsistencyError("translation source 'external' needs --external")
    return _external_poses(config, scene_id, n_cameras)


def _write_pred(config, out, scene_id, hyp, translations, grid_spec):
    poses = [
        CameraPose(rotation=r, translation=np.asarray(t, dtype=np.float64))
        for r, t in zip(hyp.rotations, translations)
    ]
    doc = {
        "format": PRED_FORMAT,
        "version": PRED_VERSION,
        "scene_id": scene_id,
        "grid": {
            "n": grid_spec.n,
            "generator": grid_spec.generator,
            "seed": grid_spec.seed,
        },
        "translation_source": config.translation,
        "diagnostics": {
            "total_energy": hyp.total_energy,
            "sweeps_used": hyp.sweeps_used,
        },
        "poses": [pose_to_dict(p) for p in poses],
    }
    write_text_atomic(out / f"{scene_id}.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_solve(config: RunConfig):
    if bool(config.scenes) == bool(config.tables):
        raise ConsistencyError("pass exactly one of scene inputs or table inputs")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    grid_spec = GridSpec(
        n=config.grid_n, generator=config.grid_generator, seed=config.grid_seed
    )
    grid = grid_from_spec(grid_spec)
    solver_config = SolverConfig(
        max_sweeps=config.max_sweeps, patience=config.patience
    )

    def solve_scene(path):
        scene = load_scene(path)
        scorer = scene_to_scorer(
            scene,
            kappa=config.kappa,
            noise_angle=config.noise_angle,
            noise_seed=config.seed if config.noise_angle > 0.0 else None,
        )
        hyp = solve(scorer, scene.rig.n_cameras, grid, solver_config)
        scene_id = Path(path).stem
        translations = _translations(
            config, scene_id, scene.rig.n_cameras, scene.poses
        )
        _write_pred(config, out, scene_id, hyp, translations, grid_spec)
        return scene_id

    def solve_table(path):
        table = load_table(path)
        if table.grid_spec != grid_spec:
            raise ConsistencyError(
                f"{path}: table grid {table.grid_spec} does not match requested {grid_spec}"
            )
        scorer = TableScorer(table, grid)
        hyp = solve(scorer, table.n_cameras, grid, solver_config)
        scene_id = Path(path).stem
        translations = _translations(config, scene_id, table.n_cameras, None)
        _write_pred(config, out, scene_id, hyp, translations, grid_spec)
        return scene_id

    if config.scenes:
        files = _scene_files(config.scenes)
        worker = solve_scene
    else:
        files = _scene_files(config.tables, suffix="*.rpet")
        worker = solve_table
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            ids = list(pool.map(worker, files))
    else:
        ids = [worker(f) for f in files]
    write_text_atomic(
        out / "manifest.json",
        json.dumps(
            {
                "format": MANIFEST_FORMAT,
                "version": MANIFEST_VERSION,
                "predictions": [{"id": i, "file": f"{i}.json"} for i in ids],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
    )
    write_text_atomic(out / "run_config.json", config.to_json())
    return 0


def _load_pred(path):
    doc = _load_json(path, PRED_FORMAT, PRED_VERSION)
    try:
        scene_id = doc["scene_id"]
        poses = [pose_from_dict(p) for p in doc["poses"]]
    except (KeyError, TypeError) as e:
        raise FormatError(f"{path}: malformed prediction ({e})") from None
    return scene_id, poses


def cmd_eval(config: RunConfig):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    preds = {}
    for path in _scene_files(config.pred):
        scene_id, poses = _load_pred(path)
        preds[scene_id] = poses
    gts = {}
    for path in _scene_files(config.gt):
        gts[Path(path).stem] = load_scene(path)
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise ConsistencyError(f"missing ground truth for ids: {missing}")

    rows = []
    flat_keys = None
    errors_by_kind = {"rot": [], "center": []}
    for scene_id in sorted(preds):
        scene = gts[scene_id]
        pred_poses = preds[scene_id]
        if len(pred_poses) != len(scene.poses):
            raise ConsistencyError(
                f"{scene_id}: {len(pred_poses)} predictions for "
                f"{len(scene.poses)} ground-truth cameras"
            )
        report = evaluate(pred_poses, scene.poses, scene.sigma)
        flat = report.to_flat_dict()
        flat_keys = list(flat)
        rows.append([scene_id] + [_fmt(flat[k]) for k in flat_keys])
        if config.sweep:
            errors_by_kind["rot"].append(rotation_errors_deg(pred_poses, scene.poses))
            errors_by_kind["center"].append(
                center_errors(pred_poses, scene.poses) / scene.sigma
            )
    _write_csv(out / "per_scene.csv", ["scene_id"] + flat_keys, rows)

    aggregate = {"n_scenes": len(rows)}
    for col, key in enumerate(flat_keys, start=1):
        aggregate[key] = sum(float(r[col]) for r in rows) / len(rows)
    write_text_atomic(
        out / "aggregate.json", json.dumps(aggregate, sort_keys=True, indent=2) + "\n"
    )

    if config.sweep:
        sweep_rows = []
        rot = np.concatenate(errors_by_kind["rot"])
        for t in range(1, 61):
            sweep_rows.append(["rotation_deg", _fmt(float(t)), _fmt((rot < t).mean())])
        cen = np.concatenate(errors_by_kind["center"])
        for k in range(1, 41):
            t = k / 100.0
            sweep_rows.append(["center_frac", _fmt(t), _fmt((cen < t).mean())])
        _write_csv(out / "sweep.csv", ["metric", "threshold", "accuracy"], sweep_rows)
    write_text_atomic(out / "run_config.json", config.to_json())
    return 0


def cmd_grid(config: RunConfig):
    spec = GridSpec(
        n=config.grid_n, generator=config.grid_generator, seed=config.seed
    )
    grid = grid_from_spec(spec)
    out = Path(config.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_grid(grid, out)
    summary = {"n": spec.n, "generator": spec.generator, "seed": spec.seed}
    if config.covering:
        summary["covering_radius_rad"] = grid.covering_radius
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_report(config: RunConfig):
    if not config.inputs:
        raise ConsistencyError("report needs at least one input CSV")
    header = None
    rows = []
    for path in config.inputs:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                this_header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty CSV") from None
            if header is None:
                header = this_header
            elif this_header != header:
                raise FormatError(f"{path}: CSV header differs from {config.inputs[0]}")
            rows.extend(r for r in reader if r and r[0] != "mean")
    if not rows:
        raise ConsistencyError("no data rows to aggregate")
    mean_row = ["mean"]
    for col in range(1, len(header)):
        mean_row.append(_fmt(sum(float(r[col]) for r in rows) / len(rows)))
    out = Path(config.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, header, rows + [mean_row])
    return 0


def _add_common(sub):
    sub.add_argument("--config", help="JSON RunConfig to start from")
    sub.add_argument("-o", "--out", help="output path")
    sub.add_argument("--seed", type=int)


def parse_args(argv):
    parser = argparse.ArgumentParser(prog="svpose")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("synth", help="generate synthetic scenes")
    _add_common(p)
    p.add_argument("--n", dest="n_cameras", type=int)
    p.add_argument("--scenes", dest="n_scenes", type=int)
    p.add_argument("--radius-min", dest="radius_min", type=float)
    p.add_argument("--radius-max", dest="radius_max", type=float)
    p.add_argument("--jitter", type=float)
    p.add_argument(
        "--lookat", type=lambda s: tuple(float(v) for v in s.split(","))
    )
    p.add_argument("--emit-tables", dest="emit_tables", action="store_const", const=True)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--grid-generator", dest="grid_generator")
    p.add_argument("--grid-seed", dest="grid_seed", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--noise-angle", dest="noise_angle", type=float)

    p = subs.add_parser("solve", help="recover rotations")
    _add_common(p)
    p.add_argument("--scenes", nargs="+")
    p.add_argument("--tables", nargs="+")
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--grid-generator", dest="grid_generator")
    p.add_argument("--grid-seed", dest="grid_seed", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--noise-angle", dest="noise_angle", type=float)
    p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--translation", choices=TRANSLATION_SOURCES)
    p.add_argument("--external", help="scene file/dir supplying translations")
    p.add_argument("--jobs", type=int)

    p = subs.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--pred", nargs="+")
    p.add_argument("--gt", nargs="+")
    p.add_argument("--sweep", action="store_const", const=True)

    p = subs.add_parser("grid", help="build and save an SO(3) grid")
    _add_common(p)
    p.add_argument("--n", dest="grid_n", type=int)
    p.add_argument("--generator", dest="grid_generator")
    p.add_argument("--covering", action="store_const", const=True)

    p = subs.add_parser("report", help="merge metric CSVs")
    _add_common(p)
    p.add_argument("--inputs", nargs="+")

    return parser.parse_args(argv)


COMMANDS = {
    "synth": cmd_synth,
    "solve": cmd_solve,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "report": cmd_report,
}


def main(argv=None):
    args = parse_args(argv)
    try:
        config = resolve_config(args)
        if not config.out:
            raise ConsistencyError("an output path is required (-o)")
        return COMMANDS[config.subcommand](config)
    except OSError as e:
        return _fail(e, 2)
    except FormatError as e:
        return _fail(e, 3)
    except ValueError as e:
        return _fail(e, 4)


def _fail(exc, code):
    line = json.dumps(
        {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    )
    print(line, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
