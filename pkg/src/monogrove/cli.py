"""Command-line entry point: ``monogrove <subcommand>``.

Exit codes: 0 success (certified / passing / separable), 1 usage, I/O or
validation error, 2 completed but uncertified / failing / not separable.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import grove
from .certifier import certify, certify_discrete, dumps as report_dumps
from .dataio import BUILTIN_RECIPES, DataError, Scaler, builtin_constraints, fingerprint, load_csv, load_recipe, split, standardize
from .diffcore import SchemaError
from .metrics import metric_set
from .penalty import PenaltyError, PenaltyGrid
from .schema import (
    GroveArchitecture,
    MonotoneSpec,
    derive_groups,
    group_label,
    load_constraint_file,
    parse_constraint_dict,
    transitive_closure_strong,
)
from .separability import test_separability
from .trainer import TrainConfig, fit

log = logging.getLogger("monogrove")

FAMILIES = ("nam", "mnam", "gnam", "mgnam", "fcnn")
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def default_out_dir() -> Path:
    return Path(os.environ.get("MONOGROVE_OUT", "monogrove_out"))


def _constraints(args):
    if args.spec:
        return load_constraint_file(args.spec)
    name = getattr(args, "recipe", None)
    if name in BUILTIN_RECIPES:
        return parse_constraint_dict(builtin_constraints(name))
    raise DataError("--spec is required unless --recipe names a built-in recipe")


def family_setup(family: str, schema, spec: MonotoneSpec, hidden) -> tuple[GroveArchitecture, MonotoneSpec]:
    """Architecture and training constraints for a model family."""
    if family == "nam":
        return GroveArchitecture.singletons(schema, hidden), MonotoneSpec()
    if family == "fcnn":
        return GroveArchitecture.single_group(schema, hidden), MonotoneSpec()
    if family == "gnam":
        return derive_groups(schema, spec, hidden), MonotoneSpec()
    if family == "mgnam":
        return derive_groups(schema, spec, hidden), spec
    if family == "mnam":
        # all-singleton: non-binary strong pairs can only be imposed as weak pairs
        weak = list(spec.weak_pairs)
        strong = []
        for a, b in spec.strong_pairs:
            if schema.is_binary(a) and schema.is_binary(b):
                strong.append((a, b))
            elif (a, b) not in weak:
                weak.append((a, b))
        return GroveArchitecture.singletons(schema, hidden), MonotoneSpec(spec.individual, tuple(weak), tuple(strong))
    raise ValueError(f"unknown model family {family!r}")


def _config_from_args(args) -> TrainConfig:
    base = TrainConfig()
    return TrainConfig(
        learning_rate=args.lr if args.lr is not None else base.learning_rate,
        epochs_per_round=args.epochs if args.epochs is not None else base.epochs_per_round,
        seed=args.seed,
        lambda_factor=args.lambda_factor,
        max_rounds=args.max_rounds,
        epsilon=args.epsilon,
        grid_points_1d=args.grid_1d,
        grid_points_group=args.grid_group,
    )


def _prepare(args):
    recipe = load_recipe(args.recipe)
    ds = load_csv(args.data, recipe)
    train, test = split(ds, args.split, args.seed)
    train, test, scaler = standardize(train, test)
    return recipe, ds, train, test, scaler


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_train(args) -> int:
    out = Path(args.out_dir)
    started = datetime.now(timezone.utc).isoformat()
    recipe, ds, train, test, scaler = _prepare(args)
    cfile = _constraints(args)
    spec = cfile.spec
    spec.check(train.schema)
    arch, train_spec = family_setup(args.model, train.schema, spec, cfile.hidden)
    config = _config_from_args(args)
    log.info("training %s on %d rows, groups=%s", args.model, train.n, arch.labels)
    model, trace = fit(train, train.schema, train_spec, arch, config, task=recipe.task)

    extra = {
        "family": args.model,
        "spec": spec.to_dict(),
        "training_spec": train_spec.to_dict(),
        "preprocessing": {"recipe": recipe.name, "scaler": scaler.to_dict(), "split": args.split, "seed": args.seed},
        "config": config.to_dict(),
        "certified": trace.certified,
    }
    model_path = out / "model.json"
    _write(model_path, grove.dumps(model, extra))
    _write(out / "trace.csv", trace.to_csv())
    metrics = {
        "train": metric_set(grove.scores(model, train.X), train.y, recipe.task).to_dict(),
        "test": metric_set(grove.scores(model, test.X), test.y, recipe.task).to_dict(),
    }
    _write(out / "metrics.json", json.dumps(metrics, indent=2) + "\n")
    config_blob = json.dumps({"config": config.to_dict(), "family": args.model, "spec": spec.to_dict()}, sort_keys=True)
    manifest = {
        "config_hash": hashlib.sha256(config_blob.encode()).hexdigest(),
        "seed": args.seed,
        "dataset_fingerprint": fingerprint(args.data),
        "recipe": recipe.name,
        "model_path": str(model_path),
        "report_paths": [str(out / "trace.csv"), str(out / "metrics.json")],
        "rows": {"read": ds.report.rows_read, "kept": ds.report.rows_kept, "train": train.n, "test": test.n},
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(f"test metrics: {json.dumps(metrics['test'])}")
    print(f"penalties at eps=0: h={trace.final_h}  certified={trace.certified}")
    return EXIT_OK if trace.certified else EXIT_FAIL


def load_model_file(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return grove.from_dict(raw), raw


def count_domains(model: grove.GroveModel, spec: MonotoneSpec) -> dict | None:
    """Integer domains for every feature in a constrained group, or None if any is continuous."""
    names = set()
    for f in spec.features():
        names.update(model.arch.group_of(f))
    doms = {}
    for n in names:
        f = model.schema[n]
        if f.kind == "continuous":
            return None
        doms[n] = list(range(int(f.lo), int(f.hi) + 1))
    return doms


def cmd_certify(args) -> int:
    model, raw = load_model_file(args.model)
    spec = load_constraint_file(args.spec).spec if args.spec else MonotoneSpec.from_dict(raw.get("spec", {}))
    grid = PenaltyGrid(model.schema, model.arch, args.grid_1d, args.grid_group).audit(args.audit_factor)
    report = certify(model, spec, grid)
    result = {"derivative": report.to_dict()}
    ok = report.passed
    print(report.summary())
    doms = count_domains(model, spec)
    if doms is not None and not spec.is_empty:
        disc = certify_discrete(model, spec, doms)
        result["discrete"] = disc.to_dict()
        ok = ok and disc.passed
        print(disc.summary())
    result["pass"] = ok
    out = Path(args.out_dir)
    _write(out / "certification.json", json.dumps(result, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_evaluate(args) -> int:
    model, raw = load_model_file(args.model)
    recipe = load_recipe(args.recipe)
    ds = load_csv(args.data, recipe)
    seed = args.seed if args.seed is not None else raw.get("preprocessing", {}).get("seed", 0)
    _, test = split(ds, args.split, seed)
    scaler = Scaler.from_dict(raw["preprocessing"]["scaler"]) if "preprocessing" in raw else Scaler.identity(ds.schema.names)
    X = scaler.transform(test.X)
    ms = metric_set(grove.scores(model, X), test.y, model.task)
    _write(Path(args.out_dir) / "evaluation.json", json.dumps(ms.to_dict(), indent=2) + "\n")
    print(json.dumps(ms.to_dict()))
    return EXIT_OK


def cmd_separability(args) -> int:
    recipe, ds, train, test, scaler = _prepare(args)
    spec = _constraints(args).spec
    U = [s for s in args.group_u.split(",") if s]
    V = [s for s in (args.group_v or "").split(",") if s]
    config = _config_from_args(args)
    verdict = test_separability(train, train.schema, spec, U, V, config, threshold=args.threshold, task=recipe.task, eval_data=test)
    _write(Path(args.out_dir) / "separability.json", json.dumps(verdict.to_dict(), indent=2) + "\n")
    print(json.dumps(verdict.to_dict(), indent=2))
    return EXIT_OK if verdict.separable else EXIT_FAIL


def _scaler_of(raw, model) -> Scaler:
    if "preprocessing" in raw:
        return Scaler.from_dict(raw["preprocessing"]["scaler"])
    return Scaler.identity(model.schema.names)


def _parse_values(text: str) -> list[float]:
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty lattice request")
    return vals


def contribution_table(model, scaler: Scaler, label: str, values: dict) -> tuple[list[str], list[tuple]]:
    """Rows ``(*raw feature values, contribution)`` over the product of ``values``."""
    net = model.subnet(label)
    group = next(g for g in model.arch.groups if group_label(g) == label)
    axes = [values[n] for n in group]
    mesh = np.meshgrid(*axes, indexing="ij")
    raw_pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts = np.array([[scaler.value(n, v) for n, v in zip(group, row)] for row in raw_pts])
    vals = grove.contributions(model, label, pts) if net else []
    return list(group), [(*row, float(v)) for row, v in zip(raw_pts, vals)]


def cmd_export_tables(args) -> int:
    model, raw = load_model_file(args.model)
    scaler = _scaler_of(raw, model)
    spec = MonotoneSpec.from_dict(raw.get("spec", {}))
    lattice = _parse_values(args.lattice)
    labels = [args.group] if args.group else [l for l, g in zip(model.arch.labels, model.arch.groups) if len(g) > 1] or model.arch.labels
    for lbl in labels:
        model.subnet(lbl)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for lbl in labels:
        group = next(g for g in model.arch.groups if group_label(g) == lbl)
        names, rows = contribution_table(model, scaler, lbl, {n: lattice for n in group})
        safe = lbl.replace("+", "_")
        with open(out / f"table_{safe}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*names, "value"])
            w.writerows([[*(_fmt(v) for v in r[:-1]), f"{r[-1]:.6f}"] for r in rows])
        layout = table_layout(tuple(names), spec, args.block_by)
        _write_blocks(out / f"table_{safe}_blocks.csv", names, rows, lattice, layout)
        print(f"wrote {out / f'table_{safe}.csv'}")
    return EXIT_OK


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def table_layout(group, spec: MonotoneSpec, block_by: str | None = None) -> tuple[str, str | None, str | None]:
    """(rows, columns, blocks) features: least dominant on rows, most dominant on blocks."""
    closure = transitive_closure_strong(spec)
    rank = {n: sum(1 for a, b in closure if a == n and b in group) for n in group}
    order = sorted(group, key=lambda n: rank[n])  # stable: ties keep schema order
    if block_by is not None:
        if block_by not in group:
            raise ValueError(f"--block-by {block_by!r} is not in group {group_label(group)!r}")
        order = [n for n in order if n != block_by] + [block_by]
    if len(order) == 1:
        return order[0], None, None
    if len(order) == 2:
        return order[0], order[1], None
    return order[0], order[1], order[-1]


def _write_blocks(path: Path, names, rows, lattice, layout) -> None:
    """Pivoted layout: one block per value of the block feature, rows x columns inside.

    Features beyond the three laid out are held at the first lattice value.
    """
    lookup = {tuple(r[:-1]): r[-1] for r in rows}
    r_name, c_name, blk = layout
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if c_name is None:
            w.writerow([r_name, *map(_fmt, lattice)])
            w.writerow(["value", *(f"{lookup[(v,)]:.6f}" for v in lattice)])
            return
        for bval in ([None] if blk is None else lattice):
            if blk is not None:
                w.writerow([f"{blk}={_fmt(bval)}"])
            w.writerow([f"{r_name}\\{c_name}", *map(_fmt, lattice)])
            for rv in lattice:
                cells = []
                for cv in lattice:
                    fixed = {r_name: rv, c_name: cv, **({blk: bval} if blk else {})}
                    cells.append(f"{lookup[tuple(fixed.get(n, lattice[0]) for n in names)]:.6f}")
                w.writerow([_fmt(rv), *cells])


def cmd_export_curves(args) -> int:
    model, raw = load_model_file(args.model)
    scaler = _scaler_of(raw, model)
    feats = args.features.split(",") if args.features else model.schema.names
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "curves.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "group", "x", "value"])
        for name in feats:
            f = model.schema[name]
            g = model.arch.group_of(name)
            if f.kind in ("count", "binary"):
                xs = np.arange(int(f.lo), int(f.hi) + 1, dtype=float)
            else:
                xs = np.linspace(f.lo, f.hi, args.points)
            pts = np.array([[x if n == name else model.schema[n].lo for n in g] for x in xs])
            vals = grove.contributions(model, group_label(g), pts)
            for x, v in zip(xs, vals):
                w.writerow([name, group_label(g), repr(scaler.raw(name, x)), f"{v:.6f}"])
    print(f"wrote {path}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 means "uncertified"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="monogrove", description="Monotone grove additive models")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--out-dir", default=str(default_out_dir()))
        if data:
            sp.add_argument("--data", required=True, help="CSV file")
            sp.add_argument("--recipe", required=True, help="gmsc | compas | heart | recipe JSON path")
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--split", type=float, default=0.75)

    def training(sp):
        sp.add_argument("--spec", help="constraint spec JSON (defaults to the recipe's built-in spec)")
        sp.add_argument("--grid-1d", type=int, default=TrainConfig.grid_points_1d)
        sp.add_argument("--grid-group", type=int, default=TrainConfig.grid_points_group)
        sp.add_argument("--epsilon", type=float, default=TrainConfig.epsilon)
        sp.add_argument("--lambda-factor", type=float, default=TrainConfig.lambda_factor)
        sp.add_argument("--max-rounds", type=int, default=TrainConfig.max_rounds)
        sp.add_argument("--epochs", type=int, default=None, help="epochs per round")
        sp.add_argument("--lr", type=float, default=None)

    sp = sub.add_parser("train", help="fit a model family")
    common(sp)
    training(sp)
    sp.add_argument("--model", choices=FAMILIES, default="mgnam")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("certify", help="check a saved model's monotonicity")
    common(sp, data=False)
    sp.add_argument("--model", required=True, help="model JSON")
    sp.add_argument("--spec")
    sp.add_argument("--grid-1d", type=int, default=TrainConfig.grid_points_1d)
    sp.add_argument("--grid-group", type=int, default=TrainConfig.grid_points_group)
    sp.add_argument("--audit-factor", type=int, default=4)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("evaluate", help="metrics of a saved model on the test split")
    common(sp)
    sp.set_defaults(seed=None)
    sp.add_argument("--model", required=True, help="model JSON")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("separability", help="additive separability of two feature groups")
    common(sp)
    training(sp)
    sp.add_argument("--group-u", required=True, help="comma-separated features")
    sp.add_argument("--group-v", default="", help="comma-separated features")
    sp.add_argument("--threshold", type=float, default=0.005)
    sp.set_defaults(func=cmd_separability)

    sp = sub.add_parser("export-tables", help="per-group contribution tables over an integer lattice")
    common(sp, data=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--group", help="group label, e.g. x3+x7+x9")
    sp.add_argument("--lattice", default="0,1,2", help="comma-separated raw values per feature")
    sp.add_argument("--block-by", help="feature whose values index the blocks")
    sp.set_defaults(func=cmd_export_tables)

    sp = sub.add_parser("export-curves", help="1-D marginal contribution curves")
    common(sp, data=False)
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", help="comma-separated; default all")
    sp.add_argument("--points", type=int, default=50)
    sp.set_defaults(func=cmd_export_curves)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, SchemaError, PenaltyError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
