"""Command-line interface: ``pvrf <subcommand> [options]``.

Every subcommand needs ``--seed``; options may also come from a JSON file
given with ``--config`` (command-line flags win).  Each output file ``F``
is accompanied by ``F.meta.json`` recording the package version, the seed,
all effective parameters and SHA-256 hashes of the input files, which is
enough to regenerate ``F``.  The thread count is deliberately left out:
outputs do not depend on it.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .data import CsvSchema, csv_schema_for, load_csv, write_csv
from .effects import Contrast, individual_contrasts
from .errors import DataError, MissingColumnError, NumericError, PvrfError
from .evaluate import cross_validate, shapley_mc
from .forest import ForestParams
from .models import METHODS, FittedModel, fit_model
from .pseudo import pseudo_values, pseudo_values_fast
from .simulate import (CENSORING_LEVELS, DEFAULT_COEF_SEED, PILOT_N, QUANTILES, calibrate_scenario, default_scenarios,
                       simulate_dataset, theoretical_contrast, theoretical_rmst)
from .study import AGG_FIELDS, ALL_METHODS, CALIBRATION_SEED, LONG_FIELDS, StudyConfig, run_study, write_table

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
FOREST_METHODS = ("cart", "conditional")
MODEL_METHODS = tuple(m for m in METHODS if m not in FOREST_METHODS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class _Run:
    """Effective options of one invocation plus its metadata bookkeeping."""

    def __init__(self, command, opts):
        self.command = command
        self.opts = opts
        self.inputs = {}

    def __getattr__(self, name):
        try:
            return self.opts[name]
        except KeyError:
            raise AttributeError(name) from None

    def input(self, path):
        path = str(path)
        if not Path(path).is_file():
            raise DataError(f"input file not found: {path}")
        self.inputs[path] = sha256(path)
        return path

    def meta(self):
        params = {k: v for k, v in sorted(self.opts.items()) if k not in ("threads", "config", "seed")}
        return {"tool": "pvrf", "version": __version__, "command": self.command, "seed": self.opts["seed"],
                "params": params, "inputs": dict(sorted(self.inputs.items()))}

    def done(self, path):
        _write_json(f"{path}.meta.json", self.meta())


def _schema(run) -> CsvSchema:
    schema = CsvSchema.from_json(run.input(run.schema))
    if run.opts.get("treatment_col"):
        schema = replace(schema, treatment=run.treatment_col)
    return schema


def _dataset(run):
    return load_csv(run.input(run.data), _schema(run), drop_incomplete=bool(run.opts.get("drop_incomplete")))


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def load_covariates(path, schema, id_col=None):
    """Covariate codes laid out by a model schema; time/status columns are not needed."""
    header, rows = _read_table(path)
    for c in schema:
        if c.name not in header:
            raise MissingColumnError(f"column {c.name!r} not found in {path}")
    if id_col and id_col not in header:
        raise MissingColumnError(f"id column {id_col!r} not found in {path}")
    X = np.empty((len(rows), len(schema)))
    for i, row in enumerate(rows):
        for j, c in enumerate(schema):
            raw = (row[c.name] or "").strip()
            if c.kind == "continuous":
                try:
                    X[i, j] = float(raw)
                except ValueError:
                    raise DataError(f"row {i}: column {c.name!r} is not numeric: {raw!r}") from None
                if not math.isfinite(X[i, j]):
                    raise DataError(f"row {i}: column {c.name!r} is not finite")
            else:
                X[i, j] = c.code(raw)
    ids = [row[id_col] for row in rows] if id_col else [str(i) for i in range(len(rows))]
    return X, ids


@dataclass(frozen=True)
class _Rows:
    """Just enough of a dataset for counterfactual prediction."""

    X: np.ndarray
    schema: tuple
    treatment: str | None

    @property
    def names(self):
        return [c.name for c in self.schema]


def _forest_params(run):
    mtry = run.opts.get("mtry", "auto")
    tune = mtry == "tune"
    if mtry in ("auto", "tune"):
        k = None
    else:
        try:
            k = int(mtry)
        except ValueError:
            raise UsageError(f"--mtry must be auto, tune or an integer, got {mtry!r}") from None
    return ForestParams(n_trees=int(run.n_trees), mtry=k, n_permutations=int(run.n_permutations),
                        seed=int(run.seed)), tune


def _fit_options(run, method):
    if method in FOREST_METHODS:
        params, tune = _forest_params(run)
        return {"params": params, "tune": tune, "n_jobs": run.threads}
    if method == "reference":
        if not run.opts.get("terms"):
            raise UsageError("the reference model needs --terms")
        return {"terms": list(run.terms), "t0": run.opts.get("t0"), "treatment": run.opts.get("treatment_col")}
    return {}


# ---------------------------------------------------------- subgroups


_CMP = {ast.Eq: lambda a, b: a == b, ast.NotEq: lambda a, b: a != b, ast.Lt: lambda a, b: a < b,
        ast.LtE: lambda a, b: a <= b, ast.Gt: lambda a, b: a > b, ast.GtE: lambda a, b: a >= b,
        ast.In: lambda a, b: a in b, ast.NotIn: lambda a, b: a not in b}


def _value(v):
    """CSV cells compare as numbers when they parse as numbers, else as strings."""
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return v.strip()
    return v


def parse_predicate(expr):
    """Compile a row predicate such as ``"grade >= 2 and er == 'pos'"``.

    Allowed: column names, string/number literals, lists/tuples of literals,
    comparisons (including ``in``), ``and``/``or``/``not`` and the literal
    ``True`` (every row).
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse predicate {expr!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.BoolOp):
            parts = [build(v) for v in node.values]
            if isinstance(node.op, ast.And):
                return lambda row: all(p(row) for p in parts)
            return lambda row: any(p(row) for p in parts)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
            inner = build(node.operand)
            return lambda row: not inner(row)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            inner = build(node.operand)
            return lambda row: -inner(row)
        if isinstance(node, ast.Compare):
            left = build(node.left)
            ops = [_CMP.get(type(op)) for op in node.ops]
            if None in ops:
                raise UsageError(f"unsupported comparison in {expr!r}")
            rights = [build(c) for c in node.comparators]

            def compare(row):
                a = left(row)
                for op, r in zip(ops, rights):
                    b = r(row)
                    try:
                        if not op(a, b):
                            return False
                    except TypeError:
                        return False
                    a = b
                return True
            return compare
        if isinstance(node, ast.Name):
            name = node.id

            def lookup(row):
                if name not in row:
                    raise DataError(f"predicate refers to unknown column {name!r}")
                return _value(row[name])
            return lookup
        if isinstance(node, ast.Constant) and isinstance(node.value, (str, int, float, bool)):
            v = node.value if isinstance(node.value, bool) else _value(node.value if isinstance(node.value, str) else float(node.value))
            return lambda row: v
        if isinstance(node, (ast.List, ast.Tuple)):
            items = [build(e) for e in node.elts]
            return lambda row: tuple(i(row) for i in items)
        raise UsageError(f"unsupported expression {ast.dump(node)} in predicate {expr!r}")

    return build(tree)


@dataclass(frozen=True)
class GroupSummary:
    name: str
    count: int
    mean: float | None
    sd: float | None


def subgroup_summary(predictions, rows, rules) -> list[GroupSummary]:
    """Count, mean and SD of ``predictions`` within each rule's rows.

    ``rows`` holds one mapping of column values per prediction; ``rules`` is
    a list of ``(name, predicate)`` with predicates given as strings (see
    :func:`parse_predicate`) or callables on a row.  A group matching no row
    has count 0 and no mean; the SD needs at least two rows.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.size != len(rows):
        raise DataError(f"{pred.size} predictions for {len(rows)} rows")
    out = []
    for name, rule in rules:
        test = parse_predicate(rule) if isinstance(rule, str) else rule
        mask = np.array([bool(test(r)) for r in rows], dtype=bool)
        vals = pred[mask]
        out.append(GroupSummary(str(name), int(vals.size),
                                float(vals.mean()) if vals.size else None,
                                float(vals.std(ddof=1)) if vals.size > 1 else None))
    return out


def _parse_rule(text):
    name, sep, expr = text.partition("=")
    if not sep or not name.strip() or not expr.strip():
        raise UsageError(f"--group takes NAME=PREDICATE, got {text!r}")
    return name.strip(), expr.strip()


# ---------------------------------------------------------- subcommands


def cmd_simulate(run):
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    cens = int(run.censoring)
    base = default_scenarios(seed=int(run.coef_seed))[int(run.scenario) - 1]
    spec = calibrate_scenario(base, cens / 100, pilot_n=int(run.pilot_n), seed=CALIBRATION_SEED)
    stem = f"scenario{spec.scenario}_c{cens}"

    grid = out / f"{stem}_taugrid.csv"
    _write_rows(grid, ["quantile", "tau", "lam_c", "t0"],
                [(f"q{int(round(q * 100))}", t, spec.lam_c, "" if spec.t0 is None else spec.t0)
                 for q, t in zip(QUANTILES, spec.tau_grid)])
    run.done(grid)
    spec_path = out / f"{stem}_spec.json"
    _write_json(spec_path, spec.to_json())
    run.done(spec_path)

    for rep in range(int(run.reps)):
        rng = np.random.default_rng(np.random.SeedSequence(int(run.seed), spawn_key=(spec.scenario, cens, rep)))
        sim = simulate_dataset(spec, int(run.n), rng)
        ds = sim.dataset
        data = out / f"{stem}_rep{rep}.csv"
        write_csv(ds, data, id_col="id")
        run.done(data)
        if rep == 0:
            schema = csv_schema_for(ds).to_json()
            schema["id"] = "id"
            schema_path = out / f"{stem}_schema.json"
            _write_json(schema_path, schema)
            run.done(schema_path)
        truth_cols = [theoretical_rmst(spec, ds.X, t) for t in spec.tau_grid]
        delta_cols = [theoretical_contrast(spec, ds.X, t) for t in spec.tau_grid]
        names = [f"q{int(round(q * 100))}" for q in QUANTILES]
        truth = out / f"{stem}_rep{rep}_truth.csv"
        _write_rows(truth, ["id", "event_time", "censor_time"] + [f"rmst_{q}" for q in names]
                    + [f"delta_{q}" for q in names],
                    [(i, sim.event_time[i], sim.censor_time[i], *(c[i] for c in truth_cols),
                      *(c[i] for c in delta_cols)) for i in range(ds.n)])
        run.done(truth)


def cmd_pseudo(run):
    ds = _dataset(run)
    tau = float(run.tau)
    pv = pseudo_values_fast(ds, tau) if run.method == "fast" else pseudo_values(ds, tau, n_jobs=run.threads)
    ids = ds.ids if ds.ids is not None else range(ds.n)
    _write_rows(run.out, ["id", "tau", "pseudo_value"], [(i, tau, v) for i, v in zip(ids, pv.values)])
    run.done(run.out)


def cmd_fit(run):
    if run.opts.get("algorithm") and run.opts.get("model"):
        raise UsageError("give either --algorithm or --model, not both")
    method = run.opts.get("algorithm") or run.opts.get("model")
    if not method:
        raise UsageError("one of --algorithm or --model is required")
    ds = _dataset(run)
    model = fit_model(method, ds, float(run.tau), **_fit_options(run, method))
    model.save(run.out)
    run.done(run.out)


def _model_and_rows(run):
    model = FittedModel.load(run.input(run.model))
    X, ids = load_covariates(run.input(run.data), model.schema, run.opts.get("id_col"))
    return model, X, ids


def cmd_predict(run):
    model, X, ids = _model_and_rows(run)
    pred = model.predict(X)
    _write_rows(run.out, ["id", "tau", "rmst"], [(i, model.tau, v) for i, v in zip(ids, pred)])
    run.done(run.out)


def cmd_contrast(run):
    model, X, ids = _model_and_rows(run)
    if run.opts.get("tau") is not None and not math.isclose(float(run.tau), model.tau, rel_tol=1e-12):
        raise DataError(f"the model was fitted for tau={model.tau!r}, not {float(run.tau)!r}")
    treatment = run.opts.get("treatment_col") or model.info.get("treatment")
    if treatment is None:
        raise UsageError("--treatment-col is required")
    rows = _Rows(X, model.schema, treatment)
    c: Contrast = individual_contrasts(model, rows, run.level_a, run.level_b, model.tau, treatment)
    ind = c.individual
    sd = float(ind.std(ddof=1)) if ind.size > 1 else None
    _write_json(run.out, {
        "tau": c.tau, "treatment": treatment, "level_a": c.level_a, "level_b": c.level_b, "n": int(ind.size),
        "summary": {"average": c.average, "sd": sd, "min": float(ind.min()), "max": float(ind.max())},
        "rows": [{"id": i, "contrast": float(v)} for i, v in zip(ids, ind)],
    })
    run.done(run.out)


def _cv(run, importance):
    ds = _dataset(run)
    method = run.method
    a, b = run.opts.get("level_a"), run.opts.get("level_b")
    if (a is None) != (b is None):
        raise UsageError("--level-a and --level-b go together")
    if a is not None and ds.treatment is None:
        raise UsageError("contrasts need --treatment-col or a treatment column in the schema")
    res = cross_validate(ds, method, float(run.tau), int(run.folds), int(run.seed), level_a=a, level_b=b,
                         importance=importance, fit_options=_fit_options(run, method))
    return res


def cmd_evaluate(run):
    res = _cv(run, importance=False)
    rows = res.wrss.rows(run.method)
    if res.contrast is not None:
        rows += res.contrast.rows(run.method)
    _write_rows(run.out, ["entity", "metric", "fold", "value"], rows)
    run.done(run.out)


def cmd_importance(run):
    res = _cv(run, importance=True)
    rows = []
    for name, report in res.pfi.items():
        rows += report.rows(name)
    _write_rows(run.out, ["entity", "metric", "fold", "value"], rows)
    run.done(run.out)


def cmd_shapley(run):
    model, X, ids = _model_and_rows(run)
    if run.opts.get("background_data"):
        bg_all, _ = load_covariates(run.input(run.background_data), model.schema)
    else:
        bg_all = X
    if bg_all.shape[0] == 0 or X.shape[0] == 0:
        raise DataError("no rows to explain or no background rows")
    rng = np.random.default_rng(np.random.SeedSequence(int(run.seed), spawn_key=(0x5A,)))
    n_bg = min(int(run.background), bg_all.shape[0])
    background = bg_all[np.sort(rng.choice(bg_all.shape[0], n_bg, replace=False))]
    n_rows = min(int(run.rows), X.shape[0])
    chosen = np.sort(rng.choice(X.shape[0], n_rows, replace=False))
    names = [c.name for c in model.schema]
    rows = []
    for r in chosen:
        rr = np.random.default_rng(np.random.SeedSequence(int(run.seed), spawn_key=(0x5A, int(r))))
        s = shapley_mc(model, X[r], background, int(run.permutations), rr)
        for name, v, se in zip(names, s.values, s.se):
            rows.append((ids[r], name, "estimate", v))
            rows.append((ids[r], name, "se", se))
        rows.append((ids[r], "base", "estimate", s.base))
        rows.append((ids[r], "prediction", "estimate", s.prediction))
        rows.append((ids[r], "total", "se", s.total_se))
    _write_rows(run.out, ["entity", "metric", "fold", "value"], rows)
    run.done(run.out)


def cmd_study(run):
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    quantiles = tuple(sorted(int(q) / 100 for q in run.quantiles))
    for q in quantiles:
        if q not in QUANTILES:
            raise UsageError(f"quantile {q} is not on the grid {QUANTILES}")
    for m in run.methods:
        if m not in ALL_METHODS + ("km",):
            raise UsageError(f"unknown method {m!r}")
    forest = ForestParams(n_trees=int(run.n_trees), n_permutations=int(run.n_permutations))
    cfg = StudyConfig(n_train=int(run.n_train), n_test=int(run.n_test), reps=int(run.reps), quantiles=quantiles,
                      methods=tuple(run.methods), forest=forest, tune=bool(run.tune), seed=int(run.seed),
                      pilot_n=int(run.pilot_n))
    scenarios = [int(s) for s in run.scenario]
    censoring = [int(c) / 100 for c in run.censoring]
    long, agg = run_study(scenarios, censoring, cfg, n_jobs=run.threads)
    for name, rows, fields in (("results_long.csv", long, LONG_FIELDS), ("results.csv", agg, AGG_FIELDS)):
        path = out / name
        write_table(rows, fields, path)
        run.done(path)


def cmd_subgroups(run):
    header, pred_rows = _read_table(run.input(run.predictions))
    if "rmst" not in header:
        raise MissingColumnError(f"{run.predictions} has no 'rmst' column")
    pred = []
    for i, r in enumerate(pred_rows):
        try:
            pred.append(float(r["rmst"]))
        except (TypeError, ValueError):
            raise DataError(f"row {i}: rmst is not numeric") from None
    _, data_rows = _read_table(run.input(run.data))
    rules = [_parse_rule(g) for g in run.group]
    summary = subgroup_summary(pred, data_rows, rules)
    _write_rows(run.out, ["group", "count", "mean", "sd"],
                [(g.name, g.count, "" if g.mean is None else g.mean, "" if g.sd is None else g.sd)
                 for g in summary])
    run.done(run.out)


# ------------------------------------------------------------------ parser

# Defaults live here rather than in argparse so that values from --config
# can be told apart from defaults.  Required options are checked after
# merging.
SPECS = {
    "simulate": {
        "help": "generate simulated data sets with their theoretical truth",
        "required": ("scenario", "censoring", "out"),
        "defaults": {"reps": 1, "n": 1000, "pilot_n": PILOT_N, "coef_seed": DEFAULT_COEF_SEED},
    },
    "pseudo": {"help": "jackknife RMST pseudo-values", "required": ("data", "schema", "tau", "out"),
               "defaults": {"method": "fast"}},
    "fit": {"help": "fit a forest or baseline model", "required": ("data", "schema", "tau", "out"),
            "defaults": {"n_trees": 500, "mtry": "auto", "n_permutations": 1000}},
    "predict": {"help": "predict RMST with a fitted model", "required": ("model", "data", "out"), "defaults": {}},
    "contrast": {"help": "g-computation treatment contrasts",
                 "required": ("model", "data", "level_a", "level_b", "out"), "defaults": {}},
    "evaluate": {"help": "cross-validated IPC-weighted error (and contrast)",
                 "required": ("data", "schema", "method", "tau", "out"),
                 "defaults": {"folds": 5, "n_trees": 500, "mtry": "auto", "n_permutations": 1000}},
    "importance": {"help": "cross-validated permutation feature importance",
                   "required": ("data", "schema", "method", "tau", "out"),
                   "defaults": {"folds": 5, "n_trees": 500, "mtry": "auto", "n_permutations": 1000}},
    "shapley": {"help": "Monte-Carlo Shapley values for sampled rows", "required": ("model", "data", "out"),
                "defaults": {"rows": 10, "background": 100, "permutations": 200}},
    "study": {"help": "simulation benchmark over scenarios and censoring levels", "required": ("out",),
              "defaults": {"scenario": [1, 2, 3, 4], "censoring": [int(c * 100) for c in CENSORING_LEVELS],
                           "reps": 100, "n_train": 1000, "n_test": 1000, "methods": list(ALL_METHODS),
                           "quantiles": [int(q * 100) for q in QUANTILES], "n_trees": 500,
                           "n_permutations": 1000, "tune": False, "pilot_n": PILOT_N}},
    "subgroups": {"help": "mean/SD of predicted RMST within row subgroups",
                  "required": ("predictions", "data", "group", "out"), "defaults": {}},
}

COMMANDS = {"simulate": cmd_simulate, "pseudo": cmd_pseudo, "fit": cmd_fit, "predict": cmd_predict,
            "contrast": cmd_contrast, "evaluate": cmd_evaluate, "importance": cmd_importance,
            "shapley": cmd_shapley, "study": cmd_study, "subgroups": cmd_subgroups}


def _forest_flags(p):
    p.add_argument("--n-trees", type=int, help="trees per forest (default 500)")
    p.add_argument("--mtry", help="auto (floor(sqrt(p))), tune (5-fold CV) or an integer")
    p.add_argument("--n-permutations", type=int, help="permutations per conditional test (default 1000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvrf", description="Pseudo-value random forests for the restricted mean survival time.")
    parser.add_argument("--version", action="version", version=f"pvrf {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, spec in SPECS.items():
        p = sub.add_parser(name, help=spec["help"], description=spec["help"])
        p.add_argument("--seed", type=int, help="master random seed (required)")
        p.add_argument("--threads", type=int, help="worker processes (default: available cores)")
        p.add_argument("--config", help="JSON file of option values; command-line flags take precedence")
        p.add_argument("--out", help="output file (directory for simulate/study)")
        if name in ("pseudo", "fit", "evaluate", "importance"):
            p.add_argument("--data", help="input CSV")
            p.add_argument("--schema", help="JSON column schema for the CSV")
            p.add_argument("--tau", type=float, help="RMST horizon")
            p.add_argument("--treatment-col", help="treatment column (overrides the schema)")
            p.add_argument("--drop-incomplete", action="store_true", default=None,
                           help="drop rows with missing covariates instead of failing")
        if name in ("predict", "contrast", "shapley"):
            p.add_argument("--model", help="fitted model JSON")
            p.add_argument("--data", help="CSV with the model's covariate columns")
            p.add_argument("--id-col", help="column used as row id (default: row index)")
        if name == "simulate":
            p.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
            p.add_argument("--censoring", type=int, choices=(25, 50, 75), help="censoring percentage")
            p.add_argument("--reps", type=int)
            p.add_argument("--n", type=int, help="rows per data set (default 1000)")
            p.add_argument("--pilot-n", type=int, help="calibration pilot size (default 100000)")
            p.add_argument("--coef-seed", type=int, help="seed of the scenario coefficients (default 128)")
        elif name == "pseudo":
            p.add_argument("--method", choices=("fast", "naive"))
        elif name == "fit":
            p.add_argument("--algorithm", choices=FOREST_METHODS)
            p.add_argument("--model", choices=MODEL_METHODS)
            _forest_flags(p)
            p.add_argument("--terms", nargs="+", help="reference model terms, e.g. x1 x1*x3")
            p.add_argument("--t0", type=float, help="reference model: stratify treatment before/after t0")
        elif name == "contrast":
            p.add_argument("--treatment-col")
            p.add_argument("--level-a")
            p.add_argument("--level-b")
            p.add_argument("--tau", type=float, help="must equal the model's horizon if given")
        elif name in ("evaluate", "importance"):
            p.add_argument("--method", choices=METHODS)
            p.add_argument("--folds", type=int)
            _forest_flags(p)
            p.add_argument("--terms", nargs="+")
            p.add_argument("--t0", type=float)
            if name == "evaluate":
                p.add_argument("--level-a")
                p.add_argument("--level-b")
        elif name == "shapley":
            p.add_argument("--rows", type=int, help="number of randomly chosen rows to explain (default 10)")
            p.add_argument("--background", type=int, help="background sample size (default 100)")
            p.add_argument("--background-data", help="CSV to draw the background from (default: --data)")
            p.add_argument("--permutations", type=int, help="Monte-Carlo permutations per row (default 200)")
        elif name == "study":
            p.add_argument("--scenario", type=int, nargs="+", choices=(1, 2, 3, 4))
            p.add_argument("--censoring", type=int, nargs="+", choices=(25, 50, 75))
            p.add_argument("--reps", type=int)
            p.add_argument("--n-train", type=int)
            p.add_argument("--n-test", type=int)
            p.add_argument("--methods", nargs="+", choices=ALL_METHODS + ("km",))
            p.add_argument("--quantiles", type=int, nargs="+", help="tau quantiles in percent (50 60 70 80 90)")
            p.add_argument("--n-trees", type=int)
            p.add_argument("--n-permutations", type=int)
            p.add_argument("--tune", action="store_true", default=None, help="tune mtry by 5-fold CV")
            p.add_argument("--pilot-n", type=int)
        elif name == "subgroups":
            p.add_argument("--predictions", help="CSV from `pvrf predict` (needs an rmst column)")
            p.add_argument("--data", help="CSV whose rows align with the predictions")
            p.add_argument("--group", action="append", help="NAME=PREDICATE, e.g. \"old=age >= 65\" (repeatable)")
    return parser


def _merge(command, ns):
    spec = SPECS[command]
    cli = {k: v for k, v in vars(ns).items() if k != "command"}
    opts = {}
    if cli.get("config"):
        try:
            cfg = json.loads(Path(cli["config"]).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        for key, value in cfg.items():
            k = key.replace("-", "_")
            if k not in cli or k in ("config",):
                raise UsageError(f"config key {key!r} is not an option of {command}")
            opts[k] = value
    for k, v in cli.items():
        if v is not None:
            opts[k] = v
        elif k not in opts:
            opts[k] = spec["defaults"].get(k)
    if opts.get("seed") is None:
        raise UsageError(f"{command}: --seed is required")
    missing = [k for k in spec["required"] if opts.get(k) in (None, [], "")]
    if missing:
        raise UsageError(f"{command}: missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    threads = opts.get("threads") or os.cpu_count() or 1
    if int(threads) < 1:
        raise UsageError("--threads must be positive")
    opts["threads"] = int(threads)
    opts.pop("config", None)
    return {k: v for k, v in opts.items() if v is not None}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            parser.print_help()
            return EXIT_USAGE
        opts = _merge(ns.command, ns)
        run = _Run(ns.command, opts)
        # BLAS stays single-threaded so numerical results never depend on --threads.
        with threadpool_limits(limits=1):
            COMMANDS[ns.command](run)
    except SystemExit as exc:          # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"pvrf: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"pvrf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"pvrf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PvrfError, OSError, csv.Error, json.JSONDecodeError) as exc:
        print(f"pvrf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
