"""Command-line interface: data ingestion, tests, grid scans, simulations.

Dataset files are CSV with header ``g,l,y1,...,yM``: one row per cluster,
``g`` and ``l`` positive integer group/cluster labels, counts nonnegative
integers, cells in lexicographic order. All rows sharing a ``g`` must have
equal row sums (the group's cluster size).

Lambda values on the command line are exact tokens: ``-1`` and ``0`` select
the limit branches exactly, and rationals like ``2/3`` are accepted, so a
decimal approximation can never land in the wrong branch.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction

import numpy as np

from .datasets import (
    HOUSING_REFERENCE,
    P_VALUE_BOUND,
    REFERENCE_LAMBDA_GRID,
    housing_dataset,
    housing_model,
)
from .estimation import ClusterDataset, ClusterTable
from .gof import gof_test, table_scan
from .model import LogLinearModel, independence_design, load_design_csv
from .simgen import StudyConfig, size_study

DEFAULT_MASTER_SEED = 123456789
SEED_ENV_VAR = "CLUSTERGOF_SEED"
DEFAULT_GRID = "-0.5,0,2/3,1,2"

METHOD_TOKENS = {"semi": "semiparametric", "semiparametric": "semiparametric",
                 "brier": "brier"}

REPRODUCE_TOLERANCE = 5e-4


class CliError(Exception):
    """A user-input problem; message goes to stderr, exit code 2."""


def parse_lambda(token: str) -> float:
    """Parse a lambda token: plain decimal, or a rational like ``2/3``."""
    text = token.strip()
    if not text:
        raise CliError("empty lambda value")
    try:
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(f"could not parse lambda value {token!r}: {exc}") from exc


def parse_grid(text: str) -> tuple[float, ...]:
    values = tuple(parse_lambda(tok) for tok in text.split(",") if tok.strip())
    if not values:
        raise CliError(f"empty lambda grid {text!r}")
    return values


def read_dataset_csv(path) -> ClusterDataset:
    """Read a dataset file, citing the offending line on bad input."""
    tables = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "g" or header[1] != "l":
            raise CliError(f"{path}: line 1: expected header g,l,y1,...,yM")
        n_cells = len(header) - 2
        expected = [f"y{r}" for r in range(1, n_cells + 1)]
        if header[2:] != expected:
            raise CliError(f"{path}: line 1: count columns must be y1..y{n_cells}")

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not field.strip() for field in row):
                continue
            if len(row) != n_cells + 2:
                raise CliError(
                    f"{path}: line {lineno}: expected {n_cells + 2} fields, got {len(row)}"
                )
            try:
                g = int(row[0])
                l = int(row[1])
                counts = [int(field) for field in row[2:]]
            except ValueError as exc:
                raise CliError(f"{path}: line {lineno}: {exc}") from exc
            if g < 1 or l < 1:
                raise CliError(f"{path}: line {lineno}: g and l must be positive")
            if any(c < 0 for c in counts):
                bad = next(i for i, c in enumerate(counts) if c < 0)
                raise CliError(
                    f"{path}: line {lineno}: negative count in column y{bad + 1}"
                )
            tables.append(ClusterTable(group=g, cluster=l, counts=np.array(counts)))
    if not tables:
        raise CliError(f"{path}: no data rows")
    try:
        return ClusterDataset.from_tables(tables)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def write_dataset_csv(ds: ClusterDataset, handle) -> None:
    """Write a dataset in the ``g,l,y1,...,yM`` format (round-trips exactly)."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["g", "l"] + [f"y{r}" for r in range(1, ds.n_cells + 1)])
    for g, mat in enumerate(ds.counts, start=1):
        for l, row in enumerate(mat, start=1):
            writer.writerow([g, l] + [int(c) for c in row])


def _load_dataset(token: str) -> ClusterDataset:
    if token == "housing":
        return housing_dataset()
    return read_dataset_csv(token)


def _load_model(args) -> LogLinearModel:
    if args.independence is not None:
        i_levels, j_levels = args.independence
        if i_levels < 2 or j_levels < 2:
            raise CliError("--independence needs at least 2 levels per variable")
        return independence_design(i_levels, j_levels)
    if args.design is not None:
        try:
            return load_design_csv(args.design)
        except (OSError, ValueError) as exc:
            raise CliError(f"could not load design matrix: {exc}") from exc
    raise CliError("one of --design or --independence is required")


def _method(token: str) -> str:
    try:
        return METHOD_TOKENS[token]
    except KeyError:
        raise CliError(
            f"unknown method {token!r}; expected semi or brier"
        ) from None


def _out_stream(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8", newline="")
    return None


def cmd_test(args) -> int:
    ds = _load_dataset(args.data)
    model = _load_model(args)
    result = gof_test(ds, model, parse_lambda(args.lambda1), parse_lambda(args.lambda2),
                      method=_method(args.method))
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def cmd_scan(args) -> int:
    ds = _load_dataset(args.data)
    model = _load_model(args)
    grid = parse_grid(args.grid)
    result = table_scan(ds, model, grid, grid, method=_method(args.method))
    text = result.to_json() if args.json else result.to_csv()
    out = _out_stream(args)
    if out is not None:
        with out:
            out.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_config(path) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise CliError(f"{path}: line {lineno}: expected key = value")
            key, value = text.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


_CONFIG_KEYS = {
    "independence", "design", "theta", "groups", "rho2_grid", "distributions",
    "lambda_pairs", "methods", "replications", "alpha", "seed",
}


def _study_config(entries: dict[str, str]) -> StudyConfig:
    unknown = set(entries) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")

    if "independence" in entries:
        try:
            i_levels, j_levels = (int(tok) for tok in entries["independence"].split())
        except ValueError:
            raise CliError("config: independence must be two integers, e.g. '3 3'") from None
        model = independence_design(i_levels, j_levels)
    elif "design" in entries:
        model = load_design_csv(entries["design"])
    else:
        raise CliError("config: one of 'independence' or 'design' is required")

    try:
        theta = np.array([float(tok) for tok in entries["theta"].split()])
    except (KeyError, ValueError):
        raise CliError("config: theta must be space-separated numbers") from None

    groups = []
    for tok in entries.get("groups", "").split():
        try:
            n_g, count = tok.split("x")
            groups.append((int(n_g), int(count)))
        except ValueError:
            raise CliError(
                f"config: bad group {tok!r}; use <cluster size>x<cluster count>, e.g. 5x18"
            ) from None
    if not groups:
        raise CliError("config: groups is required, e.g. 'groups = 5x18 3x2 7x5'")

    try:
        rho2_grid = tuple(float(tok) for tok in entries.get("rho2_grid", "0").split())
        distributions = tuple(entries.get("distributions", "DM RC NI").split())
        replications = int(entries.get("replications", "100"))
        alpha = float(entries.get("alpha", "0.05"))
    except ValueError as exc:
        raise CliError(f"config: {exc}") from exc

    pairs = []
    for tok in entries.get("lambda_pairs", "").split():
        parts = tok.split(":")
        if len(parts) != 2:
            raise CliError(f"config: bad lambda pair {tok!r}; use lambda1:lambda2")
        pairs.append((parse_lambda(parts[0]), parse_lambda(parts[1])))
    if not pairs:
        raise CliError("config: lambda_pairs is required, e.g. 'lambda_pairs = 2/3:0 0:0'")

    methods = tuple(_method(tok) for tok in entries.get("methods", "semi").split())

    if "seed" in entries:
        seed = int(entries["seed"])
    else:
        seed = int(os.environ.get(SEED_ENV_VAR, DEFAULT_MASTER_SEED))

    try:
        return StudyConfig(
            theta=theta,
            model=model,
            groups=tuple(groups),
            rho2_grid=rho2_grid,
            distributions=distributions,
            lambda_pairs=tuple(pairs),
            replications=replications,
            nominal_alpha=alpha,
            master_seed=seed,
            methods=methods,
        )
    except ValueError as exc:
        raise CliError(f"config: {exc}") from exc


def cmd_simulate(args) -> int:
    try:
        entries = _parse_config(args.config)
    except OSError as exc:
        raise CliError(f"could not read config: {exc}") from exc
    cfg = _study_config(entries)
    result = size_study(cfg)
    text = result.to_csv()
    out = _out_stream(args)
    if out is not None:
        with out:
            out.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _diff_reference(ds: ClusterDataset) -> tuple[list[dict], int]:
    """Compare fresh scans on ``ds`` against the embedded reference grids."""
    model = housing_model()
    grid = REFERENCE_LAMBDA_GRID
    mismatches: list[dict] = []
    checked = 0

    def check(kind, method, lam1, lam2, got, want):
        nonlocal checked
        checked += 1
        if want is None:
            ok = got < P_VALUE_BOUND
            expected = f"< {P_VALUE_BOUND}"
        else:
            ok = abs(got - want) <= REPRODUCE_TOLERANCE
            expected = want
        if not ok:
            mismatches.append({
                "quantity": kind, "method": method,
                "lambda1": lam1, "lambda2": lam2,
                "computed": got, "expected": expected,
            })

    for method in ("semiparametric", "brier"):
        reference = HOUSING_REFERENCE[method]
        scan = table_scan(ds, model, grid, grid, method=method)
        for i, lam1 in enumerate(grid):
            for j, lam2 in enumerate(grid):
                cell = scan.cells.get((lam1, lam2))
                if cell is None:
                    checked += 2
                    mismatches.append({
                        "quantity": "cell", "method": method,
                        "lambda1": lam1, "lambda2": lam2,
                        "computed": scan.errors.get((lam1, lam2), "missing"),
                        "expected": "a finite statistic",
                    })
                    continue
                check("statistic", method, lam1, lam2,
                      cell.statistic, reference["statistics"][i][j])
                check("p_value", method, lam1, lam2,
                      cell.p_value, reference["p_values"][i][j])
        # the nonparametric design effect does not depend on lambda2: one check
        vartheta_cells = ([reference["vartheta"][0]] if method == "brier"
                          else list(reference["vartheta"]))
        for j, want in enumerate(vartheta_cells):
            check("vartheta", method, None, grid[j], scan.vartheta_by_lam2[grid[j]], want)
    return mismatches, checked


def cmd_reproduce(args) -> int:
    ds = _load_dataset(args.data)
    mismatches, checked = _diff_reference(ds)
    if args.json:
        print(json.dumps({
            "ok": not mismatches,
            "checked": checked,
            "mismatches": mismatches,
        }, indent=2))
    else:
        for miss in mismatches:
            place = f"lambda1={miss['lambda1']}, lambda2={miss['lambda2']}"
            print(f"MISMATCH {miss['quantity']} [{miss['method']}, {place}]: "
                  f"computed {miss['computed']}, expected {miss['expected']}")
        status = "OK" if not mismatches else "FAILED"
        print(f"{status}: {checked - len(mismatches)}/{checked} reference values matched")
    return 0 if not mismatches else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustergof",
        description="Goodness-of-fit tests for log-linear models on clustered "
                    "overdispersed multinomial data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_model(p):
        p.add_argument("--data", required=True,
                       help="dataset CSV (g,l,y1..yM) or the literal 'housing' "
                            "for the bundled fixture")
        p.add_argument("--design", help="design matrix CSV (M rows, M0 columns)")
        p.add_argument("--independence", nargs=2, type=int, metavar=("I", "J"),
                       help="two-way independence design with I x J cells")

    p_test = sub.add_parser("test", help="run a single goodness-of-fit test")
    add_data_model(p_test)
    p_test.add_argument("--lambda1", default="2/3", help="statistic order (default 2/3)")
    p_test.add_argument("--lambda2", default="0", help="estimator order (default 0)")
    p_test.add_argument("--method", default="semi", help="semi or brier")
    p_test.set_defaults(func=cmd_test)

    p_scan = sub.add_parser("scan", help="evaluate the test over a lambda grid")
    add_data_model(p_scan)
    p_scan.add_argument("--grid", default=DEFAULT_GRID,
                        help=f"comma-separated lambda values (default {DEFAULT_GRID})")
    p_scan.add_argument("--method", default="semi", help="semi or brier")
    p_scan.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    p_scan.add_argument("--out", help="write to a file instead of stdout")
    p_scan.set_defaults(func=cmd_scan)

    p_sim = sub.add_parser("simulate", help="Monte Carlo significance-level study")
    p_sim.add_argument("--config", required=True, help="flat key = value config file")
    p_sim.add_argument("--out", help="write CSV to a file instead of stdout")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser(
        "reproduce",
        help="recompute the reference statistic grids for the housing data and diff",
    )
    p_rep.add_argument("--data", default="housing",
                       help="override the bundled dataset (mainly for testing)")
    p_rep.add_argument("--json", action="store_true", help="machine-readable diff")
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"clustergof: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"clustergof: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
