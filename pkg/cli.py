"""Command line interface.

    leastangle table1   [--data-dir DIR] [--seeds ...] [--format text|json|csv]
    leastangle table2   [--data-dir DIR] [--seeds ...] [--trees N] [--shrinkage S]
    leastangle figure1  [--seed S] [--out DIR]
    leastangle solve {lars,lasso,stagewise,lalr,shoot} --input CSV --response NAME

Exit codes: 0 on success, 2 for bad input, 3 for numerical failure.
"""

import argparse
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
import json
import logging
from pathlib import Path
import sys

import numpy as np
import pandas as pd
from scipy import linalg

import boost
from cholesky import RankDeficiencyError
import dataset
import lalr
import lars
import selection
import shooting

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

DatasetSource = namedtuple("DatasetSource", ["filename", "response", "categorical"])

# Expected layouts: one header row, response column as named, every other
# column a covariate.
DATASETS = {
    "diabetes": DatasetSource("diabetes.csv", "y", ()),
    "boston": DatasetSource("boston.csv", "medv", ()),
    "servo": DatasetSource("servo.csv", "class", ("motor", "screw")),
}

TABLE1_METHODS = (lars.STAGEWISE, lars.LARS, lars.LASSO)
TABLE2_METHODS = ("LM", "LARS", "LARS two-way Cp", "GBM additive", "GBM two-way")

FIGURE1_FILES = ("figure1_lalr.csv", "figure1_stagewise.csv", "figure1_mle.csv")


class ExperimentConfig(
    namedtuple(
        "ExperimentConfig",
        [
            "data_dir",
            "datasets",
            "seeds",
            "holdout_fraction",
            "cv_folds",
            "output_format",
            "jobs",
            "boost",
            "squares",
        ],
    )
):
    """Settings shared by the experiment tables.

    The defaults reproduce the protocol of a 10% holdout sample and
    nine-fold cross-validation on the remaining 90%, over 20 split seeds.
    """

    __slots__ = ()

    def __new__(
        cls,
        data_dir=".",
        datasets=tuple(DATASETS),
        seeds=tuple(range(20)),
        holdout_fraction=0.10,
        cv_folds=9,
        output_format="text",
        jobs=1,
        boost=boost.BoostConfig(),
        squares=False,
    ):
        if output_format not in ("text", "json", "csv"):
            raise ValueError(f"unknown output format {output_format!r}")
        if not seeds:
            raise ValueError("at least one seed is required.")
        return super().__new__(
            cls,
            Path(data_dir),
            tuple(datasets),
            tuple(seeds),
            holdout_fraction,
            cv_folds,
            output_format,
            jobs,
            boost,
            squares,
        )


TableResult = namedtuple("TableResult", ["summary", "runs"])


def load_datasets(cfg):
    """Read the configured datasets from cfg.data_dir.

    Raises:
        FileNotFoundError: A dataset file is missing.
        ValueError: A dataset name is unknown.
    """
    loaded = {}
    for name in cfg.datasets:
        if name not in DATASETS:
            raise ValueError(f"unknown dataset {name!r}; choose from {sorted(DATASETS)}")
        source = DATASETS[name]
        d = dataset.load_csv(
            cfg.data_dir / source.filename, source.response, categorical=source.categorical
        )
        loaded[name] = _continuous(d)
    return loaded


def _continuous(d):
    if d.binary:
        return dataset.Dataset(d.X, d.y, d.column_names)
    return d


def _split(d, cfg, seed):
    plan = dataset.holdout_split(d.n, cfg.holdout_fraction, seed)
    folds = dataset.kfold_assign(len(plan.train_indices), cfg.cv_folds, seed)
    return plan, folds


def _table1_runs(name, d, seed, cfg):
    plan, folds = _split(d, cfg, seed)
    fingerprint = dataset.split_fingerprint(plan, folds)
    train, test = d.subset(plan.train_indices), d.subset(plan.test_indices)
    rows = []
    for method in TABLE1_METHODS:
        cv_fit = selection.fit_cv(train, cfg.cv_folds, method, seed=seed, folds=folds)
        cp_fit = selection.fit_cp(train, method)
        rows.append(
            {
                "dataset": name,
                "method": method,
                "seed": seed,
                "cv_mse": selection.evaluate_holdout(selection.predict_fit(cv_fit, test), test.y).mse,
                "cp_mse": selection.evaluate_holdout(selection.predict_fit(cp_fit, test), test.y).mse,
                "split": fingerprint,
            }
        )
    logger.info("table1 %s seed %d done", name, seed)
    return rows


def _ols_predict(train, X_test):
    design = np.column_stack([np.ones(train.n), train.X])
    coef = linalg.lstsq(design, train.y)[0]
    return coef[0] + X_test @ coef[1:]


def _boost_predict(train, X_test, config, folds, seed):
    report = selection.cv_select_trees(train, folds.k, config, seed=seed, folds=folds)
    model = boost.l2boost_fit(train, config._replace(n_trees=int(report.selected_t)), seed=seed)
    return boost.l2boost_predict(model, X_test)


def _table2_runs(name, d, seed, cfg):
    plan, folds = _split(d, cfg, seed)
    fingerprint = dataset.split_fingerprint(plan, folds)
    train, test = d.subset(plan.train_indices), d.subset(plan.test_indices)
    wide = dataset.expand_two_way(d, squares=cfg.squares)
    wide_train, wide_test = wide.subset(plan.train_indices), wide.subset(plan.test_indices)

    predictions = {
        "LM": _ols_predict(train, test.X),
        "LARS": selection.predict_fit(
            selection.fit_cv(train, cfg.cv_folds, lars.LARS, seed=seed, folds=folds), test
        ),
        "LARS two-way Cp": selection.predict_fit(
            selection.fit_cp(wide_train, lars.LARS, drop_collinear=True), wide_test
        ),
        "GBM additive": _boost_predict(train, test.X, cfg.boost._replace(depth=1), folds, seed),
        "GBM two-way": _boost_predict(train, test.X, cfg.boost._replace(depth=2), folds, seed),
    }
    rows = []
    for method in TABLE2_METHODS:
        report = selection.evaluate_holdout(predictions[method], test.y)
        rows.append(
            {
                "dataset": name,
                "method": method,
                "seed": seed,
                "mse": report.mse,
                "mad": report.mad,
                "split": fingerprint,
            }
        )
    logger.info("table2 %s seed %d done", name, seed)
    return rows


def _run_tasks(task, data, cfg):
    jobs = [(name, d, seed, cfg) for name, d in data.items() for seed in cfg.seeds]
    if cfg.jobs and cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(task, *zip(*jobs)))
    else:
        results = [task(*job) for job in jobs]
    return pd.DataFrame([row for rows in results for row in rows])


def _summarize(runs, columns):
    grouped = runs.groupby(["dataset", "method"], sort=False)[list(columns)]
    summary = grouped.agg(["mean", "std"])
    summary.columns = [f"{column}_{stat}" for column, stat in summary.columns]
    return summary.reset_index()


def run_table1(cfg, data=None):
    """Holdout MSE of Stagewise, LARS and Lasso with shrinkage chosen by
    cross-validation and by Cp, mean and sd over seeds.

    Args:
        cfg: ExperimentConfig.
        data: Optional mapping of dataset name to Dataset, used instead of
            reading cfg.data_dir.
    """
    data = load_datasets(cfg) if data is None else data
    runs = _run_tasks(_table1_runs, data, cfg)
    return TableResult(_summarize(runs, ("cv_mse", "cp_mse")), runs)


def run_table2(cfg, data=None):
    """Holdout MSE and MAD of the five competing methods. Within a seed all
    methods share one holdout split and fold assignment."""
    data = load_datasets(cfg) if data is None else data
    runs = _run_tasks(_table2_runs, data, cfg)
    for _, group in runs.groupby(["dataset", "seed"]):
        if group["split"].nunique() != 1:
            raise RuntimeError("methods did not share a split plan.")
    return TableResult(_summarize(runs, ("mse", "mad")), runs)


def _trajectory(path, names):
    rows = []
    for state, (intercept, beta) in zip(path.states, path.raw_coefficients()):
        rows.append([state.step_count, np.abs(beta).sum(), intercept, *beta])
    return pd.DataFrame(rows, columns=["step", "l1_norm", "intercept", *names])


def run_figure1(seed, out_dir, n=1000, p=10, epsilon=1e-3):
    """Write least angle and stagewise logistic coefficient trajectories and
    the maximum likelihood endpoint for a simulated logistic sample.

    Coefficients are on the raw covariate scale, indexed both by step and by
    their L1 norm.

    Returns:
        List of the written file paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(n, p, 1.0, seed))
    d = dataset.standardize(raw)
    names = d.column_names

    least_angle = lalr.lalr_path(d, lalr.LogisticPathConfig(points_per_segment=20))
    stagewise = lalr.stagewise_logistic(d, epsilon, config=lalr.LogisticPathConfig(record_every=250))
    beta, intercept = lalr.mle_logistic(d)
    raw_intercept, raw_beta = d.transform.to_raw(beta, intercept)
    mle = pd.DataFrame(
        [[0, np.abs(raw_beta).sum(), raw_intercept, *raw_beta]],
        columns=["step", "l1_norm", "intercept", *names],
    )

    frames = (
        _trajectory(least_angle, names),
        _trajectory(stagewise, names),
        mle,
    )
    written = []
    for filename, frame in zip(FIGURE1_FILES, frames):
        target = out_dir / filename
        frame.to_csv(target, index=False, float_format="%.17g", lineterminator="\n")
        written.append(target)
    return written


def solve(args):
    """Run one solver on a CSV file and return a JSON-ready dict."""
    d = dataset.load_csv(
        args.input, args.response, header=not args.no_header, categorical=args.categorical
    )
    if args.method in lars.METHODS:
        d = dataset.standardize(_continuous(d))
        mode = lars.PathMode(args.method, args.epsilon, args.max_steps)
        result = lars.lars_path(d, mode, drop_collinear=args.drop_collinear).to_dict()
    elif not d.binary:
        raise dataset.DataError(f"{args.method} needs a 0/1 response.")
    elif args.method == "lalr":
        d = dataset.standardize(d)
        config = lalr.LogisticPathConfig(max_steps=args.max_steps or 1000)
        result = lalr.lalr_path(d, config).to_dict()
    else:
        d = dataset.standardize(d)
        config = shooting.ShootingConfig(start=args.start, outer_max=args.outer_max)
        result = shooting.penalized_logistic(d, args.gamma, config).to_dict()
    result["columns"] = d.column_names
    result["dataset"] = d.to_dict()
    return result


def _render(table, output_format):
    if output_format == "json":
        return json.dumps(
            {
                "summary": table.summary.to_dict(orient="records"),
                "runs": table.runs.to_dict(orient="records"),
            },
            indent=2,
        )
    if output_format == "csv":
        return table.summary.to_csv(index=False, lineterminator="\n")
    return table.summary.to_string(index=False, float_format=lambda v: f"{v:.4g}")


def _emit(text, out):
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leastangle",
        description="Least angle paths, shrinkage selection and the comparison experiments.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("table1", "Stagewise/LARS/Lasso holdout MSE, CV against Cp."),
        ("table2", "Holdout MSE and MAD of LM, LARS and boosting."),
    ):
        table = commands.add_parser(name, help=help_text)
        table.add_argument("--data-dir", type=Path, default=Path("."))
        table.add_argument("--datasets", nargs="+", default=list(DATASETS), choices=list(DATASETS))
        table.add_argument("--seeds", type=int, nargs="+", default=list(range(20)))
        table.add_argument("--holdout", type=float, default=0.10)
        table.add_argument("--folds", type=int, default=9)
        table.add_argument("--format", choices=("text", "json", "csv"), default="text")
        table.add_argument("--out", type=Path)
        table.add_argument("--jobs", type=int, default=1)
        if name == "table2":
            table.add_argument("--trees", type=int, default=1000)
            table.add_argument("--shrinkage", type=float, default=0.05)
            table.add_argument("--squares", action="store_true")

    figure = commands.add_parser("figure1", help="Simulated logistic coefficient paths as CSV.")
    figure.add_argument("--seed", type=int, default=0)
    figure.add_argument("--out", type=Path, default=Path("."))
    figure.add_argument("--epsilon", type=float, default=1e-3)

    solver = commands.add_parser("solve", help="Run a single solver, JSON on stdout.")
    solver.add_argument("method", choices=(*lars.METHODS, "lalr", "shoot"))
    solver.add_argument("--input", type=Path, required=True)
    solver.add_argument("--response", required=True)
    solver.add_argument("--no-header", action="store_true")
    solver.add_argument("--categorical", nargs="*", default=[])
    solver.add_argument("--epsilon", type=float)
    solver.add_argument("--max-steps", type=int)
    solver.add_argument("--drop-collinear", action="store_true")
    solver.add_argument("--gamma", type=float, default=1.0)
    solver.add_argument("--start", choices=(shooting.ZERO, shooting.LEAST_SQUARES), default=shooting.ZERO)
    solver.add_argument("--outer-max", type=int, default=50)
    solver.add_argument("--out", type=Path)
    return parser


def _config(args):
    boost_config = boost.BoostConfig()
    if args.command == "table2":
        boost_config = boost_config._replace(n_trees=args.trees, shrinkage=args.shrinkage)
    return ExperimentConfig(
        data_dir=args.data_dir,
        datasets=args.datasets,
        seeds=args.seeds,
        holdout_fraction=args.holdout,
        cv_folds=args.folds,
        output_format=args.format,
        jobs=args.jobs,
        boost=boost_config,
        squares=getattr(args, "squares", False),
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code

    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "table1":
            cfg = _config(args)
            _emit(_render(run_table1(cfg), cfg.output_format), args.out)
        elif args.command == "table2":
            cfg = _config(args)
            _emit(_render(run_table2(cfg), cfg.output_format), args.out)
        elif args.command == "figure1":
            for target in run_figure1(args.seed, args.out, epsilon=args.epsilon):
                logger.info("wrote %s", target)
        else:
            _emit(json.dumps(solve(args), indent=2), args.out)
    except (
        lars.PathError,
        lalr.SeparationError,
        lalr.ConvergenceError,
        lalr.StepError,
        shooting.UnboundedCoordinateError,
        selection.SelectionError,
        RankDeficiencyError,
        np.linalg.LinAlgError,
    ) as err:
        logger.error("numerical failure: %s", err)
        return EXIT_NUMERICAL
    except (dataset.DataError, FileNotFoundError, ValueError, TypeError) as err:
        logger.error("%s", err)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
