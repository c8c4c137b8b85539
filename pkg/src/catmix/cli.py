"""Command-line entry point: ``catmix <command> [options]``.

Exit codes: 0 on success, 1 on invalid input or usage, 2 on a numerical failure.
Wall-clock timings go to the log only, so repeated runs write identical bytes.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .averaging import RunFailed, average_fits, fit_many
from .coca import average_moc, build_moc, write_moc_csv
from .data import PRESETS, SimulationDesign, load_dataset, preset_design, read_mask_csv, save_labeled, simulate
from .engine import FitResult, ModelConfig, fit
from .errors import CatMixError, ConfigError, InputError, NumericalError, ValidationError
from .metrics import metric_report
from .summarize import SummaryConfig

log = logging.getLogger("catmix")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys use flag names with ``_`` or ``-``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _model_flags(p):
    p.add_argument("--k", type=int, default=20, help="maximum number of components")
    p.add_argument("--alpha0", type=float, default=0.05)
    p.add_argument("--a", type=float, default=2.0, help="Beta prior shape for the inclusion probability")
    p.add_argument("--varsel", action="store_true", default=False, help="enable variable selection")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)


def _summary_flags(p, runs=True):
    if runs:
        p.add_argument("--runs", type=int, default=25)
        p.add_argument("--workers", type=int, default=1)
    p.add_argument("--method", choices=["medvedovic", "voi_average", "voi_complete"], default="voi_complete")
    p.add_argument("--tau", type=float, default=0.95)


def build_parser():
    parser = _Parser(prog="catmix", description="Variational clustering of categorical data.")
    parser.add_argument("--config", help="flat key = value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a labelled synthetic dataset")
    p.add_argument("--design", required=True, help=f"design JSON file or preset ({', '.join(PRESETS)})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="one variational fit")
    p.add_argument("--data", required=True)
    _model_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-avg", help="many restarts summarised through the co-clustering matrix")
    p.add_argument("--data", required=True)
    _model_flags(p)
    _summary_flags(p)
    p.add_argument("--pcm-csv", action="store_true", help="also write the co-clustering matrix as CSV")
    p.add_argument("--out", required=True)

    p = sub.add_parser("summarise", help="re-summarise the runs written by fit-avg")
    p.add_argument("--runs-dir", required=True)
    _summary_flags(p, runs=False)
    p.add_argument("--out", default=None, help="defaults to the parent of --runs-dir")

    p = sub.add_parser("evaluate", help="compare labels (and selections) with the truth")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--selected")
    p.add_argument("--relevant")
    p.add_argument("--out", default=None)

    p = sub.add_parser("moc", help="cluster-of-clusters analysis over several clusterings")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--alpha0", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    return parser, sub


def _apply_config(parser, sub, argv):
    """Parse ``argv`` with config-file values installed as subcommand defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in sub.choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    cmd = sub.choices[command]
    actions = {a.dest: a for a in cmd._actions if a.dest != "help"}
    defaults = {}
    for key, raw in read_config_file(known.config).items():
        action = actions.get(key)
        if action is None:
            raise ConfigError(f"{known.config}: unknown key {key!r} for '{command}'")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(raw)
        elif action.nargs in ("+", "*"):
            defaults[key] = raw.split()
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError:
                raise ConfigError(f"{known.config}: bad value for {key}: {raw!r}") from None
            if action.choices and defaults[key] not in action.choices:
                raise ConfigError(f"{known.config}: {key} must be one of {list(action.choices)}")
        action.required = False
    cmd.set_defaults(**defaults)
    return parser.parse_args(argv)


def _model_config(args, variable_selection=None):
    return ModelConfig(
        k_max=args.k,
        alpha0=args.alpha0,
        a=getattr(args, "a", 2.0),
        variable_selection=args.varsel if variable_selection is None else variable_selection,
        max_iter=args.max_iter,
        elbo_tol=args.tol,
        seed=args.seed,
    )


def _run_record(fit_result):
    d = fit_result.to_dict()
    d.pop("wall_time")
    return d


def cmd_simulate(args):
    path = Path(args.design)
    if path.exists():
        d = fileio.read_json(path)
        if args.seed is not None:
            d["seed"] = args.seed
        design = SimulationDesign.from_dict(d)
    else:
        design = preset_design(args.design, 0 if args.seed is None else args.seed)
    ds = simulate(design)
    save_labeled(ds, args.out)
    fileio.write_json(Path(args.out) / "design.json", design.to_dict())
    log.info("wrote %d x %d dataset with %d clusters to %s", design.n_obs, design.n_vars, design.k_true, args.out)


def cmd_fit(args):
    data = load_dataset(args.data)
    config = _model_config(args)
    res = fit(data, config)
    log.info("fit: %d iterations, ELBO %.6f, %d non-empty clusters, %.2fs", res.state.iter_count, res.elbo, res.n_nonempty, res.wall_time)
    out = Path(args.out)
    fileio.write_labels_csv(out / "labels.csv", res.labels, data.obs_names)
    record = _run_record(res)
    record["var_names"] = list(data.column_names())
    fileio.write_json(out / "fit.json", record)


def _write_average(out, avg, data_obs, var_names, extra, pcm_csv=False):
    summary = avg.summary
    fileio.write_labels_csv(out / "labels.csv", summary.labels, data_obs)
    fileio.write_pcm(out / "pcm.bin", avg.pcm.p, avg.pcm.n_runs)
    if pcm_csv:
        fileio.write_matrix_csv(out / "pcm.csv", avg.pcm.p)
    body = summary.to_dict(var_names)
    body.update(extra)
    body["elbos"] = [f.elbo for f in avg.fits]
    fileio.write_json(out / "summary.json", body)
    if summary.selected_vars is not None:
        fileio.write_json(
            out / "selected.json",
            {"selected_vars": summary.selected_vars.tolist(), "selected_names": body.get("selected_names", [])},
        )


def cmd_fit_avg(args):
    data = load_dataset(args.data)
    config = _model_config(args)
    scfg = SummaryConfig(method=args.method, tau=args.tau)
    if args.runs < 1:
        raise ConfigError(f"--runs must be at least 1, got {args.runs}")
    fits = fit_many(data, config, args.runs, base_seed=args.seed, workers=args.workers)
    log.info("%d fits in %.1fs total fit time", len(fits), sum(f.wall_time for f in fits))
    avg = average_fits(fits, scfg)
    out = Path(args.out)
    for m, f in enumerate(fits):
        fileio.write_json(out / "runs" / f"run_{m:03d}.json", _run_record(f))
    extra = {"m_runs": args.runs, "base_seed": args.seed, "tau": args.tau, "config": config.to_dict(), "data": str(args.data)}
    extra["var_names"] = list(data.column_names())
    _write_average(out, avg, data.obs_names, list(data.column_names()), extra, args.pcm_csv)


def _load_runs(runs_dir):
    files = sorted(Path(runs_dir).glob("run_*.json"))
    if not files:
        raise InputError(f"no run_*.json files in {runs_dir}")
    fits = []
    for f in files:
        d = fileio.read_json(f)
        cfg = ModelConfig.from_dict(d["config"])
        fits.append(FitResult(np.asarray(d["labels"]), None, d["elbo"], d["n_nonempty"], np.asarray(d["c"]), cfg, 0.0, d["converged"]))
    return fits


def cmd_summarise(args):
    fits = _load_runs(args.runs_dir)
    avg = average_fits(fits, SummaryConfig(method=args.method, tau=args.tau))
    source = Path(args.runs_dir).resolve().parent
    out = Path(args.out) if args.out else source
    # observation and variable names come from the fit-avg outputs next to the runs, when present
    names = var_names = None
    if (source / "labels.csv").exists():
        names, _ = fileio.read_labels_csv(source / "labels.csv")
        if len(names) != avg.pcm.n_obs:
            names = None
    if (source / "summary.json").exists():
        var_names = fileio.read_json(source / "summary.json").get("var_names")
    extra = {"m_runs": len(fits), "tau": args.tau, "config": fits[0].config.to_dict()}
    if var_names:
        extra["var_names"] = var_names
    _write_average(out, avg, names, var_names, extra)


def _aligned(names_a, names_b, labels_b, what):
    if list(names_a) == list(names_b):
        return labels_b
    index = {n: i for i, n in enumerate(names_b)}
    if len(index) != len(names_b) or set(index) != set(names_a):
        raise InputError(f"observation names in {what} do not match the labels file")
    return labels_b[[index[n] for n in names_a]]


def _read_selected(path):
    obj = fileio.read_json(path)
    if isinstance(obj, dict):
        obj = obj.get("selected_vars")
    if not isinstance(obj, list):
        raise InputError(f"{path}: expected a list of booleans or an object with 'selected_vars'")
    return np.asarray(obj, dtype=bool)


def cmd_evaluate(args):
    names, labels = fileio.read_labels_csv(args.labels)
    tnames, truth = fileio.read_labels_csv(args.truth)
    truth = _aligned(names, tnames, truth, args.truth)
    selected = relevant = None
    if (args.selected is None) != (args.relevant is None):
        raise InputError("--selected and --relevant must be given together")
    if args.selected:
        selected, relevant = _read_selected(args.selected), read_mask_csv(args.relevant)
    report = metric_report(labels, truth, selected, relevant)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        fileio.atomic_write_text(out / "report.json", text)
        fileio.atomic_write_text(out / "report.csv", report.to_csv_row())


def cmd_moc(args):
    if len(args.labels) < 2:
        raise InputError("moc needs at least two label files")
    names, first = fileio.read_labels_csv(args.labels[0])
    clusterings = [first]
    for path in args.labels[1:]:
        n, lab = fileio.read_labels_csv(path)
        clusterings.append(_aligned(names, n, lab, path))
    moc = build_moc(clusterings)
    config = ModelConfig(k_max=args.k, alpha0=args.alpha0, max_iter=args.max_iter, elbo_tol=args.tol, seed=args.seed)
    if args.runs < 1:
        raise ConfigError(f"--runs must be at least 1, got {args.runs}")
    avg = average_moc(moc, config, args.runs, args.workers, obs_names=names)
    out = Path(args.out)
    write_moc_csv(moc, out / "moc.csv", names)
    extra = {"m_runs": args.runs, "base_seed": args.seed, "config": config.to_dict(), "sources": list(args.labels), "moc_rows": moc.row_names()}
    _write_average(out, avg, names, None, extra)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "fit-avg": cmd_fit_avg,
    "summarise": cmd_summarise,
    "evaluate": cmd_evaluate,
    "moc": cmd_moc,
}


def _exit_code(exc):
    if isinstance(exc, RunFailed):
        log.error("run with seed %s failed", exc.seed)
        exc = exc.cause
    return EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_INVALID


def main(argv=None) -> int:
    parser, sub = build_parser()
    try:
        args = _apply_config(parser, sub, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, OSError) as exc:
        print(f"catmix: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (CatMixError, ValidationError) as exc:
        print(f"catmix: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (OSError, KeyError, ValueError) as exc:
        print(f"catmix: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
