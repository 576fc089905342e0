"""Command-line interface: ``hipsurrogate {resynth,simulate,analytic,stats,bench}``.

Settings resolve as command-line flags, then the ``--config`` file, then
built-in defaults. The config file is INI: a ``[DEFAULT]`` section applies to
every subcommand and a section named after a subcommand applies to it alone.
Keys are the long flag names with dashes or underscores; lists are
comma-separated::

    [DEFAULT]
    seed = 7

    [simulate]
    strategies = consistent, random, markov
    fner = 0.001, 0.01
    runs = 500

Every run writes a JSON manifest with the resolved settings and the seed.
Exit codes: 0 success, 1 usage error, 2 input error, 3 internal invariant
violation.
"""

import argparse
import configparser
import csv
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

from . import analytic, bench, brat, leakage, resynth, stats
from ._rng import entropy_seed
from .strategy import STRATEGY_KINDS, StrategyConfig
from .surrogates import OFFSET_SCOPES, CategoryRegistry

log = logging.getLogger("hipsurrogate")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3

SYNTHETIC = {
    "uab": leakage.UAB_TARGETS,
    "uab-discharge": leakage.UAB_DISCHARGE_TARGETS,
    "mimic": leakage.MIMIC_TARGETS,
}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(x) for x in _split(text)]


def _ints(text):
    return [int(x) for x in _split(text)]


def _strs(text):
    return [x.lower() for x in _split(text)]


def _split(text):
    return [x for x in text.replace(",", " ").split() if x]


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _thresholds(text):
    out = {}
    for item in _split(text):
        name, _, value = item.partition("=")
        out[name.lower()] = float(value)
    return out


# option name -> (converter for config-file strings, default)
_COMMON = {"seed": (int, None), "jobs": (int, 1)}
OPTIONS = {
    "resynth": {
        "strategy": (str.lower, "markov"), "p_new": (float, None), "pool_size": (int, 1000),
        "offset_scope": (str.lower, "per-patient"), "dayfirst": (_bool, False),
        "skip_bad_docs": (_bool, False), "patients": (str, None), "registry": (str, None),
        "vocab_dir": (str, None), "report": (str, None),
    },
    "simulate": {
        "strategies": (_strs, ["consistent", "random", "markov"]), "p_new": (float, None),
        "fner": (_floats, list(leakage.DEFAULT_FNERS)), "runs": (int, 1000),
        "accounting": (str.lower, "pooled"), "pool_size": (int, 1000),
        "synthetic": (str.lower, None), "n_docs": (int, 1000), "docs_per_patient": (int, 1),
        "dist_out": (str, None), "histogram": (str, None), "histogram_runs": (int, 100),
        "out": (str, None),
    },
    "analytic": {
        "preset": (str.lower, None), "docs": (_ints, None), "epd": (_ints, None),
        "fner": (_floats, None), "threshold": (_thresholds, None), "out": (str, None),
    },
    "stats": {
        "patients": (str, None), "registry": (str, None), "export": (str, None),
        "out": (str, None),
    },
    "bench": {
        "n_docs": (int, 1000), "words_per_doc": (int, bench.DEFAULT_WORDS_PER_DOC),
        "entities_per_doc": (int, bench.DEFAULT_ENTITIES_PER_DOC),
        "strategy": (str.lower, "markov"), "p_new": (float, None), "pool_size": (int, 1000),
        "keep_dir": (str, None), "out": (str, None),
    },
}


def _add_strategy_flags(p, multi=False):
    if multi:
        p.add_argument("--strategies", nargs="+", type=str.lower, metavar="NAME",
                       help=f"strategies to compare, from {', '.join(STRATEGY_KINDS)}")
    else:
        p.add_argument("--strategy", type=str.lower, choices=STRATEGY_KINDS)
    p.add_argument("--p-new", type=float, help="fresh-surrogate probability (custom strategy)")
    p.add_argument("--pool-size", type=int, help="surrogates per category pool (default 1000)")


def build_parser():
    parser = _Parser(prog="hipsurrogate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every warning event")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="master seed (drawn at random if omitted)")
        p.add_argument("--jobs", type=int, help="worker processes (output does not depend on it)")
        p.add_argument("--manifest", help="where to write the JSON run manifest")

    p = sub.add_parser("resynth", help="replace annotated PHI in a BRAT corpus with surrogates")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    _add_strategy_flags(p)
    p.add_argument("--offset-scope", type=str.lower, choices=OFFSET_SCOPES)
    p.add_argument("--dayfirst", action="store_const", const=True,
                   help="read ambiguous numeric dates as D/M/Y")
    p.add_argument("--patients", help="CSV mapping doc_id to patient_id")
    p.add_argument("--skip-bad-docs", action="store_const", const=True,
                   help="report unreadable documents instead of failing")
    p.add_argument("--registry", help="category registry INI overriding the packaged one")
    p.add_argument("--vocab-dir", help="directory of word lists overriding the packaged ones")
    p.add_argument("--report", help="events CSV (default OUT_DIR/report.csv)")
    common(p)

    p = sub.add_parser("simulate", help="Monte-Carlo leak rates for a PHI distribution")
    src = p.add_mutually_exclusive_group()
    src.add_argument("dist_file", nargs="?", help="distribution CSV "
                     "(doc_id,patient_id,category,critical,mention_count)")
    src.add_argument("--synthetic", type=str.lower, choices=sorted(SYNTHETIC),
                     help="generate a distribution matching published summary statistics")
    p.add_argument("--n-docs", type=int, help="documents in a synthetic distribution")
    p.add_argument("--docs-per-patient", type=int)
    p.add_argument("--dist-out", help="write the synthetic distribution CSV here")
    _add_strategy_flags(p, multi=True)
    p.add_argument("--fner", nargs="+", type=float, help="false-negative error rates")
    p.add_argument("--runs", type=int)
    p.add_argument("--accounting", type=str.lower, choices=leakage.ACCOUNTING_MODES)
    p.add_argument("--histogram", help="write max-repeat and FN-count histograms CSV here")
    p.add_argument("--histogram-runs", type=int)
    p.add_argument("--out", help="leak CSV (default stdout)")
    common(p)

    p = sub.add_parser("analytic", help="binomial leak probabilities over a corpus-size grid")
    p.add_argument("--preset", type=str.lower, choices=sorted(analytic.PRESETS))
    for name in sorted(analytic.PRESETS):
        p.add_argument(f"--{name}", dest="preset", action="store_const", const=name,
                       help=argparse.SUPPRESS)
    p.add_argument("--docs", nargs="+", type=int, help="corpus sizes (default 30 log-spaced)")
    p.add_argument("--epd", nargs="+", type=int, help="entities per document")
    p.add_argument("--fner", nargs="+", type=float)
    p.add_argument("--threshold", nargs="+", metavar="NAME=VALUE",
                   help="strategy thresholds (default consistent=0 random=1.015 markov=2.028)")
    p.add_argument("--out", help="CSV output (default stdout)")
    common(p)

    p = sub.add_parser("stats", help="critical-entity distribution of a corpus")
    p.add_argument("source", help="BRAT corpus directory or distribution CSV")
    p.add_argument("--patients", help="CSV mapping doc_id to patient_id")
    p.add_argument("--registry")
    p.add_argument("--export", help="write the distribution CSV here")
    p.add_argument("--out", help="report text (default stdout)")
    common(p)

    p = sub.add_parser("bench", help="time resynthesis of a generated corpus")
    p.add_argument("--n-docs", type=int)
    p.add_argument("--words-per-doc", type=int)
    p.add_argument("--entities-per-doc", type=int)
    _add_strategy_flags(p)
    p.add_argument("--keep-dir", help="keep the generated and rewritten corpora here")
    p.add_argument("--out", help="JSON report (default stdout)")
    common(p)
    return parser


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def resolve(args):
    """Merge flags, config file and defaults into one settings dict."""
    cmd = args.command
    config = configparser.ConfigParser(interpolation=None)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
    section = config[cmd] if config.has_section(cmd) else config[config.default_section]
    file_vals = {k.replace("-", "_"): v for k, v in section.items()}
    options = {**_COMMON, **OPTIONS[cmd]}
    shared = {k.replace("-", "_") for k in config.defaults()}
    unknown = set(file_vals) - set(options) - shared
    if unknown:
        raise UsageError(f"unknown config keys for {cmd}: {', '.join(sorted(unknown))}")
    out = {}
    for key, (convert, default) in options.items():
        value = getattr(args, key, None)
        if value is not None and key == "threshold":
            value = _thresholds(" ".join(value))
        if value is None and key in file_vals:
            try:
                value = convert(file_vals[key])
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        out[key] = default if value is None else value
    if out["seed"] is None:
        out["seed"] = entropy_seed()
        out["seed_source"] = "entropy"
    else:
        out["seed_source"] = "given"
    if out["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return out


def _strategy(settings, kind):
    try:
        p_new = settings["p_new"] if kind == "custom" else None
        return StrategyConfig(kind, p_new, settings["pool_size"], settings["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _open_out(path):
    if path is None:
        return _Stdout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def cmd_resynth(args, s):
    out_dir = Path(args.out_dir)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise InputError(f"{in_dir}: not a directory")
    if s["strategy"] != "custom" and s["p_new"] is not None:
        raise UsageError("--p-new only applies to --strategy custom")
    patients = _patients(s["patients"])
    try:
        est = resynth.Resynthesizer(s["strategy"], s["p_new"], s["pool_size"], s["seed"],
                                    s["offset_scope"], s["dayfirst"], s["registry"],
                                    s["vocab_dir"]).fit()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    result = resynth.resynthesize_corpus(in_dir, out_dir, est, patients,
                                         s["skip_bad_docs"], s["jobs"])
    report = Path(s["report"]) if s["report"] else out_dir / "report.csv"
    resynth.write_report(result.events, report)
    for (cat, shape), cap in sorted(result.clamped.items()):
        log.info("%s pool (%s) clamped to %d values", cat, shape, cap)
    return {
        "inputs": [str(in_dir)] + ([s["patients"]] if s["patients"] else []),
        "outputs": [str(out_dir), str(report)],
        "counts": {"documents": result.n_docs, "entities": result.n_entities,
                   "skipped": result.n_skipped},
        "warnings": result.event_counts(),
        "pool_clamps": {f"{c}/{sh}": cap for (c, sh), cap in sorted(result.clamped.items())},
        "timings": result.timings,
        "manifest_default": out_dir / "manifest.json",
    }


def _patients(path):
    if path is None:
        return None
    try:
        return brat.read_patient_map(path)
    except OSError as exc:
        raise InputError(f"cannot read patient map: {exc}") from None


def _load_distribution(args, s):
    if args.dist_file and s["synthetic"]:
        raise UsageError("give a distribution file or --synthetic, not both")
    if args.dist_file:
        return leakage.PhiDistribution.read_csv(args.dist_file), [args.dist_file]
    if s["synthetic"]:
        if s["synthetic"] not in SYNTHETIC:
            raise UsageError(f"unknown synthetic distribution {s['synthetic']!r}")
        dist = leakage.synth_distribution(**SYNTHETIC[s["synthetic"]], n_docs=s["n_docs"],
                                          docs_per_patient=s["docs_per_patient"],
                                          seed=s["seed"])
        return dist, []
    raise UsageError("simulate needs a distribution file or --synthetic")


def cmd_simulate(args, s):
    t0 = time.perf_counter()
    if not s["fner"]:
        raise UsageError("fner list is empty")
    if not s["strategies"]:
        raise UsageError("strategy list is empty")
    for f in s["fner"]:
        if not 0.0 < f < 1.0:
            raise UsageError(f"fner must lie in (0, 1), got {f}")
    if s["runs"] < 1:
        raise UsageError("--runs must be >= 1")
    strategies = [_strategy(s, k) for k in s["strategies"]]
    dist, inputs = _load_distribution(args, s)
    outputs = []
    if s["dist_out"]:
        dist.to_csv(s["dist_out"])
        outputs.append(s["dist_out"])
    t1 = time.perf_counter()
    rows = leakage.simulate_grid(dist, strategies, s["fner"], s["runs"], s["accounting"],
                                 s["jobs"])
    with _open_out(s["out"]) as fh:
        leakage.write_leak_csv(rows, fh)
    t2 = time.perf_counter()
    if s["histogram"]:
        series = {}
        for strat in strategies:
            h = leakage.repeat_size_histogram(dist, strat, s["histogram_runs"], fner=s["fner"][0])
            series[f"max_repeat/{strat.kind}"] = h.max_repeat
        base = StrategyConfig("consistent", seed=s["seed"])
        for f in s["fner"]:
            series[f"fn_count/{f!r}"] = leakage.repeat_size_histogram(
                dist, base, s["histogram_runs"], fner=f).fn_count
        leakage.write_histogram_csv(series, s["histogram"])
        outputs.append(s["histogram"])
    if s["out"]:
        outputs.insert(0, s["out"])
    return {
        "inputs": inputs, "outputs": outputs,
        "counts": {"documents": dist.n_docs, "patients": dist.n_patients, "rows": len(rows)},
        "warnings": {},
        "timings": {"load": t1 - t0, "simulate": t2 - t1, "histogram": time.perf_counter() - t2},
        "manifest_default": _beside(s["out"]),
    }


def cmd_analytic(args, s):
    preset = analytic.PRESETS.get(s["preset"], {}) if s["preset"] else {}
    if s["preset"] and not preset:
        raise UsageError(f"unknown preset {s['preset']!r}")
    epd = s["epd"] or list(preset.get("entities_per_doc", ()))
    fners = s["fner"] or list(preset.get("fners", ()))
    if not epd or not fners:
        raise UsageError("analytic needs --epd and --fner (or a --preset)")
    thresholds = s["threshold"] or dict(analytic.THRESHOLDS)
    try:
        rows = analytic.sweep(epd, fners, thresholds, s["docs"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with _open_out(s["out"]) as fh:
        write_analytic_csv(rows, fh)
    return {
        "inputs": [], "outputs": [s["out"]] if s["out"] else [],
        "counts": {"rows": len(rows)}, "warnings": {}, "timings": {},
        "manifest_default": _beside(s["out"]),
    }


def write_analytic_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(analytic.ANALYTIC_HEADER)
    for r in rows:
        w.writerow([r.strategy, repr(r.fner), r.entities_per_doc, r.n_docs,
                    repr(r.leak_probability)])


def read_analytic_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != analytic.ANALYTIC_HEADER:
            raise InputError(f"{path}: unexpected header")
        return [analytic.AnalyticRow(r["strategy"], float(r["fner"]), int(r["entities_per_doc"]),
                                     int(r["n_docs"]), float(r["leak_probability"]))
                for r in reader]


def cmd_stats(args, s):
    source = Path(args.source)
    events = brat.EventLog()
    if source.is_dir():
        registry = CategoryRegistry.from_config(s["registry"])
        dist, empty = stats.corpus_distribution(source, registry, _patients(s["patients"]),
                                                events)
    elif source.is_file():
        dist, empty = leakage.PhiDistribution.read_csv(source), []
    else:
        raise InputError(f"{source}: no such file or directory")
    report = stats.distribution_report(dist, empty)
    with _open_out(s["out"]) as fh:
        fh.write(report.format())
    outputs = [s["out"]] if s["out"] else []
    if s["export"]:
        dist.to_csv(s["export"])
        outputs.append(s["export"])
    counts = {}
    for _d, event, _x in events:
        counts[event] = counts.get(event, 0) + 1
    return {
        "inputs": [str(source)], "outputs": outputs,
        "counts": {"documents": report.documents.n, "patients": report.patients.n},
        "warnings": counts, "timings": {},
        "manifest_default": _beside(s["out"]),
    }


def cmd_bench(args, s):
    for key in ("n_docs", "words_per_doc"):
        if s[key] < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
    if s["entities_per_doc"] < 0:
        raise UsageError("--entities-per-doc must be >= 0")
    if s["strategy"] != "custom" and s["p_new"] is not None:
        raise UsageError("--p-new only applies to --strategy custom")
    est = resynth.Resynthesizer(s["strategy"], s["p_new"], s["pool_size"], s["seed"]).fit()
    report = bench.run_bench(est, s["n_docs"], s["words_per_doc"], s["entities_per_doc"],
                             s["seed"], s["jobs"], s["keep_dir"])
    with _open_out(s["out"]) as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = [s["out"]] if s["out"] else []
    if s["keep_dir"]:
        outputs.append(s["keep_dir"])
    return {
        "inputs": [], "outputs": outputs,
        "counts": {"documents": report.n_docs, "entities": report.n_entities},
        "warnings": {}, "timings": {"resynthesize": report.seconds},
        "manifest_default": _beside(s["out"]),
    }


def _beside(out):
    return Path(f"{out}.manifest.json") if out else None


COMMANDS = {"resynth": cmd_resynth, "simulate": cmd_simulate, "analytic": cmd_analytic,
            "stats": cmd_stats, "bench": cmd_bench}


def build_manifest(command, settings, result, started, finished):
    return {
        "tool": "hipsurrogate",
        "version": _version(),
        "subcommand": command,
        "config": {k: v for k, v in sorted(settings.items()) if k != "seed_source"},
        "seed": settings["seed"],
        "seed_source": settings["seed_source"],
        "inputs": [str(p) for p in result["inputs"]],
        "outputs": [str(p) for p in result["outputs"]],
        "counts": result["counts"],
        "warnings": result["warnings"],
        **({"pool_clamps": result["pool_clamps"]} if "pool_clamps" in result else {}),
        "timings": {"wall": finished - started, **result["timings"]},
    }


def write_manifest(manifest, path):
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stderr.write(text)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(message)s")
    started = time.perf_counter()
    try:
        settings = resolve(args)
        result = COMMANDS[args.command](args, settings)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"hipsurrogate: error: {exc}\n")
    except resynth.InvariantError as exc:
        parser.exit(EXIT_INVARIANT, f"hipsurrogate: invariant violated: {exc}\n")
    except (InputError, resynth.CorpusError, brat.BratParseError, brat.BratLoadError,
            leakage.DistributionError, stats.EmptyCorpusError, FileNotFoundError,
            IsADirectoryError, UnicodeDecodeError) as exc:
        parser.exit(EXIT_INPUT, f"hipsurrogate: input error: {exc}\n")
    finished = time.perf_counter()
    manifest = build_manifest(args.command, settings, result, started, finished)
    write_manifest(manifest, args.manifest or result["manifest_default"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
