"""Command line entry point: ``gmocp {generate,run,sweep,report}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .conformal import ScoreParams
from .engine import RunConfig, run
from .results import (
    aggregate,
    append_results,
    format_mean_std,
    format_table,
    read_results,
    read_step_log,
    result_row,
    rolling_coverage,
    step_log_name,
    write_step_log,
)
from .streams import DEFAULT_QUALITY, DriftProfile, StreamFormatError, generate_stream, read_stream, write_stream

logger = logging.getLogger("gmocp")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# flat config-file keys -> argparse destinations
CONFIG_KEYS = {
    "alpha": "alpha",
    "eta": "eta",
    "epsilon": "epsilon",
    "eta_e": "eta_e",
    "N": "N",
    "J": "J",
    "xi": "xi",
    "k_reg": "k_reg",
    "warmup": "warmup",
    "seeds": "seeds",
    "method": "method",
    "model": "model",
}
DEFAULTS = {
    "alpha": 0.1,
    "eta": 0.05,
    "epsilon": 0.5,
    "eta_e": 0.1,
    "N": 1,
    "J": 1,
    "xi": 0.01,
    "k_reg": 2,
    "warmup": 50,
    "seeds": "0",
    "method": "gmocp",
    "model": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(spec) -> list[int]:
    """``"0..9"`` (inclusive), ``"0,3,7"``, a single integer, or a list."""
    if isinstance(spec, (list, tuple)):
        return [int(s) for s in spec]
    if isinstance(spec, int):
        return [spec]
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise UsageError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError("no seeds given")
    return out


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_settings(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for key, dest in CONFIG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    return settings


def make_configs(settings: dict, grid=None) -> list[RunConfig]:
    seeds = parse_seeds(settings["seeds"])
    cells = grid if grid is not None else [(settings["method"], settings["N"], settings["J"])]
    configs = []
    try:
        score = ScoreParams(xi=float(settings["xi"]), k_reg=int(settings["k_reg"]))
        for method, n, j in cells:
            for seed in seeds:
                configs.append(RunConfig(
                    method=method,
                    alpha_target=float(settings["alpha"]),
                    eta=float(settings["eta"]),
                    epsilon=float(settings["epsilon"]),
                    eta_e=float(settings["eta_e"]),
                    n_trials=int(n),
                    n_selective=int(j),
                    score_params=score,
                    seed=int(seed),
                    warmup=int(settings["warmup"]),
                    model=None if settings["model"] is None else int(settings["model"]),
                ))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return configs


def _execute(stream, configs, jobs: int):
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, [stream] * len(configs), configs))
    return [run(stream, cfg) for cfg in configs]


def _load(path):
    try:
        return read_stream(path)
    except FileNotFoundError:
        raise StreamFormatError(f"stream file {path} not found") from None


def _emit(reports, stream, results_path, steps_dir):
    digest = stream.digest()
    rows = [result_row(r, digest) for r in reports]
    append_results(rows, results_path)
    if steps_dir:
        steps_dir = Path(steps_dir)
        steps_dir.mkdir(parents=True, exist_ok=True)
        for r in reports:
            write_step_log(r, steps_dir / step_log_name(r))
    return rows


def cmd_generate(args) -> int:
    K = args.labels
    if K < 2:
        raise UsageError(f"--labels must be at least 2, got {K}")
    if args.length < 1:
        raise UsageError(f"--length must be positive, got {args.length}")
    quality = tuple(args.quality) if args.quality else DEFAULT_QUALITY
    amplitude = args.amplitude if args.amplitude is not None else [0.1]
    if len(amplitude) == 1:
        amplitude = amplitude * len(quality)
    try:
        drift = DriftProfile(kind=args.drift, base_quality=quality, amplitude=tuple(amplitude),
                             period=args.period, n_segments=args.segments)
        stream = generate_stream(length=args.length, n_labels=K, drift=drift, seed=args.seed,
                                 concentration=args.concentration)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_stream(stream, args.out)
    h = stream.header
    print(f"wrote {args.out}: {h.n_models} models x {h.n_labels} labels x {h.length} steps "
          f"({args.drift} drift, seed {args.seed}, digest {stream.digest()})")
    for name, q in zip(h.model_names, quality):
        print(f"  {name:<10} base accuracy {q:.2f}")
    return EXIT_OK


def cmd_run(args) -> int:
    settings = resolve_settings(args)
    configs = make_configs(settings)
    stream = _load(args.stream)
    reports = _execute(stream, configs, args.jobs)
    rows = _emit(reports, stream, args.results, args.steps_dir)
    for row in rows:
        print(f"{row['method']} N={row['N']} J={row['J']} seed={row['seed']}: "
              f"coverage={row['coverage']:.4f} width={row['avg_width']:.3f} "
              f"runtime={row['runtime_seconds']:.4f}s")
    if len(rows) > 1:
        print("coverage (%): " + format_mean_std([r["coverage"] for r in rows], scale=100.0))
        print("avg width:    " + format_mean_std([r["avg_width"] for r in rows]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings = resolve_settings(args)
    grid = [("gmocp", n, j) for n in args.grid_N for j in args.grid_J]
    if not args.no_baseline:
        grid.insert(0, ("mocp", 1, 1))
    configs = make_configs(settings, grid)
    stream = _load(args.stream)
    digest = stream.digest()

    done = set()
    if Path(args.results).exists() and Path(args.results).stat().st_size:
        for r in read_results(args.results):
            done.add((r["method"], r["N"], r["J"], r["seed"], r["config_hash"], r["stream_hash"]))

    def key(cfg):
        graph = cfg.method == "gmocp"
        return (cfg.label, str(cfg.n_trials) if graph else "", str(cfg.n_selective) if graph else "",
                str(cfg.seed), cfg.digest(), digest)

    todo = [c for c in configs if key(c) not in done]
    skipped = len(configs) - len(todo)
    reports = _execute(stream, todo, args.jobs)
    _emit(reports, stream, args.results, args.steps_dir)
    print(f"sweep: {len(grid)} configurations x {len(configs) // max(len(grid), 1)} seeds; "
          f"ran {len(todo)}, skipped {skipped} existing")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rows = read_results(args.results)
    except FileNotFoundError:
        raise StreamFormatError(f"results file {args.results} not found") from None
    if not rows:
        print(f"no rows in {args.results}", file=sys.stderr)
        return EXIT_DATA
    try:
        groups = aggregate(rows)
    except ValueError as exc:
        raise StreamFormatError(str(exc)) from None
    print(format_table(groups))
    if args.steps_dir and args.rolling_out:
        logs = sorted(Path(args.steps_dir).glob("*.csv"))
        if not logs:
            print(f"no step logs in {args.steps_dir}", file=sys.stderr)
            return EXIT_DATA
        with Path(args.rolling_out).open("w", encoding="utf-8") as fh:
            fh.write("run,t,rolling_coverage,set_size\n")
            for log in logs:
                data = read_step_log(log)
                roll = rolling_coverage(data["covered"], args.window)
                for t, c, s in zip(data["t"], roll, data["set_size"]):
                    fh.write(f"{log.stem},{t},{c!r},{s}\n")
        print(f"rolling coverage (window {args.window}) for {len(logs)} runs -> {args.rolling_out}")
    return EXIT_OK


def _add_run_options(p):
    p.add_argument("--stream", required=True, help="stream file (line-delimited JSON)")
    p.add_argument("--config", help="JSON file with flat run settings")
    p.add_argument("--alpha", type=float, help="target miscoverage (default 0.1)")
    p.add_argument("--eta", type=float, help="miscoverage learning rate")
    p.add_argument("--epsilon", type=float, help="multiplicative-weights step size")
    p.add_argument("--eta-e", dest="eta_e", type=float, help="graph exploration rate")
    p.add_argument("--xi", type=float, help="rank-penalty strength")
    p.add_argument("--k-reg", dest="k_reg", type=int, help="rank-penalty offset")
    p.add_argument("--warmup", type=int, help="steps excluded from metrics")
    p.add_argument("--seeds", help="e.g. 0..9 or 0,4,7")
    p.add_argument("--results", required=True, help="results CSV (appended)")
    p.add_argument("--steps-dir", help="directory for per-step logs")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed workers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gmocp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic drifting stream")
    g.add_argument("--out", required=True)
    g.add_argument("--length", type=int, default=3000)
    g.add_argument("--labels", type=int, default=20)
    g.add_argument("--drift", choices=("gradual", "abrupt"), default="gradual")
    g.add_argument("--segments", type=int, default=4, help="regimes for abrupt drift")
    g.add_argument("--period", type=int, default=1000, help="period of gradual drift")
    g.add_argument("--quality", type=_float_list, help="comma-separated base accuracies, one per model")
    g.add_argument("--amplitude", type=_float_list, help="drift amplitude, one value or one per model")
    g.add_argument("--concentration", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one method over several seeds")
    _add_run_options(r)
    r.add_argument("--method", choices=("gmocp", "mocp", "single"))
    r.add_argument("--model", type=int, help="model index for --method single")
    r.add_argument("--N", dest="N", type=int, help="draws per selective node")
    r.add_argument("--J", dest="J", type=int, help="number of selective nodes")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the (N, J) grid plus the full-pool baseline")
    _add_run_options(s)
    s.add_argument("--grid-N", dest="grid_N", type=_int_list, default=[1, 3, 5])
    s.add_argument("--grid-J", dest="grid_J", type=_int_list, default=[1, 2, 4])
    s.add_argument("--no-baseline", action="store_true", help="skip the full-pool baseline")
    s.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--steps-dir", help="per-step logs to turn into rolling coverage")
    p.add_argument("--rolling-out", help="output CSV for rolling coverage")
    p.add_argument("--window", type=int, default=100)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gmocp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StreamFormatError, OSError) as exc:
        print(f"gmocp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gmocp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
